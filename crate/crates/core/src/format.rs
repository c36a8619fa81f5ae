//! Text serialization of image, video and streaming sequences.
//!
//! Vision tokens are written as placeholder spans `<|vis:N|>`, one span per
//! image or frame. The grammar:
//!
//! ```text
//! image      := ITEM+            "\n" after every IMAGE that is not last
//! video      := FRAME ("," FRAME)* ("\n" TEXT?)?
//! streaming  := (FRAME ("," FRAME)* | TEXT | "GPT: " ANSWER)*
//! FRAME      := "Time: " SECONDS "s" IMAGE
//! IMAGE      := "<|vis:" COUNT "|>"
//! ```
//!
//! Timestamps are quantized to tenths of a second: whole seconds render as
//! `3`, others as `3.5`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const VIS_OPEN: &str = "<|vis:";
pub const VIS_CLOSE: &str = "|>";
pub const TIME_PREFIX: &str = "Time: ";
pub const ANSWER_PREFIX: &str = "GPT: ";

/// One element of a sequence to render. Serialized with a `kind` tag, e.g.
/// `{"kind":"frame","count":4,"timestamp":1.5}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RenderItem {
    Image { count: usize },
    Frame { count: usize, timestamp: f64 },
    Text { text: String },
    Answer { text: String },
}

impl RenderItem {
    pub fn image(count: usize) -> Self {
        RenderItem::Image { count }
    }

    pub fn frame(count: usize, timestamp: f64) -> Self {
        RenderItem::Frame { count, timestamp }
    }

    pub fn text(text: impl Into<String>) -> Self {
        RenderItem::Text { text: text.into() }
    }

    pub fn answer(text: impl Into<String>) -> Self {
        RenderItem::Answer { text: text.into() }
    }

    fn kind(&self) -> &'static str {
        match self {
            RenderItem::Image { .. } => "image",
            RenderItem::Frame { .. } => "frame",
            RenderItem::Text { .. } => "text",
            RenderItem::Answer { .. } => "answer",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SequenceFormat {
    Image,
    Video,
    Streaming,
}

impl std::str::FromStr for SequenceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "image" => Ok(SequenceFormat::Image),
            "video" => Ok(SequenceFormat::Video),
            "streaming" => Ok(SequenceFormat::Streaming),
            other => Err(Error::InvalidInput(format!(
                "unknown format {other:?} (expected image, video or streaming)"
            ))),
        }
    }
}

/// Location of one placeholder in the rendered text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    /// Byte offset of the opening `<|vis:`.
    pub offset: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RenderedSequence {
    pub text: String,
    pub spans: Vec<Span>,
}

impl RenderedSequence {
    pub fn vision_tokens(&self) -> usize {
        self.spans.iter().map(|s| s.count).sum()
    }

    fn push_str(&mut self, s: &str) {
        self.text.push_str(s);
    }

    fn push_vis(&mut self, count: usize) {
        self.spans.push(Span {
            offset: self.text.len(),
            count,
        });
        self.text.push_str(VIS_OPEN);
        self.text.push_str(&count.to_string());
        self.text.push_str(VIS_CLOSE);
    }

    fn push_frame(&mut self, tenths: u64, count: usize) {
        self.text.push_str(TIME_PREFIX);
        self.text.push_str(&format_tenths(tenths));
        self.text.push('s');
        self.push_vis(count);
    }
}

fn quantize(timestamp: f64) -> Result<u64> {
    if !(timestamp >= 0.0 && timestamp.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "invalid timestamp {timestamp}"
        )));
    }
    Ok((timestamp * 10.0).round() as u64)
}

fn format_tenths(tenths: u64) -> String {
    if tenths.is_multiple_of(10) {
        (tenths / 10).to_string()
    } else {
        format!("{}.{}", tenths / 10, tenths % 10)
    }
}

/// Render a timestamp the way it appears after `Time: `.
pub fn format_timestamp(timestamp: f64) -> Result<String> {
    Ok(format_tenths(quantize(timestamp)?))
}

fn check_count(count: usize) -> Result<()> {
    if count == 0 {
        return Err(Error::InvalidInput(
            "vision spans need at least one token".into(),
        ));
    }
    Ok(())
}

fn check_no_markers(text: &str, markers: &[&str]) -> Result<()> {
    for m in markers {
        if text.contains(m) {
            return Err(Error::InvalidInput(format!(
                "text {text:?} contains the reserved marker {m:?}"
            )));
        }
    }
    Ok(())
}

/// Images separated by `"\n"`; text after an image is separated by `"\n"`.
pub fn render_image_sequence(items: &[RenderItem]) -> Result<RenderedSequence> {
    if items.is_empty() {
        return Err(Error::InvalidInput("image sequence is empty".into()));
    }
    let mut out = RenderedSequence::default();
    let mut prev_image = false;
    let mut prev_text = false;
    for item in items {
        match item {
            RenderItem::Image { count } => {
                check_count(*count)?;
                if prev_image {
                    out.push_str("\n");
                }
                out.push_vis(*count);
                prev_image = true;
                prev_text = false;
            }
            RenderItem::Text { text } => {
                if text.is_empty() {
                    return Err(Error::InvalidInput("empty text item".into()));
                }
                if prev_text {
                    return Err(Error::InvalidInput("adjacent text items".into()));
                }
                check_no_markers(text, &[VIS_OPEN])?;
                if prev_image {
                    out.push_str("\n");
                }
                out.push_str(text);
                prev_image = false;
                prev_text = true;
            }
            other => {
                return Err(Error::WrongFormat(format!(
                    "{} items are not allowed in image sequences",
                    other.kind()
                )))
            }
        }
    }
    Ok(out)
}

/// Frames as `Time: <t>s<|vis:N|>` joined by `","`, then `"\n"` and the
/// trailing text if present.
pub fn render_video_sequence(
    frames: &[RenderItem],
    trailing_text: Option<&str>,
) -> Result<RenderedSequence> {
    if frames.is_empty() {
        return Err(Error::InvalidInput("video sequence has no frames".into()));
    }
    let mut out = RenderedSequence::default();
    let mut prev: Option<u64> = None;
    for (i, item) in frames.iter().enumerate() {
        let RenderItem::Frame { count, timestamp } = item else {
            return Err(Error::WrongFormat(format!(
                "{} items are not allowed among video frames",
                item.kind()
            )));
        };
        check_count(*count)?;
        let tenths = quantize(*timestamp)?;
        if let Some(p) = prev {
            if tenths <= p {
                return Err(Error::TimestampOrder {
                    prev: p as f64 / 10.0,
                    next: tenths as f64 / 10.0,
                });
            }
        }
        prev = Some(tenths);
        if i > 0 {
            out.push_str(",");
        }
        out.push_frame(tenths, *count);
    }
    if let Some(text) = trailing_text {
        out.push_str("\n");
        out.push_str(text);
    }
    Ok(out)
}

/// Split a flat item list into video frames and an optional trailing text.
pub fn render_video_items(items: &[RenderItem]) -> Result<RenderedSequence> {
    match items.split_last() {
        Some((RenderItem::Text { text }, frames)) => render_video_sequence(frames, Some(text)),
        _ => render_video_sequence(items, None),
    }
}

/// Interleaved frames, text and `GPT: ` answers in event order.
pub fn render_streaming_sequence(events: &[RenderItem]) -> Result<RenderedSequence> {
    let mut out = RenderedSequence::default();
    let mut prev_ts: Option<u64> = None;
    let mut prev: Option<&RenderItem> = None;
    for item in events {
        match item {
            RenderItem::Frame { count, timestamp } => {
                check_count(*count)?;
                let tenths = quantize(*timestamp)?;
                if let Some(p) = prev_ts {
                    if tenths < p {
                        return Err(Error::TimestampOrder {
                            prev: p as f64 / 10.0,
                            next: tenths as f64 / 10.0,
                        });
                    }
                }
                prev_ts = Some(tenths);
                if matches!(prev, Some(RenderItem::Frame { .. })) {
                    out.push_str(",");
                }
                out.push_frame(tenths, *count);
            }
            RenderItem::Text { text } => {
                if text.is_empty() {
                    return Err(Error::InvalidInput("empty text item".into()));
                }
                match prev {
                    Some(RenderItem::Text { .. }) | Some(RenderItem::Answer { .. }) => {
                        return Err(Error::InvalidInput(
                            "text cannot directly follow text or an answer".into(),
                        ))
                    }
                    Some(RenderItem::Frame { .. }) if text.starts_with(',') => {
                        return Err(Error::InvalidInput(
                            "text after a frame cannot start with ','".into(),
                        ))
                    }
                    _ => {}
                }
                check_no_markers(text, &[VIS_OPEN, TIME_PREFIX, ANSWER_PREFIX])?;
                out.push_str(text);
            }
            RenderItem::Answer { text } => {
                check_no_markers(text, &[VIS_OPEN, TIME_PREFIX, ANSWER_PREFIX])?;
                out.push_str(ANSWER_PREFIX);
                out.push_str(text);
            }
            RenderItem::Image { .. } => {
                return Err(Error::WrongFormat(
                    "image items are not allowed in streaming sequences".into(),
                ))
            }
        }
        prev = Some(item);
    }
    Ok(out)
}

pub fn render(format: SequenceFormat, items: &[RenderItem]) -> Result<RenderedSequence> {
    match format {
        SequenceFormat::Image => render_image_sequence(items),
        SequenceFormat::Video => render_video_items(items),
        SequenceFormat::Streaming => render_streaming_sequence(items),
    }
}

/// Byte cursor over a rendered string.
struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Self {
        Self { src, pos: 0 }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn at_end(&self) -> bool {
        self.pos == self.src.len()
    }

    fn eat(&mut self, lit: &str) -> bool {
        if self.rest().starts_with(lit) {
            self.pos += lit.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, lit: &str) -> Result<()> {
        if self.eat(lit) {
            Ok(())
        } else {
            Err(self.err(format!("expected {lit:?}")))
        }
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn digits(&mut self) -> Result<&'a str> {
        let n = self.rest().bytes().take_while(u8::is_ascii_digit).count();
        if n == 0 {
            return Err(self.err("expected digits"));
        }
        let s = &self.rest()[..n];
        self.pos += n;
        Ok(s)
    }

    fn vis(&mut self) -> Result<usize> {
        self.expect(VIS_OPEN)?;
        let start = self.pos;
        let count: usize = self.digits()?.parse().map_err(|_| Error::Parse {
            offset: start,
            message: "token count out of range".into(),
        })?;
        if count == 0 {
            return Err(Error::Parse {
                offset: start,
                message: "token count must be positive".into(),
            });
        }
        self.expect(VIS_CLOSE)?;
        Ok(count)
    }

    fn frame(&mut self) -> Result<RenderItem> {
        self.expect(TIME_PREFIX)?;
        let whole = self.digits()?;
        let mut text = whole.to_string();
        if self.eat(".") {
            let frac = self.digits()?;
            if frac.len() != 1 {
                return Err(self.err("timestamps carry one decimal"));
            }
            text.push('.');
            text.push_str(frac);
        }
        let timestamp: f64 = text.parse().map_err(|_| self.err("bad timestamp"))?;
        self.expect("s")?;
        let count = self.vis()?;
        Ok(RenderItem::Frame { count, timestamp })
    }

    /// Consume text up to the first of `stops` or the end.
    fn text_until(&mut self, stops: &[&str]) -> &'a str {
        let rest = self.rest();
        let end = stops
            .iter()
            .filter_map(|s| rest.find(s))
            .min()
            .unwrap_or(rest.len());
        self.pos += end;
        &rest[..end]
    }
}

pub fn parse_image_sequence(src: &str) -> Result<Vec<RenderItem>> {
    let mut cur = Cursor::new(src);
    let mut items = Vec::new();
    if cur.at_end() {
        return Err(cur.err("empty image sequence"));
    }
    while !cur.at_end() {
        if cur.rest().starts_with(VIS_OPEN) {
            items.push(RenderItem::image(cur.vis()?));
            if !cur.at_end() {
                cur.expect("\n")?;
                if cur.at_end() {
                    return Err(cur.err("separator not followed by an item"));
                }
            }
        } else {
            let text = cur.text_until(&[VIS_OPEN]);
            items.push(RenderItem::text(text));
        }
    }
    Ok(items)
}

/// Returns the frames and the trailing text, if any.
pub fn parse_video_sequence(src: &str) -> Result<(Vec<RenderItem>, Option<String>)> {
    let mut cur = Cursor::new(src);
    let mut frames = vec![cur.frame()?];
    while cur.eat(",") {
        frames.push(cur.frame()?);
    }
    let text = if cur.eat("\n") {
        Some(cur.rest().to_string())
    } else if !cur.at_end() {
        return Err(cur.err("expected ',' or '\\n' after frame"));
    } else {
        None
    };
    Ok((frames, text))
}

/// Inverse of [`render_video_items`].
pub fn parse_video_items(src: &str) -> Result<Vec<RenderItem>> {
    let (mut frames, text) = parse_video_sequence(src)?;
    if let Some(text) = text {
        frames.push(RenderItem::text(text));
    }
    Ok(frames)
}

pub fn parse_streaming_sequence(src: &str) -> Result<Vec<RenderItem>> {
    let mut cur = Cursor::new(src);
    let mut items = Vec::new();
    while !cur.at_end() {
        if cur.rest().starts_with(TIME_PREFIX) {
            items.push(cur.frame()?);
            if cur.rest().starts_with(",") && cur.rest()[1..].starts_with(TIME_PREFIX) {
                cur.pos += 1;
            }
        } else if cur.eat(ANSWER_PREFIX) {
            let text = cur.text_until(&[TIME_PREFIX, ANSWER_PREFIX]);
            items.push(RenderItem::answer(text));
        } else {
            let text = cur.text_until(&[TIME_PREFIX, ANSWER_PREFIX]);
            items.push(RenderItem::text(text));
        }
    }
    Ok(items)
}

pub fn parse(format: SequenceFormat, src: &str) -> Result<Vec<RenderItem>> {
    match format {
        SequenceFormat::Image => parse_image_sequence(src),
        SequenceFormat::Video => parse_video_items(src),
        SequenceFormat::Streaming => parse_streaming_sequence(src),
    }
}

/// Read line-delimited JSON events. Blank lines and lines starting with `#`
/// are skipped.
pub fn parse_events(src: &str) -> Result<Vec<RenderItem>> {
    src.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::InvalidInput(format!("events line {}: {e}", i + 1)))
        })
        .collect()
}

/// Temporal grounding interval, e.g. `"1.0-2.0 s"`.
pub fn format_time_interval(start: f64, end: f64) -> Result<String> {
    if !(start >= 0.0 && start.is_finite() && end.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "invalid interval bounds {start}, {end}"
        )));
    }
    if start > end {
        return Err(Error::InvalidInput(format!(
            "interval start {start} is after end {end}"
        )));
    }
    Ok(format!("{start:.1}-{end:.1} s"))
}

pub fn parse_time_interval(s: &str) -> Result<(f64, f64)> {
    let bad = || Error::Parse {
        offset: 0,
        message: format!("not a time interval: {s:?}"),
    };
    let body = s.strip_suffix(" s").ok_or_else(bad)?;
    let (a, b) = body.split_once('-').ok_or_else(bad)?;
    let start: f64 = a.parse().map_err(|_| bad())?;
    let end: f64 = b.parse().map_err(|_| bad())?;
    if !(start >= 0.0 && start <= end) {
        return Err(bad());
    }
    Ok((start, end))
}
