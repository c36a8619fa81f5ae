//! Image and frame-directory ingest.
//!
//! Two raster formats are read:
//!
//! * PNG (8 or 16 bit, gray/RGB with optional alpha, palette), scaled to
//!   `[0, 1]`.
//! * A headered raw format:
//!
//!   ```text
//!   offset  size  field
//!   0       10    magic "VIDTOKRAW1"
//!   10      4     height   (u32, little-endian)
//!   14      4     width    (u32, little-endian)
//!   18      1     channels (u8: 1, 2, 3 or 4)
//!   19      4·N   intensities (f32, little-endian, row-major HWC)
//!   ```
//!
//! Alpha channels are dropped in both formats.
//!
//! A frame directory holds images named by zero-padded frame number
//! (`000000.png`, `000001.raw`, …) and a `frames.meta` sidecar:
//!
//! ```text
//! duration_s=3.0
//! fps_src=1.0
//! frame 0 0.0
//! frame 1 1.0
//! frame 2 2.0
//! ```
//!
//! Without `frame` lines every numbered image is used, at `index / fps_src`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::ImageBuffer;
use crate::video::{match_timestamps, sample_timestamps, SamplingPolicy};

pub const RAW_MAGIC: &[u8; 10] = b"VIDTOKRAW1";
const RAW_HEADER: usize = 19;
const PNG_SIGNATURE: &[u8; 8] = b"\x89PNG\r\n\x1a\n";
pub const META_FILE: &str = "frames.meta";

fn strip_alpha(data: Vec<f64>, channels: usize) -> (Vec<f64>, usize) {
    match channels {
        2 | 4 => {
            let keep = channels - 1;
            let out = data
                .chunks_exact(channels)
                .flat_map(|px| px[..keep].iter().copied())
                .collect();
            (out, keep)
        }
        _ => (data, channels),
    }
}

pub fn decode_raw(bytes: &[u8]) -> Result<ImageBuffer> {
    if bytes.len() < RAW_HEADER || &bytes[..10] != RAW_MAGIC {
        return Err(Error::InvalidInput("missing VIDTOKRAW1 header".into()));
    }
    let u32_at =
        |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
    let height = u32_at(10);
    let width = u32_at(14);
    let channels = bytes[18] as usize;
    if !(1..=4).contains(&channels) {
        return Err(Error::InvalidInput(format!(
            "raw image has {channels} channels"
        )));
    }
    let n = height
        .checked_mul(width)
        .and_then(|v| v.checked_mul(channels))
        .ok_or_else(|| Error::InvalidInput("raw image dimensions overflow".into()))?;
    let payload = &bytes[RAW_HEADER..];
    if payload.len() != n * 4 {
        return Err(Error::ShapeMismatch(format!(
            "raw {height}x{width}x{channels} image needs {} payload bytes, found {}",
            n * 4,
            payload.len()
        )));
    }
    let data: Vec<f64> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
        .collect();
    let (data, channels) = strip_alpha(data, channels);
    ImageBuffer::new(height, width, channels, data)
}

/// Intensities are stored as f32, so values round-trip at single precision.
pub fn encode_raw(image: &ImageBuffer) -> Vec<u8> {
    let mut out = Vec::with_capacity(RAW_HEADER + image.data().len() * 4);
    out.extend_from_slice(RAW_MAGIC);
    out.extend_from_slice(&(image.height() as u32).to_le_bytes());
    out.extend_from_slice(&(image.width() as u32).to_le_bytes());
    out.push(image.channels() as u8);
    for &v in image.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_png(bytes: &[u8]) -> Result<ImageBuffer> {
    let png_err = |e: png::DecodingError| Error::InvalidInput(format!("png: {e}"));
    let mut decoder = png::Decoder::new(bytes);
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(png_err)?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    let buf = &buf[..info.buffer_size()];
    let channels = info.color_type.samples();
    let data: Vec<f64> = match info.bit_depth {
        png::BitDepth::Sixteen => buf
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / 65535.0)
            .collect(),
        png::BitDepth::Eight => buf.iter().map(|&b| b as f64 / 255.0).collect(),
        other => {
            return Err(Error::InvalidInput(format!(
                "png: unsupported bit depth {other:?} after expansion"
            )))
        }
    };
    let (data, channels) = strip_alpha(data, channels);
    ImageBuffer::new(info.height as usize, info.width as usize, channels, data)
}

/// 8-bit PNG, values rounded to the nearest level.
pub fn encode_png(image: &ImageBuffer) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, image.width() as u32, image.height() as u32);
        enc.set_color(if image.channels() == 3 {
            png::ColorType::Rgb
        } else {
            png::ColorType::Grayscale
        });
        enc.set_depth(png::BitDepth::Eight);
        let png_err = |e: png::EncodingError| Error::InvalidInput(format!("png: {e}"));
        let mut writer = enc.write_header().map_err(png_err)?;
        let bytes: Vec<u8> = image
            .data()
            .iter()
            .map(|v| (v * 255.0).round() as u8)
            .collect();
        writer.write_image_data(&bytes).map_err(png_err)?;
    }
    Ok(out)
}

pub fn decode_image(bytes: &[u8]) -> Result<ImageBuffer> {
    if bytes.starts_with(RAW_MAGIC) {
        decode_raw(bytes)
    } else if bytes.starts_with(PNG_SIGNATURE) {
        decode_png(bytes)
    } else {
        Err(Error::InvalidInput(
            "unrecognized image format (expected PNG or VIDTOKRAW1)".into(),
        ))
    }
}

pub fn read_image(path: &Path) -> Result<ImageBuffer> {
    let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
    decode_image(&bytes).map_err(|e| Error::file(path, e))
}

/// Write PNG, or raw when the extension is `.raw`.
pub fn write_image(path: &Path, image: &ImageBuffer) -> Result<()> {
    let bytes = if path.extension().is_some_and(|e| e == "raw") {
        encode_raw(image)
    } else {
        encode_png(image)?
    };
    std::fs::write(path, bytes).map_err(|e| Error::file(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FramesMeta {
    pub duration_s: f64,
    pub fps_src: f64,
    /// `(index, timestamp)` entries, possibly empty.
    pub frames: Vec<(usize, f64)>,
}

impl FramesMeta {
    pub fn parse(src: &str) -> Result<Self> {
        let mut duration = None;
        let mut fps = None;
        let mut frames = Vec::new();
        for (n, line) in src.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |what: &str| {
                Error::InvalidInput(format!("{META_FILE} line {}: {what}: {line:?}", n + 1))
            };
            if let Some(v) = line.strip_prefix("duration_s=") {
                duration = Some(v.trim().parse::<f64>().map_err(|_| bad("bad duration"))?);
            } else if let Some(v) = line.strip_prefix("fps_src=") {
                fps = Some(v.trim().parse::<f64>().map_err(|_| bad("bad fps"))?);
            } else if let Some(rest) = line.strip_prefix("frame ") {
                let mut parts = rest.split_whitespace();
                let idx = parts
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| bad("bad frame index"))?;
                let ts = parts
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| bad("bad timestamp"))?;
                if parts.next().is_some() {
                    return Err(bad("trailing fields"));
                }
                frames.push((idx, ts));
            } else {
                return Err(bad("unknown entry"));
            }
        }
        let duration_s = duration
            .ok_or_else(|| Error::InvalidInput(format!("{META_FILE}: missing duration_s")))?;
        let fps_src =
            fps.ok_or_else(|| Error::InvalidInput(format!("{META_FILE}: missing fps_src")))?;
        if !(duration_s > 0.0 && duration_s.is_finite()) || !(fps_src > 0.0 && fps_src.is_finite())
        {
            return Err(Error::InvalidInput(format!(
                "{META_FILE}: duration and fps must be positive"
            )));
        }
        for w in frames.windows(2) {
            if w[1].0 <= w[0].0 || w[1].1 <= w[0].1 {
                return Err(Error::InvalidInput(format!(
                    "{META_FILE}: frames must be listed in increasing index and time order"
                )));
            }
        }
        Ok(Self {
            duration_s,
            fps_src,
            frames,
        })
    }
}

impl std::fmt::Display for FramesMeta {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "duration_s={}", self.duration_s)?;
        writeln!(f, "fps_src={}", self.fps_src)?;
        for (i, t) in &self.frames {
            writeln!(f, "frame {i} {t}")?;
        }
        Ok(())
    }
}

/// A frame directory with its files indexed but not yet decoded.
#[derive(Debug, Clone)]
pub struct FrameDir {
    pub meta: FramesMeta,
    /// `(index, timestamp, path)` in index order.
    pub frames: Vec<(usize, f64, PathBuf)>,
}

impl FrameDir {
    pub fn open(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(META_FILE);
        let src = std::fs::read_to_string(&meta_path).map_err(|e| Error::file(&meta_path, e))?;
        let meta = FramesMeta::parse(&src).map_err(|e| Error::file(&meta_path, e))?;

        let mut files = BTreeMap::new();
        for entry in std::fs::read_dir(dir).map_err(|e| Error::file(dir, e))? {
            let path = entry.map_err(|e| Error::file(dir, e))?.path();
            let is_image = path.extension().is_some_and(|e| e == "png" || e == "raw");
            let index = path
                .file_stem()
                .and_then(|s| s.to_str())
                .filter(|s| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()))
                .and_then(|s| s.parse::<usize>().ok());
            if let (true, Some(i)) = (is_image, index) {
                if files.insert(i, path.clone()).is_some() {
                    return Err(Error::file(&path, format!("duplicate frame number {i}")));
                }
            }
        }

        let frames = if meta.frames.is_empty() {
            files
                .into_iter()
                .map(|(i, p)| (i, i as f64 / meta.fps_src, p))
                .collect()
        } else {
            meta.frames
                .iter()
                .map(|&(i, t)| {
                    files
                        .get(&i)
                        .map(|p| (i, t, p.clone()))
                        .ok_or_else(|| Error::file(dir, format!("no image file for frame {i}")))
                })
                .collect::<Result<_>>()?
        };
        let out = Self { meta, frames };
        if out.frames.is_empty() {
            return Err(Error::file(dir, "directory contains no frames"));
        }
        Ok(out)
    }

    /// Sample frames per `policy` and decode them. Each chosen frame carries
    /// the sampled timestamp it was matched to.
    pub fn load_sampled(&self, policy: &SamplingPolicy) -> Result<(Vec<ImageBuffer>, Vec<f64>)> {
        let targets = sample_timestamps(self.meta.duration_s, policy)?;
        let available: Vec<f64> = self.frames.iter().map(|f| f.1).collect();
        let mut images = Vec::new();
        let mut times = Vec::new();
        for (i, t) in match_timestamps(&available, &targets) {
            images.push(read_image(&self.frames[i].2)?);
            times.push(t);
        }
        Ok((images, times))
    }
}

/// Write frames as `000000.png`, … plus a `frames.meta` sidecar.
pub fn write_frame_dir(
    dir: &Path,
    frames: &[ImageBuffer],
    timestamps: &[f64],
    duration_s: f64,
    fps_src: f64,
    ext: &str,
) -> Result<()> {
    if frames.len() != timestamps.len() {
        return Err(Error::ShapeMismatch(
            "frames and timestamps differ in length".into(),
        ));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let mut meta = String::new();
    let _ = writeln!(meta, "duration_s={duration_s}");
    let _ = writeln!(meta, "fps_src={fps_src}");
    for (i, (f, t)) in frames.iter().zip(timestamps).enumerate() {
        write_image(&dir.join(format!("{i:06}.{ext}")), f)?;
        let _ = writeln!(meta, "frame {i} {t}");
    }
    let meta_path = dir.join(META_FILE);
    std::fs::write(&meta_path, meta).map_err(|e| Error::file(&meta_path, e))
}
