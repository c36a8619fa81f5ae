//! The three sequence layouts, their span tables, and parsing back.

use vidtok::format::{self, RenderItem, SequenceFormat};

fn show(fmt: SequenceFormat, items: &[RenderItem]) -> vidtok::Result<()> {
    let r = format::render(fmt, items)?;
    println!("{fmt:?}:\n{}", r.text);
    println!(
        "spans: {:?}",
        r.spans
            .iter()
            .map(|s| (s.offset, s.count))
            .collect::<Vec<_>>()
    );
    assert_eq!(format::parse(fmt, &r.text)?, items);
    println!();
    Ok(())
}

fn main() -> vidtok::Result<()> {
    show(
        SequenceFormat::Image,
        &[
            RenderItem::image(256),
            RenderItem::text("Describe the image."),
        ],
    )?;
    show(
        SequenceFormat::Video,
        &[
            RenderItem::frame(120, 0.0),
            RenderItem::frame(30, 1.0),
            RenderItem::frame(42, 2.0),
            RenderItem::text("What happens?"),
        ],
    )?;
    show(
        SequenceFormat::Streaming,
        &[
            RenderItem::frame(120, 0.0),
            RenderItem::frame(16, 1.0),
            RenderItem::text("What is on the table?"),
            RenderItem::answer("A red cup."),
            RenderItem::frame(20, 2.0),
            RenderItem::answer("Someone picks it up."),
        ],
    )?;
    println!(
        "grounding answer: {}",
        format::format_time_interval(1.0, 2.0)?
    );
    Ok(())
}
