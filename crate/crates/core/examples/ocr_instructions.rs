//! OCR captions with boxes, reading order, and the five instruction tasks.

use vidtok::curation::{
    compose_ocr_caption, generate_ocr_instruction, reading_order, CurationSample, OcrTask, TextBox,
};
use vidtok::geometry::Resolution;

fn main() -> vidtok::Result<()> {
    let boxes = vec![
        TextBox::new("CAFE", [0.55, 0.10, 0.80, 0.18])?,
        TextBox::new("OPEN", [0.10, 0.11, 0.30, 0.19])?,
        TextBox::new("Espresso 2.50", [0.12, 0.60, 0.70, 0.68])?,
    ];
    println!("{}", compose_ocr_caption("A storefront at night", &boxes)?);
    let order: Vec<&str> = reading_order(&boxes)
        .iter()
        .map(|&i| boxes[i].text())
        .collect();
    println!("reading order: {order:?}\n");

    let res = Resolution::new(600, 800)?;
    let a = CurationSample::new("a", res).with_boxes(boxes);
    let b = CurationSample::new("b", res)
        .with_boxes(vec![TextBox::new("CLOSED", [0.2, 0.2, 0.4, 0.3])?]);
    for task in OcrTask::ALL {
        let r = generate_ocr_instruction(task, &a, Some(&b), 3)?;
        println!("[{}]\n  Q: {}\n  A: {}", task.label(), r.prompt, r.answer);
    }
    Ok(())
}
