//! Synthetic manuscript-like pages with pixel labels.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, LabeledImage};
use crate::rng::RngStream;

/// Class names by id for generated pages.
pub const CLASS_NAMES: [&str; 5] = ["background", "text", "decoration", "comment", "out_of_page"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub width: usize,
    pub height: usize,
    pub classes: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            width: 240,
            height: 320,
            classes: 4,
        }
    }
}

struct Rect {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
}

impl Rect {
    fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..self.x1).contains(&x) && (self.y0..self.y1).contains(&y)
    }
}

fn frac(len: usize, f: f64) -> usize {
    (len as f64 * f).round() as usize
}

struct Canvas {
    width: usize,
    pixels: Vec<f64>,
    labels: Vec<usize>,
}

impl Canvas {
    fn put(&mut self, x: usize, y: usize, v: f64) {
        self.pixels[y * self.width + x] = v;
    }

    fn label(&mut self, x: usize, y: usize, c: usize) {
        self.labels[y * self.width + x] = c;
    }
}

/// Ruled lines of vertical ink strokes grouped into words. Each band is
/// labeled `class` across the full column width.
#[allow(clippy::too_many_arguments)]
fn write_lines(
    canvas: &mut Canvas,
    area: &Rect,
    skip: Option<&Rect>,
    period: usize,
    band: usize,
    ink: f64,
    class: usize,
    rng: &mut RngStream,
) {
    let mut top = area.y0 + rng.gen_range(0..period / 2);
    while top + band <= area.y1 {
        for y in top..top + band {
            for x in area.x0..area.x1 {
                if !skip.is_some_and(|s| s.contains(x, y)) {
                    canvas.label(x, y, class);
                }
            }
        }
        let mut x = area.x0 + rng.gen_range(0..4);
        while x < area.x1 {
            let word_end = (x + rng.gen_range(8..28)).min(area.x1);
            while x < word_end {
                let stroke = rng.gen_range(1..=2);
                let y0 = top + rng.gen_range(0..=band / 4);
                let y1 = top + band - rng.gen_range(0..=band / 4);
                for xx in x..(x + stroke).min(word_end) {
                    for y in y0..y1 {
                        if !skip.is_some_and(|s| s.contains(xx, y)) {
                            canvas.put(xx, y, ink + rng.gen_range(-0.05..0.05));
                        }
                    }
                }
                x += stroke + rng.gen_range(1..=3);
            }
            x = word_end + rng.gen_range(4..9);
        }
        top += period;
    }
}

/// Composes a page: textured background, text-line bands, a hatched
/// decoration block (3+ classes), smaller margin comment lines (4+ classes)
/// and a dark out-of-page strip (5 classes). Decoration has about the
/// brightness of the background; classes differ mostly in texture. Intensities are multiples of 1/255 so
/// that an 8-bit PNG stores them exactly.
pub fn synth_document(params: SynthParams, rng: &mut RngStream) -> Result<LabeledImage, DataError> {
    let SynthParams { width, height, classes } = params;
    if !(2..=5).contains(&classes) {
        return Err(DataError::BadClassCount(classes));
    }
    if width < 32 || height < 32 {
        return Err(DataError::PageTooSmall { width, height });
    }
    let phase_x: f64 = rng.gen_range(0.0..6.3);
    let phase_y: f64 = rng.gen_range(0.0..6.3);
    let mut canvas = Canvas {
        width,
        pixels: vec![0.0; width * height],
        labels: vec![0; width * height],
    };
    for y in 0..height {
        for x in 0..width {
            let wave = 0.04 * (x as f64 / 17.0 + phase_x).sin() * (y as f64 / 23.0 + phase_y).cos();
            canvas.put(x, y, 0.75 + wave + rng.gen_range(-0.04..0.04));
        }
    }

    let (px0, py1) = if classes == 5 {
        (frac(width, 0.08), height - frac(height, 0.08))
    } else {
        (0, height)
    };
    let pw = width - px0;
    let main = Rect {
        x0: px0 + frac(pw, 0.06),
        x1: px0 + frac(pw, if classes >= 4 { 0.64 } else { 0.94 }),
        y0: frac(py1, 0.05),
        y1: frac(py1, 0.95),
    };

    let decoration = (classes >= 3).then(|| Rect {
        x0: main.x0,
        x1: main.x0 + frac(main.x1 - main.x0, 0.45),
        y0: main.y0,
        y1: frac(py1, 0.3),
    });
    write_lines(&mut canvas, &main, decoration.as_ref(), 14, 7, 0.2, 1, rng);

    if let Some(d) = &decoration {
        for y in d.y0..d.y1 {
            for x in d.x0..d.x1 {
                let frame = x < d.x0 + 2 || x + 2 >= d.x1 || y < d.y0 + 2 || y + 2 >= d.y1;
                let v = if frame {
                    0.25
                } else if ((x + y) / 3) % 2 == 0 {
                    0.60
                } else {
                    0.90
                };
                canvas.put(x, y, v + rng.gen_range(-0.03..0.03));
                canvas.label(x, y, 2);
            }
        }
    }

    if classes >= 4 {
        let margin = Rect {
            x0: px0 + frac(pw, 0.72),
            x1: px0 + frac(pw, 0.94),
            y0: frac(py1, 0.15),
            y1: frac(py1, 0.85),
        };
        write_lines(&mut canvas, &margin, None, 9, 4, 0.45, 3, rng);
    }

    if classes == 5 {
        for y in 0..height {
            for x in 0..width {
                if x < px0 || y >= py1 {
                    canvas.put(x, y, 0.12 + rng.gen_range(-0.04..0.04));
                    canvas.label(x, y, 4);
                }
            }
        }
    }

    let pixels = canvas
        .pixels
        .into_iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0)
        .collect();
    LabeledImage::new(width, height, 1, pixels, canvas.labels)
}
