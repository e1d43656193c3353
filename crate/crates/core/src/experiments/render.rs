//! PNG renderings: feature tiles, activation maps and line plots.

use image::{Rgb, RgbImage};

use super::ExperimentError;
use crate::autoencoder::StackedAutoEncoder;
use crate::data::{extract_into, LabeledImage, PatchScaling};
use crate::neural::Layer;
use crate::par;
use crate::tensor::Matrix;
use crate::Execution;

/// Geometry of one feature tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileShape {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

impl TileShape {
    pub fn square(w: usize, channels: usize) -> Self {
        TileShape {
            width: w,
            height: w,
            channels,
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Square tile holding `dim` values, if `dim / channels` is a perfect square.
    pub fn infer(dim: usize, channels: usize) -> Option<Self> {
        if channels == 0 || !dim.is_multiple_of(channels) {
            return None;
        }
        let side = (0..=dim / channels).find(|s| s * s >= dim / channels)?;
        (side * side == dim / channels).then(|| TileShape::square(side, channels))
    }
}

/// Features drawn per grid.
pub const GRID_FEATURES: usize = 9;
const GRID_COLUMNS: usize = 3;
const SEPARATOR: Rgb<u8> = Rgb([40, 40, 120]);

fn round_half_up(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Draws the first nine rows of `rows` as tiles in a 3-column grid with a
/// one-pixel separator. With `enhance`, each tile's own [min, max] maps to
/// [0, 255]; otherwise the shared range [−a, a], a = max |w|, does, so that
/// zero lands on 128.
pub fn render_features(rows: &Matrix, shape: TileShape, enhance: bool) -> Result<RgbImage, ExperimentError> {
    if rows.rows() == 0 {
        return Err(ExperimentError::Render("no feature rows to draw".into()));
    }
    if rows.cols() != shape.len() {
        return Err(ExperimentError::Render(format!(
            "rows of length {} do not fit {}x{}x{} tiles",
            rows.cols(),
            shape.width,
            shape.height,
            shape.channels
        )));
    }
    let n = rows.rows().min(GRID_FEATURES);
    let grid_cols = n.min(GRID_COLUMNS);
    let grid_rows = n.div_ceil(GRID_COLUMNS);
    let (tw, th) = (shape.width, shape.height);
    let mut img = RgbImage::from_pixel(
        (grid_cols * (tw + 1) - 1) as u32,
        (grid_rows * (th + 1) - 1) as u32,
        SEPARATOR,
    );
    let global = (0..n)
        .flat_map(|i| rows.row(i).iter())
        .fold(0.0f64, |a, v| a.max(v.abs()));
    for i in 0..n {
        let row = rows.row(i);
        let (lo, hi) = if enhance {
            let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        } else {
            (-global, global)
        };
        let to_byte = |v: f64| {
            if hi > lo {
                round_half_up((v - lo) / (hi - lo) * 255.0)
            } else {
                128
            }
        };
        let (ox, oy) = ((i % GRID_COLUMNS) * (tw + 1), (i / GRID_COLUMNS) * (th + 1));
        for y in 0..th {
            for x in 0..tw {
                let base = (y * tw + x) * shape.channels;
                let px = if shape.channels == 1 {
                    let b = to_byte(row[base]);
                    Rgb([b, b, b])
                } else {
                    Rgb([to_byte(row[base]), to_byte(row[base + 1]), to_byte(row[base + 2])])
                };
                img.put_pixel((ox + x) as u32, (oy + y) as u32, px);
            }
        }
    }
    Ok(img)
}

/// Pixel-wise map of the first three code activations of `stack`, applied to
/// the patch centered on every pixel. Pixels closer than `w/2` to a border
/// stay black. Codes with fewer than three units leave the remaining channels
/// at zero.
pub fn render_activation_map(
    stack: &StackedAutoEncoder,
    img: &LabeledImage,
    scaling: PatchScaling,
    exec: Execution,
) -> Result<RgbImage, ExperimentError> {
    let shape = TileShape::infer(stack.input_dim(), img.channels())
        .filter(|s| s.width % 2 == 1)
        .ok_or_else(|| {
            ExperimentError::Render(format!(
                "stack input dim {} is not an odd square patch of {} channel(s)",
                stack.input_dim(),
                img.channels()
            ))
        })?;
    let w = shape.width;
    if img.width() < w || img.height() < w {
        return Err(crate::data::DataError::ImageTooSmall {
            width: img.width(),
            height: img.height(),
            w,
        }
        .into());
    }
    let encoders: Vec<&Layer> = stack.levels().iter().map(|l| &l.encoder).collect();
    let transposed: Vec<Matrix> = encoders.iter().map(|l| l.weights().transpose()).collect();
    let (lo, hi) = encoders.last().unwrap().activation().display_range();
    let r = w / 2;
    let width = img.width();
    let code = stack.code_dim();
    let mut buf = vec![0u8; width * img.height() * 3];
    par::for_each_chunk_mut(exec, &mut buf, width * 3, |y, line| {
        if y < r || y + r >= img.height() {
            return;
        }
        let n = width - 2 * r;
        let mut a = Vec::with_capacity(n * stack.input_dim());
        for x in r..width - r {
            extract_into(img, x, y, w, scaling, &mut a);
        }
        for (layer, wt) in encoders.iter().zip(&transposed) {
            a = layer.forward_rows(wt, &a, n);
        }
        for (i, act) in a.chunks_exact(code).enumerate() {
            let px = &mut line[(r + i) * 3..(r + i) * 3 + 3];
            for (c, v) in act.iter().take(3).enumerate() {
                px[c] = round_half_up((v - lo) / (hi - lo) * 255.0);
            }
        }
    });
    Ok(RgbImage::from_raw(width as u32, img.height() as u32, buf).expect("buffer sized to image"))
}

/// One polyline of a plot.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub points: Vec<(f64, f64)>,
    pub color: [u8; 3],
}

fn draw_segment(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), color: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, color);
        }
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Plain line plot on a white canvas with a black frame; axes span the
/// finite data range. Non-finite points break the line.
pub fn plot_lines(series: &[Series], width: u32, height: u32) -> RgbImage {
    let mut img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    let margin = 10i64;
    let finite = series
        .iter()
        .flat_map(|s| s.points.iter())
        .filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x_lo, mut x_hi, mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in finite {
        x_lo = x_lo.min(x);
        x_hi = x_hi.max(x);
        y_lo = y_lo.min(y);
        y_hi = y_hi.max(y);
    }
    let (w, h) = (width as i64, height as i64);
    let frame = Rgb([0, 0, 0]);
    let corners = [
        (margin - 1, margin - 1),
        (w - margin, margin - 1),
        (w - margin, h - margin),
        (margin - 1, h - margin),
    ];
    for i in 0..4 {
        draw_segment(&mut img, corners[i], corners[(i + 1) % 4], frame);
    }
    if !(x_lo.is_finite() && y_lo.is_finite()) {
        return img;
    }
    let span = |lo: f64, hi: f64| if hi > lo { hi - lo } else { 1.0 };
    let to_px = |(x, y): (f64, f64)| {
        let px = margin + ((x - x_lo) / span(x_lo, x_hi) * (w - 2 * margin - 1) as f64).round() as i64;
        let py = h - margin - 1 - ((y - y_lo) / span(y_lo, y_hi) * (h - 2 * margin - 1) as f64).round() as i64;
        (px, py)
    };
    for s in series {
        let color = Rgb(s.color);
        let mut prev: Option<(i64, i64)> = None;
        for &p in &s.points {
            if !(p.0.is_finite() && p.1.is_finite()) {
                prev = None;
                continue;
            }
            let q = to_px(p);
            draw_segment(&mut img, prev.unwrap_or(q), q, color);
            prev = Some(q);
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::{build_stack, LevelSpec, StackOptions};
    use crate::neural::Activation;
    use crate::pca::PcaModel;
    use crate::RngStream;
    use rand::Rng;

    fn tile(img: &RgbImage, i: usize, shape: TileShape) -> Vec<u8> {
        let (ox, oy) = ((i % 3) * (shape.width + 1), (i / 3) * (shape.height + 1));
        let mut v = Vec::new();
        for y in 0..shape.height {
            for x in 0..shape.width {
                v.push(img.get_pixel((ox + x) as u32, (oy + y) as u32)[0]);
            }
        }
        v
    }

    #[test]
    fn zero_row_is_mid_gray() {
        let shape = TileShape::square(3, 1);
        let img = render_features(&Matrix::zeros(1, 9), shape, false).unwrap();
        assert_eq!(img.dimensions(), (3, 3));
        assert!(img.pixels().all(|p| *p == Rgb([128, 128, 128])));
        // Zero maps to the center also when other values set the range.
        let m = Matrix::from_rows(&[[0.0, 1.0, -1.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0]]).unwrap();
        let t = tile(&render_features(&m, shape, false).unwrap(), 0, shape);
        assert_eq!(&t[..4], &[128, 255, 0, 191]);
    }

    #[test]
    fn enhance_spans_full_range() {
        let mut rng = RngStream::new(3);
        let data: Vec<f64> = (0..12 * 25).map(|_| rng.gen_range(-0.1..0.2)).collect();
        let m = Matrix::new(12, 25, data).unwrap();
        let shape = TileShape::square(5, 1);
        let img = render_features(&m, shape, true).unwrap();
        assert_eq!(img.dimensions(), (17, 17));
        for i in 0..9 {
            let t = tile(&img, i, shape);
            assert_eq!(*t.iter().min().unwrap(), 0);
            assert_eq!(*t.iter().max().unwrap(), 255);
        }
    }

    #[test]
    fn dominant_pixel_of_axis_aligned_data_is_bright() {
        // Variance concentrated on pixel 4 (the center of a 3x3 tile).
        let mut rng = RngStream::new(1);
        let cols: Vec<Vec<f64>> = (0..200)
            .map(|_| {
                (0..9)
                    .map(|i| {
                        if i == 4 {
                            rng.gen_range(-1.0..1.0)
                        } else {
                            rng.gen_range(-0.01..0.01)
                        }
                    })
                    .collect()
            })
            .collect();
        let m = PcaModel::fit(&Matrix::from_columns(&cols).unwrap(), 1).unwrap();
        let shape = TileShape::square(3, 1);
        let t = tile(&render_features(m.components(), shape, false).unwrap(), 0, shape);
        assert_eq!(t[4], 255);
        assert!(t.iter().enumerate().all(|(i, &v)| i == 4 || (120..=136).contains(&v)));
    }

    #[test]
    fn feature_errors() {
        assert!(render_features(&Matrix::zeros(0, 9), TileShape::square(3, 1), false).is_err());
        assert!(render_features(&Matrix::zeros(2, 8), TileShape::square(3, 1), false).is_err());
    }

    #[test]
    fn infer_tile_shape() {
        assert_eq!(TileShape::infer(169, 1), Some(TileShape::square(13, 1)));
        assert_eq!(TileShape::infer(75, 3), Some(TileShape::square(5, 3)));
        assert_eq!(TileShape::infer(50, 1), None);
    }

    fn textured(width: usize, height: usize, seed: u64) -> LabeledImage {
        let mut rng = RngStream::new(seed);
        let mut pixels = vec![0.0; width * height];
        for y in 0..height {
            for x in 0..width {
                pixels[y * width + x] = if x < width / 2 {
                    // Light horizontal stripes.
                    if y % 4 < 2 {
                        0.6
                    } else {
                        0.9
                    }
                } else {
                    // Dark vertical stripes with noise.
                    (if x % 3 == 0 { 0.05 } else { 0.35 }) + rng.gen_range(0.0..0.1)
                };
            }
        }
        LabeledImage::new(width, height, 1, pixels, vec![0; width * height]).unwrap()
    }

    fn stack_for(img: &LabeledImage) -> StackedAutoEncoder {
        let patches =
            crate::data::sample_patches(img, 0, 600, 5, PatchScaling::default(), &mut RngStream::new(2)).unwrap();
        let cols: Vec<&[f64]> = patches.iter().map(|p| p.patch.as_slice()).collect();
        let data = Matrix::from_columns(&cols).unwrap();
        let specs = [LevelSpec::new(8, Activation::Tanh), LevelSpec::new(3, Activation::Tanh)];
        build_stack(&data, &specs, &StackOptions::default(), &mut RngStream::new(0)).unwrap()
    }

    #[test]
    fn constant_image_gives_constant_map() {
        let img = textured(30, 20, 1);
        let stack = stack_for(&img);
        let flat = LabeledImage::new(12, 9, 1, vec![0.4; 108], vec![0; 108]).unwrap();
        let map = render_activation_map(&stack, &flat, PatchScaling::default(), Execution::Sequential).unwrap();
        let inner: Vec<_> = (2..7).flat_map(|y| (2..10).map(move |x| (x, y))).collect();
        let first = *map.get_pixel(2, 2);
        assert!(inner.iter().all(|&(x, y)| *map.get_pixel(x, y) == first));
        assert_eq!(*map.get_pixel(0, 0), Rgb([0, 0, 0]));
        assert_eq!(*map.get_pixel(11, 8), Rgb([0, 0, 0]));
    }

    #[test]
    fn map_pixel_matches_direct_encoding() {
        let img = textured(24, 16, 2);
        let stack = stack_for(&img);
        let map = render_activation_map(&stack, &img, PatchScaling::default(), Execution::Sequential).unwrap();
        let code = stack
            .encode(&crate::data::extract_patch(&img, 9, 7, 5, PatchScaling::default()))
            .unwrap();
        let expect: Vec<u8> = code
            .iter()
            .take(3)
            .map(|v| round_half_up((v + 1.0) / 2.0 * 255.0))
            .collect();
        assert_eq!(map.get_pixel(9, 7).0.to_vec(), expect);
    }

    #[test]
    fn parallel_map_is_identical() {
        let img = textured(40, 30, 3);
        let stack = stack_for(&img);
        let a = render_activation_map(&stack, &img, PatchScaling::default(), Execution::Sequential).unwrap();
        let b = render_activation_map(&stack, &img, PatchScaling::default(), Execution::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn two_textures_are_told_apart() {
        let img = textured(60, 40, 4);
        let stack = stack_for(&img);
        let map = render_activation_map(&stack, &img, PatchScaling::default(), Execution::Sequential).unwrap();
        let mean = |x0: u32, x1: u32| {
            let mut s = [0.0; 3];
            let mut n = 0.0;
            for y in 2..38 {
                for x in x0..x1 {
                    for (acc, &v) in s.iter_mut().zip(map.get_pixel(x, y).0.iter()) {
                        *acc += v as f64;
                    }
                    n += 1.0;
                }
            }
            s.map(|v| v / n)
        };
        let (left, right) = (mean(2, 26), mean(34, 58));
        let best = (0..3).map(|c| (left[c] - right[c]).abs()).fold(0.0, f64::max);
        assert!(best >= 10.0, "{left:?} vs {right:?}");
    }

    #[test]
    fn tanh_range_mapping() {
        assert_eq!(round_half_up((-1.0 + 1.0) / 2.0 * 255.0), 0);
        assert_eq!(round_half_up((0.0 + 1.0) / 2.0 * 255.0), 128);
        assert_eq!(round_half_up((1.0 + 1.0) / 2.0 * 255.0), 255);
    }

    #[test]
    fn plot_has_frame_and_lines() {
        let s = Series {
            points: vec![(0.0, 0.0), (1.0, 1.0), (2.0, f64::NAN), (3.0, 0.5)],
            color: [255, 0, 0],
        };
        let img = plot_lines(&[s], 100, 80);
        assert_eq!(*img.get_pixel(9, 9), Rgb([0, 0, 0]));
        assert_eq!(*img.get_pixel(10, 69), Rgb([255, 0, 0]));
        assert!(img.pixels().filter(|p| **p == Rgb([255, 0, 0])).count() > 50);
    }
}
