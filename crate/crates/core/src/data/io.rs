use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use image::{DynamicImage, ImageReader, RgbImage};

use super::{DataError, LabeledImage};

fn io_err(path: &Path, e: impl std::fmt::Display) -> DataError {
    DataError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn unsupported(path: &Path, detail: impl Into<String>) -> DataError {
    DataError::Unsupported {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

fn open_dynamic(path: &Path) -> Result<DynamicImage, DataError> {
    ImageReader::open(path)
        .map_err(|e| io_err(path, e))?
        .with_guessed_format()
        .map_err(|e| io_err(path, e))?
        .decode()
        .map_err(|e| unsupported(path, e.to_string()))
}

/// Intensities normalized to [0, 1], as (width, height, values). `channels`
/// selects gray (1) or RGB (3) conversion.
pub fn load_pixels(path: &Path, channels: usize) -> Result<(usize, usize, Vec<f64>), DataError> {
    let img = open_dynamic(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    // Going through 16 bits keeps 8-bit values exact: v·257/65535 = v/255.
    let raw: Vec<u16> = match channels {
        1 => img.to_luma16().into_raw(),
        3 => img.to_rgb16().into_raw(),
        c => return Err(DataError::BadChannels(c)),
    };
    Ok((w, h, raw.into_iter().map(|v| v as f64 / 65535.0).collect()))
}

/// Class ids from a label map: palette indices of an indexed PNG, or the
/// integer values of a gray PNG/PGM.
pub fn load_labels(path: &Path) -> Result<(usize, usize, Vec<usize>), DataError> {
    let is_png = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    if is_png {
        return load_png_labels(path);
    }
    match open_dynamic(path)? {
        DynamicImage::ImageLuma8(g) => {
            let (w, h) = g.dimensions();
            Ok((
                w as usize,
                h as usize,
                g.into_raw().into_iter().map(usize::from).collect(),
            ))
        }
        DynamicImage::ImageLuma16(g) => {
            let (w, h) = g.dimensions();
            Ok((
                w as usize,
                h as usize,
                g.into_raw().into_iter().map(usize::from).collect(),
            ))
        }
        other => Err(unsupported(
            path,
            format!("label map must be single-channel, got {:?}", other.color()),
        )),
    }
}

fn load_png_labels(path: &Path) -> Result<(usize, usize, Vec<usize>), DataError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(|e| unsupported(path, e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| unsupported(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| unsupported(path, e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let depth = info.bit_depth as usize;
    match info.color_type {
        png::ColorType::Indexed | png::ColorType::Grayscale => {}
        c => {
            return Err(unsupported(
                path,
                format!("label map must be indexed or gray, got {c:?}"),
            ))
        }
    }
    let mut labels = Vec::with_capacity(w * h);
    for row in buf.chunks(info.line_size).take(h) {
        match depth {
            16 => labels.extend(
                row.chunks(2)
                    .take(w)
                    .map(|b| usize::from(u16::from_be_bytes([b[0], b[1]]))),
            ),
            8 => labels.extend(row[..w].iter().map(|&b| usize::from(b))),
            d => {
                let per_byte = 8 / d;
                let mask = (1u8 << d) - 1;
                labels.extend((0..w).map(|x| {
                    let shift = 8 - d * (x % per_byte + 1);
                    usize::from((row[x / per_byte] >> shift) & mask)
                }));
            }
        }
    }
    Ok((w, h, labels))
}

/// Loads a page and its label map and checks that they agree in size.
pub fn load_image(path: &Path, labels_path: &Path, channels: usize) -> Result<LabeledImage, DataError> {
    let (w, h, pixels) = load_pixels(path, channels)?;
    let (lw, lh, labels) = load_labels(labels_path)?;
    if (w, h) != (lw, lh) {
        return Err(DataError::SizeMismatch {
            pixels: (w, h),
            labels: (lw, lh),
        });
    }
    LabeledImage::new(w, h, channels, pixels, labels)
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes the pixel grid as an 8-bit gray or RGB PNG.
pub fn save_gray_png(img: &LabeledImage, path: &Path) -> Result<(), DataError> {
    let bytes: Vec<u8> = img.pixels().iter().map(|&v| to_byte(v)).collect();
    let color = if img.channels() == 1 {
        image::ExtendedColorType::L8
    } else {
        image::ExtendedColorType::Rgb8
    };
    image::save_buffer_with_format(
        path,
        &bytes,
        img.width() as u32,
        img.height() as u32,
        color,
        image::ImageFormat::Png,
    )
    .map_err(|e| io_err(path, e))
}

const PALETTE: [[u8; 3]; 8] = [
    [255, 255, 255],
    [200, 30, 30],
    [30, 120, 200],
    [40, 160, 60],
    [60, 60, 60],
    [220, 160, 20],
    [150, 60, 180],
    [20, 180, 180],
];

/// Writes the label grid as an indexed PNG whose palette indices are the
/// class ids.
pub fn save_label_png(img: &LabeledImage, path: &Path) -> Result<(), DataError> {
    if img.classes() > 256 {
        return Err(unsupported(path, "more than 256 classes"));
    }
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), img.width() as u32, img.height() as u32);
    enc.set_color(png::ColorType::Indexed);
    enc.set_depth(png::BitDepth::Eight);
    let palette: Vec<u8> = (0..img.classes()).flat_map(|c| PALETTE[c % PALETTE.len()]).collect();
    enc.set_palette(palette);
    let mut writer = enc.write_header().map_err(|e| io_err(path, e))?;
    let data: Vec<u8> = img.labels().iter().map(|&l| l as u8).collect();
    writer.write_image_data(&data).map_err(|e| io_err(path, e))?;
    writer.finish().map_err(|e| io_err(path, e))
}

pub fn save_rgb_png(img: &RgbImage, path: &Path) -> Result<(), DataError> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| io_err(path, e))
}
