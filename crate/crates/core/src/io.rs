//! Image files: binary PGM (P5) in and out, 8-bit PNG in.
//!
//! Color PNGs are reduced to luminance with BT.601 weights. Output is always
//! 8-bit: values are clamped to `[0, 255]` and rounded.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format { path: path.to_path_buf(), message: message.into() }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

/// Reads a PGM or PNG file, picked by content.
pub fn read_image(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.starts_with(b"P5") {
        decode_pgm(&bytes).map_err(|m| format_err(path, m))
    } else if bytes.starts_with(b"\x89PNG") {
        decode_png(&bytes).map_err(|m| format_err(path, m))
    } else {
        Err(format_err(path, "not a binary PGM (P5) or PNG file"))
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Image, String> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err("malformed PGM header".into());
        }
        *field =
            std::str::from_utf8(&bytes[start..pos]).ok().and_then(|s| s.parse().ok()).ok_or("malformed PGM header")?;
    }
    let [width, height, maxval] = fields;
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err("missing whitespace after PGM header".into());
    }
    pos += 1;
    if maxval == 0 || maxval > 255 {
        return Err(format!("unsupported PGM maxval {maxval} (8-bit only)"));
    }
    let pixels = &bytes[pos..];
    if pixels.len() < width * height {
        return Err(format!("truncated PGM: {} of {} pixels", pixels.len(), width * height));
    }
    let scale = 255.0 / maxval as f64;
    let data = pixels[..width * height].iter().map(|&v| v as f64 * scale).collect();
    Image::new(width, height, data).map_err(|e| e.to_string())
}

pub fn decode_png(bytes: &[u8]) -> Result<Image, String> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| e.to_string())?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or("PNG too large")?];
    let info = reader.next_frame(&mut buf).map_err(|e| e.to_string())?;
    let (width, height) = (info.width as usize, info.height as usize);
    let channels = info.color_type.samples();
    let stride = info.line_size;
    let mut data = Vec::with_capacity(width * height);
    for r in 0..height {
        let line = &buf[r * stride..r * stride + width * channels];
        for px in line.chunks_exact(channels) {
            let v = match channels {
                1 | 2 => px[0] as f64,
                _ => LUMA.iter().zip(px).map(|(w, &c)| w * c as f64).sum(),
            };
            data.push(v);
        }
    }
    Image::new(width, height, data).map_err(|e| e.to_string())
}

/// Clamps to `[0, 255]` and rounds to the nearest integer.
pub fn quantize(img: &Image) -> Vec<u8> {
    img.data().iter().map(|v| v.clamp(0.0, 255.0).round() as u8).collect()
}

pub fn encode_pgm(img: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(quantize(img));
    out
}

pub fn write_pgm(path: &Path, img: &Image) -> Result<()> {
    fs::write(path, encode_pgm(img)).map_err(|e| io_err(path, e))
}

/// Writes an 8-bit grayscale PNG.
pub fn write_png(path: &Path, img: &Image) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut encoder = png::Encoder::new(std::io::BufWriter::new(file), img.width() as u32, img.height() as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(|e| format_err(path, e.to_string()))?;
    writer.write_image_data(&quantize(img)).map_err(|e| format_err(path, e.to_string()))?;
    writer.finish().map_err(|e| format_err(path, e.to_string()))
}

/// Writes PNG when the extension says so, PGM otherwise.
pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("png") => write_png(path, img),
        _ => write_pgm(path, img),
    }
}
