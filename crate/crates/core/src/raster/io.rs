//! Raster file formats.
//!
//! * 16-bit PNG, grayscale or RGB, with `[0, 1] ↔ [0, 65535]` linear mapping.
//! * `DRTIF`: a one-line ASCII header `DRTIF width height channels\n`
//!   followed by row-major little-endian `f32` samples.
//!
//! Files are dispatched on extension: `.png` for PNG, anything else is
//! read and written as `DRTIF`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};

use super::ImageRaster;
use crate::error::{Error, Result};

const DRTIF_MAGIC: &str = "DRTIF";

fn is_png(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

pub fn load(path: impl AsRef<Path>) -> Result<ImageRaster> {
    let path = path.as_ref();
    if is_png(path) {
        read_png(path)
    } else {
        decode_drtif(&fs::read(path)?)
    }
}

pub fn save(image: &ImageRaster, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if is_png(path) {
        write_png16(image, path)
    } else {
        fs::write(path, encode_drtif(image))?;
        Ok(())
    }
}

fn to_u16(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

pub fn write_png16(image: &ImageRaster, path: &Path) -> Result<()> {
    let (w, h) = (image.width() as u32, image.height() as u32);
    let samples: Vec<u16> = image.data().iter().map(|&v| to_u16(v)).collect();
    let file = BufWriter::new(fs::File::create(path)?);
    let dynamic = match image.channels() {
        1 => DynamicImage::ImageLuma16(
            ImageBuffer::<Luma<u16>, _>::from_raw(w, h, samples).expect("buffer size"),
        ),
        _ => DynamicImage::ImageRgb16(
            ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, samples).expect("buffer size"),
        ),
    };
    let mut bytes = std::io::Cursor::new(Vec::new());
    dynamic.write_to(&mut bytes, ImageFormat::Png)?;
    let mut writer = file;
    writer.write_all(bytes.get_ref())?;
    writer.flush()?;
    Ok(())
}

/// Reads any PNG; 8-bit inputs are widened to the 16-bit scale.
pub fn read_png(path: &Path) -> Result<ImageRaster> {
    let img = image::open(path)?;
    let gray = matches!(
        img.color(),
        image::ColorType::L8 | image::ColorType::L16 | image::ColorType::La8 | image::ColorType::La16
    );
    let (w, h) = (img.width() as usize, img.height() as usize);
    if gray {
        let buf = img.to_luma16();
        let data = buf.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect();
        ImageRaster::new(w, h, 1, data)
    } else {
        let buf = img.to_rgb16();
        let data = buf.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect();
        ImageRaster::new(w, h, 3, data)
    }
}

pub fn encode_drtif(image: &ImageRaster) -> Vec<u8> {
    let header = format!(
        "{DRTIF_MAGIC} {} {} {}\n",
        image.width(),
        image.height(),
        image.channels()
    );
    let mut out = Vec::with_capacity(header.len() + image.data().len() * 4);
    out.extend_from_slice(header.as_bytes());
    for &v in image.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_drtif(bytes: &[u8]) -> Result<ImageRaster> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("missing DRTIF header line".into()))?;
    let header = std::str::from_utf8(&bytes[..newline])
        .map_err(|_| Error::Format("DRTIF header is not ASCII".into()))?;
    let fields: Vec<&str> = header.split(' ').collect();
    let [magic, w, h, c] = fields[..] else {
        return Err(Error::Format(format!("bad DRTIF header {header:?}")));
    };
    if magic != DRTIF_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad dimension {s:?}")))
    };
    let (w, h, c) = (parse(w)?, parse(h)?, parse(c)?);
    let body = &bytes[newline + 1..];
    let expected = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(c))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format("DRTIF dimensions overflow".into()))?;
    if body.len() != expected {
        return Err(Error::Format(format!(
            "DRTIF body has {} bytes, expected {expected}",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    ImageRaster::new(w, h, c, data)
}
