//! Float images and their on-disk forms: PFM for linear data (bit-exact),
//! 8-bit sRGB PNG for previews, photographs and masks.

use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::Vec3;

/// Row-major `height × width × channels` image; row 0 is the top row.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        ImageBuffer { width, height, channels, data: vec![value; width * height * channels] }
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::DimensionMismatch {
                what: "image data length",
                expected: (width * height * channels).to_string(),
                got: data.len().to_string(),
            });
        }
        Ok(ImageBuffer { width, height, channels, data })
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.index(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        let i = self.index(x, y, c);
        self.data[i] = v;
    }

    pub fn rgb(&self, x: usize, y: usize) -> Vec3 {
        let i = self.index(x, y, 0);
        Vec3::new(self.data[i], self.data[i + 1], self.data[i + 2])
    }

    pub fn same_shape(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn check_same_shape(&self, other: &ImageBuffer, what: &'static str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                what,
                expected: format!("{}x{}x{}", self.width, self.height, self.channels),
                got: format!("{}x{}x{}", other.width, other.height, other.channels),
            })
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageBuffer {
        ImageBuffer { data: self.data.iter().map(|&v| f(v)).collect(), ..*self }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len().max(1) as f64
    }

    /// Box-filter downsampling by an integer factor (partial border blocks
    /// are dropped).
    pub fn downsample(&self, factor: usize) -> ImageBuffer {
        if factor <= 1 {
            return self.clone();
        }
        let (w, h) = (self.width / factor, self.height / factor);
        let mut out = ImageBuffer::new(w, h, self.channels);
        let norm = 1.0 / (factor * factor) as f64;
        for y in 0..h {
            for x in 0..w {
                for c in 0..self.channels {
                    let mut acc = 0.0;
                    for dy in 0..factor {
                        for dx in 0..factor {
                            acc += self.get(x * factor + dx, y * factor + dy, c);
                        }
                    }
                    out.set(x, y, c, acc * norm);
                }
            }
        }
        out
    }

    /// Clamp to [0,1] and apply the sRGB transfer function.
    pub fn to_srgb(&self) -> ImageBuffer {
        self.map(|v| linear_to_srgb(v.clamp(0.0, 1.0)))
    }

    pub fn checksum(&self) -> u64 {
        let mut h = crate::math::hash_combine(self.width as u64, self.height as u64 * 31 + self.channels as u64);
        for v in &self.data {
            h = crate::math::hash_combine(h, v.to_bits());
        }
        h
    }
}

pub fn linear_to_srgb(v: f64) -> f64 {
    if v <= 0.003_130_8 {
        12.92 * v
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

pub fn srgb_to_linear(v: f64) -> f64 {
    if v <= 0.040_45 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

/// Little-endian PFM (`scale = -1.0`), rows stored bottom-to-top. Values are
/// narrowed to `f32`.
pub fn pfm_bytes(img: &ImageBuffer) -> Result<Vec<u8>> {
    let tag = match img.channels {
        1 => "Pf",
        3 => "PF",
        c => return Err(Error::Pfm(format!("PFM supports 1 or 3 channels, image has {c}"))),
    };
    let mut out = format!("{tag}\n{} {}\n-1.0\n", img.width, img.height).into_bytes();
    out.reserve(img.data.len() * 4);
    for y in (0..img.height).rev() {
        let row = &img.data[y * img.width * img.channels..(y + 1) * img.width * img.channels];
        for &v in row {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_pfm(path: &Path, img: &ImageBuffer) -> Result<()> {
    let bytes = pfm_bytes(img)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn parse_pfm(bytes: &[u8]) -> Result<ImageBuffer> {
    // Three whitespace-terminated header tokens, then one whitespace byte.
    let mut tokens = Vec::new();
    let mut pos = 0;
    while tokens.len() < 4 && pos < bytes.len() {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| Error::Pfm("non-ASCII header".into()))?);
        if tokens.len() == 4 {
            break;
        }
    }
    if tokens.len() < 4 {
        return Err(Error::Pfm("truncated header".into()));
    }
    pos += 1;
    let channels = match tokens[0] {
        "PF" => 3,
        "Pf" => 1,
        t => return Err(Error::Pfm(format!("unknown magic `{t}`"))),
    };
    let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::Pfm(format!("bad dimension `{s}`")));
    let (width, height) = (parse(tokens[1])?, parse(tokens[2])?);
    let scale: f64 = tokens[3].parse().map_err(|_| Error::Pfm(format!("bad scale `{}`", tokens[3])))?;
    let little = scale < 0.0;
    let n = width * height * channels;
    let body = bytes.get(pos..pos + n * 4).ok_or_else(|| Error::Pfm("truncated pixel data".into()))?;
    let mut data = vec![0.0; n];
    let row_len = width * channels;
    for (i, chunk) in body.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (file_row, col) = (i / row_len, i % row_len);
        data[(height - 1 - file_row) * row_len + col] = v as f64;
    }
    ImageBuffer::from_data(width, height, channels, data)
}

pub fn read_pfm(path: &Path) -> Result<ImageBuffer> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pfm(&bytes)
}

/// 8-bit PNG. Three-channel images are sRGB-encoded after clamping;
/// single-channel images (masks) are written as plain grey levels.
pub fn write_png(path: &Path, img: &ImageBuffer) -> Result<()> {
    let color = match img.channels {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        c => return Err(Error::Config(format!("PNG export supports 1 or 3 channels, image has {c}"))),
    };
    let bytes: Vec<u8> = if img.channels == 3 {
        img.data.iter().map(|&v| (linear_to_srgb(v.clamp(0.0, 1.0)) * 255.0).round() as u8).collect()
    } else {
        img.data.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
    };
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), img.width as u32, img.height as u32);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    let png_err = |e: png::EncodingError| Error::Png { path: path.into(), message: e.to_string() };
    let mut writer = enc.write_header().map_err(png_err)?;
    writer.write_image_data(&bytes).map_err(png_err)?;
    writer.finish().map_err(png_err)?;
    Ok(())
}

/// Raw 8-bit PNG samples scaled to [0,1], with alpha dropped.
fn read_png_raw(path: &Path) -> Result<ImageBuffer> {
    let png_err = |m: String| Error::Png { path: path.into(), message: m };
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dec = png::Decoder::new(BufReader::new(file));
    dec.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = dec.read_info().map_err(|e| png_err(e.to_string()))?;
    let size = reader.output_buffer_size().ok_or_else(|| png_err("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| png_err(e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let (src_channels, keep) = match info.color_type {
        png::ColorType::Grayscale => (1, 1),
        png::ColorType::GrayscaleAlpha => (2, 1),
        png::ColorType::Rgb => (3, 3),
        png::ColorType::Rgba => (4, 3),
        png::ColorType::Indexed => return Err(png_err("unexpanded palette".into())),
    };
    let mut data = Vec::with_capacity(w * h * keep);
    for px in buf[..info.buffer_size()].chunks_exact(src_channels) {
        data.extend(px[..keep].iter().map(|&b| b as f64 / 255.0));
    }
    ImageBuffer::from_data(w, h, keep, data)
}

/// Colour image from PNG, decoded to linear radiance. Greyscale input is
/// replicated to three channels.
pub fn read_png_linear(path: &Path) -> Result<ImageBuffer> {
    let raw = read_png_raw(path)?;
    let rgb = if raw.channels == 1 {
        let data = raw.data.iter().flat_map(|&v| [v, v, v]).collect();
        ImageBuffer::from_data(raw.width, raw.height, 3, data)?
    } else {
        raw
    };
    Ok(rgb.map(srgb_to_linear))
}

/// Binary mask: samples ≥ 128 are foreground.
pub fn read_mask_png(path: &Path) -> Result<ImageBuffer> {
    let raw = read_png_raw(path)?;
    let mut out = ImageBuffer::new(raw.width, raw.height, 1);
    for i in 0..raw.pixel_count() {
        let v = raw.data[i * raw.channels];
        out.data[i] = if v * 255.0 >= 127.5 { 1.0 } else { 0.0 };
    }
    Ok(out)
}

/// Loads a colour image by extension (`.pfm` linear, `.png` sRGB).
pub fn read_color_image(path: &Path) -> Result<ImageBuffer> {
    match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()) {
        Some(ref e) if e == "pfm" => read_pfm(path),
        Some(ref e) if e == "png" => read_png_linear(path),
        _ => Err(Error::Config(format!("unsupported image format: {}", path.display()))),
    }
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_header_and_row_order() {
        let img = ImageBuffer::from_data(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = pfm_bytes(&img).unwrap();
        assert!(b.starts_with(b"Pf\n2 2\n-1.0\n"));
        let body = &b[b"Pf\n2 2\n-1.0\n".len()..];
        // bottom row (3, 4) comes first
        assert_eq!(&body[..4], &3.0f32.to_le_bytes());
        assert_eq!(parse_pfm(&b).unwrap(), img);
    }

    #[test]
    fn pfm_big_endian_accepted() {
        let mut b = b"PF\n1 1\n1.0\n".to_vec();
        for v in [0.25f32, 0.5, 1.0] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        let img = parse_pfm(&b).unwrap();
        assert_eq!(img.data, vec![0.25, 0.5, 1.0]);
    }

    #[test]
    fn srgb_roundtrip() {
        for v in [0.0, 0.001, 0.2, 0.5, 1.0] {
            assert!((srgb_to_linear(linear_to_srgb(v)) - v).abs() < 1e-12);
        }
    }

    #[test]
    fn png_mask_threshold() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        let img = ImageBuffer::from_data(3, 1, 1, vec![0.0, 0.5, 1.0]).unwrap();
        write_png(&p, &img).unwrap();
        let m = read_mask_png(&p).unwrap();
        // 0.5 → 128 → foreground
        assert_eq!(m.data, vec![0.0, 1.0, 1.0]);
    }

    #[test]
    fn downsample_box() {
        let img = ImageBuffer::from_data(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(img.downsample(2).data, vec![2.5]);
    }
}
