use crate::error::{Error, Result};
use std::io::Write;
use std::path::Path;

/// Linear RGBA image, row-major from the top-left pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<[f32; 4]>,
}

impl Image {
    pub fn new(width: u32, height: u32) -> Self {
        Self::filled(width, height, [0.0; 4])
    }

    pub fn filled(width: u32, height: u32, rgba: [f32; 4]) -> Self {
        Self {
            width,
            height,
            pixels: vec![rgba; width as usize * height as usize],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> [f32; 4] {
        self.pixels[(y * self.width + x) as usize]
    }

    /// 8-bit RGBA, values clamped to `[0,1]` and rounded.
    pub fn to_rgba8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .flat_map(|p| p.map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8))
            .collect()
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width, self.height);
            enc.set_color(png::ColorType::Rgba);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc
                .write_header()
                .map_err(|e| Error::Format(format!("png: {e}")))?;
            w.write_image_data(&self.to_rgba8())
                .map_err(|e| Error::Format(format!("png: {e}")))?;
        }
        Ok(out)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.encode_png()?)?;
        Ok(())
    }

    /// Flat little-endian f32 RGBA without a header.
    pub fn save_f32(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for p in &self.pixels {
            for c in p {
                f.write_all(&c.to_le_bytes())?;
            }
        }
        f.flush()?;
        Ok(())
    }

    pub fn load_f32(path: impl AsRef<Path>, width: u32, height: u32) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let n = width as usize * height as usize;
        if bytes.len() != n * 16 {
            return Err(Error::Dimensions(format!(
                "{} bytes for a {width}x{height} RGBA f32 image",
                bytes.len()
            )));
        }
        let pixels = bytes
            .chunks_exact(16)
            .map(|px| {
                std::array::from_fn(|c| {
                    f32::from_le_bytes(px[c * 4..c * 4 + 4].try_into().unwrap())
                })
            })
            .collect();
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Largest per-channel absolute difference.
    pub fn max_abs_diff(&self, other: &Image) -> Result<f32> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::Dimensions(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(self
            .pixels
            .iter()
            .zip(&other.pixels)
            .flat_map(|(a, b)| (0..4).map(move |c| (a[c] - b[c]).abs()))
            .fold(0.0, f32::max))
    }
}
