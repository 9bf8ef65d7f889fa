use std::path::Path;

use crate::error::{Error, Result};

/// Linear RGB image with values in [0, 1] and optional per-pixel depth in
/// meters (0 marks an invalid sample). Row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<[f64; 3]>,
    pub depth: Option<Vec<f64>>,
}

impl Image {
    pub fn filled(width: usize, height: usize, color: [f64; 3]) -> Self {
        Image {
            width,
            height,
            rgb: vec![color; width * height],
            depth: None,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        self.rgb[self.index(x, y)]
    }

    pub(crate) fn check_same_dims(&self, other: &Image) -> Result<()> {
        if self.dims() != other.dims()
            || self.rgb.len() != self.width * self.height
            || other.rgb.len() != other.width * other.height
        {
            return Err(Error::DimensionMismatch {
                left: self.dims(),
                right: other.dims(),
            });
        }
        Ok(())
    }

    /// 8-bit quantization of the color channels.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.rgb
            .iter()
            .flat_map(|p| p.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
            .collect()
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        image::save_buffer(
            path,
            &self.to_rgb8(),
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::Rgb8,
        )
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::parse(path, other),
        })
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|e| match e {
                image::ImageError::IoError(io) => Error::io(path, io),
                other => Error::parse(path, other),
            })?
            .to_rgb8();
        let (w, h) = img.dimensions();
        let rgb = img.pixels().map(|p| p.0.map(|c| c as f64 / 255.0)).collect();
        Ok(Image {
            width: w as usize,
            height: h as usize,
            rgb,
            depth: None,
        })
    }

    /// Writes the depth channel as little-endian f32, row-major.
    pub fn save_depth(&self, path: &Path) -> Result<()> {
        let depth = self
            .depth
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("image has no depth channel".into()))?;
        let bytes: Vec<u8> = depth.iter().flat_map(|d| (*d as f32).to_le_bytes()).collect();
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load_depth(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let expected = self.width * self.height * 4;
        if bytes.len() != expected {
            return Err(Error::parse(
                path,
                format!("expected {expected} bytes of depth, found {}", bytes.len()),
            ));
        }
        self.depth = Some(
            bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect(),
        );
        Ok(())
    }
}
