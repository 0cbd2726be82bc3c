//! 8-bit RGB frames and binary masks, with PNG I/O.

use std::path::Path;

use crate::error::{invalid, Error, Result};

/// Interleaved 8-bit RGB image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

/// Binary mask with values in {0, 1}, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0; width * height * 3] }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(invalid!("rgb buffer of {} bytes for {width}x{height}", data.len()));
        }
        Ok(Self { width, height, data })
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, v: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&v);
    }

    /// Mean over channels of one pixel.
    pub fn luma(&self, x: usize, y: usize) -> f64 {
        let p = self.pixel(x, y);
        (p[0] as f64 + p[1] as f64 + p[2] as f64) / 3.0
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Self {
        assert!(x0 + w <= self.width && y0 + h <= self.height, "crop outside image");
        let mut data = Vec::with_capacity(w * h * 3);
        for y in y0..y0 + h {
            let s = (y * self.width + x0) * 3;
            data.extend_from_slice(&self.data[s..s + w * 3]);
        }
        Self { width: w, height: h, data }
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image { path: path.into(), source })?;
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        Ok(Self { width: w as usize, height: h as usize, data: rgb.into_raw() })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        image::save_buffer(path, &self.data, self.width as u32, self.height as u32, image::ColorType::Rgb8)
            .map_err(|source| Error::Image { path: path.into(), source })
    }
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0; width * height] }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(invalid!("mask buffer of {} bytes for {width}x{height}", data.len()));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(invalid!("mask values must be 0 or 1"));
        }
        Ok(Self { width, height, data })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v as u8;
    }

    pub fn count(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    /// True when every set pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.data.iter().zip(&other.data).all(|(&a, &b)| a <= b)
    }

    pub fn union(&self, other: &Mask) -> Mask {
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a | b).collect();
        Mask { width: self.width, height: self.height, data }
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Self {
        assert!(x0 + w <= self.width && y0 + h <= self.height, "crop outside mask");
        let mut data = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            let s = y * self.width + x0;
            data.extend_from_slice(&self.data[s..s + w]);
        }
        Self { width: w, height: h, data }
    }

    /// Loads an 8-bit grayscale (or color, averaged) PNG and binarizes at 128.
    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image { path: path.into(), source })?;
        let g = img.to_luma8();
        let (w, h) = g.dimensions();
        let data = g.into_raw().into_iter().map(|v| (v >= 128) as u8).collect();
        Ok(Self { width: w as usize, height: h as usize, data })
    }

    /// Saves with values {0, 255}.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let buf: Vec<u8> = self.data.iter().map(|&v| v * 255).collect();
        image::save_buffer(path, &buf, self.width as u32, self.height as u32, image::ColorType::L8)
            .map_err(|source| Error::Image { path: path.into(), source })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = RgbImage::new(5, 3);
        for (i, v) in img.data.iter_mut().enumerate() {
            *v = (i * 17 % 256) as u8;
        }
        let mut m = Mask::new(5, 3);
        m.set(1, 2, true);
        m.set(4, 0, true);
        img.save_png(&dir.path().join("a.png")).unwrap();
        m.save_png(&dir.path().join("m.png")).unwrap();
        assert_eq!(RgbImage::load_png(&dir.path().join("a.png")).unwrap(), img);
        assert_eq!(Mask::load_png(&dir.path().join("m.png")).unwrap(), m);
    }

    #[test]
    fn crops_and_subsets() {
        let mut a = Mask::new(4, 4);
        a.set(2, 3, true);
        let mut b = a.clone();
        b.set(0, 0, true);
        assert!(a.is_subset_of(&b));
        assert!(!b.is_subset_of(&a));
        assert_eq!(b.crop(2, 2, 2, 2).count(), 1);
    }
}
