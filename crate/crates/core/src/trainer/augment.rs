//! Flips, brightness, contrast and blur, each applied with probability `p`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::AugmentPolicy;
use crate::imaging::{Mask, RgbImage};

/// One realisation of the five coin flips and their magnitudes.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentDraw {
    pub hflip: bool,
    pub vflip: bool,
    pub brightness: Option<f64>,
    pub contrast: Option<f64>,
    pub blur: Option<f64>,
}

impl AugmentDraw {
    pub fn identity() -> Self {
        Self { hflip: false, vflip: false, brightness: None, contrast: None, blur: None }
    }

    pub fn sample(policy: &AugmentPolicy, rng: &mut ChaCha8Rng) -> Self {
        let p = policy.p;
        let hflip = rng.random_bool(p);
        let vflip = rng.random_bool(p);
        let brightness = rng.random_bool(p).then(|| rng.random_range(-1.0..=1.0) * policy.brightness);
        let contrast = rng.random_bool(p).then(|| 1.0 + rng.random_range(-1.0..=1.0) * policy.contrast);
        let (lo, hi) = policy.blur_sigma;
        let blur = rng.random_bool(p).then(|| if hi > lo { rng.random_range(lo..hi) } else { lo });
        Self { hflip, vflip, brightness, contrast, blur }
    }

    pub fn apply_image(&self, img: &RgbImage) -> RgbImage {
        let mut out = flip_rgb(img, self.hflip, self.vflip);
        if self.brightness.is_none() && self.contrast.is_none() && self.blur.is_none() {
            return out;
        }
        let mut v: Vec<f32> = out.data.iter().map(|&b| b as f32).collect();
        if let Some(b) = self.brightness {
            v.iter_mut().for_each(|x| *x += b as f32);
        }
        if let Some(c) = self.contrast {
            v.iter_mut().for_each(|x| *x = 127.5 + (*x - 127.5) * c as f32);
        }
        if let Some(s) = self.blur {
            v = gaussian_blur(&v, out.width, out.height, s);
        }
        for (d, x) in out.data.iter_mut().zip(v) {
            *d = x.round().clamp(0.0, 255.0) as u8;
        }
        out
    }

    /// Only the flips act on masks.
    pub fn apply_mask(&self, m: &Mask) -> Mask {
        let mut out = m.clone();
        flip_plane(&mut out.data, m.width, m.height, 1, self.hflip, self.vflip);
        out
    }
}

fn flip_rgb(img: &RgbImage, h: bool, v: bool) -> RgbImage {
    let mut out = img.clone();
    flip_plane(&mut out.data, img.width, img.height, 3, h, v);
    out
}

fn flip_plane(data: &mut [u8], w: usize, h: usize, ch: usize, hflip: bool, vflip: bool) {
    if hflip {
        for row in data.chunks_exact_mut(w * ch) {
            for x in 0..w / 2 {
                for c in 0..ch {
                    row.swap(x * ch + c, (w - 1 - x) * ch + c);
                }
            }
        }
    }
    if vflip {
        let stride = w * ch;
        for y in 0..h / 2 {
            let (top, bottom) = data.split_at_mut((h - 1 - y) * stride);
            top[y * stride..(y + 1) * stride].swap_with_slice(&mut bottom[..stride]);
        }
    }
}

/// Separable Gaussian on interleaved RGB with clamped borders.
fn gaussian_blur(v: &[f32], w: usize, h: usize, sigma: f64) -> Vec<f32> {
    let r = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f32> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp() as f32).collect();
    let s: f32 = k.iter().sum();
    k.iter_mut().for_each(|x| *x /= s);
    let pass = |src: &[f32], horizontal: bool| {
        let mut dst = vec![0.0f32; src.len()];
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    let mut acc = 0.0;
                    for (j, &kw) in k.iter().enumerate() {
                        let d = j as isize - r;
                        let (sx, sy) = if horizontal {
                            ((x as isize + d).clamp(0, w as isize - 1) as usize, y)
                        } else {
                            (x, (y as isize + d).clamp(0, h as isize - 1) as usize)
                        };
                        acc += kw * src[(sy * w + sx) * 3 + c];
                    }
                    dst[(y * w + x) * 3 + c] = acc;
                }
            }
        }
        dst
    };
    pass(&pass(v, true), false)
}

/// Augments every frame of a sequence with a single draw.
pub fn augment_sequence(images: &[RgbImage], masks: &[Mask], draw: &AugmentDraw) -> (Vec<RgbImage>, Vec<Mask>) {
    (images.iter().map(|i| draw.apply_image(i)).collect(), masks.iter().map(|m| draw.apply_mask(m)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;

    fn ramp(w: usize, h: usize) -> RgbImage {
        RgbImage::from_raw(w, h, (0..w * h * 3).map(|i| (i * 7 % 251) as u8).collect()).unwrap()
    }

    #[test]
    fn flips_are_involutions() {
        let img = ramp(5, 4);
        let d = AugmentDraw { hflip: true, vflip: true, ..AugmentDraw::identity() };
        assert_ne!(d.apply_image(&img), img);
        assert_eq!(d.apply_image(&d.apply_image(&img)), img);
        let h = AugmentDraw { hflip: true, ..AugmentDraw::identity() }.apply_image(&img);
        assert_eq!(h.pixel(0, 1), img.pixel(4, 1));
        let v = AugmentDraw { vflip: true, ..AugmentDraw::identity() }.apply_image(&img);
        assert_eq!(v.pixel(2, 0), img.pixel(2, 3));
    }

    #[test]
    fn photometric_ops_leave_masks() {
        let mut m = Mask::new(6, 6);
        m.set(1, 2, true);
        for seed in 0..20 {
            let d = AugmentDraw::sample(&AugmentPolicy::default(), &mut seeds::rng(seed));
            let am = d.apply_mask(&m);
            assert_eq!(am.count(), 1);
            let back = AugmentDraw { hflip: d.hflip, vflip: d.vflip, ..AugmentDraw::identity() }.apply_mask(&am);
            assert_eq!(back, m);
        }
    }

    #[test]
    fn blur_preserves_flat_images() {
        let img = RgbImage::from_raw(4, 4, vec![90; 48]).unwrap();
        let d = AugmentDraw { blur: Some(1.0), ..AugmentDraw::identity() };
        assert_eq!(d.apply_image(&img), img);
    }
}
