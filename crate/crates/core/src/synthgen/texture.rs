//! Concrete-like background from multi-octave value noise, and frame rendering.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::distractors::DistractorSet;
use crate::imaging::{Mask, RgbImage};
use crate::seeds;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextureParams {
    /// Number of value-noise octaves.
    pub octaves: u32,
    /// Lattice spacing of the coarsest octave, in pixels.
    pub base_scale: f64,
    /// Amplitude falloff per octave.
    pub persistence: f64,
    /// Mean gray level of the surface.
    pub background: f64,
    /// Peak deviation of the noise around `background`.
    pub contrast: f64,
    /// Per-channel multiplicative tint.
    pub tint: [f64; 3],
    /// Crack pixels are scaled by a factor drawn from this range.
    pub crack_darkness: (f64, f64),
    /// Bound on the global per-frame brightness offset.
    pub jitter: f64,
}

impl Default for TextureParams {
    fn default() -> Self {
        Self {
            octaves: 4,
            base_scale: 48.0,
            persistence: 0.5,
            background: 150.0,
            contrast: 28.0,
            tint: [1.0, 0.98, 0.94],
            crack_darkness: (0.45, 0.75),
            jitter: 5.0,
        }
    }
}

impl TextureParams {
    /// Range every background pixel falls into (before jitter).
    pub fn background_band(&self) -> (f64, f64) {
        (self.background - self.contrast, self.background + self.contrast)
    }
}

/// Static surface shared by all frames of a scene, with the scene's crack shade.
#[derive(Clone, Debug, PartialEq)]
pub struct Surface {
    pub width: usize,
    pub height: usize,
    /// Gray level per pixel.
    pub gray: Vec<f32>,
    pub tint: [f64; 3],
    pub crack_darkness: f64,
    pub jitter: f64,
}

impl Surface {
    pub fn generate(params: &TextureParams, width: usize, height: usize, seed: u64) -> Self {
        let mut rng = seeds::rng(seed);
        let mut acc = vec![0.0f64; width * height];
        let mut amp = 1.0;
        let mut total = 0.0;
        let mut scale = params.base_scale.max(1.0);
        for _ in 0..params.octaves.max(1) {
            add_octave(&mut acc, width, height, scale, amp, &mut rng);
            total += amp;
            amp *= params.persistence;
            scale = (scale / 2.0).max(1.0);
        }
        // noise in [-1, 1] after normalising by the summed amplitude
        let gray = acc
            .iter()
            .map(|&v| (params.background + params.contrast * v / total).clamp(0.0, 255.0) as f32)
            .collect();
        let (lo, hi) = params.crack_darkness;
        let crack_darkness = if hi > lo { rng.random_range(lo..hi) } else { lo };
        Self { width, height, gray, tint: params.tint, crack_darkness, jitter: params.jitter }
    }
}

fn add_octave(acc: &mut [f64], width: usize, height: usize, scale: f64, amp: f64, rng: &mut ChaCha8Rng) {
    let gw = (width as f64 / scale).ceil() as usize + 2;
    let gh = (height as f64 / scale).ceil() as usize + 2;
    let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.random_range(-1.0..1.0)).collect();
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    for y in 0..height {
        let fy = y as f64 / scale;
        let (iy, ty) = (fy as usize, smooth(fy.fract()));
        for x in 0..width {
            let fx = x as f64 / scale;
            let (ix, tx) = (fx as usize, smooth(fx.fract()));
            let at = |i: usize, j: usize| lattice[j * gw + i];
            let top = at(ix, iy) * (1.0 - tx) + at(ix + 1, iy) * tx;
            let bot = at(ix, iy + 1) * (1.0 - tx) + at(ix + 1, iy + 1) * tx;
            acc[y * width + x] += amp * (top * (1.0 - ty) + bot * ty);
        }
    }
}

/// Renders one frame: surface, darkened crack pixels, distractors on top, then
/// a global brightness offset in `[-jitter, jitter]` drawn from `rng`.
pub fn render_frame(mask: &Mask, distractors: &DistractorSet, surface: &Surface, rng: &mut ChaCha8Rng) -> RgbImage {
    assert_eq!((mask.width, mask.height), (surface.width, surface.height), "mask and surface sizes differ");
    let mut gray = surface.gray.clone();
    for (g, &m) in gray.iter_mut().zip(&mask.data) {
        if m != 0 {
            *g *= surface.crack_darkness as f32;
        }
    }
    distractors.paint(&mut gray, surface.width, surface.height);
    let offset = if surface.jitter > 0.0 { rng.random_range(-surface.jitter..=surface.jitter) } else { 0.0 };
    let mut img = RgbImage::new(surface.width, surface.height);
    for (px, &g) in img.data.chunks_exact_mut(3).zip(&gray) {
        for c in 0..3 {
            px[c] = (g as f64 * surface.tint[c] + offset).round().clamp(0.0, 255.0) as u8;
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn texture_stays_in_band() {
        let p = TextureParams { jitter: 0.0, tint: [1.0; 3], ..TextureParams::default() };
        let s = Surface::generate(&p, 97, 64, 3);
        let img = render_frame(&Mask::new(97, 64), &DistractorSet::default(), &s, &mut seeds::rng(0));
        let (lo, hi) = p.background_band();
        let mean = img.data.iter().map(|&v| v as f64).sum::<f64>() / img.data.len() as f64;
        assert!(img.data.iter().all(|&v| (lo - 1.0..=hi + 1.0).contains(&(v as f64))));
        assert!((mean - p.background).abs() < p.contrast / 2.0, "mean {mean}");
        // not flat
        assert!(img.data.iter().max() > img.data.iter().min());
    }

    #[test]
    fn jitter_is_global_and_bounded() {
        let p = TextureParams { tint: [1.0; 3], ..TextureParams::default() };
        let s = Surface::generate(&p, 32, 32, 1);
        let m = Mask::new(32, 32);
        let d = DistractorSet::default();
        let base = render_frame(&m, &d, &Surface { jitter: 0.0, ..s.clone() }, &mut seeds::rng(0));
        for seed in 0..20 {
            let img = render_frame(&m, &d, &s, &mut seeds::rng(seed));
            let diffs: Vec<i32> = img.data.iter().zip(&base.data).map(|(&a, &b)| a as i32 - b as i32).collect();
            assert!(diffs.iter().all(|d| d.abs() <= 5));
            let spread = diffs.iter().max().unwrap() - diffs.iter().min().unwrap();
            assert!(spread <= 1, "offset is not global");
        }
    }
}
