//! Turning patches into network inputs and targets.

use crackseq_tensor::Tensor;

use crate::datapipe::{Dataset, Origin};
use crate::error::{invalid, Result};
use crate::imaging::{Mask, RgbImage};

/// A training unit: a whole sequence, or one frame of it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Item {
    Sequence(Origin),
    Frame(Origin, usize),
}

impl Item {
    pub fn origin(&self) -> Origin {
        match *self {
            Item::Sequence(o) | Item::Frame(o, _) => o,
        }
    }

    /// Stable key for per-sample random streams.
    pub fn key(&self) -> u64 {
        let o = self.origin();
        let t = match *self {
            Item::Sequence(_) => 0,
            Item::Frame(_, t) => t as u64 + 1,
        };
        ((o.scene as u64) << 40) ^ ((o.row as u64) << 28) ^ ((o.col as u64) << 16) ^ t
    }
}

/// Loaded pixels of an item: `T` frames for a sequence, one for a frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Loaded {
    pub images: Vec<RgbImage>,
    pub masks: Vec<Mask>,
}

pub fn load(data: &Dataset, item: Item) -> Result<Loaded> {
    match item {
        Item::Sequence(o) => {
            let s = data.sequence(o)?;
            Ok(Loaded { images: s.images, masks: s.masks })
        }
        Item::Frame(o, t) => {
            let (image, mask) = data.frame(o, t)?;
            Ok(Loaded { images: vec![image], masks: vec![mask] })
        }
    }
}

/// Stacks samples into `(input, target)`: `[N,3,T,H,W]`/`[N,1,T,H,W]` when
/// `clips`, else `[N,3,H,W]`/`[N,1,H,W]` (each sample holding one frame).
/// Pixel values are scaled to `[0, 1]`.
pub fn to_tensors(samples: &[Loaded], clips: bool) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let first = samples.first().ok_or_else(|| invalid!("empty batch"))?;
    let t = first.images.len();
    let (w, h) = (first.images[0].width, first.images[0].height);
    if !clips && t != 1 {
        return Err(invalid!("frame model expects single frames, got {t}"));
    }
    let n = samples.len();
    let plane = w * h;
    let mut x = vec![0.0f32; n * 3 * t * plane];
    let mut y = vec![0.0f32; n * t * plane];
    for (i, s) in samples.iter().enumerate() {
        if s.images.len() != t || s.masks.len() != t {
            return Err(invalid!("samples of one batch differ in length"));
        }
        for (f, (img, m)) in s.images.iter().zip(&s.masks).enumerate() {
            if (img.width, img.height, m.width, m.height) != (w, h, w, h) {
                return Err(invalid!("samples of one batch differ in size"));
            }
            for c in 0..3 {
                let base = ((i * 3 + c) * t + f) * plane;
                for (dst, px) in x[base..base + plane].iter_mut().zip(img.data.chunks_exact(3)) {
                    *dst = px[c] as f32 / 255.0;
                }
            }
            let base = (i * t + f) * plane;
            for (dst, &v) in y[base..base + plane].iter_mut().zip(&m.data) {
                *dst = v as f32;
            }
        }
    }
    let (xs, ys) = if clips {
        (vec![n, 3, t, h, w], vec![n, 1, t, h, w])
    } else {
        (vec![n, 3, h, w], vec![n, 1, h, w])
    };
    Ok((Tensor::from_vec(&xs, x).expect("sized above"), Tensor::from_vec(&ys, y).expect("sized above")))
}

/// Binary masks from logits laid out as [`to_tensors`] targets, thresholding
/// the sigmoid at `threshold`. Returns `N` lists of `T` masks.
pub fn logits_to_masks(logits: &Tensor<f32>, threshold: f64, width: usize, height: usize) -> Vec<Vec<Mask>> {
    let plane = width * height;
    let n = logits.shape()[0];
    let per = logits.len() / n.max(1);
    // sigmoid(x) > p  <=>  x > ln(p / (1 - p))
    let cut = (threshold / (1.0 - threshold)).ln() as f32;
    logits
        .data()
        .chunks(per)
        .map(|s| {
            s.chunks(plane)
                .map(|f| Mask { width, height, data: f.iter().map(|&v| (v > cut) as u8).collect() })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_channel_major() {
        let mut img = RgbImage::new(2, 1);
        img.set_pixel(1, 0, [255, 0, 51]);
        let mut m = Mask::new(2, 1);
        m.set(1, 0, true);
        let s = Loaded { images: vec![img.clone(), RgbImage::new(2, 1)], masks: vec![m.clone(), Mask::new(2, 1)] };
        let (x, y) = to_tensors(&[s], true).unwrap();
        assert_eq!(x.shape(), &[1, 3, 2, 1, 2]);
        // channel 0: frames 0 and 1, then channel 1 ...
        assert_eq!(&x.data()[..4], &[0.0, 1.0, 0.0, 0.0]);
        assert!((x.data()[9] - 0.2).abs() < 1e-6);
        assert_eq!(y.data(), &[0.0, 1.0, 0.0, 0.0]);
        let back = logits_to_masks(&y.map(|v| if v > 0.5 { 3.0 } else { -3.0 }), 0.5, 2, 1);
        assert_eq!(back[0][0], m);

        let one = Loaded { images: vec![img], masks: vec![m] };
        let (x, _) = to_tensors(&[one.clone(), one], false).unwrap();
        assert_eq!(x.shape(), &[2, 3, 1, 2]);
    }
}
