//! Label clean-up: small-component removal and 3x3 closing.

use crate::imaging::Mask;

/// Minimum size of an 8-connected component that survives [`clean_mask`].
pub const MIN_COMPONENT: usize = 5;

fn neighbours(x: usize, y: usize, w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    let xs = x.saturating_sub(1)..=(x + 1).min(w - 1);
    let ys = y.saturating_sub(1)..=(y + 1).min(h - 1);
    ys.flat_map(move |ny| xs.clone().map(move |nx| (nx, ny)))
}

/// Clears every 8-connected component with fewer than `min` pixels.
pub fn remove_small_components(mask: &Mask, min: usize) -> Mask {
    let (w, h) = (mask.width, mask.height);
    let mut out = mask.clone();
    let mut seen = vec![false; w * h];
    let mut stack = Vec::new();
    let mut comp = Vec::new();
    for start in 0..w * h {
        if mask.data[start] == 0 || seen[start] {
            continue;
        }
        comp.clear();
        seen[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            comp.push(i);
            for (nx, ny) in neighbours(i % w, i / w, w, h) {
                let j = ny * w + nx;
                if mask.data[j] != 0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        if comp.len() < min {
            for &i in &comp {
                out.data[i] = 0;
            }
        }
    }
    out
}

/// 3x3 dilation (`any`) or erosion (`all`) over the in-image neighbourhood.
fn filter3(mask: &Mask, dilate: bool) -> Mask {
    let (w, h) = (mask.width, mask.height);
    let mut out = Mask::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut it = neighbours(x, y, w, h).map(|(nx, ny)| mask.data[ny * w + nx] != 0);
            let v = if dilate { it.any(|b| b) } else { it.all(|b| b) };
            out.data[y * w + x] = v as u8;
        }
    }
    out
}

/// Dilation followed by erosion with a 3x3 square. Pixels outside the image
/// are ignored, so the border is not eroded.
pub fn close3(mask: &Mask) -> Mask {
    filter3(&filter3(mask, true), false)
}

pub fn dilate(mask: &Mask, radius: usize) -> Mask {
    (0..radius).fold(mask.clone(), |m, _| filter3(&m, true))
}

/// Removes components under [`MIN_COMPONENT`] pixels, then closes 3x3.
pub fn clean_mask(mask: &Mask) -> Mask {
    if mask.width == 0 || mask.height == 0 {
        return mask.clone();
    }
    close3(&remove_small_components(mask, MIN_COMPONENT))
}
