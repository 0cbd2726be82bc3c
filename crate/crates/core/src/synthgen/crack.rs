//! Crack skeletons: branching random walks that lengthen and widen over epochs.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::raster::{self, Point};
use crate::imaging::Mask;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrackParams {
    /// Trunk arc length as a fraction of the shorter image side.
    pub length: (f64, f64),
    pub step_px: f64,
    /// Std-dev of the heading change per step (radians).
    pub turn_sigma: f64,
    /// Hard bound on the heading change per step (radians).
    pub max_turn: f64,
    /// Final width of a trunk, in px.
    pub max_width: (f64, f64),
    /// Probability of each of up to `max_branches` branches.
    pub branch_prob: f64,
    pub max_branches: usize,
    pub branch_depth: usize,
    /// Branch length as a fraction of the parent's.
    pub branch_length: (f64, f64),
    /// Birth epoch drawn as `floor(u * n_epochs)`, `u` in this range.
    pub birth: (f64, f64),
}

impl Default for CrackParams {
    fn default() -> Self {
        Self {
            length: (0.3, 0.7),
            step_px: 3.0,
            turn_sigma: 0.22,
            max_turn: 0.6,
            max_width: (2.0, 8.0),
            branch_prob: 0.5,
            max_branches: 2,
            branch_depth: 2,
            branch_length: (0.2, 0.5),
            birth: (0.0, 0.5),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthStep {
    /// Visible fraction of the arc length.
    pub fraction: f64,
    pub width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrackSkeleton {
    pub vertices: Vec<Point>,
    pub branches: Vec<CrackSkeleton>,
    pub birth_epoch: usize,
    /// One entry per epoch; both fields non-decreasing.
    pub growth_profile: Vec<GrowthStep>,
}

/// Linear growth from a 1 px seed at `birth` to full length and `max_width` at the last epoch.
pub fn linear_profile(birth: usize, n_epochs: usize, max_width: f64) -> Vec<GrowthStep> {
    let span = n_epochs - birth;
    (0..n_epochs)
        .map(|t| {
            if t < birth {
                GrowthStep { fraction: 0.0, width: 0.0 }
            } else {
                let fraction = (t - birth + 1) as f64 / span as f64;
                let width = if span > 1 {
                    1.0 + (max_width - 1.0) * (t - birth) as f64 / (span - 1) as f64
                } else {
                    max_width
                };
                GrowthStep { fraction, width }
            }
        })
        .collect()
}

impl CrackSkeleton {
    pub fn length(&self) -> f64 {
        raster::arc_length(&self.vertices)
    }

    /// Rasterizes this skeleton and its branches as they stand at `epoch`.
    fn raster_into(&self, epoch: usize, mask: &mut Mask) {
        let Some(step) = self.growth_profile.get(epoch) else { return };
        if step.fraction > 0.0 {
            let visible = raster::truncate(&self.vertices, step.fraction * self.length());
            let (w, h) = (mask.width, mask.height);
            raster::polyline(&visible, step.width / 2.0, w, h, &mut |i| mask.data[i] = 1);
        }
        for b in &self.branches {
            b.raster_into(epoch, mask);
        }
    }

    fn check_profile(&self) -> bool {
        self.growth_profile
            .windows(2)
            .all(|s| s[0].fraction <= s[1].fraction && s[0].width <= s[1].width)
            && self.branches.iter().all(|b| b.check_profile())
    }
}

/// Crack mask at `epoch`: the union of the rasterized skeletons over epochs
/// `0..=epoch`, so the result is a superset of the mask at `epoch - 1` by
/// construction, regardless of rounding on partially grown segments.
pub fn grow_cracks(skeletons: &[CrackSkeleton], epoch: usize, width: usize, height: usize) -> Mask {
    let mut mask = Mask::new(width, height);
    for e in 0..=epoch {
        for s in skeletons {
            s.raster_into(e, &mut mask);
        }
    }
    mask
}

/// Masks for every epoch in one incremental pass.
pub fn grow_all(skeletons: &[CrackSkeleton], n_epochs: usize, width: usize, height: usize) -> Vec<Mask> {
    let mut mask = Mask::new(width, height);
    (0..n_epochs)
        .map(|e| {
            for s in skeletons {
                s.raster_into(e, &mut mask);
            }
            mask.clone()
        })
        .collect()
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Random walk of `len` px from `start`, stopping at the image border.
fn walk(start: Point, heading: f64, len: f64, p: &CrackParams, w: f64, h: f64, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let turn = Normal::new(0.0, p.turn_sigma.max(1e-12)).expect("finite sigma");
    let mut pts = vec![start];
    let (mut x, mut y, mut a) = (start.0, start.1, heading);
    let mut left = len;
    while left > 0.0 {
        let step = p.step_px.min(left);
        a += turn.sample(rng).clamp(-p.max_turn, p.max_turn);
        let (nx, ny) = (x + step * a.cos(), y + step * a.sin());
        if !(0.0..w).contains(&nx) || !(0.0..h).contains(&ny) {
            break;
        }
        pts.push((nx, ny));
        (x, y) = (nx, ny);
        left -= step;
    }
    pts
}

/// Point and heading at arc length `s` along a polyline.
fn point_at(points: &[Point], s: f64) -> (Point, f64) {
    let prefix = raster::truncate(points, s);
    let n = prefix.len();
    let end = prefix[n - 1];
    let heading = if n >= 2 {
        let a = prefix[n - 2];
        (end.1 - a.1).atan2(end.0 - a.0)
    } else if points.len() >= 2 {
        (points[1].1 - points[0].1).atan2(points[1].0 - points[0].0)
    } else {
        0.0
    };
    (end, heading)
}

fn grow_branches(parent: &mut CrackSkeleton, depth: usize, max_width: f64, p: &CrackParams, n_epochs: usize, w: f64, h: f64, rng: &mut ChaCha8Rng) {
    if depth == 0 {
        return;
    }
    let total = parent.length();
    if total < 2.0 * p.step_px {
        return;
    }
    for _ in 0..p.max_branches {
        if !rng.random_bool(p.branch_prob.clamp(0.0, 1.0)) {
            continue;
        }
        let at = rng.random_range(0.2..0.8) * total;
        let (origin, heading) = point_at(&parent.vertices, at);
        let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let angle = heading + side * rng.random_range(PI / 9.0..PI / 3.0);
        let len = uniform(rng, p.branch_length) * total;
        let vertices = walk(origin, angle, len, p, w, h, rng);
        // born once the parent tip has passed the branch point
        let birth = parent
            .growth_profile
            .iter()
            .position(|g| g.fraction * total >= at)
            .unwrap_or(n_epochs - 1);
        let bw = (max_width * rng.random_range(0.4..0.8)).max(1.0);
        let mut branch = CrackSkeleton { vertices, branches: Vec::new(), birth_epoch: birth, growth_profile: linear_profile(birth, n_epochs, bw) };
        grow_branches(&mut branch, depth - 1, bw, p, n_epochs, w, h, rng);
        parent.branches.push(branch);
    }
}

/// Samples `n` independent crack trees for a `width x height` image.
pub fn sample_skeletons(n: usize, params: &CrackParams, width: usize, height: usize, n_epochs: usize, rng: &mut ChaCha8Rng) -> Vec<CrackSkeleton> {
    let (w, h) = (width as f64, height as f64);
    let side = w.min(h);
    (0..n)
        .map(|_| {
            let start = (rng.random_range(0.0..w), rng.random_range(0.0..h));
            let heading = rng.random_range(-PI..PI);
            let len = uniform(rng, params.length) * side;
            let vertices = walk(start, heading, len, params, w, h, rng);
            let birth = ((uniform(rng, params.birth) * n_epochs as f64) as usize).min(n_epochs - 1);
            let max_width = uniform(rng, params.max_width).max(1.0);
            let mut sk = CrackSkeleton { vertices, branches: Vec::new(), birth_epoch: birth, growth_profile: linear_profile(birth, n_epochs, max_width) };
            grow_branches(&mut sk, params.branch_depth, max_width, params, n_epochs, w, h, rng);
            debug_assert!(sk.check_profile());
            sk
        })
        .collect()
}
