//! Static non-crack structures that attract false positives: pencil digits,
//! sensors, cables and cavities.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::raster::{self, Point};
use crate::error::{invalid, Result};
use crate::imaging::Mask;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistractorKind {
    PencilDigit,
    Sensor,
    Cable,
    Cavity,
}

impl DistractorKind {
    pub const ALL: [DistractorKind; 4] = [Self::PencilDigit, Self::Sensor, Self::Cable, Self::Cavity];

    pub fn name(self) -> &'static str {
        match self {
            Self::PencilDigit => "pencil_digit",
            Self::Sensor => "sensor",
            Self::Cable => "cable",
            Self::Cavity => "cavity",
        }
    }
}

/// Size and shade ranges, in pixels and gray levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistractorParams {
    pub digit_height: (f64, f64),
    pub digit_stroke: (f64, f64),
    pub digit_shade: (f64, f64),
    pub sensor_size: (f64, f64),
    pub sensor_shade: (f64, f64),
    pub cable_length: (f64, f64),
    pub cable_width: (f64, f64),
    pub cable_shade: (f64, f64),
    pub cavity_radius: (f64, f64),
    pub cavity_shade: (f64, f64),
}

impl Default for DistractorParams {
    fn default() -> Self {
        Self {
            digit_height: (20.0, 48.0),
            digit_stroke: (1.5, 3.0),
            digit_shade: (70.0, 110.0),
            sensor_size: (16.0, 40.0),
            sensor_shade: (30.0, 60.0),
            cable_length: (60.0, 200.0),
            cable_width: (2.0, 4.0),
            cable_shade: (20.0, 50.0),
            cavity_radius: (2.0, 6.0),
            cavity_shade: (50.0, 90.0),
        }
    }
}

fn mid((lo, hi): (f64, f64)) -> f64 {
    (lo + hi) / 2.0
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

impl DistractorParams {
    /// Same shades with every length multiplied by `f` (stroke and cable widths kept at least 1 px).
    pub fn scaled(&self, f: f64) -> Self {
        let sc = |(a, b): (f64, f64)| (a * f, b * f);
        let thin = |(a, b): (f64, f64)| ((a * f).max(1.0), (b * f).max(1.0));
        Self {
            digit_height: sc(self.digit_height),
            digit_stroke: thin(self.digit_stroke),
            sensor_size: sc(self.sensor_size),
            cable_length: sc(self.cable_length),
            cable_width: thin(self.cable_width),
            cavity_radius: sc(self.cavity_radius),
            ..self.clone()
        }
    }

    /// Nominal footprint area of one item of `kind`, from the mean sizes.
    pub fn nominal_area(&self, kind: DistractorKind) -> f64 {
        match kind {
            DistractorKind::PencilDigit => mid(self.digit_height).powi(2) * GLYPH_WIDTH,
            DistractorKind::Sensor => mid(self.sensor_size).powi(2),
            DistractorKind::Cable => mid(self.cable_length) * mid(self.cable_width),
            DistractorKind::Cavity => PI * mid(self.cavity_radius).powi(2),
        }
    }
}

const GLYPH_WIDTH: f64 = 0.6;

/// Strokes of each digit in a `0.6 x 1` box, y pointing down.
fn glyph(id: u8) -> Vec<Vec<Point>> {
    let (l, r, m) = (0.0, GLYPH_WIDTH, GLYPH_WIDTH / 2.0);
    match id % 10 {
        0 => vec![vec![(l, 0.0), (r, 0.0), (r, 1.0), (l, 1.0), (l, 0.0)]],
        1 => vec![vec![(0.1, 0.2), (m, 0.0), (m, 1.0)]],
        2 => vec![vec![(l, 0.0), (r, 0.0), (r, 0.5), (l, 0.5), (l, 1.0), (r, 1.0)]],
        3 => vec![vec![(l, 0.0), (r, 0.0), (r, 1.0), (l, 1.0)], vec![(l, 0.5), (r, 0.5)]],
        4 => vec![vec![(l, 0.0), (l, 0.5), (r, 0.5)], vec![(r, 0.0), (r, 1.0)]],
        5 => vec![vec![(r, 0.0), (l, 0.0), (l, 0.5), (r, 0.5), (r, 1.0), (l, 1.0)]],
        6 => vec![vec![(r, 0.0), (l, 0.0), (l, 1.0), (r, 1.0), (r, 0.5), (l, 0.5)]],
        7 => vec![vec![(l, 0.0), (r, 0.0), (0.2, 1.0)]],
        8 => vec![vec![(l, 0.0), (r, 0.0), (r, 1.0), (l, 1.0), (l, 0.0)], vec![(l, 0.5), (r, 0.5)]],
        _ => vec![vec![(r, 0.5), (l, 0.5), (l, 0.0), (r, 0.0), (r, 1.0), (l, 1.0)]],
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PencilDigit {
    pub glyph: u8,
    /// Top-left corner of the glyph box before rotation.
    pub position: Point,
    /// Glyph height in px.
    pub scale: f64,
    pub angle: f64,
    pub stroke: f64,
    pub shade: f64,
}

impl PencilDigit {
    pub fn strokes(&self) -> Vec<Vec<Point>> {
        let (s, c) = self.angle.sin_cos();
        let (cx, cy) = (GLYPH_WIDTH / 2.0, 0.5);
        glyph(self.glyph)
            .into_iter()
            .map(|stroke| {
                stroke
                    .into_iter()
                    .map(|(x, y)| {
                        let (u, v) = ((x - cx) * self.scale, (y - cy) * self.scale);
                        let (ox, oy) = (self.position.0 + cx * self.scale, self.position.1 + cy * self.scale);
                        (ox + u * c - v * s, oy + u * s + v * c)
                    })
                    .collect()
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sensor {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
    pub shade: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cable {
    pub points: Vec<Point>,
    pub width: f64,
    pub shade: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cavity {
    pub center: Point,
    pub rx: f64,
    pub ry: f64,
    pub angle: f64,
    pub shade: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DistractorSet {
    pub pencil_digits: Vec<PencilDigit>,
    pub sensors: Vec<Sensor>,
    pub cables: Vec<Cable>,
    pub cavities: Vec<Cavity>,
}

impl DistractorSet {
    pub fn len(&self) -> usize {
        self.pencil_digits.len() + self.sensors.len() + self.cables.len() + self.cavities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn count(&self, kind: DistractorKind) -> usize {
        match kind {
            DistractorKind::PencilDigit => self.pencil_digits.len(),
            DistractorKind::Sensor => self.sensors.len(),
            DistractorKind::Cable => self.cables.len(),
            DistractorKind::Cavity => self.cavities.len(),
        }
    }

    /// Visits every item as `(kind, shade, pixel indices)`.
    fn for_each_item(&self, width: usize, height: usize, mut f: impl FnMut(DistractorKind, f64, Vec<usize>)) {
        for d in &self.pencil_digits {
            let mut px = Vec::new();
            for s in d.strokes() {
                raster::polyline(&s, d.stroke / 2.0, width, height, &mut |i| px.push(i));
            }
            px.sort_unstable();
            px.dedup();
            f(DistractorKind::PencilDigit, d.shade, px);
        }
        for c in &self.cables {
            let mut px = Vec::new();
            raster::polyline(&c.points, c.width / 2.0, width, height, &mut |i| px.push(i));
            f(DistractorKind::Cable, c.shade, px);
        }
        for s in &self.sensors {
            let x0 = s.x.round().clamp(0.0, width as f64) as usize;
            let y0 = s.y.round().clamp(0.0, height as f64) as usize;
            let x1 = (s.x + s.width).round().clamp(0.0, width as f64) as usize;
            let y1 = (s.y + s.height).round().clamp(0.0, height as f64) as usize;
            let px = (y0..y1).flat_map(|y| (x0..x1).map(move |x| y * width + x)).collect();
            f(DistractorKind::Sensor, s.shade, px);
        }
        for c in &self.cavities {
            let mut px = Vec::new();
            raster::ellipse(c.center, c.rx, c.ry, c.angle, width, height, &mut |i| px.push(i));
            f(DistractorKind::Cavity, c.shade, px);
        }
    }

    /// Footprint of each item, in a fixed order (digits, cables, sensors, cavities).
    pub fn footprints(&self, width: usize, height: usize) -> Vec<(DistractorKind, Mask)> {
        let mut out = Vec::with_capacity(self.len());
        self.for_each_item(width, height, |kind, _, px| {
            let mut m = Mask::new(width, height);
            for i in px {
                m.data[i] = 1;
            }
            out.push((kind, m));
        });
        out
    }

    /// Union of all footprints.
    pub fn footprint(&self, width: usize, height: usize) -> Mask {
        let mut m = Mask::new(width, height);
        self.for_each_item(width, height, |_, _, px| {
            for i in px {
                m.data[i] = 1;
            }
        });
        m
    }

    /// Draws every item into a gray buffer. Pencil keeps a trace of the
    /// underlying texture; sensors, cables and cavities are flat.
    pub fn paint(&self, gray: &mut [f32], width: usize, height: usize) {
        self.for_each_item(width, height, |kind, shade, px| {
            for i in px {
                gray[i] = match kind {
                    DistractorKind::PencilDigit => 0.25 * gray[i] + 0.75 * shade as f32,
                    _ => shade as f32,
                };
            }
        });
    }
}

/// Places the requested numbers of each distractor kind.
pub fn place_distractors(
    counts: &BTreeMap<DistractorKind, usize>,
    params: &DistractorParams,
    width: usize,
    height: usize,
    rng: &mut ChaCha8Rng,
) -> Result<DistractorSet> {
    let n = |k| counts.get(&k).copied().unwrap_or(0);
    let nominal: f64 = DistractorKind::ALL.iter().map(|&k| n(k) as f64 * params.nominal_area(k)).sum();
    let budget = 0.2 * (width * height) as f64;
    if nominal > budget {
        return Err(invalid!("distractors cover ~{nominal:.0} px, above 20% of the {width}x{height} image"));
    }
    let (w, h) = (width as f64, height as f64);
    let mut set = DistractorSet::default();

    for _ in 0..n(DistractorKind::PencilDigit) {
        let scale = uniform(rng, params.digit_height).min(h).min(w / GLYPH_WIDTH);
        let position = (rng.random_range(0.0..=(w - scale * GLYPH_WIDTH)), rng.random_range(0.0..=(h - scale)));
        set.pencil_digits.push(PencilDigit {
            glyph: rng.random_range(0..10),
            position,
            scale,
            angle: rng.random_range(-0.35..0.35),
            stroke: uniform(rng, params.digit_stroke),
            shade: uniform(rng, params.digit_shade),
        });
    }
    for _ in 0..n(DistractorKind::Sensor) {
        let sw = uniform(rng, params.sensor_size).min(w);
        let sh = (sw * rng.random_range(0.4..1.0)).min(h);
        let (sw, sh) = if rng.random_bool(0.5) { (sw, sh) } else { (sh.min(w), sw.min(h)) };
        set.sensors.push(Sensor {
            x: rng.random_range(0.0..=(w - sw)),
            y: rng.random_range(0.0..=(h - sh)),
            width: sw,
            height: sh,
            shade: uniform(rng, params.sensor_shade),
        });
    }
    for i in 0..n(DistractorKind::Cable) {
        // cables leave from a sensor edge when there is one
        let (start, mut heading) = match set.sensors.get(i % set.sensors.len().max(1)) {
            Some(s) => {
                let a: f64 = rng.random_range(-PI..PI);
                ((s.x + s.width / 2.0 * (1.0 + a.cos()), s.y + s.height / 2.0 * (1.0 + a.sin())), a)
            }
            None => ((rng.random_range(0.0..w), rng.random_range(0.0..h)), rng.random_range(-PI..PI)),
        };
        let len = uniform(rng, params.cable_length);
        let mut points = vec![start];
        let (mut x, mut y) = start;
        let step = 4.0;
        let mut walked = 0.0;
        while walked < len {
            heading += rng.random_range(-0.15..0.15);
            let (nx, ny) = (x + step * heading.cos(), y + step * heading.sin());
            if !(0.0..w).contains(&nx) || !(0.0..h).contains(&ny) {
                break;
            }
            points.push((nx, ny));
            (x, y) = (nx, ny);
            walked += step;
        }
        set.cables.push(Cable { points, width: uniform(rng, params.cable_width), shade: uniform(rng, params.cable_shade) });
    }
    for _ in 0..n(DistractorKind::Cavity) {
        let r = uniform(rng, params.cavity_radius);
        set.cavities.push(Cavity {
            center: (rng.random_range(0.0..w), rng.random_range(0.0..h)),
            rx: r,
            ry: r * rng.random_range(0.5..1.0),
            angle: rng.random_range(0.0..PI),
            shade: uniform(rng, params.cavity_shade),
        });
    }
    Ok(set)
}
