//! Thick-line and ellipse scan conversion on pixel centres.

pub type Point = (f64, f64);

/// Squared distance from `p` to segment `ab`.
fn dist2(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (qx, qy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    qx * qx + qy * qy
}

/// Calls `hit(index)` for every pixel whose centre lies within `radius` of segment `ab`.
pub fn capsule(a: Point, b: Point, radius: f64, width: usize, height: usize, hit: &mut impl FnMut(usize)) {
    let r2 = radius * radius;
    let x0 = (a.0.min(b.0) - radius - 0.5).floor().max(0.0) as usize;
    let y0 = (a.1.min(b.1) - radius - 0.5).floor().max(0.0) as usize;
    let x1 = (a.0.max(b.0) + radius + 0.5).ceil().min(width as f64) as usize;
    let y1 = (a.1.max(b.1) + radius + 0.5).ceil().min(height as f64) as usize;
    for y in y0..y1 {
        for x in x0..x1 {
            if dist2((x as f64 + 0.5, y as f64 + 0.5), a, b) <= r2 {
                hit(y * width + x);
            }
        }
    }
}

pub fn polyline(points: &[Point], radius: f64, width: usize, height: usize, hit: &mut impl FnMut(usize)) {
    match points {
        [] => {}
        [p] => capsule(*p, *p, radius, width, height, hit),
        _ => {
            for s in points.windows(2) {
                capsule(s[0], s[1], radius, width, height, hit);
            }
        }
    }
}

/// Filled ellipse with semi-axes `(rx, ry)` rotated by `angle` radians.
pub fn ellipse(c: Point, rx: f64, ry: f64, angle: f64, width: usize, height: usize, hit: &mut impl FnMut(usize)) {
    let r = rx.max(ry);
    let (s, co) = angle.sin_cos();
    let x0 = (c.0 - r - 0.5).floor().max(0.0) as usize;
    let y0 = (c.1 - r - 0.5).floor().max(0.0) as usize;
    let x1 = (c.0 + r + 0.5).ceil().clamp(0.0, width as f64) as usize;
    let y1 = (c.1 + r + 0.5).ceil().clamp(0.0, height as f64) as usize;
    for y in y0..y1 {
        for x in x0..x1 {
            let (dx, dy) = (x as f64 + 0.5 - c.0, y as f64 + 0.5 - c.1);
            let (u, v) = (dx * co + dy * s, -dx * s + dy * co);
            if (u / rx).powi(2) + (v / ry).powi(2) <= 1.0 {
                hit(y * width + x);
            }
        }
    }
}

/// Total arc length of a polyline.
pub fn arc_length(points: &[Point]) -> f64 {
    points.windows(2).map(|s| ((s[1].0 - s[0].0).powi(2) + (s[1].1 - s[0].1).powi(2)).sqrt()).sum()
}

/// Prefix of a polyline with arc length `len` (clamped to the full length).
pub fn truncate(points: &[Point], len: f64) -> Vec<Point> {
    let mut out = Vec::new();
    let Some(&first) = points.first() else { return out };
    out.push(first);
    let mut left = len;
    for s in points.windows(2) {
        let seg = ((s[1].0 - s[0].0).powi(2) + (s[1].1 - s[0].1).powi(2)).sqrt();
        if seg <= left {
            out.push(s[1]);
            left -= seg;
        } else {
            if left > 0.0 {
                let t = left / seg;
                out.push((s[0].0 + t * (s[1].0 - s[0].0), s[0].1 + t * (s[1].1 - s[0].1)));
            }
            break;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(f: impl FnOnce(&mut dyn FnMut(usize))) -> usize {
        let mut n = 0;
        f(&mut |_| n += 1);
        n
    }

    #[test]
    fn unit_width_horizontal_line_is_one_row() {
        let mut rows = std::collections::BTreeSet::new();
        let mut n = 0;
        capsule((2.5, 4.5), (12.5, 4.5), 0.5, 20, 10, &mut |i| {
            rows.insert(i / 20);
            n += 1;
        });
        assert_eq!(rows.len(), 1);
        assert_eq!(n, 11);
    }

    #[test]
    fn truncation_keeps_prefix_length() {
        let pts = [(0.0, 0.0), (3.0, 4.0), (3.0, 10.0)];
        assert_eq!(arc_length(&pts), 11.0);
        let t = truncate(&pts, 7.0);
        assert_eq!(t.len(), 3);
        assert!((arc_length(&t) - 7.0).abs() < 1e-12);
        assert_eq!(truncate(&pts, 0.0).len(), 1);
        assert_eq!(truncate(&pts, 50.0), pts.to_vec());
    }

    #[test]
    fn ellipse_area_is_close() {
        let n = count(|h| ellipse((50.0, 50.0), 20.0, 10.0, 0.3, 100, 100, &mut |i| h(i)));
        let area = std::f64::consts::PI * 200.0;
        assert!((n as f64 - area).abs() / area < 0.03, "{n}");
    }
}
