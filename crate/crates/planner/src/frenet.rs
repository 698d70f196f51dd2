//! Arc-length reference paths and conversion between Cartesian and
//! curvilinear (s, d) coordinates.
//!
//! A lane line is resampled to points with a fixed arc-length interval.
//! Conversions interpolate linearly between samples and use the
//! interpolated normal field, so `to_frenet` is the exact inverse of
//! `to_cartesian` up to root-finding precision.

use crate::error::{PlannerError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }

    pub fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }

    pub fn scale(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        Vec2::new(self.x / n, self.y / n)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ReferencePathPoint {
    pub pos: Vec2,
    /// Left-hand perpendicular of the local tangent, unit length.
    pub normal: Vec2,
    /// Accumulated arc length, meters.
    pub s: f64,
    /// Signed curvature, 1/m. Positive turns toward the normal side.
    pub curvature: f64,
}

#[derive(Debug, Clone)]
pub struct ReferencePath {
    points: Vec<ReferencePathPoint>,
    interval: f64,
}

/// Curvilinear pose returned by [`ReferencePath::to_frenet`].
#[derive(Debug, Clone, Copy)]
pub struct FrenetPose {
    pub s: f64,
    pub d: f64,
    /// True when the query point projects beyond either path end and s
    /// was clamped to `[0, s_max]`.
    pub extrapolated: bool,
}

impl ReferencePath {
    /// Resample `polyline` at fixed arc-length `interval` and estimate
    /// normals and curvature at every sample.
    ///
    /// Curvature comes from the circle through three consecutive samples,
    /// signed by the turn direction; endpoints copy their neighbor.
    pub fn build(polyline: &[(f64, f64)], interval: f64) -> Result<Self> {
        if polyline.len() < 2 || interval <= 0.0 {
            return Err(PlannerError::InvalidInput(
                "polyline needs >= 2 points and a positive interval".into(),
            ));
        }
        let pts: Vec<Vec2> = polyline.iter().map(|&(x, y)| Vec2::new(x, y)).collect();
        let mut cum = Vec::with_capacity(pts.len());
        let mut total = 0.0;
        cum.push(0.0);
        for w in pts.windows(2) {
            total += w[1].sub(w[0]).norm();
            cum.push(total);
        }
        if total < interval {
            return Err(PlannerError::PathTooShort {
                length: total,
                interval,
            });
        }

        let n_samples = (total / interval + 1e-9).floor() as usize + 1;
        let mut samples = Vec::with_capacity(n_samples);
        let mut seg = 0;
        for k in 0..n_samples {
            let s = (k as f64 * interval).min(total);
            while seg + 2 < cum.len() && cum[seg + 1] < s {
                seg += 1;
            }
            let len = (cum[seg + 1] - cum[seg]).max(1e-12);
            let t = (s - cum[seg]) / len;
            samples.push(pts[seg].add(pts[seg + 1].sub(pts[seg]).scale(t)));
        }

        let n = samples.len();
        let mut points = Vec::with_capacity(n);
        for i in 0..n {
            let tangent = if i == 0 {
                samples[1].sub(samples[0])
            } else if i == n - 1 {
                samples[n - 1].sub(samples[n - 2])
            } else {
                samples[i + 1].sub(samples[i - 1])
            }
            .normalized();
            let normal = Vec2::new(-tangent.y, tangent.x);
            points.push(ReferencePathPoint {
                pos: samples[i],
                normal,
                s: i as f64 * interval,
                curvature: 0.0,
            });
        }
        for i in 1..n - 1 {
            points[i].curvature =
                circumscribed_curvature(samples[i - 1], samples[i], samples[i + 1]);
        }
        if n >= 3 {
            points[0].curvature = points[1].curvature;
            points[n - 1].curvature = points[n - 2].curvature;
        }
        Ok(Self {
            points,
            interval,
        })
    }

    pub fn points(&self) -> &[ReferencePathPoint] {
        &self.points
    }

    pub fn interval(&self) -> f64 {
        self.interval
    }

    pub fn s_max(&self) -> f64 {
        self.points.last().unwrap().s
    }

    pub fn max_abs_curvature(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.curvature.abs())
            .fold(0.0, f64::max)
    }

    /// Max |curvature| over the arc-length window `[s0, s1]`.
    pub fn max_abs_curvature_in(&self, s0: f64, s1: f64) -> f64 {
        self.points
            .iter()
            .filter(|p| p.s >= s0 - self.interval && p.s <= s1 + self.interval)
            .map(|p| p.curvature.abs())
            .fold(0.0, f64::max)
    }

    /// Index of the sample closest to `p`. Coarse stride search over the
    /// arc-length ordering followed by a local refinement.
    pub fn nearest_index(&self, p: Vec2) -> usize {
        let n = self.points.len();
        let stride = (n / 64).max(1);
        let mut best = 0;
        let mut best_d2 = f64::INFINITY;
        let mut i = 0;
        while i < n {
            let d2 = self.points[i].pos.sub(p).dot(self.points[i].pos.sub(p));
            if d2 < best_d2 {
                best_d2 = d2;
                best = i;
            }
            i += stride;
        }
        let lo = best.saturating_sub(2 * stride);
        let hi = (best + 2 * stride).min(n - 1);
        for i in lo..=hi {
            let d2 = self.points[i].pos.sub(p).dot(self.points[i].pos.sub(p));
            if d2 < best_d2 {
                best_d2 = d2;
                best = i;
            }
        }
        best
    }

    /// Convert a Cartesian point to curvilinear coordinates.
    ///
    /// `gate` rejects points further than that lateral distance from the
    /// nearest sample. Beyond the path ends, s clamps to `[0, s_max]` and
    /// the pose is flagged extrapolated.
    pub fn to_frenet(&self, p: Vec2, gate: f64) -> Result<FrenetPose> {
        let idx = self.nearest_index(p);
        let near = self.points[idx].pos.sub(p).norm();
        if near > gate {
            return Err(PlannerError::BeyondLateralGate {
                x: p.x,
                y: p.y,
                gate,
            });
        }

        let n = self.points.len();
        let mut best: Option<(f64, f64, f64)> = None; // (clamp_penalty, s, d)
        let lo = idx.saturating_sub(1);
        let hi = (idx + 1).min(n - 1);
        for i in lo..hi {
            if let Some((t, penalty)) = self.solve_segment(i, p) {
                let tc = t.clamp(0.0, 1.0);
                let (foot, normal) = self.interp(i, tc);
                let d = p.sub(foot).dot(normal);
                let s = self.points[i].s + tc * self.interval;
                if best.map_or(true, |(bp, ..)| penalty < bp) {
                    best = Some((penalty, s, d));
                }
            }
        }
        let (penalty, s, d) = best.ok_or_else(|| {
            PlannerError::InvalidInput("no valid projection segment".into())
        })?;
        let interior = penalty <= 1e-9;
        let at_end = (s <= 1e-9 && !interior) || (s >= self.s_max() - 1e-9 && !interior);
        Ok(FrenetPose {
            s: s.clamp(0.0, self.s_max()),
            d,
            extrapolated: at_end,
        })
    }

    /// Convert curvilinear coordinates back to a Cartesian point.
    pub fn to_cartesian(&self, s: f64, d: f64) -> Result<Vec2> {
        if !(-1e-9..=self.s_max() + 1e-9).contains(&s) {
            return Err(PlannerError::ArcLengthOutOfRange {
                s,
                s_max: self.s_max(),
            });
        }
        let s = s.clamp(0.0, self.s_max());
        let i = ((s / self.interval) as usize).min(self.points.len() - 2);
        let t = (s - self.points[i].s) / self.interval;
        let rho = (1.0 - t) * self.points[i].curvature + t * self.points[i + 1].curvature;
        if rho.abs() > 1e-12 && d.abs() * rho.abs() >= 1.0 {
            return Err(PlannerError::OffsetExceedsCurvature {
                d,
                radius: 1.0 / rho.abs(),
                s,
            });
        }
        let (foot, normal) = self.interp(i, t);
        Ok(foot.add(normal.scale(d)))
    }

    /// Interpolated centerline point, unit normal and curvature at `s`.
    /// Cheaper than repeated `to_cartesian` when many lateral offsets
    /// share one arc length.
    pub fn pose_at(&self, s: f64) -> (Vec2, Vec2, f64) {
        let s = s.clamp(0.0, self.s_max());
        let i = ((s / self.interval) as usize).min(self.points.len() - 2);
        let t = (s - self.points[i].s) / self.interval;
        let rho = (1.0 - t) * self.points[i].curvature + t * self.points[i + 1].curvature;
        let (foot, normal) = self.interp(i, t);
        (foot, normal, rho)
    }

    /// Interpolated curvature at arc length `s`.
    pub fn curvature_at(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.s_max());
        let i = ((s / self.interval) as usize).min(self.points.len() - 2);
        let t = (s - self.points[i].s) / self.interval;
        (1.0 - t) * self.points[i].curvature + t * self.points[i + 1].curvature
    }

    fn interp(&self, i: usize, t: f64) -> (Vec2, Vec2) {
        let a = &self.points[i];
        let b = &self.points[i + 1];
        let foot = a.pos.add(b.pos.sub(a.pos).scale(t));
        let normal = a
            .normal
            .add(b.normal.sub(a.normal).scale(t))
            .normalized();
        (foot, normal)
    }

    /// Find t on segment i where (p - P(t)) is parallel to the
    /// interpolated normal n(t). Returns (t, clamp distance outside [0,1]).
    fn solve_segment(&self, i: usize, p: Vec2) -> Option<(f64, f64)> {
        let a = &self.points[i];
        let b = &self.points[i + 1];
        let u = b.pos.sub(a.pos);
        let m = a.normal;
        let w = b.normal.sub(a.normal);
        let pa = p.sub(a.pos);
        // cross(pa - t*u, m + t*w) = 0, quadratic in t
        let c0 = pa.cross(m);
        let c1 = pa.cross(w) - u.cross(m);
        let c2 = -u.cross(w);
        let roots = solve_quadratic(c2, c1, c0);
        roots
            .into_iter()
            .map(|t| {
                let penalty = if t < 0.0 {
                    -t
                } else if t > 1.0 {
                    t - 1.0
                } else {
                    0.0
                };
                (t, penalty)
            })
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
    }
}

fn solve_quadratic(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a.abs() < 1e-14 {
        if b.abs() < 1e-14 {
            return vec![];
        }
        return vec![-c / b];
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return vec![];
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let mut out = vec![q / a];
    if q.abs() > 1e-14 {
        out.push(c / q);
    }
    out
}

/// Signed curvature of the circle through three points. Sign follows the
/// cross product of the two chords (positive = left turn).
fn circumscribed_curvature(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    let ab = b.sub(a);
    let bc = c.sub(b);
    let ac = c.sub(a);
    let denom = ab.norm() * bc.norm() * ac.norm();
    if denom < 1e-12 {
        return 0.0;
    }
    2.0 * ab.cross(bc) / denom
}

#[cfg(test)]
mod tests {
    use super::*;

    const GATE: f64 = 50.0;

    fn quarter_circle(radius: f64, step_deg: f64) -> Vec<(f64, f64)> {
        let mut pts = Vec::new();
        let mut a = 0.0f64;
        while a <= 90.0 + 1e-9 {
            let r = a.to_radians();
            pts.push((radius * r.sin(), radius * (1.0 - r.cos())));
            a += step_deg;
        }
        pts
    }

    #[test]
    fn straight_segment_samples() {
        let path = ReferencePath::build(&[(0.0, 0.0), (10.0, 0.0)], 1.0).unwrap();
        assert_eq!(path.points().len(), 11);
        for p in path.points() {
            assert!(p.curvature.abs() < 1e-12);
            assert!((p.normal.x).abs() < 1e-12);
            assert!((p.normal.y - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn square_corner_arc_length_spacing() {
        let path =
            ReferencePath::build(&[(0.0, 0.0), (5.0, 0.0), (5.0, 5.0)], 1.0).unwrap();
        let pts = path.points();
        for w in pts.windows(2) {
            assert!(w[1].s > w[0].s);
            let gap = w[1].pos.sub(w[0].pos).norm();
            assert!(gap <= 1.0 + 1e-6);
        }
    }

    #[test]
    fn quarter_circle_curvature() {
        let path = ReferencePath::build(&quarter_circle(10.0, 0.5), 0.5).unwrap();
        for p in path.points() {
            assert!(
                (p.curvature - 0.1).abs() < 0.1 * 0.02,
                "curvature {} at s {}",
                p.curvature,
                p.s
            );
        }
    }

    #[test]
    fn straight_to_frenet() {
        let path = ReferencePath::build(&[(0.0, 0.0), (10.0, 0.0)], 1.0).unwrap();
        let f = path.to_frenet(Vec2::new(5.0, 1.0), GATE).unwrap();
        assert!((f.s - 5.0).abs() < 1e-9);
        assert!((f.d - 1.0).abs() < 1e-9);
        assert!(!f.extrapolated);

        let on = path.to_frenet(Vec2::new(3.0, 0.0), GATE).unwrap();
        assert!((on.s - 3.0).abs() < 1e-9);
        assert!(on.d.abs() < 1e-9);
    }

    #[test]
    fn quarter_circle_offset_point() {
        let path = ReferencePath::build(&quarter_circle(10.0, 0.25), 0.1).unwrap();
        // point at radius 11, 45 degrees around the circle center (0, 10)
        let a = 45.0f64.to_radians();
        let p = Vec2::new(11.0 * a.sin(), 10.0 - 11.0 * a.cos());
        let f = path.to_frenet(p, GATE).unwrap();
        // dense-sampling oracle: arc length to 45 deg is r * pi/4, offset -1
        // (outside the circle is opposite the left normal)
        assert!((f.s - 10.0 * std::f64::consts::FRAC_PI_4).abs() < 1e-3);
        assert!((f.d.abs() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn straight_to_cartesian() {
        let path = ReferencePath::build(&[(0.0, 0.0), (10.0, 0.0)], 1.0).unwrap();
        let p = path.to_cartesian(5.0, 1.0).unwrap();
        assert!((p.x - 5.0).abs() < 1e-9);
        assert!((p.y - 1.0).abs() < 1e-9);
        for s in [0.0, 2.5, 7.25, 10.0] {
            let q = path.to_cartesian(s, 0.0).unwrap();
            assert!((q.y).abs() < 1e-9);
            assert!((q.x - s).abs() < 1e-9);
        }
    }

    #[test]
    fn round_trip_on_curved_path() {
        let path = ReferencePath::build(&quarter_circle(25.0, 0.25), 0.5).unwrap();
        let mut k = 0u32;
        for si in 1..30 {
            let s = si as f64 * 1.2;
            for di in -3..=3 {
                let d = di as f64 * 1.0;
                let p = path.to_cartesian(s, d).unwrap();
                let f = path.to_frenet(p, GATE).unwrap();
                assert!(
                    (f.s - s).abs() < 1e-4 && (f.d - d).abs() < 1e-4,
                    "round trip ({s}, {d}) -> ({}, {})",
                    f.s,
                    f.d
                );
                k += 1;
            }
        }
        assert!(k > 100);
    }

    #[test]
    fn clamps_beyond_ends() {
        let path = ReferencePath::build(&[(0.0, 0.0), (10.0, 0.0)], 1.0).unwrap();
        let f = path.to_frenet(Vec2::new(12.0, 0.5), GATE).unwrap();
        assert!((f.s - 10.0).abs() < 1e-9);
        assert!(f.extrapolated);
        let g = path.to_frenet(Vec2::new(-3.0, 0.0), GATE).unwrap();
        assert!(g.s.abs() < 1e-9);
        assert!(g.extrapolated);
    }

    #[test]
    fn short_path_rejected() {
        let err = ReferencePath::build(&[(0.0, 0.0), (0.3, 0.0)], 1.0).unwrap_err();
        assert!(matches!(err, PlannerError::PathTooShort { .. }));
    }

    #[test]
    fn offset_beyond_curvature_radius_rejected() {
        let path = ReferencePath::build(&quarter_circle(10.0, 0.25), 0.5).unwrap();
        let err = path.to_cartesian(5.0, 11.0).unwrap_err();
        assert!(matches!(err, PlannerError::OffsetExceedsCurvature { .. }));
    }

    #[test]
    fn nearest_index_matches_linear_scan() {
        let path = ReferencePath::build(&quarter_circle(30.0, 0.25), 0.5).unwrap();
        for i in 0..60 {
            let p = Vec2::new(i as f64 * 0.7, i as f64 * 0.3);
            let by_scan = path
                .points()
                .iter()
                .enumerate()
                .min_by(|a, b| {
                    let da = a.1.pos.sub(p).norm();
                    let db = b.1.pos.sub(p).norm();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap()
                .0;
            assert_eq!(path.nearest_index(p), by_scan);
        }
    }
}
