//! Irregular domains as implicit regions, per-axis fractional bounds
//! through a point, and interior/boundary point sampling.
//!
//! All randomness flows through [`UniformStream`], so sampling is
//! deterministic under a seed and replays exactly.

use crate::estimator::AxisBounds;
use crate::qmc::UniformStream;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("point {0:?} is outside or on the boundary of the domain")]
    PointNotInterior(Vec<f64>),
    #[error("axis {axis} out of range for a {dim}-dimensional domain")]
    AxisOutOfRange { axis: usize, dim: usize },
    #[error("rejection sampling acceptance rate below 1e-4; domain is degenerate")]
    DegenerateDomain,
    #[error("stream error: {0}")]
    Stream(#[from] crate::qmc::StreamError),
}

/// Default coefficients of the heart-curve boundary
/// y = c0 cos t − c1 cos 2t − c2 cos 3t − c3 cos 4t, x = 1.6 sin³ t.
pub const HEART_COEFFS: [f64; 4] = [1.3, 5.0, 2.0, 1.0];

const HEART_SAMPLES: usize = 8192;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    /// 2-D disk of given radius centered at the origin.
    Disk { radius: f64 },
    /// 3-D ball of given radius centered at the origin.
    Ball { radius: f64 },
    /// 2-D heart-shaped region bounded by the parametric curve
    /// x = 1.6 sin³ t, y = Σ signed cosine harmonics, t ∈ [0, 2π];
    /// a point lies inside when its squared radius does not exceed the
    /// curve's squared radius at the same polar angle.
    Heart { coeffs: [f64; 4] },
}

/// An immutable, shareable implicit region.
#[derive(Debug, Clone)]
pub struct Domain {
    shape: Shape,
    bbox: Vec<(f64, f64)>,
    /// Heart only: curve radius per polar-angle bin.
    radius_by_angle: Vec<f64>,
}

fn heart_point(coeffs: &[f64; 4], t: f64) -> (f64, f64) {
    let x = 1.6 * t.sin().powi(3);
    let y = coeffs[0] * t.cos()
        - coeffs[1] * (2.0 * t).cos()
        - coeffs[2] * (3.0 * t).cos()
        - coeffs[3] * (4.0 * t).cos();
    (x, y)
}

impl Domain {
    pub fn disk(radius: f64) -> Self {
        assert!(radius > 0.0);
        let pad = radius * 1.01;
        Self {
            shape: Shape::Disk { radius },
            bbox: vec![(-pad, pad), (-pad, pad)],
            radius_by_angle: Vec::new(),
        }
    }

    pub fn ball(radius: f64) -> Self {
        assert!(radius > 0.0);
        let pad = radius * 1.01;
        Self {
            shape: Shape::Ball { radius },
            bbox: vec![(-pad, pad), (-pad, pad), (-pad, pad)],
            radius_by_angle: Vec::new(),
        }
    }

    pub fn heart(coeffs: [f64; 4]) -> Self {
        // Tabulate the curve radius per polar-angle bin; the region is
        // read as star-shaped about the origin, keeping the outermost
        // crossing where the curve covers an angle more than once.
        let mut radius_by_angle = vec![0.0f64; HEART_SAMPLES];
        for i in 0..8 * HEART_SAMPLES {
            let t = i as f64 / (8 * HEART_SAMPLES) as f64 * std::f64::consts::TAU;
            let (x, y) = heart_point(&coeffs, t);
            let r = x.hypot(y);
            let theta = y.atan2(x);
            let bin = (((theta + std::f64::consts::PI) / std::f64::consts::TAU
                * HEART_SAMPLES as f64) as usize)
                .min(HEART_SAMPLES - 1);
            radius_by_angle[bin] = radius_by_angle[bin].max(r);
        }
        // Fill angle bins the curve never visits from their neighbours.
        for _ in 0..HEART_SAMPLES {
            let mut changed = false;
            for i in 0..HEART_SAMPLES {
                if radius_by_angle[i] == 0.0 {
                    let l = radius_by_angle[(i + HEART_SAMPLES - 1) % HEART_SAMPLES];
                    let r = radius_by_angle[(i + 1) % HEART_SAMPLES];
                    if l > 0.0 || r > 0.0 {
                        radius_by_angle[i] = l.max(r);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let rmax = radius_by_angle.iter().cloned().fold(0.0, f64::max) * 1.01;
        Self {
            shape: Shape::Heart { coeffs },
            bbox: vec![(-rmax, rmax), (-rmax, rmax)],
            radius_by_angle,
        }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.bbox.len()
    }

    pub fn bbox(&self) -> &[(f64, f64)] {
        &self.bbox
    }

    fn heart_radius_at(&self, theta: f64) -> f64 {
        // linear interpolation between bin centers keeps the implicit
        // boundary continuous in angle
        let pos = (theta + std::f64::consts::PI) / std::f64::consts::TAU
            * HEART_SAMPLES as f64
            - 0.5;
        let base = pos.floor();
        let frac = pos - base;
        let i = base.rem_euclid(HEART_SAMPLES as f64) as usize;
        let j = (i + 1) % HEART_SAMPLES;
        self.radius_by_angle[i] * (1.0 - frac) + self.radius_by_angle[j] * frac
    }

    /// Signed proximity: positive inside, negative outside, ~0 on the
    /// boundary. For disk/ball this is the exact signed distance.
    pub fn proximity(&self, p: &[f64]) -> f64 {
        match &self.shape {
            Shape::Disk { radius } => radius - p[0].hypot(p[1]),
            Shape::Ball { radius } => {
                radius - (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
            }
            Shape::Heart { .. } => {
                let r = p[0].hypot(p[1]);
                let theta = p[1].atan2(p[0]);
                self.heart_radius_at(theta) - r
            }
        }
    }

    pub fn inside(&self, p: &[f64]) -> bool {
        self.proximity(p) > 0.0
    }

    /// The connected axis-aligned chord through `point` along `axis`:
    /// nearest boundary crossings below and above the coordinate.
    pub fn axis_bounds(&self, point: &[f64], axis: usize) -> Result<AxisBounds, GeometryError> {
        if axis >= self.dim() {
            return Err(GeometryError::AxisOutOfRange {
                axis,
                dim: self.dim(),
            });
        }
        if !self.inside(point) {
            return Err(GeometryError::PointNotInterior(point.to_vec()));
        }
        match &self.shape {
            Shape::Disk { radius } | Shape::Ball { radius } => {
                // analytic chord: half-width from the other coordinates
                let mut other_sq = 0.0;
                for (i, &c) in point.iter().enumerate() {
                    if i != axis {
                        other_sq += c * c;
                    }
                }
                let half = (radius * radius - other_sq).sqrt();
                Ok(AxisBounds::new(-half, half))
            }
            Shape::Heart { .. } => {
                let lb = self.bisect_crossing(point, axis, -1.0);
                let ub = self.bisect_crossing(point, axis, 1.0);
                Ok(AxisBounds::new(lb, ub))
            }
        }
    }

    /// Walks from the point along `axis` in direction `dir` until the
    /// indicator flips, then bisects the crossing to 1e-10 of the bbox
    /// extent.
    fn bisect_crossing(&self, point: &[f64], axis: usize, dir: f64) -> f64 {
        let (lo, hi) = self.bbox[axis];
        let extent = hi - lo;
        let mut probe = point.to_vec();
        let mut inside_c = point[axis];
        let step = extent / 1024.0;
        let mut outside_c = inside_c;
        loop {
            outside_c += dir * step;
            if (outside_c - lo) * (hi - outside_c) < 0.0 {
                // left the bbox: the boundary is between inside_c and here
                break;
            }
            probe[axis] = outside_c;
            if !self.inside(&probe) {
                break;
            }
            inside_c = outside_c;
        }
        let tol = extent * 1e-10;
        let mut a = inside_c;
        let mut b = outside_c;
        while (b - a).abs() > tol {
            let mid = 0.5 * (a + b);
            probe[axis] = mid;
            if self.inside(&probe) {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    }

    /// `n` interior points by rejection sampling in the bbox.
    pub fn sample_interior(
        &self,
        n: usize,
        stream: &mut UniformStream,
    ) -> Result<Vec<Vec<f64>>, GeometryError> {
        let d = self.dim();
        let mut out = Vec::with_capacity(n);
        let mut attempts = 0u64;
        let max_attempts = (n as u64).max(100) * 10_000;
        let mut p = vec![0.0; d];
        while out.len() < n {
            if attempts >= max_attempts {
                return Err(GeometryError::DegenerateDomain);
            }
            attempts += 1;
            for (i, c) in p.iter_mut().enumerate() {
                let (lo, hi) = self.bbox[i];
                *c = lo + (hi - lo) * stream.next_value()?;
            }
            if self.inside(&p) {
                out.push(p.clone());
            }
        }
        Ok(out)
    }

    /// `n` boundary points: uniform in angle (disk), uniform in area
    /// (ball), uniform in curve parameter (heart).
    pub fn sample_boundary(
        &self,
        n: usize,
        stream: &mut UniformStream,
    ) -> Result<Vec<Vec<f64>>, GeometryError> {
        let mut out = Vec::with_capacity(n);
        match &self.shape {
            Shape::Disk { radius } => {
                for _ in 0..n {
                    let t = std::f64::consts::TAU * stream.next_value()?;
                    out.push(vec![radius * t.cos(), radius * t.sin()]);
                }
            }
            Shape::Ball { radius } => {
                for _ in 0..n {
                    let z = 2.0 * stream.next_value()? - 1.0;
                    let phi = std::f64::consts::TAU * stream.next_value()?;
                    let s = (1.0 - z * z).sqrt();
                    out.push(vec![radius * s * phi.cos(), radius * s * phi.sin(), radius * z]);
                }
            }
            Shape::Heart { coeffs } => {
                for _ in 0..n {
                    let t = std::f64::consts::TAU * stream.next_value()?;
                    let (x, y) = heart_point(coeffs, t);
                    out.push(vec![x, y]);
                }
            }
        }
        Ok(out)
    }
}

/// One interior space(-time) collocation point with its frozen per-axis
/// fractional bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationPoint {
    pub coords: Vec<f64>,
    pub time: f64,
    pub axis_bounds: Vec<AxisBounds>,
}

impl CollocationPoint {
    /// Builds the point and freezes its axis bounds from the domain.
    pub fn new(domain: &Domain, coords: Vec<f64>, time: f64) -> Result<Self, GeometryError> {
        let axis_bounds = (0..domain.dim())
            .map(|axis| domain.axis_bounds(&coords, axis))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            coords,
            time,
            axis_bounds,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_axis_bounds_hand_values() {
        let d = Domain::disk(1.0);
        let b = d.axis_bounds(&[0.0, 0.6], 0).unwrap();
        assert!((b.lb + 0.8).abs() < 1e-12 && (b.ub - 0.8).abs() < 1e-12);
        let b = d.axis_bounds(&[0.0, 0.0], 1).unwrap();
        assert!((b.lb + 1.0).abs() < 1e-12 && (b.ub - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ball_axis_bounds_hand_value() {
        let d = Domain::ball(0.5);
        let b = d.axis_bounds(&[0.1, 0.0, 0.0], 2).unwrap();
        let want = 0.24f64.sqrt();
        assert!((b.ub - want).abs() < 1e-12 && (b.lb + want).abs() < 1e-12);
    }

    #[test]
    fn outside_point_rejected() {
        let d = Domain::disk(1.0);
        assert!(matches!(
            d.axis_bounds(&[1.5, 0.0], 0),
            Err(GeometryError::PointNotInterior(_))
        ));
        assert!(matches!(
            d.axis_bounds(&[0.0, 0.0], 2),
            Err(GeometryError::AxisOutOfRange { .. })
        ));
    }

    #[test]
    fn interior_samples_are_inside() {
        let mut s = UniformStream::pseudo(1);
        for dom in [Domain::disk(1.0), Domain::ball(0.5), Domain::heart(HEART_COEFFS)] {
            let pts = dom.sample_interior(500, &mut s).unwrap();
            assert_eq!(pts.len(), 500);
            assert!(pts.iter().all(|p| dom.inside(p)));
        }
    }

    #[test]
    fn ball_mean_radius_matches_uniform_law() {
        // E r = 3R/4 for a uniform ball
        let dom = Domain::ball(0.5);
        let mut s = UniformStream::pseudo(3);
        let pts = dom.sample_interior(4000, &mut s).unwrap();
        let mean_r: f64 = pts
            .iter()
            .map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt())
            .sum::<f64>()
            / pts.len() as f64;
        assert!((mean_r - 0.375).abs() < 0.02, "{mean_r}");
    }

    #[test]
    fn boundary_samples_on_boundary() {
        let dom = Domain::disk(1.0);
        let mut s = UniformStream::pseudo(5);
        for p in dom.sample_boundary(200, &mut s).unwrap() {
            assert!((p[0] * p[0] + p[1] * p[1] - 1.0).abs() < 1e-12);
        }
        let dom = Domain::ball(1.0);
        let pts = dom.sample_boundary(4000, &mut s).unwrap();
        let mean_z: f64 = pts.iter().map(|p| p[2]).sum::<f64>() / pts.len() as f64;
        assert!(mean_z.abs() < 0.03, "{mean_z}");
        for p in &pts {
            let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            assert!((r - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn heart_boundary_matches_parametric_curve() {
        // The curve is not star-shaped, so a parametric sample may fall
        // strictly inside the angle-radius region; it must never fall
        // outside it.
        let dom = Domain::heart(HEART_COEFFS);
        let mut s = UniformStream::pseudo(7);
        for p in dom.sample_boundary(64, &mut s).unwrap() {
            let prox = dom.proximity(&p);
            assert!(prox > -dom.bbox()[0].1 * 0.02, "{p:?} prox {prox}");
        }
        // spot-check t = pi/4 against the closed-form curve
        let (x, y) = heart_point(&HEART_COEFFS, std::f64::consts::FRAC_PI_4);
        assert!((x - 1.6 * (0.5f64.sqrt()).powi(3)).abs() < 1e-12);
        assert!(y.is_finite());
    }

    #[test]
    fn disk_analytic_matches_bisection() {
        // force the generic bisection path on a disk by probing the
        // indicator directly
        let dom = Domain::disk(1.0);
        let p = [0.2, -0.3];
        let analytic = dom.axis_bounds(&p, 0).unwrap();
        let lb = dom.bisect_crossing(&p, 0, -1.0);
        let ub = dom.bisect_crossing(&p, 0, 1.0);
        assert!((lb - analytic.lb).abs() < 1e-8);
        assert!((ub - analytic.ub).abs() < 1e-8);
    }

    #[test]
    fn axis_bounds_bracket_point_and_touch_boundary() {
        let mut s = UniformStream::pseudo(11);
        for dom in [Domain::disk(1.0), Domain::heart(HEART_COEFFS)] {
            for p in dom.sample_interior(50, &mut s).unwrap() {
                for axis in 0..dom.dim() {
                    let b = dom.axis_bounds(&p, axis).unwrap();
                    assert!(b.lb < p[axis] && p[axis] < b.ub);
                    let mut q = p.clone();
                    q[axis] = b.lb;
                    let prox_l = dom.proximity(&q);
                    q[axis] = b.ub;
                    let prox_u = dom.proximity(&q);
                    let tol = match dom.shape() {
                        // the heart's boundary is an interpolated angle
                        // table with branch jumps where the curve folds
                        Shape::Heart { .. } => 1e-1,
                        _ => 1e-8,
                    };
                    assert!(prox_l.abs() < tol, "{prox_l}");
                    assert!(prox_u.abs() < tol, "{prox_u}");
                }
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_under_seed() {
        let dom = Domain::heart(HEART_COEFFS);
        let a = dom
            .sample_interior(20, &mut UniformStream::pseudo(9))
            .unwrap();
        let b = dom
            .sample_interior(20, &mut UniformStream::pseudo(9))
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn collocation_point_freezes_bounds() {
        let dom = Domain::disk(1.0);
        let cp = CollocationPoint::new(&dom, vec![0.0, 0.6], 0.0).unwrap();
        assert_eq!(cp.axis_bounds.len(), 2);
        assert!((cp.axis_bounds[0].ub - 0.8).abs() < 1e-12);
    }
}
