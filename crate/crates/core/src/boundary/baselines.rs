//! COI hyperplane and the fitted conservative estimate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::SearchContext;
use crate::error::{Error, Result};
use crate::geometry::{clip_box, Bounds, ConvexCell, Halfspace};
use crate::modal::ModalDecomposition;
use crate::system::MultiRegionSystem;

/// Hyperplane a·x = b in the adjustable coordinates; a·x ≥ b is secure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearBoundary {
    pub a: Vec<f64>,
    pub b: f64,
}

impl LinearBoundary {
    pub fn is_secure(&self, x: &[f64]) -> bool {
        self.a.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() >= self.b
    }

    /// Coordinate `k` on the plane given the others in `x`.
    pub fn solve_for(&self, k: usize, x: &[f64]) -> Option<f64> {
        if self.a[k] == 0.0 {
            return None;
        }
        let rest: f64 = self
            .a
            .iter()
            .zip(x)
            .enumerate()
            .filter(|(j, _)| *j != k)
            .map(|(_, (a, v))| a * v)
            .sum();
        Some((self.b - rest) / self.a[k])
    }

    /// Secure part of a planar box, a·x ≥ b, as one convex cell.
    pub fn secure_cell(&self, bounds: &Bounds) -> Result<ConvexCell> {
        let h = Halfspace {
            a: self.a.iter().map(|v| -v).collect(),
            b: -self.b,
        };
        clip_box(bounds, &h)
    }

    /// Points of the plane inside the box: `n` per free axis.
    pub fn sample(&self, bounds: &Bounds, n: usize) -> Vec<Vec<f64>> {
        let d = self.a.len();
        let n = n.max(2);
        let k = (0..d)
            .max_by(|&i, &j| self.a[i].abs().total_cmp(&self.a[j].abs()))
            .unwrap_or(0);
        let free: Vec<usize> = (0..d).filter(|&j| j != k).collect();
        let mut out = Vec::new();
        if d == 2 {
            // clip the free axis to where the solved one stays in the box
            let j = free[0];
            let mut lo = bounds.lo[j];
            let mut hi = bounds.hi[j];
            if self.a[j] != 0.0 {
                let at = |xk: f64| (self.b - self.a[k] * xk) / self.a[j];
                let (e1, e2) = (at(bounds.lo[k]), at(bounds.hi[k]));
                lo = lo.max(e1.min(e2));
                hi = hi.min(e1.max(e2));
            }
            if lo > hi {
                return out;
            }
            for i in 0..n {
                let mut x = vec![0.0; 2];
                x[j] = lo + (hi - lo) * i as f64 / (n - 1) as f64;
                if let Some(v) = self.solve_for(k, &x) {
                    x[k] = v;
                    if bounds.contains(&x, 1e-9 * bounds.diagonal()) {
                        out.push(x);
                    }
                }
            }
            return out;
        }
        let total = n.pow(free.len() as u32);
        for mut idx in 0..total {
            let mut x = vec![0.0; d];
            for &j in &free {
                let i = idx % n;
                idx /= n;
                x[j] = bounds.lo[j] + (bounds.hi[j] - bounds.lo[j]) * i as f64 / (n - 1) as f64;
            }
            if let Some(v) = self.solve_for(k, &x) {
                x[k] = v;
                if bounds.contains(&x, 1e-9 * bounds.diagonal()) {
                    out.push(x);
                }
            }
        }
        out
    }
}

/// ΣH = |ΣΔP| / (2·lim), restricted to the `coords` regions.
pub fn coi_boundary(
    sys: &MultiRegionSystem,
    coords: &[usize],
    rocof_lim: f64,
) -> Result<LinearBoundary> {
    if !(rocof_lim > 0.0) {
        return Err(Error::InvalidArgument("rocof_lim must be positive".into()));
    }
    let total = sys.total_disturbance().abs() / (2.0 * rocof_lim);
    let fixed: f64 = sys
        .regions
        .iter()
        .filter(|r| !coords.contains(&r.id))
        .map(|r| r.inertia)
        .sum();
    Ok(LinearBoundary {
        a: vec![1.0; coords.len()],
        b: total - fixed,
    })
}

/// Least squares y ≈ c·x + c0. Returns (c, c0, rms residual).
pub fn fit_linear(xs: &[Vec<f64>], ys: &[f64]) -> Result<(Vec<f64>, f64, f64)> {
    let n = xs.len();
    let d = xs.first().map_or(0, |x| x.len());
    if n != ys.len() || n < d + 1 {
        return Err(Error::InvalidArgument(format!(
            "{n} samples cannot fit {} coefficients",
            d + 1
        )));
    }
    let m = DMatrix::from_fn(n, d + 1, |i, j| if j < d { xs[i][j] } else { 1.0 });
    let y = DVector::from_column_slice(ys);
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-12 * smax) {
        return Err(Error::InvalidArgument("rank-deficient fit matrix".into()));
    }
    let c = svd
        .solve(&y, 0.0)
        .map_err(|e| Error::Solver(e.to_string()))?;
    let r = &m * &c - &y;
    let rms = (r.norm_squared() / n as f64).sqrt();
    Ok((c.as_slice()[..d].to_vec(), c[d], rms))
}

/// Linear fit of 2ΣH·(upper bound on the oscillatory RoCoF) in the
/// adjustable inertias, lifted to dominate every sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConservativeFit {
    pub coords: Vec<usize>,
    /// m_i per adjustable coordinate.
    pub coeffs: Vec<f64>,
    /// Constant term after the lift.
    pub m4: f64,
    /// Added to the least-squares constant so the fit dominates the samples.
    pub lift: f64,
    /// RMS of the least-squares residual.
    pub residual: f64,
    pub samples: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    /// |ΔP| of the disturbance.
    pub dp: f64,
    /// Σ inertia of the fixed regions.
    pub fixed_inertia: f64,
}

/// Upper bound on |RoCoF(t)| over t ≥ 0 from absolute modal amplitudes.
pub fn amplitude_bound(md: &ModalDecomposition) -> f64 {
    let extra: f64 = md.extra_exp.iter().map(|e| e.amplitude.abs()).sum();
    md.scale.abs() * (md.exp_amplitude.abs() + extra + md.trig_amplitude_sum())
}

pub fn conservative_fit(ctx: &SearchContext, grid: usize) -> Result<ConservativeFit> {
    let d = ctx.dim();
    let g = grid.max(2);
    if g.pow(d as u32) < 4 * d {
        return Err(Error::InvalidArgument("grid too coarse for the fit".into()));
    }
    let dp = ctx.system.regions[ctx.disturbed].disturbance.abs();
    let fixed: f64 = ctx
        .system
        .regions
        .iter()
        .filter(|r| !ctx.coords.contains(&r.id))
        .map(|r| r.inertia)
        .sum();
    let mut samples = Vec::new();
    let mut targets = Vec::new();
    for mut k in 0..g.pow(d as u32) {
        let mut x = Vec::with_capacity(d);
        for j in 0..d {
            let i = k % g;
            k /= g;
            x.push(
                ctx.bounds.lo[j]
                    + (ctx.bounds.hi[j] - ctx.bounds.lo[j]) * i as f64 / (g - 1) as f64,
            );
        }
        let Some(md) = ctx.decomposition(&x) else {
            continue;
        };
        let total = fixed + x.iter().sum::<f64>();
        targets.push(2.0 * total * amplitude_bound(&md) - dp);
        samples.push(x);
    }
    let (coeffs, c0, residual) = fit_linear(&samples, &targets)?;
    let lift = samples
        .iter()
        .zip(&targets)
        .map(|(x, y)| y - (c0 + coeffs.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()))
        .fold(0.0, f64::max);
    Ok(ConservativeFit {
        coords: ctx.coords.clone(),
        coeffs,
        m4: c0 + lift,
        lift,
        residual,
        samples,
        targets,
        dp,
        fixed_inertia: fixed,
    })
}

impl ConservativeFit {
    /// (|ΔP| + m·x + m4) / (2ΣH), per-unit/s.
    pub fn estimate(&self, x: &[f64]) -> f64 {
        let q: f64 = self.coeffs.iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + self.m4;
        (self.dp + q) / (2.0 * (self.fixed_inertia + x.iter().sum::<f64>()))
    }

    /// Σ(2·lim − m_i)·x_i = |ΔP| + m4 − 2·lim·H_fixed.
    pub fn boundary(&self, rocof_lim: f64) -> LinearBoundary {
        LinearBoundary {
            a: self.coeffs.iter().map(|m| 2.0 * rocof_lim - m).collect(),
            b: self.dp + self.m4 - 2.0 * rocof_lim * self.fixed_inertia,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modal::decompose;
    use crate::system::{Region, TieLine};

    #[test]
    fn coi_plane_algebra() {
        let s = MultiRegionSystem::new(
            vec![
                Region::new(0, 20.0).range(10.0, 90.0).disturbance(1.0),
                Region::new(1, 20.0).range(10.0, 90.0),
            ],
            vec![TieLine::new(0, 1, 1.0)],
            50.0,
        )
        .unwrap();
        let p = coi_boundary(&s, &[0, 1], 0.01).unwrap();
        assert_eq!(p.b, 50.0);
        assert!(p.is_secure(&[30.0, 25.0]));
        assert!(!p.is_secure(&[20.0, 25.0]));
        let b = Bounds::new(vec![10.0, 10.0], vec![90.0, 90.0]).unwrap();
        let pts = p.sample(&b, 11);
        assert_eq!(pts.len(), 11);
        for x in &pts {
            assert!((x[0] + x[1] - 50.0).abs() < 1e-9);
        }
    }

    #[test]
    fn exact_linear_data_recovered() {
        let truth = ([0.3, -1.25, 2.0], 4.5);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..3 {
                    let x = vec![10.0 + 7.0 * i as f64, 5.0 + 3.0 * j as f64, 1.0 + k as f64];
                    ys.push(truth.0.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + truth.1);
                    xs.push(x);
                }
            }
        }
        let (c, c0, rms) = fit_linear(&xs, &ys).unwrap();
        for (a, b) in c.iter().zip(truth.0) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!((c0 - truth.1).abs() < 1e-6);
        assert!(rms < 1e-9);
    }

    #[test]
    fn collinear_samples_rejected() {
        let xs: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let ys = vec![1.0; 6];
        assert!(fit_linear(&xs, &ys).is_err());
    }

    #[test]
    fn amplitude_sum_bounds_waveform() {
        let s = MultiRegionSystem::new(
            vec![
                Region::new(0, 30.0).damping(1.0),
                Region::new(1, 12.0).damping(2.0),
                Region::new(2, 45.0).damping(0.5).disturbance(1.5),
            ],
            vec![
                TieLine::new(0, 1, 3.0),
                TieLine::new(1, 2, 1.5),
                TieLine::new(0, 2, 0.7),
            ],
            60.0,
        )
        .unwrap();
        for n1 in 0..3 {
            let md = decompose(&s, n1, 2).unwrap();
            let bound = amplitude_bound(&md);
            for k in 0..4000 {
                let t = k as f64 * 0.005;
                assert!(crate::modal::evaluate_rocof(&md, t).abs() <= bound * (1.0 + 1e-12));
            }
        }
    }
}
