//! Simulation-derived boundary: axis-parallel line scans of the dense-grid
//! RK4 maximum, bracketed crossings refined by bisection.

use rayon::prelude::*;

use super::SearchContext;
use crate::error::{Error, Result};
use crate::simulate::simulate_with;
use crate::system::build_state_space;

/// Largest simulated |RoCoF| of the observed region on [0, t_end].
pub fn simulated_rocof_max(ctx: &SearchContext, x: &[f64], t_end: f64, dt: f64) -> Option<f64> {
    let s = ctx.system_at(x).ok()?;
    let ss = build_state_space(&s);
    let mut best: f64 = 0.0;
    simulate_with(&ss, t_end, dt, |_, _, r| {
        best = best.max(r[ctx.observed].abs())
    })
    .ok()?;
    Some(best)
}

/// `lines` scans per axis with `lines` samples each.
pub fn reference_boundary(ctx: &SearchContext, lines: usize, dt: f64) -> Result<Vec<Vec<f64>>> {
    let n = lines.max(2);
    let d = ctx.dim();
    let t_end = ctx.horizon();
    let margin = |x: &[f64]| simulated_rocof_max(ctx, x, t_end, dt).map(|v| v - ctx.rocof_lim);
    let at = |j: usize, i: usize| {
        ctx.bounds.lo[j] + (ctx.bounds.hi[j] - ctx.bounds.lo[j]) * i as f64 / (n - 1) as f64
    };
    let mut jobs = Vec::new();
    for axis in 0..d {
        for mut idx in 0..n.pow(d as u32 - 1) {
            let mut base = vec![0.0; d];
            for j in (0..d).filter(|&j| j != axis) {
                base[j] = at(j, idx % n);
                idx /= n;
            }
            jobs.push((axis, base));
        }
    }
    let tol = 1e-9 * ctx.bounds.diagonal();
    let pts: Vec<Vec<f64>> = jobs
        .par_iter()
        .flat_map(|(axis, base)| {
            let axis = *axis;
            let mut out = Vec::new();
            let mut prev: Option<(f64, f64)> = None;
            for i in 0..n {
                let v = at(axis, i);
                let mut x = base.clone();
                x[axis] = v;
                let Some(m) = margin(&x) else {
                    prev = None;
                    continue;
                };
                if let Some((pv, pm)) = prev {
                    if (pm > 0.0) != (m > 0.0) {
                        let (mut lo, mut hi, mut mlo) = (pv, v, pm);
                        let mut y = x.clone();
                        loop {
                            let mid = 0.5 * (lo + hi);
                            y[axis] = mid;
                            let Some(mm) = margin(&y) else { break };
                            if mm.abs() <= ctx.eps_s || hi - lo < tol {
                                out.push(y.clone());
                                break;
                            }
                            if (mm > 0.0) == (mlo > 0.0) {
                                lo = mid;
                                mlo = mm;
                            } else {
                                hi = mid;
                            }
                        }
                    }
                }
                prev = Some((v, m));
            }
            out
        })
        .collect();
    if pts.is_empty() {
        return Err(Error::NoBoundary(
            "no simulated crossing on any scan line".into(),
        ));
    }
    Ok(pts)
}
