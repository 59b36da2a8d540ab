//! Security boundaries in inertia space: per-anchor traces, their binding
//! union, and the COI and conservative baselines.

mod baselines;
pub mod kernel;
mod reference;

pub use baselines::{
    amplitude_bound, coi_boundary, conservative_fit, fit_linear, ConservativeFit, LinearBoundary,
};
pub use kernel::{KernelParams, Termination};
pub use reference::{reference_boundary, simulated_rocof_max};

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Bounds, Point2};
use crate::modal::{self, ModalDecomposition};
use crate::rocof::{anchor_value, check_horizon, global_max, Anchor, GlobalMax, MaxOptions};
use crate::system::MultiRegionSystem;
use kernel::Box2;

/// Margin field over inertia coordinates: positive where insecure, zero on
/// the boundary, `None` where undefined.
pub type FieldN<'a> = dyn Fn(&[f64]) -> Option<f64> + Sync + 'a;

pub const DEFAULT_SLICES: usize = 9;
pub const DEFAULT_PIECES: usize = 4;
pub const DEFAULT_SEED: u64 = 0x5eed;

#[derive(Clone, Debug)]
pub struct SearchContext {
    pub system: MultiRegionSystem,
    /// Region ids of the adjustable coordinates, 2 or 3 of them.
    pub coords: Vec<usize>,
    pub bounds: Bounds,
    pub observed: usize,
    pub disturbed: usize,
    /// Per-unit/s.
    pub rocof_lim: f64,
    /// Seconds of inertia.
    pub step: f64,
    /// Per-unit/s.
    pub eps_s: f64,
    pub max_steps: usize,
    pub seed: u64,
    pub max_options: MaxOptions,
}

impl SearchContext {
    /// Defaults: step 1 s, eps_s = 1e-3·lim, max steps 10·diag/step.
    pub fn new(
        system: MultiRegionSystem,
        observed: usize,
        disturbed: usize,
        rocof_lim: f64,
    ) -> Result<Self> {
        let coords = system.adjustable();
        Self::with_coords(system, coords, observed, disturbed, rocof_lim)
    }

    pub fn with_coords(
        system: MultiRegionSystem,
        coords: Vec<usize>,
        observed: usize,
        disturbed: usize,
        rocof_lim: f64,
    ) -> Result<Self> {
        let n = system.n();
        if !(2..=3).contains(&coords.len()) {
            return Err(Error::InvalidArgument(format!(
                "need 2 or 3 adjustable regions, got {}",
                coords.len()
            )));
        }
        if coords.iter().any(|&c| c >= n) || observed >= n || disturbed >= n {
            return Err(Error::InvalidArgument("region index out of range".into()));
        }
        if system.regions[disturbed].disturbance == 0.0 {
            return Err(Error::NoDisturbance(disturbed));
        }
        if !(rocof_lim > 0.0) || !rocof_lim.is_finite() {
            return Err(Error::InvalidArgument("rocof_lim must be positive".into()));
        }
        let bounds = Bounds::new(
            coords
                .iter()
                .map(|&r| system.regions[r].inertia_lo)
                .collect(),
            coords
                .iter()
                .map(|&r| system.regions[r].inertia_up)
                .collect(),
        )?;
        if bounds.lo.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::InvalidArgument(
                "inertia box must be strictly positive".into(),
            ));
        }
        let mut ctx = SearchContext {
            system,
            coords,
            bounds,
            observed,
            disturbed,
            rocof_lim,
            step: 1.0,
            eps_s: 1e-3 * rocof_lim,
            max_steps: 0,
            seed: DEFAULT_SEED,
            max_options: MaxOptions::default(),
        };
        ctx.set_step(1.0)?;
        Ok(ctx)
    }

    /// Sets the tangent step and the matching step budget.
    pub fn set_step(&mut self, step: f64) -> Result<()> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::InvalidArgument("step must be positive".into()));
        }
        self.step = step;
        self.max_steps = (10.0 * self.bounds.diagonal() / step).ceil().max(1.0) as usize;
        Ok(())
    }

    pub fn set_eps_s(&mut self, eps_s: f64) -> Result<()> {
        if !(eps_s > 0.0) || !eps_s.is_finite() {
            return Err(Error::InvalidArgument("eps_s must be positive".into()));
        }
        self.eps_s = eps_s;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn params(&self) -> KernelParams {
        KernelParams {
            step: self.step,
            eps_s: self.eps_s,
            max_steps: self.max_steps,
            seed: self.seed,
            rays: 64,
        }
    }

    /// Full inertia vector with `x` in the adjustable coordinates.
    pub fn full_inertia(&self, x: &[f64]) -> Vec<f64> {
        let mut h = self.system.inertias();
        for (&r, &v) in self.coords.iter().zip(x) {
            h[r] = v;
        }
        h
    }

    pub fn system_at(&self, x: &[f64]) -> Result<MultiRegionSystem> {
        self.system.with_inertia(&self.full_inertia(x))
    }

    pub fn decomposition(&self, x: &[f64]) -> Option<ModalDecomposition> {
        let s = self.system_at(x).ok()?;
        modal::decompose(&s, self.observed, self.disturbed).ok()
    }

    pub fn global(&self, x: &[f64]) -> Option<GlobalMax> {
        self.decomposition(x)
            .map(|md| global_max(&md, &self.max_options))
    }

    /// |anchor value| − lim.
    pub fn anchor_margin(&self, anchor: Anchor, x: &[f64]) -> Option<f64> {
        let md = self.decomposition(x)?;
        anchor_value(&md, anchor, &self.max_options).map(|v| v.abs() - self.rocof_lim)
    }

    /// |global max| − lim.
    pub fn global_margin(&self, x: &[f64]) -> Option<f64> {
        self.global(x).map(|g| g.magnitude() - self.rocof_lim)
    }

    /// Horizon long enough for dense-grid checks anywhere in the box.
    pub fn horizon(&self) -> f64 {
        let mut pts = self.bounds.corners();
        pts.push(self.bounds.center());
        pts.iter()
            .filter_map(|x| self.decomposition(x))
            .map(|md| check_horizon(&md, &self.max_options))
            .fold(10.0, f64::max)
    }

    fn box2(&self, a: usize, b: usize) -> Box2 {
        Box2 {
            lo: [self.bounds.lo[a], self.bounds.lo[b]],
            hi: [self.bounds.hi[a], self.bounds.hi[b]],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldTrace {
    pub points: Vec<Vec<f64>>,
    /// How the trace ended at its first and last point.
    pub ends: [Termination; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryTrace {
    pub anchor: Anchor,
    pub points: Vec<Vec<f64>>,
    pub terminated_by: [Termination; 2],
}

fn lift2(t: kernel::Trace2, embed: impl Fn(Point2) -> Vec<f64>) -> FieldTrace {
    FieldTrace {
        points: t.points.into_iter().map(embed).collect(),
        ends: t.ends,
    }
}

/// Traces up to `max_pieces` pieces of the zero set of a planar field.
pub fn trace_field_2d(
    f: &FieldN,
    bounds: &Bounds,
    p: &KernelParams,
    max_pieces: usize,
) -> Result<Vec<FieldTrace>> {
    if bounds.dim() != 2 || !bounds.is_nondegenerate() {
        return Err(Error::InvalidArgument(
            "planar tracing needs a nondegenerate 2-D box".into(),
        ));
    }
    let bx = Box2 {
        lo: [bounds.lo[0], bounds.lo[1]],
        hi: [bounds.hi[0], bounds.hi[1]],
    };
    let f2 = |q: Point2| f(&q);
    let pieces = kernel::trace_pieces(&f2, &bx, p, max_pieces)?;
    Ok(pieces
        .into_iter()
        .map(|t| lift2(t, |q| q.to_vec()))
        .collect())
}

/// Surface of a field over three coordinates (a, b, c): planar traces in
/// (a, c) on slices of b, then cross traces in (a, b) with c fixed from
/// points along each slice trace.
pub fn trace_field_3d(
    f: &FieldN,
    bounds: &Bounds,
    p: &KernelParams,
    slices: usize,
    max_pieces: usize,
) -> Result<Vec<FieldTrace>> {
    if bounds.dim() != 3 {
        return Err(Error::InvalidArgument(
            "surface tracing needs a 3-D box".into(),
        ));
    }
    let (lo, hi) = (&bounds.lo, &bounds.hi);
    let bs: Vec<f64> = if hi[1] == lo[1] || slices <= 1 {
        vec![0.5 * (lo[1] + hi[1])]
    } else {
        (0..slices)
            .map(|k| lo[1] + (hi[1] - lo[1]) * k as f64 / (slices - 1) as f64)
            .collect()
    };
    let half = if bs.len() > 1 {
        0.5 * (bs[1] - bs[0])
    } else {
        0.0
    };
    let plane_ac = Box2 {
        lo: [lo[0], lo[2]],
        hi: [hi[0], hi[2]],
    };
    let per_slice: Vec<Vec<FieldTrace>> = bs
        .par_iter()
        .map(|&b| {
            let f2 = |q: Point2| f(&[q[0], b, q[1]]);
            let pieces = match kernel::trace_pieces(&f2, &plane_ac, p, max_pieces) {
                Ok(v) => v,
                Err(e) => {
                    log::debug!("slice b = {b}: {e}");
                    return Vec::new();
                }
            };
            let mut out: Vec<FieldTrace> = Vec::new();
            for t in pieces {
                let slice = lift2(t, |q| vec![q[0], b, q[1]]);
                if half > 0.0 {
                    let stride = (slice.points.len() / 6).max(1);
                    for x in slice.points.iter().step_by(stride) {
                        let c = x[2];
                        let g = |q: Point2| f(&[q[0], q[1], c]);
                        let bx = Box2 {
                            lo: [lo[0], (b - half).max(lo[1])],
                            hi: [hi[0], (b + half).min(hi[1])],
                        };
                        if let Some(s2) = kernel::seed_near(&g, [x[0], x[1]], p.step, p.eps_s) {
                            let cross = kernel::trace_from(&g, &bx, p, [[x[0], x[1]], s2]);
                            out.push(lift2(cross, |q| vec![q[0], q[1], c]));
                        }
                    }
                }
                out.insert(0, slice);
            }
            out
        })
        .collect();
    let all: Vec<FieldTrace> = per_slice.into_iter().flatten().collect();
    if all.is_empty() {
        return Err(Error::NoBoundary("no slice produced a trace".into()));
    }
    Ok(all)
}

/// Two boundary points of one anchor, at least one step apart.
pub fn seed_boundary(ctx: &SearchContext, anchor: Anchor) -> Result<[Vec<f64>; 2]> {
    let p = ctx.params();
    match ctx.dim() {
        2 => {
            let f2 = |q: Point2| ctx.anchor_margin(anchor, &q);
            let [a, b] = kernel::seed_pair(&f2, &ctx.box2(0, 1), &p, &[], 0.0)?;
            Ok([a.to_vec(), b.to_vec()])
        }
        _ => {
            let mid = ctx.bounds.center()[1];
            let f2 = |q: Point2| ctx.anchor_margin(anchor, &[q[0], mid, q[1]]);
            let [a, b] = kernel::seed_pair(&f2, &ctx.box2(0, 2), &p, &[], 0.0)?;
            Ok([vec![a[0], mid, a[1]], vec![b[0], mid, b[1]]])
        }
    }
}

fn tag(anchor: Anchor, t: FieldTrace) -> BoundaryTrace {
    BoundaryTrace {
        anchor,
        points: t.points,
        terminated_by: t.ends,
    }
}

/// Every piece of one anchor's boundary inside a planar box.
pub fn trace_2d(ctx: &SearchContext, anchor: Anchor) -> Result<Vec<BoundaryTrace>> {
    if ctx.dim() != 2 {
        return Err(Error::InvalidArgument(
            "trace_2d needs 2 adjustable regions".into(),
        ));
    }
    let f = |x: &[f64]| ctx.anchor_margin(anchor, x);
    Ok(
        trace_field_2d(&f, &ctx.bounds, &ctx.params(), DEFAULT_PIECES)?
            .into_iter()
            .map(|t| tag(anchor, t))
            .collect(),
    )
}

/// Slice-wise traces of each anchor over three adjustable regions; anchors
/// without a boundary are skipped.
pub fn trace_3d(
    ctx: &SearchContext,
    anchors: &[Anchor],
    slices: usize,
) -> Result<Vec<BoundaryTrace>> {
    if ctx.dim() != 3 {
        return Err(Error::InvalidArgument(
            "trace_3d needs 3 adjustable regions".into(),
        ));
    }
    let p = ctx.params();
    let out: Vec<BoundaryTrace> = anchors
        .par_iter()
        .flat_map(|&anchor| {
            let f = |x: &[f64]| ctx.anchor_margin(anchor, x);
            match trace_field_3d(&f, &ctx.bounds, &p, slices, DEFAULT_PIECES) {
                Ok(v) => v.into_iter().map(|t| tag(anchor, t)).collect(),
                Err(e) => {
                    log::debug!("anchor {anchor}: {e}");
                    Vec::new()
                }
            }
        })
        .collect();
    Ok(out)
}

/// Global-max winners on a uniform grid over the box.
pub fn candidate_anchors(ctx: &SearchContext, grid: usize) -> Vec<Anchor> {
    let g = grid.max(2);
    let d = ctx.dim();
    let total = g.pow(d as u32);
    let winners: BTreeSet<Anchor> = (0..total)
        .into_par_iter()
        .filter_map(|mut k| {
            let mut x = Vec::with_capacity(d);
            for j in 0..d {
                let i = k % g;
                k /= g;
                let (l, h) = (ctx.bounds.lo[j], ctx.bounds.hi[j]);
                x.push(l + (h - l) * i as f64 / (g - 1) as f64);
            }
            ctx.global(&x).map(|gm| gm.winner)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect();
    winners.into_iter().collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub h: Vec<f64>,
    /// Anchor of the trace the point came from.
    pub binding: Anchor,
    /// Global maximum at the point, per-unit/s.
    pub value: f64,
    pub trace: usize,
}

/// A run of consecutive retained points of one trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub anchor: Anchor,
    pub trace: usize,
    /// Range into `FullBoundary::points`.
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FullBoundary {
    pub traces: Vec<BoundaryTrace>,
    pub points: Vec<BoundaryPoint>,
    pub arcs: Vec<Arc>,
}

impl FullBoundary {
    /// Point lists of the retained arcs.
    pub fn arcs(&self) -> Vec<Vec<Vec<f64>>> {
        self.arcs
            .iter()
            .map(|a| {
                self.points[a.start..a.end]
                    .iter()
                    .map(|p| p.h.clone())
                    .collect()
            })
            .collect()
    }

    pub fn coordinates(&self) -> Vec<Vec<f64>> {
        self.points.iter().map(|p| p.h.clone()).collect()
    }

    /// Anchors binding somewhere on the boundary.
    pub fn binding_anchors(&self) -> Vec<Anchor> {
        let s: BTreeSet<Anchor> = self.arcs.iter().map(|a| a.anchor).collect();
        s.into_iter().collect()
    }
}

/// Keeps the traced points where `global` (|global| − lim and the value)
/// is within `eps_s` of zero.
pub fn assemble_with(
    traces: Vec<BoundaryTrace>,
    eps_s: f64,
    global: &(dyn Fn(&[f64]) -> Option<(f64, f64)> + Sync),
) -> Result<FullBoundary> {
    if traces.iter().all(|t| t.points.is_empty()) {
        return Err(Error::NoBoundary("no traced points to assemble".into()));
    }
    let verdicts: Vec<Vec<Option<f64>>> = traces
        .par_iter()
        .map(|t| {
            t.points
                .iter()
                .map(|x| match global(x) {
                    Some((m, v)) if m.abs() <= eps_s * (1.0 + 1e-9) => Some(v),
                    _ => None,
                })
                .collect()
        })
        .collect();
    let mut points = Vec::new();
    let mut arcs = Vec::new();
    for (ti, (t, vs)) in traces.iter().zip(&verdicts).enumerate() {
        let mut open: Option<usize> = None;
        for (x, v) in t.points.iter().zip(vs) {
            match v {
                Some(value) => {
                    if open.is_none() {
                        open = Some(points.len());
                    }
                    points.push(BoundaryPoint {
                        h: x.clone(),
                        binding: t.anchor,
                        value: *value,
                        trace: ti,
                    });
                }
                None => {
                    if let Some(s) = open.take() {
                        arcs.push(Arc {
                            anchor: t.anchor,
                            trace: ti,
                            start: s,
                            end: points.len(),
                        });
                    }
                }
            }
        }
        if let Some(s) = open {
            arcs.push(Arc {
                anchor: t.anchor,
                trace: ti,
                start: s,
                end: points.len(),
            });
        }
    }
    if points.is_empty() {
        return Err(Error::NoBoundary(
            "every traced point is dominated by another anchor".into(),
        ));
    }
    Ok(FullBoundary {
        traces,
        points,
        arcs,
    })
}

pub fn assemble_full(traces: Vec<BoundaryTrace>, ctx: &SearchContext) -> Result<FullBoundary> {
    let g = |x: &[f64]| {
        ctx.global(x)
            .map(|g| (g.magnitude() - ctx.rocof_lim, g.value))
    };
    assemble_with(traces, ctx.eps_s, &g)
}

/// Candidate anchors, their traces and the assembled boundary.
pub fn trace_full(ctx: &SearchContext, grid: usize) -> Result<FullBoundary> {
    let anchors = candidate_anchors(ctx, grid);
    log::info!(
        "candidate anchors: {}",
        anchors
            .iter()
            .map(|a| a.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    );
    let traces = match ctx.dim() {
        2 => anchors
            .par_iter()
            .map(|&a| match trace_2d(ctx, a) {
                Ok(t) => t,
                Err(e) => {
                    log::debug!("anchor {a}: {e}");
                    Vec::new()
                }
            })
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect(),
        _ => trace_3d(ctx, &anchors, DEFAULT_SLICES)?,
    };
    assemble_full(traces, ctx)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn nearest(p: &[f64], set: &[Vec<f64>]) -> f64 {
    set.iter().map(|q| dist(p, q)).fold(f64::INFINITY, f64::min)
}

/// Mean distance from reference points to the nearest candidate point,
/// as a percentage of the box diagonal.
pub fn boundary_error(
    candidate: &[Vec<f64>],
    reference: &[Vec<f64>],
    bounds: &Bounds,
) -> Result<f64> {
    if candidate.is_empty() || reference.is_empty() {
        return Err(Error::InvalidArgument(
            "boundary_error needs two nonempty point sets".into(),
        ));
    }
    let d: Vec<f64> = reference
        .par_iter()
        .map(|r| nearest(r, candidate))
        .collect();
    let sum: f64 = d.iter().sum();
    Ok(100.0 * sum / reference.len() as f64 / bounds.diagonal())
}

/// Symmetric Hausdorff distance between two point sets.
pub fn hausdorff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let one = |x: &[Vec<f64>], y: &[Vec<f64>]| x.iter().map(|p| nearest(p, y)).fold(0.0, f64::max);
    one(a, b).max(one(b, a))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryRow {
    pub h: Vec<f64>,
    pub anchor: Option<Anchor>,
    /// Hz/s.
    pub rocof: Option<f64>,
}

/// `H_<i>,H_<j>[,H_<k>],component_m,swing_l,rocof_value`, region numbers
/// 1-based; empty cells where a field does not apply.
pub fn boundary_csv(coords: &[usize], rows: &[BoundaryRow]) -> String {
    let mut s: String = coords.iter().map(|c| format!("H_{},", c + 1)).collect();
    s.push_str("component_m,swing_l,rocof_value\n");
    for r in rows {
        for v in &r.h {
            s.push_str(&format!("{v},"));
        }
        match r.anchor {
            Some(a) => {
                let (m, l) = a.indices();
                s.push_str(&format!("{m},{l},"));
            }
            None => s.push_str(",,"),
        }
        if let Some(v) = r.rocof {
            s.push_str(&format!("{v}"));
        }
        s.push('\n');
    }
    s
}

pub fn parse_boundary_csv(text: &str) -> Result<(Vec<usize>, Vec<BoundaryRow>)> {
    let bad = |line: usize, msg: String| Error::Parse {
        line,
        column: 0,
        msg,
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad(1, "empty file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 5 || cols[cols.len() - 3..] != ["component_m", "swing_l", "rocof_value"] {
        return Err(bad(1, format!("unexpected header `{header}`")));
    }
    let d = cols.len() - 3;
    let coords = cols[..d]
        .iter()
        .map(|c| {
            c.strip_prefix("H_")
                .and_then(|n| n.parse::<usize>().ok())
                .filter(|&n| n >= 1)
                .map(|n| n - 1)
                .ok_or_else(|| bad(1, format!("bad column `{c}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ln = i + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != d + 3 {
            return Err(bad(ln, format!("expected {} fields", d + 3)));
        }
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| bad(ln, format!("`{s}`: {e}")))
        };
        let h = f[..d].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
        let anchor = if f[d].is_empty() {
            None
        } else {
            let m = f[d].parse::<usize>().map_err(|e| bad(ln, e.to_string()))?;
            let l = f[d + 1]
                .parse::<usize>()
                .map_err(|e| bad(ln, e.to_string()))?;
            Some(Anchor::from_indices(m, l))
        };
        let rocof = if f[d + 2].is_empty() {
            None
        } else {
            Some(num(f[d + 2])?)
        };
        rows.push(BoundaryRow { h, anchor, rocof });
    }
    Ok((coords, rows))
}
