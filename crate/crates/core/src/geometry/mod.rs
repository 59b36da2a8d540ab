//! Enclosed security region as a polygon, its convex decomposition, the
//! big-M disjunction over the cells, and the exact membership test.

mod decompose;
mod disjunctive;
mod polygon;

pub use decompose::convex_decompose;
pub use disjunctive::{to_disjunctive, DisjunctiveConstraint};
pub use polygon::{
    build_polyhedron, close_chain, order_chain, polygon_area, simplify_chain, Polyhedron,
};

use serde::{Deserialize, Serialize};

use crate::boundary::{FullBoundary, SearchContext};
use crate::error::{Error, Result};
use crate::rocof::{system_global_max, MaxOptions};
use crate::system::MultiRegionSystem;

pub type Point2 = [f64; 2];

/// Axis-aligned box over the adjustable inertia coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidArgument(
                "box bounds must have equal, non-zero length".into(),
            ));
        }
        if lo
            .iter()
            .zip(&hi)
            .any(|(l, h)| !(l <= h) || !l.is_finite() || !h.is_finite())
        {
            return Err(Error::InvalidArgument("box has lo > hi".into()));
        }
        Ok(Bounds { lo, hi })
    }

    /// Box of the given regions from their inertia ranges.
    pub fn from_system(sys: &MultiRegionSystem, regions: &[usize]) -> Result<Self> {
        Self::new(
            regions.iter().map(|&r| sys.regions[r].inertia_lo).collect(),
            regions.iter().map(|&r| sys.regions[r].inertia_up).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn diagonal(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| (h - l).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        p.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(x, (l, h))| *x >= l - tol && *x <= h + tol)
    }

    /// Every coordinate has a positive width.
    pub fn is_nondegenerate(&self) -> bool {
        self.lo.iter().zip(&self.hi).all(|(l, h)| l < h)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| 0.5 * (l + h))
            .collect()
    }

    pub fn corners(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        (0..1usize << d)
            .map(|mask| {
                (0..d)
                    .map(|k| {
                        if mask >> k & 1 == 1 {
                            self.hi[k]
                        } else {
                            self.lo[k]
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub a: Vec<f64>,
    pub b: f64,
}

impl Halfspace {
    pub fn slack(&self, p: &[f64]) -> f64 {
        self.b - self.a.iter().zip(p).map(|(a, x)| a * x).sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexCell {
    pub halfspaces: Vec<Halfspace>,
    /// Counter-clockwise.
    pub vertices: Vec<Vec<f64>>,
}

impl ConvexCell {
    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        self.halfspaces.iter().all(|h| h.slack(p) >= -tol)
    }

    pub fn area(&self) -> f64 {
        let pts: Vec<Point2> = self.vertices.iter().map(|v| [v[0], v[1]]).collect();
        polygon_area(&pts)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Secure,
    InsecureRocof,
    InsecureRange,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub verdict: Verdict,
    /// Largest |max RoCoF| over the assessed pairs, per-unit/s.
    pub worst_rocof: f64,
    pub worst_pair: Option<(usize, usize)>,
}

/// Exact membership: inertia range first, then the analytic global maximum
/// of every (observed, disturbed) pair against the limit.
pub fn assess(
    sys: &MultiRegionSystem,
    h: &[f64],
    rocof_lim: f64,
    pairs: &[(usize, usize)],
    opts: &MaxOptions,
) -> Result<Assessment> {
    if h.len() != sys.n() {
        return Err(Error::InvalidArgument(format!(
            "inertia vector has {} entries for {} regions",
            h.len(),
            sys.n()
        )));
    }
    let out_of_range = sys
        .regions
        .iter()
        .zip(h)
        .any(|(r, &x)| x < r.inertia_lo || x > r.inertia_up);
    if out_of_range {
        return Ok(Assessment {
            verdict: Verdict::InsecureRange,
            worst_rocof: f64::NAN,
            worst_pair: None,
        });
    }
    let s = sys.with_inertia(h)?;
    let mut worst = (0.0, None);
    for &(n1, n2) in pairs {
        let g = system_global_max(&s, n1, n2, opts)?;
        if worst.1.is_none() || g.magnitude() > worst.0 {
            worst = (g.magnitude(), Some((n1, n2)));
        }
    }
    Ok(Assessment {
        verdict: if worst.0 <= rocof_lim {
            Verdict::Secure
        } else {
            Verdict::InsecureRocof
        },
        worst_rocof: worst.0,
        worst_pair: worst.1,
    })
}

/// Secure polygon of a planar full boundary and its convex cells. `tol`
/// (seconds of inertia) thins the boundary polyline before closure; 0 keeps
/// every traced point.
pub fn region_cells(
    ctx: &SearchContext,
    fb: &FullBoundary,
    tol: f64,
) -> Result<(Polyhedron, Vec<ConvexCell>)> {
    if ctx.dim() != 2 {
        return Err(Error::Geometry(
            "region decomposition is planar only".into(),
        ));
    }
    let secure = |p: Point2| ctx.global_margin(&p).is_some_and(|m| m <= 0.0);
    let poly = build_polyhedron(fb, &ctx.bounds, &secure, tol)?;
    let cells = convex_decompose(&poly)?;
    Ok((poly, cells))
}

/// The part of a planar box where `h` holds, as one convex cell.
pub fn clip_box(bx: &Bounds, h: &Halfspace) -> Result<ConvexCell> {
    if bx.dim() != 2 || h.a.len() != 2 {
        return Err(Error::Geometry("box clipping is planar only".into()));
    }
    let (x0, y0, x1, y1) = (bx.lo[0], bx.lo[1], bx.hi[0], bx.hi[1]);
    let ring = [[x0, y0], [x1, y0], [x1, y1], [x0, y1]];
    let mut out: Vec<Point2> = Vec::new();
    for k in 0..4 {
        let p = ring[k];
        let q = ring[(k + 1) % 4];
        let sp = h.slack(&p);
        let sq = h.slack(&q);
        if sp >= 0.0 {
            out.push(p);
        }
        if (sp >= 0.0) != (sq >= 0.0) {
            let t = sp / (sp - sq);
            out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    let poly = Polyhedron::from_vertices(out)
        .map_err(|_| Error::Geometry("halfspace leaves no area inside the box".into()))?;
    let mut cells = convex_decompose(&poly)?;
    Ok(cells.remove(0))
}

/// Every (observed, disturbed) pair with a disturbance in `disturbed`.
pub fn all_pairs(sys: &MultiRegionSystem) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for n2 in sys.disturbed() {
        for n1 in 0..sys.n() {
            v.push((n1, n2));
        }
    }
    v
}
