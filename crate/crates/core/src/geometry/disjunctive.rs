use serde::{Deserialize, Serialize};

use super::{Bounds, ConvexCell};
use crate::error::{Error, Result};

/// Union of convex cells as a big-M disjunction:
/// a_k·H ≤ b_k + M_k (1 − z_i), Σ z_i = 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisjunctiveConstraint {
    pub cells: Vec<ConvexCell>,
    /// big_m[i][k] for halfspace k of cell i.
    pub big_m: Vec<Vec<f64>>,
}

/// Tightest box-valid big-M: max over box corners of a·H − b, at least 0.
pub fn to_disjunctive(cells: &[ConvexCell], bx: &Bounds) -> Result<DisjunctiveConstraint> {
    if cells.is_empty() {
        return Err(Error::Geometry("no cells to disjoin".into()));
    }
    let corners = bx.corners();
    let big_m = cells
        .iter()
        .map(|c| {
            c.halfspaces
                .iter()
                .map(|h| corners.iter().map(|x| -h.slack(x)).fold(0.0, f64::max))
                .collect()
        })
        .collect();
    Ok(DisjunctiveConstraint {
        cells: cells.to_vec(),
        big_m,
    })
}

impl DisjunctiveConstraint {
    /// Whether all relaxed rows hold under the assignment `z`.
    pub fn feasible_with(&self, p: &[f64], z: &[bool], tol: f64) -> bool {
        if z.len() != self.cells.len() || z.iter().filter(|&&b| b).count() != 1 {
            return false;
        }
        self.cells
            .iter()
            .zip(&self.big_m)
            .zip(z)
            .all(|((c, ms), &zi)| {
                let relax = if zi { 0.0 } else { 1.0 };
                c.halfspaces
                    .iter()
                    .zip(ms)
                    .all(|(h, m)| h.slack(p) + m * relax >= -tol)
            })
    }

    /// Some binary assignment satisfies the rows (all 2^k are tried).
    pub fn any_feasible(&self, p: &[f64], tol: f64) -> bool {
        let k = self.cells.len();
        if k < 16 {
            (0u32..1 << k).any(|mask| {
                let z: Vec<bool> = (0..k).map(|i| mask >> i & 1 == 1).collect();
                self.feasible_with(p, &z, tol)
            })
        } else {
            // only unit vectors satisfy Σz = 1
            (0..k).any(|i| {
                let z: Vec<bool> = (0..k).map(|j| j == i).collect();
                self.feasible_with(p, &z, tol)
            })
        }
    }

    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        self.cells.iter().any(|c| c.contains(p, tol))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        })
    }

    /// `cell,vertex,x,y` rows for plotting.
    pub fn vertices_csv(&self) -> String {
        let mut s = String::from("cell,vertex,x,y\n");
        for (i, c) in self.cells.iter().enumerate() {
            for (k, v) in c.vertices.iter().enumerate() {
                s.push_str(&format!("{},{},{},{}\n", i + 1, k + 1, v[0], v[1]));
            }
        }
        s
    }
}
