//! A small MILP container with a best-bound branch-and-bound over LP
//! relaxations solved by `microlp`, warm-started from the parent node.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use microlp::{ComparisonOp, OptimizationDirection, Problem, Solution, SolveOutcome};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type VarId = usize;

const INT_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowClass {
    Balance,
    Capacity,
    Logic,
    MinUpDown,
    Ramp,
    Inertia,
    Security,
}

impl RowClass {
    pub const ALL: [RowClass; 7] = [
        RowClass::Balance,
        RowClass::Capacity,
        RowClass::Logic,
        RowClass::MinUpDown,
        RowClass::Ramp,
        RowClass::Inertia,
        RowClass::Security,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            RowClass::Balance => "balance",
            RowClass::Capacity => "capacity",
            RowClass::Logic => "commitment-logic",
            RowClass::MinUpDown => "min-up-down",
            RowClass::Ramp => "ramp",
            RowClass::Inertia => "inertia",
            RowClass::Security => "security",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Var {
    pub name: String,
    pub obj: f64,
    pub lo: f64,
    pub hi: f64,
    pub binary: bool,
}

#[derive(Clone, Debug)]
pub struct Row {
    pub class: RowClass,
    pub terms: Vec<(VarId, f64)>,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Debug, Default)]
pub struct Milp {
    pub vars: Vec<Var>,
    pub rows: Vec<Row>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpPoint {
    pub x: Vec<f64>,
    pub objective: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MilpStatus {
    Optimal,
    NodeLimit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MilpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Best proven lower bound.
    pub bound: f64,
    pub status: MilpStatus,
    pub nodes: usize,
}

impl MilpSolution {
    pub fn gap(&self) -> f64 {
        (self.objective - self.bound).max(0.0)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BnbOptions {
    pub abs_gap: f64,
    pub node_limit: usize,
}

impl Default for BnbOptions {
    fn default() -> Self {
        BnbOptions {
            abs_gap: 1.0,
            node_limit: 20_000,
        }
    }
}

impl Milp {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: &str, obj: f64, lo: f64, hi: f64) -> VarId {
        self.vars.push(Var {
            name: name.to_string(),
            obj,
            lo,
            hi,
            binary: false,
        });
        self.vars.len() - 1
    }

    pub fn add_binary(&mut self, name: &str, obj: f64) -> VarId {
        self.vars.push(Var {
            name: name.to_string(),
            obj,
            lo: 0.0,
            hi: 1.0,
            binary: true,
        });
        self.vars.len() - 1
    }

    pub fn add_row(&mut self, class: RowClass, terms: &[(VarId, f64)], lo: f64, hi: f64) {
        self.rows.push(Row {
            class,
            terms: terms.to_vec(),
            lo,
            hi,
        });
    }

    pub fn binaries(&self) -> Vec<VarId> {
        (0..self.vars.len())
            .filter(|&v| self.vars[v].binary)
            .collect()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.vars.iter().zip(x).map(|(v, x)| v.obj * x).sum()
    }

    pub fn classes(&self) -> Vec<RowClass> {
        let mut c: Vec<RowClass> = self.rows.iter().map(|r| r.class).collect();
        c.sort();
        c.dedup();
        c
    }

    /// Largest bound or row violation of `x`.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, &xv) in self.vars.iter().zip(x) {
            worst = worst.max(v.lo - xv).max(xv - v.hi);
        }
        for r in &self.rows {
            let s: f64 = r.terms.iter().map(|&(v, c)| c * x[v]).sum();
            worst = worst.max(r.lo - s).max(s - r.hi);
        }
        worst
    }

    /// LP relaxation with per-variable bound overrides; `Ok(None)` when
    /// infeasible.
    pub fn solve_lp(
        &self,
        bounds: &[(f64, f64)],
        skip: Option<RowClass>,
    ) -> Result<Option<LpPoint>> {
        let mut p = Problem::new(OptimizationDirection::Minimize);
        let ids: Vec<microlp::Variable> = self
            .vars
            .iter()
            .zip(bounds)
            .map(|(v, &(lo, hi))| p.add_var(v.obj, (lo, hi)))
            .collect();
        add_rows(&mut p, self, &ids, skip);
        match p.solve() {
            Ok(outcome) => match outcome.into_solution().ok() {
                Some(sol) => {
                    let x: Vec<f64> = ids.iter().map(|&v| sol.var_value(v)).collect();
                    Ok(Some(LpPoint {
                        objective: self.objective(&x),
                        x,
                    }))
                }
                None => Err(Error::Solver("LP solve interrupted".into())),
            },
            Err(microlp::Error::Infeasible) => Ok(None),
            Err(e) => Err(Error::Solver(e.to_string())),
        }
    }

    fn base_bounds(&self) -> Vec<(f64, f64)> {
        self.vars.iter().map(|v| (v.lo, v.hi)).collect()
    }

    /// Row classes whose removal makes the LP relaxation feasible.
    pub fn diagnose(&self) -> Vec<RowClass> {
        let b = self.base_bounds();
        self.classes()
            .into_iter()
            .filter(|&c| matches!(self.solve_lp(&b, Some(c)), Ok(Some(_))))
            .collect()
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Key(f64, usize);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    // min-heap on bound, then creation order
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| other.1.cmp(&self.1))
    }
}

struct Node {
    key: Key,
    fixes: Vec<(VarId, f64)>,
    lp: LpPoint,
    /// Warm LP state; dropped beyond [`WARM_NODES`] open nodes.
    sol: Option<Solution>,
}

impl PartialEq for Node {
    fn eq(&self, o: &Self) -> bool {
        self.key == o.key
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Node {
    fn cmp(&self, o: &Self) -> Ordering {
        self.key.cmp(&o.key)
    }
}

fn with_fixes(base: &[(f64, f64)], fixes: &[(VarId, f64)]) -> Vec<(f64, f64)> {
    let mut b = base.to_vec();
    for &(v, x) in fixes {
        b[v] = (x, x);
    }
    b
}

/// Most fractional binary, lowest index on ties.
fn branch_var(bins: &[VarId], x: &[f64]) -> Option<VarId> {
    let mut best: Option<(f64, VarId)> = None;
    for &v in bins {
        let f = x[v] - x[v].floor();
        if f > INT_TOL && f < 1.0 - INT_TOL {
            let d = (f - 0.5).abs();
            if best.map_or(true, |(bd, _)| d < bd - 1e-12) {
                best = Some((d, v));
            }
        }
    }
    best.map(|(_, v)| v)
}

/// Least fractional binary, lowest index on ties, with its rounded value.
fn dive_var(bins: &[VarId], x: &[f64]) -> Option<(VarId, f64)> {
    let mut best: Option<(f64, VarId)> = None;
    for &v in bins {
        let f = x[v] - x[v].floor();
        if f > INT_TOL && f < 1.0 - INT_TOL {
            let d = f.min(1.0 - f);
            if best.map_or(true, |(bd, _)| d < bd - 1e-12) {
                best = Some((d, v));
            }
        }
    }
    best.map(|(_, v)| (v, x[v].round()))
}

fn snap(milp: &Milp, mut p: LpPoint) -> LpPoint {
    for v in milp.binaries() {
        p.x[v] = p.x[v].round();
    }
    p.objective = milp.objective(&p.x);
    p
}

/// Relaxation built once; nodes re-solve it warm from their parent.
struct Relaxation<'a> {
    milp: &'a Milp,
    ids: Vec<microlp::Variable>,
}

impl<'a> Relaxation<'a> {
    fn root(milp: &'a Milp) -> Result<Option<(Self, Solution)>> {
        let mut p = Problem::new(OptimizationDirection::Minimize);
        let ids: Vec<microlp::Variable> = milp
            .vars
            .iter()
            .map(|v| p.add_var(v.obj, (v.lo, v.hi)))
            .collect();
        add_rows(&mut p, milp, &ids, None);
        let r = Relaxation { milp, ids };
        Ok(r.outcome(p.solve())?.map(|s| (r, s)))
    }

    fn outcome(
        &self,
        o: std::result::Result<SolveOutcome, microlp::Error>,
    ) -> Result<Option<Solution>> {
        match o {
            Ok(o) => o
                .into_solution()
                .map(Some)
                .map_err(|_| Error::Solver("LP solve interrupted".into())),
            Err(microlp::Error::Infeasible) => Ok(None),
            Err(e) => Err(Error::Solver(e.to_string())),
        }
    }

    /// Cold re-solve of a node whose warm state was dropped.
    fn resolve(&self, fixes: &[(VarId, f64)]) -> Result<Option<Solution>> {
        let mut p = Problem::new(OptimizationDirection::Minimize);
        let base: Vec<(f64, f64)> = self.milp.vars.iter().map(|v| (v.lo, v.hi)).collect();
        let ids: Vec<microlp::Variable> = self
            .milp
            .vars
            .iter()
            .zip(with_fixes(&base, fixes))
            .map(|(v, b)| p.add_var(v.obj, b))
            .collect();
        add_rows(&mut p, self.milp, &ids, None);
        self.outcome(p.solve())
    }

    fn fix(&self, sol: &Solution, v: VarId, val: f64) -> Result<Option<Solution>> {
        self.outcome(sol.clone().fix_var(self.ids[v], val))
    }

    fn point(&self, sol: &Solution) -> LpPoint {
        let x: Vec<f64> = self.ids.iter().map(|&v| sol.var_value(v)).collect();
        LpPoint {
            objective: self.milp.objective(&x),
            x,
        }
    }

    /// Fractional diving: fix the least fractional binary to its rounding,
    /// the other value when that is infeasible, until integral.
    fn dive(&self, bins: &[VarId], sol: &Solution, cutoff: f64) -> Result<Option<LpPoint>> {
        let mut sol = sol.clone();
        let mut lp = self.point(&sol);
        while let Some((v, val)) = dive_var(bins, &lp.x) {
            let next = match self.fix(&sol, v, val)? {
                Some(s) => Some(s),
                None => self.fix(&sol, v, 1.0 - val)?,
            };
            let Some(s) = next else {
                return Ok(None);
            };
            sol = s;
            lp = self.point(&sol);
            if lp.objective >= cutoff {
                return Ok(None);
            }
        }
        Ok(Some(snap(self.milp, lp)))
    }
}

fn add_rows(p: &mut Problem, milp: &Milp, ids: &[microlp::Variable], skip: Option<RowClass>) {
    for r in &milp.rows {
        if Some(r.class) == skip {
            continue;
        }
        let expr: Vec<(microlp::Variable, f64)> =
            r.terms.iter().map(|&(v, c)| (ids[v], c)).collect();
        if r.lo == r.hi {
            p.add_constraint(expr.as_slice(), ComparisonOp::Eq, r.lo);
        } else {
            if r.lo.is_finite() {
                p.add_constraint(expr.as_slice(), ComparisonOp::Ge, r.lo);
            }
            if r.hi.is_finite() {
                p.add_constraint(expr.as_slice(), ComparisonOp::Le, r.hi);
            }
        }
    }
}

/// Dives from the root and then every this many nodes.
const DIVE_EVERY: usize = 256;
/// Open nodes that keep their LP state; each costs a few hundred kB on
/// dispatch-sized problems.
const WARM_NODES: usize = 1024;

pub fn branch_and_bound(milp: &Milp, opts: &BnbOptions) -> Result<MilpSolution> {
    let bins = milp.binaries();
    let Some((relax, root_sol)) = Relaxation::root(milp)? else {
        return Err(Error::Infeasible {
            classes: milp
                .diagnose()
                .iter()
                .map(|c| c.name().to_string())
                .collect(),
        });
    };
    let root = relax.point(&root_sol);
    let mut incumbent: Option<LpPoint> = relax.dive(&bins, &root_sol, f64::INFINITY)?;
    let mut heap = BinaryHeap::new();
    let mut created = 0usize;
    heap.push(Node {
        key: Key(root.objective, created),
        fixes: Vec::new(),
        lp: root,
        sol: Some(root_sol),
    });
    let mut nodes = 0usize;
    let mut status = MilpStatus::Optimal;
    while let Some(node) = heap.pop() {
        let cutoff = incumbent
            .as_ref()
            .map_or(f64::INFINITY, |p| p.objective - opts.abs_gap);
        if node.key.0 >= cutoff {
            // best-bound order: everything left is pruned as well
            heap.clear();
            break;
        }
        if nodes >= opts.node_limit {
            heap.push(node);
            status = MilpStatus::NodeLimit;
            break;
        }
        nodes += 1;
        let Some(v) = branch_var(&bins, &node.lp.x) else {
            let cand = snap(milp, node.lp);
            if incumbent
                .as_ref()
                .map_or(true, |p| cand.objective < p.objective)
            {
                incumbent = Some(cand);
            }
            continue;
        };
        let sol = match node.sol {
            Some(s) => s,
            None => match relax.resolve(&node.fixes)? {
                Some(s) => s,
                None => continue,
            },
        };
        if nodes % DIVE_EVERY == 0 {
            if let Some(p) = relax.dive(&bins, &sol, cutoff)? {
                if incumbent
                    .as_ref()
                    .map_or(true, |q| p.objective < q.objective)
                {
                    incumbent = Some(p);
                }
            }
        }
        for val in [0.0, 1.0] {
            if let Some(child) = relax.fix(&sol, v, val)? {
                let lp = relax.point(&child);
                let cutoff = incumbent
                    .as_ref()
                    .map_or(f64::INFINITY, |p| p.objective - opts.abs_gap);
                if lp.objective < cutoff {
                    created += 1;
                    let mut fixes = node.fixes.clone();
                    fixes.push((v, val));
                    heap.push(Node {
                        key: Key(lp.objective, created),
                        fixes,
                        lp,
                        sol: (heap.len() < WARM_NODES).then_some(child),
                    });
                }
            }
        }
    }
    let Some(inc) = incumbent else {
        if status == MilpStatus::NodeLimit {
            return Err(Error::Solver(format!(
                "node limit {} reached without an integer solution",
                opts.node_limit
            )));
        }
        let mut classes = Vec::new();
        for c in milp.classes() {
            let mut relaxed = milp.clone();
            relaxed.rows.retain(|r| r.class != c);
            let small = BnbOptions {
                node_limit: opts.node_limit.min(2000),
                ..*opts
            };
            if branch_and_bound(&relaxed, &small).is_ok() {
                classes.push(c.name().to_string());
            }
        }
        classes.insert(0, "integrality".to_string());
        return Err(Error::Infeasible { classes });
    };
    let open_bound = heap.iter().map(|n| n.key.0).fold(f64::INFINITY, f64::min);
    let bound = open_bound.min(inc.objective);
    Ok(MilpSolution {
        objective: inc.objective,
        x: inc.x,
        bound,
        status,
        nodes,
    })
}

/// Exhaustive reference: every binary assignment with its continuous LP.
/// Exponential in the number of binaries; for small instances only.
pub fn enumerate(milp: &Milp) -> Result<Option<MilpSolution>> {
    let bins = milp.binaries();
    if bins.len() > 20 {
        return Err(Error::InvalidArgument(format!(
            "{} binaries is too many to enumerate",
            bins.len()
        )));
    }
    let base = milp.base_bounds();
    let mut best: Option<LpPoint> = None;
    for mask in 0u64..(1u64 << bins.len()) {
        let fixes: Vec<(VarId, f64)> = bins
            .iter()
            .enumerate()
            .map(|(k, &v)| (v, ((mask >> k) & 1) as f64))
            .collect();
        if let Some(p) = milp.solve_lp(&with_fixes(&base, &fixes), None)? {
            if best.as_ref().map_or(true, |b| p.objective < b.objective) {
                best = Some(p);
            }
        }
    }
    Ok(best.map(|p| MilpSolution {
        bound: p.objective,
        objective: p.objective,
        x: p.x,
        status: MilpStatus::Optimal,
        nodes: 1usize << bins.len(),
    }))
}
