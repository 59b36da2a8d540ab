//! RoCoF-secure commitment and inertia dispatch over a short horizon.

mod milp;
mod model;

pub use milp::{
    branch_and_bound, enumerate, BnbOptions, Milp, MilpSolution, MilpStatus, RowClass, VarId,
};
pub use model::{
    build_problem, Disjunction, DispatchOptions, DispatchProblem, GenKind, GenVars, Generator,
    PeriodSecurity, PeriodSpec,
};

use serde::{Deserialize, Serialize};

use crate::boundary::{coi_boundary, conservative_fit, trace_full, SearchContext};
use crate::error::{Error, Result};
use crate::geometry::{assess, region_cells, to_disjunctive, ConvexCell, Verdict};
use crate::modal::decompose;
use crate::rocof::{check_horizon, MaxOptions};
use crate::simulate::simulate_with;
use crate::system::{build_state_space, MultiRegionSystem};

/// Fewer boundary vertices mean fewer cells and selector binaries per period.
pub const DEFAULT_SIMPLIFY: f64 = 0.5;

/// Which secure set constrains the regional inertia.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SecurityMethod {
    Coi,
    Proposed,
    Conservative,
}

/// Boundary search settings shared by every period.
#[derive(Clone, Debug)]
pub struct SecuritySpec {
    pub method: SecurityMethod,
    pub observed: usize,
    pub disturbed: usize,
    /// Per-unit/s.
    pub rocof_lim: f64,
    pub step: f64,
    pub eps_s: f64,
    pub seed: u64,
    pub max_options: MaxOptions,
    /// Grid for candidate anchors and the conservative fit.
    pub grid: usize,
    /// Polyline thinning before decomposition, seconds of inertia.
    pub simplify: f64,
}

impl SecuritySpec {
    pub fn new(method: SecurityMethod, observed: usize, disturbed: usize, rocof_lim: f64) -> Self {
        SecuritySpec {
            method,
            observed,
            disturbed,
            rocof_lim,
            step: 1.0,
            eps_s: 1e-3 * rocof_lim,
            seed: crate::boundary::DEFAULT_SEED,
            max_options: MaxOptions::default(),
            grid: 13,
            simplify: DEFAULT_SIMPLIFY,
        }
    }

    pub fn context(&self, sys: &MultiRegionSystem) -> Result<SearchContext> {
        let mut ctx =
            SearchContext::new(sys.clone(), self.observed, self.disturbed, self.rocof_lim)?;
        ctx.set_step(self.step)?;
        ctx.set_eps_s(self.eps_s)?;
        ctx.seed = self.seed;
        ctx.max_options = self.max_options;
        Ok(ctx)
    }
}

/// Disjunctive constraint over the adjustable regions of `sys`.
pub fn security_constraint(sys: &MultiRegionSystem, spec: &SecuritySpec) -> Result<PeriodSecurity> {
    let ctx = spec.context(sys)?;
    if ctx.dim() != 2 {
        return Err(Error::InvalidArgument(
            "security cells need exactly 2 adjustable regions".into(),
        ));
    }
    let cells: Vec<ConvexCell> = match spec.method {
        SecurityMethod::Coi => {
            vec![coi_boundary(sys, &ctx.coords, spec.rocof_lim)?.secure_cell(&ctx.bounds)?]
        }
        SecurityMethod::Conservative => {
            let fit = conservative_fit(&ctx, spec.grid)?;
            vec![fit.boundary(spec.rocof_lim).secure_cell(&ctx.bounds)?]
        }
        SecurityMethod::Proposed => {
            let fb = trace_full(&ctx, spec.grid)?;
            region_cells(&ctx, &fb, spec.simplify)?.1
        }
    };
    Ok(PeriodSecurity {
        regions: ctx.coords.clone(),
        constraint: to_disjunctive(&cells, &ctx.bounds)?,
    })
}

/// One constraint per period; periods sharing tie lines share the result.
pub fn period_security(
    base: &MultiRegionSystem,
    periods: &[PeriodSpec],
    spec: &SecuritySpec,
) -> Result<Vec<Option<PeriodSecurity>>> {
    let mut done: Vec<(Option<Vec<crate::system::TieLineEntry>>, PeriodSecurity)> = Vec::new();
    let mut out = Vec::with_capacity(periods.len());
    for p in periods {
        if let Some((_, s)) = done.iter().find(|(t, _)| *t == p.tie_lines) {
            out.push(Some(s.clone()));
            continue;
        }
        let s = security_constraint(&p.system(base)?, spec)?;
        done.push((p.tie_lines.clone(), s.clone()));
        out.push(Some(s));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenPeriod {
    pub generator: String,
    pub p: f64,
    pub u: bool,
    pub start: bool,
    pub stop: bool,
    /// Virtual inertia setting, s.
    pub h_vi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodSchedule {
    pub period: usize,
    pub generators: Vec<GenPeriod>,
    /// Regional inertia H_{n,t}, s.
    pub inertia: Vec<f64>,
    /// Selected security cell.
    pub cell: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub periods: Vec<PeriodSchedule>,
    /// $.
    pub objective: f64,
    pub bound: f64,
    pub status: MilpStatus,
    pub nodes: usize,
}

impl Schedule {
    pub fn gap(&self) -> f64 {
        (self.objective - self.bound).max(0.0)
    }

    /// `period,generator,P,u,H_vi`, periods 1-based.
    pub fn generators_csv(&self) -> String {
        let mut s = String::from("period,generator,P,u,H_vi\n");
        for p in &self.periods {
            for g in &p.generators {
                s.push_str(&format!(
                    "{},{},{},{},{}\n",
                    p.period + 1,
                    g.generator,
                    g.p,
                    g.u as u8,
                    g.h_vi
                ));
            }
        }
        s
    }

    /// `period,region,H,rocof_sim`; rocof_sim in Hz/s from the report, empty
    /// without one.
    pub fn regions_csv(&self, report: Option<&ValidationReport>, nominal_freq: f64) -> String {
        let mut s = String::from("period,region,H,rocof_sim\n");
        for (t, p) in self.periods.iter().enumerate() {
            for (n, h) in p.inertia.iter().enumerate() {
                let r = report
                    .and_then(|r| r.periods.get(t))
                    .and_then(|pr| pr.region_sim_max.get(n))
                    .map(|v| format!("{}", v * nominal_freq))
                    .unwrap_or_default();
                s.push_str(&format!("{},{},{},{}\n", p.period + 1, n + 1, h, r));
            }
        }
        s
    }
}

fn schedule_from(prob: &DispatchProblem, sol: &MilpSolution) -> Schedule {
    let x = &sol.x;
    let on = |v: VarId| x[v] > 0.5;
    let mut periods = Vec::with_capacity(prob.periods.len());
    for t in 0..prob.periods.len() {
        let generators = prob
            .generators
            .iter()
            .enumerate()
            .map(|(gi, g)| {
                let v = &prob.gen_vars[t][gi];
                let now = on(v.u);
                let before = if t == 0 {
                    g.initial_on
                } else {
                    on(prob.gen_vars[t - 1][gi].u)
                };
                GenPeriod {
                    generator: g.id.clone(),
                    p: x[v.p],
                    u: now,
                    start: now && !before,
                    stop: before && !now,
                    h_vi: v.hvi.map_or(0.0, |h| x[h]),
                }
            })
            .collect();
        periods.push(PeriodSchedule {
            period: t,
            generators,
            inertia: prob.region_inertia[t].iter().map(|&h| x[h]).collect(),
            cell: prob.cell_vars[t].iter().position(|&z| on(z)),
        });
    }
    Schedule {
        periods,
        objective: sol.objective,
        bound: sol.bound,
        status: sol.status,
        nodes: sol.nodes,
    }
}

/// Branch-and-bound to the configured absolute gap.
pub fn solve(prob: &DispatchProblem) -> Result<Schedule> {
    let opts = BnbOptions {
        abs_gap: prob.options.abs_gap,
        node_limit: prob.options.node_limit,
    };
    let sol = branch_and_bound(&prob.milp, &opts)?;
    if sol.status == MilpStatus::NodeLimit {
        log::warn!("node limit reached; incumbent gap ${:.3}", sol.gap());
    }
    Ok(schedule_from(prob, &sol))
}

/// Exhaustive enumeration of the binaries; `None` when infeasible.
pub fn solve_exhaustive(prob: &DispatchProblem) -> Result<Option<Schedule>> {
    Ok(enumerate(&prob.milp)?.map(|s| schedule_from(prob, &s)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodReport {
    pub period: usize,
    pub inertia: Vec<f64>,
    pub verdict: Verdict,
    /// Worst analytic |max RoCoF| over the pairs, per-unit/s.
    pub analytic_max: f64,
    /// Worst dense-grid simulated |RoCoF| over the pairs, per-unit/s.
    pub simulated_max: f64,
    /// Simulated |RoCoF| per observed region, worst over the disturbances.
    pub region_sim_max: Vec<f64>,
    /// Simulated maximum above lim·(1 + band).
    pub violation: bool,
    /// Simulated maximum above lim but inside the band.
    pub small_overshoot: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub rocof_lim: f64,
    pub band: f64,
    pub periods: Vec<PeriodReport>,
}

impl ValidationReport {
    pub fn violations(&self) -> usize {
        self.periods.iter().filter(|p| p.violation).count()
    }
}

pub const VALIDATION_BAND: f64 = 0.02;

/// Re-checks each period's regional inertia with `assess` and the RK4
/// oracle over the given (observed, disturbed) pairs.
pub fn validate_schedule(
    sched: &Schedule,
    prob: &DispatchProblem,
    rocof_lim: f64,
    pairs: &[(usize, usize)],
    opts: &MaxOptions,
    dt: f64,
) -> Result<ValidationReport> {
    let mut periods = Vec::with_capacity(sched.periods.len());
    for ps in &sched.periods {
        let spec = prob.periods.get(ps.period).ok_or_else(|| {
            Error::InvalidArgument(format!("period {} not in problem", ps.period))
        })?;
        let base = spec.system(&prob.system)?;
        let n = base.n();
        let sys = match base.with_inertia(&ps.inertia) {
            Ok(s) => s,
            Err(_) => {
                periods.push(PeriodReport {
                    period: ps.period,
                    inertia: ps.inertia.clone(),
                    verdict: Verdict::InsecureRocof,
                    analytic_max: f64::INFINITY,
                    simulated_max: f64::INFINITY,
                    region_sim_max: vec![f64::INFINITY; n],
                    violation: true,
                    small_overshoot: false,
                });
                continue;
            }
        };
        // ranges apply to the boundary search box, not to dispatch results
        let mut unbounded = sys.clone();
        for r in &mut unbounded.regions {
            r.inertia_lo = 0.0;
            r.inertia_up = f64::INFINITY;
        }
        let a = assess(&unbounded, &ps.inertia, rocof_lim, pairs, opts)?;
        let mut region_sim_max = vec![0.0f64; n];
        let mut sim_worst: f64 = 0.0;
        let mut disturbed: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        disturbed.sort_unstable();
        disturbed.dedup();
        for n2 in disturbed {
            let single = only_disturbance(&sys, n2);
            let t_end = pairs
                .iter()
                .filter(|p| p.1 == n2)
                .filter_map(|p| decompose(&single, p.0, n2).ok())
                .map(|md| check_horizon(&md, opts))
                .fold(10.0, f64::max);
            let ss = build_state_space(&single);
            let mut local = vec![0.0f64; n];
            simulate_with(&ss, t_end, dt, |_, _, r| {
                for (m, v) in local.iter_mut().zip(r) {
                    *m = m.max(v.abs());
                }
            })?;
            for &(n1, _) in pairs.iter().filter(|p| p.1 == n2) {
                sim_worst = sim_worst.max(local[n1]);
            }
            for (m, v) in region_sim_max.iter_mut().zip(&local) {
                *m = m.max(*v);
            }
        }
        let limit = rocof_lim * (1.0 + VALIDATION_BAND);
        periods.push(PeriodReport {
            period: ps.period,
            inertia: ps.inertia.clone(),
            verdict: a.verdict,
            analytic_max: a.worst_rocof,
            simulated_max: sim_worst,
            region_sim_max,
            violation: sim_worst > limit,
            small_overshoot: sim_worst > rocof_lim && sim_worst <= limit,
        });
    }
    Ok(ValidationReport {
        rocof_lim,
        band: VALIDATION_BAND,
        periods,
    })
}

fn only_disturbance(sys: &MultiRegionSystem, n2: usize) -> MultiRegionSystem {
    let mut s = sys.clone();
    for r in &mut s.regions {
        if r.id != n2 {
            r.disturbance = 0.0;
        }
    }
    s
}
