//! Dispatch data: generators, horizon periods and the assembled MILP.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::DisjunctiveConstraint;
use crate::system::{MultiRegionSystem, TieLineEntry};

use super::milp::{Milp, RowClass, VarId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenKind {
    Sg,
    FastStartSg,
    ViIbr,
    Mixed,
}

impl GenKind {
    pub fn has_vi(&self) -> bool {
        matches!(self, GenKind::ViIbr | GenKind::Mixed)
    }
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub id: String,
    pub region: usize,
    pub kind: GenKind,
    pub p_min_pu: f64,
    pub p_max_pu: f64,
    /// $/p.u.²
    #[serde(default)]
    pub cost_quad: f64,
    /// $/p.u.
    #[serde(default)]
    pub cost_lin: f64,
    /// $ per committed period.
    #[serde(default)]
    pub cost_const: f64,
    #[serde(default)]
    pub cost_up: f64,
    #[serde(default)]
    pub cost_down: f64,
    /// $/s of virtual inertia.
    #[serde(default)]
    pub vi_cost: f64,
    /// Fixed inertia of synchronous kinds, seconds.
    #[serde(default)]
    pub inertia_s: f64,
    /// Upper end of the virtual inertia range, seconds.
    #[serde(default)]
    pub vi_max_s: f64,
    /// Synchronous inertia per unit of output for the mixed kind.
    #[serde(default)]
    pub sg_inertia_s_per_pu: f64,
    #[serde(default)]
    pub min_up_h: f64,
    #[serde(default)]
    pub min_down_h: f64,
    /// Maximum output change between consecutive periods, p.u.
    #[serde(default)]
    pub ramp_pu: Option<f64>,
    #[serde(default = "yes")]
    pub initial_on: bool,
}

impl Generator {
    pub fn new(id: &str, region: usize, kind: GenKind, p_min: f64, p_max: f64) -> Self {
        Generator {
            id: id.to_string(),
            region,
            kind,
            p_min_pu: p_min,
            p_max_pu: p_max,
            cost_quad: 0.0,
            cost_lin: 0.0,
            cost_const: 0.0,
            cost_up: 0.0,
            cost_down: 0.0,
            vi_cost: 0.0,
            inertia_s: 0.0,
            vi_max_s: 0.0,
            sg_inertia_s_per_pu: 0.0,
            min_up_h: 0.0,
            min_down_h: 0.0,
            ramp_pu: None,
            initial_on: true,
        }
    }

    pub fn costs(mut self, quad: f64, lin: f64, constant: f64) -> Self {
        self.cost_quad = quad;
        self.cost_lin = lin;
        self.cost_const = constant;
        self
    }

    pub fn switching(mut self, up: f64, down: f64) -> Self {
        self.cost_up = up;
        self.cost_down = down;
        self
    }

    pub fn inertia(mut self, h: f64) -> Self {
        self.inertia_s = h;
        self
    }

    pub fn virtual_inertia(mut self, max_s: f64, cost: f64) -> Self {
        self.vi_max_s = max_s;
        self.vi_cost = cost;
        self
    }

    pub fn sg_per_pu(mut self, k: f64) -> Self {
        self.sg_inertia_s_per_pu = k;
        self
    }

    pub fn min_times(mut self, up_h: f64, down_h: f64) -> Self {
        self.min_up_h = up_h;
        self.min_down_h = down_h;
        self
    }

    pub fn ramp(mut self, r: f64) -> Self {
        self.ramp_pu = Some(r);
        self
    }

    pub fn initially(mut self, on: bool) -> Self {
        self.initial_on = on;
        self
    }

    pub fn cost_at(&self, p: f64) -> f64 {
        self.cost_quad * p * p + self.cost_lin * p + self.cost_const
    }

    pub(crate) fn validate(&self, n_regions: usize) -> std::result::Result<(), String> {
        if self.region >= n_regions {
            return Err(format!("region {} does not exist", self.region));
        }
        let vals = [
            self.p_min_pu,
            self.p_max_pu,
            self.cost_quad,
            self.cost_lin,
            self.cost_const,
            self.cost_up,
            self.cost_down,
            self.vi_cost,
            self.inertia_s,
            self.vi_max_s,
            self.sg_inertia_s_per_pu,
            self.min_up_h,
            self.min_down_h,
        ];
        if vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err("values must be finite and non-negative".into());
        }
        if self.p_min_pu > self.p_max_pu {
            return Err("p_min_pu exceeds p_max_pu".into());
        }
        if let Some(r) = self.ramp_pu {
            if !(r >= 0.0) {
                return Err("ramp_pu must be non-negative".into());
            }
        }
        Ok(())
    }
}

fn half_hour() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodSpec {
    #[serde(default = "half_hour")]
    pub duration_h: f64,
    /// Regional demand P^A per region, p.u.
    pub demand_pu: Vec<f64>,
    /// Per-period synchronizing coefficients; the base tie lines when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tie_lines: Option<Vec<TieLineEntry>>,
}

impl PeriodSpec {
    pub fn new(demand_pu: Vec<f64>) -> Self {
        PeriodSpec {
            duration_h: 0.5,
            demand_pu,
            tie_lines: None,
        }
    }

    pub(crate) fn validate(&self, n_regions: usize) -> std::result::Result<(), String> {
        if self.demand_pu.len() != n_regions {
            return Err(format!(
                "demand_pu has {} entries for {n_regions} regions",
                self.demand_pu.len()
            ));
        }
        if self.demand_pu.iter().any(|d| !d.is_finite()) {
            return Err("demand must be finite".into());
        }
        if !(self.duration_h > 0.0) {
            return Err("duration_h must be positive".into());
        }
        Ok(())
    }

    /// The system with this period's tie lines applied.
    pub fn system(&self, base: &MultiRegionSystem) -> Result<MultiRegionSystem> {
        match &self.tie_lines {
            None => Ok(base.clone()),
            Some(t) => base.with_tie_lines(t.iter().map(Into::into).collect()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispatchOptions {
    /// Piecewise-linear segments per quadratic cost curve.
    pub segments: usize,
    /// Absolute optimality gap, $.
    pub abs_gap: f64,
    pub node_limit: usize,
    pub disjunction: Disjunction,
}

/// How the choice of one security cell enters the MILP. Both describe the
/// same feasible set; the hull form has the tighter relaxation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Disjunction {
    /// a·H ≤ b + M(1 − z) per cell halfspace.
    BigM,
    /// H = Σ y_i with a·y_i ≤ b·z_i per cell.
    #[default]
    Hull,
}

impl Default for DispatchOptions {
    fn default() -> Self {
        DispatchOptions {
            segments: 4,
            abs_gap: 1.0,
            node_limit: 20_000,
            disjunction: Disjunction::Hull,
        }
    }
}

/// Security constraint of one period: the disjunction is over the inertia of
/// `regions` (in cell coordinate order).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodSecurity {
    pub regions: Vec<usize>,
    pub constraint: DisjunctiveConstraint,
}

#[derive(Clone, Debug)]
pub struct GenVars {
    pub u: VarId,
    pub p: VarId,
    pub zu: VarId,
    pub zd: VarId,
    pub segments: Vec<VarId>,
    pub hvi: Option<VarId>,
}

#[derive(Clone, Debug)]
pub struct DispatchProblem {
    pub system: MultiRegionSystem,
    pub periods: Vec<PeriodSpec>,
    pub generators: Vec<Generator>,
    pub security: Vec<Option<PeriodSecurity>>,
    pub options: DispatchOptions,
    pub milp: Milp,
    /// [t][g]
    pub gen_vars: Vec<Vec<GenVars>>,
    /// [t][n]
    pub region_inertia: Vec<Vec<VarId>>,
    /// [t] selector binaries, empty without security.
    pub cell_vars: Vec<Vec<VarId>>,
}

fn periods_of(hours: f64, duration: f64) -> usize {
    if hours <= 0.0 {
        0
    } else {
        (hours / duration - 1e-9).ceil() as usize
    }
}

/// Assembles the commitment/inertia MILP.
pub fn build_problem(
    sys: &MultiRegionSystem,
    generators: &[Generator],
    periods: &[PeriodSpec],
    security: &[Option<PeriodSecurity>],
    options: &DispatchOptions,
) -> Result<DispatchProblem> {
    let n = sys.n();
    let nt = periods.len();
    if options.segments == 0 {
        return Err(Error::InvalidArgument("segments must be >= 1".into()));
    }
    if !security.is_empty() && security.len() != nt {
        return Err(Error::InvalidArgument(format!(
            "{} security entries for {nt} periods",
            security.len()
        )));
    }
    for (k, g) in generators.iter().enumerate() {
        g.validate(n)
            .map_err(|m| Error::field(format!("generators[{k}]"), m))?;
    }
    for (t, p) in periods.iter().enumerate() {
        p.validate(n)
            .map_err(|m| Error::field(format!("horizon[{t}]"), m))?;
        let cap: f64 = generators.iter().map(|g| g.p_max_pu).sum();
        let dem: f64 = p.demand_pu.iter().sum();
        if cap < dem {
            return Err(Error::Infeasible {
                classes: vec![format!("capacity: period {t} demand {dem} exceeds {cap}")],
            });
        }
        for r in 0..n {
            let has = generators.iter().any(|g| g.region == r);
            if !has && p.demand_pu[r] != 0.0 {
                return Err(Error::Infeasible {
                    classes: vec![format!("balance: region {r} has demand but no generators")],
                });
            }
        }
    }
    for (t, s) in security.iter().enumerate() {
        if let Some(s) = s {
            let dim = s.regions.len();
            if s.regions.iter().any(|&r| r >= n)
                || s.constraint
                    .cells
                    .iter()
                    .any(|c| c.halfspaces.iter().any(|h| h.a.len() != dim))
            {
                return Err(Error::InvalidArgument(format!(
                    "security constraint of period {t} does not match its regions"
                )));
            }
        }
    }

    let mut milp = Milp::new();
    let k = options.segments;
    let mut gen_vars: Vec<Vec<GenVars>> = Vec::with_capacity(nt);
    for t in 0..nt {
        let mut row = Vec::with_capacity(generators.len());
        for (gi, g) in generators.iter().enumerate() {
            let width = (g.p_max_pu - g.p_min_pu) / k as f64;
            let base_cost = g.cost_at(g.p_min_pu);
            let u = milp.add_binary(&format!("u[{},{t}]", g.id), base_cost);
            let p = milp.add_var(&format!("p[{},{t}]", g.id), 0.0, 0.0, g.p_max_pu);
            let zu = milp.add_var(&format!("zu[{},{t}]", g.id), g.cost_up, 0.0, 1.0);
            let zd = milp.add_var(&format!("zd[{},{t}]", g.id), g.cost_down, 0.0, 1.0);
            let mut segs = Vec::with_capacity(k);
            for s in 0..k {
                let lo = g.p_min_pu + s as f64 * width;
                let slope = if width > 0.0 {
                    (g.cost_at(lo + width) - g.cost_at(lo)) / width
                } else {
                    0.0
                };
                let v = milp.add_var(&format!("seg{s}[{},{t}]", g.id), slope, 0.0, width);
                milp.add_row(
                    RowClass::Capacity,
                    &[(v, 1.0), (u, -width)],
                    f64::NEG_INFINITY,
                    0.0,
                );
                segs.push(v);
            }
            // P = p_min·u + Σ segments
            let mut terms = vec![(p, 1.0), (u, -g.p_min_pu)];
            terms.extend(segs.iter().map(|&v| (v, -1.0)));
            milp.add_row(RowClass::Capacity, &terms, 0.0, 0.0);

            let hvi = if g.kind.has_vi() && g.vi_max_s > 0.0 {
                let h = milp.add_var(&format!("hvi[{},{t}]", g.id), g.vi_cost, 0.0, g.vi_max_s);
                milp.add_row(
                    RowClass::Capacity,
                    &[(h, 1.0), (u, -g.vi_max_s)],
                    f64::NEG_INFINITY,
                    0.0,
                );
                Some(h)
            } else {
                None
            };

            // zu − zd = u_t − u_{t−1}
            if t == 0 {
                let prev = if g.initial_on { 1.0 } else { 0.0 };
                milp.add_row(
                    RowClass::Logic,
                    &[(zu, 1.0), (zd, -1.0), (u, -1.0)],
                    -prev,
                    -prev,
                );
            } else {
                let up = gen_vars[t - 1][gi].u;
                milp.add_row(
                    RowClass::Logic,
                    &[(zu, 1.0), (zd, -1.0), (u, -1.0), (up, 1.0)],
                    0.0,
                    0.0,
                );
            }
            milp.add_row(
                RowClass::Logic,
                &[(zu, 1.0), (zd, 1.0)],
                f64::NEG_INFINITY,
                1.0,
            );

            if let (Some(r), true) = (g.ramp_pu, t > 0) {
                let pp = gen_vars[t - 1][gi].p;
                milp.add_row(
                    RowClass::Ramp,
                    &[(p, 1.0), (pp, -1.0), (zu, -g.p_max_pu)],
                    f64::NEG_INFINITY,
                    r,
                );
                milp.add_row(
                    RowClass::Ramp,
                    &[(pp, 1.0), (p, -1.0), (zd, -g.p_max_pu)],
                    f64::NEG_INFINITY,
                    r,
                );
            }
            row.push(GenVars {
                u,
                p,
                zu,
                zd,
                segments: segs,
                hvi,
            });
        }
        gen_vars.push(row);
    }

    // minimum up / down times over the preceding window
    for (gi, g) in generators.iter().enumerate() {
        for t in 0..nt {
            let dur = periods[t].duration_h;
            let up = periods_of(g.min_up_h, dur);
            let down = periods_of(g.min_down_h, dur);
            if up > 1 {
                let mut terms: Vec<(VarId, f64)> = (t.saturating_sub(up - 1)..=t)
                    .map(|s| (gen_vars[s][gi].zu, 1.0))
                    .collect();
                terms.push((gen_vars[t][gi].u, -1.0));
                milp.add_row(RowClass::MinUpDown, &terms, f64::NEG_INFINITY, 0.0);
            }
            if down > 1 {
                let mut terms: Vec<(VarId, f64)> = (t.saturating_sub(down - 1)..=t)
                    .map(|s| (gen_vars[s][gi].zd, 1.0))
                    .collect();
                terms.push((gen_vars[t][gi].u, 1.0));
                milp.add_row(RowClass::MinUpDown, &terms, f64::NEG_INFINITY, 1.0);
            }
        }
    }

    // regional balance and inertia
    let mut region_inertia = Vec::with_capacity(nt);
    for (t, per) in periods.iter().enumerate() {
        for r in 0..n {
            let terms: Vec<(VarId, f64)> = generators
                .iter()
                .enumerate()
                .filter(|(_, g)| g.region == r)
                .map(|(gi, _)| (gen_vars[t][gi].p, 1.0))
                .collect();
            if !terms.is_empty() {
                milp.add_row(
                    RowClass::Balance,
                    &terms,
                    per.demand_pu[r],
                    per.demand_pu[r],
                );
            }
        }
        let mut hs = Vec::with_capacity(n);
        for r in 0..n {
            let h = milp.add_var(&format!("H[{r},{t}]"), 0.0, 0.0, f64::INFINITY);
            let mut terms = vec![(h, 1.0)];
            let mut fixed = 0.0;
            let mut any = false;
            for (gi, g) in generators.iter().enumerate().filter(|(_, g)| g.region == r) {
                any = true;
                let v = &gen_vars[t][gi];
                match g.kind {
                    GenKind::Sg | GenKind::FastStartSg => terms.push((v.u, -g.inertia_s)),
                    GenKind::ViIbr => {}
                    GenKind::Mixed => terms.push((v.p, -g.sg_inertia_s_per_pu)),
                }
                if let Some(hv) = v.hvi {
                    terms.push((hv, -1.0));
                }
            }
            if !any {
                fixed = sys.regions[r].inertia;
            }
            milp.add_row(RowClass::Inertia, &terms, fixed, fixed);
            hs.push(h);
        }
        region_inertia.push(hs);
    }

    // disjunctive security
    let mut cell_vars = Vec::with_capacity(nt);
    for t in 0..nt {
        let Some(Some(sec)) = security.get(t) else {
            cell_vars.push(Vec::new());
            continue;
        };
        let dc = &sec.constraint;
        let zs: Vec<VarId> = (0..dc.cells.len())
            .map(|i| milp.add_binary(&format!("z{i}[{t}]"), 0.0))
            .collect();
        let sel: Vec<(VarId, f64)> = zs.iter().map(|&z| (z, 1.0)).collect();
        milp.add_row(RowClass::Security, &sel, 1.0, 1.0);
        match options.disjunction {
            Disjunction::BigM => {
                for (i, cell) in dc.cells.iter().enumerate() {
                    for (hk, h) in cell.halfspaces.iter().enumerate() {
                        let m = dc.big_m[i][hk];
                        let mut terms: Vec<(VarId, f64)> = sec
                            .regions
                            .iter()
                            .zip(&h.a)
                            .map(|(&r, &a)| (region_inertia[t][r], a))
                            .collect();
                        terms.push((zs[i], m));
                        milp.add_row(RowClass::Security, &terms, f64::NEG_INFINITY, h.b + m);
                    }
                }
            }
            Disjunction::Hull => {
                // cells are bounded, so a·y ≤ 0 on every halfspace forces y = 0
                let ys: Vec<Vec<VarId>> = (0..dc.cells.len())
                    .map(|i| {
                        sec.regions
                            .iter()
                            .map(|r| {
                                milp.add_var(
                                    &format!("y{i}[{r},{t}]"),
                                    0.0,
                                    f64::NEG_INFINITY,
                                    f64::INFINITY,
                                )
                            })
                            .collect()
                    })
                    .collect();
                for (k, &r) in sec.regions.iter().enumerate() {
                    let mut terms = vec![(region_inertia[t][r], 1.0)];
                    terms.extend(ys.iter().map(|y| (y[k], -1.0)));
                    milp.add_row(RowClass::Security, &terms, 0.0, 0.0);
                }
                for (i, cell) in dc.cells.iter().enumerate() {
                    for h in &cell.halfspaces {
                        let mut terms: Vec<(VarId, f64)> =
                            ys[i].iter().zip(&h.a).map(|(&y, &a)| (y, a)).collect();
                        terms.push((zs[i], -h.b));
                        milp.add_row(RowClass::Security, &terms, f64::NEG_INFINITY, 0.0);
                    }
                }
            }
        }
        cell_vars.push(zs);
    }

    Ok(DispatchProblem {
        system: sys.clone(),
        periods: periods.to_vec(),
        generators: generators.to_vec(),
        security: if security.is_empty() {
            vec![None; nt]
        } else {
            security.to_vec()
        },
        options: options.clone(),
        milp,
        gen_vars,
        region_inertia,
        cell_vars,
    })
}
