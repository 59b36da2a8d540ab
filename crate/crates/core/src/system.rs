//! Multi-region system description and its linear state-space model.

use std::collections::VecDeque;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dispatch::{Generator, PeriodSpec};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: usize,
    /// Seconds on the common MVA base.
    pub inertia: f64,
    /// Per-unit power per per-unit frequency.
    pub damping: f64,
    pub inertia_lo: f64,
    pub inertia_up: f64,
    /// Per-unit power step applied at t = 0 (load increase is positive).
    pub disturbance: f64,
}

impl Region {
    pub fn new(id: usize, inertia: f64) -> Self {
        Region {
            id,
            inertia,
            damping: 0.0,
            inertia_lo: inertia,
            inertia_up: inertia,
            disturbance: 0.0,
        }
    }

    pub fn damping(mut self, d: f64) -> Self {
        self.damping = d;
        self
    }

    pub fn disturbance(mut self, dp: f64) -> Self {
        self.disturbance = dp;
        self
    }

    pub fn range(mut self, lo: f64, up: f64) -> Self {
        self.inertia_lo = lo;
        self.inertia_up = up;
        self
    }

    pub fn is_adjustable(&self) -> bool {
        self.inertia_lo < self.inertia_up
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TieLine {
    pub from: usize,
    pub to: usize,
    /// Synchronizing power coefficient, per-unit power per radian.
    pub sync_coeff: f64,
}

impl TieLine {
    pub fn new(from: usize, to: usize, sync_coeff: f64) -> Self {
        TieLine {
            from,
            to,
            sync_coeff,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiRegionSystem {
    pub regions: Vec<Region>,
    pub tie_lines: Vec<TieLine>,
    pub nominal_freq: f64,
    pub base_mva: f64,
}

impl MultiRegionSystem {
    /// Validates and builds a system. Regions are reordered by id.
    pub fn new(regions: Vec<Region>, tie_lines: Vec<TieLine>, nominal_freq: f64) -> Result<Self> {
        Self::build(regions, tie_lines, nominal_freq, 100.0, false)
    }

    fn build(
        mut regions: Vec<Region>,
        tie_lines: Vec<TieLine>,
        nominal_freq: f64,
        base_mva: f64,
        any_frequency: bool,
    ) -> Result<Self> {
        if regions.is_empty() {
            return Err(Error::field("regions", "at least one region is required"));
        }
        regions.sort_by_key(|r| r.id);
        for (k, r) in regions.iter().enumerate() {
            if r.id != k {
                return Err(Error::field(
                    format!("regions[{k}].id"),
                    "region ids must be dense 0..N-1 without duplicates",
                ));
            }
            let finite = [
                r.inertia,
                r.damping,
                r.inertia_lo,
                r.inertia_up,
                r.disturbance,
            ]
            .iter()
            .all(|v| v.is_finite());
            if !finite {
                return Err(Error::field(format!("regions[{k}]"), "non-finite value"));
            }
            if r.inertia <= 0.0 {
                return Err(Error::NonPositiveInertia {
                    region: k,
                    value: r.inertia,
                });
            }
            if r.damping < 0.0 {
                return Err(Error::field(
                    format!("regions[{k}].damping_pu"),
                    "must be >= 0",
                ));
            }
            if !(0.0 <= r.inertia_lo && r.inertia_lo <= r.inertia_up) {
                return Err(Error::field(
                    format!("regions[{k}].inertia_lo_s"),
                    "require 0 <= inertia_lo <= inertia_up",
                ));
            }
        }
        let n = regions.len();
        for (k, t) in tie_lines.iter().enumerate() {
            if t.from == t.to {
                return Err(Error::field(
                    format!("tie_lines[{k}].to"),
                    "from and to must differ",
                ));
            }
            if t.from >= n || t.to >= n {
                return Err(Error::field(
                    format!("tie_lines[{k}]"),
                    "unknown region index",
                ));
            }
            if !(t.sync_coeff > 0.0) || !t.sync_coeff.is_finite() {
                return Err(Error::field(
                    format!("tie_lines[{k}].sync_coeff_pu_per_rad"),
                    "must be positive",
                ));
            }
        }
        if !any_frequency && nominal_freq != 50.0 && nominal_freq != 60.0 {
            return Err(Error::field(
                "nominal_freq_hz",
                "must be 50 or 60 (set allow_any_frequency to override)",
            ));
        }
        if !(nominal_freq > 0.0) {
            return Err(Error::field("nominal_freq_hz", "must be positive"));
        }
        if !(base_mva > 0.0) {
            return Err(Error::field("base_mva", "must be positive"));
        }
        let sys = MultiRegionSystem {
            regions,
            tie_lines,
            nominal_freq,
            base_mva,
        };
        if let Some(k) = sys.unreachable_region() {
            return Err(Error::Disconnected(k));
        }
        Ok(sys)
    }

    pub fn n(&self) -> usize {
        self.regions.len()
    }

    pub fn omega0(&self) -> f64 {
        2.0 * PI * self.nominal_freq
    }

    pub fn inertias(&self) -> Vec<f64> {
        self.regions.iter().map(|r| r.inertia).collect()
    }

    pub fn total_inertia(&self) -> f64 {
        self.regions.iter().map(|r| r.inertia).sum()
    }

    pub fn total_disturbance(&self) -> f64 {
        self.regions.iter().map(|r| r.disturbance).sum()
    }

    pub fn adjustable(&self) -> Vec<usize> {
        self.regions
            .iter()
            .filter(|r| r.is_adjustable())
            .map(|r| r.id)
            .collect()
    }

    /// Copy with the given inertia vector (length N).
    pub fn with_inertia(&self, h: &[f64]) -> Result<Self> {
        if h.len() != self.n() {
            return Err(Error::InvalidArgument(format!(
                "inertia vector has {} entries, system has {} regions",
                h.len(),
                self.n()
            )));
        }
        let mut s = self.clone();
        for (r, &v) in s.regions.iter_mut().zip(h) {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::NonPositiveInertia {
                    region: r.id,
                    value: v,
                });
            }
            r.inertia = v;
        }
        Ok(s)
    }

    pub fn with_tie_lines(&self, tie_lines: Vec<TieLine>) -> Result<Self> {
        Self::build(
            self.regions.clone(),
            tie_lines,
            self.nominal_freq,
            self.base_mva,
            true,
        )
    }

    /// Disturbed regions, in id order.
    pub fn disturbed(&self) -> Vec<usize> {
        self.regions
            .iter()
            .filter(|r| r.disturbance != 0.0)
            .map(|r| r.id)
            .collect()
    }

    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut l = DMatrix::zeros(n, n);
        for t in &self.tie_lines {
            l[(t.from, t.from)] += t.sync_coeff;
            l[(t.to, t.to)] += t.sync_coeff;
            l[(t.from, t.to)] -= t.sync_coeff;
            l[(t.to, t.from)] -= t.sync_coeff;
        }
        l
    }

    fn unreachable_region(&self) -> Option<usize> {
        let n = self.n();
        let mut adj = vec![Vec::new(); n];
        for t in &self.tie_lines {
            adj[t.from].push(t.to);
            adj[t.to].push(t.from);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.iter().position(|s| !s)
    }
}

/// Linear model x' = A x + b with x = [Δω (N); Δδ (N)].
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpace {
    pub a_matrix: DMatrix<f64>,
    pub b_vector: DVector<f64>,
    pub n_regions: usize,
}

/// K = -(2Λ_H)^{-1} L with L the tie-line Laplacian.
pub fn synchronizing_matrix(sys: &MultiRegionSystem) -> DMatrix<f64> {
    let mut k = sys.laplacian();
    for (i, r) in sys.regions.iter().enumerate() {
        let s = -1.0 / (2.0 * r.inertia);
        for j in 0..sys.n() {
            k[(i, j)] *= s;
        }
    }
    k
}

pub fn build_state_space(sys: &MultiRegionSystem) -> StateSpace {
    let n = sys.n();
    let k = synchronizing_matrix(sys);
    let w0 = sys.omega0();
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    let mut b = DVector::zeros(2 * n);
    for (i, r) in sys.regions.iter().enumerate() {
        a[(i, i)] = -r.damping / (2.0 * r.inertia);
        for j in 0..n {
            a[(i, n + j)] = k[(i, j)];
        }
        a[(n + i, i)] = w0;
        b[i] = -r.disturbance / (2.0 * r.inertia);
    }
    StateSpace {
        a_matrix: a,
        b_vector: b,
        n_regions: n,
    }
}

/// Total inertia that keeps the COI RoCoF of a step `dp` at `rocof_lim`.
pub fn coi_critical_inertia(dp: f64, rocof_lim: f64) -> Result<f64> {
    if !(rocof_lim > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "RoCoF limit must be positive, got {rocof_lim}"
        )));
    }
    Ok(dp / (2.0 * rocof_lim))
}

// ---------------------------------------------------------------------------
// Scenario documents

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionDoc {
    id: usize,
    inertia_s: f64,
    inertia_lo_s: Option<f64>,
    inertia_up_s: Option<f64>,
    #[serde(default)]
    damping_pu: f64,
    #[serde(default)]
    disturbance_pu: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    nominal_freq_hz: f64,
    #[serde(default = "default_base")]
    base_mva: f64,
    #[serde(default)]
    allow_any_frequency: bool,
    regions: Vec<RegionDoc>,
    #[serde(default)]
    tie_lines: Vec<TieLineEntry>,
    #[serde(default)]
    generators: Vec<Generator>,
    #[serde(default)]
    horizon: Vec<PeriodSpec>,
    rocof_lim_hz_per_s: Option<f64>,
}

fn default_base() -> f64 {
    100.0
}

/// A full scenario: the physical system plus optional dispatch data.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub system: MultiRegionSystem,
    pub generators: Vec<Generator>,
    pub horizon: Vec<PeriodSpec>,
    /// Study limit carried by the document, Hz/s.
    pub rocof_lim_hz_per_s: Option<f64>,
}

/// Tie-line entry as it appears in documents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TieLineEntry {
    pub from: usize,
    pub to: usize,
    pub sync_coeff_pu_per_rad: f64,
}

impl From<&TieLineEntry> for TieLine {
    fn from(t: &TieLineEntry) -> Self {
        TieLine::new(t.from, t.to, t.sync_coeff_pu_per_rad)
    }
}

fn parse_err(e: serde_json::Error) -> Error {
    Error::Parse {
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    }
}

pub fn load_document(text: &str) -> Result<Scenario> {
    let doc: ScenarioDoc = serde_json::from_str(text).map_err(parse_err)?;
    let regions = doc
        .regions
        .into_iter()
        .map(|r| Region {
            id: r.id,
            inertia: r.inertia_s,
            damping: r.damping_pu,
            inertia_lo: r.inertia_lo_s.unwrap_or(r.inertia_s),
            inertia_up: r.inertia_up_s.unwrap_or(r.inertia_s),
            disturbance: r.disturbance_pu,
        })
        .collect();
    let ties = doc.tie_lines.iter().map(TieLine::from).collect();
    let system = MultiRegionSystem::build(
        regions,
        ties,
        doc.nominal_freq_hz,
        doc.base_mva,
        doc.allow_any_frequency,
    )?;
    let n = system.n();
    for (k, g) in doc.generators.iter().enumerate() {
        g.validate(n)
            .map_err(|msg| Error::field(format!("generators[{k}]"), msg))?;
    }
    for (k, p) in doc.horizon.iter().enumerate() {
        p.validate(n)
            .map_err(|msg| Error::field(format!("horizon[{k}]"), msg))?;
    }
    if let Some(l) = doc.rocof_lim_hz_per_s {
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::field("rocof_lim_hz_per_s", "must be positive"));
        }
    }
    Ok(Scenario {
        system,
        generators: doc.generators,
        horizon: doc.horizon,
        rocof_lim_hz_per_s: doc.rocof_lim_hz_per_s,
    })
}

pub fn load_scenario(text: &str) -> Result<MultiRegionSystem> {
    load_document(text).map(|s| s.system)
}

/// Serializes a system back into the scenario document format.
pub fn to_document(sc: &Scenario) -> serde_json::Value {
    let sys = &sc.system;
    serde_json::json!({
        "nominal_freq_hz": sys.nominal_freq,
        "base_mva": sys.base_mva,
        "allow_any_frequency": sys.nominal_freq != 50.0 && sys.nominal_freq != 60.0,
        "regions": sys.regions.iter().map(|r| serde_json::json!({
            "id": r.id,
            "inertia_s": r.inertia,
            "inertia_lo_s": r.inertia_lo,
            "inertia_up_s": r.inertia_up,
            "damping_pu": r.damping,
            "disturbance_pu": r.disturbance,
        })).collect::<Vec<_>>(),
        "tie_lines": sys.tie_lines.iter().map(|t| serde_json::json!({
            "from": t.from,
            "to": t.to,
            "sync_coeff_pu_per_rad": t.sync_coeff,
        })).collect::<Vec<_>>(),
        "generators": sc.generators,
        "horizon": sc.horizon,
        "rocof_lim_hz_per_s": sc.rocof_lim_hz_per_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_symmetric() -> MultiRegionSystem {
        MultiRegionSystem::new(
            vec![Region::new(0, 5.0).disturbance(1.0), Region::new(1, 5.0)],
            vec![TieLine::new(0, 1, 1.0)],
            60.0,
        )
        .unwrap()
    }

    #[test]
    fn k_single_region_is_zero() {
        let s = MultiRegionSystem::new(vec![Region::new(0, 5.0)], vec![], 60.0).unwrap();
        assert_eq!(synchronizing_matrix(&s), DMatrix::zeros(1, 1));
    }

    #[test]
    fn k_two_symmetric() {
        let k = synchronizing_matrix(&two_symmetric());
        let want = DMatrix::from_row_slice(2, 2, &[-0.1, 0.1, 0.1, -0.1]);
        assert!((k - want).abs().max() < 1e-15);
    }

    #[test]
    fn k_ring_has_rank_two() {
        let s = MultiRegionSystem::new(
            vec![
                Region::new(0, 4.0),
                Region::new(1, 7.0),
                Region::new(2, 11.0),
            ],
            vec![
                TieLine::new(0, 1, 1.5),
                TieLine::new(1, 2, 0.7),
                TieLine::new(2, 0, 2.2),
            ],
            50.0,
        )
        .unwrap();
        let k = synchronizing_matrix(&s);
        let sv = k.clone().svd(false, false).singular_values;
        let tol = 1e-9 * k.norm();
        assert_eq!(sv.iter().filter(|&&v| v > tol).count(), 2);
    }

    #[test]
    fn state_space_single_region() {
        let s = MultiRegionSystem::new(vec![Region::new(0, 5.0).disturbance(1.0)], vec![], 60.0)
            .unwrap();
        let ss = build_state_space(&s);
        assert_eq!(ss.a_matrix[(0, 0)], 0.0);
        assert_eq!(ss.a_matrix[(0, 1)], 0.0);
        assert!((ss.a_matrix[(1, 0)] - 376.99111843077515).abs() < 1e-9);
        assert_eq!(ss.a_matrix[(1, 1)], 0.0);
        assert!((ss.b_vector[0] + 0.1).abs() < 1e-15);
        assert_eq!(ss.b_vector[1], 0.0);
    }

    #[test]
    fn state_space_two_symmetric_first_row() {
        let ss = build_state_space(&two_symmetric());
        let row: Vec<f64> = ss.a_matrix.row(0).iter().copied().collect();
        let want = [0.0, 0.0, -0.1, 0.1];
        for (a, b) in row.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(ss.b_vector[2], 0.0);
        assert_eq!(ss.b_vector[3], 0.0);
    }

    #[test]
    fn coi_critical_examples() {
        assert!((coi_critical_inertia(1.0, 0.01).unwrap() - 50.0).abs() < 1e-12);
        assert_eq!(coi_critical_inertia(0.0, 0.01).unwrap(), 0.0);
        assert!((coi_critical_inertia(0.5, 0.005).unwrap() - 50.0).abs() < 1e-12);
        assert!(coi_critical_inertia(1.0, 0.0).is_err());
        assert!(coi_critical_inertia(1.0, -0.5).is_err());
    }

    #[test]
    fn minimal_document() {
        let s = load_scenario(
            r#"{"nominal_freq_hz": 50, "base_mva": 100,
                "regions": [{"id": 0, "inertia_s": 4.0}], "tie_lines": []}"#,
        )
        .unwrap();
        assert_eq!(s.n(), 1);
        assert!(s.tie_lines.is_empty());
        assert_eq!(s.regions[0].damping, 0.0);
    }

    #[test]
    fn self_loop_rejected_with_field() {
        let e = load_scenario(
            r#"{"nominal_freq_hz": 60, "base_mva": 100,
                "regions": [{"id": 0, "inertia_s": 4.0}, {"id": 1, "inertia_s": 4.0}],
                "tie_lines": [{"from": 1, "to": 1, "sync_coeff_pu_per_rad": 1.0}]}"#,
        )
        .unwrap_err();
        match e {
            Error::Field { field, .. } => assert_eq!(field, "tie_lines[0].to"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn disconnected_and_nonpositive_rejected() {
        let e = load_scenario(
            r#"{"nominal_freq_hz": 60, "base_mva": 100,
                "regions": [{"id": 0, "inertia_s": 4.0}, {"id": 1, "inertia_s": 4.0}]}"#,
        )
        .unwrap_err();
        assert_eq!(e, Error::Disconnected(1));
        let e = load_scenario(
            r#"{"nominal_freq_hz": 60, "base_mva": 100,
                "regions": [{"id": 0, "inertia_s": 0.0}]}"#,
        )
        .unwrap_err();
        assert!(matches!(e, Error::NonPositiveInertia { region: 0, .. }));
    }

    #[test]
    fn parse_error_reports_line() {
        let e = load_scenario("{\n\"nominal_freq_hz\": 60,\n\"regions\": [oops]}").unwrap_err();
        match e {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn odd_frequency_needs_override() {
        let doc = |flag: bool| {
            format!(
                r#"{{"nominal_freq_hz": 400, "allow_any_frequency": {flag},
                    "regions": [{{"id": 0, "inertia_s": 4.0}}]}}"#
            )
        };
        assert!(load_scenario(&doc(false)).is_err());
        assert_eq!(load_scenario(&doc(true)).unwrap().nominal_freq, 400.0);
    }
}
