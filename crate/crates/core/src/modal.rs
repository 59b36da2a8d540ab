//! Eigenstructure of the regional model and the real-form modal expansion of
//! regional RoCoF.
//!
//! The absolute-angle direction of the full model is a Jordan block at zero
//! whenever damping vanishes, so the basis is computed on the reduced state
//! `[Δω; δ_k − δ_0]` (dimension 2N−1), which carries the same RoCoF response
//! and is diagonalizable for the systems of interest.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::{MultiRegionSystem, StateSpace};

/// Eigenvector condition number above which the basis is rejected.
pub const MAX_CONDITION: f64 = 1e10;

#[derive(Clone, Debug)]
pub struct ModalBasis {
    /// Eigenvalues of the reduced model, ordered by real part (descending),
    /// then |imag|, conjugate pairs adjacent with +imag first.
    pub eigenvalues: Vec<Complex64>,
    pub right_vectors: DMatrix<Complex64>,
    pub left_vectors: DMatrix<Complex64>,
    pub n_regions: usize,
    pub condition: f64,
}

impl ModalBasis {
    /// The 2N eigenvalues of the full model: the reduced spectrum plus the
    /// reference-angle zero.
    pub fn spectrum(&self) -> Vec<Complex64> {
        let mut all = self.eigenvalues.clone();
        all.push(Complex64::new(0.0, 0.0));
        all.sort_by(eig_order);
        all
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Modal residue of Δω̇_{n1} to a unit negative step in region n2:
    /// `-v_s[n1] w_s[n2]`.
    pub fn residues(&self, observed: usize, disturbed: usize) -> Vec<Complex64> {
        (0..self.dim())
            .map(|s| -self.right_vectors[(observed, s)] * self.left_vectors[(s, disturbed)])
            .collect()
    }
}

fn eig_order(a: &Complex64, b: &Complex64) -> Ordering {
    b.re.partial_cmp(&a.re)
        .unwrap_or(Ordering::Equal)
        .then(
            a.im.abs()
                .partial_cmp(&b.im.abs())
                .unwrap_or(Ordering::Equal),
        )
        .then(b.im.partial_cmp(&a.im).unwrap_or(Ordering::Equal))
}

/// Reduced realization z = [Δω; Δδ_k − Δδ_0], k = 1..N−1.
pub fn reduced_model(ss: &StateSpace) -> (DMatrix<f64>, DVector<f64>) {
    let n = ss.n_regions;
    let m = 2 * n - 1;
    // x = E z
    let mut e = DMatrix::zeros(2 * n, m);
    for i in 0..n {
        e[(i, i)] = 1.0;
    }
    for k in 1..n {
        e[(n + k, n + k - 1)] = 1.0;
    }
    // z = R x
    let mut r = DMatrix::zeros(m, 2 * n);
    for i in 0..n {
        r[(i, i)] = 1.0;
    }
    for k in 1..n {
        r[(n + k - 1, n + k)] = 1.0;
        r[(n + k - 1, n)] = -1.0;
    }
    let a = &r * &ss.a_matrix * &e;
    let b = &r * &ss.b_vector;
    (a, b)
}

fn null_vectors_real(a: &DMatrix<f64>, lambda: f64, k: usize) -> Vec<DVector<Complex64>> {
    let n = a.nrows();
    let m = a - DMatrix::identity(n, n) * lambda;
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    (n - k..n)
        .map(|i| {
            let v: DVector<f64> = vt.row(i).transpose();
            normalize(v.map(|x| Complex64::new(x, 0.0)))
        })
        .collect()
}

fn null_vectors_complex(a: &DMatrix<f64>, lambda: Complex64, k: usize) -> Vec<DVector<Complex64>> {
    let n = a.nrows();
    let mut m: DMatrix<Complex64> = a.map(|x| Complex64::new(x, 0.0));
    for i in 0..n {
        m[(i, i)] -= lambda;
    }
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    (n - k..n)
        .map(|i| normalize(vt.row(i).transpose().map(|z| z.conj())))
        .collect()
}

/// Unit norm, largest component real and positive.
fn normalize(mut v: DVector<Complex64>) -> DVector<Complex64> {
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mut big = 0;
    for i in 0..v.len() {
        if v[i].norm() > v[big].norm() * (1.0 + 1e-12) {
            big = i;
        }
    }
    let rot = v[big].conj() / v[big].norm();
    for z in v.iter_mut() {
        *z = *z * rot / norm;
    }
    v
}

pub fn eigendecompose(ss: &StateSpace) -> Result<ModalBasis> {
    let (a, _) = reduced_model(ss);
    eigendecompose_matrix(&a, ss.n_regions)
}

pub(crate) fn eigendecompose_matrix(a: &DMatrix<f64>, n_regions: usize) -> Result<ModalBasis> {
    let n = a.nrows();
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(
            "state matrix has non-finite entries".into(),
        ));
    }
    let scale = a.norm().max(1.0);
    let im_tol = 1e-12 * scale;
    let raw = a.clone().schur().complex_eigenvalues();
    let mut upper: Vec<Complex64> = raw
        .iter()
        .filter(|z| z.im >= -im_tol)
        .map(|z| {
            if z.im.abs() <= im_tol {
                Complex64::new(z.re, 0.0)
            } else {
                *z
            }
        })
        .collect();
    upper.sort_by(eig_order);

    // group numerically repeated eigenvalues
    let cl_tol = 1e-9 * scale;
    let mut clusters: Vec<Vec<Complex64>> = Vec::new();
    for z in upper {
        match clusters.last_mut() {
            Some(c) if (c[0] - z).norm() <= cl_tol && (c[0].im == 0.0) == (z.im == 0.0) => {
                c.push(z)
            }
            _ => clusters.push(vec![z]),
        }
    }

    let mut eigenvalues = Vec::with_capacity(n);
    let mut columns: Vec<DVector<Complex64>> = Vec::with_capacity(n);
    for c in &clusters {
        let k = c.len();
        let mean = c.iter().sum::<Complex64>() / k as f64;
        if mean.im == 0.0 {
            let vs = null_vectors_real(a, mean.re, k);
            for (z, v) in c.iter().zip(vs) {
                eigenvalues.push(*z);
                columns.push(v);
            }
        } else {
            let vs = null_vectors_complex(a, mean, k);
            for (z, v) in c.iter().zip(vs) {
                eigenvalues.push(*z);
                columns.push(v.clone());
                eigenvalues.push(z.conj());
                columns.push(v.map(|x| x.conj()));
            }
        }
    }
    if eigenvalues.len() != n {
        return Err(Error::NearDefective {
            cond: f64::INFINITY,
        });
    }
    let v = DMatrix::from_columns(&columns);
    let sv = v.clone().svd(false, false).singular_values;
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let cond = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if !(cond < MAX_CONDITION) {
        return Err(Error::NearDefective { cond });
    }
    let w = v.clone().try_inverse().ok_or(Error::NearDefective {
        cond: f64::INFINITY,
    })?;
    Ok(ModalBasis {
        eigenvalues,
        right_vectors: v,
        left_vectors: w,
        n_regions,
        condition: cond,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigComponent {
    /// Amplitude of the unit-step response (multiply by `scale` for p.u./s).
    pub amplitude: f64,
    pub decay: f64,
    pub ang_freq: f64,
    pub phase: f64,
}

impl TrigComponent {
    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.ang_freq
    }

    fn phasor(&self) -> (Complex64, Complex64) {
        (
            Complex64::from_polar(self.amplitude, self.phase),
            Complex64::new(self.decay, self.ang_freq),
        )
    }

    /// k-th time derivative of the isolated component.
    pub fn derivative(&self, t: f64, k: u32) -> f64 {
        let (c, lam) = self.phasor();
        (c * lam.powu(k) * (lam * t).exp()).re
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpComponent {
    pub amplitude: f64,
    pub decay: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModalDecomposition {
    pub observed: usize,
    pub disturbed: usize,
    pub exp_amplitude: f64,
    pub exp_decay: f64,
    /// Ordered by angular frequency, ascending. Indices are 1-based in
    /// anchors and reports.
    pub trig: Vec<TrigComponent>,
    /// Further non-oscillatory modes (overdamped pairs); empty in the
    /// lightly damped regime.
    pub extra_exp: Vec<ExpComponent>,
    /// ΔP_{n2} / (2 H_{n2}).
    pub scale: f64,
}

impl ModalDecomposition {
    /// k-th derivative of the unit-step waveform (without `scale`).
    pub fn unit_derivative(&self, t: f64, k: u32) -> f64 {
        let mut v = self.exp_amplitude * self.exp_decay.powi(k as i32) * (self.exp_decay * t).exp();
        for e in &self.extra_exp {
            v += e.amplitude * e.decay.powi(k as i32) * (e.decay * t).exp();
        }
        for c in &self.trig {
            v += c.derivative(t, k);
        }
        v
    }

    pub fn unit(&self, t: f64) -> f64 {
        self.unit_derivative(t, 0)
    }

    /// Σ A^T_m over the trigonometric components.
    pub fn trig_amplitude_sum(&self) -> f64 {
        self.trig.iter().map(|c| c.amplitude).sum()
    }
}

/// Real-form decomposition of RoCoF in `observed` for the step in `disturbed`.
pub fn real_modes(
    basis: &ModalBasis,
    sys: &MultiRegionSystem,
    observed: usize,
    disturbed: usize,
) -> Result<ModalDecomposition> {
    let n = sys.n();
    if observed >= n || disturbed >= n || basis.n_regions != n {
        return Err(Error::InvalidArgument(format!(
            "region pair ({observed}, {disturbed}) out of range for {n} regions"
        )));
    }
    let region = &sys.regions[disturbed];
    if region.inertia <= 0.0 {
        return Err(Error::NonPositiveInertia {
            region: disturbed,
            value: region.inertia,
        });
    }
    if region.disturbance == 0.0 {
        return Err(Error::NoDisturbance(disturbed));
    }
    let scale = region.disturbance / (2.0 * region.inertia);
    let rho = basis.residues(observed, disturbed);

    let total: Complex64 = rho.iter().sum();
    let im_res = total.im.abs();
    if im_res > 1e-10 {
        log::warn!("complex modal sum has imaginary residue {im_res:.3e}");
    }

    let mut reals: Vec<ExpComponent> = Vec::new();
    let mut pairs: Vec<(Complex64, Complex64)> = Vec::new();
    for (lam, r) in basis.eigenvalues.iter().zip(&rho) {
        if lam.im == 0.0 {
            reals.push(ExpComponent {
                amplitude: r.re,
                decay: lam.re,
            });
        } else if lam.im > 0.0 {
            // merge numerically repeated modes into one cosine
            let tol = 1e-9 * lam.norm().max(1.0);
            match pairs.iter_mut().find(|(l, _)| (*l - lam).norm() <= tol) {
                Some(p) => p.1 += r,
                None => pairs.push((*lam, *r)),
            }
        }
    }
    reals.sort_by(|a, b| {
        a.decay
            .abs()
            .partial_cmp(&b.decay.abs())
            .unwrap_or(Ordering::Equal)
    });
    let (exp_amplitude, exp_decay) = match reals.first() {
        Some(e) => (e.amplitude, e.decay),
        None => (0.0, 0.0),
    };
    let extra_exp = reals.into_iter().skip(1).collect::<Vec<_>>();
    if !extra_exp.is_empty() {
        log::info!(
            "{} overdamped mode(s) kept as extra exponentials",
            extra_exp.len()
        );
    }
    let mut trig: Vec<TrigComponent> = pairs
        .into_iter()
        .map(|(lam, r)| TrigComponent {
            amplitude: 2.0 * r.norm(),
            decay: lam.re,
            ang_freq: lam.im,
            phase: r.arg(),
        })
        .collect();
    trig.sort_by(|a, b| {
        a.ang_freq
            .partial_cmp(&b.ang_freq)
            .unwrap_or(Ordering::Equal)
            .then(b.decay.partial_cmp(&a.decay).unwrap_or(Ordering::Equal))
    });
    Ok(ModalDecomposition {
        observed,
        disturbed,
        exp_amplitude,
        exp_decay,
        trig,
        extra_exp,
        scale,
    })
}

/// Convenience: state space, basis and decomposition in one call.
pub fn decompose(
    sys: &MultiRegionSystem,
    observed: usize,
    disturbed: usize,
) -> Result<ModalDecomposition> {
    let ss = crate::system::build_state_space(sys);
    let basis = eigendecompose(&ss)?;
    real_modes(&basis, sys, observed, disturbed)
}

/// RoCoF in per-unit/s at time t.
pub fn evaluate_rocof(md: &ModalDecomposition, t: f64) -> f64 {
    md.unit(t) * md.scale
}

/// The complex modal sum Σ ρ_s e^{λ_s t} · scale, before taking the real part.
pub fn evaluate_complex(
    basis: &ModalBasis,
    sys: &MultiRegionSystem,
    observed: usize,
    disturbed: usize,
    t: f64,
) -> Complex64 {
    let r = &sys.regions[disturbed];
    let scale = r.disturbance / (2.0 * r.inertia);
    basis
        .residues(observed, disturbed)
        .iter()
        .zip(&basis.eigenvalues)
        .map(|(rho, lam)| rho * (lam * t).exp())
        .sum::<Complex64>()
        * scale
}

/// Frequency-deviation coefficient α + iβ of a mode, i.e. the residue divided
/// by its eigenvalue. Undefined for λ = 0.
pub fn deviation_coefficient(rho: Complex64, lambda: Complex64) -> Complex64 {
    rho / lambda
}
