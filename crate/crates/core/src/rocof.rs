//! Local and global RoCoF maxima anchored at the extrema of the
//! trigonometric components.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modal::{self, ModalDecomposition};
use crate::system::MultiRegionSystem;

/// Hard cap on the number of swings scanned per component.
pub const L_MAX_CAP: usize = 20;

/// Envelope fraction below which later swings are not scanned.
pub const ENVELOPE_CUTOFF: f64 = 0.01;

/// Which candidate produced a maximum. Component and swing are 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Anchor {
    Initial,
    Swing { component: usize, swing: usize },
}

impl Anchor {
    pub fn swing(component: usize, swing: usize) -> Self {
        Anchor::Swing { component, swing }
    }

    /// (component, swing), with (0, 0) for the initial value.
    pub fn indices(&self) -> (usize, usize) {
        match *self {
            Anchor::Initial => (0, 0),
            Anchor::Swing { component, swing } => (component, swing),
        }
    }

    pub fn from_indices(component: usize, swing: usize) -> Self {
        if component == 0 {
            Anchor::Initial
        } else {
            Anchor::Swing { component, swing }
        }
    }
}

impl fmt::Display for Anchor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Anchor::Initial => write!(f, "t=0"),
            Anchor::Swing { component, swing } => write!(f, "({component},{swing})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtremumAnchor {
    pub component: usize,
    pub swing: usize,
    pub t_hat: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum EpsT {
    /// Fraction of the anchoring component's period.
    PeriodFraction(f64),
    Seconds(f64),
}

impl EpsT {
    pub fn seconds(&self, period: f64) -> f64 {
        match *self {
            EpsT::PeriodFraction(f) => f * period,
            EpsT::Seconds(s) => s,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxOptions {
    /// Swings per component; `None` picks it from the decay envelope.
    pub l_max: Option<usize>,
    pub eps_t: EpsT,
}

impl Default for MaxOptions {
    fn default() -> Self {
        MaxOptions {
            l_max: None,
            eps_t: EpsT::PeriodFraction(0.15),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rejection {
    DegenerateCurvature,
    WrongCurvature,
    Drift,
    NegativeTime,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalMax {
    pub anchor: ExtremumAnchor,
    /// Stationary point of the second-order Taylor polynomial around t̂.
    pub t_taylor: f64,
    /// Stationary point of the full waveform reached from `t_taylor`.
    pub t_star: f64,
    /// RoCoF at `t_star`, per-unit/s.
    pub value: f64,
    /// Taylor polynomial at `t_taylor`, per-unit/s.
    pub taylor_value: f64,
    pub accepted: bool,
    /// Why the Taylor model alone was not accepted. Set even when the
    /// window search recovered the extremum.
    pub rejection: Option<Rejection>,
    /// `t_star` came from the exact-waveform window search.
    pub windowed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalMax {
    /// Per-unit/s, negative for load-increase disturbances.
    pub value: f64,
    pub t_star: f64,
    pub winner: Anchor,
    /// Swing number of the winner; `None` when the initial value wins.
    pub msn: Option<usize>,
    pub locals: Vec<LocalMax>,
}

impl GlobalMax {
    pub fn magnitude(&self) -> f64 {
        self.value.abs()
    }
}

fn component(md: &ModalDecomposition, m: usize) -> Result<&modal::TrigComponent> {
    if m == 0 || m > md.trig.len() {
        return Err(Error::InvalidArgument(format!(
            "component {m} does not exist ({} components)",
            md.trig.len()
        )));
    }
    let c = &md.trig[m - 1];
    if !(c.ang_freq > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "component {m} has non-positive angular frequency"
        )));
    }
    Ok(c)
}

fn t_hat(c: &modal::TrigComponent, l: usize) -> f64 {
    ((2 * l + 1) as f64 * PI - c.phase) / c.ang_freq
}

/// Anchors t̂ = ((2l+1)π − θ)/ω for l = 0..l_max−1; swing numbers are l+1.
pub fn extrema_times(
    md: &ModalDecomposition,
    m: usize,
    l_max: usize,
) -> Result<Vec<ExtremumAnchor>> {
    if l_max == 0 {
        return Err(Error::InvalidArgument("l_max must be >= 1".into()));
    }
    let c = component(md, m)?;
    Ok((0..l_max)
        .map(|l| ExtremumAnchor {
            component: m,
            swing: l + 1,
            t_hat: t_hat(c, l),
        })
        .filter(|a| a.t_hat >= 0.0)
        .collect())
}

/// Swings scanned for component m when no explicit count is given.
pub fn default_l_max(md: &ModalDecomposition, m: usize) -> usize {
    let Ok(c) = component(md, m) else { return 1 };
    if c.decay >= 0.0 {
        return L_MAX_CAP;
    }
    for l in 0..L_MAX_CAP {
        if (c.decay * t_hat(c, l).max(0.0)).exp() < ENVELOPE_CUTOFF {
            return l + 1;
        }
    }
    L_MAX_CAP
}

fn l_max_for(md: &ModalDecomposition, m: usize, opts: &MaxOptions) -> usize {
    opts.l_max.unwrap_or_else(|| default_l_max(md, m))
}

fn curvature_scale(md: &ModalDecomposition) -> f64 {
    let mut s = md.exp_amplitude.abs() * md.exp_decay.powi(2);
    for e in &md.extra_exp {
        s += e.amplitude.abs() * e.decay.powi(2);
    }
    for c in &md.trig {
        s += c.amplitude * (c.decay.powi(2) + c.ang_freq.powi(2));
    }
    s
}

pub fn taylor_local_max(md: &ModalDecomposition, anchor: ExtremumAnchor, eps_t: f64) -> LocalMax {
    let th = anchor.t_hat;
    let g0 = md.unit_derivative(th, 0);
    let g1 = md.unit_derivative(th, 1);
    let g2 = md.unit_derivative(th, 2);
    let sign = md.scale.signum();
    let reject =
        |t_taylor: f64, taylor_value: f64, why: Rejection| match window_search(md, th, eps_t, sign)
        {
            Some(t) => LocalMax {
                anchor,
                t_taylor,
                t_star: t,
                value: md.scale * md.unit(t),
                taylor_value,
                accepted: true,
                rejection: Some(why),
                windowed: true,
            },
            None => LocalMax {
                anchor,
                t_taylor,
                t_star: t_taylor,
                value: md.scale * md.unit(t_taylor.max(0.0)),
                taylor_value,
                accepted: false,
                rejection: Some(why),
                windowed: false,
            },
        };
    if !(g2.abs() > 1e-12 * curvature_scale(md)) {
        return reject(th, md.scale * g0, Rejection::DegenerateCurvature);
    }
    let s = -g1 / g2;
    let t_taylor = th + s;
    let taylor_value = md.scale * (g0 + g1 * s + 0.5 * g2 * s * s);
    if sign * g2 <= 0.0 {
        return reject(t_taylor, taylor_value, Rejection::WrongCurvature);
    }
    if !(s.abs() < eps_t) {
        return reject(t_taylor, taylor_value, Rejection::Drift);
    }
    if t_taylor < 0.0 {
        return reject(t_taylor, taylor_value, Rejection::NegativeTime);
    }
    // Newton leaving the window falls back to the window search, then to
    // the Taylor point itself
    let (t_star, windowed) = match polish(md, t_taylor, th, eps_t, sign) {
        Some(t) => (t, false),
        None => match window_search(md, th, eps_t, sign) {
            Some(t) if sign * md.unit(t) <= sign * md.unit(t_taylor) => (t, true),
            _ => (t_taylor, false),
        },
    };
    LocalMax {
        anchor,
        t_taylor,
        t_star,
        value: md.scale * md.unit(t_star),
        taylor_value,
        accepted: true,
        rejection: None,
        windowed,
    }
}

const WINDOW_SAMPLES: usize = 24;

/// Interior extremum of the exact waveform on [t̂ − ε, t̂ + ε] ∩ [0, ∞) when
/// the Taylor model around t̂ is unusable, e.g. near a 2:1 frequency ratio
/// where another component bends the waveform the other way at t̂. `None`
/// when the best sample sits on the window edge.
fn window_search(md: &ModalDecomposition, th: f64, eps_t: f64, sign: f64) -> Option<f64> {
    let lo = (th - eps_t).max(0.0);
    let hi = th + eps_t;
    if !(hi > lo) {
        return None;
    }
    let h = (hi - lo) / (WINDOW_SAMPLES - 1) as f64;
    let f = |t: f64| sign * md.unit(t);
    let (i, _) = (0..WINDOW_SAMPLES)
        .map(|i| (i, f(lo + h * i as f64)))
        .min_by(|a, b| a.1.total_cmp(&b.1))?;
    if i == 0 || i == WINDOW_SAMPLES - 1 {
        return None;
    }
    // Newton inside the bracketing samples, golden section if it strays
    let (mut a, mut b) = (lo + h * (i - 1) as f64, lo + h * (i + 1) as f64);
    let mut t = lo + h * i as f64;
    for _ in 0..12 {
        let d1 = md.unit_derivative(t, 1);
        let d2 = md.unit_derivative(t, 2);
        if !(sign * d2 > 0.0) {
            break;
        }
        let next = t - d1 / d2;
        if !(next > a && next < b) {
            break;
        }
        let done = (next - t).abs() <= 1e-13 * (1.0 + t.abs());
        t = next;
        if done {
            return Some(t);
        }
    }
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-12 * (1.0 + b.abs()) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    Some(0.5 * (a + b))
}

/// Newton iterations on the exact waveform's derivative, kept inside the
/// acceptance window. `None` if they leave it or end on a worse value.
fn polish(md: &ModalDecomposition, t0: f64, th: f64, eps_t: f64, sign: f64) -> Option<f64> {
    let mut t = t0;
    for _ in 0..12 {
        let d1 = md.unit_derivative(t, 1);
        let d2 = md.unit_derivative(t, 2);
        if sign * d2 <= 0.0 {
            return None;
        }
        let dt = -d1 / d2;
        t += dt;
        if !((t - th).abs() < eps_t) || t < 0.0 {
            return None;
        }
        if dt.abs() <= 1e-13 * (1.0 + t.abs()) {
            break;
        }
    }
    (sign * md.unit(t) <= sign * md.unit(t0)).then_some(t)
}

/// All local maxima scanned under `opts`, in (component, swing) order.
pub fn local_maxima(md: &ModalDecomposition, opts: &MaxOptions) -> Vec<LocalMax> {
    let mut out = Vec::new();
    for m in 1..=md.trig.len() {
        let c = &md.trig[m - 1];
        if !(c.ang_freq > 0.0) {
            continue;
        }
        let eps = opts.eps_t.seconds(c.period());
        let Ok(anchors) = extrema_times(md, m, l_max_for(md, m, opts)) else {
            continue;
        };
        out.extend(anchors.into_iter().map(|a| taylor_local_max(md, a, eps)));
    }
    out
}

pub fn global_max(md: &ModalDecomposition, opts: &MaxOptions) -> GlobalMax {
    let locals = local_maxima(md, opts);
    let mut best = (md.scale * md.unit(0.0), 0.0, Anchor::Initial);
    for lm in locals.iter().filter(|l| l.accepted) {
        let tol = 1e-12 * best.0.abs().max(lm.value.abs());
        let better =
            lm.value < best.0 - tol || ((lm.value - best.0).abs() <= tol && lm.t_star < best.1);
        if better {
            best = (
                lm.value,
                lm.t_star,
                Anchor::swing(lm.anchor.component, lm.anchor.swing),
            );
        }
    }
    let msn = match best.2 {
        Anchor::Initial => None,
        Anchor::Swing { swing, .. } => Some(swing),
    };
    GlobalMax {
        value: best.0,
        t_star: best.1,
        winner: best.2,
        msn,
        locals,
    }
}

/// Value attributed to a single anchor, `None` if the anchor is rejected.
pub fn anchor_value(md: &ModalDecomposition, anchor: Anchor, opts: &MaxOptions) -> Option<f64> {
    match anchor {
        Anchor::Initial => Some(md.scale * md.unit(0.0)),
        Anchor::Swing {
            component: m,
            swing,
        } => {
            let c = md.trig.get(m.checked_sub(1)?)?;
            if swing == 0 || !(c.ang_freq > 0.0) {
                return None;
            }
            let a = ExtremumAnchor {
                component: m,
                swing,
                t_hat: t_hat(c, swing - 1),
            };
            if a.t_hat < 0.0 {
                return None;
            }
            let lm = taylor_local_max(md, a, opts.eps_t.seconds(c.period()));
            lm.accepted.then_some(lm.value)
        }
    }
}

/// Horizon for dense-grid checks: max(10 s, last anchor + one period).
pub fn check_horizon(md: &ModalDecomposition, opts: &MaxOptions) -> f64 {
    let mut h: f64 = 10.0;
    for m in 1..=md.trig.len() {
        let c = &md.trig[m - 1];
        if c.ang_freq > 0.0 {
            let l = l_max_for(md, m, opts);
            h = h.max(t_hat(c, l - 1) + c.period());
        }
    }
    h
}

/// Global maximum for one (observed, disturbed) pair of a system.
pub fn system_global_max(
    sys: &MultiRegionSystem,
    observed: usize,
    disturbed: usize,
    opts: &MaxOptions,
) -> Result<GlobalMax> {
    let md = modal::decompose(sys, observed, disturbed)?;
    Ok(global_max(&md, opts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modal::{ExpComponent, TrigComponent};

    fn lone(amplitude: f64, decay: f64, ang_freq: f64, phase: f64) -> ModalDecomposition {
        ModalDecomposition {
            observed: 0,
            disturbed: 0,
            exp_amplitude: 0.0,
            exp_decay: 0.0,
            trig: vec![TrigComponent {
                amplitude,
                decay,
                ang_freq,
                phase,
            }],
            extra_exp: Vec::<ExpComponent>::new(),
            scale: 0.25,
        }
    }

    #[test]
    fn anchor_times_substitution() {
        let md = lone(1.0, 0.0, PI, 0.0);
        let a = extrema_times(&md, 1, 3).unwrap();
        let t: Vec<f64> = a.iter().map(|a| a.t_hat).collect();
        assert!(
            (t[0] - 1.0).abs() < 1e-15 && (t[1] - 3.0).abs() < 1e-15 && (t[2] - 5.0).abs() < 1e-15
        );
        assert_eq!(a[0].swing, 1);
    }

    #[test]
    fn anchor_spacing_is_one_period() {
        let md = lone(1.0, -0.2, 2.7, 0.4);
        let a = extrema_times(&md, 1, 6).unwrap();
        for w in a.windows(2) {
            assert!((w[1].t_hat - w[0].t_hat - 2.0 * PI / 2.7).abs() < 1e-12);
        }
    }

    #[test]
    fn anchor_errors() {
        let md = lone(1.0, 0.0, PI, 0.0);
        assert!(extrema_times(&md, 2, 3).is_err());
        assert!(extrema_times(&md, 1, 0).is_err());
        assert!(extrema_times(&lone(1.0, 0.0, 0.0, 0.0), 1, 3).is_err());
    }

    #[test]
    fn lone_undamped_component() {
        let md = lone(0.8, 0.0, 3.0, 0.7);
        let a = extrema_times(&md, 1, 1).unwrap()[0];
        let lm = taylor_local_max(&md, a, 0.3);
        assert!(lm.accepted);
        assert!((lm.t_taylor - a.t_hat).abs() < 1e-12);
        assert!((lm.t_star - a.t_hat).abs() < 1e-12);
        assert!((lm.value + 0.8 * 0.25).abs() < 1e-12);
        assert!((lm.taylor_value + 0.8 * 0.25).abs() < 1e-12);
    }

    #[test]
    fn taylor_step_matches_closed_form() {
        let mut md = lone(0.9, -0.05, 2.0, 0.4);
        md.exp_amplitude = -0.3;
        md.exp_decay = -0.2;
        md.trig.push(TrigComponent {
            amplitude: 0.25,
            decay: -0.1,
            ang_freq: 4.6,
            phase: -0.8,
        });
        let a = extrema_times(&md, 1, 1).unwrap()[0];
        let lm = taylor_local_max(&md, a, 1.0);
        // derivatives by central differences
        let h = 1e-4;
        let f = |t: f64| md.unit(t);
        let g1 = (f(a.t_hat + h) - f(a.t_hat - h)) / (2.0 * h);
        let g2 = (f(a.t_hat + h) - 2.0 * f(a.t_hat) + f(a.t_hat - h)) / (h * h);
        let want = a.t_hat - g1 / g2;
        assert!(
            (lm.t_taylor - want).abs() < 1e-5,
            "{} vs {want}",
            lm.t_taylor
        );
        // halving the trig curvature would move the stationary point
        let trig2: f64 = md.trig.iter().map(|c| c.derivative(a.t_hat, 2)).sum();
        let halved = a.t_hat - g1 / (g2 - 0.5 * trig2);
        assert!((halved - want).abs() > 1e-3);
    }

    #[test]
    fn weak_component_rejected() {
        // a strong slow cosine plus a 1e-7 relative fast one; the fast one's
        // anchors sit on the strong component's slope
        let mut md = lone(1.0, 0.0, 1.0, 0.3);
        md.trig.push(TrigComponent {
            amplitude: 1e-7,
            decay: 0.0,
            ang_freq: 7.3,
            phase: -1.1,
        });
        for a in extrema_times(&md, 2, 5).unwrap() {
            let lm = taylor_local_max(&md, a, 0.15 * 2.0 * PI / 7.3);
            assert!(!lm.accepted, "{lm:?}");
        }
    }

    #[test]
    fn single_region_global_max_is_initial() {
        let s = MultiRegionSystem::new(
            vec![crate::system::Region::new(0, 5.0).disturbance(1.0)],
            vec![],
            60.0,
        )
        .unwrap();
        let g = system_global_max(&s, 0, 0, &MaxOptions::default()).unwrap();
        assert!((g.value + 0.1).abs() < 1e-15);
        assert_eq!(g.winner, Anchor::Initial);
        assert_eq!(g.msn, None);
    }

    #[test]
    fn default_l_max_follows_envelope() {
        assert_eq!(default_l_max(&lone(1.0, 0.0, 2.0, 0.0), 1), L_MAX_CAP);
        // envelope after l periods: exp(-0.5 * (π + 2πl)/1) drops below 1% at l = 1
        assert_eq!(default_l_max(&lone(1.0, -0.5, 1.0, 0.0), 1), 2);
    }

    #[test]
    fn ties_prefer_earlier_time() {
        // two equal undamped minima: the winner is the first swing
        let md = lone(1.0, 0.0, 2.0, 0.0);
        let g = global_max(
            &md,
            &MaxOptions {
                l_max: Some(4),
                ..Default::default()
            },
        );
        assert_eq!(g.winner, Anchor::swing(1, 1));
        assert_eq!(g.msn, Some(1));
    }
}
