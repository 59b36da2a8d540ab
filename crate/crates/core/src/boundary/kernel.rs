//! Tangent/normal predictor-corrector on a scalar margin field in the plane.
//! The field is positive on the insecure side and zero on the boundary; it
//! may be undefined (`None`) where the tracked quantity does not exist.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2;

pub type Field2<'a> = dyn Fn(Point2) -> Option<f64> + Sync + 'a;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    BoxExit,
    AnchorVanished,
    MaxSteps,
    CorrectorFailed,
    Closed,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelParams {
    pub step: f64,
    pub eps_s: f64,
    pub max_steps: usize,
    pub seed: u64,
    pub rays: usize,
}

/// Planar box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Box2 {
    pub lo: Point2,
    pub hi: Point2,
}

impl Box2 {
    pub fn contains(&self, p: Point2) -> bool {
        p[0] >= self.lo[0] && p[0] <= self.hi[0] && p[1] >= self.lo[1] && p[1] <= self.hi[1]
    }

    pub fn diagonal(&self) -> f64 {
        (self.hi[0] - self.lo[0]).hypot(self.hi[1] - self.lo[1])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace2 {
    pub points: Vec<Point2>,
    /// How the trace ended at its first and last point.
    pub ends: [Termination; 2],
}

fn add(a: Point2, b: Point2, s: f64) -> Point2 {
    [a[0] + s * b[0], a[1] + s * b[1]]
}

fn sub(a: Point2, b: Point2) -> Point2 {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm(a: Point2) -> f64 {
    a[0].hypot(a[1])
}

fn lerp(a: Point2, b: Point2, s: f64) -> Point2 {
    [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
}

/// Bisection on the segment a→b given bracketing margins.
fn bisect(f: &Field2, a: Point2, b: Point2, ma: f64, mb: f64, eps: f64) -> Option<Point2> {
    if ma.abs() <= eps {
        return Some(a);
    }
    if mb.abs() <= eps {
        return Some(b);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    let neg_at_lo = ma < 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let p = lerp(a, b, mid);
        let m = f(p)?;
        if m.abs() <= eps {
            return Some(p);
        }
        if (m < 0.0) == neg_at_lo {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    None
}

fn brackets(ma: f64, mb: f64) -> bool {
    (ma <= 0.0 && mb >= 0.0) || (ma >= 0.0 && mb <= 0.0)
}

/// Scans `n` points along a→b for the first bracket and bisects it.
fn root_on_segment(f: &Field2, a: Point2, b: Point2, n: usize, eps: f64) -> Option<Point2> {
    let mut prev: Option<(Point2, f64)> = None;
    for k in 0..=n {
        let p = lerp(a, b, k as f64 / n as f64);
        match f(p) {
            Some(m) => {
                if let Some((q, mq)) = prev {
                    if brackets(mq, m) {
                        if let Some(r) = bisect(f, q, p, mq, m, eps) {
                            return Some(r);
                        }
                    }
                }
                prev = Some((p, m));
            }
            None => prev = None,
        }
    }
    None
}

/// Two boundary points `step` apart, from random rays and a circle search.
pub fn seed_pair(
    f: &Field2,
    bx: &Box2,
    p: &KernelParams,
    exclude: &[Point2],
    min_sep: f64,
) -> Result<[Point2; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let draw = |rng: &mut ChaCha8Rng| {
        [
            rng.gen_range(bx.lo[0]..=bx.hi[0]),
            rng.gen_range(bx.lo[1]..=bx.hi[1]),
        ]
    };
    for _ in 0..p.rays {
        let a = draw(&mut rng);
        let b = draw(&mut rng);
        let Some(s1) = root_on_segment(f, a, b, 32, p.eps_s) else {
            continue;
        };
        if exclude.iter().any(|e| norm(sub(*e, s1)) < min_sep) {
            continue;
        }
        if let Some(s2) = seed_near(f, s1, p.step, p.eps_s) {
            return Ok([s1, s2]);
        }
    }
    Err(Error::NoBoundary(format!(
        "no sign change on {} rays",
        p.rays
    )))
}

/// A second boundary point on the circle of radius `r` around `c`.
pub fn seed_near(f: &Field2, c: Point2, r: f64, eps: f64) -> Option<Point2> {
    let n = 72;
    let at = |k: f64| {
        let a = std::f64::consts::TAU * k / n as f64;
        [c[0] + r * a.cos(), c[1] + r * a.sin()]
    };
    let mut prev: Option<(f64, f64)> = None;
    for k in 0..=n {
        let p = at(k as f64);
        match f(p) {
            Some(m) => {
                if let Some((kq, mq)) = prev {
                    if brackets(mq, m) {
                        // bisect in angle
                        let (mut lo, mut hi, mut mlo) = (kq, k as f64, mq);
                        if mq.abs() <= eps {
                            return Some(at(kq));
                        }
                        for _ in 0..100 {
                            let mid = 0.5 * (lo + hi);
                            let q = at(mid);
                            let mm = f(q)?;
                            if mm.abs() <= eps {
                                return Some(q);
                            }
                            if (mm < 0.0) == (mlo < 0.0) {
                                lo = mid;
                                mlo = mm;
                            } else {
                                hi = mid;
                            }
                        }
                    }
                }
                prev = Some((k as f64, m));
            }
            None => prev = None,
        }
    }
    None
}

/// Bisection along the normal through `pred`, bracket grown outward on both
/// sides up to 1.6 steps.
fn correct(f: &Field2, pred: Point2, normal: Point2, step: f64, eps: f64) -> Option<Point2> {
    let m0 = f(pred);
    if let Some(m) = m0 {
        if m.abs() <= eps {
            return Some(pred);
        }
    }
    let mut last: [Option<(Point2, f64)>; 2] = [m0.map(|m| (pred, m)), m0.map(|m| (pred, m))];
    let mut d = 0.1 * step;
    while d <= 1.6 * step + 1e-12 {
        for (side, sgn) in [(0usize, 1.0), (1usize, -1.0)] {
            let q = add(pred, normal, sgn * d);
            match f(q) {
                Some(mq) => {
                    if let Some((p, mp)) = last[side] {
                        if brackets(mp, mq) {
                            if let Some(r) = bisect(f, p, q, mp, mq, eps) {
                                return Some(r);
                            }
                        }
                    }
                    last[side] = Some((q, mq));
                }
                None => last[side] = None,
            }
        }
        d *= 2.0;
    }
    None
}

/// Where the boundary leaves the box between `inside` and `outside`.
fn box_crossing(
    f: &Field2,
    bx: &Box2,
    inside: Point2,
    outside: Point2,
    step: f64,
    eps: f64,
) -> Point2 {
    // intersection of the segment with the box edge
    let mut t_hit: f64 = 1.0;
    let mut axis = 0;
    for k in 0..2 {
        let d = outside[k] - inside[k];
        if d > 0.0 && outside[k] > bx.hi[k] {
            let t = (bx.hi[k] - inside[k]) / d;
            if t < t_hit {
                t_hit = t;
                axis = k;
            }
        } else if d < 0.0 && outside[k] < bx.lo[k] {
            let t = (bx.lo[k] - inside[k]) / d;
            if t < t_hit {
                t_hit = t;
                axis = k;
            }
        }
    }
    let mut q = lerp(inside, outside, t_hit.clamp(0.0, 1.0));
    let fixed = if outside[axis] > bx.hi[axis] {
        bx.hi[axis]
    } else {
        bx.lo[axis]
    };
    q[axis] = fixed;
    // slide along the edge to the boundary
    let other = 1 - axis;
    let mut a = q;
    let mut b = q;
    a[other] = (q[other] - step).max(bx.lo[other]);
    b[other] = (q[other] + step).min(bx.hi[other]);
    root_on_segment(f, a, b, 8, eps).unwrap_or(q)
}

fn march(
    f: &Field2,
    bx: &Box2,
    p: &KernelParams,
    prev: Point2,
    cur: Point2,
    start: Point2,
    budget: &mut usize,
) -> (Vec<Point2>, Termination) {
    let mut out = Vec::new();
    let (mut prev, mut cur) = (prev, cur);
    if !bx.contains(cur) {
        out.push(box_crossing(f, bx, prev, cur, p.step, p.eps_s));
        return (out, Termination::BoxExit);
    }
    loop {
        if *budget == 0 {
            return (out, Termination::MaxSteps);
        }
        *budget -= 1;
        let d = sub(cur, prev);
        let len = norm(d);
        if len == 0.0 {
            return (out, Termination::CorrectorFailed);
        }
        let t = [d[0] / len, d[1] / len];
        let pred = add(cur, t, p.step);
        let normal = [-t[1], t[0]];
        let Some(next) = correct(f, pred, normal, p.step, p.eps_s) else {
            let why = if f(pred).is_none() {
                Termination::AnchorVanished
            } else {
                Termination::CorrectorFailed
            };
            return (out, why);
        };
        if !bx.contains(next) {
            out.push(box_crossing(f, bx, cur, next, p.step, p.eps_s));
            return (out, Termination::BoxExit);
        }
        if out.len() >= 2 && norm(sub(next, start)) < 0.75 * p.step {
            return (out, Termination::Closed);
        }
        out.push(next);
        prev = cur;
        cur = next;
    }
}

/// Traces the boundary through the seed pair in both directions.
pub fn trace_from(f: &Field2, bx: &Box2, p: &KernelParams, seeds: [Point2; 2]) -> Trace2 {
    let [s1, s2] = seeds;
    let mut budget = p.max_steps;
    let (fwd, end_f) = march(f, bx, p, s1, s2, s1, &mut budget);
    let mut points = Vec::new();
    let end_b;
    if end_f == Termination::Closed {
        end_b = Termination::Closed;
        points.push(s1);
    } else {
        let (bwd, e) = march(f, bx, p, s2, s1, s2, &mut budget);
        end_b = e;
        points.extend(bwd.into_iter().rev());
        points.push(s1);
    }
    if bx.contains(s2) {
        points.push(s2);
    }
    points.extend(fwd);
    Trace2 {
        points,
        ends: [end_b, end_f],
    }
}

/// Seeds and traces up to `max_pieces` disjoint pieces of the zero set.
pub fn trace_pieces(
    f: &Field2,
    bx: &Box2,
    p: &KernelParams,
    max_pieces: usize,
) -> Result<Vec<Trace2>> {
    let mut pieces: Vec<Trace2> = Vec::new();
    let mut seen: Vec<Point2> = Vec::new();
    for k in 0..max_pieces {
        let params = KernelParams {
            seed: p.seed.wrapping_add(k as u64 * 7919),
            ..*p
        };
        match seed_pair(f, bx, &params, &seen, 2.0 * p.step) {
            Ok(seeds) => {
                let tr = trace_from(f, bx, p, seeds);
                seen.extend(tr.points.iter().copied());
                pieces.push(tr);
            }
            Err(e) => {
                if pieces.is_empty() {
                    return Err(e);
                }
                break;
            }
        }
    }
    Ok(pieces)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(step: f64) -> KernelParams {
        KernelParams {
            step,
            eps_s: 1e-6,
            max_steps: 10_000,
            seed: 3,
            rays: 64,
        }
    }

    #[test]
    fn bisection_finds_line() {
        let f = |p: Point2| Some(p[0] - 0.3);
        let r = root_on_segment(&f, [0.0, 0.5], [1.0, 0.5], 4, 1e-12).unwrap();
        assert!((r[0] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn full_circle_closes() {
        let c = [5.0, 5.0];
        let f = move |p: Point2| Some(norm(sub(p, c)) - 2.0);
        let bx = Box2 {
            lo: [0.0, 0.0],
            hi: [10.0, 10.0],
        };
        let pieces = trace_pieces(&f, &bx, &params(0.1), 1).unwrap();
        let t = &pieces[0];
        assert_eq!(t.ends, [Termination::Closed, Termination::Closed]);
        for q in &t.points {
            assert!((norm(sub(*q, c)) - 2.0).abs() < 1e-6);
        }
        assert!(t.points.len() > 100);
    }

    #[test]
    fn arc_exits_box() {
        let f = |p: Point2| Some(p[0].hypot(p[1]) - 1.0);
        let bx = Box2 {
            lo: [0.0, 0.0],
            hi: [2.0, 2.0],
        };
        let t = &trace_pieces(&f, &bx, &params(0.05), 1).unwrap()[0];
        assert_eq!(t.ends, [Termination::BoxExit, Termination::BoxExit]);
        let first = t.points[0];
        let last = *t.points.last().unwrap();
        let on_axis = |q: Point2| q[0].abs() < 1e-12 || q[1].abs() < 1e-12;
        assert!(on_axis(first) && on_axis(last));
    }

    #[test]
    fn vanishing_field_reported() {
        // defined only for x < 1
        let f = |p: Point2| if p[0] < 1.0 { Some(p[1] - 0.5) } else { None };
        let bx = Box2 {
            lo: [0.0, 0.0],
            hi: [2.0, 1.0],
        };
        let t = &trace_pieces(&f, &bx, &params(0.05), 1).unwrap()[0];
        assert!(t.ends.contains(&Termination::AnchorVanished));
        assert!(t.ends.contains(&Termination::BoxExit));
    }

    #[test]
    fn secure_box_has_no_boundary() {
        let f = |_: Point2| Some(-1.0);
        let bx = Box2 {
            lo: [0.0, 0.0],
            hi: [1.0, 1.0],
        };
        assert!(matches!(
            trace_pieces(&f, &bx, &params(0.1), 1),
            Err(Error::NoBoundary(_))
        ));
    }

    #[test]
    fn max_steps_respected() {
        let f = |p: Point2| Some(p[1] - 0.5);
        let bx = Box2 {
            lo: [0.0, 0.0],
            hi: [100.0, 1.0],
        };
        let mut p = params(0.1);
        p.max_steps = 5;
        let t = &trace_pieces(&f, &bx, &p, 1).unwrap()[0];
        assert!(t.ends.contains(&Termination::MaxSteps));
    }
}
