use serde::{Deserialize, Serialize};

use super::{Bounds, Point2};
use crate::boundary::FullBoundary;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polyhedron {
    /// Counter-clockwise, not repeated at the end.
    pub vertices: Vec<Point2>,
}

impl Polyhedron {
    pub fn area(&self) -> f64 {
        polygon_area(&self.vertices)
    }

    pub fn contains(&self, p: Point2) -> bool {
        point_in_polygon(&self.vertices, p)
    }

    pub fn is_simple(&self) -> bool {
        is_simple(&self.vertices)
    }

    /// Polygon from vertices; orientation is fixed to counter-clockwise.
    pub fn from_vertices(v: Vec<Point2>) -> Result<Self> {
        finish(v)
    }
}

pub fn polygon_area(v: &[Point2]) -> f64 {
    let n = v.len();
    let mut s = 0.0;
    for i in 0..n {
        let p = v[i];
        let q = v[(i + 1) % n];
        s += p[0] * q[1] - q[0] * p[1];
    }
    0.5 * s
}

pub(crate) fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn dist(a: Point2, b: Point2) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

pub(crate) fn point_in_polygon(v: &[Point2], p: Point2) -> bool {
    let n = v.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (v[i], v[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn segments_cross(p1: Point2, p2: Point2, q1: Point2, q2: Point2) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |a: Point2, b: Point2, c: Point2, d: f64| {
        d == 0.0
            && c[0] >= a[0].min(b[0])
            && c[0] <= a[0].max(b[0])
            && c[1] >= a[1].min(b[1])
            && c[1] <= a[1].max(b[1])
    };
    on(q1, q2, p1, d1) || on(q1, q2, p2, d2) || on(p1, p2, q1, d3) || on(p1, p2, q2, d4)
}

pub(crate) fn is_simple(v: &[Point2]) -> bool {
    let n = v.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let (a, b) = (v[i], v[(i + 1) % n]);
        for j in i + 1..n {
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let (c, d) = (v[j], v[(j + 1) % n]);
            if segments_cross(a, b, c, d) {
                return false;
            }
        }
    }
    true
}

fn clean(v: Vec<Point2>, scale: f64) -> Vec<Point2> {
    let mut out: Vec<Point2> = Vec::with_capacity(v.len());
    for p in v {
        if out.last().map_or(true, |q| dist(*q, p) > 1e-9 * scale) {
            out.push(p);
        }
    }
    while out.len() > 1 && dist(out[0], *out.last().unwrap()) <= 1e-9 * scale {
        out.pop();
    }
    // drop collinear vertices until none remain
    loop {
        let n = out.len();
        if n < 4 {
            break;
        }
        let mut removed = false;
        let mut i = 0;
        while i < out.len() && out.len() >= 4 {
            let n = out.len();
            let (a, b, c) = (out[(i + n - 1) % n], out[i], out[(i + 1) % n]);
            let ab = dist(a, b);
            let bc = dist(b, c);
            if cross(a, b, c).abs() <= 1e-12 * scale * (ab + bc).max(1e-300) * 1.0
                && (b[0] - a[0]) * (c[0] - b[0]) + (b[1] - a[1]) * (c[1] - b[1]) >= 0.0
            {
                out.remove(i);
                removed = true;
            } else {
                i += 1;
            }
        }
        if !removed {
            break;
        }
    }
    out
}

fn finish(v: Vec<Point2>) -> Result<Polyhedron> {
    let scale = v
        .iter()
        .map(|p| p[0].abs().max(p[1].abs()))
        .fold(1.0, f64::max);
    let mut v = clean(v, scale);
    if v.len() < 3 {
        return Err(Error::Geometry(
            "polygon has fewer than three vertices".into(),
        ));
    }
    if polygon_area(&v) < 0.0 {
        v.reverse();
    }
    if !(polygon_area(&v) > 0.0) {
        return Err(Error::Geometry("polygon has zero area".into()));
    }
    if !is_simple(&v) {
        return Err(Error::Geometry(
            "polygon self-intersects after closure".into(),
        ));
    }
    Ok(Polyhedron { vertices: v })
}

fn perimeter_param(bx: &Bounds, p: Point2) -> (f64, Point2) {
    let (x0, y0, x1, y1) = (bx.lo[0], bx.lo[1], bx.hi[0], bx.hi[1]);
    let w = x1 - x0;
    let h = y1 - y0;
    let x = p[0].clamp(x0, x1);
    let y = p[1].clamp(y0, y1);
    let d = [y - y0, x1 - x, y1 - y, x - x0];
    let mut e = 0;
    for k in 1..4 {
        if d[k] < d[e] {
            e = k;
        }
    }
    match e {
        0 => (x - x0, [x, y0]),
        1 => (w + (y - y0), [x1, y]),
        2 => (w + h + (x1 - x), [x, y1]),
        _ => (2.0 * w + h + (y1 - y), [x0, y]),
    }
}

fn perimeter_distance(bx: &Bounds, p: Point2) -> f64 {
    let d = [
        p[1] - bx.lo[1],
        bx.hi[0] - p[0],
        bx.hi[1] - p[1],
        p[0] - bx.lo[0],
    ];
    d.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min)
}

/// Joins arcs into one polyline by a nearest-neighbour walk over their
/// points, starting at the point closest to the box perimeter. Points closer
/// than 0.75 of the median in-arc spacing to a visited point are dropped, so
/// arcs from different anchors that overlap do not make the walk backtrack.
pub fn order_chain(arcs: &[Vec<Point2>], bx: &Bounds) -> Vec<Point2> {
    let mut gaps: Vec<f64> = arcs
        .iter()
        .flat_map(|a| a.windows(2).map(|w| dist(w[0], w[1])))
        .filter(|d| *d > 0.0)
        .collect();
    gaps.sort_by(f64::total_cmp);
    let radius = gaps.get(gaps.len() / 2).map_or(0.0, |g| 0.75 * g);
    let mut left: Vec<Point2> = arcs.iter().flatten().copied().collect();
    let Some(k0) = (0..left.len()).min_by(|&i, &j| {
        perimeter_distance(bx, left[i]).total_cmp(&perimeter_distance(bx, left[j]))
    }) else {
        return Vec::new();
    };
    let mut chain = vec![left.swap_remove(k0)];
    loop {
        let tail = *chain.last().unwrap();
        left.retain(|&p| dist(p, tail) >= radius);
        let Some(k) =
            (0..left.len()).min_by(|&i, &j| dist(tail, left[i]).total_cmp(&dist(tail, left[j])))
        else {
            break;
        };
        chain.push(left.swap_remove(k));
    }
    chain
}

/// Closes a boundary polyline with the box perimeter on the secure side.
/// `secure` classifies points; it is queried near box corners only.
pub fn close_chain(
    chain: &[Point2],
    bx: &Bounds,
    secure: &dyn Fn(Point2) -> bool,
) -> Result<Polyhedron> {
    if bx.dim() != 2 {
        return Err(Error::Geometry("polygon closure needs a 2-D box".into()));
    }
    let (x0, y0, x1, y1) = (bx.lo[0], bx.lo[1], bx.hi[0], bx.hi[1]);
    let corners = [[x0, y0], [x1, y0], [x1, y1], [x0, y1]];
    let inset = |c: Point2| {
        let k = 1e-3;
        [
            c[0] + k * (0.5 * (x0 + x1) - c[0]),
            c[1] + k * (0.5 * (y0 + y1) - c[1]),
        ]
    };
    if chain.len() < 2 {
        let votes = corners.iter().filter(|&&c| secure(inset(c))).count();
        if votes >= 2 && secure(inset([0.5 * (x0 + x1), 0.5 * (y0 + y1)])) {
            return finish(corners.to_vec());
        }
        return Err(Error::Geometry(
            "no boundary and the box is not secure".into(),
        ));
    }
    let edge_tol = 1e-6 * bx.diagonal();
    let first = chain[0];
    let last = *chain.last().unwrap();
    if perimeter_distance(bx, first) > edge_tol
        && perimeter_distance(bx, last) > edge_tol
        && dist(first, last) < 0.05 * bx.diagonal()
    {
        // closed curve inside the box
        let poly = finish(chain.to_vec())?;
        let c = corners[0];
        if secure(inset(c)) && !poly.contains(inset(c)) {
            return Err(Error::Geometry("secure region has a hole".into()));
        }
        return Ok(poly);
    }
    let (s_start, p_start) = perimeter_param(bx, first);
    let (s_end, p_end) = perimeter_param(bx, last);
    let w = x1 - x0;
    let h = y1 - y0;
    let per = 2.0 * (w + h);
    let cpar = [0.0, w, w + h, 2.0 * w + h];
    // corners met going counter-clockwise from end to start
    let ccw_gap = (s_start - s_end).rem_euclid(per);
    let mut ccw: Vec<(f64, Point2)> = (0..4)
        .map(|k| ((cpar[k] - s_end).rem_euclid(per), corners[k]))
        .filter(|(d, _)| *d > 0.0 && *d < ccw_gap)
        .collect();
    ccw.sort_by(|a, b| a.0.total_cmp(&b.0));
    let ccw: Vec<Point2> = ccw.into_iter().map(|c| c.1).collect();
    let mut cw: Vec<Point2> = corners
        .iter()
        .filter(|c| !ccw.contains(c))
        .copied()
        .collect();
    cw.sort_by(|a, b| {
        let da = (s_end - perimeter_param(bx, *a).0).rem_euclid(per);
        let db = (s_end - perimeter_param(bx, *b).0).rem_euclid(per);
        da.total_cmp(&db)
    });
    let votes = |cs: &[Point2]| {
        let yes = cs.iter().filter(|&&c| secure(inset(c))).count();
        2 * yes > cs.len() || (2 * yes == cs.len() && yes > 0 && secure(inset(cs[0])))
    };
    let use_ccw = if !ccw.is_empty() {
        votes(&ccw)
    } else {
        !votes(&cw)
    };
    let mut v: Vec<Point2> = chain.to_vec();
    if dist(last, p_end) > 0.0 {
        v.push(p_end);
    }
    v.extend(if use_ccw { ccw } else { cw });
    if dist(first, p_start) > 0.0 {
        v.push(p_start);
    }
    finish(v)
}

/// Polygon enclosed by the full boundary and the secure-side box edges.
/// `tol` > 0 thins the ordered boundary with [`simplify_chain`] first.
pub fn build_polyhedron(
    fb: &FullBoundary,
    bx: &Bounds,
    secure: &dyn Fn(Point2) -> bool,
    tol: f64,
) -> Result<Polyhedron> {
    let arcs: Vec<Vec<Point2>> = fb
        .arcs()
        .into_iter()
        .map(|a| a.into_iter().map(|p| [p[0], p[1]]).collect())
        .collect();
    let chain = simplify_chain(&order_chain(&arcs, bx), tol);
    close_chain(&chain, bx, secure)
}

fn segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    if len2 == 0.0 {
        return dist(p, a);
    }
    let t = (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0);
    dist(p, [a[0] + t * d[0], a[1] + t * d[1]])
}

/// Douglas–Peucker: keeps a subset of the points, endpoints included, such
/// that every dropped point is within `tol` of the kept polyline.
pub fn simplify_chain(chain: &[Point2], tol: f64) -> Vec<Point2> {
    if !(tol > 0.0) || chain.len() < 3 {
        return chain.to_vec();
    }
    let mut keep = vec![false; chain.len()];
    keep[0] = true;
    keep[chain.len() - 1] = true;
    let mut stack = vec![(0, chain.len() - 1)];
    while let Some((i, j)) = stack.pop() {
        let mut far = (0.0, 0);
        for k in i + 1..j {
            let d = segment_distance(chain[k], chain[i], chain[j]);
            if d > far.0 {
                far = (d, k);
            }
        }
        if far.0 > tol {
            keep[far.1] = true;
            stack.push((i, far.1));
            stack.push((far.1, j));
        }
    }
    chain
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(p, _)| *p)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box() -> Bounds {
        Bounds::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn diagonal_boundary_gives_triangle() {
        // secure above the line x + y = 1
        let chain = vec![[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]];
        let p = close_chain(&chain, &unit_box(), &|p| p[0] + p[1] >= 1.0).unwrap();
        assert!((p.area() - 0.5).abs() < 1e-12);
        assert_eq!(p.vertices.len(), 3);
        assert!(p.contains([0.9, 0.9]));
        let q = close_chain(&chain, &unit_box(), &|p| p[0] + p[1] <= 1.0).unwrap();
        assert!((q.area() - 0.5).abs() < 1e-12);
        assert!(q.contains([0.1, 0.1]));
    }

    #[test]
    fn horizontal_cut_gives_quad() {
        let chain = vec![[0.0, 0.25], [1.0, 0.25]];
        let p = close_chain(&chain, &unit_box(), &|p| p[1] >= 0.25).unwrap();
        assert!((p.area() - 0.75).abs() < 1e-12);
        assert_eq!(p.vertices.len(), 4);
    }

    #[test]
    fn empty_boundary_secure_box() {
        let p = close_chain(&[], &unit_box(), &|_| true).unwrap();
        assert!((p.area() - 1.0).abs() < 1e-15);
        assert!(close_chain(&[], &unit_box(), &|_| false).is_err());
    }

    #[test]
    fn circle_arc_area() {
        // secure outside a circle of radius 0.5 about the origin corner
        let r = 0.5;
        let n = 400;
        let chain: Vec<Point2> = (0..=n)
            .map(|k| {
                let a = std::f64::consts::FRAC_PI_2 * k as f64 / n as f64;
                [r * a.cos(), r * a.sin()]
            })
            .collect();
        let p = close_chain(&chain, &unit_box(), &|p| p[0].hypot(p[1]) >= r).unwrap();
        let exact = 1.0 - std::f64::consts::PI * r * r / 4.0;
        // inscribed polygon error: (r²/2)(θ − sin θ) per chord
        let th = std::f64::consts::FRAC_PI_2 / n as f64;
        let chord_err = n as f64 * 0.5 * r * r * (th - th.sin());
        assert!((p.area() - (exact + chord_err)).abs() < 1e-12);
    }

    #[test]
    fn simplification_keeps_corners() {
        let mut chain: Vec<Point2> = (0..=10).map(|k| [k as f64, 0.0]).collect();
        chain.extend((1..=10).map(|k| [10.0, k as f64 + if k % 2 == 0 { 0.01 } else { -0.01 }]));
        let s = simplify_chain(&chain, 0.05);
        assert_eq!(s, vec![[0.0, 0.0], [10.0, 0.0], [10.0, 10.01]]);
        assert_eq!(simplify_chain(&chain, 0.0), chain);
        for p in &chain {
            let d = s
                .windows(2)
                .map(|w| segment_distance(*p, w[0], w[1]))
                .fold(f64::INFINITY, f64::min);
            assert!(d <= 0.05);
        }
    }

    #[test]
    fn self_intersection_detected() {
        let bow = vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(Polyhedron::from_vertices(bow).is_err());
    }

    #[test]
    fn chain_ordering_reverses_arcs() {
        let bx = Bounds::new(vec![0.0, 0.0], vec![10.0, 10.0]).unwrap();
        // second arc runs backwards, third retraces the first
        let arcs = vec![
            vec![[4.0, 4.0], [5.0, 5.0], [6.0, 6.0]],
            vec![[3.0, 3.0], [2.0, 2.0], [1.0, 1.0]],
            vec![[5.05, 5.0], [6.05, 6.0], [7.0, 7.0]],
        ];
        let c = order_chain(&arcs, &bx);
        let want: Vec<Point2> = (1..=7).map(|k| [k as f64, k as f64]).collect();
        assert_eq!(c, want);
    }
}
