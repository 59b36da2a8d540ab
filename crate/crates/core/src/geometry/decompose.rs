//! Ear-clipping triangulation followed by greedy merging of adjacent pieces
//! while the union stays convex (Hertel–Mehlhorn style).

use std::collections::HashMap;

use super::polygon::{cross, Polyhedron};
use super::{ConvexCell, Halfspace, Point2};
use crate::error::{Error, Result};

fn in_triangle(a: Point2, b: Point2, c: Point2, p: Point2) -> bool {
    let d1 = cross(a, b, p);
    let d2 = cross(b, c, p);
    let d3 = cross(c, a, p);
    d1 >= 0.0 && d2 >= 0.0 && d3 >= 0.0
}

/// Triangles as CCW index triples.
fn triangulate(v: &[Point2], eps: f64) -> Result<Vec<[usize; 3]>> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    let mut tris = Vec::with_capacity(v.len().saturating_sub(2));
    while idx.len() > 3 {
        let n = idx.len();
        let mut clipped = false;
        for k in 0..n {
            let (ia, ib, ic) = (idx[(k + n - 1) % n], idx[k], idx[(k + 1) % n]);
            let (a, b, c) = (v[ia], v[ib], v[ic]);
            if cross(a, b, c) <= eps {
                continue;
            }
            let blocked = idx.iter().any(|&j| {
                j != ia
                    && j != ib
                    && j != ic
                    && v[j] != a
                    && v[j] != b
                    && v[j] != c
                    && in_triangle(a, b, c, v[j])
            });
            if !blocked {
                tris.push([ia, ib, ic]);
                idx.remove(k);
                clipped = true;
                break;
            }
        }
        if !clipped {
            return Err(Error::Geometry(
                "ear clipping stalled on a degenerate polygon".into(),
            ));
        }
    }
    tris.push([idx[0], idx[1], idx[2]]);
    Ok(tris)
}

fn is_convex(v: &[Point2], piece: &[usize], eps: f64) -> bool {
    let n = piece.len();
    (0..n).all(|k| {
        cross(
            v[piece[(k + n - 1) % n]],
            v[piece[k]],
            v[piece[(k + 1) % n]],
        ) >= -eps
    })
}

/// Merge two CCW pieces sharing the directed edge a→b (in `p`) / b→a (in `q`).
fn merge(p: &[usize], q: &[usize], a: usize, b: usize) -> Vec<usize> {
    let rot = |s: &[usize], start: usize| -> Vec<usize> {
        let k = s.iter().position(|&x| x == start).unwrap();
        s[k..].iter().chain(&s[..k]).copied().collect()
    };
    // p from b around to a, then q from a around to b (exclusive of both ends)
    let mut out = rot(p, b);
    let qa = rot(q, a);
    out.extend(&qa[1..qa.len() - 1]);
    out
}

pub fn convex_decompose(poly: &Polyhedron) -> Result<Vec<ConvexCell>> {
    let v = &poly.vertices;
    let area = poly.area();
    if !(area > 0.0) || v.len() < 3 {
        return Err(Error::Geometry("degenerate polygon".into()));
    }
    let scale = v
        .iter()
        .map(|p| p[0].abs().max(p[1].abs()))
        .fold(1.0, f64::max);
    let eps = 1e-12 * scale * scale;
    let all: Vec<usize> = (0..v.len()).collect();
    let mut pieces: Vec<Vec<usize>> = if is_convex(v, &all, eps) {
        vec![all]
    } else {
        triangulate(v, eps)?
            .into_iter()
            .map(|t| t.to_vec())
            .collect()
    };

    loop {
        let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
        for (pi, p) in pieces.iter().enumerate() {
            for k in 0..p.len() {
                edges.insert((p[k], p[(k + 1) % p.len()]), pi);
            }
        }
        let mut merged = false;
        'outer: for pi in 0..pieces.len() {
            let p = pieces[pi].clone();
            for k in 0..p.len() {
                let (a, b) = (p[k], p[(k + 1) % p.len()]);
                if let Some(&qi) = edges.get(&(b, a)) {
                    if qi == pi {
                        continue;
                    }
                    let m = merge(&p, &pieces[qi], a, b);
                    if is_convex(v, &m, eps) {
                        let (lo, hi) = (pi.min(qi), pi.max(qi));
                        pieces.remove(hi);
                        pieces[lo] = m;
                        merged = true;
                        break 'outer;
                    }
                }
            }
        }
        if !merged {
            break;
        }
    }
    Ok(pieces.iter().map(|p| cell_of(v, p)).collect())
}

fn cell_of(v: &[Point2], piece: &[usize]) -> ConvexCell {
    let n = piece.len();
    let mut halfspaces: Vec<Halfspace> = Vec::new();
    for k in 0..n {
        let p = v[piece[k]];
        let q = v[piece[(k + 1) % n]];
        let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
        let len = dx.hypot(dy);
        if len == 0.0 {
            continue;
        }
        let a = vec![dy / len, -dx / len];
        let b = a[0] * p[0] + a[1] * p[1];
        // collinear consecutive edges give the same halfspace
        if let Some(last) = halfspaces.last() {
            if (last.a[0] - a[0]).abs() < 1e-12
                && (last.a[1] - a[1]).abs() < 1e-12
                && (last.b - b).abs() < 1e-9 * (1.0 + b.abs())
            {
                continue;
            }
        }
        halfspaces.push(Halfspace { a, b });
    }
    ConvexCell {
        halfspaces,
        vertices: piece.iter().map(|&i| v[i].to_vec()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convex_input_is_one_cell() {
        let p = Polyhedron::from_vertices(vec![[0.0, 0.0], [2.0, 0.0], [3.0, 1.0], [1.0, 2.0]])
            .unwrap();
        let cells = convex_decompose(&p).unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].vertices.len(), 4);
        assert_eq!(cells[0].halfspaces.len(), 4);
    }

    #[test]
    fn l_shape_two_cells_area_preserved() {
        let p = Polyhedron::from_vertices(vec![
            [0.0, 0.0],
            [2.0, 0.0],
            [2.0, 1.0],
            [1.0, 1.0],
            [1.0, 2.0],
            [0.0, 2.0],
        ])
        .unwrap();
        let cells = convex_decompose(&p).unwrap();
        assert!(cells.len() <= 2);
        let total: f64 = cells.iter().map(|c| c.area()).sum();
        // shoelace of the L is 3
        assert!((total - 3.0).abs() < 1e-12);
        assert!((p.area() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn halfspaces_contain_own_vertices() {
        let p = Polyhedron::from_vertices(vec![
            [0.0, 0.0],
            [4.0, 0.0],
            [4.0, 4.0],
            [2.0, 1.5],
            [0.0, 4.0],
        ])
        .unwrap();
        for c in convex_decompose(&p).unwrap() {
            for v in &c.vertices {
                assert!(c.contains(v, 1e-9));
            }
        }
    }
}
