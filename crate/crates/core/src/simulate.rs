//! Fixed-step RK4 integration of the full regional model, used as an
//! independent oracle for the modal formulas.

use crate::error::{Error, Result};
use crate::system::StateSpace;

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Per step: [Δω (N); Δδ (N)].
    pub states: Vec<Vec<f64>>,
    /// Per step: dΔω/dt per region, from the right-hand side.
    pub rocof: Vec<Vec<f64>>,
}

struct Rk4<'a> {
    a: &'a [f64],
    b: &'a [f64],
    n: usize,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl<'a> Rk4<'a> {
    fn rhs(a: &[f64], b: &[f64], n: usize, x: &[f64], out: &mut [f64]) {
        // column-major n×n
        out.copy_from_slice(b);
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                let col = &a[j * n..(j + 1) * n];
                for i in 0..n {
                    out[i] += col[i] * xj;
                }
            }
        }
    }

    fn step(&mut self, x: &mut [f64], h: f64) {
        let n = self.n;
        let [k1, k2, k3, k4] = &mut self.k;
        Self::rhs(self.a, self.b, n, x, k1);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        Self::rhs(self.a, self.b, n, &self.tmp, k2);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        Self::rhs(self.a, self.b, n, &self.tmp, k3);
        for i in 0..n {
            self.tmp[i] = x[i] + h * k3[i];
        }
        Self::rhs(self.a, self.b, n, &self.tmp, k4);
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}

fn check_args(t_end: f64, dt: f64) -> Result<usize> {
    if !(t_end > 0.0) || !(dt > 0.0) || dt > t_end || !t_end.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "need 0 < dt <= t_end, got dt = {dt}, t_end = {t_end}"
        )));
    }
    Ok((t_end / dt - 1e-9).ceil() as usize)
}

/// Streams every step (t, state, rocof) to `visit`, starting at t = 0.
pub fn simulate_with(
    ss: &StateSpace,
    t_end: f64,
    dt: f64,
    mut visit: impl FnMut(f64, &[f64], &[f64]),
) -> Result<()> {
    let steps = check_args(t_end, dt)?;
    let dim = ss.a_matrix.nrows();
    let n = ss.n_regions;
    let a = ss.a_matrix.as_slice();
    let b = ss.b_vector.as_slice();
    let mut rk = Rk4 {
        a,
        b,
        n: dim,
        k: [
            vec![0.0; dim],
            vec![0.0; dim],
            vec![0.0; dim],
            vec![0.0; dim],
        ],
        tmp: vec![0.0; dim],
    };
    let mut x = vec![0.0; dim];
    let mut dx = vec![0.0; dim];
    let mut t = 0.0;
    Rk4::rhs(a, b, dim, &x, &mut dx);
    visit(0.0, &x, &dx[..n]);
    for k in 1..=steps {
        let t_next = (k as f64 * dt).min(t_end);
        rk.step(&mut x, t_next - t);
        t = t_next;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { t });
        }
        Rk4::rhs(a, b, dim, &x, &mut dx);
        visit(t, &x, &dx[..n]);
    }
    Ok(())
}

pub fn simulate(ss: &StateSpace, t_end: f64, dt: f64) -> Result<Trajectory> {
    let mut tr = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        rocof: Vec::new(),
    };
    simulate_with(ss, t_end, dt, |t, x, r| {
        tr.times.push(t);
        tr.states.push(x.to_vec());
        tr.rocof.push(r.to_vec());
    })?;
    Ok(tr)
}

/// Most negative simulated RoCoF of `observed` on [0, t_end] and its time.
pub fn simulated_max(ss: &StateSpace, observed: usize, t_end: f64, dt: f64) -> Result<(f64, f64)> {
    let mut best = (f64::INFINITY, 0.0);
    simulate_with(ss, t_end, dt, |t, _, r| {
        if r[observed] < best.0 {
            best = (r[observed], t);
        }
    })?;
    Ok(best)
}

impl Trajectory {
    pub fn n_regions(&self) -> usize {
        self.rocof.first().map_or(0, |r| r.len())
    }

    pub fn to_csv(&self) -> String {
        let n = self.n_regions();
        let mut head = vec!["t".to_string()];
        head.extend((1..=n).map(|i| format!("domega_{i}")));
        head.extend((1..=n).map(|i| format!("ddelta_{i}")));
        head.extend((1..=n).map(|i| format!("rocof_{i}")));
        let mut out = head.join(",");
        out.push('\n');
        for ((t, x), r) in self.times.iter().zip(&self.states).zip(&self.rocof) {
            let mut row = vec![t.to_string()];
            row.extend(x.iter().map(|v| v.to_string()));
            row.extend(r.iter().map(|v| v.to_string()));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let head = lines.next().ok_or_else(|| Error::field("csv", "empty"))?;
        let cols = head.split(',').count();
        if cols < 4 || (cols - 1) % 3 != 0 {
            return Err(Error::field("csv header", "expected t + 3N columns"));
        }
        let n = (cols - 1) / 3;
        let mut tr = Trajectory {
            times: Vec::new(),
            states: Vec::new(),
            rocof: Vec::new(),
        };
        for (k, line) in lines.enumerate() {
            let vals: std::result::Result<Vec<f64>, _> = line.split(',').map(str::parse).collect();
            let vals = vals.map_err(|e| Error::Parse {
                line: k + 2,
                column: 0,
                msg: format!("{e}"),
            })?;
            if vals.len() != cols {
                return Err(Error::Parse {
                    line: k + 2,
                    column: 0,
                    msg: "wrong column count".into(),
                });
            }
            tr.times.push(vals[0]);
            tr.states.push(vals[1..1 + 2 * n].to_vec());
            tr.rocof.push(vals[1 + 2 * n..].to_vec());
        }
        Ok(tr)
    }
}
