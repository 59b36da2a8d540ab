use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use inertia_region::boundary::{
    self, boundary_csv, boundary_error, candidate_anchors, coi_boundary, conservative_fit,
    reference_boundary, trace_2d, trace_3d, BoundaryRow, SearchContext, DEFAULT_SLICES,
};
use inertia_region::dispatch::{
    build_problem, period_security, solve, validate_schedule, Disjunction, DispatchOptions,
    SecurityMethod, SecuritySpec, DEFAULT_SIMPLIFY,
};
use inertia_region::geometry::{all_pairs, assess, region_cells, to_disjunctive};
use inertia_region::modal::{eigendecompose, real_modes};
use inertia_region::rocof::{global_max, EpsT, MaxOptions};
use inertia_region::simulate::simulate;
use inertia_region::system::{build_state_space, load_document, Scenario};

#[derive(Parser)]
#[command(
    name = "inertia-region",
    version,
    about = "Regional inertia security regions under RoCoF limits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// RK4 trajectory of every region (CSV).
    Simulate(Common),
    /// Eigenvalues and the modal decomposition of one region pair.
    Modes(Common),
    /// Analytic global maximum RoCoF (JSON).
    RocofMax(Common),
    /// Boundary traces per anchor and the assembled full boundary (CSV).
    Trace(Common),
    /// Global maximum RoCoF over a grid of the adjustable inertias (CSV).
    Contour(Common),
    /// Secure polygon and its convex cells (JSON, CSV).
    Decompose(Common),
    /// Verdict for one inertia vector (JSON).
    Assess(Common),
    /// RoCoF-secure commitment and inertia dispatch.
    Dispatch(DispatchArgs),
    /// COI, conservative and traced boundaries against the simulated one.
    Compare(Common),
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// RoCoF limit, Hz/s; defaults to the scenario's, else 0.5.
    #[arg(long)]
    rocof_lim: Option<f64>,
    #[arg(long, default_value_t = 0)]
    observed: usize,
    /// Defaults to the first region carrying a disturbance.
    #[arg(long)]
    disturbed: Option<usize>,
    /// Taylor acceptance window as a fraction of the component period.
    #[arg(long)]
    eps_t: Option<f64>,
    /// Boundary tolerance, Hz/s; defaults to 1e-3 of the limit.
    #[arg(long)]
    eps_s: Option<f64>,
    /// Tangent step, seconds of inertia.
    #[arg(long, default_value_t = 1.0)]
    step: f64,
    #[arg(long)]
    lmax: Option<usize>,
    /// Integration step, s.
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Simulation horizon, s.
    #[arg(long, default_value_t = 10.0)]
    t_end: f64,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value_t = boundary::DEFAULT_SEED)]
    seed: u64,
    /// Grid points per axis for contours, anchor search and fits.
    #[arg(long, default_value_t = 13)]
    grid: usize,
    /// Boundary polyline thinning before decomposition, seconds of inertia.
    #[arg(long, default_value_t = DEFAULT_SIMPLIFY)]
    simplify: f64,
    /// Scan lines per axis of the simulated reference boundary.
    #[arg(long, default_value_t = 41)]
    lines: usize,
    /// Comma-separated inertia vector, s (assess).
    #[arg(long, value_delimiter = ',')]
    inertia: Vec<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Security {
    None,
    Coi,
    Proposed,
    Conservative,
}

#[derive(Args)]
struct DispatchArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "proposed")]
    security: Security,
    #[arg(long, default_value_t = 4)]
    segments: usize,
    /// Absolute optimality gap, $.
    #[arg(long, default_value_t = 1.0)]
    gap: f64,
    #[arg(long, default_value_t = 20_000)]
    node_limit: usize,
    /// Encoding of the one-cell-per-period choice.
    #[arg(long, value_enum, default_value = "hull")]
    disjunction: Form,
}

#[derive(Clone, Copy, ValueEnum)]
enum Form {
    BigM,
    Hull,
}

/// Hz/s, used when neither the flag nor the scenario sets a limit.
const DEFAULT_ROCOF_LIM: f64 = 0.5;

/// Failures in the analysis itself, as opposed to bad usage.
struct Domain(anyhow::Error);

struct Run {
    scenario: Scenario,
    opts: MaxOptions,
    observed: usize,
    disturbed: usize,
    /// Per-unit/s.
    lim: f64,
    freq: f64,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        bail!("--{name} must be positive");
    }
    Ok(())
}

impl Common {
    fn load(&self) -> Result<Run> {
        positive("step", self.step)?;
        positive("dt", self.dt)?;
        positive("t-end", self.t_end)?;
        for (n, v) in [
            ("rocof-lim", self.rocof_lim),
            ("eps-t", self.eps_t),
            ("eps-s", self.eps_s),
        ] {
            if let Some(v) = v {
                positive(n, v)?;
            }
        }
        if !(self.simplify >= 0.0) || !self.simplify.is_finite() {
            bail!("--simplify must be non-negative");
        }
        if self.lmax == Some(0) {
            bail!("--lmax must be at least 1");
        }
        let text = fs::read_to_string(&self.scenario)
            .with_context(|| format!("reading {}", self.scenario.display()))?;
        let scenario =
            load_document(&text).with_context(|| format!("loading {}", self.scenario.display()))?;
        let sys = &scenario.system;
        let disturbed = match self.disturbed {
            Some(d) => d,
            None => *sys
                .disturbed()
                .first()
                .ok_or_else(|| anyhow!("scenario has no disturbed region"))?,
        };
        if self.observed >= sys.n() || disturbed >= sys.n() {
            bail!("region index out of range for {} regions", sys.n());
        }
        let mut opts = MaxOptions::default();
        opts.l_max = self.lmax;
        if let Some(e) = self.eps_t {
            opts.eps_t = EpsT::PeriodFraction(e);
        }
        let freq = sys.nominal_freq;
        let lim_hz = self
            .rocof_lim
            .or(scenario.rocof_lim_hz_per_s)
            .unwrap_or(DEFAULT_ROCOF_LIM);
        Ok(Run {
            opts,
            observed: self.observed,
            disturbed,
            lim: lim_hz / freq,
            freq,
            scenario,
        })
    }

    fn context(&self, run: &Run) -> Result<SearchContext> {
        let mut ctx = SearchContext::new(
            run.scenario.system.clone(),
            run.observed,
            run.disturbed,
            run.lim,
        )?;
        ctx.set_step(self.step)?;
        if let Some(e) = self.eps_s {
            ctx.set_eps_s(e / run.freq)?;
        }
        ctx.seed = self.seed;
        ctx.max_options = run.opts;
        Ok(ctx)
    }
}

fn write(dir: &Path, name: &str, body: &str) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let p = dir.join(name);
    fs::write(&p, body).with_context(|| format!("writing {}", p.display()))?;
    log::info!("wrote {}", p.display());
    Ok(())
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn cmd_simulate(c: &Common) -> Result<()> {
    let run = c.load()?;
    let ss = build_state_space(&run.scenario.system);
    let tr = simulate(&ss, c.t_end, c.dt)?;
    write(&c.out, "trajectory.csv", &tr.to_csv())
}

#[derive(Serialize)]
struct ModeRow {
    real: f64,
    imag: f64,
    freq_hz: f64,
    damping_ratio: f64,
}

fn cmd_modes(c: &Common) -> Result<()> {
    let run = c.load()?;
    let sys = &run.scenario.system;
    let basis = eigendecompose(&build_state_space(sys))?;
    let modes: Vec<ModeRow> = basis
        .spectrum()
        .iter()
        .map(|l| {
            let mag = l.norm();
            ModeRow {
                real: l.re,
                imag: l.im,
                freq_hz: l.im.abs() / (2.0 * std::f64::consts::PI),
                damping_ratio: if mag > 0.0 { -l.re / mag } else { 0.0 },
            }
        })
        .collect();
    let mut csv = String::from("index,real,imag,freq_hz,damping_ratio\n");
    for (i, m) in modes.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            i + 1,
            m.real,
            m.imag,
            m.freq_hz,
            m.damping_ratio
        ));
    }
    let md = real_modes(&basis, sys, run.observed, run.disturbed)?;
    write(&c.out, "modes.csv", &csv)?;
    write(
        &c.out,
        "modes.json",
        &json(
            &serde_json::json!({ "modes": modes, "condition": basis.condition, "decomposition": md }),
        ),
    )
}

fn cmd_rocof_max(c: &Common) -> Result<()> {
    let run = c.load()?;
    let md = inertia_region::decompose(&run.scenario.system, run.observed, run.disturbed)?;
    let g = global_max(&md, &run.opts);
    let (component, swing) = g.winner.indices();
    let accepted: Vec<_> = g
        .locals
        .iter()
        .filter(|l| l.accepted)
        .map(|l| {
            serde_json::json!({
                "component": l.anchor.component,
                "swing": l.anchor.swing,
                "t_star_s": l.t_star,
                "value_hz_per_s": l.value * run.freq,
            })
        })
        .collect();
    let doc = serde_json::json!({
        "value_hz_per_s": g.value * run.freq,
        "t_star_s": g.t_star,
        "component": component,
        "swing": swing,
        "accepted_anchors": accepted,
        "observed": run.observed,
        "disturbed": run.disturbed,
        "msn": g.msn,
        "eps_t": run.opts.eps_t,
        "eps_t_note": "acceptance window is a heuristic default",
        "locals": g.locals,
    });
    write(&c.out, "rocof_max.json", &json(&doc))
}

fn full_rows(fb: &boundary::FullBoundary, freq: f64) -> Vec<BoundaryRow> {
    fb.points
        .iter()
        .map(|p| BoundaryRow {
            h: p.h.clone(),
            anchor: Some(p.binding),
            rocof: Some(p.value * freq),
        })
        .collect()
}

fn cmd_trace(c: &Common) -> Result<()> {
    let run = c.load()?;
    let ctx = c.context(&run)?;
    let anchors = candidate_anchors(&ctx, c.grid);
    let traces = if ctx.dim() == 2 {
        let mut v = Vec::new();
        for &a in &anchors {
            match trace_2d(&ctx, a) {
                Ok(t) => v.extend(t),
                Err(inertia_region::Error::NoBoundary(m)) => log::info!("anchor {a}: {m}"),
                Err(e) => return Err(e.into()),
            }
        }
        v
    } else {
        trace_3d(&ctx, &anchors, DEFAULT_SLICES)?
    };
    let mut summary = Vec::new();
    let mut piece = std::collections::BTreeMap::new();
    for t in &traces {
        let (m, l) = t.anchor.indices();
        let k = piece.entry((m, l)).or_insert(0usize);
        *k += 1;
        let name = format!("trace_m{m}_l{l}_p{k}.csv");
        let rows: Vec<BoundaryRow> = t
            .points
            .iter()
            .map(|h| BoundaryRow {
                h: h.clone(),
                anchor: Some(t.anchor),
                rocof: Some(-run.lim * run.freq),
            })
            .collect();
        write(&c.out, &name, &boundary_csv(&ctx.coords, &rows))?;
        summary.push(serde_json::json!({
            "file": name, "anchor": t.anchor.to_string(), "points": t.points.len(),
            "terminated_by": t.terminated_by,
        }));
    }
    let fb = boundary::assemble_full(traces, &ctx)?;
    write(
        &c.out,
        "full_boundary.csv",
        &boundary_csv(&ctx.coords, &full_rows(&fb, run.freq)),
    )?;
    let binding: Vec<String> = fb.binding_anchors().iter().map(|a| a.to_string()).collect();
    write(
        &c.out,
        "trace_summary.json",
        &json(
            &serde_json::json!({ "traces": summary, "binding": binding, "points": fb.points.len() }),
        ),
    )
}

fn cmd_contour(c: &Common) -> Result<()> {
    let run = c.load()?;
    let ctx = c.context(&run)?;
    if ctx.dim() != 2 {
        bail!("contour needs exactly 2 adjustable regions");
    }
    let g = c.grid.max(2);
    let mut s = format!(
        "H_{},H_{},max_rocof,component_m,swing_l\n",
        ctx.coords[0] + 1,
        ctx.coords[1] + 1
    );
    for i in 0..g {
        for j in 0..g {
            let at = |k: usize, i: usize| {
                ctx.bounds.lo[k] + (ctx.bounds.hi[k] - ctx.bounds.lo[k]) * i as f64 / (g - 1) as f64
            };
            let x = [at(0, i), at(1, j)];
            let gm = ctx
                .global(&x)
                .ok_or_else(|| anyhow!("no decomposition at {x:?}"))?;
            let (m, l) = gm.winner.indices();
            s.push_str(&format!(
                "{},{},{},{m},{l}\n",
                x[0],
                x[1],
                gm.value * run.freq
            ));
        }
    }
    write(&c.out, "contour.csv", &s)
}

fn cmd_decompose(c: &Common) -> Result<()> {
    let run = c.load()?;
    let ctx = c.context(&run)?;
    let fb = boundary::trace_full(&ctx, c.grid)?;
    let (poly, cells) = region_cells(&ctx, &fb, c.simplify)?;
    let dc = to_disjunctive(&cells, &ctx.bounds)?;
    let mut p = String::from("vertex,x,y\n");
    for (k, v) in poly.vertices.iter().enumerate() {
        p.push_str(&format!("{},{},{}\n", k + 1, v[0], v[1]));
    }
    write(&c.out, "polygon.csv", &p)?;
    write(&c.out, "cells.json", &dc.to_json())?;
    write(&c.out, "cells_vertices.csv", &dc.vertices_csv())
}

fn cmd_assess(c: &Common) -> Result<()> {
    let run = c.load()?;
    let sys = &run.scenario.system;
    let h = if c.inertia.is_empty() {
        sys.inertias()
    } else {
        c.inertia.clone()
    };
    if h.len() != sys.n() {
        bail!("--inertia needs {} values", sys.n());
    }
    let pairs = if c.disturbed.is_some() {
        vec![(run.observed, run.disturbed)]
    } else {
        all_pairs(sys)
    };
    let a = assess(sys, &h, run.lim, &pairs, &run.opts)?;
    let worst = if a.worst_rocof.is_finite() {
        Some(a.worst_rocof * run.freq)
    } else {
        None
    };
    let doc = serde_json::json!({
        "inertia": h,
        "verdict": a.verdict,
        "worst_rocof_hz_per_s": worst,
        "worst_pair": a.worst_pair,
        "rocof_lim_hz_per_s": run.lim * run.freq,
    });
    write(&c.out, "assessment.json", &json(&doc))
}

fn cmd_dispatch(d: &DispatchArgs) -> Result<()> {
    let c = &d.common;
    let run = c.load()?;
    let sc = &run.scenario;
    if sc.generators.is_empty() || sc.horizon.is_empty() {
        bail!("dispatch needs `generators` and `horizon` in the scenario");
    }
    let method = match d.security {
        Security::None => None,
        Security::Coi => Some(SecurityMethod::Coi),
        Security::Proposed => Some(SecurityMethod::Proposed),
        Security::Conservative => Some(SecurityMethod::Conservative),
    };
    let security = match method {
        None => Vec::new(),
        Some(m) => {
            let mut spec = SecuritySpec::new(m, run.observed, run.disturbed, run.lim);
            spec.step = c.step;
            if let Some(e) = c.eps_s {
                spec.eps_s = e / run.freq;
            }
            spec.seed = c.seed;
            spec.max_options = run.opts;
            spec.grid = c.grid;
            spec.simplify = c.simplify;
            period_security(&sc.system, &sc.horizon, &spec)?
        }
    };
    let options = DispatchOptions {
        segments: d.segments,
        abs_gap: d.gap,
        node_limit: d.node_limit,
        disjunction: match d.disjunction {
            Form::BigM => Disjunction::BigM,
            Form::Hull => Disjunction::Hull,
        },
    };
    let prob = build_problem(&sc.system, &sc.generators, &sc.horizon, &security, &options)?;
    let sched = solve(&prob)?;
    let report = validate_schedule(
        &sched,
        &prob,
        run.lim,
        &[(run.observed, run.disturbed)],
        &run.opts,
        c.dt,
    )?;
    write(&c.out, "schedule.json", &json(&sched))?;
    write(&c.out, "schedule_generators.csv", &sched.generators_csv())?;
    write(
        &c.out,
        "schedule_regions.csv",
        &sched.regions_csv(Some(&report), run.freq),
    )?;
    write(&c.out, "validation.json", &json(&report))
}

fn cmd_compare(c: &Common) -> Result<()> {
    let run = c.load()?;
    let ctx = c.context(&run)?;
    let sys = &run.scenario.system;
    let n = 2000;
    let coi = coi_boundary(sys, &ctx.coords, run.lim)?.sample(&ctx.bounds, n);
    let fit = conservative_fit(&ctx, c.grid)?;
    let cons = fit.boundary(run.lim).sample(&ctx.bounds, n);
    let fb = boundary::trace_full(&ctx, c.grid)?;
    let proposed = fb.coordinates();
    let reference = reference_boundary(&ctx, c.lines, c.dt)?;
    let plain = |pts: &[Vec<f64>]| -> Vec<BoundaryRow> {
        pts.iter()
            .map(|h| BoundaryRow {
                h: h.clone(),
                anchor: None,
                rocof: Some(-run.lim * run.freq),
            })
            .collect()
    };
    write(
        &c.out,
        "boundary_coi.csv",
        &boundary_csv(&ctx.coords, &plain(&coi)),
    )?;
    write(
        &c.out,
        "boundary_conservative.csv",
        &boundary_csv(&ctx.coords, &plain(&cons)),
    )?;
    write(
        &c.out,
        "boundary_proposed.csv",
        &boundary_csv(&ctx.coords, &full_rows(&fb, run.freq)),
    )?;
    write(
        &c.out,
        "boundary_reference.csv",
        &boundary_csv(&ctx.coords, &plain(&reference)),
    )?;
    let mut table = String::from("method,error_percent,points\n");
    for (name, pts) in [
        ("coi", &coi),
        ("conservative", &cons),
        ("proposed", &proposed),
    ] {
        if pts.is_empty() {
            table.push_str(&format!("{name},,0\n"));
        } else {
            let e = boundary_error(pts, &reference, &ctx.bounds)?;
            table.push_str(&format!("{name},{e},{}\n", pts.len()));
        }
    }
    write(&c.out, "errors.csv", &table)?;
    write(&c.out, "conservative_fit.json", &json(&fit))
}

fn common(cmd: &Command) -> &Common {
    match cmd {
        Command::Simulate(c)
        | Command::Modes(c)
        | Command::RocofMax(c)
        | Command::Trace(c)
        | Command::Contour(c)
        | Command::Decompose(c)
        | Command::Assess(c)
        | Command::Compare(c) => c,
        Command::Dispatch(d) => &d.common,
    }
}

fn dispatch_cmd(cmd: &Command) -> std::result::Result<(), Domain> {
    let r = match cmd {
        Command::Simulate(c) => cmd_simulate(c),
        Command::Modes(c) => cmd_modes(c),
        Command::RocofMax(c) => cmd_rocof_max(c),
        Command::Trace(c) => cmd_trace(c),
        Command::Contour(c) => cmd_contour(c),
        Command::Decompose(c) => cmd_decompose(c),
        Command::Assess(c) => cmd_assess(c),
        Command::Dispatch(d) => cmd_dispatch(d),
        Command::Compare(c) => cmd_compare(c),
    };
    r.map_err(Domain)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("INERTIA_REGION_LOG", "warn"))
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(t) = common(&cli.command).threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
        {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch_cmd(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Domain(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
