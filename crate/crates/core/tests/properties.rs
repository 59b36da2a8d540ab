mod common;

use inertia_region::boundary::{
    amplitude_bound, boundary_csv, parse_boundary_csv, trace_field_2d, BoundaryRow, KernelParams,
};
use inertia_region::dispatch::{branch_and_bound, enumerate, BnbOptions, Milp, RowClass};
use inertia_region::geometry::{
    convex_decompose, simplify_chain, to_disjunctive, Bounds, Polyhedron,
};
use inertia_region::modal::evaluate_rocof;
use inertia_region::rocof::local_maxima;
use inertia_region::simulate::simulate_with;
use inertia_region::system::{build_state_space, to_document};
use inertia_region::{decompose, global_max, load_document, Anchor, MaxOptions, Scenario};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::random_system;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn analytic_waveform_tracks_rk4(seed in any::<u64>()) {
        let sys = random_system(&mut ChaCha8Rng::seed_from_u64(seed), true);
        let mds: Vec<_> = (0..sys.n()).map(|n1| decompose(&sys, n1, 0).unwrap()).collect();
        let mut worst: f64 = 0.0;
        simulate_with(&build_state_space(&sys), 5.0, 1e-3, |t, _, r| {
            for (md, v) in mds.iter().zip(r) {
                worst = worst.max((evaluate_rocof(md, t) - v).abs());
            }
        })
        .unwrap();
        prop_assert!(worst < 1e-6, "deviation {worst}");
    }

    #[test]
    fn initial_rocof_is_local(seed in any::<u64>()) {
        let sys = random_system(&mut ChaCha8Rng::seed_from_u64(seed), true);
        let r0 = &sys.regions[0];
        for n1 in 0..sys.n() {
            let v = evaluate_rocof(&decompose(&sys, n1, 0).unwrap(), 0.0);
            let want = if n1 == 0 { -r0.disturbance / (2.0 * r0.inertia) } else { 0.0 };
            prop_assert!((v - want).abs() <= 1e-9, "region {n1}: {v} vs {want}");
        }
    }

    #[test]
    fn undamped_coi_is_conserved(seed in any::<u64>(), t in 0.0f64..30.0) {
        let sys = random_system(&mut ChaCha8Rng::seed_from_u64(seed), false);
        let sum: f64 = (0..sys.n())
            .map(|n1| 2.0 * sys.regions[n1].inertia * evaluate_rocof(&decompose(&sys, n1, 0).unwrap(), t))
            .sum();
        prop_assert!((sum + sys.regions[0].disturbance).abs() < 1e-8, "sum {sum}");
    }

    #[test]
    fn global_max_dominates_the_waveform(seed in any::<u64>()) {
        let sys = random_system(&mut ChaCha8Rng::seed_from_u64(seed), true);
        let opts = MaxOptions::default();
        for n1 in 0..sys.n() {
            let md = decompose(&sys, n1, 0).unwrap();
            let g = global_max(&md, &opts);
            let bound = amplitude_bound(&md);
            prop_assert!(g.magnitude() <= bound * (1.0 + 1e-9));
            let sampled = (0..4000).map(|k| evaluate_rocof(&md, k as f64 * 2.5e-3).abs()).fold(0.0, f64::max);
            prop_assert!(g.magnitude() >= sampled * (1.0 - 0.01) - 1e-12, "global {} sampled {sampled}", g.magnitude());
            prop_assert!((evaluate_rocof(&md, g.t_star) - g.value).abs() <= 1e-12 * g.value.abs().max(1.0));
            if g.winner == Anchor::Initial {
                prop_assert_eq!(g.t_star, 0.0);
                prop_assert!(g.msn.is_none());
            }
        }
    }

    #[test]
    fn accepted_maxima_stay_near_their_anchor(seed in any::<u64>()) {
        let sys = random_system(&mut ChaCha8Rng::seed_from_u64(seed), true);
        let opts = MaxOptions::default();
        for n1 in 0..sys.n() {
            let md = decompose(&sys, n1, 0).unwrap();
            for lm in local_maxima(&md, &opts) {
                if !lm.accepted {
                    continue;
                }
                let period = md.trig[lm.anchor.component - 1].period();
                let eps = opts.eps_t.seconds(period);
                prop_assert!(lm.t_star >= 0.0);
                prop_assert!((lm.t_star - lm.anchor.t_hat).abs() <= eps + 1e-12,
                    "t* {} anchor {} eps {eps}", lm.t_star, lm.anchor.t_hat);
                // a stationary point of the exact waveform unless the Taylor point was kept
                let slope = md.unit_derivative(lm.t_star, 1);
                let scale = (md.trig_amplitude_sum() + md.exp_amplitude.abs()) * std::f64::consts::TAU / period;
                prop_assert!(slope.abs() <= 1e-6 * scale || lm.windowed || lm.t_star == lm.t_taylor,
                    "slope {slope} at accepted t*");
                prop_assert_eq!(lm.value, md.scale * md.unit(lm.t_star));
            }
        }
    }

    #[test]
    fn scenario_document_round_trips(seed in any::<u64>()) {
        let sys = random_system(&mut ChaCha8Rng::seed_from_u64(seed), true);
        let sc = Scenario { system: sys, generators: Vec::new(), horizon: Vec::new(), rocof_lim_hz_per_s: Some(0.5) };
        let text = serde_json::to_string_pretty(&to_document(&sc)).unwrap();
        prop_assert_eq!(load_document(&text).unwrap(), sc);
    }
}

/// Star-shaped polygon around (50, 50) with random radii, counter-clockwise.
fn star(radii: &[f64]) -> Polyhedron {
    let n = radii.len();
    let v = radii
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let a = std::f64::consts::TAU * k as f64 / n as f64;
            [50.0 + r * a.cos(), 50.0 + r * a.sin()]
        })
        .collect();
    Polyhedron::from_vertices(v).unwrap()
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn decomposition_conserves_area(radii in prop::collection::vec(5.0f64..45.0, 4..30)) {
        let poly = star(&radii);
        let cells = convex_decompose(&poly).unwrap();
        let total: f64 = cells.iter().map(|c| c.area()).sum();
        prop_assert!((total - poly.area()).abs() <= 1e-9 * poly.area());
        for c in &cells {
            prop_assert!(c.area() > 0.0);
            // each vertex satisfies every halfspace of its own cell
            for v in &c.vertices {
                prop_assert!(c.contains(v, 1e-9));
            }
        }
    }

    #[test]
    fn disjunction_matches_polygon(
        radii in prop::collection::vec(5.0f64..45.0, 4..20),
        pts in prop::collection::vec((0.0f64..100.0, 0.0f64..100.0), 50),
    ) {
        let poly = star(&radii);
        let cells = convex_decompose(&poly).unwrap();
        let bx = Bounds::new(vec![0.0, 0.0], vec![100.0, 100.0]).unwrap();
        let dj = to_disjunctive(&cells, &bx).unwrap();
        for (x, y) in pts {
            let p = [x, y];
            let near_edge = poly.vertices.iter().zip(poly.vertices.iter().cycle().skip(1))
                .any(|(a, b)| seg_dist(p, *a, *b) < 1e-7);
            if near_edge {
                continue;
            }
            prop_assert_eq!(dj.any_feasible(&p, 1e-9), poly.contains(p));
            prop_assert_eq!(dj.contains(&p, 1e-9), poly.contains(p));
        }
    }

    #[test]
    fn simplified_chain_stays_within_tolerance(
        ys in prop::collection::vec(-3.0f64..3.0, 3..60),
        tol in 0.05f64..2.0,
    ) {
        let chain: Vec<[f64; 2]> = ys.iter().enumerate().map(|(i, y)| [i as f64, *y]).collect();
        let s = simplify_chain(&chain, tol);
        prop_assert_eq!(s.first(), chain.first());
        prop_assert_eq!(s.last(), chain.last());
        prop_assert!(s.iter().all(|p| chain.contains(p)));
        for p in &chain {
            let d = s.windows(2).map(|w| seg_dist(*p, w[0], w[1])).fold(f64::INFINITY, f64::min);
            prop_assert!(d <= tol + 1e-12, "{p:?} is {d} from the simplified chain");
        }
    }

    #[test]
    fn kernel_recovers_circles(cx in 3.0f64..7.0, cy in 3.0f64..7.0, r in 0.5f64..2.5) {
        let f = move |x: &[f64]| Some(((x[0] - cx).powi(2) + (x[1] - cy).powi(2)).sqrt() - r);
        let bx = Bounds::new(vec![0.0, 0.0], vec![10.0, 10.0]).unwrap();
        let p = KernelParams { step: 0.1 * r, eps_s: 1e-7, max_steps: 100_000, seed: 3, rays: 64 };
        let t = trace_field_2d(&f, &bx, &p, 1).unwrap();
        prop_assert!(t[0].points.len() >= 20);
        for q in &t[0].points {
            prop_assert!(f(q).unwrap().abs() <= 1e-7);
        }
    }

    #[test]
    fn boundary_csv_round_trips(rows in prop::collection::vec((10.0f64..100.0, 10.0f64..100.0, 0usize..4, 1usize..6), 1..30)) {
        let rows: Vec<BoundaryRow> = rows
            .into_iter()
            .map(|(a, b, m, l)| BoundaryRow {
                h: vec![a, b],
                anchor: Some(Anchor::from_indices(m, if m == 0 { 0 } else { l })),
                rocof: Some(-0.5 - a * 1e-3),
            })
            .collect();
        let text = boundary_csv(&[0, 2], &rows);
        let (coords, back) = parse_boundary_csv(&text).unwrap();
        prop_assert_eq!(coords, vec![0, 2]);
        prop_assert_eq!(back, rows);
    }
}

fn seg_dist(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    (p[0] - a[0] - t * dx).hypot(p[1] - a[1] - t * dy)
}

fn random_milp(seed: u64) -> Milp {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Milp::new();
    let nb = rng.gen_range(2..=10);
    let bins: Vec<_> = (0..nb)
        .map(|i| m.add_binary(&format!("b{i}"), rng.gen_range(-10.0..3.0)))
        .collect();
    let x = m.add_var("x", rng.gen_range(-1.0..1.0), 0.0, 4.0);
    for _ in 0..rng.gen_range(1..4) {
        let mut terms: Vec<_> = bins.iter().map(|&b| (b, rng.gen_range(0.5..4.0))).collect();
        terms.push((x, rng.gen_range(-1.0..1.0)));
        m.add_row(
            RowClass::Logic,
            &terms,
            f64::NEG_INFINITY,
            rng.gen_range(3.0..12.0),
        );
    }
    m.add_row(
        RowClass::Logic,
        &[(x, 1.0), (bins[0], -4.0)],
        f64::NEG_INFINITY,
        0.0,
    );
    m
}

proptest! {
    #![proptest_config(config(48))]

    #[test]
    fn branch_and_bound_equals_enumeration(seed in any::<u64>()) {
        let m = random_milp(seed);
        let bb = branch_and_bound(&m, &BnbOptions { abs_gap: 1e-9, node_limit: 100_000 }).unwrap();
        let ex = enumerate(&m).unwrap().unwrap();
        prop_assert!((bb.objective - ex.objective).abs() <= 1e-6 * ex.objective.abs().max(1.0),
            "B&B {} enumeration {}", bb.objective, ex.objective);
        prop_assert!(m.violation(&bb.x) <= 1e-6);
        for b in m.binaries() {
            let v = bb.x[b];
            prop_assert!(v.abs() < 1e-6 || (v - 1.0).abs() < 1e-6);
        }
    }
}
