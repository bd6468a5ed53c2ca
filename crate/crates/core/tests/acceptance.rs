//! One PASS/FAIL line per acceptance criterion. Runs without the libtest
//! harness so the report is always printed.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{backward_words, brute_first_passage, halfline_stationary, s, word};
use num_rational::BigRational;
use tmshift::boundary::{boundary_atlas, default_test_set, AtlasOptions, KernelSetup, Orbit};
use tmshift::dlr::{dlr_check_conditional, dlr_check_ratio, thermo_limit, Scheme};
use tmshift::duality::{eigen_residual, pi_map, poisson_ratio_limit, transience_duality_check, Eigenfunction, ReversedModel};
use tmshift::green::{green, martin_kernel, Bounded, GreenOptions};
use tmshift::measures::{conformality_residual, riesz_decompose, Dirac, GreenMeasure, IntegralRule, PathMeasure};
use tmshift::models::{
    biased_walk_z, example1, example2, example2_ray_point, first_passage, inward_drift_walk, regular_tree, self_loop, zoo,
    Model,
};
use tmshift::potential::{gurevich_pressure, Transience};
use tmshift::shift::{point_in, Cylinder, State, TailPoint};
use tmshift::transfer::{eval_indicator_in, eval_ln, PathWeight, SimpleFunction};
use tmshift::walk::{harmonic_residual, hitting_distribution, measure_from_harmonic, HittingOptions, Z99};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn orbits(m: &Model, range: std::ops::RangeInclusive<usize>) -> Vec<Orbit> {
    m.escapes
        .iter()
        .map(|e| Orbit {
            tag: e.tag.clone(),
            points: e.points(range.clone()).unwrap(),
        })
        .collect()
}

fn worst(r: &[(State, f64)]) -> f64 {
    r.iter().map(|&(_, v)| v).fold(0.0, f64::max)
}

fn int_label(m: &Model) -> impl Fn(State) -> i32 + Send + Sync + Clone + 'static {
    let g = m.graph().clone();
    move |s| g.label(s).parse().unwrap()
}

fn geometric_sanity() -> Outcome {
    let start = Instant::now();
    let m = self_loop(-1.0);
    let x = point_in(&[m.origin], m.graph()).unwrap();
    let f = SimpleFunction::indicator(Cylinder::single(m.origin));
    let g = green(&m.system, &f, &x, 1.0, &GreenOptions::default()).map_err(|e| e.to_string())?;
    let exact = 1.0 / (1.0 - (-1.0f64).exp());
    let elapsed = start.elapsed();
    ensure!(g.contains(exact), "{g:?} does not contain {exact}");
    ensure!(g.lower() >= exact - 1e-10 && g.upper() <= exact + 1e-10, "enclosure wider than 1e-10: {g:?}");
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(format!("[{:.12}, {:.12}] in {elapsed:?}", g.lower(), g.upper()))
}

fn kernel_identity() -> Outcome {
    let start = Instant::now();
    let m = example1(-1.0);
    let opts = GreenOptions::default();
    let (neg, pos) = (s(&m, "-1"), s(&m, "1"));
    let big_f = Bounded::from(&first_passage(&m.system, neg, pos, &opts).map_err(|e| e.to_string())?);
    let brute = brute_first_passage(&m.system, neg, pos, 40);
    ensure!((big_f.value - brute).abs() < 1e-8, "first passage {} vs enumeration {brute}", big_f.value);
    let f = SimpleFunction::indicator(Cylinder::single(neg));
    for n in 5..=20 {
        let xp = m.escape("plus").unwrap().point(n).unwrap();
        let xm = m.escape("minus").unwrap().point(n).unwrap();
        let kp = martin_kernel(&m.system, &f, &xp, m.origin, 1.0, &opts).map_err(|e| e.to_string())?;
        let km = martin_kernel(&m.system, &f, &xm, m.origin, 1.0, &opts).map_err(|e| e.to_string())?;
        let prod = Bounded {
            value: big_f.value * km.value,
            lo: big_f.lo * km.lo,
            hi: big_f.hi * km.hi,
        };
        let gap = (kp.value - prod.value).abs();
        let bound = kp.radius() + prod.radius();
        ensure!(gap <= bound + 4.0 * f64::EPSILON * kp.value, "n={n}: gap {gap:e} > bound {bound:e}");
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    Ok(format!("F = {:.10}, n = 5..20 within bounds, in {elapsed:?}", big_f.value))
}

fn example1_atlas() -> Outcome {
    let start = Instant::now();
    let eps = 1e-3;
    let opts = AtlasOptions::new(1.0, eps);
    let mut counts = Vec::new();
    for m in [example1(-1.0), example1(-1.0).reversed()] {
        let test = default_test_set(m.graph(), m.origin, 2, 2).unwrap();
        let atlas = boundary_atlas(&m.system, m.origin, &orbits(&m, 10..=16), &test, &opts).map_err(|e| e.to_string())?;
        for c in &atlas.clusters {
            ensure!(c.diameter < eps / 10.0, "{}: diameter {}", m.name, c.diameter);
        }
        counts.push(atlas.clusters.len());
    }
    let elapsed = start.elapsed();
    ensure!(counts == [2, 1], "cluster counts forward/reversed {counts:?}");
    ensure!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    Ok(format!("2 forward, 1 reversed, in {elapsed:?}"))
}

/// Exact rationals, so the dynamic program and the enumeration can be
/// compared with `==`.
#[derive(Clone, PartialEq, Debug)]
struct Q(BigRational);

impl PathWeight for Q {
    fn zero() -> Self {
        Q(BigRational::from_float(0.0).unwrap())
    }
    fn one() -> Self {
        Q(BigRational::from_float(1.0).unwrap())
    }
    fn add_assign(&mut self, other: &Self) {
        self.0 += &other.0;
    }
    fn mul(&self, other: &Self) -> Self {
        Q(&self.0 * &other.0)
    }
}

fn operator_equivalence() -> Outcome {
    let mut checked = 0usize;
    for m in zoo() {
        let sys = &m.system;
        let g = m.graph();
        let r = sys.potential.range();
        let weight = |win: &[State]| -> tmshift::Result<Q> {
            Ok(Q(BigRational::from_float(sys.potential.value(win)?.exp()).unwrap()))
        };
        let ball = g.ball(m.origin, 1).unwrap();
        let words = g.words_within(&ball, 3).unwrap();
        let mut points = Vec::new();
        for &a in &ball {
            points.push(point_in(&[a], g).unwrap());
            for &b in g.out_edges(a).unwrap().iter() {
                points.push(point_in(&[a, b], g).unwrap());
            }
        }
        for x in &points {
            for n in 0..=6 {
                let preimages: Vec<Vec<State>> = backward_words(g, x.first(), n)
                    .into_iter()
                    .map(|u| {
                        let mut y = u;
                        y.extend(x.coords(n + r + 3));
                        y
                    })
                    .collect();
                for w in &words {
                    let mut brute = Q::zero();
                    for y in preimages.iter().filter(|y| y[..w.len()] == w[..]) {
                        let mut prod = Q::one();
                        for i in 0..n {
                            prod = prod.mul(&weight(&y[i..i + r]).unwrap());
                        }
                        brute.add_assign(&prod);
                    }
                    let dp = eval_indicator_in(g, r, w, x, n, &weight).map_err(|e| e.to_string())?;
                    ensure!(dp == brute, "{}: w={w:?} n={n}: {dp:?} vs {brute:?}", m.name);
                    let fl = eval_ln(sys, &SimpleFunction::indicator(Cylinder::from_admissible(w.clone())), x, n).unwrap();
                    // |float - exact| <= 1e-13 exact, squared to stay in the rationals.
                    let diff = BigRational::from_float(fl).unwrap() - &brute.0;
                    let tol = BigRational::from_float(1e-13).unwrap() * &brute.0;
                    ensure!(&diff * &diff <= &tol * &tol, "{}: w={w:?} n={n}: float {fl} off the exact value", m.name);
                    checked += 1;
                }
            }
        }
    }
    Ok(format!("{checked} (model, cylinder, point, n) cases exact"))
}

fn conformal_dlr() -> Outcome {
    let mut max_res: f64 = 0.0;
    for m in [biased_walk_z(2.0 / 3.0).unwrap(), inward_drift_walk(0.3).unwrap()] {
        let mu = PathMeasure::new(m.system.potential.clone(), 1.0, |_| 1.0).unwrap();
        let xs: Vec<TailPoint> = [&["0"][..], &["1", "2"], &["2", "1", "0"], &["3"]]
            .iter()
            .map(|w| point_in(&word(&m, w), m.graph()).unwrap())
            .collect();
        for n in 1..=4 {
            for r in dlr_check_conditional(&m.system, &mu, n, 3, &xs).map_err(|e| e.to_string())? {
                max_res = max_res.max(r.residual);
            }
        }
        let (a, b) = (word(&m, &["1", "2", "1", "0"]), word(&m, &["1", "0", "1", "0"]));
        for r in dlr_check_ratio(&m.system, &mu, &a, &b, 4).map_err(|e| e.to_string())? {
            max_res = max_res.max(r.max_residual);
        }
    }
    ensure!(max_res < 1e-12, "path-measure DLR residual {max_res:e}");

    let m = example2();
    let x = example2_ray_point();
    let mu = Dirac(x.clone());
    for n in 1..=4 {
        for r in dlr_check_conditional(&m.system, &mu, n, 2, std::slice::from_ref(&x)).map_err(|e| e.to_string())? {
            ensure!(r.residual < 1e-12, "point mass DLR residual {:e} at n={n}", r.residual);
        }
    }
    let battery = [word(&m, &["0"]), word(&m, &["0", "0"]), word(&m, &["0", "1"])].map(|w| Cylinder::new(w, m.graph()).unwrap());
    let lambdas = [0.25, 0.5, 1.0, 2.0, 4.0];
    for lambda in lambdas {
        let res = conformality_residual(&m.system, &mu, lambda, &battery).map_err(|e| e.to_string())?;
        let w = res.iter().map(|r| r.residual).fold(0.0, f64::max);
        ensure!(w > 1e-6, "point mass looks conformal at lambda {lambda}");
    }
    Ok(format!("path measures max residual {max_res:.1e}; point mass DLR, non-conformal at {lambdas:?}"))
}

fn riesz() -> Outcome {
    let m = example1(-1.0);
    let x = point_in(&[m.origin], m.graph()).unwrap();
    let opts = GreenOptions::default().with_tol(1e-12);
    let mu = GreenMeasure::new(&m.system, &x, 1.0, opts).map_err(|e| e.to_string())?;
    let test = default_test_set(m.graph(), m.origin, 2, 2).unwrap();
    let rule = IntegralRule::Atoms(vec![(1.0, x.clone())]);
    let r = riesz_decompose(&m.system, &mu, 1.0, &test, 60, &rule, &opts, 1e-9).map_err(|e| e.to_string())?;
    for (c, e) in test.iter().zip(&r.entries) {
        let expect = if c.contains(&x) { 1.0 } else { 0.0 };
        ensure!((e.charge.value - expect).abs() < 1e-8, "{}: charge {:?}", e.cylinder, e.charge);
        let tail = e.mu_star.last().unwrap().abs();
        ensure!(tail < 1e-8, "{}: mu* tail {tail:e}", e.cylinder);
        ensure!(e.identity_residual <= e.identity_bound, "{}: identity {:e} > {:e}", e.cylinder, e.identity_residual, e.identity_bound);
    }
    Ok(format!("{} cylinders, unit charge only on those containing x0", test.len()))
}

fn duality() -> Outcome {
    let opts = GreenOptions::default();
    let mut lines = Vec::new();
    for m in [example1(-1.0), biased_walk_z(2.0 / 3.0).unwrap(), self_loop(-1.0)] {
        let p = gurevich_pressure(&m.system, m.origin, 200).map_err(|e| e.to_string())?.extrapolated;
        let crit = p.exp();
        let mut verdicts = Vec::new();
        for k in [0.5, 0.8, 1.25, 1.6, 2.5] {
            let lambda = k * crit;
            let r = transience_duality_check(&m.system, m.origin, lambda, &opts).map_err(|e| e.to_string())?;
            let (f, b) = (r.forward.classification, r.reversed.classification);
            ensure!(f != Transience::Inconclusive && f == b, "{} at lambda {lambda}: {f:?} vs {b:?}", m.name);
            let expect = if k > 1.0 { Transience::Transient } else { Transience::Recurrent };
            ensure!(f == expect, "{} at lambda {lambda}: {f:?}, expected {expect:?}", m.name);
            verdicts.push(f);
        }
        lines.push(format!("{} e^P={crit:.4}", m.name));
    }

    let m = biased_walk_z(2.0 / 3.0).unwrap();
    let rev = ReversedModel::new(&m.system);
    let mu = PathMeasure::new(rev.system.potential.clone(), 1.0, |_| 1.0).unwrap();
    let states: Vec<State> = m.graph().ball(m.origin, 10).unwrap().into_iter().take(20).collect();
    ensure!(states.len() == 20, "only {} test points", states.len());
    let h = pi_map(&m.system, &mu, &states, 1.0).map_err(|e| e.to_string())?;
    let res = worst(&eigen_residual(&m.system, &h, &states).map_err(|e| e.to_string())?);
    ensure!(res < 1e-10, "eigen residual {res:e}");
    Ok(format!("verdicts agree on 5-point grids ({}); eigen residual {res:.1e}", lines.join(", ")))
}

fn thermodynamic_limits() -> Outcome {
    let m = example1(-1.0);
    let opts = GreenOptions::default();
    let f = SimpleFunction::indicator(Cylinder::single(s(&m, "-1")));
    let test = default_test_set(m.graph(), m.origin, 2, 2).unwrap();
    let atlas = boundary_atlas(&m.system, m.origin, &orbits(&m, 10..=16), &test, &AtlasOptions::new(1.0, 1e-3))
        .map_err(|e| e.to_string())?;
    let idx = test.iter().position(|c| c.word() == [s(&m, "-1")]).unwrap();
    let mut limits = Vec::new();
    for e in &m.escapes {
        let seq = thermo_limit(&m.system, Scheme::Transient, &e.point(1).unwrap(), &f, m.origin, 20, 1.0, &opts)
            .map_err(|e| e.to_string())?;
        ensure!(seq.trailing_oscillation < 1e-4, "{}: oscillation {:e}", e.tag, seq.trailing_oscillation);
        let cl = atlas.clusters.iter().find(|c| c.members.contains(&e.tag)).unwrap();
        let centroid = cl.centroid.values[idx];
        let last = seq.last();
        ensure!(
            (last.value - centroid.value).abs() <= last.radius() + centroid.radius() + 1e-12,
            "{}: limit {} vs centroid {}",
            e.tag,
            last.value,
            centroid.value
        );
        limits.push(last);
    }
    let gap = (limits[0].value - limits[1].value).abs();
    ensure!(gap > 10.0 * (limits[0].radius() + limits[1].radius()), "limits not distinct: {limits:?}");

    // L^N 1_[a] at 0 on the reversed walk counts paths 0 -> a, so the ratio
    // tends to pi(a) / pi(0).
    let p = 0.3;
    let m = inward_drift_walk(p).unwrap().reversed();
    let x = point_in(&[m.origin], m.graph()).unwrap();
    let pi = halfline_stationary(p, 200);
    let mut err: f64 = 0.0;
    for a in 1..=3usize {
        let f = SimpleFunction::indicator(Cylinder::single(s(&m, &a.to_string())));
        let seq = thermo_limit(&m.system, Scheme::PosRecurrent, &x, &f, m.origin, 200, 1.0, &opts).map_err(|e| e.to_string())?;
        err = err.max((seq.last().value - pi[a] / pi[0]).abs());
    }
    ensure!(err < 1e-6, "positive-recurrent limit off by {err:e}");
    Ok(format!("transient limits {:.6} / {:.6}; stationary ratio error {err:.1e}", limits[0].value, limits[1].value))
}

fn random_walk_boundary() -> Outcome {
    let start = Instant::now();
    let m = regular_tree(3, &[1.0 / 3.0; 3]).unwrap();
    let walk = m.walk.as_ref().unwrap();
    let q = m.quotient.as_ref().unwrap();
    let radial = q.model.as_ref();
    let test = default_test_set(radial.graph(), radial.origin, 2, 2).unwrap();
    let atlas = boundary_atlas(&radial.system, radial.origin, &orbits(radial, 10..=16), &test, &AtlasOptions::new(1.0, 1e-3))
        .map_err(|e| e.to_string())?;
    ensure!(atlas.clusters.len() == 3, "tree atlas has {} clusters", atlas.clusters.len());
    let setup = KernelSetup {
        sys: &radial.system,
        origin: radial.origin,
        lambda: 1.0,
        opts: GreenOptions::default(),
    };
    let project = q.project.clone();
    let locate = |path: &[State]| point_in(&[project(*path.last().unwrap())], radial.graph());
    let opts = HittingOptions {
        n_samples: 100_000,
        horizon: 60,
        ball_radius: 2,
        settle: 20,
        seed: 5,
        z: Z99,
    };
    let r = hitting_distribution(walk, &atlas, &setup, &locate, 1, &opts).map_err(|e| e.to_string())?;
    let mut freqs = Vec::new();
    for c in &r.clusters {
        ensure!(c.interval.0 <= 1.0 / 3.0 && 1.0 / 3.0 <= c.interval.1, "tree cluster {:?}: {:?}", c.members, c.interval);
        freqs.push(format!("{:.4}", c.frequency));
    }

    let (p, qq) = (2.0 / 3.0, 1.0 / 3.0);
    let m = biased_walk_z(p).unwrap();
    let walk = m.walk.as_ref().unwrap();
    let test = default_test_set(m.graph(), m.origin, 2, 2).unwrap();
    let atlas = boundary_atlas(&m.system, m.origin, &orbits(&m, 10..=16), &test, &AtlasOptions::new(1.0, 1e-3))
        .map_err(|e| e.to_string())?;
    let setup = KernelSetup {
        sys: &m.system,
        origin: m.origin,
        lambda: 1.0,
        opts: GreenOptions::default(),
    };
    let locate = |path: &[State]| point_in(&[*path.last().unwrap()], m.graph());
    let n = 10_000;
    let opts = HittingOptions {
        n_samples: n,
        horizon: 300,
        ball_radius: 2,
        settle: 100,
        seed: 3,
        z: Z99,
    };
    let r = hitting_distribution(walk, &atlas, &setup, &locate, 1, &opts).map_err(|e| e.to_string())?;
    let plus = r.clusters.iter().find(|c| c.members == ["plus"]).ok_or("no plus cluster")?;
    ensure!(plus.frequency == 1.0, "plus frequency {}", plus.frequency);
    let loss = r.non_escaping as f64 / n as f64;
    ensure!(loss < 1e-3, "non-escaping fraction {loss}");

    let states = m.graph().ball(m.origin, 15).unwrap();
    let lab = int_label(&m);
    let h = move |s: State| (qq / p).powi(lab(s));
    let res = worst(&harmonic_residual(walk, &h, &states).map_err(|e| e.to_string())?);
    ensure!(res < 1e-12, "harmonic residual {res:e}");
    let mu = measure_from_harmonic(walk, h, &m.graph().ball(m.origin, 8).unwrap(), 1e-12).map_err(|e| e.to_string())?;
    let cyl = default_test_set(m.graph(), m.origin, 2, 5).unwrap();
    let conf = conformality_residual(&m.system, &mu, 1.0, &cyl).map_err(|e| e.to_string())?;
    let conf = conf.iter().map(|c| c.residual).fold(0.0, f64::max);
    ensure!(conf < 1e-12, "conformality residual {conf:e}");
    Ok(format!(
        "tree frequencies [{}]; biased plus = 1, loss {loss}; residuals {res:.1e}, {conf:.1e}; {:?}",
        freqs.join(", "),
        start.elapsed()
    ))
}

fn poisson_ratio() -> Outcome {
    let (p, q) = (2.0 / 3.0, 1.0 / 3.0);
    let m = biased_walk_z(p).unwrap().reversed();
    let lab = int_label(&m);
    let f = Eigenfunction::new(1.0, {
        let lab = lab.clone();
        move |s| (q / p).powi(lab(s))
    });
    let h = Eigenfunction::new(1.0, move |s| 1.0 + (q / p).powi(lab(s)));
    let n = 1000;
    let run = poisson_ratio_limit(&m.system, &f, &h, m.origin, 200, n, 11).map_err(|e| e.to_string())?;
    let near = |r: f64| r.min((1.0 - r).abs()) <= 1e-2;
    let hits = run.trajectories.iter().filter(|t| near(*t.ratios.last().unwrap())).count();
    ensure!(hits as f64 >= 0.95 * n as f64, "{hits} of {n} near 0 or 1");
    Ok(format!("{hits} of {n} trajectories within 1e-2 of {{0, 1}}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("geometric sanity", geometric_sanity),
        ("example 1 kernel identity", kernel_identity),
        ("example 1 atlas", example1_atlas),
        ("brute-force operator equivalence", operator_equivalence),
        ("conformal implies DLR", conformal_dlr),
        ("Riesz decomposition", riesz),
        ("duality", duality),
        ("thermodynamic limits", thermodynamic_limits),
        ("random-walk boundary", random_walk_boundary),
        ("Poisson ratio limit", poisson_ratio),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
