mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use tmshift::duality::pi_map;
use tmshift::green::{green, GreenOptions};
use tmshift::measures::{CylinderMeasure, PathMeasure};
use tmshift::models::{biased_walk_z, example1, example2, self_loop, Model};
use tmshift::shift::{metric_d, point_in, Cylinder, State, TailPoint};
use tmshift::transfer::{eval_ln, push_l, SimpleFunction};

/// The admissible word that starts at `start` and picks successor
/// `c mod out-degree` at each step.
fn walk_word(m: &Model, start: State, choices: &[u8]) -> Vec<State> {
    let g = m.graph();
    let mut w = vec![start];
    for &c in choices {
        let out = g.out_edges(*w.last().unwrap()).unwrap();
        w.push(out[c as usize % out.len()]);
    }
    w
}

fn point(m: &Model, choices: &[u8]) -> TailPoint {
    point_in(&walk_word(m, m.origin, choices), m.graph()).unwrap()
}

fn function(m: &Model, spec: &[(f64, Vec<u8>)]) -> SimpleFunction {
    SimpleFunction::from_terms(
        spec.iter()
            .map(|(c, ch)| (*c, Cylinder::from_admissible(walk_word(m, m.origin, ch))))
            .collect(),
    )
}

fn choices(max: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(any::<u8>(), 0..max)
}

fn terms() -> impl Strategy<Value = Vec<(f64, Vec<u8>)>> {
    prop::collection::vec((-3.0f64..3.0, choices(3)), 1..4)
}

/// Edge rules of the integer-and-primed graph, written out from the
/// definition rather than from the library's rule.
#[derive(Clone, Copy, PartialEq, Eq, Debug, PartialOrd, Ord)]
enum E1 {
    Int(i64),
    Primed(i64),
}

fn parse_e1(label: &str) -> E1 {
    match label.strip_suffix('\'') {
        Some(n) => E1::Primed(n.parse().unwrap()),
        None => E1::Int(label.parse().unwrap()),
    }
}

fn e1_successors(a: E1) -> BTreeSet<E1> {
    let mut out = BTreeSet::new();
    match a {
        E1::Int(0) => {
            out.insert(E1::Int(1));
            out.insert(E1::Int(-1));
        }
        E1::Int(n) => {
            out.insert(E1::Int(n + n.signum()));
            out.insert(E1::Primed(n.abs()));
        }
        E1::Primed(1) => {
            out.insert(E1::Int(0));
        }
        E1::Primed(n) => {
            out.insert(E1::Primed(n - 1));
        }
    }
    out
}

#[test]
fn example1_edges_follow_the_five_rules() {
    let m = example1(-1.0);
    let g = m.graph();
    let ball = g.ball(m.origin, 10).unwrap();
    assert!(ball.len() > 20, "{}", ball.len());
    for a in ball {
        let got: BTreeSet<E1> = g.out_edges(a).unwrap().iter().map(|&b| parse_e1(&g.label(b))).collect();
        assert_eq!(got, e1_successors(parse_e1(&g.label(a))), "at {}", g.label(a));
        for &b in g.in_edges(a).unwrap().iter() {
            assert!(e1_successors(parse_e1(&g.label(b))).contains(&parse_e1(&g.label(a))));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn example2_predecessors(n in -5000i64..5000) {
        let m = example2();
        let g = m.graph();
        let a = g.parse_label(&n.to_string()).unwrap();
        let got: BTreeSet<i64> = g.in_edges(a).unwrap().iter().map(|&b| g.label(b).parse().unwrap()).collect();
        let expect: BTreeSet<i64> = match n {
            n if n > 0 => [n - 1].into(),
            0 => [-1, 0].into(),
            n => [n - 1, -n].into(),
        };
        prop_assert_eq!(got, expect);
    }

    #[test]
    fn symbolic_metric_is_an_ultrametric(a in choices(8), b in choices(8), c in choices(8)) {
        let m = example1(-1.0);
        let (x, y, z) = (point(&m, &a), point(&m, &b), point(&m, &c));
        let (dxy, dyz, dxz) = (metric_d(&x, &y).unwrap(), metric_d(&y, &z).unwrap(), metric_d(&x, &z).unwrap());
        prop_assert!(dxz <= dxy.max(dyz));
        prop_assert_eq!(dxy, metric_d(&y, &x).unwrap());
        prop_assert_eq!(metric_d(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn transfer_operator_is_linear(f in terms(), h in terms(), a in -2.0f64..2.0, b in -2.0f64..2.0,
                                   x in choices(6), n in 0usize..6) {
        let m = example1(-0.8);
        let (f, h) = (function(&m, &f), function(&m, &h));
        let x = point(&m, &x);
        let lhs = eval_ln(&m.system, &f.scaled(a).plus(&h.scaled(b)), &x, n).unwrap();
        let rhs = a * eval_ln(&m.system, &f, &x, n).unwrap() + b * eval_ln(&m.system, &h, &x, n).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
    }

    #[test]
    fn transfer_operator_is_a_semigroup(f in terms(), x in choices(6), n in 0usize..4, k in 0usize..4) {
        let m = biased_walk_z(0.65).unwrap();
        let f = function(&m, &f);
        let x = point(&m, &x);
        let mut pushed = f.clone();
        for _ in 0..k {
            pushed = push_l(&m.system, &pushed).unwrap();
        }
        let lhs = eval_ln(&m.system, &pushed, &x, n).unwrap();
        let rhs = eval_ln(&m.system, &f, &x, n + k).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
    }

    #[test]
    fn path_measures_are_additive(w in choices(6), r in 0.3f64..3.0) {
        let m = biased_walk_z(0.55).unwrap();
        let g = m.graph().clone();
        let lab = g.clone();
        let mu = PathMeasure::new(m.system.potential.clone(), 1.3, move |s| {
            r.powi(lab.label(s).parse::<i32>().unwrap())
        }).unwrap();
        let w = walk_word(&m, m.origin, &w);
        let total: f64 = g.out_edges(*w.last().unwrap()).unwrap().iter().map(|&b| {
            let mut v = w.clone();
            v.push(b);
            mu.mass(&v).unwrap().value
        }).sum();
        let whole = mu.mass(&w).unwrap().value;
        // Additivity holds exactly when the density is a 1.3-eigenvector.
        let lambda_r = 0.55 * r + 0.45 / r;
        prop_assert!((total - whole * lambda_r / 1.3).abs() <= 1e-12 * whole);
    }

    #[test]
    fn reversed_conformal_masses_reconstruct_from_the_eigenfunction(w in choices(6), r in 0.4f64..2.5) {
        // k(a) = r^a is conformal for the reversed walk at lambda = p / r + q r.
        let (p, q) = (0.7, 0.3);
        let m = biased_walk_z(p).unwrap();
        let rev = m.reversed();
        let lambda = p / r + q * r;
        let lab = m.graph().clone();
        let mu = PathMeasure::new(rev.system.potential.clone(), lambda, move |s| {
            r.powi(lab.label(s).parse::<i32>().unwrap())
        }).unwrap();
        // A reversed word x0, a1, ..., an read forwards is an -> ... -> a1 -> x0.
        let back = walk_word(&rev, rev.origin, &w);
        let n = back.len() - 1;
        let h = pi_map(&m.system, &mu, &[back[n]], lambda).unwrap();
        let phi: f64 = back.windows(2).map(|e| m.system.potential.edge(e[1], e[0]).unwrap()).sum();
        let expect = lambda.powi(-(n as i32) - 1) * phi.exp() * h.at(back[n]);
        let got = mu.mass(&back).unwrap().value;
        prop_assert!((got - expect).abs() <= 1e-12 * expect, "{} vs {}", got, expect);
    }

    #[test]
    fn self_loop_green_enclosure(alpha in -4.0f64..-0.05) {
        let m = self_loop(alpha);
        let x = point_in(&[m.origin], m.graph()).unwrap();
        let f = SimpleFunction::indicator(Cylinder::single(m.origin));
        let g = green(&m.system, &f, &x, 1.0, &GreenOptions::default()).unwrap();
        prop_assert!(g.contains(1.0 / (1.0 - alpha.exp())), "{:?}", g);
    }

    #[test]
    fn biased_walk_green_enclosure(p in 0.55f64..0.95, up in any::<bool>()) {
        // G(0, 0) = 1 / |p - q| in either drift direction.
        let p = if up { p } else { 1.0 - p };
        let m = biased_walk_z(p).unwrap();
        let x = point_in(&[m.origin], m.graph()).unwrap();
        let f = SimpleFunction::indicator(Cylinder::single(m.origin));
        let g = green(&m.system, &f, &x, 1.0, &GreenOptions::default()).unwrap();
        prop_assert!(g.contains(1.0 / (2.0 * p - 1.0).abs()), "{:?}", g);
    }
}
