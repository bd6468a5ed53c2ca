mod common;

use common::{s, word};
use tmshift::models::{biased_walk_z, example1, example2, self_loop};
use tmshift::shift::{
    anchor_point, graph_distance, is_admissible, metric_d, point_in, preimages, shortest_path, transitivity_violations,
    Cylinder, Direction, GraphDistance, TailPoint, CYCLE_SEARCH_CAP,
};
use tmshift::Error;

#[test]
fn admissibility_on_example1() {
    let m = example1(-1.0);
    let g = m.graph();
    assert!(is_admissible(&word(&m, &["0", "1", "2"]), g).unwrap());
    assert!(!is_admissible(&word(&m, &["-1", "0"]), g).unwrap());
    assert!(is_admissible(&word(&m, &["5'"]), g).unwrap());
    assert!(is_admissible(&word(&m, &["-3", "3'", "2'", "1'", "0"]), g).unwrap());
}

#[test]
fn unknown_states_are_rejected() {
    let m = example1(-1.0);
    assert!(matches!(m.graph().parse_label("0'"), Err(Error::UnknownState(_))));
    assert!(matches!(m.graph().parse_label("x"), Err(Error::UnknownState(_))));
}

#[test]
fn distances_on_example1() {
    let m = example1(-1.0);
    let g = m.graph();
    let d = |a, b| graph_distance(s(&m, a), s(&m, b), g, 50).unwrap();
    assert_eq!(d("0", "2"), GraphDistance::Finite(2));
    assert_eq!(d("4", "4"), GraphDistance::Finite(0));
    assert_eq!(d("2", "0"), GraphDistance::Finite(3));
    assert_eq!(graph_distance(s(&m, "2"), s(&m, "0"), g, 2).unwrap(), GraphDistance::Beyond(2));
    assert_eq!(
        shortest_path(s(&m, "2"), s(&m, "0"), g, 10).unwrap().unwrap(),
        word(&m, &["2", "2'", "1'", "0"])
    );
}

#[test]
fn example1_is_transitive_on_a_ball() {
    let m = example1(-1.0);
    let ball = m.graph().ball(m.origin, 3).unwrap();
    assert!(transitivity_violations(&ball, m.graph(), 20).unwrap().is_empty());
}

#[test]
fn example2_returns_through_the_reflection() {
    let m = example2();
    let d = graph_distance(s(&m, "2"), s(&m, "-1"), m.graph(), 10).unwrap();
    assert_eq!(d, GraphDistance::Finite(2));
    let ball = m.graph().ball(m.origin, 3).unwrap();
    assert!(transitivity_violations(&ball, m.graph(), 30).unwrap().is_empty());
}

#[test]
fn symbolic_metric_examples() {
    let m = biased_walk_z(2.0 / 3.0).unwrap();
    let ray = m.escape("plus").unwrap().point(0).unwrap();
    assert_eq!(metric_d(&ray, &ray).unwrap(), 0.0);
    let zigzag = TailPoint::periodic(vec![], word(&m, &["0", "1"]), Direction::Forward).unwrap();
    assert_eq!(metric_d(&ray, &zigzag).unwrap(), 0.25);
    let other = TailPoint::periodic(vec![], word(&m, &["1", "0"]), Direction::Forward).unwrap();
    assert_eq!(metric_d(&ray, &other).unwrap(), 1.0);
    let back = TailPoint::periodic(vec![], word(&m, &["1", "0"]), Direction::Backward).unwrap();
    assert_eq!(metric_d(&other, &back), Err(Error::DirectionMismatch));
}

#[test]
fn equal_points_with_different_descriptions_compare_equal() {
    let m = biased_walk_z(0.5).unwrap();
    let a = TailPoint::periodic(word(&m, &["0", "1"]), word(&m, &["0", "1"]), Direction::Forward).unwrap();
    let b = TailPoint::periodic(vec![], word(&m, &["0", "1"]), Direction::Forward).unwrap();
    assert_eq!(metric_d(&a, &b).unwrap(), 0.0);
}

#[test]
fn shifting_a_cycle_rotates_it() {
    let m = example1(-1.0);
    let cyc = word(&m, &["0", "1", "1'"]);
    let x = TailPoint::periodic(vec![], cyc.clone(), Direction::Forward).unwrap();
    let y = x.shift();
    assert_eq!(y.coords(4), word(&m, &["1", "1'", "0", "1"]));
    assert_eq!(x.shift_by(3), x);
}

#[test]
fn preimages_on_example1() {
    let m = example1(-1.0);
    let g = m.graph();
    let x = point_in(&word(&m, &["1"]), g).unwrap();
    let pre = preimages(&x, g).unwrap();
    assert_eq!(pre.len(), 1);
    assert_eq!(pre[0].coords(2), word(&m, &["0", "1"]));
    let y = point_in(&word(&m, &["0"]), g).unwrap();
    let pre = preimages(&y, g).unwrap();
    assert_eq!(pre.len(), 1);
    assert_eq!(pre[0].first(), s(&m, "1'"));
    let z = point_in(&word(&m, &["2'"]), g).unwrap();
    let firsts: Vec<_> = preimages(&z, g).unwrap().iter().map(|p| g.label(p.first())).collect();
    assert_eq!(firsts.len(), 3);
    for l in ["2", "-2", "3'"] {
        assert!(firsts.contains(&l.to_string()));
    }
}

#[test]
fn anchor_points() {
    let o = self_loop(-1.0);
    let x = anchor_point(o.origin, o.graph(), CYCLE_SEARCH_CAP).unwrap();
    assert_eq!(x.coords(3), vec![o.origin; 3]);

    let z = biased_walk_z(2.0 / 3.0).unwrap();
    let x = anchor_point(s(&z, "0"), z.graph(), CYCLE_SEARCH_CAP).unwrap();
    assert_eq!(x.coords(4), word(&z, &["1", "0", "1", "0"]));
    assert_eq!(x.shift_by(2), x);

    let e = example1(-1.0);
    let x = anchor_point(s(&e, "0"), e.graph(), CYCLE_SEARCH_CAP).unwrap();
    assert_eq!(x.coords(6), word(&e, &["1", "1'", "0", "1", "1'", "0"]));
}

#[test]
fn point_in_lies_in_its_cylinder_and_is_admissible() {
    let m = example1(-1.0);
    let w = word(&m, &["-2", "-3", "3'"]);
    let x = point_in(&w, m.graph()).unwrap();
    assert!(Cylinder::new(w, m.graph()).unwrap().contains(&x));
    x.validate(m.graph()).unwrap();
    assert!(matches!(
        point_in(&word(&m, &["-1", "0"]), m.graph()),
        Err(Error::Inadmissible { .. })
    ));
}

#[test]
fn periodic_points_must_be_admissible_across_junctions() {
    let m = example1(-1.0);
    let bad = TailPoint::periodic(word(&m, &["0"]), word(&m, &["1", "1'"]), Direction::Forward).unwrap();
    assert!(bad.validate(m.graph()).is_err());
    let good = TailPoint::periodic(word(&m, &["-1"]), word(&m, &["1'", "0", "1"]), Direction::Forward).unwrap();
    good.validate(m.graph()).unwrap();
    assert!(matches!(
        TailPoint::periodic(vec![], vec![], Direction::Forward),
        Err(Error::EmptyWord)
    ));
}

#[test]
fn backward_points_use_reversed_edges() {
    let m = example1(-1.0);
    let x = TailPoint::periodic(vec![], word(&m, &["0", "1'", "1"]), Direction::Backward).unwrap();
    x.validate(m.graph()).unwrap();
    let pre = preimages(&x, m.graph()).unwrap();
    let firsts: Vec<_> = pre.iter().map(|p| m.graph().label(p.first())).collect();
    assert_eq!(firsts.len(), 2);
    assert!(firsts.contains(&"1".to_string()) && firsts.contains(&"-1".to_string()));
}

#[test]
fn anchor_overrides_replace_the_computed_anchor() {
    let m = biased_walk_z(0.6).unwrap();
    let g = m.graph();
    let (zero, one, two) = (s(&m, "0"), s(&m, "1"), s(&m, "2"));
    let custom = TailPoint::periodic(vec![one], vec![two, one], Direction::Forward).unwrap();
    let h = g.with_anchors([(zero, custom.clone())].into()).unwrap();
    assert_eq!(anchor_point(zero, &h, CYCLE_SEARCH_CAP).unwrap(), custom);
    assert_eq!(point_in(&[zero], &h).unwrap().coords(4), vec![zero, one, two, one]);
    // Other states and the reversed graph keep the computed anchors.
    assert_eq!(
        anchor_point(one, &h, CYCLE_SEARCH_CAP).unwrap(),
        anchor_point(one, g, CYCLE_SEARCH_CAP).unwrap()
    );
    assert!(h.reversed().anchor_override(zero).is_none());

    let far = TailPoint::periodic(vec![two], vec![one, two], Direction::Forward).unwrap();
    assert!(matches!(g.with_anchors([(zero, far)].into()), Err(Error::Inadmissible { .. })));
    let backward = TailPoint::periodic(vec![], vec![one, zero], Direction::Backward).unwrap();
    assert!(g.with_anchors([(zero, backward)].into()).is_err());
}
