//! Model zoo: graph builders with their potentials, origins, escape-orbit
//! generators and (where stochastic) random-walk specifications.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::green::{certify_series, GreenOptions, GreenValue};
use crate::potential::Potential;
use crate::shift::{Direction, GraphRule, OrbitRule, State, StateGraph, TailPoint};
use crate::transfer::System;

/// Integer to state code: `n > 0 -> 2n - 1`, `n <= 0 -> -2n`.
pub fn zig(n: i64) -> State {
    if n > 0 {
        2 * n as u64 - 1
    } else {
        (-2 * n) as u64
    }
}

pub fn unzig(s: State) -> i64 {
    if s % 2 == 1 {
        s.div_ceil(2) as i64
    } else {
        -((s / 2) as i64)
    }
}

/// Largest integer magnitude representable without overflow in [`zig`].
const Z_LIMIT: i64 = i64::MAX / 4;

fn parse_int(text: &str) -> Option<i64> {
    text.trim().parse::<i64>().ok().filter(|n| n.abs() <= Z_LIMIT)
}

fn sorted(mut v: Vec<State>) -> Vec<State> {
    v.sort_unstable();
    v.dedup();
    v
}

/// A single state `0` with a self-loop.
pub struct SelfLoopRule;

impl GraphRule for SelfLoopRule {
    fn contains(&self, s: State) -> bool {
        s == 0
    }
    fn successors(&self, s: State) -> Vec<State> {
        if s == 0 {
            vec![0]
        } else {
            vec![]
        }
    }
    fn predecessors(&self, s: State) -> Vec<State> {
        self.successors(s)
    }
    fn label(&self, _: State) -> String {
        "o".into()
    }
    fn parse_label(&self, text: &str) -> Option<State> {
        matches!(text.trim(), "o" | "0").then_some(0)
    }
}

/// Integers plus primed copies `n'` of the positive integers.
///
/// Codes: integer `a` is `2 * zig(a)`, `n'` is `2n - 1`.
pub struct Example1Rule;

impl Example1Rule {
    pub fn int(a: i64) -> State {
        2 * zig(a)
    }

    pub fn primed(n: u64) -> State {
        assert!(n >= 1, "primed states start at 1'");
        2 * n - 1
    }

    /// `Ok(a)` for integer states, `Err(n)` for `n'`.
    pub fn decode(s: State) -> std::result::Result<i64, u64> {
        if s % 2 == 0 {
            Ok(unzig(s / 2))
        } else {
            Err(s.div_ceil(2))
        }
    }
}

impl GraphRule for Example1Rule {
    fn contains(&self, s: State) -> bool {
        s / 2 <= zig(Z_LIMIT)
    }

    fn successors(&self, s: State) -> Vec<State> {
        let out = match Self::decode(s) {
            Ok(0) => vec![Self::int(1), Self::int(-1)],
            Ok(a) => vec![Self::int(a + a.signum()), Self::primed(a.unsigned_abs())],
            Err(1) => vec![Self::int(0)],
            Err(n) => vec![Self::primed(n - 1)],
        };
        sorted(out)
    }

    fn predecessors(&self, s: State) -> Vec<State> {
        let out = match Self::decode(s) {
            Ok(0) => vec![Self::primed(1)],
            Ok(a) if a.abs() == 1 => vec![Self::int(0)],
            Ok(a) => vec![Self::int(a - a.signum())],
            Err(n) => vec![Self::int(n as i64), Self::int(-(n as i64)), Self::primed(n + 1)],
        };
        sorted(out)
    }

    fn label(&self, s: State) -> String {
        match Self::decode(s) {
            Ok(a) => a.to_string(),
            Err(n) => format!("{n}'"),
        }
    }

    fn parse_label(&self, text: &str) -> Option<State> {
        let t = text.trim();
        if let Some(n) = t.strip_suffix('\'') {
            let n: u64 = n.parse().ok()?;
            (n >= 1 && n <= Z_LIMIT as u64).then(|| Self::primed(n))
        } else {
            parse_int(t).map(Self::int)
        }
    }
}

/// Integers with `a -> a + 1` and `a -> -a` for `a >= 0`.
pub struct Example2Rule;

impl GraphRule for Example2Rule {
    fn contains(&self, s: State) -> bool {
        unzig(s).abs() < Z_LIMIT
    }
    fn successors(&self, s: State) -> Vec<State> {
        let a = unzig(s);
        let mut out = vec![zig(a + 1)];
        if a >= 0 {
            out.push(zig(-a));
        }
        sorted(out)
    }
    fn predecessors(&self, s: State) -> Vec<State> {
        let b = unzig(s);
        let mut out = vec![zig(b - 1)];
        if b <= 0 {
            out.push(zig(-b));
        }
        sorted(out)
    }
    fn label(&self, s: State) -> String {
        unzig(s).to_string()
    }
    fn parse_label(&self, text: &str) -> Option<State> {
        parse_int(text).map(zig)
    }
}

/// Nearest-neighbour walk on the integers.
pub struct IntegerLineRule;

impl GraphRule for IntegerLineRule {
    fn contains(&self, s: State) -> bool {
        unzig(s).abs() < Z_LIMIT
    }
    fn successors(&self, s: State) -> Vec<State> {
        let a = unzig(s);
        sorted(vec![zig(a - 1), zig(a + 1)])
    }
    fn predecessors(&self, s: State) -> Vec<State> {
        self.successors(s)
    }
    fn label(&self, s: State) -> String {
        unzig(s).to_string()
    }
    fn parse_label(&self, text: &str) -> Option<State> {
        parse_int(text).map(zig)
    }
}

/// Nonnegative integers with a self-loop at `0`.
pub struct HalfLineRule;

impl GraphRule for HalfLineRule {
    fn contains(&self, s: State) -> bool {
        s < u64::MAX
    }
    fn successors(&self, s: State) -> Vec<State> {
        if s == 0 {
            vec![0, 1]
        } else {
            vec![s - 1, s + 1]
        }
    }
    fn predecessors(&self, s: State) -> Vec<State> {
        self.successors(s)
    }
    fn parse_label(&self, text: &str) -> Option<State> {
        text.trim().parse().ok()
    }
}

/// The `d`-regular tree as reduced words over `d` involutive letters.
///
/// Code layout (low bits first): depth in 6 bits, first letter in
/// `ceil(log2 d)` bits, then each further letter as its index among the
/// `d - 1` letters that differ from its predecessor, `ceil(log2(d - 1))` bits
/// per level. Children beyond [`TreeRule::max_depth`] are not generated.
pub struct TreeRule {
    degree: u32,
    first_bits: u32,
    step_bits: u32,
}

fn bits_for(n: u32) -> u32 {
    32 - (n - 1).leading_zeros()
}

impl TreeRule {
    pub fn new(degree: u32) -> Result<Self> {
        if !(3..=10).contains(&degree) {
            return Err(Error::InvalidParameter(format!("tree degree must lie in 3..=10, got {degree}")));
        }
        Ok(TreeRule {
            degree,
            first_bits: bits_for(degree),
            step_bits: bits_for(degree - 1),
        })
    }

    pub fn max_depth(&self) -> usize {
        (1 + (64 - 6 - self.first_bits) / self.step_bits).min(63) as usize
    }

    pub fn encode(&self, letters: &[u32]) -> Result<State> {
        if letters.len() > self.max_depth() {
            return Err(Error::StateOutOfRange(format!("tree word of depth {}", letters.len())));
        }
        let mut code = letters.len() as u64;
        let mut shift = 6;
        for (i, &l) in letters.iter().enumerate() {
            if l >= self.degree || (i > 0 && l == letters[i - 1]) {
                return Err(Error::InvalidParameter(format!("not a reduced tree word: {letters:?}")));
            }
            if i == 0 {
                code |= (l as u64) << shift;
                shift += self.first_bits;
            } else {
                let prev = letters[i - 1];
                let idx = if l < prev { l } else { l - 1 };
                code |= (idx as u64) << shift;
                shift += self.step_bits;
            }
        }
        Ok(code)
    }

    pub fn decode(&self, s: State) -> Vec<u32> {
        let depth = (s & 63) as usize;
        let mut out = Vec::with_capacity(depth);
        let mut shift = 6;
        for i in 0..depth {
            if i == 0 {
                out.push(((s >> shift) & ((1 << self.first_bits) - 1)) as u32);
                shift += self.first_bits;
            } else {
                let idx = ((s >> shift) & ((1 << self.step_bits) - 1)) as u32;
                let prev = out[i - 1];
                out.push(if idx < prev { idx } else { idx + 1 });
                shift += self.step_bits;
            }
        }
        out
    }

    fn neighbours(&self, s: State) -> Vec<State> {
        let w = self.decode(s);
        let mut out = Vec::with_capacity(self.degree as usize);
        for l in 0..self.degree {
            let mut v = w.clone();
            if v.last() == Some(&l) {
                v.pop();
            } else {
                v.push(l);
            }
            if let Ok(c) = self.encode(&v) {
                out.push(c);
            }
        }
        sorted(out)
    }
}

impl GraphRule for TreeRule {
    fn contains(&self, s: State) -> bool {
        self.encode(&self.decode(s)).ok() == Some(s)
    }
    fn successors(&self, s: State) -> Vec<State> {
        self.neighbours(s)
    }
    fn predecessors(&self, s: State) -> Vec<State> {
        self.neighbours(s)
    }
    fn label(&self, s: State) -> String {
        let w = self.decode(s);
        if w.is_empty() {
            "e".into()
        } else {
            w.iter().map(|l| l.to_string()).collect()
        }
    }
    fn parse_label(&self, text: &str) -> Option<State> {
        let t = text.trim();
        if t == "e" {
            return Some(0);
        }
        let letters: Option<Vec<u32>> = t.chars().map(|c| c.to_digit(10)).collect();
        self.encode(&letters?).ok()
    }
}

/// Star of `d` half-lines glued at a root: the radial quotient of the
/// `d`-regular tree. Codes: root `0`, `(branch j, depth k)` is
/// `(k - 1) d + j + 1`.
pub struct RadialTreeRule {
    degree: u64,
}

impl RadialTreeRule {
    pub fn code(&self, branch: u64, depth: u64) -> State {
        if depth == 0 {
            0
        } else {
            (depth - 1) * self.degree + branch + 1
        }
    }

    /// `None` for the root, else `(branch, depth)`.
    pub fn decode(&self, s: State) -> Option<(u64, u64)> {
        (s > 0).then(|| ((s - 1) % self.degree, (s - 1) / self.degree + 1))
    }

    fn neighbours(&self, s: State) -> Vec<State> {
        match self.decode(s) {
            None => (0..self.degree).map(|j| self.code(j, 1)).collect(),
            Some((j, k)) => sorted(vec![self.code(j, k - 1), self.code(j, k + 1)]),
        }
    }
}

impl GraphRule for RadialTreeRule {
    fn contains(&self, s: State) -> bool {
        s < u64::MAX - self.degree
    }
    fn successors(&self, s: State) -> Vec<State> {
        self.neighbours(s)
    }
    fn predecessors(&self, s: State) -> Vec<State> {
        self.neighbours(s)
    }
    fn label(&self, s: State) -> String {
        match self.decode(s) {
            None => "root".into(),
            Some((j, k)) => format!("{j}:{k}"),
        }
    }
    fn parse_label(&self, text: &str) -> Option<State> {
        let t = text.trim();
        if t == "root" {
            return Some(0);
        }
        let (j, k) = t.split_once(':')?;
        let (j, k): (u64, u64) = (j.parse().ok()?, k.parse().ok()?);
        (j < self.degree && k >= 1).then(|| self.code(j, k))
    }
}

type TransitionFn = Arc<dyn Fn(State, State) -> f64 + Send + Sync>;

/// A row-finite stochastic transition rule on a graph, with a start state.
#[derive(Clone)]
pub struct WalkSpec {
    pub graph: StateGraph,
    transition: TransitionFn,
    pub start: State,
}

impl std::fmt::Debug for WalkSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "WalkSpec(start {})", self.graph.label(self.start))
    }
}

impl WalkSpec {
    pub fn new(graph: StateGraph, start: State, p: impl Fn(State, State) -> f64 + Send + Sync + 'static) -> Self {
        WalkSpec {
            graph,
            transition: Arc::new(p),
            start,
        }
    }

    pub fn prob(&self, a: State, b: State) -> f64 {
        (self.transition)(a, b)
    }

    /// `(successor, probability)` pairs in ascending successor order.
    pub fn row(&self, a: State) -> Result<Vec<(State, f64)>> {
        Ok(self.graph.out_edges(a)?.iter().map(|&b| (b, self.prob(a, b))).collect())
    }

    /// `|1 - sum_b P(a, b)|`.
    pub fn row_defect(&self, a: State) -> Result<f64> {
        Ok((1.0 - self.row(a)?.iter().map(|(_, p)| p).sum::<f64>()).abs())
    }

    pub fn with_start(&self, start: State) -> Self {
        WalkSpec { start, ..self.clone() }
    }

    /// The Markovian potential `log P`.
    pub fn log_potential(&self, name: &str) -> Potential {
        let t = self.transition.clone();
        Potential::markov(name, move |a, b| t(a, b).ln())
    }
}

/// Generator of the points `x_n` of an escaping sequence.
#[derive(Clone)]
pub struct EscapeFamily {
    pub tag: String,
    generator: Arc<dyn Fn(usize) -> Result<TailPoint> + Send + Sync>,
}

impl std::fmt::Debug for EscapeFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "EscapeFamily({})", self.tag)
    }
}

impl EscapeFamily {
    pub fn new(tag: impl Into<String>, g: impl Fn(usize) -> Result<TailPoint> + Send + Sync + 'static) -> Self {
        EscapeFamily {
            tag: tag.into(),
            generator: Arc::new(g),
        }
    }

    pub fn point(&self, n: usize) -> Result<TailPoint> {
        (self.generator)(n)
    }

    pub fn points(&self, ns: impl IntoIterator<Item = usize>) -> Result<Vec<TailPoint>> {
        ns.into_iter().map(|n| self.point(n)).collect()
    }
}

/// A smaller model onto which this one projects, used where the boundary
/// is computed on the quotient (full tree onto its radial quotient).
#[derive(Clone)]
pub struct Quotient {
    pub model: Box<Model>,
    pub project: Arc<dyn Fn(State) -> State + Send + Sync>,
}

impl std::fmt::Debug for Quotient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Quotient({})", self.model.name)
    }
}

/// A system together with an origin state, escape directions for both
/// orientations and an optional random walk.
#[derive(Clone, Debug)]
pub struct Model {
    pub name: String,
    pub system: System,
    pub origin: State,
    pub escapes: Vec<EscapeFamily>,
    pub reversed_escapes: Vec<EscapeFamily>,
    pub walk: Option<WalkSpec>,
    pub quotient: Option<Quotient>,
}

impl Model {
    /// The same model on the reversed graph with the reversed potential.
    pub fn reversed(&self) -> Model {
        Model {
            name: format!("{} (reversed)", self.name),
            system: self.system.reversed(),
            origin: self.origin,
            escapes: self.reversed_escapes.clone(),
            reversed_escapes: self.escapes.clone(),
            walk: None,
            quotient: None,
        }
    }

    pub fn graph(&self) -> &StateGraph {
        &self.system.graph
    }

    pub fn escape(&self, tag: &str) -> Result<&EscapeFamily> {
        self.escapes
            .iter()
            .find(|e| e.tag == tag)
            .ok_or_else(|| Error::InvalidParameter(format!("model {} has no escape family {tag}", self.name)))
    }

    /// Replaces the potential, keeping graph, origin and escapes.
    pub fn with_potential(mut self, p: Potential) -> Model {
        self.system.potential = p;
        self
    }
}

fn ray(name: &str, code: impl Fn(u64) -> State + Send + Sync + 'static) -> EscapeFamily {
    let rule = OrbitRule::new(name, code);
    let tag = name.to_string();
    EscapeFamily::new(tag, move |n| Ok(TailPoint::with_orbit(vec![], rule.clone(), n as u64, Direction::Forward)))
}

fn check_probability(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("probability must lie in (0, 1), got {p}")))
    }
}

pub fn self_loop(alpha: f64) -> Model {
    Model {
        name: format!("self_loop(alpha={alpha})"),
        system: System::new(StateGraph::new(Arc::new(SelfLoopRule)), Potential::constant(alpha)),
        origin: 0,
        escapes: vec![],
        reversed_escapes: vec![],
        walk: None,
        quotient: None,
    }
}

/// Escape families `plus` (`x_n` is the ray `n, n+1, ...`) and `minus`
/// (`-n, -n-1, ...`); on the reversed graph `primed` (`n', (n+1)', ...`)
/// and `return` (`n', n, ..., 1, 0, (1', 1, 0)^inf`).
pub fn example1(alpha: f64) -> Model {
    let graph = StateGraph::new(Arc::new(Example1Rule));
    let plus = ray("plus", |i| Example1Rule::int(i as i64));
    let minus = ray("minus", |i| Example1Rule::int(-(i as i64)));
    let primed = ray("primed", |i| Example1Rule::primed(i.max(1)));
    let back = EscapeFamily::new("return", |n| {
        let n = n.max(1) as i64;
        let mut prefix = vec![Example1Rule::primed(n as u64)];
        prefix.extend((1..=n).rev().map(Example1Rule::int));
        TailPoint::periodic(
            prefix,
            vec![Example1Rule::int(0), Example1Rule::primed(1), Example1Rule::int(1)],
            Direction::Forward,
        )
    });
    Model {
        name: format!("example1(alpha={alpha})"),
        system: System::new(graph, Potential::constant(alpha)),
        origin: Example1Rule::int(0),
        escapes: vec![plus, minus],
        reversed_escapes: vec![primed, back],
        walk: None,
        quotient: None,
    }
}

/// The zero potential; escape family `ray` is `n, n+1, ...`.
pub fn example2() -> Model {
    Model {
        name: "example2".into(),
        system: System::new(StateGraph::new(Arc::new(Example2Rule)), Potential::constant(0.0)),
        origin: zig(0),
        escapes: vec![ray("ray", |i| zig(i as i64))],
        reversed_escapes: vec![ray("ray", |i| zig(-(i as i64)))],
        walk: None,
        quotient: None,
    }
}

/// The point `(0, 1, 2, ...)` of the Example 2 graph.
pub fn example2_ray_point() -> TailPoint {
    TailPoint::with_orbit(vec![], OrbitRule::new("ray", |i| zig(i as i64)), 0, Direction::Forward)
}

/// Walk on the integers stepping right with probability `p`; potential `log P`.
pub fn biased_walk_z(p: f64) -> Result<Model> {
    check_probability(p)?;
    let graph = StateGraph::new(Arc::new(IntegerLineRule));
    let walk = WalkSpec::new(graph.clone(), zig(0), move |a, b| {
        let d = unzig(b) - unzig(a);
        match d {
            1 => p,
            -1 => 1.0 - p,
            _ => 0.0,
        }
    });
    let up = ray("plus", |i| zig(i as i64));
    let down = ray("minus", |i| zig(-(i as i64)));
    Ok(Model {
        name: format!("biased_walk_z(p={p})"),
        system: System::new(graph, walk.log_potential("log_stochastic")),
        origin: zig(0),
        escapes: vec![up.clone(), down.clone()],
        reversed_escapes: vec![up, down],
        walk: Some(walk),
        quotient: None,
    })
}

/// Birth-death walk on `0, 1, 2, ...`: up with probability `p`, down (or
/// staying at `0`) with probability `1 - p`.
pub fn inward_drift_walk(p: f64) -> Result<Model> {
    check_probability(p)?;
    let graph = StateGraph::new(Arc::new(HalfLineRule));
    let walk = WalkSpec::new(graph.clone(), 0, move |a, b| {
        if b == a + 1 {
            p
        } else if b + 1 == a || (a == 0 && b == 0) {
            1.0 - p
        } else {
            0.0
        }
    });
    Ok(Model {
        name: format!("inward_drift_walk(p={p})"),
        system: System::new(graph, walk.log_potential("log_stochastic")),
        origin: 0,
        escapes: vec![],
        reversed_escapes: vec![],
        walk: Some(walk),
        quotient: None,
    })
}

/// Nearest-neighbour walk on the `d`-regular tree moving along letter `l`
/// with probability `weights[l]`.
pub fn regular_tree(degree: u32, weights: &[f64]) -> Result<Model> {
    let rule = Arc::new(TreeRule::new(degree)?);
    if weights.len() != degree as usize
        || weights.iter().any(|&w| w <= 0.0)
        || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12
    {
        return Err(Error::InvalidParameter(
            "tree weights must be positive, one per letter, summing to 1".into(),
        ));
    }
    let graph = StateGraph::new(rule.clone());
    let w = weights.to_vec();
    let r = rule.clone();
    let walk = WalkSpec::new(graph.clone(), 0, move |a, b| {
        let (wa, wb) = (r.decode(a), r.decode(b));
        let letter = if wb.len() == wa.len() + 1 && wb[..wa.len()] == wa[..] {
            wb.last().copied()
        } else if wa.len() == wb.len() + 1 && wa[..wb.len()] == wb[..] {
            wa.last().copied()
        } else {
            None
        };
        letter.map_or(0.0, |l| w[l as usize])
    });
    Ok(Model {
        name: format!("regular_tree(degree={degree})"),
        system: System::new(graph, walk.log_potential("log_stochastic")),
        origin: 0,
        escapes: vec![],
        reversed_escapes: vec![],
        walk: Some(walk),
        quotient: Some(Quotient {
            model: Box::new(regular_tree_radial(degree)?),
            project: Arc::new(tree_projection(degree)?),
        }),
    })
}

/// Simple random walk on the radial quotient of the `d`-regular tree.
/// Escape families `branch{j}` run out along branch `j`.
pub fn regular_tree_radial(degree: u32) -> Result<Model> {
    if degree < 3 {
        return Err(Error::InvalidParameter(format!("tree degree must be at least 3, got {degree}")));
    }
    let d = degree as u64;
    let rule = Arc::new(RadialTreeRule { degree: d });
    let graph = StateGraph::new(rule.clone());
    let r = rule.clone();
    let walk = WalkSpec::new(graph.clone(), 0, move |a, b| match (r.decode(a), r.decode(b)) {
        (None, Some((_, 1))) => 1.0 / d as f64,
        (Some((j, k)), Some((i, m))) if i == j && m == k + 1 => (d - 1) as f64 / d as f64,
        (Some((j, k)), Some((i, m))) if i == j && m + 1 == k => 1.0 / d as f64,
        (Some((_, 1)), None) => 1.0 / d as f64,
        _ => 0.0,
    });
    let escapes = (0..d)
        .map(|j| {
            let r = rule.clone();
            ray(&format!("branch{j}"), move |i| r.code(j, i.max(1)))
        })
        .collect();
    Ok(Model {
        name: format!("regular_tree_radial(degree={degree})"),
        system: System::new(graph, walk.log_potential("log_stochastic")),
        origin: 0,
        escapes,
        reversed_escapes: vec![],
        walk: Some(walk),
        quotient: None,
    })
}

/// Maps full-tree states to radial-quotient states.
pub fn tree_projection(degree: u32) -> Result<impl Fn(State) -> State> {
    let tree = TreeRule::new(degree)?;
    let radial = RadialTreeRule { degree: degree as u64 };
    Ok(move |s: State| {
        let w = tree.decode(s);
        match w.first() {
            None => 0,
            Some(&j) => radial.code(j as u64, w.len() as u64),
        }
    })
}

/// Every zoo model at representative parameters.
pub fn zoo() -> Vec<Model> {
    vec![
        self_loop(-1.0),
        example1(-1.0),
        example2(),
        biased_walk_z(2.0 / 3.0).expect("valid"),
        inward_drift_walk(0.3).expect("valid"),
        regular_tree(3, &[1.0 / 3.0; 3]).expect("valid"),
        regular_tree_radial(3).expect("valid"),
    ]
}

/// First-passage generating function
/// `F(a, b) = sum_n sum over paths a -> b of length n that do not visit b at
/// steps 1..n-1 of e^{phi_n}`, with the empty path counted when `a = b`.
/// Markovian potentials only; the series is certified like a Green series.
pub fn first_passage(sys: &System, a: State, b: State, opts: &GreenOptions) -> Result<GreenValue> {
    sys.potential.require_markovian()?;
    let g = &sys.graph;
    if !g.contains(a) || !g.contains(b) {
        return Err(Error::UnknownState(format!("{} or {}", g.label(a), g.label(b))));
    }
    let mut mass: HashMap<State, f64> = HashMap::from([(a, 1.0)]);
    let mut n = 0usize;
    certify_series(opts, |_| {
        if n == 0 {
            n += 1;
            return Ok(if a == b { 1.0 } else { 0.0 });
        }
        let mut next: HashMap<State, f64> = HashMap::with_capacity(mass.len() * 2);
        let mut keys: Vec<State> = mass.keys().copied().collect();
        keys.sort_unstable();
        for s in keys {
            let m = mass[&s];
            for &t in g.out_edges(s)?.iter() {
                *next.entry(t).or_insert(0.0) += m * sys.potential.edge(s, t)?.exp();
            }
        }
        let hit = next.remove(&b).unwrap_or(0.0);
        mass = next;
        n += 1;
        Ok(hit)
    })
}
