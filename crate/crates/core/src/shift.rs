//! Countable-state topological Markov shifts.
//!
//! A [`StateGraph`] wraps a lazily evaluated [`GraphRule`] and memoizes
//! neighbourhoods. Points of the one-sided shift spaces are represented by
//! [`TailPoint`]: a finite prefix followed by either a repeating cycle or a
//! model-supplied orbit generator. Backward points (elements of the negative
//! shift) store their coordinates in the order `y_0, y_-1, y_-2, ...`, so they
//! are forward paths of the reversed graph.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::sync::{Arc, RwLock};

use serde::Serialize;

use crate::error::{Error, Result};

/// Opaque integer code of a state. Model builders define the encoding.
pub type State = u64;

/// Lazy description of a directed graph with finite in- and out-degrees.
pub trait GraphRule: Send + Sync {
    fn contains(&self, s: State) -> bool;
    fn successors(&self, s: State) -> Vec<State>;
    fn predecessors(&self, s: State) -> Vec<State>;
    fn label(&self, s: State) -> String {
        s.to_string()
    }
    fn parse_label(&self, text: &str) -> Option<State>;
}

type EdgeCache = RwLock<HashMap<State, Arc<[State]>>>;

struct GraphInner {
    rule: Arc<dyn GraphRule>,
    reversed: bool,
    /// Points that replace the computed anchor of a state.
    anchors: BTreeMap<State, TailPoint>,
    out_cache: EdgeCache,
    in_cache: EdgeCache,
}

/// Memoizing handle on a [`GraphRule`]. Cheap to clone; clones share caches.
#[derive(Clone)]
pub struct StateGraph {
    inner: Arc<GraphInner>,
}

impl fmt::Debug for StateGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StateGraph")
            .field("reversed", &self.inner.reversed)
            .finish_non_exhaustive()
    }
}

impl StateGraph {
    pub fn new(rule: Arc<dyn GraphRule>) -> Self {
        Self::build(rule, false)
    }

    fn build(rule: Arc<dyn GraphRule>, reversed: bool) -> Self {
        Self::build_with(rule, reversed, BTreeMap::new())
    }

    fn build_with(rule: Arc<dyn GraphRule>, reversed: bool, anchors: BTreeMap<State, TailPoint>) -> Self {
        StateGraph {
            inner: Arc::new(GraphInner {
                rule,
                reversed,
                anchors,
                out_cache: RwLock::new(HashMap::new()),
                in_cache: RwLock::new(HashMap::new()),
            }),
        }
    }

    /// The same graph with the anchors of some states fixed by hand. Each
    /// point must be forward, admissible, and start at a successor of its
    /// state. Overrides do not carry over to [`StateGraph::reversed`].
    pub fn with_anchors(&self, anchors: BTreeMap<State, TailPoint>) -> Result<StateGraph> {
        for (&a, x) in &anchors {
            if x.direction() != Direction::Forward {
                return Err(Error::DirectionMismatch);
            }
            x.validate(self)?;
            require_admissible(&[a, x.first()], self)?;
        }
        let mut merged = self.inner.anchors.clone();
        merged.extend(anchors);
        Ok(Self::build_with(self.inner.rule.clone(), self.inner.reversed, merged))
    }

    pub fn anchor_override(&self, a: State) -> Option<&TailPoint> {
        self.inner.anchors.get(&a)
    }

    /// The same state set with every edge reversed.
    pub fn reversed(&self) -> StateGraph {
        Self::build(self.inner.rule.clone(), !self.inner.reversed)
    }

    pub fn is_reversed(&self) -> bool {
        self.inner.reversed
    }

    pub fn contains(&self, s: State) -> bool {
        self.inner.rule.contains(s)
    }

    pub fn label(&self, s: State) -> String {
        self.inner.rule.label(s)
    }

    pub fn labels(&self, word: &[State]) -> String {
        word.iter().map(|&s| self.label(s)).collect::<Vec<_>>().join(",")
    }

    pub fn parse_label(&self, text: &str) -> Result<State> {
        let t = text.trim();
        self.inner
            .rule
            .parse_label(t)
            .filter(|&s| self.contains(s))
            .ok_or_else(|| Error::UnknownState(t.to_string()))
    }

    fn ensure(&self, s: State) -> Result<()> {
        if self.contains(s) {
            Ok(())
        } else {
            Err(Error::UnknownState(format!("#{s}")))
        }
    }

    fn cached(&self, s: State, outgoing: bool) -> Result<Arc<[State]>> {
        let cache = if outgoing {
            &self.inner.out_cache
        } else {
            &self.inner.in_cache
        };
        if let Some(v) = cache.read().expect("edge cache poisoned").get(&s) {
            return Ok(v.clone());
        }
        self.ensure(s)?;
        let rule = &self.inner.rule;
        let mut list = if outgoing != self.inner.reversed {
            rule.successors(s)
        } else {
            rule.predecessors(s)
        };
        list.sort_unstable();
        list.dedup();
        let list: Arc<[State]> = list.into();
        cache
            .write()
            .expect("edge cache poisoned")
            .insert(s, list.clone());
        Ok(list)
    }

    /// Successors of `s`, sorted, without growing the cache. Meant for long
    /// simulations that visit many states once.
    pub fn successors_uncached(&self, s: State) -> Result<Vec<State>> {
        if let Some(v) = self.inner.out_cache.read().expect("edge cache poisoned").get(&s) {
            return Ok(v.to_vec());
        }
        self.ensure(s)?;
        let rule = &self.inner.rule;
        let mut list = if self.inner.reversed {
            rule.predecessors(s)
        } else {
            rule.successors(s)
        };
        list.sort_unstable();
        list.dedup();
        Ok(list)
    }

    /// Successors of `s`, sorted by code.
    pub fn out_edges(&self, s: State) -> Result<Arc<[State]>> {
        self.cached(s, true)
    }

    /// Predecessors of `s`, sorted by code.
    pub fn in_edges(&self, s: State) -> Result<Arc<[State]>> {
        self.cached(s, false)
    }

    pub fn has_edge(&self, a: State, b: State) -> Result<bool> {
        Ok(self.out_edges(a)?.binary_search(&b).is_ok())
    }

    /// Forward breadth-first ball of the given radius around `center`.
    pub fn ball(&self, center: State, radius: usize) -> Result<Vec<State>> {
        let mut seen = HashMap::new();
        seen.insert(center, 0usize);
        let mut order = vec![center];
        let mut queue = VecDeque::from([center]);
        while let Some(s) = queue.pop_front() {
            let d = seen[&s];
            if d == radius {
                continue;
            }
            for &t in self.out_edges(s)?.iter() {
                if !seen.contains_key(&t) {
                    seen.insert(t, d + 1);
                    order.push(t);
                    queue.push_back(t);
                }
            }
        }
        order.sort_unstable();
        Ok(order)
    }

    /// All admissible words of length `1..=max_len` whose states lie in `states`.
    pub fn words_within(&self, states: &[State], max_len: usize) -> Result<Vec<Vec<State>>> {
        let mut allowed: Vec<State> = states.to_vec();
        allowed.sort_unstable();
        let mut out: Vec<Vec<State>> = Vec::new();
        let mut frontier: Vec<Vec<State>> = allowed.iter().map(|&s| vec![s]).collect();
        for len in 1..=max_len {
            out.extend(frontier.iter().cloned());
            if len == max_len {
                break;
            }
            let mut next = Vec::new();
            for w in &frontier {
                let last = *w.last().expect("nonempty word");
                for &t in self.out_edges(last)?.iter() {
                    if allowed.binary_search(&t).is_ok() {
                        let mut v = w.clone();
                        v.push(t);
                        next.push(v);
                    }
                }
            }
            frontier = next;
        }
        Ok(out)
    }
}

/// True iff every consecutive pair of `word` is an edge of `g`.
pub fn is_admissible(word: &[State], g: &StateGraph) -> Result<bool> {
    if word.is_empty() {
        return Err(Error::EmptyWord);
    }
    for &s in word {
        g.ensure(s)?;
    }
    for pair in word.windows(2) {
        if !g.has_edge(pair[0], pair[1])? {
            return Ok(false);
        }
    }
    Ok(true)
}

fn require_admissible(word: &[State], g: &StateGraph) -> Result<()> {
    if word.is_empty() {
        return Err(Error::EmptyWord);
    }
    for &s in word {
        g.ensure(s)?;
    }
    for pair in word.windows(2) {
        if !g.has_edge(pair[0], pair[1])? {
            return Err(Error::Inadmissible {
                from: g.label(pair[0]),
                to: g.label(pair[1]),
            });
        }
    }
    Ok(())
}

/// Directed graph distance, or a report that it exceeds the search cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GraphDistance {
    Finite(usize),
    Beyond(usize),
}

impl GraphDistance {
    pub fn finite(self) -> Option<usize> {
        match self {
            GraphDistance::Finite(d) => Some(d),
            GraphDistance::Beyond(_) => None,
        }
    }
}

/// Least `n >= 0` such that some length-`n` path leads from `a` to `b`.
pub fn graph_distance(a: State, b: State, g: &StateGraph, cap: usize) -> Result<GraphDistance> {
    g.ensure(a)?;
    g.ensure(b)?;
    if a == b {
        return Ok(GraphDistance::Finite(0));
    }
    let mut seen = HashMap::from([(a, 0usize)]);
    let mut queue = VecDeque::from([a]);
    while let Some(s) = queue.pop_front() {
        let d = seen[&s];
        if d >= cap {
            continue;
        }
        for &t in g.out_edges(s)?.iter() {
            if t == b {
                return Ok(GraphDistance::Finite(d + 1));
            }
            if !seen.contains_key(&t) {
                seen.insert(t, d + 1);
                queue.push_back(t);
            }
        }
    }
    Ok(GraphDistance::Beyond(cap))
}

/// Backward distances to `target`, level by level up to `cap`. The search
/// ends with the first level containing a state of `stop`.
fn distances_to(target: State, g: &StateGraph, cap: usize, stop: &[State]) -> Result<HashMap<State, usize>> {
    let mut dist = HashMap::from([(target, 0usize)]);
    let mut level = vec![target];
    let mut d = 0;
    while !level.is_empty() && d < cap && !level.iter().any(|s| stop.contains(s)) {
        let mut next = Vec::new();
        for &s in &level {
            for &p in g.in_edges(s)?.iter() {
                if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(p) {
                    e.insert(d + 1);
                    next.push(p);
                }
            }
        }
        level = next;
        d += 1;
    }
    Ok(dist)
}

/// Lexicographically smallest among the shortest paths from `a` to `b`,
/// both endpoints included. `None` if no path of length `<= cap` exists.
pub fn shortest_path(a: State, b: State, g: &StateGraph, cap: usize) -> Result<Option<Vec<State>>> {
    g.ensure(a)?;
    let dist = distances_to(b, g, cap, &[a])?;
    let Some(&d0) = dist.get(&a) else {
        return Ok(None);
    };
    let mut path = vec![a];
    let mut cur = a;
    for remaining in (0..d0).rev() {
        let next = g
            .out_edges(cur)?
            .iter()
            .copied()
            .find(|t| dist.get(t) == Some(&remaining))
            .expect("BFS layers are consistent");
        path.push(next);
        cur = next;
    }
    Ok(Some(path))
}

/// Shortest, then lexicographically smallest, cycle through `v`, listed from `v`.
fn shortest_cycle(v: State, g: &StateGraph, cap: usize) -> Result<Option<Vec<State>>> {
    let dist = distances_to(v, g, cap.saturating_sub(1), &g.out_edges(v)?)?;
    let best = g
        .out_edges(v)?
        .iter()
        .filter_map(|u| dist.get(u).map(|&d| (d, *u)))
        .min();
    let Some((_, u)) = best else {
        return Ok(None);
    };
    let mut cycle = vec![v];
    if u == v {
        return Ok(Some(cycle));
    }
    let path = shortest_path(u, v, g, cap)?.expect("distance is known");
    cycle.extend_from_slice(&path[..path.len() - 1]);
    Ok(Some(cycle))
}

/// Reports pairs of sampled states with no connecting path within `radius`.
pub fn transitivity_violations(
    states: &[State],
    g: &StateGraph,
    radius: usize,
) -> Result<Vec<(State, State)>> {
    let mut bad = Vec::new();
    for &a in states {
        for &b in states {
            if graph_distance(a, b, g, radius)?.finite().is_none() {
                bad.push((a, b));
            }
        }
    }
    Ok(bad)
}

/// Whether a point lives in the positive or the negative one-sided shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Direction {
    Forward,
    Backward,
}

/// Deterministic generator for the coordinates of a non-periodic tail.
pub struct OrbitRule {
    pub name: String,
    coord: Box<dyn Fn(u64) -> State + Send + Sync>,
}

impl OrbitRule {
    pub fn new(name: impl Into<String>, coord: impl Fn(u64) -> State + Send + Sync + 'static) -> Arc<Self> {
        Arc::new(OrbitRule {
            name: name.into(),
            coord: Box::new(coord),
        })
    }

    pub fn at(&self, i: u64) -> State {
        (self.coord)(i)
    }
}

/// The infinite part of a [`TailPoint`].
#[derive(Clone)]
pub enum Tail {
    Cycle(Vec<State>),
    Orbit { rule: Arc<OrbitRule>, offset: u64 },
}

/// Number of orbit coordinates inspected when a generated tail is validated
/// or compared.
pub const ORBIT_HORIZON: usize = 256;

/// A finitely described point of the positive or negative shift space.
#[derive(Clone)]
pub struct TailPoint {
    prefix: Vec<State>,
    tail: Tail,
    direction: Direction,
}

impl fmt::Debug for TailPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.tail {
            Tail::Cycle(c) => write!(f, "{:?}{:?}({:?})^inf", self.direction, self.prefix, c),
            Tail::Orbit { rule, offset } => write!(
                f,
                "{:?}{:?}<{}+{}>",
                self.direction, self.prefix, rule.name, offset
            ),
        }
    }
}

impl TailPoint {
    /// Eventually periodic point `prefix · cycle · cycle · ...`.
    pub fn periodic(prefix: Vec<State>, cycle: Vec<State>, direction: Direction) -> Result<Self> {
        if cycle.is_empty() {
            return Err(Error::EmptyWord);
        }
        let mut p = TailPoint {
            prefix,
            tail: Tail::Cycle(cycle),
            direction,
        };
        p.normalize();
        Ok(p)
    }

    /// Point `prefix · rule(offset) · rule(offset+1) · ...`.
    pub fn with_orbit(prefix: Vec<State>, rule: Arc<OrbitRule>, offset: u64, direction: Direction) -> Self {
        let mut p = TailPoint {
            prefix,
            tail: Tail::Orbit { rule, offset },
            direction,
        };
        p.normalize();
        p
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn prefix(&self) -> &[State] {
        &self.prefix
    }

    pub fn tail(&self) -> &Tail {
        &self.tail
    }

    fn normalize(&mut self) {
        match &mut self.tail {
            Tail::Cycle(cycle) => {
                let n = cycle.len();
                if let Some(p) = (1..=n).find(|p| n % p == 0 && (0..n).all(|i| cycle[i] == cycle[i % p])) {
                    cycle.truncate(p);
                }
                while let (Some(&last), Some(&c_last)) = (self.prefix.last(), cycle.last()) {
                    if last != c_last {
                        break;
                    }
                    self.prefix.pop();
                    cycle.rotate_right(1);
                }
            }
            Tail::Orbit { rule, offset } => {
                while *offset > 0 && self.prefix.last() == Some(&rule.at(*offset - 1)) {
                    self.prefix.pop();
                    *offset -= 1;
                }
            }
        }
    }

    /// Coordinate `i` (for backward points, coordinate `-i`).
    pub fn coord(&self, i: usize) -> State {
        if i < self.prefix.len() {
            return self.prefix[i];
        }
        let j = i - self.prefix.len();
        match &self.tail {
            Tail::Cycle(c) => c[j % c.len()],
            Tail::Orbit { rule, offset } => rule.at(*offset + j as u64),
        }
    }

    pub fn first(&self) -> State {
        self.coord(0)
    }

    pub fn coords(&self, n: usize) -> Vec<State> {
        (0..n).map(|i| self.coord(i)).collect()
    }

    /// Coordinates that fix the point: prefix, one cycle and its closing
    /// junction, or a validation horizon for generated tails.
    fn checked_span(&self) -> usize {
        match &self.tail {
            Tail::Cycle(c) => self.prefix.len() + c.len() + 1,
            Tail::Orbit { .. } => self.prefix.len() + ORBIT_HORIZON,
        }
    }

    /// Checks admissibility of the representation, junctions included.
    /// Generated tails are checked up to [`ORBIT_HORIZON`] coordinates.
    pub fn validate(&self, g: &StateGraph) -> Result<()> {
        let g = oriented(g, self.direction);
        require_admissible(&self.coords(self.checked_span()), &g)
    }

    /// The shifted point: coordinate 0 removed.
    pub fn shift(&self) -> TailPoint {
        let mut p = self.clone();
        if !p.prefix.is_empty() {
            p.prefix.remove(0);
        } else {
            match &mut p.tail {
                Tail::Cycle(c) => c.rotate_left(1),
                Tail::Orbit { offset, .. } => *offset += 1,
            }
        }
        p
    }

    /// `T^n` applied to the point.
    pub fn shift_by(&self, n: usize) -> TailPoint {
        let mut p = self.clone();
        let k = n.min(p.prefix.len());
        p.prefix.drain(..k);
        let rest = n - k;
        match &mut p.tail {
            Tail::Cycle(c) => {
                let len = c.len();
                c.rotate_left(rest % len);
            }
            Tail::Orbit { offset, .. } => *offset += rest as u64,
        }
        p
    }

    /// The point `word · self` (no admissibility check).
    pub fn prepend(&self, word: &[State]) -> TailPoint {
        let mut prefix = word.to_vec();
        prefix.extend_from_slice(&self.prefix);
        let mut p = TailPoint {
            prefix,
            tail: self.tail.clone(),
            direction: self.direction,
        };
        p.normalize();
        p
    }

    fn same_tail(&self, other: &TailPoint) -> bool {
        match (&self.tail, &other.tail) {
            (Tail::Cycle(a), Tail::Cycle(b)) => a == b,
            (Tail::Orbit { rule: r1, offset: o1 }, Tail::Orbit { rule: r2, offset: o2 }) => {
                r1.name == r2.name && o1 == o2
            }
            _ => false,
        }
    }
}

impl PartialEq for TailPoint {
    fn eq(&self, other: &Self) -> bool {
        self.direction == other.direction && self.prefix == other.prefix && self.same_tail(other)
    }
}

fn oriented(g: &StateGraph, direction: Direction) -> StateGraph {
    match direction {
        Direction::Forward => g.clone(),
        Direction::Backward => g.reversed(),
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Symbolic metric `2^{-i}` with `i` the first coordinate where the points differ.
pub fn metric_d(x: &TailPoint, y: &TailPoint) -> Result<f64> {
    if x.direction != y.direction {
        return Err(Error::DirectionMismatch);
    }
    if x == y {
        return Ok(0.0);
    }
    let horizon = match (&x.tail, &y.tail) {
        (Tail::Cycle(a), Tail::Cycle(b)) => {
            let lcm = a.len() / gcd(a.len(), b.len()) * b.len();
            x.prefix.len().max(y.prefix.len()) + lcm
        }
        _ => x.prefix.len().max(y.prefix.len()) + ORBIT_HORIZON,
    };
    for i in 0..horizon {
        if x.coord(i) != y.coord(i) {
            return Ok((-(i as f64)).exp2());
        }
    }
    // Distinct generated tails that agree on the whole inspected horizon.
    Ok((-(horizon as f64)).exp2())
}

/// `{b·x : b ∈ in_edges(x_0)}` (out-edges for backward points).
pub fn preimages(x: &TailPoint, g: &StateGraph) -> Result<Vec<TailPoint>> {
    let g = oriented(g, x.direction);
    Ok(g.in_edges(x.first())?
        .iter()
        .map(|&b| x.prepend(&[b]))
        .collect())
}

/// Default depth cap for cycle searches.
pub const CYCLE_SEARCH_CAP: usize = 64;
const ANCHOR_NODE_BUDGET: usize = 4096;

/// Deterministic point `x_a` whose first coordinate is a successor of `a`.
///
/// Successors and their descendants are scanned in breadth-first order with
/// ascending codes; the first state found on a cycle of length `<= cap`
/// contributes its shortest, lexicographically smallest cycle. The point is
/// the breadth-first path to that state followed by the cycle repeated.
///
/// A point set with [`StateGraph::with_anchors`] takes precedence.
pub fn anchor_point(a: State, g: &StateGraph, cap: usize) -> Result<TailPoint> {
    if let Some(x) = g.anchor_override(a) {
        return Ok(x.clone());
    }
    let succ = g.out_edges(a)?;
    let mut parent: HashMap<State, Option<State>> = HashMap::new();
    let mut queue = VecDeque::new();
    for &s in succ.iter() {
        if parent.insert(s, None).is_none() {
            queue.push_back(s);
        }
    }
    let mut visited = 0usize;
    while let Some(v) = queue.pop_front() {
        visited += 1;
        if let Some(cycle) = shortest_cycle(v, g, cap)? {
            let mut path = vec![];
            let mut cur = parent[&v];
            while let Some(p) = cur {
                path.push(p);
                cur = parent[&p];
            }
            path.reverse();
            return TailPoint::periodic(path, cycle, Direction::Forward);
        }
        if visited >= ANCHOR_NODE_BUDGET {
            break;
        }
        for &t in g.out_edges(v)?.iter() {
            if let std::collections::hash_map::Entry::Vacant(e) = parent.entry(t) {
                e.insert(Some(v));
                queue.push_back(t);
            }
        }
    }
    Err(Error::NoCycleReachable {
        state: g.label(a),
        cap,
    })
}

/// A point of the cylinder `[word]`: the word followed by the anchor of its
/// last state.
pub fn point_in(word: &[State], g: &StateGraph) -> Result<TailPoint> {
    require_admissible(word, g)?;
    let anchor = anchor_point(*word.last().expect("nonempty"), g, CYCLE_SEARCH_CAP)?;
    Ok(anchor.prepend(word))
}

/// An admissible finite word identifying the cylinder set of points that
/// begin with it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cylinder {
    word: Vec<State>,
}

impl Cylinder {
    pub fn new(word: Vec<State>, g: &StateGraph) -> Result<Self> {
        require_admissible(&word, g)?;
        Ok(Cylinder { word })
    }

    /// Wraps a word known to be admissible.
    pub fn from_admissible(word: Vec<State>) -> Self {
        assert!(!word.is_empty(), "cylinder word must be nonempty");
        Cylinder { word }
    }

    pub fn single(s: State) -> Self {
        Cylinder { word: vec![s] }
    }

    pub fn word(&self) -> &[State] {
        &self.word
    }

    pub fn len(&self) -> usize {
        self.word.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word.is_empty()
    }

    pub fn first(&self) -> State {
        self.word[0]
    }

    pub fn last(&self) -> State {
        *self.word.last().expect("nonempty")
    }

    pub fn contains(&self, x: &TailPoint) -> bool {
        self.word.iter().enumerate().all(|(i, &s)| x.coord(i) == s)
    }

    pub fn display(&self, g: &StateGraph) -> String {
        format!("[{}]", g.labels(&self.word))
    }
}
