//! Exact evaluation of iterated Ruelle operators on simple functions.
//!
//! `(L^n f)(x)` sums `e^{phi_n(y)} f(y)` over the finitely many `y` with
//! `T^n y = x`. Those preimages are grown backwards from `x` one symbol at a
//! time; each layer maps the leading `range - 1` coordinates of a partial
//! preimage to the accumulated weight, which collapses the preimage tree to
//! the size of the backward-reachable state set. A cylinder `[w]` is attached
//! to the layer of depth `n - |w|` in one final pass.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::potential::{Potential, MAX_RANGE};
use crate::shift::{Cylinder, State, StateGraph, TailPoint};

/// A state graph together with a potential on it.
#[derive(Clone, Debug)]
pub struct System {
    pub graph: StateGraph,
    pub potential: Potential,
}

impl System {
    pub fn new(graph: StateGraph, potential: Potential) -> Self {
        System { graph, potential }
    }

    /// The reversed graph with the potential read backwards.
    pub fn reversed(&self) -> System {
        System {
            graph: self.graph.reversed(),
            potential: self.potential.reversed(),
        }
    }
}

/// A finite combination `sum c_i 1_[w_i]` of cylinder indicators.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimpleFunction {
    pub terms: Vec<(f64, Cylinder)>,
}

impl SimpleFunction {
    pub fn zero() -> Self {
        SimpleFunction::default()
    }

    pub fn indicator(c: Cylinder) -> Self {
        SimpleFunction {
            terms: vec![(1.0, c)],
        }
    }

    pub fn from_terms(terms: Vec<(f64, Cylinder)>) -> Self {
        SimpleFunction { terms }
    }

    pub fn scaled(&self, k: f64) -> Self {
        SimpleFunction {
            terms: self.terms.iter().map(|(c, w)| (c * k, w.clone())).collect(),
        }
    }

    pub fn plus(&self, other: &SimpleFunction) -> Self {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        SimpleFunction { terms }
    }

    /// Merges repeated cylinders, drops zero coefficients, sorts by word.
    pub fn merged(&self) -> Self {
        let mut acc: BTreeMap<Cylinder, f64> = BTreeMap::new();
        for (c, w) in &self.terms {
            *acc.entry(w.clone()).or_insert(0.0) += c;
        }
        SimpleFunction {
            terms: acc.into_iter().filter(|(_, c)| *c != 0.0).map(|(w, c)| (c, w)).collect(),
        }
    }

    pub fn eval(&self, x: &TailPoint) -> f64 {
        self.terms
            .iter()
            .filter(|(_, w)| w.contains(x))
            .map(|(c, _)| c)
            .sum()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.terms.iter().all(|(c, _)| *c >= 0.0)
    }

    fn min_len(&self) -> usize {
        self.terms.iter().map(|(_, w)| w.len()).min().unwrap_or(1)
    }
}

/// Commutative semiring of path weights. `f64` is the production instance;
/// other instances (exact rationals, path counts) reuse the same recursion.
pub trait PathWeight: Clone {
    fn zero() -> Self;
    fn one() -> Self;
    fn add_assign(&mut self, other: &Self);
    fn mul(&self, other: &Self) -> Self;
}

impl PathWeight for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn add_assign(&mut self, other: &Self) {
        *self += *other;
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
}

pub(crate) type Head = [State; MAX_RANGE - 1];

pub(crate) fn head_of(x: &TailPoint, r: usize) -> Head {
    let mut h = [0; MAX_RANGE - 1];
    for (i, slot) in h.iter_mut().enumerate().take(r - 1) {
        *slot = x.coord(i);
    }
    h
}

/// One backward step: prepend every admissible symbol to every head.
pub(crate) fn step_layer<W: PathWeight>(
    g: &StateGraph,
    r: usize,
    layer: &[(Head, W)],
    weight: &dyn Fn(&[State]) -> Result<W>,
) -> Result<Vec<(Head, W)>> {
    let mut acc: HashMap<Head, W> = HashMap::with_capacity(layer.len() * 2);
    let mut win = [0; MAX_RANGE];
    for (h, w) in layer {
        for &b in g.in_edges(h[0])?.iter() {
            win[0] = b;
            win[1..r].copy_from_slice(&h[..r - 1]);
            let step = weight(&win[..r])?;
            let mut nh = [0; MAX_RANGE - 1];
            nh[0] = b;
            nh[1..r - 1].copy_from_slice(&h[..r - 2]);
            acc.entry(nh).or_insert_with(W::zero).add_assign(&w.mul(&step));
        }
    }
    let mut out: Vec<(Head, W)> = acc.into_iter().collect();
    out.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

/// Attaches `[w]` in front of every partial preimage of a layer.
pub(crate) fn attach<W: PathWeight>(
    g: &StateGraph,
    r: usize,
    w: &[State],
    layer: &[(Head, W)],
    weight: &dyn Fn(&[State]) -> Result<W>,
) -> Result<W> {
    let m = w.len();
    let last = w[m - 1];
    // Windows lying entirely inside w do not depend on the head.
    let inner_windows = (m + 1).saturating_sub(r);
    let mut inner = W::one();
    for i in 0..inner_windows {
        inner = inner.mul(&weight(&w[i..i + r])?);
    }
    let succ = g.out_edges(last)?;
    let mut total = W::zero();
    let mut seq = [0; 2 * MAX_RANGE];
    for (h, hw) in layer {
        if succ.binary_search(&h[0]).is_err() {
            continue;
        }
        let mut prod = inner.clone();
        for i in inner_windows..m {
            // window w[i..m] ++ h[..r - (m - i)]
            let k = m - i;
            seq[..k].copy_from_slice(&w[i..m]);
            seq[k..r].copy_from_slice(&h[..r - k]);
            prod = prod.mul(&weight(&seq[..r])?);
        }
        total.add_assign(&hw.mul(&prod));
    }
    Ok(total)
}

/// `(L^n 1_[w])(x)` for `n < |w|`: the only preimage candidate is
/// `w[..n] · x`, which lies in `[w]` iff `x` begins with `w[n..]`.
pub(crate) fn short_term<W: PathWeight>(
    g: &StateGraph,
    r: usize,
    w: &[State],
    x: &TailPoint,
    n: usize,
    weight: &dyn Fn(&[State]) -> Result<W>,
) -> Result<W> {
    let m = w.len();
    if (n..m).any(|i| x.coord(i - n) != w[i]) {
        return Ok(W::zero());
    }
    if n > 0 && !g.has_edge(w[n - 1], x.first())? {
        return Ok(W::zero());
    }
    let mut seq: Vec<State> = w[..n].to_vec();
    seq.extend(x.coords(r - 1));
    let mut prod = W::one();
    for i in 0..n {
        prod = prod.mul(&weight(&seq[i..i + r])?);
    }
    Ok(prod)
}

/// `(L^n 1_[w])(x)` in an arbitrary weight semiring, where `weight` gives the
/// multiplicative weight of each `range`-window.
pub fn eval_indicator_in<W: PathWeight>(
    g: &StateGraph,
    range: usize,
    w: &[State],
    x: &TailPoint,
    n: usize,
    weight: &dyn Fn(&[State]) -> Result<W>,
) -> Result<W> {
    if w.is_empty() {
        return Err(Error::EmptyWord);
    }
    if n < w.len() {
        return short_term(g, range, w, x, n, weight);
    }
    let mut layer = vec![(head_of(x, range), W::one())];
    for _ in 0..n - w.len() {
        layer = step_layer(g, range, &layer, weight)?;
    }
    attach(g, range, w, &layer, weight)
}

pub(crate) fn exp_weight(p: &Potential, inv_lambda: f64) -> impl Fn(&[State]) -> Result<f64> + '_ {
    move |win: &[State]| Ok(p.value(win)?.exp() * inv_lambda)
}

/// `(L^n f)(x)` evaluated exactly by backward-path dynamic programming.
pub fn eval_ln(sys: &System, f: &SimpleFunction, x: &TailPoint, n: usize) -> Result<f64> {
    let r = sys.potential.range();
    let weight = exp_weight(&sys.potential, 1.0);
    let max_depth = n.saturating_sub(f.min_len());
    let mut by_depth: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut total = 0.0;
    for (i, (c, w)) in f.terms.iter().enumerate() {
        if n < w.len() {
            total += c * short_term(&sys.graph, r, w.word(), x, n, &weight)?;
        } else {
            by_depth.entry(n - w.len()).or_default().push(i);
        }
    }
    if by_depth.is_empty() {
        return Ok(total);
    }
    let mut layer = vec![(head_of(x, r), 1.0)];
    for depth in 0..=max_depth {
        if let Some(ids) = by_depth.get(&depth) {
            for &i in ids {
                let (c, w) = &f.terms[i];
                total += c * attach(&sys.graph, r, w.word(), &layer, &weight)?;
            }
        }
        if depth < max_depth {
            layer = step_layer(&sys.graph, r, &layer, &weight)?;
        }
    }
    if !total.is_finite() {
        return Err(Error::Overflow(n));
    }
    Ok(total)
}

/// `L f` as a simple function (Markovian potentials only).
pub fn push_l(sys: &System, f: &SimpleFunction) -> Result<SimpleFunction> {
    sys.potential.require_markovian()?;
    let mut terms = Vec::new();
    for (c, w) in &f.terms {
        let word = w.word();
        if word.len() >= 2 {
            let k = sys.potential.edge(word[0], word[1])?.exp();
            terms.push((c * k, Cylinder::from_admissible(word[1..].to_vec())));
        } else {
            let a = word[0];
            for &b in sys.graph.out_edges(a)?.iter() {
                let k = sys.potential.edge(a, b)?.exp();
                terms.push((c * k, Cylinder::single(b)));
            }
        }
    }
    Ok(SimpleFunction { terms }.merged())
}

/// `sum over {y : T^n y = T^n x} of e^{phi_n(y)}`.
pub fn backward_partition_sum(sys: &System, x: &TailPoint, n: usize) -> Result<f64> {
    let r = sys.potential.range();
    let weight = exp_weight(&sys.potential, 1.0);
    let base = x.shift_by(n);
    let mut layer = vec![(head_of(&base, r), 1.0)];
    for _ in 0..n {
        layer = step_layer(&sys.graph, r, &layer, &weight)?;
    }
    Ok(layer.iter().map(|(_, w)| w).sum())
}

/// Incrementally grown backward layers from a fixed point, with weights
/// `e^{phi}/lambda` per step and optional per-layer rescaling.
pub struct LayerWalker<'a> {
    sys: &'a System,
    inv_lambda: f64,
    layer: Vec<(Head, f64)>,
    depth: usize,
    log_scale: f64,
    rescale: bool,
}

impl<'a> LayerWalker<'a> {
    pub fn new(sys: &'a System, lambda: f64, x: &TailPoint, rescale: bool) -> Result<Self> {
        if lambda <= 0.0 {
            return Err(Error::InvalidParameter("lambda must be positive".into()));
        }
        Ok(LayerWalker {
            sys,
            inv_lambda: 1.0 / lambda,
            layer: vec![(head_of(x, sys.potential.range()), 1.0)],
            depth: 0,
            log_scale: 0.0,
            rescale,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Natural log of the factor divided out of the stored layer.
    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    pub fn layer_len(&self) -> usize {
        self.layer.len()
    }

    pub fn advance(&mut self) -> Result<()> {
        let r = self.sys.potential.range();
        let weight = exp_weight(&self.sys.potential, self.inv_lambda);
        self.layer = step_layer(&self.sys.graph, r, &self.layer, &weight)?;
        self.depth += 1;
        if self.rescale {
            let m = self.layer.iter().map(|(_, w)| *w).fold(0.0, f64::max);
            if m > 0.0 {
                for (_, w) in self.layer.iter_mut() {
                    *w /= m;
                }
                self.log_scale += m.ln();
            }
        } else if self.layer.iter().any(|(_, w)| !w.is_finite()) {
            return Err(Error::Overflow(self.depth));
        }
        Ok(())
    }

    /// Stored weight of partial preimages whose leading coordinates are `head`.
    pub fn weight_at_head(&self, head: &[State]) -> Option<f64> {
        let r = self.sys.potential.range();
        let mut key = [0; MAX_RANGE - 1];
        key[..r - 1].copy_from_slice(&head[..r - 1]);
        self.layer
            .binary_search_by(|(h, _)| h.cmp(&key))
            .ok()
            .map(|i| self.layer[i].1)
    }

    /// `lambda^{-(depth + |w|)} (L^{depth+|w|} 1_[w])(x)`, divided by
    /// `exp(log_scale)` when rescaling.
    pub fn attach(&self, w: &[State]) -> Result<f64> {
        let r = self.sys.potential.range();
        let weight = exp_weight(&self.sys.potential, self.inv_lambda);
        attach(&self.sys.graph, r, w, &self.layer, &weight)
    }

    /// `lambda^{-n} (L^n 1_[w])(x)` for `n < |w|`.
    pub fn short(&self, w: &[State], x: &TailPoint, n: usize) -> Result<f64> {
        let r = self.sys.potential.range();
        let weight = exp_weight(&self.sys.potential, self.inv_lambda);
        short_term(&self.sys.graph, r, w, x, n, &weight)
    }
}
