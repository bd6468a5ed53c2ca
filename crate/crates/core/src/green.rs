//! Green's functions with a geometric tail certificate, and Martin kernels.
//!
//! The series `G(f, x | lambda) = sum_n lambda^{-n} (L^n f)(x)` is summed in
//! blocks of `block` consecutive terms (a block equal to the period of the
//! graph keeps bipartite models from producing zero terms). Once the last
//! `window` block ratios are all below some `q < 1`, the remainder is bounded
//! by `last_block * q / (1 - q)`. The reported `q` also extrapolates an
//! increasing ratio trend, which is how polynomially corrected geometric
//! decay approaches its limit ratio.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::shift::{Cylinder, State, TailPoint};
use crate::transfer::{attach, exp_weight, head_of, short_term, step_layer, Head, SimpleFunction, System};

/// Truncation and certification settings for Green series.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GreenOptions {
    /// Target tail bound relative to the partial sum.
    pub tol: f64,
    /// Maximal number of series terms.
    pub n_cap: usize,
    /// Terms per block.
    pub block: usize,
    /// Number of trailing block ratios inspected.
    pub window: usize,
    /// Divergence is declared once ratios stay `>= 1`, their decreasing
    /// trend extrapolated like the increasing one stays `>= 1`, and the
    /// partial sum exceeds this multiple of the first nonzero block.
    pub divergence_factor: f64,
    /// Largest number of distinct backward-path heads kept in one layer.
    pub max_layer: usize,
}

impl Default for GreenOptions {
    fn default() -> Self {
        GreenOptions {
            tol: 1e-10,
            n_cap: 4000,
            block: 2,
            window: 8,
            divergence_factor: 1e3,
            max_layer: 1 << 20,
        }
    }
}

impl GreenOptions {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_n_cap(mut self, n_cap: usize) -> Self {
        self.n_cap = n_cap;
        self
    }
}

/// A certified truncation of a Green series.
#[derive(Debug, Clone, Serialize)]
pub struct GreenValue {
    pub partial: f64,
    pub tail_bound: f64,
    pub n_terms: usize,
    pub ratio_window: Vec<f64>,
    pub q: f64,
    /// True when the summed function takes both signs; the enclosure is then
    /// symmetric around `partial`.
    pub signed: bool,
}

impl GreenValue {
    pub fn lower(&self) -> f64 {
        if self.signed {
            self.partial - self.tail_bound
        } else {
            self.partial
        }
    }

    pub fn upper(&self) -> f64 {
        self.partial + self.tail_bound
    }

    pub fn contains(&self, v: f64) -> bool {
        // Recursive summation of n terms can drift by about n ulps.
        let slack = (self.n_terms as f64 + 4.0) * f64::EPSILON * self.partial.abs().max(v.abs());
        v >= self.lower() - slack && v <= self.upper() + slack
    }
}

enum Status {
    Continue,
    Done(Result<GreenValue>),
}

/// Block-ratio bookkeeping for one nonnegative series.
struct Tracker {
    opts: GreenOptions,
    blocks: Vec<f64>,
    current: f64,
    in_block: usize,
    partial: f64,
    n_terms: usize,
    first_nonzero: Option<usize>,
}

impl Tracker {
    fn new(opts: GreenOptions) -> Self {
        Tracker {
            opts,
            blocks: Vec::new(),
            current: 0.0,
            in_block: 0,
            partial: 0.0,
            n_terms: 0,
            first_nonzero: None,
        }
    }

    fn push(&mut self, t: f64) -> Status {
        if !t.is_finite() {
            return Status::Done(Err(Error::Overflow(self.n_terms)));
        }
        self.partial += t;
        self.current += t;
        self.n_terms += 1;
        self.in_block += 1;
        if self.in_block == self.opts.block.max(1) {
            let b = std::mem::take(&mut self.current);
            self.in_block = 0;
            if self.first_nonzero.is_none() && b > 0.0 {
                self.first_nonzero = Some(self.blocks.len());
            }
            self.blocks.push(b);
            if let Some(s) = self.judge() {
                return Status::Done(s);
            }
        }
        if self.n_terms >= self.opts.n_cap {
            return Status::Done(Err(Error::BudgetExhausted {
                n_terms: self.n_terms,
                partial: self.partial,
            }));
        }
        Status::Continue
    }

    fn judge(&self) -> Option<Result<GreenValue>> {
        let start = self.first_nonzero?;
        let w = self.opts.window.max(1);
        let k = self.blocks.len();
        if k - start < w + 1 {
            return None;
        }
        let ratios: Vec<f64> = (k - w - 1..k - 1)
            .map(|j| {
                let (a, b) = (self.blocks[j], self.blocks[j + 1]);
                if a > 0.0 {
                    b / a
                } else if b > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            })
            .collect();
        let q_max = ratios.iter().cloned().fold(0.0, f64::max);
        let (r0, r1) = (ratios[0], ratios[w - 1]);
        let trend = if r1 > r0 && r1.is_finite() {
            (r1 - r0) * (k - start) as f64 / w as f64
        } else {
            0.0
        };
        let q = q_max.max(r1 + trend);
        if q < 1.0 {
            let last = self.blocks[k - 1];
            let tail = last * q / (1.0 - q);
            if tail <= self.opts.tol * self.partial.abs() {
                return Some(Ok(GreenValue {
                    partial: self.partial,
                    tail_bound: tail,
                    n_terms: self.n_terms,
                    ratio_window: ratios,
                    q,
                    signed: false,
                }));
            }
        } else if ratios.iter().all(|&r| r >= 1.0 && r.is_finite())
            && r1 - (r0 - r1).max(0.0) * (k - start) as f64 / w as f64 >= 1.0
            && self.partial >= self.opts.divergence_factor * self.blocks[start]
        {
            return Some(Err(Error::Diverging {
                n_terms: self.n_terms,
                partial: self.partial,
            }));
        }
        None
    }
}

/// Sums `term(0) + term(1) + ...` (nonnegative terms) under the block-ratio
/// certificate.
pub fn certify_series(opts: &GreenOptions, mut term: impl FnMut(usize) -> Result<f64>) -> Result<GreenValue> {
    let mut tr = Tracker::new(*opts);
    let mut n = 0;
    loop {
        if let Status::Done(res) = tr.push(term(n)?) {
            return res;
        }
        n += 1;
    }
}

/// Green series from a fixed point, with backward layers kept for reuse
/// across many cylinders.
pub struct GreenSeries<'a> {
    sys: &'a System,
    lambda: f64,
    x: TailPoint,
    opts: GreenOptions,
    layers: Vec<Vec<(Head, f64)>>,
}

impl<'a> GreenSeries<'a> {
    pub fn new(sys: &'a System, x: &TailPoint, lambda: f64, opts: GreenOptions) -> Result<Self> {
        if lambda <= 0.0 || opts.tol <= 0.0 {
            return Err(Error::InvalidParameter("lambda and tol must be positive".into()));
        }
        Ok(GreenSeries {
            sys,
            lambda,
            x: x.clone(),
            opts,
            layers: vec![vec![(head_of(x, sys.potential.range()), 1.0)]],
        })
    }

    pub fn point(&self) -> &TailPoint {
        &self.x
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn options(&self) -> GreenOptions {
        self.opts
    }

    fn layer(&mut self, depth: usize) -> Result<&[(Head, f64)]> {
        let r = self.sys.potential.range();
        let inv = 1.0 / self.lambda;
        while self.layers.len() <= depth {
            let weight = exp_weight(&self.sys.potential, inv);
            let next = step_layer(&self.sys.graph, r, self.layers.last().expect("seeded"), &weight)?;
            if next.len() > self.opts.max_layer {
                return Err(Error::LayerLimit {
                    depth: self.layers.len(),
                    size: next.len(),
                });
            }
            self.layers.push(next);
        }
        Ok(&self.layers[depth])
    }

    /// `lambda^{-n} (L^n 1_[w])(x)`.
    pub fn term(&mut self, w: &[State], n: usize) -> Result<f64> {
        let r = self.sys.potential.range();
        let inv = 1.0 / self.lambda;
        if n < w.len() {
            let weight = exp_weight(&self.sys.potential, inv);
            return short_term(&self.sys.graph, r, w, &self.x, n, &weight);
        }
        let sys = self.sys;
        let layer = self.layer(n - w.len())?;
        let weight = exp_weight(&sys.potential, inv);
        attach(&sys.graph, r, w, layer, &weight)
    }

    /// `lambda^{-n} (L^n f)(x)`.
    pub fn term_of(&mut self, f: &SimpleFunction, n: usize) -> Result<f64> {
        let mut s = 0.0;
        for (c, w) in &f.terms {
            s += c * self.term(w.word(), n)?;
        }
        Ok(s)
    }

    fn run_nonnegative(&mut self, f: &SimpleFunction) -> Result<GreenValue> {
        let opts = self.opts;
        certify_series(&opts, |n| self.term_of(f, n))
    }

    /// Certified value of `G(f, x | lambda)`.
    pub fn green(&mut self, f: &SimpleFunction) -> Result<GreenValue> {
        if f.terms.is_empty() {
            return Ok(GreenValue {
                partial: 0.0,
                tail_bound: 0.0,
                n_terms: 0,
                ratio_window: vec![],
                q: 0.0,
                signed: false,
            });
        }
        if f.is_nonnegative() {
            return self.run_nonnegative(f);
        }
        let split = |sign: f64| {
            SimpleFunction::from_terms(
                f.terms
                    .iter()
                    .filter(|(c, _)| c * sign > 0.0)
                    .map(|(c, w)| (c.abs(), w.clone()))
                    .collect(),
            )
        };
        let pos = self.green(&split(1.0))?;
        let neg = self.green(&split(-1.0))?;
        Ok(GreenValue {
            partial: pos.partial - neg.partial,
            tail_bound: pos.tail_bound + neg.tail_bound,
            n_terms: pos.n_terms.max(neg.n_terms),
            ratio_window: pos.ratio_window,
            q: pos.q.max(neg.q),
            signed: true,
        })
    }

    pub fn green_cylinder(&mut self, c: &Cylinder) -> Result<GreenValue> {
        self.green(&SimpleFunction::indicator(c.clone()))
    }

    /// `sum_{n < n_max} lambda^{-n} (L^n f)(x)` without certification.
    pub fn partial_sum(&mut self, f: &SimpleFunction, n_max: usize) -> Result<f64> {
        let mut s = 0.0;
        for n in 0..n_max {
            s += self.term_of(f, n)?;
        }
        Ok(s)
    }
}

/// Certified `G(f, x | lambda)`.
pub fn green(sys: &System, f: &SimpleFunction, x: &TailPoint, lambda: f64, opts: &GreenOptions) -> Result<GreenValue> {
    GreenSeries::new(sys, x, lambda, *opts)?.green(f)
}

/// A real number with an enclosing interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bounded {
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Bounded {
    pub fn exact(v: f64) -> Self {
        Bounded { value: v, lo: v, hi: v }
    }

    pub fn radius(&self) -> f64 {
        (self.value - self.lo).max(self.hi - self.value)
    }

    pub fn contains(&self, v: f64) -> bool {
        let slack = 4.0 * f64::EPSILON * self.value.abs().max(v.abs());
        v >= self.lo - slack && v <= self.hi + slack
    }

    pub fn scale(&self, k: f64) -> Bounded {
        let (a, b) = (self.lo * k, self.hi * k);
        Bounded {
            value: self.value * k,
            lo: a.min(b),
            hi: a.max(b),
        }
    }

    pub fn add(&self, o: &Bounded) -> Bounded {
        Bounded {
            value: self.value + o.value,
            lo: self.lo + o.lo,
            hi: self.hi + o.hi,
        }
    }

    pub fn sub(&self, o: &Bounded) -> Bounded {
        Bounded {
            value: self.value - o.value,
            lo: self.lo - o.hi,
            hi: self.hi - o.lo,
        }
    }

    /// Interval quotient; the denominator must be positive.
    pub fn div(&self, d: &Bounded) -> Bounded {
        let cands = [self.lo / d.lo, self.lo / d.hi, self.hi / d.lo, self.hi / d.hi];
        Bounded {
            value: self.value / d.value,
            lo: cands.iter().cloned().fold(f64::INFINITY, f64::min),
            hi: cands.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

impl From<&GreenValue> for Bounded {
    fn from(g: &GreenValue) -> Self {
        Bounded {
            value: g.partial,
            lo: g.lower(),
            hi: g.upper(),
        }
    }
}

/// `K(f, x | lambda) = G(f, x) / G(1_[origin], x)` with interval error bar.
pub fn martin_kernel(
    sys: &System,
    f: &SimpleFunction,
    x: &TailPoint,
    origin: State,
    lambda: f64,
    opts: &GreenOptions,
) -> Result<Bounded> {
    let mut series = GreenSeries::new(sys, x, lambda, *opts)?;
    kernel_from_series(&mut series, f, origin)
}

pub(crate) fn kernel_from_series(series: &mut GreenSeries, f: &SimpleFunction, origin: State) -> Result<Bounded> {
    let o = SimpleFunction::indicator(Cylinder::single(origin));
    if f.merged() == o {
        return Ok(Bounded::exact(1.0));
    }
    let den = series.green(&o)?;
    let num = series.green(f)?;
    Ok(Bounded::from(&num).div(&Bounded::from(&den)))
}
