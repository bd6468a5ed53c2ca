//! Finite-range potentials, Birkhoff sums, variations, Gurevich pressure,
//! transience classification and the reversed (cohomologous) potential.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::green::{green, GreenOptions, GreenValue};
use crate::shift::{Direction, State, StateGraph, TailPoint};
use crate::transfer::{LayerWalker, SimpleFunction, System};

/// Largest supported potential range (number of coordinates read).
pub const MAX_RANGE: usize = 4;

type WeightFn = Arc<dyn Fn(&[State]) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Weights {
    Constant(f64),
    Table(BTreeMap<Vec<State>, f64>),
    Rule { name: String, f: WeightFn },
}

/// A potential depending on the first `range` coordinates of a point.
#[derive(Clone)]
pub struct Potential {
    range: usize,
    weights: Weights,
    log_lambda: f64,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.weights {
            Weights::Constant(a) => format!("constant {a}"),
            Weights::Table(t) => format!("table ({} entries)", t.len()),
            Weights::Rule { name, .. } => format!("rule {name}"),
        };
        write!(f, "Potential(range {}, {kind}, log_lambda {})", self.range, self.log_lambda)
    }
}

fn check_range(range: usize) -> Result<()> {
    if (2..=MAX_RANGE).contains(&range) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "potential range must lie in 2..={MAX_RANGE}, got {range}"
        )))
    }
}

impl Potential {
    /// The constant potential `phi ≡ alpha`.
    pub fn constant(alpha: f64) -> Self {
        Potential {
            range: 2,
            weights: Weights::Constant(alpha),
            log_lambda: 0.0,
        }
    }

    /// Values on explicitly listed `range`-words.
    pub fn table(range: usize, entries: BTreeMap<Vec<State>, f64>) -> Result<Self> {
        check_range(range)?;
        if let Some(bad) = entries.keys().find(|k| k.len() != range) {
            return Err(Error::InvalidParameter(format!(
                "table key of length {} for range {range}",
                bad.len()
            )));
        }
        Ok(Potential {
            range,
            weights: Weights::Table(entries),
            log_lambda: 0.0,
        })
    }

    /// Values given by a formula on `range`-words.
    pub fn rule(
        range: usize,
        name: impl Into<String>,
        f: impl Fn(&[State]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        check_range(range)?;
        Ok(Potential {
            range,
            weights: Weights::Rule {
                name: name.into(),
                f: Arc::new(f),
            },
            log_lambda: 0.0,
        })
    }

    /// Markovian potential from an edge rule.
    pub fn markov(name: impl Into<String>, f: impl Fn(State, State) -> f64 + Send + Sync + 'static) -> Self {
        Self::rule(2, name, move |w| f(w[0], w[1])).expect("range 2 is valid")
    }

    /// `phi - log(lambda)`.
    pub fn shifted(&self, lambda: f64) -> Self {
        let mut p = self.clone();
        p.log_lambda += lambda.ln();
        p
    }

    pub fn range(&self) -> usize {
        self.range
    }

    pub fn is_markovian(&self) -> bool {
        self.range == 2
    }

    pub fn require_markovian(&self) -> Result<()> {
        if self.is_markovian() {
            Ok(())
        } else {
            Err(Error::RangeTooLarge(self.range))
        }
    }

    pub fn constant_value(&self) -> Option<f64> {
        match self.weights {
            Weights::Constant(a) => Some(a - self.log_lambda),
            _ => None,
        }
    }

    /// Value on a word of exactly `range` states.
    pub fn value(&self, word: &[State]) -> Result<f64> {
        debug_assert_eq!(word.len(), self.range);
        let v = match &self.weights {
            Weights::Constant(a) => *a,
            Weights::Table(t) => *t
                .get(word)
                .ok_or_else(|| Error::MissingWeight(format!("{word:?}")))?,
            Weights::Rule { f, .. } => f(word),
        };
        Ok(v - self.log_lambda)
    }

    /// Markovian edge value `phi(a, b)`.
    pub fn edge(&self, a: State, b: State) -> Result<f64> {
        self.require_markovian()?;
        self.value(&[a, b])
    }

    /// Potential on the reversed graph reading each window backwards.
    pub fn reversed(&self) -> Potential {
        let weights = match &self.weights {
            Weights::Constant(a) => Weights::Constant(*a),
            Weights::Table(t) => Weights::Table(
                t.iter()
                    .map(|(k, v)| (k.iter().rev().copied().collect(), *v))
                    .collect(),
            ),
            Weights::Rule { name, f } => {
                let f = f.clone();
                Weights::Rule {
                    name: format!("{name} (reversed)"),
                    f: Arc::new(move |w: &[State]| {
                        let mut r = w.to_vec();
                        r.reverse();
                        f(&r)
                    }),
                }
            }
        };
        Potential {
            range: self.range,
            weights,
            log_lambda: self.log_lambda,
        }
    }
}

/// `phi_n` evaluated at the point `word · tail`.
pub fn birkhoff_sum(p: &Potential, word: &[State], tail: &TailPoint, n: usize, g: &StateGraph) -> Result<f64> {
    let point = tail.prepend(word);
    let span = n + p.range - 1;
    let coords = point.coords(span.max(1));
    if !crate::shift::is_admissible(&coords, g)? {
        let i = coords
            .windows(2)
            .position(|w| !g.has_edge(w[0], w[1]).unwrap_or(false))
            .unwrap_or(0);
        return Err(Error::Inadmissible {
            from: g.label(coords[i]),
            to: g.label(coords[i + 1]),
        });
    }
    let mut s = 0.0;
    for i in 0..n {
        s += p.value(&coords[i..i + p.range])?;
    }
    Ok(s)
}

/// `Var_m`: largest discrepancy between values on words sharing their first
/// `m - 1` states. Zero for `m > range` and for constant potentials.
/// Formula potentials need an explicit word list, see [`variation_over`].
pub fn variation(p: &Potential, m: usize) -> Result<f64> {
    if m < 2 {
        return Err(Error::InvalidParameter("variation index must be >= 2".into()));
    }
    if m > p.range {
        return Ok(0.0);
    }
    match &p.weights {
        Weights::Constant(_) => Ok(0.0),
        Weights::Table(t) => Ok(spread(t.iter().map(|(k, v)| (k.as_slice(), *v)), m)),
        Weights::Rule { .. } => Err(Error::InvalidParameter(
            "variation of a formula potential needs an explicit word list".into(),
        )),
    }
}

/// `Var_m` restricted to the given `range`-words.
pub fn variation_over(p: &Potential, m: usize, words: &[Vec<State>]) -> Result<f64> {
    if m > p.range {
        return Ok(0.0);
    }
    let vals = words
        .iter()
        .map(|w| p.value(w).map(|v| (w.as_slice(), v)))
        .collect::<Result<Vec<_>>>()?;
    Ok(spread(vals.into_iter(), m))
}

fn spread<'a>(entries: impl Iterator<Item = (&'a [State], f64)>, m: usize) -> f64 {
    let mut groups: BTreeMap<&[State], (f64, f64)> = BTreeMap::new();
    for (k, v) in entries {
        let e = groups.entry(&k[..m - 1]).or_insert((v, v));
        e.0 = e.0.min(v);
        e.1 = e.1.max(v);
    }
    groups.values().map(|(lo, hi)| hi - lo).fold(0.0, f64::max)
}

/// Growth-rate estimate of weighted periodic-orbit sums through a state.
#[derive(Debug, Clone, Serialize)]
pub struct PressureEstimate {
    /// `(n, log Z_n)` for every `n` with `Z_n > 0`.
    pub log_z: Vec<(usize, f64)>,
    /// `(1/n) log Z_n` along the same indices.
    pub values: Vec<f64>,
    /// Slope of the affine fit of `log Z_n` over the trailing half-window.
    pub extrapolated: f64,
    /// Index range used by the fit.
    pub window: (usize, usize),
    /// gcd of the cycle lengths seen; the fit uses multiples of it only.
    pub period: usize,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Weighted count `Z_n` of period-`n` points starting at `a`, for
/// `n = 1..=n_max`, accumulated with per-layer rescaling so that `log Z_n`
/// stays finite.
pub fn gurevich_pressure(sys: &System, a: State, n_max: usize) -> Result<PressureEstimate> {
    if n_max < 2 {
        return Err(Error::InvalidParameter("n_max must be >= 2".into()));
    }
    let r = sys.potential.range();
    // Blocks of r-1 states beginning with `a` seed one closed-walk count each.
    let mut blocks: Vec<Vec<State>> = vec![vec![a]];
    for _ in 1..r - 1 {
        let mut next = Vec::new();
        for b in &blocks {
            for &t in sys.graph.out_edges(*b.last().expect("nonempty"))?.iter() {
                let mut v = b.clone();
                v.push(t);
                next.push(v);
            }
        }
        blocks = next;
    }
    let mut log_terms: Vec<Vec<f64>> = vec![Vec::new(); n_max + 1];
    for block in &blocks {
        let seed = TailPoint::periodic(vec![], block.clone(), Direction::Forward)?;
        let mut walker = LayerWalker::new(sys, 1.0, &seed, true)?;
        for n in 1..=n_max {
            walker.advance()?;
            if let Some(w) = walker.weight_at_head(block) {
                if w > 0.0 {
                    log_terms[n].push(w.ln() + walker.log_scale());
                }
            }
        }
    }
    let mut log_z = Vec::new();
    for (n, terms) in log_terms.iter().enumerate().skip(1) {
        if terms.is_empty() {
            continue;
        }
        let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = terms.iter().map(|t| (t - m).exp()).sum();
        log_z.push((n, m + s.ln()));
    }
    if log_z.is_empty() {
        return Err(Error::NoCycleReachable {
            state: sys.graph.label(a),
            cap: n_max,
        });
    }
    let period = log_z.iter().fold(0, |acc, &(n, _)| gcd(acc, n));
    let values = log_z.iter().map(|&(n, l)| l / n as f64).collect();
    let start = n_max / 2;
    let pts: Vec<(f64, f64)> = log_z
        .iter()
        .filter(|(n, _)| *n >= start && n % period == 0)
        .map(|&(n, l)| (n as f64, l))
        .collect();
    let extrapolated = if pts.len() >= 2 {
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    } else {
        let &(n, l) = log_z.last().expect("nonempty");
        l / n as f64
    };
    Ok(PressureEstimate {
        log_z,
        values,
        extrapolated,
        window: (start, n_max),
        period,
    })
}

/// Outcome of the transience test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Transience {
    Transient,
    Recurrent,
    Inconclusive,
}

/// Classification with the Green-series evidence behind it.
#[derive(Debug, Clone, Serialize)]
pub struct TransienceVerdict {
    pub classification: Transience,
    pub n_terms: usize,
    pub partial: f64,
    pub ratio_window: Vec<f64>,
}

/// Classifies `phi` as lambda-transient or lambda-recurrent from the Green
/// series of `f` at `x`.
pub fn classify(sys: &System, lambda: f64, f: &SimpleFunction, x: &TailPoint, opts: &GreenOptions) -> Result<TransienceVerdict> {
    if lambda <= 0.0 {
        return Err(Error::InvalidParameter("lambda must be positive".into()));
    }
    Ok(match green(sys, f, x, lambda, opts) {
        Ok(GreenValue {
            partial,
            n_terms,
            ratio_window,
            ..
        }) => TransienceVerdict {
            classification: Transience::Transient,
            n_terms,
            partial,
            ratio_window,
        },
        Err(Error::Diverging { n_terms, partial }) => TransienceVerdict {
            classification: Transience::Recurrent,
            n_terms,
            partial,
            ratio_window: vec![],
        },
        Err(Error::BudgetExhausted { n_terms, partial }) => TransienceVerdict {
            classification: Transience::Inconclusive,
            n_terms,
            partial,
            ratio_window: vec![],
        },
        Err(e) => return Err(e),
    })
}

/// A two-sided point `(..., z_-1, z_0, z_1, ...)` given by its past
/// (a backward point starting at `z_0`) and its future (forward, from `z_0`).
#[derive(Debug, Clone)]
pub struct TwoSidedPoint {
    pub past: TailPoint,
    pub future: TailPoint,
}

impl TwoSidedPoint {
    pub fn new(past: TailPoint, future: TailPoint) -> Result<Self> {
        if past.direction() != Direction::Backward
            || future.direction() != Direction::Forward
            || past.first() != future.first()
        {
            return Err(Error::InvalidParameter(
                "two-sided point needs a backward past and forward future sharing coordinate 0".into(),
            ));
        }
        Ok(TwoSidedPoint { past, future })
    }

    /// Coordinate `z_i` for any integer `i`.
    pub fn coord(&self, i: i64) -> State {
        if i >= 0 {
            self.future.coord(i as usize)
        } else {
            self.past.coord((-i) as usize)
        }
    }

    /// The two-sided shift.
    pub fn shift(&self) -> TwoSidedPoint {
        let next = self.future.coord(1);
        TwoSidedPoint {
            past: self.past.prepend(&[next]),
            future: self.future.shift(),
        }
    }
}

/// The coboundary `psi` relating a potential and its reversal.
#[derive(Debug, Clone)]
pub struct TransferFunction {
    potential: Potential,
}

impl TransferFunction {
    /// `psi(z) = -sum_{j=1}^{r-1} phi(z_{-j}, ..., z_{-j+r-1})`.
    pub fn eval(&self, z: &TwoSidedPoint) -> Result<f64> {
        let r = self.potential.range() as i64;
        let mut s = 0.0;
        for j in 1..r {
            let w: Vec<State> = (0..r).map(|k| z.coord(-j + k)).collect();
            s -= self.potential.value(&w)?;
        }
        Ok(s)
    }
}

/// Reversed potential on the negative shift together with the transfer
/// function `psi`, so that `phi(z+) - phi_rev(z-) = psi(z) - psi(Tz)`.
///
/// The reversed potential reads the window ending at coordinate 0; on the
/// reversed graph (coordinates listed as `y_0, y_-1, ...`) it is
/// [`Potential::reversed`].
pub fn reverse_potential(p: &Potential) -> (Potential, TransferFunction) {
    (
        p.reversed(),
        TransferFunction {
            potential: p.clone(),
        },
    )
}

/// `|phi(z+) - phi_rev(z-) - psi(z) + psi(Tz)|` at a two-sided point.
pub fn cohomology_residual(p: &Potential, z: &TwoSidedPoint) -> Result<f64> {
    let (rev, psi) = reverse_potential(p);
    let r = p.range();
    let fwd = p.value(&z.future.coords(r))?;
    let bwd = rev.value(&z.past.coords(r))?;
    Ok((fwd - bwd - psi.eval(z)? + psi.eval(&z.shift())?).abs())
}
