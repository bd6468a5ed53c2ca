//! DLR checks in conditional and ratio form, and thermodynamic limits.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::green::{kernel_from_series, Bounded, GreenOptions, GreenSeries};
use crate::measures::CylinderMeasure;
use crate::potential::birkhoff_sum;
use crate::shift::{Cylinder, State, StateGraph, TailPoint};
use crate::transfer::{backward_partition_sum, push_l, SimpleFunction, System};

#[derive(Debug, Clone, Serialize)]
pub struct DlrResidual {
    pub tail: String,
    pub word: String,
    /// `mu([w t]) / mu(T^{-n}[t])`.
    pub conditional: f64,
    /// `e^{phi_n(w x)} / sum over y with T^n y = T^n (w x) of e^{phi_n(y)}`.
    pub gibbs: f64,
    pub residual: f64,
}

/// Words `u` of length `n` with `u · t_0` admissible, in ascending order.
fn backward_words(g: &StateGraph, t0: State, n: usize) -> Result<Vec<Vec<State>>> {
    let mut words: Vec<Vec<State>> = vec![vec![]];
    for _ in 0..n {
        let mut next = Vec::new();
        for w in &words {
            let head = w.first().copied().unwrap_or(t0);
            for &b in g.in_edges(head)?.iter() {
                let mut v = Vec::with_capacity(w.len() + 1);
                v.push(b);
                v.extend_from_slice(w);
                next.push(v);
            }
        }
        words = next;
    }
    words.sort();
    Ok(words)
}

/// Compares the conditional law of the first `n` coordinates given the
/// coordinates `n..n+depth` with the Gibbs kernel, for the tail of each
/// point in `tails`.
pub fn dlr_check_conditional(
    sys: &System,
    mu: &dyn CylinderMeasure,
    n: usize,
    depth: usize,
    tails: &[TailPoint],
) -> Result<Vec<DlrResidual>> {
    let g = &sys.graph;
    let r = sys.potential.range();
    let mut out = Vec::new();
    for x in tails {
        let base = x.shift_by(n);
        let t = base.coords(depth.max(r - 1));
        let words = backward_words(g, t[0], n)?;
        let masses = words
            .iter()
            .map(|u| {
                let mut w = u.clone();
                w.extend_from_slice(&t);
                mu.mass(&w).map(|b| b.value)
            })
            .collect::<Result<Vec<f64>>>()?;
        let total: f64 = masses.iter().sum();
        if total <= 0.0 {
            return Err(Error::ZeroMassConditioning(g.labels(&t)));
        }
        let z = backward_partition_sum(sys, &base.prepend(&words[0]), n)?;
        for (u, m) in words.iter().zip(&masses) {
            let phi = birkhoff_sum(&sys.potential, u, &base, n, g)?;
            let gibbs = phi.exp() / z;
            let conditional = m / total;
            out.push(DlrResidual {
                tail: g.labels(&t),
                word: g.labels(u),
                conditional,
                gibbs,
                residual: (conditional - gibbs).abs(),
            });
        }
    }
    Ok(out)
}

/// Best constant correction `h = c` for which `mu` is `(phi + c, lambda)`-conformal
/// on the test cylinders.
#[derive(Debug, Clone, Serialize)]
pub struct TailCorrection {
    /// `None` when no positive rescaling of the operator helps.
    pub shift: Option<f64>,
    pub residual_before: f64,
    pub residual_after: f64,
    /// `residual_after <= tol` times the largest tested mass.
    pub vanishes: bool,
}

/// Searches for a correction of the potential that is constant on the tail
/// classes seen by the test cylinders, which for these finite data means a
/// global constant `c`. With `a_w = mu(L 1_[w])` and `b_w = mu([w])` the
/// least-squares fit of `e^c a_w = lambda b_w` is closed form.
pub fn tail_correction(
    sys: &System,
    mu: &dyn CylinderMeasure,
    lambda: f64,
    test: &[Cylinder],
    tol: f64,
) -> Result<TailCorrection> {
    if test.is_empty() {
        return Err(Error::InvalidParameter("empty test set".into()));
    }
    let mut pairs = Vec::with_capacity(test.len());
    for c in test {
        let a = mu.integrate(&push_l(sys, &SimpleFunction::indicator(c.clone()))?)?.value;
        pairs.push((a, mu.mass(c.word())?.value));
    }
    let worst = |s: f64| pairs.iter().map(|(a, b)| (s * a - lambda * b).abs()).fold(0.0, f64::max);
    let (aa, ab) = pairs.iter().fold((0.0, 0.0), |(aa, ab), (a, b)| (aa + a * a, ab + a * b));
    let scale = if aa > 0.0 { lambda * ab / aa } else { 0.0 };
    let shift = (scale > 0.0).then(|| scale.ln());
    let residual_before = worst(1.0);
    let residual_after = shift.map_or(residual_before, |_| worst(scale));
    let mass = pairs.iter().map(|(_, b)| b.abs()).fold(0.0, f64::max);
    Ok(TailCorrection {
        shift,
        residual_before,
        residual_after,
        vanishes: shift.is_some() && residual_after <= tol * mass.max(f64::MIN_POSITIVE),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RatioResidual {
    pub depth: usize,
    pub max_residual: f64,
    pub cylinders: usize,
}

/// Ratio form: for words `a`, `b` of equal length ending in the same state,
/// `|mu([b t]) - mu([a t]) e^{phi(b t) - phi(a t)}|` maximized over tail
/// extensions `t` of each depth, where the potential sums cover the
/// positions before the common last state.
pub fn dlr_check_ratio(
    sys: &System,
    mu: &dyn CylinderMeasure,
    a: &[State],
    b: &[State],
    max_depth: usize,
) -> Result<Vec<RatioResidual>> {
    let g = &sys.graph;
    if a.len() != b.len() || a.is_empty() || a.last() != b.last() {
        return Err(Error::InvalidParameter(
            "ratio check needs words of equal length with the same last state".into(),
        ));
    }
    crate::shift::is_admissible(a, g)?.then_some(()).ok_or(Error::Inadmissible {
        from: g.labels(a),
        to: String::new(),
    })?;
    crate::shift::is_admissible(b, g)?.then_some(()).ok_or(Error::Inadmissible {
        from: g.labels(b),
        to: String::new(),
    })?;
    let r = sys.potential.range();
    let n = a.len() - 1;
    let last = *a.last().expect("nonempty");
    let mut out = Vec::new();
    let mut exts: Vec<Vec<State>> = vec![vec![]];
    for depth in 0..=max_depth {
        if depth > 0 {
            let mut next = Vec::new();
            for t in &exts {
                let tip = t.last().copied().unwrap_or(last);
                for &s in g.out_edges(tip)?.iter() {
                    let mut v = t.clone();
                    v.push(s);
                    next.push(v);
                }
            }
            exts = next;
        }
        if depth + 1 < r - 1 {
            continue;
        }
        let mut worst: f64 = 0.0;
        for t in &exts {
            let wa: Vec<State> = a.iter().chain(t).copied().collect();
            let wb: Vec<State> = b.iter().chain(t).copied().collect();
            let sum = |w: &[State]| -> Result<f64> { (0..n).map(|i| sys.potential.value(&w[i..i + r])).sum() };
            let ratio = (sum(&wb)? - sum(&wa)?).exp();
            let res = (mu.mass(&wb)?.value - mu.mass(&wa)?.value * ratio).abs();
            worst = worst.max(res);
        }
        out.push(RatioResidual {
            depth,
            max_residual: worst,
            cylinders: exts.len(),
        });
    }
    Ok(out)
}

/// Finite-volume approximation scheme for a thermodynamic limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// `(L^N f)(x) / (L^N 1_[o])(x)`.
    PosRecurrent,
    /// Cesàro averages of numerator and denominator.
    NullRecurrent,
    /// `K(f, T^N x)`.
    Transient,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThermoSequence {
    pub scheme: Scheme,
    pub values: Vec<Bounded>,
    /// `max - min` of the last `window` values.
    pub trailing_oscillation: f64,
    pub window: usize,
}

impl ThermoSequence {
    pub fn last(&self) -> Bounded {
        *self.values.last().expect("nonempty")
    }
}

/// `mu_N(f)` for `N = 1..=n_max`. The recurrent schemes are evaluated with
/// operator weights divided by `lambda`, which cancels in every ratio and
/// only serves to keep magnitudes in range.
#[allow(clippy::too_many_arguments)]
pub fn thermo_limit(
    sys: &System,
    scheme: Scheme,
    x: &TailPoint,
    f: &SimpleFunction,
    origin: State,
    n_max: usize,
    lambda: f64,
    opts: &GreenOptions,
) -> Result<ThermoSequence> {
    let o = SimpleFunction::indicator(Cylinder::single(origin));
    let mut values = Vec::with_capacity(n_max);
    match scheme {
        Scheme::PosRecurrent | Scheme::NullRecurrent => {
            let mut series = GreenSeries::new(sys, x, lambda, *opts)?;
            let (mut num, mut den) = (0.0, 0.0);
            for n in 0..=n_max {
                let (a, b) = (series.term_of(f, n)?, series.term_of(&o, n)?);
                if scheme == Scheme::PosRecurrent {
                    (num, den) = (a, b);
                } else {
                    num += a;
                    den += b;
                }
                if n == 0 {
                    continue;
                }
                values.push(Bounded::exact(if den > 0.0 { num / den } else { f64::NAN }));
            }
        }
        Scheme::Transient => {
            for n in 1..=n_max {
                let mut series = GreenSeries::new(sys, &x.shift_by(n), lambda, *opts)?;
                values.push(kernel_from_series(&mut series, f, origin)?);
            }
        }
    }
    let window = 5.min(values.len());
    let tail = &values[values.len() - window..];
    let hi = tail.iter().map(|b| b.value).fold(f64::NEG_INFINITY, f64::max);
    let lo = tail.iter().map(|b| b.value).fold(f64::INFINITY, f64::min);
    Ok(ThermoSequence {
        scheme,
        values,
        trailing_oscillation: hi - lo,
        window,
    })
}
