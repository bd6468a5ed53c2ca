//! The reversed shift, the chi pairing, the correspondence between reversed
//! conformal measures and eigenfunctions, transience duality and the
//! ratio-limit experiment for dominated eigenfunctions.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::green::GreenOptions;
use crate::measures::CylinderMeasure;
use crate::potential::{classify, reverse_potential, Potential, Transience, TransferFunction, TransienceVerdict};
use crate::shift::{point_in, Cylinder, State, StateGraph, TailPoint};
use crate::transfer::{SimpleFunction, System};

/// The negative one-sided shift seen as a forward shift on the reversed
/// graph, with its potential and the transfer function relating the two.
pub struct ReversedModel {
    pub system: System,
    pub psi: TransferFunction,
}

impl ReversedModel {
    pub fn new(sys: &System) -> Self {
        let (potential, psi) = reverse_potential(&sys.potential);
        ReversedModel {
            system: System::new(sys.graph.reversed(), potential),
            psi,
        }
    }
}

/// `chi_x = sum over b in in_edges(x_0) of e^{phi(b, x_0)} 1_[b]`, a simple
/// function on the reversed shift.
pub fn chi(sys: &System, x0: State) -> Result<SimpleFunction> {
    sys.potential.require_markovian()?;
    let terms = sys
        .graph
        .in_edges(x0)?
        .iter()
        .map(|&b| Ok((sys.potential.edge(b, x0)?.exp(), Cylinder::single(b))))
        .collect::<Result<Vec<_>>>()?;
    Ok(SimpleFunction::from_terms(terms))
}

/// A positive function of the first coordinate, claimed to satisfy
/// `L h = lambda h`.
#[derive(Clone)]
pub struct Eigenfunction {
    pub lambda: f64,
    rule: Arc<dyn Fn(State) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for Eigenfunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Eigenfunction(lambda {})", self.lambda)
    }
}

impl Eigenfunction {
    pub fn new(lambda: f64, rule: impl Fn(State) -> f64 + Send + Sync + 'static) -> Self {
        Eigenfunction {
            lambda,
            rule: Arc::new(rule),
        }
    }

    /// Table-backed; states outside the table evaluate to `NaN`.
    pub fn from_table(lambda: f64, table: BTreeMap<State, f64>) -> Self {
        Eigenfunction::new(lambda, move |s| table.get(&s).copied().unwrap_or(f64::NAN))
    }

    pub fn at(&self, s: State) -> f64 {
        (self.rule)(s)
    }

    pub fn eval(&self, x: &TailPoint) -> f64 {
        self.at(x.first())
    }
}

/// `h(x) = mu^-(chi_x)` at the given first coordinates and their
/// predecessors, so that [`eigen_residual`] can be evaluated at each of them.
pub fn pi_map(sys: &System, mu_minus: &dyn CylinderMeasure, states: &[State], lambda: f64) -> Result<Eigenfunction> {
    let mut table = BTreeMap::new();
    for &s in states {
        for &b in std::iter::once(&s).chain(sys.graph.in_edges(s)?.iter()) {
            if let std::collections::btree_map::Entry::Vacant(e) = table.entry(b) {
                e.insert(mu_minus.integrate(&chi(sys, b)?)?.value);
            }
        }
    }
    Ok(Eigenfunction::from_table(lambda, table))
}

/// `|(L h)(x) - lambda h(x)|` where `(L h)(x) = sum_b e^{phi(b, x_0)} h(b x)`.
pub fn eigen_residual(sys: &System, h: &Eigenfunction, states: &[State]) -> Result<Vec<(State, f64)>> {
    sys.potential.require_markovian()?;
    states
        .iter()
        .map(|&s| {
            let mut lh = 0.0;
            for &b in sys.graph.in_edges(s)?.iter() {
                lh += sys.potential.edge(b, s)?.exp() * h.at(b);
            }
            Ok((s, (lh - h.lambda * h.at(s)).abs()))
        })
        .collect()
}

/// `phi + log h - log h o T` for a positive function of the first coordinate.
pub fn normalized_potential(p: &Potential, h: &Eigenfunction) -> Result<Potential> {
    p.require_markovian()?;
    let (p, h) = (p.clone(), h.clone());
    Ok(Potential::markov("normalized", move |a, b| {
        p.edge(a, b).unwrap_or(f64::NEG_INFINITY) + h.at(a).ln() - h.at(b).ln()
    }))
}

#[derive(Debug, Clone, Serialize)]
pub struct DualityReport {
    pub lambda: f64,
    pub forward: TransienceVerdict,
    pub reversed: TransienceVerdict,
    /// Both certified and equal, or at least one inconclusive.
    pub consistent: bool,
}

/// Classifies the potential and its reversal at `lambda`, using `1_[o]` at
/// the anchored point of `[o]` in each orientation.
pub fn transience_duality_check(sys: &System, origin: State, lambda: f64, opts: &GreenOptions) -> Result<DualityReport> {
    let run = |s: &System| -> Result<TransienceVerdict> {
        let x = point_in(&[origin], &s.graph)?;
        classify(s, lambda, &SimpleFunction::indicator(Cylinder::single(origin)), &x, opts)
    };
    let forward = run(sys)?;
    let reversed = run(&ReversedModel::new(sys).system)?;
    let consistent = forward.classification == reversed.classification
        || forward.classification == Transience::Inconclusive
        || reversed.classification == Transience::Inconclusive;
    Ok(DualityReport {
        lambda,
        forward,
        reversed,
        consistent,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RatioTrajectory {
    pub ratios: Vec<f64>,
    pub final_state: String,
    /// `max - min` over the last `window` ratios.
    pub oscillation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PoissonReport {
    pub seed: u64,
    pub n_steps: usize,
    pub window: usize,
    pub trajectories: Vec<RatioTrajectory>,
}

fn pick(rng: &mut ChaCha8Rng, weights: &[(State, f64)]) -> State {
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    let mut u = rng.random::<f64>() * total;
    for &(s, w) in weights {
        if u < w {
            return s;
        }
        u -= w;
    }
    weights.last().expect("nonempty").0
}

/// Samples backward extensions `y_{-n} ... y_0 x` with the transition
/// weights `e^{phi(b, z_0)} h(b) / (lambda h(z_0))` and records
/// `f / h` at the growing point.
pub fn poisson_ratio_limit(
    sys: &System,
    f: &Eigenfunction,
    h: &Eigenfunction,
    x0: State,
    n_steps: usize,
    n_samples: usize,
    seed: u64,
) -> Result<PoissonReport> {
    sys.potential.require_markovian()?;
    let g: &StateGraph = &sys.graph;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let window = 10.min(n_steps + 1);
    let mut trajectories = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let mut z = x0;
        let mut ratios = Vec::with_capacity(n_steps + 1);
        ratios.push(f.at(z) / h.at(z));
        for _ in 0..n_steps {
            let weights = g
                .in_edges(z)?
                .iter()
                .map(|&b| Ok((b, sys.potential.edge(b, z)?.exp() * h.at(b))))
                .collect::<Result<Vec<_>>>()?;
            if !weights.iter().any(|(_, w)| *w > 0.0) {
                return Err(Error::SamplerDegenerate(g.label(z)));
            }
            z = pick(&mut rng, &weights);
            ratios.push(f.at(z) / h.at(z));
        }
        let tail = &ratios[ratios.len() - window..];
        let oscillation = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - tail.iter().cloned().fold(f64::INFINITY, f64::min);
        trajectories.push(RatioTrajectory {
            ratios,
            final_state: g.label(z),
            oscillation,
        });
    }
    Ok(PoissonReport {
        seed,
        n_steps,
        window,
        trajectories,
    })
}
