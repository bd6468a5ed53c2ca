//! Random walks: harmonic functions, the conformal measures they induce and
//! Monte-Carlo hitting distributions on the boundary atlas.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::boundary::{BoundaryAtlas, KernelSetup};
use crate::error::{Error, Result};
use crate::measures::PathMeasure;
use crate::models::WalkSpec;
use crate::shift::{State, TailPoint};

/// `|h(a) - sum_b P(a, b) h(b)|` at each state.
pub fn harmonic_residual(walk: &WalkSpec, h: &dyn Fn(State) -> f64, states: &[State]) -> Result<Vec<(State, f64)>> {
    states
        .iter()
        .map(|&a| {
            let mut s = 0.0;
            for (b, p) in walk.row(a)? {
                s += p * h(b);
            }
            Ok((a, (h(a) - s).abs()))
        })
        .collect()
}

/// `mu([a_1 ... a_n]) = P(a_1, a_2) ... P(a_{n-1}, a_n) h(a_n)`, after checking
/// harmonicity of `h` at `check` to tolerance `tol`.
pub fn measure_from_harmonic(
    walk: &WalkSpec,
    h: impl Fn(State) -> f64 + Send + Sync + 'static,
    check: &[State],
    tol: f64,
) -> Result<PathMeasure> {
    for (a, r) in harmonic_residual(walk, &h, check)? {
        if r > tol || h(a) <= 0.0 {
            return Err(Error::NotHarmonic {
                state: walk.graph.label(a),
                residual: r,
            });
        }
    }
    PathMeasure::new(walk.log_potential("log_stochastic"), 1.0, h)
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Two-sided 99% standard normal quantile.
pub const Z99: f64 = 2.575_829_303_548_901;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct HittingOptions {
    pub n_samples: usize,
    pub horizon: usize,
    /// Samples that visit the ball of this radius around the start after
    /// `horizon - settle` steps count as non-escaping.
    pub ball_radius: usize,
    pub settle: usize,
    pub seed: u64,
    pub z: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterFrequency {
    pub cluster: usize,
    pub members: Vec<String>,
    pub count: usize,
    pub frequency: f64,
    pub interval: (f64, f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct HittingReport {
    pub n_samples: usize,
    pub non_escaping: usize,
    pub clusters: Vec<ClusterFrequency>,
}

/// Simulates the walk from its start state and assigns each escaping
/// trajectory to the nearest atlas cluster.
///
/// `locate` turns the final stretch of a trajectory into a point of the
/// system the atlas was built on; its kernel profile is memoized by the
/// point's first `memo_len` coordinates.
pub fn hitting_distribution(
    walk: &WalkSpec,
    atlas: &BoundaryAtlas,
    setup: &KernelSetup,
    locate: &dyn Fn(&[State]) -> Result<TailPoint>,
    memo_len: usize,
    opts: &HittingOptions,
) -> Result<HittingReport> {
    if opts.settle > opts.horizon {
        return Err(Error::InvalidParameter("settle must not exceed horizon".into()));
    }
    let g = &walk.graph;
    let mut ball = g.ball(walk.start, opts.ball_radius)?;
    ball.sort_unstable();
    let test_set = &atlas.metric.test_set;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut memo: HashMap<Vec<State>, usize> = HashMap::new();
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    let mut non_escaping = 0;
    let mut path = Vec::with_capacity(opts.horizon + 1);
    for _ in 0..opts.n_samples {
        path.clear();
        let mut a = walk.start;
        path.push(a);
        let mut last_in_ball = 0;
        for t in 1..=opts.horizon {
            let succ = g.successors_uncached(a)?;
            let mut u: f64 = rng.random();
            let mut next = None;
            for &b in succ.iter() {
                let p = walk.prob(a, b);
                if u < p {
                    next = Some(b);
                    break;
                }
                u -= p;
            }
            a = match next {
                Some(b) => b,
                None if walk.row_defect(a)? > 1e-12 => {
                    return Err(Error::StateOutOfRange(format!("walk left the generated graph at {}", g.label(a))))
                }
                None => *succ.last().expect("stochastic row"),
            };
            path.push(a);
            if ball.binary_search(&a).is_ok() {
                last_in_ball = t;
            }
        }
        if last_in_ball + opts.settle > opts.horizon {
            non_escaping += 1;
            continue;
        }
        let x = locate(&path)?;
        let key = x.coords(memo_len);
        let cluster = match memo.get(&key) {
            Some(&c) => c,
            None => {
                let profile = setup.profile(&x, test_set, "sample")?;
                let c = atlas.nearest(&profile)?.0;
                memo.insert(key, c);
                c
            }
        };
        *counts.entry(cluster).or_insert(0) += 1;
    }
    let escaped = opts.n_samples - non_escaping;
    let clusters = atlas
        .clusters
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let count = counts.get(&i).copied().unwrap_or(0);
            ClusterFrequency {
                cluster: i,
                members: c.members.clone(),
                count,
                frequency: if escaped > 0 { count as f64 / escaped as f64 } else { 0.0 },
                interval: wilson_interval(count, escaped, opts.z),
            }
        })
        .collect();
    Ok(HittingReport {
        n_samples: opts.n_samples,
        non_escaping,
        clusters,
    })
}
