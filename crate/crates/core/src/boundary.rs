//! Martin-kernel profiles, the rho pseudo-metric and the boundary atlas.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::green::{kernel_from_series, Bounded, GreenOptions, GreenSeries};
use crate::shift::{shortest_path, Cylinder, State, StateGraph, TailPoint};
use crate::transfer::{SimpleFunction, System};

/// Martin-kernel values at one point (or a cluster centroid) over an
/// ordered test set of cylinders.
#[derive(Debug, Clone, Serialize)]
pub struct KernelProfile {
    pub at: String,
    #[serde(skip)]
    pub test_set: Vec<Cylinder>,
    pub values: Vec<Bounded>,
    /// `1_[w_i](x)`; fractional for centroids.
    pub indicators: Vec<f64>,
}

impl KernelProfile {
    pub fn same_test_set(&self, other: &KernelProfile) -> bool {
        self.test_set == other.test_set
    }

    pub fn max_radius(&self) -> f64 {
        self.values.iter().map(Bounded::radius).fold(0.0, f64::max)
    }
}

/// Shared setup for evaluating many profiles of one system.
#[derive(Clone, Debug)]
pub struct KernelSetup<'a> {
    pub sys: &'a System,
    pub origin: State,
    pub lambda: f64,
    pub opts: GreenOptions,
}

impl KernelSetup<'_> {
    pub fn profile(&self, x: &TailPoint, test_set: &[Cylinder], tag: &str) -> Result<KernelProfile> {
        kernel_profile(self.sys, x, self.origin, self.lambda, test_set, &self.opts, tag)
    }
}

/// `K(1_[w], x | lambda)` for every `w` in `test_set`.
pub fn kernel_profile(
    sys: &System,
    x: &TailPoint,
    origin: State,
    lambda: f64,
    test_set: &[Cylinder],
    opts: &GreenOptions,
    tag: &str,
) -> Result<KernelProfile> {
    if !test_set.iter().any(|c| c.word() == [origin]) {
        return Err(Error::InvalidParameter("test set must contain the origin cylinder".into()));
    }
    let mut series = GreenSeries::new(sys, x, lambda, *opts)?;
    let mut values = Vec::with_capacity(test_set.len());
    for c in test_set {
        values.push(kernel_from_series(&mut series, &SimpleFunction::indicator(c.clone()), origin)?);
    }
    Ok(KernelProfile {
        at: tag.to_string(),
        test_set: test_set.to_vec(),
        values,
        indicators: test_set.iter().map(|c| if c.contains(x) { 1.0 } else { 0.0 }).collect(),
    })
}

/// All admissible words of length `<= max_len` whose states lie within
/// graph distance `radius` of `origin`, shortest first.
pub fn default_test_set(g: &StateGraph, origin: State, radius: usize, max_len: usize) -> Result<Vec<Cylinder>> {
    let ball = g.ball(origin, radius)?;
    let mut words = g.words_within(&ball, max_len)?;
    words.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    let pos = words
        .iter()
        .position(|w| w[..] == [origin])
        .ok_or_else(|| Error::UnknownState(g.label(origin)))?;
    let o = words.remove(pos);
    words.insert(0, o);
    Ok(words.into_iter().map(Cylinder::from_admissible).collect())
}

/// `C_{a,b}` with `G(1_[a], x) <= C_{a,b} G(1_[b], x)` for every `x`:
/// `lambda^N exp(-min phi_N)` along the shortest path from `b` to `a`,
/// minimized over continuations the potential can read.
pub fn harnack_upper(sys: &System, a: State, b: State, lambda: f64, cap: usize) -> Result<f64> {
    let g = &sys.graph;
    let path = shortest_path(b, a, g, cap)?.ok_or_else(|| Error::NoCycleReachable {
        state: format!("{} -> {}", g.label(b), g.label(a)),
        cap,
    })?;
    let n = path.len() - 1;
    if n == 0 {
        return Ok(1.0);
    }
    let r = sys.potential.range();
    let mut conts: Vec<Vec<State>> = vec![vec![]];
    for _ in 0..r - 2 {
        let mut next = Vec::new();
        for c in &conts {
            let last = c.last().copied().unwrap_or(a);
            for &s in g.out_edges(last)?.iter() {
                let mut v = c.clone();
                v.push(s);
                next.push(v);
            }
        }
        conts = next;
    }
    let mut min_sum = f64::INFINITY;
    for c in &conts {
        let mut word = path.clone();
        word.extend(c);
        let mut s = 0.0;
        for i in 0..n {
            s += sys.potential.value(&word[i..i + r])?;
        }
        min_sum = min_sum.min(s);
    }
    Ok(lambda.powi(n as i32) * (-min_sum).exp())
}

/// `(c_{a,b}, C_{a,b})` with `c G(1_[b]) <= G(1_[a]) <= C G(1_[b])`.
pub fn harnack_constants(sys: &System, a: State, b: State, lambda: f64, cap: usize) -> Result<(f64, f64)> {
    Ok((1.0 / harnack_upper(sys, b, a, lambda, cap)?, harnack_upper(sys, a, b, lambda, cap)?))
}

/// How the normalizing constants of the rho metric are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantsMode {
    /// Path-based upper bounds on `K(1_[w], .)`.
    Constructive,
    /// Running supremum over the profiles seen so far.
    Empirical,
}

/// Truncated rho metric on a fixed test set.
#[derive(Debug, Clone, Serialize)]
pub struct RhoMetric {
    pub mode: ConstantsMode,
    #[serde(skip)]
    pub test_set: Vec<Cylinder>,
    pub constants: Vec<f64>,
}

/// A rho distance with the propagated error of the kernel values and the
/// bound on the omitted part of the series.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RhoValue {
    pub value: f64,
    pub error: f64,
    pub truncation: f64,
}

impl RhoMetric {
    pub fn constructive(sys: &System, origin: State, lambda: f64, test_set: &[Cylinder], cap: usize) -> Result<Self> {
        let constants = test_set
            .iter()
            .map(|c| harnack_upper(sys, c.first(), origin, lambda, cap))
            .collect::<Result<Vec<_>>>()?;
        Ok(RhoMetric {
            mode: ConstantsMode::Constructive,
            test_set: test_set.to_vec(),
            constants,
        })
    }

    pub fn empirical(profiles: &[KernelProfile]) -> Result<Self> {
        let first = profiles
            .first()
            .ok_or_else(|| Error::InvalidParameter("empirical constants need at least one profile".into()))?;
        let mut constants = vec![0.0f64; first.values.len()];
        for p in profiles {
            if !p.same_test_set(first) {
                return Err(Error::MismatchedTestSet);
            }
            for (c, v) in constants.iter_mut().zip(&p.values) {
                *c = c.max(v.hi);
            }
        }
        Ok(RhoMetric {
            mode: ConstantsMode::Empirical,
            test_set: first.test_set.clone(),
            constants,
        })
    }

    pub fn truncation(&self) -> f64 {
        (1.0 - self.test_set.len() as f64).exp2()
    }

    pub fn distance(&self, a: &KernelProfile, b: &KernelProfile) -> Result<RhoValue> {
        if a.test_set != self.test_set || b.test_set != self.test_set {
            return Err(Error::MismatchedTestSet);
        }
        let (mut value, mut error) = (0.0, 0.0);
        for i in 0..self.test_set.len() {
            let w = ((i + 1) as f64).exp2() * (self.constants[i] + 1.0);
            value += ((a.values[i].value - b.values[i].value).abs() + (a.indicators[i] - b.indicators[i]).abs()) / w;
            error += (a.values[i].radius() + b.values[i].radius()) / w;
        }
        Ok(RhoValue {
            value,
            error,
            truncation: self.truncation(),
        })
    }
}

/// A finite piece of an escaping sequence of points.
#[derive(Debug, Clone)]
pub struct Orbit {
    pub tag: String,
    pub points: Vec<TailPoint>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AtlasOptions {
    pub lambda: f64,
    pub eps: f64,
    /// Largest rho step allowed between the trailing profiles of an orbit.
    pub cauchy_tol: f64,
    /// Number of trailing profiles used for the Cauchy test and diameters.
    pub trailing: usize,
    pub mode: ConstantsMode,
    pub green: GreenOptions,
}

impl AtlasOptions {
    pub fn new(lambda: f64, eps: f64) -> Self {
        AtlasOptions {
            lambda,
            eps,
            cauchy_tol: eps / 10.0,
            trailing: 4,
            mode: ConstantsMode::Constructive,
            green: GreenOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Cluster {
    pub centroid: KernelProfile,
    pub members: Vec<String>,
    pub diameter: f64,
    pub extremal_heuristic: bool,
    #[serde(skip)]
    pub member_points: Vec<TailPoint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrbitDiagnostic {
    pub tag: String,
    pub steps: Vec<f64>,
    pub limit_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundaryAtlas {
    pub resolution: f64,
    pub lambda: f64,
    pub test_set: Vec<String>,
    pub metric: RhoMetric,
    pub clusters: Vec<Cluster>,
    pub orbits: Vec<OrbitDiagnostic>,
}

fn mean_profile(tag: &str, profiles: &[&KernelProfile]) -> KernelProfile {
    let k = profiles.len() as f64;
    let m = profiles[0].values.len();
    let values = (0..m)
        .map(|i| Bounded {
            value: profiles.iter().map(|p| p.values[i].value).sum::<f64>() / k,
            lo: profiles.iter().map(|p| p.values[i].lo).fold(f64::INFINITY, f64::min),
            hi: profiles.iter().map(|p| p.values[i].hi).fold(f64::NEG_INFINITY, f64::max),
        })
        .collect();
    let indicators = (0..m).map(|i| profiles.iter().map(|p| p.indicators[i]).sum::<f64>() / k).collect();
    KernelProfile {
        at: tag.to_string(),
        test_set: profiles[0].test_set.clone(),
        values,
        indicators,
    }
}

/// Whether `target` is within `tol` (in rho) of a segment between two other
/// centroids.
fn on_some_segment(metric: &RhoMetric, target: usize, centroids: &[KernelProfile], tol: f64) -> Result<bool> {
    let n = centroids.len();
    for i in 0..n {
        for j in i + 1..n {
            if i == target || j == target {
                continue;
            }
            for step in 0..=100 {
                let t = step as f64 / 100.0;
                let mix = KernelProfile {
                    at: String::new(),
                    test_set: metric.test_set.clone(),
                    values: centroids[i]
                        .values
                        .iter()
                        .zip(&centroids[j].values)
                        .map(|(a, b)| Bounded::exact(t * a.value + (1.0 - t) * b.value))
                        .collect(),
                    indicators: centroids[i]
                        .indicators
                        .iter()
                        .zip(&centroids[j].indicators)
                        .map(|(a, b)| t * a + (1.0 - t) * b)
                        .collect(),
                };
                if metric.distance(&centroids[target], &mix)?.value <= tol {
                    return Ok(true);
                }
            }
        }
    }
    Ok(false)
}

/// Clusters the limit profiles of escaping orbits at rho resolution `eps`.
pub fn boundary_atlas(
    sys: &System,
    origin: State,
    orbits: &[Orbit],
    test_set: &[Cylinder],
    opts: &AtlasOptions,
) -> Result<BoundaryAtlas> {
    let tested: BTreeSet<State> = test_set.iter().flat_map(|c| c.word().iter().copied()).collect();
    let setup = KernelSetup {
        sys,
        origin,
        lambda: opts.lambda,
        opts: opts.green,
    };
    let trailing = opts.trailing.max(2);
    let mut trails: Vec<Vec<KernelProfile>> = Vec::with_capacity(orbits.len());
    for orbit in orbits {
        if orbit.points.len() < trailing {
            return Err(Error::InvalidParameter(format!(
                "orbit {} has fewer than {trailing} points",
                orbit.tag
            )));
        }
        let tail = &orbit.points[orbit.points.len() - trailing..];
        if let Some(x) = tail.iter().find(|x| tested.contains(&x.first())) {
            return Err(Error::NotEscaping(format!("{} visits {}", orbit.tag, sys.graph.label(x.first()))));
        }
        trails.push(
            tail.iter()
                .enumerate()
                .map(|(k, x)| setup.profile(x, test_set, &format!("{}#{k}", orbit.tag)))
                .collect::<Result<_>>()?,
        );
    }
    let metric = match opts.mode {
        ConstantsMode::Constructive => RhoMetric::constructive(sys, origin, opts.lambda, test_set, 4 * test_set.len() + 64)?,
        ConstantsMode::Empirical => RhoMetric::empirical(&trails.iter().flatten().cloned().collect::<Vec<_>>())?,
    };
    let mut diagnostics = Vec::new();
    for (orbit, trail) in orbits.iter().zip(&trails) {
        let mut steps = Vec::new();
        for k in 1..trail.len() {
            let d = metric.distance(&trail[k - 1], &trail[k])?;
            steps.push(d.value);
            if d.value > opts.cauchy_tol + d.error {
                return Err(Error::NotCauchy {
                    tag: orbit.tag.clone(),
                    step: d.value,
                    tol: opts.cauchy_tol,
                });
            }
        }
        diagnostics.push(OrbitDiagnostic {
            tag: orbit.tag.clone(),
            steps,
            limit_error: trail.last().expect("nonempty").max_radius(),
        });
    }

    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut centroids: Vec<KernelProfile> = Vec::new();
    for (i, trail) in trails.iter().enumerate() {
        let limit = trail.last().expect("nonempty");
        let mut home = None;
        for (g, c) in centroids.iter().enumerate() {
            if metric.distance(c, limit)?.value <= opts.eps {
                home = Some(g);
                break;
            }
        }
        let g = match home {
            Some(g) => g,
            None => {
                groups.push(vec![]);
                centroids.push(limit.clone());
                groups.len() - 1
            }
        };
        groups[g].push(i);
        let members: Vec<&KernelProfile> = groups[g].iter().map(|&m| trails[m].last().expect("nonempty")).collect();
        centroids[g] = mean_profile(&format!("cluster{g}"), &members);
    }

    let mut clusters = Vec::new();
    for (g, members) in groups.iter().enumerate() {
        let all: Vec<&KernelProfile> = members.iter().flat_map(|&m| trails[m].iter()).collect();
        let mut diameter: f64 = 0.0;
        for a in 0..all.len() {
            for b in a + 1..all.len() {
                diameter = diameter.max(metric.distance(all[a], all[b])?.value);
            }
        }
        clusters.push(Cluster {
            centroid: centroids[g].clone(),
            members: members.iter().map(|&m| orbits[m].tag.clone()).collect(),
            diameter,
            extremal_heuristic: !on_some_segment(&metric, g, &centroids, opts.eps)?,
            member_points: members
                .iter()
                .map(|&m| orbits[m].points.last().expect("nonempty").clone())
                .collect(),
        });
    }
    Ok(BoundaryAtlas {
        resolution: opts.eps,
        lambda: opts.lambda,
        test_set: test_set.iter().map(|c| c.display(&sys.graph)).collect(),
        metric,
        clusters,
        orbits: diagnostics,
    })
}

/// Approximate `mu_omega([w])` for the boundary point represented by a
/// cluster: the centroid entry when `w` is tested, else the mean kernel value
/// at the members' last points, with their spread added to the error bar.
pub fn mu_omega(setup: &KernelSetup, cluster: &Cluster, w: &Cylinder) -> Result<Bounded> {
    if let Some(i) = cluster.centroid.test_set.iter().position(|c| c == w) {
        return Ok(cluster.centroid.values[i]);
    }
    let f = SimpleFunction::indicator(w.clone());
    let vals = cluster
        .member_points
        .iter()
        .map(|x| {
            let mut s = GreenSeries::new(setup.sys, x, setup.lambda, setup.opts)?;
            kernel_from_series(&mut s, &f, setup.origin)
        })
        .collect::<Result<Vec<_>>>()?;
    let k = vals.len() as f64;
    let value = vals.iter().map(|b| b.value).sum::<f64>() / k;
    Ok(Bounded {
        value,
        lo: vals.iter().map(|b| b.lo).fold(f64::INFINITY, f64::min),
        hi: vals.iter().map(|b| b.hi).fold(f64::NEG_INFINITY, f64::max),
    })
}

impl BoundaryAtlas {
    /// Index of the nearest cluster centroid in rho.
    pub fn nearest(&self, p: &KernelProfile) -> Result<(usize, f64)> {
        let mut best = (usize::MAX, f64::INFINITY);
        for (i, c) in self.clusters.iter().enumerate() {
            let d = self.metric.distance(&c.centroid, p)?.value;
            if d < best.1 {
                best = (i, d);
            }
        }
        if best.0 == usize::MAX {
            return Err(Error::InvalidParameter("atlas has no clusters".into()));
        }
        Ok(best)
    }
}
