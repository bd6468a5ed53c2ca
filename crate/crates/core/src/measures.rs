//! Measures given by their values on cylinders, conformality and
//! excessiveness residuals, and the Riesz decomposition of excessive
//! measures.

use std::cell::RefCell;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::green::{Bounded, GreenOptions, GreenSeries};
use crate::potential::Potential;
use crate::shift::{Cylinder, State, StateGraph, TailPoint};
use crate::transfer::{push_l, SimpleFunction, System};

/// A measure known through its values on cylinder sets.
pub trait CylinderMeasure {
    fn mass(&self, w: &[State]) -> Result<Bounded>;

    /// `mu(f)` for a simple function.
    fn integrate(&self, f: &SimpleFunction) -> Result<Bounded> {
        let mut acc = Bounded::exact(0.0);
        for (c, w) in &f.terms {
            acc = acc.add(&self.mass(w.word())?.scale(*c));
        }
        Ok(acc)
    }
}

/// `mu([w_0 ... w_n]) = lambda^{-n} e^{phi(w_0,w_1) + ... + phi(w_{n-1},w_n)} k(w_n)`
/// for a Markovian potential. Conformal exactly when `k` is a
/// `lambda`-eigenvector of `sum_b e^{phi(a,b)} k(b)`.
#[derive(Clone)]
pub struct PathMeasure {
    potential: Potential,
    lambda: f64,
    k: Arc<dyn Fn(State) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for PathMeasure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PathMeasure(lambda {})", self.lambda)
    }
}

impl PathMeasure {
    pub fn new(potential: Potential, lambda: f64, k: impl Fn(State) -> f64 + Send + Sync + 'static) -> Result<Self> {
        potential.require_markovian()?;
        if lambda <= 0.0 {
            return Err(Error::InvalidParameter("lambda must be positive".into()));
        }
        Ok(PathMeasure {
            potential,
            lambda,
            k: Arc::new(k),
        })
    }

    pub fn density(&self, a: State) -> f64 {
        (self.k)(a)
    }
}

impl CylinderMeasure for PathMeasure {
    fn mass(&self, w: &[State]) -> Result<Bounded> {
        let last = *w.last().ok_or(Error::EmptyWord)?;
        let mut log = 0.0;
        for e in w.windows(2) {
            log += self.potential.edge(e[0], e[1])?;
        }
        let n = (w.len() - 1) as i32;
        Ok(Bounded::exact(log.exp() * self.lambda.powi(-n) * (self.k)(last)))
    }
}

/// Point mass at a point.
#[derive(Clone, Debug)]
pub struct Dirac(pub TailPoint);

impl CylinderMeasure for Dirac {
    fn mass(&self, w: &[State]) -> Result<Bounded> {
        let inside = w.iter().enumerate().all(|(i, &s)| self.0.coord(i) == s);
        Ok(Bounded::exact(if inside { 1.0 } else { 0.0 }))
    }
}

/// `mu(f) = G(f, x | lambda)`.
pub struct GreenMeasure<'a> {
    series: RefCell<GreenSeries<'a>>,
}

impl<'a> GreenMeasure<'a> {
    pub fn new(sys: &'a System, x: &TailPoint, lambda: f64, opts: GreenOptions) -> Result<Self> {
        Ok(GreenMeasure {
            series: RefCell::new(GreenSeries::new(sys, x, lambda, opts)?),
        })
    }

    pub fn point(&self) -> TailPoint {
        self.series.borrow().point().clone()
    }
}

impl CylinderMeasure for GreenMeasure<'_> {
    fn mass(&self, w: &[State]) -> Result<Bounded> {
        self.integrate(&SimpleFunction::indicator(Cylinder::from_admissible(w.to_vec())))
    }

    fn integrate(&self, f: &SimpleFunction) -> Result<Bounded> {
        let g = self.series.borrow_mut().green(f)?;
        Ok(Bounded::from(&g))
    }
}

/// `mu(f) = K(f, x | lambda)`, the Green measure normalized at the origin.
pub struct KernelMeasure<'a> {
    green: GreenMeasure<'a>,
    norm: Bounded,
}

impl<'a> KernelMeasure<'a> {
    pub fn new(sys: &'a System, x: &TailPoint, origin: State, lambda: f64, opts: GreenOptions) -> Result<Self> {
        let green = GreenMeasure::new(sys, x, lambda, opts)?;
        let norm = green.mass(&[origin])?;
        Ok(KernelMeasure { green, norm })
    }
}

impl CylinderMeasure for KernelMeasure<'_> {
    fn mass(&self, w: &[State]) -> Result<Bounded> {
        Ok(self.green.mass(w)?.div(&self.norm))
    }

    fn integrate(&self, f: &SimpleFunction) -> Result<Bounded> {
        Ok(self.green.integrate(f)?.div(&self.norm))
    }
}

/// A measure with the value on one cylinder moved by `delta`.
pub struct Perturbed<M> {
    pub base: M,
    pub cylinder: Vec<State>,
    pub delta: f64,
}

impl<M: CylinderMeasure> CylinderMeasure for Perturbed<M> {
    fn mass(&self, w: &[State]) -> Result<Bounded> {
        let m = self.base.mass(w)?;
        Ok(if w == self.cylinder.as_slice() {
            m.add(&Bounded::exact(self.delta))
        } else {
            m
        })
    }
}

/// `sum c_i mu_i`.
pub struct Combination<'a> {
    pub terms: Vec<(f64, &'a dyn CylinderMeasure)>,
}

impl CylinderMeasure for Combination<'_> {
    fn mass(&self, w: &[State]) -> Result<Bounded> {
        let mut acc = Bounded::exact(0.0);
        for (c, m) in &self.terms {
            acc = acc.add(&m.mass(w)?.scale(*c));
        }
        Ok(acc)
    }
}

/// `max |mu([w]) - sum_b mu([w b])|` over the given cylinders.
pub fn additivity_defect(mu: &dyn CylinderMeasure, g: &StateGraph, test: &[Cylinder]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for c in test {
        let mut sum = 0.0;
        for &b in g.out_edges(c.last())?.iter() {
            let mut w = c.word().to_vec();
            w.push(b);
            sum += mu.mass(&w)?.value;
        }
        worst = worst.max((mu.mass(c.word())?.value - sum).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Serialize)]
pub struct CylinderResidual {
    pub cylinder: String,
    pub residual: f64,
    /// Width contributed by the error bars of the measure.
    pub error: f64,
}

/// `|mu(L 1_[w]) - lambda mu([w])|` for each test cylinder.
pub fn conformality_residual(
    sys: &System,
    mu: &dyn CylinderMeasure,
    lambda: f64,
    test: &[Cylinder],
) -> Result<Vec<CylinderResidual>> {
    test.iter()
        .map(|c| {
            let pushed = mu.integrate(&push_l(sys, &SimpleFunction::indicator(c.clone()))?)?;
            let d = pushed.sub(&mu.mass(c.word())?.scale(lambda));
            Ok(CylinderResidual {
                cylinder: c.display(&sys.graph),
                residual: d.value.abs(),
                error: d.radius(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ExcessVerdict {
    pub cylinder: String,
    /// `lambda mu([w]) - mu(L 1_[w])`.
    pub slack: Bounded,
    pub excessive: bool,
}

/// Sign check of `lambda mu([w]) - mu(L 1_[w])` with tolerance `tol`.
pub fn excessiveness_check(
    sys: &System,
    mu: &dyn CylinderMeasure,
    lambda: f64,
    test: &[Cylinder],
    tol: f64,
) -> Result<Vec<ExcessVerdict>> {
    test.iter()
        .map(|c| {
            let pushed = mu.integrate(&push_l(sys, &SimpleFunction::indicator(c.clone()))?)?;
            let slack = mu.mass(c.word())?.scale(lambda).sub(&pushed);
            Ok(ExcessVerdict {
                cylinder: c.display(&sys.graph),
                excessive: slack.hi >= -tol,
                slack,
            })
        })
        .collect()
}

/// How `int G(f, x) dnu(x)` is evaluated.
#[derive(Debug, Clone)]
pub enum IntegralRule {
    /// `nu` is `sum w_i delta_{x_i}`.
    Atoms(Vec<(f64, TailPoint)>),
    /// `nu` is approximated by its charges on the given disjoint cylinders,
    /// each represented by one of its points.
    Quadrature(Vec<Cylinder>),
}

#[derive(Debug, Clone, Serialize)]
pub struct RieszEntry {
    pub cylinder: String,
    pub mu: Bounded,
    pub charge: Bounded,
    /// `lambda^{-n} mu(L^n 1_[w])` for `n = 0..=n_max`.
    pub mu_star: Vec<f64>,
    pub green_part: Bounded,
    pub identity_residual: f64,
    pub identity_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RieszDecomposition {
    pub entries: Vec<RieszEntry>,
    pub n_max: usize,
}

/// Splits an excessive `mu` into the Green potential of the charge
/// `nu = mu - lambda^{-1} L* mu` plus the conformal remainder
/// `mu* = lim lambda^{-n} (L*)^n mu`, on each test cylinder.
pub fn riesz_decompose(
    sys: &System,
    mu: &dyn CylinderMeasure,
    lambda: f64,
    test: &[Cylinder],
    n_max: usize,
    rule: &IntegralRule,
    opts: &GreenOptions,
    tol: f64,
) -> Result<RieszDecomposition> {
    let mut entries = Vec::with_capacity(test.len());
    for c in test {
        let f = SimpleFunction::indicator(c.clone());
        let m = mu.mass(c.word())?;
        let pushed = mu.integrate(&push_l(sys, &f)?)?;
        let charge = m.sub(&pushed.scale(1.0 / lambda));
        if charge.hi < -tol {
            return Err(Error::NotExcessive {
                word: sys.graph.labels(c.word()),
                slack: charge.value,
            });
        }
        let mut mu_star = Vec::with_capacity(n_max + 1);
        let mut g = f.clone();
        let mut last = m;
        for n in 0..=n_max {
            if n > 0 {
                g = push_l(sys, &g)?;
            }
            last = mu.integrate(&g)?.scale(lambda.powi(-(n as i32)));
            mu_star.push(last.value);
        }
        let green_part = match rule {
            IntegralRule::Atoms(atoms) => {
                let mut acc = Bounded::exact(0.0);
                for (w, x) in atoms {
                    let gv = crate::green::green(sys, &f, x, lambda, opts)?;
                    acc = acc.add(&Bounded::from(&gv).scale(*w));
                }
                acc
            }
            IntegralRule::Quadrature(cells) => {
                let mut acc = Bounded::exact(0.0);
                for cell in cells {
                    let x = crate::shift::point_in(cell.word(), &sys.graph)?;
                    let nu_cell = mu
                        .mass(cell.word())?
                        .sub(&mu.integrate(&push_l(sys, &SimpleFunction::indicator(cell.clone()))?)?.scale(1.0 / lambda));
                    let gv = crate::green::green(sys, &f, &x, lambda, opts)?;
                    acc = acc.add(&Bounded::from(&gv).scale(nu_cell.value));
                }
                acc
            }
        };
        let gap = m.sub(&green_part).sub(&last);
        entries.push(RieszEntry {
            cylinder: c.display(&sys.graph),
            mu: m,
            charge,
            mu_star,
            green_part,
            identity_residual: gap.value.abs(),
            identity_bound: gap.radius() + last.value.abs(),
        });
    }
    Ok(RieszDecomposition { entries, n_max })
}
