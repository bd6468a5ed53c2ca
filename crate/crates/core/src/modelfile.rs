//! TOML model files.
//!
//! ```toml
//! [graph]
//! builder = "biased_walk_z"   # self_loop, example1, example2, biased_walk_z,
//! p = 0.6666666666666666      # inward_drift_walk, regular_tree, regular_tree_radial
//!
//! [potential]                 # optional; defaults to the builder's own
//! kind = "constant"           # constant | log_stochastic | edges
//! alpha = -1.0
//!
//! [origin]
//! state = "0"
//!
//! [anchors]                   # optional; replaces the computed anchor point
//! "0" = "|1,0"                # of a state (forward shift only)
//!
//! [[measure]]
//! name = "harmonic"
//! rule = "path"               # path | dirac | green
//! density = "power"           # one | power | table
//! base = 0.5                  # k(a) = offset + base^a
//! offset = 1.0
//!
//! [[orbits]]
//! family = "plus"             # builder escape family, points from..=to
//! from = 5
//! to = 12
//! ```
//!
//! Points are written `prefix|cycle` with comma-separated state labels, or
//! `@family:n` for the `n`-th point of a builder escape family.

use std::collections::BTreeMap;
use std::ops::Range;
use std::sync::Arc;

use serde::Deserialize;
use toml::Spanned;

use crate::error::{Error, Result};
use crate::green::GreenOptions;
use crate::measures::{CylinderMeasure, Dirac, GreenMeasure, PathMeasure};
use crate::models::{self, Model};
use crate::potential::Potential;
use crate::shift::{Direction, State, StateGraph, TailPoint};
use crate::transfer::System;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    graph: RawGraph,
    potential: Option<RawPotential>,
    origin: Option<RawOrigin>,
    /// State label to point, replacing the computed anchor of that state.
    #[serde(default)]
    anchors: BTreeMap<String, Spanned<String>>,
    #[serde(default)]
    measure: Vec<RawMeasure>,
    #[serde(default)]
    orbits: Vec<RawOrbit>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGraph {
    builder: Spanned<String>,
    alpha: Option<Spanned<f64>>,
    p: Option<Spanned<f64>>,
    degree: Option<Spanned<u32>>,
    weights: Option<Spanned<Vec<f64>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPotential {
    kind: Spanned<String>,
    alpha: Option<f64>,
    edges: Option<Vec<RawEdge>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEdge {
    from: Spanned<String>,
    to: Spanned<String>,
    value: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOrigin {
    state: Spanned<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMeasure {
    name: String,
    rule: Spanned<String>,
    point: Option<Spanned<String>>,
    lambda: Option<f64>,
    density: Option<Spanned<String>>,
    base: Option<f64>,
    offset: Option<f64>,
    table: Option<Spanned<BTreeMap<String, f64>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOrbit {
    tag: Option<String>,
    family: Option<Spanned<String>>,
    from: Option<usize>,
    to: Option<usize>,
    points: Option<Vec<Spanned<String>>>,
}

/// Density `k` of a path measure.
#[derive(Debug, Clone, PartialEq)]
pub enum Density {
    One,
    /// `offset + base^a` at integer-labelled states `a`; `NaN` elsewhere.
    Power { base: f64, offset: f64 },
    Table(BTreeMap<State, f64>),
}

#[derive(Debug, Clone)]
pub enum MeasureRule {
    Path { lambda: f64, density: Density },
    Dirac(TailPoint),
    Green { point: TailPoint, lambda: f64 },
}

#[derive(Debug, Clone)]
pub struct MeasureSpec {
    pub name: String,
    pub rule: MeasureRule,
}

#[derive(Debug, Clone)]
pub struct OrbitSpec {
    pub tag: String,
    pub points: Vec<TailPoint>,
}

#[derive(Debug, Clone)]
pub struct ModelFile {
    pub model: Model,
    pub measures: Vec<MeasureSpec>,
    pub orbits: Vec<OrbitSpec>,
}

struct Src<'a>(&'a str);

impl Src<'_> {
    fn line(&self, span: Range<usize>) -> usize {
        self.0[..span.start.min(self.0.len())].matches('\n').count() + 1
    }

    /// Best-effort `table.key` name for a span reported by the TOML reader:
    /// the key assigned on that line, or the enclosing table header.
    fn field_at(&self, span: Range<usize>) -> String {
        let start = span.start.min(self.0.len());
        let line_start = self.0[..start].rfind('\n').map_or(0, |i| i + 1);
        let line = self.0[line_start..].lines().next().unwrap_or("");
        let key = line.split_once('=').map(|(k, _)| k.trim().trim_matches('"').to_string());
        let table = self.0[..line_start]
            .lines()
            .rev()
            .map(str::trim)
            .find(|l| l.starts_with('['))
            .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim().to_string());
        match (table, key) {
            (Some(t), Some(k)) => format!("{t}.{k}"),
            (None, Some(k)) => k,
            (Some(t), None) => t,
            (None, None) => "document".into(),
        }
    }

    fn err<T>(&self, span: Range<usize>, field: &str, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            line: self.line(span),
            field: field.into(),
            message: message.into(),
        })
    }

    /// Re-labels a library error with the position of the offending field.
    fn at<T>(&self, span: Range<usize>, field: &str, r: Result<T>) -> Result<T> {
        r.or_else(|e| self.err(span, field, e.to_string()))
    }
}

/// Parses `prefix|cycle` (comma-separated labels) as a forward point.
pub fn parse_point(text: &str, g: &StateGraph) -> Result<TailPoint> {
    let (prefix, cycle) = text
        .split_once('|')
        .ok_or_else(|| Error::InvalidParameter(format!("point `{text}` needs the form prefix|cycle")))?;
    let states = |s: &str| -> Result<Vec<State>> {
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| g.parse_label(t))
            .collect()
    };
    let p = TailPoint::periodic(states(prefix)?, states(cycle)?, Direction::Forward)?;
    p.validate(g)?;
    Ok(p)
}

/// [`parse_point`], plus `@family:n` for escape-family points of the model.
pub fn parse_point_in(model: &Model, text: &str) -> Result<TailPoint> {
    match text.trim().strip_prefix('@') {
        Some(rest) => {
            let (fam, n) = rest
                .split_once(':')
                .ok_or_else(|| Error::InvalidParameter(format!("point `{text}` needs the form @family:n")))?;
            let n: usize = n
                .trim()
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad index in `{text}`")))?;
            model.escape(fam.trim())?.point(n)
        }
        None => parse_point(text, model.graph()),
    }
}

fn required<T: Clone>(src: &Src, builder: &Spanned<String>, v: &Option<Spanned<T>>, field: &str) -> Result<T> {
    match v {
        Some(s) => Ok(s.get_ref().clone()),
        None => src.err(builder.span(), field, format!("builder `{}` needs `{field}`", builder.get_ref())),
    }
}

fn build_model(src: &Src, g: &RawGraph) -> Result<Model> {
    let b = &g.builder;
    let param_span = |v: &Option<Spanned<f64>>| v.as_ref().map(|s| s.span()).unwrap_or(b.span());
    match b.get_ref().as_str() {
        "self_loop" => Ok(models::self_loop(required(src, b, &g.alpha, "alpha")?)),
        "example1" => Ok(models::example1(required(src, b, &g.alpha, "alpha")?)),
        "example2" => Ok(models::example2()),
        "biased_walk_z" => {
            let p = required(src, b, &g.p, "p")?;
            src.at(param_span(&g.p), "p", models::biased_walk_z(p))
        }
        "inward_drift_walk" => {
            let p = required(src, b, &g.p, "p")?;
            src.at(param_span(&g.p), "p", models::inward_drift_walk(p))
        }
        "regular_tree" => {
            let d = required(src, b, &g.degree, "degree")?;
            let w = match &g.weights {
                Some(w) => w.get_ref().clone(),
                None => vec![1.0 / d as f64; d as usize],
            };
            let span = g.weights.as_ref().map(|s| s.span()).unwrap_or(b.span());
            src.at(span, "weights", models::regular_tree(d, &w))
        }
        "regular_tree_radial" => {
            let d = required(src, b, &g.degree, "degree")?;
            let span = g.degree.as_ref().map(|s| s.span()).unwrap_or(b.span());
            src.at(span, "degree", models::regular_tree_radial(d))
        }
        other => src.err(b.span(), "builder", format!("unknown builder `{other}`")),
    }
}

fn build_potential(src: &Src, model: &Model, p: &RawPotential) -> Result<Potential> {
    let k = &p.kind;
    match k.get_ref().as_str() {
        "constant" => match p.alpha {
            Some(a) => Ok(Potential::constant(a)),
            None => src.err(k.span(), "alpha", "constant potential needs `alpha`"),
        },
        "log_stochastic" => match &model.walk {
            Some(w) => Ok(w.log_potential("log_stochastic")),
            None => src.err(k.span(), "kind", "model has no transition probabilities"),
        },
        "edges" => {
            let g = model.graph();
            let mut table = BTreeMap::new();
            for e in p.edges.as_deref().unwrap_or(&[]) {
                let a = src.at(e.from.span(), "from", g.parse_label(e.from.get_ref()))?;
                let b = src.at(e.to.span(), "to", g.parse_label(e.to.get_ref()))?;
                if !g.has_edge(a, b)? {
                    return src.err(e.to.span(), "to", format!("no edge {} -> {}", e.from.get_ref(), e.to.get_ref()));
                }
                table.insert(vec![a, b], e.value);
            }
            Potential::table(2, table)
        }
        other => src.err(k.span(), "kind", format!("unknown potential kind `{other}`")),
    }
}

fn build_measure(src: &Src, model: &Model, m: &RawMeasure) -> Result<MeasureSpec> {
    let point = |field: &str| -> Result<TailPoint> {
        match &m.point {
            Some(p) => src.at(p.span(), "point", parse_point_in(model, p.get_ref())),
            None => src.err(m.rule.span(), field, format!("measure `{}` needs `point`", m.name)),
        }
    };
    let lambda = m.lambda.unwrap_or(1.0);
    if lambda <= 0.0 {
        return src.err(m.rule.span(), "lambda", "lambda must be positive");
    }
    let rule = match m.rule.get_ref().as_str() {
        "dirac" => MeasureRule::Dirac(point("point")?),
        "green" => MeasureRule::Green {
            point: point("point")?,
            lambda,
        },
        "path" => {
            let density = match m.density.as_ref().map(|d| (d.get_ref().as_str(), d.span())) {
                None | Some(("one", _)) => Density::One,
                Some(("power", span)) => match m.base {
                    Some(b) if b > 0.0 => Density::Power {
                        base: b,
                        offset: m.offset.unwrap_or(0.0),
                    },
                    _ => return src.err(span, "base", "power density needs a positive `base`"),
                },
                Some(("table", span)) => {
                    let Some(t) = &m.table else {
                        return src.err(span, "table", "table density needs `table`");
                    };
                    let mut out = BTreeMap::new();
                    for (k, v) in t.get_ref() {
                        out.insert(src.at(t.span(), "table", model.graph().parse_label(k))?, *v);
                    }
                    Density::Table(out)
                }
                Some((other, span)) => return src.err(span, "density", format!("unknown density `{other}`")),
            };
            MeasureRule::Path { lambda, density }
        }
        other => return src.err(m.rule.span(), "rule", format!("unknown measure rule `{other}`")),
    };
    Ok(MeasureSpec {
        name: m.name.clone(),
        rule,
    })
}

fn build_orbit(src: &Src, model: &Model, o: &RawOrbit, idx: usize) -> Result<OrbitSpec> {
    if let Some(pts) = &o.points {
        let points = pts
            .iter()
            .map(|p| src.at(p.span(), "points", parse_point_in(model, p.get_ref())))
            .collect::<Result<Vec<_>>>()?;
        return Ok(OrbitSpec {
            tag: o.tag.clone().unwrap_or_else(|| format!("orbit{idx}")),
            points,
        });
    }
    let Some(fam) = &o.family else {
        return Err(Error::Parse {
            line: 0,
            field: "orbits".into(),
            message: format!("orbit #{idx} needs `family` or `points`"),
        });
    };
    let family = src.at(fam.span(), "family", model.escape(fam.get_ref()))?;
    let (from, to) = (o.from.unwrap_or(5), o.to.unwrap_or(12));
    if from > to {
        return src.err(fam.span(), "to", "`to` must not be below `from`");
    }
    Ok(OrbitSpec {
        tag: o.tag.clone().unwrap_or_else(|| fam.get_ref().clone()),
        points: src.at(fam.span(), "family", family.points(from..=to))?,
    })
}

/// Parses and validates a model file.
pub fn parse_model(text: &str) -> Result<ModelFile> {
    let src = Src(text);
    let raw: RawFile = toml::from_str(text).map_err(|e| Error::Parse {
        line: e.span().map(|s| src.line(s)).unwrap_or(0),
        field: e.span().map(|s| src.field_at(s)).unwrap_or_else(|| "document".into()),
        message: e.message().trim().to_string(),
    })?;
    let mut model = build_model(&src, &raw.graph)?;
    if let Some(p) = &raw.potential {
        let pot = build_potential(&src, &model, p)?;
        model = model.with_potential(pot);
    }
    if let Some(o) = &raw.origin {
        model.origin = src.at(o.state.span(), "state", model.graph().parse_label(o.state.get_ref()))?;
    }
    for (label, text) in &raw.anchors {
        let field = format!("anchors.{label}");
        let g = model.graph();
        let a = src.at(text.span(), &field, g.parse_label(label))?;
        let x = src.at(text.span(), &field, parse_point(text.get_ref(), g))?;
        let g = src.at(text.span(), &field, g.with_anchors(BTreeMap::from([(a, x)])))?;
        model.system = System::new(g, model.system.potential.clone());
    }
    let measures = raw
        .measure
        .iter()
        .map(|m| build_measure(&src, &model, m))
        .collect::<Result<Vec<_>>>()?;
    let orbits = raw
        .orbits
        .iter()
        .enumerate()
        .map(|(i, o)| build_orbit(&src, &model, o, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelFile {
        model,
        measures,
        orbits,
    })
}

impl Density {
    /// The density as a function of states of `g`.
    pub fn function(&self, g: &StateGraph) -> Arc<dyn Fn(State) -> f64 + Send + Sync> {
        match self {
            Density::One => Arc::new(|_| 1.0),
            &Density::Power { base, offset } => {
                let g = g.clone();
                Arc::new(move |s| match g.label(s).parse::<i32>() {
                    Ok(a) => offset + base.powi(a),
                    Err(_) => f64::NAN,
                })
            }
            Density::Table(t) => {
                let t = t.clone();
                Arc::new(move |s| t.get(&s).copied().unwrap_or(0.0))
            }
        }
    }
}

impl MeasureSpec {
    /// Instantiates the measure on the model's system.
    pub fn build<'a>(&self, model: &'a Model, opts: GreenOptions) -> Result<Box<dyn CylinderMeasure + 'a>> {
        Ok(match &self.rule {
            MeasureRule::Path { lambda, density } => {
                let k = density.function(model.graph());
                Box::new(PathMeasure::new(model.system.potential.clone(), *lambda, move |s| k(s))?)
            }
            MeasureRule::Dirac(x) => Box::new(Dirac(x.clone())),
            MeasureRule::Green { point, lambda } => Box::new(GreenMeasure::new(&model.system, point, *lambda, opts)?),
        })
    }
}

/// Default Green options for CLI runs.
pub fn cli_green_options(tol: f64, n_cap: usize) -> GreenOptions {
    GreenOptions::default().with_tol(tol).with_n_cap(n_cap)
}
