use serde_json::{json, Value};
use tmshift::boundary::{boundary_atlas, default_test_set, AtlasOptions, KernelSetup, Orbit};
use tmshift::dlr::{dlr_check_conditional, tail_correction, thermo_limit, Scheme};
use tmshift::duality::{eigen_residual, poisson_ratio_limit, transience_duality_check, Eigenfunction};
use tmshift::green::{green, martin_kernel, Bounded, GreenOptions};
use tmshift::measures::conformality_residual;
use tmshift::modelfile::{cli_green_options, parse_point_in, MeasureRule, ModelFile};
use tmshift::models::Model;
use tmshift::potential::{classify, Transience};
use tmshift::shift::{point_in, Cylinder, State, StateGraph, TailPoint};
use tmshift::transfer::SimpleFunction;
use tmshift::walk::{hitting_distribution, HittingOptions, Z99};
use tmshift::{Error, Result};

use crate::output::{num, Report, Table};

/// Flags shared by every subcommand.
pub struct Common {
    pub lambda: f64,
    pub tol: f64,
    pub n_cap: usize,
    pub test_depth: usize,
    pub eps: f64,
}

impl Common {
    fn green(&self) -> GreenOptions {
        cli_green_options(self.tol, self.n_cap)
    }

    fn test_set(&self, m: &Model) -> Result<Vec<Cylinder>> {
        default_test_set(m.graph(), m.origin, self.test_depth, self.test_depth)
    }
}

/// Points of escaping orbits used when the model file names none.
const DEFAULT_ORBIT_RANGE: std::ops::RangeInclusive<usize> = 10..=16;

fn describe(x: &TailPoint, g: &StateGraph) -> String {
    format!("{},...", g.labels(&x.coords(6)))
}

fn cylinder(text: Option<&str>, m: &Model) -> Result<Cylinder> {
    match text {
        None => Ok(Cylinder::single(m.origin)),
        Some(t) => {
            let word = t
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| m.graph().parse_label(s))
                .collect::<Result<Vec<State>>>()?;
            if word.is_empty() {
                return Err(Error::EmptyWord);
            }
            Cylinder::new(word, m.graph())
        }
    }
}

fn point(text: Option<&str>, m: &Model) -> Result<TailPoint> {
    match text {
        Some(t) => parse_point_in(m, t),
        None => point_in(&[m.origin], m.graph()),
    }
}

fn bounded(b: &Bounded) -> Value {
    json!({ "value": b.value, "lo": b.lo, "hi": b.hi })
}

fn orbits_for(file: &ModelFile, m: &Model, use_file: bool) -> Result<Vec<Orbit>> {
    if use_file && !file.orbits.is_empty() {
        return Ok(file
            .orbits
            .iter()
            .map(|o| Orbit {
                tag: o.tag.clone(),
                points: o.points.clone(),
            })
            .collect());
    }
    m.escapes
        .iter()
        .map(|e| {
            Ok(Orbit {
                tag: e.tag.clone(),
                points: e.points(DEFAULT_ORBIT_RANGE)?,
            })
        })
        .collect()
}

/// Runs `f` on every item using scoped worker threads; results keep input order.
fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> Result<R> + Sync) -> Result<Vec<R>> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len().max(1));
    let chunk = items.len().div_ceil(workers).max(1);
    let parts: Vec<Result<Vec<R>>> = std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(|| c.iter().map(&f).collect::<Result<Vec<R>>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(items.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

pub fn green_cmd(file: &ModelFile, c: &Common, pt: Option<&str>, cyl: Option<&str>) -> Result<Report> {
    let m = &file.model;
    let x = point(pt, m)?;
    let w = cylinder(cyl, m)?;
    let v = green(&m.system, &SimpleFunction::indicator(w.clone()), &x, c.lambda, &c.green())?;
    let b = Bounded::from(&v);
    let mut table = Table::new(&["quantity", "value"]);
    table.note(format!("model {}", m.name));
    for (k, val) in [
        ("estimate", num(b.value)),
        ("lower", num(v.lower())),
        ("upper", num(v.upper())),
        ("tail_bound", num(v.tail_bound)),
        ("n_terms", v.n_terms.to_string()),
    ] {
        table.row(vec![k.into(), val]);
    }
    Ok(Report {
        name: "green",
        json: json!({
            "model": m.name,
            "lambda": c.lambda,
            "point": describe(&x, m.graph()),
            "cylinder": w.display(m.graph()),
            "estimate": b.value,
            "lower": v.lower(),
            "upper": v.upper(),
            "partial": v.partial,
            "tail_bound": v.tail_bound,
            "n_terms": v.n_terms,
        }),
        table,
    })
}

pub fn kernel_cmd(file: &ModelFile, c: &Common, pt: Option<&str>, cyl: Option<&str>) -> Result<Report> {
    let m = &file.model;
    let w = cylinder(cyl, m)?;
    let f = SimpleFunction::indicator(w.clone());
    let queries: Vec<(String, usize, TailPoint)> = match pt {
        Some(t) => vec![("point".into(), 0, point(Some(t), m)?)],
        None => orbits_for(file, m, true)?
            .into_iter()
            .flat_map(|o| {
                let tag = o.tag;
                o.points.into_iter().enumerate().map(move |(i, x)| (tag.clone(), i, x))
            })
            .collect(),
    };
    if queries.is_empty() {
        return Err(Error::InvalidParameter(
            "kernel needs --point or a model with orbits or escape families".into(),
        ));
    }
    let opts = c.green();
    let values = par_map(&queries, |(_, _, x)| martin_kernel(&m.system, &f, x, m.origin, c.lambda, &opts))?;
    let mut table = Table::new(&["orbit", "index", "point", "kernel", "lo", "hi"]);
    table.note(format!("model {}  cylinder {}", m.name, w.display(m.graph())));
    let mut rows = Vec::new();
    for ((tag, i, x), b) in queries.iter().zip(&values) {
        let p = describe(x, m.graph());
        table.row(vec![tag.clone(), i.to_string(), p.clone(), num(b.value), num(b.lo), num(b.hi)]);
        rows.push(json!({ "orbit": tag, "index": i, "point": p, "kernel": bounded(b) }));
    }
    Ok(Report {
        name: "kernel",
        json: json!({
            "model": m.name,
            "lambda": c.lambda,
            "origin": m.graph().label(m.origin),
            "cylinder": w.display(m.graph()),
            "values": rows,
        }),
        table,
    })
}

pub fn atlas_cmd(file: &ModelFile, c: &Common, reversed: bool) -> Result<Report> {
    let m = if reversed { file.model.reversed() } else { file.model.clone() };
    let orbits = orbits_for(file, &m, !reversed)?;
    if orbits.is_empty() {
        return Err(Error::InvalidParameter(format!("model {} has no escaping orbits", m.name)));
    }
    let test_set = c.test_set(&m)?;
    let mut opts = AtlasOptions::new(c.lambda, c.eps);
    opts.green = c.green();
    let atlas = boundary_atlas(&m.system, m.origin, &orbits, &test_set, &opts)?;
    let mut table = Table::new(&["cluster", "members", "diameter", "extremal"]);
    table.note(format!("model {}  lambda {}  eps {}", m.name, c.lambda, c.eps));
    table.note(format!("clusters {}", atlas.clusters.len()));
    for (i, cl) in atlas.clusters.iter().enumerate() {
        table.row(vec![
            i.to_string(),
            cl.members.join(" "),
            num(cl.diameter),
            cl.extremal_heuristic.to_string(),
        ]);
    }
    let mut json = serde_json::to_value(&atlas).expect("atlas serializes");
    json["model"] = json!(m.name);
    Ok(Report {
        name: "atlas",
        json,
        table,
    })
}

pub fn thermo_cmd(
    file: &ModelFile,
    c: &Common,
    scheme: Scheme,
    n_max: usize,
    reversed: bool,
    pt: Option<&str>,
    cyl: Option<&str>,
) -> Result<Report> {
    let m = &if reversed { file.model.reversed() } else { file.model.clone() };
    let w = cylinder(cyl, m)?;
    let f = SimpleFunction::indicator(w.clone());
    let starts: Vec<(String, TailPoint)> = match (pt, scheme) {
        (Some(t), _) => vec![("point".into(), point(Some(t), m)?)],
        (None, Scheme::Transient) => m
            .escapes
            .iter()
            .map(|e| Ok((e.tag.clone(), e.point(1)?)))
            .collect::<Result<_>>()?,
        (None, _) => vec![("origin".into(), point(None, m)?)],
    };
    if starts.is_empty() {
        return Err(Error::InvalidParameter(format!("model {} has no escape families; pass --point", m.name)));
    }
    let opts = c.green();
    let seqs = par_map(&starts, |(_, x)| thermo_limit(&m.system, scheme, x, &f, m.origin, n_max, c.lambda, &opts))?;
    let mut table = Table::new(&["start", "limit", "trailing_oscillation"]);
    table.note(format!("model {}  cylinder {}", m.name, w.display(m.graph())));
    let mut rows = Vec::new();
    for ((tag, x), s) in starts.iter().zip(&seqs) {
        table.row(vec![tag.clone(), num(s.last().value), num(s.trailing_oscillation)]);
        rows.push(json!({
            "start": tag,
            "point": describe(x, m.graph()),
            "values": s.values.iter().map(|b| b.value).collect::<Vec<_>>(),
            "limit": bounded(&s.last()),
            "trailing_oscillation": s.trailing_oscillation,
            "window": s.window,
        }));
    }
    Ok(Report {
        name: "thermo",
        json: json!({ "model": m.name, "lambda": c.lambda, "scheme": scheme, "sequences": rows }),
        table,
    })
}

pub fn dlr_cmd(file: &ModelFile, c: &Common, n_max: usize, depth: usize) -> Result<Report> {
    let m = &file.model;
    if file.measures.is_empty() {
        return Err(Error::InvalidParameter("dlr needs at least one [[measure]] in the model file".into()));
    }
    let g = m.graph();
    let test_set = c.test_set(m)?;
    let mut generic_tails = Vec::new();
    for cyl in test_set.iter().filter(|c| c.len() == 1) {
        generic_tails.push(point_in(cyl.word(), g)?);
    }
    let mut table = Table::new(&["measure", "dlr", "conformal", "dlr_residual", "conformal_residual", "constant_correction"]);
    table.note(format!("model {}  tolerance {:e}", m.name, c.tol));
    let mut rows = Vec::new();
    for spec in &file.measures {
        let mu = spec.build(m, c.green())?;
        let (tails, lambda) = match &spec.rule {
            MeasureRule::Dirac(x) => (vec![x.clone()], c.lambda),
            MeasureRule::Path { lambda, .. } | MeasureRule::Green { lambda, .. } => (generic_tails.clone(), *lambda),
        };
        let mut dlr_max: f64 = 0.0;
        let mut checked = 0usize;
        for n in 1..=n_max {
            for t in &tails {
                match dlr_check_conditional(&m.system, mu.as_ref(), n, depth, std::slice::from_ref(t)) {
                    Ok(res) => {
                        checked += res.len();
                        dlr_max = res.iter().map(|r| r.residual).fold(dlr_max, f64::max);
                    }
                    Err(Error::ZeroMassConditioning(_)) => {}
                    Err(e) => return Err(e),
                }
            }
        }
        if checked == 0 {
            return Err(Error::ZeroMassConditioning(format!("every tested tail of measure `{}`", spec.name)));
        }
        let conf = conformality_residual(&m.system, mu.as_ref(), lambda, &test_set)?;
        let conf_max = conf.iter().map(|r| r.residual - r.error).fold(0.0, f64::max);
        let dlr_ok = dlr_max <= c.tol;
        let conf_ok = conf_max <= c.tol;
        let corr = tail_correction(&m.system, mu.as_ref(), lambda, &test_set, c.tol)?;
        let corr_text = match corr.shift {
            Some(s) if corr.vanishes => num(s),
            _ => "none".into(),
        };
        let verdict = |ok: bool, what: &str| format!("{}({what})", if ok { "PASS" } else { "FAIL" });
        table.row(vec![
            spec.name.clone(),
            verdict(dlr_ok, "dlr"),
            verdict(conf_ok, "conformal"),
            num(dlr_max),
            num(conf_max),
            corr_text,
        ]);
        rows.push(json!({
            "measure": spec.name,
            "lambda": lambda,
            "verdict": [verdict(dlr_ok, "dlr"), verdict(conf_ok, "conformal")],
            "dlr_max_residual": dlr_max,
            "dlr_terms_checked": checked,
            "conformal_max_residual": conf_max,
            "conformal": conf,
            "tail_correction": corr,
        }));
    }
    Ok(Report {
        name: "dlr",
        json: json!({ "model": m.name, "tolerance": c.tol, "measures": rows }),
        table,
    })
}

pub struct WalkArgs {
    pub seed: u64,
    pub samples: usize,
    pub horizon: usize,
    pub ball_radius: usize,
    pub settle: usize,
}

pub fn walk_cmd(file: &ModelFile, c: &Common, a: &WalkArgs) -> Result<Report> {
    let m = &file.model;
    let walk = m
        .walk
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter(format!("model {} has no random walk", m.name)))?;
    let (target, project): (&Model, Box<dyn Fn(State) -> State>) = match &m.quotient {
        Some(q) => {
            let p = q.project.clone();
            (q.model.as_ref(), Box::new(move |s| p(s)))
        }
        None => (m, Box::new(|s| s)),
    };
    let opts = c.green();
    let x0 = point_in(&[target.origin], target.graph())?;
    let o = SimpleFunction::indicator(Cylinder::single(target.origin));
    let verdict = classify(&target.system, 1.0, &o, &x0, &opts)?;
    match verdict.classification {
        Transience::Transient => {}
        Transience::Recurrent => {
            return Err(Error::Diverging {
                n_terms: verdict.n_terms,
                partial: verdict.partial,
            })
        }
        Transience::Inconclusive => {
            return Err(Error::BudgetExhausted {
                n_terms: verdict.n_terms,
                partial: verdict.partial,
            })
        }
    }
    let orbits = orbits_for(file, target, m.quotient.is_none())?;
    let test_set = c.test_set(target)?;
    let mut aopts = AtlasOptions::new(1.0, c.eps);
    aopts.green = opts;
    let atlas = boundary_atlas(&target.system, target.origin, &orbits, &test_set, &aopts)?;
    let setup = KernelSetup {
        sys: &target.system,
        origin: target.origin,
        lambda: 1.0,
        opts,
    };
    let tg = target.graph();
    let locate = |path: &[State]| point_in(&[project(*path.last().expect("nonempty path"))], tg);
    let hopts = HittingOptions {
        n_samples: a.samples,
        horizon: a.horizon,
        ball_radius: a.ball_radius,
        settle: a.settle,
        seed: a.seed,
        z: Z99,
    };
    let report = hitting_distribution(walk, &atlas, &setup, &locate, 1, &hopts)?;
    let mut table = Table::new(&["cluster", "members", "count", "frequency", "interval_lo", "interval_hi"]);
    table.note(format!("model {}  boundary computed on {}", m.name, target.name));
    table.note(format!(
        "samples {}  non_escaping {}  seed {}",
        report.n_samples, report.non_escaping, a.seed
    ));
    for cf in &report.clusters {
        table.row(vec![
            cf.cluster.to_string(),
            cf.members.join(" "),
            cf.count.to_string(),
            format!("{:.6}", cf.frequency),
            format!("{:.6}", cf.interval.0),
            format!("{:.6}", cf.interval.1),
        ]);
    }
    Ok(Report {
        name: "walk",
        json: json!({
            "model": m.name,
            "boundary_model": target.name,
            "seed": a.seed,
            "options": hopts,
            "transience": verdict,
            "hitting": report,
        }),
        table,
    })
}

pub struct DualityArgs {
    pub seed: u64,
    pub reversed: bool,
    pub steps: usize,
    pub samples: usize,
}

/// Distance from a ratio limit to the nearest of 0 and 1 counted as a hit.
const RATIO_HIT_TOL: f64 = 1e-2;

pub fn duality_cmd(file: &ModelFile, c: &Common, a: &DualityArgs) -> Result<Report> {
    let m = &file.model;
    let opts = c.green();
    let check = transience_duality_check(&m.system, m.origin, c.lambda, &opts)?;
    let mut table = Table::new(&[]);
    table.note(format!("model {}  lambda {}", m.name, c.lambda));
    table.note(format!(
        "forward {:?}  reversed {:?}  consistent {}",
        check.forward.classification, check.reversed.classification, check.consistent
    ));
    let mut json = json!({ "model": m.name, "seed": a.seed, "transience": check });

    let density = |name: &str| {
        file.measures.iter().find_map(|s| match &s.rule {
            MeasureRule::Path { lambda, density } if s.name == name => Some((*lambda, density.clone())),
            _ => None,
        })
    };
    if let (Some((lf, df)), Some((lh, dh))) = (density("f"), density("h")) {
        let oriented = if a.reversed { m.reversed() } else { m.clone() };
        let g = oriented.graph();
        let f = Eigenfunction::new(lf, {
            let k = df.function(g);
            move |s| k(s)
        });
        let h = Eigenfunction::new(lh, {
            let k = dh.function(g);
            move |s| k(s)
        });
        let ball = g.ball(oriented.origin, 5)?;
        let worst = |e: &Eigenfunction| -> Result<f64> {
            Ok(eigen_residual(&oriented.system, e, &ball)?
                .into_iter()
                .map(|(_, r)| r)
                .fold(0.0, f64::max))
        };
        let (rf, rh) = (worst(&f)?, worst(&h)?);
        let poisson = poisson_ratio_limit(&oriented.system, &f, &h, oriented.origin, a.steps, a.samples, a.seed)?;
        let finals: Vec<f64> = poisson
            .trajectories
            .iter()
            .map(|t| *t.ratios.last().expect("nonempty"))
            .collect();
        let near = |v: f64| finals.iter().filter(|&&r| (r - v).abs() <= RATIO_HIT_TOL).count();
        let (n0, n1) = (near(0.0), near(1.0));
        table.note(format!("eigen_residual f {}  h {}", num(rf), num(rh)));
        table.note(format!(
            "ratio limits over {} samples, {} steps: near 0 {}  near 1 {}  elsewhere {}",
            a.samples,
            a.steps,
            n0,
            n1,
            finals.len() - n0 - n1
        ));
        json["poisson"] = json!({
            "orientation": if a.reversed { "reversed" } else { "forward" },
            "eigen_residual": { "f": rf, "h": rh },
            "n_steps": poisson.n_steps,
            "window": poisson.window,
            "near_zero": n0,
            "near_one": n1,
            "trajectories": poisson.trajectories.iter().map(|t| json!({
                "final_state": t.final_state,
                "final_ratio": t.ratios.last(),
                "oscillation": t.oscillation,
            })).collect::<Vec<_>>(),
        });
    }
    Ok(Report {
        name: "duality",
        json,
        table,
    })
}
