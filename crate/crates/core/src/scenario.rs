//! Scenario files: drift, measures, engine parameters and an experiment list.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::derivative::{solve_stieltjes, StieltjesRule};
use crate::drift::{DriftDecl, DriftSpec};
use crate::error::{Error, Result};
use crate::functional::{Route, SojournRule};
use crate::harness::{
    characteristic_convergence_experiment, characteristic_test_points, continuity_in_x_experiment, cross_route_check,
    finite_difference_experiment, flow_increment_statistics, functional_convergence_experiment, functional_moments_experiment,
    girsanov_experiment, gronwall_experiment, newton_leibniz_experiment, Check, ExperimentConfig, ExperimentReport,
    ReferenceRoute, SchedulePoint, CHARACTERISTIC_TIMES,
};
use crate::io::{self, Header};
use crate::kato::{kato_classify, DEFAULT_EPSILONS};
use crate::measure::{MeasureComponent, SignedMeasureSpec};
use crate::sde::simulate_one;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub drift: DriftDecl,
    #[serde(default)]
    pub measures: Vec<NamedMeasure>,
    pub engine: Engine,
    #[serde(default)]
    pub experiments: Vec<Experiment>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedMeasure {
    pub name: String,
    pub dimension: usize,
    #[serde(default)]
    pub positive: Vec<MeasureComponent>,
    #[serde(default)]
    pub negative: Vec<MeasureComponent>,
}

impl NamedMeasure {
    pub fn spec(&self) -> SignedMeasureSpec {
        SignedMeasureSpec { dimension: self.dimension, positive: self.positive.clone(), negative: self.negative.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Engine {
    pub dimension: usize,
    #[serde(default = "one")]
    pub t_end: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub seed: u64,
    pub paths: usize,
    /// Starting point.
    pub x: Vec<f64>,
    /// Perturbation direction; first unit vector when absent.
    #[serde(default)]
    pub direction: Option<Vec<f64>>,
}

fn one() -> f64 {
    1.0
}
fn default_dt() -> f64 {
    1e-3
}
fn two() -> f64 {
    2.0
}
fn three() -> f64 {
    3.0
}

/// One entry of the experiment list; `paths`, `x` and `dt` override the engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "serde_json::Map<String, serde_json::Value>")]
pub struct Experiment {
    #[serde(flatten)]
    pub kind: ExperimentKind,
    #[serde(default)]
    pub paths: Option<usize>,
    #[serde(default)]
    pub x: Option<Vec<f64>>,
    #[serde(default)]
    pub dt: Option<f64>,
}

impl TryFrom<serde_json::Map<String, serde_json::Value>> for Experiment {
    type Error = String;

    fn try_from(mut m: serde_json::Map<String, serde_json::Value>) -> std::result::Result<Self, String> {
        let mut take = |k: &str| m.remove(k).filter(|v| !v.is_null());
        let paths = take("paths").map(serde_json::from_value).transpose().map_err(|e| format!("paths: {e}"))?;
        let x = take("x").map(serde_json::from_value).transpose().map_err(|e| format!("x: {e}"))?;
        let dt = take("dt").map(serde_json::from_value).transpose().map_err(|e| format!("dt: {e}"))?;
        let kind = serde_json::from_value(serde_json::Value::Object(m)).map_err(|e| e.to_string())?;
        Ok(Experiment { kind, paths, x, dt })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExperimentKind {
    FiniteDifference {
        epsilons: Vec<f64>,
        #[serde(default = "two")]
        p: f64,
    },
    FunctionalConvergence {
        levels: Vec<f64>,
        delta: f64,
    },
    FlowIncrements {
        levels: Vec<f64>,
        #[serde(default = "two")]
        p: f64,
    },
    Girsanov {
        levels: Vec<f64>,
        #[serde(default = "two")]
        p: f64,
    },
    /// Terminal `Var A` by local time, h-approximation and smoothing.
    CrossRoute {
        epsilon: f64,
        h: f64,
        n: f64,
        #[serde(default = "three")]
        k: f64,
    },
    CharacteristicConvergence {
        measure: String,
        levels: Vec<f64>,
    },
    ContinuityInX {
        measure: String,
        offsets: Vec<f64>,
        threshold: f64,
    },
    FunctionalMoments {
        measure: String,
        orders: Vec<u32>,
        #[serde(default)]
        exponents: Vec<f64>,
    },
    Gronwall {},
    NewtonLeibniz {
        alpha: f64,
        u_points: usize,
        #[serde(default = "nl_tolerance")]
        tolerance: f64,
        #[serde(default = "two")]
        factor: f64,
    },
    Kato {
        measure: String,
    },
}

fn nl_tolerance() -> f64 {
    1e-2
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::FiniteDifference { .. } => "finite-difference",
            ExperimentKind::FunctionalConvergence { .. } => "functional-convergence",
            ExperimentKind::FlowIncrements { .. } => "flow-increments",
            ExperimentKind::Girsanov { .. } => "girsanov",
            ExperimentKind::CrossRoute { .. } => "cross-route",
            ExperimentKind::CharacteristicConvergence { .. } => "characteristic-convergence",
            ExperimentKind::ContinuityInX { .. } => "continuity-in-x",
            ExperimentKind::FunctionalMoments { .. } => "functional-moments",
            ExperimentKind::Gronwall {} => "gronwall",
            ExperimentKind::NewtonLeibniz { .. } => "newton-leibniz",
            ExperimentKind::Kato { .. } => "kato",
        }
    }

    fn measure(&self) -> Option<&str> {
        match self {
            ExperimentKind::CharacteristicConvergence { measure, .. }
            | ExperimentKind::ContinuityInX { measure, .. }
            | ExperimentKind::FunctionalMoments { measure, .. }
            | ExperimentKind::Kato { measure } => Some(measure),
            _ => None,
        }
    }
}

/// Command-line overrides.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub paths: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

/// Parse errors carry the file name and the line/column from the TOML parser.
pub fn parse(text: &str, origin: &str) -> Result<Scenario> {
    toml::from_str(text).map_err(|e| Error::Scenario(format!("{origin}: {e}")))
}

pub fn load(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse(&text, &path.display().to_string())
}

impl Scenario {
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.engine.seed = s;
        }
        if let Some(dt) = o.dt {
            self.engine.dt = dt;
            for e in &mut self.experiments {
                e.dt = None;
            }
        }
        if let Some(n) = o.paths {
            self.engine.paths = n;
            for e in &mut self.experiments {
                e.paths = None;
            }
        }
        if let Some(d) = &o.out_dir {
            self.out_dir = Some(d.clone());
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("out").join(&self.name))
    }

    pub fn header(&self) -> Header {
        Header::new(&self.name, self.engine.seed)
    }

    pub fn measure(&self, name: &str) -> Result<&NamedMeasure> {
        self.measures.iter().find(|m| m.name == name).ok_or_else(|| Error::Scenario(format!("unknown measure `{name}`")))
    }

    pub fn config(&self, e: &Experiment) -> ExperimentConfig {
        let (epsilons, levels, p) = match &e.kind {
            ExperimentKind::FiniteDifference { epsilons, p } => (epsilons.clone(), Vec::new(), *p),
            ExperimentKind::FunctionalConvergence { levels, .. } => (Vec::new(), levels.clone(), 2.0),
            ExperimentKind::FlowIncrements { levels, p } | ExperimentKind::Girsanov { levels, p } => (Vec::new(), levels.clone(), *p),
            _ => (Vec::new(), Vec::new(), 2.0),
        };
        let d = self.engine.dimension;
        let direction = self.engine.direction.clone().unwrap_or_else(|| (0..d).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect());
        ExperimentConfig {
            label: self.name.clone(),
            drift: self.drift.clone(),
            x: e.x.clone().unwrap_or_else(|| self.engine.x.clone()),
            direction,
            epsilons,
            levels,
            p,
            t_end: self.engine.t_end,
            dt: e.dt.unwrap_or(self.engine.dt),
            paths: e.paths.unwrap_or(self.engine.paths),
            seed: self.engine.seed,
        }
    }

    /// Checks catalogue ids, dimensions, measure references and schedules.
    pub fn validate(&self) -> Result<DriftSpec> {
        let bad = |m: String| Error::Scenario(format!("scenario `{}`: {m}", self.name));
        let spec = self.drift.build().map_err(|e| bad(format!("drift `{}`: {e}", self.drift.id())))?;
        if spec.dimension != self.engine.dimension {
            return Err(bad(format!("drift `{}` has dimension {}, engine declares {}", self.drift.id(), spec.dimension, self.engine.dimension)));
        }
        let mut names = BTreeSet::new();
        for m in &self.measures {
            if !names.insert(m.name.as_str()) {
                return Err(bad(format!("measure `{}` declared twice", m.name)));
            }
            m.spec().validate().map_err(|e| bad(format!("measure `{}`: {e}", m.name)))?;
        }
        for (i, e) in self.experiments.iter().enumerate() {
            let at = |m: String| bad(format!("experiment {i} ({}): {m}", e.kind.name()));
            if let Some(name) = e.kind.measure() {
                let m = self.measure(name).map_err(|err| at(err.to_string()))?;
                if m.dimension != spec.dimension {
                    return Err(at(format!("measure `{name}` has dimension {}", m.dimension)));
                }
            }
            let cfg = self.config(e);
            cfg.validate().map_err(|err| at(err.to_string()))?;
            match &e.kind {
                ExperimentKind::FiniteDifference { epsilons, .. } if epsilons.is_empty() => return Err(at("empty epsilon schedule".into())),
                ExperimentKind::FunctionalConvergence { levels, .. }
                | ExperimentKind::FlowIncrements { levels, .. }
                | ExperimentKind::Girsanov { levels, .. }
                | ExperimentKind::CharacteristicConvergence { levels, .. }
                    if levels.is_empty() =>
                {
                    return Err(at("empty level schedule".into()))
                }
                ExperimentKind::CrossRoute { .. } if spec.dimension != 1 => return Err(at("cross-route needs d = 1".into())),
                ExperimentKind::NewtonLeibniz { alpha, u_points, .. } if !(*alpha > 0.0) || *u_points < 2 => {
                    return Err(at("need alpha > 0 and at least 2 u-points".into()))
                }
                ExperimentKind::ContinuityInX { offsets, .. } if offsets.is_empty() => return Err(at("empty offset schedule".into())),
                _ => {}
            }
        }
        Ok(spec)
    }
}

/// Result of [`run`].
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub reports: Vec<ExperimentReport>,
    pub files: Vec<PathBuf>,
}

impl RunOutcome {
    /// `(experiment index, kind, check name)` of every failed hard check.
    pub fn hard_failures(&self) -> Vec<(usize, String, String)> {
        self.reports
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.failed_hard_checks().into_iter().map(move |c| (i, r.experiment.clone(), c.name.clone())))
            .collect()
    }
}

pub fn run_experiment(s: &Scenario, e: &Experiment) -> Result<ExperimentReport> {
    let cfg = s.config(e);
    let started = Instant::now();
    let comps = |name: &str| -> Result<Vec<MeasureComponent>> { Ok(s.measure(name)?.spec().total_variation()) };
    match &e.kind {
        ExperimentKind::FiniteDifference { .. } => finite_difference_experiment(&cfg),
        ExperimentKind::FunctionalConvergence { delta, .. } => functional_convergence_experiment(&cfg, *delta),
        ExperimentKind::FlowIncrements { .. } => flow_increment_statistics(&cfg),
        ExperimentKind::Girsanov { .. } => girsanov_experiment(&cfg),
        ExperimentKind::CrossRoute { epsilon, h, n, k } => {
            let routes = [Route::LocalTime { epsilon: *epsilon, rule: SojournRule::BridgeExact }, Route::HApprox { h: *h }, Route::Mollified { n: *n }];
            Ok(cross_route_check(&cfg, &routes, *k)?.into_report(&cfg, started))
        }
        ExperimentKind::CharacteristicConvergence { measure, levels } => {
            let c = comps(measure)?;
            let pts = characteristic_test_points(&c, cfg.x.len());
            let mut r = characteristic_convergence_experiment(&s.name, &c, cfg.x.len(), levels, &CHARACTERISTIC_TIMES, &pts)?;
            r.seed = cfg.seed;
            Ok(r)
        }
        ExperimentKind::ContinuityInX { measure, offsets, threshold } => continuity_in_x_experiment(&cfg, &comps(measure)?, offsets, *threshold),
        ExperimentKind::FunctionalMoments { measure, orders, exponents } => functional_moments_experiment(&cfg, &comps(measure)?, orders, exponents),
        ExperimentKind::Gronwall {} => gronwall_experiment(&cfg),
        ExperimentKind::NewtonLeibniz { alpha, u_points, tolerance, factor } => newton_leibniz_experiment(&cfg, *alpha, *u_points, *tolerance, *factor),
        ExperimentKind::Kato { measure } => {
            let k = kato_classify(&s.measure(measure)?.spec(), &DEFAULT_EPSILONS)?;
            let points = k
                .epsilon_grid
                .iter()
                .zip(&k.per_epsilon_values)
                .map(|(&eps, v)| SchedulePoint { schedule_value: eps, estimate: v.unwrap_or(f64::INFINITY), std_error: 0.0, bound: None })
                .collect();
            let check = Check { name: "kato-class".into(), estimate: f64::from(u8::from(k.is_kato)), std_error: 0.0, target: 1.0, pass: k.is_kato, hard: false };
            Ok(ExperimentReport::new("kato", &s.name, cfg.seed, points, 0.0, vec![check], started))
        }
    }
}

/// Validates, runs every experiment in order and writes reports, traces and a summary.
pub fn run(s: &Scenario) -> Result<RunOutcome> {
    let spec = s.validate()?;
    let dir = s.out_dir();
    let header = s.header();
    let mut files = Vec::new();
    let mut emit = |name: String, text: String| -> Result<()> {
        let p = dir.join(name);
        io::write(&p, &text)?;
        files.push(p);
        Ok(())
    };

    let cfg = s.config(&Experiment { kind: ExperimentKind::Gronwall {}, paths: None, x: None, dt: None });
    let path = simulate_one(&spec, &cfg.x, &cfg.brownian(0)?)?;
    let y = solve_stieltjes(&ReferenceRoute::new(&spec)?.functional(&path)?, StieltjesRule::Exponential)?;
    emit("trace-flow.csv".into(), io::flow_trace_csv(&header, &s.name, &path))?;
    emit("trace-derivative.csv".into(), io::derivative_trace_csv(&header, &s.name, &y))?;

    let mut reports = Vec::new();
    for (i, e) in s.experiments.iter().enumerate() {
        let r = run_experiment(s, e)?;
        log::info!("{} {}: {:?} in {:.2}s", i, e.kind.name(), r.verdict, r.runtime_secs);
        emit(format!("{i:02}-{}.jsonl", e.kind.name()), io::report_to_jsonl(&header, &r)?)?;
        reports.push(r);
    }
    emit("summary.csv".into(), io::summary_csv(&header, &reports))?;
    Ok(RunOutcome { reports, files })
}
