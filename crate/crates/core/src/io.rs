//! On-disk formats: JSON-lines reports, plot-data and trace CSVs.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::derivative::DerivativePath;
use crate::error::{Error, Result};
use crate::harness::{Check, ExperimentReport, SchedulePoint};
use crate::sde::FlowPath;
use crate::stats::Verdict;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// `f64` fields that may be non-finite: numbers when finite, else `"inf"`, `"-inf"` or `"NaN"`.
pub mod lossless {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(|_| serde::de::Error::custom(format!("not a float: {t}"))),
        }
    }

    pub mod option {
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
            match v {
                Some(v) => super::serialize(v, s),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
            #[derive(Deserialize)]
            struct W(#[serde(with = "super")] f64);
            Ok(Option::<W>::deserialize(d)?.map(|w| w.0))
        }
    }
}

/// Provenance stamped on every output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub scenario: String,
    pub seed: u64,
    pub version: String,
}

impl Header {
    pub fn new(scenario: &str, seed: u64) -> Self {
        Header { scenario: scenario.into(), seed, version: VERSION.into() }
    }

    pub fn comment(&self) -> String {
        format!("# scenario={} seed={} version={}", self.scenario, self.seed, self.version)
    }
}

/// First line of a report file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportMeta {
    #[serde(flatten)]
    pub header: Header,
    pub experiment: String,
    pub label: String,
    #[serde(with = "lossless")]
    pub floor: f64,
    pub verdict: Verdict,
    pub checks: Vec<Check>,
}

pub fn report_to_jsonl(header: &Header, report: &ExperimentReport) -> Result<String> {
    let meta = ReportMeta {
        header: header.clone(),
        experiment: report.experiment.clone(),
        label: report.label.clone(),
        floor: report.floor,
        verdict: report.verdict,
        checks: report.checks.clone(),
    };
    let mut out = json_line(&meta)?;
    for p in &report.points {
        out.push_str(&json_line(p)?);
    }
    Ok(out)
}

fn json_line<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string(v).map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Inverse of [`report_to_jsonl`]; an empty input has no meta and no points.
pub fn report_from_jsonl(text: &str) -> Result<(Option<ReportMeta>, Vec<SchedulePoint>)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let meta = match lines.next() {
        None => return Ok((None, Vec::new())),
        Some((i, l)) => serde_json::from_str(l).map_err(|e| Error::Scenario(format!("report line {}: {e}", i + 1)))?,
    };
    let points = lines
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Scenario(format!("report line {}: {e}", i + 1))))
        .collect::<Result<_>>()?;
    Ok((Some(meta), points))
}

pub const PLOT_COLUMNS: &str = "schedule_value,estimate,std_error,bound";

/// Tidy CSV, shortest round-trip float repr, empty cell for a missing bound.
pub fn plot_csv(header: &Header, points: &[SchedulePoint]) -> String {
    let mut s = format!("{}\n{PLOT_COLUMNS}\n", header.comment());
    for p in points {
        let bound = p.bound.map(|b| b.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{}", p.schedule_value, p.estimate, p.std_error, bound);
    }
    s
}

pub fn parse_plot_csv(text: &str) -> Result<Vec<SchedulePoint>> {
    let mut rows = text.lines().enumerate().filter(|(_, l)| !l.starts_with('#') && !l.is_empty());
    match rows.next() {
        Some((_, h)) if h == PLOT_COLUMNS => {}
        _ => return Err(Error::Scenario(format!("plot csv: expected header `{PLOT_COLUMNS}`"))),
    }
    rows.map(|(i, l)| {
        let bad = |what: &str| Error::Scenario(format!("plot csv line {}: {what}", i + 1));
        let cells: Vec<&str> = l.split(',').collect();
        if cells.len() != 4 {
            return Err(bad("expected 4 cells"));
        }
        let num = |c: &str| c.parse::<f64>().map_err(|_| bad(&format!("not a float: {c}")));
        Ok(SchedulePoint {
            schedule_value: num(cells[0])?,
            estimate: num(cells[1])?,
            std_error: num(cells[2])?,
            bound: if cells[3].is_empty() { None } else { Some(num(cells[3])?) },
        })
    })
    .collect()
}

/// Header line for trace files.
pub fn trace_comment(header: &Header, d: usize, t_end: f64, dt: f64, label: &str) -> String {
    format!("{} d={d} T={t_end} dt={dt} label={label}", header.comment())
}

/// Rows `(t, state)`.
pub fn flow_trace_csv(header: &Header, label: &str, path: &FlowPath) -> String {
    let d = path.dimension();
    let mut s = trace_comment(header, d, path.grid.t_end, path.grid.dt, label);
    s.push_str("\nt");
    for i in 0..d {
        let _ = write!(s, ",x{i}");
    }
    s.push('\n');
    let mut state = vec![0.0; d];
    for k in 0..=path.steps() {
        path.state_into(k, &mut state);
        let _ = write!(s, "{}", path.grid.time(k));
        for v in &state {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

/// Rows `(t, vec Y, Var A)`, `vec` row-major.
pub fn derivative_trace_csv(header: &Header, label: &str, y: &DerivativePath) -> String {
    let d = y.dimension;
    let mut s = trace_comment(header, d, y.grid.t_end, y.grid.dt, label);
    s.push_str("\nt");
    for i in 0..d {
        for j in 0..d {
            let _ = write!(s, ",y{i}{j}");
        }
    }
    s.push_str(",var_a\n");
    for row in y.rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

/// One line per experiment.
pub fn summary_csv(header: &Header, reports: &[ExperimentReport]) -> String {
    let mut s = format!("{}\nindex,experiment,label,verdict,points,failed_checks\n", header.comment());
    for (i, r) in reports.iter().enumerate() {
        let failed: Vec<&str> = r.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        let verdict = serde_json::to_value(r.verdict).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        let _ = writeln!(s, "{i},{},{},{verdict},{},{}", r.experiment, r.label, r.points.len(), failed.join(";"));
    }
    s
}

pub fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}
