//! `bvflow` command line: `run`, `kato-check`, `plot-data`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::io::{self, Header};
use crate::kato::{kato_classify, KatoReport, DEFAULT_EPSILONS};
use crate::measure::{MeasureComponent, SignedMeasureSpec, SurfaceWeight};
use crate::scenario::{self, Overrides};
use crate::geometry::Region;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ASSERTION: i32 = 1;
pub const EXIT_PARSE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "bvflow", version, about = "Stochastic flows with bounded-variation drift")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Override the scenario seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    #[arg(long, global = true)]
    pub paths: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every experiment of a scenario file.
    Run { scenario: PathBuf },
    /// Classify a measure: a TOML file (`dimension`, `positive`, `negative`)
    /// or one of `atom:D`, `sphere:D`, `uniform-ball:D`.
    KatoCheck { measure: String },
    /// Convert a JSON-lines report to `schedule_value,estimate,std_error,bound`.
    PlotData { report: PathBuf },
}

enum Failure {
    Parse(String),
    Assertion(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Scenario(_) | Error::Io(_) => Failure::Parse(e.to_string()),
            other => Failure::Assertion(other.to_string()),
        }
    }
}

/// Parses arguments, runs the command and returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_PARSE } else { EXIT_OK };
        }
    };
    let pool = match cli.global.workers {
        Some(0) => {
            eprintln!("error: --workers must be positive");
            return EXIT_PARSE;
        }
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    };
    let pool = match pool {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_ASSERTION;
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(()) => EXIT_OK,
        Err(Failure::Parse(m)) => {
            eprintln!("error: {m}");
            EXIT_PARSE
        }
        Err(Failure::Assertion(m)) => {
            eprintln!("error: {m}");
            EXIT_ASSERTION
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    let g = &cli.global;
    match &cli.command {
        Command::Run { scenario } => run(scenario, g),
        Command::KatoCheck { measure } => kato_check(measure, g),
        Command::PlotData { report } => plot_data(report, g),
    }
}

fn run(path: &Path, g: &Global) -> Result<(), Failure> {
    let mut s = scenario::load(path)?;
    s.apply(&Overrides { seed: g.seed, dt: g.dt, paths: g.paths, out_dir: g.out_dir.clone() });
    s.validate()?;
    let outcome = scenario::run(&s)?;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{}", s.header().comment());
    for (i, r) in outcome.reports.iter().enumerate() {
        let verdict = serde_json::to_value(r.verdict).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        let _ = writeln!(out, "{i:02} {:<28} {verdict}", r.experiment);
    }
    let _ = writeln!(out, "wrote {} files to {}", outcome.files.len(), s.out_dir().display());
    let failed = outcome.hard_failures();
    if failed.is_empty() {
        return Ok(());
    }
    let names: Vec<String> = failed.iter().map(|(i, kind, check)| format!("{check} (experiment {i:02} {kind})")).collect();
    Err(Failure::Assertion(format!("hard assertion failed: {}", names.join(", "))))
}

/// Shorthand or TOML file.
pub fn parse_measure(arg: &str) -> Result<SignedMeasureSpec, Error> {
    if let Some((kind, d)) = arg.split_once(':') {
        if !Path::new(arg).exists() {
            let d: usize = d.parse().map_err(|_| Error::Scenario(format!("measure `{arg}`: bad dimension `{d}`")))?;
            if d == 0 {
                return Err(Error::Scenario(format!("measure `{arg}`: dimension must be positive")));
            }
            let origin = vec![0.0; d];
            let c = match kind {
                "atom" => MeasureComponent::Atom { location: origin, mass: 1.0 },
                "sphere" => MeasureComponent::SphereSurface { center: origin, radius: 1.0, weight: SurfaceWeight::Uniform { density: 1.0 } },
                "uniform-ball" => MeasureComponent::Uniform { dimension: d, density: 1.0, region: Some(Region::Ball { center: origin, radius: 1.0 }) },
                _ => return Err(Error::Scenario(format!("measure `{arg}`: unknown shorthand `{kind}` (atom, sphere, uniform-ball)"))),
            };
            return Ok(SignedMeasureSpec::nonnegative(d, vec![c]));
        }
    }
    let text = std::fs::read_to_string(arg).map_err(|e| Error::Scenario(format!("measure `{arg}`: {e}")))?;
    let m: SignedMeasureSpec = toml::from_str(&text).map_err(|e| Error::Scenario(format!("{arg}: {e}")))?;
    m.validate().map_err(|e| Error::Scenario(format!("{arg}: {e}")))?;
    Ok(m)
}

pub fn kato_table(r: &KatoReport) -> String {
    let cell = |v: &Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "inf".into());
    let mut s = format!("{}\nepsilon,local_potential\n", if r.is_kato { "KATO" } else { "NOT KATO" });
    for (e, v) in r.epsilon_grid.iter().zip(&r.per_epsilon_values) {
        s.push_str(&format!("{e},{}\n", cell(v)));
    }
    s.push_str("t,sup_characteristic\n");
    for m in &r.modulus {
        s.push_str(&format!("{},{}\n", m.t, cell(&m.sup_characteristic)));
    }
    if !r.note.is_empty() {
        s.push_str(&format!("note: {}\n", r.note));
    }
    s
}

fn kato_check(arg: &str, g: &Global) -> Result<(), Failure> {
    let m = parse_measure(arg)?;
    let r = kato_classify(&m, &DEFAULT_EPSILONS).map_err(|e| Failure::Parse(format!("measure `{arg}`: {e}")))?;
    print!("{}", kato_table(&r));
    if let Some(dir) = &g.out_dir {
        #[derive(serde::Serialize)]
        struct Out<'a> {
            #[serde(flatten)]
            header: Header,
            is_kato: bool,
            per_epsilon_values: &'a [Option<f64>],
            candidate_grid: &'a [Vec<f64>],
        }
        let out = Out { header: Header::new(arg, g.seed.unwrap_or(0)), is_kato: r.is_kato, per_epsilon_values: &r.per_epsilon_values, candidate_grid: &r.candidate_grid };
        let text = serde_json::to_string(&out).map_err(|e| Failure::Assertion(e.to_string()))? + "\n";
        io::write(&dir.join("kato.json"), &text)?;
    }
    Ok(())
}

fn plot_data(report: &Path, g: &Global) -> Result<(), Failure> {
    let text = std::fs::read_to_string(report).map_err(|e| Failure::Parse(format!("{}: {e}", report.display())))?;
    let (meta, points) = io::report_from_jsonl(&text)?;
    let header = meta.map(|m| m.header).unwrap_or_else(|| Header::new("", g.seed.unwrap_or(0)));
    let csv = io::plot_csv(&header, &points);
    match &g.out_dir {
        Some(dir) => {
            let stem = report.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
            io::write(&dir.join(format!("{stem}.csv")), &csv)?;
        }
        None => print!("{csv}"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shorthand_measures() {
        assert!(kato_classify(&parse_measure("atom:1").unwrap(), &DEFAULT_EPSILONS).unwrap().is_kato);
        assert!(!kato_classify(&parse_measure("atom:3").unwrap(), &DEFAULT_EPSILONS).unwrap().is_kato);
        assert!(kato_classify(&parse_measure("sphere:3").unwrap(), &DEFAULT_EPSILONS).unwrap().is_kato);
        assert!(parse_measure("blob:2").is_err());
        assert!(parse_measure("atom:x").is_err());
    }

    #[test]
    fn exit_codes_for_bad_arguments() {
        assert_eq!(main_with(["bvflow", "frobnicate"]), EXIT_PARSE);
        assert_eq!(main_with(["bvflow", "kato-check", "blob:1"]), EXIT_PARSE);
        assert_eq!(main_with(["bvflow", "kato-check", "atom:1", "--workers", "0"]), EXIT_PARSE);
        assert_eq!(main_with(["bvflow", "kato-check", "atom:1", "--workers", "2"]), EXIT_OK);
    }
}
