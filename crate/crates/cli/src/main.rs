use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use qestim::estimability::{DEFAULT_RANK_TOL, DEFAULT_SPAN_TOL};
use qestim::io::{
    analyze_channel, analyze_model, histogram_csv, ChannelFile, CycleFile, ModelFile, Output,
    Provenance, PtmFile, ScenarioFile, SimulationReport,
};
use qestim::learnability::learnability_report;
use qestim::pauli::symmetric_clifford_twirl;
use qestim::sensing::{estimate, sample};
use qestim::{Error, Tolerances};

#[derive(Parser)]
#[command(
    name = "qestim",
    version,
    about = "Estimability, bounds and learnability for noisy quantum models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fisher matrix, bounds and estimability verdicts for a state model.
    AnalyzeState(AnalyzeArgs),
    /// Per-parameter learnability of a channel from its Choi state.
    AnalyzeChannel(AnalyzeArgs),
    /// Learnability of a gate cycle under SPAM from depth-resolved data.
    CycleBench(CycleArgs),
    /// Symmetric Clifford twirl of a transfer matrix.
    Twirl(IoArgs),
    /// Sample an estimation scenario and report bias and variance.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct IoArgs {
    input: PathBuf,
    /// Write here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct TolArgs {
    /// Span-test tolerance.
    #[arg(long, default_value_t = DEFAULT_SPAN_TOL)]
    tol: f64,
    /// Relative eigenvalue cutoff for ranks and pseudoinverses.
    #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
    rank_tol: f64,
}

impl TolArgs {
    fn tolerances(&self) -> Result<Tolerances, Failure> {
        for (name, v) in [("--tol", self.tol), ("--rank-tol", self.rank_tol)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Failure::input(format!("{name} must be positive")));
            }
        }
        Ok(Tolerances {
            rank: self.rank_tol,
            span: self.tol,
        })
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    io: IoArgs,
    #[command(flatten)]
    tol: TolArgs,
    /// Report only this parameter.
    #[arg(long)]
    param: Option<String>,
    /// Override a fiducial value, as NAME=VALUE. Repeatable.
    #[arg(long = "theta0", value_parser = parse_assignment)]
    theta0: Vec<(String, f64)>,
    /// Exit with status 2 if a reported parameter fails its test.
    #[arg(long, visible_alias = "require-learnable")]
    require_estimable: bool,
}

#[derive(Args)]
struct CycleArgs {
    #[command(flatten)]
    io: IoArgs,
    #[command(flatten)]
    tol: TolArgs,
    /// Sequence depths, as an inclusive range `0..8` or a list `0,1,2,4`.
    #[arg(long, value_parser = parse_depths)]
    depths: Option<Depths>,
    /// Override a fiducial value, as NAME=VALUE. Repeatable.
    #[arg(long = "theta0", value_parser = parse_assignment)]
    theta0: Vec<(String, f64)>,
    /// Exit with status 2 if any parameter is unlearnable.
    #[arg(long)]
    require_learnable: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    io: IoArgs,
    #[arg(long, default_value_t = 10_000)]
    shots: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Histogram CSV path; defaults to the report path with a `.csv`
    /// extension when `-o` is given.
    #[arg(long)]
    histogram: Option<PathBuf>,
}

#[derive(Clone)]
struct Depths(Vec<usize>);

fn parse_assignment(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected NAME=VALUE, got {s:?}"))?;
    let v: f64 = v.trim().parse().map_err(|e| format!("{v:?}: {e}"))?;
    Ok((k.trim().to_string(), v))
}

fn parse_depths(s: &str) -> Result<Depths, String> {
    let num = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}"));
    let v = if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
        if a > b {
            return Err(format!("empty depth range {s:?}"));
        }
        (a..=b).collect()
    } else {
        s.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    Ok(Depths(v))
}

/// Error reported on stderr as one JSON object; `code` is the exit status.
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
    line: Option<usize>,
    column: Option<usize>,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            kind: "invalid_input",
            message: message.into(),
            line: None,
            column: None,
        }
    }

    fn verdict(message: String) -> Self {
        Self {
            code: 2,
            kind: "verdict",
            message,
            line: None,
            column: None,
        }
    }

    fn report(&self) {
        let mut e = json!({ "kind": self.kind, "message": self.message });
        if let (Some(l), Some(c)) = (self.line, self.column) {
            e["line"] = json!(l);
            e["column"] = json!(c);
        }
        eprintln!("{}", json!({ "error": e, "exit_code": self.code }));
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::InvalidInput(_) => (1, "invalid_input"),
            Error::InvalidModel(_) => (1, "invalid_model"),
            Error::DomainError(_) => (1, "domain_error"),
            Error::InvalidChannel(_) => (1, "invalid_channel"),
            Error::InvalidScenario(_) => (1, "invalid_scenario"),
            Error::Unsupported(_) => (1, "unsupported"),
            Error::NotEstimable(_) => (2, "not_estimable"),
            Error::Numerical(_) => (3, "numerical"),
        };
        Self {
            code,
            kind,
            message: e.to_string(),
            line: None,
            column: None,
        }
    }
}

struct Input {
    bytes: Vec<u8>,
    hash: String,
}

impl Input {
    fn read(path: &Path) -> Result<Self, Failure> {
        let bytes =
            fs::read(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        let hash = Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        Ok(Self { bytes, hash })
    }

    fn parse<T: serde::de::DeserializeOwned>(&self) -> Result<T, Failure> {
        // serde_json reports line 0 when the position is unknown, as for
        // schema errors inside tagged enums
        serde_json::from_slice(&self.bytes).map_err(|e| Failure {
            code: 1,
            kind: "parse_error",
            message: e.to_string(),
            line: (e.line() > 0).then(|| e.line()),
            column: (e.line() > 0).then(|| e.column()),
        })
    }

    fn provenance(&self, tolerances: Tolerances) -> Provenance {
        Provenance {
            tool: "qestim".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            input_hash: format!("sha256:{}", self.hash),
            tolerances,
        }
    }
}

/// Writes to a temp file in the target directory, then renames.
fn emit(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    let io_err = |e: std::io::Error| Failure::input(format!("writing output: {e}"));
    let Some(path) = path else {
        return std::io::stdout().write_all(text.as_bytes()).map_err(io_err);
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(text.as_bytes()).map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Failure {
        code: 3,
        kind: "numerical",
        message: e.to_string(),
        line: None,
        column: None,
    })?;
    s.push('\n');
    Ok(s)
}

fn emit_report<T: Serialize>(
    out: Option<&Path>,
    provenance: &Provenance,
    body: &T,
) -> Result<(), Failure> {
    emit(out, &to_json(&Output { provenance, body })?)
}

fn require(enabled: bool, failing: Vec<&str>, what: &str) -> Result<(), Failure> {
    if enabled && !failing.is_empty() {
        return Err(Failure::verdict(format!("{what}: {}", failing.join(", "))));
    }
    Ok(())
}

fn analyze_state(a: &AnalyzeArgs) -> Result<(), Failure> {
    let tol = a.tol.tolerances()?;
    let input = Input::read(&a.io.input)?;
    let mut file: ModelFile = input.parse()?;
    match &mut file {
        ModelFile::Builtin { theta0, .. } | ModelFile::Explicit { theta0, .. } => {
            theta0.extend(a.theta0.iter().cloned())
        }
    }
    let em = file.evaluate()?;
    let report = analyze_model(&em, tol, a.param.as_deref())?;
    emit_report(a.io.output.as_deref(), &input.provenance(tol), &report)?;
    let failing = report
        .parameters
        .iter()
        .filter(|p| !p.estimable)
        .map(|p| p.parameter.as_str())
        .collect();
    require(a.require_estimable, failing, "not estimable")
}

fn analyze_channel_cmd(a: &AnalyzeArgs) -> Result<(), Failure> {
    let tol = a.tol.tolerances()?;
    let input = Input::read(&a.io.input)?;
    let mut file: ChannelFile = input.parse()?;
    match &mut file {
        ChannelFile::Builtin { theta0, .. } | ChannelFile::Explicit { theta0, .. } => {
            theta0.extend(a.theta0.iter().cloned())
        }
    }
    let (ch, theta) = file.resolve()?;
    let report = analyze_channel(&ch, &theta, tol, a.param.as_deref())?;
    emit_report(a.io.output.as_deref(), &input.provenance(tol), &report)?;
    let failing = report
        .parameters
        .iter()
        .filter(|p| !p.estimable)
        .map(|p| p.parameter.as_str())
        .collect();
    require(a.require_estimable, failing, "not learnable")
}

fn cycle_bench(a: &CycleArgs) -> Result<(), Failure> {
    let tol = a.tol.tolerances()?;
    let input = Input::read(&a.io.input)?;
    let mut file: CycleFile = input.parse()?;
    file.parameters.extend(a.theta0.iter().cloned());
    if let Some(Depths(d)) = &a.depths {
        file.depths = Some(d.clone());
    }
    let (m, theta) = file.resolve()?;
    let report = learnability_report(&m, &theta, tol)?;
    emit_report(a.io.output.as_deref(), &input.provenance(tol), &report)?;
    require(a.require_learnable, report.unlearnable(), "not learnable")
}

fn twirl(a: &IoArgs) -> Result<(), Failure> {
    let input = Input::read(&a.input)?;
    let file: PtmFile = input.parse()?;
    let mut out = PtmFile::from_ptm(&symmetric_clifford_twirl(&file.to_ptm()?));
    out.provenance = Some(input.provenance(Tolerances::default()));
    emit(a.output.as_deref(), &to_json(&out)?)
}

fn simulate(a: &SimulateArgs) -> Result<(), Failure> {
    let input = Input::read(&a.io.input)?;
    let file: ScenarioFile = input.parse()?;
    let sc = file.scenario()?;
    let rec = sample(&sc, a.shots, a.seed)?;
    let report = SimulationReport::new(&sc, estimate(&rec, &sc)?);
    let out = a.io.output.as_deref();
    let histogram = a
        .histogram
        .clone()
        .or_else(|| out.map(|p| p.with_extension("csv")));
    if histogram.as_deref().is_some_and(|h| Some(h) == out) {
        return Err(Failure::input("histogram path equals the report path"));
    }
    emit_report(out, &input.provenance(Tolerances::default()), &report)?;
    if let Some(h) = histogram {
        emit(Some(&h), &histogram_csv(&sc, &rec))?;
    }
    Ok(())
}

fn init_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("QESTIM_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| Failure::input(format!("QESTIM_THREADS must be a count, got {v:?}")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::input(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    init_threads()?;
    match &cli.command {
        Command::AnalyzeState(a) => analyze_state(a),
        Command::AnalyzeChannel(a) => analyze_channel_cmd(a),
        Command::CycleBench(a) => cycle_bench(a),
        Command::Twirl(a) => twirl(a),
        Command::Simulate(a) => simulate(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let f = Failure {
                code: 1,
                kind: "usage",
                message: e.to_string().trim_end().to_string(),
                line: None,
                column: None,
            };
            f.report();
            return ExitCode::from(f.code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            f.report();
            ExitCode::from(f.code)
        }
    }
}
