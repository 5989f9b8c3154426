use clap::{Args, Parser, Subcommand, ValueEnum};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use epqp::experiments::{
    cell_text, run_experiment, BoundsJob, DiamondJob, Experiment, ExperimentConfig, ExperimentReport, Format,
    HolevoJob, HolevoKind, NetJob, ReplicateJob, SimulateJob,
};
use epqp::nets::{gc_net, gu_net, NetKind};
use epqp::channels::EnergyBudget;
use epqp::Error;

#[derive(Parser, Debug)]
#[command(name = "epqp", version, about = "Energy-limited programmable processor experiments on truncated Fock spaces")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Seed for every stochastic step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Fock cutoff D (occupations 0..D-1).
    #[arg(long = "D", global = true, default_value_t = 16)]
    cutoff: usize,
    /// Optimizer restarts for distance estimates.
    #[arg(long, global = true, default_value_t = 32)]
    restarts: usize,
    #[arg(long = "max-iter", global = true, default_value_t = 500)]
    max_iter: usize,
    #[arg(long, global = true, value_enum, default_value_t = OutFormat::Json)]
    format: OutFormat,
    /// Output file, written atomically; stdout when absent.
    #[arg(long = "out", global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OutFormat {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate a closed-form bound over a parameter sweep.
    Bounds(BoundsArgs),
    /// Build an ε-net and check cover and distances on random targets.
    Net(NetArgs),
    /// Lift a PET over a rotation net and measure it on random rotations.
    Simulate(SimulateArgs),
    /// Replicate an approximate rotation processor over ℓ copies.
    Replicate(ReplicateArgs),
    /// Energy-constrained diamond-distance lower bound between two channels.
    Diamond(DiamondArgs),
    /// Entropy and Holevo-information identities.
    Holevo(HolevoArgs),
    /// Re-run the config embedded in a previous output (or a bare config file).
    Replay {
        file: PathBuf,
    },
}

#[derive(Args, Debug)]
struct BoundsArgs {
    /// gc-upper, rotation-lower, attenuator-lower, gu-upper, multimode-lower or info-chain.
    #[arg(long, conflicts_with = "table", required_unless_present = "table")]
    formula: Option<String>,
    /// Table of finite-dimensional bounds: upper or lower.
    #[arg(long, requires = "row")]
    table: Option<String>,
    #[arg(long)]
    row: Option<u8>,
    #[arg(long, default_value = "finite")]
    column: String,
    #[arg(long = "E", value_delimiter = ',')]
    energy: Vec<f64>,
    #[arg(long = "eps", value_delimiter = ',')]
    epsilon: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    delta: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    beta: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    gamma: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    d: Vec<f64>,
    #[arg(long = "M", value_delimiter = ',')]
    modes: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    chi: Vec<f64>,
    /// Constant C (net size, or the third lower row).
    #[arg(long = "C", value_delimiter = ',')]
    c: Vec<f64>,
    #[arg(long = "C-tilde", value_delimiter = ',')]
    c_tilde: Vec<f64>,
    #[arg(long = "K", value_delimiter = ',')]
    k: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    theta: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    exponent: Vec<f64>,
    /// E(d); derived from the number operator when absent.
    #[arg(long = "E-d", value_delimiter = ',')]
    energy_of_d: Vec<f64>,
}

#[derive(Args, Debug)]
struct NetArgs {
    /// gc (gauge-covariant) or gu (Gaussian unitary).
    #[arg(long)]
    kind: String,
    /// Resolutions: ε_λ,ε_φ,ε_μ or ε_S,ε_d.
    #[arg(long = "res", value_delimiter = ',', required = true)]
    resolutions: Vec<f64>,
    #[arg(long = "E", default_value_t = 1.0)]
    energy: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    #[arg(long = "M", default_value_t = 1)]
    modes: usize,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    measured: usize,
    /// Also write the full net as JSON.
    #[arg(long = "emit-net")]
    emit_net: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, default_value_t = 8)]
    d: usize,
    #[arg(long, default_value_t = 8)]
    points: usize,
    #[arg(long = "E", default_value_t = 1.0)]
    energy: f64,
    #[arg(long, default_value_t = 10)]
    targets: usize,
}

#[derive(Args, Debug)]
struct ReplicateArgs {
    #[arg(long)]
    phi: f64,
    #[arg(long)]
    ell: usize,
    #[arg(long = "E", default_value_t = 1.0)]
    energy: f64,
    #[arg(long = "eps-proc")]
    eps_proc: f64,
    /// Cutoff of each replicated copy.
    #[arg(long = "D-copy", default_value_t = 3)]
    copy_cutoff: usize,
}

#[derive(Args, Debug)]
struct DiamondArgs {
    #[arg(long)]
    ch1: String,
    #[arg(long)]
    ch2: String,
    /// Energy bound; unconstrained when absent.
    #[arg(long = "E")]
    energy: Option<f64>,
}

#[derive(Args, Debug)]
struct HolevoArgs {
    /// attenuator, phase-orbit or thermal.
    #[arg(long)]
    experiment: String,
    #[arg(long = "E")]
    energy: f64,
    #[arg(long, default_value_t = 0.0)]
    sigma2: f64,
    #[arg(long, default_value_t = 0)]
    points: usize,
    #[arg(long, default_value_t = 1)]
    copies: usize,
    #[arg(long, value_delimiter = ',')]
    profile: Vec<f64>,
}

fn bounds_job(a: &BoundsArgs) -> Result<BoundsJob, Error> {
    let formula = match (&a.formula, &a.table) {
        (Some(f), _) => f.clone(),
        (None, Some(t)) => format!("table-{t}-{}-{}", a.row.unwrap_or(0), a.column),
        (None, None) => return Err(Error::Domain("either --formula or --table is required".into())),
    };
    let mut params = BTreeMap::new();
    for (k, v) in [
        ("energy", &a.energy),
        ("epsilon", &a.epsilon),
        ("delta", &a.delta),
        ("alpha", &a.alpha),
        ("beta", &a.beta),
        ("gamma", &a.gamma),
        ("d", &a.d),
        ("modes", &a.modes),
        ("chi", &a.chi),
        ("c", &a.c),
        ("c_tilde", &a.c_tilde),
        ("k", &a.k),
        ("theta", &a.theta),
        ("exponent", &a.exponent),
        ("energy_of_d", &a.energy_of_d),
    ] {
        if !v.is_empty() {
            params.insert(k.to_string(), v.clone());
        }
    }
    Ok(BoundsJob { formula, params })
}

fn net_kind(s: &str) -> Result<NetKind, Error> {
    match s {
        "gc" | "gauge-covariant" => Ok(NetKind::GaugeCovariant),
        "gu" | "gaussian-unitary" => Ok(NetKind::GaussianUnitary),
        other => Err(Error::Domain(format!("unknown net kind '{other}' (gc or gu)"))),
    }
}

fn holevo_kind(s: &str) -> Result<HolevoKind, Error> {
    match s {
        "attenuator" => Ok(HolevoKind::Attenuator),
        "phase-orbit" => Ok(HolevoKind::PhaseOrbit),
        "thermal" => Ok(HolevoKind::Thermal),
        other => Err(Error::Domain(format!("unknown holevo experiment '{other}'"))),
    }
}

/// Writes through a temporary file in the target directory and renames it into place.
fn write_atomic(path: &Path, text: &str) -> Result<(), Error> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(text.as_bytes())?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn render(report: &ExperimentReport) -> Result<String, Error> {
    match report.config.format {
        Format::Json => report.to_json(),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&report.columns).map_err(csv_err)?;
            for row in &report.rows {
                w.write_record(row.iter().map(cell_text)).map_err(csv_err)?;
            }
            let body = String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
                .expect("CSV output is UTF-8");
            let mut head = format!("# config: {}\n", serde_json::to_string(&report.config)?);
            for (k, v) in &report.summary {
                head.push_str(&format!("# {k}: {v}\n"));
            }
            if let Some(p) = report.pass {
                head.push_str(&format!("# pass: {p}\n"));
            }
            Ok(head + &body)
        }
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Config embedded in a JSON report, a CSV header line, or a bare config file.
fn load_config(path: &Path) -> Result<ExperimentConfig, Error> {
    let text = std::fs::read_to_string(path)?;
    if let Some(line) = text.lines().next().and_then(|l| l.strip_prefix("# config: ")) {
        return Ok(serde_json::from_str(line)?);
    }
    let value: serde_json::Value = serde_json::from_str(&text)?;
    match value.get("config") {
        Some(c) => Ok(serde_json::from_value(c.clone())?),
        None => Ok(serde_json::from_value(value)?),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let c = &cli.common;
    let experiment = match &cli.command {
        Command::Replay { file } => {
            let config = load_config(file)?;
            return emit(&config, c.out.as_deref());
        }
        Command::Bounds(a) => Experiment::Bounds(bounds_job(a)?),
        Command::Net(a) => {
            let kind = net_kind(&a.kind)?;
            if let Some(path) = &a.emit_net {
                let budget = EnergyBudget::new(a.energy, a.alpha, a.beta)?;
                let net = match (kind, a.resolutions.as_slice()) {
                    (NetKind::GaugeCovariant, [l, p, m]) => gc_net(*l, *p, *m, &budget)?,
                    (NetKind::GaussianUnitary, [s, d]) => gu_net(*s, *d, &budget, a.modes)?,
                    _ => return Err(Error::Domain("wrong number of resolutions for this net kind".into())),
                };
                write_atomic(path, &(serde_json::to_string_pretty(&net)? + "\n"))?;
            }
            Experiment::Net(NetJob {
                kind,
                resolutions: a.resolutions.clone(),
                energy: a.energy,
                alpha: a.alpha,
                beta: a.beta,
                modes: a.modes,
                samples: a.samples,
                measured: a.measured,
            })
        }
        Command::Simulate(a) => Experiment::Simulate(SimulateJob { d: a.d, points: a.points, energy: a.energy, targets: a.targets }),
        Command::Replicate(a) => Experiment::Replicate(ReplicateJob {
            phi: a.phi,
            copies: a.ell,
            energy: a.energy,
            eps_proc: a.eps_proc,
            copy_cutoff: a.copy_cutoff,
        }),
        Command::Diamond(a) => Experiment::Diamond(DiamondJob { ch1: a.ch1.clone(), ch2: a.ch2.clone(), energy: a.energy }),
        Command::Holevo(a) => Experiment::Holevo(HolevoJob {
            experiment: holevo_kind(&a.experiment)?,
            energy: a.energy,
            sigma2: a.sigma2,
            points: a.points,
            copies: a.copies,
            profile: a.profile.clone(),
        }),
    };
    let config = ExperimentConfig {
        seed: c.seed,
        cutoff: c.cutoff,
        restarts: c.restarts,
        max_iter: c.max_iter,
        format: match c.format {
            OutFormat::Json => Format::Json,
            OutFormat::Csv => Format::Csv,
        },
        output: c.out.as_ref().map(|p| p.display().to_string()),
        experiment,
    };
    emit(&config, c.out.as_deref())
}

fn emit(config: &ExperimentConfig, out: Option<&Path>) -> Result<(), Error> {
    let report = run_experiment(config)?;
    let text = render(&report)?;
    match out {
        Some(path) => write_atomic(path, &text),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    if let Some(n) = std::env::var("EPQP_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // A second initialization can only fail if a pool already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
