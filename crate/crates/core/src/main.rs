use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use netdmd::bench::{export, run_sweep, Algorithm, Format, SweepConfig};
use netdmd::dmdcore::{dmd_exact, dmd_modes, dmd_reduced, dmdc_exact, dmdc_reduced, ModelDocument};
use netdmd::netdmdc::{network_dmdc_exact, network_dmdc_reduced};
use netdmd::numkernel::{from_rows, DEFAULT_RCOND};
use netdmd::sysmodel::{
    random_inputs, random_state, seeded_rng, GeneratorConfig, Interval, LinearNetworkSystem,
    TrajectoryData, Vector,
};
use netdmd::{Error, Matrix, NetworkTopology, Result, TruncationRule};

#[derive(Parser)]
#[command(
    name = "netdmd",
    version,
    about = "DMD, DMDc and network DMDc for linear networked systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random linear network system (JSON).
    GenNetwork {
        #[arg(long, value_enum)]
        family: FamilyArg,
        /// Number of state vertices.
        #[arg(long)]
        n: usize,
        /// Circular only: drive every k-th state vertex with an input.
        #[arg(long)]
        input_period: Option<usize>,
        /// Erdős–Rényi only: edge probability.
        #[arg(long, default_value_t = 0.05)]
        p: f64,
        #[arg(long, value_parser = parse_interval, default_value = "-1,1")]
        coeff_range: Interval,
        #[arg(long, value_parser = parse_interval, default_value = "-10,10")]
        input_range: Interval,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Simulate a system and write the trajectory CSV.
    Simulate {
        #[arg(long)]
        system: PathBuf,
        /// Number of snapshot triples. Defaults to the width of --inputs.
        #[arg(long)]
        m: Option<usize>,
        /// Initial state as comma-separated values; random when absent.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
        /// JSON file with the input matrix as a list of rows; random when absent.
        #[arg(long)]
        inputs: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_parser = parse_interval, default_value = "-1,1")]
        initial_range: Interval,
        #[arg(long, value_parser = parse_interval, default_value = "-10,10")]
        input_range: Interval,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Identify a model from a trajectory CSV (JSON output).
    Identify {
        #[arg(long)]
        trajectory: PathBuf,
        /// Topology (or system) JSON; required for network-dmdc.
        #[arg(long)]
        topology: Option<PathBuf>,
        #[arg(long, value_parser = parse_algorithm)]
        algorithm: Algorithm,
        /// Use the reduced-order (two-SVD) variant.
        #[arg(long)]
        reduced: bool,
        #[arg(long, default_value_t = DEFAULT_RCOND)]
        rcond: f64,
        /// `machine`, `rank:<r>` or `relative:<tau>`.
        #[arg(long, value_parser = parse_truncation, default_value = "machine")]
        truncation: TruncationRule,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run a recovery-error sweep from a JSON config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Output file; `.json` selects JSON, anything else CSV. Stdout CSV when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Check a topology JSON and list its violations.
    Validate {
        #[arg(long)]
        topology: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Circular,
    ErdosRenyi,
}

fn parse_interval(s: &str) -> std::result::Result<Interval, String> {
    let (lo, hi) = s.split_once(',').ok_or("expected `lo,hi`")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{e}"))?;
    Ok(Interval(lo, hi))
}

fn parse_algorithm(s: &str) -> std::result::Result<Algorithm, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_truncation(s: &str) -> std::result::Result<TruncationRule, String> {
    let rule = match s.split_once(':') {
        None if s == "machine" => TruncationRule::MachineDefault,
        Some(("rank", r)) => TruncationRule::FixedRank(r.parse().map_err(|e| format!("{e}"))?),
        Some(("relative", t)) => {
            TruncationRule::RelativeThreshold(t.parse().map_err(|e| format!("{e}"))?)
        }
        _ => return Err("expected `machine`, `rank:<r>` or `relative:<tau>`".into()),
    };
    rule.validate().map_err(|e| e.to_string())?;
    Ok(rule)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(path) => fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "{text}").map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn gen_network(
    family: FamilyArg,
    n: usize,
    input_period: Option<usize>,
    p: f64,
    coeff_range: Interval,
    input_range: Interval,
    seed: u64,
) -> Result<LinearNetworkSystem> {
    let mut cfg = match family {
        FamilyArg::Circular => GeneratorConfig::circular(n, input_period),
        FamilyArg::ErdosRenyi => GeneratorConfig::erdos_renyi(n, p),
    };
    cfg.coeff_range = coeff_range;
    cfg.input_range = input_range;
    netdmd::sysmodel::generate(&cfg.with_seed(seed))
}

fn simulate(
    system: &Path,
    m: Option<usize>,
    x0: Option<Vec<f64>>,
    inputs: Option<&Path>,
    seed: u64,
    initial_range: Interval,
    input_range: Interval,
) -> Result<TrajectoryData> {
    let sys = LinearNetworkSystem::from_json(&read(system)?)?;
    initial_range.validate("initial_range")?;
    input_range.validate("input_range")?;
    let mut rng = seeded_rng(seed);
    let x0 = match x0 {
        Some(v) => Vector::from_vec(v),
        None => random_state(sys.state_dim(), initial_range, &mut rng),
    };
    let inputs: Matrix = match inputs {
        Some(path) => {
            let rows: Vec<Vec<f64>> = serde_json::from_str(&read(path)?)?;
            let u = from_rows(&rows)?;
            match m {
                // `[]` carries no width, so an input-free system needs --m.
                _ if u.nrows() == 0 => Matrix::zeros(
                    0,
                    m.ok_or_else(|| {
                        Error::BadConfig("give --m for a system without inputs".into())
                    })?,
                ),
                Some(m) if m > u.ncols() => {
                    return Err(Error::DimensionMismatch(format!(
                        "--m {m} exceeds the {} input columns",
                        u.ncols()
                    )))
                }
                Some(m) => u.columns(0, m).into_owned(),
                None => u,
            }
        }
        None => {
            let m = m.ok_or_else(|| Error::BadConfig("give --m or --inputs".into()))?;
            random_inputs(sys.input_dim(), m, input_range, &mut rng)
        }
    };
    sys.simulate(&x0, &inputs)
}

fn identify(
    trajectory: &Path,
    topology: Option<&Path>,
    algorithm: Algorithm,
    reduced: bool,
    rcond: f64,
    rule: TruncationRule,
) -> Result<String> {
    let file = fs::File::open(trajectory).map_err(|e| Error::io(trajectory, e))?;
    let traj = TrajectoryData::read_csv(std::io::BufReader::new(file))?;
    let doc = match (algorithm, reduced) {
        (Algorithm::Dmd, false) => {
            let m = dmd_exact(&traj.z, &traj.y, rcond)?;
            serde_json::to_string(&ModelDocument::from_exact(&m, &dmd_modes(&m)?))?
        }
        (Algorithm::Dmdc, false) => {
            let m = dmdc_exact(&traj.z, &traj.y, &traj.gamma, rcond)?;
            serde_json::to_string(&ModelDocument::from_exact(&m, &dmd_modes(&m)?))?
        }
        (Algorithm::Dmd, true) => {
            let (m, modes) = dmd_reduced(&traj.z, &traj.y, rule)?;
            serde_json::to_string(&ModelDocument::from_reduced(&m, &modes))?
        }
        (Algorithm::Dmdc, true) => {
            let (m, modes) = dmdc_reduced(&traj.z, &traj.y, &traj.gamma, rule, rule)?;
            serde_json::to_string(&ModelDocument::from_reduced(&m, &modes))?
        }
        (Algorithm::NetworkDmdc, reduced) => {
            let path =
                topology.ok_or_else(|| Error::BadConfig("network_dmdc needs --topology".into()))?;
            let t = NetworkTopology::from_json(&read(path)?)?;
            if reduced {
                network_dmdc_reduced(&t, &traj, rule, rule)?.to_json()
            } else {
                network_dmdc_exact(&t, &traj, rcond)?.to_json()
            }
        }
    };
    Ok(doc)
}

fn sweep(config: &Path, output: Option<&Path>) -> Result<()> {
    let cfg = SweepConfig::from_json(&read(config)?)?;
    let result = run_sweep(&cfg)?;
    for agg in &result.aggregates {
        let mean = agg
            .mean_error
            .map_or("-".to_string(), |e| format!("{e:.3e}"));
        eprintln!(
            "m={:<4} {:<13} mean_error={mean} failures={}",
            agg.m, agg.algorithm, agg.failures
        );
    }
    match output {
        Some(path) => export(&result, Format::from_path(path), path),
        None => result.write_csv(std::io::stdout().lock()),
    }
}

/// Violations are printed as JSON; returns whether the topology is valid.
fn validate(topology: &Path) -> Result<bool> {
    let value: serde_json::Value = serde_json::from_str(&read(topology)?)?;
    let t: NetworkTopology =
        serde_json::from_value(value).map_err(|e| Error::InvalidTopology(e.to_string()))?;
    let violations = t.validate();
    emit(None, &serde_json::to_string_pretty(&violations)?)?;
    for v in &violations {
        eprintln!("{v}");
    }
    Ok(violations.is_empty())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::GenNetwork {
            family,
            n,
            input_period,
            p,
            coeff_range,
            input_range,
            seed,
            output,
        } => {
            let sys = gen_network(family, n, input_period, p, coeff_range, input_range, seed)?;
            emit(output.as_deref(), &sys.to_json())?;
        }
        Command::Simulate {
            system,
            m,
            x0,
            inputs,
            seed,
            initial_range,
            input_range,
            output,
        } => {
            let traj = simulate(
                &system,
                m,
                x0,
                inputs.as_deref(),
                seed,
                initial_range,
                input_range,
            )?;
            match output {
                Some(path) => {
                    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
                    traj.write_csv(std::io::BufWriter::new(file))?;
                }
                None => traj.write_csv(std::io::stdout().lock())?,
            }
        }
        Command::Identify {
            trajectory,
            topology,
            algorithm,
            reduced,
            rcond,
            truncation,
            output,
        } => {
            let doc = identify(
                &trajectory,
                topology.as_deref(),
                algorithm,
                reduced,
                rcond,
                truncation,
            )?;
            emit(output.as_deref(), &doc)?;
        }
        Command::Sweep { config, output } => sweep(&config, output.as_deref())?,
        Command::Validate { topology } => return validate(&topology),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
