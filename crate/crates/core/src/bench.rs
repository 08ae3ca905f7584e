//! Recovery-error sweeps over simulation length.
//!
//! A sweep draws `trials` random systems, simulates each one for every
//! requested length `m` and hands the same trajectory to every algorithm.
//! The recorded quantity is `‖[A B] − [A_true B_true]‖_F`.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dmdcore::{dmd_exact, dmd_reduced, dmdc_exact, dmdc_reduced, ExactLinearModel};
use crate::netdmdc::{model_error, network_dmdc_exact, network_dmdc_reduced, IdentifiedModel};
use crate::numkernel::{Matrix, TruncationRule, DEFAULT_RCOND};
use crate::sysmodel::{
    derive_seed, generate, random_inputs, random_state, seeded_rng, GeneratorConfig, Interval,
    LinearNetworkSystem, TrajectoryData,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Dmd,
    Dmdc,
    NetworkDmdc,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Dmd, Algorithm::Dmdc, Algorithm::NetworkDmdc];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Dmd => "dmd",
            Algorithm::Dmdc => "dmdc",
            Algorithm::NetworkDmdc => "network_dmdc",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s || a.name().replace('_', "-") == s)
            .ok_or_else(|| Error::Parse(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Named {
    MaxLocalDim,
}

/// A simulation length: a fixed count, or `"max_local_dim"` for the
/// largest local subsystem dimension of each trial's network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Length {
    Fixed(usize),
    #[serde(with = "max_local_dim")]
    MaxLocalDim,
}

mod max_local_dim {
    use super::Named;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        Named::MaxLocalDim.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        Named::deserialize(d).map(|_| ())
    }
}

impl Length {
    pub fn resolve(self, system: &LinearNetworkSystem) -> Result<usize> {
        match self {
            Length::Fixed(m) => Ok(m),
            Length::MaxLocalDim => system.topology().max_local_dim(),
        }
    }
}

fn default_algorithms() -> Vec<Algorithm> {
    Algorithm::ALL.to_vec()
}

fn default_rcond() -> f64 {
    DEFAULT_RCOND
}

fn default_initial_range() -> Interval {
    Interval(-1.0, 1.0)
}

/// Sweep description; also the JSON config file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Network family and coefficient/input ranges. Its `seed` is replaced
    /// per trial by one derived from `master_seed`.
    pub generator: GeneratorConfig,
    pub trials: usize,
    pub m_values: Vec<Length>,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    /// Used by the reduced variants for both SVDs.
    #[serde(default)]
    pub truncation: TruncationRule,
    #[serde(default = "default_rcond")]
    pub rcond: f64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_initial_range")]
    pub initial_state_range: Interval,
    /// Run the reduced-order variants and score their lifted operators.
    #[serde(default)]
    pub reduced: bool,
}

impl SweepConfig {
    pub fn new(generator: GeneratorConfig, trials: usize, m_values: Vec<Length>) -> Self {
        SweepConfig {
            generator,
            trials,
            m_values,
            algorithms: default_algorithms(),
            truncation: TruncationRule::default(),
            rcond: DEFAULT_RCOND,
            master_seed: 0,
            initial_state_range: default_initial_range(),
            reduced: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SweepConfig = serde_json::from_str(text).map_err(|e| {
            if e.is_io() {
                Error::Json(e)
            } else {
                Error::BadConfig(e.to_string())
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.initial_state_range.validate("initial_state_range")?;
        self.truncation.validate()?;
        if self.trials == 0 {
            return Err(Error::BadConfig("trials must be >= 1".into()));
        }
        if self.m_values.is_empty() || self.m_values.contains(&Length::Fixed(0)) {
            return Err(Error::BadConfig(
                "m_values must be nonempty with every m >= 1".into(),
            ));
        }
        if self.algorithms.is_empty() {
            return Err(Error::BadConfig("no algorithms selected".into()));
        }
        if !(self.rcond >= 0.0 && self.rcond < 1.0) {
            return Err(Error::BadConfig(format!(
                "rcond {} not in [0, 1)",
                self.rcond
            )));
        }
        Ok(())
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        derive_seed(self.master_seed, trial as u64)
    }
}

/// Per-trial knobs shared by every algorithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSettings {
    pub rcond: f64,
    pub truncation: TruncationRule,
    pub reduced: bool,
    pub initial_state_range: Interval,
    pub input_range: Interval,
}

impl From<&SweepConfig> for TrialSettings {
    fn from(cfg: &SweepConfig) -> Self {
        TrialSettings {
            rcond: cfg.rcond,
            truncation: cfg.truncation,
            reduced: cfg.reduced,
            initial_state_range: cfg.initial_state_range,
            input_range: cfg.generator.input_range,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub trial: usize,
    pub m: usize,
    pub algorithm: Algorithm,
    /// Absent when the identification failed.
    pub frobenius_error: Option<f64>,
    /// `σ_min/σ_max` of the regression data; for network DMDc the worst node.
    pub cond_ratio: Option<f64>,
    pub wall_time_s: f64,
    pub warnings: Vec<String>,
}

struct Scored {
    error: Result<f64>,
    cond_ratio: Option<f64>,
    warnings: Vec<String>,
}

fn exact_warnings(model: &ExactLinearModel) -> Vec<String> {
    if model.conditioning.warning {
        vec!["ill_conditioned".into()]
    } else {
        Vec::new()
    }
}

fn score(
    algorithm: Algorithm,
    system: &LinearNetworkSystem,
    traj: &TrajectoryData,
    truth: (&Matrix, &Matrix),
    s: &TrialSettings,
) -> Scored {
    let (ta, tb) = truth;
    let failed = |e: Error| Scored {
        error: Err(e),
        cond_ratio: None,
        warnings: Vec::new(),
    };
    let rule = s.truncation;
    match (algorithm, s.reduced) {
        (Algorithm::Dmd, false) => match dmd_exact(&traj.z, &traj.y, s.rcond) {
            Ok(m) => Scored {
                error: model_error(&m, ta, Some(tb)),
                cond_ratio: Some(m.conditioning.ratio()),
                warnings: exact_warnings(&m),
            },
            Err(e) => failed(e),
        },
        (Algorithm::Dmdc, false) => match dmdc_exact(&traj.z, &traj.y, &traj.gamma, s.rcond) {
            Ok(m) => Scored {
                error: model_error(&m, ta, Some(tb)),
                cond_ratio: Some(m.conditioning.ratio()),
                warnings: exact_warnings(&m),
            },
            Err(e) => failed(e),
        },
        (Algorithm::NetworkDmdc, false) => {
            match network_dmdc_exact(system.topology(), traj, s.rcond) {
                Ok(m) => {
                    let mut warnings = Vec::new();
                    let ill: Vec<&str> = m
                        .nodes
                        .iter()
                        .filter(|(_, d)| d.conditioning.is_some_and(|c| c.warning))
                        .map(|(id, _)| id.as_str())
                        .collect();
                    if !ill.is_empty() {
                        warnings.push(format!("ill_conditioned:{}", ill.join(",")));
                    }
                    let failed_nodes: Vec<&str> = m
                        .nodes
                        .iter()
                        .filter(|(_, d)| d.failure.is_some())
                        .map(|(id, _)| id.as_str())
                        .collect();
                    if !failed_nodes.is_empty() {
                        warnings.push(format!("partial:{}", failed_nodes.join(",")));
                    }
                    Scored {
                        error: model_error(&m, ta, Some(tb)),
                        cond_ratio: m.min_cond_ratio(),
                        warnings,
                    }
                }
                Err(e) => failed(e),
            }
        }
        (Algorithm::Dmd, true) => match dmd_reduced(&traj.z, &traj.y, rule) {
            Ok((m, _)) => lifted_score(m.lift(), ta, tb),
            Err(e) => failed(e),
        },
        (Algorithm::Dmdc, true) => match dmdc_reduced(&traj.z, &traj.y, &traj.gamma, rule, rule) {
            Ok((m, _)) => lifted_score(m.lift(), ta, tb),
            Err(e) => failed(e),
        },
        (Algorithm::NetworkDmdc, true) => {
            match network_dmdc_reduced(system.topology(), traj, rule, rule) {
                Ok(m) => {
                    let mut scored = lifted_score((m.lift().0, Some(m.lift().1)), ta, tb);
                    if m.partial() {
                        scored.warnings.push("partial".into());
                    }
                    scored
                }
                Err(e) => failed(e),
            }
        }
    }
}

struct Lifted(Matrix, Option<Matrix>);

impl IdentifiedModel for Lifted {
    fn a(&self) -> &Matrix {
        &self.0
    }
    fn b(&self) -> Option<&Matrix> {
        self.1.as_ref()
    }
}

fn lifted_score((a, b): (Matrix, Option<Matrix>), ta: &Matrix, tb: &Matrix) -> Scored {
    Scored {
        error: model_error(&Lifted(a, b), ta, Some(tb)),
        cond_ratio: None,
        warnings: Vec::new(),
    }
}

/// Simulates one trajectory of length `m` and scores every algorithm on it.
pub fn run_trial<R: Rng + ?Sized>(
    trial: usize,
    system: &LinearNetworkSystem,
    m: usize,
    algorithms: &[Algorithm],
    rng: &mut R,
    settings: &TrialSettings,
) -> Result<Vec<ResultRow>> {
    if m == 0 {
        return Err(Error::BadConfig("simulation length must be >= 1".into()));
    }
    let x0 = random_state(system.state_dim(), settings.initial_state_range, rng);
    let inputs = random_inputs(system.input_dim(), m, settings.input_range, rng);
    let traj = system.simulate(&x0, &inputs)?;
    let fingerprint = traj.fingerprint();
    let (ta, tb) = system.true_full_matrices();

    let mut rows = Vec::with_capacity(algorithms.len());
    for &algorithm in algorithms {
        assert_eq!(
            traj.fingerprint(),
            fingerprint,
            "trajectory changed between algorithms"
        );
        let start = Instant::now();
        let scored = score(algorithm, system, &traj, (&ta, &tb), settings);
        let wall_time_s = start.elapsed().as_secs_f64();
        let mut warnings = scored.warnings;
        let frobenius_error = match scored.error {
            Ok(e) => Some(e),
            Err(e) => {
                warnings.push(format!("failed: {e}"));
                None
            }
        };
        rows.push(ResultRow {
            trial,
            m,
            algorithm,
            frobenius_error,
            cond_ratio: scored.cond_ratio,
            wall_time_s,
            warnings,
        });
    }
    Ok(rows)
}

/// Mean error of one `(m, algorithm)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub m: usize,
    pub algorithm: Algorithm,
    /// Mean over rows with an error value; absent if there are none.
    pub mean_error: Option<f64>,
    pub rows: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<ResultRow>,
    pub aggregates: Vec<Aggregate>,
}

impl SweepResult {
    pub fn from_rows(rows: Vec<ResultRow>) -> Self {
        let aggregates = aggregate(&rows);
        SweepResult { rows, aggregates }
    }

    pub fn mean_error(&self, m: usize, algorithm: Algorithm) -> Option<f64> {
        self.aggregates
            .iter()
            .find(|a| a.m == m && a.algorithm == algorithm)
            .and_then(|a| a.mean_error)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            w.serialize(CsvRow::from(r))?;
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(input);
        if r.headers()?.iter().ne(CSV_HEADER) {
            return Err(Error::Parse(format!(
                "results header must be {}",
                CSV_HEADER.join(",")
            )));
        }
        let rows = r
            .deserialize::<CsvRow>()
            .map(|row| row.map(ResultRow::from).map_err(Error::from))
            .collect::<Result<Vec<_>>>()?;
        Ok(SweepResult::from_rows(rows))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("results serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Mean error per `(m, algorithm)`, in order of first appearance.
pub fn aggregate(rows: &[ResultRow]) -> Vec<Aggregate> {
    let mut cells: indexmap::IndexMap<(usize, Algorithm), (f64, usize, usize)> =
        indexmap::IndexMap::new();
    for r in rows {
        let cell = cells.entry((r.m, r.algorithm)).or_insert((0.0, 0, 0));
        cell.2 += 1;
        if let Some(e) = r.frobenius_error {
            cell.0 += e;
            cell.1 += 1;
        }
    }
    cells
        .into_iter()
        .map(|((m, algorithm), (sum, n, total))| Aggregate {
            m,
            algorithm,
            mean_error: (n > 0).then(|| sum / n as f64),
            rows: total,
            failures: total - n,
        })
        .collect()
}

pub const CSV_HEADER: [&str; 7] = [
    "trial",
    "m",
    "algorithm",
    "frobenius_error",
    "cond_ratio",
    "wall_time_s",
    "warnings",
];

#[derive(Serialize, Deserialize)]
struct CsvRow {
    trial: usize,
    m: usize,
    algorithm: Algorithm,
    frobenius_error: Option<f64>,
    cond_ratio: Option<f64>,
    wall_time_s: f64,
    warnings: String,
}

impl From<&ResultRow> for CsvRow {
    fn from(r: &ResultRow) -> Self {
        CsvRow {
            trial: r.trial,
            m: r.m,
            algorithm: r.algorithm,
            frobenius_error: r.frobenius_error,
            cond_ratio: r.cond_ratio,
            wall_time_s: r.wall_time_s,
            warnings: r
                .warnings
                .iter()
                .map(|w| w.replace(';', ","))
                .collect::<Vec<_>>()
                .join(";"),
        }
    }
}

impl From<CsvRow> for ResultRow {
    fn from(r: CsvRow) -> Self {
        ResultRow {
            trial: r.trial,
            m: r.m,
            algorithm: r.algorithm,
            frobenius_error: r.frobenius_error,
            cond_ratio: r.cond_ratio,
            wall_time_s: r.wall_time_s,
            warnings: if r.warnings.is_empty() {
                Vec::new()
            } else {
                r.warnings.split(';').map(str::to_string).collect()
            },
        }
    }
}

/// Runs every trial (in parallel) and every length. Rows come out ordered
/// by trial, then `m_values` order, then `algorithms` order, whatever the
/// scheduling. A trial whose system cannot be built or simulated yields
/// error rows instead of aborting the sweep.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let settings = TrialSettings::from(cfg);
    let per_trial: Vec<Vec<ResultRow>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = cfg.trial_seed(trial);
            let system = generate(&cfg.generator.clone().with_seed(seed));
            let mut rows = Vec::new();
            for (index, length) in cfg.m_values.iter().enumerate() {
                let m = system
                    .as_ref()
                    .map_err(Error::to_string)
                    .and_then(|s| length.resolve(s).map_err(|e| e.to_string()));
                let outcome = match (&system, m) {
                    (Ok(s), Ok(m)) => {
                        let mut rng = seeded_rng(derive_seed(seed, index as u64 + 1));
                        run_trial(trial, s, m, &cfg.algorithms, &mut rng, &settings)
                            .map_err(|e| (m, e.to_string()))
                    }
                    (_, Err(e)) => Err((0, e)),
                    (Err(_), Ok(_)) => unreachable!("length resolves only for a built system"),
                };
                match outcome {
                    Ok(r) => rows.extend(r),
                    Err((m, e)) => rows.extend(cfg.algorithms.iter().map(|&algorithm| ResultRow {
                        trial,
                        m,
                        algorithm,
                        frobenius_error: None,
                        cond_ratio: None,
                        wall_time_s: 0.0,
                        warnings: vec![format!("failed: {e}")],
                    })),
                }
            }
            rows
        })
        .collect();
    Ok(SweepResult::from_rows(
        per_trial.into_iter().flatten().collect(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// `.json` selects JSON; anything else is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        }
    }
}

pub fn export(result: &SweepResult, format: Format, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    match format {
        Format::Csv => result.write_csv(&mut out)?,
        Format::Json => out
            .write_all(result.to_json().as_bytes())
            .map_err(|e| Error::io(path, e))?,
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn import(format: Format, path: &Path) -> Result<SweepResult> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        Format::Csv => SweepResult::read_csv(text.as_bytes()),
        Format::Json => SweepResult::from_json(&text),
    }
}
