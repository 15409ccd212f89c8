//! Experiment orchestration: configs, seeded realizations, sweeps and CSV output.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{
    add_noise, default_observables, gen_initial_states, hamiltonian_series, measure_expectations,
    reconstruct_heisenberg, DerivativeMode, HeisenbergReconstruction, InitialStateEnsemble, ObservationSet,
    TimeGrid,
};
use crate::error::{Error, Result};
use crate::henn::{coefficient_series, ensemble_train, EnsemblePrediction, LossContext, TrainingConfig};
use crate::models::{
    gate_hamiltonian, gen_long_range, gen_two_body, partition_subspaces, true_link_set, Gate, HamiltonianSpec,
    NetworkTopology, TopologyTag,
};
use crate::pauli::PauliString;
use crate::persist;
use crate::seed::split_seed;
use crate::tomography::{coupling_profile, TomographyReport, DEFAULT_THRESHOLD};

const STREAM_SPEC: u64 = 1;
const STREAM_STATES: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_TRAIN: u64 = 4;

/// Which Hamiltonian a realization draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemConfig {
    TwoBody { topology: TopologyTag },
    LongRange,
    Gate { gate: Gate, timedep: bool },
    /// `H = sin(t) X` on one spin.
    SingleSpin,
    /// The fixed driven three-spin chain.
    ThreeSpinChain,
}

impl SystemConfig {
    pub fn name(&self) -> String {
        match self {
            Self::TwoBody { topology } => format!("two_body_{topology}"),
            Self::LongRange => "long_range".into(),
            Self::Gate { gate, timedep } => {
                format!("{}_{}", format!("{gate:?}").to_lowercase(), if *timedep { "timedep" } else { "static" })
            }
            Self::SingleSpin => "single_spin".into(),
            Self::ThreeSpinChain => "three_spin_chain".into(),
        }
    }

    fn fixed_n(&self) -> Option<usize> {
        match self {
            Self::Gate { .. } | Self::ThreeSpinChain => Some(3),
            Self::SingleSpin => Some(1),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub n: usize,
    /// 1-based spin indices.
    pub observed: Vec<usize>,
    pub state_count: usize,
    pub grid: TimeGrid,
    /// Raise `grid.substeps` until the integrator error estimate is small.
    pub auto_substeps: bool,
    pub derivative_mode: DerivativeMode,
    pub noise_sigma: f64,
    pub threshold: f64,
    pub training: TrainingConfig,
    pub rounds: usize,
    pub conversion_substeps: usize,
    pub realizations: usize,
    pub threads: Option<usize>,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::two_body(TopologyTag::Cyclic, 3, 1)
    }
}

/// Initial states used for `n` spins.
pub fn default_state_count(n: usize) -> usize {
    match n {
        0 | 1 => 4,
        2 => 20,
        3 => 100,
        4 => 300,
        _ => 1100,
    }
}

impl ExperimentConfig {
    fn base(system: SystemConfig, n: usize, observed: Vec<usize>, grid: TimeGrid) -> Self {
        Self {
            system,
            n,
            observed,
            state_count: default_state_count(n),
            grid,
            auto_substeps: true,
            derivative_mode: DerivativeMode::Exact,
            noise_sigma: 0.0,
            threshold: DEFAULT_THRESHOLD,
            training: TrainingConfig::for_spins(n),
            rounds: 1,
            conversion_substeps: 20,
            realizations: 10,
            threads: None,
            seed: 0,
            output_dir: None,
        }
    }

    fn long_grid() -> TimeGrid {
        TimeGrid {
            t_start: 0.0,
            t_end: 5.0,
            n_samples: 100,
            substeps: 10,
        }
    }

    pub fn two_body(topology: TopologyTag, n: usize, observed: usize) -> Self {
        Self::base(SystemConfig::TwoBody { topology }, n, vec![observed], Self::long_grid())
    }

    pub fn long_range(n: usize, observed: usize) -> Self {
        Self::base(SystemConfig::LongRange, n, vec![observed], Self::long_grid())
    }

    /// Gate protocol: spin 3 observed on `t in [0, 1]`.
    pub fn gate(gate: Gate, timedep: bool) -> Self {
        let grid = TimeGrid {
            t_start: 0.0,
            t_end: 1.0,
            n_samples: 100,
            substeps: 10,
        };
        Self::base(SystemConfig::Gate { gate, timedep }, 3, vec![3], grid)
    }

    pub fn single_spin() -> Self {
        Self::base(SystemConfig::SingleSpin, 1, vec![1], Self::long_grid())
    }

    pub fn three_spin_chain() -> Self {
        Self::base(SystemConfig::ThreeSpinChain, 3, vec![1], Self::long_grid())
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(n) = self.system.fixed_n() {
            if self.n != n {
                return Err(Error::Input(format!("{} needs n = {n}, got {}", self.system.name(), self.n)));
            }
        }
        if self.n == 0 || self.n > 5 {
            return Err(Error::Input(format!("n must be in 1..=5, got {}", self.n)));
        }
        if self.state_count < 1 << (2 * self.n) {
            return Err(Error::Input(format!(
                "state_count {} is below 4^n = {}",
                self.state_count,
                1usize << (2 * self.n)
            )));
        }
        if self.realizations < 1 {
            return Err(Error::Input("realizations must be >= 1".into()));
        }
        if self.rounds < 1 {
            return Err(Error::Input("rounds must be >= 1".into()));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::Input(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Input(format!("threshold must be in (0, 1), got {}", self.threshold)));
        }
        if self.observed.is_empty() || self.observed.iter().any(|&s| s < 1 || s > self.n) {
            return Err(Error::Input(format!("observed spins {:?} outside 1..={}", self.observed, self.n)));
        }
        if self.threads == Some(0) {
            return Err(Error::Input("threads must be >= 1".into()));
        }
        self.grid.validate()?;
        self.training.validate()
    }

    /// SHA-256 of the canonical JSON form, ignoring where outputs go.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = None;
        canonical.threads = None;
        let text = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// Parses a config. Omitted `state_count` and `training.epochs` follow `n`.
    pub fn from_json(text: &str) -> Result<Self> {
        let bad = |e: serde_json::Error| Error::Input(format!("config: {e}"));
        let value: serde_json::Value = serde_json::from_str(text).map_err(bad)?;
        let mut cfg: Self = serde_json::from_value(value.clone()).map_err(bad)?;
        if value.get("state_count").is_none() {
            cfg.state_count = default_state_count(cfg.n);
        }
        if value.get("training").and_then(|t| t.get("epochs")).is_none() {
            cfg.training.epochs = TrainingConfig::for_spins(cfg.n).epochs;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Seed of realization `index`.
    pub fn realization_seed(&self, index: usize) -> u64 {
        split_seed(self.seed, index as u64)
    }
}

fn stage<T>(name: &'static str, seed: u64, result: Result<T>) -> Result<T> {
    result.map_err(|e| Error::Stage {
        stage: name,
        seed,
        source: Box::new(e),
    })
}

/// Draws the Hamiltonian for a realization seed.
pub fn generate_spec(config: &ExperimentConfig, seed: u64) -> Result<HamiltonianSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, STREAM_SPEC));
    let mut spec = match &config.system {
        SystemConfig::TwoBody { topology } => gen_two_body(&NetworkTopology::from_tag(*topology, config.n)?, &mut rng)?,
        SystemConfig::LongRange => gen_long_range(config.n, &mut rng)?,
        SystemConfig::Gate { gate, timedep } => gate_hamiltonian(*gate, *timedep),
        SystemConfig::SingleSpin => HamiltonianSpec::driven_single_spin(),
        SystemConfig::ThreeSpinChain => HamiltonianSpec::driven_three_spin_chain(),
    };
    spec.seed = Some(seed);
    Ok(spec)
}

/// The grid actually integrated on for `spec`.
pub fn effective_grid(config: &ExperimentConfig, spec: &HamiltonianSpec) -> TimeGrid {
    if config.auto_substeps {
        config.grid.with_adequate_substeps(spec.compile().norm_bound())
    } else {
        config.grid
    }
}

/// Simulated data for one realization.
#[derive(Clone, Debug)]
pub struct SimulatedData {
    pub seed: u64,
    pub spec: HamiltonianSpec,
    pub ensemble: InitialStateEnsemble,
    pub observations: ObservationSet,
}

pub fn simulate(config: &ExperimentConfig, seed: u64) -> Result<SimulatedData> {
    config.validate()?;
    let spec = stage("generate", seed, generate_spec(config, seed))?;
    let ensemble = stage(
        "ensemble",
        seed,
        gen_initial_states(
            config.n,
            config.state_count,
            &mut ChaCha8Rng::seed_from_u64(split_seed(seed, STREAM_STATES)),
        ),
    )?;
    let grid = effective_grid(config, &spec);
    let observables = default_observables(config.n, &config.observed)?;
    let mut observations = stage(
        "simulate",
        seed,
        measure_expectations(&spec, &ensemble, &config.observed, &observables, &grid, config.derivative_mode),
    )?;
    if config.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, STREAM_NOISE));
        observations = stage("noise", seed, add_noise(&observations, config.noise_sigma, &mut rng))?;
    }
    Ok(SimulatedData {
        seed,
        spec,
        ensemble,
        observations,
    })
}

pub fn reconstruct(data: &SimulatedData) -> Result<HeisenbergReconstruction> {
    stage("reconstruct", data.seed, reconstruct_heisenberg(&data.observations, &data.ensemble))
}

/// Everything produced by one realization.
#[derive(Clone, Debug)]
pub struct RealizationOutput {
    pub data: SimulatedData,
    pub prediction: EnsemblePrediction,
    pub truth_coefficients: Array2<f64>,
    pub report: TomographyReport,
}

pub fn train_realization(config: &ExperimentConfig, data: &SimulatedData) -> Result<EnsemblePrediction> {
    let seed = data.seed;
    let rec = reconstruct(data)?;
    let ctx = stage(
        "train",
        seed,
        LossContext::from_reconstruction(&data.ensemble, &rec, &data.observations),
    )?;
    drop(rec);
    let training = TrainingConfig {
        seed: split_seed(seed, STREAM_TRAIN),
        ..config.training.clone()
    };
    stage(
        "train",
        seed,
        ensemble_train(&ctx, &training, config.rounds, config.conversion_substeps),
    )
}

/// Runs realization `index` end to end, persisting artifacts when
/// `config.output_dir` is set.
pub fn run_realization(config: &ExperimentConfig, index: usize) -> Result<RealizationOutput> {
    let seed = config.realization_seed(index);
    let hash = config.hash();
    let data = simulate(config, seed)?;
    let prediction = train_realization(config, &data)?;

    let grid = data.observations.grid;
    let n = config.n;
    let truth = hamiltonian_series(&data.spec, &grid);
    let predicted = prediction.mean_series(n);
    let report = stage("score", seed, (|| {
        let profile = coupling_profile(&predicted)?;
        let partition = partition_subspaces(n, &config.observed)?;
        let mut report = TomographyReport::build(
            &profile,
            config.threshold,
            &true_link_set(&data.spec),
            &partition,
            Some((&predicted, &truth)),
        )?;
        report.seed = Some(seed);
        report.config_hash = Some(hash.clone());
        Ok(report)
    })())?;

    let out = RealizationOutput {
        truth_coefficients: coefficient_series(&truth),
        data,
        prediction,
        report,
    };
    if let Some(dir) = &config.output_dir {
        stage("persist", seed, persist_realization(&dir.join(format!("realization_{index:03}")), &out, &hash))?;
    }
    Ok(out)
}

#[derive(Serialize)]
struct SpecFile<'a> {
    config_hash: &'a str,
    spec: crate::models::SpecDocument,
}

fn persist_realization(dir: &Path, out: &RealizationOutput, hash: &str) -> Result<()> {
    persist::write_json(
        &dir.join("spec.json"),
        &SpecFile {
            config_hash: hash,
            spec: (&out.data.spec).into(),
        },
    )?;
    persist::write_observations(&dir.join("observations.json"), &out.data.observations, Some(out.data.seed), Some(hash))?;
    for (r, outcome) in out.prediction.rounds.iter().enumerate() {
        persist::write_params(&dir.join(format!("params_round{r}.json")), &outcome.params, Some(hash))?;
        persist::write_loss_history(&dir.join(format!("loss_round{r}.csv")), &outcome.history, Some(hash))?;
    }
    persist::write_json(&dir.join("report.json"), &out.report)
}

/// Runs the first realization and returns its report.
pub fn run_single(config: &ExperimentConfig) -> Result<TomographyReport> {
    run_realization(config, 0).map(|o| o.report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealizationRecord {
    pub index: usize,
    pub seed: u64,
    pub report: Option<TomographyReport>,
    pub error: Option<String>,
    pub seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub count: usize,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let count = values.len();
        let mean = values.iter().sum::<f64>() / count as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count as f64;
        Some(Self {
            mean,
            std: var.sqrt(),
            count,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub f_t: Option<Stats>,
    pub f_tprime: Option<Stats>,
    pub f_local: Option<Stats>,
}

impl Aggregate {
    pub fn from_records(records: &[RealizationRecord]) -> Self {
        let reports: Vec<&TomographyReport> = records.iter().filter_map(|r| r.report.as_ref()).collect();
        let collect = |f: fn(&TomographyReport) -> Option<f64>| Stats::of(&reports.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
        Self {
            f_t: collect(|r| Some(r.f_t)),
            f_tprime: collect(|r| r.f_tprime),
            f_local: collect(|r| r.f_local),
        }
    }
}

/// Predicted and true Schrodinger coefficients of one realization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTraces {
    pub times: Vec<f64>,
    pub labels: Vec<String>,
    /// `[time][label]`.
    pub predicted: Vec<Vec<f64>>,
    pub truth: Vec<Vec<f64>>,
}

impl CoefficientTraces {
    fn from_output(out: &RealizationOutput) -> Self {
        let n = out.data.spec.n;
        let rows = |a: &Array2<f64>| a.outer_iter().map(|r| r.to_vec()).collect();
        Self {
            times: out.prediction.grid.times(),
            labels: (0..1usize << (2 * n)).map(|i| PauliString::from_index(n, i).label()).collect(),
            predicted: rows(&out.prediction.mean),
            truth: rows(&out.truth_coefficients),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub name: String,
    pub n: usize,
    pub observed: Vec<usize>,
    pub noise_sigma: f64,
    pub config_hash: String,
    pub records: Vec<RealizationRecord>,
    pub aggregate: Aggregate,
    /// Traces of the first successful realization.
    pub traces: Option<CoefficientTraces>,
    pub wall_clock_seconds: f64,
}

impl SweepResult {
    pub fn reports(&self) -> impl Iterator<Item = &TomographyReport> {
        self.records.iter().filter_map(|r| r.report.as_ref())
    }

    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.error.is_some()).count()
    }
}

fn with_pool<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(job()),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Error::Input(format!("thread pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

/// Runs every realization; a failing realization is recorded, not fatal.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    let start = Instant::now();
    let outputs: Vec<(RealizationRecord, Option<CoefficientTraces>)> = with_pool(config.threads, || {
        (0..config.realizations)
            .into_par_iter()
            .map(|index| {
                let t0 = Instant::now();
                let seed = config.realization_seed(index);
                let (report, error, traces) = match run_realization(config, index) {
                    Ok(out) => {
                        let traces = CoefficientTraces::from_output(&out);
                        (Some(out.report), None, Some(traces))
                    }
                    Err(e) => (None, Some(e.to_string()), None),
                };
                let record = RealizationRecord {
                    index,
                    seed,
                    report,
                    error,
                    seconds: t0.elapsed().as_secs_f64(),
                };
                (record, traces)
            })
            .collect()
    })?;
    let traces = outputs.iter().find_map(|(_, t)| t.clone());
    let records: Vec<RealizationRecord> = outputs.into_iter().map(|(r, _)| r).collect();
    let result = SweepResult {
        name: config.system.name(),
        n: config.n,
        observed: config.observed.clone(),
        noise_sigma: config.noise_sigma,
        config_hash: config.hash(),
        aggregate: Aggregate::from_records(&records),
        records,
        traces,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    if let Some(dir) = &config.output_dir {
        persist::write_json(&dir.join("sweep.json"), &result)?;
    }
    Ok(result)
}

/// The noise levels of the robustness sweep.
pub const NOISE_LEVELS: [f64; 4] = [0.0, 0.02, 0.04, 0.06];

/// One sweep per noise level. Every level uses finite-difference derivatives
/// so the noiseless baseline is processed like the noisy ones.
pub fn run_noise_sweep(config: &ExperimentConfig, sigmas: &[f64]) -> Result<Vec<SweepResult>> {
    sigmas
        .iter()
        .map(|&sigma| {
            let cfg = ExperimentConfig {
                noise_sigma: sigma,
                derivative_mode: DerivativeMode::FiniteDiff,
                output_dir: config.output_dir.as_ref().map(|d| d.join(format!("sigma_{sigma}"))),
                ..config.clone()
            };
            run_sweep(&cfg)
        })
        .collect()
}

/// Static and time-dependent Toffoli and Fredkin sweeps.
pub fn run_gate_sweeps(template: &ExperimentConfig) -> Result<Vec<SweepResult>> {
    let mut out = Vec::new();
    for timedep in [false, true] {
        for gate in [Gate::Toffoli, Gate::Fredkin] {
            let base = ExperimentConfig::gate(gate, timedep);
            let cfg = ExperimentConfig {
                training: template.training.clone(),
                realizations: template.realizations,
                rounds: template.rounds,
                threads: template.threads,
                seed: template.seed,
                output_dir: template.output_dir.as_ref().map(|d| d.join(base.system.name())),
                ..base
            };
            out.push(run_sweep(&cfg)?);
        }
    }
    Ok(out)
}

pub const FIGURE_TAGS: [&str; 7] = ["fig2", "fig3", "fig5", "fig6", "fig7", "fig8", "table1"];

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn stat_cells(s: Option<Stats>) -> [String; 2] {
    [fmt_opt(s.map(|s| s.mean)), fmt_opt(s.map(|s| s.std))]
}

/// Writes `<dir>/<tag>.csv` from completed sweeps and returns its path.
pub fn emit_plot_data(results: &[SweepResult], tag: &str, dir: &Path) -> Result<PathBuf> {
    let strings = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let (header, rows): (Vec<String>, Vec<Vec<String>>) = match tag {
        "fig2" => {
            let header = strings(&["index", "label", "normalized_cbar", "is_true_link"]);
            let rows = results
                .iter()
                .flat_map(|r| r.reports().next())
                .take(1)
                .flat_map(|rep| {
                    let truth = rep.truth_set();
                    (1..rep.labels.len()).map(move |i| {
                        vec![
                            i.to_string(),
                            rep.labels[i].clone(),
                            rep.normalized_profile[i].to_string(),
                            u8::from(truth.contains(&i)).to_string(),
                        ]
                    })
                })
                .collect();
            (header, rows)
        }
        "fig3" | "fig5" | "table1" => {
            let header = strings(&[
                "structure",
                "n",
                "observed",
                "realizations",
                "failures",
                "f_t_mean",
                "f_t_std",
                "f_tprime_mean",
                "f_tprime_std",
                "f_local_mean",
                "f_local_std",
            ]);
            let rows = results
                .iter()
                .map(|r| {
                    let mut row = vec![
                        r.name.clone(),
                        r.n.to_string(),
                        r.observed.iter().map(usize::to_string).collect::<Vec<_>>().join(" "),
                        r.records.len().to_string(),
                        r.failures().to_string(),
                    ];
                    row.extend(stat_cells(r.aggregate.f_t));
                    row.extend(stat_cells(r.aggregate.f_tprime));
                    row.extend(stat_cells(r.aggregate.f_local));
                    row
                })
                .collect();
            (header, rows)
        }
        "fig6" => {
            let header = strings(&["sigma", "f_t_mean", "f_t_std", "f_local_mean", "f_local_std"]);
            let rows = results
                .iter()
                .map(|r| {
                    let mut row = vec![r.noise_sigma.to_string()];
                    row.extend(stat_cells(r.aggregate.f_t));
                    row.extend(stat_cells(r.aggregate.f_local));
                    row
                })
                .collect();
            (header, rows)
        }
        "fig7" | "fig8" => match results.iter().find_map(|r| r.traces.as_ref()) {
            None => (vec!["t".to_string()], Vec::new()),
            Some(tr) => {
                let mut header = vec!["t".to_string()];
                for label in &tr.labels[1..] {
                    let l = label.to_lowercase();
                    header.push(format!("c_{l}_pred"));
                    header.push(format!("c_{l}_true"));
                }
                let rows = tr
                    .times
                    .iter()
                    .enumerate()
                    .map(|(j, t)| {
                        let mut row = vec![t.to_string()];
                        for i in 1..tr.labels.len() {
                            row.push(tr.predicted[j][i].to_string());
                            row.push(tr.truth[j][i].to_string());
                        }
                        row
                    })
                    .collect();
                (header, rows)
            }
        },
        other => {
            return Err(Error::Input(format!(
                "unknown figure tag `{other}`; expected one of {}",
                FIGURE_TAGS.join(", ")
            )))
        }
    };
    let path = dir.join(format!("{tag}.csv"));
    persist::write_table(&path, &header, &rows)?;
    Ok(path)
}
