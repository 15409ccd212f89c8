use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spin_tomography::dynamics::true_heisenberg_observables;
use spin_tomography::harness::{
    emit_plot_data, generate_spec, reconstruct, run_gate_sweeps, run_noise_sweep, run_single, run_sweep, simulate,
    train_realization, ExperimentConfig, SweepResult, FIGURE_TAGS, NOISE_LEVELS,
};
use spin_tomography::models::SpecDocument;
use spin_tomography::{persist, Error, Result};

#[derive(Parser)]
#[command(name = "spintomo", version, about = "Hamiltonian tomography of driven spin networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a Hamiltonian and write its spec.
    Gen(Common),
    /// Simulate observations.
    Simulate(Common),
    /// Reconstruct the Heisenberg-picture observables.
    Reconstruct(Common),
    /// Train the network and write its parameters and loss history.
    Train(Common),
    /// Run one realization end to end and write its report.
    Tomo(Common),
    /// Run all realizations of a config.
    Sweep(Common),
    /// Toffoli and Fredkin sweeps, static and driven.
    Gates(Common),
    /// Sweep the measurement noise level.
    Noise(Common),
    /// Write figure CSVs from saved sweeps, or from a fresh sweep.
    Plotdata(PlotArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (JSON). Missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    realizations: Option<usize>,
    /// Worker threads.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct PlotArgs {
    #[command(flatten)]
    common: Common,
    /// fig2, fig3, fig5, fig6, fig7, fig8 or table1.
    #[arg(long)]
    figure: String,
    /// Saved sweep.json files; repeatable.
    #[arg(long)]
    input: Vec<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(r) = self.realizations {
            cfg.realizations = r;
        }
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
        cfg.output_dir = Some(self.out.clone());
        cfg.validate()?;
        Ok(cfg)
    }
}

fn summarize(results: &[SweepResult]) {
    for r in results {
        let ft = r.aggregate.f_t.map_or("n/a".to_string(), |s| format!("{:.3} ± {:.3}", s.mean, s.std));
        let fl = r.aggregate.f_local.map_or("n/a".to_string(), |s| format!("{:.3}", s.mean));
        println!(
            "{:<24} sigma={:<5} F_t={ft}  F_local={fl}  failures={}  {:.1}s",
            r.name,
            r.noise_sigma,
            r.failures(),
            r.wall_clock_seconds
        );
    }
}

fn write_figure(results: &[SweepResult], tag: &str, out: &Path) -> Result<()> {
    let path = emit_plot_data(results, tag, out)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(c) => {
            let cfg = c.config()?;
            let data_seed = cfg.realization_seed(0);
            let spec = generate_spec(&cfg, data_seed)?;
            let path = c.out.join("spec.json");
            persist::write_json(&path, &SpecDocument::from(&spec))?;
            println!("wrote {}", path.display());
        }
        Command::Simulate(c) => {
            let cfg = c.config()?;
            let data = simulate(&cfg, cfg.realization_seed(0))?;
            let path = c.out.join("observations.json");
            persist::write_observations(&path, &data.observations, Some(data.seed), Some(&cfg.hash()))?;
            println!("wrote {}", path.display());
        }
        Command::Reconstruct(c) => {
            let cfg = c.config()?;
            let data = simulate(&cfg, cfg.realization_seed(0))?;
            let rec = reconstruct(&data)?;
            let hash = cfg.hash();
            for series in &rec.operators {
                persist::write_series(&c.out.join(format!("heisenberg_{}.json", series.label)), series, Some(&hash))?;
            }
            if data.observations.noise_sigma == 0.0 {
                let truth = true_heisenberg_observables(&data.spec, &data.observations.observables, &data.observations.grid)?;
                for (got, want) in rec.operators.iter().zip(&truth) {
                    println!("{}: max error vs exact {:.3e}", got.label, got.max_abs_diff(want));
                }
            }
            println!(
                "relative residual {:.3e}, condition estimate {:.3e}",
                rec.relative_residual, rec.condition_estimate
            );
        }
        Command::Train(c) => {
            let cfg = c.config()?;
            let data = simulate(&cfg, cfg.realization_seed(0))?;
            let prediction = train_realization(&cfg, &data)?;
            let hash = cfg.hash();
            for (r, outcome) in prediction.rounds.iter().enumerate() {
                persist::write_params(&c.out.join(format!("params_round{r}.json")), &outcome.params, Some(&hash))?;
                persist::write_loss_history(&c.out.join(format!("loss_round{r}.csv")), &outcome.history, Some(&hash))?;
                println!("round {r}: best loss {:.3e} at epoch {}", outcome.best_loss, outcome.best_epoch);
            }
        }
        Command::Tomo(c) => {
            let report = run_single(&c.config()?)?;
            println!("{}", report.to_json()?);
        }
        Command::Sweep(c) => summarize(&[run_sweep(&c.config()?)?]),
        Command::Gates(c) => {
            let results = run_gate_sweeps(&c.config()?)?;
            summarize(&results);
            write_figure(&results, "table1", &c.out)?;
        }
        Command::Noise(c) => {
            let results = run_noise_sweep(&c.config()?, &NOISE_LEVELS)?;
            summarize(&results);
            write_figure(&results, "fig6", &c.out)?;
        }
        Command::Plotdata(p) => {
            if !FIGURE_TAGS.contains(&p.figure.as_str()) {
                return Err(Error::Input(format!(
                    "unknown figure tag `{}`; expected one of {}",
                    p.figure,
                    FIGURE_TAGS.join(", ")
                )));
            }
            let results = if p.input.is_empty() {
                vec![run_sweep(&p.common.config()?)?]
            } else {
                p.input.iter().map(|f| persist::read_json(f)).collect::<Result<Vec<SweepResult>>>()?
            };
            write_figure(&results, &p.figure, &p.common.out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

