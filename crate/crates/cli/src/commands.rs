//! Command-line interface.

use std::ffi::OsString;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use omsync_core::effective::HopfKuramotoParams;
use omsync_core::orchestrate::{
    init_workers, run, Engine, McwfSettings, Overrides, RunConfig, RunOptions, SweepResult,
    RUN_CONFIG_SCHEMA, WORKERS_ENV,
};
use omsync_core::phase::{
    bimodality, histogram, relative_phase_with_floor, residence_times, sync_measure,
    sync_measure_stderr, Bimodality, ResidenceConfig, SyncMeasure, DEFAULT_AMPLITUDE_FLOOR,
};
use omsync_core::sde::Trajectory;

use crate::render::render_path;

#[derive(Debug, Parser)]
#[command(
    name = "omsync",
    version,
    about = "Noise-driven 0/π synchronization of coupled optomechanical oscillators"
)]
#[command(after_help = "The worker count is read from OMSYNC_WORKERS (default: all cores).")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Langevin trajectories (single point or sweep).
    Simulate(RunArgs),
    /// Quantum-jump trajectories on a truncated Fock space.
    Jump {
        #[command(flatten)]
        run: RunArgs,
        /// Optical Fock cutoff.
        #[arg(long)]
        n_opt: Option<usize>,
        /// Mechanical Fock cutoff.
        #[arg(long)]
        n_mech: Option<usize>,
    },
    /// Runs any configuration with sweep axes.
    Sweep(RunArgs),
    /// Phase analysis of a trajectory CSV written by `simulate`.
    Analyze(AnalyzeArgs),
    /// Fixed points, regime and effective potential of the reduced phase model.
    PhaseModel {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, allow_negative_numbers = true)]
        delta_omega: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        s1: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        s2: Option<f64>,
    },
    /// Shot-noise versus thermal-noise budget.
    NoiseBudget {
        #[command(flatten)]
        run: RunArgs,
        /// Intracavity photon number.
        #[arg(long)]
        n_photons: Option<f64>,
    },
    /// Self-oscillation threshold over (α_L, Δ) or any cell parameters.
    ThresholdScan(RunArgs),
    /// SVG figures from a run directory or a result CSV.
    Render {
        /// Run directory or CSV file.
        input: PathBuf,
        /// Figure directory; defaults to `<run>/figures` or the CSV's directory.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Prints the JSON schema of run configurations.
    Schema,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// JSON run configuration.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Run directory (overrides the configuration).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Base seed; cell c uses streams c·n_traj .. (c+1)·n_traj.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trajectories per cell.
    #[arg(long)]
    pub n_traj: Option<usize>,
    /// Thermal phonon occupancy of both baths.
    #[arg(long)]
    pub n_th: Option<f64>,
    /// Integration step.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Integrated time per trajectory, burn-in included.
    #[arg(long)]
    pub t_total: Option<f64>,
    /// Initial stretch that is integrated but not recorded.
    #[arg(long)]
    pub burn_in: Option<f64>,
    /// Mechanical coupling K.
    #[arg(long, allow_negative_numbers = true)]
    pub coupling_k: Option<f64>,
    /// g0/κ; switches the Langevin engine to the rescaled equations.
    #[arg(long)]
    pub quantum_parameter: Option<f64>,
    /// Reuse finished cells of an earlier run of the same configuration.
    #[arg(long)]
    pub resume: bool,
    /// Stop after this many new cells.
    #[arg(long)]
    pub max_cells: Option<usize>,
    /// Also write SVG figures into `<run>/figures`.
    #[arg(long)]
    pub render: bool,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// Trajectory CSV.
    pub trajectory: PathBuf,
    /// Output directory.
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub bins: usize,
    /// Batches for the standard error of the synchronization measure.
    #[arg(long, default_value_t = 20)]
    pub blocks: usize,
    /// Amplitude below which the phase counts as undefined.
    #[arg(long, default_value_t = DEFAULT_AMPLITUDE_FLOOR)]
    pub floor: f64,
    #[arg(long)]
    pub render: bool,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            n_traj: self.n_traj,
            n_th: self.n_th,
            dt: self.dt,
            t_total: self.t_total,
            burn_in: self.burn_in,
            coupling_k: self.coupling_k,
            quantum_parameter: self.quantum_parameter,
            output: self.output.clone(),
        }
    }

    /// Loads the configuration, or starts from defaults for `engine`, then
    /// applies flag overrides. `engine = None` accepts any engine.
    fn config(&self, engine: Option<Engine>) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => {
                let Some(engine) = engine else {
                    bail!("`sweep` needs --config");
                };
                let Some(out) = &self.output else {
                    bail!("--output is required without --config");
                };
                RunConfig::new(engine, out)
            }
        };
        if let Some(e) = engine {
            if cfg.engine != e {
                bail!(
                    "configuration selects engine {}, but this command runs {}",
                    cfg.engine.as_str(),
                    e.as_str()
                );
            }
        }
        cfg.apply_overrides(&self.overrides());
        Ok(cfg)
    }

    fn options(&self) -> RunOptions {
        RunOptions {
            resume: self.resume,
            max_cells: self.max_cells,
        }
    }
}

fn execute(cfg: RunConfig, args: &RunArgs) -> Result<()> {
    cfg.validate()?;
    let result = run(&cfg, args.options())?;
    report(&result);
    if args.render && result.is_complete() {
        let figures = render_path(&result.dir, &result.dir.join("figures"))?;
        println!("rendered {} figures", figures.len());
    }
    Ok(())
}

fn report(r: &SweepResult) {
    let failed = r.cells.iter().filter(|c| !c.is_ok()).count();
    println!(
        "{}: {} cells done, {} failed, {} pending -> {}",
        r.engine.as_str(),
        r.cells.len(),
        failed,
        r.pending,
        r.dir.display()
    );
    for c in r.cells.iter().filter(|c| !c.is_ok()) {
        eprintln!("cell {:?} failed: {}", c.indices, c.error);
    }
}

#[derive(Serialize)]
struct Analysis {
    samples: usize,
    undefined: usize,
    sync: SyncMeasure,
    sync_stderr: SyncMeasure,
    histogram_sync: SyncMeasure,
    bimodality: Bimodality,
    bimodal: bool,
    switch_count: usize,
    tau0: f64,
    tau0_stderr: f64,
    tau_pi: f64,
    tau_pi_stderr: f64,
    p_zero: f64,
    p_pi: f64,
    photons: f64,
}

fn analyze(a: &AnalyzeArgs) -> Result<()> {
    let file = fs::File::open(&a.trajectory)
        .with_context(|| format!("opening {}", a.trajectory.display()))?;
    let traj = Trajectory::read_csv(BufReader::new(file), &a.trajectory)?;
    let ps = relative_phase_with_floor(&traj, a.floor)?;
    let h = histogram(&ps, a.bins)?;
    let cfg = ResidenceConfig::for_frequency(traj.params.cell1.omega);
    let res = residence_times(&ps, &cfg);
    let bm = bimodality(&h, std::f64::consts::FRAC_PI_4);
    let out = &a.output;
    fs::create_dir_all(out)?;
    let write_csv =
        |name: &str, f: &dyn Fn(&mut Vec<u8>) -> omsync_core::Result<()>| -> Result<()> {
            let mut buf = Vec::new();
            f(&mut buf)?;
            fs::write(out.join(name), buf)?;
            Ok(())
        };
    write_csv("phase.csv", &|b| ps.write_csv(b))?;
    write_csv("histogram.csv", &|b| h.write_csv(b))?;
    write_csv("residence.csv", &|b| res.write_csv(b))?;
    let summary = Analysis {
        samples: ps.len(),
        undefined: ps.undefined_count(),
        sync: sync_measure(&ps),
        sync_stderr: sync_measure_stderr(&ps, a.blocks),
        histogram_sync: h.sync_measure(),
        bimodal: bm.is_bimodal(0.0),
        bimodality: bm,
        switch_count: res.switch_count,
        tau0: res.zero.mean(),
        tau0_stderr: res.zero.stderr(),
        tau_pi: res.pi.mean(),
        tau_pi_stderr: res.pi.stderr(),
        p_zero: res.p_zero,
        p_pi: res.p_pi,
        photons: omsync_core::noise_budget::photons_from_trajectory(&traj),
    };
    fs::write(
        out.join("analysis.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    println!(
        "analyzed {} samples: <cos> = {:.4}, switches = {}, p0 = {:.3}, ppi = {:.3} -> {}",
        summary.samples,
        summary.sync.mean_cos,
        summary.switch_count,
        summary.p_zero,
        summary.p_pi,
        out.display()
    );
    if a.render {
        let figs = out.join("figures");
        let mut n = 0;
        for f in ["histogram.csv", "phase.csv", "residence.csv"] {
            // No figure for a run without complete dwells.
            match render_path(&out.join(f), &figs) {
                Ok(v) => n += v.len(),
                Err(e) => eprintln!("skipping {f}: {e:#}"),
            }
        }
        println!("rendered {n} figures");
    }
    Ok(())
}

fn default_render_dir(input: &Path) -> PathBuf {
    if input.is_dir() {
        input.join("figures")
    } else {
        input.parent().map(Path::to_path_buf).unwrap_or_default()
    }
}

pub fn dispatch(cli: Cli) -> Result<()> {
    init_workers().with_context(|| format!("reading {WORKERS_ENV}"))?;
    match cli.command {
        Command::Simulate(a) => execute(a.config(Some(Engine::Langevin))?, &a),
        Command::Jump { run, n_opt, n_mech } => {
            let mut cfg = run.config(Some(Engine::Mcwf))?;
            if n_opt.is_some() || n_mech.is_some() || cfg.mcwf.is_none() {
                let prev = cfg.mcwf.clone();
                cfg.mcwf = Some(McwfSettings {
                    n_opt: n_opt.or(prev.as_ref().map(|m| m.n_opt)).unwrap_or(2),
                    n_mech: n_mech.or(prev.as_ref().map(|m| m.n_mech)).unwrap_or(4),
                    record_every: prev.as_ref().map_or(100, |m| m.record_every),
                    initial: prev.map_or(omsync_core::mcwf::InitialFock::Vacuum, |m| m.initial),
                });
            }
            execute(cfg, &run)
        }
        Command::Sweep(a) => execute(a.config(None)?, &a),
        Command::Analyze(a) => analyze(&a),
        Command::PhaseModel {
            run,
            delta_omega,
            s1,
            s2,
        } => {
            let mut cfg = run.config(Some(Engine::PhaseModel))?;
            let mut m = cfg.model.unwrap_or(HopfKuramotoParams::new(0.0, 0.1, 0.0));
            m.delta_omega = delta_omega.unwrap_or(m.delta_omega);
            m.s1 = s1.unwrap_or(m.s1);
            m.s2 = s2.unwrap_or(m.s2);
            cfg.model = Some(m);
            execute(cfg, &run)
        }
        Command::NoiseBudget { run, n_photons } => {
            let mut cfg = run.config(Some(Engine::NoiseBudget))?;
            if n_photons.is_some() {
                cfg.analysis.n_photons = n_photons;
            }
            execute(cfg, &run)
        }
        Command::ThresholdScan(a) => execute(a.config(Some(Engine::ThresholdScan))?, &a),
        Command::Render { input, output } => {
            let out = output.unwrap_or_else(|| default_render_dir(&input));
            let files = render_path(&input, &out)?;
            for f in &files {
                println!("{}", f.display());
            }
            Ok(())
        }
        Command::Schema => {
            print!("{RUN_CONFIG_SCHEMA}");
            Ok(())
        }
    }
}

/// Parses `args` and runs the command.
pub fn main_with<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    dispatch(Cli::parse_from(args))
}
