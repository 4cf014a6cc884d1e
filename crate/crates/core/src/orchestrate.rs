//! Run configuration, parameter sweeps and the on-disk run layout.
//!
//! A run directory holds `config-snapshot.json`, one CSV per grid cell under
//! `cells/` (named by grid indices), `manifest.json` and, once every cell is
//! done, `summary.csv`. Cell files are written atomically, so a run that was
//! interrupted resumes from the cells already on disk.

use std::f64::consts::TAU;
use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::effective::{classify_regime, effective_potential_on, HopfKuramotoParams};
use crate::error::{invalid, Error, Result};
use crate::mcwf::{run_trajectories, FockSpace, InitialFock, McwfConfig};
use crate::noise_budget::NoiseBudget;
use crate::params::{crossover_point, presets, CrossoverPoint, DimerParams, QuantumScale};
use crate::phase::{
    histogram, histogram_from_counts, residence_times_pooled, sync_measure_stderr, wrap,
    PhaseSeries, ResidenceConfig, DEFAULT_AMPLITUDE_FLOOR, DEFAULT_BINS,
};
use crate::sde::{
    oscillation_energy, simulate, simulate_with, Mode, SimulationSpec, ThresholdScan,
};

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "OMSYNC_WORKERS";

/// JSON schema of [`RunConfig`].
pub const RUN_CONFIG_SCHEMA: &str = include_str!("../schema/run-config.schema.json");

pub const SNAPSHOT_FILE: &str = "config-snapshot.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const CELLS_DIR: &str = "cells";

/// Net phase winding, in turns per trajectory, above which a cell is drifting.
pub const DRIFT_TURNS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    Langevin,
    Mcwf,
    PhaseModel,
    NoiseBudget,
    ThresholdScan,
}

impl Engine {
    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Langevin => "langevin",
            Engine::Mcwf => "mcwf",
            Engine::PhaseModel => "phase-model",
            Engine::NoiseBudget => "noise-budget",
            Engine::ThresholdScan => "threshold-scan",
        }
    }

    /// Names accepted as sweep axes.
    pub fn parameter_names(self) -> &'static [&'static str] {
        match self {
            Engine::Langevin | Engine::Mcwf => &[
                "delta",
                "kappa",
                "gamma",
                "g0",
                "alpha_l",
                "n_th",
                "delta_offset",
                "coupling_k",
                "mechanical_detuning",
                "quantum_parameter",
                "rescaled_drive",
            ],
            Engine::PhaseModel => &["delta_omega", "s1", "s2", "k"],
            Engine::NoiseBudget => &[
                "delta",
                "kappa",
                "gamma",
                "g0",
                "alpha_l",
                "n_th",
                "delta_offset",
                "n_photons",
            ],
            Engine::ThresholdScan => &["delta", "kappa", "gamma", "g0", "alpha_l", "delta_offset"],
        }
    }

    /// Engine-specific result columns, in CSV order.
    pub fn result_columns(self) -> &'static [&'static str] {
        match self {
            Engine::Langevin => &[
                "mean_cos",
                "mean_cos_stderr",
                "mean_sin",
                "mean_sin_stderr",
                "tau0",
                "tau0_stderr",
                "tau_pi",
                "tau_pi_stderr",
                "switch_count",
                "p_zero",
                "p_pi",
                "winding",
                "photons",
                "regime",
            ],
            Engine::Mcwf => &[
                "mean_cos",
                "mean_cos_stderr",
                "mean_sin",
                "mean_sin_stderr",
                "n_a1",
                "n_a2",
                "n_b1",
                "n_b2",
                "jump_count",
                "max_leakage",
                "truncation_unsafe",
            ],
            Engine::PhaseModel => &["regime", "n_stable", "marginal"],
            Engine::NoiseBudget => &[
                "n_photons",
                "n_th",
                "s_sn_norm",
                "s_th_norm",
                "n_th_star",
                "cooperativity",
                "ratio_to_half_cooperativity",
                "resolved_sideband",
                "quantum_dominated",
            ],
            Engine::ThresholdScan => &["energy", "self_oscillating"],
        }
    }

    fn stochastic(self) -> bool {
        matches!(self, Engine::Langevin | Engine::Mcwf)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Integration {
    /// Step; defaults to 2π/200 (Langevin) and 0.01 (quantum jumps).
    #[serde(default)]
    pub dt: Option<f64>,
    pub t_total: f64,
    /// Defaults to min(2000·2π, t_total/2).
    #[serde(default)]
    pub burn_in: Option<f64>,
    #[serde(default)]
    pub sample_stride: Option<u32>,
}

impl Default for Integration {
    fn default() -> Self {
        Self {
            dt: None,
            t_total: 1e4,
            burn_in: None,
            sample_stride: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSettings {
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Trajectories per cell.
    #[serde(default = "default_n_traj")]
    pub n_traj: usize,
    /// Thermal occupancy of both mechanical baths; overrides the cell values.
    #[serde(default)]
    pub n_th: Option<f64>,
    /// Drop every noise term (Langevin only).
    #[serde(default)]
    pub noiseless: bool,
}

fn default_seed() -> u64 {
    1
}
fn default_n_traj() -> usize {
    1
}

impl Default for NoiseSettings {
    fn default() -> Self {
        Self {
            seed: default_seed(),
            n_traj: default_n_traj(),
            n_th: None,
            noiseless: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McwfSettings {
    pub n_opt: usize,
    pub n_mech: usize,
    #[serde(default = "default_record_every")]
    pub record_every: u64,
    #[serde(default = "default_initial")]
    pub initial: InitialFock,
}

fn default_record_every() -> u64 {
    100
}
fn default_initial() -> InitialFock {
    InitialFock::Vacuum
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSettings {
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Batches for the standard error of single-trajectory cells.
    #[serde(default = "default_blocks")]
    pub blocks: usize,
    /// Defaults to [`ResidenceConfig::for_frequency`] of cell 1.
    #[serde(default)]
    pub residence: Option<ResidenceConfig>,
    /// Intracavity photon number for the noise budget.
    #[serde(default)]
    pub n_photons: Option<f64>,
    /// Also write every trajectory and its phase series.
    #[serde(default)]
    pub write_series: bool,
}

fn default_bins() -> usize {
    DEFAULT_BINS
}
fn default_blocks() -> usize {
    20
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        Self {
            bins: default_bins(),
            blocks: default_blocks(),
            residence: None,
            n_photons: None,
            write_series: false,
        }
    }
}

/// One sweep axis; `points` values from `min` to `max` inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub points: usize,
    /// Geometric spacing.
    #[serde(default)]
    pub log: bool,
}

impl SweepAxis {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.min];
        }
        let last = (self.points - 1) as f64;
        (0..self.points)
            .map(|i| {
                let f = i as f64 / last;
                if self.log {
                    (self.min.ln() + f * (self.max.ln() - self.min.ln())).exp()
                } else {
                    self.min + f * (self.max - self.min)
                }
            })
            .collect()
    }
}

fn default_params() -> DimerParams {
    presets::crossover_dimer(0.15)
}

/// A complete run: engine, parameters, integration, noise, analysis, sweep
/// axes and output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub engine: Engine,
    #[serde(default = "default_params")]
    pub params: DimerParams,
    /// Integrate the rescaled equations at this point of the crossover.
    #[serde(default)]
    pub quantum_scale: Option<QuantumScale>,
    /// Reduced phase model parameters.
    #[serde(default)]
    pub model: Option<HopfKuramotoParams>,
    #[serde(default)]
    pub integration: Integration,
    #[serde(default)]
    pub noise: NoiseSettings,
    #[serde(default)]
    pub mcwf: Option<McwfSettings>,
    #[serde(default)]
    pub analysis: AnalysisSettings,
    #[serde(default)]
    pub threshold: Option<ThresholdScan>,
    /// Zero, one or two axes.
    #[serde(default)]
    pub sweep: Vec<SweepAxis>,
    pub output: PathBuf,
}

/// Command-line overrides of top-level scalars.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n_traj: Option<usize>,
    pub n_th: Option<f64>,
    pub dt: Option<f64>,
    pub t_total: Option<f64>,
    pub burn_in: Option<f64>,
    pub coupling_k: Option<f64>,
    pub quantum_parameter: Option<f64>,
    pub output: Option<PathBuf>,
}

impl RunConfig {
    /// Parses and validates a JSON document. Unknown or mistyped fields are
    /// reported with their name, line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn new(engine: Engine, output: impl Into<PathBuf>) -> Self {
        Self {
            engine,
            params: default_params(),
            quantum_scale: None,
            model: None,
            integration: Integration::default(),
            noise: NoiseSettings::default(),
            mcwf: None,
            analysis: AnalysisSettings::default(),
            threshold: None,
            sweep: Vec::new(),
            output: output.into(),
        }
    }

    pub fn apply_overrides(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.noise.seed = v;
        }
        if let Some(v) = o.n_traj {
            self.noise.n_traj = v;
        }
        if let Some(v) = o.n_th {
            self.noise.n_th = Some(v);
        }
        if let Some(v) = o.dt {
            self.integration.dt = Some(v);
        }
        if let Some(v) = o.t_total {
            self.integration.t_total = v;
        }
        if let Some(v) = o.burn_in {
            self.integration.burn_in = Some(v);
        }
        if let Some(v) = o.coupling_k {
            self.params.coupling_k = v;
        }
        if let Some(v) = o.quantum_parameter {
            let mut s = self.quantum_scale.unwrap_or(QuantumScale {
                quantum_parameter: v,
                rescaled_drive: presets::CROSSOVER_RESCALED_DRIVE,
            });
            s.quantum_parameter = v;
            self.quantum_scale = Some(s);
        }
        if let Some(v) = &o.output {
            self.output = v.clone();
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweep.len() > 2 {
            return Err(invalid("sweep", "at most two axes"));
        }
        let names = self.engine.parameter_names();
        for (k, a) in self.sweep.iter().enumerate() {
            if !names.contains(&a.name.as_str()) {
                return Err(Error::Config(format!(
                    "sweep axis `{}` is not a parameter of engine {}; expected one of {}",
                    a.name,
                    self.engine.as_str(),
                    names.join(", ")
                )));
            }
            if a.points == 0 {
                return Err(invalid("points", "grid size must be >= 1"));
            }
            if !a.min.is_finite() || !a.max.is_finite() || (a.log && !(a.min > 0.0 && a.max > 0.0))
            {
                return Err(invalid("sweep", format!("bad range for axis `{}`", a.name)));
            }
            if self.sweep[..k].iter().any(|b| b.name == a.name) {
                return Err(invalid("sweep", format!("axis `{}` repeated", a.name)));
            }
        }
        if self.noise.n_traj == 0 {
            return Err(invalid("n_traj", "must be >= 1"));
        }
        if self.analysis.bins == 0 || self.analysis.blocks < 2 {
            return Err(invalid("analysis", "bins must be >= 1 and blocks >= 2"));
        }
        if self.engine == Engine::Mcwf && self.mcwf.is_none() {
            return Err(Error::Config("engine mcwf needs an `mcwf` section".into()));
        }
        if self.engine == Engine::NoiseBudget
            && self.analysis.n_photons.is_none()
            && !self.sweep.iter().any(|a| a.name == "n_photons")
        {
            return Err(Error::Config(
                "engine noise-budget needs `analysis.n_photons` or an n_photons axis".into(),
            ));
        }
        self.params.validate()?;
        if let Some(s) = &self.quantum_scale {
            s.validate()?;
        }
        Ok(())
    }

    /// Grid shape; a run without axes is a single cell.
    pub fn shape(&self) -> Vec<usize> {
        self.sweep.iter().map(|a| a.points).collect()
    }

    pub fn cell_count(&self) -> usize {
        self.shape().iter().product()
    }

    /// Grid indices of flat cell `c` (last axis fastest).
    pub fn indices(&self, mut c: usize) -> Vec<usize> {
        let shape = self.shape();
        let mut idx = vec![0; shape.len()];
        for k in (0..shape.len()).rev() {
            idx[k] = c % shape[k];
            c /= shape[k];
        }
        idx
    }

    /// Stream ids used by flat cell `c`.
    pub fn streams(&self, c: usize) -> Range<u64> {
        let n = self.noise.n_traj as u64;
        if self.engine.stochastic() {
            c as u64 * n..(c as u64 + 1) * n
        } else {
            0..0
        }
    }

    fn without_output(&self) -> Self {
        Self {
            output: PathBuf::new(),
            ..self.clone()
        }
    }

    /// Columns of every cell row and of `summary.csv`.
    pub fn columns(&self) -> Vec<String> {
        let mut c: Vec<String> = Vec::new();
        for k in 0..self.sweep.len() {
            c.push(["i", "j"][k].to_string());
        }
        c.extend(self.sweep.iter().map(|a| a.name.clone()));
        c.push("status".into());
        c.extend(self.engine.result_columns().iter().map(|s| s.to_string()));
        c.extend(["seed", "stream_lo", "stream_hi", "n_traj", "error"].map(String::from));
        c
    }
}

/// Parameters of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellPoint {
    pub params: DimerParams,
    pub scale: Option<QuantumScale>,
    pub model: HopfKuramotoParams,
    pub n_photons: Option<f64>,
}

impl CellPoint {
    fn base(cfg: &RunConfig) -> Self {
        let mut params = cfg.params;
        if let Some(n) = cfg.noise.n_th {
            params.cell1.n_th = n;
            params.cell2.n_th = n;
        }
        Self {
            params,
            scale: cfg.quantum_scale,
            model: cfg.model.unwrap_or(HopfKuramotoParams::new(0.0, 0.1, 0.0)),
            n_photons: cfg.analysis.n_photons,
        }
    }

    fn set(&mut self, name: &str, v: f64) -> Result<()> {
        let both = |p: &mut DimerParams, f: &dyn Fn(&mut crate::params::OmParams)| {
            f(&mut p.cell1);
            f(&mut p.cell2);
        };
        match name {
            "delta" => both(&mut self.params, &|c| c.delta = v),
            "kappa" => both(&mut self.params, &|c| c.kappa = v),
            "gamma" => both(&mut self.params, &|c| c.gamma = v),
            "g0" => both(&mut self.params, &|c| c.g0 = v),
            "alpha_l" => both(&mut self.params, &|c| c.alpha_l = v),
            "n_th" => both(&mut self.params, &|c| c.n_th = v),
            "delta_offset" => {
                self.params.cell1.delta_offset = 0.0;
                self.params.cell2.delta_offset = v;
            }
            "coupling_k" => self.params.coupling_k = v,
            "mechanical_detuning" => self.params = self.params.with_mechanical_detuning(v)?,
            "quantum_parameter" | "rescaled_drive" => {
                let mut s = self.scale.unwrap_or_else(|| QuantumScale::of(&self.params));
                if name == "quantum_parameter" {
                    s.quantum_parameter = v;
                } else {
                    s.rescaled_drive = v;
                }
                self.scale = Some(s);
            }
            "delta_omega" => self.model.delta_omega = v,
            "s1" => self.model.s1 = v,
            "s2" => self.model.s2 = v,
            "k" => self.model = HopfKuramotoParams::kuramoto(self.model.delta_omega, v),
            "n_photons" => self.n_photons = Some(v),
            _ => return Err(Error::Config(format!("unknown parameter `{name}`"))),
        }
        Ok(())
    }

    /// Parameters with g0 and α_L materialized from the crossover scale.
    fn raw_params(&self) -> Result<DimerParams> {
        match self.scale {
            None => Ok(self.params),
            Some(s) => match crossover_point(s, self.params)? {
                CrossoverPoint::Quantum(p) => Ok(p),
                CrossoverPoint::ClassicalLimit(_) => Err(invalid(
                    "quantum_parameter",
                    "the quantum-jump engine needs g0/κ > 0",
                )),
            },
        }
    }
}

/// Outcome of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellRecord {
    pub indices: Vec<usize>,
    pub coords: Vec<f64>,
    /// `ok` or `failed`.
    pub status: String,
    /// Engine columns, formatted.
    pub values: Vec<String>,
    pub seed: u64,
    pub streams: Range<u64>,
    pub n_traj: usize,
    pub error: String,
}

impl CellRecord {
    /// Values in [`RunConfig::columns`] order.
    pub fn row(&self) -> Vec<String> {
        let mut r: Vec<String> = self.indices.iter().map(usize::to_string).collect();
        r.extend(self.coords.iter().map(|v| fmt_f64(*v)));
        r.push(self.status.clone());
        r.extend(self.values.iter().cloned());
        r.extend([
            self.seed.to_string(),
            self.streams.start.to_string(),
            self.streams.end.to_string(),
            self.n_traj.to_string(),
            self.error.clone(),
        ]);
        r
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Cell records of a run in flat index order.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub dir: PathBuf,
    pub engine: Engine,
    pub columns: Vec<String>,
    pub cells: Vec<CellRecord>,
    /// Cells still to be computed.
    pub pending: usize,
}

impl SweepResult {
    pub fn is_complete(&self) -> bool {
        self.pending == 0
    }

    /// Numeric value of column `name` in cell `c`; None when empty or absent.
    pub fn value(&self, c: usize, name: &str) -> Option<f64> {
        let row = self.cells[c].row();
        let k = self.columns.iter().position(|n| n == name)?;
        row[k].parse().ok()
    }

    pub fn text(&self, c: usize, name: &str) -> Option<String> {
        let k = self.columns.iter().position(|n| n == name)?;
        self.cells[c].row().get(k).cloned()
    }
}

/// Deterministic float formatting (shortest round-trip form).
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Writes `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn csv_bytes(rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Stem of the files belonging to one cell, e.g. `cell_003_011`.
pub fn cell_stem(indices: &[usize]) -> String {
    let mut s = String::from("cell");
    for i in indices {
        s.push_str(&format!("_{i:03}"));
    }
    s
}

/// Execution options of [`run`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Reuse cell files already present for the same configuration.
    pub resume: bool,
    /// Stop after computing this many new cells.
    pub max_cells: Option<usize>,
}

/// Runs every cell of `cfg` and writes the run directory.
pub fn run(cfg: &RunConfig, opts: RunOptions) -> Result<SweepResult> {
    cfg.validate()?;
    let dir = cfg.output.clone();
    let cells_dir = dir.join(CELLS_DIR);
    fs::create_dir_all(&cells_dir)?;
    let snapshot_path = dir.join(SNAPSHOT_FILE);
    let snapshot = cfg.to_json()? + "\n";
    if snapshot_path.exists() {
        let old: RunConfig = serde_json::from_str(&fs::read_to_string(&snapshot_path)?)?;
        if opts.resume && old.without_output() != cfg.without_output() {
            return Err(Error::Config(format!(
                "{} holds a run with a different configuration",
                dir.display()
            )));
        }
    }
    write_atomic(&snapshot_path, snapshot.as_bytes())?;

    let columns = cfg.columns();
    let n = cfg.cell_count();
    let mut done: Vec<Option<CellRecord>> = vec![None; n];
    if opts.resume {
        for (c, slot) in done.iter_mut().enumerate() {
            let path = cells_dir.join(format!("{}.csv", cell_stem(&cfg.indices(c))));
            if path.exists() {
                *slot = read_cell(&path, cfg, c, &columns).ok();
            }
        }
    }
    let mut todo: Vec<usize> = (0..n).filter(|&c| done[c].is_none()).collect();
    if let Some(m) = opts.max_cells {
        todo.truncate(m);
    }
    let fresh: Vec<(usize, CellRecord)> = todo
        .par_iter()
        .map(|&c| {
            let rec = run_cell(cfg, c, &cells_dir)?;
            let path = cells_dir.join(format!("{}.csv", cell_stem(&rec.indices)));
            write_atomic(&path, &csv_bytes(&[columns.clone(), rec.row()])?)?;
            Ok((c, rec))
        })
        .collect::<Result<_>>()?;
    for (c, rec) in fresh {
        done[c] = Some(rec);
    }

    let pending = done.iter().filter(|d| d.is_none()).count();
    write_manifest(&dir, cfg, &done)?;
    let cells: Vec<CellRecord> = done.into_iter().flatten().collect();
    if pending == 0 {
        let mut rows = vec![columns.clone()];
        rows.extend(cells.iter().map(CellRecord::row));
        write_atomic(&dir.join(SUMMARY_FILE), &csv_bytes(&rows)?)?;
    }
    Ok(SweepResult {
        dir,
        engine: cfg.engine,
        columns,
        cells,
        pending,
    })
}

#[derive(Serialize)]
struct ManifestCell {
    indices: Vec<usize>,
    coords: Vec<f64>,
    file: String,
    status: String,
    seed: u64,
    stream_lo: u64,
    stream_hi: u64,
    n_traj: usize,
}

#[derive(Serialize)]
struct Manifest<'a> {
    software: &'static str,
    version: &'static str,
    engine: &'static str,
    axes: &'a [SweepAxis],
    shape: Vec<usize>,
    seed: u64,
    worker_env: &'static str,
    complete: bool,
    summary: Option<&'static str>,
    cells: Vec<ManifestCell>,
}

fn write_manifest(dir: &Path, cfg: &RunConfig, done: &[Option<CellRecord>]) -> Result<()> {
    let cells = (0..done.len())
        .map(|c| {
            let indices = cfg.indices(c);
            let streams = cfg.streams(c);
            ManifestCell {
                coords: coords(cfg, &indices),
                file: format!("{CELLS_DIR}/{}.csv", cell_stem(&indices)),
                status: done[c]
                    .as_ref()
                    .map_or_else(|| "pending".into(), |r| r.status.clone()),
                indices,
                seed: cfg.noise.seed,
                stream_lo: streams.start,
                stream_hi: streams.end,
                n_traj: if cfg.engine.stochastic() {
                    cfg.noise.n_traj
                } else {
                    0
                },
            }
        })
        .collect();
    let complete = done.iter().all(Option::is_some);
    let m = Manifest {
        software: "omsync",
        version: env!("CARGO_PKG_VERSION"),
        engine: cfg.engine.as_str(),
        axes: &cfg.sweep,
        shape: cfg.shape(),
        seed: cfg.noise.seed,
        worker_env: WORKERS_ENV,
        complete,
        summary: complete.then_some(SUMMARY_FILE),
        cells,
    };
    write_atomic(
        &dir.join(MANIFEST_FILE),
        (serde_json::to_string_pretty(&m)? + "\n").as_bytes(),
    )
}

fn coords(cfg: &RunConfig, indices: &[usize]) -> Vec<f64> {
    cfg.sweep
        .iter()
        .zip(indices)
        .map(|(a, &i)| a.values()[i])
        .collect()
}

fn read_cell(path: &Path, cfg: &RunConfig, c: usize, columns: &[String]) -> Result<CellRecord> {
    let bad = |reason: &str| Error::Data {
        path: path.to_path_buf(),
        reason: reason.into(),
    };
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    let rows: Vec<csv::StringRecord> = r.records().collect::<std::result::Result<_, _>>()?;
    if rows.len() != 2
        || rows[0].iter().ne(columns.iter().map(String::as_str))
        || rows[1].len() != columns.len()
    {
        return Err(bad("unexpected layout"));
    }
    let row: Vec<String> = rows[1].iter().map(String::from).collect();
    let indices = cfg.indices(c);
    let d = indices.len();
    let coords = coords(cfg, &indices);
    if row[..d].iter().ne(indices
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .iter())
        || row[d..2 * d].iter().ne(coords
            .iter()
            .map(|v| fmt_f64(*v))
            .collect::<Vec<_>>()
            .iter())
    {
        return Err(bad("grid coordinates do not match the configuration"));
    }
    let k = cfg.engine.result_columns().len();
    let tail = &row[2 * d + 1 + k..];
    let streams = cfg.streams(c);
    if tail[0] != cfg.noise.seed.to_string() || tail[1] != streams.start.to_string() {
        return Err(bad("seed range does not match the configuration"));
    }
    Ok(CellRecord {
        indices,
        coords,
        status: row[2 * d].clone(),
        values: row[2 * d + 1..2 * d + 1 + k].to_vec(),
        seed: cfg.noise.seed,
        streams,
        n_traj: tail[3].parse().map_err(|_| bad("n_traj"))?,
        error: tail[4].clone(),
    })
}

/// Computes flat cell `c`; engine errors become a failed cell.
pub fn run_cell(cfg: &RunConfig, c: usize, cells_dir: &Path) -> Result<CellRecord> {
    let indices = cfg.indices(c);
    let coords = coords(cfg, &indices);
    let streams = cfg.streams(c);
    let stem = cells_dir.join(cell_stem(&indices));
    let outcome = (|| {
        let mut point = CellPoint::base(cfg);
        for (a, v) in cfg.sweep.iter().zip(&coords) {
            point.set(&a.name, *v)?;
        }
        match cfg.engine {
            Engine::Langevin => langevin_cell(cfg, &point, streams.clone(), &stem),
            Engine::Mcwf => mcwf_cell(cfg, &point, streams.clone(), &stem),
            Engine::PhaseModel => phase_model_cell(&point, &stem),
            Engine::NoiseBudget => noise_budget_cell(&point),
            Engine::ThresholdScan => threshold_cell(cfg, &point),
        }
    })();
    let k = cfg.engine.result_columns().len();
    let (status, values, error) = match outcome {
        Ok(v) => ("ok", v, String::new()),
        Err(e @ Error::Io(_)) => return Err(e),
        Err(e) => ("failed", vec![String::new(); k], e.to_string()),
    };
    debug_assert_eq!(values.len(), k);
    Ok(CellRecord {
        indices,
        coords,
        status: status.into(),
        values,
        seed: cfg.noise.seed,
        n_traj: if cfg.engine.stochastic() {
            cfg.noise.n_traj
        } else {
            0
        },
        streams,
        error,
    })
}

fn sidecar(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn langevin_spec(cfg: &RunConfig, point: &CellPoint, stream: u64) -> SimulationSpec {
    let mode = match point.scale {
        Some(scale) => Mode::Rescaled { scale },
        None => Mode::Raw,
    };
    let mut spec = SimulationSpec::new(
        point.params,
        mode,
        cfg.integration.t_total,
        cfg.noise.seed,
        stream,
    );
    if let Some(dt) = cfg.integration.dt {
        spec.dt = dt;
    }
    if let Some(b) = cfg.integration.burn_in {
        spec.burn_in = b;
    }
    if let Some(s) = cfg.integration.sample_stride {
        spec.sample_stride = s;
    }
    if cfg.noise.noiseless {
        spec = spec.noiseless();
    }
    spec
}

struct LangevinRun {
    phase: PhaseSeries,
    winding: f64,
    photons: f64,
}

fn langevin_run(
    cfg: &RunConfig,
    point: &CellPoint,
    stream: u64,
    stem: &Path,
) -> Result<LangevinRun> {
    let spec = langevin_spec(cfg, point, stream);
    spec.validate()?;
    let mut phase = PhaseSeries::with_capacity(0);
    let (mut photon_sum, mut count) = (0.0, 0usize);
    let mut record = |t: f64, s: &crate::sde::SemiclassicalState| {
        phase.push_state(t, s, DEFAULT_AMPLITUDE_FLOOR);
        photon_sum += 0.5 * (s.alpha1.norm_sqr() + s.alpha2.norm_sqr());
        count += 1;
    };
    if cfg.analysis.write_series {
        let traj = simulate(&spec)?;
        for (t, s) in traj.times.iter().zip(&traj.states) {
            record(*t, s);
        }
        let mut buf = Vec::new();
        traj.write_csv(&mut buf)?;
        write_atomic(&sidecar(stem, &format!(".traj_{stream}.csv")), &buf)?;
        let mut buf = Vec::new();
        phase.write_csv(&mut buf)?;
        write_atomic(&sidecar(stem, &format!(".phase_{stream}.csv")), &buf)?;
    } else {
        simulate_with(&spec, |t, s| record(t, s))?;
    }
    let mut winding = 0.0;
    let mut last: Option<f64> = None;
    for x in phase.defined_values() {
        if let Some(l) = last {
            winding += wrap(x - l);
        }
        last = Some(x);
    }
    let mean = photon_sum / count.max(1) as f64;
    let photons = match spec.mode {
        Mode::Raw => mean,
        Mode::Rescaled { scale } if scale.quantum_parameter > 0.0 => {
            let g0 = scale.quantum_parameter * spec.params.cell1.kappa;
            mean / (g0 * g0)
        }
        Mode::Rescaled { .. } => f64::NAN,
    };
    Ok(LangevinRun {
        phase,
        winding: winding / TAU,
        photons,
    })
}

fn langevin_cell(
    cfg: &RunConfig,
    point: &CellPoint,
    streams: Range<u64>,
    stem: &Path,
) -> Result<Vec<String>> {
    let runs: Vec<LangevinRun> = streams
        .into_par_iter()
        .map(|s| langevin_run(cfg, point, s, stem))
        .collect::<Result<_>>()?;
    for r in &runs {
        r.phase.check_defined()?;
    }
    let n = runs.len() as f64;

    let mut counts = vec![0u64; cfg.analysis.bins];
    for r in &runs {
        let h = histogram(&r.phase, cfg.analysis.bins)?;
        for (a, b) in counts.iter_mut().zip(&h.counts) {
            *a += b;
        }
    }
    let hist = histogram_from_counts(counts);
    let mut buf = Vec::new();
    hist.write_csv(&mut buf)?;
    write_atomic(&sidecar(stem, ".hist.csv"), &buf)?;

    let (mut sc, mut ss, mut m) = (0.0, 0.0, 0usize);
    let mut per_run = Vec::with_capacity(runs.len());
    for r in &runs {
        let (mut c, mut s, mut k) = (0.0, 0.0, 0usize);
        for x in r.phase.defined_values() {
            c += x.cos();
            s += x.sin();
            k += 1;
        }
        sc += c;
        ss += s;
        m += k;
        per_run.push((c / k as f64, s / k as f64));
    }
    let (mean_cos, mean_sin) = (sc / m as f64, ss / m as f64);
    let (cos_se, sin_se) = if runs.len() >= 2 {
        let var = |f: &dyn Fn(&(f64, f64)) -> f64, mu: f64| {
            per_run.iter().map(|p| (f(p) - mu).powi(2)).sum::<f64>() / (n - 1.0)
        };
        (
            (var(&|p| p.0, mean_cos) / n).sqrt(),
            (var(&|p| p.1, mean_sin) / n).sqrt(),
        )
    } else {
        let e = sync_measure_stderr(&runs[0].phase, cfg.analysis.blocks);
        (e.mean_cos, e.mean_sin)
    };

    let res_cfg = cfg
        .analysis
        .residence
        .unwrap_or_else(|| ResidenceConfig::for_frequency(point.params.cell1.omega));
    let series: Vec<PhaseSeries> = runs.iter().map(|r| r.phase.clone()).collect();
    let res = residence_times_pooled(&series, &res_cfg);
    let mut buf = Vec::new();
    res.write_csv(&mut buf)?;
    write_atomic(&sidecar(stem, ".residence.csv"), &buf)?;

    let winding = runs.iter().map(|r| r.winding).sum::<f64>() / n;
    let photons = runs.iter().map(|r| r.photons).sum::<f64>() / n;
    let regime = langevin_regime(winding, res.p_zero, res.p_pi);
    Ok(vec![
        fmt_f64(mean_cos),
        fmt_f64(cos_se),
        fmt_f64(mean_sin),
        fmt_f64(sin_se),
        fmt_f64(res.zero.mean()),
        fmt_f64(res.zero.stderr()),
        fmt_f64(res.pi.mean()),
        fmt_f64(res.pi.stderr()),
        res.switch_count.to_string(),
        fmt_f64(res.p_zero),
        fmt_f64(res.p_pi),
        fmt_f64(winding),
        fmt_f64(photons),
        regime.into(),
    ])
}

/// Label of a simulated cell: `drift` when the phase winds by at least
/// [`DRIFT_TURNS`], `mixed` when both states hold at least 10 % of the time,
/// otherwise the dominant state.
pub fn langevin_regime(winding_turns: f64, p_zero: f64, p_pi: f64) -> &'static str {
    if winding_turns.abs() >= DRIFT_TURNS {
        "drift"
    } else if p_zero >= 0.1 && p_pi >= 0.1 {
        "mixed"
    } else if p_zero > p_pi {
        "zero-sync"
    } else if p_pi > p_zero {
        "pi-sync"
    } else {
        "undefined"
    }
}

fn mcwf_cell(
    cfg: &RunConfig,
    point: &CellPoint,
    streams: Range<u64>,
    stem: &Path,
) -> Result<Vec<String>> {
    let m = cfg
        .mcwf
        .as_ref()
        .ok_or_else(|| Error::Config("missing `mcwf` section".into()))?;
    let params = point.raw_params()?;
    let mut mc = McwfConfig::new(
        FockSpace::new(m.n_opt, m.n_mech),
        cfg.noise.n_traj,
        cfg.integration.t_total,
        cfg.integration.dt.unwrap_or(0.01),
        cfg.noise.seed,
    );
    mc.first_stream = streams.start;
    mc.record_every = m.record_every;
    mc.initial = m.initial.clone();
    let ens = run_trajectories(&params, &mc)?;
    let mut buf = Vec::new();
    ens.write_csv(&mut buf)?;
    write_atomic(&sidecar(stem, ".mcwf.csv"), &buf)?;

    // Time averages over the second half of the record.
    let from = ens.times.len() / 2;
    let avg = |k: usize, se: bool| {
        let src = if se { &ens.stderr } else { &ens.mean };
        let vals: Vec<f64> = (from..ens.times.len())
            .filter(|&i| ens.correlator_count[i] > 0 || k < 6)
            .map(|i| src[i][k])
            .filter(|v| v.is_finite())
            .collect();
        if vals.is_empty() {
            f64::NAN
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    };
    Ok(vec![
        fmt_f64(avg(6, false)),
        fmt_f64(avg(6, true)),
        fmt_f64(avg(7, false)),
        fmt_f64(avg(7, true)),
        fmt_f64(avg(0, false)),
        fmt_f64(avg(1, false)),
        fmt_f64(avg(2, false)),
        fmt_f64(avg(3, false)),
        ens.jump_count.to_string(),
        fmt_f64(ens.max_leakage),
        ens.truncation_unsafe.to_string(),
    ])
}

fn phase_model_cell(point: &CellPoint, stem: &Path) -> Result<Vec<String>> {
    point.model.validate()?;
    let cls = classify_regime(&point.model);
    let profile = effective_potential_on(&point.model, 512);
    let mut buf = Vec::new();
    profile.write_csv(&mut buf)?;
    write_atomic(&sidecar(stem, ".potential.csv"), &buf)?;
    Ok(vec![
        cls.regime.as_str().into(),
        cls.stable.len().to_string(),
        cls.marginal.to_string(),
    ])
}

fn noise_budget_cell(point: &CellPoint) -> Result<Vec<String>> {
    let n = point
        .n_photons
        .ok_or_else(|| Error::Config("missing photon number".into()))?;
    let cell = point.raw_params().unwrap_or(point.params).cell1;
    let b = NoiseBudget::compute(&cell, n, None)?;
    Ok(vec![
        fmt_f64(b.n_photons),
        fmt_f64(b.n_th),
        fmt_f64(b.s_sn_norm),
        fmt_f64(b.s_th_norm),
        fmt_f64(b.n_th_star),
        fmt_f64(b.cooperativity),
        fmt_f64(b.ratio_to_half_cooperativity),
        b.resolved_sideband.to_string(),
        b.quantum_dominated().to_string(),
    ])
}

fn threshold_cell(cfg: &RunConfig, point: &CellPoint) -> Result<Vec<String>> {
    let scan = cfg.threshold.unwrap_or_default();
    let e = oscillation_energy(&point.params.cell1, &scan)?;
    Ok(vec![fmt_f64(e), (e > scan.energy_floor).to_string()])
}

/// Worker count from [`WORKERS_ENV`], if set.
pub fn worker_count() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Error::Config(format!(
                "{WORKERS_ENV} must be a positive integer, got `{v}`"
            ))),
        },
    }
}

/// Sizes the global worker pool from [`WORKERS_ENV`]; returns the pool size.
pub fn init_workers() -> Result<usize> {
    if let Some(n) = worker_count()? {
        // A pool that already exists keeps its size.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(rayon::current_num_threads())
}

/// Reads a finished or partial run back from its directory.
pub fn load_run(dir: &Path) -> Result<SweepResult> {
    let cfg: RunConfig = serde_json::from_str(&fs::read_to_string(dir.join(SNAPSHOT_FILE))?)?;
    let columns = cfg.columns();
    let mut cells = Vec::new();
    let n = cfg.cell_count();
    for c in 0..n {
        let path = dir
            .join(CELLS_DIR)
            .join(format!("{}.csv", cell_stem(&cfg.indices(c))));
        if path.exists() {
            cells.push(read_cell(&path, &cfg, c, &columns)?);
        }
    }
    Ok(SweepResult {
        dir: dir.to_path_buf(),
        engine: cfg.engine,
        columns,
        pending: n - cells.len(),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_values() {
        let a = SweepAxis {
            name: "coupling_k".into(),
            min: 0.1,
            max: 0.3,
            points: 3,
            log: false,
        };
        assert_eq!(a.values(), vec![0.1, 0.2, 0.3]);
        let l = SweepAxis {
            log: true,
            min: 1.0,
            max: 100.0,
            ..a.clone()
        };
        let v = l.values();
        assert!((v[1] - 10.0).abs() < 1e-12);
        let one = SweepAxis { points: 1, ..a };
        assert_eq!(one.values(), vec![0.1]);
    }

    #[test]
    fn indices_are_row_major() {
        let mut cfg = RunConfig::new(Engine::PhaseModel, "x");
        cfg.sweep = vec![
            SweepAxis {
                name: "s1".into(),
                min: 0.0,
                max: 1.0,
                points: 2,
                log: false,
            },
            SweepAxis {
                name: "s2".into(),
                min: 0.0,
                max: 1.0,
                points: 3,
                log: false,
            },
        ];
        assert_eq!(cfg.indices(0), vec![0, 0]);
        assert_eq!(cfg.indices(4), vec![1, 1]);
        assert_eq!(cfg_columns_head(&cfg), "i,j,s1,s2,status");
        assert_eq!(cell_stem(&[1, 12]), "cell_001_012");
    }

    fn cfg_columns_head(cfg: &RunConfig) -> String {
        cfg.columns()[..5].join(",")
    }

    #[test]
    fn unknown_field_is_named_with_position() {
        let err = RunConfig::from_json("{\n \"engine\": \"langevin\",\n \"outptu\": \"x\"\n}")
            .unwrap_err();
        let m = err.to_string();
        assert!(m.contains("outptu") && m.contains("line 3"), "{m}");
    }

    #[test]
    fn axis_must_name_a_parameter() {
        let mut cfg = RunConfig::new(Engine::Langevin, "x");
        cfg.sweep.push(SweepAxis {
            name: "s1".into(),
            min: 0.0,
            max: 1.0,
            points: 2,
            log: false,
        });
        assert!(cfg.validate().is_err());
        cfg.sweep[0].name = "coupling_k".into();
        cfg.sweep[0].points = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn regime_labels() {
        assert_eq!(langevin_regime(20.0, 0.5, 0.5), "drift");
        assert_eq!(langevin_regime(0.0, 0.5, 0.5), "mixed");
        assert_eq!(langevin_regime(0.0, 0.95, 0.05), "zero-sync");
        assert_eq!(langevin_regime(-1.0, 0.0, 1.0), "pi-sync");
    }
}
