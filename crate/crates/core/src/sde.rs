//! Semi-classical Langevin engine.
//!
//! The four complex amplitudes (α1, β1, α2, β2) obey
//!
//! ```text
//! α̇_j = (iΔ − κ/2) α_j + i g0 α_j (β_j + β_j*) − i α_L − √κ α_j,in
//! β̇_j = −(iΩ_j + Γ/2) β_j + i g0 |α_j|² + i K c(β_other) − √Γ β_j,in
//! ```
//!
//! with c(β) = β under the rotating-wave coupling and β + β* otherwise. The
//! input noises are complex white noise with ⟨ξ ξ*⟩ = δ(t − t')/2 for the
//! optical channel and (n_th + 1/2) δ(t − t') for the mechanical one.
//!
//! In rescaled mode the amplitudes are multiplied by g0, which removes g0 from
//! the drift entirely (g0 → 1, α_L → g0·α_L) and multiplies both noise
//! variances by g0². g0/κ = 0 is then exactly the noiseless classical limit.
//!
//! Integration: Heun predictor-corrector for the drift, with the additive
//! noise increment entering both stages once. Since the noise is additive,
//! Itô and Stratonovich readings coincide.

use std::f64::consts::TAU;
use std::io::{BufRead, Write};
use std::ops::{Add, Mul, Sub};
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::params::{DimerParams, OmParams, QuantumScale};
use crate::rng::{self, StreamRng};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Amplitudes of both cells at one instant. Also used for time derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SemiclassicalState {
    pub alpha1: Complex64,
    pub beta1: Complex64,
    pub alpha2: Complex64,
    pub beta2: Complex64,
}

impl SemiclassicalState {
    pub const ZERO: Self = Self {
        alpha1: Complex64::new(0.0, 0.0),
        beta1: Complex64::new(0.0, 0.0),
        alpha2: Complex64::new(0.0, 0.0),
        beta2: Complex64::new(0.0, 0.0),
    };

    pub fn is_finite(&self) -> bool {
        self.components()
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn components(&self) -> [Complex64; 4] {
        [self.alpha1, self.beta1, self.alpha2, self.beta2]
    }

    pub fn from_components(c: [Complex64; 4]) -> Self {
        Self {
            alpha1: c[0],
            beta1: c[1],
            alpha2: c[2],
            beta2: c[3],
        }
    }

    /// Largest modulus among the four components.
    pub fn max_norm(&self) -> f64 {
        self.components()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

impl Add for SemiclassicalState {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            alpha1: self.alpha1 + o.alpha1,
            beta1: self.beta1 + o.beta1,
            alpha2: self.alpha2 + o.alpha2,
            beta2: self.beta2 + o.beta2,
        }
    }
}

impl Sub for SemiclassicalState {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self {
            alpha1: self.alpha1 - o.alpha1,
            beta1: self.beta1 - o.beta1,
            alpha2: self.alpha2 - o.alpha2,
            beta2: self.beta2 - o.beta2,
        }
    }
}

impl Mul<f64> for SemiclassicalState {
    type Output = Self;
    fn mul(self, h: f64) -> Self {
        Self {
            alpha1: self.alpha1 * h,
            beta1: self.beta1 * h,
            alpha2: self.alpha2 * h,
            beta2: self.beta2 * h,
        }
    }
}

/// Which form of the equations is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mode {
    /// Physical amplitudes; g0 and α_L are taken from the parameters.
    Raw,
    /// Amplitudes multiplied by g0. Only (g0/κ, g0·α_L) from `scale` matter;
    /// g0 and α_L stored in the parameters are ignored.
    Rescaled { scale: QuantumScale },
}

#[derive(Debug, Clone, Copy)]
struct CellCoefficients {
    optical: Complex64,
    mechanical: Complex64,
    coupling: f64,
    drive: f64,
    sqrt_kappa: f64,
    sqrt_gamma: f64,
}

impl CellCoefficients {
    fn new(cell: &OmParams, coupling: f64, drive: f64) -> Self {
        Self {
            optical: Complex64::new(-0.5 * cell.kappa, cell.detuning()),
            mechanical: Complex64::new(-0.5 * cell.gamma, -cell.omega),
            coupling,
            drive,
            sqrt_kappa: cell.kappa.sqrt(),
            sqrt_gamma: cell.gamma.sqrt(),
        }
    }
}

/// Drift coefficients with the mode already folded in.
#[derive(Debug, Clone, Copy)]
pub struct DriftModel {
    cells: [CellCoefficients; 2],
    k: f64,
    rwa: bool,
}

impl DriftModel {
    pub fn new(p: &DimerParams, mode: &Mode) -> Self {
        let cell = |c: &OmParams| match mode {
            Mode::Raw => CellCoefficients::new(c, c.g0, c.alpha_l),
            Mode::Rescaled { scale } => CellCoefficients::new(c, 1.0, scale.rescaled_drive),
        };
        Self {
            cells: [cell(&p.cell1), cell(&p.cell2)],
            k: p.coupling_k,
            rwa: p.rwa_coupling,
        }
    }

    #[inline]
    fn mech_coupling(&self, other: Complex64) -> Complex64 {
        if self.rwa {
            I * self.k * other
        } else {
            I * (self.k * 2.0 * other.re)
        }
    }

    #[inline]
    pub fn eval(&self, s: &SemiclassicalState) -> SemiclassicalState {
        let [c1, c2] = &self.cells;
        let a1 =
            c1.optical * s.alpha1 + I * (c1.coupling * 2.0 * s.beta1.re) * s.alpha1 - I * c1.drive;
        let b1 = c1.mechanical * s.beta1
            + I * (c1.coupling * s.alpha1.norm_sqr())
            + self.mech_coupling(s.beta2);
        let a2 =
            c2.optical * s.alpha2 + I * (c2.coupling * 2.0 * s.beta2.re) * s.alpha2 - I * c2.drive;
        let b2 = c2.mechanical * s.beta2
            + I * (c2.coupling * s.alpha2.norm_sqr())
            + self.mech_coupling(s.beta1);
        SemiclassicalState {
            alpha1: a1,
            beta1: b1,
            alpha2: a2,
            beta2: b2,
        }
    }
}

/// Deterministic right-hand side of the raw Langevin equations.
pub fn drift(s: &SemiclassicalState, p: &DimerParams) -> SemiclassicalState {
    DriftModel::new(p, &Mode::Raw).eval(s)
}

/// Noise strengths and the random stream they are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// E|ΔW_opt|² / dt.
    pub optical_strength: f64,
    /// E|ΔW_mech|² / dt for each cell.
    pub mechanical_strength: [f64; 2],
    pub seed: u64,
    pub stream_id: u64,
}

impl NoiseSpec {
    pub fn noiseless(seed: u64, stream_id: u64) -> Self {
        Self {
            optical_strength: 0.0,
            mechanical_strength: [0.0; 2],
            seed,
            stream_id,
        }
    }

    /// Quantum (half-quantum) plus thermal noise appropriate for `mode`:
    /// 1/2 optical and n_th + 1/2 mechanical, both times g0² when rescaled.
    pub fn for_mode(p: &DimerParams, mode: &Mode, seed: u64, stream_id: u64) -> Self {
        let scale2 = |cell: &OmParams| match mode {
            Mode::Raw => 1.0,
            Mode::Rescaled { scale } => {
                let g0 = scale.quantum_parameter * cell.kappa;
                g0 * g0
            }
        };
        Self {
            optical_strength: 0.5 * scale2(&p.cell1),
            mechanical_strength: [
                (p.cell1.n_th + 0.5) * scale2(&p.cell1),
                (p.cell2.n_th + 0.5) * scale2(&p.cell2),
            ],
            seed,
            stream_id,
        }
    }

    pub fn is_silent(&self) -> bool {
        self.optical_strength == 0.0 && self.mechanical_strength == [0.0; 2]
    }

    pub fn rng(&self) -> StreamRng {
        rng::stream(self.seed, self.stream_id)
    }
}

/// Precomputed single-step integrator.
#[derive(Debug, Clone)]
pub struct Stepper {
    model: DriftModel,
    dt: f64,
    sigma_opt: [f64; 2],
    sigma_mech: [f64; 2],
    silent: bool,
}

impl Stepper {
    pub fn new(model: DriftModel, dt: f64, noise: &NoiseSpec) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(invalid("dt", format!("must be finite and > 0, got {dt}")));
        }
        // Complex increment −√rate·ΔW with E|ΔW|² = strength·dt, split evenly over
        // the two quadratures.
        let quad = |rate_sqrt: f64, strength: f64| rate_sqrt * (0.5 * strength * dt).sqrt();
        let [c1, c2] = &model.cells;
        Ok(Self {
            sigma_opt: [
                quad(c1.sqrt_kappa, noise.optical_strength),
                quad(c2.sqrt_kappa, noise.optical_strength),
            ],
            sigma_mech: [
                quad(c1.sqrt_gamma, noise.mechanical_strength[0]),
                quad(c2.sqrt_gamma, noise.mechanical_strength[1]),
            ],
            silent: noise.is_silent(),
            model,
            dt,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Additive noise added in one step: (−√κ ΔW_opt, −√Γ ΔW_mech) per cell.
    #[inline]
    pub fn noise_increment<R: Rng + ?Sized>(&self, rng: &mut R) -> SemiclassicalState {
        use rand_distr::StandardNormal;
        let mut draw = |sigma: f64| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(-sigma * re, -sigma * im)
        };
        SemiclassicalState {
            alpha1: draw(self.sigma_opt[0]),
            beta1: draw(self.sigma_mech[0]),
            alpha2: draw(self.sigma_opt[1]),
            beta2: draw(self.sigma_mech[1]),
        }
    }

    /// One Heun step. Noise is drawn even when silent strengths are zero
    /// only if `silent` is false, so noiseless runs consume no randomness.
    #[inline]
    pub fn advance<R: Rng + ?Sized>(
        &self,
        s: &SemiclassicalState,
        rng: &mut R,
    ) -> SemiclassicalState {
        let f0 = self.model.eval(s);
        let noise = if self.silent {
            SemiclassicalState::ZERO
        } else {
            self.noise_increment(rng)
        };
        let predictor = *s + f0 * self.dt + noise;
        let f1 = self.model.eval(&predictor);
        *s + (f0 + f1) * (0.5 * self.dt) + noise
    }
}

/// One raw-mode step from `s`. Fails with a stiffness error on non-finite output.
pub fn step<R: Rng + ?Sized>(
    s: &SemiclassicalState,
    p: &DimerParams,
    dt: f64,
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<SemiclassicalState> {
    let stepper = Stepper::new(DriftModel::new(p, &Mode::Raw), dt, noise)?;
    let next = stepper.advance(s, rng);
    if !next.is_finite() {
        return Err(Error::Stiffness { step: 0 });
    }
    Ok(next)
}

/// How the mechanical amplitudes are seeded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    /// α_j = 0, β_j = amplitude·e^{iφ_j} with independent uniform phases.
    /// `None` selects 0.1 (raw) or 0.01 (rescaled).
    RandomPhases {
        amplitude: Option<f64>,
    },
    /// α_j = 0, β_1 = β_2 = amplitude·e^{iφ} with one shared uniform phase.
    SharedPhase {
        amplitude: Option<f64>,
    },
    Explicit {
        state: SemiclassicalState,
    },
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition::RandomPhases { amplitude: None }
    }
}

impl InitialCondition {
    fn draw<R: Rng + ?Sized>(&self, mode: &Mode, rng: &mut R) -> SemiclassicalState {
        let default_amp = match mode {
            Mode::Raw => 0.1,
            Mode::Rescaled { .. } => 0.01,
        };
        match *self {
            InitialCondition::RandomPhases { amplitude } => {
                let a = amplitude.unwrap_or(default_amp);
                let p1 = rng::uniform_phase(rng);
                let p2 = rng::uniform_phase(rng);
                SemiclassicalState {
                    beta1: Complex64::from_polar(a, p1),
                    beta2: Complex64::from_polar(a, p2),
                    ..SemiclassicalState::ZERO
                }
            }
            InitialCondition::SharedPhase { amplitude } => {
                let a = amplitude.unwrap_or(default_amp);
                let b = Complex64::from_polar(a, rng::uniform_phase(rng));
                SemiclassicalState {
                    beta1: b,
                    beta2: b,
                    ..SemiclassicalState::ZERO
                }
            }
            InitialCondition::Explicit { state } => state,
        }
    }
}

/// Everything needed to integrate one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub params: DimerParams,
    pub mode: Mode,
    /// Total integrated time, burn-in included.
    pub t_total: f64,
    pub dt: f64,
    /// Initial stretch that is integrated but not recorded.
    pub burn_in: f64,
    /// Record every `sample_stride`-th step.
    pub sample_stride: u32,
    pub noise: NoiseSpec,
    #[serde(default)]
    pub initial: InitialCondition,
}

/// Default step 2π/(200·Ω1).
pub const DEFAULT_DT: f64 = TAU / 200.0;
/// Default burn-in: 2000 mechanical periods.
pub const DEFAULT_BURN_IN: f64 = 2000.0 * TAU;

impl SimulationSpec {
    /// Spec with default step, burn-in and stride, and the noise implied by `mode`.
    pub fn new(params: DimerParams, mode: Mode, t_total: f64, seed: u64, stream_id: u64) -> Self {
        let noise = match mode {
            Mode::Rescaled { scale } if scale.is_classical_limit() => {
                NoiseSpec::noiseless(seed, stream_id)
            }
            _ => NoiseSpec::for_mode(&params, &mode, seed, stream_id),
        };
        Self {
            params,
            mode,
            t_total,
            dt: DEFAULT_DT,
            burn_in: DEFAULT_BURN_IN.min(0.5 * t_total),
            sample_stride: 10,
            noise,
            initial: InitialCondition::default(),
        }
    }

    pub fn noiseless(mut self) -> Self {
        self.noise = NoiseSpec::noiseless(self.noise.seed, self.noise.stream_id);
        self
    }

    /// Largest admissible step 2π / (40·max(Ω, |Δ| + κ)).
    pub fn max_dt(&self) -> f64 {
        let fastest = self
            .params
            .cells()
            .iter()
            .map(|c| c.omega.max(c.detuning().abs() + c.kappa))
            .fold(0.0, f64::max);
        TAU / (40.0 * fastest)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if let Mode::Rescaled { scale } = &self.mode {
            scale.validate()?;
        }
        if !(self.t_total > 0.0) || !self.t_total.is_finite() {
            return Err(invalid(
                "t_total",
                format!("must be finite and > 0, got {}", self.t_total),
            ));
        }
        if !(self.burn_in >= 0.0) || self.burn_in >= self.t_total {
            return Err(invalid(
                "burn_in",
                format!(
                    "must satisfy 0 <= burn_in < t_total ({} vs {})",
                    self.burn_in, self.t_total
                ),
            ));
        }
        if !(self.dt > 0.0) || self.dt > self.max_dt() {
            return Err(invalid(
                "dt",
                format!(
                    "must be in (0, {:.6}] to resolve the fastest scale, got {}",
                    self.max_dt(),
                    self.dt
                ),
            ));
        }
        if self.sample_stride == 0 {
            return Err(invalid("sample_stride", "must be >= 1"));
        }
        Ok(())
    }

    fn steps(&self) -> (u64, u64) {
        let total = (self.t_total / self.dt).round() as u64;
        let burn = (self.burn_in / self.dt).round() as u64;
        (burn, total)
    }
}

/// Recorded states after burn-in, at a constant stride.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SemiclassicalState>,
    pub sample_stride: u32,
    pub dt: f64,
    pub params: DimerParams,
    pub mode: Mode,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Physical amplitudes: divides rescaled amplitudes by g0. Returns `None`
    /// in the classical limit where g0 = 0.
    pub fn untilded(&self) -> Option<Vec<SemiclassicalState>> {
        match self.mode {
            Mode::Raw => Some(self.states.clone()),
            Mode::Rescaled { scale } => {
                if scale.is_classical_limit() {
                    return None;
                }
                let g1 = scale.quantum_parameter * self.params.cell1.kappa;
                let g2 = scale.quantum_parameter * self.params.cell2.kappa;
                Some(
                    self.states
                        .iter()
                        .map(|s| SemiclassicalState {
                            alpha1: s.alpha1 / g1,
                            beta1: s.beta1 / g1,
                            alpha2: s.alpha2 / g2,
                            beta2: s.beta2 / g2,
                        })
                        .collect(),
                )
            }
        }
    }

    /// Time-averaged photon numbers ⟨|α_j|²⟩ of the recorded samples.
    pub fn mean_photon_numbers(&self) -> [f64; 2] {
        let n = self.states.len().max(1) as f64;
        let (a, b) = self.states.iter().fold((0.0, 0.0), |(a, b), s| {
            (a + s.alpha1.norm_sqr(), b + s.alpha2.norm_sqr())
        });
        [a / n, b / n]
    }
}

/// Integrates `spec`, handing every recorded sample to `observe` instead of
/// storing it. Returns the final state.
pub fn simulate_with<F>(spec: &SimulationSpec, mut observe: F) -> Result<SemiclassicalState>
where
    F: FnMut(f64, &SemiclassicalState),
{
    spec.validate()?;
    let model = DriftModel::new(&spec.params, &spec.mode);
    let stepper = Stepper::new(model, spec.dt, &spec.noise)?;
    let mut rng = spec.noise.rng();
    let mut s = spec.initial.draw(&spec.mode, &mut rng);
    let (burn, total) = spec.steps();
    let stride = spec.sample_stride as u64;
    if burn == 0 {
        observe(0.0, &s);
    }
    for n in 1..=total {
        s = stepper.advance(&s, &mut rng);
        if !s.is_finite() {
            return Err(Error::Stiffness { step: n });
        }
        if n >= burn && (n - burn) % stride == 0 {
            observe(n as f64 * spec.dt, &s);
        }
    }
    Ok(s)
}

/// Integrates `spec` and stores the samples recorded after burn-in.
pub fn simulate(spec: &SimulationSpec) -> Result<Trajectory> {
    let (burn, total) = {
        spec.validate()?;
        spec.steps()
    };
    let capacity = ((total - burn) / spec.sample_stride as u64 + 1) as usize;
    let mut times = Vec::with_capacity(capacity);
    let mut states = Vec::with_capacity(capacity);
    simulate_with(spec, |t, s| {
        times.push(t);
        states.push(*s);
    })?;
    Ok(Trajectory {
        times,
        states,
        sample_stride: spec.sample_stride,
        dt: spec.dt,
        params: spec.params,
        mode: spec.mode,
    })
}

/// Settings for [`selfosc_threshold_scan`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdScan {
    pub dt: f64,
    /// Integration time before the oscillation energy is measured.
    pub settle_time: f64,
    /// Length of the measurement window.
    pub window: f64,
    /// Oscillation-energy floor separating a limit cycle from a fixed point.
    pub energy_floor: f64,
}

impl Default for ThresholdScan {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            settle_time: 1000.0 * TAU,
            window: 50.0 * TAU,
            energy_floor: 1e-6,
        }
    }
}

/// Oscillation energy of one noiseless, uncoupled cell: mean |β − ⟨β⟩|² over
/// the measurement window, i.e. with the static optomechanical displacement
/// removed.
pub fn oscillation_energy(cell: &OmParams, scan: &ThresholdScan) -> Result<f64> {
    let params = DimerParams::new(
        OmParams {
            omega: 1.0,
            ..*cell
        },
        OmParams {
            omega: 1.0,
            ..*cell
        },
        0.0,
        true,
    )?;
    let spec = SimulationSpec {
        params,
        mode: Mode::Raw,
        t_total: scan.settle_time + scan.window,
        dt: scan.dt,
        burn_in: scan.settle_time,
        sample_stride: 1,
        noise: NoiseSpec::noiseless(0, 0),
        initial: InitialCondition::Explicit {
            state: SemiclassicalState {
                beta1: Complex64::new(0.1, 0.0),
                ..SemiclassicalState::ZERO
            },
        },
    };
    let mut samples = Vec::new();
    simulate_with(&spec, |_, s| samples.push(s.beta1))?;
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<Complex64>() / n;
    Ok(samples.iter().map(|b| (b - mean).norm_sqr()).sum::<f64>() / n)
}

/// Limit-cycle presence on a (α_L, Δ) grid for a single cell. Entry
/// `[i][j]` corresponds to `alpha_grid[i]`, `delta_grid[j]`.
pub fn selfosc_threshold_scan(
    base: &OmParams,
    alpha_grid: &[f64],
    delta_grid: &[f64],
    scan: &ThresholdScan,
) -> Result<Vec<Vec<bool>>> {
    let energies = oscillation_energy_grid(base, alpha_grid, delta_grid, scan)?;
    Ok(energies
        .into_iter()
        .map(|row| row.into_iter().map(|e| e > scan.energy_floor).collect())
        .collect())
}

/// Oscillation energies on the same grid as [`selfosc_threshold_scan`].
pub fn oscillation_energy_grid(
    base: &OmParams,
    alpha_grid: &[f64],
    delta_grid: &[f64],
    scan: &ThresholdScan,
) -> Result<Vec<Vec<f64>>> {
    alpha_grid
        .par_iter()
        .map(|&alpha_l| {
            delta_grid
                .iter()
                .map(|&delta| {
                    let cell = OmParams {
                        alpha_l,
                        delta,
                        ..*base
                    };
                    oscillation_energy(&cell, scan)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect()
}

const CSV_COLUMNS: [&str; 9] = [
    "t",
    "re_alpha1",
    "im_alpha1",
    "re_beta1",
    "im_beta1",
    "re_alpha2",
    "im_alpha2",
    "re_beta2",
    "im_beta2",
];

#[derive(Serialize, Deserialize)]
struct TrajectoryHeader {
    params: DimerParams,
    mode: Mode,
    dt: f64,
    sample_stride: u32,
}

impl Trajectory {
    /// CSV with a `# {json}` parameter line followed by the column header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header = TrajectoryHeader {
            params: self.params,
            mode: self.mode,
            dt: self.dt,
            sample_stride: self.sample_stride,
        };
        writeln!(w, "# {}", serde_json::to_string(&header)?)?;
        writeln!(w, "{}", CSV_COLUMNS.join(","))?;
        for (t, s) in self.times.iter().zip(&self.states) {
            write!(w, "{t}")?;
            for z in s.components() {
                write!(w, ",{},{}", z.re, z.im)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R, origin: &Path) -> Result<Self> {
        let bad = |reason: String| Error::Data {
            path: origin.to_path_buf(),
            reason,
        };
        let mut lines = r.lines();
        let meta = lines.next().ok_or_else(|| bad("empty file".into()))??;
        let json = meta
            .strip_prefix("# ")
            .ok_or_else(|| bad("missing `# {json}` parameter line".into()))?;
        let header: TrajectoryHeader =
            serde_json::from_str(json).map_err(|e| bad(e.to_string()))?;
        let cols = lines
            .next()
            .ok_or_else(|| bad("missing column header".into()))??;
        if cols.trim() != CSV_COLUMNS.join(",") {
            return Err(bad(format!("unexpected columns `{cols}`")));
        }
        let mut times = Vec::new();
        let mut states = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let v: Vec<f64> = line
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(format!("row {}: {e}", i + 1)))?;
            if v.len() != 9 {
                return Err(bad(format!(
                    "row {}: expected 9 fields, got {}",
                    i + 1,
                    v.len()
                )));
            }
            times.push(v[0]);
            states.push(SemiclassicalState {
                alpha1: Complex64::new(v[1], v[2]),
                beta1: Complex64::new(v[3], v[4]),
                alpha2: Complex64::new(v[5], v[6]),
                beta2: Complex64::new(v[7], v[8]),
            });
        }
        Ok(Self {
            times,
            states,
            sample_stride: header.sample_stride,
            dt: header.dt,
            params: header.params,
            mode: header.mode,
        })
    }
}

/// Runs independent trajectories `stream_ids` of the same spec in parallel.
pub fn simulate_ensemble(
    spec: &SimulationSpec,
    stream_ids: std::ops::Range<u64>,
) -> Result<Vec<Trajectory>> {
    stream_ids
        .into_par_iter()
        .map(|id| {
            let mut s = *spec;
            s.noise.stream_id = id;
            simulate(&s)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{make_identical_dimer, presets};
    use approx::assert_relative_eq;

    fn dimer() -> DimerParams {
        presets::quantum_regime_dimer(0.15, 0.015)
    }

    #[test]
    fn undriven_origin_is_fixed_point() {
        let mut p = dimer();
        p.cell1.alpha_l = 0.0;
        p.cell2.alpha_l = 0.0;
        let d = drift(&SemiclassicalState::ZERO, &p);
        assert_eq!(d, SemiclassicalState::ZERO);
    }

    #[test]
    fn optical_steady_state_root() {
        let p = dimer();
        let c = &p.cell1;
        let alpha_ss = -I * c.alpha_l / Complex64::new(c.kappa / 2.0, -c.delta);
        let s = SemiclassicalState {
            alpha1: alpha_ss,
            alpha2: alpha_ss,
            ..SemiclassicalState::ZERO
        };
        let d = drift(&s, &p);
        assert!(d.alpha1.norm() < 1e-15, "{}", d.alpha1);
        assert!(d.alpha2.norm() < 1e-15);
    }

    #[test]
    fn symmetric_subspace_preserved() {
        let p = dimer();
        let s = SemiclassicalState {
            alpha1: Complex64::new(0.2, -0.4),
            beta1: Complex64::new(-0.7, 0.3),
            alpha2: Complex64::new(0.2, -0.4),
            beta2: Complex64::new(-0.7, 0.3),
        };
        let d = drift(&s, &p);
        assert_eq!(d.alpha1, d.alpha2);
        assert_eq!(d.beta1, d.beta2);
    }

    #[test]
    fn coupling_forms() {
        let mut p = make_identical_dimer(
            OmParams {
                g0: 0.0,
                alpha_l: 0.0,
                ..presets::quantum_regime_cell()
            },
            0.2,
            true,
        )
        .unwrap();
        let s = SemiclassicalState {
            beta2: Complex64::new(0.3, 0.5),
            ..SemiclassicalState::ZERO
        };
        assert_relative_eq!(
            (drift(&s, &p).beta1 - I * 0.2 * s.beta2).norm(),
            0.0,
            epsilon = 1e-15
        );
        p.rwa_coupling = false;
        assert_relative_eq!(
            (drift(&s, &p).beta1 - I * 0.2 * 0.6).norm(),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn heun_is_second_order() {
        let p = dimer();
        let s0 = SemiclassicalState {
            alpha1: Complex64::new(0.1, 0.0),
            beta1: Complex64::new(0.5, 0.2),
            alpha2: Complex64::new(0.0, 0.1),
            beta2: Complex64::new(-0.3, 0.4),
        };
        let noise = NoiseSpec::noiseless(0, 0);
        let integrate = |dt: f64| {
            let stepper = Stepper::new(DriftModel::new(&p, &Mode::Raw), dt, &noise).unwrap();
            let mut rng = noise.rng();
            let n = (2.0 / dt).round() as usize;
            let mut s = s0;
            for _ in 0..n {
                s = stepper.advance(&s, &mut rng);
            }
            s
        };
        let reference = integrate(1e-4);
        let err = |dt: f64| (integrate(dt) - reference).max_norm();
        let ratio = err(0.02) / err(0.01);
        assert!((3.5..4.5).contains(&ratio), "error ratio {ratio}");
    }

    #[test]
    fn same_seed_same_trajectory() {
        let mut spec = SimulationSpec::new(dimer(), Mode::Raw, 200.0, 11, 4);
        spec.burn_in = 50.0;
        let a = simulate(&spec).unwrap();
        let b = simulate(&spec).unwrap();
        assert_eq!(a, b);
        spec.noise.stream_id = 5;
        let c = simulate(&spec).unwrap();
        assert_ne!(a.states, c.states);
    }

    #[test]
    fn times_have_constant_stride() {
        let mut spec = SimulationSpec::new(dimer(), Mode::Raw, 100.0, 1, 0);
        spec.burn_in = 10.0;
        let tr = simulate(&spec).unwrap();
        let h = spec.dt * spec.sample_stride as f64;
        for w in tr.times.windows(2) {
            assert_relative_eq!(w[1] - w[0], h, epsilon = 1e-9);
        }
        assert!(tr.times[0] >= spec.burn_in - spec.dt);
    }

    #[test]
    fn oversized_dt_rejected() {
        let mut spec = SimulationSpec::new(dimer(), Mode::Raw, 100.0, 1, 0);
        spec.dt = 0.5;
        let err = simulate(&spec).unwrap_err();
        assert!(err.to_string().contains("dt"), "{err}");
        spec.dt = DEFAULT_DT;
        spec.burn_in = 200.0;
        assert!(simulate(&spec).unwrap_err().to_string().contains("burn_in"));
    }

    #[test]
    fn blow_up_reports_step() {
        // Huge anti-damping drives the amplitudes to overflow.
        let mut p = dimer();
        p.cell1.gamma = 1e-3;
        let s = SemiclassicalState {
            beta1: Complex64::new(1e200, 0.0),
            alpha1: Complex64::new(1e200, 0.0),
            ..SemiclassicalState::ZERO
        };
        let spec = SimulationSpec {
            initial: InitialCondition::Explicit { state: s },
            ..SimulationSpec::new(p, Mode::Raw, 100.0, 0, 0).noiseless()
        };
        match simulate(&spec) {
            Err(Error::Stiffness { step }) => assert!(step >= 1),
            other => panic!("expected stiffness abort, got {other:?}"),
        }
    }

    #[test]
    fn uncoupled_shared_phase_stays_symmetric() {
        let p = make_identical_dimer(presets::quantum_regime_cell(), 0.0, true).unwrap();
        let mut spec = SimulationSpec::new(p, Mode::Raw, 300.0, 3, 0).noiseless();
        spec.burn_in = 0.0;
        spec.initial = InitialCondition::SharedPhase { amplitude: None };
        let tr = simulate(&spec).unwrap();
        for s in &tr.states {
            assert_eq!(s.beta1, s.beta2);
        }
    }

    #[test]
    fn csv_roundtrip() {
        let mut spec = SimulationSpec::new(dimer(), Mode::Raw, 20.0, 2, 0);
        spec.burn_in = 5.0;
        let tr = simulate(&spec).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let back = Trajectory::read_csv(&buf[..], Path::new("mem")).unwrap();
        assert_eq!(back, tr);
    }
}
