//! Quantum-jump (Monte-Carlo wave-function) trajectories on a truncated
//! four-mode Fock space ordered (cavity 1, mechanics 1, cavity 2, mechanics 2).

pub mod sparse;

use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::params::DimerParams;
use crate::rng::stream;
pub use sparse::CsrMatrix;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

pub const DEFAULT_DIMENSION_CAP: usize = 1 << 20;
pub const DEFAULT_LEAK_TOL: f64 = 1e-3;
/// Upper bound of the summed jump probability per step.
pub const JUMP_BUDGET: f64 = 0.1;

/// Truncated Fock space; each mode keeps levels `0..=cutoff`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FockSpace {
    pub n_opt: usize,
    pub n_mech: usize,
}

/// The four modes in tensor-product order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeId {
    A1,
    B1,
    A2,
    B2,
}

impl ModeId {
    pub const ALL: [ModeId; 4] = [ModeId::A1, ModeId::B1, ModeId::A2, ModeId::B2];

    fn slot(self) -> usize {
        match self {
            ModeId::A1 => 0,
            ModeId::B1 => 1,
            ModeId::A2 => 2,
            ModeId::B2 => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModeId::A1 => "a1",
            ModeId::B1 => "b1",
            ModeId::A2 => "a2",
            ModeId::B2 => "b2",
        }
    }
}

impl FockSpace {
    pub fn new(n_opt: usize, n_mech: usize) -> Self {
        Self { n_opt, n_mech }
    }

    fn levels(&self) -> [usize; 4] {
        [
            self.n_opt + 1,
            self.n_mech + 1,
            self.n_opt + 1,
            self.n_mech + 1,
        ]
    }

    /// (n_opt+1)²(n_mech+1)², saturating on overflow.
    pub fn dim(&self) -> usize {
        self.levels()
            .iter()
            .fold(1usize, |d, &l| d.saturating_mul(l))
    }

    pub fn check_cap(&self, cap: usize) -> Result<()> {
        let dim = self.dim();
        if dim > cap {
            return Err(Error::DimensionOverflow { dim, cap });
        }
        Ok(())
    }

    /// Basis index of |n_a1, n_b1, n_a2, n_b2⟩; the first mode varies slowest.
    pub fn index(&self, occ: [usize; 4]) -> usize {
        let l = self.levels();
        ((occ[0] * l[1] + occ[1]) * l[2] + occ[2]) * l[3] + occ[3]
    }

    pub fn occupations(&self, mut idx: usize) -> [usize; 4] {
        let l = self.levels();
        let mut occ = [0; 4];
        for k in (0..4).rev() {
            occ[k] = idx % l[k];
            idx /= l[k];
        }
        occ
    }

    pub fn cutoff(&self, mode: ModeId) -> usize {
        self.levels()[mode.slot()] - 1
    }

    /// Annihilation operator of `mode`.
    pub fn annihilation(&self, mode: ModeId) -> CsrMatrix {
        let k = mode.slot();
        let d = self.dim();
        let mut t = Vec::new();
        for idx in 0..d {
            let mut occ = self.occupations(idx);
            let n = occ[k];
            if n > 0 {
                occ[k] -= 1;
                t.push((self.index(occ), idx, Complex64::new((n as f64).sqrt(), 0.0)));
            }
        }
        CsrMatrix::from_triplets(d, t)
    }

    /// Occupation number of `mode` on every basis state.
    pub fn number_diagonal(&self, mode: ModeId) -> Vec<f64> {
        let k = mode.slot();
        (0..self.dim())
            .map(|i| self.occupations(i)[k] as f64)
            .collect()
    }
}

/// Decay channel of a jump.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Channel(pub ModeId);

impl Channel {
    pub fn name(self) -> &'static str {
        self.0.name()
    }
}

#[derive(Debug, Clone)]
pub struct DecayChannel {
    pub channel: Channel,
    pub rate: f64,
    /// Annihilation operator; the collapse operator is √rate times this.
    pub op: CsrMatrix,
    /// Occupation number on the basis, for ⟨c†c⟩.
    pub number: Vec<f64>,
}

/// Operators of the dimer on a [`FockSpace`].
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub space: FockSpace,
    /// a1, a2.
    pub a: [CsrMatrix; 2],
    /// b1, b2.
    pub b: [CsrMatrix; 2],
    pub n_a: [Vec<f64>; 2],
    pub n_b: [Vec<f64>; 2],
    /// b_j + b_j†.
    pub x_b: [CsrMatrix; 2],
    /// Mechanical coupling operator: (b1+b1†)(b2+b2†), or b1†b2 + b1 b2† under RWA.
    pub coupling: CsrMatrix,
    /// Hermitian Hamiltonian.
    pub hamiltonian: CsrMatrix,
    /// H − (i/2) Σ rate c†c.
    pub h_eff: CsrMatrix,
    pub channels: Vec<DecayChannel>,
}

impl OperatorSet {
    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    /// max |H − H†| elementwise.
    pub fn hermiticity_error(&self) -> f64 {
        self.hamiltonian.max_abs_diff(&self.hamiltonian.adjoint())
    }
}

/// Assembles the operators of `p` with the default dimension cap.
pub fn build_operators(space: FockSpace, p: &DimerParams) -> Result<OperatorSet> {
    build_operators_capped(space, p, DEFAULT_DIMENSION_CAP)
}

/// H = Σ_j [−Δ a†a + Ω b†b − g0 a†a (b+b†) + α_L (a+a†)] − K·coupling.
pub fn build_operators_capped(
    space: FockSpace,
    p: &DimerParams,
    cap: usize,
) -> Result<OperatorSet> {
    p.validate()?;
    space.check_cap(cap)?;
    let cells = p.cells();
    let drive = cells.iter().any(|c| c.alpha_l != 0.0);
    let optomech = cells.iter().any(|c| c.g0 != 0.0);
    if (drive || optomech) && space.n_opt == 0 {
        return Err(invalid(
            "n_opt",
            "must be at least 1 with drive or optomechanical coupling",
        ));
    }
    if (optomech || p.coupling_k != 0.0) && space.n_mech == 0 {
        return Err(invalid(
            "n_mech",
            "must be at least 1 with optomechanical or mechanical coupling",
        ));
    }
    if cells.iter().any(|c| c.n_th != 0.0) {
        return Err(invalid(
            "n_th",
            "quantum-jump runs use zero-temperature phonon channels",
        ));
    }
    let d = space.dim();
    let re = |x: f64| Complex64::new(x, 0.0);
    let a = [
        space.annihilation(ModeId::A1),
        space.annihilation(ModeId::A2),
    ];
    let b = [
        space.annihilation(ModeId::B1),
        space.annihilation(ModeId::B2),
    ];
    let n_a = [
        space.number_diagonal(ModeId::A1),
        space.number_diagonal(ModeId::A2),
    ];
    let n_b = [
        space.number_diagonal(ModeId::B1),
        space.number_diagonal(ModeId::B2),
    ];
    let x_b = [
        b[0].add_scaled(&b[0].adjoint(), re(1.0)),
        b[1].add_scaled(&b[1].adjoint(), re(1.0)),
    ];
    let coupling = if p.rwa_coupling {
        let t = b[0].adjoint().matmul(&b[1]);
        t.add_scaled(&t.adjoint(), re(1.0))
    } else {
        x_b[0].matmul(&x_b[1])
    };

    let mut h = CsrMatrix::zeros(d);
    for j in 0..2 {
        let c = cells[j];
        let na = CsrMatrix::diagonal(&n_a[j].iter().map(|&x| re(x)).collect::<Vec<_>>());
        let nb = CsrMatrix::diagonal(&n_b[j].iter().map(|&x| re(x)).collect::<Vec<_>>());
        let x_a = a[j].add_scaled(&a[j].adjoint(), re(1.0));
        h = h
            .add_scaled(&na, re(-c.detuning()))
            .add_scaled(&nb, re(c.omega))
            .add_scaled(&na.matmul(&x_b[j]), re(-c.g0))
            .add_scaled(&x_a, re(c.alpha_l));
    }
    h = h.add_scaled(&coupling, re(-p.coupling_k));

    let modes = [
        (ModeId::A1, cells[0].kappa, &a[0], &n_a[0]),
        (ModeId::A2, cells[1].kappa, &a[1], &n_a[1]),
        (ModeId::B1, cells[0].gamma, &b[0], &n_b[0]),
        (ModeId::B2, cells[1].gamma, &b[1], &n_b[1]),
    ];
    let mut damping = vec![ZERO; d];
    let mut channels = Vec::new();
    for (mode, rate, op, number) in modes {
        if space.cutoff(mode) == 0 {
            continue;
        }
        for (acc, n) in damping.iter_mut().zip(number) {
            *acc += Complex64::new(0.0, -0.5 * rate * n);
        }
        channels.push(DecayChannel {
            channel: Channel(mode),
            rate,
            op: op.clone(),
            number: number.clone(),
        });
    }
    let h_eff = h.add_scaled(&CsrMatrix::diagonal(&damping), re(1.0));
    Ok(OperatorSet {
        space,
        a,
        b,
        n_a,
        n_b,
        x_b,
        coupling,
        hamiltonian: h,
        h_eff,
        channels,
    })
}

/// Normalized state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FockState {
    pub amplitudes: Vec<Complex64>,
    /// Norm before the most recent normalization.
    pub norm: f64,
}

impl FockState {
    pub fn basis(space: &FockSpace, occ: [usize; 4]) -> Self {
        let mut amplitudes = vec![ZERO; space.dim()];
        amplitudes[space.index(occ)] = Complex64::new(1.0, 0.0);
        Self {
            amplitudes,
            norm: 1.0,
        }
    }

    pub fn vacuum(space: &FockSpace) -> Self {
        Self::basis(space, [0; 4])
    }

    /// Product of truncated coherent states, renormalized on the space.
    pub fn coherent(space: &FockSpace, amps: [Complex64; 4]) -> Self {
        let factors: Vec<Vec<Complex64>> = ModeId::ALL
            .iter()
            .zip(amps)
            .map(|(&m, z)| {
                let cutoff = space.cutoff(m);
                let mut c = Vec::with_capacity(cutoff + 1);
                let mut term = Complex64::new((-0.5 * z.norm_sqr()).exp(), 0.0);
                for n in 0..=cutoff {
                    c.push(term);
                    term = term * z / ((n + 1) as f64).sqrt();
                }
                c
            })
            .collect();
        let amplitudes = (0..space.dim())
            .map(|i| {
                let o = space.occupations(i);
                factors[0][o[0]] * factors[1][o[1]] * factors[2][o[2]] * factors[3][o[3]]
            })
            .collect();
        let mut s = Self {
            amplitudes,
            norm: 1.0,
        };
        s.normalize();
        s
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) {
        let n = self.norm_sqr().sqrt();
        self.norm = n;
        if n > 0.0 {
            let inv = 1.0 / n;
            for a in &mut self.amplitudes {
                *a *= inv;
            }
        }
    }

    /// ⟨ψ| diag |ψ⟩.
    pub fn expect_diagonal(&self, diag: &[f64]) -> f64 {
        self.amplitudes
            .iter()
            .zip(diag)
            .map(|(a, d)| a.norm_sqr() * d)
            .sum()
    }

    /// Largest population of the top Fock level of any mode.
    pub fn top_level_population(&self, space: &FockSpace) -> f64 {
        let mut top = [0.0; 4];
        for (i, a) in self.amplitudes.iter().enumerate() {
            let occ = space.occupations(i);
            for (k, m) in ModeId::ALL.iter().enumerate() {
                let cutoff = space.cutoff(*m);
                if cutoff > 0 && occ[k] == cutoff {
                    top[k] += a.norm_sqr();
                }
            }
        }
        top.into_iter().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    pub t: f64,
    pub channel: Channel,
}

/// Reusable buffers for [`jump_step`].
#[derive(Debug, Clone, Default)]
pub struct Workspace {
    buf: Vec<Complex64>,
    next: Vec<Complex64>,
    stage: Vec<Complex64>,
    slope: Vec<Complex64>,
}

impl Workspace {
    fn resize(&mut self, d: usize) {
        for v in [
            &mut self.buf,
            &mut self.next,
            &mut self.stage,
            &mut self.slope,
        ] {
            v.resize(d, ZERO);
        }
    }
}

/// Classical RK4 for ψ' = −i H_eff ψ over `dt`, written to `out`.
fn propagate(
    h_eff: &CsrMatrix,
    psi: &[Complex64],
    dt: f64,
    out: &mut [Complex64],
    stage: &mut [Complex64],
    slope: &mut [Complex64],
) {
    let minus_i = Complex64::new(0.0, -1.0);
    h_eff.mul_vec_into(psi, slope);
    for ((o, s), (x, k)) in out
        .iter_mut()
        .zip(stage.iter_mut())
        .zip(psi.iter().zip(slope.iter()))
    {
        let k = minus_i * k;
        *o = x + k * (dt / 6.0);
        *s = x + k * (0.5 * dt);
    }
    for (weight, reach) in [(dt / 3.0, 0.5 * dt), (dt / 3.0, dt)] {
        h_eff.mul_vec_into(stage, slope);
        for ((o, s), (x, k)) in out
            .iter_mut()
            .zip(stage.iter_mut())
            .zip(psi.iter().zip(slope.iter()))
        {
            let k = minus_i * k;
            *o += k * weight;
            *s = x + k * reach;
        }
    }
    h_eff.mul_vec_into(stage, slope);
    for (o, k) in out.iter_mut().zip(slope.iter()) {
        *o += minus_i * k * (dt / 6.0);
    }
}

/// Advances `psi` by `dt` with at most one jump.
///
/// The no-jump branch integrates the non-Hermitian Hamiltonian with RK4 and
/// renormalizes. The jump probability is the norm lost over the step, which
/// equals Σ rate·dt·⟨c†c⟩ to first order. A jump is placed at the step
/// midpoint: half a step of no-jump evolution, the collapse, then the other
/// half, with the channel drawn from the midpoint rates. One uniform variate
/// decides both whether and where to jump.
pub fn jump_step<R: Rng + ?Sized>(
    psi: &mut FockState,
    ops: &OperatorSet,
    dt: f64,
    rng: &mut R,
    work: &mut Workspace,
) -> Result<Option<Channel>> {
    let d = ops.dim();
    work.resize(d);
    let total: f64 = ops
        .channels
        .iter()
        .map(|c| c.rate * dt * psi.expect_diagonal(&c.number))
        .sum();
    if total >= JUMP_BUDGET {
        return Err(Error::JumpBudget {
            step: 0,
            probability: total,
            budget: JUMP_BUDGET,
        });
    }
    let Workspace {
        buf,
        next,
        stage,
        slope,
    } = work;
    propagate(&ops.h_eff, &psi.amplitudes, dt, next, stage, slope);
    let kept: f64 = next.iter().map(|a| a.norm_sqr()).sum();
    let lost = 1.0 - kept;
    let u: f64 = rng.random();
    if u < lost {
        propagate(&ops.h_eff, &psi.amplitudes, 0.5 * dt, buf, stage, slope);
        let rates: Vec<f64> = ops
            .channels
            .iter()
            .map(|c| {
                c.rate
                    * buf
                        .iter()
                        .zip(&c.number)
                        .map(|(a, n)| a.norm_sqr() * n)
                        .sum::<f64>()
            })
            .collect();
        let sum: f64 = rates.iter().sum();
        if sum > 0.0 {
            let target = u / lost * sum;
            let mut acc = 0.0;
            let last = rates.iter().rposition(|&r| r > 0.0).unwrap_or(0);
            for (i, (c, r)) in ops.channels.iter().zip(&rates).enumerate() {
                acc += r;
                if target < acc || i == last {
                    c.op.mul_vec_into(buf, next);
                    propagate(
                        &ops.h_eff,
                        next,
                        0.5 * dt,
                        &mut psi.amplitudes,
                        stage,
                        slope,
                    );
                    psi.normalize();
                    return Ok(Some(c.channel));
                }
            }
        }
    }
    std::mem::swap(&mut psi.amplitudes, next);
    psi.normalize();
    Ok(None)
}

/// Expectation values of one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservableRecord {
    pub n_a: [f64; 2],
    pub n_b: [f64; 2],
    /// ⟨b1† b2⟩.
    pub b1dag_b2: Complex64,
    /// ⟨b1† b2⟩/√(⟨b1†b1⟩⟨b2†b2⟩); `None` when a phonon number is below 1e-12.
    pub correlator: Option<Complex64>,
}

pub const PHONON_FLOOR: f64 = 1e-12;

impl ObservableRecord {
    /// arg C, the quantum counterpart of δφ = arg(β2 β1*).
    pub fn relative_phase(&self) -> Option<f64> {
        self.correlator.map(|c| crate::phase::wrap(c.arg()))
    }
}

pub fn observables(psi: &FockState, ops: &OperatorSet, work: &mut Workspace) -> ObservableRecord {
    let n_a = [
        psi.expect_diagonal(&ops.n_a[0]),
        psi.expect_diagonal(&ops.n_a[1]),
    ];
    let n_b = [
        psi.expect_diagonal(&ops.n_b[0]),
        psi.expect_diagonal(&ops.n_b[1]),
    ];
    work.buf.resize(ops.dim(), ZERO);
    ops.b[1].mul_vec_into(&psi.amplitudes, &mut work.buf);
    let b1 = ops.b[0].mul_vec(&psi.amplitudes);
    let b1dag_b2: Complex64 = b1.iter().zip(&work.buf).map(|(x, y)| x.conj() * y).sum();
    let correlator = (n_b[0] >= PHONON_FLOOR && n_b[1] >= PHONON_FLOOR)
        .then(|| b1dag_b2 / (n_b[0] * n_b[1]).sqrt());
    ObservableRecord {
        n_a,
        n_b,
        b1dag_b2,
        correlator,
    }
}

/// Initial state of every trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialFock {
    Vacuum,
    Basis { occupations: [usize; 4] },
    Coherent { amplitudes: [Complex64; 4] },
}

impl InitialFock {
    pub fn build(&self, space: &FockSpace) -> Result<FockState> {
        match self {
            InitialFock::Vacuum => Ok(FockState::vacuum(space)),
            InitialFock::Basis { occupations } => {
                for (m, &o) in ModeId::ALL.iter().zip(occupations) {
                    if o > space.cutoff(*m) {
                        return Err(invalid("initial", "occupation exceeds the cutoff"));
                    }
                }
                Ok(FockState::basis(space, *occupations))
            }
            InitialFock::Coherent { amplitudes } => Ok(FockState::coherent(space, *amplitudes)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McwfConfig {
    pub space: FockSpace,
    pub n_traj: usize,
    pub t_total: f64,
    pub dt: f64,
    pub seed: u64,
    /// Stream id of trajectory 0; trajectory i uses `first_stream + i`.
    #[serde(default)]
    pub first_stream: u64,
    /// Observables are recorded every this many steps (and at t = 0).
    pub record_every: u64,
    #[serde(default = "default_leak_tol")]
    pub leak_tol: f64,
    #[serde(default = "default_initial")]
    pub initial: InitialFock,
    #[serde(default = "default_cap")]
    pub dimension_cap: usize,
}

fn default_leak_tol() -> f64 {
    DEFAULT_LEAK_TOL
}
fn default_initial() -> InitialFock {
    InitialFock::Vacuum
}
fn default_cap() -> usize {
    DEFAULT_DIMENSION_CAP
}

impl McwfConfig {
    pub fn new(space: FockSpace, n_traj: usize, t_total: f64, dt: f64, seed: u64) -> Self {
        Self {
            space,
            n_traj,
            t_total,
            dt,
            seed,
            first_stream: 0,
            record_every: 1,
            leak_tol: DEFAULT_LEAK_TOL,
            initial: InitialFock::Vacuum,
            dimension_cap: DEFAULT_DIMENSION_CAP,
        }
    }

    pub fn n_steps(&self) -> u64 {
        (self.t_total / self.dt).round() as u64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", "must be positive"));
        }
        if !(self.t_total >= 0.0 && self.t_total.is_finite()) {
            return Err(invalid("t_total", "must be non-negative"));
        }
        if self.record_every == 0 {
            return Err(invalid("record_every", "must be at least 1"));
        }
        if self.n_traj == 0 {
            return Err(invalid("n_traj", "must be at least 1"));
        }
        if !(self.leak_tol > 0.0) {
            return Err(invalid("leak_tol", "must be positive"));
        }
        Ok(())
    }

    /// Times at which observables are recorded.
    pub fn record_times(&self) -> Vec<f64> {
        (0..=self.n_steps())
            .filter(|s| s % self.record_every == 0)
            .map(|s| s as f64 * self.dt)
            .collect()
    }
}

/// One quantum-jump trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub index: u64,
    pub times: Vec<f64>,
    pub observables: Vec<ObservableRecord>,
    pub jumps: Vec<JumpRecord>,
    /// Largest top-level population seen at any recorded time.
    pub max_leakage: f64,
    pub final_state: Vec<Complex64>,
}

impl TrajectoryRecord {
    pub fn truncation_unsafe(&self, leak_tol: f64) -> bool {
        self.max_leakage >= leak_tol
    }

    pub fn write_jumps_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,channel")?;
        for j in &self.jumps {
            writeln!(w, "{},{}", j.t, j.channel.name())?;
        }
        Ok(())
    }
}

/// Integrates trajectory `index` of `cfg`.
pub fn run_trajectory(ops: &OperatorSet, cfg: &McwfConfig, index: u64) -> Result<TrajectoryRecord> {
    let mut rng = stream(cfg.seed, cfg.first_stream + index);
    let mut psi = cfg.initial.build(&ops.space)?;
    let mut work = Workspace::default();
    let n_steps = cfg.n_steps();
    let mut times = Vec::new();
    let mut obs = Vec::new();
    let mut jumps = Vec::new();
    let mut max_leakage = psi.top_level_population(&ops.space);
    times.push(0.0);
    obs.push(observables(&psi, ops, &mut work));
    for step in 1..=n_steps {
        let t = step as f64 * cfg.dt;
        match jump_step(&mut psi, ops, cfg.dt, &mut rng, &mut work) {
            Ok(Some(channel)) => jumps.push(JumpRecord { t, channel }),
            Ok(None) => {}
            Err(Error::JumpBudget {
                probability,
                budget,
                ..
            }) => {
                return Err(Error::JumpBudget {
                    step,
                    probability,
                    budget,
                })
            }
            Err(e) => return Err(e),
        }
        if step % cfg.record_every == 0 {
            times.push(t);
            obs.push(observables(&psi, ops, &mut work));
            max_leakage = max_leakage.max(psi.top_level_population(&ops.space));
        }
    }
    Ok(TrajectoryRecord {
        index,
        times,
        observables: obs,
        jumps,
        max_leakage,
        final_state: psi.amplitudes,
    })
}

/// Column names of the flattened observable vector.
pub const OBSERVABLE_NAMES: [&str; 8] = [
    "n_a1",
    "n_a2",
    "n_b1",
    "n_b2",
    "b1dag_b2_re",
    "b1dag_b2_im",
    "c_re",
    "c_im",
];

fn flatten(o: &ObservableRecord) -> [f64; 6] {
    [
        o.n_a[0],
        o.n_a[1],
        o.n_b[0],
        o.n_b[1],
        o.b1dag_b2.re,
        o.b1dag_b2.im,
    ]
}

/// Ensemble means and standard errors at each recorded time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McwfEnsemble {
    pub times: Vec<f64>,
    /// Per time, values in [`OBSERVABLE_NAMES`] order.
    pub mean: Vec<[f64; 8]>,
    pub stderr: Vec<[f64; 8]>,
    /// Trajectories with a defined correlator, per time.
    pub correlator_count: Vec<usize>,
    pub n_traj: usize,
    pub max_leakage: f64,
    pub truncation_unsafe: bool,
    pub jump_count: usize,
}

impl McwfEnsemble {
    pub fn column(&self, name: &str) -> Option<(Vec<f64>, Vec<f64>)> {
        let k = OBSERVABLE_NAMES.iter().position(|n| *n == name)?;
        Some((
            self.mean.iter().map(|m| m[k]).collect(),
            self.stderr.iter().map(|s| s[k]).collect(),
        ))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend(OBSERVABLE_NAMES.iter().map(|s| s.to_string()));
        header.extend(OBSERVABLE_NAMES.iter().map(|s| format!("{s}_stderr")));
        header.push("c_defined".into());
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.times.len() {
            let mut row = vec![self.times[i].to_string()];
            row.extend(self.mean[i].iter().map(f64::to_string));
            row.extend(self.stderr[i].iter().map(f64::to_string));
            row.push(self.correlator_count[i].to_string());
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Running sums for mean and standard error.
#[derive(Debug, Clone)]
struct Moments {
    sum: Vec<[f64; 8]>,
    sum_sq: Vec<[f64; 8]>,
    count: Vec<[usize; 8]>,
}

impl Moments {
    fn new(n: usize) -> Self {
        Self {
            sum: vec![[0.0; 8]; n],
            sum_sq: vec![[0.0; 8]; n],
            count: vec![[0; 8]; n],
        }
    }

    fn add(&mut self, rec: &TrajectoryRecord) {
        for (i, o) in rec.observables.iter().enumerate() {
            let flat = flatten(o);
            let mut vals: [Option<f64>; 8] = [None; 8];
            for k in 0..6 {
                vals[k] = Some(flat[k]);
            }
            if let Some(c) = o.correlator {
                vals[6] = Some(c.re);
                vals[7] = Some(c.im);
            }
            for (k, v) in vals.iter().enumerate() {
                if let Some(v) = v {
                    self.sum[i][k] += v;
                    self.sum_sq[i][k] += v * v;
                    self.count[i][k] += 1;
                }
            }
        }
    }

    fn finish(&self) -> (Vec<[f64; 8]>, Vec<[f64; 8]>) {
        let mut mean = vec![[f64::NAN; 8]; self.sum.len()];
        let mut se = vec![[f64::NAN; 8]; self.sum.len()];
        for i in 0..self.sum.len() {
            for k in 0..8 {
                let n = self.count[i][k] as f64;
                if n == 0.0 {
                    continue;
                }
                let m = self.sum[i][k] / n;
                mean[i][k] = m;
                if n > 1.0 {
                    let var = ((self.sum_sq[i][k] - n * m * m) / (n - 1.0)).max(0.0);
                    se[i][k] = (var / n).sqrt();
                }
            }
        }
        (mean, se)
    }
}

/// Runs `cfg.n_traj` trajectories in parallel and aggregates them in index
/// order. `sink` sees every trajectory record, also in index order.
pub fn run_trajectories_with<F>(
    p: &DimerParams,
    cfg: &McwfConfig,
    mut sink: F,
) -> Result<McwfEnsemble>
where
    F: FnMut(&TrajectoryRecord),
{
    cfg.validate()?;
    let ops = build_operators_capped(cfg.space, p, cfg.dimension_cap)?;
    let times = cfg.record_times();
    let mut moments = Moments::new(times.len());
    let mut max_leakage: f64 = 0.0;
    let mut jump_count = 0;
    let chunk = rayon::current_num_threads().max(1) * 8;
    let mut start = 0u64;
    while start < cfg.n_traj as u64 {
        let end = (start + chunk as u64).min(cfg.n_traj as u64);
        let records: Vec<TrajectoryRecord> = (start..end)
            .into_par_iter()
            .map(|i| run_trajectory(&ops, cfg, i))
            .collect::<Result<_>>()?;
        for r in &records {
            moments.add(r);
            max_leakage = max_leakage.max(r.max_leakage);
            jump_count += r.jumps.len();
            sink(r);
        }
        start = end;
    }
    let (mean, stderr) = moments.finish();
    Ok(McwfEnsemble {
        correlator_count: moments.count.iter().map(|c| c[6]).collect(),
        times,
        mean,
        stderr,
        n_traj: cfg.n_traj,
        max_leakage,
        truncation_unsafe: max_leakage >= cfg.leak_tol,
        jump_count,
    })
}

pub fn run_trajectories(p: &DimerParams, cfg: &McwfConfig) -> Result<McwfEnsemble> {
    run_trajectories_with(p, cfg, |_| {})
}

/// Writes the jumps of many trajectories as `t,channel,trajectory`.
pub fn write_jumps_csv<W: Write>(records: &[TrajectoryRecord], mut w: W) -> Result<()> {
    writeln!(w, "t,channel,trajectory")?;
    for r in records {
        for j in &r.jumps {
            writeln!(w, "{},{},{}", j.t, j.channel.name(), r.index)?;
        }
    }
    Ok(())
}
