//! Relative-phase extraction and synchronization statistics.
//!
//! The relative phase is read reference-free from the mechanical amplitudes,
//! δφ = arg(β2 β1*), and wrapped to (−π, π].

use std::f64::consts::{FRAC_PI_2, FRAC_PI_8, PI, TAU};
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sde::{SemiclassicalState, Trajectory};

/// Wraps an angle to (−π, π].
#[inline]
pub fn wrap(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Below this modulus a mechanical amplitude carries no usable phase.
pub const DEFAULT_AMPLITUDE_FLOOR: f64 = 1e-8;

/// δφ from one pair of mechanical amplitudes, or `None` when either is below
/// `floor`.
#[inline]
pub fn phase_of(beta1: Complex64, beta2: Complex64, floor: f64) -> Option<f64> {
    if beta1.norm() <= floor || beta2.norm() <= floor {
        return None;
    }
    Some(wrap((beta2 * beta1.conj()).arg()))
}

/// Relative phase time series. `delta_phi[i]` is meaningful only where
/// `defined[i]` is set; undefined entries hold 0.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseSeries {
    pub times: Vec<f64>,
    pub delta_phi: Vec<f64>,
    pub defined: Vec<bool>,
}

impl PhaseSeries {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            times: Vec::with_capacity(n),
            delta_phi: Vec::with_capacity(n),
            defined: Vec::with_capacity(n),
        }
    }

    /// Series from unwrapped phase samples (all defined).
    pub fn from_raw(times: Vec<f64>, raw: &[f64]) -> Self {
        let n = raw.len();
        Self {
            times,
            delta_phi: raw.iter().map(|&x| wrap(x)).collect(),
            defined: vec![true; n],
        }
    }

    pub fn push(&mut self, t: f64, phase: Option<f64>) {
        self.times.push(t);
        self.delta_phi.push(phase.map(wrap).unwrap_or(0.0));
        self.defined.push(phase.is_some());
    }

    pub fn push_state(&mut self, t: f64, s: &SemiclassicalState, floor: f64) {
        self.push(t, phase_of(s.beta1, s.beta2, floor));
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn undefined_count(&self) -> usize {
        self.defined.iter().filter(|d| !**d).count()
    }

    /// Defined phase values in time order.
    pub fn defined_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.delta_phi
            .iter()
            .zip(&self.defined)
            .filter_map(|(&x, &d)| d.then_some(x))
    }

    /// Errors when more than half of the samples are undefined.
    pub fn check_defined(&self) -> Result<()> {
        let undefined = self.undefined_count();
        if 2 * undefined > self.len() {
            return Err(Error::PhaseUndefined {
                undefined,
                total: self.len(),
            });
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,delta_phi,defined")?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{},{},{}",
                self.times[i],
                self.delta_phi[i],
                u8::from(self.defined[i])
            )?;
        }
        Ok(())
    }
}

/// Relative phase of every recorded sample of `traj`.
pub fn relative_phase(traj: &Trajectory) -> Result<PhaseSeries> {
    relative_phase_with_floor(traj, DEFAULT_AMPLITUDE_FLOOR)
}

pub fn relative_phase_with_floor(traj: &Trajectory, floor: f64) -> Result<PhaseSeries> {
    let mut ps = PhaseSeries::with_capacity(traj.len());
    for (t, s) in traj.times.iter().zip(&traj.states) {
        ps.push_state(*t, s, floor);
    }
    ps.check_defined()?;
    Ok(ps)
}

/// Normalized density of δφ over (−π, π].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseHistogram {
    /// `n_bins + 1` edges from −π to π.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub density: Vec<f64>,
    pub total: u64,
}

pub const DEFAULT_BINS: usize = 64;

impl PhaseHistogram {
    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn bin_width(&self) -> f64 {
        TAU / self.n_bins() as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Bin holding angle `x` (wrapped first); the right edge π belongs to the last bin.
    pub fn bin_of(&self, x: f64) -> usize {
        bin_index(wrap(x), self.n_bins())
    }

    /// Σ density·width; 1 up to rounding.
    pub fn integral(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.bin_width()
    }

    /// Probability mass of the bins whose centers lie on the arc from `from`
    /// to `to` (counter-clockwise, both inclusive).
    pub fn arc_mass(&self, from: usize, to: usize) -> f64 {
        let n = self.n_bins();
        let mut i = from;
        let mut mass = 0.0;
        loop {
            mass += self.density[i] * self.bin_width();
            if i == to {
                break;
            }
            i = (i + 1) % n;
        }
        mass
    }

    /// ⟨cos δφ⟩, ⟨sin δφ⟩ evaluated at bin centers.
    pub fn sync_measure(&self) -> SyncMeasure {
        let w = self.bin_width();
        let (c, s) = self
            .centers()
            .iter()
            .zip(&self.density)
            .fold((0.0, 0.0), |(c, s), (x, d)| {
                (c + d * w * x.cos(), s + d * w * x.sin())
            });
        SyncMeasure {
            mean_cos: c,
            mean_sin: s,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "bin_lo,bin_hi,count,density")?;
        for i in 0..self.n_bins() {
            writeln!(
                w,
                "{},{},{},{}",
                self.edges[i],
                self.edges[i + 1],
                self.counts[i],
                self.density[i]
            )?;
        }
        Ok(())
    }
}

#[inline]
fn bin_index(x: f64, n: usize) -> usize {
    let i = ((x + PI) / TAU * n as f64).floor();
    (i.max(0.0) as usize).min(n - 1)
}

/// Histogram of the defined samples of `ps`. Needs at least 10 samples per bin.
pub fn histogram(ps: &PhaseSeries, n_bins: usize) -> Result<PhaseHistogram> {
    if n_bins == 0 {
        return Err(Error::InsufficientSamples { have: 0, need: 1 });
    }
    let have = ps.len() - ps.undefined_count();
    let need = 10 * n_bins;
    if have < need {
        return Err(Error::InsufficientSamples { have, need });
    }
    let mut counts = vec![0u64; n_bins];
    for x in ps.defined_values() {
        counts[bin_index(x, n_bins)] += 1;
    }
    Ok(histogram_from_counts(counts))
}

pub fn histogram_from_counts(counts: Vec<u64>) -> PhaseHistogram {
    let n = counts.len();
    let total: u64 = counts.iter().sum();
    let w = TAU / n as f64;
    let edges = (0..=n).map(|i| -PI + w * i as f64).collect();
    let density = counts
        .iter()
        .map(|&c| {
            if total == 0 {
                0.0
            } else {
                c as f64 / (total as f64 * w)
            }
        })
        .collect();
    PhaseHistogram {
        edges,
        counts,
        density,
        total,
    }
}

/// Peak structure of a histogram with candidate maxima near 0 and π.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bimodality {
    /// Location and density of the highest bin within the window around 0.
    pub zero_peak: (f64, f64),
    /// Same around π.
    pub pi_peak: (f64, f64),
    /// Density minima on the two arcs separating the peaks.
    pub dips: [(f64, f64); 2],
    /// Mass of the basin around each peak, split at the dips.
    pub zero_mass: f64,
    pub pi_mass: f64,
}

impl Bimodality {
    /// Both candidates are genuine local maxima: each dip is strictly below
    /// both peaks by more than `margin` (in density units).
    pub fn is_bimodal(&self, margin: f64) -> bool {
        let lower_peak = self.zero_peak.1.min(self.pi_peak.1);
        self.dips.iter().all(|&(_, d)| d + margin < lower_peak)
    }
}

/// Locates the maxima within `window` of 0 and of π and the separating dips.
pub fn bimodality(h: &PhaseHistogram, window: f64) -> Bimodality {
    let n = h.n_bins();
    let centers = h.centers();
    let near = |target: f64| {
        (0..n)
            .filter(|&i| wrap(centers[i] - target).abs() <= window)
            .max_by(|&a, &b| h.density[a].total_cmp(&h.density[b]))
            .unwrap_or_else(|| h.bin_of(target))
    };
    let z = near(0.0);
    let p = near(PI);
    // Minimum on the counter-clockwise arc strictly between a and b.
    let dip = |a: usize, b: usize| {
        let mut best = a;
        let mut i = (a + 1) % n;
        let mut first = true;
        while i != b {
            if first || h.density[i] < h.density[best] {
                best = i;
                first = false;
            }
            i = (i + 1) % n;
        }
        if first {
            a
        } else {
            best
        }
    };
    let d1 = dip(z, p);
    let d2 = dip(p, z);
    // Basins: the zero basin runs from just after d2 to d1, the π basin from
    // just after d1 to d2.
    let zero_mass = h.arc_mass((d2 + 1) % n, d1);
    let pi_mass = h.arc_mass((d1 + 1) % n, d2);
    Bimodality {
        zero_peak: (centers[z], h.density[z]),
        pi_peak: (centers[p], h.density[p]),
        dips: [(centers[d1], h.density[d1]), (centers[d2], h.density[d2])],
        zero_mass,
        pi_mass,
    }
}

/// Time averages of cos δφ and sin δφ, i.e. Re and Im of the normalized
/// mechanical correlator up to the sign convention of δφ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncMeasure {
    pub mean_cos: f64,
    pub mean_sin: f64,
}

pub fn sync_measure(ps: &PhaseSeries) -> SyncMeasure {
    let (mut c, mut s, mut n) = (0.0, 0.0, 0usize);
    for x in ps.defined_values() {
        c += x.cos();
        s += x.sin();
        n += 1;
    }
    if n == 0 {
        return SyncMeasure {
            mean_cos: f64::NAN,
            mean_sin: f64::NAN,
        };
    }
    SyncMeasure {
        mean_cos: c / n as f64,
        mean_sin: s / n as f64,
    }
}

/// Standard errors of [`sync_measure`] from `n_blocks` contiguous batch means.
pub fn sync_measure_stderr(ps: &PhaseSeries, n_blocks: usize) -> SyncMeasure {
    let values: Vec<f64> = ps.defined_values().collect();
    let block = values.len() / n_blocks.max(2);
    if block == 0 {
        return SyncMeasure {
            mean_cos: f64::NAN,
            mean_sin: f64::NAN,
        };
    }
    let means: Vec<(f64, f64)> = values
        .chunks_exact(block)
        .map(|c| {
            let (a, b) = c
                .iter()
                .fold((0.0, 0.0), |(a, b), x| (a + x.cos(), b + x.sin()));
            (a / block as f64, b / block as f64)
        })
        .collect();
    let m = means.len() as f64;
    let err = |f: &dyn Fn(&(f64, f64)) -> f64| {
        let mu = means.iter().map(f).sum::<f64>() / m;
        let var = means.iter().map(|x| (f(x) - mu).powi(2)).sum::<f64>() / (m - 1.0);
        (var / m).sqrt()
    };
    SyncMeasure {
        mean_cos: err(&|x| x.0),
        mean_sin: err(&|x| x.1),
    }
}

/// Synchronization state of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncState {
    Zero,
    Pi,
}

impl SyncState {
    pub fn other(self) -> Self {
        match self {
            SyncState::Zero => SyncState::Pi,
            SyncState::Pi => SyncState::Zero,
        }
    }

    /// Representative phase of the state.
    pub fn phase(self) -> f64 {
        match self {
            SyncState::Zero => 0.0,
            SyncState::Pi => PI,
        }
    }
}

/// Classification and fitting thresholds for residence-time analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidenceConfig {
    /// Half-width of the band around ±π/2 in which the previous label persists.
    pub hysteresis: f64,
    /// Dwells shorter than this are absorbed into the surrounding dwell.
    pub debounce: f64,
    /// Only dwells longer than this enter the exponential fit.
    pub tau_min: f64,
    /// Below this many fitted dwells the fit is flagged as low-count.
    pub min_switches: usize,
}

impl ResidenceConfig {
    /// Defaults for mechanical frequency `omega`: hysteresis π/8, debounce of two
    /// mechanical periods, fit cutoff of five periods.
    pub fn for_frequency(omega: f64) -> Self {
        let period = TAU / omega;
        Self {
            hysteresis: FRAC_PI_8,
            debounce: 2.0 * period,
            tau_min: 5.0 * period,
            min_switches: 20,
        }
    }
}

impl Default for ResidenceConfig {
    fn default() -> Self {
        Self::for_frequency(1.0)
    }
}

/// Per-sample labels with hysteresis. Samples before the first confident
/// classification are `None`; undefined samples inherit the previous label.
pub fn classify(ps: &PhaseSeries, hysteresis: f64) -> Vec<Option<SyncState>> {
    let lo = FRAC_PI_2 - hysteresis;
    let hi = FRAC_PI_2 + hysteresis;
    let mut current = None;
    ps.delta_phi
        .iter()
        .zip(&ps.defined)
        .map(|(&x, &d)| {
            if d {
                let a = x.abs();
                if a < lo {
                    current = Some(SyncState::Zero);
                } else if a > hi {
                    current = Some(SyncState::Pi);
                }
            }
            current
        })
        .collect()
}

/// One dwell in a synchronization state, `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DwellInterval {
    pub state: SyncState,
    pub start: f64,
    pub end: f64,
    /// Touches the beginning or end of the record, so its true length is unknown.
    pub censored: bool,
}

impl DwellInterval {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// Splits a label stream into alternating dwell intervals. Each interval ends
/// where the next begins; the last ends at the final sample time.
pub fn dwell_intervals(times: &[f64], labels: &[Option<SyncState>]) -> Vec<DwellInterval> {
    let mut out: Vec<DwellInterval> = Vec::new();
    for (&t, l) in times.iter().zip(labels) {
        let Some(state) = *l else { continue };
        match out.last_mut() {
            Some(last) if last.state == state => last.end = t,
            Some(last) => {
                last.end = t;
                out.push(DwellInterval {
                    state,
                    start: t,
                    end: t,
                    censored: false,
                });
            }
            None => out.push(DwellInterval {
                state,
                start: t,
                end: t,
                censored: true,
            }),
        }
    }
    if let Some(last) = out.last_mut() {
        last.censored = true;
    }
    out
}

/// Absorbs every dwell shorter than `min_duration` into the dwell it
/// interrupts, scanning forward in time: a switch counts only once the new
/// state has persisted for `min_duration`.
pub fn debounce(intervals: &[DwellInterval], min_duration: f64) -> Vec<DwellInterval> {
    let mut out: Vec<DwellInterval> = Vec::with_capacity(intervals.len());
    let mut iter = intervals.iter().copied().peekable();
    while let Some(iv) = iter.next() {
        let Some(current) = out.last_mut() else {
            out.push(iv);
            continue;
        };
        if iv.duration() < min_duration {
            current.end = iv.end;
            current.censored |= iv.censored;
            if let Some(next) = iter.next() {
                current.end = next.end;
                current.censored |= next.censored;
            }
        } else {
            out.push(iv);
        }
    }
    out
}

/// Exponential fit of one state's dwell times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DwellFit {
    Fitted {
        /// Mean residence time of the underlying (pre-debounce) process.
        mean: f64,
        stderr: f64,
        /// Mean excess of the debounced dwells above `tau_min`.
        observed_mean: f64,
        samples: usize,
        low_count: bool,
    },
    /// No switch out of this state was ever observed: it traps the system.
    Trapped,
    /// The state was never, or too rarely, visited.
    NoData,
}

impl DwellFit {
    pub fn mean(&self) -> f64 {
        match self {
            DwellFit::Fitted { mean, .. } => *mean,
            DwellFit::Trapped => f64::INFINITY,
            DwellFit::NoData => f64::NAN,
        }
    }

    pub fn stderr(&self) -> f64 {
        match self {
            DwellFit::Fitted { stderr, .. } => *stderr,
            _ => f64::NAN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidenceRecord {
    /// Debounced, alternating dwell intervals.
    pub intervals: Vec<DwellInterval>,
    pub switch_count: usize,
    pub zero: DwellFit,
    pub pi: DwellFit,
    /// Fraction of classified time spent in each state (hysteresis labels).
    pub p_zero: f64,
    pub p_pi: f64,
    pub config: ResidenceConfig,
}

impl ResidenceRecord {
    pub fn fit(&self, state: SyncState) -> &DwellFit {
        match state {
            SyncState::Zero => &self.zero,
            SyncState::Pi => &self.pi,
        }
    }

    /// Complete (uncensored) dwell durations of `state` above the fit cutoff.
    pub fn fitted_dwells(&self, state: SyncState) -> Vec<f64> {
        self.intervals
            .iter()
            .filter(|iv| iv.state == state && !iv.censored && iv.duration() > self.config.tau_min)
            .map(DwellInterval::duration)
            .collect()
    }

    pub fn is_monostable(&self) -> bool {
        self.switch_count == 0
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "state,start,end,duration,censored")?;
        for iv in &self.intervals {
            let s = match iv.state {
                SyncState::Zero => "zero",
                SyncState::Pi => "pi",
            };
            writeln!(
                w,
                "{s},{},{},{},{}",
                iv.start,
                iv.end,
                iv.duration(),
                u8::from(iv.censored)
            )?;
        }
        Ok(())
    }
}

/// Classifies `ps` into 0/π dwells and fits exponential residence times.
///
/// Each state's fit is the maximum-likelihood mean of an exponential above
/// `tau_min`: the average excess of complete dwells over the cutoff. The
/// debounce hides genuine excursions shorter than `debounce`, which stretches
/// the observed dwells of the other state; for exponential dwells the
/// observed mean excess m_L relates to the true means by
///
/// ```text
/// m_L = (τ_L + p·b) / q,   q = exp(−d/τ_L'),  p = 1 − q,
/// b = τ_L' − d·q / p  (mean length of a hidden excursion),
/// ```
///
/// with L' the other state and d the debounce. The pair of relations is
/// inverted by fixed-point iteration; when only one state has a fit, its
/// observed mean is reported unchanged.
pub fn residence_times(ps: &PhaseSeries, cfg: &ResidenceConfig) -> ResidenceRecord {
    residence_times_pooled(std::slice::from_ref(ps), cfg)
}

/// [`residence_times`] over independent runs: dwells and occupation times are
/// pooled, and each run's boundary dwells stay censored.
pub fn residence_times_pooled(runs: &[PhaseSeries], cfg: &ResidenceConfig) -> ResidenceRecord {
    let mut intervals = Vec::new();
    let mut switch_count = 0;
    let (mut t0, mut tpi) = (0.0, 0.0);
    for ps in runs {
        let labels = classify(ps, cfg.hysteresis);
        let raw = dwell_intervals(&ps.times, &labels);
        let run = debounce(&raw, cfg.debounce);
        switch_count += run.len().saturating_sub(1);
        intervals.extend(run);
        for w in ps.times.windows(2).zip(&labels) {
            match w.1 {
                Some(SyncState::Zero) => t0 += w.0[1] - w.0[0],
                Some(SyncState::Pi) => tpi += w.0[1] - w.0[0],
                None => {}
            }
        }
    }
    let total = t0 + tpi;
    let (p_zero, p_pi) = if total > 0.0 {
        (t0 / total, tpi / total)
    } else {
        (f64::NAN, f64::NAN)
    };

    let observed = |state: SyncState| {
        let excess: Vec<f64> = intervals
            .iter()
            .filter(|iv| iv.state == state && !iv.censored && iv.duration() > cfg.tau_min)
            .map(|iv| iv.duration() - cfg.tau_min)
            .collect();
        if excess.is_empty() {
            None
        } else {
            Some((
                excess.iter().sum::<f64>() / excess.len() as f64,
                excess.len(),
            ))
        }
    };
    let visited = |state: SyncState| intervals.iter().any(|iv| iv.state == state);

    let obs0 = observed(SyncState::Zero);
    let obs_pi = observed(SyncState::Pi);
    let corrected = match (obs0, obs_pi) {
        (Some((m0, _)), Some((mpi, _))) => Some(invert_debounce(m0, mpi, cfg.debounce)),
        _ => None,
    };

    let make = |state: SyncState, obs: Option<(f64, usize)>, corr: Option<f64>| -> DwellFit {
        if switch_count == 0 {
            return if visited(state) {
                DwellFit::Trapped
            } else {
                DwellFit::NoData
            };
        }
        match obs {
            Some((m, n)) => {
                let mean = corr.unwrap_or(m);
                DwellFit::Fitted {
                    mean,
                    stderr: mean / (n as f64).sqrt(),
                    observed_mean: m,
                    samples: n,
                    low_count: n < cfg.min_switches,
                }
            }
            None => DwellFit::NoData,
        }
    };
    ResidenceRecord {
        zero: make(SyncState::Zero, obs0, corrected.map(|c| c.0)),
        pi: make(SyncState::Pi, obs_pi, corrected.map(|c| c.1)),
        intervals,
        switch_count,
        p_zero,
        p_pi,
        config: *cfg,
    }
}

/// Observed mean excess of a state's debounced dwells, given true means.
pub fn debounced_mean(tau: f64, tau_other: f64, d: f64) -> f64 {
    if d <= 0.0 {
        return tau;
    }
    let q = (-d / tau_other).exp();
    let p = 1.0 - q;
    let hidden = if p > 1e-12 {
        tau_other - d * q / p
    } else {
        0.5 * d
    };
    (tau + p * hidden) / q
}

/// Solves `debounced_mean(τ0, τπ) = m0`, `debounced_mean(τπ, τ0) = mπ`.
fn invert_debounce(m0: f64, mpi: f64, d: f64) -> (f64, f64) {
    let (mut t0, mut tpi) = (m0, mpi);
    for _ in 0..200 {
        // Each equation is linear in its own τ once the other is fixed.
        let solve = |m: f64, other: f64| {
            let q = (-d / other).exp();
            let p = 1.0 - q;
            let hidden = if p > 1e-12 {
                other - d * q / p
            } else {
                0.5 * d
            };
            (m * q - p * hidden).max(1e-12 * m)
        };
        let n0 = solve(m0, tpi);
        let npi = solve(mpi, n0);
        let done = (n0 - t0).abs() <= 1e-12 * t0 && (npi - tpi).abs() <= 1e-12 * tpi;
        t0 = n0;
        tpi = npi;
        if done {
            break;
        }
    }
    (t0, tpi)
}

/// Kolmogorov–Smirnov comparison of a sample with an exponential law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
    pub samples: usize,
}

/// KS test of `excess` (values ≥ 0) against Exp(mean).
pub fn ks_exponential(excess: &[f64], mean: f64) -> KsTest {
    let mut x: Vec<f64> = excess.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in x.iter().enumerate() {
        let cdf = 1.0 - (-v / mean).exp();
        d = d.max((i as f64 + 1.0) / n - cdf).max(cdf - i as f64 / n);
    }
    let sqrt_n = n.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    KsTest {
        statistic: d,
        p_value: kolmogorov_q(lambda),
        samples: x.len(),
    }
}

/// Survival function of the Kolmogorov distribution.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let term = sign * (-2.0 * (j as f64 * lambda).powi(2)).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn series(values: &[f64], dt: f64) -> PhaseSeries {
        let times = (0..values.len()).map(|i| i as f64 * dt).collect();
        PhaseSeries::from_raw(times, values)
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap(PI), PI);
        assert_eq!(wrap(-PI), PI);
        assert_relative_eq!(wrap(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-15);
        assert_relative_eq!(wrap(-0.1 + TAU * 5.0), -0.1, epsilon = 1e-12);
    }

    #[test]
    fn phase_examples() {
        let b = Complex64::new(0.3, -0.8);
        assert_eq!(phase_of(b, b, 1e-8), Some(0.0));
        assert_relative_eq!(phase_of(b, -b, 1e-8).unwrap(), PI, epsilon = 1e-14);
        assert_relative_eq!(
            phase_of(b, Complex64::i() * b, 1e-8).unwrap(),
            FRAC_PI_2,
            epsilon = 1e-14
        );
        assert_eq!(phase_of(Complex64::new(0.0, 0.0), b, 1e-8), None);
    }

    #[test]
    fn mostly_undefined_series_rejected() {
        let mut ps = PhaseSeries::default();
        for i in 0..10 {
            ps.push(i as f64, (i < 4).then_some(0.1));
        }
        assert!(matches!(
            ps.check_defined(),
            Err(Error::PhaseUndefined {
                undefined: 6,
                total: 10
            })
        ));
    }

    #[test]
    fn constant_series_fills_one_bin() {
        let ps = series(&vec![0.0; 1000], 1.0);
        let h = histogram(&ps, 64).unwrap();
        let occupied: Vec<usize> = (0..64).filter(|&i| h.counts[i] > 0).collect();
        assert_eq!(occupied.len(), 1);
        let i = occupied[0];
        assert!(h.edges[i] <= 0.0 && 0.0 < h.edges[i + 1]);
        assert_relative_eq!(h.integral(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn pi_lands_in_last_bin() {
        let ps = series(&vec![PI; 200], 1.0);
        let h = histogram(&ps, 16).unwrap();
        assert_eq!(h.counts[15], 200);
    }

    #[test]
    fn too_few_samples() {
        let ps = series(&[0.0; 100], 1.0);
        assert!(matches!(
            histogram(&ps, 64),
            Err(Error::InsufficientSamples {
                have: 100,
                need: 640
            })
        ));
    }

    #[test]
    fn sync_measure_constants() {
        let m = sync_measure(&series(&[0.0; 50], 1.0));
        assert_eq!((m.mean_cos, m.mean_sin), (1.0, 0.0));
        let m = sync_measure(&series(&[PI; 50], 1.0));
        assert_eq!(m.mean_cos, -1.0);
        assert!(m.mean_sin.abs() < 1e-15);
    }

    #[test]
    fn hysteresis_holds_label_inside_band() {
        let ps = series(&[0.1, 1.5, 1.6, 1.7, 2.5, 1.6, 1.4, 0.3], 1.0);
        let labels = classify(&ps, FRAC_PI_8);
        use SyncState::*;
        assert_eq!(
            labels,
            vec![
                Some(Zero),
                Some(Zero),
                Some(Zero),
                Some(Zero),
                Some(Pi),
                Some(Pi),
                Some(Pi),
                Some(Zero)
            ]
        );
    }

    #[test]
    fn classification_is_idempotent() {
        let raw: Vec<f64> = (0..500).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
        let ps = series(&raw, 1.0);
        let labels = classify(&ps, FRAC_PI_8);
        let again_raw: Vec<f64> = labels
            .iter()
            .map(|l| l.map_or(FRAC_PI_2, SyncState::phase))
            .collect();
        let again = classify(&series(&again_raw, 1.0), FRAC_PI_8);
        assert_eq!(labels, again);
    }

    #[test]
    fn debounce_absorbs_blips() {
        use SyncState::*;
        let iv = |state, start: f64, end: f64| DwellInterval {
            state,
            start,
            end,
            censored: false,
        };
        let raw = vec![
            iv(Zero, 0.0, 50.0),
            iv(Pi, 50.0, 52.0),
            iv(Zero, 52.0, 90.0),
            iv(Pi, 90.0, 200.0),
            iv(Zero, 200.0, 201.0),
            iv(Pi, 201.0, 300.0),
        ];
        let out = debounce(&raw, 5.0);
        assert_eq!(out, vec![iv(Zero, 0.0, 90.0), iv(Pi, 90.0, 300.0)]);
    }

    #[test]
    fn noiseless_trap_has_no_switches() {
        let ps = series(&vec![3.0; 1000], 1.0);
        let r = residence_times(&ps, &ResidenceConfig::default());
        assert_eq!(r.switch_count, 0);
        assert_eq!(r.pi, DwellFit::Trapped);
        assert_eq!(r.zero, DwellFit::NoData);
        assert!(r.pi.mean().is_infinite());
    }

    #[test]
    fn debounce_correction_inverts() {
        let (t0, tpi, d) = (100.0, 50.0, 4.0 * PI);
        let m0 = debounced_mean(t0, tpi, d);
        let mpi = debounced_mean(tpi, t0, d);
        let (a, b) = invert_debounce(m0, mpi, d);
        assert_relative_eq!(a, t0, max_relative = 1e-9);
        assert_relative_eq!(b, tpi, max_relative = 1e-9);
        assert_eq!(debounced_mean(t0, tpi, 0.0), t0);
    }

    #[test]
    fn ks_accepts_exact_quantiles() {
        // Midpoint quantiles of Exp(1) have D = 1/(2n).
        let n = 400;
        let x: Vec<f64> = (0..n)
            .map(|i| -(1.0 - (i as f64 + 0.5) / n as f64).ln())
            .collect();
        let ks = ks_exponential(&x, 1.0);
        assert_relative_eq!(ks.statistic, 0.5 / n as f64, epsilon = 1e-12);
        assert!(ks.p_value > 0.99);
        // Wrong mean is rejected.
        assert!(ks_exponential(&x, 2.0).p_value < 1e-6);
    }

    #[test]
    fn kolmogorov_reference_values() {
        // Q_KS(1.3581) ≈ 0.05, Q_KS(1.6276) ≈ 0.01
        assert_relative_eq!(kolmogorov_q(1.3581), 0.05, epsilon = 1e-4);
        assert_relative_eq!(kolmogorov_q(1.6276), 0.01, epsilon = 1e-4);
    }

    #[test]
    fn bimodality_on_two_bumps() {
        let n = 32;
        let counts: Vec<u64> = (0..n)
            .map(|i| {
                let x = -PI + TAU * (i as f64 + 0.5) / n as f64;
                (1000.0 * ((-(x * x) / 0.3).exp() + 0.5 * (-(wrap(x - PI).powi(2)) / 0.3).exp())
                    + 10.0) as u64
            })
            .collect();
        let h = histogram_from_counts(counts);
        let b = bimodality(&h, FRAC_PI_8);
        assert!(b.is_bimodal(0.0));
        assert!(b.zero_peak.0.abs() < FRAC_PI_8);
        assert!(wrap(b.pi_peak.0 - PI).abs() < FRAC_PI_8);
        assert!(b.zero_mass > b.pi_mass);
        assert_relative_eq!(b.zero_mass + b.pi_mass, 1.0, epsilon = 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn shifting_by_full_turn_is_invisible(raw in proptest::collection::vec(-20.0f64..20.0, 1..50)) {
            let times: Vec<f64> = (0..raw.len()).map(|i| i as f64).collect();
            let a = PhaseSeries::from_raw(times.clone(), &raw);
            let shifted: Vec<f64> = raw.iter().map(|x| x + TAU).collect();
            let b = PhaseSeries::from_raw(times, &shifted);
            for (x, y) in a.delta_phi.iter().zip(&b.delta_phi) {
                proptest::prop_assert!(wrap(x - y).abs() < 1e-12);
                proptest::prop_assert!(*x > -PI && *x <= PI);
            }
        }

        #[test]
        fn histogram_normalized(raw in proptest::collection::vec(-10.0f64..10.0, 160..400), bins in 1usize..16) {
            let times: Vec<f64> = (0..raw.len()).map(|i| i as f64).collect();
            let h = histogram(&PhaseSeries::from_raw(times, &raw), bins).unwrap();
            proptest::prop_assert!((h.integral() - 1.0).abs() < 1e-9);
        }
    }
}
