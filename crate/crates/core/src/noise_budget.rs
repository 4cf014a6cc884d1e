//! Shot-noise versus thermal-noise budget.
//!
//! Force spectra are carried in units of (ħ g0 / x_ZPF)² with frequencies in
//! units of Ω. The shot-noise force spectrum of the weakly coupled cavity is
//!
//! ```text
//! S_SN(ω) = ½ n [κ/((κ/2)² + (ω+Δ)²) + κ/((κ/2)² + (ω−Δ)²)]
//! ```
//!
//! The high-temperature thermal force spectrum is 2 m Γ k_B T. With
//! k_B T = n_th ħΩ and x_ZPF² = ħ/(2 m Ω) it becomes (ħ/x_ZPF)² Γ n_th, which in
//! the units above reads
//!
//! ```text
//! S_th = Γ n_th / g0²
//! ```
//!
//! Equating the two at ω = Ω gives n_th* = g0² S_SN(Ω) / Γ. In the resolved
//! sideband limit κ ≪ Ω, Δ = Ω the red sideband dominates, S_SN → 2n/κ, and
//! n_th* → 2 g0² n / (κ Γ) = C/2 with the cooperativity C = 4 g0² n / (κ Γ).

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::params::OmParams;
use crate::sde::{Mode, Trajectory};

/// S_SN at angular frequency `omega_eval` (units of Ω) for `n_photons`.
pub fn shot_noise_spectrum(omega_eval: f64, p: &OmParams, n_photons: f64) -> f64 {
    let k = p.kappa;
    let d = p.detuning();
    let hk2 = 0.25 * k * k;
    0.5 * n_photons * (k / (hk2 + (omega_eval + d).powi(2)) + k / (hk2 + (omega_eval - d).powi(2)))
}

/// S_th = Γ n_th / g0².
pub fn thermal_spectrum(gamma: f64, n_th: f64, g0: f64) -> f64 {
    gamma * n_th / (g0 * g0)
}

/// C = 4 g0² n / (κ Γ).
pub fn cooperativity(p: &OmParams, n_photons: f64) -> f64 {
    4.0 * p.g0 * p.g0 * n_photons / (p.kappa * p.gamma)
}

/// Thermal occupancy at which S_th equals S_SN(Ω).
///
/// S_th is linear in n_th, so the root is bracketed from zero and refined by
/// bisection to machine precision.
pub fn equate_spectra(p: &OmParams, n_photons: f64) -> Result<f64> {
    check(p, n_photons)?;
    let target = shot_noise_spectrum(p.omega, p, n_photons);
    let f = |n_th: f64| thermal_spectrum(p.gamma, n_th, p.g0) - target;
    let mut hi = 1.0;
    while f(hi) < 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        if f(m) < 0.0 {
            lo = m;
        } else {
            hi = m;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn check(p: &OmParams, n_photons: f64) -> Result<()> {
    if !(n_photons >= 0.0 && n_photons.is_finite()) {
        return Err(invalid("n_photons", "must be finite and non-negative"));
    }
    if !(p.kappa > 0.0 && p.gamma > 0.0) {
        return Err(invalid("kappa", "kappa and gamma must be positive"));
    }
    if p.g0 <= 0.0 {
        return Err(invalid("g0", "must be positive for a noise budget"));
    }
    Ok(())
}

/// κ/Ω below which, with |Δ − Ω| ≤ κ, the sideband-resolved estimate applies.
pub const RESOLVED_SIDEBAND_KAPPA: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseBudget {
    pub params: OmParams,
    pub n_photons: f64,
    pub n_th: f64,
    pub s_sn_norm: f64,
    pub s_th_norm: f64,
    pub n_th_star: f64,
    pub cooperativity: f64,
    /// n_th* relative to C/2.
    pub ratio_to_half_cooperativity: f64,
    pub resolved_sideband: bool,
}

impl NoiseBudget {
    /// Budget at thermal occupancy `n_th`, or `p.n_th` when `None`.
    pub fn compute(p: &OmParams, n_photons: f64, n_th: Option<f64>) -> Result<Self> {
        let n_th_star = equate_spectra(p, n_photons)?;
        let n_th = n_th.unwrap_or(p.n_th);
        if !(n_th >= 0.0) {
            return Err(invalid("n_th", "must be non-negative"));
        }
        let c = cooperativity(p, n_photons);
        let kappa = p.kappa / p.omega;
        Ok(Self {
            params: *p,
            n_photons,
            n_th,
            s_sn_norm: shot_noise_spectrum(p.omega, p, n_photons),
            s_th_norm: thermal_spectrum(p.gamma, n_th, p.g0),
            n_th_star,
            cooperativity: c,
            ratio_to_half_cooperativity: if c > 0.0 {
                n_th_star / (0.5 * c)
            } else {
                f64::NAN
            },
            resolved_sideband: kappa < RESOLVED_SIDEBAND_KAPPA
                && (p.detuning() - p.omega).abs() <= p.kappa,
        })
    }

    pub fn quantum_dominated(&self) -> bool {
        self.n_th < self.n_th_star
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Cell-averaged ⟨|α|²⟩ of a converged trajectory, divided by g0² when the
/// run used α̃ = g0 α. NaN in the classical limit, where no photon number is
/// defined.
pub fn photons_from_trajectory(traj: &Trajectory) -> f64 {
    let [a, b] = traj.mean_photon_numbers();
    match traj.mode {
        Mode::Raw => 0.5 * (a + b),
        Mode::Rescaled { scale } if scale.is_classical_limit() => f64::NAN,
        Mode::Rescaled { scale } => {
            let g1 = scale.quantum_parameter * traj.params.cell1.kappa;
            let g2 = scale.quantum_parameter * traj.params.cell2.kappa;
            0.5 * (a / (g1 * g1) + b / (g2 * g2))
        }
    }
}
