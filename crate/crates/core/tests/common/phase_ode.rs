//! Brute-force integration of δφ̇ = δω − 2 S1 sin δφ − 4 S2 sin 2δφ.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Zero,
    Pi,
    Drift,
}

fn rhs(x: f64, dw: f64, s1: f64, s2: f64) -> f64 {
    dw - 2.0 * s1 * x.sin() - 4.0 * s2 * (2.0 * x).sin()
}

/// RK4 from `x0` until the rhs vanishes (a fixed point) or the phase has
/// travelled two full turns (drift).
pub fn integrate(x0: f64, dw: f64, s1: f64, s2: f64) -> Outcome {
    let dt = 0.05;
    let mut x = x0;
    let max_steps = 4_000_000;
    for _ in 0..max_steps {
        let k1 = rhs(x, dw, s1, s2);
        if k1.abs() < 1e-11 {
            break;
        }
        let k2 = rhs(x + 0.5 * dt * k1, dw, s1, s2);
        let k3 = rhs(x + 0.5 * dt * k2, dw, s1, s2);
        let k4 = rhs(x + dt * k3, dw, s1, s2);
        x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (x - x0).abs() > 2.0 * TAU {
            return Outcome::Drift;
        }
    }
    let w = (x + PI).rem_euclid(TAU) - PI;
    if w.abs() < FRAC_PI_2 {
        Outcome::Zero
    } else {
        Outcome::Pi
    }
}

/// Regime label from 16 evenly spaced initial conditions:
/// "zero-sync", "pi-sync", "bistable" or "drift".
pub fn regime(dw: f64, s1: f64, s2: f64) -> &'static str {
    let outcomes: Vec<Outcome> = (0..16)
        .map(|i| integrate(-PI + TAU * (i as f64 + 0.5) / 16.0, dw, s1, s2))
        .collect();
    let zero = outcomes.contains(&Outcome::Zero);
    let pi = outcomes.contains(&Outcome::Pi);
    match (zero, pi) {
        (true, true) => "bistable",
        (true, false) => "zero-sync",
        (false, true) => "pi-sync",
        (false, false) => "drift",
    }
}
