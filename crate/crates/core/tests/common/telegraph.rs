//! Synthetic two-state telegraph phase series.

use omsync_core::phase::{wrap, PhaseSeries};
use omsync_core::rng;
use rand::Rng;
use rand_distr::{Exp, Normal};

/// Alternating exponential dwells with means `tau0` (near 0) and `tau_pi`
/// (near π), sampled every `dt` up to `t_total`, with Gaussian jitter `sigma`.
pub fn series(tau0: f64, tau_pi: f64, sigma: f64, dt: f64, t_total: f64, seed: u64) -> PhaseSeries {
    let mut rng = rng::stream(seed, 0);
    let d0 = Exp::new(1.0 / tau0).unwrap();
    let dpi = Exp::new(1.0 / tau_pi).unwrap();
    let jitter = Normal::new(0.0, sigma).unwrap();
    let n = (t_total / dt) as usize;
    let mut ps = PhaseSeries::with_capacity(n);
    let mut in_pi = false;
    let mut switch_at = rng.sample(d0);
    for k in 0..n {
        let t = k as f64 * dt;
        while t >= switch_at {
            in_pi = !in_pi;
            switch_at += if in_pi {
                rng.sample(dpi)
            } else {
                rng.sample(d0)
            };
        }
        let centre = if in_pi { std::f64::consts::PI } else { 0.0 };
        ps.push(t, Some(wrap(centre + rng.sample(jitter))));
    }
    ps
}
