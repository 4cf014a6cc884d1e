//! Kuramoto and Hopf-Kuramoto phase models and their effective potential.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// δφ̇ = δω − k sin δφ.
#[inline]
pub fn kuramoto_rhs(dphi: f64, delta_omega: f64, k: f64) -> f64 {
    delta_omega - k * dphi.sin()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HopfKuramotoParams {
    /// ω2 − ω1.
    pub delta_omega: f64,
    pub s1: f64,
    pub s2: f64,
}

impl HopfKuramotoParams {
    pub fn new(delta_omega: f64, s1: f64, s2: f64) -> Self {
        Self {
            delta_omega,
            s1,
            s2,
        }
    }

    /// Kuramoto model with coupling `k` as the special case S1 = k/2, S2 = 0.
    pub fn kuramoto(delta_omega: f64, k: f64) -> Self {
        Self::new(delta_omega, 0.5 * k, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("delta_omega", self.delta_omega),
            ("s1", self.s1),
            ("s2", self.s2),
        ] {
            if !v.is_finite() {
                return Err(invalid(name, "must be finite"));
            }
        }
        Ok(())
    }

    /// Upper bound of |rhs − δω|.
    pub fn coupling_bound(&self) -> f64 {
        2.0 * self.s1.abs() + 4.0 * self.s2.abs()
    }
}

/// δφ̇ = δω − 2 S1 sin δφ − 4 S2 sin 2δφ.
#[inline]
pub fn hopf_kuramoto_rhs(dphi: f64, p: &HopfKuramotoParams) -> f64 {
    p.delta_omega - 2.0 * p.s1 * dphi.sin() - 4.0 * p.s2 * (2.0 * dphi).sin()
}

/// d(rhs)/dδφ.
#[inline]
pub fn hopf_kuramoto_slope(dphi: f64, p: &HopfKuramotoParams) -> f64 {
    -2.0 * p.s1 * dphi.cos() - 8.0 * p.s2 * (2.0 * dphi).cos()
}

/// Closed form U = −δω·δφ − 2 S1 cos δφ + S2 (2 − 2 cos 2δφ), up to a constant,
/// so that −U′ is the Hopf-Kuramoto rhs.
pub fn potential_closed_form(dphi: f64, p: &HopfKuramotoParams) -> f64 {
    -p.delta_omega * dphi - 2.0 * p.s1 * dphi.cos() + p.s2 * (2.0 - 2.0 * (2.0 * dphi).cos())
}

/// Slopes with magnitude below this are degenerate.
pub const MARGINAL_CURVATURE: f64 = 1e-10;
const ROOT_TOL: f64 = 1e-8;
const SCAN_POINTS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub location: f64,
    /// d(rhs)/dδφ at the root, equal to −U″.
    pub slope: f64,
    pub stability: Stability,
}

/// Zeros of the Hopf-Kuramoto rhs in (−π, π], refined by bisection to 1e-8.
///
/// Simple zeros come from sign changes on a uniform scan. Touching zeros
/// (double roots) are found as extrema of the rhs where it vanishes.
pub fn fixed_points(p: &HopfKuramotoParams) -> Vec<FixedPoint> {
    let f = |x: f64| hopf_kuramoto_rhs(x, p);
    let g = |x: f64| hopf_kuramoto_slope(x, p);
    let scale = p.delta_omega.abs() + p.coupling_bound();
    if scale == 0.0 {
        return Vec::new();
    }
    let h = TAU / SCAN_POINTS as f64;
    // Offset so that symmetric roots (0, ±π/2, π) fall inside cells.
    let shift = 0.5 * h * (5f64.sqrt() - 1.0);
    let grid = |i: usize| -PI + shift + h * i as f64;
    let mut roots: Vec<f64> = Vec::new();
    let push_sign_change = |a: f64, b: f64, roots: &mut Vec<f64>| {
        let (fa, fb) = (f(a), f(b));
        if fa == 0.0 {
            roots.push(a);
        } else if fa * fb < 0.0 {
            roots.push(bisect(&f, a, b));
        }
    };
    for i in 0..SCAN_POINTS {
        let (a, b) = (grid(i), grid(i + 1));
        // Split at an extremum of the rhs so that close root pairs near a
        // saddle-node are separated, and catch touching roots there.
        if g(a) * g(b) < 0.0 {
            let x = bisect(&g, a, b);
            if f(x).abs() <= 1e-12 * scale {
                roots.push(x);
            } else {
                push_sign_change(a, x, &mut roots);
                push_sign_change(x, b, &mut roots);
            }
        } else {
            push_sign_change(a, b, &mut roots);
        }
    }
    let mut out: Vec<FixedPoint> = Vec::new();
    for r in roots {
        let mut loc = crate::phase::wrap(r);
        if loc < -PI + ROOT_TOL {
            loc = PI;
        }
        if out
            .iter()
            .any(|fp| crate::phase::wrap(fp.location - loc).abs() < 10.0 * ROOT_TOL)
        {
            continue;
        }
        let slope = g(loc);
        let stability = if slope.abs() < MARGINAL_CURVATURE {
            Stability::Marginal
        } else if slope < 0.0 {
            Stability::Stable
        } else {
            Stability::Unstable
        };
        out.push(FixedPoint {
            location: loc,
            slope,
            stability,
        });
    }
    out.sort_by(|a, b| a.location.total_cmp(&b.location));
    out
}

fn bisect(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    while b - a > ROOT_TOL * 0.5 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fa < 0.0) == (fm < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialMinimum {
    pub location: f64,
    /// U at the minimum, on the profile's anchoring.
    pub value: f64,
    /// Smaller of the two barriers to the neighboring maxima; infinite when
    /// no maximum exists.
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialProfile {
    pub params: HopfKuramotoParams,
    /// Uniform grid from −π to π; the first point is the anchor U(−π⁺) = 0.
    pub grid: Vec<f64>,
    pub u: Vec<f64>,
    pub minima: Vec<PotentialMinimum>,
}

pub const DEFAULT_POTENTIAL_POINTS: usize = 4096;

/// U(δφ) = −∫ rhs from −π, integrated cell by cell with Simpson's rule.
pub fn effective_potential(p: &HopfKuramotoParams) -> PotentialProfile {
    effective_potential_on(p, DEFAULT_POTENTIAL_POINTS)
}

pub fn effective_potential_on(p: &HopfKuramotoParams, n: usize) -> PotentialProfile {
    let n = n.max(2);
    let h = TAU / n as f64;
    let grid: Vec<f64> = (0..=n).map(|i| -PI + h * i as f64).collect();
    let f = |x: f64| hopf_kuramoto_rhs(x, p);
    let mut u = Vec::with_capacity(n + 1);
    u.push(0.0);
    for w in grid.windows(2) {
        let (a, b) = (w[0], w[1]);
        let cell = h / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b));
        u.push(u.last().copied().unwrap_or(0.0) - cell);
    }
    let fps = fixed_points(p);
    let at = |x: f64| potential_closed_form(x, p) - potential_closed_form(-PI, p);
    let maxima: Vec<f64> = fps
        .iter()
        .filter(|fp| fp.stability == Stability::Unstable)
        .map(|fp| fp.location)
        .collect();
    // U(x + 2π) = U(x) − 2π δω.
    let shifted = |x: f64, turns: f64| at(x) - TAU * turns * p.delta_omega;
    let minima = fps
        .iter()
        .filter(|fp| fp.stability == Stability::Stable)
        .map(|fp| {
            let x = fp.location;
            let value = at(x);
            let depth = if maxima.is_empty() {
                f64::INFINITY
            } else {
                let right = maxima
                    .iter()
                    .map(|&m| if m > x { (m, 0.0) } else { (m + TAU, 1.0) })
                    .min_by(|a, b| a.0.total_cmp(&b.0))
                    .map(|(m, k)| shifted(m - k * TAU, k))
                    .unwrap_or(f64::INFINITY);
                let left = maxima
                    .iter()
                    .map(|&m| if m < x { (m, 0.0) } else { (m - TAU, -1.0) })
                    .max_by(|a, b| a.0.total_cmp(&b.0))
                    .map(|(m, k)| shifted(m - k * TAU, k))
                    .unwrap_or(f64::INFINITY);
                (right - value).min(left - value)
            };
            PotentialMinimum {
                location: x,
                value,
                depth,
            }
        })
        .collect();
    PotentialProfile {
        params: *p,
        grid,
        u,
        minima,
    }
}

impl PotentialProfile {
    /// −dU/dδφ by fourth-order central differences at interior grid points.
    pub fn force(&self) -> Vec<(f64, f64)> {
        self.grid
            .windows(5)
            .zip(self.u.windows(5))
            .map(|(x, u)| {
                let h = x[1] - x[0];
                (x[2], -(u[0] - 8.0 * u[1] + 8.0 * u[3] - u[4]) / (12.0 * h))
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "delta_phi,u,rhs")?;
        for (x, u) in self.grid.iter().zip(&self.u) {
            writeln!(w, "{x},{u},{}", hopf_kuramoto_rhs(*x, &self.params))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    ZeroSync,
    PiSync,
    Bistable,
    Drift,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::ZeroSync => "zero-sync",
            Regime::PiSync => "pi-sync",
            Regime::Bistable => "bistable",
            Regime::Drift => "drift",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeClassification {
    pub regime: Regime,
    /// Stable fixed points.
    pub stable: Vec<f64>,
    /// A degenerate fixed point exists, so the regime sits on a boundary.
    pub marginal: bool,
}

/// Regime from the stable zeros of the rhs: a stable zero with |δφ| < π/2
/// counts as 0-synchronized, one with |δφ| > π/2 as π-synchronized.
pub fn classify_regime(p: &HopfKuramotoParams) -> RegimeClassification {
    if p.delta_omega.abs() > p.coupling_bound() {
        return RegimeClassification {
            regime: Regime::Drift,
            stable: Vec::new(),
            marginal: false,
        };
    }
    let fps = fixed_points(p);
    let stable: Vec<f64> = fps
        .iter()
        .filter(|fp| fp.stability == Stability::Stable)
        .map(|fp| fp.location)
        .collect();
    let marginal = fps.is_empty() && p.delta_omega == 0.0 && p.coupling_bound() == 0.0
        || fps.iter().any(|fp| fp.stability == Stability::Marginal)
        || stable
            .iter()
            .any(|x| (x.abs() - FRAC_PI_2).abs() < ROOT_TOL);
    let zero = stable.iter().any(|x| x.abs() < FRAC_PI_2);
    let pi = stable.iter().any(|x| x.abs() > FRAC_PI_2);
    let regime = match (zero, pi) {
        (true, true) => Regime::Bistable,
        (true, false) => Regime::ZeroSync,
        (false, true) => Regime::PiSync,
        (false, false) => Regime::Drift,
    };
    RegimeClassification {
        regime,
        stable,
        marginal,
    }
}

/// One cell of a regime map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeCell {
    pub params: HopfKuramotoParams,
    pub classification: RegimeClassification,
}

/// Classifies every (S1, S2) pair at fixed δω.
pub fn regime_map_s1_s2(delta_omega: f64, s1: &[f64], s2: &[f64]) -> Vec<RegimeCell> {
    let mut out = Vec::with_capacity(s1.len() * s2.len());
    for &a in s1 {
        for &b in s2 {
            let params = HopfKuramotoParams::new(delta_omega, a, b);
            out.push(RegimeCell {
                params,
                classification: classify_regime(&params),
            });
        }
    }
    out
}

/// Classifies every (δω, k) pair of the Kuramoto model.
pub fn regime_map_kuramoto(delta_omega: &[f64], k: &[f64]) -> Vec<RegimeCell> {
    let mut out = Vec::with_capacity(delta_omega.len() * k.len());
    for &d in delta_omega {
        for &kk in k {
            let params = HopfKuramotoParams::kuramoto(d, kk);
            out.push(RegimeCell {
                params,
                classification: classify_regime(&params),
            });
        }
    }
    out
}

pub fn write_regime_map_csv<W: Write>(cells: &[RegimeCell], mut w: W) -> Result<()> {
    writeln!(w, "delta_omega,s1,s2,regime,n_stable,marginal")?;
    for c in cells {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            c.params.delta_omega,
            c.params.s1,
            c.params.s2,
            c.classification.regime,
            c.classification.stable.len(),
            u8::from(c.classification.marginal)
        )?;
    }
    Ok(())
}
