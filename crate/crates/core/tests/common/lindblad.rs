//! Dense density-matrix integration of the Lindblad master equation.

use num_complex::Complex64;

pub type C = Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub n: usize,
    pub v: Vec<C>,
}

impl Dense {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            v: vec![C::new(0.0, 0.0); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.v[i * n + i] = C::new(1.0, 0.0);
        }
        m
    }

    pub fn at(&self, i: usize, j: usize) -> C {
        self.v[i * self.n + j]
    }

    /// Truncated annihilation operator on levels 0..=cutoff.
    pub fn annihilation(cutoff: usize) -> Self {
        let n = cutoff + 1;
        let mut m = Self::zeros(n);
        for k in 1..n {
            m.v[(k - 1) * n + k] = C::new((k as f64).sqrt(), 0.0);
        }
        m
    }

    pub fn kron(&self, o: &Self) -> Self {
        let n = self.n * o.n;
        let mut m = Self::zeros(n);
        for i in 0..self.n {
            for j in 0..self.n {
                let a = self.at(i, j);
                if a == C::new(0.0, 0.0) {
                    continue;
                }
                for k in 0..o.n {
                    for l in 0..o.n {
                        m.v[(i * o.n + k) * n + j * o.n + l] = a * o.at(k, l);
                    }
                }
            }
        }
        m
    }

    pub fn mul(&self, o: &Self) -> Self {
        let n = self.n;
        let mut m = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.v[i * n + k];
                if a == C::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    m.v[i * n + j] += a * o.v[k * n + j];
                }
            }
        }
        m
    }

    pub fn dag(&self) -> Self {
        let n = self.n;
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.v[j * n + i] = self.v[i * n + j].conj();
            }
        }
        m
    }

    pub fn add(&self, o: &Self, s: f64) -> Self {
        Self {
            n: self.n,
            v: self.v.iter().zip(&o.v).map(|(a, b)| a + b * s).collect(),
        }
    }

    pub fn scale(&self, s: C) -> Self {
        Self {
            n: self.n,
            v: self.v.iter().map(|a| a * s).collect(),
        }
    }

    pub fn trace_with(&self, o: &Self) -> C {
        let n = self.n;
        let mut t = C::new(0.0, 0.0);
        for i in 0..n {
            for k in 0..n {
                t += self.v[i * n + k] * o.v[k * n + i];
            }
        }
        t
    }
}

/// Embeds single-mode operators into the (a1, b1, a2, b2) product space.
pub fn embed(cutoffs: [usize; 4], slot: usize, op: &Dense) -> Dense {
    let mut m = Dense::identity(1);
    for (k, &c) in cutoffs.iter().enumerate() {
        let f = if k == slot {
            op.clone()
        } else {
            Dense::identity(c + 1)
        };
        m = m.kron(&f);
    }
    m
}

pub struct Lindblad {
    pub h: Dense,
    /// Collapse operators including √rate.
    pub jumps: Vec<Dense>,
}

impl Lindblad {
    fn rhs(&self, rho: &Dense) -> Dense {
        let i = C::new(0.0, 1.0);
        let comm = self.h.mul(rho).add(&rho.mul(&self.h), -1.0).scale(-i);
        let mut out = comm;
        for c in &self.jumps {
            let cd = c.dag();
            let cdc = cd.mul(c);
            let term = c
                .mul(rho)
                .mul(&cd)
                .add(&cdc.mul(rho).add(&rho.mul(&cdc), 1.0), -0.5);
            out = out.add(&term, 1.0);
        }
        out
    }

    /// RK4 from `rho0`; returns ρ at each multiple of `every` steps (and t = 0).
    pub fn evolve(&self, rho0: Dense, dt: f64, steps: usize, every: usize) -> Vec<Dense> {
        let mut rho = rho0;
        let mut out = vec![rho.clone()];
        for s in 1..=steps {
            let k1 = self.rhs(&rho);
            let k2 = self.rhs(&rho.add(&k1, 0.5 * dt));
            let k3 = self.rhs(&rho.add(&k2, 0.5 * dt));
            let k4 = self.rhs(&rho.add(&k3, dt));
            rho = rho
                .add(&k1, dt / 6.0)
                .add(&k2, dt / 3.0)
                .add(&k3, dt / 3.0)
                .add(&k4, dt / 6.0);
            if s % every == 0 {
                out.push(rho.clone());
            }
        }
        out
    }
}

/// Pure-state projector onto basis index `k`.
pub fn basis_projector(n: usize, k: usize) -> Dense {
    let mut m = Dense::zeros(n);
    m.v[k * n + k] = C::new(1.0, 0.0);
    m
}
