//! Compressed sparse row matrices over complex numbers.

use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<Complex64>,
}

impl CsrMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            indptr: vec![0; n + 1],
            indices: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![Complex64::new(1.0, 0.0); n])
    }

    pub fn diagonal(d: &[Complex64]) -> Self {
        Self::from_triplets(
            d.len(),
            d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect(),
        )
    }

    /// Sums duplicate entries and drops exact zeros.
    pub fn from_triplets(n: usize, mut t: Vec<(usize, usize, Complex64)>) -> Self {
        t.sort_by_key(|&(i, j, _)| (i, j));
        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut data: Vec<Complex64> = Vec::with_capacity(t.len());
        let mut rows = Vec::with_capacity(t.len());
        for (i, j, v) in t {
            debug_assert!(i < n && j < n);
            if rows.last() == Some(&i) && indices.last() == Some(&j) {
                *data.last_mut().expect("nonempty") += v;
            } else {
                rows.push(i);
                indices.push(j);
                data.push(v);
            }
        }
        let mut keep_idx = Vec::with_capacity(indices.len());
        let mut keep_data = Vec::with_capacity(data.len());
        for ((i, j), v) in rows.iter().zip(indices).zip(data) {
            if v != Complex64::new(0.0, 0.0) {
                indptr[i + 1] += 1;
                keep_idx.push(j);
                keep_data.push(v);
            }
        }
        for i in 0..n {
            indptr[i + 1] += indptr[i];
        }
        Self {
            n,
            indptr,
            indices: keep_idx,
            data: keep_data,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.n).flat_map(move |i| {
            (self.indptr[i]..self.indptr[i + 1]).map(move |k| (i, self.indices[k], self.data[k]))
        })
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        let row = &self.indices[self.indptr[i]..self.indptr[i + 1]];
        match row.binary_search(&j) {
            Ok(k) => self.data[self.indptr[i] + k],
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    /// y = A x.
    pub fn mul_vec_into(&self, x: &[Complex64], y: &mut [Complex64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in self.indptr[i]..self.indptr[i + 1] {
                acc += self.data[k] * x[self.indices[k]];
            }
            *yi = acc;
        }
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![Complex64::new(0.0, 0.0); self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(
            self.n,
            self.triplets().map(|(i, j, v)| (j, i, v.conj())).collect(),
        )
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::from_triplets(
            self.n,
            self.triplets().map(|(i, j, v)| (i, j, v * s)).collect(),
        )
    }

    /// self + s·other.
    pub fn add_scaled(&self, other: &Self, s: Complex64) -> Self {
        assert_eq!(self.n, other.n);
        let t = self
            .triplets()
            .chain(other.triplets().map(|(i, j, v)| (i, j, v * s)))
            .collect();
        Self::from_triplets(self.n, t)
    }

    /// Matrix product self · other.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let mut t = Vec::new();
        for i in 0..self.n {
            for k in self.indptr[i]..self.indptr[i + 1] {
                let (m, a) = (self.indices[k], self.data[k]);
                for l in other.indptr[m]..other.indptr[m + 1] {
                    t.push((i, other.indices[l], a * other.data[l]));
                }
            }
        }
        Self::from_triplets(self.n, t)
    }

    /// Largest |A_ij − B_ij| over the union of both patterns.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.add_scaled(other, Complex64::new(-1.0, 0.0))
            .data
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        let mut m = vec![vec![Complex64::new(0.0, 0.0); self.n]; self.n];
        for (i, j, v) in self.triplets() {
            m[i][j] = v;
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn duplicates_summed_and_zeros_dropped() {
        let m = CsrMatrix::from_triplets(
            3,
            vec![
                (0, 1, c(1.0, 0.0)),
                (0, 1, c(2.0, 1.0)),
                (2, 2, c(0.0, 0.0)),
                (1, 0, c(0.0, -1.0)),
            ],
        );
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 1), c(3.0, 1.0));
        assert_eq!(m.get(2, 2), c(0.0, 0.0));
    }

    #[test]
    fn product_and_adjoint() {
        let a = CsrMatrix::from_triplets(2, vec![(0, 1, c(1.0, 1.0)), (1, 0, c(2.0, 0.0))]);
        let b = a.matmul(&a.adjoint());
        assert_eq!(b.get(0, 0), c(2.0, 0.0));
        assert_eq!(b.get(1, 1), c(4.0, 0.0));
        assert_eq!(b.get(0, 1), c(0.0, 0.0));
        let y = a.mul_vec(&[c(1.0, 0.0), c(0.0, 1.0)]);
        assert_eq!(y, vec![c(-1.0, 1.0), c(2.0, 0.0)]);
        assert_eq!(a.max_abs_diff(&a), 0.0);
        assert_eq!(CsrMatrix::identity(2).matmul(&a), a);
    }
}
