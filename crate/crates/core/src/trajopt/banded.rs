//! Banded LU factorization with partial (row) pivoting.
//!
//! The KKT systems of the collocation transcription and of the snap
//! problem are banded once variables and constraints are interleaved stage
//! by stage. Row `i` stores columns `[i - kl, i + ku + kl]`; the extra `kl`
//! columns hold fill-in created by row swaps.

#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self { n, kl, ku, width, data: vec![0.0; n * width] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j + self.kl < i + self.width, "({i},{j}) outside band");
        i * self.width + (j + self.kl - i)
    }

    /// Adds `v` at `(i, j)`; panics in debug builds outside the band.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let o = self.offset(i, j);
        self.data[o] += v;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || j > i + self.ku {
            return 0.0;
        }
        self.data[self.offset(i, j)]
    }

    /// `y = A x` using the stored (unfactored) band.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku + 1).min(self.n);
            y[i] = (lo..hi).map(|j| self.get(i, j) * x[j]).sum();
        }
    }

    /// Factorizes in place. Returns `None` when a pivot is exactly zero or
    /// below `pivot_tol` relative to the largest entry of its column.
    pub fn factor(mut self, pivot_tol: f64) -> Option<BandLu> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let mut piv = vec![0usize; n];
        let mut lower = vec![0.0; n * kl.max(1)];
        let reach = kl + ku;
        let scale = self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-300);
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.offset(k, k)].abs();
            for i in k + 1..=last_row {
                let v = self.data[self.offset(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > pivot_tol * scale) {
                return None;
            }
            piv[k] = p;
            let last_col = (k + reach).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (self.offset(k, j), self.offset(p, j));
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.offset(k, k)];
            let row_k = self.offset(k, k);
            for i in k + 1..=last_row {
                let oi = self.offset(i, k);
                let m = self.data[oi] / pivot;
                lower[k * kl + (i - k - 1)] = m;
                self.data[oi] = 0.0;
                if m != 0.0 {
                    let len = last_col - k;
                    let (src, dst) = (row_k + 1, oi + 1);
                    // Rows are disjoint slices of `data`.
                    let (head, tail) = self.data.split_at_mut(dst);
                    let src_slice = &head[src..src + len];
                    for (d, s) in tail[..len].iter_mut().zip(src_slice) {
                        *d -= m * s;
                    }
                }
            }
        }
        Some(BandLu { a: self, piv, lower })
    }
}

#[derive(Clone, Debug)]
pub struct BandLu {
    a: BandMatrix,
    piv: Vec<usize>,
    lower: Vec<f64>,
}

impl BandLu {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, kl, ku) = (self.a.n, self.a.kl, self.a.ku);
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                let last = (k + kl).min(n - 1);
                for i in k + 1..=last {
                    b[i] -= self.lower[k * kl + (i - k - 1)] * bk;
                }
            }
        }
        let reach = kl + ku;
        for k in (0..n).rev() {
            let last = (k + reach).min(n - 1);
            let row = self.a.offset(k, k);
            let mut s = b[k];
            for (j, bj) in (k + 1..=last).zip(&b[k + 1..=last]) {
                s -= self.a.data[row + (j - k)] * bj;
            }
            b[k] = s / self.a.data[row];
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| a[i][j]);
        let x = m.lu().solve(&nalgebra::DVector::from_column_slice(b)).unwrap();
        x.iter().copied().collect()
    }

    #[test]
    fn matches_dense_solve_on_random_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(n, kl, ku) in &[(1, 0, 0), (5, 1, 2), (40, 3, 5), (60, 7, 7), (30, 0, 4), (30, 4, 0)] {
            let mut band = BandMatrix::zeros(n, kl, ku);
            let mut dense = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in i.saturating_sub(kl)..(i + ku + 1).min(n) {
                    // Weak diagonal so pivoting actually happens. Triangular
                    // bands cannot pivot around it, so they keep a firm one.
                    let v: f64 = match (i == j, kl > 0 && ku > 0) {
                        (true, true) => rng.gen_range(-0.01..0.01),
                        (true, false) => rng.gen_range(1.0..2.0),
                        _ => rng.gen_range(-1.0..1.0),
                    };
                    band.add(i, j, v);
                    dense[i][j] = v;
                }
            }
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let expect = dense_solve(&dense, &b);
            let lu = band.clone().factor(1e-14).expect("nonsingular");
            let mut x = b.clone();
            lu.solve_in_place(&mut x);
            for (a, e) in x.iter().zip(&expect) {
                assert!((a - e).abs() < 1e-8 * (1.0 + e.abs()), "n={n} kl={kl} ku={ku}");
            }
            let mut r = vec![0.0; n];
            band.mul_vec(&x, &mut r);
            // Componentwise backward error.
            for i in 0..n {
                let scale: f64 = (0..n).map(|j| (dense[i][j] * x[j]).abs()).sum::<f64>() + b[i].abs();
                assert!((r[i] - b[i]).abs() <= 1e-12 * scale, "n={n} kl={kl} ku={ku}");
            }
        }
    }

    #[test]
    fn singular_is_reported() {
        let mut band = BandMatrix::zeros(3, 1, 1);
        band.add(0, 0, 1.0);
        band.add(1, 1, 0.0);
        band.add(2, 2, 1.0);
        assert!(band.factor(1e-14).is_none());
    }
}
