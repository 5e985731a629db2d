//! Envelope (skyline) LDLᵀ factorization for symmetric quasi-definite matrices.
//!
//! The matrix is symmetrically permuted with reverse Cuthill–McKee so the
//! envelope stays narrow. No pivoting is done; each pivot has a prescribed
//! sign (+1 for primal blocks, −1 for dual blocks) and pivots that come out
//! too small or with the wrong sign are replaced by a signed regularization.

use super::ordering::reverse_cuthill_mckee;
use super::sparse::SparseMatrix;

#[derive(Debug, Clone)]
pub struct EnvelopeLdl {
    n: usize,
    perm: Vec<usize>,
    iperm: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    lower: Vec<f64>,
    diag: Vec<f64>,
    signs: Vec<f64>,
    regularized: usize,
}

/// Minimum accepted pivot magnitude; smaller pivots are regularized.
const PIVOT_FLOOR: f64 = 1e-13;

impl EnvelopeLdl {
    /// Symbolic analysis for a symmetric matrix. Only the pattern of `a` is used.
    /// `signs[i]` gives the expected sign of pivot `i` (original numbering).
    pub fn analyze(a: &SparseMatrix, signs: &[f64]) -> Self {
        let n = a.nrows();
        assert_eq!(a.ncols(), n);
        assert_eq!(signs.len(), n);
        let perm = reverse_cuthill_mckee(a);
        let mut iperm = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            iperm[p] = k;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (r, c, _) in a.triplets() {
            let (pr, pc) = (iperm[r], iperm[c]);
            let (hi, lo) = if pr >= pc { (pr, pc) } else { (pc, pr) };
            if lo < first[hi] {
                first[hi] = lo;
            }
        }
        let mut start = Vec::with_capacity(n + 1);
        let mut acc = 0;
        for i in 0..n {
            start.push(acc);
            acc += i - first[i];
        }
        start.push(acc);
        let psigns = perm.iter().map(|&p| signs[p]).collect();
        EnvelopeLdl {
            n,
            perm,
            iperm,
            first,
            start,
            lower: vec![0.0; acc],
            diag: vec![0.0; n],
            signs: psigns,
            regularized: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored off-diagonal entries.
    pub fn envelope_size(&self) -> usize {
        self.lower.len()
    }

    /// Number of pivots replaced during the last factorization.
    pub fn regularized_pivots(&self) -> usize {
        self.regularized
    }

    /// Numeric factorization; `a` must have a pattern contained in the analyzed one
    /// and be stored in full (both triangles).
    pub fn factor(&mut self, a: &SparseMatrix, reg: f64) {
        self.lower.iter_mut().for_each(|v| *v = 0.0);
        self.diag.iter_mut().for_each(|v| *v = 0.0);
        for (r, c, v) in a.triplets() {
            let (pr, pc) = (self.iperm[r], self.iperm[c]);
            if pr == pc {
                self.diag[pr] += v;
            } else if pr > pc {
                debug_assert!(pc >= self.first[pr], "entry outside analyzed envelope");
                self.lower[self.start[pr] + pc - self.first[pr]] += v;
            }
        }
        self.regularized = 0;
        let floor = reg.max(PIVOT_FLOOR);
        for i in 0..self.n {
            let fi = self.first[i];
            let si = self.start[i];
            let (prev, cur) = self.lower.split_at_mut(si);
            let row = &mut cur[..i - fi];
            // Row i holds A_ij; turn it into v_j = L_ij D_j, then into L_ij.
            for j in fi..i {
                let fj = self.first[j];
                let lo = fi.max(fj);
                if lo < j {
                    let sj = self.start[j];
                    let lj = &prev[sj + (lo - fj)..sj + (j - fj)];
                    let s = dot_unrolled(&row[lo - fi..j - fi], lj);
                    row[j - fi] -= s;
                }
            }
            let mut d = self.diag[i];
            for (k, v) in row.iter_mut().enumerate() {
                let l = *v / self.diag[fi + k];
                d -= *v * l;
                *v = l;
            }
            let sign = self.signs[i];
            if !(d * sign > floor) {
                d = sign * d.abs().max(1e-8);
                self.regularized += 1;
            }
            self.diag[i] = d;
        }
    }

    /// Solves A x = b in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let mut y: Vec<f64> = (0..n).map(|k| b[self.perm[k]]).collect();
        for i in 0..n {
            let fi = self.first[i];
            if fi < i {
                let row = &self.lower[self.start[i]..self.start[i + 1]];
                y[i] -= dot_unrolled(row, &y[fi..i]);
            }
        }
        for i in 0..n {
            y[i] /= self.diag[i];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let xi = y[i];
            if xi != 0.0 && fi < i {
                let row = &self.lower[self.start[i]..self.start[i + 1]];
                for (yk, l) in y[fi..i].iter_mut().zip(row) {
                    *yk -= l * xi;
                }
            }
        }
        for k in 0..n {
            b[self.perm[k]] = y[k];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[inline]
fn dot_unrolled(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..n {
        s += a[i] * b[i];
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_mul(a: &SparseMatrix, x: &[f64]) -> Vec<f64> {
        a.mul_vec(x)
    }

    #[test]
    fn solves_spd_tridiagonal() {
        let n = 6;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        let a = SparseMatrix::from_triplets(n, n, &t);
        let mut f = EnvelopeLdl::analyze(&a, &vec![1.0; n]);
        f.factor(&a, 0.0);
        let b: Vec<f64> = (0..n).map(|i| i as f64 + 1.0).collect();
        let x = f.solve(&b);
        let r = dense_mul(&a, &x);
        for i in 0..n {
            assert!((r[i] - b[i]).abs() < 1e-12);
        }
        assert_eq!(f.regularized_pivots(), 0);
    }

    #[test]
    fn solves_quasidefinite_kkt() {
        // [[2, 0, 1], [0, 3, 1], [1, 1, -1e-8]]
        let a = SparseMatrix::from_triplets(
            3,
            3,
            &[
                (0, 0, 2.0),
                (1, 1, 3.0),
                (0, 2, 1.0),
                (2, 0, 1.0),
                (1, 2, 1.0),
                (2, 1, 1.0),
                (2, 2, -1e-8),
            ],
        );
        let mut f = EnvelopeLdl::analyze(&a, &[1.0, 1.0, -1.0]);
        f.factor(&a, 0.0);
        let b = [1.0, 2.0, 3.0];
        let x = f.solve(&b);
        let r = a.mul_vec(&x);
        for i in 0..3 {
            assert!((r[i] - b[i]).abs() < 1e-9, "{r:?}");
        }
    }
}
