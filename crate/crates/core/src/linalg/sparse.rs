use std::fmt;

/// Compressed sparse row matrix with sorted, duplicate-free column indices.
#[derive(Clone, PartialEq, Default)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for SparseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SparseMatrix({}x{}, nnz={})", self.nrows, self.ncols, self.nnz())
    }
}

impl SparseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        SparseMatrix {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            data: Vec::new(),
        }
    }

    /// Builds from (row, col, value) triplets; duplicates are summed, exact zeros kept.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            cols[next[r]] = c;
            vals[next[r]] = v;
            next[r] += 1;
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut data = Vec::with_capacity(triplets.len());
        indptr.push(0);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for r in 0..nrows {
            row.clear();
            row.extend((counts[r]..counts[r + 1]).map(|k| (cols[k], vals[k])));
            row.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < row.len() {
                let c = row[k].0;
                let mut v = 0.0;
                while k < row.len() && row[k].0 == c {
                    v += row[k].1;
                    k += 1;
                }
                indices.push(c);
                data.push(v);
            }
            indptr.push(indices.len());
        }
        SparseMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        }
    }

    pub fn from_rows(ncols: usize, rows: &[Vec<(usize, f64)>]) -> Self {
        let trip: Vec<_> = rows
            .iter()
            .enumerate()
            .flat_map(|(r, row)| row.iter().map(move |&(c, v)| (r, c, v)))
            .collect();
        Self::from_triplets(rows.len(), ncols, &trip)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.data[span].iter().copied())
    }

    pub fn row_len(&self, r: usize) -> usize {
        self.indptr[r + 1] - self.indptr[r]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(k) => self.data[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    /// y = A x
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        for (r, yr) in y.iter_mut().enumerate().take(self.nrows) {
            let mut s = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                s += self.data[k] * x[self.indices[k]];
            }
            *yr = s;
        }
    }

    /// y = Aᵀ x
    pub fn tmul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        self.tmul_vec_add(x, &mut y);
        y
    }

    /// y += Aᵀ x
    pub fn tmul_vec_add(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        for (r, &xr) in x.iter().enumerate() {
            if xr == 0.0 {
                continue;
            }
            for k in self.indptr[r]..self.indptr[r + 1] {
                y[self.indices[k]] += self.data[k] * xr;
            }
        }
    }

    pub fn transpose(&self) -> SparseMatrix {
        let trip: Vec<_> = self.triplets().map(|(r, c, v)| (c, r, v)).collect();
        SparseMatrix::from_triplets(self.ncols, self.nrows, &trip)
    }

    /// Selects rows (in the given order) and remaps columns through `col_map`;
    /// entries whose column maps to None are dropped.
    pub fn select(&self, rows: &[usize], col_map: &[Option<usize>], ncols: usize) -> SparseMatrix {
        let mut trip = Vec::new();
        for (i, &r) in rows.iter().enumerate() {
            for (c, v) in self.row(r) {
                if let Some(cc) = col_map[c] {
                    trip.push((i, cc, v));
                }
            }
        }
        SparseMatrix::from_triplets(rows.len(), ncols, &trip)
    }

    /// Stacks matrices with the same column count vertically.
    pub fn vstack(blocks: &[&SparseMatrix]) -> SparseMatrix {
        let ncols = blocks.first().map_or(0, |b| b.ncols);
        let mut trip = Vec::new();
        let mut off = 0;
        for b in blocks {
            assert_eq!(b.ncols, ncols);
            trip.extend(b.triplets().map(|(r, c, v)| (r + off, c, v)));
            off += b.nrows;
        }
        SparseMatrix::from_triplets(off, ncols, &trip)
    }

    /// AᵀDA for a diagonal weight vector, as triplets of the upper+lower pattern.
    pub fn gram_triplets(&self, weights: &[f64], out: &mut Vec<(usize, usize, f64)>) {
        for r in 0..self.nrows {
            let w = weights[r];
            let span = self.indptr[r]..self.indptr[r + 1];
            for a in span.clone() {
                for b in span.clone() {
                    out.push((self.indices[a], self.indices[b], w * self.data[a] * self.data[b]));
                }
            }
        }
    }

    pub fn row_abs_max(&self, r: usize) -> f64 {
        self.row(r).map(|(_, v)| v.abs()).fold(0.0, f64::max)
    }
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_are_summed_and_sorted() {
        let m = SparseMatrix::from_triplets(2, 3, &[(0, 2, 1.0), (0, 0, 2.0), (0, 2, 3.0), (1, 1, -1.0)]);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(0, 2), 4.0);
        assert_eq!(m.row(0).map(|e| e.0).collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(m.mul_vec(&[1.0, 2.0, 3.0]), vec![14.0, -2.0]);
        assert_eq!(m.tmul_vec(&[1.0, 1.0]), vec![2.0, -1.0, 4.0]);
        assert_eq!(m.transpose().get(2, 0), 4.0);
    }
}
