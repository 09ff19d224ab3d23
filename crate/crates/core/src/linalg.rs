//! Sparse direct solver for the grid systems.
//!
//! Matrices have a symmetric nonzero pattern (the 9-point tensor stencil) but
//! unsymmetric values because of the convection term. The factorization is a
//! left-looking LU without pivoting in a nested-dissection order computed from
//! the vertex coordinates, so the symbolic phase is done once per pattern and
//! reused across Newton iterations.

use crate::error::{Error, Result};

/// Square matrix in compressed sparse row form with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a zero-valued matrix from per-row column lists.
    pub fn from_pattern(rows: &[Vec<usize>]) -> CsrMatrix {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for cols in rows {
            let mut cols = cols.clone();
            cols.sort_unstable();
            cols.dedup();
            debug_assert!(cols.iter().all(|&c| c < n));
            col_idx.extend_from_slice(&cols);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        CsrMatrix { n, row_ptr, col_idx, values: vec![0.0; nnz] }
    }

    pub fn from_dense(a: &[Vec<f64>]) -> CsrMatrix {
        let rows: Vec<Vec<usize>> = a
            .iter()
            .map(|r| (0..r.len()).filter(|&c| r[c] != 0.0).collect())
            .collect();
        let mut m = CsrMatrix::from_pattern(&rows);
        for (r, row) in a.iter().enumerate() {
            for k in m.row_ptr[r]..m.row_ptr[r + 1] {
                m.values[k] = row[m.col_idx[k]];
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[range.clone()], &self.values[range])
    }

    /// Position of entry `(r, c)` in the value array.
    pub fn position(&self, r: usize, c: usize) -> Option<usize> {
        let start = self.row_ptr[r];
        let cols = &self.col_idx[start..self.row_ptr[r + 1]];
        cols.binary_search(&c).ok().map(|k| start + k)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.position(r, c).map_or(0.0, |k| self.values[k])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|r| {
                let (cols, vals) = self.row(r);
                cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum()
            })
            .collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n]; self.n];
        for (r, row) in out.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                row[c] = v;
            }
        }
        out
    }

    /// True when `(r, c)` stored implies `(c, r)` stored.
    pub fn has_symmetric_pattern(&self) -> bool {
        (0..self.n).all(|r| self.row(r).0.iter().all(|&c| self.position(c, r).is_some()))
    }
}

/// Nested-dissection order of points with integer coordinates whose graph
/// only links points differing by at most one in each coordinate.
pub fn nested_dissection(coords: &[(usize, usize)]) -> Vec<usize> {
    const LEAF: usize = 48;

    fn recurse(ids: Vec<usize>, coords: &[(usize, usize)], out: &mut Vec<usize>) {
        if ids.len() <= LEAF {
            out.extend(ids);
            return;
        }
        let (mut x0, mut x1, mut z0, mut z1) = (usize::MAX, 0, usize::MAX, 0);
        for &k in &ids {
            let (x, z) = coords[k];
            x0 = x0.min(x);
            x1 = x1.max(x);
            z0 = z0.min(z);
            z1 = z1.max(z);
        }
        let split_x = x1 - x0 >= z1 - z0;
        let key = |k: usize| if split_x { coords[k].0 } else { coords[k].1 };
        let (lo, hi) = if split_x { (x0, x1) } else { (z0, z1) };
        if hi - lo < 2 {
            out.extend(ids);
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let (mut left, mut right, mut sep) = (Vec::new(), Vec::new(), Vec::new());
        for k in ids {
            match key(k).cmp(&mid) {
                std::cmp::Ordering::Less => left.push(k),
                std::cmp::Ordering::Greater => right.push(k),
                std::cmp::Ordering::Equal => sep.push(k),
            }
        }
        recurse(left, coords, out);
        recurse(right, coords, out);
        out.extend(sep);
    }

    let mut ids: Vec<usize> = (0..coords.len()).collect();
    ids.sort_by_key(|&k| (coords[k].1, coords[k].0));
    let mut out = Vec::with_capacity(coords.len());
    recurse(ids, coords, &mut out);
    out
}

/// Pattern analysis shared by every matrix with the same structure.
#[derive(Debug, Clone)]
pub struct Symbolic {
    n: usize,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    /// Strict lower part of L by column (new indices, ascending).
    l_ptr: Vec<usize>,
    l_idx: Vec<usize>,
    /// Strict upper part of U by column: rows `k < j` (ascending).
    u_ptr: Vec<usize>,
    u_idx: Vec<usize>,
    /// For each new column, the stored entries of A as (new row, CSR position).
    a_ptr: Vec<usize>,
    a_entries: Vec<(usize, usize)>,
    nnz_source: usize,
}

impl Symbolic {
    /// Analyzes a matrix with symmetric pattern under the ordering `perm`
    /// (`perm[new] = old`).
    pub fn new(a: &CsrMatrix, perm: Vec<usize>) -> Symbolic {
        let n = a.dim();
        assert_eq!(perm.len(), n);
        let mut inv = vec![usize::MAX; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }

        // columns of the permuted matrix; pattern symmetric so rows of A give columns
        let mut a_cols: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for r in 0..n {
            for k in a.row_ptr[r]..a.row_ptr[r + 1] {
                a_cols[inv[a.col_idx[k]]].push((inv[r], k));
            }
        }
        for col in &mut a_cols {
            col.sort_unstable();
        }

        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut l_ptr = vec![0usize];
        let mut l_idx: Vec<usize> = Vec::new();
        let mut mark = vec![usize::MAX; n];
        let mut scratch = Vec::new();
        for j in 0..n {
            scratch.clear();
            mark[j] = j;
            for &(r, _) in &a_cols[j] {
                if r > j && mark[r] != j {
                    mark[r] = j;
                    scratch.push(r);
                }
            }
            for &c in &children[j] {
                for &r in &l_idx[l_ptr[c]..l_ptr[c + 1]] {
                    if mark[r] != j {
                        mark[r] = j;
                        scratch.push(r);
                    }
                }
            }
            scratch.sort_unstable();
            if let Some(&parent) = scratch.first() {
                children[parent].push(j);
            }
            l_idx.extend_from_slice(&scratch);
            l_ptr.push(l_idx.len());
        }

        let mut counts = vec![0usize; n];
        for &r in &l_idx {
            counts[r] += 1;
        }
        let mut u_ptr = Vec::with_capacity(n + 1);
        u_ptr.push(0);
        for c in &counts {
            u_ptr.push(u_ptr.last().unwrap() + c);
        }
        let mut fill = u_ptr.clone();
        let mut u_idx = vec![0usize; l_idx.len()];
        for k in 0..n {
            for &r in &l_idx[l_ptr[k]..l_ptr[k + 1]] {
                u_idx[fill[r]] = k;
                fill[r] += 1;
            }
        }

        let mut a_ptr = Vec::with_capacity(n + 1);
        a_ptr.push(0);
        let mut a_entries = Vec::with_capacity(a.nnz());
        for col in a_cols {
            a_entries.extend(col);
            a_ptr.push(a_entries.len());
        }

        Symbolic { n, perm, l_ptr, l_idx, u_ptr, u_idx, a_ptr, a_entries, nnz_source: a.nnz() }
    }

    /// Nested-dissection analysis from per-unknown grid coordinates.
    pub fn with_coordinates(a: &CsrMatrix, coords: &[(usize, usize)]) -> Symbolic {
        Symbolic::new(a, nested_dissection(coords))
    }

    /// Nonzeros of L plus U, diagonal counted once.
    pub fn factor_nnz(&self) -> usize {
        2 * self.l_idx.len() + self.n
    }
}

/// Numeric LU factors.
#[derive(Debug, Clone)]
pub struct SparseLu {
    sym: Symbolic,
    l_val: Vec<f64>,
    u_val: Vec<f64>,
    diag: Vec<f64>,
}

impl SparseLu {
    /// Factors `a`, whose pattern must match the analysed one.
    pub fn factor(sym: Symbolic, a: &CsrMatrix) -> Result<SparseLu> {
        if a.dim() != sym.n || a.nnz() != sym.nnz_source {
            return Err(Error::DimensionMismatch { expected: sym.nnz_source, found: a.nnz() });
        }
        let n = sym.n;
        let mut l_val = vec![0.0; sym.l_idx.len()];
        let mut u_val = vec![0.0; sym.u_idx.len()];
        let mut diag = vec![0.0; n];
        let mut x = vec![0.0; n];
        let av = a.values();
        for j in 0..n {
            let mut col_scale = 0.0f64;
            for &(r, k) in &sym.a_entries[sym.a_ptr[j]..sym.a_ptr[j + 1]] {
                x[r] = av[k];
                col_scale = col_scale.max(av[k].abs());
            }
            let urange = sym.u_ptr[j]..sym.u_ptr[j + 1];
            for pos in urange.clone() {
                let k = sym.u_idx[pos];
                let xk = x[k];
                if xk != 0.0 {
                    let lr = sym.l_ptr[k]..sym.l_ptr[k + 1];
                    for (&i, &lik) in sym.l_idx[lr.clone()].iter().zip(&l_val[lr]) {
                        x[i] -= lik * xk;
                    }
                }
            }
            for pos in urange {
                let k = sym.u_idx[pos];
                u_val[pos] = x[k];
                x[k] = 0.0;
            }
            let d = x[j];
            x[j] = 0.0;
            if !(d.abs() > 1e-14 * col_scale) || !d.is_finite() {
                return Err(Error::SingularLinearSolve { step: j, pivot: d });
            }
            diag[j] = d;
            let inv_d = 1.0 / d;
            for pos in sym.l_ptr[j]..sym.l_ptr[j + 1] {
                let i = sym.l_idx[pos];
                l_val[pos] = x[i] * inv_d;
                x[i] = 0.0;
            }
        }
        Ok(SparseLu { sym, l_val, u_val, diag })
    }

    pub fn symbolic(&self) -> &Symbolic {
        &self.sym
    }

    pub fn into_symbolic(self) -> Symbolic {
        self.sym
    }

    /// Solves `A x = b` with the factors.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let s = &self.sym;
        let n = s.n;
        assert_eq!(b.len(), n);
        let mut y: Vec<f64> = s.perm.iter().map(|&old| b[old]).collect();
        for k in 0..n {
            let yk = y[k];
            if yk != 0.0 {
                for pos in s.l_ptr[k]..s.l_ptr[k + 1] {
                    y[s.l_idx[pos]] -= self.l_val[pos] * yk;
                }
            }
        }
        for j in (0..n).rev() {
            let xj = y[j] / self.diag[j];
            y[j] = xj;
            if xj != 0.0 {
                for pos in s.u_ptr[j]..s.u_ptr[j + 1] {
                    y[s.u_idx[pos]] -= self.u_val[pos] * xj;
                }
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in s.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    /// Solve followed by iterative refinement until the relative residual
    /// drops below `rel_tol` (at most four correction steps).
    pub fn solve_refined(&self, a: &CsrMatrix, b: &[f64], rel_tol: f64) -> Vec<f64> {
        let bnorm = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut x = self.solve(b);
        if bnorm == 0.0 {
            return x;
        }
        for _ in 0..4 {
            let ax = a.mul_vec(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            let rnorm = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if rnorm <= rel_tol * bnorm {
                break;
            }
            let dx = self.solve(&r);
            for (xi, di) in x.iter_mut().zip(dx) {
                *xi += di;
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid_matrix(nx: usize, nz: usize, rng: &mut ChaCha8Rng) -> (CsrMatrix, Vec<(usize, usize)>) {
        let idx = |i: usize, j: usize| j * nx + i;
        let mut rows = vec![Vec::new(); nx * nz];
        let mut coords = Vec::new();
        for j in 0..nz {
            for i in 0..nx {
                coords.push((i, j));
                for dj in -1i64..=1 {
                    for di in -1i64..=1 {
                        let (a, b) = (i as i64 + di, j as i64 + dj);
                        if a >= 0 && b >= 0 && (a as usize) < nx && (b as usize) < nz {
                            rows[idx(i, j)].push(idx(a as usize, b as usize));
                        }
                    }
                }
            }
        }
        let mut m = CsrMatrix::from_pattern(&rows);
        for r in 0..m.dim() {
            let (s, e) = (m.row_ptr[r], m.row_ptr[r + 1]);
            let mut off = 0.0;
            for k in s..e {
                if m.col_idx[k] != r {
                    let v = -rng.random_range(0.0..1.0);
                    m.values[k] = v;
                    off += v.abs();
                }
            }
            let d = m.position(r, r).unwrap();
            m.values[d] = off + rng.random_range(0.1..1.0);
        }
        (m, coords)
    }

    #[test]
    fn dissection_is_a_permutation() {
        let coords: Vec<(usize, usize)> = (0..37).flat_map(|j| (0..23).map(move |i| (i, j))).collect();
        let mut order = nested_dissection(&coords);
        order.sort_unstable();
        assert_eq!(order, (0..coords.len()).collect::<Vec<_>>());
    }

    #[test]
    fn lu_solves_random_grid_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (nx, nz) in [(3, 3), (5, 40), (17, 13), (30, 30)] {
            let (a, coords) = grid_matrix(nx, nz, &mut rng);
            assert!(a.has_symmetric_pattern());
            let sym = Symbolic::with_coordinates(&a, &coords);
            let lu = SparseLu::factor(sym, &a).unwrap();
            let x_true: Vec<f64> = (0..a.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b = a.mul_vec(&x_true);
            let x = lu.solve_refined(&a, &b, 1e-14);
            let err = x.iter().zip(&x_true).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
            assert!(err < 1e-10, "{nx}x{nz}: {err}");
        }
    }

    #[test]
    fn lu_handles_unsymmetric_values() {
        let a = CsrMatrix::from_dense(&[
            vec![4.0, 1.0, 0.0],
            vec![-2.0, 5.0, 3.0],
            vec![0.0, 0.5, 2.0],
        ]);
        let sym = Symbolic::new(&a, vec![2, 0, 1]);
        let lu = SparseLu::factor(sym, &a).unwrap();
        let x = lu.solve(&[1.0, 2.0, 3.0]);
        let r = a.mul_vec(&x);
        for (ri, bi) in r.iter().zip([1.0, 2.0, 3.0]) {
            assert!((ri - bi).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_pivot_is_reported() {
        let a = CsrMatrix::from_dense(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        let sym = Symbolic::new(&a, vec![0, 1]);
        assert!(matches!(SparseLu::factor(sym, &a), Err(Error::SingularLinearSolve { step: 1, .. })));
    }
}
