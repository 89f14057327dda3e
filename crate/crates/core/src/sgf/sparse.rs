//! Compressed sparse rows and the symmetric solver used for lattice systems.

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub(crate) fn builder(cols: usize, nnz_hint: usize) -> CsrBuilder {
        CsrBuilder {
            cols,
            indptr: vec![0],
            indices: Vec::with_capacity(nnz_hint),
            values: Vec::with_capacity(nnz_hint),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().map(|&c| c as usize).zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).filter(|&(c, _)| c == j).map(|(_, v)| v).sum()
    }

    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.indptr[i]..self.indptr[i + 1] {
                acc += self.values[k] * x[self.indices[k] as usize];
            }
            *o = acc;
        }
    }

    /// `out = selfᵀ y`
    pub fn transpose_mul_vec(&self, y: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (i, &yi) in y.iter().enumerate() {
            if yi == 0.0 {
                continue;
            }
            for k in self.indptr[i]..self.indptr[i + 1] {
                out[self.indices[k] as usize] += self.values[k] * yi;
            }
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }
}

pub(crate) struct CsrBuilder {
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl CsrBuilder {
    pub fn push(&mut self, col: usize, value: f64) {
        debug_assert!(col < self.cols);
        self.indices.push(col as u32);
        self.values.push(value);
    }

    pub fn finish_row(&mut self) {
        self.indptr.push(self.indices.len());
    }

    pub fn build(self) -> CsrMatrix {
        CsrMatrix {
            rows: self.indptr.len() - 1,
            cols: self.cols,
            indptr: self.indptr,
            indices: self.indices,
            values: self.values,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop when `||r|| / ||b||` drops below this.
    pub rel_tol: f64,
    /// Iteration cap as a multiple of the system size.
    pub max_iter_per_unknown: usize,
    /// Largest band (entries) the direct fallback may allocate.
    pub max_band_entries: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_iter_per_unknown: 20,
            max_band_entries: 40_000_000,
        }
    }
}

/// Symmetric positive definite operator `S = diag(row_scale) * A`.
pub(crate) struct ScaledOperator<'a> {
    pub a: &'a CsrMatrix,
    pub row_scale: &'a [f64],
}

impl ScaledOperator<'_> {
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.a.mul_vec(x, out);
        for (o, s) in out.iter_mut().zip(self.row_scale) {
            *o *= s;
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        (0..self.a.rows()).map(|i| self.a.get(i, i) * self.row_scale[i]).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
    pub direct: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradients with a banded Cholesky fallback.
pub(crate) fn solve_spd(op: &ScaledOperator, b: &[f64], opts: &SolverOptions) -> Result<(Vec<f64>, SolveStats)> {
    let dim = b.len();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok((vec![0.0; dim], SolveStats { iterations: 0, residual: 0.0, direct: false }));
    }
    let inv_diag: Vec<f64> = op.diagonal().iter().map(|d| 1.0 / d).collect();
    let mut x = vec![0.0; dim];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, m)| r * m).collect();
    let mut p = z.clone();
    let mut q = vec![0.0; dim];
    let mut rz = dot(&r, &z);
    let max_iter = opts.max_iter_per_unknown.saturating_mul(dim).max(10);
    let mut residual = 1.0;
    for it in 1..=max_iter {
        op.apply(&p, &mut q);
        let alpha = rz / dot(&p, &q);
        for i in 0..dim {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        residual = dot(&r, &r).sqrt() / b_norm;
        if residual <= opts.rel_tol {
            return Ok((x, SolveStats { iterations: it, residual, direct: false }));
        }
        for i in 0..dim {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..dim {
            p[i] = z[i] + beta * p[i];
        }
        if !residual.is_finite() {
            break;
        }
    }
    log::warn!("CG stalled at relative residual {residual:.3e}; trying banded Cholesky");
    match banded_cholesky_solve(op, b, opts.max_band_entries) {
        Ok(x) => {
            op.apply(&x, &mut q);
            let res = q.iter().zip(b).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() / b_norm;
            Ok((x, SolveStats { iterations: max_iter, residual: res, direct: true }))
        }
        Err(Error::TooLarge(_)) => Err(Error::NotConverged { residual, iterations: max_iter }),
        Err(e) => Err(e),
    }
}

/// Solve `A x = b` for a symmetric positive definite `A`.
pub fn solve_spd_plain(a: &CsrMatrix, b: &[f64], opts: &SolverOptions) -> Result<(Vec<f64>, SolveStats)> {
    let ones = vec![1.0; a.rows()];
    solve_spd(&ScaledOperator { a, row_scale: &ones }, b, opts)
}

/// Direct solve exploiting the lattice ordering (bandwidth about n^2).
pub(crate) fn banded_cholesky_solve(op: &ScaledOperator, b: &[f64], max_entries: usize) -> Result<Vec<f64>> {
    let dim = b.len();
    let mut bw = 0usize;
    for i in 0..dim {
        for (j, _) in op.a.row(i) {
            if j < i {
                bw = bw.max(i - j);
            }
        }
    }
    let width = bw + 1;
    let entries = dim.saturating_mul(width);
    if entries > max_entries {
        return Err(Error::TooLarge(entries));
    }
    // band[i*width + (j + bw - i)] holds L(i, j) for i - bw <= j <= i
    let mut band = vec![0.0; entries];
    for i in 0..dim {
        for (j, v) in op.a.row(i) {
            if j <= i {
                band[i * width + (j + bw - i)] += v * op.row_scale[i];
            }
        }
    }
    for j in 0..dim {
        let lo = j.saturating_sub(bw);
        let mut d = band[j * width + bw];
        for k in lo..j {
            let l = band[j * width + (k + bw - j)];
            d -= l * l;
        }
        if d <= 0.0 {
            return Err(Error::NotConverged { residual: f64::NAN, iterations: 0 });
        }
        let d = d.sqrt();
        band[j * width + bw] = d;
        for i in j + 1..(j + width).min(dim) {
            let lo_i = i.saturating_sub(bw).max(lo);
            let mut s = band[i * width + (j + bw - i)];
            for k in lo_i..j {
                s -= band[i * width + (k + bw - i)] * band[j * width + (k + bw - j)];
            }
            band[i * width + (j + bw - i)] = s / d;
        }
    }
    let mut y = b.to_vec();
    for i in 0..dim {
        let lo = i.saturating_sub(bw);
        let mut s = y[i];
        for k in lo..i {
            s -= band[i * width + (k + bw - i)] * y[k];
        }
        y[i] = s / band[i * width + bw];
    }
    for i in (0..dim).rev() {
        let mut s = y[i];
        for k in i + 1..(i + width).min(dim) {
            s -= band[k * width + (i + bw - k)] * y[k];
        }
        y[i] = s / band[i * width + bw];
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> CsrMatrix {
        let mut b = CsrMatrix::builder(n, 3 * n);
        for i in 0..n {
            if i > 0 {
                b.push(i - 1, -1.0);
            }
            b.push(i, 2.0);
            if i + 1 < n {
                b.push(i + 1, -1.0);
            }
            b.finish_row();
        }
        b.build()
    }

    #[test]
    fn cg_and_cholesky_agree() {
        let a = laplacian_1d(30);
        let scale = vec![1.0; 30];
        let op = ScaledOperator { a: &a, row_scale: &scale };
        let rhs: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin()).collect();
        let (x, stats) = solve_spd(&op, &rhs, &SolverOptions::default()).unwrap();
        assert!(!stats.direct);
        let y = banded_cholesky_solve(&op, &rhs, 1 << 20).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn falls_back_to_direct_when_iterations_run_out() {
        let a = laplacian_1d(40);
        let scale = vec![1.0; 40];
        let op = ScaledOperator { a: &a, row_scale: &scale };
        let rhs = vec![1.0; 40];
        let opts = SolverOptions { rel_tol: 1e-14, max_iter_per_unknown: 0, max_band_entries: 1 << 20 };
        let (x, stats) = solve_spd(&op, &rhs, &opts).unwrap();
        assert!(stats.direct);
        let mut ax = vec![0.0; 40];
        a.mul_vec(&x, &mut ax);
        assert!(ax.iter().all(|v| (v - 1.0).abs() < 1e-9));

        let opts = SolverOptions { max_band_entries: 10, ..opts };
        assert!(matches!(solve_spd(&op, &rhs, &opts), Err(Error::NotConverged { .. })));
    }
}
