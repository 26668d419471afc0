//! Krylov eigensolvers: block Lanczos with full reorthogonalization, and
//! the symmetric tridiagonal QL routine used for Krylov spectral measures.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct LanczosOptions {
    pub block: usize,
    pub max_krylov: usize,
    pub tol: f64,
    pub seed: u64,
    pub want_vectors: bool,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions { block: 2, max_krylov: 6000, tol: 1e-9, seed: 0x5eed, want_vectors: true }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.par_iter().with_min_len(4096).zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    y.par_iter_mut().with_min_len(4096).zip(x).for_each(|(yi, xi)| *yi += a * xi);
}

/// Two passes of classical Gram–Schmidt against `basis`.
fn reorthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        let coef: Vec<f64> = basis.par_iter().map(|v| dot(v, w)).collect();
        w.par_chunks_mut(2048).enumerate().for_each(|(ci, chunk)| {
            let off = ci * 2048;
            for (v, &c) in basis.iter().zip(&coef) {
                if c != 0.0 {
                    for (k, x) in chunk.iter_mut().enumerate() {
                        *x -= c * v[off + k];
                    }
                }
            }
        });
    }
}

fn random_unit(dim: usize, rng: &mut ChaCha8Rng, basis: &[Vec<f64>], extra: &[Vec<f64>]) -> Option<Vec<f64>> {
    for _ in 0..8 {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>() - 0.5).collect();
        reorthogonalize(&mut v, basis);
        reorthogonalize(&mut v, extra);
        let nv = norm(&v);
        if nv > 1e-8 {
            v.iter_mut().for_each(|x| *x /= nv);
            return Some(v);
        }
    }
    None
}

pub struct LanczosResult {
    pub values: Vec<f64>,
    pub vectors: Option<DMatrix<f64>>,
    pub residuals: Vec<f64>,
    pub krylov_dim: usize,
}

/// Lowest `k` eigenpairs of the symmetric operator `op` (y = A x).
pub fn block_lanczos<F>(op: F, dim: usize, k: usize, opts: &LanczosOptions) -> Result<LanczosResult>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    if k == 0 || k > dim {
        return Err(Error::Argument(format!("requested {k} eigenpairs of a {dim}-dim matrix")));
    }
    let b = opts.block.max(1).min(dim);
    let cap = opts.max_krylov.min(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut block: Vec<Vec<f64>> = Vec::new();
    for _ in 0..b {
        match random_unit(dim, &mut rng, &basis, &block) {
            Some(v) => block.push(v),
            None => break,
        }
    }
    let mut t = DMatrix::<f64>::zeros(0, 0);
    let mut next_check = (2 * k).max(k + 20).min(cap);
    let mut best_res = f64::INFINITY;
    loop {
        let j0 = basis.len();
        let bj = block.len();
        let mut w: Vec<Vec<f64>> = block
            .iter()
            .map(|v| {
                let mut y = vec![0.0; dim];
                op(v, &mut y);
                y
            })
            .collect();
        basis.extend(block.drain(..));
        let m = basis.len();
        let mut tn = DMatrix::zeros(m, m);
        tn.view_mut((0, 0), (j0, j0)).copy_from(&t);
        // projections onto the current and previous blocks
        let lo = j0.saturating_sub(2 * b);
        for c in 0..bj {
            for i in lo..m {
                let h = dot(&basis[i], &w[c]);
                tn[(i, j0 + c)] = h;
                tn[(j0 + c, i)] = h;
            }
        }
        for c in 0..bj {
            for i in 0..bj {
                let h = 0.5 * (tn[(j0 + i, j0 + c)] + tn[(j0 + c, j0 + i)]);
                tn[(j0 + i, j0 + c)] = h;
                tn[(j0 + c, j0 + i)] = h;
            }
        }
        t = tn;
        for wc in w.iter_mut() {
            reorthogonalize(wc, &basis);
        }
        // QR of the residual block; deflated columns get fresh random directions
        let mut r = DMatrix::zeros(bj, bj);
        let mut next: Vec<Vec<f64>> = Vec::new();
        let scale = t.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1.0);
        for c in 0..bj {
            let mut wc = std::mem::take(&mut w[c]);
            for (i, q) in next.iter().enumerate() {
                let h = dot(q, &wc);
                r[(i, c)] = h;
                axpy(&mut wc, -h, q);
            }
            let nw = norm(&wc);
            if nw > 1e-10 * scale {
                wc.iter_mut().for_each(|x| *x /= nw);
                r[(next.len(), c)] = nw;
                next.push(wc);
            }
        }
        let mut coupling = r.rows(0, next.len()).into_owned();
        let exhausted = m >= cap || m >= dim;
        if !exhausted {
            while next.len() < bj && m + next.len() < dim {
                match random_unit(dim, &mut rng, &basis, &next) {
                    Some(v) => {
                        let nr = coupling.nrows();
                        coupling = coupling.insert_row(nr, 0.0);
                        next.push(v);
                    }
                    None => break,
                }
            }
        }
        if m >= next_check || exhausted || next.is_empty() {
            let eig = SymmetricEigen::new(t.clone());
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
            let kk = k.min(m);
            let mut residuals = Vec::with_capacity(kk);
            for &i in &order[..kk] {
                let y_last = eig.eigenvectors.column(i).rows(j0, bj).into_owned();
                let res = if coupling.nrows() == 0 { 0.0 } else { (&coupling * y_last).norm() };
                residuals.push(res);
            }
            let worst = residuals.iter().cloned().fold(0.0, f64::max);
            best_res = best_res.min(worst);
            if kk == k && worst <= opts.tol {
                let values: Vec<f64> = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
                let vectors = opts.want_vectors.then(|| {
                    let mut out = DMatrix::zeros(dim, k);
                    for (c, &i) in order[..k].iter().enumerate() {
                        let y = eig.eigenvectors.column(i);
                        let mut col = vec![0.0; dim];
                        for (q, v) in basis.iter().enumerate() {
                            axpy(&mut col, y[q], v);
                        }
                        out.column_mut(c).copy_from_slice(&col);
                    }
                    out
                });
                return Ok(LanczosResult { values, vectors, residuals, krylov_dim: m });
            }
            if exhausted || next.is_empty() {
                return Err(Error::Numeric {
                    msg: format!("Lanczos did not converge {k} pairs within Krylov dimension {m}"),
                    residual: best_res,
                });
            }
            next_check = ((m as f64 * 1.25) as usize).max(m + b).min(cap);
        }
        block = next;
    }
}

/// Eigenvalues of a symmetric tridiagonal matrix plus selected rows of its
/// eigenvector matrix (implicit QL with Wilkinson shifts).
pub fn tridiagonal_eigen(diag: &[f64], offdiag: &[f64], rows: &[usize]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n.saturating_sub(1)].copy_from_slice(&offdiag[..n.saturating_sub(1)]);
    let mut z: Vec<Vec<f64>> = rows
        .iter()
        .map(|&r| {
            let mut v = vec![0.0; n];
            v[r] = 1.0;
            v
        })
        .collect();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 100 {
                return Err(Error::Numeric { msg: "tridiagonal QL did not converge".into(), residual: e[l].abs() });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let bb = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * bb;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - bb;
                for zr in z.iter_mut() {
                    let f = zr[i + 1];
                    zr[i + 1] = s * zr[i] + c * f;
                    zr[i] = c * zr[i] - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok((d, z))
}

/// Krylov (Gauss-quadrature) representation of the spectral measure of
/// `start` under `op`: nodes and weights with Σ weights = ‖start‖².
pub fn krylov_measure<F>(op: F, start: &[f64], max_steps: usize) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    let dim = start.len();
    let n0 = norm(start);
    if n0 == 0.0 {
        return Ok((vec![], vec![]));
    }
    let mut basis: Vec<Vec<f64>> = vec![start.iter().map(|x| x / n0).collect()];
    let mut alpha = Vec::new();
    let mut beta = Vec::new();
    let mut w = vec![0.0; dim];
    let mut scale = 1.0f64;
    loop {
        let j = basis.len() - 1;
        op(&basis[j], &mut w);
        let a = dot(&basis[j], &w);
        alpha.push(a);
        scale = scale.max(a.abs());
        reorthogonalize(&mut w, &basis);
        let bnorm = norm(&w);
        if basis.len() >= max_steps.min(dim) || bnorm <= 1e-10 * scale {
            break;
        }
        beta.push(bnorm);
        basis.push(w.iter().map(|x| x / bnorm).collect());
    }
    let (nodes, rows) = tridiagonal_eigen(&alpha, &beta, &[0])?;
    let weights = rows[0].iter().map(|z| z * z * n0 * n0).collect();
    Ok((nodes, weights))
}
