//! Compressed double factorization of the two-electron tensor.
//!
//! (pq|rs) ≈ Σ_ℓ Σ_kl U_pk U_qk Z_kl U_rl U_sl. With W_{pq,k} = U_pk U_qk the
//! fragment supermatrix is W Z Wᵀ, and W has orthonormal columns whenever U
//! is orthogonal.

use nalgebra::linalg::Schur;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{build_sector_hamiltonian, lowest_eigenvalues, LanczosOptions, SectorBasis};
use crate::integrals::{kappa_from_standard, standard_from_kappa, Eri, IntegralSet};
use crate::optim::{self, LbfgsOptions, Termination};
use crate::trotter::{givens_compose, givens_decompose};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CdfFragment {
    #[serde(with = "crate::rowmajor")]
    pub x: DMatrix<f64>,
    #[serde(with = "crate::rowmajor")]
    pub u: DMatrix<f64>,
    #[serde(with = "crate::rowmajor")]
    pub z: DMatrix<f64>,
}

impl CdfFragment {
    pub fn from_generator(x: DMatrix<f64>, z: DMatrix<f64>) -> Self {
        let x = antisymmetrize(&x);
        let u = x.clone().exp();
        CdfFragment { x, u, z: symmetrize(&z) }
    }

    /// Recovers the generator from an orthogonal matrix. A determinant of
    /// −1 is fixed by flipping the last column, which leaves W unchanged.
    pub fn from_rotation(u: &DMatrix<f64>, z: DMatrix<f64>) -> Result<Self> {
        let mut u = u.clone();
        if u.determinant() < 0.0 {
            let n = u.ncols();
            u.column_mut(n - 1).neg_mut();
        }
        let x = log_rotation(&u)?;
        Ok(CdfFragment::from_generator(x, z))
    }

    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    pub fn w(&self) -> DMatrix<f64> {
        w_matrix(&self.u)
    }

    pub fn supermatrix(&self) -> DMatrix<f64> {
        let w = self.w();
        &w * &self.z * w.transpose()
    }

    /// Σ_l Z_kl, the one-body weight moved into the merged one-body term.
    pub fn row_sums(&self) -> Vec<f64> {
        self.z.row_iter().map(|r| r.sum()).collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CdfHamiltonian {
    pub n_orbitals: usize,
    pub n_electrons: usize,
    pub ms2: i64,
    #[serde(with = "crate::rowmajor")]
    pub u0: DMatrix<f64>,
    pub z0: Vec<f64>,
    pub fragments: Vec<CdfFragment>,
    pub scalar_shift: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<CdfFitReport>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    /// Optimizer stopped early with the residual above tolerance.
    Stagnated,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CdfFitReport {
    /// ‖(pq|rs)‖_F before any fragment.
    pub initial_residual: f64,
    /// Frobenius residual after each fragment was added.
    pub residuals: Vec<f64>,
    pub iterations: Vec<usize>,
    pub final_residual: f64,
    pub status: FitStatus,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug)]
pub struct FitOptions {
    /// Residual below which the fit counts as converged regardless of optimizer state.
    pub tolerance: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { tolerance: 1e-6, max_iter: 400, seed: 0 }
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn antisymmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m - m.transpose()) * 0.5
}

pub fn w_matrix(u: &DMatrix<f64>) -> DMatrix<f64> {
    let n = u.nrows();
    DMatrix::from_fn(n * n, n, |pq, k| u[(pq / n, k)] * u[(pq % n, k)])
}

/// Real logarithm of a rotation (det +1) through its real Schur form.
pub fn log_rotation(u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = u.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let (q, t) = Schur::new(u.clone()).unpack();
    let mut l = DMatrix::zeros(n, n);
    let mut negative = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)].abs() > 1e-13 {
            let theta = (0.5 * (t[(i + 1, i)] - t[(i, i + 1)])).atan2(0.5 * (t[(i, i)] + t[(i + 1, i + 1)]));
            l[(i + 1, i)] = theta;
            l[(i, i + 1)] = -theta;
            i += 2;
        } else {
            if t[(i, i)] < 0.0 {
                negative.push(i);
            }
            i += 1;
        }
    }
    if negative.len() % 2 == 1 {
        return Err(Error::Argument("matrix logarithm needs det(U) = +1".into()));
    }
    for pair in negative.chunks(2) {
        l[(pair[1], pair[0])] = std::f64::consts::PI;
        l[(pair[0], pair[1])] = -std::f64::consts::PI;
    }
    let x = antisymmetrize(&(&q * l * q.transpose()));
    let err = (x.clone().exp() - u).amax();
    if err > 1e-9 {
        return Err(Error::Numeric { msg: "rotation logarithm failed to round-trip".into(), residual: err });
    }
    Ok(x)
}

/// Upper-right block of exp([[A, E], [0, A]]), the Fréchet derivative of exp at A along E.
pub fn expm_frechet(a: &DMatrix<f64>, e: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut big = DMatrix::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(a);
    big.view_mut((n, n), (n, n)).copy_from(a);
    big.view_mut((0, n), (n, n)).copy_from(e);
    big.exp().view((0, n), (n, n)).into_owned()
}

/// f = ‖T − W Z Wᵀ‖²_F together with ∂f/∂U and ∂f/∂Z (as full matrices).
pub fn objective(target: &DMatrix<f64>, u: &DMatrix<f64>, z: &DMatrix<f64>) -> (f64, DMatrix<f64>, DMatrix<f64>) {
    let n = u.nrows();
    let w = w_matrix(u);
    let d = target - &w * z * w.transpose();
    let f = d.norm_squared();
    let dw = &d * &w;
    let gz = -2.0 * w.transpose() * &dw;
    let gw = -4.0 * dw * z;
    let gu = DMatrix::from_fn(n, n, |p, k| {
        (0..n).map(|q| (gw[(p * n + q, k)] + gw[(q * n + p, k)]) * u[(q, k)]).sum::<f64>()
    });
    (f, gu, gz)
}

/// Objective over (X, Z) with U = exp(X): returns f, ∂f/∂X (antisymmetric
/// coordinates X_ij, i<j) and ∂f/∂Z (symmetric coordinates Z_ij, i≤j).
pub fn objective_xz(target: &DMatrix<f64>, x: &DMatrix<f64>, z: &DMatrix<f64>) -> (f64, DMatrix<f64>, DMatrix<f64>) {
    let u = x.clone().exp();
    let (f, gu, gz) = objective(target, &u, z);
    let gx = expm_frechet(&x.transpose(), &gu);
    (f, &gx - gx.transpose(), &gz + gz.transpose() - DMatrix::from_diagonal(&gz.diagonal()))
}

struct Packing {
    n: usize,
}

impl Packing {
    fn nx(&self) -> usize {
        self.n * (self.n - 1) / 2
    }

    fn len(&self) -> usize {
        self.nx() + self.n * (self.n + 1) / 2
    }

    fn unpack(&self, v: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.n;
        let mut x = DMatrix::zeros(n, n);
        let mut z = DMatrix::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                x[(i, j)] = v[k];
                x[(j, i)] = -v[k];
                k += 1;
            }
        }
        for i in 0..n {
            for j in i..n {
                z[(i, j)] = v[k];
                z[(j, i)] = v[k];
                k += 1;
            }
        }
        (x, z)
    }

    fn pack(&self, gx: &DMatrix<f64>, gz: &DMatrix<f64>) -> Vec<f64> {
        let n = self.n;
        let mut v = Vec::with_capacity(self.len());
        for i in 0..n {
            for j in i + 1..n {
                v.push(gx[(i, j)]);
            }
        }
        for i in 0..n {
            for j in i..n {
                v.push(gz[(i, j)]);
            }
        }
        v
    }
}

/// Eigenvector seed: the dominant eigenvector of the residual supermatrix,
/// reshaped to N×N and diagonalized.
fn seed_rotation(target: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(target));
    let lead = eig.eigenvalues.iamax();
    let v = eig.eigenvectors.column(lead);
    let m = symmetrize(&DMatrix::from_fn(n, n, |p, q| v[p * n + q]));
    let mut q = SymmetricEigen::new(m).eigenvectors;
    if q.determinant() < 0.0 {
        q.column_mut(n - 1).neg_mut();
    }
    q
}

fn optimal_z(target: &DMatrix<f64>, u: &DMatrix<f64>) -> DMatrix<f64> {
    let w = w_matrix(u);
    symmetrize(&(w.transpose() * target * &w))
}

/// Fits one fragment to `target`, parametrizing U = U_seed·exp(X).
fn fit_fragment(target: &DMatrix<f64>, n: usize, max_iter: usize) -> Result<(CdfFragment, usize, Termination)> {
    let u_seed = seed_rotation(target, n);
    let z_seed = optimal_z(target, &u_seed);
    let pk = Packing { n };
    let mut v0 = vec![0.0; pk.nx()];
    v0.extend(pk.pack(&DMatrix::zeros(n, n), &z_seed).into_iter().skip(pk.nx()));
    let scale = target.norm_squared().max(1e-300);
    let res = optim::minimize(
        |v| {
            let (x, z) = pk.unpack(v);
            let ex = x.clone().exp();
            let u = &u_seed * &ex;
            let (f, gu, gz) = objective(target, &u, &z);
            let gloc = u_seed.transpose() * gu;
            let gx = expm_frechet(&x.transpose(), &gloc);
            let gx = &gx - gx.transpose();
            let gz = &gz + gz.transpose() - DMatrix::from_diagonal(&gz.diagonal());
            let g = pk.pack(&gx, &gz).into_iter().map(|g| g / scale).collect();
            (f / scale, g)
        },
        v0,
        &LbfgsOptions { max_iter, gtol: 1e-10, ftol: 1e-12, ..Default::default() },
    );
    let (x, _) = pk.unpack(&res.x);
    let u = &u_seed * x.exp();
    let frag = CdfFragment::from_rotation(&u, DMatrix::zeros(n, n))?;
    let z = optimal_z(target, &frag.u);
    Ok((CdfFragment { z, ..frag }, res.iterations, res.termination))
}

/// Sequential fit of L fragments followed by one-body assembly.
pub fn fit_cdf(h: &IntegralSet, l: usize, opts: &FitOptions) -> Result<CdfHamiltonian> {
    h.validate()?;
    let n = h.n_orbitals;
    let mut residual = h.two_body.supermatrix();
    let initial = residual.norm();
    let mut fragments = Vec::with_capacity(l);
    let mut residuals = Vec::with_capacity(l);
    let mut iterations = Vec::with_capacity(l);
    let mut stalled = false;
    for ell in 0..l {
        let (frag, it, term) = fit_fragment(&residual, n, opts.max_iter)?;
        residual -= frag.supermatrix();
        residual = symmetrize(&residual);
        let r = residual.norm();
        log::debug!("fragment {}: residual {:.3e} after {} iterations ({:?})", ell + 1, r, it, term);
        stalled |= matches!(term, Termination::LineSearch | Termination::MaxIter) && r > opts.tolerance;
        residuals.push(r);
        iterations.push(it);
        fragments.push(frag);
    }
    let final_residual = residuals.last().copied().unwrap_or(initial);
    let status = if final_residual <= opts.tolerance || !stalled { FitStatus::Converged } else { FitStatus::Stagnated };
    if status == FitStatus::Stagnated {
        log::warn!("CDF optimizer stagnated with residual {final_residual:.3e}");
    }
    let (u0, z0, scalar_shift) = assemble_one_body(h, &fragments);
    Ok(CdfHamiltonian {
        n_orbitals: n,
        n_electrons: h.n_electrons,
        ms2: h.ms2,
        u0,
        z0,
        fragments,
        scalar_shift,
        fit: Some(CdfFitReport { initial_residual: initial, residuals, iterations, final_residual, status, seed: opts.seed }),
    })
}

/// Sign and order canonical eigen-decomposition: descending eigenvalues,
/// first nonzero entry of each column positive.
pub fn canonical_eigen(t: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let n = t.nrows();
    let eig = SymmetricEigen::new(symmetrize(t));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let mut u = DMatrix::zeros(n, n);
    let mut z = Vec::with_capacity(n);
    for (c, &i) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(i).into_owned();
        if let Some(first) = col.iter().find(|v| v.abs() > 1e-12) {
            if *first < 0.0 {
                col.neg_mut();
            }
        }
        u.set_column(c, &col);
        z.push(eig.eigenvalues[i]);
    }
    (u, z)
}

fn fragment_one_body(fragments: &[CdfFragment], n: usize) -> DMatrix<f64> {
    let mut t = DMatrix::zeros(n, n);
    for f in fragments {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(f.row_sums()));
        t += &f.u * d * f.u.transpose();
    }
    t
}

fn fragment_constant(fragments: &[CdfFragment]) -> f64 {
    fragments.iter().map(|f| -0.5 * f.z.sum() + 0.25 * f.z.trace()).sum()
}

/// Merged one-body operator t = κ + Σ_ℓ U diag(Σ_l Z_kl) Uᵀ = U0 diag(Z0) U0ᵀ and
/// the scalar constant of the implemented Hamiltonian.
pub fn assemble_one_body(h: &IntegralSet, fragments: &[CdfFragment]) -> (DMatrix<f64>, Vec<f64>, f64) {
    let t = kappa_from_standard(h) + fragment_one_body(fragments, h.n_orbitals);
    let (u0, z0) = canonical_eigen(&t);
    let shift = h.core_energy + z0.iter().sum::<f64>() + fragment_constant(fragments);
    (u0, z0, shift)
}

impl CdfHamiltonian {
    /// Wraps given fragments and assembles the one-body part; no fit report.
    pub fn from_parts(h: &IntegralSet, fragments: Vec<CdfFragment>) -> Self {
        let (u0, z0, scalar_shift) = assemble_one_body(h, &fragments);
        CdfHamiltonian {
            n_orbitals: h.n_orbitals,
            n_electrons: h.n_electrons,
            ms2: h.ms2,
            u0,
            z0,
            fragments,
            scalar_shift,
            fit: None,
        }
    }

    pub fn l(&self) -> usize {
        self.fragments.len()
    }

    pub fn one_body_matrix(&self) -> DMatrix<f64> {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.z0.clone()));
        &self.u0 * d * self.u0.transpose()
    }

    /// Σ_ℓ W Z Wᵀ as a two-electron tensor.
    pub fn reconstruct_eri(&self) -> Eri {
        let n = self.n_orbitals;
        let mut m = DMatrix::zeros(n * n, n * n);
        for f in &self.fragments {
            m += f.supermatrix();
        }
        Eri::from_supermatrix(n, &symmetrize(&m))
    }

    /// Inverts the one-body merge and rebuilds a standard-convention IntegralSet.
    pub fn reconstruct(&self) -> Result<IntegralSet> {
        let eri = self.reconstruct_eri();
        let kappa = self.one_body_matrix() - fragment_one_body(&self.fragments, self.n_orbitals);
        let core = self.scalar_shift - self.z0.iter().sum::<f64>() - fragment_constant(&self.fragments);
        let h = standard_from_kappa(&symmetrize(&kappa), &eri);
        IntegralSet::new(self.n_electrons, self.ms2, core, symmetrize(&h), eri)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: CdfHamiltonian = serde_json::from_str(text)?;
        c.check()?;
        Ok(c)
    }

    /// Shape and orthogonality checks.
    pub fn check(&self) -> Result<()> {
        let n = self.n_orbitals;
        let bad = |m: &DMatrix<f64>| m.nrows() != n || m.ncols() != n;
        if bad(&self.u0) || self.z0.len() != n {
            return Err(Error::Format("one-body block has wrong shape".into()));
        }
        for (i, f) in self.fragments.iter().enumerate() {
            if bad(&f.u) || bad(&f.z) || bad(&f.x) {
                return Err(Error::Format(format!("fragment {} has wrong shape", i + 1)));
            }
            let orth = (f.u.transpose() * &f.u - DMatrix::identity(n, n)).amax();
            if orth > 1e-10 {
                return Err(Error::Consistency(format!("fragment {} rotation not orthogonal ({orth:.1e})", i + 1)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EigenErrorStats {
    pub mean: f64,
    pub std: f64,
    pub max: f64,
    pub k: usize,
}

pub fn eigenvalue_error_stats(a: &[f64], b: &[f64]) -> EigenErrorStats {
    let k = a.len().min(b.len());
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect();
    let mean = d.iter().sum::<f64>() / k as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / k as f64;
    EigenErrorStats { mean, std: var.sqrt(), max: d.iter().copied().fold(0.0, f64::max), k }
}

/// |ΔE| statistics over the k lowest sector eigenvalues of `h` versus the
/// Hamiltonian rebuilt from `cdf`.
pub fn cdf_eigen_error(cdf: &CdfHamiltonian, h: &IntegralSet, k: usize) -> Result<EigenErrorStats> {
    let (nu, nd) = h.sector()?;
    let basis = SectorBasis::new(h.n_orbitals, nu, nd)?;
    let k = k.min(basis.dim());
    let opts = LanczosOptions::default();
    let a = lowest_eigenvalues(&build_sector_hamiltonian(h, &basis)?, k, &opts)?;
    let b = lowest_eigenvalues(&build_sector_hamiltonian(&cdf.reconstruct()?, &basis)?, k, &opts)?;
    Ok(eigenvalue_error_stats(&a, &b))
}

fn quantize(x: f64, eps: f64) -> f64 {
    (x / eps).round() * eps
}

fn quantize_rotation(u: &DMatrix<f64>, eps: f64) -> Result<DMatrix<f64>> {
    let mut dec = givens_decompose(u)?;
    for g in dec.rotations.iter_mut() {
        g.theta = quantize(g.theta, eps);
    }
    Ok(givens_compose(u.nrows(), &dec))
}

/// Rounds every Givens angle and every Z entry to the nearest multiple of ε_rot.
pub fn truncate_rotations(cdf: &CdfHamiltonian, eps: f64) -> Result<CdfHamiltonian> {
    if !(eps > 0.0) {
        return Err(Error::Argument("rotation precision must be positive".into()));
    }
    let mut out = cdf.clone();
    out.u0 = quantize_rotation(&cdf.u0, eps)?;
    out.z0 = cdf.z0.iter().map(|&z| quantize(z, eps)).collect();
    out.fragments = cdf
        .fragments
        .iter()
        .map(|f| {
            let u = quantize_rotation(&f.u, eps)?;
            CdfFragment::from_rotation(&u, f.z.map(|z| quantize(z, eps)))
        })
        .collect::<Result<_>>()?;
    out.fit = None;
    Ok(out)
}
