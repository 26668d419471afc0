//! Sector-restricted full configuration interaction and exact reference spectra.
//!
//! Determinants are 2N-bit occupation strings: bits 0..N−1 spin up,
//! bits N..2N−1 spin down. A determinant is the ordered product of
//! creation operators in ascending mode order acting on vacuum, which is
//! exactly the computational basis state under Jordan–Wigner.

pub mod lanczos;
pub mod sparse;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrals::{kappa_from_standard, Component, DipoleIntegrals, IntegralSet};
pub use lanczos::LanczosOptions;
pub use sparse::SparseMatrix;

pub const DEFAULT_SECTOR_CAP: usize = 4_000_000;
pub const DENSE_LIMIT: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Spin {
    Up,
    Down,
}

#[derive(Clone, Debug)]
pub struct SectorBasis {
    pub n_orbitals: usize,
    pub n_up: usize,
    pub n_down: usize,
    up: Vec<u64>,
    down: Vec<u64>,
    up_index: Vec<u32>,
    down_index: Vec<u32>,
}

/// All N-bit strings with `k` set bits, ascending.
pub fn strings(n: usize, k: usize) -> Vec<u64> {
    if k > n {
        return vec![];
    }
    let mut out = Vec::new();
    if k == 0 {
        return vec![0];
    }
    let mut s: u64 = (1u64 << k) - 1;
    let limit = 1u64 << n;
    while s < limit {
        out.push(s);
        // Gosper's hack
        let c = s & s.wrapping_neg();
        let r = s + c;
        s = (((r ^ s) >> 2) / c) | r;
    }
    out
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

impl SectorBasis {
    pub fn new(n_orbitals: usize, n_up: usize, n_down: usize) -> Result<Self> {
        Self::with_cap(n_orbitals, n_up, n_down, DEFAULT_SECTOR_CAP)
    }

    pub fn with_cap(n_orbitals: usize, n_up: usize, n_down: usize, cap: usize) -> Result<Self> {
        if n_up > n_orbitals || n_down > n_orbitals {
            return Err(Error::Argument(format!("sector ({n_up},{n_down}) exceeds {n_orbitals} orbitals")));
        }
        if n_orbitals > 24 {
            return Err(Error::Capacity(format!("{n_orbitals} orbitals exceed the 24-orbital string table")));
        }
        let dim = binomial(n_orbitals, n_up) * binomial(n_orbitals, n_down);
        if dim > cap {
            return Err(Error::Capacity(format!(
                "sector ({n_up},{n_down}) of {n_orbitals} orbitals has dimension {dim} > cap {cap}"
            )));
        }
        let up = strings(n_orbitals, n_up);
        let down = strings(n_orbitals, n_down);
        let mut up_index = vec![u32::MAX; 1 << n_orbitals];
        let mut down_index = vec![u32::MAX; 1 << n_orbitals];
        for (i, &s) in up.iter().enumerate() {
            up_index[s as usize] = i as u32;
        }
        for (i, &s) in down.iter().enumerate() {
            down_index[s as usize] = i as u32;
        }
        Ok(SectorBasis { n_orbitals, n_up, n_down, up, down, up_index, down_index })
    }

    pub fn dim(&self) -> usize {
        self.up.len() * self.down.len()
    }

    /// Combined 2N-bit occupation string of basis state `i`.
    #[inline]
    pub fn det(&self, i: usize) -> u64 {
        let nd = self.down.len();
        self.up[i / nd] | (self.down[i % nd] << self.n_orbitals)
    }

    #[inline]
    pub fn index_of(&self, det: u64) -> Option<usize> {
        let mask = (1u64 << self.n_orbitals) - 1;
        let u = self.up_index.get((det & mask) as usize).copied()?;
        let d = self.down_index.get((det >> self.n_orbitals) as usize).copied()?;
        if u == u32::MAX || d == u32::MAX || (det >> (2 * self.n_orbitals)) != 0 {
            return None;
        }
        Some(u as usize * self.down.len() + d as usize)
    }

    /// Number of electrons in the orbitals flagged by `mask` (both spins).
    pub fn occupation_in(&self, i: usize, mask: u64) -> u32 {
        let d = self.det(i);
        (d & mask).count_ones() + ((d >> self.n_orbitals) & mask).count_ones()
    }

    pub fn mode(&self, p: usize, spin: Spin) -> usize {
        match spin {
            Spin::Up => p,
            Spin::Down => p + self.n_orbitals,
        }
    }
}

/// a_m |d⟩ → (sign, d') or None.
#[inline]
fn annihilate(d: u64, m: usize) -> Option<(f64, u64)> {
    if d >> m & 1 == 0 {
        return None;
    }
    let sign = if (d & ((1u64 << m) - 1)).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
    Some((sign, d & !(1u64 << m)))
}

#[inline]
fn create(d: u64, m: usize) -> Option<(f64, u64)> {
    if d >> m & 1 == 1 {
        return None;
    }
    let sign = if (d & ((1u64 << m) - 1)).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
    Some((sign, d | (1u64 << m)))
}

/// a†_p a_q |d⟩.
#[inline]
fn hop(d: u64, p: usize, q: usize) -> Option<(f64, u64)> {
    let (s1, d1) = annihilate(d, q)?;
    let (s2, d2) = create(d1, p)?;
    Some((s1 * s2, d2))
}

/// Column-wise sparse assembly with a per-thread dense scatter buffer.
fn assemble<F>(basis: &SectorBasis, column: F) -> SparseMatrix
where
    F: Fn(u64, &mut dyn FnMut(u64, f64)) + Sync,
{
    let dim = basis.dim();
    let rows: Vec<Vec<(u32, f64)>> = (0..dim)
        .into_par_iter()
        .map_init(
            || (vec![0.0f64; dim], Vec::<u32>::new()),
            |(acc, touched), j| {
                let d = basis.det(j);
                let mut push = |dd: u64, v: f64| {
                    let i = basis.index_of(dd).expect("operator left the sector") as u32;
                    if acc[i as usize] == 0.0 && !touched.contains(&i) {
                        touched.push(i);
                    }
                    acc[i as usize] += v;
                };
                column(d, &mut push);
                let mut out = Vec::with_capacity(touched.len());
                for &i in touched.iter() {
                    let v = acc[i as usize];
                    if v != 0.0 {
                        out.push((i, v));
                    }
                    acc[i as usize] = 0.0;
                }
                touched.clear();
                out
            },
        )
        .collect();
    SparseMatrix::from_rows(dim, rows)
}

fn check_sector(h: &IntegralSet, basis: &SectorBasis) -> Result<()> {
    if basis.n_orbitals != h.n_orbitals {
        return Err(Error::Consistency("basis and integrals disagree on N".into()));
    }
    Ok(())
}

/// Standard normal-ordered Hamiltonian
/// E + Σ h_pq a†_pσ a_qσ + ½ Σ (pq|rs) a†_pσ a†_rτ a_sτ a_qσ.
pub fn build_sector_hamiltonian(h: &IntegralSet, basis: &SectorBasis) -> Result<SparseMatrix> {
    check_sector(h, basis)?;
    let n = h.n_orbitals;
    let modes = 2 * n;
    let eri = &h.two_body;
    Ok(assemble(basis, |d, push| {
        push(d, h.core_energy);
        for q in 0..modes {
            if d >> q & 1 == 0 {
                continue;
            }
            let (qo, qs) = (q % n, q / n);
            for po in 0..n {
                let v = h.one_body[(po, qo)];
                if v == 0.0 {
                    continue;
                }
                if let Some((s, dd)) = hop(d, po + qs * n, q) {
                    push(dd, s * v);
                }
            }
        }
        for q_m in 0..modes {
            let Some((s1, d1)) = annihilate(d, q_m) else { continue };
            let (qo, qs) = (q_m % n, q_m / n);
            for s_m in 0..modes {
                let Some((s2, d2)) = annihilate(d1, s_m) else { continue };
                let (so, ss) = (s_m % n, s_m / n);
                for ro in 0..n {
                    let Some((s3, d3)) = create(d2, ro + ss * n) else { continue };
                    for po in 0..n {
                        let v = eri.get(po, qo, ro, so);
                        if v == 0.0 {
                            continue;
                        }
                        let Some((s4, d4)) = create(d3, po + qs * n) else { continue };
                        push(d4, 0.5 * v * s1 * s2 * s3 * s4);
                    }
                }
            }
        }
    }))
}

/// The same Hamiltonian in the E + Σ κ_pq E_pq + ½ Σ (pq|rs) E_pq E_rs form,
/// with E_pq = Σ_σ a†_pσ a_qσ.
pub fn build_sector_hamiltonian_kappa(h: &IntegralSet, basis: &SectorBasis) -> Result<SparseMatrix> {
    check_sector(h, basis)?;
    let n = h.n_orbitals;
    let kappa = kappa_from_standard(h);
    let eri = &h.two_body;
    let singles = move |d: u64, out: &mut Vec<(usize, usize, f64, u64)>| {
        out.clear();
        for sp in 0..2 {
            for q in 0..n {
                if d >> (q + sp * n) & 1 == 0 {
                    continue;
                }
                for p in 0..n {
                    if let Some((s, dd)) = hop(d, p + sp * n, q + sp * n) {
                        out.push((p, q, s, dd));
                    }
                }
            }
        }
    };
    Ok(assemble(basis, |d, push| {
        push(d, h.core_energy);
        let mut first = Vec::new();
        let mut second = Vec::new();
        singles(d, &mut first);
        for &(r, s, sg1, d1) in &first {
            let k = kappa[(r, s)];
            if k != 0.0 {
                push(d1, k * sg1);
            }
            singles(d1, &mut second);
            for &(p, q, sg2, d2) in &second {
                let v = eri.get(p, q, r, s);
                if v != 0.0 {
                    push(d2, 0.5 * v * sg1 * sg2);
                }
            }
        }
    }))
}

/// Σ_pq m_pq a†_pσ a_qσ summed over the selected spins.
pub fn one_body_operator(basis: &SectorBasis, m: &DMatrix<f64>, spin: Option<Spin>) -> SparseMatrix {
    let n = basis.n_orbitals;
    let spins: Vec<usize> = match spin {
        None => vec![0, 1],
        Some(Spin::Up) => vec![0],
        Some(Spin::Down) => vec![1],
    };
    assemble(basis, |d, push| {
        for &sp in &spins {
            for q in 0..n {
                if d >> (q + sp * n) & 1 == 0 {
                    continue;
                }
                for p in 0..n {
                    let v = m[(p, q)];
                    if v == 0.0 {
                        continue;
                    }
                    if let Some((s, dd)) = hop(d, p + sp * n, q + sp * n) {
                        push(dd, s * v);
                    }
                }
            }
        }
    })
}

/// Σ_pq m_pq Σ_γ a†_pγ a_qγ |state⟩ (unnormalized).
pub fn apply_dipole(basis: &SectorBasis, state: &[f64], m: &DipoleIntegrals, rho: Component) -> Vec<f64> {
    let n = basis.n_orbitals;
    let mat = m.component(rho);
    let mut out = vec![0.0; basis.dim()];
    for (j, &c) in state.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let d = basis.det(j);
        for sp in 0..2 {
            for q in 0..n {
                if d >> (q + sp * n) & 1 == 0 {
                    continue;
                }
                for p in 0..n {
                    let v = mat[(p, q)];
                    if v == 0.0 {
                        continue;
                    }
                    if let Some((s, dd)) = hop(d, p + sp * n, q + sp * n) {
                        out[basis.index_of(dd).unwrap()] += s * v * c;
                    }
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct EigenSolution {
    pub values: Vec<f64>,
    /// Columns are eigenvectors in sector ordering (dim × k).
    pub vectors: DMatrix<f64>,
}

impl EigenSolution {
    pub fn k(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, l: usize) -> Vec<f64> {
        self.vectors.column(l).iter().copied().collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EigenMethod {
    Auto,
    Dense,
    Lanczos,
}

pub fn dense_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(m.nrows(), m.nrows());
    for (c, &i) in order.iter().enumerate() {
        vecs.set_column(c, &eig.eigenvectors.column(i));
    }
    (values, vecs)
}

/// Residual norms ‖Hv − Ev‖ for each pair.
pub fn residuals(m: &SparseMatrix, sol: &EigenSolution) -> Vec<f64> {
    (0..sol.k())
        .map(|l| {
            let v = sol.vector(l);
            let hv = m.apply(&v);
            hv.iter().zip(&v).map(|(a, b)| (a - sol.values[l] * b).powi(2)).sum::<f64>().sqrt()
        })
        .collect()
}

pub fn eigensolve(m: &SparseMatrix, k: usize) -> Result<EigenSolution> {
    eigensolve_with(m, k, EigenMethod::Auto, &LanczosOptions::default())
}

pub fn eigensolve_with(m: &SparseMatrix, k: usize, method: EigenMethod, opts: &LanczosOptions) -> Result<EigenSolution> {
    let dim = m.dim();
    if k == 0 || k > dim {
        return Err(Error::Argument(format!("k={k} outside 1..={dim}")));
    }
    let dense = match method {
        EigenMethod::Auto => dim <= DENSE_LIMIT,
        EigenMethod::Dense => true,
        EigenMethod::Lanczos => false,
    };
    let sol = if dense {
        let (values, vecs) = dense_eigen(&m.to_dense());
        EigenSolution { values: values[..k].to_vec(), vectors: vecs.columns(0, k).into_owned() }
    } else {
        let mut o = opts.clone();
        o.want_vectors = true;
        let r = lanczos::block_lanczos(|x, y| m.matvec(x, y), dim, k, &o)?;
        EigenSolution { values: r.values, vectors: r.vectors.unwrap() }
    };
    let worst = residuals(m, &sol).into_iter().fold(0.0, f64::max);
    if worst > 1e-8 {
        return Err(Error::Numeric { msg: "eigenpair residual above 1e-8".into(), residual: worst });
    }
    Ok(sol)
}

/// Lowest `k` eigenvalues only (no vectors, no explicit residual check).
pub fn lowest_eigenvalues(m: &SparseMatrix, k: usize, opts: &LanczosOptions) -> Result<Vec<f64>> {
    if m.dim() <= DENSE_LIMIT {
        let (values, _) = dense_eigen(&m.to_dense());
        return Ok(values[..k.min(values.len())].to_vec());
    }
    let mut o = opts.clone();
    o.want_vectors = false;
    Ok(lanczos::block_lanczos(|x, y| m.matvec(x, y), m.dim(), k, &o)?.values)
}

#[derive(Clone, Debug)]
pub struct InitialState {
    /// (m̂_ρ − ⟨m̂_ρ⟩)|I⟩, normalized.
    pub vector: Vec<f64>,
    /// ‖(m̂_ρ − ⟨m̂_ρ⟩)|I⟩‖².
    pub norm2: f64,
    pub e_i: f64,
    pub ground: Vec<f64>,
}

pub fn initial_state_from_ground(
    basis: &SectorBasis,
    ground: &[f64],
    e_i: f64,
    m: &DipoleIntegrals,
    rho: Component,
) -> Result<InitialState> {
    let mut v = apply_dipole(basis, ground, m, rho);
    let expect: f64 = v.iter().zip(ground).map(|(a, b)| a * b).sum();
    for (x, g) in v.iter_mut().zip(ground) {
        *x -= expect * g;
    }
    let norm2: f64 = v.iter().map(|x| x * x).sum();
    if norm2 < 1e-14 {
        return Err(Error::Degenerate(format!(
            "dipole component {} annihilates the ground state (norm² {norm2:.2e})",
            rho.label()
        )));
    }
    let nrm = norm2.sqrt();
    v.iter_mut().for_each(|x| *x /= nrm);
    Ok(InitialState { vector: v, norm2, e_i, ground: ground.to_vec() })
}

pub fn initial_state(
    h: &IntegralSet,
    m: &DipoleIntegrals,
    rho: Component,
    sector: Option<(usize, usize)>,
) -> Result<(SectorBasis, InitialState)> {
    m.check_against(h)?;
    let (nu, nd) = match sector {
        Some(s) => s,
        None => h.sector()?,
    };
    let basis = SectorBasis::new(h.n_orbitals, nu, nd)?;
    let ham = build_sector_hamiltonian(h, &basis)?;
    let sol = eigensolve(&ham, 1)?;
    let st = initial_state_from_ground(&basis, &sol.vector(0), sol.values[0], m, rho)?;
    Ok((basis, st))
}

/// Discrete spectral measure of a dipole-excited state: excitation
/// energies E_F − E_I and weights |⟨F|m̃|I⟩|².
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralMeasure {
    pub excitation: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SpectralMeasure {
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Measure from eigenpairs: |⟨F|m̂|I⟩|² over F ≠ ground.
    pub fn from_eigen(
        basis: &SectorBasis,
        eigs: &EigenSolution,
        ground: usize,
        m: &DipoleIntegrals,
        rho: Component,
    ) -> Self {
        let g = eigs.vector(ground);
        let mg = apply_dipole(basis, &g, m, rho);
        let mut excitation = Vec::new();
        let mut weights = Vec::new();
        for f in 0..eigs.k() {
            if f == ground {
                continue;
            }
            let amp: f64 = eigs.vectors.column(f).iter().zip(&mg).map(|(a, b)| a * b).sum();
            excitation.push(eigs.values[f] - eigs.values[ground]);
            weights.push(amp * amp);
        }
        SpectralMeasure { excitation, weights }
    }

    /// Gauss-quadrature measure from a Krylov space of the (unnormalized)
    /// excited vector; exact when the Krylov space is invariant.
    pub fn from_krylov(ham: &SparseMatrix, excited: &[f64], e_i: f64, max_steps: usize) -> Result<Self> {
        let (nodes, weights) = lanczos::krylov_measure(|x, y| ham.matvec(x, y), excited, max_steps)?;
        Ok(SpectralMeasure { excitation: nodes.iter().map(|e| e - e_i).collect(), weights })
    }

    pub fn truncated_below(&self, max_excitation: f64) -> Self {
        let keep: Vec<usize> = (0..self.weights.len()).filter(|&i| self.excitation[i] <= max_excitation).collect();
        SpectralMeasure {
            excitation: keep.iter().map(|&i| self.excitation[i]).collect(),
            weights: keep.iter().map(|&i| self.weights[i]).collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReferenceSpectrum {
    pub omega: Vec<f64>,
    /// Σ_F w_F η / ((E_F − E_I − ω)² + η²).
    pub sigma: Vec<f64>,
    /// Normalized −Im G_ρ(ω) on the time-series convention: η σ / (π ‖m̃|I⟩‖²).
    pub normalized: Vec<f64>,
    pub eta: f64,
    pub component: Option<Component>,
}

pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

pub fn reference_spectrum(
    measure: &SpectralMeasure,
    eta: f64,
    omega: &[f64],
    component: Option<Component>,
) -> ReferenceSpectrum {
    let sigma: Vec<f64> = omega
        .iter()
        .map(|&w| {
            measure
                .excitation
                .iter()
                .zip(&measure.weights)
                .map(|(&e, &wt)| wt * eta / ((e - w).powi(2) + eta * eta))
                .sum()
        })
        .collect();
    let total = measure.total_weight();
    let normalized = sigma
        .iter()
        .map(|s| if total > 0.0 { eta * s / (std::f64::consts::PI * total) } else { 0.0 })
        .collect();
    ReferenceSpectrum { omega: omega.to_vec(), sigma, normalized, eta, component }
}

/// Optional 4πω/(3c) prefactor in atomic units.
pub fn physical_prefactor(omega: f64) -> f64 {
    const C_AU: f64 = 137.035_999_084;
    4.0 * std::f64::consts::PI * omega / (3.0 * C_AU)
}

/// (η/π)·(−Im ⟨ρ|(H − E_I − ω + iη)⁻¹|ρ⟩) from a full eigen-decomposition.
pub fn greens_reference(eigs: &EigenSolution, rho: &[f64], e_i: f64, eta: f64, omega: &[f64]) -> Vec<f64> {
    let overlaps: Vec<f64> = (0..eigs.k())
        .map(|f| eigs.vectors.column(f).iter().zip(rho).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    omega
        .iter()
        .map(|&w| {
            let g: Complex64 = overlaps
                .iter()
                .zip(&eigs.values)
                .map(|(&c, &e)| Complex64::new(c * c, 0.0) / Complex64::new(e - e_i - w, eta))
                .sum();
            -g.im * eta / std::f64::consts::PI
        })
        .collect()
}

pub fn write_spectrum_csv(spectra: &[ReferenceSpectrum]) -> String {
    let mut s = String::from("omega_hartree,intensity,component\n");
    for sp in spectra {
        let label = sp.component.map(|c| c.label()).unwrap_or("combined");
        for (w, v) in sp.omega.iter().zip(&sp.sigma) {
            s.push_str(&format!("{w:.10},{v:.12e},{label}\n"));
        }
    }
    s
}

pub fn eigenvalues_json(values: &[f64]) -> String {
    serde_json::to_string_pretty(&serde_json::json!({ "eigenvalues_hartree": values })).unwrap()
}
