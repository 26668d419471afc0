//! Gate programs for Trotterized CDF evolution.
//!
//! Register layout: qubits 0..N−1 hold spin-up orbitals, N..2N−1 spin-down.
//! Rz(θ) = diag(e^{−iθ/2}, e^{iθ/2}); Rzz(θ) = exp(−iθ/2 z⊗z).
//! Givens(p, q=p+1, θ) maps |1_p0_q⟩ → c|1_p0_q⟩ + s|0_p1_q⟩ and
//! |0_p1_q⟩ → c|0_p1_q⟩ − s|1_p0_q⟩, i.e. the single-particle rotation with
//! g_pp = g_qq = c, g_qp = s, g_pq = −s.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cdf::CdfHamiltonian;
use crate::error::{Error, Result};
use crate::exact::{one_body_operator, SectorBasis};
use crate::simulator::StateVector;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Gate {
    Givens { p: usize, q: usize, theta: f64 },
    Rz { q: usize, theta: f64 },
    Rzz { p: usize, q: usize, theta: f64 },
    Cnot { c: usize, t: usize },
    H { q: usize },
    Sdg { q: usize },
    X { q: usize },
    GlobalPhase { phi: f64 },
}

impl Gate {
    pub fn qubits(&self) -> Vec<usize> {
        match *self {
            Gate::Givens { p, q, .. } | Gate::Rzz { p, q, .. } => vec![p, q],
            Gate::Cnot { c, t } => vec![c, t],
            Gate::Rz { q, .. } | Gate::H { q } | Gate::Sdg { q } | Gate::X { q } => vec![q],
            Gate::GlobalPhase { .. } => vec![],
        }
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self, Gate::Rz { .. } | Gate::Rzz { .. } | Gate::GlobalPhase { .. })
    }

    fn shifted(self, k: usize) -> Gate {
        match self {
            Gate::Givens { p, q, theta } => Gate::Givens { p: p + k, q: q + k, theta },
            Gate::Rz { q, theta } => Gate::Rz { q: q + k, theta },
            Gate::Rzz { p, q, theta } => Gate::Rzz { p: p + k, q: q + k, theta },
            Gate::Cnot { c, t } => Gate::Cnot { c: c + k, t: t + k },
            Gate::H { q } => Gate::H { q: q + k },
            Gate::Sdg { q } => Gate::Sdg { q: q + k },
            Gate::X { q } => Gate::X { q: q + k },
            g @ Gate::GlobalPhase { .. } => g,
        }
    }
}

/// Gate counts by kind.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub givens: usize,
    pub rz: usize,
    pub rzz: usize,
    pub cnot: usize,
    pub h: usize,
    pub sdg: usize,
    pub x: usize,
    pub global_phase: usize,
}

impl Tally {
    fn add(&mut self, g: &Gate) {
        match g {
            Gate::Givens { .. } => self.givens += 1,
            Gate::Rz { .. } => self.rz += 1,
            Gate::Rzz { .. } => self.rzz += 1,
            Gate::Cnot { .. } => self.cnot += 1,
            Gate::H { .. } => self.h += 1,
            Gate::Sdg { .. } => self.sdg += 1,
            Gate::X { .. } => self.x += 1,
            Gate::GlobalPhase { .. } => self.global_phase += 1,
        }
    }

    /// Non-Clifford rotations, counting each Givens gate as two (XX+YY pair).
    pub fn rotations(&self) -> usize {
        2 * self.givens + self.rz + self.rzz
    }

    pub fn cliffords(&self) -> usize {
        self.cnot + self.h + self.sdg + self.x
    }
}

/// Block structure of an emitted Trotter program.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockCounts {
    pub rotation_blocks: usize,
    pub one_body_blocks: usize,
    pub two_body_blocks: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateProgram {
    pub n_qubits: usize,
    gates: Vec<Gate>,
    tally: Tally,
    pub blocks: BlockCounts,
}

impl GateProgram {
    pub fn new(n_qubits: usize) -> Self {
        GateProgram { n_qubits, gates: Vec::new(), tally: Tally::default(), blocks: BlockCounts::default() }
    }

    pub fn push(&mut self, g: Gate) {
        let qs = g.qubits();
        debug_assert!(qs.iter().all(|&q| q < self.n_qubits), "{g:?} outside {} qubits", self.n_qubits);
        debug_assert!(qs.len() < 2 || qs[0] != qs[1]);
        self.tally.add(&g);
        self.gates.push(g);
    }

    pub fn append(&mut self, other: &GateProgram) {
        for g in &other.gates {
            self.push(*g);
        }
        self.blocks.rotation_blocks += other.blocks.rotation_blocks;
        self.blocks.one_body_blocks += other.blocks.one_body_blocks;
        self.blocks.two_body_blocks += other.blocks.two_body_blocks;
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn tally(&self) -> Tally {
        self.tally
    }

    pub fn recount(&self) -> Tally {
        let mut t = Tally::default();
        self.gates.iter().for_each(|g| t.add(g));
        t
    }

    /// Checks register bounds and distinct operands.
    pub fn validate(&self) -> Result<()> {
        for (i, g) in self.gates.iter().enumerate() {
            let qs = g.qubits();
            if qs.iter().any(|&q| q >= self.n_qubits) || (qs.len() == 2 && qs[0] == qs[1]) {
                return Err(Error::Argument(format!("gate {i} ({g:?}) invalid for {} qubits", self.n_qubits)));
            }
            if let Gate::Givens { p, q, .. } = g {
                if *q != p + 1 {
                    return Err(Error::Argument(format!("gate {i}: givens needs adjacent qubits")));
                }
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("qubits {}\n", self.n_qubits);
        for g in &self.gates {
            let _ = match *g {
                Gate::Givens { p, q, theta } => writeln!(s, "givens {p} {q} {theta:e}"),
                Gate::Rz { q, theta } => writeln!(s, "rz {q} {theta:e}"),
                Gate::Rzz { p, q, theta } => writeln!(s, "rzz {p} {q} {theta:e}"),
                Gate::Cnot { c, t } => writeln!(s, "cnot {c} {t}"),
                Gate::H { q } => writeln!(s, "h {q}"),
                Gate::Sdg { q } => writeln!(s, "sdg {q}"),
                Gate::X { q } => writeln!(s, "x {q}"),
                Gate::GlobalPhase { phi } => writeln!(s, "phase {phi:e}"),
            };
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::Format("empty gate program".into()))?;
        let n = match header.split_whitespace().collect::<Vec<_>>()[..] {
            ["qubits", n] => n.parse().map_err(|_| Error::Format(format!("bad header `{header}`")))?,
            _ => return Err(Error::Format(format!("bad header `{header}`"))),
        };
        let mut prog = GateProgram::new(n);
        for line in lines {
            let tok: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Format(format!("bad gate line `{line}`"));
            let u = |i: usize| tok.get(i).and_then(|t| t.parse::<usize>().ok()).ok_or_else(bad);
            let f = |i: usize| tok.get(i).and_then(|t| t.parse::<f64>().ok()).ok_or_else(bad);
            let g = match tok[0] {
                "givens" if tok.len() == 4 => Gate::Givens { p: u(1)?, q: u(2)?, theta: f(3)? },
                "rz" if tok.len() == 3 => Gate::Rz { q: u(1)?, theta: f(2)? },
                "rzz" if tok.len() == 4 => Gate::Rzz { p: u(1)?, q: u(2)?, theta: f(3)? },
                "cnot" if tok.len() == 3 => Gate::Cnot { c: u(1)?, t: u(2)? },
                "h" if tok.len() == 2 => Gate::H { q: u(1)? },
                "sdg" if tok.len() == 2 => Gate::Sdg { q: u(1)? },
                "x" if tok.len() == 2 => Gate::X { q: u(1)? },
                "phase" if tok.len() == 2 => Gate::GlobalPhase { phi: f(1)? },
                _ => return Err(bad()),
            };
            prog.gates.push(g);
            prog.tally.add(&g);
        }
        prog.validate()?;
        Ok(prog)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Givens {
    pub p: usize,
    pub q: usize,
    pub theta: f64,
}

/// U = g_1 ⋯ g_m · diag(signs).
#[derive(Clone, Debug, PartialEq)]
pub struct GivensDecomposition {
    pub rotations: Vec<Givens>,
    pub signs: Vec<f64>,
}

pub fn givens_matrix(n: usize, g: &Givens) -> DMatrix<f64> {
    let mut m = DMatrix::identity(n, n);
    let (s, c) = g.theta.sin_cos();
    m[(g.p, g.p)] = c;
    m[(g.q, g.q)] = c;
    m[(g.q, g.p)] = s;
    m[(g.p, g.q)] = -s;
    m
}

pub fn givens_compose(n: usize, dec: &GivensDecomposition) -> DMatrix<f64> {
    let mut m = DMatrix::from_diagonal(&DVector::from_vec(dec.signs.clone()));
    for g in dec.rotations.iter().rev() {
        let (s, c) = g.theta.sin_cos();
        for j in 0..n {
            let (a, b) = (m[(g.p, j)], m[(g.q, j)]);
            m[(g.p, j)] = c * a - s * b;
            m[(g.q, j)] = s * a + c * b;
        }
    }
    m
}

/// Adjacent-pair Givens factorization, eliminating each column bottom-up.
pub fn givens_decompose(u: &DMatrix<f64>) -> Result<GivensDecomposition> {
    let n = u.nrows();
    if u.ncols() != n {
        return Err(Error::Argument("givens_decompose needs a square matrix".into()));
    }
    let orth = (u.transpose() * u - DMatrix::identity(n, n)).amax();
    if orth > 1e-8 {
        return Err(Error::Argument(format!("matrix is not orthogonal (defect {orth:.2e})")));
    }
    let mut m = u.clone();
    let mut rotations = Vec::new();
    for j in 0..n.saturating_sub(1) {
        for i in (j + 1..n).rev() {
            let (a, b) = (m[(i - 1, j)], m[(i, j)]);
            let theta = b.atan2(a);
            if theta == 0.0 {
                continue;
            }
            let (s, c) = theta.sin_cos();
            for k in 0..n {
                let (x, y) = (m[(i - 1, k)], m[(i, k)]);
                m[(i - 1, k)] = c * x + s * y;
                m[(i, k)] = -s * x + c * y;
            }
            m[(i, j)] = 0.0;
            rotations.push(Givens { p: i - 1, q: i, theta });
        }
    }
    let signs = (0..n).map(|k| if m[(k, k)] < 0.0 { -1.0 } else { 1.0 }).collect();
    Ok(GivensDecomposition { rotations, signs })
}

/// Orthogonal matrix from the QR factorization of a uniform random matrix.
pub fn random_orthogonal<R: Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let qr = a.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for k in 0..n {
        if r[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
        }
    }
    q
}

/// Emits the many-body rotation of a det(+1) single-particle matrix on both spin blocks.
fn emit_rotation(prog: &mut GateProgram, rots: &[Givens], n: usize, adjoint: bool) {
    let mut emit = |g: &Givens, theta: f64| {
        for off in [0, n] {
            prog.push(Gate::Givens { p: g.p + off, q: g.q + off, theta });
        }
    };
    if adjoint {
        rots.iter().for_each(|g| emit(g, -g.theta));
    } else {
        rots.iter().rev().for_each(|g| emit(g, g.theta));
    }
    prog.blocks.rotation_blocks += 1;
}

/// Per-Hamiltonian rotation data with a cache of merged rotations.
pub struct Compiler {
    pub n: usize,
    rot: Vec<DMatrix<f64>>,
    dec: Vec<Vec<Givens>>,
    z0: Vec<f64>,
    z: Vec<DMatrix<f64>>,
    shift: f64,
    merged: Mutex<HashMap<(usize, usize), Vec<Givens>>>,
}

fn proper(u: &DMatrix<f64>) -> DMatrix<f64> {
    let mut u = u.clone();
    if u.determinant() < 0.0 {
        let n = u.ncols();
        u.column_mut(n - 1).neg_mut();
    }
    u
}

impl Compiler {
    pub fn new(cdf: &CdfHamiltonian) -> Result<Self> {
        let mut rot = vec![proper(&cdf.u0)];
        rot.extend(cdf.fragments.iter().map(|f| proper(&f.u)));
        let dec = rot.iter().map(|u| givens_decompose(u).map(|d| d.rotations)).collect::<Result<_>>()?;
        Ok(Compiler {
            n: cdf.n_orbitals,
            rot,
            dec,
            z0: cdf.z0.clone(),
            z: cdf.fragments.iter().map(|f| f.z.clone()).collect(),
            shift: cdf.scalar_shift,
            merged: Mutex::new(HashMap::new()),
        })
    }

    pub fn n_fragments(&self) -> usize {
        self.rot.len()
    }

    fn merged_rotation(&self, from: usize, to: usize) -> Vec<Givens> {
        let mut cache = self.merged.lock().unwrap();
        cache
            .entry((from, to))
            .or_insert_with(|| {
                let m = self.rot[to].transpose() * &self.rot[from];
                givens_decompose(&m).expect("product of rotations is orthogonal").rotations
            })
            .clone()
    }

    /// Diagonal block of fragment ℓ at time step dt.
    fn emit_diagonal(&self, prog: &mut GateProgram, ell: usize, dt: f64) {
        let n = self.n;
        if ell == 0 {
            for k in 0..n {
                for off in [0, n] {
                    prog.push(Gate::Rz { q: k + off, theta: -dt * self.z0[k] });
                }
            }
            prog.push(Gate::GlobalPhase { phi: -dt * self.shift });
            prog.blocks.one_body_blocks += 1;
        } else {
            let z = &self.z[ell - 1];
            for a in 0..2 * n {
                for b in a + 1..2 * n {
                    prog.push(Gate::Rzz { p: a, q: b, theta: dt * z[(a % n, b % n)] / 2.0 });
                }
            }
            prog.blocks.two_body_blocks += 1;
        }
    }

    /// Program for a sequence of (fragment, dt) blocks.
    pub fn program(&self, blocks: &[(usize, f64)], merge: bool) -> GateProgram {
        let mut prog = GateProgram::new(2 * self.n);
        if blocks.is_empty() {
            return prog;
        }
        if !merge {
            for &(ell, dt) in blocks {
                emit_rotation(&mut prog, &self.dec[ell], self.n, true);
                self.emit_diagonal(&mut prog, ell, dt);
                emit_rotation(&mut prog, &self.dec[ell], self.n, false);
            }
            return prog;
        }
        emit_rotation(&mut prog, &self.dec[blocks[0].0], self.n, true);
        for (i, &(ell, dt)) in blocks.iter().enumerate() {
            self.emit_diagonal(&mut prog, ell, dt);
            if let Some(&(next, _)) = blocks.get(i + 1) {
                if next != ell {
                    emit_rotation(&mut prog, &self.merged_rotation(ell, next), self.n, false);
                }
            }
        }
        emit_rotation(&mut prog, &self.dec[blocks.last().unwrap().0], self.n, false);
        prog
    }
}

#[derive(Clone, Debug)]
pub struct TrotterPlan {
    pub cdf: CdfHamiltonian,
    pub delta: f64,
    pub order: u8,
    pub randomized: bool,
    pub seed: u64,
    pub merge_rotations: bool,
}

impl TrotterPlan {
    pub fn new(cdf: CdfHamiltonian, delta: f64, order: u8) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::Argument("Trotter step must be positive".into()));
        }
        if order != 1 && order != 2 {
            return Err(Error::Argument(format!("unsupported Trotter order {order}")));
        }
        Ok(TrotterPlan { cdf, delta, order, randomized: false, seed: 0, merge_rotations: true })
    }

    pub fn randomized(mut self, seed: u64) -> Self {
        self.randomized = true;
        self.seed = seed;
        self
    }

    pub fn merged(mut self, merge: bool) -> Self {
        self.merge_rotations = merge;
        self
    }

    pub fn stream(&self) -> StepStream {
        StepStream {
            n_fragments: self.cdf.l() + 1,
            order: self.order,
            delta: self.delta,
            randomized: self.randomized,
            rng: ChaCha8Rng::seed_from_u64(self.seed),
        }
    }
}

/// Blocks of one step for fragment order `perm`.
pub fn step_blocks(order: u8, perm: &[usize], delta: f64) -> Vec<(usize, f64)> {
    match order {
        1 => perm.iter().map(|&l| (l, delta)).collect(),
        _ => {
            let (last, head) = perm.split_last().expect("at least one fragment");
            let mut out: Vec<(usize, f64)> = head.iter().map(|&l| (l, delta / 2.0)).collect();
            out.push((*last, delta));
            out.extend(head.iter().rev().map(|&l| (l, delta / 2.0)));
            out
        }
    }
}

/// Seeded source of per-step fragment orders.
pub struct StepStream {
    n_fragments: usize,
    order: u8,
    delta: f64,
    randomized: bool,
    rng: ChaCha8Rng,
}

impl StepStream {
    pub fn next_perm(&mut self) -> Vec<usize> {
        let mut perm: Vec<usize> = (0..self.n_fragments).collect();
        if self.randomized {
            perm.shuffle(&mut self.rng);
        }
        perm
    }

    pub fn next_blocks(&mut self, steps: usize) -> Vec<(usize, f64)> {
        (0..steps).flat_map(|_| step_blocks(self.order, &self.next_perm(), self.delta)).collect()
    }
}

/// Single fragment ℓ evolved for Δ_eff: rotation†, diagonal phases, rotation.
pub fn fragment_program(cdf: &CdfHamiltonian, ell: usize, delta_eff: f64) -> Result<GateProgram> {
    if ell > cdf.l() {
        return Err(Error::Argument(format!("fragment {ell} out of range 0..={}", cdf.l())));
    }
    Ok(Compiler::new(cdf)?.program(&[(ell, delta_eff)], false))
}

/// One Trotter step (first draw of the plan's stream).
pub fn build_step(plan: &TrotterPlan) -> Result<GateProgram> {
    build_evolution(plan, 1)
}

/// `steps` consecutive Trotter steps as one program.
pub fn build_evolution(plan: &TrotterPlan, steps: usize) -> Result<GateProgram> {
    let c = Compiler::new(&plan.cdf)?;
    let blocks = plan.stream().next_blocks(steps);
    Ok(c.program(&blocks, plan.merge_rotations))
}

/// Double-phase controlled version with the ancilla at qubit 0: every
/// diagonal rotation is conjugated by CNOTs from the ancilla and negated,
/// the global phase becomes an ancilla Rz(2φ). Branch |1⟩ evolves by the
/// program, branch |0⟩ by the product of per-block inverses.
pub fn controlled_program(prog: &GateProgram) -> GateProgram {
    let mut out = GateProgram::new(prog.n_qubits + 1);
    for g in prog.gates() {
        match g.shifted(1) {
            Gate::Rz { q, theta } => {
                out.push(Gate::Cnot { c: 0, t: q });
                out.push(Gate::Rz { q, theta: -theta });
                out.push(Gate::Cnot { c: 0, t: q });
            }
            Gate::Rzz { p, q, theta } => {
                out.push(Gate::Cnot { c: 0, t: p });
                out.push(Gate::Rzz { p, q, theta: -theta });
                out.push(Gate::Cnot { c: 0, t: p });
            }
            Gate::GlobalPhase { phi } => out.push(Gate::Rz { q: 0, theta: 2.0 * phi }),
            other => out.push(other),
        }
    }
    out.blocks = prog.blocks;
    out
}

pub fn controlled_step(plan: &TrotterPlan) -> Result<GateProgram> {
    Ok(controlled_program(&build_step(plan)?))
}

/// Dense fragment Hamiltonians H_0, H_1, …, H_L in a sector basis, built
/// from rotated number operators (independent of the gate construction).
pub fn dense_fragments(cdf: &CdfHamiltonian, basis: &SectorBasis) -> Vec<DMatrix<f64>> {
    let n = cdf.n_orbitals;
    let number = |u: &DMatrix<f64>| -> Vec<DMatrix<f64>> {
        (0..n)
            .map(|k| {
                let col = u.column(k);
                one_body_operator(basis, &(&col * col.transpose()), None).to_dense()
            })
            .collect()
    };
    let dim = basis.dim();
    let eye = DMatrix::<f64>::identity(dim, dim);
    let n0 = number(&cdf.u0);
    let mut h0 = &eye * (cdf.scalar_shift - cdf.z0.iter().sum::<f64>());
    for k in 0..n {
        h0 += &n0[k] * cdf.z0[k];
    }
    let mut out = vec![h0];
    for f in &cdf.fragments {
        let nk = number(&f.u);
        let mut h = &eye * (0.5 * f.z.sum() - 0.25 * f.z.trace());
        for k in 0..n {
            let rs: f64 = f.z.row(k).sum();
            h -= &nk[k] * rs;
            for l in 0..n {
                if f.z[(k, l)] != 0.0 {
                    h += (&nk[k] * &nk[l]) * (0.5 * f.z[(k, l)]);
                }
            }
        }
        out.push(h);
    }
    out
}

fn commutator(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a * b - b * a
}

/// Third-order coefficient of the symmetric product with fragments listed
/// outermost first: U₂(Δ) = exp(−iΔ(H − Δ²Y₃) + O(Δ⁵)) with
/// Y₃ = Σ_j [I_j,[I_j,H_j]]/12 − [H_j,[H_j,I_j]]/24, I_j = Σ_{h>j} H_h.
pub fn dense_y3(fragments: &[DMatrix<f64>]) -> DMatrix<f64> {
    let dim = fragments[0].nrows();
    let mut y = DMatrix::zeros(dim, dim);
    let mut inner = DMatrix::zeros(dim, dim);
    for h in fragments.iter().rev() {
        y += commutator(&inner, &commutator(&inner, h)) / 12.0 - commutator(h, &commutator(h, &inner)) / 24.0;
        inner += h;
    }
    y
}

/// Embeds a sector vector in a 2N-qubit register (plus `offset` low qubits left at |0⟩).
pub fn embed(basis: &SectorBasis, v: &[f64], offset: usize) -> StateVector {
    let mut st = StateVector::zero(2 * basis.n_orbitals + offset);
    st.amplitudes_mut()[0] = Complex64::new(0.0, 0.0);
    for (i, &c) in v.iter().enumerate() {
        st.amplitudes_mut()[(basis.det(i) as usize) << offset] = Complex64::new(c, 0.0);
    }
    st
}

fn inner(a: &StateVector, b: &StateVector) -> Complex64 {
    a.amplitudes().iter().zip(b.amplitudes()).map(|(x, y)| x.conj() * y).sum()
}

/// |⟨ψ|(U₂ⁿ(Δ) − U₂⁴ⁿ(Δ/4))|ψ⟩| / Δ² with nΔ = 1, scaled by 16/15 so the
/// leading term is |⟨Y₃⟩| rather than (1 − 1/16)|⟨Y₃⟩|.
pub fn estimate_y3(cdf: &CdfHamiltonian, basis: &SectorBasis, state: &[f64], delta: f64, n: usize) -> Result<f64> {
    if ((n as f64) * delta - 1.0).abs() > 1e-9 {
        return Err(Error::Argument(format!("estimate_y3 needs nΔ = 1, got {}", n as f64 * delta)));
    }
    let psi = embed(basis, state, 0);
    let c = Compiler::new(cdf)?;
    let run = |d: f64, steps: usize| -> Result<StateVector> {
        let plan = TrotterPlan::new(cdf.clone(), d, 2)?;
        let blocks = plan.stream().next_blocks(steps);
        let mut st = psi.clone();
        st.restrict_to_support();
        st.apply_program(&c.program(&blocks, true))?;
        Ok(st)
    };
    let (a, b) = rayon::join(|| run(delta, n), || run(delta / 4.0, 4 * n));
    let diff = inner(&psi, &a?) - inner(&psi, &b?);
    Ok(diff.norm() / (delta * delta) * 16.0 / 15.0)
}

/// Dense one-step unitary in the sector basis, built by simulating the program on each basis vector.
pub fn dense_step_unitary(plan: &TrotterPlan, basis: &SectorBasis) -> Result<DMatrix<Complex64>> {
    if basis.n_orbitals > 6 {
        return Err(Error::Capacity("dense step unitary limited to 12 spin orbitals".into()));
    }
    let prog = build_step(plan)?;
    let dim = basis.dim();
    let mut u = DMatrix::zeros(dim, dim);
    let mut e = vec![0.0; dim];
    for j in 0..dim {
        e.iter_mut().for_each(|x| *x = 0.0);
        e[j] = 1.0;
        let mut st = embed(basis, &e, 0);
        st.apply_program(&prog)?;
        for i in 0..dim {
            u[(i, j)] = st.amplitudes()[basis.det(i) as usize];
        }
    }
    Ok(u)
}

/// Eigenphase of the step unitary that continues eigenvalue `l` of the CDF Hamiltonian.
pub fn trotter_eigenphase(plan: &TrotterPlan, basis: &SectorBasis, l: usize) -> Result<f64> {
    let frags = dense_fragments(&plan.cdf, basis);
    let h: DMatrix<f64> = frags.iter().fold(DMatrix::zeros(basis.dim(), basis.dim()), |a, b| a + b);
    let (vals, vecs) = crate::exact::dense_eigen(&h);
    let e_l = *vals.get(l).ok_or_else(|| Error::Argument(format!("eigen index {l} out of range")))?;
    let u = dense_step_unitary(plan, basis)?;
    let target: DVector<Complex64> = vecs.column(l).map(|x| Complex64::new(x, 0.0));
    let mu = target.dotc(&(&u * &target));
    let (lambda, overlap) = inverse_iteration(&u, &target, mu)?;
    if overlap < 0.7 {
        return Err(Error::Degenerate(format!("eigenvector overlap {overlap:.3} below 0.7 for state {l}")));
    }
    let dt = plan.delta;
    let mut d = -lambda.arg() - e_l * dt;
    d -= (d / (2.0 * std::f64::consts::PI)).round() * 2.0 * std::f64::consts::PI;
    Ok(e_l + d / dt)
}

fn inverse_iteration(u: &DMatrix<Complex64>, start: &DVector<Complex64>, mu: Complex64) -> Result<(Complex64, f64)> {
    let dim = u.nrows();
    let mut shifted = u.clone();
    // tiny offset keeps the factorization regular when μ is an exact eigenvalue
    let mu = mu + Complex64::new(1e-13, 1e-13);
    for i in 0..dim {
        shifted[(i, i)] -= mu;
    }
    let lu = shifted.lu();
    let mut x = start.clone();
    for _ in 0..8 {
        x = lu.solve(&x).ok_or_else(|| Error::Numeric { msg: "singular shifted unitary".into(), residual: f64::NAN })?;
        let nrm = x.norm();
        x /= Complex64::new(nrm, 0.0);
    }
    let lambda = x.dotc(&(u * &x));
    let overlap = start.dotc(&x).norm() / start.norm();
    Ok((lambda, overlap))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_rotation() {
        let d = givens_decompose(&DMatrix::identity(4, 4)).unwrap();
        assert!(d.rotations.is_empty());
        assert_eq!(d.signs, vec![1.0; 4]);
        let th: f64 = 0.3;
        let r = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
        let d = givens_decompose(&r).unwrap();
        assert_eq!(d.rotations.len(), 1);
        assert_eq!((d.rotations[0].p, d.rotations[0].q), (0, 1));
        assert!((d.rotations[0].theta - th).abs() < 1e-15);
    }

    #[test]
    fn det_minus_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut u = random_orthogonal(6, &mut rng);
        if u.determinant() > 0.0 {
            u.column_mut(2).neg_mut();
        }
        let d = givens_decompose(&u).unwrap();
        assert!(d.rotations.len() <= 15);
        assert_eq!(d.signs.iter().filter(|&&s| s < 0.0).count(), 1);
        assert!((givens_compose(6, &d) - u).amax() < 1e-10);
    }

    #[test]
    fn non_orthogonal_rejected() {
        assert!(givens_decompose(&DMatrix::from_element(2, 2, 1.0)).is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut p = GateProgram::new(3);
        p.push(Gate::Givens { p: 0, q: 1, theta: 0.1 });
        p.push(Gate::Rz { q: 2, theta: -1.0 / 3.0 });
        p.push(Gate::Rzz { p: 0, q: 2, theta: 2.5e-7 });
        p.push(Gate::Cnot { c: 1, t: 0 });
        p.push(Gate::H { q: 0 });
        p.push(Gate::Sdg { q: 1 });
        p.push(Gate::X { q: 2 });
        p.push(Gate::GlobalPhase { phi: 3.0 });
        let q = GateProgram::from_text(&p.to_text()).unwrap();
        assert_eq!(p.gates(), q.gates());
        assert_eq!(q.tally(), q.recount());
        assert!(GateProgram::from_text("qubits 2\nrz 5 0.1\n").is_err());
        assert!(GateProgram::from_text("qubits 2\nfoo 1\n").is_err());
    }

    #[test]
    fn order_two_blocks() {
        let b = step_blocks(2, &[0, 1, 2], 0.2);
        assert_eq!(b, vec![(0, 0.1), (1, 0.1), (2, 0.2), (1, 0.1), (0, 0.1)]);
        assert_eq!(step_blocks(2, &[0], 0.2), vec![(0, 0.2)]);
        assert_eq!(step_blocks(1, &[1, 0], 0.2), vec![(1, 0.2), (0, 0.2)]);
    }
}
