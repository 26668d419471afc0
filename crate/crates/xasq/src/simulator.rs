//! Statevector engine for gate programs.
//!
//! Amplitudes are stored densely. A state may carry a support list (the
//! basis indices of a particle-number sector); number-conserving kernels
//! then touch only those indices. Gates that leave the sector drop it.

use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::SectorBasis;
use crate::trotter::{controlled_program, embed, Compiler, Gate, GateProgram, TrotterPlan};

const PAR_MIN: usize = 1 << 14;
pub const SHOT_QUBIT_CAP: usize = 14;

#[derive(Clone, Copy)]
struct Ptr(*mut Complex64);
unsafe impl Send for Ptr {}
unsafe impl Sync for Ptr {}

impl Ptr {
    /// Caller guarantees `i` is in bounds and not written concurrently.
    #[inline]
    unsafe fn at(self, i: usize) -> *mut Complex64 {
        self.0.add(i)
    }
}

#[derive(Clone, Debug)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
    support: Option<Arc<Vec<usize>>>,
}

/// Consecutive diagonal gates folded into phase(x) = c0 + Σ lin_q b_q + Σ quad_pq b_p b_q.
#[derive(Clone, Debug)]
struct DiagBlock {
    c0: f64,
    lin: Vec<(usize, f64)>,
    quad: Vec<(usize, usize, f64)>,
}

impl DiagBlock {
    fn new(n: usize, gates: &[Gate]) -> Self {
        let mut c0 = 0.0;
        let mut lin = vec![0.0; n];
        let mut quad = std::collections::BTreeMap::new();
        for g in gates {
            match *g {
                Gate::Rz { q, theta } => {
                    c0 -= theta / 2.0;
                    lin[q] += theta;
                }
                Gate::Rzz { p, q, theta } => {
                    c0 -= theta / 2.0;
                    lin[p] += theta;
                    lin[q] += theta;
                    *quad.entry((p.min(q), p.max(q))).or_insert(0.0) -= 2.0 * theta;
                }
                Gate::GlobalPhase { phi } => c0 += phi,
                _ => unreachable!(),
            }
        }
        DiagBlock {
            c0,
            lin: lin.into_iter().enumerate().filter(|&(_, v)| v != 0.0).collect(),
            quad: quad.into_iter().filter(|&(_, v)| v != 0.0).map(|((p, q), v)| (p, q, v)).collect(),
        }
    }

    #[inline]
    fn phase(&self, x: usize) -> f64 {
        let mut ph = self.c0;
        for &(q, v) in &self.lin {
            if x >> q & 1 == 1 {
                ph += v;
            }
        }
        for &(p, q, v) in &self.quad {
            if x >> p & x >> q & 1 == 1 {
                ph += v;
            }
        }
        ph
    }
}

#[derive(Clone, Debug)]
enum Op {
    Givens { bp: usize, bq: usize, c: f64, s: f64 },
    Diag(DiagBlock),
    Cnot { c: usize, t: usize },
    H { q: usize },
    Sdg { q: usize },
    X { q: usize },
}

/// A program lowered to kernels, reusable across states.
#[derive(Clone, Debug)]
pub struct CompiledProgram {
    n_qubits: usize,
    ops: Vec<Op>,
}

impl CompiledProgram {
    pub fn new(prog: &GateProgram) -> Self {
        let mut ops = Vec::new();
        let gates = prog.gates();
        let mut i = 0;
        while i < gates.len() {
            if gates[i].is_diagonal() {
                let j = (i..gates.len()).find(|&k| !gates[k].is_diagonal()).unwrap_or(gates.len());
                ops.push(Op::Diag(DiagBlock::new(prog.n_qubits, &gates[i..j])));
                i = j;
                continue;
            }
            ops.push(match gates[i] {
                Gate::Givens { p, q, theta } => {
                    let (s, c) = theta.sin_cos();
                    Op::Givens { bp: 1 << p, bq: 1 << q, c, s }
                }
                Gate::Cnot { c, t } => Op::Cnot { c, t },
                Gate::H { q } => Op::H { q },
                Gate::Sdg { q } => Op::Sdg { q },
                Gate::X { q } => Op::X { q },
                _ => unreachable!(),
            });
            i += 1;
        }
        CompiledProgram { n_qubits: prog.n_qubits, ops }
    }
}

/// Indices in 0..2^n with bit `set` on and bit `clear` off, mapped from a compact counter.
#[inline]
fn insert_bits(i: usize, lo: usize, hi: usize) -> usize {
    let a = (i & ((1 << lo) - 1)) | ((i >> lo) << (lo + 1));
    (a & ((1 << hi) - 1)) | ((a >> hi) << (hi + 1))
}

impl StateVector {
    pub fn zero(n_qubits: usize) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        StateVector { n_qubits, amps, support: None }
    }

    pub fn from_amplitudes(n_qubits: usize, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != 1 << n_qubits {
            return Err(Error::Argument(format!("{} amplitudes for {n_qubits} qubits", amps.len())));
        }
        Ok(StateVector { n_qubits, amps, support: None })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    /// Restricts kernels to the sector's basis states (system qubits starting at `offset`;
    /// low ancilla qubits range freely).
    pub fn restrict_to_sector(&mut self, basis: &SectorBasis, offset: usize) {
        let mut sup = Vec::with_capacity(basis.dim() << offset);
        for i in 0..basis.dim() {
            let d = (basis.det(i) as usize) << offset;
            for a in 0..1usize << offset {
                sup.push(d | a);
            }
        }
        sup.sort_unstable();
        self.support = Some(Arc::new(sup));
    }

    /// Restricts kernels to states sharing the per-spin-block occupation of
    /// the current nonzero amplitudes (2N-qubit register, no ancilla).
    pub fn restrict_to_support(&mut self) {
        let n = self.n_qubits / 2;
        let mask = (1usize << n) - 1;
        let Some(first) = self.amps.iter().position(|a| *a != Complex64::new(0.0, 0.0)) else { return };
        let key = |x: usize| ((x & mask).count_ones(), (x >> n).count_ones());
        let k = key(first);
        if self.amps.iter().enumerate().any(|(x, a)| *a != Complex64::new(0.0, 0.0) && key(x) != k) {
            return;
        }
        let sup: Vec<usize> = (0..self.amps.len()).filter(|&x| key(x) == k).collect();
        self.support = Some(Arc::new(sup));
    }

    pub fn clear_support(&mut self) {
        self.support = None;
    }

    pub fn apply_program(&mut self, prog: &GateProgram) -> Result<()> {
        if prog.n_qubits != self.n_qubits {
            return Err(Error::Argument(format!(
                "program width {} differs from state width {}",
                prog.n_qubits, self.n_qubits
            )));
        }
        self.apply_compiled(&CompiledProgram::new(prog))
    }

    pub fn apply_compiled(&mut self, prog: &CompiledProgram) -> Result<()> {
        if prog.n_qubits != self.n_qubits {
            return Err(Error::Argument("compiled program width differs from state width".into()));
        }
        for op in &prog.ops {
            self.apply_op(op);
        }
        Ok(())
    }

    fn apply_op(&mut self, op: &Op) {
        match op {
            Op::Givens { bp, bq, c, s } => self.givens(*bp, *bq, *c, *s),
            Op::Diag(d) => self.diag(d),
            Op::Cnot { c, t } => {
                self.support = None;
                let (bc, bt) = (1usize << c, 1usize << t);
                let ptr = Ptr(self.amps.as_mut_ptr());
                let (lo, hi) = ((*c).min(*t), (*c).max(*t));
                let n = self.amps.len() >> 2;
                let body = |i: usize| {
                    let x = insert_bits(i, lo, hi) | bc;
                    // SAFETY: x and x|bt are distinct for each i and unique across i
                    unsafe { std::ptr::swap(ptr.at(x), ptr.at(x | bt)) };
                };
                if n >= PAR_MIN {
                    (0..n).into_par_iter().for_each(body);
                } else {
                    (0..n).for_each(body);
                }
            }
            Op::H { q } => {
                self.support = None;
                let b = 1usize << q;
                let r = std::f64::consts::FRAC_1_SQRT_2;
                for x in 0..self.amps.len() {
                    if x & b == 0 {
                        let (a0, a1) = (self.amps[x], self.amps[x | b]);
                        self.amps[x] = (a0 + a1) * r;
                        self.amps[x | b] = (a0 - a1) * r;
                    }
                }
            }
            Op::Sdg { q } => {
                let b = 1usize << q;
                for x in 0..self.amps.len() {
                    if x & b != 0 {
                        self.amps[x] *= Complex64::new(0.0, -1.0);
                    }
                }
            }
            Op::X { q } => {
                self.support = None;
                let b = 1usize << q;
                for x in 0..self.amps.len() {
                    if x & b == 0 {
                        self.amps.swap(x, x | b);
                    }
                }
            }
        }
    }

    fn givens(&mut self, bp: usize, bq: usize, c: f64, s: f64) {
        let ptr = Ptr(self.amps.as_mut_ptr());
        let kernel = move |x: usize| {
            let y = x ^ bp ^ bq;
            // SAFETY: x has p set and q clear, y the reverse; pairs are disjoint
            unsafe {
                let (ax, ay) = (*ptr.at(x), *ptr.at(y));
                *ptr.at(x) = ax * c - ay * s;
                *ptr.at(y) = ax * s + ay * c;
            }
        };
        match &self.support {
            Some(sup) => {
                let pick = |&x: &usize| x & bp != 0 && x & bq == 0;
                if sup.len() >= PAR_MIN {
                    sup.par_iter().filter(|x| pick(x)).for_each(|&x| kernel(x));
                } else {
                    sup.iter().filter(|x| pick(x)).for_each(|&x| kernel(x));
                }
            }
            None => {
                let (p, q) = (bp.trailing_zeros() as usize, bq.trailing_zeros() as usize);
                let (lo, hi) = (p.min(q), p.max(q));
                let n = self.amps.len() >> 2;
                let body = |i: usize| kernel(insert_bits(i, lo, hi) | bp);
                if n >= PAR_MIN {
                    (0..n).into_par_iter().for_each(body);
                } else {
                    (0..n).for_each(body);
                }
            }
        }
    }

    fn diag(&mut self, d: &DiagBlock) {
        let zero = Complex64::new(0.0, 0.0);
        let ptr = Ptr(self.amps.as_mut_ptr());
        let kernel = move |x: usize| {
            // SAFETY: each index is visited once
            unsafe {
                let a = ptr.at(x);
                if *a != zero {
                    *a *= Complex64::from_polar(1.0, d.phase(x));
                }
            }
        };
        match &self.support {
            Some(sup) => {
                if sup.len() >= PAR_MIN / 4 {
                    sup.par_iter().with_min_len(1024).for_each(|&x| kernel(x));
                } else {
                    sup.iter().for_each(|&x| kernel(x));
                }
            }
            None => {
                let n = self.amps.len();
                if n >= PAR_MIN {
                    (0..n).into_par_iter().with_min_len(1024).for_each(kernel);
                } else {
                    (0..n).for_each(kernel);
                }
            }
        }
    }
}

fn c64_pair<S: serde::Serializer>(v: &[Complex64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for z in v {
        seq.serialize_element(&[z.re, z.im])?;
    }
    seq.end()
}

fn c64_unpair<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Vec<Complex64>, D::Error> {
    let v = Vec::<[f64; 2]>::deserialize(d)?;
    Ok(v.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TimeSeries {
    pub tau: f64,
    /// G(τj) for j = 0..=j_max.
    #[serde(serialize_with = "c64_pair", deserialize_with = "c64_unpair")]
    pub values: Vec<Complex64>,
    pub delta: f64,
    pub order: u8,
    pub randomized: bool,
    pub seed: u64,
}

impl TimeSeries {
    pub fn j_max(&self) -> usize {
        self.values.len() - 1
    }

    /// Analytic series Σ_k w_k e^{−iE_kτj} (weights normalized to 1).
    pub fn from_measure(excitation: &[f64], weights: &[f64], tau: f64, j_max: usize) -> Self {
        let total: f64 = weights.iter().sum();
        let values = (0..=j_max)
            .map(|j| {
                excitation
                    .iter()
                    .zip(weights)
                    .map(|(&e, &w)| Complex64::from_polar(w / total, -e * tau * j as f64))
                    .sum()
            })
            .collect();
        TimeSeries { tau, values, delta: 0.0, order: 0, randomized: false, seed: 0 }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("j,re,im\n");
        for (j, z) in self.values.iter().enumerate() {
            let _ = writeln!(s, "{j},{:.15e},{:.15e}", z.re, z.im);
        }
        s
    }
}

pub fn steps_per_sample(tau: f64, delta: f64) -> Result<usize> {
    let r = tau / delta;
    let m = r.round();
    if m < 1.0 || (r - m).abs() > 1e-9 * r.max(1.0) {
        return Err(Error::Argument(format!("τ/Δ = {r} is not a positive integer")));
    }
    Ok(m as usize)
}

/// Exact expectation series ⟨ρ|U^{m j}|ρ⟩·e^{i·shift·τj}, m = τ/Δ steps per sample,
/// i.e. the series of H − shift.
pub fn evolve_series(
    basis: &SectorBasis,
    rho: &[f64],
    plan: &TrotterPlan,
    tau: f64,
    j_max: usize,
    shift: f64,
) -> Result<TimeSeries> {
    let m = steps_per_sample(tau, plan.delta)?;
    let compiler = Compiler::new(&plan.cdf)?;
    let start = embed(basis, rho, 0);
    let mut ket = start.clone();
    ket.restrict_to_sector(basis, 0);
    let mut stream = plan.stream();
    let mut fixed: Option<CompiledProgram> = None;
    let mut values = vec![start.inner(&start)];
    for j in 1..=j_max {
        let prog = if plan.randomized {
            CompiledProgram::new(&compiler.program(&stream.next_blocks(m), plan.merge_rotations))
        } else {
            fixed
                .get_or_insert_with(|| {
                    CompiledProgram::new(&compiler.program(&stream.next_blocks(m), plan.merge_rotations))
                })
                .clone()
        };
        ket.apply_compiled(&prog)?;
        let g = start.inner(&ket) * Complex64::from_polar(1.0, shift * tau * j as f64);
        values.push(g);
    }
    Ok(TimeSeries { tau, values, delta: plan.delta, order: plan.order, randomized: plan.randomized, seed: plan.seed })
}

/// Mean of `trajectories` independent randomized evolutions, emulating fresh
/// fragment orderings per circuit. Fixed-order plans reduce to [`evolve_series`].
pub fn evolve_series_averaged(
    basis: &SectorBasis,
    rho: &[f64],
    plan: &TrotterPlan,
    tau: f64,
    j_max: usize,
    shift: f64,
    trajectories: usize,
) -> Result<TimeSeries> {
    if !plan.randomized || trajectories <= 1 {
        return evolve_series(basis, rho, plan, tau, j_max, shift);
    }
    let runs: Vec<TimeSeries> = (0..trajectories as u64)
        .into_par_iter()
        .map(|k| {
            let p = plan.clone().randomized(trajectory_seed(plan.seed, k));
            evolve_series(basis, rho, &p, tau, j_max, shift)
        })
        .collect::<Result<_>>()?;
    let mut out = runs[0].clone();
    for (j, v) in out.values.iter_mut().enumerate() {
        *v = runs.iter().map(|r| r.values[j]).sum::<Complex64>() / trajectories as f64;
    }
    out.seed = plan.seed;
    Ok(out)
}

/// Seed of trajectory k; trajectory 0 keeps the plan seed.
pub fn trajectory_seed(seed: u64, k: u64) -> u64 {
    seed.wrapping_add(k.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Part {
    Re,
    Im,
}

impl Part {
    pub fn label(self) -> &'static str {
        match self {
            Part::Re => "re",
            Part::Im => "im",
        }
    }
}

/// Ancilla P(0) of the double-phase Hadamard test after `steps` controlled
/// Trotter steps; P(0) = (1 + Re/Im ⟨ψ|A†B|ψ⟩)/2.
pub fn hadamard_probability(basis: &SectorBasis, rho: &[f64], plan: &TrotterPlan, steps: usize, part: Part) -> Result<f64> {
    let width = 2 * basis.n_orbitals + 1;
    if width > SHOT_QUBIT_CAP + 1 {
        return Err(Error::Capacity(format!(
            "{width}-qubit register exceeds the full-circuit cap; use exact-expectation mode with synthetic noise"
        )));
    }
    let mut circuit = GateProgram::new(width);
    circuit.push(Gate::H { q: 0 });
    if part == Part::Im {
        circuit.push(Gate::Sdg { q: 0 });
    }
    let compiler = Compiler::new(&plan.cdf)?;
    let mut stream = plan.stream();
    // each controlled step is built separately so that both branches see per-step inverses
    for _ in 0..steps {
        let step = compiler.program(&stream.next_blocks(1), plan.merge_rotations);
        circuit.append(&controlled_program(&step));
    }
    circuit.push(Gate::H { q: 0 });
    let mut st = embed(basis, rho, 1);
    st.apply_program(&circuit)?;
    Ok(st.amplitudes().iter().step_by(2).map(|a| a.norm_sqr()).sum())
}

/// One Hadamard-test outcome: +1 for ancilla 0, −1 for ancilla 1.
pub fn hadamard_shot<R: Rng>(
    basis: &SectorBasis,
    rho: &[f64],
    plan: &TrotterPlan,
    steps: usize,
    part: Part,
    rng: &mut R,
) -> Result<i8> {
    let p0 = hadamard_probability(basis, rho, plan, steps, part)?;
    Ok(if rng.gen::<f64>() < p0 { 1 } else { -1 })
}

/// Many outcomes from one circuit simulation.
pub fn hadamard_shots<R: Rng>(
    basis: &SectorBasis,
    rho: &[f64],
    plan: &TrotterPlan,
    steps: usize,
    part: Part,
    count: usize,
    rng: &mut R,
) -> Result<Vec<i8>> {
    let p0 = hadamard_probability(basis, rho, plan, steps, part)?;
    Ok((0..count).map(|_| if rng.gen::<f64>() < p0 { 1 } else { -1 }).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub j: usize,
    pub part: Part,
    /// 0 ↔ '+' branch.
    pub ancilla: u8,
    /// 0 when the un-prepared register is found in |0…0⟩.
    pub projection: u8,
}

/// Joint outcome distribution of the double-measurement circuit with a plainly
/// controlled U: returns [P(a=0,proj=0), P(a=0,proj=1), P(a=1,proj=0), P(a=1,proj=1)].
pub fn double_measurement_distribution(
    basis: &SectorBasis,
    rho: &[f64],
    plan: &TrotterPlan,
    steps: usize,
    part: Part,
) -> Result<[f64; 4]> {
    if 2 * basis.n_orbitals + 1 > SHOT_QUBIT_CAP + 1 {
        return Err(Error::Capacity("register exceeds the full-circuit cap".into()));
    }
    let start = embed(basis, rho, 0);
    let mut ev = start.clone();
    ev.apply_program(&crate::trotter::build_evolution(plan, steps)?)?;
    let c = match part {
        Part::Re => Complex64::new(1.0, 0.0),
        Part::Im => Complex64::new(0.0, -1.0),
    };
    let mut out = [0.0; 4];
    for (a, sign) in [(0usize, 1.0), (1, -1.0)] {
        let branch: Vec<Complex64> = start
            .amplitudes()
            .iter()
            .zip(ev.amplitudes())
            .map(|(x, y)| (x + c * y * sign) * 0.5)
            .collect();
        let pa: f64 = branch.iter().map(|z| z.norm_sqr()).sum();
        let overlap: Complex64 = start.amplitudes().iter().zip(&branch).map(|(x, y)| x.conj() * y).sum();
        let p_proj0 = overlap.norm_sqr();
        out[2 * a] = p_proj0;
        out[2 * a + 1] = (pa - p_proj0).max(0.0);
    }
    Ok(out)
}

pub fn double_measurement_shot<R: Rng>(
    basis: &SectorBasis,
    rho: &[f64],
    plan: &TrotterPlan,
    steps: usize,
    part: Part,
    rng: &mut R,
) -> Result<ShotRecord> {
    let p = double_measurement_distribution(basis, rho, plan, steps, part)?;
    Ok(draw_joint(&p, steps, part, rng))
}

pub fn draw_joint<R: Rng>(p: &[f64; 4], j: usize, part: Part, rng: &mut R) -> ShotRecord {
    let u: f64 = rng.gen::<f64>() * p.iter().sum::<f64>();
    let mut acc = 0.0;
    let mut k = 3;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            k = i;
            break;
        }
    }
    ShotRecord { j, part, ancilla: (k / 2) as u8, projection: (k % 2) as u8 }
}

pub fn transcript_csv(records: &[ShotRecord]) -> String {
    let mut s = String::from("j,part,ancilla,projection\n");
    for r in records {
        let _ = writeln!(s, "{},{},{},{}", r.j, r.part.label(), r.ancilla, r.projection);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_insertion() {
        let xs: Vec<usize> = (0..4).map(|i| insert_bits(i, 1, 2)).collect();
        assert_eq!(xs, vec![0b0000, 0b0001, 0b1000, 0b1001]);
    }

    #[test]
    fn rz_convention() {
        let mut st = StateVector::zero(2);
        let mut p = GateProgram::new(2);
        p.push(Gate::Rz { q: 1, theta: 0.4 });
        st.apply_program(&p).unwrap();
        assert!((st.amplitudes()[0] - Complex64::from_polar(1.0, -0.2)).norm() < 1e-15);
    }

    #[test]
    fn givens_half_pi() {
        let mut st = StateVector::zero(2);
        st.amplitudes_mut()[0] = Complex64::new(0.0, 0.0);
        st.amplitudes_mut()[0b01] = Complex64::new(1.0, 0.0);
        let mut p = GateProgram::new(2);
        p.push(Gate::Givens { p: 0, q: 1, theta: std::f64::consts::FRAC_PI_2 });
        st.apply_program(&p).unwrap();
        assert!((st.amplitudes()[0b10].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn width_mismatch() {
        let mut st = StateVector::zero(3);
        assert!(st.apply_program(&GateProgram::new(2)).is_err());
    }

    #[test]
    fn integer_ratio() {
        assert_eq!(steps_per_sample(0.8, 0.2).unwrap(), 4);
        assert!(steps_per_sample(0.5, 0.2).is_err());
    }
}
