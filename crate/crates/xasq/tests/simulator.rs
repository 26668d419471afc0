mod common;

use common::molecule;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xasq::cdf::{fit_cdf, CdfHamiltonian, FitOptions};
use xasq::exact::*;
use xasq::integrals::Component;
use xasq::simulator::*;
use xasq::trotter::*;
use xasq::Error;

type C = Complex64;

fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

/// Dense 2ⁿ×2ⁿ matrix of one gate, built from its definition.
fn dense_gate(n: usize, g: &Gate) -> DMatrix<C> {
    let dim = 1 << n;
    let bit = |x: usize, q: usize| (x >> q) & 1;
    let z = |x: usize, q: usize| if bit(x, q) == 0 { 1.0 } else { -1.0 };
    let mut m = DMatrix::zeros(dim, dim);
    for x in 0..dim {
        match *g {
            Gate::Givens { p, q, theta } => {
                let (s, co) = theta.sin_cos();
                if bit(x, p) == 1 && bit(x, q) == 0 {
                    let y = x ^ (1 << p) ^ (1 << q);
                    m[(x, x)] = c(co, 0.0);
                    m[(y, x)] = c(s, 0.0);
                    m[(x, y)] = c(-s, 0.0);
                    m[(y, y)] = c(co, 0.0);
                } else if bit(x, p) == bit(x, q) {
                    m[(x, x)] = c(1.0, 0.0);
                }
            }
            Gate::Rz { q, theta } => m[(x, x)] = C::from_polar(1.0, -theta / 2.0 * z(x, q)),
            Gate::Rzz { p, q, theta } => m[(x, x)] = C::from_polar(1.0, -theta / 2.0 * z(x, p) * z(x, q)),
            Gate::Cnot { c: ctl, t } => {
                let y = if bit(x, ctl) == 1 { x ^ (1 << t) } else { x };
                m[(y, x)] = c(1.0, 0.0);
            }
            Gate::H { q } => {
                let r = std::f64::consts::FRAC_1_SQRT_2;
                let y = x ^ (1 << q);
                m[(x, x)] = c(if bit(x, q) == 0 { r } else { -r }, 0.0);
                m[(y, x)] = c(r, 0.0);
            }
            Gate::Sdg { q } => m[(x, x)] = if bit(x, q) == 1 { c(0.0, -1.0) } else { c(1.0, 0.0) },
            Gate::X { q } => m[(x ^ (1 << q), x)] = c(1.0, 0.0),
            Gate::GlobalPhase { phi } => m[(x, x)] = C::from_polar(1.0, phi),
        }
    }
    m
}

fn random_program(n: usize, len: usize, rng: &mut ChaCha8Rng) -> GateProgram {
    let mut prog = GateProgram::new(n);
    for _ in 0..len {
        let q = rng.gen_range(0..n);
        let mut r = rng.gen_range(0..n - 1);
        if r >= q {
            r += 1;
        }
        let theta = rng.gen_range(-3.0..3.0);
        let g = match rng.gen_range(0..8) {
            0 => {
                let p = rng.gen_range(0..n - 1);
                Gate::Givens { p, q: p + 1, theta }
            }
            1 => Gate::Rz { q, theta },
            2 => Gate::Rzz { p: q, q: r, theta },
            3 => Gate::Cnot { c: q, t: r },
            4 => Gate::H { q },
            5 => Gate::Sdg { q },
            6 => Gate::X { q },
            _ => Gate::GlobalPhase { phi: theta },
        };
        prog.push(g);
    }
    prog
}

fn amps_copy(v: &nalgebra::DVector<C>) -> Vec<C> {
    v.iter().copied().collect()
}

fn random_state(n: usize, rng: &mut ChaCha8Rng) -> Vec<C> {
    let v: Vec<C> = (0..1 << n).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|a| a / norm).collect()
}

#[test]
fn random_programs_match_dense_oracle() {
    let n = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..3 {
        let prog = random_program(n, 120, &mut rng);
        prog.validate().unwrap();
        let amps = random_state(n, &mut rng);
        let mut st = StateVector::from_amplitudes(n, amps.clone()).unwrap();
        st.apply_program(&prog).unwrap();
        let mut want = nalgebra::DVector::from_vec(amps);
        for g in prog.gates() {
            want = dense_gate(n, g) * want;
        }
        let err = st.amplitudes().iter().zip(want.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
        assert!((st.norm() - 1.0).abs() < 1e-12);
        let mut compiled = StateVector::from_amplitudes(n, amps_copy(&want)).unwrap();
        let mut inv = StateVector::from_amplitudes(n, st.amplitudes().to_vec()).unwrap();
        compiled.apply_compiled(&CompiledProgram::new(&GateProgram::new(n))).unwrap();
        inv.apply_compiled(&CompiledProgram::new(&prog)).unwrap();
        let mut twice = nalgebra::DVector::from_vec(st.amplitudes().to_vec());
        for g in prog.gates() {
            twice = dense_gate(n, g) * twice;
        }
        let err = inv.amplitudes().iter().zip(twice.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12, "compiled {err}");
        assert_eq!(compiled.amplitudes(), want.as_slice());
    }
}

#[test]
fn conventions() {
    // Rz(θ)|0⟩ = e^{−iθ/2}|0⟩, Rz(θ)|1⟩ = e^{iθ/2}|1⟩
    let mut prog = GateProgram::new(1);
    prog.push(Gate::Rz { q: 0, theta: 0.8 });
    for (x, sign) in [(0usize, -1.0), (1, 1.0)] {
        let mut amps = vec![c(0.0, 0.0); 2];
        amps[x] = c(1.0, 0.0);
        let mut st = StateVector::from_amplitudes(1, amps).unwrap();
        st.apply_program(&prog).unwrap();
        assert!((st.amplitudes()[x] - C::from_polar(1.0, sign * 0.4)).norm() < 1e-15);
    }
    // Givens: |1_p 0_q⟩ → c|1_p 0_q⟩ + s|0_p 1_q⟩
    let mut prog = GateProgram::new(2);
    prog.push(Gate::Givens { p: 0, q: 1, theta: 0.3 });
    let mut st = StateVector::from_amplitudes(2, vec![c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
    st.apply_program(&prog).unwrap();
    assert!((st.amplitudes()[1].re - 0.3f64.cos()).abs() < 1e-15);
    assert!((st.amplitudes()[2].re - 0.3f64.sin()).abs() < 1e-15);
    // single-particle action equals the rotation matrix columns
    let g = givens_matrix(2, &Givens { p: 0, q: 1, theta: 0.3 });
    assert!((g[(1, 0)] - 0.3f64.sin()).abs() < 1e-15 && (g[(0, 1)] + 0.3f64.sin()).abs() < 1e-15);
}

#[test]
fn capacity_and_width_errors() {
    assert!(StateVector::from_amplitudes(2, vec![c(1.0, 0.0); 3]).is_err());
    let mut st = StateVector::zero(2);
    let mut prog = GateProgram::new(3);
    prog.push(Gate::X { q: 2 });
    assert!(st.apply_program(&prog).is_err());
    let (h, d) = molecule("n2");
    let basis = SectorBasis::with_cap(h.n_orbitals, 1, 0, 1 << 20).unwrap();
    let cdf = CdfHamiltonian::from_parts(&h, vec![]);
    let plan = TrotterPlan::new(cdf, 0.1, 2).unwrap();
    let rho = vec![1.0; basis.dim()];
    let _ = d;
    let e = hadamard_probability(&basis, &rho, &plan, 1, Part::Re).unwrap_err();
    assert!(matches!(e, Error::Capacity(_)));
    assert!(matches!(
        double_measurement_distribution(&basis, &rho, &plan, 1, Part::Re).unwrap_err(),
        Error::Capacity(_)
    ));
}

fn h2_setup() -> (CdfHamiltonian, SectorBasis, InitialState) {
    let (h, d) = molecule("h2");
    let cdf = fit_cdf(&h, h.n_orbitals, &FitOptions::default()).unwrap();
    let (basis, init) = initial_state(&h, &d, Component::Z, None).unwrap();
    (cdf, basis, init)
}

fn expm_series(hm: &DMatrix<f64>, rho: &[f64], t: f64) -> C {
    let e = nalgebra::SymmetricEigen::new(hm.clone());
    (0..hm.nrows())
        .map(|k| {
            let ov: f64 = e.eigenvectors.column(k).iter().zip(rho).map(|(a, b)| a * b).sum();
            C::from_polar(ov * ov, -e.eigenvalues[k] * t)
        })
        .sum()
}

#[test]
fn single_fragment_series_is_exact() {
    let (h, d) = molecule("h2");
    let cdf = CdfHamiltonian::from_parts(&h, vec![]);
    let (basis, init) = initial_state(&h, &d, Component::Z, None).unwrap();
    let hm = build_sector_hamiltonian(&cdf.reconstruct().unwrap(), &basis).unwrap().to_dense();
    let plan = TrotterPlan::new(cdf, 0.25, 2).unwrap();
    let series = evolve_series(&basis, &init.vector, &plan, 0.5, 20, 0.0).unwrap();
    for j in 0..=20 {
        let want = expm_series(&hm, &init.vector, 0.5 * j as f64);
        assert!((series.values[j] - want).norm() < 1e-10, "j {j}");
    }
}

#[test]
fn h4_series_converges_to_exact_evolution() {
    let (h, d) = molecule("h4");
    let cdf = fit_cdf(&h, h.n_orbitals, &FitOptions::default()).unwrap();
    let (basis, init) = initial_state(&h, &d, Component::Z, None).unwrap();
    let hm = build_sector_hamiltonian(&cdf.reconstruct().unwrap(), &basis).unwrap().to_dense();
    let mut errs = Vec::new();
    for delta in [0.1, 0.05] {
        let plan = TrotterPlan::new(cdf.clone(), delta, 2).unwrap();
        let series = evolve_series(&basis, &init.vector, &plan, 0.2, 25, init.e_i).unwrap();
        let err = (1..=25)
            .map(|j| {
                let t = 0.2 * j as f64;
                (series.values[j] - expm_series(&hm, &init.vector, t) * C::from_polar(1.0, init.e_i * t)).norm()
            })
            .fold(0.0, f64::max);
        errs.push(err);
    }
    // second order: halving Δ cuts the error about fourfold
    assert!(errs[0] > 1e-8 && errs[0] < 0.2 && errs[1] < errs[0] / 3.0, "{errs:?}");
    assert!(evolve_series(&basis, &init.vector, &TrotterPlan::new(cdf, 0.3, 2).unwrap(), 0.5, 3, 0.0).is_err());
}

#[test]
fn hadamard_shots_match_series() {
    let (cdf, basis, init) = h2_setup();
    let delta = 0.2;
    let steps = 2;
    let plan = TrotterPlan::new(cdf, delta, 2).unwrap();
    // the double-phase circuit realizes U^{2·steps}
    let series = evolve_series(&basis, &init.vector, &plan, 2.0 * steps as f64 * delta, 1, 0.0).unwrap();
    let g = series.values[1];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (part, want) in [(Part::Re, g.re), (Part::Im, g.im)] {
        let p0 = hadamard_probability(&basis, &init.vector, &plan, steps, part).unwrap();
        assert!((2.0 * p0 - 1.0 - want).abs() < 1e-10, "{part:?}");
        let n = 10_000;
        let shots = hadamard_shots(&basis, &init.vector, &plan, steps, part, n, &mut rng).unwrap();
        let mean = shots.iter().map(|&s| s as f64).sum::<f64>() / n as f64;
        let sigma = ((1.0 - want * want) / n as f64).sqrt().max(1e-4);
        assert!((mean - want).abs() <= 3.0 * sigma, "{part:?} {mean} {want}");
    }
}

#[test]
fn seeds_and_formats() {
    let (cdf, basis, init) = h2_setup();
    let plan = TrotterPlan::new(cdf, 0.2, 2).unwrap().randomized(9);
    let a = evolve_series(&basis, &init.vector, &plan, 0.4, 5, 0.0).unwrap();
    let b = evolve_series(&basis, &init.vector, &plan, 0.4, 5, 0.0).unwrap();
    assert_eq!(a.values, b.values);
    assert_eq!(a.seed, 9);
    let csv = a.to_csv();
    assert!(csv.starts_with("j,re,im\n"));
    assert_eq!(csv.lines().count(), 7);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = double_measurement_distribution(&basis, &init.vector, &plan, 1, Part::Im).unwrap();
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let recs: Vec<ShotRecord> = (0..5).map(|_| draw_joint(&p, 1, Part::Im, &mut rng)).collect();
    let t = transcript_csv(&recs);
    assert!(t.starts_with("j,part,ancilla,projection\n"));
    assert!(t.lines().skip(1).all(|l| l.starts_with("1,im,")));
    let text = build_evolution(&plan, 2).unwrap().to_text();
    assert_eq!(GateProgram::from_text(&text).unwrap().to_text(), text);
}
