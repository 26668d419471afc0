mod common;

use common::molecule;
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xasq::cdf::*;
use xasq::exact::*;
use xasq::simulator::StateVector;
use xasq::trotter::*;

fn fitted(name: &str) -> (CdfHamiltonian, SectorBasis) {
    let (h, _) = molecule(name);
    let cdf = fit_cdf(&h, h.n_orbitals, &FitOptions::default()).unwrap();
    let (nu, nd) = h.sector().unwrap();
    (cdf, SectorBasis::new(h.n_orbitals, nu, nd).unwrap())
}

/// Action of a program restricted to a sector, column j = image of basis state j.
fn sector_action(prog: &GateProgram, basis: &SectorBasis) -> DMatrix<Complex64> {
    let dim = basis.dim();
    let mut u = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let mut e = vec![0.0; dim];
        e[j] = 1.0;
        let mut st = embed(basis, &e, 0);
        st.apply_program(prog).unwrap();
        for i in 0..dim {
            u[(i, j)] = st.amplitudes()[basis.det(i) as usize];
        }
        assert!((st.norm() - 1.0).abs() < 1e-12);
    }
    u
}

fn expm_i(h: &DMatrix<f64>, t: f64) -> DMatrix<Complex64> {
    let e = SymmetricEigen::new(h.clone());
    let v = e.eigenvectors.map(|x| Complex64::new(x, 0.0));
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|l| Complex64::from_polar(1.0, -l * t)));
    &v * d * v.adjoint()
}

fn max_diff(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn sector_hamiltonian(cdf: &CdfHamiltonian, basis: &SectorBasis) -> DMatrix<f64> {
    build_sector_hamiltonian(&cdf.reconstruct().unwrap(), basis).unwrap().to_dense()
}

#[test]
fn fragment_programs_match_dense_exponentials() {
    for name in ["h2", "h4"] {
        let (cdf, basis) = fitted(name);
        let frags = dense_fragments(&cdf, &basis);
        let sum = frags.iter().fold(DMatrix::zeros(basis.dim(), basis.dim()), |a, b| a + b);
        assert!((sum - sector_hamiltonian(&cdf, &basis)).amax() < 1e-10);
        for (ell, h) in frags.iter().enumerate() {
            let prog = fragment_program(&cdf, ell, 0.37).unwrap();
            let d = max_diff(&sector_action(&prog, &basis), &expm_i(h, 0.37));
            assert!(d <= 1e-10, "{name} fragment {ell}: {d:e}");
        }
        assert!(fragment_program(&cdf, cdf.l() + 1, 0.1).is_err());
    }
}

fn synthetic(n: usize, shared: bool, diag_z: bool) -> CdfHamiltonian {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let u = random_orthogonal(n, &mut rng);
    let fragments = (0..2)
        .map(|i| {
            let z = DMatrix::from_fn(n, n, |a, b| if diag_z && a != b { 0.0 } else { 0.1 * (1 + a + b + i) as f64 });
            let ui = if shared { u.clone() } else { random_orthogonal(n, &mut rng) };
            CdfFragment::from_rotation(&ui, z).unwrap()
        })
        .collect();
    CdfHamiltonian {
        n_orbitals: n,
        n_electrons: 2,
        ms2: 0,
        u0: if shared { u } else { DMatrix::identity(n, n) },
        z0: (0..n).map(|k| -0.5 + 0.2 * k as f64).collect(),
        fragments,
        scalar_shift: 0.7,
        fit: None,
    }
}

#[test]
fn trivial_fragment_programs() {
    let mut cdf = synthetic(3, false, false);
    let p = fragment_program(&cdf, 0, 0.2).unwrap();
    assert_eq!(p.tally().rz, 6);
    assert_eq!(p.tally().global_phase, 1);
    assert_eq!(p.len(), 7);

    cdf.fragments[1].z = DMatrix::zeros(3, 3);
    let basis = SectorBasis::new(3, 1, 1).unwrap();
    let a = sector_action(&fragment_program(&cdf, 2, 0.2).unwrap(), &basis);
    assert!(max_diff(&a, &DMatrix::identity(basis.dim(), basis.dim())) < 1e-12);
}

#[test]
fn single_fragment_step_is_exact() {
    let (h, _) = molecule("h2");
    let cdf = fit_cdf(&h, 0, &FitOptions::default()).unwrap();
    let basis = SectorBasis::new(2, 1, 1).unwrap();
    let exact = expm_i(&sector_hamiltonian(&cdf, &basis), 0.9);
    for order in [1, 2] {
        let plan = TrotterPlan::new(cdf.clone(), 0.9, order).unwrap();
        let d = max_diff(&sector_action(&build_step(&plan).unwrap(), &basis), &exact);
        assert!(d < 1e-10, "order {order}: {d:e}");
    }
}

#[test]
fn commuting_fragments_are_exact() {
    let cdf = synthetic(3, true, true);
    let basis = SectorBasis::new(3, 1, 1).unwrap();
    let plan = TrotterPlan::new(cdf.clone(), 0.8, 2).unwrap();
    let exact = expm_i(&sector_hamiltonian(&cdf, &basis), 0.8);
    assert!(max_diff(&sector_action(&build_step(&plan).unwrap(), &basis), &exact) < 1e-10);
    let psi: Vec<f64> = (0..basis.dim()).map(|i| if i == 1 { 1.0 } else { 0.0 }).collect();
    assert!(estimate_y3(&cdf, &basis, &psi, 0.1, 10).unwrap() < 1e-10);
}

#[test]
fn merged_and_unmerged_programs_agree() {
    let (cdf, basis) = fitted("h4");
    for (order, randomized) in [(1, false), (2, false), (2, true)] {
        let mut plan = TrotterPlan::new(cdf.clone(), 0.3, order).unwrap();
        if randomized {
            plan = plan.randomized(7);
        }
        let merged = build_evolution(&plan, 3).unwrap();
        let plain = build_evolution(&plan.clone().merged(false), 3).unwrap();
        let d = max_diff(&sector_action(&merged, &basis), &sector_action(&plain, &basis));
        assert!(d < 1e-12, "order {order}: {d:e}");
        assert!(merged.blocks.rotation_blocks < plain.blocks.rotation_blocks);
        assert_eq!(merged.tally(), merged.recount());
    }
}

#[test]
fn tallies_match_closed_form() {
    let (cdf, _) = fitted("h4");
    let (n, l) = (cdf.n_orbitals, cdf.l());
    for order in [1u8, 2] {
        for merge in [true, false] {
            for steps in [1usize, 4] {
                let plan = TrotterPlan::new(cdf.clone(), 0.1, order).unwrap().merged(merge);
                let prog = build_evolution(&plan, steps).unwrap();
                let c = xasq::resources::program_counts(n, l, order, merge, steps);
                assert_eq!(prog.blocks.rotation_blocks, c.rotation_blocks);
                assert_eq!(prog.tally().givens, c.givens, "order {order} merge {merge} steps {steps}");
                assert_eq!(prog.tally().rz, c.rz);
                assert_eq!(prog.tally().rzz, c.rzz);
            }
        }
    }
}

#[test]
fn randomized_steps_are_seeded() {
    let (cdf, _) = fitted("h4");
    let plan = TrotterPlan::new(cdf, 0.1, 2).unwrap().randomized(42);
    let a = build_evolution(&plan, 5).unwrap();
    let b = build_evolution(&plan, 5).unwrap();
    assert_eq!(a.to_text(), b.to_text());
    let c = build_evolution(&plan.clone().randomized(43), 5).unwrap();
    assert_ne!(a.to_text(), c.to_text());
}

#[test]
fn controlled_step_branches() {
    let (cdf, basis) = fitted("h4");
    let plan = TrotterPlan::new(cdf, 0.25, 2).unwrap();
    let step = build_step(&plan).unwrap();
    let ctrl = controlled_step(&plan).unwrap();
    assert_eq!(ctrl.tally().rz + ctrl.tally().rzz, step.tally().rz + step.tally().rzz + step.tally().global_phase);
    let u = sector_action(&step, &basis);

    // eigenvector of the dense step unitary, through the complex Schur-free route
    let herm = (&u + u.adjoint()) * Complex64::new(0.5, 0.0);
    let e = herm.symmetric_eigen();
    let v = e.eigenvectors.column(0).into_owned();
    let lambda = v.dotc(&(&u * &v));
    assert!((lambda.norm() - 1.0).abs() < 1e-9);

    let n = 2 * basis.n_orbitals + 1;
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
    for i in 0..basis.dim() {
        let x = (basis.det(i) as usize) << 1;
        amps[x] = v[i] * r;
        amps[x | 1] = v[i] * r;
    }
    let mut st = StateVector::from_amplitudes(n, amps.clone()).unwrap();
    st.apply_program(&ctrl).unwrap();
    let (mut a0, mut a1) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    for i in 0..basis.dim() {
        let x = (basis.det(i) as usize) << 1;
        a0 += v[i].conj() * st.amplitudes()[x];
        a1 += v[i].conj() * st.amplitudes()[x | 1];
    }
    let rel = a1 / a0;
    assert!((rel - lambda * lambda).norm() < 1e-10, "{rel} vs {}", lambda * lambda);

    // ancilla |0⟩ alone: system evolves by U†
    let mut amps0 = vec![Complex64::new(0.0, 0.0); 1 << n];
    for i in 0..basis.dim() {
        amps0[(basis.det(i) as usize) << 1] = Complex64::new(if i == 2 { 1.0 } else { 0.0 }, 0.0);
    }
    let mut st = StateVector::from_amplitudes(n, amps0).unwrap();
    st.apply_program(&ctrl).unwrap();
    for i in 0..basis.dim() {
        let want = u[(2, i)].conj();
        assert!((st.amplitudes()[(basis.det(i) as usize) << 1] - want).norm() < 1e-12);
    }
}

#[test]
fn eigenphase_scaling_and_perturbation_theory() {
    for name in ["h2", "h4"] {
        let (cdf, basis) = fitted(name);
        let frags = dense_fragments(&cdf, &basis);
        let h = frags.iter().fold(DMatrix::zeros(basis.dim(), basis.dim()), |a, b| a + b);
        let (vals, vecs) = dense_eigen(&h);
        let y3 = dense_y3(&frags);
        let l = 0;
        let v = vecs.column(l);
        let ey = (v.transpose() * &y3 * v)[(0, 0)];
        let deltas = [0.2, 0.1, 0.05, 0.02];
        let errs: Vec<f64> = deltas
            .iter()
            .map(|&d| trotter_eigenphase(&TrotterPlan::new(cdf.clone(), d, 2).unwrap(), &basis, l).unwrap() - vals[l])
            .collect();
        let lx: Vec<f64> = deltas.iter().map(|d| d.ln()).collect();
        let ly: Vec<f64> = errs.iter().map(|e| e.abs().ln()).collect();
        let slope = fit_slope(&lx, &ly);
        assert!((slope - 2.0).abs() <= 0.2, "{name}: slope {slope}");
        let ratio = errs[1] / errs[0];
        assert!((ratio * 4.0 - 1.0).abs() <= 0.15, "{name}: halving ratio {ratio}");
        let pred = -0.02 * 0.02 * ey;
        assert!((errs[3] / pred - 1.0).abs() <= 0.05, "{name}: {} vs {pred}", errs[3]);

        let psi: Vec<f64> = v.iter().copied().collect();
        let est1 = estimate_y3(&cdf, &basis, &psi, 0.1, 10).unwrap();
        let est2 = estimate_y3(&cdf, &basis, &psi, 0.05, 20).unwrap();
        assert!((est1 / ey.abs() - 1.0).abs() <= 0.1, "{name}: {est1} vs {ey}");
        assert!((est1 / est2 - 1.0).abs() <= 0.25);
        assert!(estimate_y3(&cdf, &basis, &psi, 0.1, 5).is_err());
    }
    let (h, _) = molecule("h2");
    let cdf = fit_cdf(&h, 0, &FitOptions::default()).unwrap();
    let basis = SectorBasis::new(2, 1, 1).unwrap();
    let e0 = dense_eigen(&sector_hamiltonian(&cdf, &basis)).0[0];
    let e = trotter_eigenphase(&TrotterPlan::new(cdf, 0.3, 2).unwrap(), &basis, 0).unwrap();
    assert!((e - e0).abs() < 1e-10);
}

fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
