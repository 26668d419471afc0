mod common;

use common::molecule;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xasq::cdf::*;
use xasq::exact::{build_sector_hamiltonian, eigensolve, SectorBasis};
use xasq::integrals::{Eri, IntegralSet};
use xasq::trotter::random_orthogonal;

fn random_sym(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    symmetrize(&DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)))
}

/// Integral set whose two-body part is exactly one CDF fragment.
fn forward_rank_one(n: usize, seed: u64) -> (IntegralSet, CdfFragment) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = random_orthogonal(n, &mut rng);
    let z = random_sym(n, &mut rng);
    let frag = CdfFragment::from_rotation(&u, z).unwrap();
    let eri = Eri::from_supermatrix(n, &frag.supermatrix());
    let h = IntegralSet::new(2, 0, 0.3, random_sym(n, &mut rng), eri).unwrap();
    (h, frag)
}

#[test]
fn rank_one_tensor_is_recovered() {
    for seed in 0..3 {
        let (h, _) = forward_rank_one(4, seed);
        let cdf = fit_cdf(&h, 1, &FitOptions::default()).unwrap();
        let rep = cdf.fit.as_ref().unwrap();
        assert!(rep.final_residual <= 1e-8, "seed {seed}: {:e}", rep.final_residual);
        assert!(cdf.reconstruct_eri().max_abs_diff(&h.two_body) < 1e-8);
    }
}

#[test]
fn empty_model_keeps_full_residual() {
    let (h, _) = molecule("h2");
    let cdf = fit_cdf(&h, 0, &FitOptions::default()).unwrap();
    let rep = cdf.fit.unwrap();
    assert!((rep.final_residual - h.two_body.supermatrix().norm()).abs() < 1e-14);
    assert_eq!(cdf.fragments.len(), 0);
}

#[test]
fn reconstruction_round_trip_preserves_spectrum() {
    let (h, frag) = forward_rank_one(3, 11);
    let cdf = CdfHamiltonian::from_parts(&h, vec![frag]);
    let back = cdf.reconstruct().unwrap();
    assert!(back.two_body.max_abs_diff(&h.two_body) < 1e-10);
    assert!((back.one_body.clone() - &h.one_body).amax() < 1e-10);
    let b = SectorBasis::new(3, 1, 1).unwrap();
    let a = eigensolve(&build_sector_hamiltonian(&h, &b).unwrap(), b.dim()).unwrap();
    let c = eigensolve(&build_sector_hamiltonian(&back, &b).unwrap(), b.dim()).unwrap();
    for (x, y) in a.values.iter().zip(&c.values) {
        assert!((x - y).abs() < 1e-8);
    }
}

#[test]
fn residuals_monotone_and_fixture_errors_small() {
    for name in ["h2", "h4", "lih"] {
        let (h, _) = molecule(name);
        let n = h.n_orbitals;
        let cdf = fit_cdf(&h, n, &FitOptions::default()).unwrap();
        let rep = cdf.fit.as_ref().unwrap();
        let mut prev = rep.initial_residual;
        for r in &rep.residuals {
            assert!(*r <= prev + 1e-12, "{name}: {:?}", rep.residuals);
            prev = *r;
        }
        let stats = cdf_eigen_error(&cdf, &h, 25).unwrap();
        eprintln!("{name}: residual {:.3e} mean {:.3e} max {:.3e}", rep.final_residual, stats.mean, stats.max);
        assert!(stats.mean <= 0.037, "{name}: {stats:?}");
        let back = cdf.reconstruct_eri();
        assert!(back.max_abs_diff(&h.two_body) <= rep.final_residual + 1e-12);
    }
}

#[test]
fn rotation_truncation_bounds() {
    let (h, _) = molecule("h4");
    let cdf = fit_cdf(&h, h.n_orbitals, &FitOptions::default()).unwrap();
    let eps = 1e-3;
    let t = truncate_rotations(&cdf, eps).unwrap();
    for (a, b) in cdf.z0.iter().zip(&t.z0) {
        assert!((a - b).abs() <= eps / 2.0 + 1e-15);
    }
    for (f, g) in cdf.fragments.iter().zip(&t.fragments) {
        assert!((&f.z - &g.z).amax() <= eps / 2.0 + 1e-15);
        assert!((g.u.transpose() * &g.u - DMatrix::identity(4, 4)).amax() < 1e-10);
    }
    let k = 25;
    let e_full = cdf_eigen_error(&cdf, &cdf.reconstruct().unwrap(), k).unwrap();
    assert!(e_full.max < 1e-8);
    let e_trunc = cdf_eigen_error(&t, &cdf.reconstruct().unwrap(), k).unwrap();
    eprintln!("truncation error {e_trunc:?}");
    assert!(e_trunc.max <= 5e-2);

    let tiny = truncate_rotations(&cdf, 1e-14).unwrap();
    assert!((&tiny.u0 - &cdf.u0).amax() < 1e-12);
    assert!(truncate_rotations(&cdf, 0.0).is_err());
}

#[test]
fn json_round_trip() {
    let (h, _) = molecule("h2");
    let cdf = fit_cdf(&h, 2, &FitOptions::default()).unwrap();
    let text = cdf.to_json();
    let back = CdfHamiltonian::from_json(&text).unwrap();
    assert_eq!(back.to_json(), text);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(v["u0"][0].is_array());
}
