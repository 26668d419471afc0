use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use xasq::cdf::{cdf_eigen_error, fit_cdf, CdfHamiltonian, FitOptions};
use xasq::exact::*;
use xasq::integrals::*;
use xasq::resources::{self, AvModel, CostParams, STATE_PREP_GATES};
use xasq::simulator::{evolve_series_averaged, steps_per_sample, trajectory_seed};
use xasq::spectrum::*;
use xasq::trotter::{dense_fragments, estimate_y3, trotter_eigenphase, TrotterPlan};

use crate::config::{AlphaSetting, Config};
use crate::CliError;

/// Collects output files, writing each atomically, and records them in a manifest.
pub struct Output {
    dir: PathBuf,
    hash: String,
    command: &'static str,
    seed: u64,
    files: Vec<String>,
}

impl Output {
    pub fn new(cfg: &Config, command: &'static str) -> Result<Self, CliError> {
        fs::create_dir_all(&cfg.paths.out)
            .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", cfg.paths.out.display())))?;
        Ok(Output { dir: cfg.paths.out.clone(), hash: cfg.hash(), command, seed: cfg.seed, files: Vec::new() })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let tmp = self.dir.join(format!(".{name}.tmp"));
        fs::write(&tmp, contents)
            .and_then(|_| fs::rename(&tmp, &path))
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
        info!("wrote {}", path.display());
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, mut v: Value) -> Result<(), CliError> {
        if let Value::Object(m) = &mut v {
            m.insert("config_hash".into(), json!(self.hash));
        }
        self.write(name, &(serde_json::to_string_pretty(&v).unwrap() + "\n"))
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        let manifest = json!({
            "command": self.command,
            "config_hash": self.hash,
            "seed": self.seed,
            "files": self.files,
        });
        self.write("manifest.json", &(serde_json::to_string_pretty(&manifest).unwrap() + "\n"))
    }
}

fn at(path: &Path) -> impl Fn(xasq::Error) -> CliError + '_ {
    move |e| CliError::from(e).context(&path.display().to_string())
}

fn load_system(cfg: &Config) -> Result<(IntegralSet, DipoleIntegrals), CliError> {
    let fp = cfg.fcidump()?;
    let dp = cfg.dipole()?;
    let h = load_fcidump(fp).map_err(at(fp))?;
    let d = load_dipole(dp).map_err(at(dp))?;
    d.check_against(&h)?;
    if cfg.cvs.core.is_empty() {
        return Ok((h, d));
    }
    let spec = CvsSpec::from_one_based(&cfg.cvs.core)?;
    info!("core-valence separation with core orbitals {:?}", cfg.cvs.core);
    Ok(apply_cvs(&h, &d, &spec)?)
}

fn components(cfg: &Config) -> Result<Vec<Component>, CliError> {
    if cfg.sampling.components.is_empty() {
        return Err(CliError::Usage("sampling.components is empty".into()));
    }
    Ok(cfg.sampling.components.iter().map(|c| Component::parse(c)).collect::<xasq::Result<_>>()?)
}

fn grid(cfg: &Config) -> Vec<f64> {
    let s = &cfg.sampling;
    uniform_grid(s.omega_min, s.omega_max.unwrap_or(s.h_norm), s.points)
}

fn sector(h: &IntegralSet) -> Result<SectorBasis, CliError> {
    let (nu, nd) = h.sector()?;
    Ok(SectorBasis::new(h.n_orbitals, nu, nd)?)
}

fn factorization(cfg: &Config, h: &IntegralSet) -> Result<CdfHamiltonian, CliError> {
    if let Some(p) = &cfg.paths.cdf {
        let text = fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
        let cdf = CdfHamiltonian::from_json(&text).map_err(at(p))?;
        if cdf.n_orbitals != h.n_orbitals {
            return Err(CliError::Usage(format!("{} has {} orbitals, integrals have {}", p.display(), cdf.n_orbitals, h.n_orbitals)));
        }
        return Ok(cdf);
    }
    let l = cfg.algorithm.fragments.unwrap_or(h.n_orbitals);
    let opts = FitOptions { max_iter: cfg.algorithm.max_iter, seed: cfg.seed, ..FitOptions::default() };
    info!("fitting {l} factorization fragments");
    Ok(fit_cdf(h, l, &opts)?)
}

/// Trotter step dividing τ, from the configured Δ or Δ = sqrt(η/Y₃).
fn resolve_delta(cfg: &Config, tau: f64, warnings: &mut Vec<String>) -> (f64, usize) {
    let target = cfg.algorithm.delta.unwrap_or((cfg.sampling.eta / cfg.algorithm.y3).sqrt());
    let m = ((tau / target) - 1e-9).ceil().max(1.0) as usize;
    let delta = tau / m as f64;
    if (delta - target).abs() > 1e-12 * target {
        let msg = format!("Trotter step {target:.6} adjusted to {delta:.6} so that τ/Δ = {m}");
        warn!("{msg}");
        warnings.push(msg);
    }
    (delta, m)
}

fn intensity_rows(s: &mut String, omega: &[f64], values: &[f64], label: &str) {
    for (w, v) in omega.iter().zip(values) {
        let _ = writeln!(s, "{w:.10},{v:.12e},{label}");
    }
}

pub fn exact(cfg: &Config) -> Result<(), CliError> {
    let (h, d) = load_system(cfg)?;
    let basis = sector(&h)?;
    let dim = basis.dim();
    info!("sector dimension {dim}");
    let ham = build_sector_hamiltonian(&h, &basis)?;
    let dense = dim <= DENSE_LIMIT;
    let eigs = eigensolve(&ham, if dense { dim } else { cfg.exact.states.clamp(1, dim) })?;
    let (e0, ground) = (eigs.values[0], eigs.vector(0));
    let omega = grid(cfg);
    let eta = cfg.sampling.eta;
    let mut csv = String::from("omega_hartree,intensity,component\n");
    let mut combined = vec![0.0; omega.len()];
    let mut used = Vec::new();
    for c in components(cfg)? {
        let init = match initial_state_from_ground(&basis, &ground, e0, &d, c) {
            Ok(s) => s,
            Err(xasq::Error::Degenerate(m)) => {
                warn!("skipping component {}: {m}", c.label());
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let measure = if dense {
            SpectralMeasure::from_eigen(&basis, &eigs, 0, &d, c)
        } else {
            let excited: Vec<f64> = init.vector.iter().map(|x| x * init.norm2.sqrt()).collect();
            SpectralMeasure::from_krylov(&ham, &excited, e0, cfg.exact.krylov_steps.min(dim))?
        };
        let r = reference_spectrum(&measure, eta, &omega, Some(c));
        let values: Vec<f64> = if cfg.sampling.physical {
            omega.iter().zip(&r.sigma).map(|(w, s)| physical_prefactor(*w) * s).collect()
        } else {
            r.normalized.clone()
        };
        intensity_rows(&mut csv, &omega, &values, c.label());
        for (acc, (w, s)) in combined.iter_mut().zip(omega.iter().zip(&r.sigma)) {
            *acc += if cfg.sampling.physical { physical_prefactor(*w) * s } else { *s };
        }
        used.push(json!({ "component": c.label(), "norm2": init.norm2, "weight": measure.total_weight() }));
    }
    if used.is_empty() {
        return Err(CliError::Numeric("every dipole component annihilates the ground state".into()));
    }
    if used.len() > 1 {
        intensity_rows(&mut csv, &omega, &combined, "combined");
    }
    let mut out = Output::new(cfg, "exact")?;
    out.write("exact_spectrum.csv", &csv)?;
    let k = cfg.exact.states.min(eigs.k());
    out.write_json(
        "eigenvalues.json",
        json!({
            "eigenvalues_hartree": &eigs.values[..k],
            "sector_dimension": dim,
            "eta": eta,
            "components": used,
        }),
    )?;
    out.finish()
}

pub fn spectrum(cfg: &Config) -> Result<(), CliError> {
    let (h, d) = load_system(cfg)?;
    let cdf = factorization(cfg, &h)?;
    let mut warnings = Vec::new();
    let s = &cfg.sampling;
    let tau = cfg.tau();
    let (delta, m) = resolve_delta(cfg, tau, &mut warnings);
    steps_per_sample(tau, delta)?;
    let j_max = s.j_max.unwrap_or(((-(PI * s.eps_trunc).ln()) / (2.0 * tau * s.eta)).ceil().max(1.0) as usize);
    let samples = 2 * j_max;
    let a = &cfg.algorithm;
    let cost = CostParams {
        n: h.n_orbitals,
        l: cdf.l().max(1),
        tau,
        delta,
        eta: s.eta,
        j_max,
        eps_rot: cfg.resources.eps_rot,
        order: a.order,
        double_phase: a.double_phase,
        merge_rotations: a.merge_rotations,
        bliss: false,
        ..CostParams::table_row(h.n_orbitals)
    };
    let alpha = match &s.alpha {
        AlphaSetting::Value(v) => *v,
        AlphaSetting::Keyword(_) => {
            let o = optimize_alpha(&AlphaProblem {
                c_state: STATE_PREP_GATES,
                c_step: resources::trotter_step_cost(&cost),
                tau,
                delta,
                eta: s.eta,
                j_max,
                eps_meas: s.eps_meas,
            });
            info!("optimized α = {:.4} (×{:.2} vs uniform)", o.alpha, o.ratio_vs_uniform);
            o.alpha
        }
    };
    let mut plan = TrotterPlan::new(cdf, delta, a.order)?.merged(a.merge_rotations);
    if a.randomized {
        plan = plan.randomized(cfg.seed);
    }
    let basis = sector(&h)?;
    let ham = build_sector_hamiltonian(&h, &basis)?;
    let eigs = eigensolve(&ham, 1)?;
    let (e0, ground) = (eigs.values[0], eigs.vector(0));
    let omega = grid(cfg);
    let splan = allocate_shots(s.shots, alpha, s.eta, tau, samples)?;
    let mut out = Output::new(cfg, "spectrum")?;
    let mut ests = Vec::new();
    let mut norms = Vec::new();
    let mut comps = Vec::new();
    for (ci, c) in components(cfg)?.into_iter().enumerate() {
        let init = match initial_state_from_ground(&basis, &ground, e0, &d, c) {
            Ok(st) => st,
            Err(xasq::Error::Degenerate(msg)) => {
                warn!("skipping component {}: {msg}", c.label());
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        info!("component {}: evolving {samples} samples of {m} steps", c.label());
        let series = evolve_series_averaged(&basis, &init.vector, &plan, tau, samples, e0, a.trajectories)?;
        let sample_seed = trajectory_seed(cfg.seed, 1 + ci as u64);
        let noisy = sample_series(&series, &splan, sample_seed, &mut ChaCha8Rng::seed_from_u64(sample_seed))?;
        let est = reconstruct_sampled(&noisy, &splan, &omega)?;
        out.write(&format!("series_{}.csv", c.label()), &series.to_csv())?;
        out.write(&format!("spectrum_{}.csv", c.label()), &est.to_csv())?;
        comps.push(json!({ "component": c.label(), "norm2": init.norm2, "sample_seed": sample_seed }));
        ests.push(est);
        norms.push(init.norm2);
    }
    if ests.is_empty() {
        return Err(CliError::Numeric("every dipole component annihilates the ground state".into()));
    }
    let combined = combine_cartesian(&ests, &norms, s.physical)?;
    out.write("spectrum.csv", &combined.to_csv())?;
    out.write("spectrum.svg", &combined.to_svg(&format!("spectrum {}", &cfg.hash()[..12])))?;
    let eps_meas = (shot_requirement(alpha, s.eta, tau, samples, 1.0) / s.shots as f64).sqrt();
    let fit = plan.cdf.fit.as_ref().map(|f| json!({ "final_residual": f.final_residual, "status": f.status }));
    out.write_json(
        "budget.json",
        json!({
            "seed": cfg.seed,
            "tau": tau,
            "delta": delta,
            "steps_per_sample": m,
            "j_max": j_max,
            "samples": samples,
            "alpha": alpha,
            "shots": s.shots,
            "eta": s.eta,
            "h_norm": s.h_norm,
            "ground_energy": e0,
            "bounds": {
                "truncation": truncation_bound(samples, tau, s.eta),
                "discretization": discretization_bound(samples, tau, s.eta, s.h_norm),
                "measurement": eps_meas,
            },
            "trotter": { "order": a.order, "randomized": a.randomized, "trajectories": a.trajectories, "fragments": plan.cdf.l() },
            "factorization": fit,
            "components": comps,
            "warnings": warnings,
        }),
    )?;
    out.finish()
}

pub fn factorize(cfg: &Config) -> Result<(), CliError> {
    let (h, _) = load_system(cfg)?;
    let cdf = factorization(cfg, &h)?;
    let basis = sector(&h)?;
    let errors = if basis.dim() <= DENSE_LIMIT {
        Some(cdf_eigen_error(&cdf, &h, cfg.exact.states)?)
    } else {
        info!("sector dimension {} above the dense limit; skipping eigenvalue comparison", basis.dim());
        None
    };
    let mut out = Output::new(cfg, "factorize")?;
    out.write("cdf.json", &cdf.to_json())?;
    out.write_json(
        "factorize.json",
        json!({
            "fragments": cdf.l(),
            "fit": cdf.fit,
            "eigenvalue_error": errors,
        }),
    )?;
    out.finish()
}

fn cost_rows(cfg: &Config) -> Result<Vec<CostParams>, CliError> {
    let r = &cfg.resources;
    if r.n.is_empty() {
        return Err(CliError::Usage("resources.n: empty sweep list".into()));
    }
    let rows: Vec<CostParams> = r
        .n
        .iter()
        .map(|&n| CostParams {
            n,
            l: r.fragments.unwrap_or(n),
            d: r.determinants,
            s: r.shots,
            alpha: r.alpha,
            eta: r.eta,
            tau: PI / (2.0 * r.h_norm),
            delta: r.delta.unwrap_or((r.eta / r.y3).sqrt()),
            j_max: r.j_max,
            eps_rot: r.eps_rot,
            order: r.order,
            double_phase: r.double_phase,
            merge_rotations: r.merge_rotations,
            bliss: r.bliss,
        })
        .collect();
    for p in &rows {
        p.validate()?;
    }
    Ok(rows)
}

pub fn resources(cfg: &Config) -> Result<(), CliError> {
    let rows = cost_rows(cfg)?;
    let model = AvModel::calibrate(&cfg.resources.calibration_rows)?;
    let csv = resources::sweep_rows_csv(&rows, &model, cfg.resources.clock_hz)?;
    let reports: Vec<Value> =
        rows.iter().map(|p| resources::report_json(p, &model, cfg.resources.clock_hz)).collect::<xasq::Result<_>>()?;
    let mut out = Output::new(cfg, "resources")?;
    out.write("resources.csv", &csv)?;
    out.write_json("ledger.json", json!({ "model": model, "rows": reports }))?;
    out.finish()
}

pub fn alpha_opt(cfg: &Config) -> Result<(), CliError> {
    let rows = cost_rows(cfg)?;
    let r = &cfg.resources;
    let results: Vec<Value> = rows
        .iter()
        .map(|p| {
            let o = optimize_alpha(&AlphaProblem {
                c_state: STATE_PREP_GATES,
                c_step: resources::trotter_step_cost(p),
                tau: p.tau,
                delta: p.delta,
                eta: p.eta,
                j_max: p.j_max,
                eps_meas: r.eps_meas,
            });
            json!({ "N": p.n, "optimum": o })
        })
        .collect();
    let mut out = Output::new(cfg, "alpha-opt")?;
    out.write_json("alpha.json", json!({ "rows": results }))?;
    out.finish()
}

/// Least-squares slope of ln y against ln x.
fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).filter(|(_, v)| **v > 0.0).map(|(a, b)| (a.ln(), b.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

pub fn trotter_error(cfg: &Config) -> Result<(), CliError> {
    let fp = cfg.fcidump()?;
    let h = load_fcidump(fp).map_err(at(fp))?;
    let cdf = factorization(cfg, &h)?;
    let basis = sector(&h)?;
    let t = &cfg.trotter;
    let frags = dense_fragments(&cdf, &basis);
    let hc = frags.iter().skip(1).fold(frags[0].clone(), |a, b| a + b);
    let (vals, vecs) = dense_eigen(&hc);
    let e_l = *vals.get(t.state).ok_or_else(|| CliError::Usage(format!("trotter.state {} out of range", t.state)))?;
    let state: Vec<f64> = vecs.column(t.state).iter().copied().collect();
    let mut csv = String::from("delta,eigenvalue,error,y3_estimate\n");
    let (mut ds, mut errs, mut y3s) = (Vec::new(), Vec::new(), Vec::new());
    for &delta in &t.deltas {
        let plan = TrotterPlan::new(cdf.clone(), delta, cfg.algorithm.order)?;
        let e = trotter_eigenphase(&plan, &basis, t.state)?;
        let n = (1.0 / delta).round() as usize;
        let y3 = if n >= 1 && (n as f64 * delta - 1.0).abs() < 1e-9 {
            Some(estimate_y3(&cdf, &basis, &state, delta, n)?)
        } else {
            None
        };
        let _ = writeln!(csv, "{delta:.10},{e:.12e},{:.6e},{}", (e - e_l).abs(), y3.map_or(String::new(), |v| format!("{v:.6e}")));
        ds.push(delta);
        errs.push((e - e_l).abs());
        y3s.push(y3);
    }
    let y3 = ds
        .iter()
        .zip(&y3s)
        .filter_map(|(d, y)| y.map(|v| (*d, v)))
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
        .map(|p| p.1);
    let mut out = Output::new(cfg, "trotter-error")?;
    out.write("trotter_error.csv", &csv)?;
    out.write_json(
        "trotter_error.json",
        json!({
            "state": t.state,
            "eigenvalue": e_l,
            "order": cfg.algorithm.order,
            "slope": loglog_slope(&ds, &errs),
            "y3": y3,
            "target": t.target,
            "delta_chosen": y3.map(|v| trotter_step_for(t.target, v)),
        }),
    )?;
    out.finish()
}
