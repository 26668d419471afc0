//! Shot allocation, noisy sampling, kernel reconstruction of −Im G(ω),
//! parameter solving and the double-measurement estimator.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::exact::physical_prefactor;
use crate::simulator::{Part, ShotRecord, TimeSeries};
use crate::{Error, Result};

/// Σ_{j=1}^{n} e^{−α j τη}.
pub fn kernel_norm(alpha: f64, tau_eta: f64, n: usize) -> f64 {
    (1..=n).map(|j| (-alpha * j as f64 * tau_eta).exp()).sum()
}

/// Shots needed for measurement error ε with allocation exponent α over
/// n sample times: (ητ/2πε)²·Σ_j e^{(α−2)jτη}·Σ_k e^{−αkτη}.
pub fn shot_requirement(alpha: f64, eta: f64, tau: f64, n: usize, eps_meas: f64) -> f64 {
    let te = tau * eta;
    let pre = (te / (2.0 * PI * eps_meas)).powi(2);
    let a: f64 = (1..=n).map(|j| ((alpha - 2.0) * j as f64 * te).exp()).sum();
    pre * a * kernel_norm(alpha, te, n)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub total_shots: u64,
    pub alpha: f64,
    pub eta: f64,
    pub tau: f64,
    pub j_max: usize,
    /// S_j for j = 1..=j_max.
    pub shots: Vec<u64>,
    /// A = Σ_j e^{−αjτη}.
    pub norm: f64,
}

impl SamplingPlan {
    pub fn shots_at(&self, j: usize) -> u64 {
        self.shots[j - 1]
    }
}

/// S_j ∝ e^{−αjτη}, rounded by largest remainder so that Σ S_j = S.
pub fn allocate_shots(total: u64, alpha: f64, eta: f64, tau: f64, j_max: usize) -> Result<SamplingPlan> {
    if total == 0 || j_max == 0 || alpha < 0.0 || !alpha.is_finite() || eta <= 0.0 || tau <= 0.0 {
        return Err(Error::Argument("allocate_shots needs S ≥ 1, j_max ≥ 1, α ≥ 0, η, τ > 0".into()));
    }
    let te = tau * eta;
    let norm = kernel_norm(alpha, te, j_max);
    let ideal: Vec<f64> =
        (1..=j_max).map(|j| total as f64 * (-alpha * j as f64 * te).exp() / norm).collect();
    let mut shots: Vec<u64> = ideal.iter().map(|x| x.floor() as u64).collect();
    let assigned: u64 = shots.iter().sum();
    let mut order: Vec<usize> = (0..j_max).collect();
    order.sort_by(|&a, &b| {
        let ra = ideal[a] - ideal[a].floor();
        let rb = ideal[b] - ideal[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take((total - assigned) as usize) {
        shots[i] += 1;
    }
    Ok(SamplingPlan { total_shots: total, alpha, eta, tau, j_max, shots, norm })
}

/// Shot-noise estimate of a series: per j, the mean of ±1 outcomes and its
/// estimated variance for the real and imaginary parts.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NoisySeries {
    pub series: TimeSeries,
    /// [var Re, var Im] for j = 0..=j_max; infinite where no shots were taken.
    pub variance: Vec<[f64; 2]>,
    /// [shots Re, shots Im] for j = 0..=j_max.
    pub shots: Vec<[u64; 2]>,
    pub seed: u64,
}

fn bernoulli_mean<R: Rng>(mean: f64, n: u64, rng: &mut R) -> (f64, f64) {
    if n == 0 {
        return (0.0, f64::INFINITY);
    }
    let p = ((1.0 + mean) / 2.0).clamp(0.0, 1.0);
    let k = Binomial::new(n, p).expect("valid binomial").sample(rng);
    let x = 2.0 * k as f64 / n as f64 - 1.0;
    (x, (1.0 - x * x).max(0.0) / n as f64)
}

/// Draws S_j Hadamard-test outcomes per j with the exact values as means.
/// S_j is split between the parts with the odd shot going to Re. G(0) = 1 is
/// known and not sampled.
pub fn sample_series<R: Rng>(exact: &TimeSeries, plan: &SamplingPlan, seed: u64, rng: &mut R) -> Result<NoisySeries> {
    if plan.j_max > exact.j_max() {
        return Err(Error::Argument(format!(
            "plan needs j_max {} but the series stops at {}",
            plan.j_max,
            exact.j_max()
        )));
    }
    let mut values = vec![exact.values[0]];
    let mut variance = vec![[0.0, 0.0]];
    let mut shots = vec![[0, 0]];
    for j in 1..=plan.j_max {
        let s = plan.shots_at(j);
        let (n_re, n_im) = (s - s / 2, s / 2);
        let (re, v_re) = bernoulli_mean(exact.values[j].re, n_re, rng);
        let (im, v_im) = bernoulli_mean(exact.values[j].im, n_im, rng);
        if s == 0 {
            log::warn!("no shots allocated at j = {j}");
        }
        values.push(Complex64::new(re, im));
        variance.push([v_re, v_im]);
        shots.push([n_re, n_im]);
    }
    let series = TimeSeries { values, ..exact.clone() };
    Ok(NoisySeries { series, variance, shots, seed })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumEstimate {
    pub omega: Vec<f64>,
    /// −Im G(ω), normalized as (η/π)·Σ_F w_F η/((E_F − ω)² + η²) / Σ w.
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub eta: f64,
    pub tau: f64,
    pub j_max: usize,
    pub seed: Option<u64>,
    pub plan: Option<SamplingPlan>,
}

/// 512-point grid over [center − ‖H‖_ω, center + ‖H‖_ω].
pub fn default_grid(center: f64, h_norm: f64) -> Vec<f64> {
    crate::exact::uniform_grid(center - h_norm, center + h_norm, 512)
}

/// (ητ/2π)·[1 + 2Σ_{j=1}^{j_max} e^{−ητj}(cos(ωτj)·Re G_j − sin(ωτj)·Im G_j)].
///
/// The Monte Carlo estimator (A/S)·Σ_shots e^{−ητj}G̃/e^{−αητj} reduces, with
/// deterministic S_j, to the kernel-weighted per-j means used here.
pub fn reconstruct(
    series: &TimeSeries,
    variance: Option<&[[f64; 2]]>,
    eta: f64,
    j_max: usize,
    omega: &[f64],
) -> Result<SpectrumEstimate> {
    if j_max > series.j_max() {
        return Err(Error::Argument(format!("series stops at j = {}, need {j_max}", series.j_max())));
    }
    let tau = series.tau;
    let pre = eta * tau / (2.0 * PI);
    let damp: Vec<f64> = (0..=j_max).map(|j| (-eta * tau * j as f64).exp()).collect();
    let mut values = Vec::with_capacity(omega.len());
    let mut stderr = Vec::with_capacity(omega.len());
    for &w in omega {
        let mut acc = 0.0;
        let mut var = 0.0;
        for j in 1..=j_max {
            let (s, c) = (w * tau * j as f64).sin_cos();
            let g = series.values[j];
            acc += damp[j] * (c * g.re - s * g.im);
            if let Some(v) = variance {
                let [vr, vi] = v[j];
                let a = damp[j] * c;
                let b = damp[j] * s;
                // a zero coefficient never multiplies an unsampled part
                if a != 0.0 {
                    var += a * a * vr;
                }
                if b != 0.0 {
                    var += b * b * vi;
                }
            }
        }
        values.push(pre * (1.0 + 2.0 * acc));
        stderr.push(2.0 * pre * var.sqrt());
    }
    Ok(SpectrumEstimate { omega: omega.to_vec(), values, stderr, eta, tau, j_max, seed: None, plan: None })
}

pub fn reconstruct_sampled(noisy: &NoisySeries, plan: &SamplingPlan, omega: &[f64]) -> Result<SpectrumEstimate> {
    let mut est = reconstruct(&noisy.series, Some(&noisy.variance), plan.eta, plan.j_max, omega)?;
    est.seed = Some(noisy.seed);
    est.plan = Some(plan.clone());
    Ok(est)
}

impl SpectrumEstimate {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("omega,intensity,stderr\n");
        for ((w, v), e) in self.omega.iter().zip(&self.values).zip(&self.stderr) {
            let _ = writeln!(s, "{w:.10},{v:.12e},{e:.6e}");
        }
        s
    }

    /// Single-polyline plot with axis labels.
    pub fn to_svg(&self, title: &str) -> String {
        let (w, h, m) = (640.0, 400.0, 50.0);
        let (x0, x1) = (self.omega[0], *self.omega.last().unwrap());
        let ymax = self.values.iter().cloned().fold(f64::MIN, f64::max);
        let ymin = self.values.iter().cloned().fold(f64::MAX, f64::min).min(0.0);
        let span = if ymax > ymin { ymax - ymin } else { 1.0 };
        let xs = |x: f64| m + (x - x0) / (x1 - x0).max(f64::MIN_POSITIVE) * (w - 2.0 * m);
        let ys = |y: f64| h - m - (y - ymin) / span * (h - 2.0 * m);
        let points: Vec<String> =
            self.omega.iter().zip(&self.values).map(|(&x, &y)| format!("{:.2},{:.2}", xs(x), ys(y))).collect();
        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">"#);
        let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">{title}</text>"#, w / 2.0);
        let _ = writeln!(
            s,
            r#"<line x1="{m}" y1="{}" x2="{}" y2="{}" stroke="black"/><line x1="{m}" y1="{m}" x2="{m}" y2="{}" stroke="black"/>"#,
            h - m,
            w - m,
            h - m,
            h - m
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">ω (Ha) [{x0:.3}, {x1:.3}]</text>"#, w / 2.0, h - 10.0);
        let _ = writeln!(s, r#"<text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">−Im G(ω)</text>"#, h / 2.0, h / 2.0);
        let _ = writeln!(s, r#"<polyline fill="none" stroke="navy" points="{}"/>"#, points.join(" "));
        s.push_str("</svg>\n");
        s
    }
}

/// Σ_ρ ‖m̂_ρ|I⟩‖²·π·(−Im G_ρ(ω))/η, i.e. Σ_F |⟨F|m̂_ρ|I⟩|² η/((E_F − ω)² + η²),
/// optionally times 4πω/3c.
pub fn combine_cartesian(spectra: &[SpectrumEstimate], norms: &[f64], physical: bool) -> Result<SpectrumEstimate> {
    let first = spectra.first().ok_or_else(|| Error::Argument("no spectra to combine".into()))?;
    if spectra.len() != norms.len() {
        return Err(Error::Argument("one norm per component is required".into()));
    }
    for s in spectra {
        if s.omega.len() != first.omega.len() || s.omega.iter().zip(&first.omega).any(|(a, b)| (a - b).abs() > 1e-12) {
            return Err(Error::Argument("component grids differ".into()));
        }
        if (s.eta - first.eta).abs() > 1e-15 {
            return Err(Error::Argument("component broadenings differ".into()));
        }
    }
    let n = first.omega.len();
    let mut values = vec![0.0; n];
    let mut var = vec![0.0; n];
    for (s, &norm) in spectra.iter().zip(norms) {
        if norm == 0.0 {
            continue;
        }
        let f = norm * PI / s.eta;
        for i in 0..n {
            values[i] += f * s.values[i];
            var[i] += (f * s.stderr[i]).powi(2);
        }
    }
    let mut stderr: Vec<f64> = var.into_iter().map(f64::sqrt).collect();
    if physical {
        for i in 0..n {
            let p = physical_prefactor(first.omega[i]);
            values[i] *= p;
            stderr[i] *= p.abs();
        }
    }
    Ok(SpectrumEstimate { values, stderr, seed: None, plan: None, ..first.clone() })
}

/// e^{−Jτη}/π: the kernel mass left out by stopping the series at index J.
/// With J = 2j_max this is e^{−2j_maxτη}/π.
pub fn truncation_bound(last: usize, tau: f64, eta: f64) -> f64 {
    (-(last as f64) * tau * eta).exp() / PI
}

/// η·J·τ³·‖H‖_ω²/(24π): midpoint error of the Riemann sum over J samples.
pub fn discretization_bound(last: usize, tau: f64, eta: f64, h_norm: f64) -> f64 {
    eta * last as f64 * tau.powi(3) * h_norm * h_norm / (24.0 * PI)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Targets {
    pub trunc: f64,
    pub disc: f64,
    pub meas: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolvedParameters {
    pub tau: f64,
    pub j_max: usize,
    /// Highest sampled index, 2j_max.
    pub samples: usize,
    pub shots: f64,
    pub alpha: f64,
    pub trunc_bound: f64,
    pub disc_bound: f64,
    /// Largest sample count allowed by the discretization target.
    pub samples_disc: f64,
    pub warning: Option<String>,
}

/// τ = π/(2‖H‖_ω), j_max from e^{−2j_maxτη}/π ≤ ε_trunc, S from the shot formula.
/// The series is sampled at j = 1..=2j_max.
pub fn solve_parameters(t: &Targets, eta: f64, h_norm: f64, alpha: f64) -> Result<SolvedParameters> {
    if !(t.trunc > 0.0 && t.disc > 0.0 && t.meas > 0.0 && eta > 0.0 && h_norm > 0.0 && alpha >= 0.0) {
        return Err(Error::Argument("targets, η and ‖H‖_ω must be positive".into()));
    }
    let tau = PI / (2.0 * h_norm);
    let j_max = ((-(PI * t.trunc).ln() / (2.0 * tau * eta)).ceil()).max(1.0) as usize;
    let samples = 2 * j_max;
    let shots = shot_requirement(alpha, eta, tau, samples, t.meas);
    let samples_disc = 24.0 * PI * t.disc / (h_norm * h_norm * eta * tau.powi(3));
    let warning = (samples as f64 > 10.0 * samples_disc).then(|| {
        format!("{samples} samples from the truncation target exceed the discretization limit {samples_disc:.1} by more than 10×")
    });
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    Ok(SolvedParameters {
        tau,
        j_max,
        samples,
        shots,
        alpha,
        trunc_bound: truncation_bound(samples, tau, eta),
        disc_bound: discretization_bound(samples, tau, eta, h_norm),
        samples_disc,
        warning,
    })
}

/// Total gate cost of a sampling campaign as a function of α:
/// C(α) = Σ_j S_j·(C_S + (jτ/Δ)·C_step), S_j = S(α)e^{−αjτη}/A, over 2j_max times.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AlphaProblem {
    pub c_state: f64,
    pub c_step: f64,
    pub tau: f64,
    pub delta: f64,
    pub eta: f64,
    pub j_max: usize,
    pub eps_meas: f64,
}

impl AlphaProblem {
    pub fn cost(&self, alpha: f64) -> f64 {
        let n = 2 * self.j_max;
        let te = self.tau * self.eta;
        let s = shot_requirement(alpha, self.eta, self.tau, n, self.eps_meas);
        let a = kernel_norm(alpha, te, n);
        let per: f64 = (1..=n)
            .map(|j| {
                let c = self.c_state + j as f64 * self.tau / self.delta * self.c_step;
                (-alpha * j as f64 * te).exp() * c
            })
            .sum();
        s * per / a
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AlphaOptimum {
    pub alpha: f64,
    pub cost: f64,
    pub cost_alpha_one: f64,
    pub cost_uniform: f64,
    pub ratio_vs_one: f64,
    pub ratio_vs_uniform: f64,
}

/// Golden-section search for α ∈ [0, 3].
pub fn optimize_alpha(p: &AlphaProblem) -> AlphaOptimum {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, 3.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (p.cost(c), p.cost(d));
    while b - a > 1e-4 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = p.cost(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = p.cost(d);
        }
    }
    let alpha = (a + b) / 2.0;
    let cost = p.cost(alpha);
    let cost_alpha_one = p.cost(1.0);
    let cost_uniform = p.cost(0.0);
    AlphaOptimum {
        alpha,
        cost,
        cost_alpha_one,
        cost_uniform,
        ratio_vs_one: cost_alpha_one / cost,
        ratio_vs_uniform: cost_uniform / cost,
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub trunc: f64,
    pub disc: f64,
    pub meas: f64,
    pub trot: f64,
    pub rot: f64,
    pub cdf: f64,
}

impl ErrorBudget {
    pub fn validate(&self) -> Result<()> {
        let all = [self.trunc, self.disc, self.meas, self.trot, self.rot, self.cdf];
        if all.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Consistency(format!("negative or undefined error term in {self:?}")));
        }
        Ok(())
    }

    /// Spectrum-level terms: truncation + discretization + measurement.
    pub fn spectral(&self) -> f64 {
        self.trunc + self.disc + self.meas
    }
}

/// Δ ≤ (target/|⟨Y₃⟩|)^{1/2} for a second-order formula.
pub fn trotter_step_for(target: f64, y3: f64) -> f64 {
    if y3 == 0.0 {
        f64::INFINITY
    } else {
        (target / y3.abs()).sqrt()
    }
}

/// Equivalent-measurement factor of the double-measurement circuit at ⟨U⟩ = u.
/// The two correction terms are the inverse variances of the |Im| estimates
/// from the ± projection branches, with inner denominators 2(1 ± Im⟨U⟩). Both
/// circuit types measure |⟨U⟩|², so each term enters twice.
pub fn double_measurement_gain(u: Complex64) -> f64 {
    let (re, im) = (u.re, u.im);
    let term = |s: f64| {
        let p = ((1.0 + s * re).powi(2) + im * im) / (2.0 * (1.0 + s * im));
        let den = 2.0 * (1.0 + s * re) + (p - 1.0 - s * re).powi(2);
        if im == 0.0 || !den.is_finite() || den <= 0.0 {
            0.0
        } else {
            im * im / den
        }
    };
    1.0 + 2.0 * (term(1.0) + term(-1.0))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GainQuadrature {
    pub disk_mean: f64,
    pub circle_mean: f64,
    pub max: f64,
}

/// Midpoint quadrature of the gain over the unit disk (area-weighted) and the
/// unit circle.
pub fn gain_quadrature(n_radial: usize, n_angular: usize) -> GainQuadrature {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut max = f64::MIN;
    for i in 0..n_radial {
        let r = (i as f64 + 0.5) / n_radial as f64;
        for k in 0..n_angular {
            let t = 2.0 * PI * (k as f64 + 0.5) / n_angular as f64;
            let g = double_measurement_gain(Complex64::from_polar(r, t));
            num += g * r;
            den += r;
            max = max.max(g);
        }
    }
    let mut circ = 0.0;
    for k in 0..n_angular {
        let t = 2.0 * PI * (k as f64 + 0.5) / n_angular as f64;
        let g = double_measurement_gain(Complex64::from_polar(1.0, t));
        circ += g;
        max = max.max(g);
    }
    GainQuadrature { disk_mean: num / den, circle_mean: circ / n_angular as f64, max }
}

#[derive(Clone, Copy, Debug, Default)]
struct Counts {
    n: [[u64; 2]; 2],
}

impl Counts {
    fn total(&self) -> u64 {
        self.n.iter().flatten().sum()
    }
    /// Ancilla estimate of the measured component.
    fn component(&self) -> f64 {
        let t = self.total() as f64;
        (self.n[0][0] + self.n[0][1]) as f64 * 2.0 / t - 1.0
    }
    fn proj0(&self) -> f64 {
        (self.n[0][0] + self.n[1][0]) as f64 / self.total() as f64
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DoubleMeasurementEstimate {
    pub j: usize,
    pub value: Complex64,
    /// [var Re, var Im].
    pub variance: [f64; 2],
    /// Direct ancilla-only estimate, for comparison.
    pub hadamard: Complex64,
    pub hadamard_variance: [f64; 2],
    pub effective_gain: f64,
    pub clipped: bool,
}

fn combine(direct: f64, var_direct: f64, magnitude: Option<(f64, f64)>) -> (f64, f64) {
    match magnitude {
        Some((m, v)) if v.is_finite() && v > 0.0 && var_direct > 0.0 => {
            let signed = if direct < 0.0 { -m } else { m };
            let w = 1.0 / var_direct + 1.0 / v;
            ((direct / var_direct + signed / v) / w, 1.0 / w)
        }
        _ => (direct, var_direct),
    }
}

/// Estimates ⟨U⟩ at each j from a transcript of Re- and Im-type shots.
///
/// The ancilla gives the measured component x directly. The projection
/// frequency gives |⟨U⟩|² = 2P(proj = 0) − 1, pooled over both circuit types,
/// and hence |y| = (|⟨U⟩|² − x²)^{1/2} for the other component, signed by its
/// own ancilla estimate. The two are combined by inverse variance.
pub fn double_measurement_estimate(records: &[ShotRecord]) -> Result<Vec<DoubleMeasurementEstimate>> {
    let mut by_j: std::collections::BTreeMap<usize, [Counts; 2]> = Default::default();
    for r in records {
        if r.ancilla > 1 || r.projection > 1 {
            return Err(Error::Format(format!("invalid shot record {r:?}")));
        }
        let c = by_j.entry(r.j).or_default();
        let k = if r.part == Part::Re { 0 } else { 1 };
        c[k].n[r.ancilla as usize][r.projection as usize] += 1;
    }
    let mut out = Vec::new();
    for (j, [re_c, im_c]) in by_j {
        let (nr, ni) = (re_c.total() as f64, im_c.total() as f64);
        if nr == 0.0 || ni == 0.0 {
            return Err(Error::Argument(format!("j = {j} needs both Re- and Im-type shots")));
        }
        let x = re_c.component();
        let y = im_c.component();
        let vx = ((1.0 - x * x) / nr).max(1.0 / (nr * nr));
        let vy = ((1.0 - y * y) / ni).max(1.0 / (ni * ni));
        let p0 = (re_c.proj0() * nr + im_c.proj0() * ni) / (nr + ni);
        let mut r2 = 2.0 * p0 - 1.0;
        let mut clipped = false;
        if r2 < 0.0 {
            clipped = true;
            r2 = 0.0;
        }
        let var_r2 = (4.0 * p0 * (1.0 - p0) / (nr + ni)).max(1.0 / (nr + ni).powi(2));
        let other = |own: f64, v_own: f64| -> (Option<(f64, f64)>, bool) {
            let d = r2 - own * own;
            if d <= 0.0 {
                return (None, d < 0.0);
            }
            let m = d.sqrt();
            (Some((m, (var_r2 + 4.0 * own * own * v_own) / (4.0 * d))), false)
        };
        let (my, cy) = other(x, vx);
        let (mx, cx) = other(y, vy);
        clipped |= cx | cy;
        if clipped {
            log::warn!("projection frequency outside the feasible region at j = {j}; clipped");
        }
        let (re, v_re) = combine(x, vx, mx);
        let (im, v_im) = combine(y, vy, my);
        let value = Complex64::new(re, im);
        out.push(DoubleMeasurementEstimate {
            j,
            value,
            variance: [v_re, v_im],
            hadamard: Complex64::new(x, y),
            hadamard_variance: [vx, vy],
            effective_gain: double_measurement_gain(value),
            clipped,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn largest_remainder_is_exact() {
        let p = allocate_shots(1000, 0.7, 0.05, 0.3, 37).unwrap();
        assert_eq!(p.shots.iter().sum::<u64>(), 1000);
    }

    #[test]
    fn gain_at_real_unity_is_one() {
        assert_eq!(double_measurement_gain(Complex64::new(1.0, 0.0)), 1.0);
    }
}
