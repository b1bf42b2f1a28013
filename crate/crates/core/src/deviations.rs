//! Fejér kernels, Fejér-weighted averages of shifts, Fourier-decay checks of
//! sampled functions and empirical large-deviation measurements for `u_N`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::arithmetic::{torus_dist, Frequency};
use crate::cocycle::{transfer_log_norm, CocycleParams};
use crate::error::{invalid, Error, Result};
use crate::fit::LineFit;
use crate::gevrey::Potential;
use crate::lyapunov::{default_quadrature, finite_lyapunov};

/// Minimum number of phase samples for a deviation estimate.
pub const MIN_SAMPLES: usize = 1000;

/// `K_R^p(t) = R^{−p} Σ_{j=0}^{p(R−1)} c(j) e^{ijt}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FejerKernel {
    pub r: u64,
    pub p: u32,
    pub coeffs: Vec<u64>,
}

/// Coefficients of `(Σ_{j<R} e^{ijt})^p` by repeated convolution.
pub fn fejer_coeffs(r: u64, p: u32) -> Result<FejerKernel> {
    if r == 0 || p == 0 {
        return Err(invalid("R and p must be positive"));
    }
    match r.checked_pow(p) {
        Some(v) if v <= 1 << 62 => {}
        _ => {
            return Err(Error::Overflow(format!(
                "R^p = {r}^{p} exceeds 2^62; choose a smaller order"
            )))
        }
    }
    let mut coeffs = vec![1u64; r as usize];
    for _ in 1..p {
        let mut next = vec![0u64; coeffs.len() + r as usize - 1];
        // running window sum of width R
        let mut window = 0u64;
        for (i, slot) in next.iter_mut().enumerate() {
            if i < coeffs.len() {
                window += coeffs[i];
            }
            if i >= r as usize {
                window -= coeffs[i - r as usize];
            }
            *slot = window;
        }
        coeffs = next;
    }
    Ok(FejerKernel { r, p, coeffs })
}

impl FejerKernel {
    pub fn normalization(&self) -> f64 {
        (self.r as f64).powi(self.p as i32)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Weights `c(j)/R^p`.
    pub fn weights(&self) -> Vec<f64> {
        let norm = self.normalization();
        self.coeffs.iter().map(|&c| c as f64 / norm).collect()
    }

    /// `‖t‖ = torus_dist(t)/2π`.
    pub fn bound(&self, t: f64) -> f64 {
        let d = torus_dist(t) / TAU;
        2.0 / (1.0 + (self.r as f64 * d).powi(self.p as i32))
    }
}

/// `K_R^p(t)` in closed form.
pub fn kernel_value(kern: &FejerKernel, t: f64) -> Complex64 {
    let r = kern.r as f64;
    let half = 0.5 * t;
    let s = half.sin();
    // Dirichlet ratio sin(Rt/2)/(R sin(t/2)), equal to 1 at t ∈ 2πZ
    let ratio = if s.abs() < 1e-300 {
        (r * half).cos() / half.cos()
    } else {
        (r * half).sin() / (r * s)
    };
    let base = Complex64::from_polar(ratio, (r - 1.0) * half);
    base.powu(kern.p)
}

/// `Σ_j c(j)/R^p · u(x + jω)`.
pub fn shift_average(u: impl Fn(f64) -> f64, x: f64, omega: &Frequency, kern: &FejerKernel) -> f64 {
    let w = omega.omega();
    let norm = kern.normalization();
    kern.coeffs
        .iter()
        .enumerate()
        .map(|(j, &c)| c as f64 * u(x + j as f64 * w))
        .sum::<f64>()
        / norm
}

/// `Σ_{k ∈ [start, start+len)} |K_R^p(kω)|`.
pub fn kernel_interval_sum(kern: &FejerKernel, omega: &Frequency, start: i64, len: u64) -> f64 {
    (0..len as i64)
        .map(|i| kernel_value(kern, (start + i) as f64 * omega.omega()).norm())
        .sum()
}

/// Uniform samples `u(2πj/G)`.
pub fn sample_on_grid(u: impl Fn(f64) -> f64 + Sync, grid: usize) -> Vec<f64> {
    (0..grid)
        .into_par_iter()
        .map(|j| u(TAU * j as f64 / grid as f64))
        .collect()
}

/// `û(k)` for `0 ≤ k < G` of samples `u(2πj/G)`.
pub fn discrete_fourier(samples: &[f64]) -> Vec<Complex64> {
    let g = samples.len();
    let mut buf: Vec<Complex64> = samples.iter().map(|&s| Complex64::new(s, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(g).process(&mut buf);
    buf.iter_mut().for_each(|c| *c /= g as f64);
    buf
}

/// `max_{1≤|k|≤K} |û(k)|·|k|·ρ/S` and the maximizing `k > 0`.
pub fn fourier_decay_check(
    samples: &[f64],
    s: f64,
    rho: f64,
    k_max: usize,
) -> Result<(f64, usize)> {
    if k_max == 0 {
        return Err(invalid("K_max must be positive"));
    }
    if samples.len() < 4 * k_max {
        return Err(invalid(format!(
            "need at least 4·K_max = {} samples, got {}",
            4 * k_max,
            samples.len()
        )));
    }
    if !(s > 0.0 && rho > 0.0) {
        return Err(invalid("S and rho must be positive"));
    }
    let hat = discrete_fourier(samples);
    let g = samples.len();
    let mut best = (0.0, 1);
    for k in 1..=k_max {
        // real samples: |û(−k)| = |û(k)| up to rounding
        let mag = hat[k].norm().max(hat[g - k].norm());
        let v = mag * k as f64 * rho / s;
        if v > best.0 {
            best = (v, k);
        }
    }
    Ok(best)
}

/// Empirical measure of `{x : |u_N(x) − L_N| > N^{−τ}}` at one scale.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationReport {
    pub n: usize,
    pub tau: f64,
    pub threshold: f64,
    pub sample_count: usize,
    pub exceed_count: usize,
    /// Fraction over uniformly random phases.
    pub exceed_fraction: f64,
    /// Fraction over the equispaced cross-check grid.
    pub grid_exceed_fraction: f64,
    /// Quadrature value of `L_N`.
    pub l_n: f64,
    /// Mean of `u_N` over the random samples.
    pub mean_value: f64,
    pub seed: u64,
}

impl DeviationReport {
    pub fn csv_header() -> &'static str {
        "N,tau,threshold,samples,exceed_fraction,mean,seed"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.n,
            self.tau,
            self.threshold,
            self.sample_count,
            self.exceed_fraction,
            self.mean_value,
            self.seed
        )
    }
}

/// Reports across scales with the fitted decay exponent `σ` of
/// `fraction ≈ e^{−N^σ}`.
#[derive(Debug, Clone, Serialize)]
pub struct LdtOutcome {
    pub reports: Vec<DeviationReport>,
    pub sigma_fit: Option<LineFit>,
}

impl LdtOutcome {
    pub fn sigma(&self) -> Option<f64> {
        self.sigma_fit.map(|f| f.slope)
    }
}

/// Uniform phases in `[0, 2π)` from a seeded stream; independent of worker count.
pub fn random_phases(count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.random_range(0.0..TAU)).collect()
}

/// Fit `log(−log f)` against `log N` over fractions in `(10/samples, 0.5)`.
pub fn fit_sigma(reports: &[DeviationReport]) -> Option<LineFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = reports
        .iter()
        .filter(|r| r.exceed_fraction > 10.0 / r.sample_count as f64 && r.exceed_fraction < 0.5)
        .map(|r| ((r.n as f64).ln(), (-r.exceed_fraction.ln()).ln()))
        .unzip();
    LineFit::new(&xs, &ys)
}

pub fn ldt_empirical(
    params: &CocycleParams,
    potential: &impl Potential,
    n_list: &[usize],
    tau: f64,
    sample_count: usize,
    seed: u64,
) -> Result<LdtOutcome> {
    if sample_count < MIN_SAMPLES {
        return Err(invalid(format!(
            "sample_count must be at least {MIN_SAMPLES} (got {sample_count})"
        )));
    }
    if n_list.is_empty() || n_list.windows(2).any(|w| w[1] <= w[0]) || n_list[0] == 0 {
        return Err(invalid("N_list must be positive and strictly increasing"));
    }
    let phases = random_phases(sample_count, seed);
    let mut reports = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let l_n = finite_lyapunov(params, potential, n, default_quadrature(n));
        let threshold = (n as f64).powf(-tau);
        let values: Vec<f64> = phases
            .par_iter()
            .map(|&x| transfer_log_norm(params, potential, x, n))
            .collect();
        let exceed_count = values
            .iter()
            .filter(|&&u| (u - l_n).abs() > threshold)
            .count();
        let grid_hits = (0..sample_count)
            .into_par_iter()
            .filter(|&j| {
                let x = TAU * (j as f64 + 0.5) / sample_count as f64;
                (transfer_log_norm(params, potential, x, n) - l_n).abs() > threshold
            })
            .count();
        reports.push(DeviationReport {
            n,
            tau,
            threshold,
            sample_count,
            exceed_count,
            exceed_fraction: exceed_count as f64 / sample_count as f64,
            grid_exceed_fraction: grid_hits as f64 / sample_count as f64,
            l_n,
            mean_value: values.iter().sum::<f64>() / sample_count as f64,
            seed,
        });
    }
    if reports.iter().all(|r| r.exceed_count == 0) {
        return Err(Error::AllZeroFractions { reports });
    }
    let sigma_fit = fit_sigma(&reports);
    Ok(LdtOutcome { reports, sigma_fit })
}

/// `(S/ρ) R^{−a}`, the deviation scale for averages of `R` shifts.
pub fn shift_threshold(s: f64, rho: f64, r: u64, a: f64) -> f64 {
    s / rho * (r as f64).powf(-a)
}

/// Fraction of sampled phases whose Fejér shift-average of `u_N` deviates
/// from `⟨u_N⟩` by more than `threshold`.
#[derive(Debug, Clone, Serialize)]
pub struct ShiftDeviationReport {
    pub n: usize,
    pub r: u64,
    pub p: u32,
    pub threshold: f64,
    pub mean_u: f64,
    pub sample_count: usize,
    pub exceed_count: usize,
    pub exceed_fraction: f64,
    pub max_deviation: f64,
    /// Binomial standard error of the fraction, floored at one sample.
    pub standard_error: f64,
}

pub fn shift_deviation(
    params: &CocycleParams,
    potential: &impl Potential,
    n: usize,
    kern: &FejerKernel,
    threshold: f64,
    sample_count: usize,
    seed: u64,
) -> Result<ShiftDeviationReport> {
    if sample_count == 0 || n == 0 {
        return Err(invalid("N and sample_count must be positive"));
    }
    let mean_u = finite_lyapunov(params, potential, n, default_quadrature(n));
    let phases = random_phases(sample_count, seed);
    let deviations: Vec<f64> = phases
        .par_iter()
        .map(|&x| {
            let avg = shift_average(
                |y| transfer_log_norm(params, potential, y, n),
                x,
                &params.omega,
                kern,
            );
            (avg - mean_u).abs()
        })
        .collect();
    let exceed_count = deviations.iter().filter(|&&d| d > threshold).count();
    let frac = exceed_count as f64 / sample_count as f64;
    let m = sample_count as f64;
    Ok(ShiftDeviationReport {
        n,
        r: kern.r,
        p: kern.p,
        threshold,
        mean_u,
        sample_count,
        exceed_count,
        exceed_fraction: frac,
        max_deviation: deviations.iter().copied().fold(0.0, f64::max),
        standard_error: (frac * (1.0 - frac) / m).sqrt().max(1.0 / m),
    })
}
