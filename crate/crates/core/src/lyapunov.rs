//! Finite-scale Lyapunov exponents by phase quadrature, the avalanche
//! principle (as a checker and as a multiscale estimator), positivity scans
//! and continuity probes.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cocycle::{transfer_log_norm, CocycleParams, LogProduct, SL2};
use crate::error::{invalid, AvalancheHypothesis, Error, InductionHypothesis, Result};
use crate::fit::{linspace, LineFit};
use crate::gevrey::Potential;

/// `max(400, 4√N)`.
pub fn default_quadrature(n: usize) -> usize {
    400.max((4.0 * (n as f64).sqrt()).ceil() as usize)
}

/// Quadrature nodes `2π(j + ½)/Q`.
pub fn quadrature_nodes(q: usize) -> impl IndexedParallelIterator<Item = f64> {
    (0..q)
        .into_par_iter()
        .map(move |j| TAU * (j as f64 + 0.5) / q as f64)
}

/// Sum in index order so the result does not depend on the worker count.
pub(crate) fn ordered_mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// `L_N(E) = ∫ (1/N) log ‖M_N(x, E)‖ dx` on a `Q`-point equispaced grid.
pub fn finite_lyapunov(
    params: &CocycleParams,
    potential: &impl Potential,
    n: usize,
    q: usize,
) -> f64 {
    assert!(n >= 1 && q >= 1, "N and Q must be positive");
    let values: Vec<f64> = quadrature_nodes(q)
        .map(|x| transfer_log_norm(params, potential, x, n))
        .collect();
    ordered_mean(&values)
}

/// `E ↦ L_N(E)` on a grid of energies.
#[derive(Debug, Clone, Serialize)]
pub struct LyapunovCurve {
    pub energies: Vec<f64>,
    pub n: usize,
    pub values: Vec<f64>,
    pub quadrature_size: usize,
    pub params: CocycleParams,
}

impl LyapunovCurve {
    /// Linear interpolation inside the grid; `None` outside it.
    pub fn interpolate(&self, energy: f64) -> Option<f64> {
        let es = &self.energies;
        if es.is_empty() || energy < es[0] || energy > es[es.len() - 1] {
            return None;
        }
        let i = es.partition_point(|&e| e <= energy);
        if i == 0 {
            return Some(self.values[0]);
        }
        if i >= es.len() {
            return Some(self.values[es.len() - 1]);
        }
        let (e0, e1) = (es[i - 1], es[i]);
        let w = (energy - e0) / (e1 - e0);
        Some(self.values[i - 1] * (1.0 - w) + self.values[i] * w)
    }

    /// CSV with columns `E,L_N,N,Q`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("E,L_N,N,Q\n");
        for (e, l) in self.energies.iter().zip(&self.values) {
            out.push_str(&format!("{e},{l},{},{}\n", self.n, self.quadrature_size));
        }
        out
    }

    /// Largest jump between neighbouring grid values.
    pub fn max_jump(&self) -> f64 {
        self.values
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .fold(0.0, f64::max)
    }
}

pub fn lyapunov_curve(
    params: &CocycleParams,
    potential: &impl Potential,
    energies: &[f64],
    n: usize,
    q: usize,
) -> LyapunovCurve {
    assert!(n >= 1 && q >= 1, "N and Q must be positive");
    let per_energy: Vec<CocycleParams> = energies.iter().map(|&e| params.with_energy(e)).collect();
    let raw: Vec<f64> = (0..energies.len() * q)
        .into_par_iter()
        .map(|idx| {
            let (ei, j) = (idx / q, idx % q);
            let x = TAU * (j as f64 + 0.5) / q as f64;
            transfer_log_norm(&per_energy[ei], potential, x, n)
        })
        .collect();
    let values = raw.chunks(q).map(ordered_mean).collect();
    LyapunovCurve {
        energies: energies.to_vec(),
        n,
        values,
        quadrature_size: q,
        params: *params,
    }
}

/// Outcome of the avalanche-principle check on `A_1, …, A_n`.
#[derive(Debug, Clone, Serialize)]
pub struct AvalancheReport {
    pub n: usize,
    pub mu: f64,
    pub hypothesis_min_ok: bool,
    pub hypothesis_pair_ok: bool,
    /// `|log‖A_n···A_1‖ + Σ_{j=2}^{n−1} log‖A_j‖ − Σ_{j=1}^{n−1} log‖A_{j+1}A_j‖|`
    pub defect: f64,
    /// Empirical `C` in `defect ≤ C n/μ`.
    pub constant: f64,
    pub min_norm: f64,
    pub max_pair_defect: f64,
}

pub fn avalanche_check(matrices: &[SL2], mu: f64) -> Result<AvalancheReport> {
    let n = matrices.len();
    if n < 3 {
        return Err(invalid("the avalanche principle needs at least 3 matrices"));
    }
    if !(mu > 0.0) {
        return Err(invalid("mu must be positive"));
    }
    let log_norms: Vec<f64> = matrices.iter().map(|a| a.norm().ln()).collect();
    let pair_logs: Vec<f64> = matrices
        .windows(2)
        .map(|w| (w[1] * w[0]).norm().ln())
        .collect();

    let min_norm = matrices.iter().map(SL2::norm).fold(f64::INFINITY, f64::min);
    let max_pair_defect = (0..n - 1)
        .map(|j| log_norms[j + 1] + log_norms[j] - pair_logs[j])
        .fold(f64::NEG_INFINITY, f64::max);
    // relative slack absorbs rounding in the closed-form norm
    let hypothesis_min_ok = min_norm >= mu * (1.0 - 1e-12) && mu >= n as f64;
    let hypothesis_pair_ok = max_pair_defect <= 0.5 * mu.ln();

    let mut prod = LogProduct::default();
    for &a in matrices {
        prod.push(a);
    }
    let total =
        prod.log_total() + log_norms[1..n - 1].iter().sum::<f64>() - pair_logs.iter().sum::<f64>();
    let defect = total.abs();
    let report = AvalancheReport {
        n,
        mu,
        hypothesis_min_ok,
        hypothesis_pair_ok,
        defect,
        constant: defect * mu / n as f64,
        min_norm,
        max_pair_defect,
    };
    let which = match (hypothesis_min_ok, hypothesis_pair_ok) {
        (true, true) => return Ok(report),
        (false, true) => AvalancheHypothesis::MinimalNorm,
        (true, false) => AvalancheHypothesis::PairDefect,
        (false, false) => AvalancheHypothesis::Both,
    };
    Err(Error::AvalancheHypothesis {
        which,
        report: Box::new(report),
    })
}

/// `R(θ_j) diag(μ, 1/μ) R(φ_j)` with angles uniform in `[−spread, spread]`.
pub fn random_hyperbolic_family(n: usize, mu: f64, spread: f64, seed: u64) -> Vec<SL2> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let theta = rng.random_range(-spread..=spread);
            let phi = rng.random_range(-spread..=spread);
            SL2::rotation(theta) * SL2::diag(mu) * SL2::rotation(phi)
        })
        .collect()
}

/// Scales and exponents of the inductive step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiscaleConfig {
    pub n0: usize,
    pub gamma: f64,
    /// `b (s − 1)`
    pub delta: f64,
    /// `δ + 3`
    pub d_exp: f64,
    /// `max(12δ, 2)`
    pub a_exp: f64,
    /// `N0^{A^k}` for `k = 1, 2, …` up to `e^{0.9 γ N0}`.
    pub schedule: Vec<usize>,
    /// Largest `N·Q` evaluated directly.
    pub direct_budget: u64,
}

pub const DEFAULT_GAMMA: f64 = 0.5;
pub const DEFAULT_DIRECT_BUDGET: u64 = 200_000_000;

impl MultiscaleConfig {
    pub fn new(n0: usize, gamma: f64, delta: f64, levels: usize) -> Result<Self> {
        if n0 < 2 {
            return Err(invalid("N0 must be at least 2"));
        }
        if !(gamma > 0.25) {
            return Err(invalid(format!("gamma must exceed 1/4 (got {gamma})")));
        }
        if !(delta >= 0.0) {
            return Err(invalid("delta must be non-negative"));
        }
        let a_exp = (12.0 * delta).max(2.0);
        let ceiling = 0.9 * gamma * n0 as f64;
        let mut schedule = Vec::new();
        for k in 1..=levels.max(1) {
            let log_n = a_exp.powi(k as i32) * (n0 as f64).ln();
            if log_n > ceiling || log_n > 60.0 {
                break;
            }
            schedule.push(log_n.exp().round() as usize);
        }
        if schedule.is_empty() {
            return Err(invalid(format!(
                "N0^A = {:.3e} exceeds e^(0.9 γ N0) = {:.3e}",
                (a_exp * (n0 as f64).ln()).exp(),
                ceiling.exp()
            )));
        }
        Ok(Self {
            n0,
            gamma,
            delta,
            d_exp: delta + 3.0,
            a_exp,
            schedule,
            direct_budget: DEFAULT_DIRECT_BUDGET,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScaleEstimate {
    pub n: usize,
    /// `2 L_{2N0} − L_{N0}`
    pub predicted: f64,
    pub direct: Option<f64>,
    /// `|L_N + L_{N0} − 2 L_{2N0}|`
    pub defect: Option<f64>,
    /// Empirical `C0` in `defect ≤ C0 S N0/N`.
    pub c0: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MultiscaleReport {
    pub config: MultiscaleConfig,
    pub s_lambda: f64,
    pub l_n0: f64,
    pub l_2n0: f64,
    pub positivity_ok: bool,
    pub decrement_ok: bool,
    pub scales: Vec<ScaleEstimate>,
    /// Richardson value `2 L_{2N0} − L_{N0}`.
    pub extrapolated: f64,
}

pub fn multiscale_estimate(
    params: &CocycleParams,
    potential: &impl Potential,
    cfg: &MultiscaleConfig,
) -> Result<MultiscaleReport> {
    let n0 = cfg.n0;
    let s = params.s_lambda;
    let l_n0 = finite_lyapunov(params, potential, n0, default_quadrature(n0));
    let l_2n0 = finite_lyapunov(params, potential, 2 * n0, default_quadrature(2 * n0));
    let predicted = 2.0 * l_2n0 - l_n0;
    let scales = cfg
        .schedule
        .iter()
        .map(|&n| {
            let q = default_quadrature(n);
            let direct = ((n as u64).saturating_mul(q as u64) <= cfg.direct_budget)
                .then(|| finite_lyapunov(params, potential, n, q));
            let defect = direct.map(|d| (d + l_n0 - 2.0 * l_2n0).abs());
            ScaleEstimate {
                n,
                predicted,
                direct,
                defect,
                c0: defect.map(|d| d * n as f64 / (s * n0 as f64)),
            }
        })
        .collect();
    let positivity_ok = l_n0 >= cfg.gamma * s && l_2n0 >= cfg.gamma * s;
    let decrement_ok = l_n0 - l_2n0 <= cfg.gamma / 40.0 * s;
    let report = MultiscaleReport {
        config: cfg.clone(),
        s_lambda: s,
        l_n0,
        l_2n0,
        positivity_ok,
        decrement_ok,
        scales,
        extrapolated: predicted,
    };
    let which = match (positivity_ok, decrement_ok) {
        (true, true) => return Ok(report),
        (false, true) => InductionHypothesis::Positivity,
        (true, false) => InductionHypothesis::Decrement,
        (false, false) => InductionHypothesis::Both,
    };
    Err(Error::InductionHypothesis {
        which,
        report: Box::new(report),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PositivityScan {
    /// `min_E (L_N(E) − ¼ log|λ|)`
    pub min_margin: f64,
    pub argmin_energy: f64,
    pub curve: LyapunovCurve,
}

/// Scan `L_N(E) − ¼ log|λ|` over `E_count` energies spanning `[−2−|λ|B, 2+|λ|B]`.
pub fn positivity_scan(
    params_base: &CocycleParams,
    potential: &impl Potential,
    lambda: f64,
    e_count: usize,
    n: usize,
    q: usize,
) -> Result<PositivityScan> {
    if !(lambda.abs() > 1.0) {
        return Err(invalid(format!("positivity needs |λ| > 1 (got {lambda})")));
    }
    if e_count == 0 {
        return Err(invalid("E_count must be positive"));
    }
    let params = CocycleParams::new(lambda, 0.0, params_base.omega, potential.sup_bound());
    let edge = params.spectral_radius_bound();
    let energies = linspace(-edge, edge, e_count);
    let curve = lyapunov_curve(&params, potential, &energies, n, q);
    let floor = 0.25 * lambda.abs().ln();
    let (i, min_margin) = curve.values.iter().map(|l| l - floor).enumerate().fold(
        (0, f64::INFINITY),
        |acc, (i, m)| if m < acc.1 { (i, m) } else { acc },
    );
    Ok(PositivityScan {
        min_margin,
        argmin_energy: energies[i],
        curve,
    })
}

/// Parameters of the continuity probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContinuityProbeConfig {
    /// Exponent in the coupling `N(t) ≈ e^{|log t|^η}`.
    pub eta_probe: f64,
    pub n_cap: usize,
    pub quadrature: usize,
}

impl Default for ContinuityProbeConfig {
    fn default() -> Self {
        Self {
            eta_probe: 0.9,
            n_cap: 4096,
            quadrature: 400,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuityPoint {
    pub t: f64,
    pub n: usize,
    /// `|L_N(E) − L_N(E + t)|`
    pub difference: f64,
    /// `|L_{N0}(E) − L_{N0}(E + t)|`
    pub difference_n0: f64,
    /// `log(difference_n0) − (S N0 + log t)`; non-positive when the
    /// Lipschitz-at-scale bound holds.
    pub lipschitz_log_ratio: f64,
}

/// Fitted modulus `h(t) = C e^{−c |log t|^η}`.
#[derive(Debug, Clone, Serialize)]
pub struct ContinuityReport {
    pub c_h: f64,
    pub c_small: f64,
    pub eta_h: f64,
    pub lipschitz_ok: bool,
    pub points: Vec<ContinuityPoint>,
}

/// Fit `log Δ = log C − c |log t|^η` by a grid search over `η ∈ [0.05, 1]`.
pub fn fit_modulus(t: &[f64], diffs: &[f64]) -> Result<(f64, f64, f64)> {
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(diffs)
        .filter(|(_, &d)| d > 0.0)
        .map(|(&t, &d)| (t.ln().abs(), d.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::DegenerateFit(
            "continuity fit needs at least three positive differences".into(),
        ));
    }
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let mut best: Option<(f64, LineFit, f64)> = None;
    for i in 0..=95 {
        let eta = 0.05 + 0.01 * i as f64;
        let xs: Vec<f64> = pts.iter().map(|p| p.0.powf(eta)).collect();
        if let Some(fit) = LineFit::new(&xs, &ys) {
            let sse = fit.sse(&xs, &ys);
            if best.as_ref().is_none_or(|b| sse < b.2) {
                best = Some((eta, fit, sse));
            }
        }
    }
    let (eta, fit, _) =
        best.ok_or_else(|| Error::DegenerateFit("continuity abscissae are degenerate".into()))?;
    Ok((fit.intercept.exp(), -fit.slope, eta))
}

pub fn continuity_probe(
    params: &CocycleParams,
    potential: &impl Potential,
    n0: usize,
    energy: f64,
    t_list: &[f64],
    cfg: &ContinuityProbeConfig,
) -> Result<ContinuityReport> {
    if t_list.is_empty() {
        return Err(Error::DegenerateFit("empty t_list".into()));
    }
    if t_list.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
        return Err(invalid("t_list must lie in (0, 1)"));
    }
    let (tmin, tmax) = t_list
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &t| (a.min(t), b.max(t)));
    if tmax / tmin < 1e3 {
        return Err(invalid("t_list must span at least three decades"));
    }
    let q = cfg.quadrature;
    let base = params.with_energy(energy);
    let s = base.s_lambda;
    let l_at = |e: f64, n: usize| finite_lyapunov(&base.with_energy(e), potential, n, q);
    let l0_n0 = l_at(energy, n0);
    let mut points = Vec::with_capacity(t_list.len());
    for &t in t_list {
        let n = ((t.ln().abs().powf(cfg.eta_probe)).exp().ceil() as usize).clamp(n0, cfg.n_cap);
        let difference = (l_at(energy, n) - l_at(energy + t, n)).abs();
        let difference_n0 = (l0_n0 - l_at(energy + t, n0)).abs();
        let lipschitz_log_ratio = if difference_n0 > 0.0 {
            difference_n0.ln() - (s * n0 as f64 + t.ln())
        } else {
            f64::NEG_INFINITY
        };
        points.push(ContinuityPoint {
            t,
            n,
            difference,
            difference_n0,
            lipschitz_log_ratio,
        });
    }
    let ts: Vec<f64> = points.iter().map(|p| p.t).collect();
    let ds: Vec<f64> = points.iter().map(|p| p.difference).collect();
    let (c_h, c_small, eta_h) = fit_modulus(&ts, &ds)?;
    Ok(ContinuityReport {
        c_h,
        c_small,
        eta_h,
        lipschitz_ok: points.iter().all(|p| p.lipschitz_log_ratio <= 0.0),
        points,
    })
}

/// Worst `log(|L_{N0}(E) − L_{N0}(E′)|) − (S N0 + log|E − E′|)` over the pairs.
pub fn lipschitz_at_scale(
    params: &CocycleParams,
    potential: &impl Potential,
    n0: usize,
    q: usize,
    pairs: &[(f64, f64)],
) -> f64 {
    pairs
        .iter()
        .map(|&(e, e2)| {
            let a = finite_lyapunov(&params.with_energy(e), potential, n0, q);
            let b = finite_lyapunov(&params.with_energy(e2), potential, n0, q);
            let s = params
                .with_energy(e)
                .s_lambda
                .max(params.with_energy(e2).s_lambda);
            let d = (a - b).abs();
            if d == 0.0 {
                f64::NEG_INFINITY
            } else {
                d.ln() - (s * n0 as f64 + (e - e2).abs().ln())
            }
        })
        .fold(f64::NEG_INFINITY, f64::max)
}
