//! SL(2,R) one-step matrices of the Schrödinger cocycle and overflow-safe
//! transfer-matrix products.
//!
//! The operator is `u_{n+1} + u_{n−1} + λ v(x + nω) u_n = E u_n`; its
//! transfer matrix over `N` sites is `M_N(x) = A(x + Nω) ··· A(x + ω)` with
//! `A(y) = [[λ v(y) − E, −1], [1, 0]]`.

use std::ops::Mul;

use serde::{Deserialize, Serialize};

use crate::arithmetic::Frequency;
use crate::error::{invalid, Error, Result};
use crate::gevrey::{FourierPotential, Potential, TruncatedPotential};

/// Default threshold on `‖core‖` above which a [`LogProduct`] renormalizes.
pub const DEFAULT_RENORM_THRESHOLD: f64 = 1e8;

/// Implied constant in `N ≳ S^{1/(b−1)}` for the substitution estimate.
pub const SUBSTITUTION_SCALE_PREFACTOR: f64 = 1.0 / 16.0;

/// Largest tail perturbation for which the substitution defect is evaluated
/// by first-order expansion rather than by differencing two products.
const LINEARIZATION_LIMIT: f64 = 1e-6;

/// A real 2×2 matrix, meant to have unit determinant up to rounding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SL2 {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
}

impl SL2 {
    pub const IDENTITY: Self = Self::new(1.0, 0.0, 0.0, 1.0);

    pub const fn new(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Self { a11, a12, a21, a22 }
    }

    pub fn diag(mu: f64) -> Self {
        Self::new(mu, 0.0, 0.0, 1.0 / mu)
    }

    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(c, -s, s, c)
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.a11 * self.a11 + self.a12 * self.a12 + self.a21 * self.a21 + self.a22 * self.a22
    }

    /// Operator norm (largest singular value), in closed form.
    pub fn norm(&self) -> f64 {
        let f = self.frobenius_sq();
        let d = self.det();
        let disc = (f * f - 4.0 * d * d).max(0.0);
        ((f + disc.sqrt()) / 2.0).sqrt()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::new(self.a11 * c, self.a12 * c, self.a21 * c, self.a22 * c)
    }

    pub fn transpose(&self) -> Self {
        Self::new(self.a11, self.a21, self.a12, self.a22)
    }

    /// Inverse for unit determinant.
    pub fn sl_inverse(&self) -> Self {
        Self::new(self.a22, -self.a12, -self.a21, self.a11)
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.a11 * v[0] + self.a12 * v[1],
            self.a21 * v[0] + self.a22 * v[1],
        ]
    }

    /// Unit top right singular vector `v` and left vector `u = Av/‖Av‖`.
    pub fn top_singular_vectors(&self) -> ([f64; 2], [f64; 2]) {
        // eigenvector of AᵀA for its largest eigenvalue
        let p = self.a11 * self.a11 + self.a21 * self.a21;
        let r = self.a12 * self.a12 + self.a22 * self.a22;
        let q = self.a11 * self.a12 + self.a21 * self.a22;
        let half = (p - r) / 2.0;
        let top = (p + r) / 2.0 + (half * half + q * q).sqrt();
        let cand1 = [top - r, q];
        let cand2 = [q, top - p];
        let n1 = cand1[0].hypot(cand1[1]);
        let n2 = cand2[0].hypot(cand2[1]);
        let v = if n1 == 0.0 && n2 == 0.0 {
            [1.0, 0.0]
        } else if n1 >= n2 {
            [cand1[0] / n1, cand1[1] / n1]
        } else {
            [cand2[0] / n2, cand2[1] / n2]
        };
        let av = self.apply(v);
        let nav = av[0].hypot(av[1]);
        let u = if nav > 0.0 {
            [av[0] / nav, av[1] / nav]
        } else {
            [1.0, 0.0]
        };
        (v, u)
    }
}

impl Mul for SL2 {
    type Output = SL2;

    fn mul(self, b: SL2) -> SL2 {
        SL2::new(
            self.a11 * b.a11 + self.a12 * b.a21,
            self.a11 * b.a12 + self.a12 * b.a22,
            self.a21 * b.a11 + self.a22 * b.a21,
            self.a21 * b.a12 + self.a22 * b.a22,
        )
    }
}

/// Running product `M = A_k ··· A_1 = e^{log_norm} · core`.
///
/// Whenever `‖core‖` exceeds the threshold, `core` is divided by its norm and
/// the logarithm of that norm moves into `log_norm`. Between renormalizations
/// `core` is an exact SL(2,R) product.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogProduct {
    pub log_norm: f64,
    pub core: SL2,
    pub steps: u64,
    threshold: f64,
    threshold_sq: f64,
}

impl Default for LogProduct {
    fn default() -> Self {
        Self::with_threshold(DEFAULT_RENORM_THRESHOLD)
    }
}

impl LogProduct {
    pub fn with_threshold(threshold: f64) -> Self {
        assert!(threshold > 1.0, "renormalization threshold must exceed 1");
        Self {
            log_norm: 0.0,
            core: SL2::IDENTITY,
            steps: 0,
            threshold,
            threshold_sq: threshold * threshold,
        }
    }

    /// `M ← A · M`.
    #[inline]
    pub fn push(&mut self, a: SL2) {
        self.core = a * self.core;
        self.steps += 1;
        self.renormalize();
    }

    /// `M ← [[d, −1], [1, 0]] · M`, the Schrödinger step without a full product.
    #[inline]
    pub fn push_schrodinger(&mut self, d: f64) {
        let c = self.core;
        self.core = SL2::new(d * c.a11 - c.a21, d * c.a12 - c.a22, c.a11, c.a12);
        self.steps += 1;
        self.renormalize();
    }

    #[inline]
    fn renormalize(&mut self) {
        // Frobenius norm dominates the operator norm, so this is a cheap pre-check
        if self.core.frobenius_sq() > self.threshold_sq {
            let n = self.core.norm();
            if n > self.threshold {
                self.core = self.core.scale(1.0 / n);
                self.log_norm += n.ln();
            }
        }
    }

    /// `log ‖M‖`.
    pub fn log_total(&self) -> f64 {
        self.log_norm + self.core.norm().ln()
    }
}

/// Coupling, energy, frequency and the scaling factor `S(λ)` with
/// `‖A(y)‖ ≤ e^{S}` for every `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CocycleParams {
    pub lambda: f64,
    pub energy: f64,
    pub omega: Frequency,
    pub s_lambda: f64,
    /// `sup |v| ≤ B` for the potential the parameters are paired with.
    pub sup_bound: f64,
}

/// `log(|λ|B + E_max + 2) + 1` with `E_max = max(|λ|B + 2, |E|)`.
pub fn default_s_lambda(lambda: f64, energy: f64, sup_bound: f64) -> f64 {
    let lb = lambda.abs() * sup_bound;
    let e_max = (lb + 2.0).max(energy.abs());
    (lb + e_max + 2.0).ln() + 1.0
}

impl CocycleParams {
    pub fn new(lambda: f64, energy: f64, omega: Frequency, sup_bound: f64) -> Self {
        Self {
            lambda,
            energy,
            omega,
            s_lambda: default_s_lambda(lambda, energy, sup_bound),
            sup_bound,
        }
    }

    /// Parameters for `potential` with the default `S(λ)`.
    pub fn for_potential(
        lambda: f64,
        energy: f64,
        omega: Frequency,
        potential: &impl Potential,
    ) -> Self {
        Self::new(lambda, energy, omega, potential.sup_bound())
    }

    /// Override `S(λ)`; it must keep `S ≥ 1` and `e^S ≥ |λ|B + |E| + 2`.
    pub fn with_s_lambda(mut self, s_lambda: f64) -> Result<Self> {
        self.s_lambda = s_lambda;
        self.validate()?;
        Ok(self)
    }

    /// Same parameters at another energy; `S` is kept while it stays admissible.
    pub fn with_energy(mut self, energy: f64) -> Self {
        self.energy = energy;
        if self.validate().is_err() {
            self.s_lambda = default_s_lambda(self.lambda, energy, self.sup_bound);
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let need = self.lambda.abs() * self.sup_bound + self.energy.abs() + 2.0;
        if !(self.s_lambda >= 1.0) || self.s_lambda.exp() < need {
            return Err(invalid(format!(
                "S(λ) = {} violates S ≥ 1 and e^S ≥ |λ|B + |E| + 2 = {need}",
                self.s_lambda
            )));
        }
        Ok(())
    }

    /// `|E| ≤ 2 + |λ| B`, the range that contains the spectrum.
    pub fn spectral_radius_bound(&self) -> f64 {
        2.0 + self.lambda.abs() * self.sup_bound
    }
}

/// `A(y) = [[λ v(y) − E, −1], [1, 0]]`.
pub fn one_step(params: &CocycleParams, potential: &impl Potential, y: f64) -> SL2 {
    SL2::new(
        params.lambda * potential.value(y) - params.energy,
        -1.0,
        1.0,
        0.0,
    )
}

/// `M_N(x)` accumulated in log-scaled form.
pub fn transfer_product(
    params: &CocycleParams,
    potential: &impl Potential,
    x: f64,
    n: usize,
    threshold: f64,
) -> LogProduct {
    let mut prod = LogProduct::with_threshold(threshold);
    let w = params.omega.omega();
    for j in 1..=n {
        let y = x + j as f64 * w;
        prod.push_schrodinger(params.lambda * potential.value(y) - params.energy);
    }
    prod
}

/// `u_N(x) = (1/N) log ‖M_N(x)‖`.
pub fn transfer_log_norm(
    params: &CocycleParams,
    potential: &impl Potential,
    x: f64,
    n: usize,
) -> f64 {
    transfer_log_norm_with(params, potential, x, n, DEFAULT_RENORM_THRESHOLD)
}

pub fn transfer_log_norm_with(
    params: &CocycleParams,
    potential: &impl Potential,
    x: f64,
    n: usize,
    threshold: f64,
) -> f64 {
    assert!(n >= 1, "N must be at least 1");
    let p = transfer_product(params, potential, x, n, threshold);
    // ‖M‖ ≥ 1 since det M = 1; clamp rounding below zero
    (p.log_total() / n as f64).max(0.0)
}

/// `|u_N(x) − u_N(x + ω)|` with the empirical constant `N·defect/S`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShiftDefect {
    pub defect: f64,
    pub constant: f64,
}

pub fn shift_defect(
    params: &CocycleParams,
    potential: &impl Potential,
    x: f64,
    n: usize,
) -> ShiftDefect {
    let a = transfer_log_norm(params, potential, x, n);
    let b = transfer_log_norm(params, potential, x + params.omega.omega(), n);
    let defect = (a - b).abs();
    ShiftDefect {
        defect,
        constant: defect * n as f64 / params.s_lambda,
    }
}

/// `|u_N(x; v) − u_N(x; v_N)|`, comparing the full potential against its
/// scale-`N` truncation.
///
/// The truncation tail `λ(v − v_N)` is evaluated directly. When it is below
/// `1e-6` everywhere along the orbit, the difference of log-norms is obtained
/// from the first-order expansion `Σ_j δ_j (uᵀ L_j e₀)(e₀ᵀ R_j v)/‖M‖`, which is
/// exact to second order in the tail and stays accurate far below the
/// rounding level of either product.
pub fn substitute_defect(
    params: &CocycleParams,
    v: &FourierPotential,
    v_n: &TruncatedPotential,
    x: f64,
    n: usize,
) -> Result<f64> {
    if v_n.scale_n != n {
        return Err(invalid(format!(
            "truncation was built at scale {} but N = {n}",
            v_n.scale_n
        )));
    }
    let threshold = SUBSTITUTION_SCALE_PREFACTOR * params.s_lambda.powf(1.0 / (v_n.b_trunc - 1.0));
    if (n as f64) < threshold {
        return Err(Error::ScaleTooSmall { n, threshold });
    }
    Ok(substitution_gap(params, v, v_n, x, n))
}

fn substitution_gap(
    params: &CocycleParams,
    v: &FourierPotential,
    v_n: &TruncatedPotential,
    x: f64,
    n: usize,
) -> f64 {
    let w = params.omega.omega();
    let kept = v_n.modes().len() - 1;
    let deltas: Vec<f64> = (1..=n)
        .map(|j| params.lambda * v.tail(kept, x + j as f64 * w))
        .collect();
    let max_delta = deltas.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    if max_delta == 0.0 {
        return 0.0;
    }
    if max_delta > LINEARIZATION_LIMIT {
        let a = transfer_log_norm(params, v, x, n);
        let b = transfer_log_norm(params, v_n, x, n);
        return (a - b).abs();
    }

    // Ã_j = A_j − δ_j E₀₀, so log‖M̃‖ − log‖M‖ ≈ −Σ δ_j (uᵀL_j e₀)(e₀ᵀR_j v)/‖M‖
    let diag: Vec<f64> = (1..=n)
        .map(|j| params.lambda * v.value(x + j as f64 * w) - params.energy)
        .collect();
    let step = |d: f64| SL2::new(d, -1.0, 1.0, 0.0);
    let mut full = LogProduct::default();
    for &d in &diag {
        full.push_schrodinger(d);
    }
    let log_m = full.log_total();
    let (rv, lu) = full.core.top_singular_vectors();

    // right vectors r_j = A_{j−1} ··· A_1 v with log scales
    let mut right = Vec::with_capacity(n);
    let (mut r, mut r_log) = (rv, 0.0f64);
    for &d in &diag {
        right.push((r, r_log));
        let next = step(d).apply(r);
        let nr = next[0].hypot(next[1]);
        r = [next[0] / nr, next[1] / nr];
        r_log += nr.ln();
    }
    // left vectors l_j = A_{j+1}ᵀ ··· A_Nᵀ u, swept backwards
    let (mut l, mut l_log) = (lu, 0.0f64);
    let mut delta_log = 0.0;
    for j in (0..n).rev() {
        let (rj, rj_log) = right[j];
        let weight = l[0] * rj[0] * (l_log + rj_log - log_m).exp();
        delta_log -= deltas[j] * weight;
        let next = step(diag[j]).transpose().apply(l);
        let nl = next[0].hypot(next[1]);
        l = [next[0] / nl, next[1] / nl];
        l_log += nl.ln();
    }
    delta_log.abs() / n as f64
}
