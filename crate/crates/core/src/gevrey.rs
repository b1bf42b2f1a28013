//! Potentials given by finitely many Fourier modes, their Gevrey metadata,
//! the polynomial truncation scheme and the transversality / sublevel-set
//! measurements built on top of them.
//!
//! A [`FourierPotential`] stores `v̂(k)` for `0 ≤ k ≤ K_store`; negative modes
//! are implied by `v̂(−k) = conj v̂(k)`, so every evaluation is real.

use std::f64::consts::{LN_2, TAU};
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fit::{linspace, LineFit};

/// Default number of stored Fourier modes for synthetic potentials.
pub const DEFAULT_K_STORE: usize = 1 << 14;
/// Samples on each horizontal edge of the strip used to certify `|v_N(z)| ≤ B`.
pub const STRIP_SAMPLES: usize = 1024;
/// Fraction of the strip half-width at which the strip bound is sampled.
pub const STRIP_FRACTION: f64 = 0.99;
/// Default number of energies in a Łojasiewicz energy grid.
pub const DEFAULT_ENERGY_GRID: usize = 512;
/// Default derivative order cap for transversality.
pub const DEFAULT_M_MAX: usize = 8;

/// Anything that can be sampled as a real 2π-periodic potential.
pub trait Potential: Sync {
    fn value(&self, x: f64) -> f64;

    /// An upper bound for `sup |v|`.
    fn sup_bound(&self) -> f64;
}

impl<P: Potential + ?Sized> Potential for &P {
    fn value(&self, x: f64) -> f64 {
        (**self).value(x)
    }
    fn sup_bound(&self) -> f64 {
        (**self).sup_bound()
    }
}

/// Real part of `Σ_{k=1}^{len} c_k e^{ikx}` for `c_k = coeffs[k]`, summed from
/// the highest mode down.
fn half_series(coeffs: &[Complex64], from: usize, x: f64) -> f64 {
    let mut acc = 0.0;
    for k in (from.max(1)..coeffs.len()).rev() {
        let c = coeffs[k];
        if c.re == 0.0 && c.im == 0.0 {
            continue;
        }
        let (s, co) = (k as f64 * x).sin_cos();
        acc += c.re * co - c.im * s;
    }
    acc
}

fn series_value(coeffs: &[Complex64], x: f64) -> f64 {
    let c0 = coeffs.first().map_or(0.0, |c| c.re);
    c0 + 2.0 * half_series(coeffs, 1, x)
}

fn series_derivative(coeffs: &[Complex64], order: u32, x: f64) -> f64 {
    if order == 0 {
        return series_value(coeffs, x);
    }
    // (ik)^m = k^m i^m
    let i_pow = match order % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    };
    let mut acc = 0.0;
    for k in (1..coeffs.len()).rev() {
        let c = coeffs[k];
        if c.re == 0.0 && c.im == 0.0 {
            continue;
        }
        let w = c * i_pow * (k as f64).powi(order as i32);
        let (s, co) = (k as f64 * x).sin_cos();
        acc += w.re * co - w.im * s;
    }
    2.0 * acc
}

/// `2M Σ_{k≥0} e^{−(ρ/2) k^{1/s}}`, the uniform strip bound for truncations.
pub fn gevrey_strip_bound(m: f64, rho: f64, s: f64) -> f64 {
    let mut sum = 0.0;
    let mut k = 0u64;
    loop {
        let term = (-(rho / 2.0) * (k as f64).powf(1.0 / s)).exp();
        sum += term;
        k += 1;
        if (term < 1e-18 * sum && k > 16) || k > 50_000_000 {
            break;
        }
    }
    2.0 * m * sum
}

/// Real 2π-periodic function given by its Fourier coefficients together with
/// Gevrey metadata `|v̂(k)| ≤ M e^{−ρ|k|^{1/s}}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierPotential {
    coeffs: Vec<Complex64>,
    m: f64,
    rho: f64,
    s: f64,
    label: String,
    exact: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct PotentialFile {
    s: f64,
    rho: f64,
    #[serde(rename = "M")]
    m: f64,
    coeffs: Vec<(i64, f64, f64)>,
    #[serde(default)]
    label: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    exact: bool,
}

impl FourierPotential {
    /// Build from non-negative modes `coeffs[k] = v̂(k)`.
    ///
    /// `exact` marks a trigonometric polynomial whose modes beyond the stored
    /// ones are known to vanish (so any truncation degree is admissible).
    pub fn from_modes(
        coeffs: Vec<Complex64>,
        m: f64,
        rho: f64,
        s: f64,
        label: impl Into<String>,
        exact: bool,
    ) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidPotential("no Fourier modes".into()));
        }
        if !(m > 0.0 && rho > 0.0 && s >= 1.0) {
            return Err(Error::InvalidPotential(format!(
                "Gevrey metadata must satisfy M > 0, rho > 0, s >= 1 (got M={m}, rho={rho}, s={s})"
            )));
        }
        let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max).max(m);
        if coeffs[0].im.abs() > 1e-12 * scale {
            return Err(Error::InvalidPotential(
                "zero mode must be real for a real potential".into(),
            ));
        }
        for (k, c) in coeffs.iter().enumerate() {
            let bound = m * (-rho * (k as f64).powf(1.0 / s)).exp();
            if c.norm() > bound * (1.0 + 1e-12) + 1e-300 {
                return Err(Error::InvalidPotential(format!(
                    "|v̂({k})| = {} exceeds the Gevrey bound {bound}",
                    c.norm()
                )));
            }
        }
        let mut coeffs = coeffs;
        coeffs[0].im = 0.0;
        Ok(Self {
            coeffs,
            m,
            rho,
            s,
            label: label.into(),
            exact,
        })
    }

    /// `v(x) = cos x`, i.e. `v̂(±1) = ½`, with metadata `M = 1, ρ = log 2, s = 1`
    /// (which the two modes saturate).
    pub fn cosine() -> Self {
        let coeffs = vec![Complex64::new(0.0, 0.0), Complex64::new(0.5, 0.0)];
        Self::from_modes(coeffs, 1.0, LN_2, 1.0, "cos", true).expect("cosine is admissible")
    }

    pub fn constant(c: f64) -> Self {
        let m = c.abs().max(1.0);
        Self::from_modes(vec![Complex64::new(c, 0.0)], m, 1.0, 1.0, "constant", true)
            .expect("constant is admissible")
    }

    /// Canonical Gevrey test family `v̂(k) = M e^{−ρ|k|^{1/s}}` for `|k| ≤ K_store`.
    pub fn synth_gevrey(s: f64, rho: f64, m: f64, k_store: usize) -> Result<Self> {
        if !(s > 1.0) {
            return Err(invalid(format!("synth_gevrey needs s > 1 (got {s})")));
        }
        if !(rho > 0.0 && m > 0.0) || k_store == 0 {
            return Err(invalid("synth_gevrey needs rho, M, K_store positive"));
        }
        let coeffs = (0..=k_store)
            .map(|k| Complex64::new(m * (-rho * (k as f64).powf(1.0 / s)).exp(), 0.0))
            .collect();
        Self::from_modes(
            coeffs,
            m,
            rho,
            s,
            format!("gevrey:s={s},rho={rho},M={m}"),
            false,
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PotentialFile = serde_json::from_str(text)
            .map_err(|e| Error::InvalidPotential(format!("malformed potential JSON: {e}")))?;
        let k_max = file
            .coeffs
            .iter()
            .map(|&(k, _, _)| k.unsigned_abs() as usize)
            .max()
            .unwrap_or(0);
        let mut modes: Vec<Option<Complex64>> = vec![None; k_max + 1];
        for &(k, re, im) in &file.coeffs {
            // store the non-negative representative
            let (idx, c) = if k >= 0 {
                (k as usize, Complex64::new(re, im))
            } else {
                (k.unsigned_abs() as usize, Complex64::new(re, -im))
            };
            match modes[idx] {
                Some(prev) if (prev - c).norm() > 1e-12 * prev.norm().max(1e-300) => {
                    return Err(Error::InvalidPotential(format!(
                        "modes ±{idx} are not complex conjugates"
                    )));
                }
                _ => modes[idx] = Some(c),
            }
        }
        let coeffs = modes.into_iter().map(|c| c.unwrap_or_default()).collect();
        Self::from_modes(coeffs, file.m, file.rho, file.s, file.label, file.exact)
    }

    pub fn to_json(&self) -> String {
        let file = PotentialFile {
            s: self.s,
            rho: self.rho,
            m: self.m,
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .filter(|(_, c)| c.norm() > 0.0)
                .map(|(k, c)| (k as i64, c.re, c.im))
                .collect(),
            label: self.label.clone(),
            exact: self.exact,
        };
        serde_json::to_string_pretty(&file).expect("potential serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidPotential(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// `v̂(k)` for any integer `k` (zero beyond the stored range).
    pub fn coefficient(&self, k: i64) -> Complex64 {
        let idx = k.unsigned_abs() as usize;
        match self.coeffs.get(idx) {
            Some(&c) if k >= 0 => c,
            Some(&c) => c.conj(),
            None => Complex64::default(),
        }
    }

    pub fn modes(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Highest stored mode `K_store`.
    pub fn k_store(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        series_value(&self.coeffs, x)
    }

    /// `Σ_{|k| > degree} v̂(k) e^{ikx}` over the stored modes, i.e. `v − v_N`
    /// computed without cancellation.
    pub fn tail(&self, degree: usize, x: f64) -> f64 {
        if degree + 1 >= self.coeffs.len() {
            return 0.0;
        }
        2.0 * half_series(&self.coeffs, degree + 1, x)
    }

    /// `∂^order v(x)` by termwise differentiation.
    pub fn derivative(&self, order: u32, x: f64) -> f64 {
        series_derivative(&self.coeffs, order, x)
    }

    /// `2M Σ_{k≥0} e^{−(ρ/2)k^{1/s}}`.
    pub fn strip_bound(&self) -> f64 {
        gevrey_strip_bound(self.m, self.rho, self.s)
    }
}

impl Potential for FourierPotential {
    fn value(&self, x: f64) -> f64 {
        self.evaluate(x)
    }

    fn sup_bound(&self) -> f64 {
        self.coeffs[0].re.abs() + 2.0 * self.coeffs[1..].iter().map(|c| c.norm()).sum::<f64>()
    }
}

/// Scale-`N` polynomial substitute `v_N` of a [`FourierPotential`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncatedPotential {
    pub scale_n: usize,
    pub b_trunc: f64,
    /// `Ñ = ⌈N^{b s}⌉`
    pub degree: usize,
    /// `ρ_N = (ρ/2) Ñ^{1/s − 1}`
    pub strip_width: f64,
    /// `B = 2M Σ e^{−(ρ/2)k^{1/s}}`
    pub strip_bound: f64,
    /// Largest `|v_N(x ± i·0.99ρ_N)|` seen on the sampled strip boundary.
    pub strip_sup_sampled: f64,
    /// `sup |v − v_N|` over a `4Ñ`-point grid.
    pub sup_error: f64,
    /// `−log(sup_error)/N^b`; infinite when the truncation is exact.
    pub decay_c: f64,
    #[serde(skip)]
    coeffs: Vec<Complex64>,
}

/// `⌈N^{b s}⌉`, guarded against `N^{b s}` landing a rounding error above an integer.
pub fn truncation_degree(scale_n: usize, b_trunc: f64, s: f64) -> usize {
    let p = (scale_n as f64).powf(b_trunc * s);
    let r = p.round();
    if (p - r).abs() <= 1e-9 * p.max(1.0) {
        r.max(1.0) as usize
    } else {
        p.ceil().max(1.0) as usize
    }
}

impl TruncatedPotential {
    pub fn evaluate(&self, x: f64) -> f64 {
        series_value(&self.coeffs, x)
    }

    /// Holomorphic extension `v_N(x + iy)`; requires `|y| < ρ_N`.
    pub fn evaluate_strip(&self, x: f64, y: f64) -> Result<Complex64> {
        if !(y.abs() < self.strip_width) {
            return Err(Error::OutsideStrip {
                y,
                width: self.strip_width,
            });
        }
        Ok(strip_value(&self.coeffs, x, y))
    }

    pub fn modes(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// `δ = b (s − 1)` for the given smoothness `s`.
    pub fn delta(&self, s: f64) -> f64 {
        self.b_trunc * (s - 1.0)
    }
}

impl Potential for TruncatedPotential {
    fn value(&self, x: f64) -> f64 {
        self.evaluate(x)
    }

    fn sup_bound(&self) -> f64 {
        self.coeffs[0].re.abs() + 2.0 * self.coeffs[1..].iter().map(|c| c.norm()).sum::<f64>()
    }
}

fn strip_value(coeffs: &[Complex64], x: f64, y: f64) -> Complex64 {
    let mut acc = Complex64::new(coeffs[0].re, 0.0);
    for k in (1..coeffs.len()).rev() {
        let c = coeffs[k];
        if c.re == 0.0 && c.im == 0.0 {
            continue;
        }
        let kf = k as f64;
        let e_pos = Complex64::from_polar((-kf * y).exp(), kf * x);
        let e_neg = Complex64::from_polar((kf * y).exp(), -kf * x);
        acc += c * e_pos + c.conj() * e_neg;
    }
    acc
}

/// Build `v_N` with `Ñ = ⌈N^{b s}⌉` and measure its approximation error and
/// strip bound.
pub fn truncate(v: &FourierPotential, scale_n: usize, b_trunc: f64) -> Result<TruncatedPotential> {
    if scale_n == 0 {
        return Err(invalid("scale N must be positive"));
    }
    if !(b_trunc > 1.0) {
        return Err(invalid(format!("b_trunc must exceed 1 (got {b_trunc})")));
    }
    let degree = truncation_degree(scale_n, b_trunc, v.s);
    if degree > v.k_store() && !v.exact {
        return Err(Error::DegreeExceedsStored {
            degree,
            stored: v.k_store(),
        });
    }
    let kept = degree.min(v.k_store());
    let coeffs = v.coeffs[..=kept].to_vec();
    let strip_width = v.rho / 2.0 * (degree as f64).powf(1.0 / v.s - 1.0);
    let strip_bound = v.strip_bound();

    let sup_error = if kept < v.k_store() {
        let grid = 4 * degree;
        (0..grid)
            .into_par_iter()
            .map(|j| v.tail(kept, TAU * j as f64 / grid as f64).abs())
            .collect::<Vec<_>>()
            .into_iter()
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    let decay_c = if sup_error > 0.0 {
        -sup_error.ln() / (scale_n as f64).powf(b_trunc)
    } else {
        f64::INFINITY
    };

    let y = STRIP_FRACTION * strip_width;
    let strip_sup_sampled = (0..2 * STRIP_SAMPLES)
        .into_par_iter()
        .map(|j| {
            let sign = if j < STRIP_SAMPLES { 1.0 } else { -1.0 };
            let x = TAU * (j % STRIP_SAMPLES) as f64 / STRIP_SAMPLES as f64;
            strip_value(&coeffs, x, sign * y).norm()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(0.0, f64::max);
    if strip_sup_sampled > strip_bound * (1.0 + 1e-9) {
        return Err(Error::InvalidPotential(format!(
            "strip bound violated: sampled {strip_sup_sampled} > B = {strip_bound}"
        )));
    }

    Ok(TruncatedPotential {
        scale_n,
        b_trunc,
        degree,
        strip_width,
        strip_bound,
        strip_sup_sampled,
        sup_error,
        decay_c,
        coeffs,
    })
}

/// Truncation errors across several scales with a fit of `log err` against `N^b`.
#[derive(Debug, Clone, Serialize)]
pub struct TruncationProfile {
    pub b_trunc: f64,
    pub scales: Vec<usize>,
    pub degrees: Vec<usize>,
    pub errors: Vec<f64>,
    /// Fit of `log(sup_error)` against `N^b`.
    pub fit: Option<LineFit>,
    /// Largest `c` with `sup_error < e^{−c N^b}` at every tested scale.
    pub c_fit: f64,
}

pub fn truncation_profile(
    v: &FourierPotential,
    scales: &[usize],
    b_trunc: f64,
) -> Result<TruncationProfile> {
    let mut degrees = Vec::with_capacity(scales.len());
    let mut errors = Vec::with_capacity(scales.len());
    let mut c_fit = f64::INFINITY;
    for &n in scales {
        let t = truncate(v, n, b_trunc)?;
        degrees.push(t.degree);
        errors.push(t.sup_error);
        c_fit = c_fit.min(t.decay_c);
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = scales
        .iter()
        .zip(&errors)
        .filter(|(_, &e)| e > 0.0)
        .map(|(&n, &e)| ((n as f64).powf(b_trunc), e.ln()))
        .unzip();
    Ok(TruncationProfile {
        b_trunc,
        scales: scales.to_vec(),
        degrees,
        errors,
        fit: LineFit::new(&xs, &ys),
        // strict inequality at every scale
        c_fit: if c_fit.is_finite() {
            c_fit * (1.0 - 1e-9)
        } else {
            c_fit
        },
    })
}

/// Grid-certified transversality: `max_{1≤k≤m} |∂^k v| ≥ c` at every grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransversalityCertificate {
    pub order_m: usize,
    pub lower_c: f64,
    pub grid_size: usize,
}

/// Smallest derivative order `m ≤ m_max` with a nonvanishing grid minimum of
/// `max_{k≤m} |∂^k v|`, together with that minimum.
pub fn transversality_constants(
    v: &FourierPotential,
    m_max: usize,
    grid_size: usize,
) -> Result<TransversalityCertificate> {
    if m_max == 0 {
        return Err(invalid("m_max must be at least 1"));
    }
    if grid_size < 16 {
        return Err(invalid("grid_size must be at least 16"));
    }
    // |∂^k v(x_j)| for k = 1..=m_max, row-major by grid point
    let derivs: Vec<Vec<f64>> = (0..grid_size)
        .into_par_iter()
        .map(|j| {
            let x = TAU * j as f64 / grid_size as f64;
            (1..=m_max as u32)
                .map(|k| v.derivative(k, x).abs())
                .collect()
        })
        .collect();
    let scale = derivs
        .iter()
        .flat_map(|row| row.iter().copied())
        .fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(Error::NotTransversalUpToM { m_max });
    }
    let tol = 1e-6 * scale;
    for m in 1..=m_max {
        let c = derivs
            .iter()
            .map(|row| row[..m].iter().copied().fold(0.0, f64::max))
            .fold(f64::INFINITY, f64::min);
        if c > tol {
            return Ok(TransversalityCertificate {
                order_m: m,
                lower_c: c,
                grid_size,
            });
        }
    }
    Err(Error::NotTransversalUpToM { m_max })
}

fn midpoint_grid(grid_size: usize) -> impl Iterator<Item = f64> {
    (0..grid_size).map(move |j| TAU * (j as f64 + 0.5) / grid_size as f64)
}

/// Riemann-sum estimate of `mes{x ∈ [0, 2π) : |v(x) − E| < t}`.
pub fn sublevel_measure(v: &impl Potential, energy: f64, t: f64, grid_size: usize) -> Result<f64> {
    if grid_size < 1000 {
        return Err(invalid("grid_size must be at least 1000"));
    }
    let hits = midpoint_grid(grid_size)
        .filter(|&x| (v.value(x) - energy).abs() < t)
        .count();
    Ok(TAU * hits as f64 / grid_size as f64)
}

/// Riemann-sum estimate of `mes{x : |∂^order v(x)| < eps}`.
pub fn derivative_sublevel_measure(
    v: &FourierPotential,
    order: u32,
    eps: f64,
    grid_size: usize,
) -> Result<f64> {
    if grid_size < 1000 {
        return Err(invalid("grid_size must be at least 1000"));
    }
    let hits = midpoint_grid(grid_size)
        .filter(|&x| v.derivative(order, x).abs() < eps)
        .count();
    Ok(TAU * hits as f64 / grid_size as f64)
}

/// Sorted samples of `v` on a midpoint grid, for repeated sublevel queries.
#[derive(Debug, Clone)]
pub struct SublevelSampler {
    sorted: Vec<f64>,
}

impl SublevelSampler {
    pub fn new(v: &impl Potential, grid_size: usize) -> Result<Self> {
        if grid_size < 1000 {
            return Err(invalid("grid_size must be at least 1000"));
        }
        let grid: Vec<f64> = midpoint_grid(grid_size).collect();
        let mut sorted: Vec<f64> = grid.par_iter().map(|&x| v.value(x)).collect();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    fn cell(&self) -> f64 {
        TAU / self.sorted.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        self.sorted[self.sorted.len() - 1]
    }

    /// `mes{|v − E| < t}` on the sampling grid.
    pub fn measure(&self, energy: f64, t: f64) -> f64 {
        let lo = self.sorted.partition_point(|&s| s <= energy - t);
        let hi = self.sorted.partition_point(|&s| s < energy + t);
        self.cell() * hi.saturating_sub(lo) as f64
    }

    /// `sup_E mes{|v − E| < t}` over every real `E`: the densest open window of
    /// width `2t` in the sorted samples.
    pub fn sup_measure(&self, t: f64) -> f64 {
        let s = &self.sorted;
        let mut best = 0usize;
        let mut j = 0usize;
        for i in 0..s.len() {
            if j < i {
                j = i;
            }
            while j < s.len() && s[j] < s[i] + 2.0 * t {
                j += 1;
            }
            best = best.max(j - i);
        }
        self.cell() * best as f64
    }
}

/// Energies over which the Łojasiewicz supremum is taken.
#[derive(Debug, Clone, PartialEq)]
pub enum EnergySet {
    /// Every real `E` (exact supremum over the sampling grid).
    All,
    Grid(Vec<f64>),
}

impl EnergySet {
    /// `n` energies spanning `[min v − 1, max v + 1]`.
    pub fn default_grid(sampler: &SublevelSampler, n: usize) -> Self {
        Self::Grid(linspace(sampler.min() - 1.0, sampler.max() + 1.0, n))
    }
}

/// Power-law fit `sup_E mes{|v − E| < t} ≈ C t^b`.
#[derive(Debug, Clone, Serialize)]
pub struct LojaFit {
    pub c: f64,
    pub b_loja: f64,
    pub r_squared: f64,
    pub t: Vec<f64>,
    pub measures: Vec<f64>,
}

pub const DEFAULT_LOJA_GRID: usize = 1 << 17;

pub fn loja_exponent_fit(
    v: &impl Potential,
    t_list: &[f64],
    energies: &EnergySet,
    grid_size: usize,
) -> Result<LojaFit> {
    if t_list.len() < 4 {
        return Err(invalid("need at least 4 values of t"));
    }
    if t_list.windows(2).any(|w| !(w[1] < w[0])) || t_list.iter().any(|&t| !(t > 0.0)) {
        return Err(invalid("t_list must be positive and strictly decreasing"));
    }
    if t_list[0] / t_list[t_list.len() - 1] < 100.0 {
        return Err(invalid("t_list must span at least two decades"));
    }
    let sampler = SublevelSampler::new(v, grid_size)?;
    let measures: Vec<f64> = t_list
        .iter()
        .map(|&t| match energies {
            EnergySet::All => sampler.sup_measure(t),
            EnergySet::Grid(es) => es
                .iter()
                .map(|&e| sampler.measure(e, t))
                .fold(0.0, f64::max),
        })
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = t_list
        .iter()
        .zip(&measures)
        .filter(|(_, &m)| m > 0.0 && m < TAU * (1.0 - 1e-12))
        .map(|(&t, &m)| (t.ln(), m.ln()))
        .unzip();
    let fit = LineFit::new(&xs, &ys).ok_or_else(|| {
        Error::DegenerateFit("fewer than two sublevel measures strictly inside (0, 2π)".into())
    })?;
    Ok(LojaFit {
        c: fit.intercept.exp(),
        b_loja: fit.slope,
        r_squared: fit.r_squared,
        t: t_list.to_vec(),
        measures,
    })
}
