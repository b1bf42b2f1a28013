//! Torus arithmetic, continued fractions and Diophantine certificates for
//! rotation frequencies `ω ∈ (0, 2π)`.

use std::f64::consts::{PI, TAU};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest partial quotient accepted before a frequency is declared rational.
pub const MAX_PARTIAL_QUOTIENT: f64 = 1e10;

/// Distance from `t` to the lattice `2πZ`, in `[0, π]`.
#[inline]
pub fn torus_dist(t: f64) -> f64 {
    let r = t - TAU * (t / TAU).round();
    r.abs().min(PI)
}

/// Reduce `t` into `[0, 2π)`.
#[inline]
pub fn wrap(t: f64) -> f64 {
    let r = t.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// A rotation frequency together with an (optional) Diophantine certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frequency {
    omega: f64,
    kappa: Option<f64>,
    verified_k: u64,
}

impl Frequency {
    pub fn new(omega: f64) -> Result<Self> {
        if !(omega > 0.0 && omega < TAU) {
            return Err(invalid(format!("omega = {omega} must lie in (0, 2π)")));
        }
        Ok(Self {
            omega,
            kappa: None,
            verified_k: 0,
        })
    }

    /// `2π (√5 − 1)/2`, the default experimental frequency.
    pub fn golden() -> Self {
        Self::new(TAU * (5f64.sqrt() - 1.0) / 2.0).expect("golden frequency is in range")
    }

    /// `2π (√2 − 1)`.
    pub fn silver() -> Self {
        Self::new(TAU * (2f64.sqrt() - 1.0)).expect("silver frequency is in range")
    }

    /// Frequency given as a fraction of a full turn: `ω = 2π·turns`.
    pub fn from_turns(turns: f64) -> Result<Self> {
        Self::new(TAU * turns)
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn kappa(&self) -> Option<f64> {
        self.kappa
    }

    pub fn verified_k(&self) -> u64 {
        self.verified_k
    }

    /// Check the Diophantine condition with constant `kappa` for all
    /// `1 ≤ |k| ≤ k_max` and record the certificate when it holds.
    ///
    /// Returns the margin; the certificate is only stored if the margin is `> 1`.
    pub fn certify(&mut self, kappa: f64, k_max: u64) -> Result<f64> {
        let (margin, _) = diophantine_margin(self.omega, kappa, k_max)?;
        if margin > 1.0 {
            self.kappa = Some(kappa);
            self.verified_k = k_max;
        }
        Ok(margin)
    }
}

impl FromStr for Frequency {
    type Err = Error;

    /// `golden`, `sqrt2`, `<decimal>t` (fraction of 2π) or `<decimal>` (radians).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "golden" => return Ok(Self::golden()),
            "sqrt2" => return Ok(Self::silver()),
            _ => {}
        }
        let bad = || invalid(format!("cannot parse frequency '{s}'"));
        if let Some(turns) = s.strip_suffix('t') {
            let turns: f64 = turns.trim().parse().map_err(|_| bad())?;
            Self::from_turns(turns)
        } else {
            let radians: f64 = s.parse().map_err(|_| bad())?;
            Self::new(radians)
        }
    }
}

/// Convergent `p/q` of `ω/2π`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Approximant {
    pub p: i64,
    pub q: u64,
}

impl Approximant {
    /// `|ω/2π − p/q|`
    pub fn error(&self, omega: f64) -> f64 {
        (omega / TAU - self.p as f64 / self.q as f64).abs()
    }
}

/// First `count` continued-fraction convergents of `ω/2π` with strictly
/// increasing denominators.
pub fn best_approximants(omega: f64, count: usize) -> Result<Vec<Approximant>> {
    if count == 0 {
        return Err(invalid("count must be at least 1"));
    }
    let alpha = omega / TAU;
    let a0 = alpha.floor();
    let mut frac = alpha - a0;

    // (p_{n-1}, q_{n-1}) and (p_n, q_n)
    let (mut p_prev, mut q_prev): (i64, u64) = (1, 0);
    let (mut p, mut q): (i64, u64) = (a0 as i64, 1);
    let mut out = vec![Approximant { p, q }];
    let mut terms = 1;

    while out.len() < count {
        if frac == 0.0 {
            return Err(Error::RationalFrequency { terms });
        }
        let inv = 1.0 / frac;
        let a = inv.floor();
        if a > MAX_PARTIAL_QUOTIENT {
            return Err(Error::RationalFrequency { terms });
        }
        frac = inv - a;
        terms += 1;
        let a = a as u64;
        let p_next = (a as i64)
            .checked_mul(p)
            .and_then(|v| v.checked_add(p_prev))
            .ok_or_else(|| Error::Overflow("convergent numerator".into()))?;
        let q_next = a
            .checked_mul(q)
            .and_then(|v| v.checked_add(q_prev))
            .ok_or_else(|| Error::Overflow("convergent denominator".into()))?;
        p_prev = p;
        q_prev = q;
        p = p_next;
        q = q_next;
        // a leading partial quotient of 1 repeats q = 1
        if q > out.last().map_or(0, |r| r.q) {
            out.push(Approximant { p, q });
        }
    }
    Ok(out)
}

/// `min_{1≤k≤k_max} torus_dist(kω)·k·log(1+k)³/κ` and its minimiser.
///
/// A margin above one certifies the Diophantine condition with constant
/// `kappa` up to `k_max`. Negative `k` give the same values by symmetry.
pub fn diophantine_margin(omega: f64, kappa: f64, k_max: u64) -> Result<(f64, u64)> {
    if k_max == 0 {
        return Err(invalid("k_max must be at least 1"));
    }
    if !(kappa > 0.0) {
        return Err(invalid("kappa must be positive"));
    }
    let mut best = (f64::INFINITY, 1);
    for k in 1..=k_max {
        let kf = k as f64;
        let weight = kf * (1.0 + kf).ln().powi(3) / kappa;
        let m = torus_dist(kf * omega) * weight;
        if m < best.0 {
            best = (m, k);
        }
    }
    Ok(best)
}
