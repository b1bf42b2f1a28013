//! Finite boxes `H_Λ(x)` with Dirichlet boundary: Sturm counting, integrated
//! density of states, the Thouless integral, Green's functions and
//! eigenvector localization.

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use serde::Serialize;

use crate::cocycle::CocycleParams;
use crate::error::{invalid, Error, Result};
use crate::fit::LineFit;
use crate::gevrey::Potential;
use crate::lyapunov::LyapunovCurve;

/// Largest IDS increment between adjacent grid energies the Thouless
/// integral accepts.
pub const MAX_IDS_INCREMENT: f64 = 0.05;

/// Relative distance to the spectrum below which a Green entry is refused.
pub const SINGULAR_TOLERANCE: f64 = 1e-12;

/// Amplitude below which eigenvector entries are ignored by the decay fit.
pub const DECAY_FLOOR: f64 = 1e-12;

const RESCALE_HIGH: f64 = 1e100;
const RESCALE_LOW: f64 = 1e-100;

/// `H_Λ(x)` on `Λ = [start, start + length)`: diagonal `λ v(x + nω)`, unit
/// off-diagonal.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralBox {
    pub start: i64,
    pub x: f64,
    pub params: CocycleParams,
    diag: Vec<f64>,
}

impl SpectralBox {
    pub fn new(
        params: &CocycleParams,
        potential: &impl Potential,
        x: f64,
        start: i64,
        length: usize,
    ) -> Result<Self> {
        if length == 0 {
            return Err(invalid("box length must be positive"));
        }
        let w = params.omega.omega();
        let diag = (0..length as i64)
            .map(|i| params.lambda * potential.value(x + (start + i) as f64 * w))
            .collect();
        Ok(Self {
            start,
            x,
            params: *params,
            diag,
        })
    }

    /// Box with an explicit diagonal; `params` only records provenance.
    pub fn from_diagonal(params: &CocycleParams, diag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(invalid("box length must be positive"));
        }
        if diag.iter().any(|d| !d.is_finite()) {
            return Err(invalid("diagonal entries must be finite"));
        }
        Ok(Self {
            start: 0,
            x: 0.0,
            params: *params,
            diag,
        })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// Gershgorin bound `max |d_n| + 2 ≥ ‖H‖`.
    pub fn norm_bound(&self) -> f64 {
        let off = if self.len() > 1 { 2.0 } else { 0.0 };
        self.diag.iter().fold(0.0f64, |m, d| m.max(d.abs())) + off
    }

    /// `(Hψ)(n)` with Dirichlet boundary.
    pub fn apply(&self, psi: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * psi[i];
                if i > 0 {
                    s += psi[i - 1];
                }
                if i + 1 < n {
                    s += psi[i + 1];
                }
                s
            })
            .collect()
    }

    fn pivot_floor(&self) -> f64 {
        f64::MIN_POSITIVE.sqrt() * self.norm_bound().max(1.0)
    }
}

/// Number of eigenvalues of `H_Λ(x)` strictly below `energy`.
pub fn eigenvalue_count(bx: &SpectralBox, energy: f64) -> usize {
    let floor = bx.pivot_floor();
    let mut count = 0;
    let mut q = 1.0;
    for (i, &d) in bx.diag.iter().enumerate() {
        q = if i == 0 {
            d - energy
        } else {
            d - energy - 1.0 / q
        };
        // a zero pivot is nudged up so an eigenvalue at E is not counted
        if q.abs() < floor {
            q = floor;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// `E ↦ N_Λ(E)` averaged over sampled phases.
#[derive(Debug, Clone, Serialize)]
pub struct IdsCurve {
    pub energies: Vec<f64>,
    pub values: Vec<f64>,
    pub box_length: usize,
    pub x_sample_count: usize,
}

impl IdsCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("E,N_of_E,box_length,x_samples\n");
        for (e, v) in self.energies.iter().zip(&self.values) {
            out.push_str(&format!(
                "{e},{v},{},{}\n",
                self.box_length, self.x_sample_count
            ));
        }
        out
    }

    /// Largest increment between adjacent grid points and the energy where it occurs.
    pub fn max_increment(&self) -> (f64, f64) {
        self.values
            .windows(2)
            .zip(&self.energies)
            .map(|(w, &e)| (w[1] - w[0], e))
            .fold(
                (0.0, self.energies[0]),
                |a, b| if b.0 > a.0 { b } else { a },
            )
    }
}

/// Equispaced phases `2π(j + ½)/X`.
pub fn phase_samples(count: usize) -> Vec<f64> {
    (0..count)
        .map(|j| TAU * (j as f64 + 0.5) / count as f64)
        .collect()
}

pub fn ids(
    params: &CocycleParams,
    potential: &impl Potential,
    energies: &[f64],
    box_length: usize,
    x_samples: usize,
) -> Result<IdsCurve> {
    if x_samples == 0 {
        return Err(invalid("x_samples must be positive"));
    }
    ids_at_phases(
        params,
        potential,
        energies,
        box_length,
        &phase_samples(x_samples),
    )
}

/// IDS averaged over the given phases.
pub fn ids_at_phases(
    params: &CocycleParams,
    potential: &impl Potential,
    energies: &[f64],
    box_length: usize,
    phases: &[f64],
) -> Result<IdsCurve> {
    if box_length < 10 {
        return Err(invalid("box_length must be at least 10"));
    }
    if phases.is_empty() {
        return Err(invalid("at least one phase sample is required"));
    }
    if energies.is_empty() || energies.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid(
            "energy grid must be non-empty and strictly increasing",
        ));
    }
    let counts: Vec<Vec<usize>> = phases
        .par_iter()
        .map(|&x| {
            let bx = SpectralBox::new(params, potential, x, 0, box_length)?;
            Ok(energies.iter().map(|&e| eigenvalue_count(&bx, e)).collect())
        })
        .collect::<Result<_>>()?;
    let denom = (box_length * phases.len()) as f64;
    let values = (0..energies.len())
        .map(|i| counts.iter().map(|c| c[i]).sum::<usize>() as f64 / denom)
        .collect();
    Ok(IdsCurve {
        energies: energies.to_vec(),
        values,
        box_length,
        x_sample_count: phases.len(),
    })
}

/// IDS of the free operator, `1 − arccos(E/2)/π` on `[−2, 2]`.
pub fn free_ids(energy: f64) -> f64 {
    if energy <= -2.0 {
        0.0
    } else if energy >= 2.0 {
        1.0
    } else {
        1.0 - (energy / 2.0).acos() / PI
    }
}

// antiderivative of log|u|
fn log_antiderivative(u: f64) -> f64 {
    if u == 0.0 {
        0.0
    } else {
        u * u.abs().ln() - u
    }
}

/// `∫ log|E − E′| dN(E′)` with `N` linear on every grid cell; mass below
/// and above the grid sits as atoms at its endpoints.
pub fn ids_log_potential(curve: &IdsCurve, energy: f64) -> f64 {
    let es = &curve.energies;
    let ns = &curve.values;
    let atom = |e: f64, mass: f64| {
        if mass > 0.0 {
            mass * (energy - e).abs().ln()
        } else {
            0.0
        }
    };
    let mut total = atom(es[0], ns[0]) + atom(es[es.len() - 1], 1.0 - ns[ns.len() - 1]);
    for i in 0..es.len() - 1 {
        let dn = ns[i + 1] - ns[i];
        if dn == 0.0 {
            continue;
        }
        let (a, b) = (es[i], es[i + 1]);
        let integral = log_antiderivative(b - energy) - log_antiderivative(a - energy);
        total += dn / (b - a) * integral;
    }
    total
}

/// `max_E |L(E) − ∫ log|E − E′| dN(E′)|` over `e_eval`.
pub fn thouless_residual(
    lyapunov: &LyapunovCurve,
    curve: &IdsCurve,
    e_eval: &[f64],
) -> Result<f64> {
    let (increment, at) = curve.max_increment();
    if increment > MAX_IDS_INCREMENT {
        return Err(Error::GridTooCoarse {
            increment,
            energy: at,
        });
    }
    let (lo, hi) = (curve.energies[0], curve.energies[curve.energies.len() - 1]);
    let mut worst = 0.0f64;
    for &e in e_eval {
        if !(lo..=hi).contains(&e) {
            return Err(invalid(format!(
                "E = {e} lies outside the IDS grid [{lo}, {hi}]"
            )));
        }
        let l = lyapunov
            .interpolate(e)
            .ok_or_else(|| invalid(format!("E = {e} lies outside the Lyapunov grid")))?;
        worst = worst.max((l - ids_log_potential(curve, e)).abs());
    }
    Ok(worst)
}

// (θ_k, θ_{k−1}) with a shared log scale
#[derive(Clone, Copy)]
struct ScaledPair {
    cur: f64,
    prev: f64,
    log_scale: f64,
}

impl ScaledPair {
    fn start(first: f64) -> Self {
        Self {
            cur: first,
            prev: 1.0,
            log_scale: 0.0,
        }
    }

    fn step(&mut self, a: f64) {
        let next = a * self.cur - self.prev;
        self.prev = self.cur;
        self.cur = next;
        let m = self.cur.abs().max(self.prev.abs());
        if m > RESCALE_HIGH || (m > 0.0 && m < RESCALE_LOW) {
            self.cur /= m;
            self.prev /= m;
            self.log_scale += m.ln();
        }
    }

    fn signed_log(&self) -> (f64, f64) {
        (self.cur.signum(), self.cur.abs().ln() + self.log_scale)
    }
}

/// `(sign, log|G(n1, n2)|)` for `G = (H_Λ − E)^{−1}`, 0-based indices.
pub fn green_entry_log(bx: &SpectralBox, energy: f64, n1: usize, n2: usize) -> Result<(f64, f64)> {
    let n = bx.len();
    if n1 >= n || n2 >= n {
        return Err(invalid(format!(
            "indices ({n1}, {n2}) outside a box of length {n}"
        )));
    }
    let tol = SINGULAR_TOLERANCE * bx.norm_bound().max(1.0);
    if eigenvalue_count(bx, energy - tol) != eigenvalue_count(bx, energy + tol) {
        return Err(Error::NearSingular {
            energy,
            tolerance: tol,
        });
    }
    let (i, j) = (n1.min(n2), n1.max(n2));
    let a: Vec<f64> = bx.diag.iter().map(|d| d - energy).collect();

    // leading minors θ_k = det of rows [0, k)
    let mut lead = ScaledPair {
        cur: 1.0,
        prev: 0.0,
        log_scale: 0.0,
    };
    let mut theta_i = (1.0, 0.0);
    for (k, &ak) in a.iter().enumerate() {
        if k == i {
            theta_i = lead.signed_log();
        }
        lead.step(ak);
    }
    let theta_n = lead.signed_log();

    // trailing minors φ_k = det of rows [k, n)
    let mut phi_next = (1.0, 0.0);
    if j + 1 < n {
        let mut trail = ScaledPair::start(a[n - 1]);
        for &ak in a[j + 1..n - 1].iter().rev() {
            trail.step(ak);
        }
        phi_next = trail.signed_log();
    }

    if theta_n.1 == f64::NEG_INFINITY {
        return Err(Error::NearSingular {
            energy,
            tolerance: tol,
        });
    }
    let parity = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
    let sign = parity * theta_i.0 * phi_next.0 * theta_n.0;
    Ok((sign, theta_i.1 + phi_next.1 - theta_n.1))
}

/// `(H_Λ − E)^{−1}(n1, n2)`, 0-based indices.
pub fn green_entry(bx: &SpectralBox, energy: f64, n1: usize, n2: usize) -> Result<f64> {
    let (sign, log_mag) = green_entry_log(bx, energy, n1, n2)?;
    Ok(sign * log_mag.exp())
}

/// One eigenpair with its localization diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct LocalizedState {
    pub energy: f64,
    pub center: usize,
    pub decay_rate: f64,
    pub residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi: Option<Vec<f64>>,
}

impl LocalizedState {
    pub fn to_json_line(&self, with_psi: bool) -> String {
        let mut v = serde_json::to_value(self).expect("serializable state");
        if !with_psi {
            v.as_object_mut().expect("object").remove("psi");
        }
        v.to_string()
    }
}

/// `k`-th smallest eigenvalue (0-based) by bisection on Sturm counts.
pub fn kth_eigenvalue(bx: &SpectralBox, k: usize) -> f64 {
    let r = bx.norm_bound() + 1.0;
    let (mut lo, mut hi) = (-r, r);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if eigenvalue_count(bx, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

// LU with partial pivoting of the tridiagonal H − shift
struct TridiagonalLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagonalLu {
    fn factor(diag: &[f64], shift: f64, floor: f64) -> Self {
        let n = diag.len();
        let mut d: Vec<f64> = diag.iter().map(|x| x - shift).collect();
        let mut dl = vec![1.0f64; n.saturating_sub(1)];
        let mut du = vec![1.0; n.saturating_sub(1)];
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    d[i] = floor;
                }
                let fact = dl[i] / d[i];
                dl[i] = fact;
                d[i + 1] -= fact * du[i];
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -fact;
                }
                swapped[i] = true;
            }
        }
        for p in d.iter_mut() {
            if p.abs() < floor {
                *p = if *p < 0.0 { -floor } else { floor };
            }
        }
        Self {
            dl,
            d,
            du,
            du2,
            swapped,
        }
    }

    fn solve(&self, b: &mut [f64]) {
        let n = b.len();
        for i in 0..n - 1 {
            if self.swapped[i] {
                let t = b[i];
                b[i] = b[i + 1];
                b[i + 1] = t - self.dl[i] * b[i];
            } else {
                b[i + 1] -= self.dl[i] * b[i];
            }
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }
}

fn normalize(v: &mut [f64]) {
    let m = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if m > 0.0 {
        v.iter_mut().for_each(|x| *x /= m);
    }
    let s = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `−slope` of `log|ψ(n)|` against `|n − center|`, dropping the tenth of the
/// retained sites nearest the center and the tenth nearest the boundary.
pub fn decay_rate(psi: &[f64], center: usize) -> f64 {
    let n = psi.len();
    let peak = psi[center].abs();
    let mut sites: Vec<usize> = (0..n)
        .filter(|&i| i != center && psi[i].abs() > DECAY_FLOOR * peak)
        .collect();
    let drop = sites.len() / 10;
    sites.sort_by_key(|&i| i.abs_diff(center));
    sites.drain(..drop);
    sites.sort_by_key(|&i| i.min(n - 1 - i));
    sites.drain(..drop);
    let (xs, ys): (Vec<f64>, Vec<f64>) = sites
        .iter()
        .map(|&i| (i.abs_diff(center) as f64, (psi[i].abs() / peak).ln()))
        .unzip();
    LineFit::new(&xs, &ys).map_or(0.0, |f| -f.slope)
}

const INVERSE_ITERATIONS: usize = 3;

/// Eigenpairs of `H_Λ(x)` in `[lo, hi]` by bisection and inverse iteration.
/// At most `max_vectors` states are returned, spread evenly over the band.
pub fn localize_eigenvectors(
    bx: &SpectralBox,
    band: (f64, f64),
    max_vectors: usize,
    keep_psi: bool,
) -> Result<Vec<LocalizedState>> {
    let (lo, hi) = band;
    if bx.len() < 100 {
        return Err(invalid("localization needs a box of length at least 100"));
    }
    if !(lo < hi) || max_vectors == 0 {
        return Err(invalid("band must satisfy lo < hi and max_vectors > 0"));
    }
    let first = eigenvalue_count(bx, lo);
    let last = eigenvalue_count(bx, hi);
    if last <= first {
        return Err(Error::NoEigenvaluesInBand { lo, hi });
    }
    let available = last - first;
    let take = available.min(max_vectors);
    let indices: Vec<usize> = (0..take).map(|i| first + (i * available) / take).collect();
    let energies: Vec<f64> = indices.par_iter().map(|&k| kth_eigenvalue(bx, k)).collect();

    // clusters of close eigenvalues are reorthogonalized together
    let norm = bx.norm_bound().max(1.0);
    let gap = 1e-3 * norm;
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (pos, &e) in energies.iter().enumerate() {
        match clusters.last_mut() {
            Some(c) if e - energies[*c.last().expect("non-empty")] < gap => c.push(pos),
            _ => clusters.push(vec![pos]),
        }
    }
    let floor = f64::EPSILON * norm;
    let n = bx.len();
    let states: Vec<Vec<LocalizedState>> = clusters
        .par_iter()
        .map(|cluster| {
            let mut done: Vec<Vec<f64>> = Vec::with_capacity(cluster.len());
            let mut out = Vec::with_capacity(cluster.len());
            for &pos in cluster {
                let e = energies[pos];
                let lu = TridiagonalLu::factor(&bx.diag, e, floor);
                let mut psi: Vec<f64> = (0..n)
                    .map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.618_033_988_7 * TAU).sin())
                    .collect();
                normalize(&mut psi);
                for _ in 0..INVERSE_ITERATIONS {
                    lu.solve(&mut psi);
                    for prev in &done {
                        let c = dot(&psi, prev);
                        psi.iter_mut().zip(prev).for_each(|(p, q)| *p -= c * q);
                    }
                    normalize(&mut psi);
                }
                let h_psi = bx.apply(&psi);
                let rayleigh = dot(&psi, &h_psi);
                let residual = h_psi
                    .iter()
                    .zip(&psi)
                    .map(|(h, p)| (h - rayleigh * p).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let center = psi
                    .iter()
                    .enumerate()
                    .fold(
                        (0, 0.0),
                        |acc, (i, p)| if p.abs() > acc.1 { (i, p.abs()) } else { acc },
                    )
                    .0;
                out.push(LocalizedState {
                    energy: rayleigh,
                    center,
                    decay_rate: decay_rate(&psi, center),
                    residual,
                    psi: keep_psi.then(|| psi.clone()),
                });
                done.push(psi);
            }
            out
        })
        .collect();
    Ok(states.into_iter().flatten().collect())
}

/// JSON-lines dump of localized states.
pub fn states_to_json_lines(states: &[LocalizedState], with_psi: bool) -> String {
    states
        .iter()
        .map(|s| s.to_json_line(with_psi) + "\n")
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arithmetic::Frequency;
    use crate::fit::linspace;
    use crate::gevrey::FourierPotential;
    use crate::lyapunov::lyapunov_curve;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn free_params() -> CocycleParams {
        CocycleParams::new(0.0, 0.0, Frequency::golden(), 1.0)
    }

    fn dense(bx: &SpectralBox) -> DMatrix<f64> {
        let n = bx.len();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                bx.diag()[i]
            } else if i.abs_diff(j) == 1 {
                1.0
            } else {
                0.0
            }
        })
    }

    #[test]
    fn free_box_counts() {
        let bx = SpectralBox::from_diagonal(&free_params(), vec![0.0; 3]).unwrap();
        assert_eq!(eigenvalue_count(&bx, 1.0), 2);
        assert_eq!(eigenvalue_count(&bx, -3.0), 0);
        assert_eq!(eigenvalue_count(&bx, 3.0), 3);
        // eigenvalue exactly at E is not counted
        assert_eq!(eigenvalue_count(&bx, 0.0), 1);
    }

    #[test]
    fn ids_free_examples() {
        let p = free_params();
        let v = FourierPotential::cosine();
        let c = ids(&p, &v, &[0.0, 2.1], 10_000, 1).unwrap();
        assert_abs_diff_eq!(c.values[0], 0.5, epsilon = 1e-3);
        assert_eq!(c.values[1], 1.0);
    }

    #[test]
    fn ids_monotone_for_cos() {
        let v = FourierPotential::cosine();
        let p = CocycleParams::for_potential(10.0, 0.0, Frequency::golden(), &v);
        let grid = linspace(-12.5, 12.5, 200);
        let c = ids(&p, &v, &grid, 200, 4).unwrap();
        assert!(c.values.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(c.values[0], 0.0);
        assert_eq!(c.values[199], 1.0);
    }

    #[test]
    fn ids_x_stability() {
        let v = FourierPotential::cosine();
        let p = CocycleParams::for_potential(3.0, 0.0, Frequency::golden(), &v);
        let grid = linspace(-5.5, 5.5, 50);
        let a = ids_at_phases(&p, &v, &grid, 2000, &[0.3]).unwrap();
        let b = ids_at_phases(&p, &v, &grid, 2000, &[2.9]).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() <= 2.0 / 2000.0 + 1e-3, "{x} vs {y}");
        }
    }

    #[test]
    fn log_potential_of_point_mass() {
        let c = IdsCurve {
            energies: vec![0.5, 1.0],
            values: vec![1.0, 1.0],
            box_length: 10,
            x_sample_count: 1,
        };
        assert_abs_diff_eq!(ids_log_potential(&c, 3.0), (2.5f64).ln(), epsilon = 1e-15);
    }

    #[test]
    fn log_potential_of_free_ids() {
        let grid = linspace(-2.0, 2.0, 4001);
        let c = IdsCurve {
            values: grid.iter().map(|&e| free_ids(e)).collect(),
            energies: grid,
            box_length: 10,
            x_sample_count: 1,
        };
        let l3 = ((3.0 + 5f64.sqrt()) / 2.0).ln();
        assert_abs_diff_eq!(ids_log_potential(&c, 3.0), l3, epsilon = 1e-4);
        assert_abs_diff_eq!(ids_log_potential(&c, 0.7), 0.0, epsilon = 2e-3);
    }

    #[test]
    fn thouless_free_consistency() {
        let v = FourierPotential::cosine();
        let p = free_params();
        let grid = linspace(-3.5, 3.5, 701);
        let c = ids(&p, &v, &grid, 2000, 1).unwrap();
        let es = [-3.2, -1.0, 0.0, 0.5, 3.0];
        let curve = lyapunov_curve(&p, &v, &es, 2000, 400);
        let r = thouless_residual(&curve, &c, &es).unwrap();
        assert!(r < 1e-2, "residual {r}");
    }

    #[test]
    fn thouless_rejects_coarse_grid() {
        let v = FourierPotential::cosine();
        let p = free_params();
        let c = ids(&p, &v, &[-3.0, 0.0, 3.0], 100, 1).unwrap();
        let curve = lyapunov_curve(&p, &v, &[0.0], 50, 400);
        assert!(matches!(
            thouless_residual(&curve, &c, &[0.0]),
            Err(Error::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn green_examples() {
        let p = free_params();
        let one = SpectralBox::from_diagonal(&p, vec![0.7]).unwrap();
        assert_abs_diff_eq!(green_entry(&one, 0.2, 0, 0).unwrap(), 2.0, epsilon = 1e-14);
        let two = SpectralBox::from_diagonal(&p, vec![0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(green_entry(&two, 0.0, 0, 1).unwrap(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(green_entry(&two, 0.0, 1, 0).unwrap(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(green_entry(&two, 0.0, 0, 0).unwrap(), 0.0, epsilon = 1e-14);
        assert!(matches!(
            green_entry(&two, 1.0, 0, 1),
            Err(Error::NearSingular { .. })
        ));
    }

    #[test]
    fn green_long_box_does_not_overflow() {
        let v = FourierPotential::cosine();
        let p = CocycleParams::for_potential(10.0, 0.0, Frequency::golden(), &v);
        let bx = SpectralBox::new(&p, &v, 0.3, 0, 2000).unwrap();
        let (_, lg) = green_entry_log(&bx, 0.123, 0, 1999).unwrap();
        assert!(lg.is_finite() && lg < -1000.0, "{lg}");
    }

    #[test]
    fn localization_free_is_extended() {
        let bx = SpectralBox::from_diagonal(&free_params(), vec![0.0; 200]).unwrap();
        let states = localize_eigenvectors(&bx, (-2.0, 2.0), 20, false).unwrap();
        assert_eq!(states.len(), 20);
        for s in &states {
            assert!(s.decay_rate.abs() < 0.05, "rate {}", s.decay_rate);
            assert!(s.residual < 1e-8 * bx.norm_bound());
        }
    }

    #[test]
    fn localization_single_spike() {
        let big = 1e3;
        let mut diag = vec![0.0; 101];
        diag[50] = big;
        let bx = SpectralBox::from_diagonal(&free_params(), diag).unwrap();
        let states = localize_eigenvectors(&bx, (big - 10.0, big + 10.0), 5, true).unwrap();
        assert_eq!(states.len(), 1);
        let s = &states[0];
        assert_eq!(s.center, 50);
        // ψ_{n±1}/ψ_n = r with r + 1/r = E ≈ big
        let expect = (s.energy / 2.0).acosh();
        assert!(
            (s.decay_rate - expect).abs() < 0.05 * expect,
            "{} vs {expect}",
            s.decay_rate
        );
        assert!(s.residual < 1e-8 * bx.norm_bound());
    }

    #[test]
    fn localization_no_eigenvalues() {
        let bx = SpectralBox::from_diagonal(&free_params(), vec![0.0; 100]).unwrap();
        assert!(matches!(
            localize_eigenvectors(&bx, (5.0, 6.0), 5, false),
            Err(Error::NoEigenvaluesInBand { .. })
        ));
    }

    #[test]
    fn json_lines_gate_psi() {
        let s = LocalizedState {
            energy: 1.0,
            center: 3,
            decay_rate: 0.5,
            residual: 0.0,
            psi: Some(vec![0.0, 1.0]),
        };
        assert!(s.to_json_line(true).contains("psi"));
        assert!(!s.to_json_line(false).contains("psi"));
    }

    fn arb_box() -> impl Strategy<Value = SpectralBox> {
        (1usize..=64, -5.0f64..5.0, 0.0f64..TAU, any::<bool>()).prop_map(
            |(len, lambda, x, repeat)| {
                let v = FourierPotential::cosine();
                let p = CocycleParams::for_potential(lambda, 0.0, Frequency::golden(), &v);
                let mut bx = SpectralBox::new(&p, &v, x, 0, len).unwrap();
                if repeat {
                    // exact repeated values stress the pivot guard
                    bx.diag
                        .iter_mut()
                        .for_each(|d| *d = (*d * 4.0).round() / 4.0);
                }
                bx
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn sturm_matches_dense(bx in arb_box(), probes in prop::collection::vec(-8.0f64..8.0, 8)) {
            let mut eig: Vec<f64> = dense(&bx).symmetric_eigenvalues().iter().copied().collect();
            eig.sort_by(f64::total_cmp);
            for e in probes {
                // keep probes off eigenvalues by more than the eigensolver error
                if eig.iter().any(|x| (x - e).abs() < 1e-9) {
                    continue;
                }
                let expect = eig.iter().filter(|&&x| x < e).count();
                prop_assert_eq!(eigenvalue_count(&bx, e), expect);
            }
            prop_assert_eq!(eigenvalue_count(&bx, bx.norm_bound() + 1.0), bx.len());
        }

        #[test]
        fn count_is_monotone(bx in arb_box(), a in -8.0f64..8.0, b in -8.0f64..8.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(eigenvalue_count(&bx, lo) <= eigenvalue_count(&bx, hi));
        }

        #[test]
        fn green_inverse_identity(bx in arb_box(), e in -8.0f64..8.0) {
            let n = bx.len();
            let m = dense(&bx) - DMatrix::identity(n, n) * e;
            let eig: Vec<f64> = dense(&bx).symmetric_eigenvalues().iter().copied().collect();
            prop_assume!(eig.iter().all(|x| (x - e).abs() > 1e-3));
            let g = DMatrix::from_fn(n, n, |i, j| green_entry(&bx, e, i, j).unwrap());
            let id = &m * &g;
            for i in 0..n {
                for j in 0..n {
                    let target = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((id[(i, j)] - target).abs() < 1e-8, "({i},{j}) {}", id[(i, j)]);
                    let rel = (g[(i, j)] - g[(j, i)]).abs() / g[(i, j)].abs().max(1e-300);
                    prop_assert!(rel < 1e-10 || g[(i, j)] == g[(j, i)]);
                }
            }
        }
    }
}
