//! Experiment configuration: flags, config-file fields and per-command defaults.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use qps_core::gevrey::DEFAULT_LOJA_GRID;
use qps_core::lyapunov::default_quadrature;
use qps_core::{FourierPotential, Frequency, Potential};
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    /// Random rotations around `diag(μ, 1/μ)`.
    Random,
    /// Commuting diagonal matrices; the identity telescopes exactly.
    Diagonal,
}

/// Every experiment knob. Flags and config-file fields share this shape;
/// a flag given on the command line wins over the file, the file over the
/// command's default.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// Potential: `cos`, `gevrey:s=1.5,rho=1,M=1[,K=16384]` or `file:<path>`.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub potential: Option<String>,

    /// Frequency: `golden`, `sqrt2`, `<x>t` (turns) or radians.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<String>,

    /// Coupling λ.
    #[arg(long, global = true, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,

    /// Single energy for phase-sampled experiments.
    #[arg(long, global = true, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,

    /// Energy grid `min:max:steps`.
    #[arg(long = "E", global = true, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energies: Option<String>,

    /// Scale N.
    #[arg(long = "N", global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,

    /// Comma-separated scales.
    #[arg(long = "N-list", global = true, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,

    /// Phase quadrature size Q.
    #[arg(long = "Q", global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<usize>,

    /// Random phase samples.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,

    /// Deviation exponent τ.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,

    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,

    /// Worker threads (default: QPS_WORKERS, else all cores).
    #[arg(long, global = true, env = "QPS_WORKERS")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,

    /// Output directory.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,

    /// Also write a plotting script next to the data.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub emit_plot: bool,

    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub box_length: Option<usize>,

    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_samples: Option<usize>,

    /// Eigenvalue band `lo:hi`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub band: Option<String>,

    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_vectors: Option<usize>,

    /// Include eigenvector amplitudes in the JSON-lines dump.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub dump_psi: bool,

    /// Energies where the Thouless residual is evaluated.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thouless_energies: Option<Vec<f64>>,

    #[arg(long, global = true, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suite: Option<Suite>,

    /// Matrices per avalanche chain.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrices: Option<usize>,

    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,

    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,

    /// Angular spread of the random hyperbolic suite.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spread: Option<f64>,

    #[arg(long = "N0", global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n0: Option<usize>,

    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,

    /// `b(s − 1)`; defaults from the potential and `b_trunc`.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,

    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,

    #[arg(long, global = true, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_list: Option<Vec<f64>>,

    /// Phase grid for sublevel measures.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,

    /// Energy grid size for the sublevel sup; omit for the exact sup.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_grid: Option<usize>,

    #[arg(long, global = true, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scales: Option<Vec<usize>>,

    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_trunc: Option<f64>,

    /// Fejér length R.
    #[arg(long = "R", global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<u64>,

    /// Fejér order p.
    #[arg(long = "p", global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<u32>,
}

macro_rules! overlay {
    ($hi:ident, $lo:ident; $($field:ident),* ; $($flag:ident),*) => {
        Settings {
            $($field: $hi.$field.or($lo.$field),)*
            $($flag: $hi.$flag || $lo.$flag,)*
        }
    };
}

impl Settings {
    /// Fields set here win over `base`.
    pub fn over(self, base: Settings) -> Settings {
        let (hi, lo) = (self, base);
        overlay!(hi, lo;
            potential, omega, lambda, energy, energies, n, n_list, quadrature, samples, tau,
            seed, workers, out, format, box_length, x_samples, band, max_vectors,
            thouless_energies, suite, matrices, mu, trials, spread, n0, gamma, delta, levels,
            t_list, grid, energy_grid, scales, b_trunc, r, p;
            emit_plot, dump_psi)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Settings, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("config file {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Failure::Config(format!("config file {}: {e}", path.display())))
    }
}

fn missing(field: &str) -> Failure {
    Failure::Config(format!("missing required field '{field}'"))
}

fn bad(field: &str, why: impl std::fmt::Display) -> Failure {
    Failure::Config(format!("field '{field}': {why}"))
}

pub fn parse_potential(spec: &str) -> Result<FourierPotential, Failure> {
    let spec = spec.trim();
    if spec == "cos" {
        return Ok(FourierPotential::cosine());
    }
    if let Some(path) = spec.strip_prefix("file:") {
        return FourierPotential::load(std::path::Path::new(path)).map_err(|e| bad("potential", e));
    }
    if let Some(rest) = spec.strip_prefix("gevrey:") {
        let (mut s, mut rho, mut m, mut k) = (None, None, None, qps_core::gevrey::DEFAULT_K_STORE);
        for part in rest.split(',').filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| bad("potential", format!("expected key=value, got '{part}'")))?;
            let num = || {
                value
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| bad("potential", format!("'{value}' is not a number")))
            };
            match key.trim() {
                "s" => s = Some(num()?),
                "rho" => rho = Some(num()?),
                "M" => m = Some(num()?),
                "K" => k = num()? as usize,
                other => return Err(bad("potential", format!("unknown key '{other}'"))),
            }
        }
        return FourierPotential::synth_gevrey(
            s.ok_or_else(|| bad("potential", "gevrey needs s"))?,
            rho.ok_or_else(|| bad("potential", "gevrey needs rho"))?,
            m.unwrap_or(1.0),
            k,
        )
        .map_err(|e| bad("potential", e));
    }
    Err(bad("potential", format!("unrecognised potential '{spec}'")))
}

/// `min:max:steps`.
pub fn parse_range(field: &str, spec: &str) -> Result<(f64, f64, usize), Failure> {
    let parts: Vec<&str> = spec.split(':').collect();
    let err = || bad(field, format!("expected min:max:steps, got '{spec}'"));
    if parts.len() != 3 {
        return Err(err());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| err())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| err())?;
    let steps: usize = parts[2].trim().parse().map_err(|_| err())?;
    if !(lo < hi) || steps < 2 {
        return Err(bad(field, "need min < max and at least 2 steps"));
    }
    Ok((lo, hi, steps))
}

/// `lo:hi`.
pub fn parse_band(spec: &str) -> Result<(f64, f64), Failure> {
    let err = || bad("band", format!("expected lo:hi, got '{spec}'"));
    let (a, b) = spec.split_once(':').ok_or_else(err)?;
    let lo: f64 = a.trim().parse().map_err(|_| err())?;
    let hi: f64 = b.trim().parse().map_err(|_| err())?;
    if !(lo < hi) {
        return Err(bad("band", "need lo < hi"));
    }
    Ok((lo, hi))
}

/// Settings with every field the command reads filled in, plus the parsed
/// potential and frequency.
pub struct Resolved {
    pub settings: Settings,
    pub potential: FourierPotential,
    pub omega: Frequency,
}

impl Resolved {
    pub fn lambda(&self) -> Result<f64, Failure> {
        self.settings.lambda.ok_or_else(|| missing("lambda"))
    }
}

fn range_str(lo: f64, hi: f64, steps: usize) -> String {
    format!("{lo}:{hi}:{steps}")
}

/// Apply the defaults of `command` and validate the required fields.
pub fn resolve(command: &str, merged: Settings) -> Result<Resolved, Failure> {
    let mut s = merged;
    s.potential.get_or_insert_with(|| "cos".into());
    s.omega.get_or_insert_with(|| "golden".into());
    s.seed.get_or_insert(0);
    s.format.get_or_insert(Format::Csv);
    s.out.get_or_insert_with(|| PathBuf::from("qps-out"));
    s.workers
        .get_or_insert_with(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if s.workers == Some(0) {
        return Err(bad("workers", "must be positive"));
    }
    let potential = parse_potential(s.potential.as_deref().expect("defaulted"))?;
    let omega: Frequency = s
        .omega
        .as_deref()
        .expect("defaulted")
        .parse()
        .map_err(|e| bad("omega", e))?;

    let needs_lambda = matches!(command, "lyapunov" | "ldt" | "spectrum" | "multiscale");
    if needs_lambda && s.lambda.is_none() {
        return Err(missing("lambda"));
    }
    let reach = 2.0 + s.lambda.unwrap_or(0.0).abs() * potential.sup_bound();
    match command {
        "lyapunov" => {
            s.energy.get_or_insert(0.0);
            s.energies
                .get_or_insert_with(|| range_str(-reach - 0.5, reach + 0.5, 200));
            let n = *s.n.get_or_insert(1000);
            s.quadrature.get_or_insert(default_quadrature(n));
        }
        "ldt" => {
            s.energy.get_or_insert(0.0);
            s.n_list.get_or_insert_with(|| vec![50, 100, 200, 400]);
            s.tau.get_or_insert(0.2);
            s.samples.get_or_insert(10_000);
        }
        "spectrum" => {
            s.box_length.get_or_insert(2000);
            s.x_samples.get_or_insert(64);
            s.energies
                .get_or_insert_with(|| range_str(-reach - 0.5, reach + 0.5, 1001));
            let bl = s.box_length.expect("defaulted");
            let n = *s.n.get_or_insert(bl);
            s.quadrature.get_or_insert(default_quadrature(n));
            s.band
                .get_or_insert_with(|| format!("{}:{}", -reach, reach));
            s.max_vectors.get_or_insert(100);
            s.thouless_energies
                .get_or_insert_with(|| qps_core::fit::linspace(-0.5 * reach, 0.5 * reach, 9));
        }
        "avalanche" => {
            s.suite.get_or_insert(Suite::Random);
            s.matrices.get_or_insert(50);
            s.mu.get_or_insert(1e4);
            s.trials.get_or_insert(100);
            s.spread.get_or_insert(0.5);
        }
        "multiscale" => {
            s.energy.get_or_insert(0.0);
            s.n0.get_or_insert(50);
            s.gamma.get_or_insert(qps_core::lyapunov::DEFAULT_GAMMA);
            let b = *s.b_trunc.get_or_insert(1.2);
            s.delta.get_or_insert(b * (potential.s() - 1.0));
            s.levels.get_or_insert(1);
        }
        "loja" => {
            s.t_list
                .get_or_insert_with(|| vec![1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4]);
            s.grid.get_or_insert(DEFAULT_LOJA_GRID);
        }
        "truncate" => {
            s.scales.get_or_insert_with(|| vec![4, 8, 16, 32]);
            s.b_trunc.get_or_insert(1.2);
        }
        "deviations-kernel" => {
            s.r.get_or_insert(10);
            s.p.get_or_insert(1);
            s.grid.get_or_insert(10_000);
            if s.lambda.is_some() && s.n.is_some() {
                s.energy.get_or_insert(0.0);
                s.samples.get_or_insert(10_000);
                s.b_trunc.get_or_insert(1.2);
            }
        }
        _ => {}
    }
    Ok(Resolved {
        settings: s,
        potential,
        omega,
    })
}
