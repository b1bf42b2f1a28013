//! One function per subcommand. Hypothesis violations and empty results are
//! recorded as warnings; only unproducible outputs abort the run.

use std::f64::consts::TAU;

use qps_core::deviations::{
    fejer_coeffs, kernel_value, shift_deviation, shift_threshold, DeviationReport,
};
use qps_core::gevrey::{
    derivative_sublevel_measure, transversality_constants, truncation_profile, SublevelSampler,
    DEFAULT_M_MAX,
};
use qps_core::lyapunov::{
    avalanche_check, lyapunov_curve, multiscale_estimate, random_hyperbolic_family,
    MultiscaleConfig,
};
use qps_core::spectral::{
    ids, localize_eigenvectors, states_to_json_lines, thouless_residual, SpectralBox,
};
use qps_core::{
    finite_lyapunov, ldt_empirical, loja_exponent_fit, truncate, CocycleParams, EnergySet, Error,
    SL2,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::output::Recorder;
use crate::settings::{parse_band, parse_range, Resolved, Suite};
use crate::Failure;

fn params(r: &Resolved) -> Result<CocycleParams, Failure> {
    let p = CocycleParams::for_potential(
        r.lambda()?,
        r.settings.energy.unwrap_or(0.0),
        r.omega,
        &r.potential,
    );
    Ok(p)
}

fn energy_grid(r: &Resolved) -> Result<Vec<f64>, Failure> {
    let spec = r.settings.energies.as_deref().expect("defaulted");
    let (lo, hi, steps) = parse_range("E", spec)?;
    Ok(qps_core::fit::linspace(lo, hi, steps))
}

fn positive(field: &str, value: usize) -> Result<usize, Failure> {
    if value == 0 {
        Err(Failure::Config(format!(
            "field '{field}': must be positive"
        )))
    } else {
        Ok(value)
    }
}

pub fn lyapunov(r: &Resolved, rec: &mut Recorder) -> Result<(), Failure> {
    let p = params(r)?;
    let energies = energy_grid(r)?;
    let n = positive("N", r.settings.n.expect("defaulted"))?;
    let q = positive("Q", r.settings.quadrature.expect("defaulted"))?;
    let curve = rec.time("lyapunov_curve", || {
        lyapunov_curve(&p, &r.potential, &energies, n, q)
    });
    let min = curve.values.iter().copied().fold(f64::INFINITY, f64::min);
    rec.summary("min_L_N", min);
    rec.summary("max_jump", curve.max_jump());
    rec.write_table("lyapunov", || curve.to_csv(), &curve)
}

pub fn ldt(r: &Resolved, rec: &mut Recorder) -> Result<(), Failure> {
    let p = params(r)?;
    let s = &r.settings;
    let n_list = s.n_list.clone().expect("defaulted");
    let result = rec.time("ldt_empirical", || {
        ldt_empirical(
            &p,
            &r.potential,
            &n_list,
            s.tau.expect("defaulted"),
            s.samples.expect("defaulted"),
            s.seed.expect("defaulted"),
        )
    });
    let reports = match result {
        Ok(outcome) => {
            rec.summary("sigma", outcome.sigma());
            rec.summary("sigma_fit", outcome.sigma_fit);
            outcome.reports
        }
        Err(Error::AllZeroFractions { reports }) => {
            rec.warn("AllZeroFractions: no sampled phase exceeded the deviation threshold");
            reports
        }
        Err(e) => return Err(e.into()),
    };
    let fractions: Vec<f64> = reports.iter().map(|r| r.exceed_fraction).collect();
    rec.summary("exceed_fractions", &fractions);
    let csv = || {
        let mut out = String::from(DeviationReport::csv_header());
        out.push('\n');
        for rep in &reports {
            out.push_str(&rep.csv_row());
            out.push('\n');
        }
        out
    };
    rec.write_table("ldt", csv, &reports)
}

#[derive(Serialize)]
struct StateComparison {
    energy: f64,
    decay_rate: f64,
    lyapunov: f64,
}

pub fn spectrum(r: &Resolved, rec: &mut Recorder) -> Result<(), Failure> {
    let p = params(r)?;
    let s = &r.settings;
    let energies = energy_grid(r)?;
    let box_length = s.box_length.expect("defaulted");
    let n = positive("N", s.n.expect("defaulted"))?;
    let q = positive("Q", s.quadrature.expect("defaulted"))?;

    let curve = rec.time("ids", || {
        ids(
            &p,
            &r.potential,
            &energies,
            box_length,
            s.x_samples.expect("defaulted"),
        )
    })?;
    rec.write_table("ids", || curve.to_csv(), &curve)?;

    let mut e_eval = s.thouless_energies.clone().expect("defaulted");
    e_eval.sort_by(f64::total_cmp);
    e_eval.dedup();
    if e_eval.is_empty() {
        return Err(Failure::Config(
            "field 'thouless_energies': must not be empty".into(),
        ));
    }
    let l_curve = rec.time("lyapunov_curve", || {
        lyapunov_curve(&p, &r.potential, &e_eval, n, q)
    });
    rec.write_table("lyapunov", || l_curve.to_csv(), &l_curve)?;
    match thouless_residual(&l_curve, &curve, &e_eval) {
        Ok(res) => rec.summary("thouless_residual", res),
        Err(e @ Error::GridTooCoarse { .. }) => rec.warn(format!("Thouless residual skipped: {e}")),
        Err(e) => return Err(e.into()),
    }

    let band = parse_band(s.band.as_deref().expect("defaulted"))?;
    let bx = SpectralBox::new(&p, &r.potential, 0.0, 0, box_length)?;
    let located = rec.time("localize_eigenvectors", || {
        localize_eigenvectors(&bx, band, s.max_vectors.expect("defaulted"), s.dump_psi)
    });
    match located {
        Ok(states) => {
            let comparisons: Vec<StateComparison> = rec.time("state_lyapunov", || {
                states
                    .iter()
                    .map(|st| StateComparison {
                        energy: st.energy,
                        decay_rate: st.decay_rate,
                        lyapunov: finite_lyapunov(&p.with_energy(st.energy), &r.potential, n, q),
                    })
                    .collect()
            });
            let mut rel: Vec<f64> = comparisons
                .iter()
                .map(|c| (c.decay_rate - c.lyapunov).abs() / c.lyapunov.abs().max(1e-300))
                .collect();
            rel.sort_by(f64::total_cmp);
            rec.summary("eigenvectors", states.len());
            rec.summary("median_relative_decay_error", rel[rel.len() / 2]);
            rec.summary(
                "max_residual",
                states.iter().map(|st| st.residual).fold(0.0, f64::max),
            );
            rec.write(
                "eigenvectors.jsonl",
                states_to_json_lines(&states, s.dump_psi).as_bytes(),
            )?;
            rec.write_json("decay_vs_lyapunov.json", &comparisons)?;
        }
        Err(e @ Error::NoEigenvaluesInBand { .. }) => rec.warn(format!("NoEigenvaluesInBand: {e}")),
        Err(e) => return Err(e.into()),
    }
    Ok(())
}

#[derive(Serialize)]
struct AvalancheRow {
    trial: usize,
    seed: u64,
    n: usize,
    mu: f64,
    defect: f64,
    constant: f64,
    min_norm_ok: bool,
    pair_ok: bool,
}

fn diagonal_family(n: usize, mu: f64, seed: u64) -> Vec<SL2> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| SL2::diag(mu * rng.random_range(1.0..10.0f64)))
        .collect()
}

pub fn avalanche(r: &Resolved, rec: &mut Recorder) -> Result<(), Failure> {
    let s = &r.settings;
    let (n, mu, trials) = (
        s.matrices.expect("defaulted"),
        s.mu.expect("defaulted"),
        s.trials.expect("defaulted"),
    );
    let base = s.seed.expect("defaulted");
    let mut rows = Vec::with_capacity(trials);
    let mut violations = 0;
    for trial in 0..trials {
        let seed = base.wrapping_add(trial as u64);
        let mats = match s.suite.expect("defaulted") {
            Suite::Random => random_hyperbolic_family(n, mu, s.spread.expect("defaulted"), seed),
            Suite::Diagonal => diagonal_family(n, mu, seed),
        };
        let report = match avalanche_check(&mats, mu) {
            Ok(rep) => rep,
            Err(Error::AvalancheHypothesis { report, .. }) => {
                violations += 1;
                *report
            }
            Err(e) => return Err(e.into()),
        };
        rows.push(AvalancheRow {
            trial,
            seed,
            n,
            mu,
            defect: report.defect,
            constant: report.constant,
            min_norm_ok: report.hypothesis_min_ok,
            pair_ok: report.hypothesis_pair_ok,
        });
    }
    if violations > 0 {
        rec.warn(format!(
            "HypothesisViolated in {violations} of {trials} avalanche trials"
        ));
    }
    rec.summary(
        "max_defect",
        rows.iter().map(|r| r.defect).fold(0.0, f64::max),
    );
    rec.summary(
        "max_constant",
        rows.iter().map(|r| r.constant).fold(0.0, f64::max),
    );
    let csv = || {
        let mut out = String::from("trial,seed,n,mu,defect,constant,min_norm_ok,pair_ok\n");
        for r in &rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.trial, r.seed, r.n, r.mu, r.defect, r.constant, r.min_norm_ok, r.pair_ok
            ));
        }
        out
    };
    rec.write_table("avalanche", csv, &rows)
}

pub fn multiscale(r: &Resolved, rec: &mut Recorder) -> Result<(), Failure> {
    let p = params(r)?;
    let s = &r.settings;
    let cfg = MultiscaleConfig::new(
        s.n0.expect("defaulted"),
        s.gamma.expect("defaulted"),
        s.delta.expect("defaulted"),
        s.levels.expect("defaulted"),
    )?;
    let report = match rec.time("multiscale_estimate", || {
        multiscale_estimate(&p, &r.potential, &cfg)
    }) {
        Ok(rep) => rep,
        Err(Error::InductionHypothesis { which, report }) => {
            rec.warn(format!("HypothesisViolated: inductive step ({which:?})"));
            *report
        }
        Err(e) => return Err(e.into()),
    };
    rec.summary("positivity_ok", report.positivity_ok);
    rec.summary("decrement_ok", report.decrement_ok);
    rec.summary("extrapolated", report.extrapolated);
    rec.write_json("multiscale.json", &report)
}

#[derive(Serialize)]
struct LojaRow {
    t: f64,
    sup_measure: f64,
    derivative_measure: f64,
}

pub fn loja(r: &Resolved, rec: &mut Recorder) -> Result<(), Failure> {
    let s = &r.settings;
    let grid = s.grid.expect("defaulted");
    let t_list = s.t_list.clone().expect("defaulted");
    let energies = match s.energy_grid {
        None => EnergySet::All,
        Some(count) => {
            let sampler = SublevelSampler::new(&r.potential, grid)?;
            EnergySet::default_grid(&sampler, count)
        }
    };
    let fit = rec.time("loja_exponent_fit", || {
        loja_exponent_fit(&r.potential, &t_list, &energies, grid)
    })?;
    let deriv: Vec<f64> = rec.time("derivative_sublevel", || {
        t_list
            .iter()
            .map(|&eps| derivative_sublevel_measure(&r.potential, 1, eps, grid))
            .collect::<qps_core::Result<_>>()
    })?;
    let derivative_constant = t_list
        .iter()
        .zip(&deriv)
        .map(|(eps, m)| m / eps.sqrt())
        .fold(0.0, f64::max);
    match transversality_constants(&r.potential, DEFAULT_M_MAX, grid) {
        Ok(cert) => rec.summary("transversality", cert),
        Err(e) => rec.warn(format!("{e}")),
    }
    rec.summary("b_loja", fit.b_loja);
    rec.summary("c", fit.c);
    rec.summary("r_squared", fit.r_squared);
    rec.summary("derivative_constant", derivative_constant);
    let rows: Vec<LojaRow> = t_list
        .iter()
        .zip(&fit.measures)
        .zip(&deriv)
        .map(|((&t, &m), &d)| LojaRow {
            t,
            sup_measure: m,
            derivative_measure: d,
        })
        .collect();
    let csv = || {
        let mut out = String::from("t,sup_measure,derivative_measure\n");
        for row in &rows {
            out.push_str(&format!(
                "{},{},{}\n",
                row.t, row.sup_measure, row.derivative_measure
            ));
        }
        out
    };
    rec.write_table("loja", csv, &rows)
}

pub fn truncate_cmd(r: &Resolved, rec: &mut Recorder) -> Result<(), Failure> {
    let s = &r.settings;
    let scales = s.scales.clone().expect("defaulted");
    let profile = rec.time("truncation_profile", || {
        truncation_profile(&r.potential, &scales, s.b_trunc.expect("defaulted"))
    })?;
    rec.summary("fit", profile.fit);
    rec.summary("c_fit", profile.c_fit);
    let csv = || {
        let mut out = String::from("N,degree,sup_error\n");
        for ((n, d), e) in profile
            .scales
            .iter()
            .zip(&profile.degrees)
            .zip(&profile.errors)
        {
            out.push_str(&format!("{n},{d},{e}\n"));
        }
        out
    };
    rec.write_table("truncation", csv, &profile)
}

#[derive(Serialize)]
struct KernelSample {
    t: f64,
    abs_kernel: f64,
    bound: f64,
}

pub fn deviations_kernel(r: &Resolved, rec: &mut Recorder) -> Result<(), Failure> {
    let s = &r.settings;
    let kern = fejer_coeffs(s.r.expect("defaulted"), s.p.expect("defaulted"))?;
    let grid = positive("grid", s.grid.expect("defaulted"))?;
    let samples: Vec<KernelSample> = (0..grid)
        .map(|i| {
            let t = TAU * i as f64 / grid as f64;
            KernelSample {
                t,
                abs_kernel: kernel_value(&kern, t).norm(),
                bound: kern.bound(t),
            }
        })
        .collect();
    let worst = samples
        .iter()
        .map(|k| k.abs_kernel / k.bound)
        .fold(0.0, f64::max);
    rec.summary("coefficient_sum", kern.coeffs.iter().sum::<u64>());
    rec.summary("max_kernel_over_bound", worst);
    rec.write_table(
        "kernel_coefficients",
        || {
            let mut out = String::from("j,c\n");
            for (j, c) in kern.coeffs.iter().enumerate() {
                out.push_str(&format!("{j},{c}\n"));
            }
            out
        },
        &kern,
    )?;
    rec.write_table(
        "kernel",
        || {
            let mut out = String::from("t,abs_kernel,bound\n");
            for k in &samples {
                out.push_str(&format!("{},{},{}\n", k.t, k.abs_kernel, k.bound));
            }
            out
        },
        &samples,
    )?;

    // with a coupling and a scale, also average u_N over R shifts
    if let (Some(_), Some(n)) = (s.lambda, s.n) {
        let p = params(r)?;
        let strip = truncate(&r.potential, n, s.b_trunc.expect("defaulted"))?.strip_width;
        let threshold = shift_threshold(p.s_lambda, strip, kern.r, 1.0 / 3.0);
        let report = rec.time("shift_deviation", || {
            shift_deviation(
                &p,
                &r.potential,
                n,
                &kern,
                threshold,
                s.samples.expect("defaulted"),
                s.seed.expect("defaulted"),
            )
        })?;
        rec.summary("shift_exceed_fraction", report.exceed_fraction);
        rec.summary("shift_bound", (-(kern.r as f64).cbrt()).exp());
        rec.write_json("shift_deviation.json", &report)?;
    }
    Ok(())
}
