use std::f64::consts::TAU;

use qps_core::deviations::ldt_empirical;
use qps_core::fit::linspace;
use qps_core::lyapunov::{lyapunov_curve, positivity_scan};
use qps_core::spectral::{
    green_entry_log, ids, localize_eigenvectors, thouless_residual, SpectralBox,
};
use qps_core::{
    finite_lyapunov, transfer_log_norm, CocycleParams, Error, FourierPotential, Frequency,
};

fn cos_params(lambda: f64, energy: f64) -> CocycleParams {
    CocycleParams::for_potential(
        lambda,
        energy,
        Frequency::golden(),
        &FourierPotential::cosine(),
    )
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let v = FourierPotential::cosine();
    let p = cos_params(4.0, 0.3);
    let energies = linspace(-6.0, 6.0, 13);
    let run = || {
        let curve = lyapunov_curve(&p, &v, &energies, 300, 200);
        let dev = match ldt_empirical(&p, &v, &[20, 40], 0.2, 1000, 5) {
            Ok(o) => o.reports,
            Err(Error::AllZeroFractions { reports }) => reports,
            Err(e) => panic!("{e}"),
        };
        let idsc = ids(&p, &v, &energies, 200, 6).unwrap();
        (curve.values, dev, idsc.values)
    };
    let a = in_pool(1, run);
    let b = in_pool(8, run);
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert_eq!(a.2, b.2);
}

#[test]
fn green_entry_tracks_the_transfer_matrix_determinant() {
    // G(0, n−1) = ±1/det(H − E), and |det| is the (1,1) entry of M_n,
    // so its logarithm is at most n·u_n
    let v = FourierPotential::cosine();
    let p = cos_params(6.0, 0.7);
    for k in 0..8 {
        let x = TAU * k as f64 / 8.0;
        let n = 120;
        // the box starts at site 1 so that it shares its sites with M_n(x)
        let bx = SpectralBox::new(&p, &v, x, 1, n).unwrap();
        let (_, lg) = green_entry_log(&bx, p.energy, 0, n - 1).unwrap();
        let un = transfer_log_norm(&p, &v, x, n);
        assert!(
            -lg <= n as f64 * un + 1e-9,
            "x={x}: {} vs {}",
            -lg,
            n as f64 * un
        );
    }
}

#[test]
fn positivity_and_thouless_agree_in_gaps() {
    let v = FourierPotential::cosine();
    let p = cos_params(3.0, 0.0);
    let scan = positivity_scan(&p, &v, 3.0, 40, 500, 200).unwrap();
    assert!(scan.min_margin > 0.0);
    let grid = linspace(-5.5, 5.5, 551);
    let idsc = ids(&p, &v, &grid, 800, 16).unwrap();
    let e_eval = [-5.2, 0.0, 5.2];
    let l = lyapunov_curve(&p, &v, &e_eval, 800, 200);
    assert!(thouless_residual(&l, &idsc, &e_eval).unwrap() < 5e-2);
}

#[test]
fn localized_states_decay_like_the_lyapunov_exponent() {
    let v = FourierPotential::cosine();
    let p = cos_params(8.0, 0.0);
    let bx = SpectralBox::new(&p, &v, 0.4, 0, 400).unwrap();
    let states = localize_eigenvectors(&bx, (-3.0, 3.0), 20, false).unwrap();
    let mut rel: Vec<f64> = states
        .iter()
        .map(|s| {
            let l = finite_lyapunov(&p.with_energy(s.energy), &v, 400, 200);
            (s.decay_rate - l).abs() / l
        })
        .collect();
    rel.sort_by(f64::total_cmp);
    assert!(
        rel[rel.len() / 2] < 0.2,
        "median relative error {}",
        rel[rel.len() / 2]
    );
}
