//! Simulation-based checks against closed-form targets.

use ndarray::Array2;

use tvcorr::estimator::{estimate_corr_field, BandwidthSet, LrvParams};
use tvcorr::kernel::Kernel;
use tvcorr::panel::{difference, TimeSeriesPanel};
use tvcorr::rng::NormalStream;
use tvcorr::simlab::{simulate_case, SimCase, SimSpec};
use tvcorr::tuning::{lag_for, select_bandwidths, TuningConfig};

/// Stationary covariance of `x_t = a x_{t-1} + M ε_t`, by fixed-point iteration
/// of `Σ = a² Σ + M Mᵀ`.
fn stationary_covariance(p: usize, a: f64) -> Array2<f64> {
    let mut m = Array2::<f64>::zeros((p, p));
    for i in 0..p {
        m[[i, i]] += 0.8;
        for l in 0..p {
            if i / 3 == l / 3 {
                m[[i, l]] += 0.2;
            }
        }
    }
    let mmt = m.dot(&m.t());
    let mut sigma = mmt.clone();
    for _ in 0..200 {
        sigma = &sigma * (a * a) + &mmt;
    }
    sigma
}

#[test]
fn simulated_errors_have_the_stationary_correlation() {
    let n = 100_000;
    let t = 0.5;
    let spec = SimSpec {
        include_mean: false,
        frozen_time: Some(t),
        ..SimSpec::new(SimCase::One, n, 21)
    };
    let (panel, _) = simulate_case(&spec).unwrap();
    let a = 0.25 - 0.1 * (t - 0.5f64).powi(2);
    let sigma = stationary_covariance(6, a);
    let x = panel.values();
    for i in 0..6 {
        for l in 0..i {
            let (xi, xl) = (x.column(i), x.column(l));
            let (mi, ml) = (xi.mean().unwrap(), xl.mean().unwrap());
            let cov = xi.iter().zip(xl).map(|(u, v)| (u - mi) * (v - ml)).sum::<f64>() / n as f64;
            let vi = xi.iter().map(|u| (u - mi).powi(2)).sum::<f64>() / n as f64;
            let vl = xl.iter().map(|v| (v - ml).powi(2)).sum::<f64>() / n as f64;
            let empirical = cov / (vi * vl).sqrt();
            let target = sigma[[i, l]] / (sigma[[i, i]] * sigma[[l, l]]).sqrt();
            assert!((empirical - target).abs() < 0.02, "({i},{l}): {empirical} vs {target}");
        }
    }
}

/// Bivariate Gaussian noise with correlation `r` and no trend.
fn correlated_pair(n: usize, r: f64, seed: u64) -> TimeSeriesPanel {
    let mut z = NormalStream::new(seed, 7);
    let c = (1.0 - r * r).sqrt();
    let mut values = Array2::zeros((n, 2));
    for g in 0..n {
        let (u, v) = (z.next_normal(), z.next_normal());
        values[[g, 0]] = u;
        values[[g, 1]] = r * u + c * v;
    }
    TimeSeriesPanel::from_values(values).unwrap()
}

#[test]
fn constant_correlation_is_recovered_without_bias() {
    let n = 2000;
    let kernel = Kernel::default();
    let bands = BandwidthSet::uniform(2, 0.22).unwrap();
    let mid = n / 2 - 1;
    let mut total = 0.0;
    let mut close = 0;
    for rep in 0..100 {
        let diffs = difference(&correlated_pair(n, 0.5, rep), 16).unwrap();
        let est = estimate_corr_field(&diffs, &bands, &kernel, &LrvParams::uniform(2, 10, 0.3)).unwrap();
        let r = est.rho(1, 0)[mid];
        total += r;
        if (r - 0.5).abs() < 0.15 {
            close += 1;
        }
    }
    // pointwise sd is about 0.05, so the mean of 100 is good to about 0.005
    assert!((total / 100.0 - 0.5).abs() < 0.02, "mean {}", total / 100.0);
    assert!(close >= 95, "{close}/100 within 0.15 at t = 1/2");
}

#[test]
fn gcv_bandwidths_stay_in_a_sensible_range() {
    let kernel = Kernel::default();
    let n = 600;
    let grid = TuningConfig::default_for(n).bandwidths;
    let mut inside = 0;
    for seed in 0..100 {
        let (panel, _) = simulate_case(&SimSpec::new(SimCase::One, n, 2000 + seed)).unwrap();
        let diffs = difference(&panel, lag_for(n, 2.0)).unwrap();
        let (bands, _) = select_bandwidths(&diffs, &grid, &kernel).unwrap();
        let m = bands.matrix();
        if m.iter().all(|&b| (0.05..=0.35).contains(&b)) {
            inside += 1;
        }
    }
    assert!(inside >= 95, "{inside}/100");
}
