use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tvcorr::estimator::{estimate_corr_field, BandwidthSet, CorrFieldEstimate, LrvParams};
use tvcorr::inference::{step_up, RuleKind, ThresholdRule};
use tvcorr::kernel::Kernel;
use tvcorr::pairs::hypothesis_pairs;
use tvcorr::panel::{difference, grid_time, TimeSeriesPanel};
use tvcorr::pipeline::{run, LagChoice, PipelineConfig, PipelineOutput};

const H: usize = 5;

/// Values on a 1/8 lattice so that shifts and differences are exact.
fn dyadic_values(n: usize, p: usize, seed: u64) -> Array2<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut v = Array2::from_shape_fn((n, p), |_| r.random_range(-16i32..=16) as f64 / 8.0);
    // a shared component so the pairs are not all null
    for g in 0..n {
        let common = v[[g, 0]];
        for i in 1..p {
            v[[g, i]] += common / 2.0;
        }
    }
    v
}

fn estimate(values: Array2<f64>, b: f64) -> CorrFieldEstimate {
    let p = values.ncols();
    let panel = TimeSeriesPanel::from_values(values).unwrap();
    let diffs = difference(&panel, H).unwrap();
    let bands = BandwidthSet::uniform(p, b).unwrap();
    estimate_corr_field(&diffs, &bands, &Kernel::default(), &LrvParams::uniform(p, 6, 0.3)).unwrap()
}

fn quick_config(seed: u64) -> PipelineConfig {
    PipelineConfig {
        lag: LagChoice::Fixed(H),
        bandwidth: Some(0.3),
        w: Some(4),
        eta: Some(0.3),
        m: Some(6),
        replicates: 200,
        seed,
        ..Default::default()
    }
}

fn pipeline(values: Array2<f64>, seed: u64) -> PipelineOutput {
    let panel = TimeSeriesPanel::from_values(values).unwrap();
    run(&panel, &quick_config(seed), &Kernel::default()).unwrap()
}

fn pvalue_rows(out: &PipelineOutput) -> Vec<Vec<f64>> {
    (0..out.pvalues.rows()).map(|k| out.pvalues.row(k)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn level_shifts_leave_everything_unchanged(seed in 0u64..1000, shift in -64i32..64) {
        let values = dyadic_values(150, 3, seed);
        let mut shifted = values.clone();
        shifted.column_mut(1).mapv_inplace(|x| x + shift as f64 / 4.0);
        let (a, b) = (pipeline(values, seed), pipeline(shifted, seed));
        prop_assert_eq!(pvalue_rows(&a), pvalue_rows(&b));
        for (i, l) in hypothesis_pairs(3) {
            prop_assert_eq!(a.estimate.rho(i, l), b.estimate.rho(i, l));
        }
    }

    #[test]
    fn rescaling_a_series_leaves_correlation_unchanged(seed in 0u64..1000, scale in 0.01f64..100.0) {
        let values = dyadic_values(150, 3, seed);
        let mut scaled = values.clone();
        scaled.column_mut(2).mapv_inplace(|x| x * scale);
        let (a, b) = (estimate(values, 0.3), estimate(scaled, 0.3));
        for (i, l) in hypothesis_pairs(3) {
            for g in a.window().iter() {
                let (x, y) = (a.rho(i, l)[g], b.rho(i, l)[g]);
                prop_assert!((x - y).abs() <= 1e-10, "pair ({i},{l}) g {g}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn a_jump_only_moves_nearby_estimates(seed in 0u64..1000, at in 40usize..160, size in -16i32..16) {
        let n = 200;
        let b = 0.25;
        let values = dyadic_values(n, 3, seed);
        let mut jumped = values.clone();
        for g in at..n {
            jumped[[g, 0]] += size as f64 / 8.0;
        }
        let (a, c) = (estimate(values, b), estimate(jumped, b));
        let t0 = grid_time(at, n);
        for g in a.window().iter() {
            if (grid_time(g, n) - t0).abs() > b + H as f64 / n as f64 {
                for (i, l) in hypothesis_pairs(3) {
                    prop_assert_eq!(a.rho(i, l)[g], c.rho(i, l)[g], "pair ({}, {}) g {}", i, l, g);
                }
            }
        }
    }

    #[test]
    fn reordering_series_permutes_pairs(seed in 0u64..1000, perm in Just([2usize, 0, 3, 1]).prop_shuffle()) {
        let values = dyadic_values(120, 4, seed);
        let mut permuted = values.clone();
        for (from, &to) in perm.iter().enumerate() {
            permuted.column_mut(to).assign(&values.column(from));
        }
        let (a, b) = (estimate(values, 0.3), estimate(permuted, 0.3));
        for (i, l) in hypothesis_pairs(4) {
            prop_assert_eq!(a.rho(i, l), b.rho(perm[i], perm[l]));
            prop_assert_eq!(a.rho(i, l), a.rho(l, i));
        }
    }

    #[test]
    fn by_rejects_a_subset_of_bh(p in prop::collection::vec(0.0f64..=1.0, 1..40), alpha in 0.01f64..0.5) {
        let m = p.len();
        let bh = step_up(&p, &ThresholdRule::new(RuleKind::Bh, alpha, m).unwrap()).unwrap();
        let by = step_up(&p, &ThresholdRule::new(RuleKind::By, alpha, m).unwrap()).unwrap();
        prop_assert!(by.iter().all(|k| bh.contains(k)));
    }

    #[test]
    fn smaller_pvalues_never_shrink_the_rejection_set(
        p in prop::collection::vec(0.0f64..=1.0, 1..40),
        which in any::<prop::sample::Index>(),
        factor in 0.0f64..1.0,
        alpha in 0.01f64..0.5,
    ) {
        let rule = ThresholdRule::new(RuleKind::Bh, alpha, p.len()).unwrap();
        let before = step_up(&p, &rule).unwrap();
        let mut lowered = p.clone();
        let k = which.index(p.len());
        lowered[k] *= factor;
        let after = step_up(&lowered, &rule).unwrap();
        prop_assert!(before.iter().all(|r| after.contains(r)));

        let looser = ThresholdRule::new(RuleKind::Bh, (alpha * 1.5).min(0.99), p.len()).unwrap();
        let wider = step_up(&p, &looser).unwrap();
        prop_assert!(before.iter().all(|r| wider.contains(r)));
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let values = dyadic_values(200, 4, 17);
    let pool = |threads| rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let panel = TimeSeriesPanel::from_values(values).unwrap();
    let cfg = PipelineConfig {
        replicates: 300,
        seed: 4,
        ..Default::default()
    };
    let one = pool(1).install(|| run(&panel, &cfg, &Kernel::default()).unwrap());
    let four = pool(4).install(|| run(&panel, &cfg, &Kernel::default()).unwrap());
    assert_eq!(pvalue_rows(&one), pvalue_rows(&four));
    assert_eq!(one.tuning.summary().m, four.tuning.summary().m);
    assert_eq!(one.ensemble.values(), four.ensemble.values());
}
