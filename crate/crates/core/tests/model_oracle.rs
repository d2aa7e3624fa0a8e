mod common;

use common::{logistic_gradient_ascent, logistic_loglik, mle_fixture, planted_sample};
use gaitasym::exec::Exec;
use gaitasym::features::Feature;
use gaitasym::model::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Places the fixture's two columns into `R` and `MSE`.
fn embed(x: &[Vec<f64>]) -> Vec<[f64; 8]> {
    x.iter()
        .map(|xi| {
            let mut r = [0.0; 8];
            r[Feature::R.index()] = xi[0];
            r[Feature::Mse.index()] = xi[1];
            r
        })
        .collect()
}

const PAIR: [Feature; 2] = [Feature::R, Feature::Mse];

#[test]
fn irls_matches_brute_force_maximizer() {
    let (x, y) = mle_fixture();
    let model = fit_logistic(&embed(&x), &y, &PAIR).unwrap();
    assert!(model.converged);
    let reference = logistic_gradient_ascent(&x, &y);
    for (a, b) in model.coefficients.iter().zip(&reference) {
        assert!((a - b).abs() < 1e-4, "{:?} vs {reference:?}", model.coefficients);
    }
    let ll = logistic_loglik(&x, &y, &model.coefficients);
    assert!((ll - model.log_likelihood).abs() < 1e-9);
}

#[test]
fn log_likelihood_never_decreases() {
    let (x, y) = mle_fixture();
    let model = fit_logistic(&embed(&x), &y, &PAIR).unwrap();
    assert!(model.log_likelihood_trace.len() >= 2);
    for w in model.log_likelihood_trace.windows(2) {
        assert!(w[1] >= w[0], "{:?}", model.log_likelihood_trace);
    }
    for seed in 0..10 {
        let (rows, labels) = planted_sample(120, seed);
        let m = fit_logistic(&rows, &labels, &Feature::ALL).unwrap();
        assert!(m.log_likelihood_trace.windows(2).all(|w| w[1] >= w[0]));
    }
}

#[test]
fn fit_is_equivariant_under_affine_feature_maps() {
    let (x, y) = mle_fixture();
    let (a, c) = (250.0, -40.0);
    let scaled: Vec<Vec<f64>> = x.iter().map(|r| vec![a * r[0] + c, r[1]]).collect();
    let m1 = fit_logistic(&embed(&x), &y, &PAIR).unwrap();
    let m2 = fit_logistic(&embed(&scaled), &y, &PAIR).unwrap();
    assert!((m1.log_likelihood - m2.log_likelihood).abs() < 1e-8);
    let b = &m1.coefficients;
    let expected = [b[0] - b[1] * c / a, b[1] / a, b[2]];
    for (e, g) in expected.iter().zip(&m2.coefficients) {
        assert!((e - g).abs() < 1e-8 * e.abs().max(1.0), "{expected:?} vs {:?}", m2.coefficients);
    }
    for (r1, r2) in embed(&x).iter().zip(&embed(&scaled)) {
        assert!((m1.predict(r1) - m2.predict(r2)).abs() < 1e-8);
    }
    // the Wald statistic does not depend on units
    assert!((m1.p_values[1] - m2.p_values[1]).abs() < 1e-8);
}

#[test]
fn duplicate_columns_do_not_converge() {
    let (x, y) = mle_fixture();
    let rows: Vec<[f64; 8]> = embed(&x)
        .into_iter()
        .map(|mut r| {
            r[Feature::Mae.index()] = 2.0 * r[Feature::Mse.index()];
            r
        })
        .collect();
    // a singular information matrix may also be reported as an error
    if let Ok(m) = fit_logistic(&rows, &y, &[Feature::Mse, Feature::Mae]) {
        assert!(!m.converged);
        assert_eq!(bic(&m), f64::INFINITY);
    }
}

#[test]
fn separable_data_is_not_converged() {
    let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i % 3) as f64]).collect();
    let y: Vec<bool> = (0..20).map(|i| i >= 10).collect();
    let m = fit_logistic(&embed(&x), &y, &PAIR).unwrap();
    assert!(!m.converged);
    assert_eq!(bic(&m), f64::INFINITY);
}

#[test]
fn uninformative_predictor_gives_base_rate() {
    // x is balanced within each class, so the MLE slope is exactly 0
    let x: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 2) as f64, 0.0]).collect();
    let y: Vec<bool> = (0..40).map(|i| (i / 2) % 4 == 0).collect();
    let m = fit_logistic(&embed(&x), &y, &[Feature::R]).unwrap();
    assert!(m.coefficients[1].abs() < 1e-9);
    let rate: f64 = 0.25;
    assert!((m.coefficients[0] - (rate / (1.0 - rate)).ln()).abs() < 1e-9);
    assert!((m.p_values[1] - 1.0).abs() < 1e-9);
}

#[test]
fn exhaustive_selection_matches_brute_force() {
    for seed in 0..3 {
        let (rows, labels) = planted_sample(200, 500 + seed);
        let seq = select_model(&rows, &labels, Exec::Sequential).unwrap();
        let par = select_model(&rows, &labels, Exec::Parallel).unwrap();
        assert_eq!(seq, par);
        let mut best = (f64::INFINITY, Vec::new());
        for mask in 1..=255u8 {
            let predictors = subset_of(mask);
            let m = fit_logistic(&rows, &labels, &predictors).unwrap();
            let x: Vec<Vec<f64>> = rows
                .iter()
                .map(|r| predictors.iter().map(|f| r[f.index()]).collect())
                .collect();
            let ll = logistic_loglik(&x, &labels, &m.coefficients);
            let value = -2.0 * ll + (predictors.len() as f64 + 1.0) * (rows.len() as f64).ln();
            let reported = seq.subsets[mask as usize - 1].bic;
            assert!((reported - value).abs() < 1e-8 * value.abs(), "mask {mask}");
            if value < best.0 {
                best = (value, predictors);
            }
        }
        assert_eq!(seq.best, best.1);
        assert!((seq.best_bic - best.0).abs() < 1e-8 * best.0.abs());
        for o in &seq.per_order {
            assert_eq!(o.predictors.len(), o.order);
            assert!(o.bic >= seq.best_bic);
        }
    }
}

#[test]
fn random_scores_give_chance_auc() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let trials = 200;
    let mut total = 0.0;
    for _ in 0..trials {
        let probs: Vec<f64> = (0..100).map(|_| rng.random()).collect();
        let labels: Vec<bool> = (0..100).map(|i| i % 2 == 0).collect();
        total += roc(&probs, &labels).unwrap().auc();
    }
    let mean = total / trials as f64;
    // standard error of the mean is about 0.003
    assert!((mean - 0.5).abs() < 0.015, "{mean}");
}

fn scores() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    prop::collection::vec((0.0f64..=1.0, any::<bool>()), 2..80)
        .prop_filter("both classes", |v| v.iter().any(|p| p.1) && v.iter().any(|p| !p.1))
        .prop_map(|v| v.into_iter().unzip())
}

proptest! {
    #[test]
    fn chosen_threshold_respects_false_alarm_bound((probs, labels) in scores(), bound in 0.0f64..0.2) {
        let choice = choose_threshold(&probs, &labels, bound).unwrap();
        let (fa, det) = error_rates(&probs, &labels, choice.tau);
        prop_assert!(fa.unwrap() <= bound);
        prop_assert_eq!(fa.unwrap(), choice.fa_rate);
        prop_assert_eq!(det.unwrap(), choice.detection_rate);
        // no smaller candidate satisfies the bound
        for tau in threshold_candidates(&probs).into_iter().filter(|&t| t < choice.tau) {
            prop_assert!(error_rates(&probs, &labels, tau).0.unwrap() > bound);
        }
    }

    #[test]
    fn roc_is_monotone_and_bounded((probs, labels) in scores()) {
        let curve = roc(&probs, &labels).unwrap();
        let first = curve.points.first().unwrap();
        let last = curve.points.last().unwrap();
        prop_assert_eq!((first.fa, first.detection), (0.0, 0.0));
        prop_assert_eq!((last.fa, last.detection), (1.0, 1.0));
        for w in curve.points.windows(2) {
            prop_assert!(w[1].fa >= w[0].fa && w[1].detection >= w[0].detection);
            prop_assert!(w[1].threshold < w[0].threshold);
        }
        let auc = curve.auc();
        prop_assert!((0.0..=1.0).contains(&auc));
    }

    #[test]
    fn prediction_is_monotone_in_each_predictor(
        b in prop::collection::vec(-5.0f64..5.0, 4),
        x in prop::array::uniform8(-2.0f64..2.0),
        k in 0usize..3,
        step in 0.01f64..1.0,
    ) {
        let predictors = vec![Feature::R, Feature::Mse, Feature::DeltaFmax];
        let model = LogisticModel::from_coefficients(predictors.clone(), b.clone()).unwrap();
        let mut moved = x;
        moved[predictors[k].index()] += step;
        let (p0, p1) = (model.predict(&x), model.predict(&moved));
        prop_assert!((0.0..=1.0).contains(&p0));
        if b[k + 1] > 0.0 { prop_assert!(p1 >= p0) } else { prop_assert!(p1 <= p0) }
    }
}
