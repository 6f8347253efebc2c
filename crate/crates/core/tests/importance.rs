use hspp_core::evaluation::{permutation_importance, ImportanceMetric};
use hspp_core::membership::{train, LabeledExample, MembershipModel, TrainConfig};
use hspp_core::seed::rng;
use hspp_core::HallucinationLabel;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Binary task where only column 10 carries signal, optionally copied to
/// column 11.
fn one_signal(n: usize, seed: u64, duplicate: bool) -> Vec<LabeledExample<f64>> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            let positive = i % 2 == 0;
            let mut x: Vec<f64> = (0..77).map(|_| StandardNormal.sample(&mut r)).collect();
            let noise: f64 = StandardNormal.sample(&mut r);
            x[10] = if positive { 1.0 } else { -1.0 } + noise;
            if duplicate {
                x[11] = x[10];
            }
            x[74..].copy_from_slice(&[r.gen_range(1.0..8.0), 12.0, 0.5]);
            LabeledExample {
                sample_id: format!("s{}", i / 2),
                features: x,
                label: if positive { HallucinationLabel::Category } else { HallucinationLabel::Correct },
            }
        })
        .collect()
}

fn fit(data: &[LabeledExample<f64>]) -> MembershipModel<f64> {
    let cfg = TrainConfig {
        seed: 2,
        max_epochs: 20,
        learning_rate: 1e-3,
        ..Default::default()
    };
    train(data, &cfg).unwrap().0
}

fn importance(model: &MembershipModel<f64>, test: &[LabeledExample<f64>]) -> Vec<f64> {
    let rows: Vec<Vec<f64>> = test.iter().map(|e| e.features.clone()).collect();
    let truth: Vec<HallucinationLabel> = test.iter().map(|e| e.label).collect();
    let ranked = permutation_importance(model, &rows, &truth, ImportanceMetric::BinaryAuc, 10, 4).unwrap();
    let mut by_index = vec![0.0; 77];
    for f in &ranked {
        by_index[f.index - 1] = f.delta;
    }
    by_index
}

#[test]
fn the_informative_column_ranks_first_and_a_dead_one_scores_zero() {
    let mut model = fit(&one_signal(800, 1, false));
    let test = one_signal(400, 2, false);
    let rows: Vec<Vec<f64>> = test.iter().map(|e| e.features.clone()).collect();
    let truth: Vec<HallucinationLabel> = test.iter().map(|e| e.label).collect();
    let ranked = permutation_importance(&model, &rows, &truth, ImportanceMetric::BinaryAuc, 10, 4).unwrap();
    assert_eq!(ranked[0].index, 11, "{:?}", &ranked[..3]);
    assert_eq!(ranked[0].feature, hspp_core::features::feature_names()[10]);

    for i in model.network.layout.input_weights(30) {
        model.network.params[i] = 0.0;
    }
    let d = importance(&model, &test);
    assert!(d[30].abs() <= 0.01, "dead column moved the metric by {}", d[30]);
}

#[test]
fn duplicated_columns_share_importance() {
    let test_solo = one_signal(400, 5, false);
    let test_dup = one_signal(400, 5, true);
    let solo = importance(&fit(&one_signal(800, 3, false)), &test_solo)[10];
    let dup = importance(&fit(&one_signal(800, 3, true)), &test_dup);
    assert!(dup[10] <= solo && dup[11] <= solo, "solo {solo}, copies {} and {}", dup[10], dup[11]);
}

#[test]
fn importance_is_deterministic() {
    let model = fit(&one_signal(200, 1, false));
    let test = one_signal(100, 2, false);
    assert_eq!(importance(&model, &test), importance(&model, &test));
}
