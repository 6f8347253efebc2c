mod common;

use std::collections::BTreeSet;

use hspp_core::assets::Assets;
use hspp_core::chunker::ChunkStrategy;
use hspp_core::evaluation::auc_roc;
use hspp_core::features::multimodal::{gini, layer_consistency_of, token_patterns};
use hspp_core::features::stats::{js_divergence, wasserstein1};
use hspp_core::gt_matcher::{classify_chunk, extract_ground_truth};
use hspp_core::membership::smote::{class_counts, smote_oversample, SYNTHETIC_ID};
use hspp_core::membership::{Architecture, LabeledExample, Network};
use hspp_core::seed::rng;
use hspp_core::trace::{synthesize_sample, FailureProfile, GenerationTrace};
use hspp_core::HallucinationLabel;
use proptest::prelude::*;
use proptest::sample::select;

fn weights() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, 1..200).prop_filter("positive mass", |w| w.iter().sum::<f64>() > 0.0)
}

fn profile() -> impl Strategy<Value = FailureProfile> {
    select(FailureProfile::ALL.to_vec())
}

fn label() -> impl Strategy<Value = HallucinationLabel> {
    select(HallucinationLabel::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn gini_ignores_order(w in weights(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut shuffled = w.clone();
        shuffled.shuffle(&mut rng(seed));
        prop_assert_eq!(gini(&w), gini(&shuffled));
    }

    #[test]
    fn gini_ignores_scale(w in weights(), k in 0.01f64..100.0) {
        let scaled: Vec<f64> = w.iter().map(|x| x * k).collect();
        let (a, b) = (gini(&w).unwrap(), gini(&scaled).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{} vs {}", a, b);
    }

    #[test]
    fn gini_of_constant_weights_is_one_over_n(n in 1usize..1000, c in 1e-6f64..10.0) {
        prop_assert_eq!(gini(&vec![c; n]).unwrap(), 1.0 / n as f64);
    }

    #[test]
    fn gini_matches_double_sum(w in weights()) {
        let (got, want) = (gini(&w).unwrap(), common::gini_oracle(&w));
        prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0));
    }

    #[test]
    fn layer_consistency_pair_sums_to_one(
        a in prop::collection::vec(-5.0f64..5.0, 1..64),
        b in prop::collection::vec(-5.0f64..5.0, 1..64),
    ) {
        let n = a.len().min(b.len());
        if let Some([c, d]) = layer_consistency_of(&a[..n], &b[..n]) {
            prop_assert!((0.0..=1.0).contains(&c));
            prop_assert!((c + d - 1.0).abs() <= f64::EPSILON);
        }
    }

    #[test]
    fn unique_ratios_are_complementary(tokens in prop::collection::vec("[a-d]{1,2}", 1..80)) {
        let [urr, brr, nut] = token_patterns::<f64, _>(&tokens).unwrap();
        prop_assert_eq!(urr + nut, 1.0);
        prop_assert!((0.0..=1.0).contains(&brr));
        prop_assert_eq!([urr, brr, nut], common::token_oracle(&tokens));
    }

    #[test]
    fn wasserstein_ignores_order(
        ab in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..50),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let (a, b): (Vec<f64>, Vec<f64>) = ab.into_iter().unzip();
        let mut a2 = a.clone();
        a2.shuffle(&mut rng(seed));
        prop_assert_eq!(wasserstein1(&a, &b), wasserstein1(&a2, &b));
        prop_assert!(wasserstein1(&a, &b) >= 0.0);
    }

    #[test]
    fn js_divergence_is_bounded(
        p in prop::collection::vec(0.0f64..1.0, 8),
        q in prop::collection::vec(0.0f64..1.0, 8),
    ) {
        let norm = |v: &[f64]| {
            let s: f64 = v.iter().sum();
            if s > 0.0 { v.iter().map(|x| x / s).collect() } else { vec![1.0 / 8.0; 8] }
        };
        let (p, q): (Vec<f64>, Vec<f64>) = (norm(&p), norm(&q));
        let js = js_divergence(&p, &q);
        prop_assert!((0.0..=std::f64::consts::LN_2).contains(&js));
        prop_assert_eq!(js, js_divergence(&q, &p));
    }

    #[test]
    fn auc_is_antisymmetric(pairs in prop::collection::vec((0u8..20, any::<bool>()), 2..120)) {
        let scores: Vec<f64> = pairs.iter().map(|p| p.0 as f64 / 4.0).collect();
        let labels: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        let (a, b) = (auc_roc(&scores, &labels).unwrap(), auc_roc(&neg, &labels).unwrap());
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert_eq!(a + b, 1.0);
    }

    #[test]
    fn network_output_is_a_distribution(seed in any::<u64>(), x in prop::collection::vec(-50.0f32..50.0, 77)) {
        let net: Network<f32> = Network::init(Architecture::default(), &mut rng(seed));
        let p = net.forward(&x);
        prop_assert_eq!(p.len(), 4);
        prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!((p.iter().sum::<f32>() - 1.0).abs() <= 1e-6);
        prop_assert!(net.gate(&x).iter().all(|&g| g > 0.0 && g < 1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn smote_points_lie_between_real_neighbours(
        sizes in prop::collection::vec(2usize..20, 2..4),
        dim in 1usize..6,
        k in 1usize..6,
        seed in any::<u64>(),
    ) {
        use rand::Rng;
        let mut r = rng(seed);
        let mut data = Vec::new();
        for (c, &n) in sizes.iter().enumerate() {
            for i in 0..n {
                data.push(LabeledExample {
                    sample_id: format!("{c}-{i}"),
                    features: (0..dim).map(|_| r.gen_range(-3.0..3.0)).collect::<Vec<f64>>(),
                    label: HallucinationLabel::ALL[c],
                });
            }
        }
        let out = smote_oversample(&data, k, seed).unwrap();
        let target = *sizes.iter().max().unwrap();
        prop_assert_eq!(&out[..data.len()], &data[..]);
        for (_, &n) in &class_counts(out.iter().map(|e| &e.label)) {
            prop_assert_eq!(n, target);
        }
        for s in &out[data.len()..] {
            prop_assert_eq!(s.sample_id.as_str(), SYNTHETIC_ID);
            let members: Vec<&Vec<f64>> = data.iter().filter(|e| e.label == s.label).map(|e| &e.features).collect();
            let on_segment = members.iter().any(|a| members.iter().any(|b| between(&s.features, a, b)));
            prop_assert!(on_segment, "{:?} is not between two {:?} points", s.features, s.label);
        }
    }

    #[test]
    fn trace_round_trip_is_bit_exact(seed in any::<u64>(), p in profile()) {
        let trace = synthesize_sample(seed, p).trace;
        let bytes = trace.to_bytes().unwrap();
        let back = GenerationTrace::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &trace);
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn own_text_as_ground_truth_is_all_correct(seed in any::<u64>(), p in profile()) {
        let assets = Assets::embedded();
        let chunker = assets.chunker();
        let doc = synthesize_sample(seed, p).annotation;
        let gt = extract_ground_truth(std::slice::from_ref(&doc), &chunker, &assets.lexicons).unwrap();
        for c in chunker.extract_chunks(&doc).unwrap() {
            prop_assert_eq!(classify_chunk(&c, &gt, &assets.lexicons), HallucinationLabel::Correct, "{}", c.payload);
        }
    }

    #[test]
    fn caption_order_does_not_change_labels(seed in any::<u64>(), p in profile()) {
        let assets = Assets::embedded();
        let chunker = assets.chunker();
        let s = synthesize_sample(seed, p);
        let mut reversed = s.ground_truth.clone();
        reversed.reverse();
        let a = extract_ground_truth(&s.ground_truth, &chunker, &assets.lexicons).unwrap();
        let b = extract_ground_truth(&reversed, &chunker, &assets.lexicons).unwrap();
        for c in chunker.extract_chunks(&s.annotation).unwrap() {
            prop_assert_eq!(classify_chunk(&c, &a, &assets.lexicons), classify_chunk(&c, &b, &assets.lexicons));
        }
    }

    #[test]
    fn relative_positions_enumerate_one_to_k(seed in any::<u64>(), p in profile(), s in select(ChunkStrategy::ALL.to_vec())) {
        let chunker = Assets::embedded().chunker();
        let doc = synthesize_sample(seed, p).annotation;
        let segs = chunker.segment(&doc, s).unwrap();
        let k = segs.len();
        let got: Vec<f64> = segs.iter().map(|g| g.crp).collect();
        let want: Vec<f64> = (1..=k).map(|i| i as f64 / k as f64).collect();
        prop_assert_eq!(got, want);
        prop_assert!(segs.iter().all(|g| g.cpi == k));
    }

    #[test]
    fn dominant_label_is_the_most_severe(labels in prop::collection::vec(label(), 0..10)) {
        let d = HallucinationLabel::dominant(labels.iter().copied());
        let set: BTreeSet<_> = labels.iter().copied().collect();
        let expected = [HallucinationLabel::Category, HallucinationLabel::Attribute, HallucinationLabel::Relation]
            .into_iter()
            .find(|l| set.contains(l))
            .unwrap_or(HallucinationLabel::Correct);
        prop_assert_eq!(d, expected);
    }
}

/// Whether `p = a + u (b - a)` for one `u` in `[0, 1]`.
fn between(p: &[f64], a: &[f64], b: &[f64]) -> bool {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let len2: f64 = d.iter().map(|v| v * v).sum();
    if len2 == 0.0 {
        return p.iter().zip(a).all(|(x, y)| (x - y).abs() <= 1e-12);
    }
    let u = p.iter().zip(a).zip(&d).map(|((x, y), dv)| (x - y) * dv).sum::<f64>() / len2;
    (-1e-12..=1.0 + 1e-12).contains(&u)
        && p.iter().zip(a).zip(&d).all(|((x, y), dv)| (x - (y + u * dv)).abs() <= 1e-9)
}
