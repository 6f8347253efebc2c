use hspp_core::features::multimodal::{attention_concentration, confidence_features, layer_consistency, token_patterns};
use hspp_core::features::TraceSpan;
use hspp_core::trace::{synthesize_trace, FailureProfile};

fn full<F, R>(seed: u64, profile: FailureProfile, f: F) -> R
where
    F: Fn(&TraceSpan<'_>) -> R,
{
    let (trace, _) = synthesize_trace(seed, profile);
    f(&TraceSpan::full(&trace))
}

#[test]
fn each_profile_moves_its_signature_on_every_seed() {
    for seed in 0..100 {
        let lcf = |p| full(seed, p, |s| layer_consistency::<f64>(s).unwrap()[0]);
        assert!(
            lcf(FailureProfile::LayerDrift) < lcf(FailureProfile::Grounded),
            "seed {seed}: layer drift did not lower consistency"
        );

        let acf = |p| full(seed, p, |s| attention_concentration::<f64>(s).unwrap()[0]);
        assert!(
            acf(FailureProfile::AttnDisperse) < acf(FailureProfile::Grounded),
            "seed {seed}: dispersion did not lower concentration"
        );

        let trend = full(seed, FailureProfile::ConfDecay, |s| {
            confidence_features(&s.p_max::<f64>()).unwrap()[2]
        });
        assert!(trend < 0.0, "seed {seed}: confidence trend {trend} is not negative");

        let urr = |p| full(seed, p, |s| token_patterns::<f64, _>(s.tokens()).unwrap()[0]);
        assert!(
            urr(FailureProfile::Repetitive) > urr(FailureProfile::Grounded),
            "seed {seed}: repetition did not raise URR"
        );
    }
}

#[test]
fn seven_seed_examples() {
    let acf = |p| full(7, p, |s| attention_concentration::<f64>(s).unwrap()[0]);
    assert!(acf(FailureProfile::AttnDisperse) < acf(FailureProfile::Grounded));
    let trend = full(7, FailureProfile::ConfDecay, |s| confidence_features(&s.p_max::<f64>()).unwrap()[2]);
    assert!(trend < 0.0);
    assert_eq!(synthesize_trace(7, FailureProfile::Grounded), synthesize_trace(7, FailureProfile::Grounded));
}
