use proptest::prelude::*;
use tca_core::data::{CovariateVector, Dataset, TrainRecord, TreatmentArm};
use tca_core::encoder::encode;
use tca_core::eval::{lemma1_bias, lemma2_oracle, pehe, random_world_sweep, IDENTITY_TOL};
use tca_core::nuisance::{fit_bundle, fit_ridge, LogisticModel, NuisanceConfig};
use tca_core::pseudo::dr_pseudo;
use tca_core::rng::{Purpose, Split, StreamRng};
use tca_core::surrogate::{render, PromptFamily, SurrogateConfig};
use tca_core::world::{discrete_world, WorldSpec};

fn arm(bit: bool) -> TreatmentArm {
    if bit {
        TreatmentArm::Treated
    } else {
        TreatmentArm::Control
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ridge_predictions_scale_with_targets(
        rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 6..20),
        seed in any::<u64>(),
        c in 0.1f64..10.0,
        lambda in 1e-3f64..1.0,
    ) {
        let mut rng = StreamRng::new(seed, Purpose::Noise, Split::Train);
        let ys: Vec<f64> = rows.iter().map(|_| rng.normal()).collect();
        let scaled: Vec<f64> = ys.iter().map(|y| c * y).collect();
        let m = fit_ridge(&rows, &ys, lambda).unwrap();
        let mc = fit_ridge(&rows, &scaled, lambda).unwrap();
        for x in &rows {
            let (p, pc) = (m.predict(x), mc.predict(x));
            prop_assert!((pc - c * p).abs() <= 1e-9 * (1.0 + pc.abs()));
        }
    }

    #[test]
    fn pehe_ignores_joint_permutation(
        pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..40),
        seed in any::<u64>(),
    ) {
        let mut shuffled = pairs.clone();
        StreamRng::new(seed, Purpose::Shuffle, Split::Test).shuffle(&mut shuffled);
        let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let (ps, ts): (Vec<f64>, Vec<f64>) = shuffled.into_iter().unzip();
        let a = pehe(&p, &t).unwrap();
        let b = pehe(&ps, &ts).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a));
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn dr_pseudo_is_affine_in_y(
        y1 in -10.0f64..10.0, y2 in -10.0f64..10.0,
        mu1 in -3.0f64..3.0, mu0 in -3.0f64..3.0, pi in 0.01f64..0.99, treated in any::<bool>(),
    ) {
        let a = arm(treated);
        let f = |y: f64| dr_pseudo(y, a, mu1, mu0, pi).unwrap().value;
        let gap = f(y1 + y2) - f(y1) - f(y2) + f(0.0);
        prop_assert!(gap.abs() <= 1e-9);
    }

    #[test]
    fn dr_components_reassemble(
        y in -10.0f64..10.0, mu1 in -3.0f64..3.0, mu0 in -3.0f64..3.0, pi in 0.01f64..0.99, treated in any::<bool>(),
    ) {
        let p = dr_pseudo(y, arm(treated), mu1, mu0, pi).unwrap();
        prop_assert!(p.value.is_finite());
        prop_assert!((p.components.reassemble() - p.value).abs() <= 1e-12);
    }

    #[test]
    fn logistic_predictions_respect_clip(
        w in prop::collection::vec(-50.0f64..50.0, 2),
        x in prop::collection::vec(-100.0f64..100.0, 2),
        b in -20.0f64..20.0,
        clip in 0.001f64..0.2,
    ) {
        let m = LogisticModel { weights: w, bias: b, clip, iterations: 0, converged: true, separation_warning: false };
        let p = m.predict(&x);
        prop_assert!(p >= clip && p <= 1.0 - clip);
    }

    #[test]
    fn encoder_entries_are_bounded(text in "[a-zA-Z0-9 ,.!?]{0,120}", d in 1usize..64) {
        let e = encode(&text, d);
        prop_assert_eq!(e.values.len(), d);
        prop_assert!(e.values.iter().all(|v| v.abs() <= 2.0 && v.is_finite()));
        prop_assert_eq!(e.empty, e.values.iter().all(|v| *v == 0.0) && !text.chars().any(char::is_alphanumeric));
    }

    #[test]
    fn surrogate_mask_is_never_empty(
        x in prop::collection::vec(-4.0f64..4.0, 1..15),
        leak in 0.01f64..1.0,
        seed in any::<u64>(),
        family in 0usize..3,
    ) {
        let cfg = SurrogateConfig { prompt_family: PromptFamily::ALL[family], leak_probability: leak, paraphrase_seed: 0 };
        let mut m = StreamRng::new(seed, Purpose::SurrogateMask, Split::Train);
        let mut s = StreamRng::new(seed, Purpose::Synonym, Split::Train);
        let out = render(&x, &cfg, &mut m, &mut s).unwrap();
        prop_assert_eq!(out.leaked_mask.len(), x.len());
        prop_assert!(out.leaked_mask.iter().any(|b| *b));
        prop_assert!(!out.text.is_empty());
    }

    #[test]
    fn bias_and_identification_identities_hold_on_random_worlds(seed in any::<u64>(), n_x in 2usize..5, n_t in 2usize..5, n_y in 2usize..5) {
        let mut rng = StreamRng::new(seed, Purpose::World, Split::Train);
        let w = discrete_world(WorldSpec::random(n_x, n_t, n_y, &mut rng)).unwrap();
        for t in 0..n_t {
            prop_assert!(lemma1_bias(&w, t).is_ok());
            prop_assert!(lemma2_oracle(&w, t).is_ok());
        }
    }

    #[test]
    fn cross_fitting_never_self_predicts(seed in 0u64..1000, k in 2usize..5) {
        let mut rng = StreamRng::new(seed, Purpose::Covariates, Split::Train);
        let records: Vec<TrainRecord> = (0..60)
            .map(|_| {
                let x = vec![rng.normal(), rng.normal()];
                let a = arm(rng.bernoulli(0.5));
                TrainRecord { y: x[0] + a.indicator(), x: CovariateVector(x), a, text: None, tau_true: None, groups: None }
            })
            .collect();
        let ds = Dataset::new(records, 2);
        let cfg = NuisanceConfig { k_folds: k, fold_seed: seed, ..Default::default() };
        let b = fit_bundle(&ds, &cfg).unwrap();
        prop_assert_eq!(b.folds.len(), k);
        for i in 0..ds.len() {
            prop_assert!(!b.trained_on(b.fold_map[i], i));
        }
    }
}

#[test]
fn hundred_world_sweep_is_exact() {
    let checks = random_world_sweep(100, 2024).unwrap();
    assert_eq!(checks.len(), 100);
    for c in &checks {
        assert!((2..=4).contains(&c.n_x) && (2..=4).contains(&c.n_t));
        assert!(c.bias_gap <= IDENTITY_TOL && c.identification_gap <= IDENTITY_TOL, "{c:?}");
    }
}
