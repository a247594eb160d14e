use proptest::prelude::*;

use ucate::datasets::OutcomeScaler;
use ucate::evaluation::{default_grid, pehe, recommendation_error_rate, summarize};
use ucate::models::mmd2;
use ucate::policies::{
    apply_policy, apply_threshold, common_support, fit_policy, fit_threshold, random_decision,
    rejection_count, trimming_score, PolicyInputs, PolicyKind,
};
use ucate::uncertainty::{decompose_variance, epistemic_variance, McOutcomeSamples};
use ucate::{Rng, Tensor};

/// Scores drawn from a small value set so ties are common.
fn tied_scores() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0u8..6).prop_map(|v| f64::from(v) * 0.5), 1..60)
}

fn any_scores() -> impl Strategy<Value = Vec<f64>> {
    prop_oneof![tied_scores(), prop::collection::vec(-5.0..5.0f64, 1..60)]
}

fn withheld(mask: &[bool]) -> usize {
    mask.iter().filter(|&&w| w).count()
}

fn inputs_with(kind: PolicyKind, scores: &[f64], treatment: &[f64]) -> PolicyInputs {
    let mut inputs = PolicyInputs {
        treatment: Some(treatment.to_vec()),
        ..Default::default()
    };
    match kind {
        PolicyKind::Epistemic => inputs.epistemic = Some(scores.to_vec()),
        PolicyKind::Predictive => inputs.predictive = Some(scores.to_vec()),
        _ => inputs.propensity = Some(scores.iter().map(|s| (s + 5.5) / 11.0).collect()),
    }
    inputs
}

proptest! {
    #[test]
    fn threshold_withholds_exact_count(scores in any_scores(), r in 0.0..=1.0f64) {
        let t = fit_threshold(&scores, r).unwrap();
        let w = apply_threshold(&scores, &t);
        prop_assert_eq!(withheld(&w), rejection_count(r, scores.len()));
    }

    #[test]
    fn threshold_is_nested_along_grid(scores in any_scores()) {
        let masks: Vec<Vec<bool>> = default_grid()
            .into_iter()
            .map(|r| apply_threshold(&scores, &fit_threshold(&scores, r).unwrap()))
            .collect();
        for pair in masks.windows(2) {
            prop_assert!(pair[0].iter().zip(&pair[1]).all(|(a, b)| !a || *b));
        }
    }

    #[test]
    fn every_policy_fits_its_own_rate(
        scores in any_scores(),
        seed in 0u64..1000,
        kind_idx in 0usize..5,
    ) {
        let kind = PolicyKind::ALL[kind_idx];
        let n = scores.len();
        // Alternate arms so trimming always sees both.
        let treatment: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        if kind == PolicyKind::PropensityTrimming && n < 2 {
            return Ok(());
        }
        let inputs = inputs_with(kind, &scores, &treatment);
        let mut previous: Option<Vec<bool>> = None;
        for r in default_grid() {
            let fitted = fit_policy(kind, &inputs, r).unwrap();
            let a = apply_policy(&fitted, &inputs, &mut Rng::new(seed)).unwrap();
            let b = apply_policy(&fitted, &inputs, &mut Rng::new(seed)).unwrap();
            prop_assert_eq!(&a, &b);
            let target = rejection_count(r, n) as i64;
            let got = withheld(&a.withheld) as i64;
            prop_assert!((got - target).abs() <= 1, "{kind} r={r}: {got} vs {target}");
            if let Some(prev) = &previous {
                prop_assert!(prev.iter().zip(&a.withheld).all(|(p, c)| !p || *c), "{kind} not nested at r={r}");
            }
            previous = Some(a.withheld);
        }
    }

    #[test]
    fn random_policy_is_exact_and_nested(n in 1usize..200, seed in 0u64..1000) {
        let mut prev = vec![false; n];
        for r in default_grid() {
            let d = random_decision(n, r, &mut Rng::new(seed));
            prop_assert_eq!(withheld(&d.withheld), rejection_count(r, n));
            prop_assert!(prev.iter().zip(&d.withheld).all(|(p, c)| !p || *c));
            prev = d.withheld;
        }
    }

    #[test]
    fn trimming_inside_support_is_nonpositive(
        treated in prop::collection::vec(0.0..1.0f64, 1..20),
        control in prop::collection::vec(0.0..1.0f64, 1..20),
        p in 0.0..1.0f64,
    ) {
        let (lo, hi) = common_support(&treated, &control).unwrap();
        let s = trimming_score(p, &treated, &control).unwrap();
        if lo <= hi && (lo..=hi).contains(&p) {
            prop_assert!(s <= 0.0);
        } else {
            prop_assert!(s > 0.0);
        }
    }

    #[test]
    fn pehe_is_permutation_invariant(
        rows in prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64, any::<bool>()), 1..40),
        seed in 0u64..100,
    ) {
        let (pred, truth, mut mask): (Vec<f64>, Vec<f64>, Vec<bool>) = rows.iter().fold(
            (vec![], vec![], vec![]),
            |(mut a, mut b, mut c), &(p, t, m)| { a.push(p); b.push(t); c.push(m); (a, b, c) },
        );
        mask[0] = true;
        let perm = Rng::new(seed).permutation(pred.len());
        let pp: Vec<f64> = perm.iter().map(|&i| pred[i]).collect();
        let tp: Vec<f64> = perm.iter().map(|&i| truth[i]).collect();
        let mp: Vec<bool> = perm.iter().map(|&i| mask[i]).collect();
        let a = pehe(&pred, &truth, Some(&mask)).unwrap();
        let b = pehe(&pp, &tp, Some(&mp)).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn recommendation_error_in_unit_interval(
        pred in prop::collection::vec(-2.0..2.0f64, 1..40),
        shift in -1.0..1.0f64,
    ) {
        let truth: Vec<f64> = pred.iter().map(|p| p + shift).collect();
        let e = recommendation_error_rate(&pred, &truth, None).unwrap();
        prop_assert!((0.0..=1.0).contains(&e));
        prop_assert_eq!(recommendation_error_rate(&pred, &pred, None).unwrap(), 0.0);
    }

    #[test]
    fn variance_identity_and_nonnegativity(
        m in 2usize..8, k in 2usize..6, n in 1usize..5, seed in 0u64..1000,
    ) {
        let mut rng = Rng::new(seed);
        let mut t = |rows: usize| Tensor::matrix(rows, n, (0..rows * n).map(|_| rng.normal()).collect()).unwrap();
        let s = McOutcomeSamples::new(t(m), t(m), t(m * k), t(m * k), k).unwrap();
        let rep = decompose_variance(&s, false).unwrap();
        for i in 0..n {
            prop_assert!(rep.epistemic[i] >= 0.0 && rep.aleatoric[i] >= 0.0);
            let gap = (rep.total[i] - rep.epistemic[i] - rep.aleatoric[i]).abs();
            prop_assert!(gap <= 1e-12 * rep.total[i].max(1.0));
        }
        prop_assert!(epistemic_variance(&s).unwrap().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn mmd_symmetric_and_nonnegative(
        a in prop::collection::vec(-2.0..2.0f64, 2..12),
        b in prop::collection::vec(-2.0..2.0f64, 2..12),
        bw in 0.1..3.0f64,
    ) {
        let ta = Tensor::matrix(a.len() / 2, 2, a[..a.len() / 2 * 2].to_vec()).unwrap();
        let tb = Tensor::matrix(b.len() / 2, 2, b[..b.len() / 2 * 2].to_vec()).unwrap();
        let ab = mmd2(&ta, &tb, bw).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - mmd2(&tb, &ta, bw).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn standard_errors_are_nonnegative(v in prop::collection::vec(prop::option::of(-1.0..1.0f64), 1..20)) {
        if let Some(s) = summarize(v) {
            prop_assert!(s.std_error >= 0.0);
        }
    }

    #[test]
    fn scaler_round_trip(y in prop::collection::vec(-100.0..100.0f64, 2..30)) {
        prop_assume!(y.iter().any(|&v| v != y[0]));
        let s = OutcomeScaler::fit(&y).unwrap();
        for (a, b) in s.invert(&s.apply(&y)).iter().zip(&y) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }
}

#[test]
fn all_zero_scores_tie_break() {
    let zeros = vec![0.0; 11];
    let inputs = PolicyInputs {
        epistemic: Some(zeros.clone()),
        ..Default::default()
    };
    let fitted = fit_policy(PolicyKind::Epistemic, &inputs, 0.5).unwrap();
    let d = apply_policy(&fitted, &inputs, &mut Rng::new(0)).unwrap();
    assert_eq!(withheld(&d.withheld), rejection_count(0.5, 11));
}

#[test]
fn identical_arms_leave_nothing_outside() {
    let p = [0.2, 0.4, 0.6, 0.8];
    for &v in &p {
        assert!(trimming_score(v, &p, &p).unwrap() <= 0.0);
    }
}

#[test]
fn normalized_oracle_predictor_has_zero_pehe() {
    let y = [3.0, 7.5, -2.0, 10.0];
    let mu0 = [1.0, 2.0, 3.0, 4.0];
    let mu1 = [2.5, 1.0, 6.0, 4.5];
    let s = OutcomeScaler::fit(&y).unwrap();
    // An oracle predicts the normalized potential outcomes exactly.
    let cate_norm: Vec<f64> = s
        .apply(&mu1)
        .iter()
        .zip(s.apply(&mu0))
        .map(|(a, b)| a - b)
        .collect();
    let cate = s.invert_difference(&cate_norm);
    let truth: Vec<f64> = mu1.iter().zip(&mu0).map(|(a, b)| a - b).collect();
    assert!(pehe(&cate, &truth, None).unwrap() < 1e-9);
}
