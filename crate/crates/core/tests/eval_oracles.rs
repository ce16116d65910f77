mod common;

use common::brute_force_eer;
use marginmix::eval::{adaptive_snorm, build_trials, compute_eer, cosine_score, Cohort, SnrRange};
use ndarray::Array1;
use proptest::prelude::*;
use rand::Rng;

/// Random score set; every other one is drawn on a coarse grid so that
/// targets and nontargets tie.
fn score_set(i: u64) -> (Vec<f64>, Vec<f64>) {
    let mut r = common::rng(i);
    let nt = r.gen_range(1..60);
    let nn = r.gen_range(1..60);
    let coarse = i % 2 == 0;
    let shift = r.gen_range(-1.0..2.0);
    let mut draw = |mu: f64| -> f64 {
        let x: f64 = mu + r.gen_range(-1.0..1.0) + r.gen_range(-1.0..1.0);
        if coarse {
            (x * 3.0).round() / 3.0
        } else {
            x
        }
    };
    let tar = (0..nt).map(|_| draw(shift)).collect();
    let non = (0..nn).map(|_| draw(0.0)).collect();
    (tar, non)
}

#[test]
fn eer_matches_brute_force() {
    let mut ties = 0;
    for i in 0..1000 {
        let (tar, non) = score_set(i);
        if tar.iter().any(|t| non.contains(t)) {
            ties += 1;
        }
        let ours = compute_eer(&tar, &non).unwrap().eer;
        let oracle = brute_force_eer(&tar, &non);
        assert!((ours - oracle).abs() < 1e-9, "set {i}: {ours} vs {oracle}");
        assert!((0.0..=1.0).contains(&ours));
    }
    assert!(ties > 100, "only {ties} sets with cross-class ties");
}

#[test]
fn interferers_avoid_trial_speakers() {
    let speakers: Vec<usize> = (10..16).collect();
    let trials = build_trials(&speakers, 3, 200, 200, Some(SnrRange::new(0.0, 5.0).unwrap()), 9).unwrap();
    assert_eq!(trials.len(), 400);
    for t in &trials {
        let i = t.interferer.unwrap();
        assert_ne!(i.utt.speaker, t.enroll.speaker);
        assert_ne!(i.utt.speaker, t.test.speaker);
        assert!(i.utt.index >= 3 && i.utt.index < 6);
        assert!((0.0..=5.0).contains(&i.snr_db));
        assert_eq!(t.is_target, t.enroll.speaker == t.test.speaker);
        if t.is_target {
            assert_ne!(t.enroll.index, t.test.index);
        }
    }
    let clean = build_trials(&speakers, 3, 200, 200, None, 9).unwrap();
    for (c, o) in clean.iter().zip(&trials) {
        assert_eq!((c.enroll, c.test, c.is_target), (o.enroll, o.test, o.is_target));
    }
}

fn vector(d: usize) -> impl Strategy<Value = Array1<f64>> {
    prop::collection::vec(-1.0f64..1.0, d)
        .prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3))
        .prop_map(Array1::from)
}

fn cohort_members(n: usize) -> impl Strategy<Value = Vec<Array1<f64>>> {
    prop::collection::vec(vector(4), n)
}

proptest! {
    #[test]
    fn eer_ignores_monotone_transforms(
        tar in prop::collection::vec(-3.0f64..3.0, 1..40),
        non in prop::collection::vec(-3.0f64..3.0, 1..40),
        a in 0.1f64..5.0,
        b in -2.0f64..2.0,
    ) {
        let base = compute_eer(&tar, &non).unwrap().eer;
        for f in [|x: f64| x.exp(), |x: f64| x.powi(3), |x: f64| x.atan()] {
            let t: Vec<f64> = tar.iter().map(|&x| f(x)).collect();
            let n: Vec<f64> = non.iter().map(|&x| f(x)).collect();
            prop_assert!((compute_eer(&t, &n).unwrap().eer - base).abs() < 1e-12);
        }
        let t: Vec<f64> = tar.iter().map(|&x| a * x + b).collect();
        let n: Vec<f64> = non.iter().map(|&x| a * x + b).collect();
        prop_assert!((compute_eer(&t, &n).unwrap().eer - base).abs() < 1e-12);
    }

    #[test]
    fn cosine_is_symmetric_and_scale_free(e1 in vector(6), e2 in vector(6), a in 0.01f64..100.0, b in 0.01f64..100.0) {
        let s = cosine_score(e1.view(), e2.view()).unwrap();
        prop_assert!((s - cosine_score(e2.view(), e1.view()).unwrap()).abs() < 1e-15);
        prop_assert!((s - cosine_score((&e1 * a).view(), (&e2 * b).view()).unwrap()).abs() < 1e-12);
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&s));
    }

    #[test]
    fn snorm_ignores_cohort_order(members in cohort_members(12), k in 1usize..12, e1 in vector(4), e2 in vector(4), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let raw = cosine_score(e1.view(), e2.view()).unwrap();
        let c1 = Cohort::new(members.clone(), k).unwrap();
        let mut shuffled = members;
        shuffled.shuffle(&mut common::rng(seed));
        let c2 = Cohort::new(shuffled, k).unwrap();
        let s1 = adaptive_snorm(raw, e1.view(), e2.view(), &c1).unwrap();
        let s2 = adaptive_snorm(raw, e1.view(), e2.view(), &c2).unwrap();
        prop_assert_eq!(s1.fallback, s2.fallback);
        prop_assert!((s1.value - s2.value).abs() < 1e-9);
    }

    #[test]
    fn snorm_ignores_duplicated_low_members(members in cohort_members(12), k in 1usize..6, e1 in vector(4), e2 in vector(4)) {
        let raw = cosine_score(e1.view(), e2.view()).unwrap();
        let rank = |e: &Array1<f64>, j: usize| {
            let s = cosine_score(e.view(), members[j].view()).unwrap();
            members.iter().filter(|m| cosine_score(e.view(), m.view()).unwrap() >= s).count()
        };
        // A member that sits strictly below the top k on both sides.
        let Some(low) = (0..members.len()).find(|&j| rank(&e1, j) > k + 1 && rank(&e2, j) > k + 1) else {
            return Ok(());
        };
        let c1 = Cohort::new(members.clone(), k).unwrap();
        let mut dup = members.clone();
        dup.push(members[low].clone());
        let c2 = Cohort::new(dup, k).unwrap();
        let s1 = adaptive_snorm(raw, e1.view(), e2.view(), &c1).unwrap();
        let s2 = adaptive_snorm(raw, e1.view(), e2.view(), &c2).unwrap();
        prop_assert_eq!(s1, s2);
    }

    #[test]
    fn snorm_preserves_order_for_fixed_sides(members in cohort_members(10), e1 in vector(4), e2 in vector(4), r1 in -1.0f64..1.0, r2 in -1.0f64..1.0) {
        let c = Cohort::new(members, 4).unwrap();
        let s1 = adaptive_snorm(r1, e1.view(), e2.view(), &c).unwrap();
        let s2 = adaptive_snorm(r2, e1.view(), e2.view(), &c).unwrap();
        if r1 < r2 {
            prop_assert!(s1.value <= s2.value);
        }
    }
}
