mod common;

use std::collections::HashMap;

use adlab::corpus::Item;
use adlab::generators::Candidate;
use adlab::optim::features::ngrams;
use adlab::optim::{
    ctrpo_loss, dpo_loss, dpo_loss_from_margin, fit_reference, grad_ctrpo, logprob_margin,
    pair_accuracy, train_ctrpo, FeatureMap, FeaturizedPair, Policy, TrainConfig, WeightMode,
};
use adlab::pref::PreferencePair;
use common::item;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const LN2: f64 = std::f64::consts::LN_2;

fn shop() -> Item {
    item("i", "shoes", "info", "Plain Human Title")
}

fn random_policy(features: FeatureMap, rng: &mut ChaCha8Rng, sd: f64) -> Policy {
    let w = (0..features.dimension)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sd * z
        })
        .collect::<Vec<f64>>();
    Policy::from_weights(features, w).unwrap()
}

const WORDS: &[&str] = &[
    "red", "wool", "boot", "silk", "dress", "hot", "sale", "new", "soft", "warm", "try", "this",
    "slim", "fit", "comfy", "daily", "wear", "gift", "deal", "now",
];

fn random_text(rng: &mut ChaCha8Rng, len: usize) -> String {
    (0..len).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

#[test]
fn empty_text_is_zero_vector() {
    let f = FeatureMap::new(64, 1);
    assert!(f.featurize(&shop(), "").iter().all(|&v| v == 0.0));
    assert_eq!(f.featurize(&shop(), "red boot"), f.featurize(&shop(), "red boot"));
}

#[test]
fn one_token_change_touches_only_its_ngrams() {
    let base = "red wool boot";
    let edit = "red silk boot";
    let hand = |mid: &str| -> Vec<String> {
        let mut v = vec![
            "w1:red".to_owned(),
            format!("w1:{mid}"),
            "w1:boot".to_owned(),
            format!("w2:red {mid}"),
            format!("w2:{mid} boot"),
        ];
        let s = format!("red {mid} boot");
        let c: Vec<char> = s.chars().collect();
        for w in c.windows(3) {
            v.push(format!("c3:{}", w.iter().collect::<String>()));
        }
        v
    };
    let (a, b) = (hand("wool"), hand("silk"));
    assert_eq!(a.len(), 3 + 2 + 11);
    let mut got = ngrams(base);
    got.sort();
    let mut want = a.clone();
    want.sort();
    assert_eq!(got, want);

    let f = FeatureMap::new(4096, 17);
    let it = shop();
    let changed: Vec<&String> = a.iter().filter(|g| !b.contains(g)).chain(b.iter().filter(|g| !a.contains(g))).collect();
    // c3 grams touching the middle word: "d w"," wo","woo","ool","ol ","l b" on each side.
    assert_eq!(changed.len(), 2 * (1 + 2 + 6));
    let touched: std::collections::HashSet<u32> = changed.iter().map(|g| f.slot(&it.category, g)).collect();

    let ca = f.counts(&it, base);
    let cb = f.counts(&it, edit);
    let (da, db) = (ca.to_dense(4096), cb.to_dense(4096));
    for i in 0..4096 {
        if da[i] != db[i] {
            assert!(touched.contains(&(i as u32)), "slot {i} changed without a changed n-gram");
        }
    }
    // Normalized vector is the count vector over its norm.
    let n = (a.len() as f64).sqrt();
    let dense = f.featurize(&it, base);
    let unnormalized: f64 = da.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(unnormalized <= a.len() as f64 && unnormalized >= n - 1e-12);
    for i in 0..4096 {
        assert!((dense[i] - da[i] / unnormalized).abs() < 1e-15);
    }
}

#[test]
fn margin_examples() {
    let f = FeatureMap::new(4096, 2);
    let it = shop();
    let (w, l) = ("aaa", "zzz");
    let (pw, pl) = (f.featurize(&it, w), f.featurize(&it, l));
    assert_eq!(pw.iter().zip(&pl).map(|(a, b)| a * b).sum::<f64>(), 0.0, "fixture slots collide");
    let theta: Vec<f64> = pw.iter().zip(&pl).map(|(a, b)| 2.0 * a + b).collect();
    let policy = Policy::from_weights(f, theta).unwrap();
    let reference = Policy::zeros(f);
    assert!((logprob_margin(&policy, &reference, &it, w, l) - 1.0).abs() < 1e-12);
    assert_eq!(logprob_margin(&policy, &policy, &it, w, l), 0.0);
}

#[test]
fn margin_equals_full_log_softmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let f = FeatureMap::new(5, 3);
    let it = shop();
    for _ in 0..50 {
        let theta = random_policy(f, &mut rng, 1.0);
        let reference = random_policy(f, &mut rng, 1.0);
        let pool: Vec<String> = (0..4).map(|_| random_text(&mut rng, 3)).collect();
        let pool_refs: Vec<&str> = pool.iter().map(String::as_str).collect();
        let (w, l) = (pool_refs[0], pool_refs[1]);
        let full = (theta.log_prob(&it, w, &pool_refs) - reference.log_prob(&it, w, &pool_refs))
            - (theta.log_prob(&it, l, &pool_refs) - reference.log_prob(&it, l, &pool_refs));
        let short = logprob_margin(&theta, &reference, &it, w, l);
        assert!((full - short).abs() < 1e-12, "{full} vs {short}");
    }
}

#[test]
fn dpo_loss_examples() {
    assert!((dpo_loss_from_margin(0.0, 0.1) - LN2).abs() < 1e-15);
    assert!(dpo_loss_from_margin(1e6, 0.1) < 1e-300);
    // -ln σ(0.3), evaluated to 30 digits with arbitrary precision.
    assert!((dpo_loss_from_margin(3.0, 0.1) - 0.554_355_244_468_527_1).abs() < 1e-15);
    assert!(dpo_loss_from_margin(-1e6, 0.1).is_finite());
}

fn random_pairs(rng: &mut ChaCha8Rng, f: &FeatureMap, n: usize, weights: bool) -> Vec<FeaturizedPair> {
    let it = shop();
    (0..n)
        .map(|_| {
            let w = random_text(rng, 3);
            let l = random_text(rng, 4);
            let weight = if weights { rng.random_range(0.0..3.0) } else { 1.0 };
            FeaturizedPair::new(f, &it, &w, &l, weight)
        })
        .collect()
}

#[test]
fn unit_weights_reduce_to_plain_sum_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let f = FeatureMap::new(64, 4);
    let (theta, reference) = (random_policy(f, &mut rng, 1.0), random_policy(f, &mut rng, 1.0));
    let pairs = random_pairs(&mut rng, &f, 12, false);
    let plain: f64 = pairs.iter().map(|p| dpo_loss(&theta, &reference, p, 0.1)).sum();
    assert_eq!(ctrpo_loss(&theta, &reference, &pairs, 0.1).unwrap(), plain);
}

#[test]
fn single_weighted_pair_at_reference() {
    let f = FeatureMap::new(64, 4);
    let p = Policy::zeros(f);
    let pair = FeaturizedPair::new(&f, &shop(), "hot sale", "plain", 2.5);
    assert!((ctrpo_loss(&p, &p, &[pair], 0.1).unwrap() - 2.5 * LN2).abs() < 1e-15);
}

#[test]
fn weighted_sum_matches_scripted_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let f = FeatureMap::new(128, 4);
    let it = shop();
    let (theta, reference) = (random_policy(f, &mut rng, 0.5), random_policy(f, &mut rng, 0.5));
    let texts: Vec<(String, String, f64)> =
        (0..10).map(|_| (random_text(&mut rng, 3), random_text(&mut rng, 2), rng.random_range(0.0..2.5))).collect();
    let pairs: Vec<FeaturizedPair> =
        texts.iter().map(|(w, l, c)| FeaturizedPair::new(&f, &it, w, l, *c)).collect();
    let dot = |p: &Policy, t: &str| -> f64 {
        f.featurize(&it, t).iter().zip(&p.weights).map(|(a, b)| a * b).sum()
    };
    let beta = 0.1;
    let oracle: f64 = texts
        .iter()
        .map(|(w, l, c)| {
            let m = (dot(&theta, w) - dot(&theta, l)) - (dot(&reference, w) - dot(&reference, l));
            c * (1.0 + (-beta * m).exp()).ln()
        })
        .sum();
    let got = ctrpo_loss(&theta, &reference, &pairs, beta).unwrap();
    assert!((got - oracle).abs() <= 1e-12 * oracle.abs().max(1.0));
}

#[test]
fn negative_weight_is_an_error() {
    let f = FeatureMap::new(16, 0);
    let p = Policy::zeros(f);
    let pair = FeaturizedPair::new(&f, &shop(), "a", "b", -0.1);
    assert!(ctrpo_loss(&p, &p, &[pair], 0.1).is_err());
}

#[test]
fn gradient_limits() {
    let f = FeatureMap::new(64, 4);
    let it = shop();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let reference = Policy::zeros(f);
    let zero_w: Vec<FeaturizedPair> = random_pairs(&mut rng, &f, 5, false)
        .into_iter()
        .map(|p| FeaturizedPair { weight: 0.0, ..p })
        .collect();
    let theta = random_policy(f, &mut rng, 1.0);
    assert!(grad_ctrpo(&theta, &reference, &zero_w, 0.1).iter().all(|&g| g == 0.0));

    // A huge margin along φ(y_w) - φ(y_l) saturates the pair.
    let pair = FeaturizedPair::new(&f, &it, "hot sale boot", "plain", 1.0);
    let dir: Vec<f64> = f
        .featurize(&it, "hot sale boot")
        .iter()
        .zip(f.featurize(&it, "plain"))
        .map(|(a, b)| 1e5 * (a - b))
        .collect();
    let far = Policy::from_weights(f, dir).unwrap();
    let g = grad_ctrpo(&far, &reference, &[pair], 0.1);
    assert!(g.iter().all(|v| v.abs() < 1e-100));
}

fn fd_max_rel_error(theta: &Policy, reference: &Policy, pairs: &[FeaturizedPair], beta: f64) -> f64 {
    let analytic = grad_ctrpo(theta, reference, pairs, beta);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..theta.weights.len() {
        let mut plus = theta.clone();
        plus.weights[i] += h;
        let mut minus = theta.clone();
        minus.weights[i] -= h;
        let fd = (ctrpo_loss(&plus, reference, pairs, beta).unwrap()
            - ctrpo_loss(&minus, reference, pairs, beta).unwrap())
            / (2.0 * h);
        let scale = analytic[i].abs().max(fd.abs()).max(1e-6);
        worst = worst.max((analytic[i] - fd).abs() / scale);
    }
    worst
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..5 {
        let f = FeatureMap::new(32, rng.random());
        let theta = random_policy(f, &mut rng, 1.0);
        let reference = random_policy(f, &mut rng, 1.0);
        let pairs = random_pairs(&mut rng, &f, 10, true);
        assert!(fd_max_rel_error(&theta, &reference, &pairs, 0.5) < 1e-6);
    }
}

fn cfg(lr: f64) -> TrainConfig {
    TrainConfig { learning_rate: lr, ..TrainConfig::default() }
}

#[test]
fn reference_fit_examples() {
    let f = FeatureMap::new(1024, 6);
    let it = item("i", "c", "info", "Human Title");
    let same = vec![Candidate::sampled("i", "Human Title"); 3];
    let (p, _) = fit_reference(&same, std::slice::from_ref(&it), f, &TrainConfig::default()).unwrap();
    assert!(p.weights.iter().all(|&w| w == 0.0));

    // "warm boot" appears four times, the others once: it must end up on top.
    let mut cands = vec![Candidate::sampled("i", "warm boot"); 4];
    cands.push(Candidate::sampled("i", "slim dress"));
    cands.push(Candidate::sampled("i", "soft scarf"));
    let config = TrainConfig { ref_learning_rate: 0.5, ref_steps: 50, ..TrainConfig::default() };
    let (p, nll) = fit_reference(&cands, std::slice::from_ref(&it), f, &config).unwrap();
    let pool = ["warm boot", "slim dress", "soft scarf", "Human Title"];
    let best = p.argmax(&it, &pool).unwrap();
    assert_eq!(best, "warm boot");
    for t in &pool[1..] {
        assert!(p.score(&it, "warm boot") > p.score(&it, t));
    }
    assert_eq!(nll.len(), 51);
    assert!(nll.windows(2).all(|w| w[1] < w[0]), "NLL must fall: {nll:?}");

    assert!(fit_reference(&[], std::slice::from_ref(&it), f, &config).is_err());
}

#[test]
fn zero_learning_rate_returns_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let f = FeatureMap::new(64, 1);
    let reference = random_policy(f, &mut rng, 1.0);
    let pairs = random_pairs(&mut rng, &f, 40, true);
    let out = train_ctrpo(&reference, &pairs, &cfg(0.0), 1).unwrap();
    assert_eq!(out.policy, reference);
    assert_eq!(out.log.len(), 3); // 40 pairs in batches of 16
    assert!(train_ctrpo(&reference, &[], &cfg(0.1), 1).is_err());
}

#[test]
fn training_is_reproducible() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let f = FeatureMap::new(64, 1);
    let reference = random_policy(f, &mut rng, 0.1);
    let pairs = random_pairs(&mut rng, &f, 40, true);
    let a = train_ctrpo(&reference, &pairs, &cfg(0.3), 9).unwrap();
    let b = train_ctrpo(&reference, &pairs, &cfg(0.3), 9).unwrap();
    assert_eq!(a.policy, b.policy);
    assert_eq!(a.log, b.log);
}

#[test]
fn separable_pairs_are_learned() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let f = FeatureMap::new(512, 5);
    let it = shop();
    let truth = random_policy(f, &mut rng, 1.0);
    // Separable with a margin: pairs whose true scores nearly tie are redrawn.
    let mut make = |n: usize| -> Vec<FeaturizedPair> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let (a, b) = (random_text(&mut rng, 3), random_text(&mut rng, 3));
            let gap = truth.score(&it, &a) - truth.score(&it, &b);
            if gap.abs() < 0.25 {
                continue;
            }
            let (w, l) = if gap > 0.0 { (a, b) } else { (b, a) };
            out.push(FeaturizedPair::new(&f, &it, &w, &l, 1.0));
        }
        out
    };
    let train = make(3000);
    let test = make(500);
    let config = TrainConfig { learning_rate: 3.0, epochs: 30, ..TrainConfig::default() };
    let out = train_ctrpo(&Policy::zeros(f), &train, &config, 1).unwrap();
    let acc = pair_accuracy(&out.policy, &test).unwrap();
    assert!(acc > 0.95, "held-out accuracy {acc}");
}

#[test]
fn accuracy_conventions() {
    let f = FeatureMap::new(256, 1);
    let it = shop();
    let pairs: Vec<FeaturizedPair> = [("hot sale", "plain"), ("new deal", "old")]
        .iter()
        .map(|(w, l)| FeaturizedPair::new(&f, &it, w, l, 1.0))
        .collect();
    assert_eq!(pair_accuracy(&Policy::zeros(f), &pairs).unwrap(), 0.0);
    let good: Vec<f64> = (0..256)
        .map(|i| {
            pairs.iter().map(|p| p.preferred.to_dense(256)[i] - p.dispreferred.to_dense(256)[i]).sum()
        })
        .collect();
    assert_eq!(pair_accuracy(&Policy::from_weights(f, good).unwrap(), &pairs).unwrap(), 1.0);
    assert!(pair_accuracy(&Policy::zeros(f), &[]).is_err());
}

#[test]
fn random_policy_random_pairs_near_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let f = FeatureMap::new(1024, 2);
    let pairs = random_pairs(&mut rng, &f, 10_000, false);
    let p = random_policy(f, &mut rng, 1.0);
    let acc = pair_accuracy(&p, &pairs).unwrap();
    // Standard error 0.005; allow four of them.
    assert!((acc - 0.5).abs() < 0.02, "{acc}");
}

#[test]
fn weight_modes_pick_coefficients() {
    let p = PreferencePair {
        item_id: "i".into(),
        y_w: "a".into(),
        y_l: "b".into(),
        delta: 0.01,
        gain: 1.25,
        confidence: 0.5,
        weight: 0.625,
    };
    assert_eq!(WeightMode::Ctrpo.weight(&p), 0.625);
    assert_eq!(WeightMode::DpoUnweighted.weight(&p), 1.0);
    assert_eq!(WeightMode::ConfidenceOnly.weight(&p), 0.5);
    let items: HashMap<&str, &Item> = HashMap::new();
    assert!(FeaturizedPair::from_pairs(&FeatureMap::new(8, 0), &items, &[p], |_| 1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn loss_at_reference_is_ln2(seed in any::<u64>(), beta in 0.01f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = FeatureMap::new(32, seed);
        let r = random_policy(f, &mut rng, 1.0);
        for p in random_pairs(&mut rng, &f, 5, false) {
            prop_assert!((dpo_loss(&r, &r, &p, beta) - LN2).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_decreases_in_margin(a in -50.0f64..50.0, d in 0.01f64..10.0, beta in 0.01f64..2.0) {
        let lo = dpo_loss_from_margin(a, beta);
        let hi = dpo_loss_from_margin(a + d, beta);
        prop_assert!(lo > 0.0 && hi > 0.0);
        prop_assert!(hi < lo);
    }

    #[test]
    fn gradient_step_descends(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = FeatureMap::new(64, seed);
        let r = random_policy(f, &mut rng, 1.0);
        let pairs = random_pairs(&mut rng, &f, 8, true);
        let g = grad_ctrpo(&r, &r, &pairs, 0.1);
        prop_assume!(g.iter().any(|v| *v != 0.0));
        let mut stepped = r.clone();
        for (w, gi) in stepped.weights.iter_mut().zip(&g) {
            *w -= 1e-3 * gi;
        }
        let before = ctrpo_loss(&r, &r, &pairs, 0.1).unwrap();
        let after = ctrpo_loss(&stepped, &r, &pairs, 0.1).unwrap();
        prop_assert!(after < before);
    }

    #[test]
    fn accuracy_invariant_to_positive_rescaling(seed in any::<u64>(), c in 0.001f64..1000.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = FeatureMap::new(64, seed);
        let p = random_policy(f, &mut rng, 1.0);
        let pairs = random_pairs(&mut rng, &f, 50, false);
        let scaled = Policy::from_weights(f, p.weights.iter().map(|w| w * c).collect()).unwrap();
        prop_assert_eq!(pair_accuracy(&p, &pairs).unwrap(), pair_accuracy(&scaled, &pairs).unwrap());
    }

    #[test]
    fn features_are_unit_or_zero(text in "[a-z ]{0,24}") {
        let f = FeatureMap::new(128, 3);
        let v = f.sparse(&shop(), &text);
        prop_assert!(v.is_empty() || (v.norm() - 1.0).abs() < 1e-12);
        prop_assert_eq!(v.clone(), f.sparse(&shop(), &text));
    }
}
