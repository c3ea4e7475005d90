use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tbsm::autodiff::Tensor;
use tbsm::params::{GradBuffer, ParamSet};
use tbsm::train::{accuracy, auc, Adagrad, DEFAULT_EPS, DEFAULT_LR};

/// Pairwise count over every positive/negative pair, ties counting one half.
fn brute_force_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut twice, mut pairs) = (0u64, 0u64);
    for (i, &li) in labels.iter().enumerate() {
        if li != 1 {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj != 0 {
                continue;
            }
            pairs += 1;
            twice += match scores[i].partial_cmp(&scores[j]).unwrap() {
                std::cmp::Ordering::Greater => 2,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Less => 0,
            };
        }
    }
    twice as f64 / (2 * pairs) as f64
}

fn instance(rng: &mut ChaCha8Rng, k: usize) -> (Vec<f64>, Vec<u8>) {
    let n = rng.random_range(2..=2000);
    let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..=1)).collect();
    labels[0] = 0;
    labels[1] = 1;
    let scores = match k % 4 {
        0 => vec![0.37; n],
        1 => (0..n)
            .map(|_| rng.random_range(0..5) as f64 / 4.0)
            .collect(),
        2 => (0..n).map(|_| rng.random::<f64>()).collect(),
        _ => labels
            .iter()
            .map(|&l| l as f64 * 0.3 + rng.random_range(0..20) as f64 / 19.0)
            .collect(),
    };
    (scores, labels)
}

#[test]
fn auc_equals_pair_count_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for k in 0..200 {
        let (scores, labels) = instance(&mut rng, k);
        let fast = auc(&scores, &labels).unwrap();
        assert_eq!(
            fast.to_bits(),
            brute_force_auc(&scores, &labels).to_bits(),
            "instance {k}"
        );
        if k % 4 == 0 {
            assert_eq!(fast, 0.5);
        }
    }
}

#[test]
fn auc_is_undefined_for_one_class() {
    assert!(auc(&[0.1, 0.9], &[0, 0]).is_err());
    assert!(auc(&[], &[]).is_err());
    assert!(auc(&[f64::NAN, 0.2], &[0, 1]).is_err());
}

proptest! {
    #[test]
    fn auc_is_invariant_under_monotone_maps(
        pairs in prop::collection::vec((0u8..2, -5.0f64..5.0), 2..200)
    ) {
        let labels: Vec<u8> = pairs.iter().map(|p| p.0).collect();
        let scores: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        prop_assume!(labels.contains(&0) && labels.contains(&1));
        let a = auc(&scores, &labels).unwrap();
        let mapped: Vec<f64> = scores.iter().map(|s| 1.0 / (1.0 + (-s).exp())).collect();
        let flipped: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert_eq!(a, auc(&mapped, &labels).unwrap());
        prop_assert!((a + auc(&flipped, &labels).unwrap() - 1.0).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }
}

#[test]
fn accuracy_thresholds_at_one_half() {
    assert_eq!(
        accuracy(&[0.9, 0.2, 0.6, 0.5], &[1, 0, 0, 0]).unwrap(),
        0.75
    );
}

/// Stabilizer small enough that `η ε` sits below the test tolerance.
const TINY_EPS: f64 = 1e-13;

fn one_weight(lr: f64, eps: f64) -> (ParamSet, GradBuffer, Adagrad) {
    let mut ps = ParamSet::new();
    ps.add("w", Tensor::vector(vec![0.25, -1.0]));
    let g = GradBuffer::zeros_like(&ps);
    let opt = Adagrad::new(&ps, lr, eps);
    (ps, g, opt)
}

#[test]
fn first_unit_step_moves_by_the_learning_rate() {
    let (mut ps, mut g, mut opt) = one_weight(0.1, TINY_EPS);
    let id = ps.ids().next().unwrap();
    g.get_mut(id).copy_from_slice(&[1.0, -1.0]);
    opt.step(&mut ps, &g).unwrap();
    assert_eq!(opt.accumulators()[0], vec![1.0, 1.0]);
    let w = ps.get(id).data();
    assert!((w[0] - 0.15).abs() <= 1e-12);
    assert!((w[1] + 0.9).abs() <= 1e-12);
}

#[test]
fn zero_gradient_is_a_no_op() {
    let (mut ps, g, mut opt) = one_weight(0.1, TINY_EPS);
    let before = ps.clone();
    opt.step(&mut ps, &g).unwrap();
    assert_eq!(ps, before);
    assert_eq!(opt.accumulators()[0], vec![0.0, 0.0]);
}

#[test]
fn second_unit_step_is_scaled_by_inverse_root_two() {
    let (mut ps, mut g, mut opt) = one_weight(0.1, TINY_EPS);
    let id = ps.ids().next().unwrap();
    g.get_mut(id).copy_from_slice(&[1.0, 1.0]);
    opt.step(&mut ps, &g).unwrap();
    let mid = ps.get(id).data().to_vec();
    opt.step(&mut ps, &g).unwrap();
    for (after, before) in ps.get(id).data().iter().zip(mid) {
        assert!((after - before + 0.1 / 2f64.sqrt()).abs() <= 1e-12);
    }
}

#[test]
fn default_stabilizer_follows_the_update_rule() {
    let (mut ps, mut g, mut opt) = one_weight(DEFAULT_LR, DEFAULT_EPS);
    let id = ps.ids().next().unwrap();
    g.get_mut(id).copy_from_slice(&[1.0, 0.5]);
    let mut acc = [0.0f64; 2];
    let mut want = [0.25, -1.0];
    for _ in 0..3 {
        opt.step(&mut ps, &g).unwrap();
        for k in 0..2 {
            let gk = g.get(id)[k];
            acc[k] += gk * gk;
            want[k] -= DEFAULT_LR * gk / (acc[k].sqrt() + DEFAULT_EPS);
        }
        for (a, b) in ps.get(id).data().iter().zip(want) {
            assert!((a - b).abs() <= 1e-15);
        }
    }
}
