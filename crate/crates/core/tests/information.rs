use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wiretap_core::autodiff::Tensor;
use wiretap_core::channel::ChannelSpec;
use wiretap_core::mi::*;
use wiretap_core::source::{make_discrete_system, normalize, DiscreteKind, DiscreteSystem};

/// Brute-force `I(A; Y)` straight from the definition, in bits, with the
/// channel law written out bit by bit.
fn reference_mi(p_a_x: &[Vec<f64>], eps: &[f64]) -> f64 {
    let n = eps.len();
    let ny = 1usize << n;
    let law = |x: usize, y: usize| -> f64 {
        (0..n)
            .map(|i| {
                let flip = ((x ^ y) >> (n - 1 - i)) & 1 == 1;
                if flip { eps[i] } else { 1.0 - eps[i] }
            })
            .product()
    };
    let joint: Vec<Vec<f64>> =
        p_a_x.iter().map(|row| (0..ny).map(|y| row.iter().enumerate().map(|(x, &p)| p * law(x, y)).sum()).collect()).collect();
    let pa: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
    let py: Vec<f64> = (0..ny).map(|y| joint.iter().map(|r| r[y]).sum()).collect();
    let mut mi = 0.0;
    for a in 0..joint.len() {
        for y in 0..ny {
            if joint[a][y] > 0.0 {
                mi += joint[a][y] * (joint[a][y] / (pa[a] * py[y])).log2();
            }
        }
    }
    mi
}

/// `P(s, x)` and `P(t, x)` tables for a system.
fn source_code_tables(sys: &DiscreteSystem) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let ps = sys.p_s();
    let s_x: Vec<Vec<f64>> = sys.encoder.iter().zip(&ps).map(|(row, &p)| row.iter().map(|e| p * e).collect()).collect();
    let t_x = sys
        .joint
        .iter()
        .map(|trow| (0..sys.x_card()).map(|x| trow.iter().enumerate().map(|(s, &p)| p * sys.encoder[s][x]).sum()).collect())
        .collect();
    (s_x, t_x)
}

#[test]
fn single_bit_through_bsc() {
    let sys = DiscreteSystem::new(vec![vec![0.5, 0.0], vec![0.0, 0.5]], vec![vec![1.0, 0.0], vec![0.0, 1.0]], 1, Some(1)).unwrap();
    let spec = ChannelSpec::single(1, 0.1, 0.5).unwrap();
    let bob = exact_mi(&sys, &spec, MiTarget::SourceBob).unwrap().value;
    assert!((bob - (1.0 - h2(0.1))).abs() < 1e-9);
    assert!((bob - 0.5310044064107188).abs() < 1e-9);
    for which in [MiTarget::LabelEve, MiTarget::SourceEve, MiTarget::CodeEve] {
        assert_eq!(exact_mi(&sys, &spec, which).unwrap().value, 0.0);
    }
}

#[test]
fn noiseless_identity_recovers_source_entropy() {
    let sys = make_discrete_system(DiscreteKind::CorrelatedBits { m: 3, sensitive_bit: 0 }, 0).unwrap();
    let spec = ChannelSpec::single(3, 0.0, 0.0).unwrap();
    assert!((exact_mi(&sys, &spec, MiTarget::SourceBob).unwrap().value - 3.0).abs() < 1e-12);
    assert!((exact_mi(&sys, &spec, MiTarget::LabelEve).unwrap().value - 1.0).abs() < 1e-12);
}

#[test]
fn enumeration_matches_reference_and_obeys_data_processing() {
    for seed in 0..120u64 {
        let kind = DiscreteKind::Random { t_card: 2 + (seed % 3) as usize, s_card: 2 + (seed % 7) as usize, n: 1 + (seed % 4) as usize };
        let sys = make_discrete_system(kind, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = sys.n;
        let spec = ChannelSpec::single(n, rng.gen_range(0.0..0.5), rng.gen_range(0.0..0.5)).unwrap();
        let (s_x, t_x) = source_code_tables(&sys);
        let eve_eps = spec.per_bit_epsilon(wiretap_core::channel::Receiver::Eve);
        let bob_eps = spec.per_bit_epsilon(wiretap_core::channel::Receiver::Bob);

        let t_ye = exact_mi(&sys, &spec, MiTarget::LabelEve).unwrap().value;
        let s_ye = exact_mi(&sys, &spec, MiTarget::SourceEve).unwrap().value;
        let x_ye = exact_mi(&sys, &spec, MiTarget::CodeEve).unwrap().value;
        let s_yb = exact_mi(&sys, &spec, MiTarget::SourceBob).unwrap().value;
        assert!((t_ye - reference_mi(&t_x, &eve_eps).max(0.0)).abs() < 1e-9);
        assert!((s_ye - reference_mi(&s_x, &eve_eps).max(0.0)).abs() < 1e-9);
        assert!((s_yb - reference_mi(&s_x, &bob_eps).max(0.0)).abs() < 1e-9);
        assert!(t_ye <= s_ye + 1e-9 && s_ye <= x_ye + 1e-9, "seed {seed}: {t_ye} {s_ye} {x_ye}");
        // capacity ceiling n (1 − h2(ε_E))
        assert!(x_ye <= n as f64 * (1.0 - h2(eve_eps[0])) + 1e-9);
        assert!(t_ye <= entropy_bits(&sys.p_t()) + 1e-9);
    }
}

#[test]
fn half_crossover_kills_every_pair() {
    let sys = make_discrete_system(DiscreteKind::Random { t_card: 3, s_card: 8, n: 3 }, 5).unwrap();
    let spec = ChannelSpec::single(3, 0.5, 0.5).unwrap();
    for which in [MiTarget::SourceBob, MiTarget::LabelEve, MiTarget::CodeEve, MiTarget::SourceEve] {
        assert!(exact_mi(&sys, &spec, which).unwrap().value.abs() < 1e-12);
    }
}

#[test]
fn enumeration_bound_is_enforced() {
    // |S| · 2^n = 16 · 2^17 exceeds 2^20; the system itself caps n at 6, so
    // check the joint-table path with an oversized channel instead.
    let sys = make_discrete_system(DiscreteKind::Random { t_card: 2, s_card: 16, n: 6 }, 0).unwrap();
    assert!(exact_mi(&sys, &ChannelSpec::single(6, 0.1, 0.1).unwrap(), MiTarget::SourceBob).is_ok());
    assert!(matches!(
        exact_mi(&sys, &ChannelSpec::single(7, 0.1, 0.1).unwrap(), MiTarget::SourceBob),
        Err(MiError::Dimension(_))
    ));
    assert!(16 * (1 << 6) <= MAX_ENUMERATION);
}

fn random_table<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..rows).map(|_| normalize((0..cols).map(|_| rng.gen::<f64>() + 1e-3).collect())).collect()
}

#[test]
fn variational_bounds_hold_on_random_systems() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for seed in 0..150u64 {
        let t_card = 2 + (seed % 3) as usize;
        let s_card = 2 + (seed % 9) as usize;
        let n = 1 + (seed % 3) as usize;
        let sys = make_discrete_system(DiscreteKind::Random { t_card, s_card, n }, seed).unwrap();
        let spec = ChannelSpec::single(n, rng.gen_range(0.0..0.5), rng.gen_range(0.0..0.5)).unwrap();
        let ny = 1 << n;
        for (which, card) in [(MiTarget::SourceBob, s_card), (MiTarget::LabelEve, t_card)] {
            let joint = joint_for(&sys, &spec, which).unwrap();
            let exact = exact_mi(&sys, &spec, which).unwrap().value;
            for _ in 0..4 {
                let q = random_table(ny, card, &mut rng);
                let bound = tabular_bound(&joint, &q);
                assert!(bound - exact <= 1e-9, "seed {seed} {which:?}: bound {bound} > exact {exact}");
            }
            let tight = tabular_bound(&joint, &posterior(&joint));
            assert!((tight - exact).abs() < 1e-9, "seed {seed} {which:?}: {tight} vs {exact}");
        }
    }
}

#[test]
fn uniform_classifier_bound_is_zero() {
    let sys = make_discrete_system(DiscreteKind::Random { t_card: 4, s_card: 6, n: 2 }, 1).unwrap();
    let spec = ChannelSpec::single(2, 0.1, 0.2).unwrap();
    let mut uniform_t = sys.clone();
    // rebalance the label marginal so H(T) = log2 |T|
    let pt = sys.p_t();
    for (t, row) in uniform_t.joint.iter_mut().enumerate() {
        row.iter_mut().for_each(|v| *v *= 0.25 / pt[t]);
    }
    let joint = joint_for(&uniform_t, &spec, MiTarget::LabelEve).unwrap();
    let q = vec![vec![0.25; 4]; 4];
    assert!(tabular_bound(&joint, &q).abs() < 1e-12);
}

fn estimate(labels: Vec<usize>, y: Tensor, classes: usize, seed: u64) -> MiReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = MineConfig { epochs: 20, ..MineConfig::default() };
    let mut net = MineNet::new(y.cols(), classes, &cfg.hidden, &mut rng).unwrap();
    mine_estimate(&mut net, &labels, &y, &cfg, &mut rng).unwrap()
}

#[test]
fn mine_on_independent_pair() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 10_000;
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..9)).collect();
    let y = Tensor::matrix(n, 20, (0..n * 20).map(|_| f64::from(u8::from(rng.gen::<bool>()))).collect()).unwrap();
    let r = estimate(labels, y, 9, 1);
    assert!(r.value <= 0.05, "{r:?}");
    assert_eq!(r.method, MiMethod::Mine);
}

#[test]
fn mine_on_doubly_symmetric_binary_pair() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 10_000;
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
    let y = Tensor::matrix(n, 1, labels.iter().map(|&t| f64::from(u8::from((t == 1) != (rng.gen::<f64>() < 0.1)))).collect()).unwrap();
    let r = estimate(labels, y, 2, 2);
    assert!((r.value - (1.0 - h2(0.1))).abs() < 0.05, "{r:?}");
}

#[test]
fn mine_on_nine_class_copy() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let n = 10_000;
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..9)).collect();
    let y = Tensor::matrix(n, 4, labels.iter().flat_map(|&t| (0..4).map(move |b| ((t >> (3 - b)) & 1) as f64)).collect()).unwrap();
    let r = estimate(labels, y, 9, 3);
    assert!((r.value - 9f64.log2()).abs() < 0.1, "{r:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_mi_within_entropy_ceilings(seed in 0u64..10_000, eb in 0.0f64..=0.5, ee in 0.0f64..=0.5) {
        let sys = make_discrete_system(DiscreteKind::Random { t_card: 3, s_card: 5, n: 2 }, seed).unwrap();
        let spec = ChannelSpec::single(2, eb, ee).unwrap();
        let h_s = entropy_bits(&sys.p_s());
        let h_t = entropy_bits(&sys.p_t());
        let sb = exact_mi(&sys, &spec, MiTarget::SourceBob).unwrap().value;
        let te = exact_mi(&sys, &spec, MiTarget::LabelEve).unwrap().value;
        prop_assert!(sb >= 0.0 && sb <= h_s.min(2.0) + 1e-9);
        prop_assert!(te >= 0.0 && te <= h_t.min(2.0) + 1e-9);
    }

    #[test]
    fn leakage_is_monotone_in_eve_noise(seed in 0u64..10_000, a in 0.0f64..=0.5, b in 0.0f64..=0.5) {
        // the same encoder leaks no more through a noisier channel
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let sys = make_discrete_system(DiscreteKind::Random { t_card: 2, s_card: 4, n: 2 }, seed).unwrap();
        let quiet = exact_mi(&sys, &ChannelSpec::single(2, 0.1, lo).unwrap(), MiTarget::LabelEve).unwrap().value;
        let noisy = exact_mi(&sys, &ChannelSpec::single(2, 0.1, hi).unwrap(), MiTarget::LabelEve).unwrap().value;
        prop_assert!(noisy <= quiet + 1e-12);
    }
}
