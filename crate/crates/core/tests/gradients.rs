use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wiretap_core::autodiff::*;
use wiretap_core::channel::ChannelSpec;
use wiretap_core::models::{sample_bits_st, straight_through_backward, ModelConfig};
use wiretap_core::training::{draw_noise, total_loss, JsccModels, NoiseMode, TrainConfig};

const TOL: f64 = 1e-4;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

#[test]
fn every_layer_type_as_output_and_hidden() {
    for act in Activation::ALL {
        for (k, hidden) in [Activation::Tanh, act].into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(10 + k as u64);
            let layers = [LayerSpec::new(6, hidden), LayerSpec::new(4, act)];
            let mut net = Network::new(5, &layers, &mut rng).unwrap();
            let x = random_matrix(&mut rng, 7, 5, -1.0, 1.0);
            let w = random_matrix(&mut rng, 7, 4, -1.0, 1.0);
            let report = grad_check(&mut net, &x, weighted_sum_loss(&w), TOL);
            assert!(report.passed, "{} over {}: {report:?}", act.name(), hidden.name());
            assert_eq!(report.checked, net.params().parameter_count());
        }
    }
}

#[test]
fn model_shaped_networks_pass() {
    let cfg = ModelConfig {
        image_len: 12,
        n_bits: 6,
        t_classes: 3,
        encoder_hidden: vec![8],
        decoder_hidden: vec![8],
        eve_hidden: vec![5],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut models = JsccModels::new(&cfg, &mut rng).unwrap();
    let images = random_matrix(&mut rng, 5, 12, 0.0, 1.0);
    let bits = random_matrix(&mut rng, 5, 6, 0.0, 1.0);
    let target = random_matrix(&mut rng, 5, 12, 0.0, 1.0);
    let w = random_matrix(&mut rng, 5, 6, -1.0, 1.0);
    let wc = random_matrix(&mut rng, 5, 3, -1.0, 1.0);
    assert!(grad_check(&mut models.encoder.net, &images, weighted_sum_loss(&w), TOL).passed);
    assert!(grad_check(&mut models.decoder.net, &bits, squared_error_loss(&target), TOL).passed);
    assert!(grad_check(&mut models.eve.net, &bits, weighted_sum_loss(&wc), TOL).passed);
}

fn small_setup(lambda: f64, seed: u64) -> (JsccModels, TrainConfig, Tensor, Vec<usize>) {
    let model = ModelConfig {
        image_len: 12,
        n_bits: 6,
        t_classes: 3,
        encoder_hidden: vec![7],
        decoder_hidden: vec![7],
        eve_hidden: vec![5],
    };
    let channel = ChannelSpec::equal_bands(6, &[(0.1, 0.3), (0.05, 0.0)]).unwrap();
    let mut cfg = TrainConfig::new(channel, model.clone());
    cfg.lambda = lambda;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let models = JsccModels::new(&model, &mut rng).unwrap();
    let images = random_matrix(&mut rng, 6, 12, 0.0, 1.0);
    let labels = (0..6).map(|i| i % 3).collect();
    (models, cfg, images, labels)
}

#[test]
fn full_training_loss_matches_finite_differences() {
    for (lambda, seed) in [(0.0, 30), (2.5, 31), (20.0, 32)] {
        let (mut models, cfg, images, labels) = small_setup(lambda, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let noise = draw_noise(&images, &models, &cfg.channel, &mut rng).unwrap();
        let h_t = 3f64.ln();
        total_loss(&images, &labels, &mut models, &cfg, h_t, NoiseMode::Replay(&noise), &mut rng).unwrap();
        let analytic = vec![models.encoder.net.params().gradients(), models.decoder.net.params().gradients()];
        let report = compare_with_finite_differences(
            &mut models,
            &analytic,
            |m| total_loss(&images, &labels, m, &cfg, h_t, NoiseMode::Replay(&noise), &mut ChaCha8Rng::seed_from_u64(0)).unwrap().total,
            FD_STEP,
            TOL,
        );
        assert!(report.passed, "λ {lambda}: {report:?}");
    }
}

#[test]
fn straight_through_sampling_contract() {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let p = Tensor::matrix(1, 4, vec![0.05, 0.3, 0.5, 0.9]).unwrap();
    let draws = 100_000;
    let mut sums = [0.0; 4];
    for _ in 0..draws {
        let x = sample_bits_st(&p, &mut rng).unwrap();
        sums.iter_mut().zip(x.data()).for_each(|(s, v)| *s += v);
    }
    for (s, &pi) in sums.iter().zip(p.data()) {
        let sigma = (pi * (1.0 - pi) / draws as f64).sqrt();
        assert!((s / draws as f64 - pi).abs() <= 3.0 * sigma);
    }
    let ones = Tensor::filled(&[1, 4], 1.0);
    assert_eq!(straight_through_backward(&ones), ones);
    let sure = Tensor::filled(&[1, 8], 1.0 - 1e-12);
    assert_eq!(sample_bits_st(&sure, &mut rng).unwrap(), Tensor::filled(&[1, 8], 1.0));
}

#[test]
fn forward_and_backward_are_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let layers = [LayerSpec::new(6, Activation::Relu), LayerSpec::new(3, Activation::Softmax)];
        let mut net = Network::new(4, &layers, &mut rng).unwrap();
        let x = random_matrix(&mut rng, 3, 4, -1.0, 1.0);
        let out = net.forward(&x, true).unwrap();
        net.backward(&Tensor::filled(out.shape(), 0.5)).unwrap();
        (out, net.params().gradients())
    };
    assert_eq!(run(), run());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn randomized_layers_pass(seed in any::<u64>(), act in 0usize..5, rows in 1usize..6) {
        let act = Activation::ALL[act];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Network::new(3, &[LayerSpec::new(4, Activation::Sigmoid), LayerSpec::new(3, act)], &mut rng).unwrap();
        let x = random_matrix(&mut rng, rows, 3, -2.0, 2.0);
        let w = random_matrix(&mut rng, rows, 3, -1.0, 1.0);
        let report = grad_check(&mut net, &x, weighted_sum_loss(&w), TOL);
        prop_assert!(report.passed, "{}: {:?}", act.name(), report);
    }

    #[test]
    fn softmax_and_sigmoid_ranges(seed in any::<u64>(), scale in 0.1f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let soft = Network::new(5, &[LayerSpec::new(7, Activation::Softmax)], &mut rng).unwrap();
        let sig = Network::new(5, &[LayerSpec::new(7, Activation::Sigmoid)], &mut rng).unwrap();
        let x = random_matrix(&mut rng, 4, 5, -scale, scale);
        let s = soft.predict(&x).unwrap();
        for i in 0..4 {
            prop_assert!((s.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let g = sig.predict(&random_matrix(&mut rng, 4, 5, -1.0, 1.0)).unwrap();
        prop_assert!(g.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }
}
