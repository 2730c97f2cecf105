use l2h_core::loss::{
    dva_loss, l2h_loss_with_mask, masked_ce, ConfidenceMask, LabelPatch, LossConfig,
};
use l2h_core::net::{
    backward, decode_checkpoint, encode_checkpoint, forward, forward_logits, init_params,
    read_checkpoint, receptive_field, write_checkpoint, Upstream,
};
use l2h_core::tensor::softmax_channels;
use l2h_core::{Error, NetParams, RPBackboneConfig, TensorMap};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_config() -> RPBackboneConfig {
    RPBackboneConfig {
        blocks: 2,
        branch_kernels: vec![1, 3, 5],
        branch_channels: vec![4, 2, 2],
        input_channels: 3,
        num_classes: 3,
    }
}

fn random_image(seed: u64, c: usize, h: usize, w: usize) -> TensorMap<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TensorMap::from_vec(
        c,
        h,
        w,
        (0..c * h * w)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    )
    .unwrap()
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-10 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

#[test]
fn default_parameter_count_matches_shape_walk() {
    // 5 blocks of 1x1/3x3/5x5 branches (64/32/16) on 3 inputs, 1x1 head to 12
    let cfg = RPBackboneConfig::new(3, 12);
    assert_eq!(cfg.param_count(), 341_068);
    let params = init_params::<f32>(&cfg, 0).unwrap();
    assert_eq!(params.param_count(), 341_068);
    assert_eq!(params.flat().len(), 341_068);
}

#[test]
fn receptive_field_examples() {
    assert_eq!(receptive_field(&RPBackboneConfig::new(3, 12)), 10);
    let single = RPBackboneConfig {
        blocks: 1,
        branch_kernels: vec![3],
        branch_channels: vec![4],
        input_channels: 1,
        num_classes: 2,
    };
    assert_eq!(receptive_field(&single), 1);
    let pointwise = RPBackboneConfig {
        branch_kernels: vec![1, 1],
        branch_channels: vec![2, 2],
        ..single
    };
    assert_eq!(receptive_field(&pointwise), 0);
}

#[test]
fn init_is_seeded_and_rejects_single_class() {
    let cfg = small_config();
    let a = init_params::<f32>(&cfg, 1).unwrap();
    assert_eq!(a, init_params::<f32>(&cfg, 1).unwrap());
    assert_ne!(a.flat(), init_params::<f32>(&cfg, 2).unwrap().flat());
    assert!(a.convs.iter().all(|c| c.bias.iter().all(|&b| b == 0.0)));
    for c in &a.convs {
        let bound = (6.0 / (c.in_channels * c.kernel * c.kernel) as f64).sqrt() as f32;
        assert!(c.weight.iter().all(|w| w.abs() <= bound));
    }
    let mut bad = small_config();
    bad.num_classes = 1;
    assert!(matches!(init_params::<f32>(&bad, 0), Err(Error::Config(_))));
}

#[test]
fn forward_shapes_and_softmax() {
    let cfg = RPBackboneConfig::new(3, 12);
    let params = init_params::<f32>(&cfg, 3).unwrap();
    let image = random_image(0, 3, 64, 64).cast::<f32>();
    let pass = forward(&params, &image).unwrap();
    assert_eq!(pass.logits.shape(), (12, 64, 64));
    assert_eq!(pass.features.len(), 5);
    assert!(pass.features.iter().all(|f| f.shape() == (112, 64, 64)));
    for p in 0..64 * 64 {
        let s: f32 = (0..12).map(|k| pass.cp_map.channel(k)[p]).sum();
        assert!((s - 1.0).abs() < 1e-5);
    }
    assert_eq!(forward_logits(&params, &image).unwrap(), pass.logits);
    assert!(matches!(
        forward(&params, &random_image(0, 2, 8, 8).cast()),
        Err(Error::Shape(_))
    ));
}

#[test]
fn zero_network_is_uniform() {
    let cfg = small_config();
    let mut params = init_params::<f64>(&cfg, 0).unwrap();
    for c in &mut params.convs {
        c.weight.iter_mut().for_each(|w| *w = 0.0);
    }
    let pass = forward(&params, &random_image(1, 3, 5, 5)).unwrap();
    assert!(pass
        .cp_map
        .values()
        .iter()
        .all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
}

#[test]
fn zero_upstream_gives_zero_gradients() {
    let params = init_params::<f64>(&small_config(), 0).unwrap();
    let image = random_image(2, 3, 6, 6);
    let pass = forward(&params, &image).unwrap();
    let g = backward(
        &params,
        &image,
        &pass,
        &Upstream::logits_only(TensorMap::zeros(3, 6, 6)),
    )
    .unwrap();
    assert!(g.flat().iter().all(|&v| v == 0.0));
}

#[test]
fn stale_activations_are_a_state_error() {
    let params = init_params::<f64>(&small_config(), 0).unwrap();
    let image = random_image(2, 3, 6, 6);
    let mut pass = forward(&params, &image).unwrap();
    pass.features.pop();
    let up = Upstream::logits_only(TensorMap::zeros(3, 6, 6));
    assert!(matches!(
        backward(&params, &image, &pass, &up),
        Err(Error::State(_))
    ));
}

#[test]
fn head_bias_gradient_of_logit_sum_is_pixel_count() {
    let params = init_params::<f64>(&small_config(), 4).unwrap();
    let (h, w) = (7, 5);
    let image = random_image(3, 3, h, w);
    let pass = forward(&params, &image).unwrap();
    let ones = TensorMap::from_vec(3, h, w, vec![1.0; 3 * h * w]).unwrap();
    let g = backward(&params, &image, &pass, &Upstream::logits_only(ones)).unwrap();
    let head = g.convs.last().unwrap();
    assert!(head.bias.iter().all(|&b| b == (h * w) as f64));
}

/// Loss with the CAS mask and the VA class assignment frozen at the base
/// point, so it is smooth in the parameters.
fn frozen_loss(
    params: &NetParams<f64>,
    image: &TensorMap<f64>,
    labels: &LabelPatch,
    mask: &ConfidenceMask,
    cp0: &TensorMap<f64>,
    cfg: &LossConfig,
) -> f64 {
    let pass = forward(params, image).unwrap();
    let (ce, _) = masked_ce(&pass.cp_map, labels, mask).unwrap();
    let (dva, _) = dva_loss(&pass.features, cp0, labels, mask, cfg).unwrap();
    ce + dva
}

#[test]
fn every_parameter_gradient_matches_finite_differences() {
    let cfg = small_config();
    let (h, w) = (8, 8);
    let mut params = init_params::<f64>(&cfg, 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for c in &mut params.convs {
        c.bias
            .iter_mut()
            .for_each(|b| *b = rng.random_range(-0.1..0.1));
    }
    let image = random_image(13, 3, h, w);
    let labels = LabelPatch::new(
        w,
        h,
        (0..h * w).map(|_| rng.random_range(0..=3u8)).collect(),
    )
    .unwrap();
    let mut mask = ConfidenceMask::all_labeled(&labels);
    for (p, &l) in labels.labels.iter().enumerate() {
        if l != 0 && rng.random_bool(0.5) {
            mask.mask[p] = 0;
        }
    }
    mask.ca_count = mask.mask.iter().filter(|&&m| m == 1).count();
    mask.va_count = labels.labeled_count() - mask.ca_count;
    let loss_cfg = LossConfig {
        gamma: 0.5,
        ..LossConfig::default()
    };

    let pass = forward(&params, &image).unwrap();
    let cp0 = pass.cp_map.clone();
    let out = l2h_loss_with_mask(
        &pass.cp_map,
        &pass.features,
        &labels,
        mask.clone(),
        &loss_cfg,
    )
    .unwrap();
    assert!(out.dva > 0.0 && out.ce > 0.0);
    let upstream = Upstream {
        logits: Some(out.grad_logits),
        features: out.grad_features.into_iter().map(Some).collect(),
    };
    let analytic = backward(&params, &image, &pass, &upstream).unwrap().flat();
    assert_eq!(analytic.len(), params.param_count());

    let step = 1e-6;
    let mut worst = 0.0f64;
    for i in 0..params.param_count() {
        let base = *params.param_mut(i);
        *params.param_mut(i) = base + step;
        let lp = frozen_loss(&params, &image, &labels, &mask, &cp0, &loss_cfg);
        *params.param_mut(i) = base - step;
        let lm = frozen_loss(&params, &image, &labels, &mask, &cp0, &loss_cfg);
        *params.param_mut(i) = base;
        let numeric = (lp - lm) / (2.0 * step);
        let e = rel_err(analytic[i], numeric);
        worst = worst.max(e);
        assert!(
            e < 1e-4,
            "parameter {i}: analytic {} numeric {numeric}",
            analytic[i]
        );
    }
    assert!(worst < 1e-4);
}

#[test]
fn logits_are_bit_identical_across_runs() {
    let params = init_params::<f32>(&RPBackboneConfig::new(3, 5), 9).unwrap();
    let image = random_image(4, 3, 40, 40).cast::<f32>();
    let a = forward_logits(&params, &image).unwrap();
    let b = forward_logits(&params, &image).unwrap();
    assert!(a
        .values()
        .iter()
        .zip(b.values())
        .all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let params = init_params::<f32>(&small_config(), 21).unwrap();
    let bytes = encode_checkpoint(&params);
    assert_eq!(&bytes[..4], b"L2HP");
    assert_eq!(decode_checkpoint(&bytes).unwrap(), params);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.l2hp");
    write_checkpoint(&path, &params).unwrap();
    assert_eq!(read_checkpoint(&path).unwrap(), params);
    assert!(matches!(
        decode_checkpoint(&bytes[..bytes.len() - 1]),
        Err(Error::Format(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn output_keeps_input_resolution(h in 1usize..14, w in 1usize..14, seed in any::<u64>()) {
        let params = init_params::<f32>(&small_config(), seed).unwrap();
        let logits = forward_logits(&params, &random_image(seed, 3, h, w).cast()).unwrap();
        prop_assert_eq!(logits.shape(), (3, h, w));
    }

    #[test]
    fn interior_is_translation_covariant(dx in 0usize..3, dy in 0usize..3, seed in any::<u64>()) {
        let cfg = small_config();
        let r = receptive_field(&cfg);
        let params = init_params::<f64>(&cfg, seed).unwrap();
        let (h, w) = (16, 16);
        let big = random_image(seed ^ 1, 3, h + dy, w + dx);
        let a = big.crop(0, 0, h, w).unwrap();
        let b = big.crop(dy, dx, h, w).unwrap();
        let la = forward_logits(&params, &a).unwrap();
        let lb = forward_logits(&params, &b).unwrap();
        let margin = r + dx.max(dy);
        for y in margin..h - margin {
            for x in margin..w - margin {
                for k in 0..3 {
                    // a(y+dy, x+dx) sees the same input as b(y, x)
                    prop_assert_eq!(la.at(k, y + dy, x + dx).to_bits(), lb.at(k, y, x).to_bits());
                }
            }
        }
    }
}

#[test]
fn cp_map_is_softmax_of_logits() {
    let params = init_params::<f64>(&small_config(), 5).unwrap();
    let pass = forward(&params, &random_image(5, 3, 6, 6)).unwrap();
    assert_eq!(softmax_channels(&pass.logits), pass.cp_map);
}
