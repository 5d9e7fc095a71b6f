mod common;

use candle_core::{DType, Device, Tensor};
use common::*;
use dance_nets::discriminator::{DiscOutput, MultiscaleDiscriminator, NLayerDiscriminator};
use dance_nets::generator::Generator;
use dance_nets::losses::*;
use dance_nets::params::ParamStore;
use dance_nets::perceptual::{FeatureExtractor, Vgg19};
use dance_nets::tensor::scalar;
use proptest::prelude::*;

fn t(v: &[f64]) -> Tensor {
    Tensor::from_vec(v.to_vec(), (1, 1, 1, v.len()), &Device::Cpu).unwrap()
}

fn val(x: &Tensor) -> f64 {
    scalar(x).unwrap()
}

/// ln(1 + e^x) evaluated stably.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn flat(x: &Tensor) -> Vec<f64> {
    x.to_dtype(DType::F64).unwrap().flatten_all().unwrap().to_vec1().unwrap()
}

#[test]
fn zero_logits_give_two_log_two() {
    let z = t(&[0.0; 6]);
    let d = val(&gan_loss_single(&z, &z, Side::Discriminator, GanMode::Log).unwrap());
    assert!((d - 2.0 * std::f64::consts::LN_2).abs() < 1e-9);
    let g = val(&gan_loss_single(&z, &z, Side::Generator, GanMode::Log).unwrap());
    assert!((g - std::f64::consts::LN_2).abs() < 1e-9);
}

#[test]
fn saturated_discriminator_has_vanishing_loss() {
    let d = val(&gan_loss_single(&t(&[60.0; 4]), &t(&[-60.0; 4]), Side::Discriminator, GanMode::Log).unwrap());
    assert!(d < 1e-20);
    let ls = val(&gan_loss_single(&t(&[1.0; 4]), &t(&[0.0; 4]), Side::Discriminator, GanMode::LeastSquares).unwrap());
    assert_eq!(ls, 0.0);
}

#[test]
fn generator_loss_falls_as_fake_logits_rise() {
    for mode in [GanMode::Log, GanMode::LeastSquares] {
        let sweep: Vec<f64> = (-20..=4)
            .map(|i| {
                let f = t(&[i as f64 * 0.25; 3]);
                val(&gan_loss_single(&f, &f, Side::Generator, mode).unwrap())
            })
            .collect();
        assert!(sweep.windows(2).all(|w| w[1] < w[0]), "{mode:?}: {sweep:?}");
    }
}

#[test]
fn least_squares_matches_hand_values() {
    let (r, f) = (t(&[0.5, 2.0]), t(&[1.0, -1.0]));
    let d = val(&gan_loss_single(&r, &f, Side::Discriminator, GanMode::LeastSquares).unwrap());
    assert!((d - (0.625 + 1.0)).abs() < 1e-12);
    let g = val(&gan_loss_single(&r, &f, Side::Generator, GanMode::LeastSquares).unwrap());
    assert!((g - 2.0).abs() < 1e-12);
}

#[test]
fn log_loss_matches_softplus_oracle_on_mixed_logits() {
    let (rv, fv) = ([1.5, -0.3, 4.0, -7.0], [-2.0, 0.7, 9.0, -0.1]);
    let d = val(&gan_loss_single(&t(&rv), &t(&fv), Side::Discriminator, GanMode::Log).unwrap());
    let oracle = mean(&rv.map(|x| softplus(-x))) + mean(&fv.map(softplus));
    assert!((d - oracle).abs() < 1e-12);
}

struct Pair {
    d: MultiscaleDiscriminator,
    g: Generator,
    store: ParamStore,
    x: [Tensor; 2],
    y: [Tensor; 2],
}

fn pair_setup(seed: u64) -> Pair {
    let arch = small_arch();
    let mut store = ParamStore::new(seed, DType::F64);
    let g = Generator::new(&mut store, &arch).unwrap();
    let d = MultiscaleDiscriminator::new(&mut store, &arch, 12).unwrap();
    let img = |s| random_image(seed * 10 + s, 1, 3, 32, 64, DType::F64);
    Pair {
        d,
        g,
        store,
        x: [img(1), img(2)],
        y: [img(3), img(4)],
    }
}

impl Pair {
    fn fakes(&self) -> [Tensor; 2] {
        let z = self.x[0].zeros_like().unwrap();
        let f0 = self.g.forward(&self.x[0], &z).unwrap();
        let f1 = self.g.forward(&self.x[1], &f0).unwrap();
        [f0, f1]
    }
}

#[test]
fn temporal_loss_on_identical_pairs_is_the_equal_logit_value() {
    let p = pair_setup(1);
    let loss = gan_loss_temporal(
        &p.d,
        (&p.x[0], &p.x[1]),
        (&p.y[0], &p.y[1]),
        (&p.y[0], &p.y[1]),
        Side::Discriminator,
        GanMode::Log,
    )
    .unwrap();
    let input = Tensor::cat(&[&p.x[0], &p.x[1], &p.y[0], &p.y[1]], 1).unwrap();
    let oracle: f64 = p
        .d
        .forward(&input)
        .unwrap()
        .iter()
        .map(|o| {
            let l = flat(&o.logits);
            mean(&l.iter().map(|&v| softplus(-v)).collect::<Vec<_>>()) + mean(&l.iter().map(|&v| softplus(v)).collect::<Vec<_>>())
        })
        .sum();
    assert!((val(&loss) - oracle).abs() < 1e-10);
}

#[test]
fn temporal_loss_matches_manual_composition() {
    let p = pair_setup(2);
    let f = p.fakes();
    for side in [Side::Generator, Side::Discriminator] {
        let loss = gan_loss_temporal(&p.d, (&p.x[0], &p.x[1]), (&p.y[0], &p.y[1]), (&f[0], &f[1]), side, GanMode::Log).unwrap();
        let real = p.d.forward(&Tensor::cat(&[&p.x[0], &p.x[1], &p.y[0], &p.y[1]], 1).unwrap()).unwrap();
        let fake = p.d.forward(&Tensor::cat(&[&p.x[0], &p.x[1], &f[0], &f[1]], 1).unwrap()).unwrap();
        let manual: f64 = real
            .iter()
            .zip(&fake)
            .map(|(r, k)| val(&gan_loss_single(&r.logits, &k.logits, side, GanMode::Log).unwrap()))
            .sum();
        assert!((val(&loss) - manual).abs() < 1e-10, "{side:?}");
    }
}

#[test]
fn temporal_generator_loss_reaches_generator_weights() {
    let p = pair_setup(3);
    let f = p.fakes();
    let loss = gan_loss_temporal(&p.d, (&p.x[0], &p.x[1]), (&p.y[0], &p.y[1]), (&f[0], &f[1]), Side::Generator, GanMode::Log).unwrap();
    let grads = loss.backward().unwrap();
    for v in p.store.vars_with_prefix("g.") {
        let g = grads.get(&v).expect("generator weight in graph");
        assert!(flat(g).iter().any(|x| *x != 0.0));
    }
    // The discriminator side sees detached fakes.
    let loss_d = gan_loss_temporal(&p.d, (&p.x[0], &p.x[1]), (&p.y[0], &p.y[1]), (&f[0], &f[1]), Side::Discriminator, GanMode::Log).unwrap();
    let grads = loss_d.backward().unwrap();
    assert!(p.store.vars_with_prefix("g.").iter().all(|v| grads.get(v).is_none()));
}

fn features(n_scales: usize, n_layers: usize, fill: f64) -> Vec<Vec<Tensor>> {
    (0..n_scales)
        .map(|s| {
            (0..n_layers)
                .map(|l| Tensor::full(fill, (1, 2 + l, 5 - s, 3), &Device::Cpu).unwrap())
                .collect()
        })
        .collect()
}

#[test]
fn feature_matching_identity_and_unit_offset() {
    let a = features(1, 4, 0.3);
    assert_eq!(val(&feature_matching_loss(&a, &a).unwrap()), 0.0);
    let mut b = a.clone();
    b[0][2] = (&b[0][2] + 1.0).unwrap();
    assert!((val(&feature_matching_loss(&a, &b).unwrap()) - 0.25).abs() < 1e-12);
    // Scales add.
    let a2 = features(2, 4, 0.3);
    let mut b2 = a2.clone();
    b2[0][2] = (&b2[0][2] + 1.0).unwrap();
    b2[1][0] = (&b2[1][0] - 1.0).unwrap();
    assert!((val(&feature_matching_loss(&a2, &b2).unwrap()) - 0.5).abs() < 1e-12);
}

#[test]
fn feature_matching_rejects_mismatched_nesting() {
    assert!(feature_matching_loss(&features(2, 3, 0.0), &features(1, 3, 0.0)).is_err());
    assert!(feature_matching_loss(&features(1, 3, 0.0), &features(1, 2, 0.0)).is_err());
    let mut b = features(1, 3, 0.0);
    b[0][1] = Tensor::zeros((1, 9, 1, 1), DType::F64, &Device::Cpu).unwrap();
    assert!(feature_matching_loss(&features(1, 3, 0.0), &b).is_err());
}

fn vgg() -> Vgg19 {
    Vgg19::random(5, 8, DType::F64).unwrap()
}

#[test]
fn perceptual_identity_and_separation() {
    let v = vgg();
    let gt = random_image(1, 1, 3, 32, 32, DType::F64);
    assert_eq!(val(&perceptual_loss(&gt, &gt, &v).unwrap()), 0.0);
    let noise = (random_image(2, 1, 3, 32, 32, DType::F64) * (0.1 * 3f64.sqrt())).unwrap();
    let pred = (&gt + noise).unwrap();
    assert!(val(&perceptual_loss(&pred, &gt, &v).unwrap()) > 0.0);
    let other = random_image(3, 1, 3, 16, 32, DType::F64);
    assert!(perceptual_loss(&other, &gt, &v).is_err());
}

#[test]
fn perceptual_gradient_matches_finite_differences() {
    let v = vgg();
    let gt = random_image(4, 1, 3, 32, 32, DType::F64);
    let base = flat(&random_image(5, 1, 3, 32, 32, DType::F64));
    let loss_at = |data: &[f64]| {
        let x = Tensor::from_vec(data.to_vec(), (1, 3, 32, 32), &Device::Cpu).unwrap();
        val(&perceptual_loss(&x, &gt, &v).unwrap())
    };
    let var = candle_core::Var::from_tensor(&Tensor::from_vec(base.clone(), (1, 3, 32, 32), &Device::Cpu).unwrap()).unwrap();
    let grads = perceptual_loss(var.as_tensor(), &gt, &v).unwrap().backward().unwrap();
    let analytic = flat(grads.get(&var).unwrap());
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(6);
    let h = 1e-6;
    for _ in 0..10 {
        let i = rand::Rng::gen_range(&mut rng, 0..base.len());
        let mut up = base.clone();
        up[i] += h;
        let mut down = base.clone();
        down[i] -= h;
        let numeric = (loss_at(&up) - loss_at(&down)) / (2.0 * h);
        let rel = (numeric - analytic[i]).abs() / numeric.abs().max(analytic[i].abs()).max(1e-12);
        assert!(rel < 1e-3, "pixel {i}: analytic {} numeric {numeric}", analytic[i]);
    }
}

struct Objective {
    p: Pair,
    v: Vgg19,
    batch: FrameBatch,
}

fn objective_setup() -> Objective {
    let p = pair_setup(4);
    let fake = p.fakes().to_vec();
    let batch = FrameBatch {
        x: p.x.to_vec(),
        y: p.y.to_vec(),
        fake,
    };
    Objective { p, v: vgg(), batch }
}

#[test]
fn generator_objective_weight_isolation() {
    let o = objective_setup();
    let only_gan = LossWeights {
        lambda_gan: 1.0,
        ..LossWeights::zero()
    };
    let (total, b) = generator_objective_full(&o.p.d, &o.batch, &only_gan, 0.0, &o.v).unwrap();
    let temporal = gan_loss_temporal(
        &o.p.d,
        (&o.batch.x[0], &o.batch.x[1]),
        (&o.batch.y[0], &o.batch.y[1]),
        (&o.batch.fake[0], &o.batch.fake[1]),
        Side::Generator,
        GanMode::Log,
    )
    .unwrap();
    assert_eq!(val(&total), val(&temporal));
    assert_eq!((b.feature_matching, b.perceptual), (0.0, 0.0));
    assert_eq!(b.total, b.gan);

    let (total, b) = generator_objective_full(&o.p.d, &o.batch, &LossWeights::zero(), 0.0, &o.v).unwrap();
    assert_eq!(val(&total), 0.0);
    assert_eq!(b, GeneratorBreakdown::default());
}

#[test]
fn generator_objective_is_the_weighted_sum_of_its_terms() {
    let o = objective_setup();
    let w = LossWeights::default();
    let (total, b) = generator_objective_full(&o.p.d, &o.batch, &w, w.lambda_p_global, &o.v).unwrap();
    let real = o.p.d.forward(&Tensor::cat(&[&o.batch.x[0], &o.batch.x[1], &o.batch.y[0], &o.batch.y[1]], 1).unwrap()).unwrap();
    let fake = o.p.d.forward(&Tensor::cat(&[&o.batch.x[0], &o.batch.x[1], &o.batch.fake[0], &o.batch.fake[1]], 1).unwrap()).unwrap();
    let gan = val(&gan_loss_multiscale(&real, &fake, Side::Generator, GanMode::Log).unwrap());
    let fm = val(&feature_matching_loss(&features_of(&real), &features_of(&fake)).unwrap());
    let p: f64 = (0..2)
        .map(|i| val(&perceptual_loss(&o.batch.fake[i], &o.batch.y[i], &o.v).unwrap()))
        .sum();
    let oracle = gan + 10.0 * fm + 5.0 * p;
    assert!((val(&total) - oracle).abs() < 1e-9 * oracle.abs());
    assert!((b.gan - gan).abs() < 1e-12);
    assert!((b.feature_matching - 10.0 * fm).abs() < 1e-9);
    assert!((b.perceptual - 5.0 * p).abs() < 1e-9);
    assert!((b.total - oracle).abs() < 1e-9 * oracle.abs());
}

#[test]
fn generator_objective_handles_single_frames() {
    let arch = small_arch();
    let mut store = ParamStore::new(9, DType::F64);
    let d = MultiscaleDiscriminator::new(&mut store, &arch, 6).unwrap();
    let img = |s| random_image(s, 1, 3, 32, 64, DType::F64);
    let batch = FrameBatch {
        x: vec![img(1)],
        y: vec![img(2)],
        fake: vec![img(3)],
    };
    let v = vgg();
    let only_p = LossWeights::zero();
    let (total, _) = generator_objective_full(&d, &batch, &only_p, 2.0, &v).unwrap();
    let p = val(&perceptual_loss(&batch.fake[0], &batch.y[0], &v).unwrap());
    assert!((val(&total) - 2.0 * p).abs() < 1e-12);
}

fn face_setup() -> (NLayerDiscriminator, FaceBatch, Vgg19) {
    let mut store = ParamStore::new(6, DType::F64);
    let df = NLayerDiscriminator::new(&mut store, "df", 6, 16, 3).unwrap();
    let img = |s| random_image(s, 2, 3, 16, 16, DType::F64);
    let batch = FaceBatch {
        x: img(1),
        y: img(2),
        generated: img(3),
        residual: (img(4) * 0.1).unwrap(),
    };
    (df, batch, vgg())
}

#[test]
fn face_objective_isolation_zero_and_composition() {
    let (df, batch, v) = face_setup();
    let refined = (&batch.generated + &batch.residual).unwrap();
    let real = df.forward(&Tensor::cat(&[&batch.x, &batch.y], 1).unwrap()).unwrap();
    let fake = df.forward(&Tensor::cat(&[&batch.x, &refined], 1).unwrap()).unwrap();
    let gan = val(&gan_loss_single(&real.logits, &fake.logits, Side::Generator, GanMode::Log).unwrap());
    let p = val(&perceptual_loss(&refined, &batch.y, &v).unwrap());

    let only_gan = LossWeights {
        lambda_gan: 1.0,
        ..LossWeights::zero()
    };
    let (total, b) = face_objective(&df, &batch, &only_gan, &v).unwrap();
    assert_eq!(val(&total), gan);
    assert_eq!(b.perceptual, 0.0);

    let (total, b) = face_objective(&df, &batch, &LossWeights::zero(), &v).unwrap();
    assert_eq!(val(&total), 0.0);
    assert_eq!(b, GeneratorBreakdown::default());

    let (total, b) = face_objective(&df, &batch, &LossWeights::default(), &v).unwrap();
    let oracle = gan + 10.0 * p;
    assert!((val(&total) - oracle).abs() < 1e-9 * oracle);
    assert!((b.total - oracle).abs() < 1e-9 * oracle);
}

#[test]
fn face_discriminator_ignores_the_residual_graph() {
    let (df, batch, _) = face_setup();
    let r = candle_core::Var::from_tensor(&batch.residual).unwrap();
    let b = FaceBatch {
        residual: r.as_tensor().clone(),
        ..batch
    };
    let loss = face_discriminator_objective(&df, &b, GanMode::Log).unwrap();
    assert!(val(&loss) > 0.0);
    assert!(loss.backward().unwrap().get(&r).is_none());
}

#[test]
fn weights_validate() {
    assert!(LossWeights::default().validate().is_ok());
    let bad = LossWeights {
        lambda_fm: -1.0,
        ..LossWeights::default()
    };
    assert!(bad.validate().is_err());
    let nan = LossWeights {
        lambda_p_face: f64::NAN,
        ..LossWeights::default()
    };
    assert!(nan.validate().is_err());
}

#[test]
fn multiscale_sum_requires_matching_scales() {
    let o = |x: f64| DiscOutput {
        logits: t(&[x]),
        features: vec![],
    };
    let sum = gan_loss_multiscale(&[o(0.0), o(1.0)], &[o(0.0), o(-1.0)], Side::Discriminator, GanMode::Log).unwrap();
    let oracle = 2.0 * softplus(0.0) + softplus(-1.0) + softplus(-1.0);
    assert!((val(&sum) - oracle).abs() < 1e-12);
    assert!(gan_loss_multiscale(&[o(0.0)], &[], Side::Generator, GanMode::Log).is_err());
}

proptest! {
    #[test]
    fn gan_losses_are_finite_and_non_negative(
        real in proptest::collection::vec(-80.0f64..80.0, 1..16),
        fake in proptest::collection::vec(-80.0f64..80.0, 1..16),
        ls in any::<bool>(),
    ) {
        let mode = if ls { GanMode::LeastSquares } else { GanMode::Log };
        for side in [Side::Generator, Side::Discriminator] {
            let l = val(&gan_loss_single(&t(&real), &t(&fake), side, mode).unwrap());
            prop_assert!(l.is_finite() && l >= 0.0);
        }
    }

    #[test]
    fn feature_matching_is_symmetric(a in -3.0f64..3.0, b in -3.0f64..3.0, layers in 1usize..5) {
        let fa = features(2, layers, a);
        let fb = features(2, layers, b);
        let ab = val(&feature_matching_loss(&fa, &fb).unwrap());
        let ba = val(&feature_matching_loss(&fb, &fa).unwrap());
        prop_assert_eq!(ab, ba);
        prop_assert!((ab - 2.0 * (a - b).abs()).abs() < 1e-12);
    }
}

#[allow(dead_code)]
fn _extractor_is_object_safe(v: &Vgg19) -> &dyn FeatureExtractor {
    v
}
