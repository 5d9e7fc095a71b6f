#![allow(dead_code)]

use candle_core::{DType, Device, Tensor};
use dance_nets::ArchConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Toy preset shrunk to 64×32 so unit-level runs stay fast.
pub fn small_arch() -> ArchConfig {
    ArchConfig {
        image_size: (64, 32),
        face_size: 16,
        ..ArchConfig::toy()
    }
}

pub fn random_image(seed: u64, n: usize, c: usize, h: usize, w: usize, dtype: DType) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..n * c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_vec(data, (n, c, h, w), &Device::Cpu)
        .unwrap()
        .to_dtype(dtype)
        .unwrap()
}

pub fn conv_params(cin: usize, cout: usize, k: usize) -> usize {
    cin * cout * k * k + cout
}

pub fn global_generator_params(cin: usize, cout: usize, ngf: usize, n_down: usize, n_blocks: usize, head: bool) -> usize {
    let mut total = conv_params(cin, ngf, 7);
    for i in 0..n_down {
        total += conv_params(ngf << i, ngf << (i + 1), 3);
    }
    total += n_blocks * 2 * conv_params(ngf << n_down, ngf << n_down, 3);
    for i in 0..n_down {
        total += conv_params(ngf << (n_down - i), ngf << (n_down - i - 1), 3);
    }
    if head {
        total += conv_params(ngf, cout, 7);
    }
    total
}

/// Trunk parameters and the width of its last block.
pub fn trunk_params(cin: usize, ndf: usize, n_layers: usize) -> (usize, usize) {
    let mut total = conv_params(cin, ndf, 4);
    let mut nf = ndf;
    for _ in 0..n_layers {
        let next = (nf * 2).min(512);
        total += conv_params(nf, next, 4);
        nf = next;
    }
    (total, nf)
}

pub fn patch_disc_params(cin: usize, ndf: usize, n_layers: usize) -> usize {
    let (t, nf) = trunk_params(cin, ndf, n_layers);
    t + conv_params(nf, 1, 4)
}
