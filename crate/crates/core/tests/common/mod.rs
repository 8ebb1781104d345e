#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tcnn::autograd::{backward, mul, sum, Var};
use tcnn::data::{generate_video, SceneConfig};
use tcnn::mask::{ClassTable, SegMask};
use tcnn::{Result, Tensor};

pub mod grad_suite;
pub mod metric_oracle;

pub const FD_STEP: f64 = 1e-6;
pub const GRAD_TOL: f64 = 1e-5;
pub const INSTANCES: u64 = 20;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::uniform(shape, -1.0, 1.0, rng)
}

/// Uniform values whose magnitude stays at least `gap` away from zero.
pub fn away_from_zero(shape: &[usize], gap: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let mut t = uniform(shape, rng);
    for v in t.data_mut() {
        *v = v.signum() * (gap + v.abs());
    }
    t
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `||a - b|| / max(||a||, ||b||, floor)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1e-3)
}

/// Collapses any output to a scalar with fixed random weights so the check
/// covers the full Jacobian rather than just its column sums.
fn probe(out: &Var) -> Result<Var> {
    if out.value().is_scalar() {
        return Ok(out.clone());
    }
    let mut r = rng(0x5eed ^ out.value().numel() as u64);
    let w = Var::constant(Tensor::uniform(out.shape(), 0.5, 1.5, &mut r));
    Ok(sum(&mul(out, &w)?))
}

fn probe_value(f: &dyn Fn(&[Var]) -> Result<Var>, inputs: &[Tensor]) -> f64 {
    let vars: Vec<Var> = inputs.iter().cloned().map(Var::constant).collect();
    probe(&f(&vars).expect("forward")).expect("probe").item()
}

/// Largest relative error between reverse-mode and central-difference
/// gradients over every input of `f`.
pub fn gradient_error(inputs: &[Tensor], f: &dyn Fn(&[Var]) -> Result<Var>) -> f64 {
    let vars: Vec<Var> = inputs.iter().cloned().map(Var::input).collect();
    let loss = probe(&f(&vars).expect("forward")).expect("probe");
    let grads = backward(&loss).expect("backward");
    let mut worst: f64 = 0.0;
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads
            .wrt(var)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; inputs[k].numel()]);
        let mut numeric = vec![0.0; inputs[k].numel()];
        let mut shifted = inputs.to_vec();
        for (i, slot) in numeric.iter_mut().enumerate() {
            let x0 = inputs[k].data()[i];
            shifted[k].data_mut()[i] = x0 + FD_STEP;
            let up = probe_value(f, &shifted);
            shifted[k].data_mut()[i] = x0 - FD_STEP;
            let down = probe_value(f, &shifted);
            shifted[k].data_mut()[i] = x0;
            *slot = (up - down) / (2.0 * FD_STEP);
        }
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    worst
}

/// Runs `INSTANCES` randomized gradient checks and returns the worst error.
pub fn check_instances(
    name: &str,
    make: impl Fn(&mut ChaCha8Rng) -> Vec<Tensor>,
    f: &dyn Fn(&[Var]) -> Result<Var>,
) -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..INSTANCES {
        let mut r = rng(seed * 7919 + name.len() as u64);
        let inputs = make(&mut r);
        let err = gradient_error(&inputs, f);
        assert!(
            err <= GRAD_TOL,
            "{name}: instance {seed} relative error {err:e}"
        );
        worst = worst.max(err);
    }
    worst
}

pub fn small_scene(seed: u64) -> SceneConfig {
    SceneConfig {
        seed,
        ..SceneConfig::default()
    }
}

/// Dense masks of one generated video.
pub fn video_masks(seed: u64, index: u64) -> Vec<SegMask> {
    generate_video(&small_scene(seed), index).expect("generate").masks
}

pub fn random_mask(h: usize, w: usize, classes: &ClassTable, rng: &mut ChaCha8Rng) -> SegMask {
    use rand::Rng;
    let grid = (0..h * w)
        .map(|_| rng.random_range(0..classes.len()) as u8)
        .collect();
    SegMask::new(h, w, grid, classes.clone()).expect("mask")
}
