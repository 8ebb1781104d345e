mod common;

use common::{rng, uniform};
use tcnn::autograd::*;
use tcnn::optim::sgd_momentum_step;
use tcnn::param::{Module, Parameter};
use tcnn::{Tensor, TcnnError};

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

fn c(x: Tensor) -> Var {
    Var::constant(x)
}

#[test]
fn identity_kernel_preserves_input() {
    let x = t(&[1, 1, 3, 3], &[1., 2., 3., 4., 5., 6., 7., 8., 9.]);
    let mut k = vec![0.0; 9];
    k[4] = 1.0;
    let y = conv2d(&c(x.clone()), &c(t(&[1, 1, 3, 3], &k)), &c(t(&[1], &[0.0])), 1).unwrap();
    assert_eq!(y.value(), &x);
}

#[test]
fn strided_corner_sees_two_by_two_overlap() {
    let y = conv2d(
        &c(Tensor::full(&[1, 1, 4, 4], 1.0)),
        &c(Tensor::full(&[1, 1, 3, 3], 1.0)),
        &c(t(&[1], &[0.0])),
        2,
    )
    .unwrap();
    assert_eq!(y.shape(), &[1, 1, 2, 2]);
    assert_eq!(y.value().data()[0], 4.0);
}

#[test]
fn conv_output_size_is_ceil_of_stride() {
    let y = conv2d(
        &c(Tensor::zeros(&[1, 2, 5, 7])),
        &c(Tensor::zeros(&[3, 2, 3, 3])),
        &c(Tensor::zeros(&[3])),
        2,
    )
    .unwrap();
    assert_eq!(y.shape(), &[1, 3, 3, 4]);
}

#[test]
fn conv_channel_mismatch_is_rejected() {
    let r = conv2d(
        &c(Tensor::zeros(&[1, 2, 4, 4])),
        &c(Tensor::zeros(&[1, 3, 3, 3])),
        &c(Tensor::zeros(&[1])),
        1,
    );
    assert!(matches!(r, Err(TcnnError::InvalidArgument(_))));
    let r = conv_transpose2d(
        &c(Tensor::zeros(&[1, 2, 4, 4])),
        &c(Tensor::zeros(&[3, 1, 3, 3])),
        &c(Tensor::zeros(&[1])),
        2,
    );
    assert!(matches!(r, Err(TcnnError::InvalidArgument(_))));
}

#[test]
fn delta_kernel_transpose_places_values_on_even_grid() {
    let mut k = vec![0.0; 9];
    k[4] = 1.0;
    let y = conv_transpose2d(
        &c(t(&[1, 1, 2, 2], &[1., 2., 3., 4.])),
        &c(t(&[1, 1, 3, 3], &k)),
        &c(t(&[1], &[0.0])),
        2,
    )
    .unwrap();
    assert_eq!(y.shape(), &[1, 1, 4, 4]);
    #[rustfmt::skip]
    let expected = [1., 0., 2., 0.,  0., 0., 0., 0.,  3., 0., 4., 0.,  0., 0., 0., 0.];
    assert_eq!(y.value().data(), &expected);
}

#[test]
fn strided_conv_then_transpose_restores_shape() {
    let mut r = rng(1);
    let x = c(uniform(&[1, 2, 8, 6], &mut r));
    let down = conv2d(&x, &c(uniform(&[4, 2, 3, 3], &mut r)), &c(Tensor::zeros(&[4])), 2).unwrap();
    let up = conv_transpose2d(&down, &c(uniform(&[4, 2, 3, 3], &mut r)), &c(Tensor::zeros(&[2])), 2)
        .unwrap();
    assert_eq!(up.shape(), x.shape());
}

#[test]
fn linear_identity_and_bias_only() {
    let x = t(&[2, 3], &[1., -2., 3., 0.5, 0., -1.]);
    let mut eye = vec![0.0; 9];
    for i in 0..3 {
        eye[i * 3 + i] = 1.0;
    }
    let y = linear(&c(x.clone()), &c(t(&[3, 3], &eye)), &c(Tensor::zeros(&[3]))).unwrap();
    assert_eq!(y.value(), &x);
    let b = t(&[2], &[0.25, -4.0]);
    let y = linear(&c(x), &c(Tensor::zeros(&[3, 2])), &c(b)).unwrap();
    assert_eq!(y.value().data(), &[0.25, -4.0, 0.25, -4.0]);
    let bad = linear(&c(Tensor::zeros(&[2, 3])), &c(Tensor::zeros(&[4, 2])), &c(Tensor::zeros(&[2])));
    assert!(matches!(bad, Err(TcnnError::InvalidArgument(_))));
}

#[test]
fn small_elementwise_examples() {
    let y = relu(&c(t(&[3], &[-1.0, 0.0, 2.0])));
    assert_eq!(y.value().data(), &[0.0, 0.0, 2.0]);
    let v = c(t(&[4], &[0.3, -1.0, 2.5, 7.0]));
    assert_eq!(l2_distance(&v, &v).unwrap().item(), 0.0);
    assert_eq!(mse(&v, &v).unwrap().item(), 0.0);
    assert!(matches!(
        add(&v, &c(Tensor::zeros(&[3]))),
        Err(TcnnError::InvalidArgument(_))
    ));
}

#[test]
fn l2_gradient_at_coincident_points_is_zero() {
    let a = Var::input(t(&[3], &[1.0, 2.0, 3.0]));
    let b = Var::input(t(&[3], &[1.0, 2.0, 3.0]));
    let g = backward(&l2_distance(&a, &b).unwrap()).unwrap();
    assert_eq!(g.wrt(&a).unwrap(), &[0.0; 3]);
    assert_eq!(g.wrt(&b).unwrap(), &[0.0; 3]);
}

#[test]
fn softmax_is_a_distribution_at_every_pixel() {
    let mut r = rng(2);
    let x = Tensor::uniform(&[2, 5, 3, 4], -30.0, 30.0, &mut r);
    let p = softmax_channels(&c(x)).unwrap();
    let d = p.value().data();
    for b in 0..2 {
        for px in 0..12 {
            let s: f64 = (0..5).map(|k| d[(b * 5 + k) * 12 + px]).sum();
            assert!((s - 1.0).abs() <= 1e-12);
        }
    }
    assert!(d.iter().all(|&v| v >= 0.0));
}

struct Single(Parameter);

impl Module for Single {
    fn parameters(&self) -> Vec<&Parameter> {
        vec![&self.0]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.0]
    }
}

#[test]
fn repeated_backward_doubles_accumulated_gradient() {
    let mut m = Single(Parameter::new("w", t(&[2], &[0.5, -1.5])));
    let x = c(t(&[2], &[3.0, 4.0]));
    let mut once = Vec::new();
    for _ in 0..2 {
        let loss = sum(&mul(&m.0.var(), &x).unwrap());
        m.accumulate_grads(&backward(&loss).unwrap());
        if once.is_empty() {
            once = m.0.grad().unwrap().to_vec();
        }
    }
    let twice: Vec<f64> = once.iter().map(|v| 2.0 * v).collect();
    assert_eq!(m.0.grad().unwrap(), twice.as_slice());
}

fn scalar_param(v: f64) -> Single {
    Single(Parameter::new("p", t(&[1], &[v])))
}

/// One optimizer step driven by the gradient of `grad * p`.
fn step_with_grad(m: &mut Single, grad: f64, lr: f64, momentum: f64) {
    let loss = sum(&scale(&m.0.var(), grad));
    m.accumulate_grads(&backward(&loss).unwrap());
    sgd_momentum_step(&mut m.parameters_mut(), lr, momentum).unwrap();
}

#[test]
fn plain_step_example() {
    let mut p = scalar_param(1.0);
    step_with_grad(&mut p, 1.0, 0.1, 0.0);
    assert_eq!(p.0.value().data(), &[0.9]);
    assert!(p.0.grad().is_none());
}

#[test]
fn momentum_recurrence_unrolled() {
    let mut p = scalar_param(0.0);
    step_with_grad(&mut p, 1.0, 1.0, 0.9);
    step_with_grad(&mut p, 1.0, 1.0, 0.9);
    assert!((p.0.value().data()[0] + 2.9).abs() < 1e-15);
}

#[test]
fn quadratic_converges() {
    let mut p = scalar_param(0.0);
    for _ in 0..200 {
        let grad = 2.0 * (p.0.value().data()[0] - 3.0);
        step_with_grad(&mut p, grad, 0.1, 0.0);
    }
    assert!((p.0.value().data()[0] - 3.0).abs() < 1e-6);
}

#[test]
fn missing_gradient_is_a_state_error() {
    let mut p = Parameter::new("p", t(&[1], &[1.0]));
    let before = p.value().clone();
    assert!(matches!(
        sgd_momentum_step(&mut [&mut p], 0.1, 0.9),
        Err(TcnnError::State(_))
    ));
    assert_eq!(p.value(), &before);
}

#[test]
fn frozen_parameters_are_not_updated() {
    let mut p = Parameter::new("p", t(&[1], &[1.0]));
    p.set_frozen(true);
    assert!(!p.var().requires_grad());
    sgd_momentum_step(&mut [&mut p], 0.1, 0.9).unwrap();
    assert_eq!(p.value().data(), &[1.0]);
    assert_eq!(p.velocity(), &[0.0]);
}

#[test]
fn forward_is_bitwise_deterministic() {
    let mut r = rng(3);
    let x = uniform(&[2, 3, 8, 8], &mut r);
    let w = uniform(&[4, 3, 3, 3], &mut r);
    let b = uniform(&[4], &mut r);
    let run = || conv2d(&c(x.clone()), &c(w.clone()), &c(b.clone()), 2).unwrap().value().clone();
    let (a, b2) = (run(), run());
    assert!(a.data().iter().zip(b2.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
}
