//! Finite-difference checks of every differentiable op and loss.

use super::{away_from_zero, check_instances, rng, uniform};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tcnn::autograd::*;
use tcnn::losses::{
    combined_loss, consistency_loss, global_loss, seg_loss, sequence_consistency, LossWeights,
};
use tcnn::mask::{ClassTable, SegMask};
use tcnn::nn::{Autoencoder, ConvLstmCell};
use tcnn::param::Module;
use tcnn::Tensor;

fn dims(r: &mut ChaCha8Rng) -> Vec<usize> {
    vec![
        r.random_range(1..3),
        r.random_range(1..4),
        r.random_range(2..5),
        r.random_range(2..5),
    ]
}

pub fn elementwise_binary_ops() {
    let pair = |r: &mut ChaCha8Rng| {
        let s = dims(r);
        vec![uniform(&s, r), uniform(&s, r)]
    };
    check_instances("add", pair, &|v| add(&v[0], &v[1]));
    check_instances("sub", pair, &|v| sub(&v[0], &v[1]));
    check_instances("mul", pair, &|v| mul(&v[0], &v[1]));
}

pub fn elementwise_unary_ops() {
    let one = |r: &mut ChaCha8Rng| {
        let s = dims(r);
        vec![uniform(&s, r)]
    };
    check_instances(
        "relu",
        |r| {
            let s = dims(r);
            vec![away_from_zero(&s, 0.01, r)]
        },
        &|v| Ok(relu(&v[0])),
    );
    check_instances("sigmoid", one, &|v| Ok(sigmoid(&v[0])));
    check_instances("tanh", one, &|v| Ok(tanh(&v[0])));
    check_instances("scale", one, &|v| Ok(scale(&v[0], -1.7)));
    check_instances(
        "broadcast_scalar",
        |r| vec![uniform(&[1], r)],
        &|v| Ok(mul(&broadcast_scalar(&v[0], &[2, 3]), &Var::constant(Tensor::full(&[2, 3], 0.3)))?),
    );
}

pub fn reductions_and_shape_ops() {
    let one = |r: &mut ChaCha8Rng| {
        let s = dims(r);
        vec![uniform(&s, r)]
    };
    check_instances("sum", one, &|v| Ok(sum(&v[0])));
    check_instances("mean", one, &|v| Ok(mean(&v[0])));
    check_instances("reshape", one, &|v| {
        let n = v[0].value().numel();
        reshape(&v[0], &[n])
    });
    check_instances(
        "concat_channels",
        |r| {
            let (n, h, w) = (r.random_range(1..3), r.random_range(2..4), r.random_range(2..4));
            vec![
                uniform(&[n, r.random_range(1..3), h, w], r),
                uniform(&[n, r.random_range(1..3), h, w], r),
            ]
        },
        &|v| concat_channels(&[&v[0], &v[1]]),
    );
    check_instances(
        "slice_channels",
        |r| vec![uniform(&[2, 4, 3, 3], r)],
        &|v| slice_channels(&v[0], 1, 2),
    );
    check_instances(
        "select_row",
        |r| vec![uniform(&[3, r.random_range(2..6)], r)],
        &|v| select_row(&v[0], 2),
    );
}

pub fn softmax_and_cross_entropy() {
    check_instances(
        "softmax_channels",
        |r| {
            let s = dims(r);
            vec![uniform(&s, r)]
        },
        &|v| softmax_channels(&v[0]),
    );
    for seed in 0..super::INSTANCES {
        let mut r = rng(seed);
        let s = [2, 4, 3, 3];
        let targets: Vec<usize> = (0..18).map(|_| r.random_range(0..4)).collect();
        let valid: Vec<bool> = (0..18).map(|i| i % 5 != 0).collect();
        let x = uniform(&s, &mut r);
        let err = super::gradient_error(&[x], &|v| {
            cross_entropy_channels(&v[0], &targets, &valid)
        });
        assert!(err <= super::GRAD_TOL, "cross_entropy {seed}: {err:e}");
    }
}

pub fn distances() {
    let pair = |r: &mut ChaCha8Rng| {
        let n = r.random_range(2..12);
        vec![uniform(&[n], r), uniform(&[n], r)]
    };
    check_instances("l2_distance", pair, &|v| l2_distance(&v[0], &v[1]));
    check_instances("mse", pair, &|v| mse(&v[0], &v[1]));
}

pub fn convolutions_and_linear() {
    for stride in [1, 2] {
        check_instances(
            &format!("conv2d_s{stride}"),
            |r| {
                let (c, f) = (r.random_range(1..4), r.random_range(1..4));
                let (h, w) = (r.random_range(3..7), r.random_range(3..7));
                vec![uniform(&[2, c, h, w], r), uniform(&[f, c, 3, 3], r), uniform(&[f], r)]
            },
            &move |v| conv2d(&v[0], &v[1], &v[2], stride),
        );
        check_instances(
            &format!("conv_transpose2d_s{stride}"),
            |r| {
                let (c, f) = (r.random_range(1..4), r.random_range(1..4));
                let (h, w) = (r.random_range(2..5), r.random_range(2..5));
                vec![uniform(&[2, c, h, w], r), uniform(&[c, f, 3, 3], r), uniform(&[f], r)]
            },
            &move |v| conv_transpose2d(&v[0], &v[1], &v[2], stride),
        );
    }
    check_instances(
        "linear",
        |r| {
            let (n, d, m) = (r.random_range(1..4), r.random_range(1..6), r.random_range(1..6));
            vec![uniform(&[n, d], r), uniform(&[d, m], r), uniform(&[m], r)]
        },
        &|v| linear(&v[0], &v[1], &v[2]),
    );
}

pub fn two_layer_toy_network() {
    check_instances(
        "toy_net",
        |r| {
            vec![
                uniform(&[2, 2, 4, 4], r),
                uniform(&[3, 2, 3, 3], r),
                uniform(&[3], r),
                uniform(&[12, 2], r),
                uniform(&[2], r),
            ]
        },
        &|v| {
            let h = relu(&conv2d(&v[0], &v[1], &v[2], 2)?);
            let flat = reshape(&h, &[2, 12])?;
            let logits = linear(&flat, &v[3], &v[4])?;
            mse(&logits, &Var::constant(Tensor::full(&[2, 2], 0.25)))
        },
    );
}

pub fn convlstm_step() {
    let mut r = rng(11);
    let cell = ConvLstmCell::new("t", 2, 3, &mut r);
    check_instances(
        "convlstm",
        |r| vec![uniform(&[1, 2, 3, 3], r), uniform(&[1, 3, 3, 3], r), uniform(&[1, 3, 3, 3], r)],
        &|v| {
            let s = cell.step(
                &v[0],
                &tcnn::nn::LstmState {
                    hidden: v[1].clone(),
                    cell: v[2].clone(),
                },
            )?;
            add(&s.hidden, &s.cell)
        },
    );
}

fn classes3() -> ClassTable {
    ClassTable::new(vec![
        tcnn::mask::ClassKind::Background,
        tcnn::mask::ClassKind::Anatomy,
        tcnn::mask::ClassKind::Instrument,
    ])
    .unwrap()
}

fn random_masks(n: usize, h: usize, w: usize, classes: &ClassTable, r: &mut ChaCha8Rng) -> Vec<SegMask> {
    (0..n).map(|_| super::random_mask(h, w, classes, r)).collect()
}

pub fn segmentation_loss() {
    let classes = classes3();
    for seed in 0..super::INSTANCES {
        let mut r = rng(100 + seed);
        let masks = random_masks(2, 3, 4, &classes, &mut r);
        let x = uniform(&[2, 3, 3, 4], &mut r);
        let err = super::gradient_error(&[x], &|v| seg_loss(&v[0], &masks, &[2]));
        assert!(err <= super::GRAD_TOL, "seg_loss {seed}: {err:e}");
    }
}

fn frozen_ae(seed: u64) -> Autoencoder {
    let mut ae = Autoencoder::new(3, (16, 16), &mut rng(seed)).unwrap();
    ae.freeze();
    ae
}

pub fn global_loss_gradient() {
    let classes = classes3();
    let ae = frozen_ae(5);
    for seed in 0..super::INSTANCES {
        let mut r = rng(200 + seed);
        let gt = random_masks(1, 16, 16, &classes, &mut r);
        let probs = Tensor::uniform(&[1, 3, 16, 16], 0.0, 1.0, &mut r);
        let err = super::gradient_error(&[probs], &|v| global_loss(&v[0], &gt, &ae));
        assert!(err <= super::GRAD_TOL, "global_loss {seed}: {err:e}");
    }
}

/// Encodings whose anchor distances differ clearly, so the hinge is never
/// evaluated at its kink.
fn triplet(r: &mut ChaCha8Rng) -> Vec<Tensor> {
    loop {
        let n = r.random_range(3..10);
        let v = vec![uniform(&[n], r), uniform(&[n], r), uniform(&[n], r)];
        let d = |a: &Tensor, b: &Tensor| {
            a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
        };
        if (d(&v[0], &v[1]) - d(&v[0], &v[2])).abs() > 0.05 {
            return v;
        }
    }
}

pub fn consistency_loss_gradient() {
    check_instances("consistency", triplet, &|v| consistency_loss(&v[0], &v[1], &v[2], 0.0));
    check_instances(
        "sequence_consistency",
        |r| {
            let mut a = triplet(r);
            let n = a[0].numel();
            a.push(uniform(&[n], r));
            a
        },
        &|v| sequence_consistency(v, 0.0),
    );
}

pub fn combined_loss_through_every_term() {
    let classes = classes3();
    let ae = frozen_ae(9);
    let weights = LossWeights::new(1.5, 0.3).unwrap();
    for seed in 0..super::INSTANCES {
        let mut r = rng(300 + seed);
        let gt = random_masks(1, 16, 16, &classes, &mut r);
        let x = uniform(&[1, 3, 16, 16], &mut r);
        let enc = triplet(&mut r);
        let err = super::gradient_error(&[x, enc[0].clone(), enc[1].clone(), enc[2].clone()], &|v| {
            let seg = seg_loss(&v[0], &gt, &[])?;
            let global = global_loss(&softmax_channels(&v[0])?, &gt, &ae)?;
            let cons = consistency_loss(&v[1], &v[2], &v[3], 0.0)?;
            combined_loss(&seg, &global, &cons, weights)
        });
        assert!(err <= super::GRAD_TOL, "combined {seed}: {err:e}");
    }
}

/// Directional derivative of the encoder against a central difference along
/// a random direction, on an 8-class 32x32 toy variant.
pub fn encoder_jacobian_vector_product() {
    let mut r = rng(42);
    let ae = Autoencoder::new(8, (32, 32), &mut r).unwrap();
    let weights = Tensor::uniform(&[1, tcnn::nn::ENCODING_DIM], -1.0, 1.0, &mut r);
    let score = |x: &Var| -> f64 {
        let e = ae.encode(x).unwrap();
        e.var().value().dot(&weights)
    };
    for instance in 0..5 {
        let x = Tensor::uniform(&[1, 8, 32, 32], 0.0, 1.0, &mut r);
        let dir = uniform(&[1, 8, 32, 32], &mut r);
        let xv = Var::input(x.clone());
        let e = ae.encode(&xv).unwrap();
        let loss = sum(&mul(e.var(), &Var::constant(weights.clone())).unwrap());
        let g = backward(&loss).unwrap();
        let analytic: f64 = g.wrt(&xv).unwrap().iter().zip(dir.data()).map(|(a, b)| a * b).sum();
        let shifted = |s: f64| {
            let d: Vec<f64> = x.data().iter().zip(dir.data()).map(|(a, b)| a + s * b).collect();
            score(&Var::constant(Tensor::new(x.shape().to_vec(), d).unwrap()))
        };
        let h = super::FD_STEP;
        let numeric = (shifted(h) - shifted(-h)) / (2.0 * h);
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3);
        assert!(err <= super::GRAD_TOL, "encode JVP {instance}: {err:e}");
    }
}

/// `<conv(x), y> = <x, convT(y)>` with shared weights and zero bias.
pub fn conv_and_transpose_are_adjoint() {
    for seed in 0..super::INSTANCES {
        let mut r = rng(400 + seed);
        let (c, f) = (r.random_range(1..4), r.random_range(1..4));
        let stride = 1 + (seed as usize % 2);
        let (h, w) = (2 * r.random_range(2..6), 2 * r.random_range(2..6));
        let x = uniform(&[2, c, h, w], &mut r);
        let weight = uniform(&[f, c, 3, 3], &mut r);
        let y = uniform(&[2, f, h / stride, w / stride], &mut r);
        let cx = conv2d(
            &Var::constant(x.clone()),
            &Var::constant(weight.clone()),
            &Var::constant(Tensor::zeros(&[f])),
            stride,
        )
        .unwrap();
        let cty = conv_transpose2d(
            &Var::constant(y.clone()),
            &Var::constant(weight),
            &Var::constant(Tensor::zeros(&[c])),
            stride,
        )
        .unwrap();
        let lhs = cx.value().dot(&y);
        let rhs = x.dot(cty.value());
        assert!((lhs - rhs).abs() <= 1e-9, "seed {seed}: {lhs} vs {rhs}");
    }
}

/// Reverse-mode parameter gradients of a full segmentation network, checked
/// by perturbing sampled coordinates of stored parameters.
pub fn segnet_parameter_gradients() {
    use tcnn::nn::SegNet;
    let classes = tcnn::mask::ClassTable::synthetic(4).unwrap();
    let mut r = rng(77);
    let mut net = SegNet::new(3, 4, true, &mut r);
    let frames: Vec<Var> = (0..3).map(|_| Var::constant(uniform(&[1, 3, 16, 16], &mut r))).collect();
    let gt = vec![super::random_mask(16, 16, &classes, &mut r)];
    let loss_of = |net: &SegNet| {
        let out = net.forward_sequence(&frames).unwrap();
        seg_loss(out.last().unwrap(), &gt, &[]).unwrap()
    };
    let g = backward(&loss_of(&net)).unwrap();
    net.accumulate_grads(&g);
    let names: Vec<String> = net.parameters().iter().map(|p| p.name().to_string()).collect();
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for (pi, name) in names.iter().enumerate() {
        let n = net.parameters()[pi].value().numel();
        for _ in 0..3 {
            let i = r.random_range(0..n);
            analytic.push(net.parameters()[pi].grad().expect(name)[i]);
            let base = net.parameters()[pi].value().clone();
            let mut eval = |delta: f64| {
                let mut t = base.clone();
                t.data_mut()[i] += delta;
                net.parameters_mut()[pi].set_value(t).unwrap();
                loss_of(&net).item()
            };
            let up = eval(super::FD_STEP);
            let down = eval(-super::FD_STEP);
            net.parameters_mut()[pi].set_value(base).unwrap();
            numeric.push((up - down) / (2.0 * super::FD_STEP));
        }
    }
    let err = super::relative_error(&analytic, &numeric);
    assert!(err <= super::GRAD_TOL, "segnet params: {err:e}");
}

/// Every check above, in order.
pub fn run_all() {
    elementwise_binary_ops();
    elementwise_unary_ops();
    reductions_and_shape_ops();
    softmax_and_cross_entropy();
    distances();
    convolutions_and_linear();
    two_layer_toy_network();
    convlstm_step();
    segmentation_loss();
    global_loss_gradient();
    consistency_loss_gradient();
    combined_loss_through_every_term();
    encoder_jacobian_vector_product();
    conv_and_transpose_are_adjoint();
    segnet_parameter_gradients();
}
