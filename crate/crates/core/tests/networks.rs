mod common;

use common::{rng, uniform};
use tcnn::autograd::{backward, mean, sum, Var};
use tcnn::losses::encode_masks;
use tcnn::mask::{one_hot, ClassTable};
use tcnn::nn::{autoencoder_activity, Activation, Autoencoder, ConvLstmCell, LayerKind, SegNet, ENCODING_DIM};
use tcnn::param::Module;
use tcnn::{Tensor, TcnnError};

#[test]
fn autoencoder_rows_follow_the_published_table() {
    use Activation::{None as Linear, Relu};
    use LayerKind::{Conv, ConvT, Fc};
    let classes = 6;
    let pre_fc = Autoencoder::pre_fc_features((64, 64));
    let expected = [
        (Conv, 16, Some(2), Relu),
        (Conv, 16, Some(1), Relu),
        (Conv, 32, Some(2), Relu),
        (Conv, 32, Some(1), Relu),
        (Conv, 64, Some(2), Relu),
        (Conv, 64, Some(1), Relu),
        (Conv, 64, Some(2), Relu),
        (Conv, 64, Some(1), Relu),
        (Fc, 1024, None, Linear),
        (Fc, pre_fc, None, Linear),
        (ConvT, 64, Some(2), Relu),
        (Conv, 64, Some(1), Relu),
        (ConvT, 64, Some(2), Relu),
        (Conv, 64, Some(1), Relu),
        (ConvT, 64, Some(2), Relu),
        (Conv, 64, Some(1), Relu),
        // Upsampling pair resolved so the output matches the input size.
        (ConvT, 32, Some(2), Relu),
        (Conv, 32, Some(1), Relu),
        (Conv, classes, Some(1), Linear),
    ];
    let ae = Autoencoder::new(classes, (64, 64), &mut rng(0)).unwrap();
    let got: Vec<_> = ae
        .layer_specs()
        .iter()
        .map(|s| (s.kind, s.outputs, s.stride, s.activation))
        .collect();
    assert_eq!(got, expected);
    assert_eq!(pre_fc, 4 * 4 * 64);
}

#[test]
fn encoding_is_fixed_width_and_decoder_restores_the_mask_shape() {
    let mut r = rng(1);
    for (hw, classes) in [((64, 64), 6), ((32, 48), 4), ((16, 16), 3)] {
        let ae = Autoencoder::new(classes, hw, &mut r).unwrap();
        let x = Var::constant(uniform(&[2, classes, hw.0, hw.1], &mut r));
        let e = ae.encode(&x).unwrap();
        assert_eq!(e.var().shape(), &[2, ENCODING_DIM]);
        assert!(e.var().value().all_finite());
        let y = ae.decode(&e, hw).unwrap();
        assert_eq!(y.shape(), &[2, classes, hw.0, hw.1]);
        assert!(y.value().all_finite());
    }
}

#[test]
fn encoding_a_mask_is_deterministic() {
    let classes = ClassTable::synthetic(6).unwrap();
    let ae = Autoencoder::new(6, (64, 64), &mut rng(2)).unwrap();
    let masks = vec![common::video_masks(0, 0)[0].clone()];
    let a = encode_masks(&ae, &masks).unwrap();
    let b = encode_masks(&ae, &masks).unwrap();
    assert_eq!(a.var().value(), b.var().value());
    assert_eq!(masks[0].classes(), &classes);
}

#[test]
fn indivisible_sizes_are_invalid_arguments() {
    let mut r = rng(3);
    assert!(matches!(Autoencoder::new(4, (24, 32), &mut r), Err(TcnnError::InvalidArgument(_))));
    let ae = Autoencoder::new(4, (32, 32), &mut r).unwrap();
    let e = ae.encode(&Var::constant(Tensor::zeros(&[1, 4, 32, 32]))).unwrap();
    assert!(matches!(ae.decode(&e, (48, 32)), Err(TcnnError::InvalidArgument(_))));
    assert!(matches!(ae.decode(&e, (20, 32)), Err(TcnnError::InvalidArgument(_))));
    let net = SegNet::new(3, 4, false, &mut r);
    assert!(matches!(
        net.forward(&Var::constant(Tensor::zeros(&[1, 3, 20, 16]))),
        Err(TcnnError::InvalidArgument(_))
    ));
}

#[test]
fn flipping_one_pixel_moves_the_encoding_by_a_finite_amount() {
    let ae = Autoencoder::new(6, (64, 64), &mut rng(4)).unwrap();
    let mut m = common::video_masks(0, 1)[5].clone();
    let a = encode_masks(&ae, std::slice::from_ref(&m)).unwrap();
    let old = m.get(10, 10);
    m.set(10, 10, (old + 1) % 6);
    let b = encode_masks(&ae, &[m]).unwrap();
    let d: f64 = a
        .var()
        .value()
        .data()
        .iter()
        .zip(b.var().value().data())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    assert!(d.is_finite());
    assert!(d > 0.0);
}

fn frames(n: usize, seed: u64) -> Vec<Var> {
    let mut r = rng(seed);
    (0..n).map(|_| Var::constant(uniform(&[2, 3, 32, 32], &mut r))).collect()
}

#[test]
fn segnet_output_matches_the_input_size() {
    let net = SegNet::new(3, 6, true, &mut rng(5));
    let out = net.forward_sequence(&frames(4, 6)).unwrap();
    assert_eq!(out.len(), 4);
    for o in &out {
        assert_eq!(o.shape(), &[2, 6, 32, 32]);
        assert!(o.value().all_finite());
    }
    assert!(matches!(net.forward_sequence(&[]), Err(TcnnError::InvalidArgument(_))));
}

#[test]
fn frames_are_independent_without_the_temporal_module() {
    let net = SegNet::new(3, 5, false, &mut rng(7));
    let fs = frames(4, 8);
    let out = net.forward_sequence(&fs).unwrap();
    let perm = [2, 0, 3, 1];
    let shuffled: Vec<Var> = perm.iter().map(|&i| fs[i].clone()).collect();
    let out2 = net.forward_sequence(&shuffled).unwrap();
    for (k, &i) in perm.iter().enumerate() {
        assert_eq!(out2[k].value(), out[i].value());
    }
}

#[test]
fn zero_recurrent_weights_give_constant_logits_for_repeated_frames() {
    let mut net = SegNet::new(3, 4, true, &mut rng(9));
    let cell = net.temporal_module_mut().unwrap();
    for p in cell.params_mut() {
        let zeros = Tensor::zeros(p.value().shape());
        p.set_value(zeros).unwrap();
    }
    let f = frames(1, 10).remove(0);
    let out = net.forward_sequence(&[f.clone(), f.clone(), f.clone(), f]).unwrap();
    for o in &out[1..] {
        assert_eq!(o.value(), out[0].value());
    }
}

#[test]
fn the_last_frame_depends_on_the_first() {
    let net = SegNet::new(3, 4, true, &mut rng(11));
    let mut fs = frames(4, 12);
    let first = Var::input(fs[0].value().clone());
    fs[0] = first.clone();
    let out = net.forward_sequence(&fs).unwrap();
    let g = backward(&mean(&out[3])).unwrap();
    let norm: f64 = g.wrt(&first).unwrap().iter().map(|v| v * v).sum();
    assert!(norm > 0.0);

    let flat = SegNet::new(3, 4, false, &mut rng(11));
    let out = flat.forward_sequence(&fs).unwrap();
    assert!(backward(&mean(&out[3])).unwrap().wrt(&first).is_none());
}

#[test]
fn state_is_reset_between_windows() {
    let net = SegNet::new(3, 4, true, &mut rng(13));
    let fs = frames(4, 14);
    let a = net.forward_sequence(&fs).unwrap();
    let b = net.forward_sequence(&fs).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.value(), y.value());
    }
}

#[test]
fn convlstm_state_keeps_its_shape_and_gates_stay_bounded() {
    let cell = ConvLstmCell::new("t", 4, 6, &mut rng(15));
    let mut state = cell.zero_state(2, 3, 5);
    let mut r = rng(16);
    for _ in 0..5 {
        let x = Var::constant(Tensor::uniform(&[2, 4, 3, 5], -20.0, 20.0, &mut r));
        state = cell.step(&x, &state).unwrap();
        assert_eq!(state.hidden.shape(), &[2, 6, 3, 5]);
        assert_eq!(state.cell.shape(), &[2, 6, 3, 5]);
        // hidden = o * tanh(c) with o in (0, 1)
        assert!(state.hidden.value().data().iter().all(|v| v.abs() < 1.0));
    }
    let bad = Var::constant(Tensor::zeros(&[2, 3, 3, 5]));
    assert!(cell.step(&bad, &state).is_err());
}

#[test]
fn freezing_blocks_updates_but_not_input_gradients() {
    let classes = ClassTable::synthetic(4).unwrap();
    let mut ae = Autoencoder::new(4, (16, 16), &mut rng(17)).unwrap();
    ae.freeze();
    assert!(ae.is_frozen());
    let before = ae.param_hash();
    let mask = common::random_mask(16, 16, &classes, &mut rng(18));
    let x = Var::input(one_hot(&[mask], 4).unwrap());
    let g = backward(&sum(ae.encode(&x).unwrap().var())).unwrap();
    assert_eq!(g.num_params(), 0);
    assert!(g.wrt(&x).unwrap().iter().any(|v| *v != 0.0));
    ae.accumulate_grads(&g);
    tcnn::optim::sgd_momentum_step(&mut ae.parameters_mut(), 0.1, 0.9).unwrap();
    assert_eq!(ae.param_hash(), before);
    assert!(ae.parameters().iter().all(|p| p.velocity().iter().all(|v| *v == 0.0)));

    ae.unfreeze();
    assert!(!ae.is_frozen());
    let x = Var::constant(x.value().clone());
    let g = backward(&sum(ae.encode(&x).unwrap().var())).unwrap();
    assert!(g.num_params() > 0);
}

#[test]
fn autoencoder_activity_is_counted() {
    let before = autoencoder_activity();
    let ae = Autoencoder::new(4, (16, 16), &mut rng(19)).unwrap();
    ae.encode(&Var::constant(Tensor::zeros(&[1, 4, 16, 16]))).unwrap();
    assert!(autoencoder_activity() >= before + 2);
}

#[test]
fn parameter_names_are_unique_and_namespaced() {
    let ae = Autoencoder::new(6, (64, 64), &mut rng(20)).unwrap();
    let net = SegNet::new(3, 6, true, &mut rng(21));
    for (names, prefix) in [
        (ae.parameters().iter().map(|p| p.name().to_owned()).collect::<Vec<_>>(), "ae."),
        (net.parameters().iter().map(|p| p.name().to_owned()).collect(), "seg."),
    ] {
        let unique: std::collections::HashSet<_> = names.iter().collect();
        assert_eq!(unique.len(), names.len());
        assert!(names.iter().all(|n| n.starts_with(prefix)));
    }
}
