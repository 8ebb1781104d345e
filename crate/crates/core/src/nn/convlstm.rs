use rand::Rng;

use super::layers::{Activation, Conv2d};
use crate::autograd::{add, concat_channels, mul, sigmoid, slice_channels, tanh, Var};
use crate::error::{Result, TcnnError};
use crate::param::Parameter;
use crate::tensor::Tensor;

/// Hidden and cell state of a [`ConvLstmCell`].
#[derive(Clone, Debug)]
pub struct LstmState {
    pub hidden: Var,
    pub cell: Var,
}

/// Convolutional LSTM: all four gates come from one 3x3 convolution over the
/// channel-wise concatenation of the input and the previous hidden state.
#[derive(Clone, Debug)]
pub struct ConvLstmCell {
    gates: Conv2d,
    input_channels: usize,
    hidden_channels: usize,
}

impl ConvLstmCell {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        input_channels: usize,
        hidden_channels: usize,
        rng: &mut R,
    ) -> Self {
        let mut gates = Conv2d::new(
            &format!("{name}.gates"),
            input_channels + hidden_channels,
            4 * hidden_channels,
            1,
            Activation::None,
            rng,
        );
        // Gate order is input, forget, output, candidate; open the forget gate.
        let mut bias = vec![0.0; 4 * hidden_channels];
        bias[hidden_channels..2 * hidden_channels].fill(1.0);
        gates
            .bias
            .set_value(Tensor::new(vec![4 * hidden_channels], bias).expect("bias shape"))
            .expect("bias shape");
        ConvLstmCell {
            gates,
            input_channels,
            hidden_channels,
        }
    }

    pub fn hidden_channels(&self) -> usize {
        self.hidden_channels
    }

    pub fn zero_state(&self, n: usize, h: usize, w: usize) -> LstmState {
        let zeros = || Var::constant(Tensor::zeros(&[n, self.hidden_channels, h, w]));
        LstmState {
            hidden: zeros(),
            cell: zeros(),
        }
    }

    pub fn step(&self, x: &Var, state: &LstmState) -> Result<LstmState> {
        let (n, c, h, w) = x.value().dims4()?;
        if c != self.input_channels || state.hidden.shape() != [n, self.hidden_channels, h, w] {
            return Err(TcnnError::invalid(format!(
                "convlstm: input {:?} incompatible with state {:?}",
                x.shape(),
                state.hidden.shape()
            )));
        }
        let z = self.gates.forward(&concat_channels(&[x, &state.hidden])?)?;
        let hc = self.hidden_channels;
        let i = sigmoid(&slice_channels(&z, 0, hc)?);
        let f = sigmoid(&slice_channels(&z, hc, hc)?);
        let o = sigmoid(&slice_channels(&z, 2 * hc, hc)?);
        let g = tanh(&slice_channels(&z, 3 * hc, hc)?);
        let cell = add(&mul(&f, &state.cell)?, &mul(&i, &g)?)?;
        let hidden = mul(&o, &tanh(&cell))?;
        Ok(LstmState { hidden, cell })
    }

    pub fn params(&self) -> [&Parameter; 2] {
        self.gates.params()
    }

    pub fn params_mut(&mut self) -> [&mut Parameter; 2] {
        self.gates.params_mut()
    }
}
