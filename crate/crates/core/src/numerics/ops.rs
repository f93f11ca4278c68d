//! Eager (non-recording) versions of the tape operations.

use super::tape::{self, LstmVars, Tape};
use super::tensor::Tensor;
use crate::error::{ensure, Result};

pub fn conv1d(input: &Tensor, kernels: &Tensor, bias: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    let mut t = Tape::new();
    let (x, w, b) = (t.leaf(input), t.leaf(kernels), t.leaf(bias));
    let y = t.conv1d(x, w, b, stride, padding)?;
    Ok(t.to_tensor(y))
}

pub fn deconv1d(
    input: &Tensor,
    kernels: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: usize,
    output_padding: usize,
) -> Result<Tensor> {
    let mut t = Tape::new();
    let (x, w, b) = (t.leaf(input), t.leaf(kernels), t.leaf(bias));
    let y = t.deconv1d(x, w, b, stride, padding, output_padding)?;
    Ok(t.to_tensor(y))
}

pub fn linear(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let mut t = Tape::new();
    let (x, w, b) = (t.leaf(input), t.leaf(weight), t.leaf(bias));
    let y = t.linear(x, w, b)?;
    Ok(t.to_tensor(y))
}

/// LSTM layer parameters in gate-major `i, f, g, o` layout.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w_ih: Tensor,
    pub b_ih: Tensor,
    pub w_hh: Tensor,
    pub b_hh: Tensor,
}

pub fn lstm_cell(a: &Tensor, h_prev: &Tensor, c_prev: &Tensor, p: &LstmParams) -> Result<(Tensor, Tensor)> {
    let mut t = Tape::new();
    let (x, h, c) = (t.leaf(a), t.leaf(h_prev), t.leaf(c_prev));
    let vars = LstmVars {
        w_ih: t.leaf(&p.w_ih),
        b_ih: t.leaf(&p.b_ih),
        w_hh: t.leaf(&p.w_hh),
        b_hh: t.leaf(&p.b_hh),
    };
    let (h2, c2) = t.lstm_cell(x, h, c, &vars)?;
    Ok((t.to_tensor(h2), t.to_tensor(c2)))
}

pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    ensure!(
        pred.shape() == target.shape(),
        Dimension,
        "mse of shapes {:?} and {:?}",
        pred.shape(),
        target.shape()
    );
    let n = pred.len() as f64;
    Ok(pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

pub fn bce_loss(p: f64, y: u8) -> Result<f64> {
    ensure!((0.0..=1.0).contains(&p), Domain, "probability {p} outside [0, 1]");
    ensure!(y <= 1, Domain, "label must be 0 or 1, got {y}");
    Ok(tape::bce_value(p, f64::from(y)))
}
