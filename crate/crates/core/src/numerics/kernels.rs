//! Raw slice kernels shared by the eager ops and the tape. Shapes are
//! validated by the callers; these functions only index.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

/// Output length of a strided, zero-padded 1-D convolution.
pub fn conv_out_len(len: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = len + 2 * padding;
    if stride == 0 || kernel == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Natural output length of a transposed convolution, before output padding.
pub fn deconv_natural_len(len: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    if len == 0 || stride == 0 {
        return None;
    }
    ((len - 1) * stride + kernel).checked_sub(2 * padding)
}

#[inline]
fn tap(pos: usize, k: usize, padding: usize, len: usize) -> Option<usize> {
    let idx = pos + k;
    if idx < padding || idx - padding >= len {
        None
    } else {
        Some(idx - padding)
    }
}

/// `out[o][t] = bias[o] + sum_c sum_k w[o][c][k] * x[c][t*stride + k - padding]`
pub fn conv1d_forward(
    g: &ConvGeom,
    input: &[f64],
    len_in: usize,
    weight: &[f64],
    bias: &[f64],
    len_out: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; g.out_channels * len_out];
    for o in 0..g.out_channels {
        let row = &mut out[o * len_out..(o + 1) * len_out];
        row.iter_mut().for_each(|v| *v = bias[o]);
        for c in 0..g.in_channels {
            let x = &input[c * len_in..(c + 1) * len_in];
            let w = &weight[(o * g.in_channels + c) * g.kernel..][..g.kernel];
            for (t, acc) in row.iter_mut().enumerate() {
                let base = t * g.stride;
                let mut s = 0.0;
                for (k, wk) in w.iter().enumerate() {
                    if let Some(i) = tap(base, k, g.padding, len_in) {
                        s += wk * x[i];
                    }
                }
                *acc += s;
            }
        }
    }
    out
}

/// Accumulates the input, weight and bias gradients of [`conv1d_forward`].
#[allow(clippy::too_many_arguments)]
pub fn conv1d_backward(
    g: &ConvGeom,
    input: &[f64],
    len_in: usize,
    weight: &[f64],
    grad_out: &[f64],
    len_out: usize,
    grad_input: Option<&mut [f64]>,
    grad_weight: Option<&mut [f64]>,
    grad_bias: Option<&mut [f64]>,
) {
    if let Some(gb) = grad_bias {
        for o in 0..g.out_channels {
            gb[o] += grad_out[o * len_out..(o + 1) * len_out].iter().sum::<f64>();
        }
    }
    if let Some(gw) = grad_weight {
        for o in 0..g.out_channels {
            let gy = &grad_out[o * len_out..(o + 1) * len_out];
            for c in 0..g.in_channels {
                let x = &input[c * len_in..(c + 1) * len_in];
                let gwr = &mut gw[(o * g.in_channels + c) * g.kernel..][..g.kernel];
                for (t, gyt) in gy.iter().enumerate() {
                    let base = t * g.stride;
                    for (k, gwk) in gwr.iter_mut().enumerate() {
                        if let Some(i) = tap(base, k, g.padding, len_in) {
                            *gwk += gyt * x[i];
                        }
                    }
                }
            }
        }
    }
    if let Some(gx) = grad_input {
        for o in 0..g.out_channels {
            let gy = &grad_out[o * len_out..(o + 1) * len_out];
            for c in 0..g.in_channels {
                let gxr = &mut gx[c * len_in..(c + 1) * len_in];
                let w = &weight[(o * g.in_channels + c) * g.kernel..][..g.kernel];
                for (t, gyt) in gy.iter().enumerate() {
                    let base = t * g.stride;
                    for (k, wk) in w.iter().enumerate() {
                        if let Some(i) = tap(base, k, g.padding, len_in) {
                            gxr[i] += gyt * wk;
                        }
                    }
                }
            }
        }
    }
}

/// Transposed convolution, weight laid out `[in_channels][out_channels][kernel]`:
/// `out[o][i*stride + k - padding] += w[c][o][k] * x[c][i]`, plus `bias[o]`.
pub fn deconv1d_forward(
    g: &ConvGeom,
    input: &[f64],
    len_in: usize,
    weight: &[f64],
    bias: &[f64],
    len_out: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; g.out_channels * len_out];
    for o in 0..g.out_channels {
        out[o * len_out..(o + 1) * len_out]
            .iter_mut()
            .for_each(|v| *v = bias[o]);
    }
    for c in 0..g.in_channels {
        let x = &input[c * len_in..(c + 1) * len_in];
        for o in 0..g.out_channels {
            let w = &weight[(c * g.out_channels + o) * g.kernel..][..g.kernel];
            let row = &mut out[o * len_out..(o + 1) * len_out];
            for (i, xi) in x.iter().enumerate() {
                let base = i * g.stride;
                for (k, wk) in w.iter().enumerate() {
                    if let Some(t) = tap(base, k, g.padding, len_out) {
                        row[t] += wk * xi;
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub fn deconv1d_backward(
    g: &ConvGeom,
    input: &[f64],
    len_in: usize,
    weight: &[f64],
    grad_out: &[f64],
    len_out: usize,
    mut grad_input: Option<&mut [f64]>,
    mut grad_weight: Option<&mut [f64]>,
    grad_bias: Option<&mut [f64]>,
) {
    if let Some(gb) = grad_bias {
        for o in 0..g.out_channels {
            gb[o] += grad_out[o * len_out..(o + 1) * len_out].iter().sum::<f64>();
        }
    }
    for c in 0..g.in_channels {
        let x = &input[c * len_in..(c + 1) * len_in];
        for o in 0..g.out_channels {
            let off = (c * g.out_channels + o) * g.kernel;
            let w = &weight[off..off + g.kernel];
            let gy = &grad_out[o * len_out..(o + 1) * len_out];
            for (i, xi) in x.iter().enumerate() {
                let base = i * g.stride;
                let mut gxi = 0.0;
                for k in 0..g.kernel {
                    if let Some(t) = tap(base, k, g.padding, len_out) {
                        gxi += w[k] * gy[t];
                        if let Some(gw) = grad_weight.as_deref_mut() {
                            gw[off + k] += xi * gy[t];
                        }
                    }
                }
                if let Some(gx) = grad_input.as_deref_mut() {
                    gx[c * len_in + i] += gxi;
                }
            }
        }
    }
}

/// `out = weight · input + bias` for a `[rows × cols]` weight.
pub fn matvec_bias(weight: &[f64], input: &[f64], bias: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    (0..rows)
        .map(|r| {
            let w = &weight[r * cols..(r + 1) * cols];
            bias[r] + w.iter().zip(input).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Activated gates `[i, f, g, o]` (each of length `hidden`) and the new
/// hidden and cell state of one LSTM step.
pub struct LstmStep {
    pub gates: Vec<f64>,
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn lstm_forward(
    a: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    w_ih: &[f64],
    b_ih: &[f64],
    w_hh: &[f64],
    b_hh: &[f64],
    hidden: usize,
) -> LstmStep {
    let input = a.len();
    let mut gates = matvec_bias(w_ih, a, b_ih, 4 * hidden, input);
    for (r, gate) in gates.iter_mut().enumerate() {
        let w = &w_hh[r * hidden..(r + 1) * hidden];
        *gate += b_hh[r] + w.iter().zip(h_prev).map(|(x, y)| x * y).sum::<f64>();
    }
    for (r, gate) in gates.iter_mut().enumerate() {
        *gate = if r / hidden == 2 {
            gate.tanh()
        } else {
            sigmoid(*gate)
        };
    }
    let mut h = vec![0.0; hidden];
    let mut c = vec![0.0; hidden];
    for j in 0..hidden {
        let (i, f, g, o) = (
            gates[j],
            gates[hidden + j],
            gates[2 * hidden + j],
            gates[3 * hidden + j],
        );
        c[j] = f * c_prev[j] + i * g;
        h[j] = o * c[j].tanh();
    }
    LstmStep { gates, h, c }
}

/// Gradients of the pre-activation gate vector given output gradients.
pub fn lstm_preact_grad(
    gates: &[f64],
    c_prev: &[f64],
    c: &[f64],
    grad_h: &[f64],
    grad_c: &[f64],
    hidden: usize,
    grad_c_prev: Option<&mut [f64]>,
) -> Vec<f64> {
    let mut dpre = vec![0.0; 4 * hidden];
    let mut gcp = vec![0.0; hidden];
    for j in 0..hidden {
        let (i, f, g, o) = (
            gates[j],
            gates[hidden + j],
            gates[2 * hidden + j],
            gates[3 * hidden + j],
        );
        let tc = c[j].tanh();
        let d_o = grad_h[j] * tc;
        let dc = grad_c[j] + grad_h[j] * o * (1.0 - tc * tc);
        let di = dc * g;
        let dg = dc * i;
        let df = dc * c_prev[j];
        gcp[j] = dc * f;
        dpre[j] = di * i * (1.0 - i);
        dpre[hidden + j] = df * f * (1.0 - f);
        dpre[2 * hidden + j] = dg * (1.0 - g * g);
        dpre[3 * hidden + j] = d_o * o * (1.0 - o);
    }
    if let Some(out) = grad_c_prev {
        for (o, v) in out.iter_mut().zip(&gcp) {
            *o += v;
        }
    }
    dpre
}
