//! The multi-scale convolutional LSTM autoencoder.
//!
//! Each scale `l ∈ 0..=L` has its own branch: scale 0 sees the raw fragment,
//! scale `l` sees the level-`l` detail coefficients. A branch runs a conv
//! stack and an LSTM encoder; the final hidden states of all branches form
//! the global code. Decoding re-initializes one LSTM per scale from the code,
//! walks backwards in time emitting conv-space activations, and a mirrored
//! deconv stack maps them back to signal space.

mod config;
pub mod container;

pub use config::{ConvLayer, ConvSpec, ModelConfig};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::MultiSeries;
use crate::error::{ensure, Error, Result};
use crate::numerics::{init, LstmVars, Tape, Tensor, Var, BCE_EPS};
use crate::wavelet::{self, WaveletDecomposition};

#[derive(Debug, Clone, Copy)]
struct LinearIds {
    weight: usize,
    bias: usize,
}

#[derive(Debug, Clone, Copy)]
struct LstmIds {
    w_ih: usize,
    b_ih: usize,
    w_hh: usize,
    b_hh: usize,
}

#[derive(Debug, Clone)]
struct Branch {
    enc_conv: Vec<LinearIds>,
    enc_lstm: LstmIds,
    dec_init: LinearIds,
    dec_lstm: LstmIds,
    dec_out: LinearIds,
    /// Transposed convolutions, in the order they are applied (innermost
    /// layer first).
    dec_deconv: Vec<LinearIds>,
    /// Sequence lengths through the conv stack, input first.
    lengths: Vec<usize>,
}

struct ParamSpec {
    name: String,
    shape: Vec<usize>,
    fan_in: usize,
}

#[derive(Default)]
struct LayoutBuilder {
    specs: Vec<ParamSpec>,
}

impl LayoutBuilder {
    fn add(&mut self, name: String, shape: Vec<usize>, fan_in: usize) -> usize {
        self.specs.push(ParamSpec { name, shape, fan_in });
        self.specs.len() - 1
    }

    fn pair(&mut self, prefix: &str, w_shape: Vec<usize>, b_len: usize, fan_in: usize) -> LinearIds {
        LinearIds {
            weight: self.add(format!("{prefix}.weight"), w_shape, fan_in),
            bias: self.add(format!("{prefix}.bias"), vec![b_len], fan_in),
        }
    }

    fn lstm(&mut self, prefix: &str, input: usize, hidden: usize) -> LstmIds {
        LstmIds {
            w_ih: self.add(format!("{prefix}.w_ih"), vec![4 * hidden, input], hidden),
            b_ih: self.add(format!("{prefix}.b_ih"), vec![4 * hidden], hidden),
            w_hh: self.add(format!("{prefix}.w_hh"), vec![4 * hidden, hidden], hidden),
            b_hh: self.add(format!("{prefix}.b_hh"), vec![4 * hidden], hidden),
        }
    }
}

struct Layout {
    specs: Vec<ParamSpec>,
    branches: Vec<Branch>,
    classifier: Option<LinearIds>,
}

fn layout(cfg: &ModelConfig) -> Result<Layout> {
    cfg.validate()?;
    let h = cfg.lstm_hidden;
    let layers = &cfg.conv.0;
    let mut feats = vec![cfg.channels];
    feats.extend(layers.iter().map(|l| l.features));
    let last = *feats.last().unwrap();
    let mut b = LayoutBuilder::default();
    let mut branches = Vec::with_capacity(cfg.scales());
    for scale in 0..cfg.scales() {
        let p = format!("s{scale}");
        let enc_conv = layers
            .iter()
            .enumerate()
            .map(|(j, l)| {
                b.pair(
                    &format!("{p}.enc.conv{j}"),
                    vec![feats[j + 1], feats[j], l.kernel],
                    feats[j + 1],
                    feats[j] * l.kernel,
                )
            })
            .collect();
        let enc_lstm = b.lstm(&format!("{p}.enc.lstm"), last, h);
        let dec_init = b.pair(&format!("{p}.dec.init"), vec![h, cfg.code_len()], h, cfg.code_len());
        let dec_lstm = b.lstm(&format!("{p}.dec.lstm"), last, h);
        let dec_out = b.pair(&format!("{p}.dec.out"), vec![last, h], last, h);
        let dec_deconv = layers
            .iter()
            .enumerate()
            .rev()
            .map(|(j, l)| {
                b.pair(
                    &format!("{p}.dec.deconv{j}"),
                    vec![feats[j + 1], feats[j], l.kernel],
                    feats[j],
                    feats[j + 1] * l.kernel,
                )
            })
            .collect();
        branches.push(Branch {
            enc_conv,
            enc_lstm,
            dec_init,
            dec_lstm,
            dec_out,
            dec_deconv,
            lengths: cfg.conv_lengths(scale)?,
        });
    }
    let classifier = cfg
        .classifier
        .then(|| b.pair("classifier", vec![1, cfg.code_len()], 1, cfg.code_len()));
    Ok(Layout {
        specs: b.specs,
        branches,
        classifier,
    })
}

/// Concatenated final encoder hidden states, scale 0 first.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalCode(pub Vec<f64>);

impl GlobalCode {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Whether a decode call is a training pass (teacher-forced) or inference
/// (autoregressive).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    Training,
    Inference,
}

/// Tape handles for every model parameter, in store order.
#[derive(Debug, Clone)]
pub struct BoundParams(pub Vec<Var>);

/// Encoder outputs recorded on a tape.
#[derive(Debug, Clone)]
pub struct TapeEncoding {
    pub code: Var,
    /// Final conv activations per scale, `[F × T']`.
    pub activations: Vec<Var>,
    /// The same activations split into per-time-step columns.
    pub columns: Vec<Vec<Var>>,
}

/// Decoder outputs recorded on a tape.
#[derive(Debug, Clone)]
pub struct TapeDecoding {
    /// Signal-space reconstructions per scale, `[C × T/2^l]`.
    pub outputs: Vec<Var>,
    /// Activation-space step predictions per scale, `[F × T']`, in time order.
    pub step_outputs: Vec<Var>,
}

#[derive(Debug, Clone)]
pub struct WaveletAEModel {
    config: ModelConfig,
    names: Vec<String>,
    params: Vec<Tensor>,
    branches: Vec<Branch>,
    classifier: Option<LinearIds>,
}

/// Instantiates and initializes a model from `config.seed`.
pub fn build_model(config: &ModelConfig) -> Result<WaveletAEModel> {
    let lay = layout(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let params = lay
        .specs
        .iter()
        .map(|s| init::uniform_fan_in(&mut rng, &s.shape, s.fan_in))
        .collect();
    Ok(WaveletAEModel {
        config: config.clone(),
        names: lay.specs.into_iter().map(|s| s.name).collect(),
        params,
        branches: lay.branches,
        classifier: lay.classifier,
    })
}

impl WaveletAEModel {
    /// Rebuilds a model from stored tensors, which must match the layout
    /// implied by `config` in name, order and shape.
    pub fn from_parts(config: &ModelConfig, tensors: Vec<(String, Tensor)>) -> Result<Self> {
        let lay = layout(config)?;
        ensure!(
            tensors.len() == lay.specs.len(),
            Format,
            "expected {} tensors, found {}",
            lay.specs.len(),
            tensors.len()
        );
        let mut params = Vec::with_capacity(tensors.len());
        for (spec, (name, t)) in lay.specs.iter().zip(tensors) {
            ensure!(name == spec.name, Format, "expected tensor `{}`, found `{name}`", spec.name);
            ensure!(
                t.shape() == spec.shape.as_slice(),
                Format,
                "tensor `{name}` has shape {:?}, expected {:?}",
                t.shape(),
                spec.shape
            );
            params.push(t.with_grad());
        }
        Ok(Self {
            config: config.clone(),
            names: lay.specs.into_iter().map(|s| s.name).collect(),
            params,
            branches: lay.branches,
            classifier: lay.classifier,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn has_classifier(&self) -> bool {
        self.classifier.is_some()
    }

    /// Indices of the classifier head parameters, if present.
    pub fn classifier_param_indices(&self) -> Option<[usize; 2]> {
        self.classifier.map(|c| [c.weight, c.bias])
    }

    /// Rounds every parameter to the nearest `f32`, the precision the
    /// container stores, so a saved model predicts exactly like this one.
    pub fn round_to_f32(&mut self) {
        for t in &mut self.params {
            for v in t.data_mut() {
                *v = *v as f32 as f64;
            }
        }
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(Tensor::zero_grad);
    }

    /// Records the parameters on `tape`. Frozen parameters are constants,
    /// which keeps inference tapes free of gradient bookkeeping.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundParams {
        BoundParams(
            self.params
                .iter()
                .map(|p| {
                    if trainable {
                        tape.param(p)
                    } else {
                        tape.constant(p.shape(), p.data().to_vec())
                            .expect("parameter shapes are consistent")
                    }
                })
                .collect(),
        )
    }

    /// Scale inputs for a fragment: the raw signal followed by the detail
    /// coefficients of levels `1..=L`. `decomp` is computed when absent.
    pub fn scale_inputs(&self, fragment: &MultiSeries, decomp: Option<&WaveletDecomposition>) -> Result<Vec<Tensor>> {
        let cfg = &self.config;
        ensure!(
            fragment.channels() == cfg.channels,
            Dimension,
            "fragment has {} channels, model expects {}",
            fragment.channels(),
            cfg.channels
        );
        ensure!(
            fragment.len() == cfg.fragment_length,
            Dimension,
            "fragment has length {}, model expects {}",
            fragment.len(),
            cfg.fragment_length
        );
        let mut inputs = vec![Tensor::new(&[cfg.channels, cfg.fragment_length], fragment.data().to_vec())?];
        if cfg.levels == 0 {
            return Ok(inputs);
        }
        let owned;
        let decomp = match decomp {
            Some(d) => d,
            None => {
                owned = wavelet::mdwd(fragment, cfg.family, cfg.levels)?;
                &owned
            }
        };
        ensure!(
            decomp.levels == cfg.levels,
            Dimension,
            "decomposition has {} levels, model expects {}",
            decomp.levels,
            cfg.levels
        );
        ensure!(
            decomp.channels() == cfg.channels && decomp.original_length == cfg.fragment_length,
            Dimension,
            "decomposition does not belong to a {}×{} fragment",
            cfg.channels,
            cfg.fragment_length
        );
        inputs.extend(decomp.details.iter().cloned());
        Ok(inputs)
    }

    fn check_inputs(&self, tape: &Tape, inputs: &[Var]) -> Result<()> {
        let cfg = &self.config;
        ensure!(
            inputs.len() == cfg.scales(),
            Dimension,
            "expected {} scale inputs, got {}",
            cfg.scales(),
            inputs.len()
        );
        for (l, v) in inputs.iter().enumerate() {
            let want = [cfg.channels, cfg.scale_len(l)];
            ensure!(
                tape.shape(*v) == want,
                Dimension,
                "scale {l} input has shape {:?}, expected {want:?}",
                tape.shape(*v)
            );
        }
        Ok(())
    }

    fn lstm_vars(p: &BoundParams, ids: LstmIds) -> LstmVars {
        LstmVars {
            w_ih: p.0[ids.w_ih],
            b_ih: p.0[ids.b_ih],
            w_hh: p.0[ids.w_hh],
            b_hh: p.0[ids.b_hh],
        }
    }

    pub fn encode_tape(&self, tape: &mut Tape, p: &BoundParams, inputs: &[Var]) -> Result<TapeEncoding> {
        self.check_inputs(tape, inputs)?;
        let h = self.config.lstm_hidden;
        let mut finals = Vec::with_capacity(inputs.len());
        let mut activations = Vec::with_capacity(inputs.len());
        let mut columns = Vec::with_capacity(inputs.len());
        for (branch, &input) in self.branches.iter().zip(inputs) {
            let mut x = input;
            for (ids, layer) in branch.enc_conv.iter().zip(&self.config.conv.0) {
                let y = tape.conv1d(x, p.0[ids.weight], p.0[ids.bias], layer.stride, layer.padding())?;
                x = tape.relu(y);
            }
            let steps = *branch.lengths.last().unwrap();
            let cols = (0..steps).map(|t| tape.column(x, t)).collect::<Result<Vec<_>>>()?;
            let lv = Self::lstm_vars(p, branch.enc_lstm);
            let mut hs = tape.constant(&[h], vec![0.0; h])?;
            let mut cs = tape.constant(&[h], vec![0.0; h])?;
            for &a in &cols {
                (hs, cs) = tape.lstm_cell(a, hs, cs, &lv)?;
            }
            finals.push(hs);
            activations.push(x);
            columns.push(cols);
        }
        let code = tape.concat(&finals)?;
        Ok(TapeEncoding {
            code,
            activations,
            columns,
        })
    }

    /// Decodes every scale from `code`. With `teacher` columns the decoder
    /// LSTM consumes the encoder's activation at each step; without, it
    /// consumes its own previous output.
    pub fn decode_tape(&self, tape: &mut Tape, p: &BoundParams, code: Var, teacher: Option<&[Vec<Var>]>) -> Result<TapeDecoding> {
        let cfg = &self.config;
        ensure!(
            tape.value(code).len() == cfg.code_len(),
            Dimension,
            "code has length {}, model expects {}",
            tape.value(code).len(),
            cfg.code_len()
        );
        if let Some(t) = teacher {
            ensure!(
                t.len() == cfg.scales(),
                Dimension,
                "teacher activations cover {} scales, model has {}",
                t.len(),
                cfg.scales()
            );
        }
        let h = cfg.lstm_hidden;
        let mut outputs = Vec::with_capacity(cfg.scales());
        let mut step_outputs = Vec::with_capacity(cfg.scales());
        for (scale, branch) in self.branches.iter().enumerate() {
            let steps = *branch.lengths.last().unwrap();
            let teach = match teacher {
                Some(t) => {
                    ensure!(
                        t[scale].len() == steps,
                        Dimension,
                        "scale {scale} teacher has {} steps, expected {steps}",
                        t[scale].len()
                    );
                    Some(&t[scale])
                }
                None => None,
            };
            let hidden = tape.linear(code, p.0[branch.dec_init.weight], p.0[branch.dec_init.bias])?;
            let mut hs = hidden;
            let mut cs = tape.constant(&[h], vec![0.0; h])?;
            let lv = Self::lstm_vars(p, branch.dec_lstm);
            // Step k reconstructs time index steps-1-k.
            let mut rev = Vec::with_capacity(steps);
            for k in 0..steps {
                let y = tape.linear(hs, p.0[branch.dec_out.weight], p.0[branch.dec_out.bias])?;
                rev.push(y);
                if k + 1 < steps {
                    let next_in = match teach {
                        Some(cols) => cols[steps - 1 - k],
                        None => y,
                    };
                    (hs, cs) = tape.lstm_cell(next_in, hs, cs, &lv)?;
                }
            }
            rev.reverse();
            let mut x = tape.stack_columns(&rev)?;
            step_outputs.push(x);
            let n_layers = cfg.conv.0.len();
            for (i, ids) in branch.dec_deconv.iter().enumerate() {
                let j = n_layers - 1 - i;
                let layer = cfg.conv.0[j];
                let target = branch.lengths[j];
                let natural = crate::numerics::kernels::deconv_natural_len(
                    branch.lengths[j + 1],
                    layer.kernel,
                    layer.stride,
                    layer.padding(),
                )
                .filter(|&n| n <= target)
                .ok_or_else(|| Error::Config(format!("deconv layer {j} cannot restore length {target}")))?;
                let y = tape.deconv1d(
                    x,
                    p.0[ids.weight],
                    p.0[ids.bias],
                    layer.stride,
                    layer.padding(),
                    target - natural,
                )?;
                x = if j == 0 { y } else { tape.relu(y) };
            }
            outputs.push(x);
        }
        Ok(TapeDecoding {
            outputs,
            step_outputs,
        })
    }

    /// Anomaly probability on the tape (unclamped logistic output).
    pub fn classify_tape(&self, tape: &mut Tape, p: &BoundParams, code: Var) -> Result<Var> {
        let ids = self
            .classifier
            .ok_or_else(|| Error::Capability("model has no classifier head".into()))?;
        let logit = tape.linear(code, p.0[ids.weight], p.0[ids.bias])?;
        Ok(tape.sigmoid(logit))
    }

    /// Sum over scales of the mean squared reconstruction error.
    pub fn loss_tape(&self, tape: &mut Tape, inputs: &[Var], recon: &[Var]) -> Result<Var> {
        ensure!(
            inputs.len() == recon.len(),
            Dimension,
            "{} inputs vs {} reconstructions",
            inputs.len(),
            recon.len()
        );
        let terms = inputs
            .iter()
            .zip(recon)
            .map(|(&x, &r)| tape.mse(r, x))
            .collect::<Result<Vec<_>>>()?;
        tape.sum(&terms)
    }

    fn leaf_inputs(tape: &mut Tape, inputs: &[Tensor]) -> Result<Vec<Var>> {
        inputs
            .iter()
            .map(|t| tape.constant(t.shape(), t.data().to_vec()))
            .collect()
    }

    /// Encodes one fragment. Returns the code and the final conv activations
    /// per scale.
    pub fn encode(&self, fragment: &MultiSeries, decomp: Option<&WaveletDecomposition>) -> Result<(GlobalCode, Vec<Tensor>)> {
        let inputs = self.scale_inputs(fragment, decomp)?;
        self.encode_inputs(&inputs)
    }

    pub fn encode_inputs(&self, inputs: &[Tensor]) -> Result<(GlobalCode, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let p = self.bind(&mut tape, false);
        let vars = Self::leaf_inputs(&mut tape, inputs)?;
        let enc = self.encode_tape(&mut tape, &p, &vars)?;
        let acts = enc.activations.iter().map(|v| tape.to_tensor(*v)).collect();
        Ok((GlobalCode(tape.value(enc.code).to_vec()), acts))
    }

    /// Decodes a code into per-scale reconstructions. Training mode needs the
    /// encoder activations as teacher data; inference mode must not get any.
    pub fn decode(&self, code: &GlobalCode, teacher: Option<&[Tensor]>, mode: DecodeMode) -> Result<Vec<Tensor>> {
        match (mode, teacher) {
            (DecodeMode::Training, None) => {
                return Err(Error::Contract("training-mode decode needs teacher activations".into()))
            }
            (DecodeMode::Inference, Some(_)) => {
                return Err(Error::Contract("inference-mode decode takes no teacher activations".into()))
            }
            _ => {}
        }
        let mut tape = Tape::new();
        let p = self.bind(&mut tape, false);
        let code_var = tape.constant(&[code.len()], code.0.clone())?;
        let columns = match teacher {
            Some(acts) => {
                let mut all = Vec::with_capacity(acts.len());
                for a in acts {
                    let v = tape.constant(a.shape(), a.data().to_vec())?;
                    let (_, cols) = a.dims2()?;
                    all.push((0..cols).map(|t| tape.column(v, t)).collect::<Result<Vec<_>>>()?);
                }
                Some(all)
            }
            None => None,
        };
        let out = self.decode_tape(&mut tape, &p, code_var, columns.as_deref())?.outputs;
        Ok(out.iter().map(|v| tape.to_tensor(*v)).collect())
    }

    /// Anomaly probability, clamped to `[ε, 1 − ε]`.
    pub fn classify(&self, code: &GlobalCode) -> Result<f64> {
        ensure!(
            code.len() == self.config.code_len(),
            Dimension,
            "code has length {}, model expects {}",
            code.len(),
            self.config.code_len()
        );
        let mut tape = Tape::new();
        let p = self.bind(&mut tape, false);
        let code_var = tape.constant(&[code.len()], code.0.clone())?;
        let prob = self.classify_tape(&mut tape, &p, code_var)?;
        Ok(tape.scalar(prob).clamp(BCE_EPS, 1.0 - BCE_EPS))
    }

    /// Reconstruction loss of one fragment and its gradient with respect to
    /// every parameter, in store order. Training mode teacher-forces the
    /// decoder; inference mode runs it autoregressively.
    pub fn loss_and_gradients(&self, inputs: &[Tensor], mode: DecodeMode) -> Result<(f64, Vec<Vec<f64>>)> {
        let mut tape = Tape::new();
        let p = self.bind(&mut tape, true);
        let vars = Self::leaf_inputs(&mut tape, inputs)?;
        let enc = self.encode_tape(&mut tape, &p, &vars)?;
        let teacher = (mode == DecodeMode::Training).then_some(enc.columns.as_slice());
        let dec = self.decode_tape(&mut tape, &p, enc.code, teacher)?;
        let loss = self.loss_tape(&mut tape, &vars, &dec.outputs)?;
        let grads = tape.backward(loss)?;
        let per_param = p
            .0
            .iter()
            .zip(&self.params)
            .map(|(v, t)| grads.get(*v).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec))
            .collect();
        Ok((tape.scalar(loss), per_param))
    }

    /// Reconstruction loss without gradients.
    pub fn loss(&self, inputs: &[Tensor], mode: DecodeMode) -> Result<f64> {
        let mut tape = Tape::new();
        let p = self.bind(&mut tape, false);
        let vars = Self::leaf_inputs(&mut tape, inputs)?;
        let enc = self.encode_tape(&mut tape, &p, &vars)?;
        let teacher = (mode == DecodeMode::Training).then_some(enc.columns.as_slice());
        let dec = self.decode_tape(&mut tape, &p, enc.code, teacher)?;
        let loss = self.loss_tape(&mut tape, &vars, &dec.outputs)?;
        Ok(tape.scalar(loss))
    }

    /// Encode then decode autoregressively; returns scale inputs alongside
    /// their reconstructions.
    pub fn reconstruct(&self, fragment: &MultiSeries) -> Result<(Vec<Tensor>, Vec<Tensor>)> {
        let inputs = self.scale_inputs(fragment, None)?;
        let (code, _) = self.encode_inputs(&inputs)?;
        let recon = self.decode(&code, None, DecodeMode::Inference)?;
        Ok((inputs, recon))
    }
}

/// Sum over scales of the mean squared error between inputs and
/// reconstructions.
pub fn reconstruction_loss(inputs: &[Tensor], recon: &[Tensor]) -> Result<f64> {
    ensure!(
        !inputs.is_empty() && inputs.len() == recon.len(),
        Dimension,
        "{} inputs vs {} reconstructions",
        inputs.len(),
        recon.len()
    );
    inputs
        .iter()
        .zip(recon)
        .map(|(x, r)| crate::numerics::mse_loss(r, x))
        .sum()
}
