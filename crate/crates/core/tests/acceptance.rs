//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use waveletae::data::{
    load_ranges, load_signals, make_fragments, split_chronological, synth_generate, write_ranges, write_signals,
    AnomalyRanges, Fragment, FragmentSpec, MultiSeries, SynthConfig,
};
use waveletae::metrics::{compute_metrics, MetricsReport};
use waveletae::model::{build_model, ConvLayer, ConvSpec, DecodeMode, ModelConfig, WaveletAEModel};
use waveletae::numerics::{AdamState, Tensor};
use waveletae::streaming::{
    simulate, stream_series, sweep_csv, VoteConfig, WindowClassifier, SWEEP_THRESHOLDS,
};
use waveletae::training::{
    combined_loss, compute_threshold, predict_all, supervised_loss_and_gradients, train_semi_supervised,
    train_supervised, DetectorState, TrainConfig,
};
use waveletae::wavelet::{decompose, max_levels, mdwd, mra_components, reconstruct, WaveletFamily};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// 1. Perfect reconstruction, energy preservation and orthogonality of the
// per-level time-domain components.
fn wavelet_correctness() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut rec, mut energy, mut ortho) = (0.0f64, 0.0f64, 0.0f64);
    for family in WaveletFamily::ALL {
        for _ in 0..100 {
            let channels = rng.random_range(1..=4);
            let len = 512;
            let levels = rng.random_range(1..=max_levels(len, family));
            let data = normal_vec(&mut rng, channels * len);
            let d = decompose(&data, channels, family, levels).unwrap();
            rec = rec.max(max_abs_diff(reconstruct(&d).unwrap().data(), &data));
            let mra = mra_components(&d).unwrap();
            for c in 0..channels {
                let x = &data[c * len..(c + 1) * len];
                let coeff: f64 = d.details.iter().map(|t| dot(t.row(c), t.row(c))).sum::<f64>()
                    + dot(d.approximation.row(c), d.approximation.row(c));
                let e = dot(x, x);
                energy = energy.max((coeff - e).abs() / e);
                let mut comps: Vec<&[f64]> = mra.details.iter().map(|t| t.row(c)).collect();
                comps.push(mra.approximation.row(c));
                for i in 0..comps.len() {
                    for j in i + 1..comps.len() {
                        ortho = ortho.max(dot(comps[i], comps[j]).abs());
                    }
                }
            }
        }
    }
    let elapsed = t0.elapsed();
    outcome(
        rec <= 1e-9 && energy <= 1e-9 && ortho <= 1e-8 && elapsed < Duration::from_secs(10),
        format!("reconstruction {rec:.1e} <= 1e-9, energy {energy:.1e} <= 1e-9, cross-level {ortho:.1e} <= 1e-8, {elapsed:.1?} < 10s"),
    )
}

fn tiny_autodiff_config() -> ModelConfig {
    ModelConfig {
        channels: 2,
        fragment_length: 16,
        levels: 1,
        conv: "3:3:2".parse().unwrap(),
        lstm_hidden: 3,
        seed: 5,
        ..ModelConfig::new(2)
    }
}

fn random_fragment(rng: &mut ChaCha8Rng, channels: usize, len: usize) -> MultiSeries {
    MultiSeries::anonymous(channels, normal_vec(rng, channels * len), len).unwrap()
}

fn worst_gradient_error(model: &mut WaveletAEModel, inputs: &[Tensor], mode: DecodeMode) -> (f64, usize) {
    let (_, grads) = model.loss_and_gradients(inputs, mode).unwrap();
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut checked = 0;
    for i in 0..model.params().len() {
        for j in 0..model.params()[i].len() {
            let orig = model.params()[i].data()[j];
            model.params_mut()[i].data_mut()[j] = orig + h;
            let up = model.loss(inputs, mode).unwrap();
            model.params_mut()[i].data_mut()[j] = orig - h;
            let down = model.loss(inputs, mode).unwrap();
            model.params_mut()[i].data_mut()[j] = orig;
            let fd = (up - down) / (2.0 * h);
            let a = grads[i][j];
            worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-6));
            checked += 1;
        }
    }
    (worst, checked)
}

// 2. Every analytic gradient against central differences, in both decoder
// modes.
fn autodiff_correctness() -> Outcome {
    let t0 = Instant::now();
    let mut model = build_model(&tiny_autodiff_config()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let frag = random_fragment(&mut rng, 2, 16);
    let inputs = model.scale_inputs(&frag, None).unwrap();
    let (tf, n) = worst_gradient_error(&mut model, &inputs, DecodeMode::Training);
    let (ar, _) = worst_gradient_error(&mut model, &inputs, DecodeMode::Inference);
    let elapsed = t0.elapsed();
    outcome(
        tf <= 1e-4 && ar <= 1e-4 && elapsed < Duration::from_secs(60),
        format!("{n} parameters, worst relative error teacher-forced {tf:.1e} autoregressive {ar:.1e} <= 1e-4, {elapsed:.1?} < 60s"),
    )
}

fn random_valid_config(rng: &mut ChaCha8Rng) -> ModelConfig {
    loop {
        let layers = (0..rng.random_range(1..=3))
            .map(|_| ConvLayer {
                kernel: 2 * rng.random_range(0..=3) + 1,
                features: rng.random_range(1..=6),
                stride: rng.random_range(1..=2),
            })
            .collect();
        let cfg = ModelConfig {
            channels: rng.random_range(1..=4),
            fragment_length: 1 << rng.random_range(4..=7),
            levels: rng.random_range(0..=3),
            family: WaveletFamily::ALL[rng.random_range(0..2)],
            conv: ConvSpec(layers),
            lstm_hidden: rng.random_range(1..=6),
            classifier: rng.random_bool(0.5),
            seed: rng.random(),
        };
        if cfg.validate().is_ok() {
            return cfg;
        }
    }
}

// 3. Overfitting one fragment and shape closure of the full encode/decode
// path on random configurations.
fn architecture_wiring() -> Outcome {
    let cfg = ModelConfig {
        channels: 2,
        fragment_length: 32,
        levels: 1,
        conv: "3:8:2".parse().unwrap(),
        lstm_hidden: 8,
        seed: 1,
        ..ModelConfig::new(2)
    };
    let mut model = build_model(&cfg).unwrap();
    let data: Vec<f64> = (0..64).map(|i| ((i % 32) as f64 * 0.3 + (i / 32) as f64).sin()).collect();
    let frag = MultiSeries::anonymous(2, data, 32).unwrap();
    let inputs = model.scale_inputs(&frag, None).unwrap();
    let initial = model.loss(&inputs, DecodeMode::Training).unwrap();
    let mut adam = AdamState::new(0.01);
    for _ in 0..500 {
        let (_, grads) = model.loss_and_gradients(&inputs, DecodeMode::Training).unwrap();
        model.zero_grad();
        for (t, g) in model.params_mut().iter_mut().zip(&grads) {
            t.accumulate_grad(g).unwrap();
        }
        adam.step(model.params_mut()).unwrap();
    }
    let last = model.loss(&inputs, DecodeMode::Training).unwrap();
    let ratio = initial / last;

    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut closed = 0;
    for _ in 0..20 {
        let cfg = random_valid_config(&mut rng);
        let model = build_model(&cfg).unwrap();
        let frag = random_fragment(&mut rng, cfg.channels, cfg.fragment_length);
        let (inputs, recon) = model.reconstruct(&frag).unwrap();
        let (code, teacher) = model.encode_inputs(&inputs).unwrap();
        let forced = model.decode(&code, Some(&teacher), DecodeMode::Training).unwrap();
        let ok = code.len() == cfg.code_len()
            && inputs.len() == cfg.levels + 1
            && inputs.iter().enumerate().all(|(l, x)| x.shape() == [cfg.channels, cfg.fragment_length >> l])
            && inputs.iter().zip(&recon).all(|(x, r)| x.shape() == r.shape())
            && inputs.iter().zip(&forced).all(|(x, r)| x.shape() == r.shape());
        closed += usize::from(ok);
    }
    outcome(
        ratio >= 100.0 && closed == 20,
        format!("overfit loss {initial:.3e} -> {last:.3e} ({ratio:.0}x >= 100x in 500 steps), shape closure {closed}/20"),
    )
}

// 4. Threshold scaling, the loss combination identity on the model itself,
// and the exact threshold of the reference list.
fn threshold_and_loss_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut homog = 0.0f64;
    let mut affine = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..50);
        let losses: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..5.0)).collect();
        let k = rng.random_range(0.01..100.0);
        let beta = rng.random_range(1.0..=2.0);
        let base = compute_threshold(&losses, beta).unwrap();
        let scaled: Vec<f64> = losses.iter().map(|l| l * k).collect();
        let t = compute_threshold(&scaled, beta).unwrap();
        homog = homog.max((t - k * base).abs() / (k * base).max(f64::MIN_POSITIVE));
        let (a, re, c) = (rng.random_range(0.0..=1.0), rng.random_range(0.0..10.0), rng.random_range(0.0..10.0));
        affine = affine.max((combined_loss(a, re, c) - (a * re + (1.0 - a) * c)).abs());
    }

    // The supervised objective against its separately evaluated parts.
    let cfg = ModelConfig {
        classifier: true,
        ..tiny_autodiff_config()
    };
    let model = build_model(&cfg).unwrap();
    let mut model_affine = 0.0f64;
    for _ in 0..20 {
        let frag = random_fragment(&mut rng, 2, 16);
        let inputs = model.scale_inputs(&frag, None).unwrap();
        let label = rng.random_range(0..=1u8);
        let alpha = rng.random_range(0.0..=1.0);
        let re = model.loss(&inputs, DecodeMode::Training).unwrap();
        let (code, _) = model.encode_inputs(&inputs).unwrap();
        let p = model.classify(&code).unwrap();
        let bce = if label == 1 { -p.ln() } else { -(1.0 - p).ln() };
        let (total, grads) = supervised_loss_and_gradients(&model, &inputs, label, alpha).unwrap();
        let (_, g_re) = supervised_loss_and_gradients(&model, &inputs, label, 1.0).unwrap();
        let (_, g_c) = supervised_loss_and_gradients(&model, &inputs, label, 0.0).unwrap();
        model_affine = model_affine.max((total - (alpha * re + (1.0 - alpha) * bce)).abs());
        for ((g, r), c) in grads.iter().flatten().zip(g_re.iter().flatten()).zip(g_c.iter().flatten()) {
            model_affine = model_affine.max((g - (alpha * r + (1.0 - alpha) * c)).abs());
        }
    }
    let exact = compute_threshold(&[0.1, 0.2, 0.3], 1.5).unwrap();
    outcome(
        homog <= 1e-12 && affine <= 1e-12 && model_affine <= 1e-12 && exact == 0.3,
        format!(
            "homogeneity {homog:.1e}, combination {affine:.1e}, model objective and gradients {model_affine:.1e} <= 1e-12, threshold([0.1,0.2,0.3],1.5) = {exact:?}"
        ),
    )
}

// 5. The augmentation example at two sampling rates, checked against the
// expected fragment offsets.
fn augmentation_fidelity() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    for per_minute in [1usize, 6] {
        let hour = 60 * per_minute;
        let series = MultiSeries::anonymous(1, vec![0.0; 10 * hour], 10 * hour).unwrap();
        let ranges = AnomalyRanges::new(vec![8 * hour..10 * hour]).unwrap();
        let step = 10 * per_minute;
        let spec = FragmentSpec {
            window: hour,
            neg_step: hour,
            pos_step: step,
        };
        let frags = make_fragments(&series, &ranges, spec).unwrap();
        let offsets = |label: u8| -> Vec<usize> {
            frags.iter().filter(|f| f.label == label).map(|f| f.origin_offset).collect()
        };
        let want_neg: Vec<usize> = (0..8).map(|i| i * hour).collect();
        let want_pos: Vec<usize> = (0..7).map(|i| 8 * hour + i * step).collect();
        let (neg, pos) = (offsets(0), offsets(1));
        pass &= neg == want_neg && pos == want_pos;
        details.push(format!("{} samples/min: {} negative {} positive", per_minute, neg.len(), pos.len()));
    }
    outcome(pass, format!("{} (want 8 and 7 at the expected offsets)", details.join(", ")))
}

/// Positive when the window mean of channel 0 exceeds `cut`.
struct MeanCut {
    channels: usize,
    window: usize,
    cut: f64,
}

impl WindowClassifier for MeanCut {
    fn channels(&self) -> usize {
        self.channels
    }

    fn window_length(&self) -> usize {
        self.window
    }

    fn classify_window(&self, window: &MultiSeries) -> waveletae::Result<u8> {
        let x = window.channel(0);
        Ok(u8::from(x.iter().sum::<f64>() / x.len() as f64 > self.cut))
    }
}

// 6. Streaming against the offline pass and a brute-force tally, plus the
// sweep's shape and monotonicity.
fn voting_engine() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut equal = 0;
    let mut counts_ok = true;
    let mut monotone = true;
    let mut table_ok = true;
    for _ in 0..10 {
        let step = [4usize, 8, 16][rng.random_range(0..3)];
        let per = rng.random_range(4..=8);
        let window = step * per;
        let channels = rng.random_range(1..=3);
        let n_blocks = rng.random_range(2 * per..6 * per);
        let len = n_blocks * step;
        // A random walk gives runs of positive and negative windows.
        let mut level = 0.0;
        let mut data = Vec::with_capacity(channels * len);
        for _ in 0..channels {
            for _ in 0..len {
                level += rng.sample::<f64, _>(StandardNormal) * 0.3;
                data.push(level);
            }
        }
        let series = MultiSeries::anonymous(channels, data, len).unwrap();
        let clf = MeanCut {
            channels,
            window,
            cut: series.channel(0).iter().sum::<f64>() / len as f64,
        };
        let a = rng.random_range(0..len / 2);
        let ranges = AnomalyRanges::new(vec![a..a + len / 3]).unwrap();
        let cfg = VoteConfig {
            window,
            step,
            vote_threshold: rng.random_range(1..=9) as f64 / 10.0,
        };
        let sim = simulate(&series, &ranges, &clf, cfg).unwrap();
        let streamed = stream_series(&series, &clf, cfg).unwrap();
        let batch: Vec<(usize, u8, usize, usize)> = sim
            .blocks
            .iter()
            .zip(sim.verdicts(cfg.vote_threshold).unwrap())
            .filter_map(|(b, v)| v.map(|v| (b.block_index, v, b.votes_positive, b.votes_total)))
            .collect();
        let stream: Vec<(usize, u8, usize, usize)> = streamed
            .iter()
            .map(|v| (v.block_index, v.verdict, v.votes_positive, v.votes_total))
            .collect();
        equal += usize::from(batch == stream);

        // Brute force: every window lying inside the series that covers the block.
        for b in &sim.blocks {
            let covering: Vec<usize> = (0..=len - window)
                .step_by(step)
                .filter(|&s| s <= b.block_index * step && (b.block_index + 1) * step <= s + window)
                .collect();
            let positive = covering
                .iter()
                .filter(|&&s| clf.classify_window(&series.window(s, window).unwrap()).unwrap() == 1)
                .count();
            let full = covering.len() == per;
            counts_ok &= b.finalized == full && b.votes_total == covering.len() && b.votes_positive == positive;
        }

        let rows = sim.sweep(&SWEEP_THRESHOLDS).unwrap();
        let positives: Vec<Vec<usize>> = SWEEP_THRESHOLDS
            .iter()
            .map(|&t| {
                sim.verdicts(t)
                    .unwrap()
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v == Some(1))
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect();
        monotone &= positives.windows(2).all(|w| w[1].iter().all(|i| w[0].contains(i)));
        let csv = sweep_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        table_ok &= lines.len() == 10
            && lines[0] == format!("tau_vote,{}", MetricsReport::CSV_HEADER)
            && lines[1..].iter().zip(1..=9).all(|(l, k)| {
                l.starts_with(&format!("0.{k},")) && l.split(',').count() == MetricsReport::CSV_HEADER.split(',').count() + 1
            });
    }
    outcome(
        equal == 10 && counts_ok && monotone && table_ok,
        format!(
            "stream == batch {equal}/10, tallies {} the brute-force count, positives {} as tau_vote rises, sweep table {}",
            if counts_ok { "match" } else { "differ from" },
            if monotone { "shrink" } else { "do not shrink" },
            if table_ok { "9 rows" } else { "malformed" }
        ),
    )
}

struct Pipeline {
    severity: f64,
    test: Vec<Fragment>,
    sup: DetectorState,
    semi: DetectorState,
    elapsed: Duration,
}

/// Both detectors trained on the first 60% of the default generator output,
/// shared by every criterion that needs them.
fn pipeline() -> &'static Pipeline {
    static CELL: OnceLock<Pipeline> = OnceLock::new();
    CELL.get_or_init(|| {
        let t0 = Instant::now();
        let synth = SynthConfig::default();
        let (series, ranges) = synth_generate(&synth, 7).unwrap();
        let parts = split_chronological(&series, &ranges, &[0.6, 0.2, 0.2]).unwrap();
        let spec = FragmentSpec::default();
        let train = make_fragments(&parts[0].series, &parts[0].ranges, spec).unwrap();
        let test = make_fragments(&parts[2].series, &parts[2].ranges, spec).unwrap();
        let model = ModelConfig {
            seed: 7,
            ..ModelConfig::new(synth.channels)
        };
        let normal: Vec<Fragment> = train.iter().filter(|f| f.label == 0).cloned().collect();
        let (sup, semi) = std::thread::scope(|s| {
            let sup = s.spawn(|| train_supervised(&train, &TrainConfig::supervised(model.clone())).unwrap().0);
            let semi = s.spawn(|| train_semi_supervised(&normal, &TrainConfig::semi_supervised(model.clone())).unwrap().0);
            (sup.join().unwrap(), semi.join().unwrap())
        });
        Pipeline {
            severity: synth.severity,
            test,
            sup,
            semi,
            elapsed: t0.elapsed(),
        }
    })
}

// 7. Fragment metrics of both detectors on the last 20%.
fn end_to_end() -> Outcome {
    let p = pipeline();
    let t0 = Instant::now();
    let labels: Vec<u8> = p.test.iter().map(|f| f.label).collect();
    let sup_m = compute_metrics(&predict_all(&p.sup, &p.test).unwrap().0, &labels).unwrap();
    let semi_m = compute_metrics(&predict_all(&p.semi, &p.test).unwrap().0, &labels).unwrap();
    let elapsed = p.elapsed + t0.elapsed();
    outcome(
        sup_m.f1 >= 0.85 && semi_m.recall >= 0.9 && elapsed < Duration::from_secs(900),
        format!(
            "seed 7 severity {}: supervised F1 {:.4} >= 0.85, semi-supervised recall {:.4} >= 0.9 at beta {}, {} test fragments, {elapsed:.1?} < 15min",
            p.severity, sup_m.f1, semi_m.recall, p.semi.beta, p.test.len()
        ),
    )
}

// 7a. A normal-only generator run: train on the first 60%, then score the
// held-out 40% against tau_anom.
fn held_out_normals() -> Outcome {
    let synth = SynthConfig {
        anomaly_count: 0,
        ..SynthConfig::default()
    };
    let (series, ranges) = synth_generate(&synth, 7).unwrap();
    let parts = split_chronological(&series, &ranges, &[0.6, 0.4]).unwrap();
    let spec = FragmentSpec::default();
    let train = make_fragments(&parts[0].series, &parts[0].ranges, spec).unwrap();
    let held_out = make_fragments(&parts[1].series, &parts[1].ranges, spec).unwrap();
    let model = ModelConfig {
        seed: 7,
        ..ModelConfig::new(synth.channels)
    };
    let semi = train_semi_supervised(&train, &TrainConfig::semi_supervised(model)).unwrap().0;
    let tau = semi.threshold.unwrap();
    let (_, scores) = predict_all(&semi, &held_out).unwrap();
    let below = scores.iter().filter(|&&s| s < tau).count();
    let share = below as f64 / scores.len() as f64;
    outcome(
        share >= 0.9,
        format!(
            "{} training fragments, {below}/{} held-out below tau_anom {tau:.5} ({:.1}% >= 90%)",
            train.len(),
            scores.len(),
            100.0 * share
        ),
    )
}

fn training_fragments(rng: &mut ChaCha8Rng, channels: usize, len: usize, n: usize, label: u8) -> Vec<Fragment> {
    (0..n)
        .map(|i| Fragment {
            values: random_fragment(rng, channels, len),
            label,
            origin_offset: i * len,
        })
        .collect()
}

fn container_round_trip(dir: &Path, state: &DetectorState, probe: &[Fragment]) -> bool {
    let path = dir.join(format!("{}.wae", state.mode.name()));
    state.save(&path).unwrap();
    let bytes = fs::read(&path).unwrap();
    let back = DetectorState::load(&path).unwrap();
    let again = back.to_bytes().unwrap();
    let weights_match = state
        .model
        .params()
        .iter()
        .zip(back.model.params())
        .all(|(a, b)| a.shape() == b.shape() && a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    let f32_exact = back.model.params().iter().flat_map(|t| t.data()).all(|&v| f64::from(v as f32) == v);
    let (_, s1) = predict_all(state, probe).unwrap();
    let (_, s2) = predict_all(&back, probe).unwrap();
    bytes == again
        && weights_match
        && f32_exact
        && s1.iter().zip(&s2).all(|(a, b)| a.to_bits() == b.to_bits())
        && back.threshold.map(f64::to_bits) == state.threshold.map(f64::to_bits)
}

// 8. Byte-exact save/load of detectors and every file format the tools
// read back.
fn serialization() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let model = ModelConfig {
        fragment_length: 32,
        levels: 2,
        family: WaveletFamily::Daubechies4,
        conv: "3:4:2".parse().unwrap(),
        lstm_hidden: 4,
        ..ModelConfig::new(3)
    };
    let normal = training_fragments(&mut rng, 3, 32, 4, 0);
    let mut labeled = normal.clone();
    labeled.extend(training_fragments(&mut rng, 3, 32, 4, 1));
    let semi_cfg = TrainConfig {
        epochs: 2,
        ..TrainConfig::semi_supervised(model.clone())
    };
    let sup_cfg = TrainConfig {
        epochs: 2,
        ..TrainConfig::supervised(model)
    };
    let semi = train_semi_supervised(&normal, &semi_cfg).unwrap().0;
    let sup = train_supervised(&labeled, &sup_cfg).unwrap().0;
    let containers = container_round_trip(dir.path(), &semi, &labeled) && container_round_trip(dir.path(), &sup, &labeled);

    let synth = SynthConfig {
        hours: 6.0,
        channels: 4,
        anomaly_count: 1,
        ..SynthConfig::default()
    };
    let (series, ranges) = synth_generate(&synth, 11).unwrap();
    let rewrite = |name: &str, write: &dyn Fn(&Path), read_write: &dyn Fn(&Path, &Path)| -> bool {
        let a = dir.path().join(format!("{name}.a"));
        let b = dir.path().join(format!("{name}.b"));
        write(&a);
        read_write(&a, &b);
        fs::read(&a).unwrap() == fs::read(&b).unwrap()
    };
    let signals = rewrite(
        "signals",
        &|p| write_signals(p, &series).unwrap(),
        &|a, b| {
            let s = load_signals(a).unwrap();
            assert!(s.data().iter().zip(series.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
            write_signals(b, &s).unwrap()
        },
    );
    let range_file = rewrite(
        "ranges",
        &|p| write_ranges(p, &ranges).unwrap(),
        &|a, b| write_ranges(b, &load_ranges(a).unwrap()).unwrap(),
    );
    let cfg_file = rewrite(
        "synth",
        &|p| fs::write(p, synth.to_text()).unwrap(),
        &|a, b| fs::write(b, SynthConfig::load(a).unwrap().to_text()).unwrap(),
    );

    // Coefficient files written by the binary read back to the exact values.
    let window = series.window(0, 512).unwrap();
    let sig = dir.path().join("window.csv");
    write_signals(&sig, &window).unwrap();
    let coef = dir.path().join("coef");
    let status = Command::new(env!("CARGO_BIN_EXE_waveletae"))
        .args(["dwt", sig.to_str().unwrap(), "--family", "db4", "--levels", "3", "--out", coef.to_str().unwrap()])
        .output()
        .unwrap()
        .status;
    let d = mdwd(&window, WaveletFamily::Daubechies4, 3).unwrap();
    let mut coefficients = status.success();
    for (name, t) in d
        .details
        .iter()
        .enumerate()
        .map(|(l, t)| (format!("detail_{}.csv", l + 1), t))
        .chain([("approx_3.csv".to_string(), &d.approximation)])
    {
        let back = load_signals(&coef.join(&name)).unwrap();
        coefficients &= back.data().iter().zip(t.data()).all(|(x, y)| x.to_bits() == y.to_bits())
            && back.data().len() == t.len();
    }

    let mut detail = String::new();
    for (name, ok) in [
        ("containers", containers),
        ("signals", signals),
        ("ranges", range_file),
        ("synth config", cfg_file),
        ("coefficients", coefficients),
    ] {
        let _ = write!(detail, "{}{name} {}", if detail.is_empty() { "" } else { ", " }, if ok { "exact" } else { "differ" });
    }
    outcome(containers && signals && range_file && cfg_file && coefficients, detail)
}

fn main() -> ExitCode {
    // `cargo test` passes harness flags such as `--quiet`; a name filter
    // restricts the run to criteria whose label contains it.
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("1 wavelet correctness", wavelet_correctness),
        ("2 autodiff correctness", autodiff_correctness),
        ("3 architecture wiring", architecture_wiring),
        ("4 threshold and loss algebra", threshold_and_loss_algebra),
        ("5 augmentation fidelity", augmentation_fidelity),
        ("6 voting engine", voting_engine),
        ("7 end-to-end synthetic detection", end_to_end),
        ("7a held-out normal-only fragments under tau_anom", held_out_normals),
        ("8 serialization", serialization),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let o = run();
        failed += usize::from(!o.pass);
        println!("criterion {name}: {} | {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
