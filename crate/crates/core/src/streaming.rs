//! Simulated deployment: a sliding window of `T_w / T_s` blocks is
//! classified on every new block, and each prediction is a vote for every
//! block in the window.
//!
//! A block is finalized when it has collected exactly `T_w / T_s` votes,
//! which happens on the push that makes it the oldest block of the window.
//! Blocks `0 .. T_w/T_s − 1` leave the window before collecting a full tally
//! and, like the last `T_w/T_s − 1` blocks of a finite stream, only ever
//! carry preliminary verdicts.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::{label_block, AnomalyRanges, MultiSeries};
use crate::error::{ensure, Error, Result};
use crate::metrics::{compute_metrics, MetricsReport};
use crate::training::DetectorState;

/// The vote thresholds of the standard sweep, `0.1, 0.2, …, 0.9`.
pub const SWEEP_THRESHOLDS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoteConfig {
    /// Window length `T_w` in samples.
    pub window: usize,
    /// Block length `T_s` in samples.
    pub step: usize,
    /// Minimum positive-vote fraction `τ_vote` for a positive verdict.
    pub vote_threshold: f64,
}

impl Default for VoteConfig {
    fn default() -> Self {
        Self {
            window: 512,
            step: 16,
            vote_threshold: 0.5,
        }
    }
}

impl VoteConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.step >= 1, Config, "block length must be positive");
        ensure!(
            self.window.is_multiple_of(self.step),
            Config,
            "block length {} does not divide window {}",
            self.step,
            self.window
        );
        ensure!(
            self.window / self.step >= 4,
            Config,
            "window {} must span at least 4 blocks of {}",
            self.window,
            self.step
        );
        ensure!(
            self.vote_threshold > 0.0 && self.vote_threshold <= 1.0,
            Config,
            "vote threshold {} outside (0, 1]",
            self.vote_threshold
        );
        Ok(())
    }

    /// Votes a block needs before it is finalized.
    pub fn votes_per_block(&self) -> usize {
        self.window / self.step
    }
}

/// `1` iff `positive / total ≥ τ_vote`.
pub fn vote_decide(positive: usize, total: usize, vote_threshold: f64) -> Result<u8> {
    ensure!(total >= 1, Contract, "a verdict needs at least one vote");
    ensure!(positive <= total, Contract, "{positive} positive votes out of {total}");
    Ok(u8::from(positive as f64 / total as f64 >= vote_threshold))
}

/// Anything that labels a `C × T_w` window.
pub trait WindowClassifier {
    fn channels(&self) -> usize;
    fn window_length(&self) -> usize;
    fn classify_window(&self, window: &MultiSeries) -> Result<u8>;
}

impl WindowClassifier for DetectorState {
    fn channels(&self) -> usize {
        DetectorState::channels(self)
    }

    fn window_length(&self) -> usize {
        self.fragment_length()
    }

    fn classify_window(&self, window: &MultiSeries) -> Result<u8> {
        Ok(self.predict_fragment(window)?.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockVerdict {
    pub block_index: usize,
    pub verdict: u8,
    pub votes_positive: usize,
    pub votes_total: usize,
}

/// Verdicts produced by one push.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PushOutcome {
    /// Blocks that reached a full tally on this push.
    pub finals: Vec<BlockVerdict>,
    /// Blocks that left the window on this push without a full tally.
    pub expired: Vec<BlockVerdict>,
    /// Current verdicts of the blocks still in the window.
    pub preliminary: Vec<BlockVerdict>,
}

#[derive(Debug, Clone, Copy)]
struct Tally {
    block: usize,
    positive: usize,
    total: usize,
}

/// Incremental vote bookkeeping for one stream.
#[derive(Debug, Clone)]
pub struct VoteState {
    cfg: VoteConfig,
    channels: usize,
    blocks: VecDeque<Vec<f64>>,
    tallies: VecDeque<Tally>,
    pushed: usize,
    names: Vec<String>,
    sample_period: f64,
}

impl VoteState {
    pub fn new(cfg: VoteConfig, channels: usize) -> Result<Self> {
        cfg.validate()?;
        ensure!(channels >= 1, Config, "stream needs at least one channel");
        Ok(Self {
            cfg,
            channels,
            blocks: VecDeque::new(),
            tallies: VecDeque::new(),
            pushed: 0,
            names: (0..channels).map(|c| format!("ch{c}")).collect(),
            sample_period: crate::data::DEFAULT_SAMPLE_PERIOD,
        })
    }

    pub fn config(&self) -> &VoteConfig {
        &self.cfg
    }

    /// Blocks pushed so far.
    pub fn blocks_pushed(&self) -> usize {
        self.pushed
    }

    fn verdict(&self, t: &Tally) -> Result<BlockVerdict> {
        Ok(BlockVerdict {
            block_index: t.block,
            verdict: vote_decide(t.positive, t.total, self.cfg.vote_threshold)?,
            votes_positive: t.positive,
            votes_total: t.total,
        })
    }

    /// Pushes one block of `channels × T_s` values, channel-major.
    pub fn push_block(&mut self, classifier: &dyn WindowClassifier, block: &[f64]) -> Result<PushOutcome> {
        let step = self.cfg.step;
        ensure!(
            block.len() == self.channels * step,
            Dimension,
            "block has {} values, expected {} channels × {step}",
            block.len(),
            self.channels
        );
        let per_block = self.cfg.votes_per_block();
        self.blocks.push_back(block.to_vec());
        self.tallies.push_back(Tally {
            block: self.pushed,
            positive: 0,
            total: 0,
        });
        self.pushed += 1;
        let mut out = PushOutcome::default();
        if self.blocks.len() > per_block {
            self.blocks.pop_front();
        }
        if self.blocks.len() < per_block {
            return Ok(out);
        }
        let window = self.assemble_window()?;
        let vote = usize::from(classifier.classify_window(&window)? == 1);
        for t in self.tallies.iter_mut() {
            t.positive += vote;
            t.total += 1;
        }
        if self.tallies.len() == per_block {
            let front = self.tallies.pop_front().expect("window is full");
            if front.total == per_block {
                out.finals.push(self.verdict(&front)?);
            } else {
                out.expired.push(self.verdict(&front)?);
            }
        }
        for t in &self.tallies {
            out.preliminary.push(self.verdict(t)?);
        }
        Ok(out)
    }

    fn assemble_window(&self) -> Result<MultiSeries> {
        let step = self.cfg.step;
        let len = self.cfg.window;
        let mut data = Vec::with_capacity(self.channels * len);
        for c in 0..self.channels {
            for b in &self.blocks {
                data.extend_from_slice(&b[c * step..(c + 1) * step]);
            }
        }
        MultiSeries::new(self.names.clone(), data, len, self.sample_period)
    }

    /// Preliminary verdicts of every block that never reached a full tally
    /// and is still pending at the end of the stream.
    pub fn finish(&self) -> Result<Vec<BlockVerdict>> {
        self.tallies
            .iter()
            .filter(|t| t.total > 0)
            .map(|t| self.verdict(t))
            .collect()
    }
}

/// Per-block votes from an offline pass over a whole series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockRecord {
    pub block_index: usize,
    pub label: u8,
    pub votes_positive: usize,
    pub votes_total: usize,
    /// Whether the block collected a full tally.
    pub finalized: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub config: VoteConfig,
    pub blocks: Vec<BlockRecord>,
}

impl SimulationResult {
    /// Final verdicts at `τ_vote` for finalized blocks, `None` elsewhere.
    pub fn verdicts(&self, vote_threshold: f64) -> Result<Vec<Option<u8>>> {
        self.blocks
            .iter()
            .map(|b| {
                if b.finalized {
                    vote_decide(b.votes_positive, b.votes_total, vote_threshold).map(Some)
                } else {
                    Ok(None)
                }
            })
            .collect()
    }

    /// Metrics over finalized blocks at `τ_vote`.
    pub fn metrics(&self, vote_threshold: f64) -> Result<MetricsReport> {
        let verdicts = self.verdicts(vote_threshold)?;
        let (preds, labels): (Vec<u8>, Vec<u8>) = verdicts
            .iter()
            .zip(&self.blocks)
            .filter_map(|(v, b)| v.map(|v| (v, b.label)))
            .unzip();
        ensure!(
            !preds.is_empty(),
            Data,
            "no block was finalized; the series needs at least {} blocks",
            2 * self.config.votes_per_block() - 1
        );
        compute_metrics(&preds, &labels)
    }

    /// One metrics row per vote threshold.
    pub fn sweep(&self, thresholds: &[f64]) -> Result<Vec<(f64, MetricsReport)>> {
        thresholds.iter().map(|&t| Ok((t, self.metrics(t)?))).collect()
    }

    /// Block report: one row per block, then a summary row.
    pub fn report_csv(&self) -> Result<String> {
        let tau = self.config.vote_threshold;
        let mut s = String::from("block_index,label,final_verdict,votes_positive,votes_total\n");
        for (b, v) in self.blocks.iter().zip(self.verdicts(tau)?) {
            let v = v.map_or_else(String::new, |v| v.to_string());
            let _ = writeln!(s, "{},{},{v},{},{}", b.block_index, b.label, b.votes_positive, b.votes_total);
        }
        let m = self.metrics(tau)?;
        let _ = writeln!(
            s,
            "summary,tau_vote={tau},tp={},fp={},tn={},fn={},accuracy={:.6},precision={:.6},recall={:.6},f1={:.6}",
            m.tp, m.fp, m.tn, m.fn_, m.accuracy, m.precision, m.recall, m.f1
        );
        Ok(s)
    }
}

/// Sweep table: header `tau_vote,<metrics columns>` and one row per threshold.
pub fn sweep_csv(rows: &[(f64, MetricsReport)]) -> String {
    let mut s = format!("tau_vote,{}\n", MetricsReport::CSV_HEADER);
    for (t, m) in rows {
        let _ = writeln!(s, "{t:.1},{}", m.csv_row());
    }
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Offline pass over a recorded series. Every full window is classified
/// once; each block's tally is then counted directly from the windows that
/// contain it.
pub fn simulate(
    series: &MultiSeries,
    ranges: &AnomalyRanges,
    classifier: &dyn WindowClassifier,
    cfg: VoteConfig,
) -> Result<SimulationResult> {
    cfg.validate()?;
    ensure!(
        series.channels() == classifier.channels(),
        Dimension,
        "series has {} channels, detector expects {}",
        series.channels(),
        classifier.channels()
    );
    ensure!(
        classifier.window_length() == cfg.window,
        Config,
        "detector fragment length {} differs from window {}",
        classifier.window_length(),
        cfg.window
    );
    ensure!(
        series.len() >= cfg.window,
        Data,
        "series of length {} is shorter than one window ({})",
        series.len(),
        cfg.window
    );
    let w = cfg.votes_per_block();
    let n_blocks = series.len() / cfg.step;
    // window_votes[e] is the prediction for the window ending at block e.
    let mut window_votes = vec![0usize; n_blocks];
    for (e, vote) in window_votes.iter_mut().enumerate().skip(w - 1) {
        let start = (e + 1 - w) * cfg.step;
        *vote = usize::from(classifier.classify_window(&series.window(start, cfg.window)?)? == 1);
    }
    let blocks = (0..n_blocks)
        .map(|j| {
            let first = j.max(w - 1);
            let last = (j + w - 1).min(n_blocks - 1);
            let (positive, total) = if first <= last {
                (window_votes[first..=last].iter().sum(), last - first + 1)
            } else {
                (0, 0)
            };
            BlockRecord {
                block_index: j,
                label: label_block(j * cfg.step..(j + 1) * cfg.step, ranges),
                votes_positive: positive,
                votes_total: total,
                finalized: total == w,
            }
        })
        .collect();
    Ok(SimulationResult { config: cfg, blocks })
}

/// Streams `series` through a [`VoteState`] block by block. Returns the
/// final verdicts in block order.
pub fn stream_series(series: &MultiSeries, classifier: &dyn WindowClassifier, cfg: VoteConfig) -> Result<Vec<BlockVerdict>> {
    let mut state = VoteState::new(cfg, series.channels())?;
    state.names = series.channel_names().to_vec();
    state.sample_period = series.sample_period();
    let mut finals = Vec::new();
    for b in 0..series.len() / cfg.step {
        let block = series.window(b * cfg.step, cfg.step)?;
        finals.extend(state.push_block(classifier, block.data())?.finals);
    }
    Ok(finals)
}
