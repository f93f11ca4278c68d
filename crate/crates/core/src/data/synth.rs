//! Synthetic SCADA-like turbine signals with labeled icing episodes.
//!
//! A latent wind process drives every channel. Channel 0 measures the wind
//! itself; the other channels cycle through five response types (power,
//! rotor speed, pitch, generator temperature, vibration), each a lagged
//! nonlinear function of the wind plus AR(1) noise. Inside an anomaly the
//! aerodynamic channels lose part of their coupling to the wind (they are
//! blended with a response to an independent wind process and see a reduced
//! effective wind) and every response channel picks up a slow drift bump.
//! `severity` scales all of these perturbations; at 0 they vanish exactly.
//!
//! Three independent random streams are derived from the seed: normal
//! signal, anomaly placement, and the decoupled substitute process. The
//! normal signal therefore does not depend on where anomalies fall.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::fragments::AnomalyRanges;
use super::series::MultiSeries;
use crate::error::{ensure, Error, Result};

/// Generator parameters. Durations are in hours of signal time.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub channels: usize,
    pub hours: f64,
    pub sample_period: f64,
    pub anomaly_count: usize,
    pub anomaly_min_hours: f64,
    pub anomaly_max_hours: f64,
    /// Perturbation strength inside anomalies, in `[0, 2]`.
    pub severity: f64,
    /// Response-channel noise relative to the channel's natural scale.
    pub noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            channels: 8,
            hours: 48.0,
            sample_period: 7.0,
            anomaly_count: 4,
            anomaly_min_hours: 1.5,
            anomaly_max_hours: 2.5,
            severity: 0.6,
            noise: 0.15,
        }
    }
}

const KEYS: [&str; 8] = [
    "channels",
    "hours",
    "sample_period",
    "anomaly_count",
    "anomaly_min_hours",
    "anomaly_max_hours",
    "severity",
    "noise",
];

impl SynthConfig {
    pub fn samples(&self) -> usize {
        (self.hours * 3600.0 / self.sample_period).round() as usize
    }

    fn hours_to_samples(&self, h: f64) -> usize {
        (h * 3600.0 / self.sample_period).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.channels >= 2, Config, "need at least 2 channels (driver + response)");
        ensure!(
            self.sample_period.is_finite() && self.sample_period > 0.0,
            Config,
            "sample period must be positive"
        );
        ensure!(self.hours.is_finite() && self.hours > 0.0, Config, "duration must be positive");
        ensure!(self.samples() >= 2, Config, "duration shorter than two samples");
        ensure!(
            self.anomaly_min_hours > 0.0 && self.anomaly_min_hours <= self.anomaly_max_hours,
            Config,
            "anomaly duration bounds {}..{} h are invalid",
            self.anomaly_min_hours,
            self.anomaly_max_hours
        );
        ensure!(
            (0.0..=2.0).contains(&self.severity),
            Config,
            "severity {} outside [0, 2]",
            self.severity
        );
        ensure!(self.noise >= 0.0 && self.noise.is_finite(), Config, "noise must be non-negative");
        if self.anomaly_count > 0 {
            let segment = self.samples() / self.anomaly_count;
            let longest = self.hours_to_samples(self.anomaly_max_hours);
            ensure!(
                longest + 2 * margin(segment) <= segment,
                Config,
                "{} anomalies of up to {} h do not fit in {} h",
                self.anomaly_count,
                self.anomaly_max_hours,
                self.hours
            );
            ensure!(
                self.hours_to_samples(self.anomaly_min_hours) >= 1,
                Config,
                "anomaly shorter than one sample"
            );
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "channels = {}", self.channels);
        let _ = writeln!(s, "hours = {}", self.hours);
        let _ = writeln!(s, "sample_period = {}", self.sample_period);
        let _ = writeln!(s, "anomaly_count = {}", self.anomaly_count);
        let _ = writeln!(s, "anomaly_min_hours = {}", self.anomaly_min_hours);
        let _ = writeln!(s, "anomaly_max_hours = {}", self.anomaly_max_hours);
        let _ = writeln!(s, "severity = {}", self.severity);
        let _ = writeln!(s, "noise = {}", self.noise);
        s
    }

    /// Parses `key = value` lines; `#` starts a comment. Missing keys keep
    /// their defaults, unknown keys are rejected.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            let k = k.trim();
            ensure!(KEYS.contains(&k), Config, "line {}: unknown key `{k}`", i + 1);
            map.insert(k.to_owned(), v.trim().to_owned());
        }
        let mut cfg = Self::default();
        let num = |k: &str, v: &str| -> Result<f64> {
            v.parse()
                .map_err(|_| Error::Config(format!("`{k}` expects a number, got `{v}`")))
        };
        let int = |k: &str, v: &str| -> Result<usize> {
            v.parse()
                .map_err(|_| Error::Config(format!("`{k}` expects an integer, got `{v}`")))
        };
        for (k, v) in &map {
            match k.as_str() {
                "channels" => cfg.channels = int(k, v)?,
                "hours" => cfg.hours = num(k, v)?,
                "sample_period" => cfg.sample_period = num(k, v)?,
                "anomaly_count" => cfg.anomaly_count = int(k, v)?,
                "anomaly_min_hours" => cfg.anomaly_min_hours = num(k, v)?,
                "anomaly_max_hours" => cfg.anomaly_max_hours = num(k, v)?,
                "severity" => cfg.severity = num(k, v)?,
                "noise" => cfg.noise = num(k, v)?,
                _ => unreachable!("keys are checked above"),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn margin(segment: usize) -> usize {
    segment / 20
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Response {
    Power,
    Rotor,
    Pitch,
    Temperature,
    Vibration,
}

impl Response {
    fn for_channel(c: usize) -> Self {
        [
            Response::Power,
            Response::Rotor,
            Response::Pitch,
            Response::Temperature,
            Response::Vibration,
        ][(c - 1) % 5]
    }

    fn name(self) -> &'static str {
        match self {
            Response::Power => "power",
            Response::Rotor => "rotor_speed",
            Response::Pitch => "pitch_angle",
            Response::Temperature => "gen_temperature",
            Response::Vibration => "vibration",
        }
    }

    fn lag(self) -> usize {
        match self {
            Response::Power => 1,
            Response::Rotor => 2,
            Response::Pitch => 3,
            Response::Temperature => 0,
            Response::Vibration => 1,
        }
    }

    /// Channels whose response is aerodynamic, hence decoupled by icing.
    fn aerodynamic(self) -> bool {
        matches!(self, Response::Power | Response::Rotor | Response::Vibration)
    }

    /// Instantaneous response to wind speed `w` (temperature is filtered later).
    fn curve(self, w: f64, gain: f64) -> f64 {
        match self {
            Response::Power | Response::Temperature => gain * 2000.0 / (1.0 + (-(w - 9.0) / 1.6).exp()),
            Response::Rotor => gain * 1.3 * w.min(12.5),
            Response::Pitch => gain * 2.5 * (w - 10.5).max(0.0),
            Response::Vibration => gain * 0.04 * w * w,
        }
    }

    fn noise_scale(self) -> f64 {
        match self {
            Response::Power | Response::Temperature => 600.0,
            Response::Rotor => 4.0,
            Response::Pitch => 4.0,
            Response::Vibration => 2.0,
        }
    }
}

struct WindProcess {
    level: f64,
}

impl WindProcess {
    const MEAN: f64 = 8.5;
    const SD: f64 = 2.6;

    fn new(rng: &mut ChaCha8Rng) -> Self {
        let z: f64 = rng.sample(StandardNormal);
        Self {
            level: Self::MEAN + Self::SD * z,
        }
    }

    /// Ornstein-Uhlenbeck step with a ~30 min correlation time.
    fn step(&mut self, rng: &mut ChaCha8Rng, relax: f64) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.level += relax * (Self::MEAN - self.level) + Self::SD * (2.0 * relax).sqrt() * z;
        self.level
    }
}

fn wind_series(rng: &mut ChaCha8Rng, n: usize, period: f64) -> Vec<f64> {
    let relax = (period / 1800.0).min(1.0);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let mut p = WindProcess::new(rng);
    (0..n)
        .map(|t| {
            let diurnal = 1.5 * (std::f64::consts::TAU * t as f64 * period / 86_400.0 + phase).sin();
            (p.step(rng, relax) + diurnal).max(0.3)
        })
        .collect()
}

fn lagged(w: &[f64], t: usize, lag: usize) -> f64 {
    w[t.saturating_sub(lag)]
}

fn std_dev(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt()
}

/// Smooth 0→1→0 envelope over a region, with raised-cosine edges.
fn envelope(pos: usize, len: usize) -> f64 {
    let edge = (len / 10).max(1) as f64;
    let p = pos as f64;
    let from_end = (len - 1 - pos) as f64;
    let ramp = |d: f64| {
        if d >= edge {
            1.0
        } else {
            0.5 - 0.5 * (std::f64::consts::PI * d / edge).cos()
        }
    };
    ramp(p).min(ramp(from_end))
}

fn place_anomalies(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<AnomalyRanges> {
    let n = cfg.samples();
    if cfg.anomaly_count == 0 {
        return Ok(AnomalyRanges::empty());
    }
    let segment = n / cfg.anomaly_count;
    let lo = cfg.hours_to_samples(cfg.anomaly_min_hours);
    let hi = cfg.hours_to_samples(cfg.anomaly_max_hours);
    let m = margin(segment);
    let mut intervals = Vec::with_capacity(cfg.anomaly_count);
    for k in 0..cfg.anomaly_count {
        let dur = rng.random_range(lo..=hi);
        let seg_start = k * segment;
        let first = seg_start + m;
        let last = seg_start + segment - m - dur;
        let start = rng.random_range(first..=last);
        intervals.push(start..start + dur);
    }
    AnomalyRanges::new(intervals)
}

/// Generates a series and its anomaly ranges. Deterministic per seed.
pub fn synth_generate(cfg: &SynthConfig, seed: u64) -> Result<(MultiSeries, AnomalyRanges)> {
    cfg.validate()?;
    let n = cfg.samples();
    let mut signal_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut place_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005E_ED0F_A40A_11E5);
    let mut decouple_rng = ChaCha8Rng::seed_from_u64(seed.rotate_left(17) ^ 0xD1CE_C0DE);

    let wind = wind_series(&mut signal_rng, n, cfg.sample_period);
    let alt_wind = wind_series(&mut decouple_rng, n, cfg.sample_period);
    let ranges = place_anomalies(cfg, &mut place_rng)?;

    let temp_alpha = (cfg.sample_period / 900.0).min(1.0);
    let mut names = vec!["wind_speed".to_owned()];
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(cfg.channels);
    rows.push(
        wind.iter()
            .map(|w| w + 0.2 * signal_rng.sample::<f64, _>(StandardNormal))
            .collect(),
    );

    // effect strength per timestamp
    let mut effect = vec![0.0; n];
    let mut bump = vec![0.0; n];
    for r in ranges.intervals() {
        let len = r.end - r.start;
        for (pos, t) in r.clone().enumerate() {
            effect[t] = cfg.severity * envelope(pos, len);
            bump[t] = cfg.severity * (std::f64::consts::PI * (pos as f64 + 0.5) / len as f64).sin();
        }
    }

    for c in 1..cfg.channels {
        let kind = Response::for_channel(c);
        let repeat = (c - 1) / 5;
        names.push(if repeat == 0 {
            kind.name().to_owned()
        } else {
            format!("{}_{}", kind.name(), repeat + 1)
        });
        let gain = 1.0 + 0.08 * repeat as f64;
        let lag = kind.lag() + repeat;
        let phi: f64 = 0.7;
        let sd = cfg.noise * kind.noise_scale() * gain * (1.0 - phi * phi).sqrt();
        let mut ar = 0.0;
        let mut clean = Vec::with_capacity(n);
        let mut noise = Vec::with_capacity(n);
        let mut perturbed = Vec::with_capacity(n);
        for t in 0..n {
            let w = lagged(&wind, t, lag);
            clean.push(kind.curve(w, gain));
            let z: f64 = signal_rng.sample(StandardNormal);
            ar = phi * ar + sd * z;
            noise.push(ar);
            let e = effect[t];
            let v = if kind.aerodynamic() && e > 0.0 {
                let kappa = (0.45 * e).min(0.95);
                let drop = (1.0 - 0.3 * e).max(0.05);
                (1.0 - kappa) * kind.curve(w * drop, gain) + kappa * kind.curve(lagged(&alt_wind, t, lag), gain)
            } else {
                kind.curve(w, gain)
            };
            perturbed.push(v);
        }
        let scale = std_dev(&clean).max(1e-9);
        let mut row = Vec::with_capacity(n);
        let mut filtered = perturbed[0];
        for t in 0..n {
            let base = if kind == Response::Temperature {
                filtered += temp_alpha * (perturbed[t] - filtered);
                0.05 * filtered + 20.0
            } else {
                perturbed[t]
            };
            let unit = if kind == Response::Temperature { 0.05 * scale } else { scale };
            let sign = if c % 2 == 0 { -1.0 } else { 1.0 };
            row.push(base + noise[t] * if kind == Response::Temperature { 0.05 } else { 1.0 } + sign * 1.2 * unit * bump[t]);
        }
        rows.push(row);
    }
    let series = MultiSeries::from_rows(names, rows, cfg.sample_period)?;
    Ok((series, ranges))
}
