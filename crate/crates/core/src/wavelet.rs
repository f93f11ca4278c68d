//! Multilevel discrete wavelet decomposition with periodic boundaries.
//!
//! The detail branch of level `l` is the highpass output after `l - 1`
//! lowpass cascades (the pyramid algorithm). With orthonormal filter banks
//! and periodic extension the transform is orthogonal, so the inverse is
//! the transpose and energy is preserved.

use std::fmt;
use std::str::FromStr;

use crate::data::MultiSeries;
use crate::error::{ensure, Error, Result};
use crate::numerics::Tensor;

/// Supported orthonormal wavelet families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WaveletFamily {
    #[default]
    Haar,
    /// Four-tap Daubechies filter (two vanishing moments).
    Daubechies4,
}

impl WaveletFamily {
    pub const ALL: [WaveletFamily; 2] = [WaveletFamily::Haar, WaveletFamily::Daubechies4];

    pub fn name(self) -> &'static str {
        match self {
            WaveletFamily::Haar => "haar",
            WaveletFamily::Daubechies4 => "db4",
        }
    }

    /// Decomposition lowpass taps.
    pub fn lowpass(self) -> Vec<f64> {
        match self {
            WaveletFamily::Haar => vec![std::f64::consts::FRAC_1_SQRT_2; 2],
            WaveletFamily::Daubechies4 => {
                let s3 = 3f64.sqrt();
                let d = 4.0 * std::f64::consts::SQRT_2;
                vec![(1.0 + s3) / d, (3.0 + s3) / d, (3.0 - s3) / d, (1.0 - s3) / d]
            }
        }
    }

    /// Quadrature mirror of the lowpass: `g[k] = (-1)^k h[N - 1 - k]`.
    pub fn highpass(self) -> Vec<f64> {
        let h = self.lowpass();
        let n = h.len();
        (0..n)
            .map(|k| if k % 2 == 0 { h[n - 1 - k] } else { -h[n - 1 - k] })
            .collect()
    }

    pub fn filter_len(self) -> usize {
        self.lowpass().len()
    }
}

impl fmt::Display for WaveletFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WaveletFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "haar" | "db1" => Ok(WaveletFamily::Haar),
            "db4" | "daubechies4" | "d4" | "db2" => Ok(WaveletFamily::Daubechies4),
            other => Err(Error::Config(format!("unknown wavelet family `{other}`"))),
        }
    }
}

/// One analysis step: `(approx, detail)`, each of length `N / 2`.
pub fn dwt_level(signal: &[f64], family: WaveletFamily) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = signal.len();
    ensure!(n.is_multiple_of(2) && n > 0, Length, "signal length {n} must be even and positive");
    let lo = family.lowpass();
    let hi = family.highpass();
    ensure!(
        n >= lo.len(),
        Length,
        "signal length {n} shorter than {} filter length {}",
        family,
        lo.len()
    );
    let half = n / 2;
    let mut approx = vec![0.0; half];
    let mut detail = vec![0.0; half];
    for k in 0..half {
        let (mut a, mut d) = (0.0, 0.0);
        for m in 0..lo.len() {
            let x = signal[(2 * k + m) % n];
            a += lo[m] * x;
            d += hi[m] * x;
        }
        approx[k] = a;
        detail[k] = d;
    }
    Ok((approx, detail))
}

/// Exact inverse of [`dwt_level`].
pub fn idwt_level(approx: &[f64], detail: &[f64], family: WaveletFamily) -> Result<Vec<f64>> {
    ensure!(
        approx.len() == detail.len(),
        Length,
        "approximation length {} differs from detail length {}",
        approx.len(),
        detail.len()
    );
    ensure!(!approx.is_empty(), Length, "empty coefficient arrays");
    let n = 2 * approx.len();
    let lo = family.lowpass();
    let hi = family.highpass();
    ensure!(
        n >= lo.len(),
        Length,
        "reconstructed length {n} shorter than filter length {}",
        lo.len()
    );
    let mut out = vec![0.0; n];
    for k in 0..approx.len() {
        for m in 0..lo.len() {
            out[(2 * k + m) % n] += lo[m] * approx[k] + hi[m] * detail[k];
        }
    }
    Ok(out)
}

/// Per-level detail coefficients plus the coarsest approximation.
///
/// `details[l - 1]` holds level `l` as a `[C × T / 2^l]` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletDecomposition {
    pub family: WaveletFamily,
    pub levels: usize,
    pub original_length: usize,
    pub details: Vec<Tensor>,
    pub approximation: Tensor,
}

impl WaveletDecomposition {
    pub fn channels(&self) -> usize {
        self.approximation.shape()[0]
    }

    pub fn detail(&self, level: usize) -> &Tensor {
        &self.details[level - 1]
    }
}

/// Largest decomposition depth accepted for a signal of length `len`.
pub fn max_levels(len: usize, family: WaveletFamily) -> usize {
    let mut levels = 0;
    let mut n = len;
    while n.is_multiple_of(2) && n >= family.filter_len() && n >= 4 {
        levels += 1;
        n /= 2;
    }
    levels
}

pub fn check_levels(len: usize, levels: usize, family: WaveletFamily) -> Result<()> {
    ensure!(levels >= 1, Level, "decomposition needs at least one level");
    ensure!(
        len.is_multiple_of(1 << levels),
        Level,
        "length {len} is not divisible by 2^{levels}"
    );
    ensure!(
        levels <= max_levels(len, family),
        Level,
        "{levels} levels too deep for length {len} with the {family} filter"
    );
    Ok(())
}

/// Decomposes each row of a `[C × T]` buffer independently.
pub fn decompose(data: &[f64], channels: usize, family: WaveletFamily, levels: usize) -> Result<WaveletDecomposition> {
    ensure!(channels > 0, Dimension, "no channels");
    ensure!(
        data.len().is_multiple_of(channels),
        Dimension,
        "buffer of {} values is not a multiple of {channels} channels",
        data.len()
    );
    let len = data.len() / channels;
    check_levels(len, levels, family)?;
    let mut details: Vec<Vec<f64>> = vec![Vec::new(); levels];
    let mut approximation = Vec::with_capacity(channels * (len >> levels));
    for c in 0..channels {
        let mut current = data[c * len..(c + 1) * len].to_vec();
        for level_details in details.iter_mut() {
            let (a, d) = dwt_level(&current, family)?;
            level_details.extend_from_slice(&d);
            current = a;
        }
        approximation.extend_from_slice(&current);
    }
    let details = details
        .into_iter()
        .enumerate()
        .map(|(i, d)| Tensor::new(&[channels, len >> (i + 1)], d))
        .collect::<Result<Vec<_>>>()?;
    Ok(WaveletDecomposition {
        family,
        levels,
        original_length: len,
        details,
        approximation: Tensor::new(&[channels, len >> levels], approximation)?,
    })
}

/// Multilevel decomposition of every channel of `series`.
pub fn mdwd(series: &MultiSeries, family: WaveletFamily, levels: usize) -> Result<WaveletDecomposition> {
    decompose(series.data(), series.channels(), family, levels)
}

fn validate(decomp: &WaveletDecomposition) -> Result<()> {
    let c = decomp.channels();
    ensure!(
        decomp.details.len() == decomp.levels,
        Level,
        "decomposition lists {} detail levels, expected {}",
        decomp.details.len(),
        decomp.levels
    );
    check_levels(decomp.original_length, decomp.levels, decomp.family)?;
    for (i, d) in decomp.details.iter().enumerate() {
        ensure!(
            d.shape() == [c, decomp.original_length >> (i + 1)],
            Dimension,
            "level {} detail has shape {:?}",
            i + 1,
            d.shape()
        );
    }
    ensure!(
        decomp.approximation.shape() == [c, decomp.original_length >> decomp.levels],
        Dimension,
        "approximation has shape {:?}",
        decomp.approximation.shape()
    );
    Ok(())
}

/// Inverts a decomposition back to a `[C × T]` tensor.
pub fn reconstruct(decomp: &WaveletDecomposition) -> Result<Tensor> {
    validate(decomp)?;
    let c = decomp.channels();
    let len = decomp.original_length;
    let mut out = Vec::with_capacity(c * len);
    for ch in 0..c {
        let mut current = decomp.approximation.row(ch).to_vec();
        for level in (1..=decomp.levels).rev() {
            current = idwt_level(&current, decomp.detail(level).row(ch), decomp.family)?;
        }
        out.extend_from_slice(&current);
    }
    Tensor::new(&[c, len], out)
}

/// Time-domain multiresolution components of a decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct MraComponents {
    /// `details[l - 1]` is the `[C × T]` signal carried by level `l` alone.
    pub details: Vec<Tensor>,
    pub approximation: Tensor,
}

impl MraComponents {
    /// Sum of every component, which equals the decomposed signal.
    pub fn total(&self) -> Tensor {
        let mut sum = self.approximation.clone();
        for d in &self.details {
            for (s, v) in sum.data_mut().iter_mut().zip(d.data()) {
                *s += v;
            }
        }
        sum
    }
}

/// Reconstructs each level in isolation, zeroing every other coefficient.
pub fn mra_components(decomp: &WaveletDecomposition) -> Result<MraComponents> {
    validate(decomp)?;
    let zeroed = |d: &WaveletDecomposition| WaveletDecomposition {
        details: d.details.iter().map(|t| Tensor::zeros(t.shape())).collect(),
        approximation: Tensor::zeros(d.approximation.shape()),
        ..d.clone()
    };
    let mut details = Vec::with_capacity(decomp.levels);
    for level in 1..=decomp.levels {
        let mut only = zeroed(decomp);
        only.details[level - 1] = decomp.detail(level).clone();
        details.push(reconstruct(&only)?);
    }
    let mut only = zeroed(decomp);
    only.approximation = decomp.approximation.clone();
    Ok(MraComponents {
        details,
        approximation: reconstruct(&only)?,
    })
}
