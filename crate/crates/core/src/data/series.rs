use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{ensure, Error, Result};

/// Default SCADA sampling period in seconds.
pub const DEFAULT_SAMPLE_PERIOD: f64 = 7.0;

/// A `C`-channel, length-`T` signal stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiSeries {
    channel_names: Vec<String>,
    data: Vec<f64>,
    len: usize,
    sample_period_seconds: f64,
}

impl MultiSeries {
    pub fn new(channel_names: Vec<String>, data: Vec<f64>, len: usize, sample_period_seconds: f64) -> Result<Self> {
        ensure!(!channel_names.is_empty(), Data, "series needs at least one channel");
        ensure!(len > 0, Data, "series needs at least one timestamp");
        ensure!(
            data.len() == channel_names.len() * len,
            Dimension,
            "{} channels × {len} timestamps needs {} values, got {}",
            channel_names.len(),
            channel_names.len() * len,
            data.len()
        );
        ensure!(
            sample_period_seconds.is_finite() && sample_period_seconds > 0.0,
            Data,
            "sample period must be positive, got {sample_period_seconds}"
        );
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value in channel {} at t={}",
                i / len,
                i % len
            )));
        }
        Ok(Self {
            channel_names,
            data,
            len,
            sample_period_seconds,
        })
    }

    pub fn from_rows(channel_names: Vec<String>, rows: Vec<Vec<f64>>, sample_period_seconds: f64) -> Result<Self> {
        let len = rows.first().map_or(0, Vec::len);
        ensure!(
            rows.iter().all(|r| r.len() == len),
            Dimension,
            "channels have unequal lengths"
        );
        ensure!(
            rows.len() == channel_names.len(),
            Dimension,
            "{} names for {} channels",
            channel_names.len(),
            rows.len()
        );
        Self::new(channel_names, rows.concat(), len, sample_period_seconds)
    }

    /// Channels named `ch0`, `ch1`, ... .
    pub fn anonymous(channels: usize, data: Vec<f64>, len: usize) -> Result<Self> {
        let names = (0..channels).map(|c| format!("ch{c}")).collect();
        Self::new(names, data, len, DEFAULT_SAMPLE_PERIOD)
    }

    pub fn channels(&self) -> usize {
        self.channel_names.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn sample_period(&self) -> f64 {
        self.sample_period_seconds
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.len..(c + 1) * self.len]
    }

    /// Copies `[start, start + len)` of every channel.
    pub fn window(&self, start: usize, len: usize) -> Result<MultiSeries> {
        ensure!(
            len > 0 && start + len <= self.len,
            Data,
            "window {start}..{} exceeds series length {}",
            start + len,
            self.len
        );
        Ok(MultiSeries {
            channel_names: self.channel_names.clone(),
            data: self.window_data(start, len),
            len,
            sample_period_seconds: self.sample_period_seconds,
        })
    }

    pub(crate) fn window_data(&self, start: usize, len: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.channels() * len);
        for c in 0..self.channels() {
            out.extend_from_slice(&self.channel(c)[start..start + len]);
        }
        out
    }
}

/// Reads a signals CSV with header `t,<ch1>,...,<chC>`.
///
/// The sample period is taken from the first two `t` values when present.
pub fn load_signals(path: &Path) -> Result<MultiSeries> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);
    let ingest = |line: u64, message: String| Error::Ingestion {
        path: path.to_path_buf(),
        line,
        message,
    };
    let headers = reader
        .headers()
        .map_err(|e| ingest(1, format!("unreadable header: {e}")))?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(ingest(1, "empty file".into()));
    }
    if headers.len() < 2 {
        return Err(ingest(1, "header needs a `t` column and at least one channel".into()));
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
    let mut rows: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    let mut times = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            ingest(line, format!("malformed row: {e}"))
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != headers.len() {
            return Err(ingest(
                line,
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        let parse = |i: usize| -> Result<f64> {
            let cell = &record[i];
            let v: f64 = cell
                .parse()
                .map_err(|_| ingest(line, format!("non-numeric value `{cell}` in column `{}`", &headers[i])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(ingest(line, format!("non-finite value `{cell}` in column `{}`", &headers[i])))
            }
        };
        times.push(parse(0)?);
        for (c, row) in rows.iter_mut().enumerate() {
            row.push(parse(c + 1)?);
        }
    }
    if times.is_empty() {
        return Err(ingest(1, "no data rows".into()));
    }
    let period = match times.as_slice() {
        [a, b, ..] if b > a => b - a,
        _ => DEFAULT_SAMPLE_PERIOD,
    };
    MultiSeries::from_rows(names, rows, period)
}

/// Writes a signals CSV. `t` is the sample index times the sample period.
pub fn write_signals(path: &Path, series: &MultiSeries) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    write!(w, "t").map_err(io)?;
    for name in series.channel_names() {
        write!(w, ",{name}").map_err(io)?;
    }
    writeln!(w).map_err(io)?;
    for t in 0..series.len() {
        write!(w, "{}", t as f64 * series.sample_period()).map_err(io)?;
        for c in 0..series.channels() {
            write!(w, ",{}", series.channel(c)[t]).map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}
