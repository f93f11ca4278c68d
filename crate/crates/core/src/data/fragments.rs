use std::fs;
use std::ops::Range;
use std::path::Path;

use super::series::MultiSeries;
use crate::error::{ensure, Error, Result};

/// Sorted, non-overlapping half-open `[start, end)` anomaly intervals.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnomalyRanges {
    intervals: Vec<Range<usize>>,
}

impl AnomalyRanges {
    pub fn new(intervals: Vec<Range<usize>>) -> Result<Self> {
        for r in &intervals {
            ensure!(r.start < r.end, Data, "empty or inverted range {}..{}", r.start, r.end);
        }
        for pair in intervals.windows(2) {
            ensure!(
                pair[0].end <= pair[1].start,
                Data,
                "ranges {}..{} and {}..{} overlap or are unsorted",
                pair[0].start,
                pair[0].end,
                pair[1].start,
                pair[1].end
            );
        }
        Ok(Self { intervals })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn intervals(&self) -> &[Range<usize>] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn check_within(&self, len: usize) -> Result<()> {
        if let Some(last) = self.intervals.last() {
            ensure!(
                last.end <= len,
                Data,
                "range {}..{} exceeds series length {len}",
                last.start,
                last.end
            );
        }
        Ok(())
    }

    /// Number of anomalous timestamps inside `span`.
    pub fn overlap(&self, span: Range<usize>) -> usize {
        self.intervals
            .iter()
            .map(|r| {
                let lo = r.start.max(span.start);
                let hi = r.end.min(span.end);
                hi.saturating_sub(lo)
            })
            .sum()
    }

    pub fn contains(&self, t: usize) -> bool {
        self.intervals.iter().any(|r| r.contains(&t))
    }

    /// Ranges clipped to `[start, start + len)` and shifted to start at zero.
    pub fn restrict(&self, start: usize, len: usize) -> Self {
        let end = start + len;
        let intervals = self
            .intervals
            .iter()
            .filter_map(|r| {
                let lo = r.start.max(start);
                let hi = r.end.min(end);
                (lo < hi).then(|| lo - start..hi - start)
            })
            .collect();
        Self { intervals }
    }

    /// Gaps between the ranges within `[0, len)`.
    pub fn complement(&self, len: usize) -> Vec<Range<usize>> {
        let mut out = Vec::new();
        let mut cursor = 0;
        for r in &self.intervals {
            if r.start > cursor {
                out.push(cursor..r.start.min(len));
            }
            cursor = cursor.max(r.end);
        }
        if cursor < len {
            out.push(cursor..len);
        }
        out.retain(|r| r.start < r.end);
        out
    }
}

/// Reads `start,end` pairs, one per line. A leading `start,end` header and
/// blank lines are skipped.
pub fn load_ranges(path: &Path) -> Result<AnomalyRanges> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut intervals = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || (i == 0 && line.eq_ignore_ascii_case("start,end")) {
            continue;
        }
        let ingest = |message: String| Error::Ingestion {
            path: path.to_path_buf(),
            line: i as u64 + 1,
            message,
        };
        let mut parts = line.split(',').map(str::trim);
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(ingest(format!("expected `start,end`, found `{line}`")));
        };
        let start: usize = a.parse().map_err(|_| ingest(format!("non-integer start `{a}`")))?;
        let end: usize = b.parse().map_err(|_| ingest(format!("non-integer end `{b}`")))?;
        intervals.push(start..end);
    }
    AnomalyRanges::new(intervals).map_err(|e| Error::Ingestion {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })
}

pub fn write_ranges(path: &Path, ranges: &AnomalyRanges) -> Result<()> {
    let text: String = ranges
        .intervals()
        .iter()
        .map(|r| format!("{},{}\n", r.start, r.end))
        .collect();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads a signals CSV and, when given, its companion ranges file.
pub fn load_csv(signals: &Path, ranges: Option<&Path>) -> Result<(MultiSeries, Option<AnomalyRanges>)> {
    let series = super::series::load_signals(signals)?;
    let ranges = ranges.map(load_ranges).transpose()?;
    if let Some(r) = &ranges {
        r.check_within(series.len())?;
    }
    Ok((series, ranges))
}

/// Fixed-length labeled window cut from a series.
#[derive(Debug, Clone, PartialEq)]
pub struct Fragment {
    pub values: MultiSeries,
    pub label: u8,
    pub origin_offset: usize,
}

/// Label of a span: 1 iff at least half of it lies in anomaly ranges.
pub fn label_span(span: Range<usize>, ranges: &AnomalyRanges) -> u8 {
    let len = span.end - span.start;
    u8::from(2 * ranges.overlap(span) >= len && len > 0)
}

/// Block label by the half-or-more rule.
pub fn label_block(block: Range<usize>, ranges: &AnomalyRanges) -> u8 {
    label_span(block, ranges)
}

/// Window sizes for [`make_fragments`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FragmentSpec {
    pub window: usize,
    pub neg_step: usize,
    pub pos_step: usize,
}

impl Default for FragmentSpec {
    fn default() -> Self {
        Self {
            window: 512,
            neg_step: 512,
            pos_step: 16,
        }
    }
}

/// Cuts labeled fragments: normal stretches are tiled every `neg_step`,
/// each anomaly range is swept every `pos_step`. Only windows lying wholly
/// inside one region are emitted. Output is ordered by offset.
pub fn make_fragments(series: &MultiSeries, ranges: &AnomalyRanges, spec: FragmentSpec) -> Result<Vec<Fragment>> {
    let FragmentSpec {
        window,
        neg_step,
        pos_step,
    } = spec;
    ensure!(window > 0, Config, "fragment window must be positive");
    ensure!(
        window <= series.len(),
        Data,
        "window {window} longer than series of length {}",
        series.len()
    );
    ensure!(
        pos_step >= 1 && pos_step <= window,
        Config,
        "positive step {pos_step} must lie in 1..={window}"
    );
    ensure!(neg_step >= 1, Config, "negative step must be positive");
    ranges.check_within(series.len())?;

    let mut out = Vec::new();
    let mut sweep = |region: &Range<usize>, step: usize, label: u8| -> Result<()> {
        let mut start = region.start;
        while start + window <= region.end {
            out.push(Fragment {
                values: series.window(start, window)?,
                label,
                origin_offset: start,
            });
            start += step;
        }
        Ok(())
    };
    for region in ranges.complement(series.len()) {
        sweep(&region, neg_step, 0)?;
    }
    for region in ranges.intervals() {
        sweep(region, pos_step, 1)?;
    }
    out.sort_by_key(|f| f.origin_offset);
    Ok(out)
}
