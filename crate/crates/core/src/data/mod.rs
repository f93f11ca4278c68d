//! Signal ingestion, anomaly labels, fragment cutting and the synthetic
//! turbine generator.

mod fragments;
mod series;
pub mod synth;

pub use fragments::{
    label_block, label_span, load_csv, load_ranges, make_fragments, write_ranges, AnomalyRanges, Fragment, FragmentSpec,
};
pub use series::{load_signals, write_signals, MultiSeries, DEFAULT_SAMPLE_PERIOD};
pub use synth::{synth_generate, SynthConfig};

use crate::error::{ensure, Result};

/// One contiguous piece of a labeled series.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub series: MultiSeries,
    pub ranges: AnomalyRanges,
    /// Index of the first sample in the original series.
    pub offset: usize,
}

/// Cuts a series into consecutive pieces with the given length fractions
/// (the last piece takes the remainder). Ranges are clipped and re-indexed
/// to each piece.
pub fn split_chronological(series: &MultiSeries, ranges: &AnomalyRanges, fractions: &[f64]) -> Result<Vec<Split>> {
    ensure!(!fractions.is_empty(), Config, "split needs at least one fraction");
    ensure!(
        fractions.iter().all(|f| *f > 0.0) && (fractions.iter().sum::<f64>() - 1.0).abs() < 1e-9,
        Config,
        "split fractions must be positive and sum to 1"
    );
    let n = series.len();
    let mut out = Vec::with_capacity(fractions.len());
    let mut start = 0usize;
    let mut acc = 0.0;
    for (i, f) in fractions.iter().enumerate() {
        acc += f;
        let end = if i + 1 == fractions.len() {
            n
        } else {
            ((acc * n as f64).round() as usize).min(n)
        };
        ensure!(end > start, Data, "split piece {i} of a {n}-sample series is empty");
        out.push(Split {
            series: series.window(start, end - start)?,
            ranges: ranges.restrict(start, end - start),
            offset: start,
        });
        start = end;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;
    use std::fs;

    #[test]
    fn chronological_split_reindexes_ranges() {
        let series = MultiSeries::anonymous(1, (0..100).map(f64::from).collect(), 100).unwrap();
        let ranges = AnomalyRanges::new(vec![10..20, 55..70]).unwrap();
        let parts = split_chronological(&series, &ranges, &[0.6, 0.2, 0.2]).unwrap();
        let lens: Vec<usize> = parts.iter().map(|p| p.series.len()).collect();
        assert_eq!(lens, vec![60, 20, 20]);
        assert_eq!(parts[0].ranges.intervals(), &[10..20, 55..60]);
        assert_eq!(parts[1].ranges.intervals(), &[0..10]);
        assert!(parts[2].ranges.is_empty());
        assert_eq!(parts[2].series.channel(0)[0], 80.0);
        assert!(split_chronological(&series, &ranges, &[0.5, 0.6]).is_err());
    }

    #[test]
    fn csv_shape_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        fs::write(&p, "t,a,b\n0,1,2\n7,3,4.5\n14,-1e-3,0\n21,0.1,7\n").unwrap();
        let s = load_signals(&p).unwrap();
        assert_eq!((s.channels(), s.len()), (2, 4));
        assert_eq!(s.channel(1), &[2.0, 4.5, 0.0, 7.0]);
        assert_eq!(s.sample_period(), 7.0);

        let q = dir.path().join("q.csv");
        write_signals(&q, &s).unwrap();
        let back = load_signals(&q).unwrap();
        assert_eq!(back, s);
        let (gen, _) = synth_generate(&SynthConfig { hours: 2.0, anomaly_count: 0, ..Default::default() }, 1).unwrap();
        write_signals(&q, &gen).unwrap();
        let bytes = fs::read(&q).unwrap();
        let reread = load_signals(&q).unwrap();
        assert_eq!(reread.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                   gen.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        write_signals(&q, &reread).unwrap();
        assert_eq!(fs::read(&q).unwrap(), bytes);
    }

    #[test]
    fn csv_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let line_of = |text: &str| {
            fs::write(&p, text).unwrap();
            match load_signals(&p) {
                Err(Error::Ingestion { line, .. }) => line,
                other => panic!("expected ingestion error, got {other:?}"),
            }
        };
        assert_eq!(line_of("t,a\n0,1\n1,x\n"), 3);
        assert_eq!(line_of("t,a,b\n0,1,2\n1,2\n"), 3);
        assert_eq!(line_of("t,a\n0,1\n1,NaN\n"), 3);
        assert_eq!(line_of(""), 1);
        assert_eq!(line_of("t,a\n"), 1);
    }

    #[test]
    fn load_csv_with_ranges() {
        let dir = tempfile::tempdir().unwrap();
        let s = dir.path().join("s.csv");
        let r = dir.path().join("r.csv");
        fs::write(&s, "t,a\n0,1\n1,2\n2,3\n").unwrap();
        fs::write(&r, "1,3\n").unwrap();
        let (series, ranges) = load_csv(&s, Some(&r)).unwrap();
        assert_eq!(series.len(), 3);
        assert_eq!(ranges.unwrap().intervals(), &[1..3]);
        fs::write(&r, "1,9\n").unwrap();
        assert!(load_csv(&s, Some(&r)).is_err());
        write_ranges(&r, &AnomalyRanges::new(vec![1..2]).unwrap()).unwrap();
        assert_eq!(fs::read_to_string(&r).unwrap(), "1,2\n");
    }
}
