//! Confusion-matrix metrics.

use std::fmt;

use crate::error::{ensure, Result};

/// Which derived metrics had a zero denominator and were reported as 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DegenerateFlags {
    pub precision: bool,
    pub recall: bool,
    pub f1: bool,
}

impl DegenerateFlags {
    pub fn any(&self) -> bool {
        self.precision || self.recall || self.f1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub flags: DegenerateFlags,
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

impl MetricsReport {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Result<Self> {
        let n = tp + fp + tn + fn_;
        ensure!(n > 0, Data, "metrics need at least one sample");
        let (precision, p_flag) = ratio(tp, tp + fp);
        let (recall, r_flag) = ratio(tp, tp + fn_);
        let (f1, f_flag) = if precision + recall > 0.0 {
            (2.0 * precision * recall / (precision + recall), false)
        } else {
            (0.0, true)
        };
        Ok(Self {
            tp,
            fp,
            tn,
            fn_,
            accuracy: (tp + tn) as f64 / n as f64,
            precision,
            recall,
            f1,
            flags: DegenerateFlags {
                precision: p_flag,
                recall: r_flag,
                f1: f_flag,
            },
        })
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub const CSV_HEADER: &'static str = "tp,fp,tn,fn,accuracy,precision,recall,f1,degenerate";

    /// Machine-readable row matching [`Self::CSV_HEADER`].
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{}",
            self.tp,
            self.fp,
            self.tn,
            self.fn_,
            self.accuracy,
            self.precision,
            self.recall,
            self.f1,
            self.flag_text()
        )
    }

    fn flag_text(&self) -> String {
        let mut names = Vec::new();
        if self.flags.precision {
            names.push("precision");
        }
        if self.flags.recall {
            names.push("recall");
        }
        if self.flags.f1 {
            names.push("f1");
        }
        if names.is_empty() {
            "-".into()
        } else {
            names.join("|")
        }
    }
}

/// Aligned text table.
impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>8}", "tp", self.tp)?;
        writeln!(f, "{:<10} {:>8}", "fp", self.fp)?;
        writeln!(f, "{:<10} {:>8}", "tn", self.tn)?;
        writeln!(f, "{:<10} {:>8}", "fn", self.fn_)?;
        writeln!(f, "{:<10} {:>8.4}", "accuracy", self.accuracy)?;
        writeln!(f, "{:<10} {:>8.4}", "precision", self.precision)?;
        writeln!(f, "{:<10} {:>8.4}", "recall", self.recall)?;
        write!(f, "{:<10} {:>8.4}", "f1", self.f1)?;
        if self.flags.any() {
            write!(f, "\n{:<10} {:>8}", "zero-den", self.flag_text())?;
        }
        Ok(())
    }
}

pub fn compute_metrics(preds: &[u8], labels: &[u8]) -> Result<MetricsReport> {
    ensure!(
        preds.len() == labels.len(),
        Dimension,
        "{} predictions vs {} labels",
        preds.len(),
        labels.len()
    );
    ensure!(!preds.is_empty(), Data, "metrics need at least one sample");
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&p, &y) in preds.iter().zip(labels) {
        ensure!(p <= 1 && y <= 1, Domain, "predictions and labels must be 0 or 1");
        match (p, y) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 0) => tn += 1,
            _ => fn_ += 1,
        }
    }
    MetricsReport::from_counts(tp, fp, tn, fn_)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::Error;

    #[test]
    fn worked_counts() {
        let preds = [1, 1, 1, 1, 0, 0, 0, 0, 0, 0];
        let labels = [1, 1, 1, 0, 1, 0, 0, 0, 0, 0];
        let m = compute_metrics(&preds, &labels).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_, m.tn), (3, 1, 1, 5));
        assert_eq!(m.accuracy, 0.8);
        assert_eq!(m.precision, 0.75);
        assert_eq!(m.recall, 0.75);
        assert_eq!(m.f1, 0.75);
        assert!(!m.flags.any());
    }

    #[test]
    fn perfect_and_degenerate() {
        let m = compute_metrics(&[1, 0, 1], &[1, 0, 1]).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));
        let m = compute_metrics(&[0, 0, 0], &[1, 0, 1]).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert!(m.flags.precision && m.flags.f1 && !m.flags.recall);
        assert!(m.csv_row().ends_with("precision|f1"));
    }

    #[test]
    fn input_errors() {
        assert!(matches!(compute_metrics(&[], &[]), Err(Error::Data(_))));
        assert!(matches!(compute_metrics(&[1], &[1, 0]), Err(Error::Dimension(_))));
        assert!(matches!(compute_metrics(&[2], &[1]), Err(Error::Domain(_))));
    }

    #[test]
    fn table_and_row_render() {
        let m = compute_metrics(&[1, 0], &[1, 1]).unwrap();
        let table = m.to_string();
        assert!(table.contains("recall       0.5000"));
        assert_eq!(m.csv_row(), "1,0,0,1,0.500000,1.000000,0.500000,0.666667,-");
        assert_eq!(MetricsReport::CSV_HEADER.split(',').count(), m.csv_row().split(',').count());
    }

    proptest! {
        #[test]
        fn f1_is_harmonic_mean(pairs in prop::collection::vec((0u8..2, 0u8..2), 1..200)) {
            let (p, y): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
            let m = compute_metrics(&p, &y).unwrap();
            prop_assert_eq!(m.total(), p.len());
            if m.precision + m.recall > 0.0 {
                let h = 2.0 / (1.0 / m.precision + 1.0 / m.recall);
                prop_assert!((m.f1 - h).abs() <= 1e-12);
            }
        }

        #[test]
        fn permutation_invariant(pairs in prop::collection::vec((0u8..2, 0u8..2), 1..100), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let (p, y): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
            let (ps, ys): (Vec<u8>, Vec<u8>) = shuffled.into_iter().unzip();
            prop_assert_eq!(compute_metrics(&p, &y).unwrap(), compute_metrics(&ps, &ys).unwrap());
        }
    }
}
