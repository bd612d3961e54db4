//! Full distributional analysis of one series, exported as a CSV report
//! with histogram and normal-probability blocks plus a key-value summary.

use std::io::Write;

use crate::error::Result;
use crate::extraction::NoiseSeries;
use crate::stats::{self, Histogram, MomentSummary, QQData, TailReport};

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub histogram: Histogram,
    pub qq: QQData,
    pub moments: MomentSummary,
    pub tail: TailReport,
    /// Present when the input was an eye trace: per-axis displacement
    /// variance (x, y). The x axis is typically near-stationary while y
    /// reacts to the stimulus; reporting both makes that visible.
    pub axis_variance: Option<(f64, f64)>,
}

/// Runs the whole stats battery over one series.
pub fn analyze_series(
    series: &NoiseSeries,
    bins: usize,
    tail_fraction: f64,
) -> Result<AnalysisReport> {
    Ok(AnalysisReport {
        histogram: stats::histogram(series, bins)?,
        qq: stats::qq_normal(series)?,
        moments: stats::moments(series)?,
        tail: stats::tail_deviation(series, tail_fraction)?,
        axis_variance: None,
    })
}

pub fn write_report_csv<W: Write>(w: &mut W, report: &AnalysisReport) -> Result<()> {
    writeln!(w, "# histogram")?;
    writeln!(w, "bin_left,bin_right,count")?;
    let h = &report.histogram;
    for i in 0..h.bins() {
        writeln!(w, "{},{},{}", h.bin_edges[i], h.bin_edges[i + 1], h.counts[i])?;
    }
    writeln!(w, "# qq")?;
    writeln!(w, "theoretical_quantile,ordered_value")?;
    for &(theo, val) in &report.qq.points {
        writeln!(w, "{theo},{val}")?;
    }
    writeln!(w, "# summary")?;
    writeln!(w, "n,{}", report.moments.n)?;
    writeln!(w, "mean,{}", report.moments.mean)?;
    writeln!(w, "sd,{}", report.moments.sd)?;
    writeln!(w, "skewness,{}", report.moments.skewness)?;
    writeln!(w, "excess_kurtosis,{}", report.moments.excess_kurtosis)?;
    writeln!(w, "lower_dev,{}", report.tail.lower_dev)?;
    writeln!(w, "upper_dev,{}", report.tail.upper_dev)?;
    writeln!(w, "combined_dev,{}", report.tail.combined_dev)?;
    writeln!(w, "A2,{}", report.tail.normality_stat)?;
    writeln!(w, "pass,{}", report.tail.normality_pass)?;
    if let Some((vx, vy)) = report.axis_variance {
        writeln!(w, "axis_variance_x,{vx}")?;
        writeln!(w, "axis_variance_y,{vy}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::Modality;
    use rand::{Rng, SeedableRng};

    #[test]
    fn report_contains_all_summary_keys() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let values: Vec<f64> = (0..200).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let series = NoiseSeries::from_values(Modality::Face, values).unwrap();
        let report = analyze_series(&series, 16, 0.05).unwrap();
        let mut buf = Vec::new();
        write_report_csv(&mut buf, &report).unwrap();
        let text = String::from_utf8(buf).unwrap();
        for key in [
            "# histogram",
            "# qq",
            "# summary",
            "n,200",
            "mean,",
            "sd,",
            "skewness,",
            "excess_kurtosis,",
            "lower_dev,",
            "upper_dev,",
            "combined_dev,",
            "A2,",
            "pass,",
        ] {
            assert!(text.contains(key), "missing {key:?}");
        }
        assert_eq!(
            text.lines().filter(|l| l.starts_with("# ")).count(),
            3,
            "exactly three block markers"
        );
    }

    #[test]
    fn histogram_rows_match_bin_count() {
        let values: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        let series = NoiseSeries::from_values(Modality::Fingerprint, values).unwrap();
        let report = analyze_series(&series, 8, 0.05).unwrap();
        let mut buf = Vec::new();
        write_report_csv(&mut buf, &report).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let hist_rows = text
            .lines()
            .skip_while(|l| *l != "bin_left,bin_right,count")
            .skip(1)
            .take_while(|l| !l.starts_with('#'))
            .count();
        assert_eq!(hist_rows, 8);
    }
}
