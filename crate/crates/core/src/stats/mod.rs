//! Distributional analysis of noise series: moments, histograms,
//! normal-probability data, tail deviation from Gaussianity, and the
//! two-sample Kolmogorov-Smirnov distance.
//!
//! The tail machinery is the heart of the fingerprint: captures look
//! near-normal in the bulk, and the discriminating signal sits in how far
//! the outer order statistics stray from the fitted normal quantiles.

mod normal;

pub use normal::{erf, erfc, inv_norm_cdf, norm_cdf, norm_pdf, norm_sf};

use crate::error::{Error, Result};
use crate::extraction::NoiseSeries;

/// Anderson-Darling critical value at alpha = 0.01 for a normal with both
/// parameters estimated (Stephens' table, used with the (1 + 4/n - 25/n^2)
/// small-sample factor).
pub const AD_CRITICAL_001: f64 = 1.092;

/// Default fraction of mass treated as "tail" on each side.
pub const DEFAULT_TAIL_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct MomentSummary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// k+1 strictly increasing edges; the last bin is right-closed.
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Points for a normal-probability plot: sorted sample values against the
/// quantiles of the normal fitted to the sample.
#[derive(Debug, Clone, PartialEq)]
pub struct QQData {
    /// (theoretical_quantile, ordered_value), both non-decreasing.
    pub points: Vec<(f64, f64)>,
    pub fit_mean: f64,
    pub fit_sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailReport {
    pub tail_fraction: f64,
    /// Mean |ordered - theoretical| / fit_sd over the lowest order statistics.
    pub lower_dev: f64,
    /// Same over the highest order statistics.
    pub upper_dev: f64,
    pub combined_dev: f64,
    /// Anderson-Darling A^2 with the small-sample factor applied.
    pub normality_stat: f64,
    pub normality_pass: bool,
}

fn sorted_values(series: &NoiseSeries) -> Vec<f64> {
    let mut v = series.to_values();
    v.sort_by(f64::total_cmp);
    v
}

/// Moments over a sorted slice. Sorting first makes every downstream
/// statistic a pure function of the value multiset.
fn moments_sorted(sorted: &[f64]) -> Result<MomentSummary> {
    let n = sorted.len();
    if n < 2 {
        return Err(Error::too_short(2, n));
    }
    let nf = n as f64;
    let mean = sorted.iter().sum::<f64>() / nf;
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    let mut m4 = 0.0;
    for &v in sorted {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let sd = (m2 / (nf - 1.0)).sqrt();
    if sd == 0.0 {
        return Err(Error::Degenerate(
            "zero variance: skewness and kurtosis are undefined".into(),
        ));
    }
    Ok(MomentSummary {
        n,
        mean,
        sd,
        skewness: (m3 / nf) / (sd * sd * sd),
        excess_kurtosis: (m4 / nf) / (sd * sd * sd * sd) - 3.0,
    })
}

/// Mean, sample standard deviation (n-1), and standardized third/fourth
/// moments. Zero variance is an error: a security pipeline must not carry
/// NaNs forward.
pub fn moments(series: &NoiseSeries) -> Result<MomentSummary> {
    moments_sorted(&sorted_values(series))
}

/// Equal-width histogram over [min, max]; a zero-range sample collapses to
/// a single bin holding everything.
pub fn histogram(series: &NoiseSeries, k: usize) -> Result<Histogram> {
    if k == 0 {
        return Err(Error::Domain("histogram needs at least one bin".into()));
    }
    if series.is_empty() {
        return Err(Error::EmptySeries("cannot bin an empty series".into()));
    }
    let values = series.to_values();
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return Ok(Histogram {
            bin_edges: vec![min - 0.5, min + 0.5],
            counts: vec![values.len() as u64],
        });
    }
    let kf = k as f64;
    let bin_edges: Vec<f64> = (0..=k)
        .map(|i| min + (max - min) * (i as f64 / kf))
        .collect();
    let mut counts = vec![0u64; k];
    for v in values {
        let bin = ((kf * (v - min) / (max - min)) as usize).min(k - 1);
        counts[bin] += 1;
    }
    Ok(Histogram { bin_edges, counts })
}

fn qq_from_sorted(sorted: &[f64]) -> Result<QQData> {
    let n = sorted.len();
    if n < 3 {
        return Err(Error::too_short(3, n));
    }
    let m = moments_sorted(sorted)?;
    let nf = n as f64;
    let points = sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let p = (i as f64 + 0.5) / nf; // Hazen plotting position
            let z = inv_norm_cdf(p).expect("plotting position is in (0,1)");
            (m.fit_quantile(z), v)
        })
        .collect();
    Ok(QQData {
        points,
        fit_mean: m.mean,
        fit_sd: m.sd,
    })
}

impl MomentSummary {
    fn fit_quantile(&self, z: f64) -> f64 {
        self.mean + self.sd * z
    }
}

/// Normal-probability plot data: the i-th point pairs the fitted-normal
/// quantile at (i - 0.5)/n with the i-th order statistic.
pub fn qq_normal(series: &NoiseSeries) -> Result<QQData> {
    qq_from_sorted(&sorted_values(series))
}

fn anderson_darling_sorted(sorted: &[f64], mean: f64, sd: f64) -> f64 {
    let n = sorted.len();
    let nf = n as f64;
    let mut sum = 0.0;
    for i in 0..n {
        let z_lo = (sorted[i] - mean) / sd;
        let z_hi = (sorted[n - 1 - i] - mean) / sd;
        // Both tails via erfc; clamp so a wild outlier gives a huge finite
        // statistic instead of infinity.
        let f_lo = norm_cdf(z_lo).max(1e-300);
        let s_hi = norm_sf(z_hi).max(1e-300);
        sum += (2 * i + 1) as f64 * (f_lo.ln() + s_hi.ln());
    }
    -nf - sum / nf
}

fn tail_deviation_sorted(sorted: &[f64], tail_fraction: f64) -> Result<TailReport> {
    if !(tail_fraction > 0.0 && tail_fraction < 0.5) {
        return Err(Error::Domain(format!(
            "tail fraction must lie in (0, 0.5), got {tail_fraction}"
        )));
    }
    let n = sorted.len();
    if n < 40 {
        return Err(Error::too_short(40, n));
    }
    let qq = qq_from_sorted(sorted)?;
    let m = (tail_fraction * n as f64).ceil() as usize;

    let dev = |range: std::ops::Range<usize>| {
        let len = range.len() as f64;
        range
            .map(|i| {
                let (theo, val) = qq.points[i];
                (val - theo).abs() / qq.fit_sd
            })
            .sum::<f64>()
            / len
    };
    let lower_dev = dev(0..m);
    let upper_dev = dev(n - m..n);

    let a2 = anderson_darling_sorted(sorted, qq.fit_mean, qq.fit_sd);
    let nf = n as f64;
    let adjusted = a2 * (1.0 + 4.0 / nf - 25.0 / (nf * nf));

    Ok(TailReport {
        tail_fraction,
        lower_dev,
        upper_dev,
        combined_dev: 0.5 * (lower_dev + upper_dev),
        normality_stat: adjusted,
        normality_pass: adjusted < AD_CRITICAL_001,
    })
}

/// Measures how far the outer order statistics deviate from the fitted
/// normal, plus an Anderson-Darling normality gate at alpha = 0.01.
///
/// Deviations are normalized by the fitted sd, so the report is invariant
/// under positive affine transforms of the data.
pub fn tail_deviation(series: &NoiseSeries, tail_fraction: f64) -> Result<TailReport> {
    tail_deviation_sorted(&sorted_values(series), tail_fraction)
}

/// Exact two-sample Kolmogorov-Smirnov distance: the supremum of
/// |ECDF_a - ECDF_b|, via a merged sweep over distinct values.
pub fn ks_two_sample(a: &NoiseSeries, b: &NoiseSeries) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySeries(
            "KS distance needs two non-empty samples".into(),
        ));
    }
    let mut xs = a.to_values();
    let mut ys = b.to_values();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xs.len() || j < ys.len() {
        let x = match (xs.get(i), ys.get(j)) {
            (Some(&a), Some(&b)) => a.min(b),
            (Some(&a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => unreachable!(),
        };
        // Consume entire runs of ties from both samples before comparing,
        // otherwise equal values mid-run inflate the supremum.
        while i < xs.len() && xs[i] == x {
            i += 1;
        }
        while j < ys.len() && ys[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::Modality;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn series(values: Vec<f64>) -> NoiseSeries {
        NoiseSeries::from_values(Modality::Fingerprint, values).unwrap()
    }

    fn normal_sample(seed: u64, n: usize, mean: f64, sd: f64) -> Vec<f64> {
        use rand_distr::Distribution;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = rand_distr::Normal::new(mean, sd).unwrap();
        (0..n).map(|_| dist.sample(&mut rng)).collect()
    }

    fn plotting_grid(n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| inv_norm_cdf((i as f64 + 0.5) / n as f64).unwrap())
            .collect()
    }

    /// Plotting-position quantiles standardized to sample mean 0 and sample
    /// sd 1, then shifted and scaled, so the fitted moments come out exactly
    /// (mean, sd). Note the grid's own sample sd is slightly below 1 at any
    /// finite n, so the standardized values differ from the raw grid by a
    /// factor 1/sd(grid); residuals against the fitted quantiles scale with
    /// sd * (1 - sd(grid)).
    fn self_consistent_quantiles(n: usize, mean: f64, sd: f64) -> Vec<f64> {
        let z = plotting_grid(n);
        let mz = z.iter().sum::<f64>() / n as f64;
        let var = z.iter().map(|v| (v - mz) * (v - mz)).sum::<f64>() / (n as f64 - 1.0);
        let sz = var.sqrt();
        z.iter().map(|&v| mean + sd * (v - mz) / sz).collect()
    }

    #[test]
    fn moments_textbook_values() {
        let m = moments(&series(vec![1.0, 2.0, 3.0])).unwrap();
        assert!((m.mean - 2.0).abs() < 1e-15);
        assert!((m.sd - 1.0).abs() < 1e-15);
    }

    #[test]
    fn symmetric_data_has_zero_skew() {
        let m = moments(&series(vec![-3.5, 0.0, 3.5])).unwrap();
        assert!(m.skewness.abs() < 1e-15);
    }

    #[test]
    fn constant_data_is_degenerate() {
        assert!(matches!(
            moments(&series(vec![5.0, 5.0, 5.0])),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn moments_need_two_values() {
        assert!(matches!(
            moments(&series(vec![1.0])),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn histogram_two_point_masses() {
        let h = histogram(&series(vec![0.0, 0.0, 1.0, 1.0]), 2).unwrap();
        assert_eq!(h.bin_edges, vec![0.0, 0.5, 1.0]);
        assert_eq!(h.counts, vec![2, 2]);
    }

    #[test]
    fn histogram_single_bin() {
        let h = histogram(&series(vec![0.0, 1.0]), 1).unwrap();
        assert_eq!(h.counts, vec![2]);
    }

    #[test]
    fn histogram_zero_range_collapses() {
        for k in [1, 5, 64] {
            let h = histogram(&series(vec![7.0, 7.0, 7.0]), k).unwrap();
            assert_eq!(h.counts, vec![3]);
            assert_eq!(h.bin_edges.len(), 2);
        }
    }

    #[test]
    fn histogram_rejects_empty() {
        let s = NoiseSeries::from_values(Modality::Face, vec![]).unwrap();
        assert!(matches!(
            histogram(&s, 4),
            Err(Error::EmptySeries(_))
        ));
    }

    #[test]
    fn qq_exact_quantiles_sit_on_diagonal() {
        // At small absolute scale the grid-sd mismatch is far below 1e-9.
        let values = self_consistent_quantiles(500, 0.0, 1e-7);
        let qq = qq_normal(&series(values)).unwrap();
        for &(theo, val) in &qq.points {
            assert!((theo - val).abs() < 1e-9, "{theo} vs {val}");
        }
    }

    #[test]
    fn qq_exact_quantiles_are_collinear_at_any_scale() {
        // Scale-free version of the diagonal check: the points must lie on
        // one straight line hugging y = x, the mismatch bounded by the
        // sample sd of the plotting grid.
        let sd = 3.0;
        let values = self_consistent_quantiles(2000, 10.0, sd);
        let qq = qq_normal(&series(values)).unwrap();
        let (x0, y0) = qq.points[0];
        let (x1, y1) = qq.points[qq.points.len() - 1];
        let slope = (y1 - y0) / (x1 - x0);
        for &(theo, val) in &qq.points {
            let on_line = y0 + slope * (theo - x0);
            assert!((val - on_line).abs() < 1e-9 * sd, "off the line at {theo}");
            assert!((val - theo).abs() < 0.01 * sd, "far from diagonal at {theo}");
        }
        assert!((slope - 1.0).abs() < 0.01);
    }

    #[test]
    fn qq_needs_three_points() {
        assert!(matches!(
            qq_normal(&series(vec![0.0, 1.0])),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn qq_large_normal_sample_tracks_the_fit() {
        // Fixed-seed regression values: seed 7 observes max_gap 0.4410 over
        // a range of 7.947 (ratio 0.0555), dominated as usual by the
        // extreme order statistics.
        let values = normal_sample(7, 10_000, 0.0, 1.0);
        let qq = qq_normal(&series(values)).unwrap();
        let range = qq.points[qq.points.len() - 1].1 - qq.points[0].1;
        let max_gap = qq
            .points
            .iter()
            .map(|&(t, v)| (t - v).abs())
            .fold(0.0, f64::max);
        assert!(max_gap < 0.45, "max_gap={max_gap}");
        assert!(max_gap / range < 0.06, "max_gap={max_gap} range={range}");
    }

    #[test]
    fn tail_deviation_zero_for_exact_quantiles() {
        // Pin both measured tails to the fitted quantiles exactly: tail
        // values are the raw grid quantiles, and the middle is a symmetric
        // +-c block with c chosen so the sample moments come out (0, 1).
        // Then theoretical == ordered on every tail index.
        let n = 1000;
        let m = 50; // ceil(0.05 * n)
        let z = plotting_grid(n);
        let tail_sq: f64 = z[..m]
            .iter()
            .chain(&z[n - m..])
            .map(|v| v * v)
            .sum();
        let mid = n - 2 * m;
        let c = (((n - 1) as f64 - tail_sq) / mid as f64).sqrt();
        assert!(c < -z[m - 1], "middle block must stay inside the tails");
        let mut values = z[..m].to_vec();
        values.extend(std::iter::repeat(-c).take(mid / 2));
        values.extend(std::iter::repeat(c).take(mid / 2));
        values.extend_from_slice(&z[n - m..]);

        let report = tail_deviation(&series(values), DEFAULT_TAIL_FRACTION).unwrap();
        assert!(report.lower_dev < 1e-9, "lower_dev={}", report.lower_dev);
        assert!(report.upper_dev < 1e-9, "upper_dev={}", report.upper_dev);
        assert_eq!(
            report.combined_dev,
            0.5 * (report.lower_dev + report.upper_dev)
        );
    }

    #[test]
    fn tail_deviation_needs_forty() {
        let values: Vec<f64> = (0..39).map(|i| i as f64).collect();
        assert!(matches!(
            tail_deviation(&series(values), 0.05),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn tail_deviation_rejects_bad_fraction() {
        let values = normal_sample(1, 100, 0.0, 1.0);
        for f in [0.0, 0.5, -0.1, 0.9] {
            assert!(matches!(
                tail_deviation(&series(values.clone()), f),
                Err(Error::Domain(_))
            ));
        }
    }

    #[test]
    fn normality_gate_monte_carlo() {
        // Smaller-scale companion to the acceptance criterion: Gaussian
        // samples pass the gate, Student-t(3) samples fail and carry larger
        // tail deviation.
        use rand_distr::Distribution;
        let n = 4000;
        let mut gauss_pass = 0;
        let mut t_fail = 0;
        let mut t_heavier = 0;
        let mut gauss_devs = Vec::new();
        for seed in 0..20u64 {
            let g = tail_deviation(&series(normal_sample(seed, n, 5.0, 2.0)), 0.05).unwrap();
            gauss_pass += g.normality_pass as u32;
            gauss_devs.push(g.combined_dev);
        }
        gauss_devs.sort_by(f64::total_cmp);
        let gauss_median = gauss_devs[gauss_devs.len() / 2];
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let dist = rand_distr::StudentT::new(3.0).unwrap();
            let values: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
            let t = tail_deviation(&series(values), 0.05).unwrap();
            t_fail += !t.normality_pass as u32;
            t_heavier += (t.combined_dev > gauss_median) as u32;
        }
        assert!(gauss_pass >= 19, "gauss_pass={gauss_pass}");
        assert_eq!(t_fail, 20);
        assert_eq!(t_heavier, 20);
    }

    #[test]
    fn ks_identical_samples() {
        let a = series(vec![3.0, 1.0, 2.0]);
        let b = series(vec![1.0, 2.0, 3.0]);
        assert_eq!(ks_two_sample(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn ks_disjoint_supports() {
        let a = series(vec![0.0, 0.0]);
        let b = series(vec![1.0, 1.0]);
        assert_eq!(ks_two_sample(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn ks_interleaved_hand_value() {
        // ECDF steps enumerated by hand: sup is 0.5 at x = 1.
        let a = series(vec![1.0, 2.0]);
        let b = series(vec![1.5, 2.5]);
        assert_eq!(ks_two_sample(&a, &b).unwrap(), 0.5);
    }

    #[test]
    fn ks_rejects_empty() {
        let a = NoiseSeries::from_values(Modality::Face, vec![]).unwrap();
        let b = series(vec![1.0]);
        assert!(matches!(
            ks_two_sample(&a, &b),
            Err(Error::EmptySeries(_))
        ));
    }

    /// Brute-force ECDF comparison evaluated at every sample point.
    fn ks_brute_force(a: &[f64], b: &[f64]) -> f64 {
        let mut d: f64 = 0.0;
        for &x in a.iter().chain(b.iter()) {
            let fa = a.iter().filter(|&&v| v <= x).count() as f64 / a.len() as f64;
            let fb = b.iter().filter(|&&v| v <= x).count() as f64 / b.len() as f64;
            d = d.max((fa - fb).abs());
        }
        d
    }

    #[test]
    fn ks_agrees_with_brute_force_on_ties() {
        let a = series(vec![1.0, 1.0, 2.0, 2.0, 2.0]);
        let b = series(vec![1.0, 2.0, 3.0]);
        let got = ks_two_sample(&a, &b).unwrap();
        let want = ks_brute_force(&a.to_values(), &b.to_values());
        assert!((got - want).abs() < 1e-15, "{got} vs {want}");
    }

    proptest! {
        #[test]
        fn histogram_counts_and_shift(
            values in prop::collection::vec(-1e3f64..1e3, 1..200),
            shift in -100.0f64..100.0,
            k in 1usize..32
        ) {
            let h = histogram(&series(values.clone()), k).unwrap();
            prop_assert_eq!(h.total(), values.len() as u64);
            let shifted: Vec<f64> = values.iter().map(|v| v + shift).collect();
            let hs = histogram(&series(shifted), k).unwrap();
            prop_assert_eq!(&h.counts, &hs.counts);
            for (e, es) in h.bin_edges.iter().zip(&hs.bin_edges) {
                prop_assert!((es - (e + shift)).abs() < 1e-9 * (1.0 + e.abs()));
            }
        }

        #[test]
        fn moments_affine_behaviour(
            seed in any::<u64>(),
            shift in -50.0f64..50.0,
            scale in 0.1f64..10.0
        ) {
            let values = normal_sample(seed, 300, 0.0, 1.0);
            let base = moments(&series(values.clone())).unwrap();
            let mapped: Vec<f64> = values.iter().map(|v| shift + scale * v).collect();
            let m = moments(&series(mapped)).unwrap();
            prop_assert!((m.mean - (base.mean * scale + shift)).abs() < 1e-9);
            prop_assert!((m.sd - base.sd * scale).abs() < 1e-9);
            prop_assert!((m.skewness - base.skewness).abs() < 1e-9);
            prop_assert!((m.excess_kurtosis - base.excess_kurtosis).abs() < 1e-8);
        }

        #[test]
        fn ks_symmetry_and_transform_invariance(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<f64> = (0..40).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let b: Vec<f64> = (0..25).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let d_ab = ks_two_sample(&series(a.clone()), &series(b.clone())).unwrap();
            let d_ba = ks_two_sample(&series(b.clone()), &series(a.clone())).unwrap();
            prop_assert_eq!(d_ab, d_ba);
            prop_assert!((0.0..=1.0).contains(&d_ab));
            // Strictly increasing transform leaves the distance unchanged.
            let f = |v: f64| v.exp() + 0.5 * v;
            let ta: Vec<f64> = a.iter().map(|&v| f(v)).collect();
            let tb: Vec<f64> = b.iter().map(|&v| f(v)).collect();
            let d_t = ks_two_sample(&series(ta), &series(tb)).unwrap();
            prop_assert_eq!(d_ab, d_t);
        }

        #[test]
        fn tail_deviation_affine_invariance(
            seed in any::<u64>(),
            shift in -100.0f64..100.0,
            scale in 0.01f64..50.0
        ) {
            let values = normal_sample(seed, 300, 0.0, 1.0);
            let base = tail_deviation(&series(values.clone()), 0.05).unwrap();
            let mapped: Vec<f64> = values.iter().map(|v| shift + scale * v).collect();
            let t = tail_deviation(&series(mapped), 0.05).unwrap();
            prop_assert!((t.lower_dev - base.lower_dev).abs() < 1e-8);
            prop_assert!((t.upper_dev - base.upper_dev).abs() < 1e-8);
            prop_assert!((t.normality_stat - base.normality_stat).abs() < 1e-6);
        }
    }
}
