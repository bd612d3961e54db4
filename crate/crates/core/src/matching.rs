//! Enrollment templates, probe scoring, and three-way fusion.
//!
//! A template is a compact distributional summary of pooled enrollment
//! data: 101 quantile knots, moments, and the tail report. A probe is
//! scored by whole-distribution agreement (one-sample KS distance against
//! the quantile-interpolated CDF) damped by the gap in tail deviation, the
//! channel where the identifying signal concentrates. Authentication takes
//! the conjunction of all three modality decisions.

use crate::error::{Error, Result};
use crate::extraction::{Modality, NoiseSeries};
use crate::stats::{self, MomentSummary, TailReport};

/// Current template format version; persisted files carry it.
pub const TEMPLATE_VERSION: u32 = 1;

/// Default acceptance threshold on the match score.
pub const DEFAULT_THRESHOLD: f64 = 0.70;

/// Number of quantile knots (p = 0.00, 0.01, ..., 1.00).
pub const QUANTILE_KNOTS: usize = 101;

#[derive(Debug, Clone, PartialEq)]
pub struct FingerprintTemplate {
    user_id: String,
    modality: Modality,
    /// Empirical quantiles at p = k/100, non-decreasing; [0] is the pooled
    /// minimum and [100] the pooled maximum.
    quantiles: Vec<f64>,
    moments: MomentSummary,
    tail: TailReport,
    enroll_count: usize,
    version: u32,
}

impl FingerprintTemplate {
    pub fn user_id(&self) -> &str {
        &self.user_id
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn quantiles(&self) -> &[f64] {
        &self.quantiles
    }

    pub fn moments(&self) -> &MomentSummary {
        &self.moments
    }

    pub fn tail(&self) -> &TailReport {
        &self.tail
    }

    pub fn enroll_count(&self) -> usize {
        self.enroll_count
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    /// Reassembles a template from persisted fields, revalidating the
    /// structural invariants.
    pub fn from_parts(
        user_id: String,
        modality: Modality,
        quantiles: Vec<f64>,
        moments: MomentSummary,
        tail: TailReport,
        enroll_count: usize,
        version: u32,
    ) -> Result<Self> {
        if version != TEMPLATE_VERSION {
            return Err(Error::Unsupported(format!(
                "unknown template version {version} (expected {TEMPLATE_VERSION})"
            )));
        }
        if quantiles.len() != QUANTILE_KNOTS {
            return Err(Error::Format(format!(
                "expected {QUANTILE_KNOTS} quantile knots, got {}",
                quantiles.len()
            )));
        }
        if quantiles.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Format("quantiles must be non-decreasing".into()));
        }
        if enroll_count == 0 {
            return Err(Error::Format("enroll_count must be at least 1".into()));
        }
        Ok(Self {
            user_id,
            modality,
            quantiles,
            moments,
            tail,
            enroll_count,
            version,
        })
    }

    /// Quantile-interpolated CDF at `x` (right-continuous).
    fn cdf(&self, x: f64) -> f64 {
        let q = &self.quantiles;
        // Number of knots <= x.
        let c = q.partition_point(|&v| v <= x);
        if c == 0 {
            return 0.0;
        }
        if c == q.len() {
            return 1.0;
        }
        let k = c - 1; // largest knot index with q[k] <= x < q[k+1]
        (k as f64 + (x - q[k]) / (q[k + 1] - q[k])) / 100.0
    }

    /// Left limit of the CDF at `x`; differs from `cdf` only where repeated
    /// knots make the interpolated CDF jump.
    fn cdf_left(&self, x: f64) -> f64 {
        let q = &self.quantiles;
        let c = q.partition_point(|&v| v < x);
        if c == 0 {
            return 0.0;
        }
        if c == q.len() {
            return 1.0;
        }
        let k = c - 1; // largest knot index with q[k] < x <= q[k+1]
        (k as f64 + (x - q[k]) / (q[k + 1] - q[k])) / 100.0
    }
}

/// Empirical quantile as the inverse ECDF: the smallest order statistic
/// whose cumulative fraction reaches p. Depends only on the ECDF, so
/// duplicating the whole sample leaves every quantile unchanged;
/// q(0) = min and q(1) = max.
fn quantile_of_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if p <= 0.0 {
        return sorted[0];
    }
    let idx = (p * n as f64).ceil() as usize;
    sorted[idx.clamp(1, n) - 1]
}

/// Pools one or more enrollment series into a per-user, per-modality
/// template. Pooled values are sorted first, so the result depends only on
/// the value multiset.
pub fn build_template(
    user_id: &str,
    modality: Modality,
    enrollment: &[NoiseSeries],
    tail_fraction: f64,
) -> Result<FingerprintTemplate> {
    if enrollment.is_empty() {
        return Err(Error::EmptySeries("enrollment needs at least one series".into()));
    }
    for series in enrollment {
        if series.modality() != modality {
            return Err(Error::Modality(format!(
                "enrollment series is {}, expected {modality}",
                series.modality()
            )));
        }
    }
    let mut pool: Vec<f64> = enrollment.iter().flat_map(|s| s.values()).collect();
    if pool.len() < 40 {
        return Err(Error::too_short(40, pool.len()));
    }
    pool.sort_by(f64::total_cmp);

    let quantiles: Vec<f64> = (0..QUANTILE_KNOTS)
        .map(|k| quantile_of_sorted(&pool, k as f64 / 100.0))
        .collect();

    let pooled = NoiseSeries::from_values(modality, pool)?;
    let moments = stats::moments(&pooled)?;
    let tail = stats::tail_deviation(&pooled, tail_fraction)?;

    Ok(FingerprintTemplate {
        user_id: user_id.to_string(),
        modality,
        quantiles,
        moments,
        tail,
        enroll_count: enrollment.len(),
        version: TEMPLATE_VERSION,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchReport {
    pub modality: Modality,
    pub score: f64,
    pub ks_distance: f64,
    pub tail_gap: f64,
    pub accepted: bool,
    pub threshold: f64,
}

impl MatchReport {
    /// Builds a report from its inputs; the score is
    /// (1 - ks_distance) * exp(-tail_gap), bounded in [0, 1] and monotone
    /// non-increasing in each argument.
    pub fn new(modality: Modality, ks_distance: f64, tail_gap: f64, threshold: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::Domain(format!(
                "threshold must lie in [0, 1], got {threshold}"
            )));
        }
        if !(0.0..=1.0).contains(&ks_distance) {
            return Err(Error::Domain(format!(
                "KS distance must lie in [0, 1], got {ks_distance}"
            )));
        }
        if !(tail_gap >= 0.0) {
            return Err(Error::Domain(format!(
                "tail gap must be non-negative, got {tail_gap}"
            )));
        }
        let score = (1.0 - ks_distance) * (-tail_gap).exp();
        Ok(Self {
            modality,
            score,
            ks_distance,
            tail_gap,
            accepted: score >= threshold,
            threshold,
        })
    }
}

/// Supremum distance between the probe ECDF and the template's
/// quantile-interpolated CDF, evaluated exactly: both one-sided limits at
/// every probe value and every template knot.
fn ks_probe_vs_template(template: &FingerprintTemplate, sorted_probe: &[f64]) -> f64 {
    let n = sorted_probe.len() as f64;
    let ecdf_at = |x: f64| sorted_probe.partition_point(|&v| v <= x) as f64 / n;
    let ecdf_left = |x: f64| sorted_probe.partition_point(|&v| v < x) as f64 / n;

    let mut d: f64 = 0.0;
    for &x in sorted_probe.iter().chain(template.quantiles.iter()) {
        d = d.max((ecdf_at(x) - template.cdf(x)).abs());
        d = d.max((ecdf_left(x) - template.cdf_left(x)).abs());
    }
    d.min(1.0)
}

/// Scores a probe against a template.
///
/// `threshold` is the acceptance cut on the score (see
/// [`DEFAULT_THRESHOLD`]); deployments calibrate it from the simulation
/// harness sweep.
pub fn match_score(
    template: &FingerprintTemplate,
    probe: &NoiseSeries,
    threshold: f64,
) -> Result<MatchReport> {
    if probe.modality() != template.modality {
        return Err(Error::Modality(format!(
            "probe is {}, template is {}",
            probe.modality(),
            template.modality
        )));
    }
    if probe.len() < 40 {
        return Err(Error::too_short(40, probe.len()));
    }
    let mut sorted = probe.to_values();
    sorted.sort_by(f64::total_cmp);

    let ks = ks_probe_vs_template(template, &sorted);
    let probe_tail = stats::tail_deviation(probe, template.tail.tail_fraction)?;
    let tail_gap = (probe_tail.combined_dev - template.tail.combined_dev).abs();
    MatchReport::new(template.modality, ks, tail_gap, threshold)
}

/// Fused three-modality decision: accepted only when every channel accepts.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedDecision {
    /// Reports in canonical order: fingerprint, face, eye.
    pub reports: [MatchReport; 3],
    pub authenticated: bool,
}

/// Conjunction of one fingerprint, one face, and one eye report (either
/// axis; the default pipeline matches on eye_y, where the pupil reacts).
/// Report order does not matter; duplicates or missing modalities are
/// rejected.
pub fn fuse(reports: [MatchReport; 3]) -> Result<FusedDecision> {
    let mut fingerprint = None;
    let mut face = None;
    let mut eye = None;
    for report in reports {
        let slot = match report.modality {
            Modality::Fingerprint => &mut fingerprint,
            Modality::Face => &mut face,
            Modality::EyeX | Modality::EyeY => &mut eye,
        };
        if slot.is_some() {
            return Err(Error::Modality(format!(
                "duplicate {} report",
                report.modality
            )));
        }
        *slot = Some(report);
    }
    match (fingerprint, face, eye) {
        (Some(f), Some(c), Some(e)) => {
            let authenticated = f.accepted && c.accepted && e.accepted;
            Ok(FusedDecision {
                reports: [f, c, e],
                authenticated,
            })
        }
        _ => Err(Error::Modality(
            "fusion needs fingerprint, face, and eye reports".into(),
        )),
    }
}
