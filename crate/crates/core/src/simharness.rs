//! Synthetic population harness: seedable noise generation, FAR/FRR/EER/ROC
//! protocol runs, and replay-style attack measurement.
//!
//! Every number the harness reports is a pure function of the configured
//! seeds. Per-user draws come from ChaCha8 streams keyed by
//! (user seed, modality, draw seed) through a SplitMix64-style mixer, with
//! Box-Muller for the normal variates, so identical inputs reproduce
//! bit-identical series in any run order.

use std::io::Write;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::extraction::{Modality, NoiseSeries};
use crate::matching::{self, FingerprintTemplate};
use crate::stats::DEFAULT_TAIL_FRACTION;

/// Mixture shape for one modality of one synthetic user: a Gaussian core
/// with probability 1 - tail_weight, widened by tail_scale otherwise. This
/// is the minimal model of a near-normal distribution with heavy tail ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureParams {
    pub core_mean: f64,
    pub core_sd: f64,
    pub tail_weight: f64,
    pub tail_scale: f64,
}

impl MixtureParams {
    pub fn new(core_mean: f64, core_sd: f64, tail_weight: f64, tail_scale: f64) -> Result<Self> {
        if !(core_mean.is_finite() && core_sd.is_finite()) {
            return Err(Error::Domain("mixture parameters must be finite".into()));
        }
        if core_sd <= 0.0 {
            return Err(Error::Domain(format!("core_sd must be positive, got {core_sd}")));
        }
        if !(0.0..=0.2).contains(&tail_weight) {
            return Err(Error::Domain(format!(
                "tail_weight must lie in [0, 0.2], got {tail_weight}"
            )));
        }
        if !(tail_scale >= 1.0 && tail_scale.is_finite()) {
            return Err(Error::Domain(format!(
                "tail_scale must be at least 1, got {tail_scale}"
            )));
        }
        Ok(Self { core_mean, core_sd, tail_weight, tail_scale })
    }
}

/// Per-user generator spec: one seed plus mixture parameters per modality
/// (both eye axes share the eye parameters).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticUserSpec {
    pub seed: u64,
    pub fingerprint: MixtureParams,
    pub face: MixtureParams,
    pub eye: MixtureParams,
}

impl SyntheticUserSpec {
    /// Same mixture on all three channels.
    pub fn uniform(seed: u64, params: MixtureParams) -> Self {
        Self { seed, fingerprint: params, face: params, eye: params }
    }

    pub fn params(&self, modality: Modality) -> &MixtureParams {
        match modality {
            Modality::Fingerprint => &self.fingerprint,
            Modality::Face => &self.face,
            Modality::EyeX | Modality::EyeY => &self.eye,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Folds the parts into one 64-bit stream seed, order-sensitively.
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut acc = 0x9e3779b97f4a7c15u64;
    for &p in parts {
        acc = splitmix64(acc ^ p).wrapping_add(0x9e3779b97f4a7c15);
    }
    splitmix64(acc)
}

fn modality_tag(modality: Modality) -> u64 {
    match modality {
        Modality::Fingerprint => 1,
        Modality::Face => 2,
        Modality::EyeX => 3,
        Modality::EyeY => 4,
    }
}

/// Box-Muller standard normals over a ChaCha8 stream; caches the spare.
struct GaussianSource {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianSource {
    fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), spare: None }
    }

    fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1]: avoids ln(0).
        let u1 = 1.0 - self.rng.gen::<f64>();
        let u2 = self.rng.gen::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

/// Draws n values from the user's mixture for one modality. The stream is
/// keyed by (spec.seed, modality, draw_seed): identical inputs give
/// bit-identical output, and a longer draw extends a shorter one.
pub fn generate_series(
    spec: &SyntheticUserSpec,
    modality: Modality,
    n: usize,
    draw_seed: u64,
) -> Result<NoiseSeries> {
    if n < 40 {
        return Err(Error::too_short(40, n));
    }
    let params = spec.params(modality);
    MixtureParams::new(
        params.core_mean,
        params.core_sd,
        params.tail_weight,
        params.tail_scale,
    )?;
    let mut source =
        GaussianSource::new(derive_seed(&[spec.seed, modality_tag(modality), draw_seed]));
    let values = (0..n)
        .map(|_| {
            let sd = if source.uniform() < params.tail_weight {
                params.core_sd * params.tail_scale
            } else {
                params.core_sd
            };
            params.core_mean + sd * source.standard_normal()
        })
        .collect();
    NoiseSeries::from_values(modality, values)
}

// -------------------- Verification protocol --------------------

/// Modalities fused during protocol runs.
pub const PROTOCOL_MODALITIES: [Modality; 3] =
    [Modality::Fingerprint, Modality::Face, Modality::EyeY];

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub enroll_n: usize,
    pub probe_n: usize,
    pub probes_per_user: usize,
    /// Acceptance thresholds to sweep, ascending.
    pub thresholds: Vec<f64>,
    pub base_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocResult {
    pub thresholds: Vec<f64>,
    pub far: Vec<f64>,
    pub frr: Vec<f64>,
    pub eer: f64,
    pub auc: f64,
}

const ENROLL_TAG: u64 = 0x656e726f; // "enro"
const PROBE_TAG: u64 = 0x70726f62; // "prob"
const ATTACK_TAG: u64 = 0x6174746b; // "attk"

/// Enrolls every user, then scores genuine trials (fresh probes against the
/// user's own templates) and impostor trials (the same probes against every
/// other template). A trial authenticates at threshold t when all three
/// modality scores reach t, i.e. when the minimum score does, so the sweep
/// thresholds the per-trial minimum score.
pub fn run_protocol(population: &[SyntheticUserSpec], cfg: &ProtocolConfig) -> Result<RocResult> {
    if population.len() < 2 {
        return Err(Error::Population(format!(
            "protocol needs at least 2 users, got {}",
            population.len()
        )));
    }
    if cfg.enroll_n < 40 {
        return Err(Error::too_short(40, cfg.enroll_n));
    }
    if cfg.probe_n < 40 {
        return Err(Error::too_short(40, cfg.probe_n));
    }
    if cfg.probes_per_user == 0 {
        return Err(Error::Domain("probes_per_user must be at least 1".into()));
    }
    let mut thresholds = cfg.thresholds.clone();
    if thresholds.is_empty() {
        return Err(Error::Domain("threshold sweep must be non-empty".into()));
    }
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    // Enrollment.
    let mut templates: Vec<Vec<FingerprintTemplate>> = Vec::with_capacity(population.len());
    for (u, spec) in population.iter().enumerate() {
        let mut per_modality = Vec::with_capacity(PROTOCOL_MODALITIES.len());
        for m in PROTOCOL_MODALITIES {
            let series =
                generate_series(spec, m, cfg.enroll_n, derive_seed(&[cfg.base_seed, ENROLL_TAG, u as u64]))?;
            per_modality.push(matching::build_template(
                &format!("user{u}"),
                m,
                &[series],
                DEFAULT_TAIL_FRACTION,
            )?);
        }
        templates.push(per_modality);
    }

    // Trials: per-trial minimum score across the three modalities.
    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    for (u, spec) in population.iter().enumerate() {
        for j in 0..cfg.probes_per_user {
            let probes: Vec<NoiseSeries> = PROTOCOL_MODALITIES
                .iter()
                .map(|&m| {
                    generate_series(
                        spec,
                        m,
                        cfg.probe_n,
                        derive_seed(&[cfg.base_seed, PROBE_TAG, u as u64, j as u64]),
                    )
                })
                .collect::<Result<_>>()?;
            for (v, claimed) in templates.iter().enumerate() {
                let mut min_score = f64::INFINITY;
                for (template, probe) in claimed.iter().zip(&probes) {
                    // The acceptance cut is applied by the sweep; the report
                    // threshold here only fills the struct.
                    let report = matching::match_score(template, probe, 0.5)?;
                    min_score = min_score.min(report.score);
                }
                if v == u {
                    genuine.push(min_score);
                } else {
                    impostor.push(min_score);
                }
            }
        }
    }

    let far: Vec<f64> = thresholds
        .iter()
        .map(|&t| impostor.iter().filter(|&&s| s >= t).count() as f64 / impostor.len() as f64)
        .collect();
    let frr: Vec<f64> = thresholds
        .iter()
        .map(|&t| genuine.iter().filter(|&&s| s < t).count() as f64 / genuine.len() as f64)
        .collect();

    let eer = equal_error_rate(&thresholds, &far, &frr);
    let auc = sweep_auc(&far, &frr);

    Ok(RocResult { thresholds, far, frr, eer, auc })
}

/// FAR falls and FRR rises with the threshold; the EER sits where the
/// linearly interpolated curves cross.
fn equal_error_rate(thresholds: &[f64], far: &[f64], frr: &[f64]) -> f64 {
    debug_assert_eq!(thresholds.len(), far.len());
    let diff: Vec<f64> = far.iter().zip(frr).map(|(a, r)| a - r).collect();
    if diff[0] <= 0.0 {
        return 0.5 * (far[0] + frr[0]);
    }
    for i in 1..diff.len() {
        if diff[i] <= 0.0 {
            let span = diff[i - 1] - diff[i];
            if span == 0.0 {
                return 0.5 * (far[i] + frr[i]);
            }
            let t = diff[i - 1] / span;
            let far_x = far[i - 1] + t * (far[i] - far[i - 1]);
            let frr_x = frr[i - 1] + t * (frr[i] - frr[i - 1]);
            return 0.5 * (far_x + frr_x);
        }
    }
    0.5 * (far[far.len() - 1] + frr[frr.len() - 1])
}

/// Trapezoidal area under the ROC traced by the sweep, with the (0,0) and
/// (1,1) corners appended.
fn sweep_auc(far: &[f64], frr: &[f64]) -> f64 {
    let mut points: Vec<(f64, f64)> = vec![(0.0, 0.0)];
    // Descending threshold order walks the ROC from (0,0) toward (1,1).
    for i in (0..far.len()).rev() {
        points.push((far[i], 1.0 - frr[i]));
    }
    points.push((1.0, 1.0));
    let mut auc = 0.0;
    for w in points.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        auc += (x1 - x0) * (y0 + y1) * 0.5;
    }
    auc.clamp(0.0, 1.0)
}

// -------------------- Attacks --------------------

/// How the adversary turns an observed genuine series into forged probes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackKind {
    /// Resample observed values with replacement.
    Replay,
    /// Fit a normal to the observation and sample from the fit.
    NaiveGaussian,
    /// Uniform over the observed min..max range.
    Random,
}

impl AttackKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AttackKind::Replay => "replay",
            AttackKind::NaiveGaussian => "naive_gaussian",
            AttackKind::Random => "random",
        }
    }
}

impl std::str::FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "replay" => Ok(AttackKind::Replay),
            "naive_gaussian" => Ok(AttackKind::NaiveGaussian),
            "random" => Ok(AttackKind::Random),
            other => Err(Error::Format(format!("unknown attack kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AttackSpec {
    kind: AttackKind,
    observation: NoiseSeries,
}

impl AttackSpec {
    pub fn new(kind: AttackKind, observation: NoiseSeries) -> Result<Self> {
        if observation.is_empty() {
            return Err(Error::EmptySeries("attack observation is empty".into()));
        }
        Ok(Self { kind, observation })
    }

    pub fn kind(&self) -> AttackKind {
        self.kind
    }

    pub fn observation(&self) -> &NoiseSeries {
        &self.observation
    }
}

/// Fraction of forged probes the matcher accepts at `threshold`. Each trial
/// forges one probe of the observation's length from a per-trial stream.
pub fn run_attack(
    template: &FingerprintTemplate,
    attack: &AttackSpec,
    trials: usize,
    threshold: f64,
    attack_seed: u64,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::Domain("attack needs at least one trial".into()));
    }
    if attack.observation.modality() != template.modality() {
        return Err(Error::Modality(format!(
            "observation is {}, template is {}",
            attack.observation.modality(),
            template.modality()
        )));
    }
    let observed = attack.observation.to_values();
    let n = observed.len();
    let (obs_mean, obs_sd) = match attack.kind {
        AttackKind::NaiveGaussian => {
            if n < 2 {
                return Err(Error::too_short(2, n));
            }
            let mean = observed.iter().sum::<f64>() / n as f64;
            let var = observed.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (n as f64 - 1.0);
            (mean, var.sqrt())
        }
        _ => (0.0, 0.0),
    };
    let obs_min = observed.iter().cloned().fold(f64::INFINITY, f64::min);
    let obs_max = observed.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let mut accepted = 0usize;
    for trial in 0..trials {
        let mut source = GaussianSource::new(derive_seed(&[attack_seed, ATTACK_TAG, trial as u64]));
        let values: Vec<f64> = match attack.kind {
            AttackKind::Replay => (0..n)
                .map(|_| observed[(source.rng.next_u64() % n as u64) as usize])
                .collect(),
            AttackKind::NaiveGaussian => (0..n)
                .map(|_| obs_mean + obs_sd * source.standard_normal())
                .collect(),
            AttackKind::Random => (0..n)
                .map(|_| obs_min + (obs_max - obs_min) * source.uniform())
                .collect(),
        };
        let probe = NoiseSeries::from_values(template.modality(), values)?;
        if matching::match_score(template, &probe, threshold)?.accepted {
            accepted += 1;
        }
    }
    Ok(accepted as f64 / trials as f64)
}

/// Acceptance rate of fresh genuine probes against a template; the baseline
/// an attack is compared to.
pub fn genuine_acceptance_rate(
    spec: &SyntheticUserSpec,
    template: &FingerprintTemplate,
    probe_n: usize,
    trials: usize,
    threshold: f64,
    base_seed: u64,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::Domain("needs at least one trial".into()));
    }
    let mut accepted = 0usize;
    for trial in 0..trials {
        let probe = generate_series(
            spec,
            template.modality(),
            probe_n,
            derive_seed(&[base_seed, PROBE_TAG, 0xffff, trial as u64]),
        )?;
        if matching::match_score(template, &probe, threshold)?.accepted {
            accepted += 1;
        }
    }
    Ok(accepted as f64 / trials as f64)
}

// -------------------- Simulation config & CSV --------------------

/// Key-value simulation configuration. Unknown keys are rejected so typos
/// fail loudly.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub users: usize,
    /// Spacing between adjacent user means, in units of core_sd.
    pub mean_spacing_sd: f64,
    pub base_mean: f64,
    pub core_sd: f64,
    pub tail_weight: f64,
    pub tail_scale: f64,
    pub enroll_n: usize,
    pub probe_n: usize,
    pub probes_per_user: usize,
    pub seed: u64,
    pub threshold_min: f64,
    pub threshold_max: f64,
    pub threshold_step: f64,
    pub attack: Option<AttackKind>,
    pub attack_trials: usize,
    pub attack_threshold: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            users: 5,
            mean_spacing_sd: 3.0,
            base_mean: 1000.0,
            core_sd: 25.0,
            tail_weight: 0.05,
            tail_scale: 3.0,
            enroll_n: 400,
            probe_n: 200,
            probes_per_user: 5,
            seed: 42,
            threshold_min: 0.0,
            threshold_max: 1.0,
            threshold_step: 0.0025,
            attack: None,
            attack_trials: 200,
            attack_threshold: matching::DEFAULT_THRESHOLD,
        }
    }
}

impl SimConfig {
    /// Parses `key = value` lines; `#` starts a comment. Every key is
    /// optional and falls back to the default.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = SimConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Format(format!("line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| Error::Format(format!("line {}: bad {what}: {value:?}", lineno + 1));
            match key {
                "users" => cfg.users = value.parse().map_err(|_| bad("users"))?,
                "mean_spacing_sd" => {
                    cfg.mean_spacing_sd = value.parse().map_err(|_| bad("mean_spacing_sd"))?
                }
                "base_mean" => cfg.base_mean = value.parse().map_err(|_| bad("base_mean"))?,
                "core_sd" => cfg.core_sd = value.parse().map_err(|_| bad("core_sd"))?,
                "tail_weight" => cfg.tail_weight = value.parse().map_err(|_| bad("tail_weight"))?,
                "tail_scale" => cfg.tail_scale = value.parse().map_err(|_| bad("tail_scale"))?,
                "enroll_n" => cfg.enroll_n = value.parse().map_err(|_| bad("enroll_n"))?,
                "probe_n" => cfg.probe_n = value.parse().map_err(|_| bad("probe_n"))?,
                "probes_per_user" => {
                    cfg.probes_per_user = value.parse().map_err(|_| bad("probes_per_user"))?
                }
                "seed" => cfg.seed = value.parse().map_err(|_| bad("seed"))?,
                "threshold_min" => {
                    cfg.threshold_min = value.parse().map_err(|_| bad("threshold_min"))?
                }
                "threshold_max" => {
                    cfg.threshold_max = value.parse().map_err(|_| bad("threshold_max"))?
                }
                "threshold_step" => {
                    cfg.threshold_step = value.parse().map_err(|_| bad("threshold_step"))?
                }
                "attack" => cfg.attack = Some(value.parse()?),
                "attack_trials" => {
                    cfg.attack_trials = value.parse().map_err(|_| bad("attack_trials"))?
                }
                "attack_threshold" => {
                    cfg.attack_threshold = value.parse().map_err(|_| bad("attack_threshold"))?
                }
                other => {
                    return Err(Error::Format(format!(
                        "line {}: unknown key {other:?}",
                        lineno + 1
                    )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if !(self.threshold_step > 0.0) {
            return Err(Error::Format("threshold_step must be positive".into()));
        }
        if self.threshold_max < self.threshold_min {
            return Err(Error::Format("threshold_max must be >= threshold_min".into()));
        }
        Ok(())
    }

    pub fn thresholds(&self) -> Vec<f64> {
        let count = ((self.threshold_max - self.threshold_min) / self.threshold_step).round()
            as usize
            + 1;
        (0..count)
            .map(|i| self.threshold_min + i as f64 * self.threshold_step)
            .collect()
    }

    /// Users spaced `mean_spacing_sd` core-sds apart on every modality.
    pub fn population(&self) -> Result<Vec<SyntheticUserSpec>> {
        (0..self.users)
            .map(|u| {
                let params = MixtureParams::new(
                    self.base_mean + u as f64 * self.mean_spacing_sd * self.core_sd,
                    self.core_sd,
                    self.tail_weight,
                    self.tail_scale,
                )?;
                Ok(SyntheticUserSpec::uniform(
                    derive_seed(&[self.seed, u as u64]),
                    params,
                ))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    pub kind: AttackKind,
    pub acceptance: f64,
    pub genuine_acceptance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub roc: RocResult,
    pub attack: Option<AttackOutcome>,
}

/// Runs the protocol (and the configured attack, if any) for a config.
pub fn run_simulation(cfg: &SimConfig) -> Result<SimOutcome> {
    let population = cfg.population()?;
    let roc = run_protocol(
        &population,
        &ProtocolConfig {
            enroll_n: cfg.enroll_n,
            probe_n: cfg.probe_n,
            probes_per_user: cfg.probes_per_user,
            thresholds: cfg.thresholds(),
            base_seed: cfg.seed,
        },
    )?;

    let attack = match cfg.attack {
        None => None,
        Some(kind) => {
            // Victim is user 0, fingerprint channel; the observation is one
            // fresh full-length genuine probe.
            let victim = &population[0];
            let enroll = generate_series(
                victim,
                Modality::Fingerprint,
                cfg.enroll_n,
                derive_seed(&[cfg.seed, ENROLL_TAG, 0]),
            )?;
            let template = matching::build_template(
                "user0",
                Modality::Fingerprint,
                &[enroll],
                DEFAULT_TAIL_FRACTION,
            )?;
            let observation = generate_series(
                victim,
                Modality::Fingerprint,
                cfg.probe_n,
                derive_seed(&[cfg.seed, ATTACK_TAG, 0]),
            )?;
            let spec = AttackSpec::new(kind, observation)?;
            let acceptance = run_attack(
                &template,
                &spec,
                cfg.attack_trials,
                cfg.attack_threshold,
                derive_seed(&[cfg.seed, ATTACK_TAG, 1]),
            )?;
            let genuine_acceptance = genuine_acceptance_rate(
                victim,
                &template,
                cfg.probe_n,
                cfg.attack_trials,
                cfg.attack_threshold,
                derive_seed(&[cfg.seed, ATTACK_TAG, 2]),
            )?;
            Some(AttackOutcome { kind, acceptance, genuine_acceptance })
        }
    };

    Ok(SimOutcome { roc, attack })
}

/// Sweep CSV plus a `# key=value` summary footer; fixed six-decimal
/// formatting keeps repeated runs byte-identical.
pub fn write_outcome_csv<W: Write>(w: &mut W, outcome: &SimOutcome) -> Result<()> {
    writeln!(w, "threshold,far,frr")?;
    let roc = &outcome.roc;
    for i in 0..roc.thresholds.len() {
        writeln!(
            w,
            "{:.6},{:.6},{:.6}",
            roc.thresholds[i], roc.far[i], roc.frr[i]
        )?;
    }
    writeln!(w, "# eer={:.6}", roc.eer)?;
    writeln!(w, "# auc={:.6}", roc.auc)?;
    if let Some(attack) = &outcome.attack {
        writeln!(w, "# attack_kind={}", attack.kind.as_str())?;
        writeln!(w, "# attack_acceptance={:.6}", attack.acceptance)?;
        writeln!(w, "# genuine_acceptance={:.6}", attack.genuine_acceptance)?;
    }
    Ok(())
}
