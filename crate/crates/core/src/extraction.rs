//! Noise-series extraction from masked images and eye-tracker traces.
//!
//! Both capture paths end in the same shape: an ordered sequence of
//! (frame index, value) pairs per modality. Image modalities sum R+G+B over
//! square tiles that lie fully inside the mask; the eye path measures
//! displacement from the pre-stimulus resting position.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::imaging::{Mask, RawImage};

/// Biometric channel a series belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modality {
    Fingerprint,
    Face,
    EyeX,
    EyeY,
}

impl Modality {
    pub const ALL: [Modality; 4] = [
        Modality::Fingerprint,
        Modality::Face,
        Modality::EyeX,
        Modality::EyeY,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Modality::Fingerprint => "fingerprint",
            Modality::Face => "face",
            Modality::EyeX => "eye_x",
            Modality::EyeY => "eye_y",
        }
    }

    pub fn is_image(&self) -> bool {
        matches!(self, Modality::Fingerprint | Modality::Face)
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fingerprint" => Ok(Modality::Fingerprint),
            "face" => Ok(Modality::Face),
            "eye_x" => Ok(Modality::EyeX),
            "eye_y" => Ok(Modality::EyeY),
            other => Err(Error::Modality(format!("unknown modality {other:?}"))),
        }
    }
}

/// Ordered (frame_index, value) sequence — the raw noise fingerprint.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSeries {
    modality: Modality,
    values: Vec<(u64, f64)>,
}

impl NoiseSeries {
    pub fn new(modality: Modality, values: Vec<(u64, f64)>) -> Result<Self> {
        let mut prev: Option<u64> = None;
        for &(idx, v) in &values {
            if let Some(p) = prev {
                if idx <= p {
                    return Err(Error::Order(format!(
                        "frame indices must be strictly increasing: {idx} after {p}"
                    )));
                }
            }
            if !v.is_finite() {
                return Err(Error::Format(format!("non-finite value at frame {idx}")));
            }
            prev = Some(idx);
        }
        Ok(Self { modality, values })
    }

    /// Wraps plain values with consecutive frame indices 0, 1, 2, ...
    pub fn from_values(modality: Modality, values: Vec<f64>) -> Result<Self> {
        let pairs = values
            .into_iter()
            .enumerate()
            .map(|(i, v)| (i as u64, v))
            .collect();
        Self::new(modality, pairs)
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn pairs(&self) -> &[(u64, f64)] {
        &self.values
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().map(|&(_, v)| v)
    }

    pub fn to_values(&self) -> Vec<f64> {
        self.values().collect()
    }
}

/// Square tile size defining one "frame" of an image. The default of one
/// pixel treats every pixel as its own frame; larger tiles pool blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameSpec {
    pub tile: usize,
}

impl Default for FrameSpec {
    fn default() -> Self {
        Self { tile: 1 }
    }
}

impl FrameSpec {
    pub fn new(tile: usize) -> Result<Self> {
        if tile == 0 {
            return Err(Error::Domain("tile size must be at least 1".into()));
        }
        Ok(Self { tile })
    }

    /// Upper bound for any frame value at this tile size: 765 per pixel.
    pub fn max_frame_value(&self) -> f64 {
        765.0 * (self.tile * self.tile) as f64
    }
}

/// Sums R+G+B over every tile that lies fully inside the mask.
///
/// Tiles are enumerated row-major over the full ⌊w/t⌋ x ⌊h/t⌋ grid and keep
/// their grid position as frame index, so masked-out tiles leave visible
/// gaps in the index sequence. Partial edge tiles are discarded. A tile with
/// any out-of-mask pixel contributes nothing (no background bleed-in).
pub fn frame_rgb_sums(image: &RawImage, mask: &Mask, spec: FrameSpec) -> Result<NoiseSeries> {
    if image.width() != mask.width() || image.height() != mask.height() {
        return Err(Error::Dimension(format!(
            "image {}x{} vs mask {}x{}",
            image.width(),
            image.height(),
            mask.width(),
            mask.height()
        )));
    }
    let modality = Modality::Fingerprint; // caller retags via with_modality
    let t = spec.tile;
    let grid_w = image.width() / t;
    let grid_h = image.height() / t;
    let mut values = Vec::new();
    for gy in 0..grid_h {
        'tiles: for gx in 0..grid_w {
            let frame_index = (gy * grid_w + gx) as u64;
            let mut sum = 0u64;
            for y in gy * t..(gy + 1) * t {
                for x in gx * t..(gx + 1) * t {
                    if !mask.get(x, y) {
                        continue 'tiles;
                    }
                    let (r, g, b) = image.pixel(x, y);
                    sum += r as u64 + g as u64 + b as u64;
                }
            }
            values.push((frame_index, sum as f64));
        }
    }
    if values.is_empty() {
        return Err(Error::EmptySeries(
            "no tile lies fully inside the mask".into(),
        ));
    }
    NoiseSeries::new(modality, values)
}

impl NoiseSeries {
    pub fn with_modality(mut self, modality: Modality) -> Self {
        self.modality = modality;
        self
    }
}

// -------------------- Eye traces --------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EyeSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

/// Timed gaze positions plus the stimulus onset that splits the trace into
/// a resting baseline and a reaction window.
#[derive(Debug, Clone, PartialEq)]
pub struct EyeTrace {
    samples: Vec<EyeSample>,
    stimulus_onset: f64,
}

impl EyeTrace {
    pub fn new(samples: Vec<EyeSample>, stimulus_onset: f64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::too_short(2, samples.len()));
        }
        let mut prev = f64::NEG_INFINITY;
        for s in &samples {
            if !(s.t.is_finite() && s.x.is_finite() && s.y.is_finite()) {
                return Err(Error::Format("non-finite eye sample".into()));
            }
            if s.t < 0.0 {
                return Err(Error::Format(format!("negative timestamp {}", s.t)));
            }
            if s.t <= prev {
                return Err(Error::Order(format!(
                    "timestamps must be strictly increasing: {} after {prev}",
                    s.t
                )));
            }
            prev = s.t;
        }
        if !stimulus_onset.is_finite() {
            return Err(Error::Format("non-finite stimulus onset".into()));
        }
        if stimulus_onset < samples[0].t {
            return Err(Error::NoBaseline(format!(
                "stimulus onset {stimulus_onset} precedes the first sample at {}",
                samples[0].t
            )));
        }
        Ok(Self { samples, stimulus_onset })
    }

    pub fn samples(&self) -> &[EyeSample] {
        &self.samples
    }

    pub fn stimulus_onset(&self) -> f64 {
        self.stimulus_onset
    }
}

/// Parses an exported eye-trace CSV: header `t,x,y`, one sample per line.
///
/// The stimulus onset comes from `onset_override` when given, otherwise from
/// a `# stimulus_onset=<seconds>` comment line; having neither is an error.
pub fn parse_eye_trace(text: &str, onset_override: Option<f64>) -> Result<EyeTrace> {
    let mut onset_comment = None;
    let mut samples = Vec::new();
    let mut saw_header = false;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(value) = comment.strip_prefix("stimulus_onset") {
                let value = value.trim_start().strip_prefix('=').map(str::trim);
                let parsed = value.and_then(|v| v.parse::<f64>().ok()).ok_or_else(|| {
                    Error::Format(format!("line {}: bad stimulus_onset comment", lineno + 1))
                })?;
                onset_comment = Some(parsed);
            }
            continue;
        }
        if !saw_header {
            if line != "t,x,y" {
                return Err(Error::Format(format!(
                    "expected header \"t,x,y\", got {line:?}"
                )));
            }
            saw_header = true;
            continue;
        }
        let mut fields = line.split(',');
        let mut next_num = |name: &str| -> Result<f64> {
            fields
                .next()
                .map(str::trim)
                .and_then(|f| f.parse::<f64>().ok())
                .ok_or_else(|| {
                    Error::Format(format!("line {}: non-numeric {name} field", lineno + 1))
                })
        };
        let t = next_num("t")?;
        let x = next_num("x")?;
        let y = next_num("y")?;
        if fields.next().is_some() {
            return Err(Error::Format(format!(
                "line {}: expected exactly three fields",
                lineno + 1
            )));
        }
        samples.push(EyeSample { t, x, y });
    }
    if !saw_header {
        return Err(Error::Format("missing \"t,x,y\" header".into()));
    }
    let onset = onset_override.or(onset_comment).ok_or_else(|| {
        Error::Format("no stimulus onset: pass a flag or a # stimulus_onset= comment".into())
    })?;
    EyeTrace::new(samples, onset)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Converts a trace into x- and y-displacement series.
///
/// The resting position is the component-wise median of all samples before
/// the onset (median, not mean, so a stray blink cannot drag the baseline).
/// Every sample at or after the onset becomes one frame of displacement.
pub fn eye_displacements(trace: &EyeTrace) -> Result<(NoiseSeries, NoiseSeries)> {
    let onset = trace.stimulus_onset();
    let mut base_x: Vec<f64> = Vec::new();
    let mut base_y: Vec<f64> = Vec::new();
    for s in trace.samples() {
        if s.t < onset {
            base_x.push(s.x);
            base_y.push(s.y);
        }
    }
    if base_x.is_empty() {
        return Err(Error::NoBaseline(
            "no samples strictly before the stimulus onset".into(),
        ));
    }
    let rest_x = median(&mut base_x);
    let rest_y = median(&mut base_y);

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut frame = 0u64;
    for s in trace.samples() {
        if s.t >= onset {
            xs.push((frame, s.x - rest_x));
            ys.push((frame, s.y - rest_y));
            frame += 1;
        }
    }
    if xs.is_empty() {
        return Err(Error::EmptySeries(
            "no samples at or after the stimulus onset".into(),
        ));
    }
    Ok((
        NoiseSeries::new(Modality::EyeX, xs)?,
        NoiseSeries::new(Modality::EyeY, ys)?,
    ))
}

// -------------------- Series CSV --------------------

/// Writes `frame_index,value` rows under a `# modality=` comment header.
pub fn write_series_csv<W: std::io::Write>(w: &mut W, series: &NoiseSeries) -> Result<()> {
    writeln!(w, "# modality={}", series.modality())?;
    writeln!(w, "frame_index,value")?;
    for &(idx, v) in series.pairs() {
        writeln!(w, "{idx},{v}")?;
    }
    Ok(())
}

/// Reads the format produced by [`write_series_csv`].
pub fn read_series_csv(text: &str) -> Result<NoiseSeries> {
    let mut modality = None;
    let mut values = Vec::new();
    let mut saw_header = false;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(m) = comment.strip_prefix("modality=") {
                modality = Some(m.trim().parse::<Modality>()?);
            }
            continue;
        }
        if !saw_header {
            if line != "frame_index,value" {
                return Err(Error::Format(format!(
                    "expected header \"frame_index,value\", got {line:?}"
                )));
            }
            saw_header = true;
            continue;
        }
        let (idx, v) = line.split_once(',').ok_or_else(|| {
            Error::Format(format!("line {}: expected two fields", lineno + 1))
        })?;
        let idx: u64 = idx.trim().parse().map_err(|_| {
            Error::Format(format!("line {}: bad frame index {idx:?}", lineno + 1))
        })?;
        let v: f64 = v.trim().parse().map_err(|_| {
            Error::Format(format!("line {}: non-numeric value {v:?}", lineno + 1))
        })?;
        values.push((idx, v));
    }
    let modality =
        modality.ok_or_else(|| Error::Format("missing # modality= comment".into()))?;
    if !saw_header {
        return Err(Error::Format("missing \"frame_index,value\" header".into()));
    }
    NoiseSeries::new(modality, values)
}
