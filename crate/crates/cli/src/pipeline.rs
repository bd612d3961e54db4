//! Shared input handling: sniff what a file is and reduce it to a
//! `NoiseSeries` through the capture pipeline for its modality.

use std::path::Path;

use noisefp::error::{Error, Result};
use noisefp::extraction::{
    eye_displacements, frame_rgb_sums, parse_eye_trace, read_series_csv, EyeTrace, FrameSpec,
    Modality, NoiseSeries,
};
use noisefp::imaging::{
    decode_ppm, largest_region, mask_coverage, skin_mask, RawImage, SkinMaskParams,
};

pub enum Input {
    Image(RawImage),
    Trace(EyeTrace),
    Series(NoiseSeries),
}

/// Sniffs the payload: binary P6 is an image, a `t,x,y` header is an eye
/// trace, anything else must be a series CSV.
pub fn load_input(path: &Path, stimulus_onset: Option<f64>) -> Result<Input> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(b"P6") {
        return Ok(Input::Image(decode_ppm(&bytes)?));
    }
    let text = String::from_utf8(bytes)
        .map_err(|_| Error::Format(format!("{}: neither P6 image nor UTF-8 text", path.display())))?;
    let first_data_line = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'));
    match first_data_line {
        Some("t,x,y") => Ok(Input::Trace(parse_eye_trace(&text, stimulus_onset)?)),
        _ => Ok(Input::Series(read_series_csv(&text)?)),
    }
}

/// Masked frame sums for an image modality. Fingerprints use the raw skin
/// mask; faces additionally keep only the largest connected skin region to
/// drop stray background hits.
pub fn image_series(image: &RawImage, modality: Modality, tile: usize) -> Result<(NoiseSeries, f64)> {
    let mask = match modality {
        Modality::Fingerprint => skin_mask(image, SkinMaskParams::default()),
        Modality::Face => largest_region(&skin_mask(image, SkinMaskParams::default())),
        other => {
            return Err(Error::Modality(format!(
                "{other} is not an image modality"
            )))
        }
    };
    let coverage = mask_coverage(&mask);
    let series = frame_rgb_sums(image, &mask, FrameSpec::new(tile)?)?.with_modality(modality);
    Ok((series, coverage))
}

/// One displacement axis of an eye trace.
pub fn trace_series(trace: &EyeTrace, modality: Modality) -> Result<NoiseSeries> {
    let (x, y) = eye_displacements(trace)?;
    match modality {
        Modality::EyeX => Ok(x),
        Modality::EyeY => Ok(y),
        other => Err(Error::Modality(format!("{other} is not an eye modality"))),
    }
}

/// Per-axis displacement variance of a trace (population divisor), reported
/// alongside eye analyses so the stationary-x / reactive-y split is visible.
pub fn axis_variances(trace: &EyeTrace) -> Result<(f64, f64)> {
    let (x, y) = eye_displacements(trace)?;
    Ok((variance(&x.to_values()), variance(&y.to_values())))
}

fn variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Builds the probe/enrollment series for a declared modality from a file.
pub fn series_for_modality(
    path: &Path,
    modality: Modality,
    tile: usize,
    stimulus_onset: Option<f64>,
) -> Result<(NoiseSeries, Option<f64>)> {
    match load_input(path, stimulus_onset)? {
        Input::Image(image) if modality.is_image() => {
            let (series, coverage) = image_series(&image, modality, tile)?;
            Ok((series, Some(coverage)))
        }
        Input::Trace(trace) if !modality.is_image() => {
            Ok((trace_series(&trace, modality)?, None))
        }
        Input::Series(series) => {
            if series.modality() != modality {
                return Err(Error::Modality(format!(
                    "{}: series is {}, expected {modality}",
                    path.display(),
                    series.modality()
                )));
            }
            Ok((series, None))
        }
        Input::Image(_) => Err(Error::Modality(format!(
            "{}: image input cannot feed the {modality} modality",
            path.display()
        ))),
        Input::Trace(_) => Err(Error::Modality(format!(
            "{}: eye trace cannot feed the {modality} modality",
            path.display()
        ))),
    }
}
