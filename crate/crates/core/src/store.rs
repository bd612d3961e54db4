//! On-disk template store: one UTF-8 key-value file per (user, modality).
//!
//! Numbers are written with 12 significant digits, which round-trips far
//! below matching tolerance while keeping files diffable. Writers hold an
//! exclusive advisory lock on the file; readers take a shared one, so
//! concurrent verification sessions never see a half-written template.

use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use fs2::FileExt;

use crate::error::{Error, Result};
use crate::extraction::Modality;
use crate::matching::FingerprintTemplate;
use crate::stats::{MomentSummary, TailReport};

/// Formats with 12 significant digits; `load` parses it back losslessly at
/// that precision.
pub fn fmt_sig12(x: f64) -> String {
    format!("{x:.11e}")
}

/// Percent-encodes everything outside [A-Za-z0-9_-], so arbitrary user ids
/// survive both the filename and the file body.
fn encode_component(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for &b in s.as_bytes() {
        match b {
            b'a'..=b'z' | b'A'..=b'Z' | b'0'..=b'9' | b'_' | b'-' => out.push(b as char),
            _ => out.push_str(&format!("%{b:02X}")),
        }
    }
    out
}

fn decode_component(s: &str) -> Result<String> {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = bytes
                .get(i + 1..i + 3)
                .and_then(|h| std::str::from_utf8(h).ok())
                .and_then(|h| u8::from_str_radix(h, 16).ok())
                .ok_or_else(|| Error::Format(format!("bad percent escape in {s:?}")))?;
            out.push(hex);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).map_err(|_| Error::Format(format!("invalid UTF-8 in {s:?}")))
}

pub struct TemplateStore {
    root: PathBuf,
}

impl TemplateStore {
    /// Opens (creating if needed) a store rooted at `root`.
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        std::fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, user_id: &str, modality: Modality) -> PathBuf {
        self.root
            .join(format!("{}.{}.tpl", encode_component(user_id), modality))
    }

    pub fn exists(&self, user_id: &str, modality: Modality) -> bool {
        self.path_for(user_id, modality).exists()
    }

    pub fn save(&self, template: &FingerprintTemplate) -> Result<PathBuf> {
        let path = self.path_for(template.user_id(), template.modality());
        let file = OpenOptions::new()
            .write(true)
            .create(true)
            .truncate(true)
            .open(&path)?;
        file.lock_exclusive()?;
        let result = write_template(&file, template);
        fs2::FileExt::unlock(&file)?;
        result?;
        Ok(path)
    }

    pub fn load(&self, user_id: &str, modality: Modality) -> Result<FingerprintTemplate> {
        let path = self.path_for(user_id, modality);
        let mut file = File::open(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::Format(format!(
                    "no template for user {user_id:?} modality {modality} in {}",
                    self.root.display()
                ))
            } else {
                Error::Io(e)
            }
        })?;
        file.lock_shared()?;
        let mut text = String::new();
        let read = file.read_to_string(&mut text);
        fs2::FileExt::unlock(&file)?;
        read?;
        parse_template(&text)
    }
}

fn write_template(mut w: impl Write, t: &FingerprintTemplate) -> Result<()> {
    let m = t.moments();
    let tail = t.tail();
    writeln!(w, "version: {}", t.version())?;
    writeln!(w, "user_id: {}", encode_component(t.user_id()))?;
    writeln!(w, "modality: {}", t.modality())?;
    writeln!(w, "enroll_count: {}", t.enroll_count())?;
    writeln!(w, "moments.n: {}", m.n)?;
    writeln!(w, "moments.mean: {}", fmt_sig12(m.mean))?;
    writeln!(w, "moments.sd: {}", fmt_sig12(m.sd))?;
    writeln!(w, "moments.skewness: {}", fmt_sig12(m.skewness))?;
    writeln!(w, "moments.excess_kurtosis: {}", fmt_sig12(m.excess_kurtosis))?;
    writeln!(w, "tail.tail_fraction: {}", fmt_sig12(tail.tail_fraction))?;
    writeln!(w, "tail.lower_dev: {}", fmt_sig12(tail.lower_dev))?;
    writeln!(w, "tail.upper_dev: {}", fmt_sig12(tail.upper_dev))?;
    writeln!(w, "tail.combined_dev: {}", fmt_sig12(tail.combined_dev))?;
    writeln!(w, "tail.normality_stat: {}", fmt_sig12(tail.normality_stat))?;
    writeln!(w, "tail.normality_pass: {}", tail.normality_pass)?;
    let quantiles: Vec<String> = t.quantiles().iter().map(|&q| fmt_sig12(q)).collect();
    writeln!(w, "quantiles: {}", quantiles.join(","))?;
    Ok(())
}

fn parse_template(text: &str) -> Result<FingerprintTemplate> {
    let mut fields = std::collections::HashMap::new();
    for line in text.lines() {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once(':')
            .ok_or_else(|| Error::Format(format!("template line without key: {line:?}")))?;
        fields.insert(key.trim().to_string(), value.trim().to_string());
    }
    let get = |key: &str| -> Result<&String> {
        fields
            .get(key)
            .ok_or_else(|| Error::Format(format!("template is missing key {key:?}")))
    };
    let num = |key: &str| -> Result<f64> {
        get(key)?
            .parse()
            .map_err(|_| Error::Format(format!("bad number for {key:?}")))
    };

    let version: u32 = get("version")?
        .parse()
        .map_err(|_| Error::Format("bad version".into()))?;
    let user_id = decode_component(get("user_id")?)?;
    let modality: Modality = get("modality")?.parse()?;
    let enroll_count: usize = get("enroll_count")?
        .parse()
        .map_err(|_| Error::Format("bad enroll_count".into()))?;
    let moments = MomentSummary {
        n: get("moments.n")?
            .parse()
            .map_err(|_| Error::Format("bad moments.n".into()))?,
        mean: num("moments.mean")?,
        sd: num("moments.sd")?,
        skewness: num("moments.skewness")?,
        excess_kurtosis: num("moments.excess_kurtosis")?,
    };
    let tail = TailReport {
        tail_fraction: num("tail.tail_fraction")?,
        lower_dev: num("tail.lower_dev")?,
        upper_dev: num("tail.upper_dev")?,
        combined_dev: num("tail.combined_dev")?,
        normality_stat: num("tail.normality_stat")?,
        normality_pass: match get("tail.normality_pass")?.as_str() {
            "true" => true,
            "false" => false,
            other => return Err(Error::Format(format!("bad normality_pass {other:?}"))),
        },
    };
    let quantiles: Vec<f64> = get("quantiles")?
        .split(',')
        .map(|q| {
            q.trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad quantile value {q:?}")))
        })
        .collect::<Result<_>>()?;

    FingerprintTemplate::from_parts(
        user_id,
        modality,
        quantiles,
        moments,
        tail,
        enroll_count,
        version,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::NoiseSeries;
    use crate::matching::build_template;
    use rand::{Rng, SeedableRng};

    fn sample_template(user_id: &str, modality: Modality) -> FingerprintTemplate {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let values: Vec<f64> = (0..300).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let series = NoiseSeries::from_values(modality, values).unwrap();
        build_template(user_id, modality, &[series], 0.05).unwrap()
    }

    #[test]
    fn save_load_round_trip_at_12_digits() {
        let dir = tempfile::tempdir().unwrap();
        let store = TemplateStore::open(dir.path()).unwrap();
        let t = sample_template("alice", Modality::Fingerprint);
        store.save(&t).unwrap();
        let back = store.load("alice", Modality::Fingerprint).unwrap();

        assert_eq!(back.user_id(), t.user_id());
        assert_eq!(back.modality(), t.modality());
        assert_eq!(back.enroll_count(), t.enroll_count());
        assert_eq!(back.version(), t.version());
        let pairs = [
            (back.moments().mean, t.moments().mean),
            (back.moments().sd, t.moments().sd),
            (back.moments().skewness, t.moments().skewness),
            (back.moments().excess_kurtosis, t.moments().excess_kurtosis),
            (back.tail().lower_dev, t.tail().lower_dev),
            (back.tail().upper_dev, t.tail().upper_dev),
            (back.tail().combined_dev, t.tail().combined_dev),
            (back.tail().normality_stat, t.tail().normality_stat),
        ];
        for (a, b) in pairs {
            assert_eq!(fmt_sig12(a), fmt_sig12(b));
        }
        for (a, b) in back.quantiles().iter().zip(t.quantiles()) {
            assert_eq!(fmt_sig12(*a), fmt_sig12(*b));
        }
        // A second save/load cycle is exactly stable (12-digit fixpoint).
        store.save(&back).unwrap();
        let again = store.load("alice", Modality::Fingerprint).unwrap();
        assert_eq!(again, back);
    }

    #[test]
    fn awkward_user_ids_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let store = TemplateStore::open(dir.path()).unwrap();
        for user in ["weird/user:id", "..", "spaced out", "uni\u{00e7}ode"] {
            let t = sample_template(user, Modality::Face);
            let path = store.save(&t).unwrap();
            assert!(path.parent().unwrap().ends_with(dir.path().file_name().unwrap()));
            let back = store.load(user, Modality::Face).unwrap();
            assert_eq!(back.user_id(), user);
        }
    }

    #[test]
    fn unknown_version_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let store = TemplateStore::open(dir.path()).unwrap();
        let t = sample_template("bob", Modality::EyeY);
        let path = store.save(&t).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, text.replace("version: 1", "version: 99")).unwrap();
        assert!(matches!(
            store.load("bob", Modality::EyeY),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn missing_template_is_a_clean_error() {
        let dir = tempfile::tempdir().unwrap();
        let store = TemplateStore::open(dir.path()).unwrap();
        assert!(matches!(
            store.load("nobody", Modality::Face),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn corrupt_quantiles_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let store = TemplateStore::open(dir.path()).unwrap();
        let t = sample_template("carol", Modality::Face);
        let path = store.save(&t).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        // Truncate the quantile line to 3 knots.
        let mangled: String = text
            .lines()
            .map(|l| {
                if l.starts_with("quantiles:") {
                    let knots: Vec<&str> =
                        l["quantiles:".len()..].split(',').take(3).collect();
                    format!("quantiles: {}", knots.join(","))
                } else {
                    l.to_string()
                }
            })
            .collect::<Vec<_>>()
            .join("\n");
        std::fs::write(&path, mangled).unwrap();
        assert!(matches!(
            store.load("carol", Modality::Face),
            Err(Error::Format(_))
        ));
    }
}
