//! Command-line surface for the noise-fingerprint toolkit.
//!
//! Exit codes: 0 on success (and on an authenticated verify), 1 when a
//! verify is cleanly rejected, 2 on any error. Malformed input never
//! panics; the diagnostic names the error kind so scripts can react.

mod pipeline;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use noisefp::error::{Error, Result};
use noisefp::extraction::Modality;
use noisefp::matching::{self, MatchReport, DEFAULT_THRESHOLD};
use noisefp::plot::{render_svg, PlotData, PlotKind, PlotSpec};
use noisefp::report::{analyze_series, write_report_csv, AnalysisReport};
use noisefp::simharness::{run_simulation, write_outcome_csv, SimConfig};
use noisefp::stats::DEFAULT_TAIL_FRACTION;
use noisefp::store::TemplateStore;

use pipeline::{axis_variances, load_input, series_for_modality, trace_series, Input};

const STORE_ENV: &str = "NOISEFP_STORE";
const DEFAULT_STORE: &str = "noisefp_store";
const DEFAULT_SIM_CONFIG: &str = include_str!("../default_sim.conf");

#[derive(Parser)]
#[command(
    name = "noisefp",
    about = "Noise-fingerprint authentication: enroll, verify, analyze, simulate, plot",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StoreOpt {
    /// Template store directory (falls back to $NOISEFP_STORE, then ./noisefp_store)
    #[arg(long)]
    store: Option<PathBuf>,
}

impl StoreOpt {
    fn open(&self) -> Result<TemplateStore> {
        let root = self
            .store
            .clone()
            .or_else(|| std::env::var_os(STORE_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_STORE));
        TemplateStore::open(root)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build and persist a template from one or more captures
    Enroll {
        #[arg(long)]
        user: String,
        /// fingerprint, face, eye_x, or eye_y
        #[arg(long)]
        modality: String,
        #[command(flatten)]
        store: StoreOpt,
        /// Square tile size in pixels for image frames
        #[arg(long, default_value_t = 1)]
        tile: usize,
        /// Stimulus onset in seconds for eye traces
        #[arg(long)]
        stimulus_onset: Option<f64>,
        /// Tail mass per side used by the tail statistics
        #[arg(long, default_value_t = DEFAULT_TAIL_FRACTION)]
        tail_fraction: f64,
        /// Capture files (PPM images, eye-trace CSV, or series CSV)
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Match probes for all three modalities and fuse the decisions
    Verify {
        #[arg(long)]
        user: String,
        #[command(flatten)]
        store: StoreOpt,
        /// Acceptance threshold on each modality score
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value_t = 1)]
        tile: usize,
        #[arg(long)]
        stimulus_onset: Option<f64>,
        /// Which eye axis to match (eye_y by default; x is near-stationary)
        #[arg(long, default_value = "eye_y")]
        eye_axis: String,
        /// Fingerprint probe image
        #[arg(long)]
        fingerprint: PathBuf,
        /// Face probe image
        #[arg(long)]
        face: PathBuf,
        /// Eye probe trace
        #[arg(long)]
        eye: PathBuf,
    },
    /// Full distributional report (histogram, QQ, moments, tails) as CSV
    Analyze {
        /// Modality for image/trace inputs (default fingerprint for images,
        /// eye_y for traces)
        #[arg(long)]
        modality: Option<String>,
        #[arg(long, default_value_t = 1)]
        tile: usize,
        #[arg(long, default_value_t = 30)]
        bins: usize,
        #[arg(long, default_value_t = DEFAULT_TAIL_FRACTION)]
        tail_fraction: f64,
        #[arg(long)]
        stimulus_onset: Option<f64>,
        /// Write the report here instead of stdout
        #[arg(long)]
        output: Option<PathBuf>,
        input: PathBuf,
    },
    /// Run the synthetic-population protocol (and optional attack)
    Simulate {
        /// Key-value config file; omit to use the bundled default
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the config seed
        #[arg(long)]
        seed: Option<u64>,
        /// Write the sweep CSV here instead of stdout
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Render a series or image as an SVG figure
    Plot {
        /// scatter, histogram, or qq
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 640)]
        width: u32,
        #[arg(long, default_value_t = 480)]
        height: u32,
        #[arg(long, default_value = "")]
        title: String,
        #[arg(long, default_value_t = 30)]
        bins: usize,
        #[arg(long)]
        modality: Option<String>,
        #[arg(long, default_value_t = 1)]
        tile: usize,
        #[arg(long)]
        stimulus_onset: Option<f64>,
        #[arg(long)]
        output: PathBuf,
        input: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    };
    std::process::exit(code);
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::Enroll {
            user,
            modality,
            store,
            tile,
            stimulus_onset,
            tail_fraction,
            inputs,
        } => enroll(&user, &modality, &store, tile, stimulus_onset, tail_fraction, &inputs),
        Command::Verify {
            user,
            store,
            threshold,
            tile,
            stimulus_onset,
            eye_axis,
            fingerprint,
            face,
            eye,
        } => verify(
            &user,
            &store,
            threshold,
            tile,
            stimulus_onset,
            &eye_axis,
            &fingerprint,
            &face,
            &eye,
        ),
        Command::Analyze {
            modality,
            tile,
            bins,
            tail_fraction,
            stimulus_onset,
            output,
            input,
        } => analyze(
            modality.as_deref(),
            tile,
            bins,
            tail_fraction,
            stimulus_onset,
            output.as_deref(),
            &input,
        ),
        Command::Simulate { config, seed, output } => {
            simulate(config.as_deref(), seed, output.as_deref())
        }
        Command::Plot {
            kind,
            width,
            height,
            title,
            bins,
            modality,
            tile,
            stimulus_onset,
            output,
            input,
        } => plot(
            &kind,
            width,
            height,
            &title,
            bins,
            modality.as_deref(),
            tile,
            stimulus_onset,
            &output,
            &input,
        ),
    }
}

fn enroll(
    user: &str,
    modality: &str,
    store: &StoreOpt,
    tile: usize,
    stimulus_onset: Option<f64>,
    tail_fraction: f64,
    inputs: &[PathBuf],
) -> Result<i32> {
    let modality: Modality = modality.parse()?;
    let store = store.open()?;
    let mut series = Vec::with_capacity(inputs.len());
    for path in inputs {
        let (s, coverage) = series_for_modality(path, modality, tile, stimulus_onset)?;
        match coverage {
            Some(c) => println!(
                "input {}: frames={} mask_coverage={c:.4}",
                path.display(),
                s.len()
            ),
            None => println!("input {}: frames={}", path.display(), s.len()),
        }
        series.push(s);
    }
    let template = matching::build_template(user, modality, &series, tail_fraction)?;
    let path = store.save(&template)?;
    let m = template.moments();
    println!(
        "enrolled user={user} modality={modality} series={} n={} mean={:.4} sd={:.4} \
         combined_dev={:.4} template={}",
        template.enroll_count(),
        m.n,
        m.mean,
        m.sd,
        template.tail().combined_dev,
        path.display()
    );
    Ok(0)
}

fn print_report(report: &MatchReport) {
    println!(
        "{}: score={:.4} ks_distance={:.4} tail_gap={:.4} threshold={:.4} accepted={}",
        report.modality,
        report.score,
        report.ks_distance,
        report.tail_gap,
        report.threshold,
        report.accepted
    );
}

#[allow(clippy::too_many_arguments)]
fn verify(
    user: &str,
    store: &StoreOpt,
    threshold: f64,
    tile: usize,
    stimulus_onset: Option<f64>,
    eye_axis: &str,
    fingerprint: &Path,
    face: &Path,
    eye: &Path,
) -> Result<i32> {
    let eye_axis: Modality = eye_axis.parse()?;
    if eye_axis.is_image() {
        return Err(Error::Modality(format!(
            "--eye-axis must be eye_x or eye_y, got {eye_axis}"
        )));
    }
    let store = store.open()?;
    let probes = [
        (Modality::Fingerprint, fingerprint),
        (Modality::Face, face),
        (eye_axis, eye),
    ];
    let mut reports = Vec::with_capacity(3);
    for (modality, path) in probes {
        let template = store.load(user, modality)?;
        let (probe, _) = series_for_modality(path, modality, tile, stimulus_onset)?;
        let report = matching::match_score(&template, &probe, threshold)?;
        print_report(&report);
        reports.push(report);
    }
    let fused = matching::fuse([
        reports[0].clone(),
        reports[1].clone(),
        reports[2].clone(),
    ])?;
    if fused.authenticated {
        println!("decision: AUTHENTICATED");
        Ok(0)
    } else {
        println!("decision: REJECTED");
        Ok(1)
    }
}

fn analyze(
    modality: Option<&str>,
    tile: usize,
    bins: usize,
    tail_fraction: f64,
    stimulus_onset: Option<f64>,
    output: Option<&Path>,
    input: &Path,
) -> Result<i32> {
    let modality = modality.map(str::parse::<Modality>).transpose()?;
    let report: AnalysisReport = match load_input(input, stimulus_onset)? {
        Input::Image(image) => {
            let m = modality.unwrap_or(Modality::Fingerprint);
            let (series, _) = pipeline::image_series(&image, m, tile)?;
            analyze_series(&series, bins, tail_fraction)?
        }
        Input::Trace(trace) => {
            let m = modality.unwrap_or(Modality::EyeY);
            let series = trace_series(&trace, m)?;
            let mut r = analyze_series(&series, bins, tail_fraction)?;
            r.axis_variance = Some(axis_variances(&trace)?);
            r
        }
        Input::Series(series) => {
            if let Some(m) = modality {
                if m != series.modality() {
                    return Err(Error::Modality(format!(
                        "series is {}, expected {m}",
                        series.modality()
                    )));
                }
            }
            analyze_series(&series, bins, tail_fraction)?
        }
    };
    write_text_output(output, |mut w| write_report_csv(&mut w, &report))?;
    Ok(0)
}

fn simulate(config: Option<&Path>, seed: Option<u64>, output: Option<&Path>) -> Result<i32> {
    let text = match config {
        Some(path) => std::fs::read_to_string(path)?,
        None => DEFAULT_SIM_CONFIG.to_string(),
    };
    let mut cfg = SimConfig::parse(&text)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let outcome = run_simulation(&cfg)?;
    write_text_output(output, |mut w| write_outcome_csv(&mut w, &outcome))?;
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn plot(
    kind: &str,
    width: u32,
    height: u32,
    title: &str,
    bins: usize,
    modality: Option<&str>,
    tile: usize,
    stimulus_onset: Option<f64>,
    output: &Path,
    input: &Path,
) -> Result<i32> {
    let kind: PlotKind = kind.parse()?;
    let modality = modality.map(str::parse::<Modality>).transpose()?;
    let series = match load_input(input, stimulus_onset)? {
        Input::Image(image) => {
            let m = modality.unwrap_or(Modality::Fingerprint);
            pipeline::image_series(&image, m, tile)?.0
        }
        Input::Trace(trace) => trace_series(&trace, modality.unwrap_or(Modality::EyeY))?,
        Input::Series(series) => series,
    };
    let data = match kind {
        PlotKind::Scatter => PlotData::Scatter(
            series
                .pairs()
                .iter()
                .map(|&(i, v)| (i as f64, v))
                .collect(),
        ),
        PlotKind::Histogram => PlotData::Histogram(noisefp::stats::histogram(&series, bins)?),
        PlotKind::Qq => PlotData::Qq(noisefp::stats::qq_normal(&series)?),
    };
    let spec = PlotSpec::new(kind, width, height, title)?;
    let svg = render_svg(&data, &spec)?;
    std::fs::write(output, svg)?;
    println!("wrote {}", output.display());
    Ok(0)
}

/// Writes through the closure to the path (or stdout when none).
fn write_text_output<F>(path: Option<&Path>, f: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    match path {
        Some(path) => {
            let mut file = std::fs::File::create(path)?;
            f(&mut file)?;
            file.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}
