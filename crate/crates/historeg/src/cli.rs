//! Command-line interface: `register` runs the pipeline, `transform` applies
//! a saved result to images or landmarks, `evaluate` scores landmark files,
//! and `cache-convert` precomputes pyramid caches.
//!
//! Exit codes: 0 on success, 1 for internal failures (unreadable or corrupt
//! data files, encoding errors), 2 for usage errors (bad flags, missing
//! input files, malformed config or manifest). A registration that stalls
//! still exits 0 with a warning, since a stalled optimizer is a result, not
//! a failure.

use crate::error::Error;
use crate::eval;
use crate::io::landmarks::{self, Landmark};
use crate::io::transform_file::{self, GridInfo, TransformFile};
use crate::io::{cache, config, load_image, load_pyramid};
use crate::optim::StopReason;
use crate::pipeline::{self, PipelineConfig, RegistrationResult};
use crate::transform::jacobian_stats;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "historeg",
    about = "Multimodal 2D image registration with a rigid/affine/B-spline pipeline",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register a template image onto a reference image.
    Register(RegisterArgs),
    /// Apply a saved transform to an image or to landmarks.
    Transform(TransformArgs),
    /// Score registered landmark files against their targets.
    Evaluate(EvaluateArgs),
    /// Preprocess an image into a pyramid cache file.
    CacheConvert(CacheConvertArgs),
}

#[derive(Args)]
struct RegisterArgs {
    /// Reference image (or pyramid cache).
    #[arg(long)]
    reference: PathBuf,
    /// Template image (or pyramid cache) to be mapped onto the reference.
    #[arg(long)]
    template: PathBuf,
    /// Pipeline configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for transform.reg, report.txt and landmark files.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Pipeline steps to run, an ascending subset of "123".
    #[arg(long, default_value = "123")]
    steps: String,
    /// Landmarks in reference pixel coordinates; mapped into the template
    /// frame and written to warped_landmarks.csv.
    #[arg(long)]
    landmarks: Option<PathBuf>,
    /// Ground-truth template landmarks; enables metrics.txt.
    #[arg(long, requires = "landmarks")]
    target_landmarks: Option<PathBuf>,
}

#[derive(Args)]
struct TransformArgs {
    /// Transform file written by `register`.
    #[arg(long)]
    transform: PathBuf,
    /// Template image to warp onto the reference grid.
    #[arg(long, conflicts_with = "landmarks")]
    image: Option<PathBuf>,
    /// Landmarks (reference pixel coordinates) to map into the template.
    #[arg(long)]
    landmarks: Option<PathBuf>,
    /// Output file: an image for --image, a CSV for --landmarks.
    #[arg(long)]
    out: PathBuf,
    /// Blend the warped image with the reference in NxN pixel blocks.
    #[arg(long, value_name = "N", requires = "image", requires = "reference")]
    checkerboard: Option<u32>,
    /// Reference image, required by --checkerboard.
    #[arg(long)]
    reference: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Manifest with one pair per line:
    /// `warped.csv,target.csv,WIDTHxHEIGHT[,initial.csv]`.
    #[arg(long)]
    pairs: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CacheConvertArgs {
    /// Image to decode and preprocess.
    #[arg(long)]
    input: PathBuf,
    /// Output pyramid cache file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

/// Parses the CLI and runs the selected command, mapping errors to exit
/// codes.
pub fn run() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e)
            if matches!(
                e.kind(),
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion
            ) =>
        {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Register(args) => register(args),
        Command::Transform(args) => transform(args),
        Command::Evaluate(args) => evaluate(args),
        Command::CacheConvert(args) => cache_convert(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

/// An ascending, non-empty subset of the digits 1, 2, 3.
fn parse_steps(s: &str) -> Result<(bool, bool, bool), CliError> {
    pipeline::parse_step_selection(s).map_err(|e| CliError::Usage(format!("--steps: {e}")))
}

fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "file not found: {}",
            path.display()
        )))
    }
}

fn grid_of(level: &crate::image::Image) -> GridInfo {
    GridInfo {
        width: level.width(),
        height: level.height(),
        spacing: level.spacing(),
        origin: level.origin(),
    }
}

fn run_report(
    result: &RegistrationResult,
    reference: &GridInfo,
    cfg: &PipelineConfig,
    elapsed_s: f64,
) -> String {
    let mut report = String::new();
    for step in &result.reports {
        let iterations: usize = step.levels.iter().map(|l| l.run.iterations).sum();
        let _ = write!(
            report,
            "step {}: ngf {:.6} -> {:.6} ({} levels, {} iterations",
            step.step,
            step.initial_ngf,
            step.final_ngf,
            step.levels.len(),
            iterations
        );
        let stops: Vec<&str> = step.levels.iter().map(|l| l.run.stop.as_str()).collect();
        let _ = write!(report, ", stops: {}", stops.join(" "));
        report.push(')');
        if step.reverted {
            report.push_str(" [no improvement, kept initialization]");
        }
        report.push('\n');
    }
    if let Some(r) = &result.rigid {
        let _ = writeln!(
            report,
            "rigid: angle {:.6} rad, translation ({:.6}, {:.6})",
            r.angle, r.translation.0, r.translation.1
        );
    }
    let a = result.transform.affine.a;
    let _ = writeln!(
        report,
        "affine: [{} {} {}; {} {} {}]",
        a[0], a[1], a[2], a[3], a[4], a[5]
    );
    let stats = jacobian_stats(
        &result.transform,
        reference.width,
        reference.height,
        reference.spacing,
        reference.origin,
    );
    let _ = writeln!(
        report,
        "jacobian determinant: min {:.6}, max {:.6}, max area change {:.6}",
        stats.min_det, stats.max_det, stats.max_area_change
    );
    let _ = writeln!(report, "total time: {elapsed_s:.2} s");
    report.push_str("\nconfiguration:\n");
    report.push_str(&config::format_config(cfg));
    report
}

fn stalled(result: &RegistrationResult) -> bool {
    result.reports.iter().any(|s| {
        s.levels
            .iter()
            .any(|l| l.run.stop == StopReason::LineSearchStalled)
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn register(args: RegisterArgs) -> Result<(), CliError> {
    let (s1, s2, s3) = parse_steps(&args.steps)?;
    for path in [Some(&args.reference), Some(&args.template), args.config.as_ref(), args.landmarks.as_ref(), args.target_landmarks.as_ref()]
        .into_iter()
        .flatten()
    {
        require_file(path)?;
    }
    let mut cfg: PipelineConfig = match &args.config {
        Some(path) => config::read_config_file(path).map_err(|e| match e {
            e @ (Error::Parse { .. } | Error::InvalidConfig(_)) => {
                CliError::Usage(e.to_string())
            }
            e => CliError::Runtime(e),
        })?,
        None => PipelineConfig::default(),
    };
    cfg.step1.enabled &= s1;
    cfg.step2.enabled &= s2;
    cfg.step3.enabled &= s3;

    let start = Instant::now();
    let reference = load_pyramid(&args.reference)?;
    let template = load_pyramid(&args.template)?;
    let result = pipeline::run(&reference, &template, &cfg)?;
    let elapsed = start.elapsed().as_secs_f64();

    let ref_grid = grid_of(reference.finest());
    let tmpl_grid = grid_of(template.finest());
    let report = run_report(&result, &ref_grid, &cfg, elapsed);
    print!("{report}");
    if stalled(&result) {
        eprintln!("warning: line search stalled on at least one level; the result up to that point was kept");
    }

    std::fs::create_dir_all(&args.out).map_err(|source| Error::Write {
        path: args.out.clone(),
        source,
    })?;
    let tf = TransformFile {
        reference: ref_grid,
        template: tmpl_grid,
        rigid: result.rigid,
        transform: result.transform,
    };
    let transform_path = args.out.join("transform.reg");
    transform_file::write_transform(&transform_path, &tf)?;
    write_text(&args.out.join("report.txt"), &report)?;
    println!("transform written to {}", transform_path.display());

    if let Some(input) = &args.landmarks {
        let marks = landmarks::read_landmarks(input)?;
        let mapped = map_landmarks(&marks, &tf);
        let warped_path = args.out.join("warped_landmarks.csv");
        landmarks::write_landmarks(&warped_path, &mapped)?;
        println!("landmarks written to {}", warped_path.display());

        if let Some(target_path) = &args.target_landmarks {
            let targets = landmarks::points(&landmarks::read_landmarks(target_path)?);
            let diagonal = tf.template.diagonal_pixels();
            let initial = eval::relative_errors(&landmarks::points(&marks), &targets, diagonal)?;
            let final_ = eval::relative_errors(&landmarks::points(&mapped), &targets, diagonal)?;
            let initial_median = eval::median(&initial)?;
            let final_median = eval::median(&final_)?;
            let mut metrics = String::new();
            let _ = writeln!(
                metrics,
                "pair 1: mrtre {final_median} (initial {initial_median})"
            );
            let _ = writeln!(metrics, "pairs: 1");
            let _ = writeln!(metrics, "amrtre: {final_median}");
            let _ = writeln!(metrics, "mmrtre: {final_median}");
            let _ = writeln!(
                metrics,
                "robustness: {}",
                eval::robustness(&[initial_median], &[final_median])?
            );
            let metrics_path = args.out.join("metrics.txt");
            write_text(&metrics_path, &metrics)?;
            println!("metrics written to {}", metrics_path.display());
        }
    }
    Ok(())
}

/// Maps reference-frame landmarks (pixel units) into template pixel units.
fn map_landmarks(marks: &[Landmark], tf: &TransformFile) -> Vec<Landmark> {
    marks
        .iter()
        .map(|m| {
            let phys = tf.reference.pixel_to_physical((m.x, m.y));
            let mapped = tf.transform.apply(phys);
            let px = tf.template.physical_to_pixel(mapped);
            Landmark {
                id: m.id.clone(),
                x: px.0,
                y: px.1,
            }
        })
        .collect()
}

/// Warps the raw template image onto the reference grid; positions mapping
/// outside the template are filled white (slide background).
fn warp_rgb(template: &image::RgbImage, tf: &TransformFile) -> image::RgbImage {
    let (out_w, out_h) = (tf.reference.width as u32, tf.reference.height as u32);
    let (tw, th) = (template.width() as i64, template.height() as i64);
    let mut out = image::RgbImage::new(out_w, out_h);
    let rows: Vec<Vec<[u8; 3]>> = (0..out_h)
        .into_par_iter()
        .map(|i| {
            let mut row = Vec::with_capacity(out_w as usize);
            for j in 0..out_w {
                let phys = tf.reference.pixel_to_physical((j as f64, i as f64));
                let mapped = tf.transform.apply(phys);
                let (u, v) = tf.template.physical_to_pixel(mapped);
                row.push(sample_rgb(template, tw, th, u, v));
            }
            row
        })
        .collect();
    for (i, row) in rows.into_iter().enumerate() {
        for (j, px) in row.into_iter().enumerate() {
            out.put_pixel(j as u32, i as u32, image::Rgb(px));
        }
    }
    out
}

fn sample_rgb(img: &image::RgbImage, w: i64, h: i64, u: f64, v: f64) -> [u8; 3] {
    if u < -0.5 || v < -0.5 || u > w as f64 - 0.5 || v > h as f64 - 0.5 {
        return [255, 255, 255];
    }
    let j0 = u.floor() as i64;
    let i0 = v.floor() as i64;
    let fu = u - j0 as f64;
    let fv = v - i0 as f64;
    let clamp = |i: i64, j: i64| -> &image::Rgb<u8> {
        img.get_pixel(j.clamp(0, w - 1) as u32, i.clamp(0, h - 1) as u32)
    };
    let (s00, s01, s10, s11) = (
        clamp(i0, j0),
        clamp(i0, j0 + 1),
        clamp(i0 + 1, j0),
        clamp(i0 + 1, j0 + 1),
    );
    let mut px = [0u8; 3];
    for c in 0..3 {
        let top = s00.0[c] as f64 + fu * (s01.0[c] as f64 - s00.0[c] as f64);
        let bot = s10.0[c] as f64 + fu * (s11.0[c] as f64 - s10.0[c] as f64);
        px[c] = (top + fv * (bot - top)).round().clamp(0.0, 255.0) as u8;
    }
    px
}

fn transform(args: TransformArgs) -> Result<(), CliError> {
    let tf = transform_file::read_transform(&args.transform)?;
    match (&args.image, &args.landmarks) {
        (Some(image_path), None) => {
            let decoded = image::open(image_path)
                .map_err(|source| Error::Decode {
                    path: image_path.clone(),
                    source,
                })?
                .to_rgb8();
            if (decoded.width() as usize, decoded.height() as usize)
                != (tf.template.width, tf.template.height)
            {
                return Err(CliError::Runtime(Error::InvalidImage(format!(
                    "{} is {}x{}, but the transform was computed for a {}x{} template",
                    image_path.display(),
                    decoded.width(),
                    decoded.height(),
                    tf.template.width,
                    tf.template.height
                ))));
            }
            let mut warped = warp_rgb(&decoded, &tf);
            if let Some(n) = args.checkerboard {
                if n == 0 {
                    return Err(CliError::Usage(
                        "--checkerboard size must be positive".into(),
                    ));
                }
                let ref_path = args.reference.as_ref().expect("enforced by clap");
                let reference = image::open(ref_path)
                    .map_err(|source| Error::Decode {
                        path: ref_path.clone(),
                        source,
                    })?
                    .to_rgb8();
                if (reference.width() as usize, reference.height() as usize)
                    != (tf.reference.width, tf.reference.height)
                {
                    return Err(CliError::Runtime(Error::InvalidImage(format!(
                        "{} does not match the transform's reference grid",
                        ref_path.display()
                    ))));
                }
                for (j, i, px) in warped.enumerate_pixels_mut() {
                    if (j / n + i / n) % 2 == 0 {
                        *px = *reference.get_pixel(j, i);
                    }
                }
            }
            warped.save(&args.out).map_err(|source| Error::Encode {
                path: args.out.clone(),
                source,
            })?;
            Ok(())
        }
        (None, Some(landmarks_path)) => {
            if args.checkerboard.is_some() {
                return Err(CliError::Usage(
                    "--checkerboard applies to --image, not --landmarks".into(),
                ));
            }
            let marks = landmarks::read_landmarks(landmarks_path)?;
            let mapped = map_landmarks(&marks, &tf);
            landmarks::write_landmarks(&args.out, &mapped)?;
            Ok(())
        }
        _ => Err(CliError::Usage(
            "pass exactly one of --image or --landmarks".into(),
        )),
    }
}

#[derive(Debug)]
struct PairSpec {
    warped: PathBuf,
    target: PathBuf,
    diagonal: f64,
    initial: Option<PathBuf>,
}

fn parse_manifest(text: &str, path: &Path) -> Result<Vec<PairSpec>, CliError> {
    let err = |line: usize, msg: String| {
        CliError::Usage(format!("{}:{line}: {msg}", path.display()))
    };
    let base = path.parent().unwrap_or(Path::new(""));
    let mut pairs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 && fields.len() != 4 {
            return Err(err(
                no,
                format!(
                    "expected 3 or 4 comma-separated fields, found {}",
                    fields.len()
                ),
            ));
        }
        let Some((w, h)) = fields[2].split_once('x') else {
            return Err(err(
                no,
                format!("expected WIDTHxHEIGHT, found {:?}", fields[2]),
            ));
        };
        let w: f64 = w
            .trim()
            .parse()
            .map_err(|_| err(no, format!("invalid width {w:?}")))?;
        let h: f64 = h
            .trim()
            .parse()
            .map_err(|_| err(no, format!("invalid height {h:?}")))?;
        if !(w > 0.0 && h > 0.0) {
            return Err(err(no, "image size must be positive".into()));
        }
        pairs.push(PairSpec {
            warped: base.join(fields[0]),
            target: base.join(fields[1]),
            diagonal: (w * w + h * h).sqrt(),
            initial: fields.get(3).map(|f| base.join(f)),
        });
    }
    if pairs.is_empty() {
        return Err(err(1, "no pairs in manifest".into()));
    }
    Ok(pairs)
}

fn evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    require_file(&args.pairs)?;
    let text = std::fs::read_to_string(&args.pairs).map_err(|source| Error::Read {
        path: args.pairs.clone(),
        source,
    })?;
    let pairs = parse_manifest(&text, &args.pairs)?;

    let mut report = String::new();
    let mut initial_medians = Vec::with_capacity(pairs.len());
    let mut final_medians = Vec::with_capacity(pairs.len());
    for (idx, pair) in pairs.iter().enumerate() {
        let warped = landmarks::points(&landmarks::read_landmarks(&pair.warped)?);
        let target = landmarks::points(&landmarks::read_landmarks(&pair.target)?);
        let final_errors = eval::relative_errors(&warped, &target, pair.diagonal)?;
        let final_median = eval::median(&final_errors)?;
        let initial_median = match &pair.initial {
            Some(path) => {
                let initial = landmarks::points(&landmarks::read_landmarks(path)?);
                eval::median(&eval::relative_errors(&initial, &target, pair.diagonal)?)?
            }
            None => final_median,
        };
        let _ = writeln!(
            report,
            "pair {}: mrtre {final_median} (initial {initial_median})",
            idx + 1
        );
        initial_medians.push(initial_median);
        final_medians.push(final_median);
    }
    let _ = writeln!(report, "pairs: {}", pairs.len());
    let _ = writeln!(report, "amrtre: {}", eval::amrtre(&final_medians)?);
    let _ = writeln!(report, "mmrtre: {}", eval::mmrtre(&final_medians)?);
    let _ = writeln!(
        report,
        "robustness: {}",
        eval::robustness(&initial_medians, &final_medians)?
    );
    match &args.out {
        Some(path) => write_text(path, &report)?,
        None => print!("{report}"),
    }
    Ok(())
}

fn cache_convert(args: CacheConvertArgs) -> Result<(), CliError> {
    require_file(&args.input)?;
    let img = load_image(&args.input)?;
    let pyramid = crate::image::Pyramid::build(img);
    cache::write_cache(&args.out, &pyramid)?;
    println!(
        "cache written to {} ({} levels)",
        args.out.display(),
        pyramid.levels().len()
    );
    Ok(())
}
