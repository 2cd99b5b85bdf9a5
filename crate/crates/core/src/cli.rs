//! Command-line front end: `interpolate`, `evaluate` and `benchmark`.
//!
//! Solver parameters are overridden with `--key=value` arguments after the
//! positional ones. [`config_entries`] lists every key; the same list is
//! echoed into CSV headers.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::ar::{NeighborLayout, PatchWeightParams};
use crate::bicubic::bicubic_upscale;
use crate::error::{Error, Result};
use crate::io;
use crate::metrics::psnr;
use crate::sampling::{downsample, SamplingSpec};
use crate::solver::{interpolate, AuxInit, GStep, IterationStats, SolverConfig};

#[derive(Debug, Parser)]
#[command(
    name = "arnl-interp",
    version,
    about = "2x grayscale interpolation with local AR and nonlocal 3-D sparse regularization"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Upscale a low-resolution image by 2x.
    Interpolate {
        lr: PathBuf,
        out: PathBuf,
        /// Parameter overrides, `--key=value`.
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Decimate a ground-truth image, reconstruct it with bicubic and the
    /// regularized solver, and write their PSNR as CSV.
    Evaluate {
        hr: PathBuf,
        csv: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Run `evaluate` over every PGM/PNG image in a directory and append
    /// per-method averages.
    Benchmark {
        dir: PathBuf,
        csv: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
}

/// Run-level settings parsed from `--key=value` arguments.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub solver: SolverConfig,
    /// Worker threads; `None` uses rayon's default.
    pub threads: Option<usize>,
    /// Where `evaluate`/`benchmark` store reconstructed images.
    pub save_images: Option<PathBuf>,
}

fn layout_name(layout: &NeighborLayout) -> String {
    if *layout == NeighborLayout::diagonal4() {
        "diagonal4".into()
    } else if *layout == NeighborLayout::axial4() {
        "axial4".into()
    } else if *layout == NeighborLayout::ring8() {
        "ring8".into()
    } else {
        layout.offsets().iter().map(|(r, c)| format!("{r}:{c}")).collect::<Vec<_>>().join(";")
    }
}

fn parse_layout(value: &str) -> Result<NeighborLayout> {
    match value {
        "diagonal4" => Ok(NeighborLayout::diagonal4()),
        "axial4" => Ok(NeighborLayout::axial4()),
        "ring8" => Ok(NeighborLayout::ring8()),
        custom => {
            let offsets = custom
                .split(';')
                .map(|pair| {
                    let (r, c) = pair.split_once(':')?;
                    Some((r.trim().parse().ok()?, c.trim().parse().ok()?))
                })
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Error::InvalidParameter(format!("bad layout '{value}'")))?;
            NeighborLayout::new(offsets)
        }
    }
}

/// Every solver setting as `(key, value)`, in a fixed order.
pub fn config_entries(cfg: &SolverConfig) -> Vec<(&'static str, String)> {
    vec![
        ("lambda", cfg.lambda.to_string()),
        ("gamma", cfg.gamma.to_string()),
        ("alpha", cfg.alpha.to_string()),
        ("beta", cfg.beta.to_string()),
        ("max_iters", cfg.max_iters.to_string()),
        ("ar.layout", layout_name(&cfg.ar.layout)),
        ("ar.patch_size", cfg.ar.patch.patch_size().to_string()),
        ("ar.mu", cfg.ar.patch.mu().to_string()),
        ("ar.window", cfg.ar.window.to_string()),
        ("ar.ridge", cfg.ar.ridge.to_string()),
        (
            "ar.g_step",
            match cfg.ar.g_step {
                GStep::Predict => "predict",
                GStep::Prox => "prox",
            }
            .into(),
        ),
        ("ar.cg_iters", cfg.ar.cg_iters.to_string()),
        ("nl.block_size", cfg.nl.block_size.to_string()),
        ("nl.levels", cfg.nl.levels.to_string()),
        ("nl.search_radius", cfg.nl.search_radius.to_string()),
        ("nl.max_group", cfg.nl.max_group.to_string()),
        ("nl.epsilon", cfg.nl.epsilon.to_string()),
        ("nl.stride", cfg.nl.stride.to_string()),
        ("sampling.phase_row", cfg.sampling.phase().0.to_string()),
        ("sampling.phase_col", cfg.sampling.phase().1.to_string()),
        (
            "aux_init",
            match cfg.aux_init {
                AuxInit::Bicubic => "bicubic",
                AuxInit::Zero => "zero",
            }
            .into(),
        ),
        ("anchor_samples", cfg.anchor_samples.to_string()),
    ]
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::InvalidParameter(format!("bad value '{value}' for {key}")))
}

/// Applies one `key=value` override.
pub fn apply_override(run: &mut RunConfig, key: &str, value: &str) -> Result<()> {
    let cfg = &mut run.solver;
    match key {
        "lambda" => cfg.lambda = parse_value(key, value)?,
        "gamma" => cfg.gamma = parse_value(key, value)?,
        "alpha" => cfg.alpha = parse_value(key, value)?,
        "beta" => cfg.beta = parse_value(key, value)?,
        "max_iters" => cfg.max_iters = parse_value(key, value)?,
        "ar.layout" => cfg.ar.layout = parse_layout(value)?,
        "ar.patch_size" => cfg.ar.patch = PatchWeightParams::new(parse_value(key, value)?, cfg.ar.patch.mu())?,
        "ar.mu" => cfg.ar.patch = PatchWeightParams::new(cfg.ar.patch.patch_size(), parse_value(key, value)?)?,
        "ar.window" => cfg.ar.window = parse_value(key, value)?,
        "ar.ridge" => cfg.ar.ridge = parse_value(key, value)?,
        "ar.g_step" => {
            cfg.ar.g_step = match value {
                "predict" => GStep::Predict,
                "prox" => GStep::Prox,
                _ => return Err(Error::InvalidParameter(format!("bad value '{value}' for ar.g_step"))),
            }
        }
        "ar.cg_iters" => cfg.ar.cg_iters = parse_value(key, value)?,
        "nl.block_size" => cfg.nl.block_size = parse_value(key, value)?,
        "nl.levels" => cfg.nl.levels = parse_value(key, value)?,
        "nl.search_radius" => cfg.nl.search_radius = parse_value(key, value)?,
        "nl.max_group" => cfg.nl.max_group = parse_value(key, value)?,
        "nl.epsilon" => cfg.nl.epsilon = parse_value(key, value)?,
        "nl.stride" => cfg.nl.stride = parse_value(key, value)?,
        "sampling.phase_row" => {
            let p = cfg.sampling.phase();
            cfg.sampling = SamplingSpec::new(cfg.sampling.factor(), (parse_value(key, value)?, p.1))?;
        }
        "sampling.phase_col" => {
            let p = cfg.sampling.phase();
            cfg.sampling = SamplingSpec::new(cfg.sampling.factor(), (p.0, parse_value(key, value)?))?;
        }
        "aux_init" => {
            cfg.aux_init = match value {
                "bicubic" => AuxInit::Bicubic,
                "zero" => AuxInit::Zero,
                _ => return Err(Error::InvalidParameter(format!("bad value '{value}' for aux_init"))),
            }
        }
        "anchor_samples" => cfg.anchor_samples = parse_value(key, value)?,
        "threads" => run.threads = Some(parse_value(key, value)?),
        "save_images" => run.save_images = Some(PathBuf::from(value)),
        _ => return Err(Error::InvalidParameter(format!("unknown option --{key}"))),
    }
    Ok(())
}

/// Parses `--key=value` (or `--key value`) arguments into a run config.
pub fn parse_overrides(args: &[String]) -> Result<RunConfig> {
    let mut run = RunConfig::default();
    let mut iter = args.iter();
    while let Some(arg) = iter.next() {
        let body =
            arg.strip_prefix("--").ok_or_else(|| Error::InvalidParameter(format!("unexpected argument '{arg}'")))?;
        let (key, value) = match body.split_once('=') {
            Some((k, v)) => (k, v.to_string()),
            None => {
                let v = iter.next().ok_or_else(|| Error::InvalidParameter(format!("missing value for --{body}")))?;
                (body, v.clone())
            }
        };
        apply_override(&mut run, key, &value)?;
    }
    run.solver.validate()?;
    Ok(run)
}

fn format_history(history: &[IterationStats]) -> String {
    let mut out = String::from("iter  data_residual      phi                psi\n");
    for s in history {
        let _ = writeln!(out, "{:>4}  {:<17.9e}  {:<17.9e}  {:<17.9e}", s.iteration, s.data_residual, s.phi, s.psi);
    }
    out
}

/// Upscales `lr` and writes the result; returns the history table.
pub fn cmd_interpolate(lr: &Path, out: &Path, run: &RunConfig) -> Result<String> {
    let y = io::read_image(lr)?;
    let result = interpolate(&y, &run.solver)?;
    io::write_image(out, &result.image)?;
    Ok(format_history(&result.history))
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub image: String,
    pub method: &'static str,
    pub psnr_db: f64,
}

pub const METHOD_BICUBIC: &str = "bicubic";
pub const METHOD_PROPOSED: &str = "proposed";

fn image_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

/// Decimates the ground truth and scores both reconstructions.
pub fn evaluate_image(hr_path: &Path, run: &RunConfig) -> Result<Vec<ScoreRow>> {
    let truth = io::read_image(hr_path)?;
    let spec = run.solver.sampling;
    if truth.width() % spec.factor() != 0 || truth.height() % spec.factor() != 0 {
        return Err(Error::DimensionMismatch(format!(
            "{}: {}x{} is not divisible by {}",
            hr_path.display(),
            truth.width(),
            truth.height(),
            spec.factor()
        )));
    }
    let lr = downsample(&truth, &spec)?;
    let bicubic = bicubic_upscale(&lr, &spec).clamp(0.0, 255.0);
    let proposed = interpolate(&lr, &run.solver)?.image;
    let name = image_name(hr_path);
    if let Some(dir) = &run.save_images {
        fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
        io::write_pgm(&dir.join(format!("{name}_{METHOD_BICUBIC}.pgm")), &bicubic)?;
        io::write_pgm(&dir.join(format!("{name}_{METHOD_PROPOSED}.pgm")), &proposed)?;
    }
    Ok(vec![
        ScoreRow { image: name.clone(), method: METHOD_BICUBIC, psnr_db: psnr(&truth, &bicubic, 255.0)? },
        ScoreRow { image: name, method: METHOD_PROPOSED, psnr_db: psnr(&truth, &proposed, 255.0)? },
    ])
}

/// CSV text: a `#` comment line per parameter, a header row, then rows.
pub fn render_csv(cfg: &SolverConfig, rows: &[ScoreRow]) -> String {
    let mut out = String::new();
    for (k, v) in config_entries(cfg) {
        let _ = writeln!(out, "# {k}={v}");
    }
    out.push_str("image,method,psnr_db\n");
    for row in rows {
        let _ = writeln!(out, "{},{},{:.6}", row.image, row.method, row.psnr_db);
    }
    out
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

pub fn cmd_evaluate(hr: &Path, csv: &Path, run: &RunConfig) -> Result<Vec<ScoreRow>> {
    let rows = evaluate_image(hr, run)?;
    write_text(csv, &render_csv(&run.solver, &rows))?;
    Ok(rows)
}

/// PGM/PNG files of a directory, sorted by file name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| ["pgm", "png"].contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

/// Per-image rows followed by one `Average` row per method.
pub fn cmd_benchmark(dir: &Path, csv: &Path, run: &RunConfig) -> Result<Vec<ScoreRow>> {
    let files = list_images(dir)?;
    if files.is_empty() {
        return Err(Error::InvalidParameter(format!("{}: no PGM or PNG images", dir.display())));
    }
    let mut rows = Vec::with_capacity(2 * files.len() + 2);
    for f in &files {
        rows.extend(evaluate_image(f, run)?);
    }
    for method in [METHOD_BICUBIC, METHOD_PROPOSED] {
        let scores: Vec<f64> = rows.iter().filter(|r| r.method == method).map(|r| r.psnr_db).collect();
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        rows.push(ScoreRow { image: "Average".into(), method, psnr_db: mean });
    }
    write_text(csv, &render_csv(&run.solver, &rows))?;
    Ok(rows)
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Executes a parsed command; returns the text to print on success.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Interpolate { lr, out, overrides } => {
            let run = parse_overrides(&overrides)?;
            with_threads(run.threads, || cmd_interpolate(&lr, &out, &run))?
        }
        Command::Evaluate { hr, csv, overrides } => {
            let run = parse_overrides(&overrides)?;
            let rows = with_threads(run.threads, || cmd_evaluate(&hr, &csv, &run))??;
            Ok(render_rows(&rows))
        }
        Command::Benchmark { dir, csv, overrides } => {
            let run = parse_overrides(&overrides)?;
            let rows = with_threads(run.threads, || cmd_benchmark(&dir, &csv, &run))??;
            Ok(render_rows(&rows))
        }
    }
}

fn render_rows(rows: &[ScoreRow]) -> String {
    rows.iter().map(|r| format!("{:<16} {:<9} {:.6}\n", r.image, r.method, r.psnr_db)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn overrides_cover_every_key() {
        let cfg = SolverConfig::default();
        let args: Vec<String> = config_entries(&cfg).iter().map(|(k, v)| format!("--{k}={v}")).collect();
        assert_eq!(parse_overrides(&args).unwrap().solver, cfg);

        let run =
            parse_overrides(&strings(&["--gamma=12.5", "--ar.layout", "ring8", "--threads=2", "--aux_init=zero"]))
                .unwrap();
        assert_eq!(run.solver.gamma, 12.5);
        assert_eq!(run.solver.ar.layout, NeighborLayout::ring8());
        assert_eq!(run.solver.aux_init, AuxInit::Zero);
        assert_eq!(run.threads, Some(2));
        let custom = parse_overrides(&strings(&["--ar.layout=-1:0;0:2"])).unwrap();
        assert_eq!(custom.solver.ar.layout.offsets(), &[(-1, 0), (0, 2)]);
    }

    #[test]
    fn bad_overrides_are_rejected() {
        assert!(parse_overrides(&strings(&["--nope=1"])).is_err());
        assert!(parse_overrides(&strings(&["--alpha=abc"])).is_err());
        assert!(parse_overrides(&strings(&["--alpha=0"])).is_err());
        assert!(parse_overrides(&strings(&["gamma=3"])).is_err());
        assert!(parse_overrides(&strings(&["--beta"])).is_err());
        assert!(parse_overrides(&strings(&["--nl.block_size=6"])).is_err());
    }

    #[test]
    fn csv_layout() {
        let rows = vec![
            ScoreRow { image: "a".into(), method: METHOD_BICUBIC, psnr_db: 30.0 },
            ScoreRow { image: "a".into(), method: METHOD_PROPOSED, psnr_db: 31.123456789 },
        ];
        let text = render_csv(&SolverConfig::default(), &rows);
        let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(lines, vec!["image,method,psnr_db", "a,bicubic,30.000000", "a,proposed,31.123457"]);
        assert!(text.contains(&format!("# gamma={}\n", SolverConfig::default().gamma)));
        assert!(text.contains("# ar.g_step=prox\n"));
    }
}
