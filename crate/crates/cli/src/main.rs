//! Command-line driver for the restoration pipelines: simulate noisy cubes,
//! denoise, inpaint, evaluate, and inspect.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O or file-format error, 3 numerical
//! or conditioning error, 4 underdetermined inpainting system.

mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fasthyde::cube::{normalize_bands, HsiCube};
use fasthyde::denoiser::DenoiserSpec;
use fasthyde::fasthyde::{
    fasthyde_iid, fasthyde_noniid, fasthyde_poisson, DenoiseRequest, DenoiseResult, DimensionSpec,
    NoiseSpec,
};
use fasthyde::fasthyin::{
    fasthyin_diag, fasthyin_iid, fasthyin_noniid, InpaintRequest, UnderdeterminedPolicy,
};
use fasthyde::metrics::report;
use fasthyde::simulate::{add_case1, add_case2, add_case3, make_ground_truth, make_stripe_mask};
use fasthyde::subspace::{estimate_noise, gram_spectrum, NoiseModel};
use fasthyde::{io as hio, Error as CoreError};

use manifest::Manifest;

const EXIT_USAGE: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_UNDERDETERMINED: u8 = 4;

#[derive(Debug)]
enum CliError {
    Usage(String),
    Core(CoreError),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(CoreError::Io(e))
    }
}

type CliResult<T> = Result<T, CliError>;

fn exit_code_for(err: &CliError) -> u8 {
    match err {
        CliError::Usage(_) => EXIT_USAGE,
        CliError::Core(core) => match core {
            CoreError::Io(_)
            | CoreError::Format { .. }
            | CoreError::Length { .. }
            | CoreError::Data(_) => EXIT_IO,
            CoreError::Underdetermined(_) => EXIT_UNDERDETERMINED,
            CoreError::InvalidArg(_) => EXIT_USAGE,
            CoreError::DimMismatch(_)
            | CoreError::DegenerateBand { .. }
            | CoreError::Rank(_)
            | CoreError::Conditioning(_)
            | CoreError::Unsupported(_) => EXIT_NUMERICAL,
        },
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "fasthyde",
    version,
    about = "Fast hyperspectral denoising and inpainting via low-rank subspaces and non-local patch filtering",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a clean low-rank cube and a noisy observation of it.
    Simulate(SimulateArgs),
    /// Restore a noisy cube.
    Denoise(RestoreArgs),
    /// Restore a noisy cube with missing samples at known positions.
    Inpaint(RestoreArgs),
    /// Per-band PSNR/SSIM report of a restored cube against a reference.
    Evaluate(EvaluateArgs),
    /// Print dimensions, band statistics, noise estimates and the
    /// eigenvalue profile of a cube.
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Noise case: 1 (Gaussian i.i.d.), 2 (Gaussian band-varying),
    /// 3 (Poissonian counts).
    #[arg(long)]
    case: Option<u8>,
    /// Case-1 noise standard deviation.
    #[arg(long)]
    sigma: Option<f64>,
    /// Case-3 target SNR in dB.
    #[arg(long = "snr-db")]
    snr_db: Option<f64>,
    /// Ground-truth subspace rank.
    #[arg(long)]
    rank: Option<usize>,
    /// Cube size as WIDTHxHEIGHTxBANDS, e.g. 64x64x32.
    #[arg(long)]
    size: Option<String>,
    /// Master seed for every random draw.
    #[arg(long)]
    seed: Option<u64>,
    /// Use this cube (normalized per band) instead of a generated one.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output prefix; files are written as `<prefix>_clean.hsic` and so on.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Bands to strip (comma-separated indices).
    #[arg(long = "stripe-bands")]
    stripe_bands: Option<String>,
    /// Columns to strip in every striped band (comma-separated indices).
    #[arg(long = "stripe-cols")]
    stripe_cols: Option<String>,
    /// Replay parameters from a manifest written by a previous run.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RestoreArgs {
    /// Input cube.
    #[arg(long)]
    input: PathBuf,
    /// Restored cube destination.
    #[arg(long)]
    output: PathBuf,
    /// Noise model: `auto` | `iid:<sigma>` | `diag:<path>` | `full:<path>` | `poisson`.
    #[arg(long, default_value = "auto")]
    noise: String,
    /// Subspace dimension: `auto` | `<k>`.
    #[arg(long, default_value = "auto")]
    rank: String,
    /// Plug-in denoiser: identity | nlmeans | bm3d.
    #[arg(long, default_value = "bm3d")]
    denoiser: String,
    /// Patch side length.
    #[arg(long)]
    patch: Option<usize>,
    /// Reference-patch grid step.
    #[arg(long)]
    step: Option<usize>,
    /// Search window side length.
    #[arg(long)]
    search: Option<usize>,
    /// Observation mask (inpaint only).
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Underdetermined-pixel policy: error | ridge (inpaint only).
    #[arg(long, default_value = "error")]
    policy: String,
    /// Timing/report sidecar destination (key=value lines).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Export the basis used by the denoising stage.
    #[arg(long = "export-basis")]
    export_basis: Option<PathBuf>,
    /// Export the noise model the pipeline operated with.
    #[arg(long = "export-noise")]
    export_noise: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Reference (clean) cube.
    #[arg(long)]
    reference: PathBuf,
    /// Cube under evaluation.
    #[arg(long)]
    test: PathBuf,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Divide the test cube by this factor first (e.g. the Poisson alpha
    /// recorded in a simulation manifest).
    #[arg(long)]
    scale: Option<f64>,
}

#[derive(Args, Debug)]
struct InspectArgs {
    /// Cube to inspect.
    #[arg(long)]
    input: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Denoise(args) => cmd_denoise(args),
        Command::Inpaint(args) => cmd_inpaint(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Inspect(args) => cmd_inspect(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            match &err {
                CliError::Usage(msg) => eprintln!("error: {msg}"),
                CliError::Core(core) => eprintln!("error: {core}"),
            }
            ExitCode::from(exit_code_for(&err))
        }
    }
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn parse_size(text: &str) -> CliResult<(usize, usize, usize)> {
    let parts: Vec<&str> = text.split('x').collect();
    if parts.len() != 3 {
        return Err(CliError::Usage(format!(
            "--size must be WIDTHxHEIGHTxBANDS, got {text:?}"
        )));
    }
    let mut dims = [0usize; 3];
    for (d, p) in dims.iter_mut().zip(&parts) {
        *d = p
            .parse()
            .map_err(|_| CliError::Usage(format!("bad dimension {p:?} in --size")))?;
    }
    Ok((dims[0], dims[1], dims[2]))
}

fn parse_index_list(text: &str, what: &str) -> CliResult<Vec<usize>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Usage(format!("bad {what} index {s:?}")))
        })
        .collect()
}

fn cmd_simulate(mut args: SimulateArgs) -> CliResult<()> {
    if let Some(path) = &args.manifest {
        let m = Manifest::read(path)?;
        let fetch = |key: &str| m.get(key).map(str::to_string);
        args.case = args
            .case
            .or_else(|| fetch("case").and_then(|v| v.parse().ok()));
        args.sigma = args
            .sigma
            .or_else(|| fetch("sigma").and_then(|v| v.parse().ok()));
        args.snr_db = args
            .snr_db
            .or_else(|| fetch("snr_db").and_then(|v| v.parse().ok()));
        args.rank = args
            .rank
            .or_else(|| fetch("rank").and_then(|v| v.parse().ok()));
        if args.size.is_none() {
            if let (Some(w), Some(h), Some(b)) = (fetch("width"), fetch("height"), fetch("bands")) {
                args.size = Some(format!("{w}x{h}x{b}"));
            }
        }
        args.seed = args
            .seed
            .or_else(|| fetch("seed").and_then(|v| v.parse().ok()));
        if args.input.is_none() {
            args.input = fetch("source")
                .filter(|v| v != "generated")
                .map(PathBuf::from);
        }
        if args.output.is_none() {
            args.output = fetch("prefix").map(PathBuf::from);
        }
        if args.stripe_bands.is_none() {
            args.stripe_bands = fetch("stripe_bands").filter(|v| !v.is_empty());
        }
        if args.stripe_cols.is_none() {
            args.stripe_cols = fetch("stripe_cols").filter(|v| !v.is_empty());
        }
    }

    let case = args
        .case
        .ok_or_else(|| CliError::Usage("--case is required".into()))?;
    let seed = args.seed.unwrap_or(0);
    let output = args
        .output
        .clone()
        .ok_or_else(|| CliError::Usage("--output prefix is required".into()))?;
    let prefix = output.to_string_lossy().to_string();

    // Clean cube: supplied (then normalized per band) or generated.
    let (clean, source, rank, (w, h, nb)) = match &args.input {
        Some(path) => {
            let raw = hio::load_cube(path)?;
            let (norm, _) = normalize_bands(&raw)?;
            let dims = (norm.width(), norm.height(), norm.n_bands());
            (
                norm,
                path.to_string_lossy().to_string(),
                args.rank.unwrap_or(0),
                dims,
            )
        }
        None => {
            let size = args
                .size
                .as_deref()
                .ok_or_else(|| CliError::Usage("--size is required without --input".into()))?;
            let (w, h, nb) = parse_size(size)?;
            let rank = args
                .rank
                .ok_or_else(|| CliError::Usage("--rank is required without --input".into()))?;
            let clean = make_ground_truth(w, h, nb, rank, seed)?;
            (clean, "generated".to_string(), rank, (w, h, nb))
        }
    };

    let mut man = Manifest::new();
    man.push("command", "simulate");
    man.push("case", case);
    man.push("seed", seed);
    man.push("width", w);
    man.push("height", h);
    man.push("bands", nb);
    man.push("rank", rank);
    man.push("source", &source);
    man.push("prefix", &prefix);

    let clean_path = format!("{prefix}_clean.hsic");
    let noisy_path = format!("{prefix}_noisy.hsic");
    hio::save_cube(&clean, &clean_path)?;
    man.push("clean", &clean_path);

    let noise_seed = seed ^ 0x6E01_5E5E_ED00_0001;
    match case {
        1 => {
            let sigma = args
                .sigma
                .ok_or_else(|| CliError::Usage("case 1 requires --sigma".into()))?;
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(CliError::Usage(format!(
                    "case 1 sigma must be positive, got {sigma}"
                )));
            }
            let noisy = add_case1(&clean, sigma, noise_seed)?;
            hio::save_cube(&noisy, &noisy_path)?;
            let model = NoiseModel::iid(sigma)?;
            let noise_path = format!("{prefix}_noise.hsin");
            hio::save_noise_model(&model, &noise_path)?;
            man.push("sigma", sigma);
            man.push("noisy", &noisy_path);
            man.push("noise_file", &noise_path);
        }
        2 => {
            let (noisy, model) = add_case2(&clean, noise_seed)?;
            hio::save_cube(&noisy, &noisy_path)?;
            let noise_path = format!("{prefix}_noise.hsin");
            hio::save_noise_model(&model, &noise_path)?;
            man.push("noisy", &noisy_path);
            man.push("noise_file", &noise_path);
        }
        3 => {
            let snr_db = args
                .snr_db
                .ok_or_else(|| CliError::Usage("case 3 requires --snr-db".into()))?;
            let (noisy, alpha) = add_case3(&clean, snr_db, noise_seed)?;
            hio::save_cube(&noisy, &noisy_path)?;
            man.push("snr_db", snr_db);
            man.push("alpha", format!("{alpha:.12e}"));
            man.push("noisy", &noisy_path);
        }
        other => {
            return Err(CliError::Usage(format!(
                "--case must be 1, 2 or 3, got {other}"
            )));
        }
    }

    let stripe_bands = args
        .stripe_bands
        .as_deref()
        .map(|s| parse_index_list(s, "band"))
        .transpose()?
        .unwrap_or_default();
    let stripe_cols = args
        .stripe_cols
        .as_deref()
        .map(|s| parse_index_list(s, "column"))
        .transpose()?
        .unwrap_or_default();
    if !stripe_bands.is_empty() || !stripe_cols.is_empty() {
        let mask = make_stripe_mask(w, h, nb, &stripe_bands, &stripe_cols)?;
        let mask_path = format!("{prefix}_mask.hsim");
        hio::save_mask(&mask, &mask_path)?;
        man.push(
            "stripe_bands",
            stripe_bands
                .iter()
                .map(|b| b.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        man.push(
            "stripe_cols",
            stripe_cols
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        man.push("mask", &mask_path);
    }

    man.write(format!("{prefix}_manifest.txt"))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// denoise / inpaint
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
enum NoiseArg {
    Auto,
    Iid(f64),
    Diag(PathBuf),
    Full(PathBuf),
    Poisson,
}

fn parse_noise(text: &str) -> CliResult<NoiseArg> {
    if text == "auto" {
        return Ok(NoiseArg::Auto);
    }
    if text == "poisson" {
        return Ok(NoiseArg::Poisson);
    }
    if let Some(rest) = text.strip_prefix("iid:") {
        let sigma: f64 = rest
            .parse()
            .map_err(|_| CliError::Usage(format!("bad iid sigma {rest:?}")))?;
        return Ok(NoiseArg::Iid(sigma));
    }
    if let Some(rest) = text.strip_prefix("diag:") {
        return Ok(NoiseArg::Diag(PathBuf::from(rest)));
    }
    if let Some(rest) = text.strip_prefix("full:") {
        return Ok(NoiseArg::Full(PathBuf::from(rest)));
    }
    Err(CliError::Usage(format!(
        "--noise must be auto | iid:<sigma> | diag:<path> | full:<path> | poisson, got {text:?}"
    )))
}

fn parse_rank(text: &str) -> CliResult<DimensionSpec> {
    if text == "auto" {
        return Ok(DimensionSpec::Auto);
    }
    let k: usize = text
        .parse()
        .map_err(|_| CliError::Usage(format!("--rank must be auto or an integer, got {text:?}")))?;
    Ok(DimensionSpec::Fixed(k))
}

fn parse_denoiser(args: &RestoreArgs) -> CliResult<DenoiserSpec> {
    let mut spec = match args.denoiser.as_str() {
        "identity" => DenoiserSpec::identity(),
        "nlmeans" => DenoiserSpec::nl_means(),
        "bm3d" => DenoiserSpec::bm3d_like(),
        other => {
            return Err(CliError::Usage(format!(
                "--denoiser must be identity | nlmeans | bm3d, got {other:?}"
            )))
        }
    };
    if let Some(patch) = args.patch {
        spec.patch_size = patch;
    }
    if let Some(step) = args.step {
        spec.step = step;
    }
    if let Some(search) = args.search {
        spec.search_window = search;
    }
    spec.validate()?;
    Ok(spec)
}

fn load_noise_model(arg: &NoiseArg) -> CliResult<Option<NoiseModel>> {
    Ok(match arg {
        NoiseArg::Auto | NoiseArg::Poisson => None,
        NoiseArg::Iid(sigma) => Some(NoiseModel::iid(*sigma)?),
        NoiseArg::Diag(path) => {
            let model = hio::load_noise_model(path)?;
            match model {
                NoiseModel::Diagonal { .. } | NoiseModel::Iid { .. } => Some(model),
                NoiseModel::Full { .. } => {
                    return Err(CliError::Usage(format!(
                        "{} holds a full covariance; pass it as full:<path>",
                        path.display()
                    )))
                }
            }
        }
        NoiseArg::Full(path) => Some(hio::load_noise_model(path)?),
    })
}

fn write_sidecar(
    path: &Path,
    command: &str,
    args: &RestoreArgs,
    result: &DenoiseResult,
) -> CliResult<()> {
    let mut man = Manifest::new();
    man.push("command", command);
    man.push("input", args.input.display());
    man.push("output", args.output.display());
    man.push("noise", &args.noise);
    man.push("rank_requested", &args.rank);
    man.push("rank_used", result.basis.dimension());
    man.push("denoiser", &args.denoiser);
    if let Some(mask) = &args.mask {
        man.push("mask", mask.display());
        man.push("policy", &args.policy);
        man.push("ridge_pixels", result.ridge_pixels.len());
    }
    man.push("clamped", result.clamped);
    man.push(
        "eigen_sigmas",
        result
            .eigen_sigmas
            .iter()
            .map(|s| format!("{s:.6}"))
            .collect::<Vec<_>>()
            .join(","),
    );
    let t = &result.timings;
    man.push("time_noise_estimate", format!("{:.6}", t.noise_estimate));
    man.push("time_transform", format!("{:.6}", t.transform));
    man.push("time_subspace", format!("{:.6}", t.subspace));
    man.push("time_recover", format!("{:.6}", t.recover));
    man.push("time_project", format!("{:.6}", t.project));
    man.push("time_denoise", format!("{:.6}", t.denoise));
    man.push("time_reconstruct", format!("{:.6}", t.reconstruct));
    man.push(
        "time_inverse_transform",
        format!("{:.6}", t.inverse_transform),
    );
    man.push("time_total", format!("{:.6}", t.total));
    man.write(path)?;
    Ok(())
}

fn finish_restore(command: &str, args: &RestoreArgs, result: &DenoiseResult) -> CliResult<()> {
    hio::save_cube(&result.restored, &args.output)?;
    if let Some(report_path) = &args.report {
        write_sidecar(report_path, command, args, result)?;
    }
    if let Some(basis_path) = &args.export_basis {
        hio::save_basis(&result.basis, basis_path)?;
    }
    if let Some(noise_path) = &args.export_noise {
        hio::save_noise_model(&result.noise, noise_path)?;
    }
    Ok(())
}

fn cmd_denoise(args: RestoreArgs) -> CliResult<()> {
    if args.mask.is_some() {
        return Err(CliError::Usage(
            "--mask is an inpaint flag; use the inpaint command".into(),
        ));
    }
    let cube = hio::load_cube(&args.input)?;
    let noise_arg = parse_noise(&args.noise)?;
    let rank = parse_rank(&args.rank)?;
    let denoiser = parse_denoiser(&args)?;

    let result = match &noise_arg {
        NoiseArg::Poisson => {
            let req = DenoiseRequest::new(cube, NoiseSpec::Auto, rank, denoiser)?;
            fasthyde_poisson(&req)?
        }
        NoiseArg::Iid(sigma) => {
            let req = DenoiseRequest::new(
                cube,
                NoiseSpec::Known(NoiseModel::iid(*sigma)?),
                rank,
                denoiser,
            )?;
            fasthyde_iid(&req)?
        }
        NoiseArg::Auto => {
            let req = DenoiseRequest::new(cube, NoiseSpec::Auto, rank, denoiser)?;
            fasthyde_noniid(&req)?
        }
        NoiseArg::Diag(_) | NoiseArg::Full(_) => {
            let model = load_noise_model(&noise_arg)?.expect("model present");
            let req = DenoiseRequest::new(cube, NoiseSpec::Known(model), rank, denoiser)?;
            fasthyde_noniid(&req)?
        }
    };
    finish_restore("denoise", &args, &result)
}

fn cmd_inpaint(args: RestoreArgs) -> CliResult<()> {
    let mask_path = args
        .mask
        .as_ref()
        .ok_or_else(|| CliError::Usage("inpaint requires --mask".into()))?;
    let cube = hio::load_cube(&args.input)?;
    let mask = hio::load_mask(mask_path)?;
    let noise_arg = parse_noise(&args.noise)?;
    let rank = parse_rank(&args.rank)?;
    let denoiser = parse_denoiser(&args)?;
    let policy = match args.policy.as_str() {
        "error" => UnderdeterminedPolicy::Error,
        "ridge" => UnderdeterminedPolicy::Ridge,
        other => {
            return Err(CliError::Usage(format!(
                "--policy must be error | ridge, got {other:?}"
            )))
        }
    };

    let result = match &noise_arg {
        NoiseArg::Poisson => {
            return Err(CliError::Usage(
                "inpainting dispatches on Gaussian noise models only (auto, iid:, diag:, full:)"
                    .into(),
            ))
        }
        NoiseArg::Iid(sigma) => {
            let req = InpaintRequest::new(
                cube,
                mask,
                NoiseSpec::Known(NoiseModel::iid(*sigma)?),
                rank,
                denoiser,
                policy,
            )?;
            fasthyin_iid(&req)?
        }
        NoiseArg::Auto => {
            let req = InpaintRequest::new(cube, mask, NoiseSpec::Auto, rank, denoiser, policy)?;
            fasthyin_noniid(&req)?
        }
        NoiseArg::Diag(_) => {
            let model = load_noise_model(&noise_arg)?.expect("model present");
            let req =
                InpaintRequest::new(cube, mask, NoiseSpec::Known(model), rank, denoiser, policy)?;
            fasthyin_diag(&req)?
        }
        NoiseArg::Full(_) => {
            let model = load_noise_model(&noise_arg)?.expect("model present");
            let req =
                InpaintRequest::new(cube, mask, NoiseSpec::Known(model), rank, denoiser, policy)?;
            fasthyin_noniid(&req)?
        }
    };
    finish_restore("inpaint", &args, &result)
}

// ---------------------------------------------------------------------------
// evaluate / inspect
// ---------------------------------------------------------------------------

fn cmd_evaluate(args: EvaluateArgs) -> CliResult<()> {
    let reference = hio::load_cube(&args.reference)?;
    let mut test = hio::load_cube(&args.test)?;
    if let Some(scale) = args.scale {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(CliError::Usage(format!(
                "--scale must be positive, got {scale}"
            )));
        }
        test = HsiCube::new(
            test.width(),
            test.height(),
            test.n_bands(),
            test.values().iter().map(|v| v / scale).collect(),
        )?;
    }
    let rep = report(&reference, &test)?;
    let csv = rep.to_csv();
    match &args.report {
        Some(path) => std::fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_inspect(args: InspectArgs) -> CliResult<()> {
    let cube = hio::load_cube(&args.input)?;
    let n = cube.n_pixels() as f64;
    println!(
        "# cube {}x{}x{}",
        cube.width(),
        cube.height(),
        cube.n_bands()
    );
    println!("# band mean std min max");
    for b in 0..cube.n_bands() {
        let band = cube.band(b);
        let mean = band.iter().sum::<f64>() / n;
        let var = band.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let lo = band.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = band.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        println!("{b} {mean:.6} {:.6} {lo:.6} {hi:.6}", var.sqrt());
    }

    let noise = estimate_noise(&cube)?;
    let NoiseModel::Full { covariance } = &noise else {
        unreachable!()
    };
    println!("# band noise_std");
    for b in 0..cube.n_bands() {
        println!("{b} {:.6}", covariance[[b, b]].sqrt());
    }

    // Signal power along each eigen-direction next to the noise power in
    // the same direction: the energy profile used to judge the subspace
    // dimension.
    let (vals, vecs) = gram_spectrum(cube.matrix());
    println!("# i eigenvalue noise_power");
    for i in 0..cube.n_bands() {
        let e = vecs.column(i);
        let mut npow = 0.0;
        for a in 0..cube.n_bands() {
            let mut row = 0.0;
            for b in 0..cube.n_bands() {
                row += covariance[[a, b]] * e[b];
            }
            npow += e[a] * row;
        }
        println!("{i} {:.12e} {npow:.12e}", vals[i]);
    }
    Ok(())
}
