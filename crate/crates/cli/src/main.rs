use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cove_core::attention::{apply_frame_attention, AttentionMode, FrameAttentionConfig};
use cove_core::bench::{measured_ops, OpCountReport};
use cove_core::fixture::{add_gaussian_noise, synthesize_moving_patch, FixtureParams};
use cove_core::format;
use cove_core::{trace_trajectories, CoveError, Shape, TokenCoord, WindowSize};

mod viz;

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_INVARIANT: u8 = 4;

#[derive(Parser)]
#[command(
    name = "cove",
    version,
    about = "Sliding-window token correspondence and correspondence-guided attention"
)]
struct Cli {
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a moving-patch feature volume with known ground truth.
    GenFixture(GenFixtureArgs),
    /// Compute a correspondence map from a feature volume.
    Corr(CorrArgs),
    /// Apply correspondence-guided attention to a latent volume.
    Attend(AttendArgs),
    /// Report analytic (and optionally measured) operation counts.
    Bench(BenchArgs),
    /// Render an anchor's trajectory as one PPM image per frame.
    Viz(VizArgs),
    /// Check that a .covf or .covc file re-serializes to identical bytes.
    RoundtripCheck(RoundtripArgs),
}

#[derive(Args)]
struct GenFixtureArgs {
    #[arg(long)]
    frames: usize,
    #[arg(long)]
    height: usize,
    #[arg(long)]
    width: usize,
    #[arg(long)]
    dim: usize,
    #[arg(long, default_value_t = 2)]
    patch_height: usize,
    #[arg(long, default_value_t = 2)]
    patch_width: usize,
    #[arg(long)]
    patch_row: usize,
    #[arg(long)]
    patch_col: usize,
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    velocity_row: isize,
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    velocity_col: isize,
    #[arg(long)]
    seed: u64,
    /// Add i.i.d. Gaussian noise of this standard deviation (latent use).
    #[arg(long)]
    noise: Option<f32>,
    #[arg(long)]
    output: PathBuf,
    /// Also write the patch tracks as JSON.
    #[arg(long)]
    ground_truth: Option<PathBuf>,
}

#[derive(Args)]
struct CorrArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 9)]
    window: usize,
    /// Search the whole adjacent frame instead of a window.
    #[arg(long)]
    full: bool,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct AttendArgs {
    #[arg(long)]
    latent: PathBuf,
    #[arg(long)]
    map: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    ratio: f32,
    /// Attention scale dimension (default: latent channels).
    #[arg(long)]
    dk: Option<usize>,
    /// Add log group size to each logit.
    #[arg(long)]
    proportional: bool,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 20)]
    n: usize,
    #[arg(long, default_value_t = 64)]
    h: usize,
    #[arg(long, default_value_t = 64)]
    w: usize,
    #[arg(long, default_value_t = cove_core::bench::REFERENCE_CHANNELS)]
    d: usize,
    #[arg(long, default_value_t = 9)]
    window: usize,
    #[arg(long)]
    full: bool,
    /// Run an instrumented trace over a random volume.
    #[arg(long, requires = "seed")]
    measure: bool,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct VizArgs {
    #[arg(long)]
    map: PathBuf,
    /// Anchor as frame,row,col.
    #[arg(long, value_parser = parse_coord)]
    anchor: TokenCoord,
    #[arg(long)]
    out: PathBuf,
    /// Feature volume for the grayscale background.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    scale: usize,
}

#[derive(Args)]
struct RoundtripArgs {
    #[arg(long)]
    input: PathBuf,
}

fn parse_coord(s: &str) -> Result<TokenCoord, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected frame,row,col, got {s:?}"));
    }
    let v: Vec<usize> = parts
        .iter()
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    Ok(TokenCoord::new(v[0], v[1], v[2]))
}

enum Failure {
    Usage(String),
    Data(String),
    Invariant(String),
}

impl From<CoveError> for Failure {
    fn from(e: CoveError) -> Self {
        match e {
            CoveError::InvalidParameter(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

fn window_arg(window: usize, full: bool) -> Result<WindowSize, Failure> {
    if full {
        return Ok(WindowSize::Full);
    }
    if window == 0 {
        return Err(Failure::Usage("--window must be at least 1".into()));
    }
    Ok(WindowSize::Length(window))
}

fn gen_fixture(a: GenFixtureArgs) -> Result<(), Failure> {
    let fixture = synthesize_moving_patch(FixtureParams {
        frames: a.frames,
        height: a.height,
        width: a.width,
        dim: a.dim,
        patch_height: a.patch_height,
        patch_width: a.patch_width,
        patch_row: a.patch_row,
        patch_col: a.patch_col,
        velocity: (a.velocity_row, a.velocity_col),
        seed: a.seed,
    })?;
    let shape = fixture.volume.shape();
    let data = match a.noise {
        Some(sigma) if !(sigma >= 0.0 && sigma.is_finite()) => {
            return Err(Failure::Usage(format!(
                "--noise must be finite and >= 0, got {sigma}"
            )))
        }
        Some(sigma) => add_gaussian_noise(fixture.volume.data(), sigma, a.seed.wrapping_add(1)),
        None => fixture.volume.data().to_vec(),
    };
    format::save_volume(&a.output, shape, &data)?;
    if let Some(path) = a.ground_truth {
        let json = serde_json::to_string_pretty(&fixture.ground_truth)
            .map_err(|e| Failure::Invariant(e.to_string()))?;
        fs::write(path, json)?;
    }
    println!(
        "wrote {}: {}x{}x{}x{}, {} patch tokens",
        a.output.display(),
        shape.frames,
        shape.height,
        shape.width,
        shape.dim,
        fixture.ground_truth.len()
    );
    Ok(())
}

fn corr(a: CorrArgs) -> Result<(), Failure> {
    let window = window_arg(a.window, a.full)?;
    if a.k == 0 {
        return Err(Failure::Usage("--k must be at least 1".into()));
    }
    let raw = format::load_feature_volume(&a.input)?;
    let normalized = raw.normalize();
    if !normalized.zero_tokens.is_empty() {
        eprintln!(
            "warning: {} zero tokens left as zeros (first at {:?})",
            normalized.zero_tokens.len(),
            normalized.zero_tokens[0]
        );
    }
    let map = trace_trajectories(&normalized.volume, a.k, window)?;
    format::save_map(&a.output, &map)?;
    println!(
        "wrote {}: N={} H={} W={} K={} window={}",
        a.output.display(),
        map.frames(),
        map.height(),
        map.width(),
        map.k(),
        map.window()
    );
    Ok(())
}

fn attend(a: AttendArgs) -> Result<(), Failure> {
    if !(0.0..1.0).contains(&a.ratio) {
        return Err(Failure::Usage(format!(
            "--ratio must be in [0, 1), got {}",
            a.ratio
        )));
    }
    let latent = format::load_latent_volume(&a.latent)?;
    let map = format::load_map(&a.map)?;
    let config = FrameAttentionConfig {
        merge_ratio: a.ratio,
        d_k: a.dk,
        mode: if a.proportional {
            AttentionMode::Proportional
        } else {
            AttentionMode::Plain
        },
    };
    let out = apply_frame_attention(&latent, &map, config)?;
    format::save_volume(&a.output, out.shape(), out.data())?;
    println!("wrote {}", a.output.display());
    Ok(())
}

fn fmt_count(v: Option<u64>) -> String {
    v.map(|c| format!("{c} ({:.3}e9)", c as f64 / 1e9))
        .unwrap_or_else(|| "-".into())
}

fn bench(a: BenchArgs) -> Result<(), Failure> {
    let shape = Shape::new(a.n, a.h, a.w, a.d)?;
    let window = window_arg(a.window, a.full)?;
    let report = match (a.measure, a.seed) {
        (true, Some(seed)) => measured_ops(shape, window, a.k, seed)?,
        (true, None) => return Err(Failure::Usage("--measure needs --seed".into())),
        (false, _) => OpCountReport::analytic(shape, window)?,
    };
    if let Some(m) = &report.measured {
        if let Some(f) = report.analytic_forward {
            if m.forward != f {
                return Err(Failure::Invariant(format!(
                    "measured forward count {} differs from analytic {f}",
                    m.forward
                )));
            }
        }
    }
    if a.json {
        let json = serde_json::to_string(&report).map_err(|e| Failure::Invariant(e.to_string()))?;
        println!("{json}");
        return Ok(());
    }
    println!(
        "{:<22} {:<8} {:<28} {:<28} {:<28} {:<28} peak set",
        "config",
        "window",
        "analytic fwd",
        "analytic fwd+bwd",
        "measured fwd",
        "measured fwd+bwd"
    );
    println!(
        "{:<22} {:<8} {:<28} {:<28} {:<28} {:<28} {}",
        format!("{}x{}x{}x{}", a.n, a.h, a.w, a.d),
        report.window.to_string(),
        fmt_count(report.analytic_forward),
        fmt_count(report.analytic_total),
        fmt_count(report.measured.map(|m| m.forward)),
        fmt_count(report.measured.map(|m| m.total)),
        report
            .measured
            .map(|m| m.peak_candidates.to_string())
            .unwrap_or_else(|| "-".into()),
    );
    println!(
        "full adjacent fwd: {}   all pairs: {}",
        fmt_count(Some(report.full_adjacent_forward)),
        fmt_count(Some(report.all_pairs))
    );
    Ok(())
}

fn run_viz(a: VizArgs) -> Result<(), Failure> {
    let map = format::load_map(&a.map)?;
    let features = a
        .features
        .as_ref()
        .map(format::load_feature_volume)
        .transpose()?;
    let spec = viz::VizSpec {
        anchor: a.anchor,
        scale: a.scale,
    };
    let images = viz::render(&map, &spec, features.as_ref()).map_err(Failure::Usage)?;
    fs::create_dir_all(&a.out)?;
    for (j, img) in images.iter().enumerate() {
        fs::write(a.out.join(format!("frame_{j:03}.ppm")), img.to_ppm())?;
    }
    println!("wrote {} frames to {}", images.len(), a.out.display());
    Ok(())
}

fn roundtrip(a: RoundtripArgs) -> Result<(), Failure> {
    let original = fs::read(&a.input)?;
    let rewritten = match original.get(..4) {
        Some(m) if m == format::VOLUME_MAGIC => {
            let (shape, data) = format::read_volume(&mut original.as_slice())?;
            format::volume_bytes(shape, &data)?
        }
        Some(m) if m == format::MAP_MAGIC => {
            let map = format::read_map(&mut original.as_slice())?;
            format::map_bytes(&map)?
        }
        _ => return Err(Failure::Data("input is neither COVF nor COVC".into())),
    };
    if rewritten != original {
        return Err(Failure::Invariant(format!(
            "re-serialized {} differs from the input",
            a.input.display()
        )));
    }
    println!("ok: {} bytes round-trip exactly", original.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INVARIANT);
        }
    }
    let result = match cli.command {
        Command::GenFixture(a) => gen_fixture(a),
        Command::Corr(a) => corr(a),
        Command::Attend(a) => attend(a),
        Command::Bench(a) => bench(a),
        Command::Viz(a) => run_viz(a),
        Command::RoundtripCheck(a) => roundtrip(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_DATA)
        }
        Err(Failure::Invariant(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_INVARIANT)
        }
    }
}
