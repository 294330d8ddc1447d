//! `geomae`: generate datasets, train and evaluate geometric autoencoders,
//! compute latent geodesics, and plot the results.
//!
//! Exit codes: 0 success, 1 I/O or format error, 2 invalid arguments or
//! preconditions, 3 numerical failure (divergence, non-convergence, degenerate
//! metric).

mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use geomae::autodiff::MlpParams;
use geomae::data::{Dataset, GeneratorSpec};
use geomae::geometry::{geodesic, write_geodesic_csv, AmbientMetric, CircleMap, GeodesicOptions};
use geomae::table::Table;
use geomae::trainer::{
    clean_reference, evaluate, history_table, train_with, Checkpoint, Objective, TrainConfig,
    TrainOptions,
};
use geomae::{Error, RealArray, Result};

use plot::{PlotKind, PlotSpec, Style};

#[derive(Parser)]
#[command(name = "geomae", version, about = "Geometric autoencoder toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset CSV with its provenance header.
    Generate(GenerateArgs),
    /// Train an autoencoder; writes checkpoints and the loss history.
    Train(TrainArgs),
    /// Evaluate a checkpoint: metrics CSV plus per-point geometry CSV.
    Eval(EvalArgs),
    /// Energy-minimizing latent curve between two codes.
    Geodesic(GeodesicArgs),
    /// Render an SVG plot from CSV files.
    Plot(PlotArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// sine, square-hole or circle.
    generator: String,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Gaussian noise standard deviation (all generators).
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// sine: amplitude.
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    /// sine: angular frequency.
    #[arg(long, default_value_t = 2.0)]
    frequency: f64,
    /// square-hole: side of the outer square.
    #[arg(long, default_value_t = 2.0)]
    outer_side: f64,
    /// square-hole: side of the hole.
    #[arg(long, default_value_t = 0.8)]
    hole_side: f64,
    /// circle: radius.
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    /// Keep every stride-th sample (sparse variants).
    #[arg(long, default_value_t = 1)]
    stride: usize,
}

#[derive(Args)]
struct TrainArgs {
    /// TOML training configuration.
    #[arg(long)]
    config: PathBuf,
    /// Dataset CSV.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for checkpoint, history and the effective config.
    #[arg(long)]
    out: PathBuf,
    /// Continue from the checkpoint already in the output directory.
    #[arg(long)]
    resume: bool,
    /// Suppress progress lines.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Training dataset CSV.
    #[arg(long)]
    data: PathBuf,
    /// Held-out dataset CSV.
    #[arg(long)]
    heldout: Option<PathBuf>,
    /// Noise-free reference CSV for the manifold-fit error. Defaults to the
    /// noise-free regeneration of the held-out (else training) set when its
    /// provenance allows.
    #[arg(long)]
    clean: Option<PathBuf>,
    /// Metrics CSV.
    #[arg(long)]
    out: PathBuf,
    /// Per-point geometry CSV (default: `<out stem>_geometry.csv`).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Also write the encoded training set (`z*` and any `gt_z*` columns).
    #[arg(long)]
    encoded: Option<PathBuf>,
    /// Also write the decoded manifold over a grid spanning the encoded range.
    #[arg(long)]
    manifold: Option<PathBuf>,
    /// Grid points per latent axis for `--manifold`.
    #[arg(long, default_value_t = 200)]
    grid: usize,
}

#[derive(Args)]
struct GeodesicArgs {
    /// Checkpoint directory; the decoder defines the geometry.
    #[arg(
        long,
        required_unless_present = "circle_radius",
        conflicts_with = "circle_radius"
    )]
    checkpoint: Option<PathBuf>,
    /// Use the analytic circle decoder of this radius instead of a checkpoint.
    #[arg(long)]
    circle_radius: Option<f64>,
    /// Start code, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    start: String,
    /// End code, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    end: String,
    /// Number of segments.
    #[arg(long, default_value_t = 32)]
    segments: usize,
    #[arg(long, default_value_t = 2000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    /// Plot kind (ignored with --spec).
    #[arg(value_enum, required_unless_present = "spec")]
    kind: Option<PlotKind>,
    /// TOML plot spec with kind, inputs, output and style.
    #[arg(long, conflicts_with_all = ["kind", "input", "out"])]
    spec: Option<PathBuf>,
    /// Input CSV; repeat for several series.
    #[arg(long, required_unless_present = "spec")]
    input: Vec<PathBuf>,
    #[arg(long, required_unless_present = "spec")]
    out: Option<PathBuf>,
    #[arg(long)]
    point_size: Option<f64>,
    /// Series color; repeat to set several.
    #[arg(long)]
    color: Vec<String>,
    #[arg(long)]
    title: Option<String>,
    /// Color the first series by this column.
    #[arg(long)]
    color_by: Option<String>,
    #[arg(long)]
    width: Option<u32>,
    #[arg(long)]
    height: Option<u32>,
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Io(_) | Error::Csv(_) | Error::Format(_) => 1,
        Error::InvalidArgument(_) | Error::Config(_) | Error::Dimension { .. } => 2,
        Error::DegenerateMetric { .. }
        | Error::Diverged { .. }
        | Error::NotConverged { .. }
        | Error::UnsupportedDepth { .. } => 3,
        Error::Context { .. } => unreachable!("root strips context"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Geodesic(a) => cmd_geodesic(a),
        Command::Plot(a) => cmd_plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let spec = match a.generator.as_str() {
        "sine" => GeneratorSpec::Sine {
            n: a.n,
            amplitude: a.amplitude,
            frequency: a.frequency,
            noise_std: a.noise,
        },
        "square-hole" => GeneratorSpec::SquareWithHole {
            n: a.n,
            outer_side: a.outer_side,
            hole_side: a.hole_side,
            embed_noise: a.noise,
        },
        "circle" => GeneratorSpec::Circle {
            n: a.n,
            radius: a.radius,
            noise_std: a.noise,
        },
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown generator '{other}' (expected sine, square-hole or circle)"
            )))
        }
    };
    let mut ds = spec.generate(a.seed)?;
    if a.stride != 1 {
        ds = ds.subsample(a.stride)?;
    }
    ds.save(&a.out)
}

/// Top-level config sections the file left out, so their defaults can be
/// reported.
fn missing_sections(text: &str) -> Result<Vec<&'static str>> {
    let raw: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    Ok(["model", "nrae", "estimator", "metric", "optim"]
        .into_iter()
        .filter(|s| !raw.contains_key(*s))
        .collect())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.config)
        .map_err(|e| Error::from(e).context(format!("reading {}", a.config.display())))?;
    let config = TrainConfig::from_toml(&text)
        .map_err(|e| e.context(format!("config {}", a.config.display())))?;
    let dataset = Dataset::load(&a.data)?;
    config.validate_for(dataset.dim(), dataset.len())?;
    let log = |msg: String| {
        if !a.quiet {
            eprintln!("{msg}");
        }
    };
    for section in missing_sections(&text)? {
        let relevant = match section {
            "nrae" => config.objective == Objective::Nrae,
            "estimator" => matches!(config.objective, Objective::Mecae | Objective::Irae),
            _ => true,
        };
        if relevant {
            let shown = match section {
                "model" => toml::to_string(&config.model),
                "nrae" => toml::to_string(&config.nrae),
                "estimator" => toml::to_string(&config.estimator),
                "metric" => toml::to_string(&config.metric),
                _ => toml::to_string(&config.optim),
            }
            .unwrap_or_default();
            log(format!(
                "[{section}] not set, using defaults: {}",
                shown.trim().replace('\n', ", ")
            ));
        }
    }
    let resume = if a.resume {
        Some(Checkpoint::load(&a.out)?)
    } else {
        None
    };
    std::fs::create_dir_all(&a.out)
        .map_err(|e| Error::from(e).context(format!("creating {}", a.out.display())))?;
    let write = |path: PathBuf, body: &str| {
        std::fs::write(&path, body)
            .map_err(|e| Error::from(e).context(format!("writing {}", path.display())))
    };
    write(a.out.join("config.toml"), &config.to_toml())?;
    let opts = TrainOptions {
        checkpoint_dir: Some(a.out.clone()),
        resume,
    };
    let every = (config.optim.epochs / 20).max(1);
    let out = train_with(&config, &dataset, &opts, |r| {
        if r.epoch % every == 0 || r.epoch == config.optim.epochs {
            log(format!(
                "epoch {}/{} loss {:.6e}",
                r.epoch, config.optim.epochs, r.loss
            ));
        }
    })?;
    history_table(&out.history)
        .footer("objective", config.objective)
        .footer(
            "diverged",
            out.diverged
                .map(|e| e.to_string())
                .unwrap_or_else(|| "no".into()),
        )
        .save(&a.out.join("history.csv"))?;
    match out.diverged {
        Some(epoch) => Err(Error::Diverged { epoch }.context(format!(
            "last finite state (epoch {}) saved in {}",
            epoch - 1,
            a.out.display()
        ))),
        None => Ok(()),
    }
}

fn metric_for(checkpoint: &Path) -> Result<AmbientMetric> {
    let path = checkpoint.join("config.toml");
    if path.exists() {
        TrainConfig::load(&path)?.metric.build()
    } else {
        Ok(AmbientMetric::Identity)
    }
}

fn latent_grid(z: &RealArray, per_axis: usize) -> Result<RealArray> {
    let m = z.rows();
    if per_axis < 2 || m > 2 {
        return Err(Error::InvalidArgument(format!(
            "decoded manifold grids need --grid >= 2 and latent dimension <= 2 (got grid {per_axis}, dimension {m})"
        )));
    }
    let range = |i: usize| {
        let row: Vec<f64> = (0..z.cols()).map(|j| z[(i, j)]).collect();
        let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (0..per_axis).map(move |k| lo + (hi - lo) * k as f64 / (per_axis - 1) as f64)
    };
    let cols: Vec<Vec<f64>> = if m == 1 {
        range(0).map(|a| vec![a]).collect()
    } else {
        range(1)
            .flat_map(|b| range(0).map(move |a| vec![a, b]))
            .collect()
    };
    Ok(RealArray::from_rows(&cols).transpose())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    // read everything before writing anything
    let model = Checkpoint::load_model(&a.checkpoint)?;
    let h = metric_for(&a.checkpoint)?;
    let data = Dataset::load(&a.data)?;
    let heldout = a.heldout.as_deref().map(Dataset::load).transpose()?;
    let clean = match &a.clean {
        Some(p) => Some(Dataset::load(p)?),
        None => clean_reference(heldout.as_ref().unwrap_or(&data)),
    };
    let (metrics, report) = evaluate(&model, &data, heldout.as_ref(), clean.as_ref(), &h)?;
    let z = model.encode(data.points());
    let encoded = a.encoded.as_ref().map(|_| {
        let mut header: Vec<String> = (1..=z.rows()).map(|i| format!("z{i}")).collect();
        if let Some(l) = data.latent() {
            header.extend((1..=l.rows()).map(|i| format!("gt_z{i}")));
        }
        let mut t = Table::new(header);
        for j in 0..z.cols() {
            let mut row = z.col(j);
            if let Some(l) = data.latent() {
                row.extend(l.col(j));
            }
            t.push_row(row);
        }
        t
    });
    let manifold = match &a.manifold {
        Some(_) => {
            let grid = latent_grid(&z, a.grid)?;
            let x = model.decode(&grid);
            let mut header: Vec<String> = (1..=grid.rows()).map(|i| format!("z{i}")).collect();
            header.extend((1..=x.rows()).map(|i| format!("x{i}")));
            let mut t = Table::new(header);
            for j in 0..grid.cols() {
                let mut row = grid.col(j);
                row.extend(x.col(j));
                t.push_row(row);
            }
            Some(t)
        }
        None => None,
    };
    let report_path = a.report.clone().unwrap_or_else(|| {
        let stem = a
            .out
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "metrics".into());
        a.out.with_file_name(format!("{stem}_geometry.csv"))
    });
    metrics.to_table().save(&a.out)?;
    report.to_table().save(&report_path)?;
    if let (Some(p), Some(t)) = (&a.encoded, encoded) {
        t.save(p)?;
    }
    if let (Some(p), Some(t)) = (&a.manifold, manifold) {
        t.save(p)?;
    }
    Ok(())
}

fn parse_code(s: &str, what: &str) -> Result<RealArray> {
    let vals = s
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<f64>, _>>()
        .map_err(|_| {
            Error::InvalidArgument(format!(
                "{what} '{s}' is not a comma-separated list of numbers"
            ))
        })?;
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "{what} '{s}' has non-finite entries"
        )));
    }
    Ok(RealArray::column(&vals))
}

fn cmd_geodesic(a: GeodesicArgs) -> Result<()> {
    let start = parse_code(&a.start, "start")?;
    let end = parse_code(&a.end, "end")?;
    let opts = GeodesicOptions {
        segments: a.segments,
        max_iters: a.max_iters,
        tolerance: a.tolerance,
        ..GeodesicOptions::default()
    };
    let mut buf = Vec::new();
    let geo = if let Some(r) = a.circle_radius {
        let f = CircleMap::new(r);
        let g = geodesic(&f, &start, &end, &AmbientMetric::Identity, &opts)?;
        write_geodesic_csv(&f, &g, &mut buf)?;
        g
    } else {
        let dir = a.checkpoint.as_ref().expect("clap requires a checkpoint");
        let dec: MlpParams = Checkpoint::load_model(dir)?.decoder;
        let h = metric_for(dir)?;
        let g = geodesic(&dec, &start, &end, &h, &opts)?;
        write_geodesic_csv(&dec, &g, &mut buf)?;
        g
    };
    std::fs::write(&a.out, buf)
        .map_err(|e| Error::from(e).context(format!("writing {}", a.out.display())))?;
    if !geo.converged {
        return Err(Error::NotConverged {
            iterations: geo.iterations,
            grad_norm: geo.grad_norm,
        }
        .context(format!(
            "geodesic (curve written to {} with converged=false)",
            a.out.display()
        )));
    }
    Ok(())
}

fn cmd_plot(a: PlotArgs) -> Result<()> {
    let spec = match &a.spec {
        Some(p) => PlotSpec::load(p)?,
        None => PlotSpec {
            kind: a.kind.expect("clap requires a kind"),
            inputs: a.input.clone(),
            output: a.out.clone().expect("clap requires an output"),
            style: Style::default(),
        },
    };
    let mut spec = spec;
    if let Some(v) = a.point_size {
        spec.style.point_size = v;
    }
    if !a.color.is_empty() {
        spec.style.colors = a.color.clone();
    }
    if a.title.is_some() {
        spec.style.title = a.title.clone();
    }
    if a.color_by.is_some() {
        spec.style.color_by = a.color_by.clone();
    }
    if let Some(w) = a.width {
        spec.style.width = w;
    }
    if let Some(h) = a.height {
        spec.style.height = h;
    }
    if spec.style.colors.is_empty() {
        return Err(Error::InvalidArgument(
            "plot style needs at least one color".into(),
        ));
    }
    for p in &spec.inputs {
        if !p.exists() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("input {} does not exist", p.display()),
            )));
        }
    }
    plot::run(&spec)
}
