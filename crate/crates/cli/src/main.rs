//! `pcaseed`: generate data, build PCA-initialized stacks, train and compare
//! networks, and render features.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use pcaseed::autoencoder::{build_stack, LevelSpec, StackOptions, StackedAutoEncoder};
use pcaseed::data::{load_pixels, save_rgb_png, Dataset, LabeledImage, PatchScaling, PatchStream};
use pcaseed::experiments::{
    render_activation_map, render_features, run_comparison, stability_study, synth_dataset, write_dataset, Comparison,
    ComparisonConfig, InitMethod, ScheduleSpec, StabilityConfig, SynthDatasetSpec, TileShape,
};
use pcaseed::neural::Activation;
use pcaseed::{Execution, Matrix, RngStream};

#[derive(Parser)]
#[command(
    name = "pcaseed",
    version,
    about = "PCA-initialized stacked auto-encoders for pixel classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled dataset and its manifest.
    Synth(SynthArgs),
    /// Build a PCA-initialized stack from training patches.
    Init(InitArgs),
    /// Train one network and write its log.
    Train(TrainArgs),
    /// Run the PCA-vs-Xavier comparison described by a config file.
    Compare(CompareArgs),
    /// Fit stacks on several sample counts per page and compare their features.
    Stability(StabilityArgs),
    /// Draw the first nine features of a stack level.
    Features(FeaturesArgs),
    /// Map the first three code activations over a page image.
    Heatmap(HeatmapArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 13)]
    patch_w: usize,
    #[arg(long, default_value_t = 2)]
    train_pages: usize,
    #[arg(long, default_value_t = 1)]
    test_pages: usize,
    #[arg(long, default_value_t = 240)]
    width: usize,
    #[arg(long, default_value_t = 320)]
    height: usize,
}

#[derive(Args)]
struct InitArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Input width then level widths; defaults to the patch size then 50,30,9.
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<usize>>,
    #[arg(long, default_value_t = 5000)]
    samples: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "tanh")]
    activation: Activation,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    init: InitMethod,
    #[arg(long, default_value = "short")]
    schedule: ScheduleSpec,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0.01)]
    rate: f64,
    #[arg(long, default_value_t = 10_000)]
    test_samples: usize,
    /// Write zero wall-clock columns so reruns are byte-identical.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StabilityArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "500,5000,10000")]
    counts: Vec<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    enhance: bool,
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct FeaturesArgs {
    #[arg(long)]
    stack: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    enhance: bool,
    /// Level to draw; deeper levels are projected back to input space.
    #[arg(long, default_value_t = 0)]
    level: usize,
}

#[derive(Args)]
struct HeatmapArgs {
    #[arg(long)]
    stack: PathBuf,
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn default_levels(dataset: &Dataset, levels: Option<Vec<usize>>) -> Vec<usize> {
    levels.unwrap_or_else(|| {
        let m = &dataset.manifest;
        vec![m.patch_w * m.patch_w * m.channels, 50, 30, 9]
    })
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::load(path).with_context(|| format!("loading {}", path.display()))
}

fn read_stack(path: &Path) -> Result<StackedAutoEncoder> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Channel count whose square patch matches the stack input.
fn stack_channels(stack: &StackedAutoEncoder) -> Result<usize> {
    [1, 3]
        .into_iter()
        .find(|&c| TileShape::infer(stack.input_dim(), c).is_some())
        .with_context(|| format!("stack input dim {} is not a square patch", stack.input_dim()))
}

fn synth(a: SynthArgs) -> Result<()> {
    let ds = synth_dataset(SynthDatasetSpec {
        seed: a.seed,
        classes: a.classes,
        patch_w: a.patch_w,
        train_pages: a.train_pages,
        test_pages: a.test_pages,
        width: a.width,
        height: a.height,
    })?;
    let path = write_dataset(&ds, &a.out)?;
    println!("{}", path.display());
    Ok(())
}

fn init(a: InitArgs) -> Result<()> {
    let ds = load_dataset(&a.manifest)?;
    let levels = default_levels(&ds, a.levels);
    let (input, specs) = LevelSpec::chain(&levels, a.activation);
    let m = &ds.manifest;
    if input != m.patch_w * m.patch_w * m.channels {
        bail!(
            "levels start at {input} but patches have {} values",
            m.patch_w * m.patch_w * m.channels
        );
    }
    let stream = PatchStream::new(&ds.train, m.patch_w, PatchScaling::default(), RngStream::new(a.seed))?;
    let samples: Vec<_> = stream.take(a.samples).collect();
    let cols: Vec<&[f64]> = samples.iter().map(|s| s.patch.as_slice()).collect();
    let data = Matrix::from_columns(&cols)?;
    let stack = build_stack(
        &data,
        &specs,
        &StackOptions::default(),
        &mut RngStream::new(a.seed).split(1),
    )?;
    let json = serde_json::to_string_pretty(&stack)?;
    fs::write(&a.out, json + "\n").with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let ds = load_dataset(&a.manifest)?;
    let mut cfg = ComparisonConfig::new(&a.manifest);
    cfg.runs = 1;
    cfg.schedule = a.schedule;
    cfg.seed = a.seed;
    cfg.levels = default_levels(&ds, a.levels);
    cfg.learning_rate = a.rate;
    cfg.test_samples = a.test_samples;
    cfg.record_timing = !a.no_timing;
    let run = Comparison::new(cfg, &ds)?.run_one(a.init, 0)?;
    fs::write(&a.out, run.log.to_csv()).with_context(|| format!("writing {}", a.out.display()))?;
    if let Some(f) = &run.log.failure {
        eprintln!("pcaseed: run stopped early: {f}");
    }
    Ok(())
}

fn compare(a: CompareArgs) -> Result<()> {
    let cfg = ComparisonConfig::read(&a.config)?;
    let ds = load_dataset(&cfg.manifest)?;
    let report = run_comparison(&cfg, &ds, Execution::default())?;
    report.write(&a.out)?;
    let s = report.summary();
    for (method, median) in &s.median_samples_to_90 {
        match median {
            Some(v) => println!("{method}: median samples to 90% of final accuracy {v}"),
            None => println!("{method}: no run reached 90% of its final accuracy"),
        }
    }
    println!(
        "first-window RBE larger for pca in {}/{} pairings",
        s.rbe_pairs_pca_greater, s.rbe_pairs
    );
    Ok(())
}

fn stability(a: StabilityArgs) -> Result<()> {
    let ds = load_dataset(&a.manifest)?;
    let cfg = StabilityConfig {
        counts: a.counts,
        levels: default_levels(&ds, a.levels),
        seed: a.seed,
        record_timing: !a.no_timing,
        ..StabilityConfig::default()
    };
    let report = stability_study(&ds.train, ds.manifest.patch_w, &cfg)?;
    report.write(&a.out, a.enhance)?;
    Ok(())
}

fn features(a: FeaturesArgs) -> Result<()> {
    let stack = read_stack(&a.stack)?;
    if a.level >= stack.levels().len() {
        bail!(
            "level {} out of range: the stack has {} level(s)",
            a.level,
            stack.levels().len()
        );
    }
    let shape = TileShape::infer(stack.input_dim(), stack_channels(&stack)?).expect("checked by stack_channels");
    let img = render_features(&stack.input_space_features(a.level)?, shape, a.enhance)?;
    save_rgb_png(&img, &a.out)?;
    Ok(())
}

fn heatmap(a: HeatmapArgs) -> Result<()> {
    let stack = read_stack(&a.stack)?;
    let channels = stack_channels(&stack)?;
    let (width, height, pixels) = load_pixels(&a.image, channels)?;
    let page = LabeledImage::new(width, height, channels, pixels, vec![0; width * height])?;
    let map = render_activation_map(&stack, &page, PatchScaling::default(), Execution::default())?;
    save_rgb_png(&map, &a.out)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Init(a) => init(a),
        Command::Train(a) => train(a),
        Command::Compare(a) => compare(a),
        Command::Stability(a) => stability(a),
        Command::Features(a) => features(a),
        Command::Heatmap(a) => heatmap(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pcaseed: {e:#}");
            ExitCode::FAILURE
        }
    }
}
