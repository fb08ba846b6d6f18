//! Command-line front end: dataset generation, preprocessing, the two
//! training stages, evaluation, ablations, and the gradient checker.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use cogplan::align::{log_to_csv, stage1_train, Stage1Config, VideoEncoder};
use cogplan::fusion::{stage2_train, Framework, FusionCfg, Planner, Stage2Config};
use cogplan::gradcheck::run_gradcheck;
use cogplan::metrics::{
    format_ablation, format_table, run_ablation, run_eval, AblationAxis, REPORT_FORMAT_VERSION,
};
use cogplan::signal::{preprocess, split, EegClip, PrepConfig};
use cogplan::synth::{
    gen_pairs, gen_scenes, read_video, write_video, Difficulty, PairGenConfig, Scene, VideoClip,
};
use cogplan::tensor::checkpoint;
use cogplan::{Error, Result};

#[derive(Parser)]
#[command(name = "cogplan", version, about = "Two-stage cognition-informed planning pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate synthetic datasets
    #[command(subcommand)]
    Gen(GenCmd),
    /// Preprocess raw EEG clips in a pair dataset and write a split manifest
    Prep(PrepCmd),
    /// Stage 1: align the video encoder against the frozen EEG encoder
    Align(AlignCmd),
    /// Stage 2: train a trajectory planner on scenes
    Train(TrainCmd),
    /// Evaluate a trained planner and write a metric report
    Eval(EvalCmd),
    /// Train and compare several configurations along one axis
    Ablate(AblateCmd),
    /// Verify analytic gradients against finite differences
    Gradcheck(GradcheckCmd),
    /// Run a scaled-down end-to-end pipeline into one directory
    Pipeline(PipelineCmd),
}

#[derive(Subcommand)]
enum GenCmd {
    /// Video/EEG pairs sharing a hidden latent
    Pairs(GenPairsCmd),
    /// Planning scenes with expert trajectories
    Scenes(GenScenesCmd),
}

#[derive(Args)]
struct GenPairsCmd {
    #[arg(long)]
    out: PathBuf,
    /// JSON file with the full pair-generation config; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d_latent: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct GenScenesCmd {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    /// easy, medium, or hard
    #[arg(long)]
    difficulty: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct PrepCmd {
    /// pair dataset directory produced by `gen pairs`
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct AlignCmd {
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainCmd {
    #[arg(long)]
    scenes: PathBuf,
    /// output directory of `align`
    #[arg(long)]
    encoder: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// baseline, f1, f2, or f3
    #[arg(long)]
    framework: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalCmd {
    #[arg(long)]
    scenes: PathBuf,
    #[arg(long)]
    encoder: PathBuf,
    /// output directory of `train`
    #[arg(long)]
    planner: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AblateCmd {
    #[arg(long)]
    scenes: PathBuf,
    #[arg(long)]
    encoder: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// framework, freeze, n_s, layers, heads, dropout, or data_source
    #[arg(long)]
    axis: String,
    /// comma-separated arm values, e.g. "baseline,f1,f2,f3"
    #[arg(long)]
    values: String,
    #[arg(long, default_value = "f1")]
    framework: String,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GradcheckCmd {
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    threshold: f64,
}

#[derive(Args)]
struct PipelineCmd {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = read_thread_env() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

/// The engine is single threaded; the variable is validated so scripts that
/// set it get an early error instead of silent acceptance of garbage.
fn read_thread_env() -> Result<usize> {
    match std::env::var("COGPLAN_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => match v.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::Usage(format!(
                "COGPLAN_THREADS must be a positive integer, got {v:?}"
            ))),
        },
    }
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Gen(GenCmd::Pairs(c)) => cmd_gen_pairs(c),
        Cmd::Gen(GenCmd::Scenes(c)) => cmd_gen_scenes(c),
        Cmd::Prep(c) => cmd_prep(c),
        Cmd::Align(c) => cmd_align(c),
        Cmd::Train(c) => cmd_train(c),
        Cmd::Eval(c) => cmd_eval(c),
        Cmd::Ablate(c) => cmd_ablate(c),
        Cmd::Gradcheck(c) => cmd_gradcheck(c),
        Cmd::Pipeline(c) => cmd_pipeline(c),
    }
}

/// Sidecar written next to every command's outputs. Timing lives here so
/// the result artifacts themselves stay byte-identical across runs.
#[derive(Serialize)]
struct RunMeta<T: Serialize> {
    command: String,
    version: String,
    format_version: u32,
    seed: u64,
    config: T,
    runtime_s: f64,
}

fn tool_version() -> String {
    let git = std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string());
    match git {
        Some(g) if !g.is_empty() => format!("{} ({g})", env!("CARGO_PKG_VERSION")),
        _ => env!("CARGO_PKG_VERSION").to_string(),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(std::fs::write(path, text)?)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_meta<T: Serialize>(
    dir: &Path,
    command: &str,
    seed: u64,
    config: T,
    started: Instant,
) -> Result<()> {
    let meta = RunMeta {
        command: command.into(),
        version: tool_version(),
        format_version: REPORT_FORMAT_VERSION,
        seed,
        config,
        runtime_s: started.elapsed().as_secs_f64(),
    };
    write_json(&dir.join("meta.json"), &meta)
}

fn override_opt<T: Copy>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

// ---------------------------------------------------------------- gen pairs

#[derive(Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PairOpts {
    n: usize,
    d_latent: usize,
    noise: f64,
    seed: u64,
}

impl Default for PairOpts {
    fn default() -> Self {
        PairOpts { n: 64, d_latent: 16, noise: 0.05, seed: 0 }
    }
}

/// Per-pair sidecar; the hidden latent is kept for oracle experiments.
#[derive(Serialize, Deserialize)]
struct PairMeta {
    id: String,
    latent: Vec<f64>,
    noise: f64,
}

fn cmd_gen_pairs(c: GenPairsCmd) -> Result<()> {
    let started = Instant::now();
    let mut opts: PairOpts = match &c.config {
        Some(p) => read_json(p)?,
        None => PairOpts::default(),
    };
    override_opt(&mut opts.n, c.n);
    override_opt(&mut opts.d_latent, c.d_latent);
    override_opt(&mut opts.noise, c.noise);
    override_opt(&mut opts.seed, c.seed);

    let pairs = gen_pairs(&PairGenConfig::new(opts.n, opts.d_latent, opts.noise, opts.seed))?;
    let root = c.out.join("pairs");
    std::fs::create_dir_all(&root)?;
    for pair in &pairs {
        let dir = root.join(&pair.id);
        std::fs::create_dir_all(&dir)?;
        write_video(&dir.join("video.bin"), &pair.video)?;
        cogplan::signal::write_clip(&dir.join("eeg.bin"), &pair.eeg)?;
        let meta =
            PairMeta { id: pair.id.clone(), latent: pair.latent.clone(), noise: opts.noise };
        write_json(&dir.join("meta.json"), &meta)?;
    }
    println!("wrote {} pairs to {}", pairs.len(), root.display());
    write_meta(&c.out, "gen pairs", opts.seed, opts, started)
}

// --------------------------------------------------------------- gen scenes

#[derive(Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SceneOpts {
    n: usize,
    difficulty: String,
    seed: u64,
}

impl Default for SceneOpts {
    fn default() -> Self {
        SceneOpts { n: 200, difficulty: "medium".into(), seed: 0 }
    }
}

fn cmd_gen_scenes(c: GenScenesCmd) -> Result<()> {
    let started = Instant::now();
    let mut opts: SceneOpts = match &c.config {
        Some(p) => read_json(p)?,
        None => SceneOpts::default(),
    };
    override_opt(&mut opts.n, c.n);
    if let Some(d) = c.difficulty {
        opts.difficulty = d;
    }
    override_opt(&mut opts.seed, c.seed);

    let difficulty: Difficulty = opts.difficulty.parse()?;
    let scenes = gen_scenes(opts.n, opts.seed, difficulty)?;
    let root = c.out.join("scenes");
    std::fs::create_dir_all(&root)?;
    for scene in &scenes {
        write_json(&root.join(format!("{}.json", scene.id)), scene)?;
    }
    println!("wrote {} scenes to {}", scenes.len(), root.display());
    write_meta(&c.out, "gen scenes", opts.seed, opts, started)
}

// --------------------------------------------------------------------- prep

fn pair_dirs(pairs_root: &Path) -> Result<Vec<PathBuf>> {
    let root = pairs_root.join("pairs");
    if !root.is_dir() {
        return Err(Error::Usage(format!("{} has no pairs/ directory", pairs_root.display())));
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(&root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Usage(format!("{} contains no pair directories", root.display())));
    }
    Ok(dirs)
}

fn cmd_prep(c: PrepCmd) -> Result<()> {
    let started = Instant::now();
    let cfg = PrepConfig::default();
    let dirs = pair_dirs(&c.pairs)?;
    let mut ids = Vec::with_capacity(dirs.len());
    for dir in &dirs {
        let raw = cogplan::signal::read_clip(&dir.join("eeg.bin"))?;
        let epochs = preprocess(&raw, &cfg)?;
        cogplan::signal::write_clip(&dir.join("eeg_prep.bin"), &epochs[0])?;
        ids.push(dir.file_name().unwrap().to_string_lossy().into_owned());
    }
    let manifest = split(&ids, [0.7, 0.15, 0.15], c.seed)?;
    write_json(&c.pairs.join("split.json"), &manifest)?;
    println!("preprocessed {} clips, split written to split.json", ids.len());
    write_meta(&c.pairs, "prep", c.seed, cfg, started)
}

// -------------------------------------------------------------------- align

#[derive(Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct AlignOpts {
    d: usize,
    batch: usize,
    epochs: usize,
    lr: f64,
    weight_decay: f64,
    dropout: f64,
    seed: u64,
    val_fraction: f64,
}

impl Default for AlignOpts {
    fn default() -> Self {
        let cfg = Stage1Config::default();
        AlignOpts {
            d: cfg.d,
            batch: cfg.batch,
            epochs: cfg.epochs,
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            dropout: cfg.dropout,
            seed: cfg.seed,
            val_fraction: cfg.val_fraction,
        }
    }
}

/// Reads every pair, preferring the materialized preprocessed clip and
/// falling back to preprocessing the raw recording in memory.
fn read_pair_dataset(pairs_root: &Path) -> Result<(Vec<VideoClip>, Vec<EegClip>)> {
    let cfg = PrepConfig::default();
    let mut videos = Vec::new();
    let mut eeg = Vec::new();
    for dir in pair_dirs(pairs_root)? {
        videos.push(read_video(&dir.join("video.bin"))?);
        let prep_path = dir.join("eeg_prep.bin");
        if prep_path.is_file() {
            eeg.push(cogplan::signal::read_clip(&prep_path)?);
        } else {
            let raw = cogplan::signal::read_clip(&dir.join("eeg.bin"))?;
            eeg.push(preprocess(&raw, &cfg)?.remove(0));
        }
    }
    Ok((videos, eeg))
}

fn cmd_align(c: AlignCmd) -> Result<()> {
    let started = Instant::now();
    let mut opts: AlignOpts = match &c.config {
        Some(p) => read_json(p)?,
        None => AlignOpts::default(),
    };
    override_opt(&mut opts.d, c.d);
    override_opt(&mut opts.epochs, c.epochs);
    override_opt(&mut opts.batch, c.batch);
    override_opt(&mut opts.lr, c.lr);
    override_opt(&mut opts.dropout, c.dropout);
    override_opt(&mut opts.seed, c.seed);

    let (videos, eeg) = read_pair_dataset(&c.pairs)?;
    let video_refs: Vec<&VideoClip> = videos.iter().collect();
    let cfg = Stage1Config {
        d: opts.d,
        batch: opts.batch,
        epochs: opts.epochs,
        lr: opts.lr,
        weight_decay: opts.weight_decay,
        dropout: opts.dropout,
        seed: opts.seed,
        val_fraction: opts.val_fraction,
        stop_at: None,
    };
    let result = stage1_train(&video_refs, &eeg, &cfg)?;

    std::fs::create_dir_all(&c.out)?;
    let mut params = result.encoder.params();
    params.push(result.temperature.param());
    checkpoint::save(&c.out.join("encoder.ckpt"), &params, opts.seed)?;
    std::fs::write(c.out.join("log.csv"), log_to_csv(&result.log))?;
    let last = result.log.last().unwrap();
    println!(
        "stage 1 done: best epoch {}, val top-1 {:.3}, val loss {:.4}",
        result.best_epoch, last.val_top1, last.val_loss
    );
    write_meta(&c.out, "align", opts.seed, opts, started)
}

/// Rebuilds the encoder recorded by `align` from its meta and checkpoint.
fn load_encoder(align_dir: &Path) -> Result<VideoEncoder> {
    #[derive(Deserialize)]
    struct Meta {
        seed: u64,
        config: AlignOpts,
    }
    let meta: Meta = read_json(&align_dir.join("meta.json"))?;
    let encoder = VideoEncoder::new(meta.seed, meta.config.d, 0.0);
    let ckpt = checkpoint::load(&align_dir.join("encoder.ckpt"))?;
    ckpt.load_into(&encoder.params())?;
    Ok(encoder)
}

// -------------------------------------------------------------------- train

#[derive(Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainOpts {
    framework: String,
    lr: f64,
    weight_decay: f64,
    epochs: usize,
    batch: usize,
    seed: u64,
    val_fraction: f64,
    collision_weight: f64,
    /// overrides for the fusion architecture; None keeps the framework default
    n_s: Option<usize>,
    layers: Option<usize>,
    heads: Option<usize>,
    dropout: Option<f64>,
}

impl Default for TrainOpts {
    fn default() -> Self {
        let cfg = Stage2Config::new(Framework::F1, 1, 0);
        TrainOpts {
            framework: "f1".into(),
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            epochs: cfg.epochs,
            batch: cfg.batch,
            seed: cfg.seed,
            val_fraction: cfg.val_fraction,
            collision_weight: cfg.collision_weight,
            n_s: None,
            layers: None,
            heads: None,
            dropout: None,
        }
    }
}

/// Everything needed to reconstruct the trained planner plus the headline
/// training numbers; written as the config field of the train meta.
#[derive(Serialize, Deserialize)]
struct TrainRecord {
    framework: Framework,
    fusion: FusionCfg,
    lr: f64,
    weight_decay: f64,
    epochs: usize,
    batch: usize,
    seed: u64,
    val_fraction: f64,
    collision_weight: f64,
    init_val_l2: f64,
    final_val_l2: f64,
}

fn read_scene_dataset(root: &Path) -> Result<Vec<Scene>> {
    let dir = root.join("scenes");
    if !dir.is_dir() {
        return Err(Error::Usage(format!("{} has no scenes/ directory", root.display())));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Usage(format!("{} contains no scene files", dir.display())));
    }
    files.iter().map(|p| read_json::<Scene>(p)).collect()
}

fn cmd_train(c: TrainCmd) -> Result<()> {
    let started = Instant::now();
    let mut opts: TrainOpts = match &c.config {
        Some(p) => read_json(p)?,
        None => TrainOpts::default(),
    };
    if let Some(f) = c.framework {
        opts.framework = f;
    }
    override_opt(&mut opts.epochs, c.epochs);
    override_opt(&mut opts.batch, c.batch);
    override_opt(&mut opts.lr, c.lr);
    override_opt(&mut opts.seed, c.seed);

    let framework: Framework = opts.framework.parse()?;
    let encoder = load_encoder(&c.encoder)?;
    let scenes = read_scene_dataset(&c.scenes)?;

    let mut cfg = Stage2Config::new(framework, encoder.d, opts.seed);
    cfg.lr = opts.lr;
    cfg.weight_decay = opts.weight_decay;
    cfg.epochs = opts.epochs;
    cfg.batch = opts.batch;
    cfg.val_fraction = opts.val_fraction;
    cfg.collision_weight = opts.collision_weight;
    override_opt(&mut cfg.fusion.n_s, opts.n_s);
    override_opt(&mut cfg.fusion.layers, opts.layers);
    override_opt(&mut cfg.fusion.heads, opts.heads);
    override_opt(&mut cfg.fusion.dropout, opts.dropout);

    let result = stage2_train(&scenes, &encoder, &cfg)?;
    std::fs::create_dir_all(&c.out)?;
    checkpoint::save(&c.out.join("planner.ckpt"), &result.planner.params(), opts.seed)?;
    let mut csv = String::from("epoch,train_loss,val_l2\n");
    for (i, (train, val)) in result.log.iter().enumerate() {
        csv.push_str(&format!("{i},{train},{val}\n"));
    }
    std::fs::write(c.out.join("log.csv"), csv)?;
    println!(
        "stage 2 done ({framework}): val L2 {:.3} m -> {:.3} m over {} epochs",
        result.init_val_l2,
        result.final_val_l2,
        result.log.len() - 1
    );
    let record = TrainRecord {
        framework,
        fusion: result.planner.cfg.clone(),
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        epochs: cfg.epochs,
        batch: cfg.batch,
        seed: cfg.seed,
        val_fraction: cfg.val_fraction,
        collision_weight: cfg.collision_weight,
        init_val_l2: result.init_val_l2,
        final_val_l2: result.final_val_l2,
    };
    write_meta(&c.out, "train", opts.seed, record, started)
}

fn load_planner(train_dir: &Path) -> Result<(Planner, u64)> {
    #[derive(Deserialize)]
    struct Meta {
        config: TrainRecord,
    }
    let meta: Meta = read_json(&train_dir.join("meta.json"))?;
    let planner = Planner::new(meta.config.seed, meta.config.framework, meta.config.fusion);
    let ckpt = checkpoint::load(&train_dir.join("planner.ckpt"))?;
    ckpt.load_into(&planner.params())?;
    Ok((planner, meta.config.seed))
}

// --------------------------------------------------------------------- eval

fn cmd_eval(c: EvalCmd) -> Result<()> {
    let started = Instant::now();
    let encoder = load_encoder(&c.encoder)?;
    let (planner, seed) = load_planner(&c.planner)?;
    let scenes = read_scene_dataset(&c.scenes)?;
    let report = run_eval(&planner, &encoder, &scenes, seed)?;
    std::fs::create_dir_all(&c.out)?;
    write_json(&c.out.join("report.json"), &report)?;
    let table = format_table(&[&report]);
    std::fs::write(c.out.join("report.txt"), &table)?;
    print!("{table}");
    write_meta(&c.out, "eval", seed, report.config.clone(), started)
}

// ------------------------------------------------------------------- ablate

fn cmd_ablate(c: AblateCmd) -> Result<()> {
    let started = Instant::now();
    let axis: AblationAxis = c.axis.parse()?;
    let values: Vec<String> =
        c.values.split(',').map(str::trim).filter(|s| !s.is_empty()).map(Into::into).collect();
    let framework: Framework = c.framework.parse()?;
    let encoder = load_encoder(&c.encoder)?;
    let scenes = read_scene_dataset(&c.scenes)?;
    let mut base = Stage2Config::new(framework, encoder.d, c.seed);
    base.epochs = c.epochs;
    let grid = run_ablation(axis, &values, &scenes, &encoder, &base)?;
    std::fs::create_dir_all(&c.out)?;
    write_json(&c.out.join("ablation.json"), &grid)?;
    let table = format_ablation(&grid);
    std::fs::write(c.out.join("ablation.txt"), &table)?;
    print!("{table}");
    write_meta(&c.out, "ablate", c.seed, (c.axis, values), started)
}

// ---------------------------------------------------------------- gradcheck

fn cmd_gradcheck(c: GradcheckCmd) -> Result<()> {
    if c.seeds == 0 {
        return Err(Error::Usage("--seeds must be at least 1".into()));
    }
    let mut worst: Vec<(String, f64)> = Vec::new();
    for s in 0..c.seeds {
        for r in run_gradcheck(c.seed.wrapping_add(s))? {
            match worst.iter_mut().find(|(name, _)| *name == r.family) {
                Some((_, w)) => *w = w.max(r.max_rel_err),
                None => worst.push((r.family, r.max_rel_err)),
            }
        }
    }
    let mut failed = false;
    for (family, err) in &worst {
        let ok = *err < c.threshold;
        failed |= !ok;
        println!("{:<14} max_rel_err {err:.3e}  {}", family, if ok { "ok" } else { "FAIL" });
    }
    if failed {
        return Err(Error::Training(format!(
            "gradient check exceeded threshold {:e} over {} seeds",
            c.threshold, c.seeds
        )));
    }
    println!("all families within {:e} over {} seeds", c.threshold, c.seeds);
    Ok(())
}

// ----------------------------------------------------------------- pipeline

fn cmd_pipeline(c: PipelineCmd) -> Result<()> {
    let started = Instant::now();
    let seed = c.seed;
    std::fs::create_dir_all(&c.out)?;

    cmd_gen_pairs(GenPairsCmd {
        out: c.out.clone(),
        config: None,
        n: Some(48),
        d_latent: Some(16),
        noise: Some(0.05),
        seed: Some(seed),
    })?;
    cmd_prep(PrepCmd { pairs: c.out.clone(), seed })?;
    cmd_align(AlignCmd {
        pairs: c.out.clone(),
        out: c.out.join("align"),
        config: None,
        d: Some(32),
        epochs: Some(6),
        batch: Some(8),
        lr: Some(1e-3),
        dropout: Some(0.0),
        seed: Some(seed),
    })?;
    cmd_gen_scenes(GenScenesCmd {
        out: c.out.clone(),
        config: None,
        n: Some(40),
        difficulty: Some("medium".into()),
        seed: Some(seed),
    })?;
    cmd_train(TrainCmd {
        scenes: c.out.clone(),
        encoder: c.out.join("align"),
        out: c.out.join("train"),
        config: None,
        framework: Some("f1".into()),
        epochs: Some(5),
        batch: Some(8),
        lr: None,
        seed: Some(seed),
    })?;
    cmd_eval(EvalCmd {
        scenes: c.out.clone(),
        encoder: c.out.join("align"),
        planner: c.out.join("train"),
        out: c.out.join("eval"),
    })?;
    println!("pipeline finished in {:.1} s", started.elapsed().as_secs_f64());
    write_meta(&c.out, "pipeline", seed, (), started)
}
