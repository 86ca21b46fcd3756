//! The `latdiff` command-line tool.
//!
//! Every command takes `--config`, `--seed`, `--out` and any number of
//! `--set key.path=value` overrides, writes its artifacts below `--out`, and
//! appends one line to `<out>/manifest.ndjson`.

mod layout;
mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::autoencoder::{train_vae, VaeParams, CHECKPOINT_KIND as VAE_KIND};
use crate::checkpoint::{self, Stamped};
use crate::config::RunConfig;
use crate::data::io::write_json;
use crate::data::{load_cohort, normalize, save_cohort, stratified_split_indices, synth_toy_cohort, Cohort};
use crate::diffusion::{fit_generator, GeneratorBundle, BUNDLE_KIND};
use crate::downstream::GruClassifierParams;
use crate::error::{Error, Result};
use crate::evaluation::{
    fidelity_eval, render_reports, subgroup_csv, subgroup_eval, utility_csv, utility_eval, weight_sweep,
    EvalReport, IdentitySource, ReportBody, Splits, SyntheticSource, ToyOracleSource,
};
use crate::numerics::RngStream;

pub use layout::Layout;
pub use manifest::ManifestEntry;

const MODELS_KIND: &str = "real_models";

#[derive(Debug, Parser)]
#[command(name = "latdiff", version, about = "Synthetic ICU time series and subgroup-level model evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Root seed for every random stream the command uses.
    #[arg(long)]
    pub seed: u64,
    /// Output directory for artifacts and the manifest.
    #[arg(long)]
    pub out: PathBuf,
    /// Config override, e.g. `--set generator.vae.epochs=20`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceKind {
    /// The trained generator checkpoint.
    Generator,
    /// Copies of the real records.
    Identity,
    /// Fresh draws from the toy ground-truth process.
    Oracle,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a toy cohort (meta.json + records.ndjson) to --out.
    GenToy(Common),
    /// Stratified 45/45/10 split, normalized with training statistics.
    Split {
        #[command(flatten)]
        common: Common,
        /// Dataset directory; defaults to `paths.dataset` from the config.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Phase 1: train the sequence VAE on the training split.
    TrainVae(Common),
    /// Phase 2: train the conditional latent denoiser.
    TrainDiff(Common),
    /// Generate one synthetic record per training record.
    Generate(Common),
    /// Training- and evaluation-utility gaps.
    EvalUtility {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "generator")]
        source: SourceKind,
    },
    /// Discriminator AUROC between real and synthetic records.
    EvalFidelity {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "generator")]
        source: SourceKind,
    },
    /// Subgroup-level errors of small real test sets versus synthetic sets.
    EvalSubgroups {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "generator")]
        source: SourceKind,
    },
    /// Train and evaluate one generator per alignment-weight configuration.
    SweepWeights {
        #[command(flatten)]
        common: Common,
        /// Maximum configurations trained at once.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Render reports as tables; defaults to every report under --out.
    Report {
        #[command(flatten)]
        common: Common,
        /// Report files to include.
        #[arg(long = "input")]
        inputs: Vec<PathBuf>,
    },
}

#[derive(Serialize)]
struct Provenance {
    command: &'static str,
    config_hash: String,
    seed: u64,
    source: Option<String>,
    n_records: usize,
}

struct Ctx {
    name: &'static str,
    cfg: RunConfig,
    hash: String,
    seed: u64,
    layout: Layout,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    overrides: Vec<String>,
    rng: RngStream,
}

impl Ctx {
    fn new(name: &'static str, common: &Common) -> Result<Self> {
        let cfg = RunConfig::load(common.config.as_deref(), &common.overrides)?;
        let layout = Layout::new(&common.out, &cfg.paths);
        fs::create_dir_all(&common.out).map_err(|e| Error::io(&common.out, e))?;
        let mut inputs = Vec::new();
        if let Some(c) = &common.config {
            inputs.push(c.clone());
        }
        Ok(Ctx {
            name,
            hash: cfg.hash(),
            cfg,
            seed: common.seed,
            layout,
            inputs,
            outputs: Vec::new(),
            overrides: common.overrides.clone(),
            rng: RngStream::new(common.seed).child(name),
        })
    }

    fn stamp<T>(&self, value: T) -> Stamped<T> {
        Stamped {
            config_hash: self.hash.clone(),
            seed: self.seed,
            value,
        }
    }

    fn load_split(&mut self, name: &str) -> Result<Cohort> {
        let dir = self.layout.split(name);
        require(&dir.join("meta.json"), "split")?;
        self.inputs.push(dir.join("meta.json"));
        self.inputs.push(dir.join("records.ndjson"));
        load_cohort(&dir)
    }

    fn load_stamped<T: for<'de> Deserialize<'de>>(&mut self, path: PathBuf, kind: &str, producer: &str) -> Result<T> {
        require(&path, producer)?;
        let s: Stamped<T> = checkpoint::load(&path, kind)?;
        self.inputs.push(path);
        Ok(s.value)
    }

    fn save_stamped<T: Serialize>(&mut self, path: PathBuf, kind: &str, value: T) -> Result<()> {
        ensure_parent(&path)?;
        checkpoint::save(&path, kind, &self.stamp(value))?;
        self.outputs.push(path);
        Ok(())
    }

    fn write(&mut self, path: PathBuf, value: &impl Serialize) -> Result<()> {
        ensure_parent(&path)?;
        write_json(&path, value)?;
        self.outputs.push(path);
        Ok(())
    }

    fn write_text(&mut self, path: PathBuf, text: &str) -> Result<()> {
        ensure_parent(&path)?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        self.outputs.push(path);
        Ok(())
    }

    fn save_cohort(&mut self, cohort: &Cohort, dir: PathBuf, source: Option<String>) -> Result<()> {
        save_cohort(cohort, &dir)?;
        self.outputs.push(dir.join("meta.json"));
        self.outputs.push(dir.join("records.ndjson"));
        let prov = Provenance {
            command: self.name,
            config_hash: self.hash.clone(),
            seed: self.seed,
            source,
            n_records: cohort.len(),
        };
        self.write(dir.join("provenance.json"), &prov)
    }

    fn splits(&mut self) -> Result<(Cohort, Cohort, Cohort)> {
        Ok((self.load_split("train")?, self.load_split("holdout")?, self.load_split("holdout_val")?))
    }

    fn source(&mut self, kind: SourceKind) -> Result<Box<dyn SyntheticSource>> {
        Ok(match kind {
            SourceKind::Generator => Box::new(self.generator()?),
            SourceKind::Identity => Box::new(IdentitySource),
            SourceKind::Oracle => Box::new(ToyOracleSource::new(self.cfg.toy.clone())),
        })
    }

    fn generator(&mut self) -> Result<GeneratorBundle> {
        let path = self.layout.generator();
        self.load_stamped(path, BUNDLE_KIND, "train-diff")
    }

    fn report(&mut self, path: PathBuf, body: ReportBody) -> Result<EvalReport> {
        let report = EvalReport::new(self.hash.clone(), self.seed, self.cfg.protocol.classifier_hash(), body);
        report.validate()?;
        self.write(path, &report)?;
        Ok(report)
    }

    fn finish(self, started: Instant) -> Result<()> {
        let entry = ManifestEntry::new(
            self.name,
            &self.hash,
            self.seed,
            self.overrides,
            &self.inputs,
            &self.outputs,
            started.elapsed().as_secs_f64(),
        )?;
        entry.append(&self.layout.manifest())
    }
}

fn require(path: &Path, producer: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Prerequisite {
            path: path.to_path_buf(),
            hint: format!("run `latdiff {producer}` with the same --out first"),
        })
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p).map_err(|e| Error::io(p, e)),
        _ => Ok(()),
    }
}

fn source_label(kind: SourceKind) -> &'static str {
    match kind {
        SourceKind::Generator => "generator",
        SourceKind::Identity => "identity",
        SourceKind::Oracle => "oracle",
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let started = Instant::now();
    match cli.command {
        Command::GenToy(c) => {
            let mut ctx = Ctx::new("gen-toy", &c)?;
            let mut preset = ctx.cfg.toy.clone();
            preset.task = ctx.cfg.task.label().to_string();
            let cohort = synth_toy_cohort(&preset, ctx.seed)?;
            ctx.save_cohort(&cohort, c.out.clone(), None)?;
            ctx.finish(started)
        }
        Command::Split { common, data } => {
            let mut ctx = Ctx::new("split", &common)?;
            let dir = data.unwrap_or_else(|| ctx.cfg.paths.dataset.clone());
            require(&dir.join("meta.json"), "gen-toy")?;
            let cohort = load_cohort(&dir)?;
            ctx.inputs.push(dir.join("meta.json"));
            ctx.inputs.push(dir.join("records.ndjson"));
            if cohort.meta.task != ctx.cfg.task.label() {
                return Err(Error::Config(format!(
                    "dataset task {:?} does not match the configured task {:?}",
                    cohort.meta.task,
                    ctx.cfg.task.label()
                )));
            }
            let spec = crate::data::SplitSpec {
                seed: ctx.seed,
                ..ctx.cfg.split.clone()
            };
            let idx = stratified_split_indices(&cohort, &spec)?;
            let train = normalize(&cohort.subset(&idx.train), None)?;
            let stats = train.meta.normalization.clone();
            let holdout = normalize(&cohort.subset(&idx.holdout), stats.as_ref())?;
            let val = normalize(&cohort.subset(&idx.holdout_val), stats.as_ref())?;
            for (name, part) in [("train", &train), ("holdout", &holdout), ("holdout_val", &val)] {
                let dir = ctx.layout.split(name);
                ctx.save_cohort(part, dir, None)?;
            }
            let stamped = ctx.stamp(idx);
            ctx.write(ctx.layout.split_indices(), &stamped)?;
            ctx.finish(started)
        }
        Command::TrainVae(c) => {
            let mut ctx = Ctx::new("train-vae", &c)?;
            let train = ctx.load_split("train")?;
            let (vae, log) = train_vae(&train, &ctx.cfg.generator.vae, &ctx.rng)?;
            ctx.save_stamped(ctx.layout.vae(), VAE_KIND, vae)?;
            let stamped = ctx.stamp(log);
            ctx.write(ctx.layout.log("vae"), &stamped)?;
            ctx.finish(started)
        }
        Command::TrainDiff(c) => {
            let mut ctx = Ctx::new("train-diff", &c)?;
            let vae: VaeParams = ctx.load_stamped(ctx.layout.vae(), VAE_KIND, "train-vae")?;
            let train = ctx.load_split("train")?;
            let (mut bundle, log) = fit_generator(&vae, &train, &ctx.cfg.generator.diffusion, &ctx.rng)?;
            bundle.config_hash = ctx.hash.clone();
            ctx.save_stamped(ctx.layout.generator(), BUNDLE_KIND, bundle)?;
            let stamped = ctx.stamp(log);
            ctx.write(ctx.layout.log("diffusion"), &stamped)?;
            ctx.finish(started)
        }
        Command::Generate(c) => {
            let mut ctx = Ctx::new("generate", &c)?;
            let bundle = ctx.generator()?;
            let train = ctx.load_split("train")?;
            let synth = bundle.synthesize(&train, &ctx.rng)?;
            ctx.save_cohort(&synth, ctx.layout.synthetic(), Some(bundle.name()))?;
            ctx.finish(started)
        }
        Command::EvalUtility { common, source } => {
            let mut ctx = Ctx::new("eval-utility", &common)?;
            let (train, holdout, val) = ctx.splits()?;
            let src = ctx.source(source)?;
            let splits = Splits {
                train: &train,
                holdout: &holdout,
                holdout_val: &val,
            };
            let (report, models) = utility_eval(src.as_ref(), splits, &ctx.cfg.protocol, &ctx.rng)?;
            ctx.report(ctx.layout.report("utility", source_label(source)), ReportBody::Utility(report))?;
            ctx.save_stamped(ctx.layout.real_models(), MODELS_KIND, models)?;
            ctx.finish(started)
        }
        Command::EvalFidelity { common, source } => {
            let mut ctx = Ctx::new("eval-fidelity", &common)?;
            let train = ctx.load_split("train")?;
            let src = ctx.source(source)?;
            let synth = src.synthesize(&train, &ctx.rng.child("synthesize"))?;
            let report = fidelity_eval(&train, &synth, &src.name(), &ctx.cfg.protocol, &ctx.rng.child("fidelity"))?;
            ctx.report(ctx.layout.report("fidelity", source_label(source)), ReportBody::Fidelity(report))?;
            ctx.finish(started)
        }
        Command::EvalSubgroups { common, source } => {
            let mut ctx = Ctx::new("eval-subgroups", &common)?;
            let models: Vec<Option<GruClassifierParams>> =
                ctx.load_stamped(ctx.layout.real_models(), MODELS_KIND, "eval-utility")?;
            let models: Vec<GruClassifierParams> = models.into_iter().flatten().collect();
            let train = ctx.load_split("train")?;
            let src = ctx.source(source)?;
            let report = subgroup_eval(&models, &train, src.as_ref(), &ctx.cfg.protocol, &ctx.rng)?;
            let csv = subgroup_csv(&report);
            ctx.report(ctx.layout.report("subgroups", source_label(source)), ReportBody::Subgroups(report))?;
            ctx.write_text(ctx.layout.csv(&format!("subgroups_{}", source_label(source))), &csv)?;
            ctx.finish(started)
        }
        Command::SweepWeights { common, workers } => {
            let mut ctx = Ctx::new("sweep-weights", &common)?;
            let (train, holdout, val) = ctx.splits()?;
            let splits = Splits {
                train: &train,
                holdout: &holdout,
                holdout_val: &val,
            };
            let sweep = || weight_sweep(splits, &ctx.cfg.generator, &ctx.cfg.sweep_grid, &ctx.cfg.protocol, &ctx.rng);
            let entries = match workers {
                Some(0) => return Err(Error::Config("--workers must be positive".into())),
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?
                    .install(sweep)?,
                None => sweep()?,
            };
            ctx.report(ctx.layout.report("sweep", "grid"), ReportBody::Sweep(entries))?;
            ctx.finish(started)
        }
        Command::Report { common, inputs } => {
            let mut ctx = Ctx::new("report", &common)?;
            let files = if inputs.is_empty() { ctx.layout.report_files()? } else { inputs };
            if files.is_empty() {
                return Err(Error::Prerequisite {
                    path: ctx.layout.reports(),
                    hint: "no reports found; run an eval-* command first".into(),
                });
            }
            let mut reports = Vec::new();
            for f in files {
                require(&f, "eval-utility")?;
                let r: EvalReport = crate::data::io::read_json(&f)?;
                r.validate()?;
                let label = f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                ctx.inputs.push(f);
                reports.push((label, r));
            }
            let text = render_reports(&reports)?;
            print!("{text}");
            ctx.write_text(ctx.layout.summary(), &text)?;
            ctx.write_text(ctx.layout.csv("utility_summary"), &utility_csv(&reports))?;
            ctx.finish(started)
        }
    }
}
