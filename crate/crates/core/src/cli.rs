//! `magvit-toy` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigFile, PredictorKind, RunConfig};
use crate::decode::{cost_report, DecodeCost};
use crate::error::{Error, Result};
use crate::formats::{self, load};
use crate::pipeline::{self, PredictorSource};
use crate::synth::make_data;
use crate::tasks::TaskId;
use crate::tokenizer::{decode, encode, psnr, TokenLattice};

#[derive(Debug, Parser)]
#[command(name = "magvit-toy", version, about = "Masked token video generation toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset.
    MakeData,
    /// Fit the k-means codebook on the training clips.
    FitVq,
    /// Train the predictor; writes a checkpoint and a loss curve.
    Train,
    /// Decode the configured task on the evaluation clips.
    Generate,
    /// Per-task accuracy, PSNR and condition fraction.
    Eval,
    /// Decoding cost comparison.
    Bench,
}

#[derive(Debug, Args, Default)]
pub struct Overrides {
    /// Configuration file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base random seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Task id (FP, FI, OPC, ...); overrides task.task
    #[arg(long, global = true)]
    pub task: Option<TaskId>,
    /// Decoding steps
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    /// Initial Gumbel noise temperature
    #[arg(long, global = true)]
    pub temperature: Option<f64>,
    /// Mask schedule: cosine, uniform or exponential
    #[arg(long, global = true)]
    pub schedule: Option<String>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut file = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        if let Some(s) = self.seed {
            file.set("", "seed", s.to_string());
        }
        if let Some(t) = self.task {
            file.set("task", "task", t.to_string());
        }
        if let Some(k) = self.steps {
            file.set("decode", "steps", k.to_string());
        }
        if let Some(t) = self.temperature {
            file.set("decode", "temperature", t.to_string());
        }
        if let Some(s) = &self.schedule {
            file.set("decode", "schedule", s.clone());
        }
        if let Some(o) = &self.out {
            file.set("", "out", o.display().to_string());
        }
        RunConfig::from_file(&file)
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                stdout.write_all(text.as_bytes())
            } else {
                stderr.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match run(&cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "magvit-toy: {e}");
            e.exit_code()
        }
    }
}

fn say(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let cfg = cli.overrides.resolve()?;
    match cli.command {
        Command::MakeData => make_data_cmd(&cfg, out),
        Command::FitVq => fit_vq_cmd(&cfg, out),
        Command::Train => train_cmd(&cfg, out),
        Command::Generate => generate_cmd(&cfg, out),
        Command::Eval => eval_cmd(&cfg, cli.overrides.task, out),
        Command::Bench => bench_cmd(&cfg, out),
    }
}

fn make_data_cmd(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let ds = make_data(&cfg.data)?;
    formats::write_file(&cfg.dataset, &formats::dataset_to_bytes(&ds)?)?;
    say(
        out,
        &format!(
            "wrote {} {} clips to {}\n",
            ds.clips.len(),
            cfg.data.motif,
            cfg.dataset.display()
        ),
    )
}

fn load_dataset(cfg: &RunConfig) -> Result<formats::Dataset> {
    let ds = load(&cfg.dataset, formats::dataset_from_bytes)?;
    if let Some(v) = ds.clips.iter().find(|v| v.dims() != cfg.data.dims) {
        return Err(Error::data(format!(
            "{}: clip dims {:?} differ from the configured {:?}",
            cfg.dataset.display(),
            v.dims(),
            cfg.data.dims
        )));
    }
    Ok(ds)
}

fn load_codebook(cfg: &RunConfig) -> Result<crate::tokenizer::Codebook> {
    let cb = load(&cfg.codebook, formats::codebook_from_bytes)?;
    if cb.size() != cfg.model.codebook_size {
        return Err(Error::data(format!(
            "{}: codebook has {} codes, configuration expects {}",
            cfg.codebook.display(),
            cb.size(),
            cfg.model.codebook_size
        )));
    }
    Ok(cb)
}

fn fit_vq_cmd(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let split = pipeline::split(ds.clips.len(), cfg.model.holdout, cfg.decode.clips)?;
    let cb = pipeline::fit_vq(cfg, &ds, split.train.clone())?;
    formats::write_file(&cfg.codebook, &formats::codebook_to_bytes(&cb)?)?;
    let mut total = 0.0;
    for v in &ds.clips[split.train.clone()] {
        let rec = decode(&encode(v, &cb, &cfg.model.latent)?, &cb, &v.dims())?;
        total += psnr(&rec, v)?;
    }
    say(
        out,
        &format!(
            "wrote codebook of {} codes to {}; mean reconstruction PSNR {:.2} dB\n",
            cb.size(),
            cfg.codebook.display(),
            total / split.train.len() as f64
        ),
    )
}

fn train_cmd(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let cb = load_codebook(cfg)?;
    let split = pipeline::split(ds.clips.len(), cfg.model.holdout, cfg.decode.clips)?;
    let corpus = pipeline::encode_clips(&ds, split.train, &cb, cfg)?;
    let (pred, curve) = pipeline::train_predictor(cfg, &corpus, &cb)?;
    formats::write_file(&cfg.checkpoint, &formats::predictor_to_bytes(&pred)?)?;

    let mut csv = String::from("step,refine,mask,recons,total\n");
    for (i, l) in curve.iter().enumerate() {
        csv.push_str(&format!("{i},{},{},{},{}\n", l.refine, l.mask, l.recons, l.total));
    }
    let curve_path = cfg.out.join("loss.csv");
    formats::write_file(&curve_path, csv.as_bytes())?;
    let last = curve.last().map_or(f64::NAN, |l| l.total);
    say(
        out,
        &format!(
            "trained {} steps ({} loss); final loss {last:.4}; checkpoint {}; curve {}\n",
            curve.len(),
            cfg.model.loss,
            cfg.checkpoint.display(),
            curve_path.display()
        ),
    )
}

fn load_source(cfg: &RunConfig) -> Result<Option<crate::model::NeighborhoodPredictor>> {
    match cfg.model.predictor {
        PredictorKind::Checkpoint => Ok(Some(load(&cfg.checkpoint, formats::predictor_from_bytes)?)),
        _ => Ok(None),
    }
}

fn generate_cmd(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let cb = load_codebook(cfg)?;
    let trained = load_source(cfg)?;
    let source = PredictorSource::from_kind(cfg.model.predictor, trained.as_ref())?;
    let split = pipeline::split(ds.clips.len(), cfg.model.holdout, cfg.decode.clips)?;
    let dir = cfg.out.join("generate");
    let task = cfg.task;
    for i in split.eval {
        let g = pipeline::generate(cfg, source, &cb, &ds, i, task)?;
        let stem = dir.join(format!("{task}_{i:04}"));
        let path = |ext: &str| PathBuf::from(format!("{}.{ext}", stem.display()));
        formats::write_file(&path("mgv"), &formats::video_to_bytes(&g.video)?)?;
        formats::write_file(&path("mgt"), &formats::tokens_to_bytes(&g.tokens)?)?;
        if !g.trace.steps.is_empty() {
            formats::write_file(&path("trace"), g.trace.to_text().as_bytes())?;
        }
        if cfg.decode.snapshots {
            for s in &g.trace.steps {
                let lattice = TokenLattice::new(g.tokens.latent, s.tokens.clone())?;
                formats::write_file(
                    &path(&format!("step{:02}.mgt", s.step)),
                    &formats::tokens_to_bytes(&lattice)?,
                )?;
            }
        }
        say(
            out,
            &format!(
                "{task} clip {i}: token accuracy {:.4}, PSNR {:.2} dB -> {}\n",
                g.accuracy(),
                psnr(&g.video, &ds.clips[i])?,
                path("mgv").display()
            ),
        )?;
    }
    Ok(())
}

fn eval_cmd(cfg: &RunConfig, only: Option<TaskId>, out: &mut dyn Write) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let cb = load_codebook(cfg)?;
    let trained = load_source(cfg)?;
    let source = PredictorSource::from_kind(cfg.model.predictor, trained.as_ref())?;
    let split = pipeline::split(ds.clips.len(), cfg.model.holdout, cfg.decode.clips)?;
    let tasks: Vec<TaskId> = match only {
        Some(t) => vec![t],
        None => cfg.tasks.clone(),
    };
    let rows = tasks
        .iter()
        .map(|&t| pipeline::evaluate(cfg, source, &cb, &ds, split.eval.clone(), t))
        .collect::<Result<Vec<_>>>()?;
    let table = pipeline::eval_table(&rows);
    formats::write_file(&cfg.out.join("eval.csv"), table.as_bytes())?;
    say(out, &table)
}

fn bench_cmd(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let d = &cfg.decode;
    let ar_steps = if d.ar_steps == 0 { d.seq_len } else { d.ar_steps };
    let report = cost_report(d.seq_len, d.decode.steps, ar_steps)?
        .with_row(DecodeCost::new("NAR-2D", d.seq_len_2d, d.decode.steps));
    let ar = report.row("AR").expect("AR row");
    let ratio = report.step_ratio(ar);
    let two_d = report.row("NAR-2D").expect("2D row");
    say(
        out,
        &format!(
            "{}\nAR/NAR step ratio: {ratio:.1}\n2D/3D sequence length ratio: {:.1}\n",
            report.to_table(),
            two_d.seq_len as f64 / report.baseline().seq_len as f64
        ),
    )
}
