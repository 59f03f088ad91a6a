use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use samplernn::audio::{chunk_corpus, load_chunks, read_wav, split_dataset, AudioBuffer, ChunkManifest, SplitTag};
use samplernn::generation::{checkpoint_generation_schedule, diagnose as diagnose_clip, generate_at_checkpoint};
use samplernn::model::{gradient_suite, SampleRnn};
use samplernn::numerics::{Fault, GradCheckOptions};
use samplernn::training::{load_checkpoint, train_loop, LoopOptions, TrainData, TrainError, Trainer};

use crate::config::RunConfig;

/// A failed command and the exit code it maps to.
#[derive(Debug)]
pub enum Exit {
    /// Bad flags, config, or input files.
    Input(anyhow::Error),
    /// Training produced a non-finite loss.
    Diverged(anyhow::Error),
    Failed(anyhow::Error),
}

impl Exit {
    pub fn code(&self) -> u8 {
        match self {
            Exit::Input(_) => 2,
            Exit::Diverged(_) => 3,
            Exit::Failed(_) => 1,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Exit::Input(e) | Exit::Diverged(e) | Exit::Failed(e) => e,
        }
    }
}

trait OrExit<T> {
    fn input(self) -> Result<T, Exit>;
    fn failed(self) -> Result<T, Exit>;
}

impl<T, E: Into<anyhow::Error>> OrExit<T> for Result<T, E> {
    fn input(self) -> Result<T, Exit> {
        self.map_err(|e| Exit::Input(e.into()))
    }

    fn failed(self) -> Result<T, Exit> {
        self.map_err(|e| Exit::Failed(e.into()))
    }
}

fn is_wav(p: &Path) -> bool {
    p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"))
}

fn wavs_in(dir: &Path) -> Result<Vec<PathBuf>, Exit> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))
        .input()?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| is_wav(p))
        .collect();
    files.sort();
    Ok(files)
}

fn print_counts(m: &ChunkManifest) {
    let (train, test, val) = m.split_counts();
    println!("train={train} test={test} val={val}");
}

fn save_manifest(m: &ChunkManifest, path: &Path) -> Result<(), Exit> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).failed()?;
    }
    m.save(path).failed()
}

pub fn chunk(cfg: &RunConfig) -> Result<(), Exit> {
    let dir = &cfg.paths.corpus_dir;
    let files = wavs_in(dir)?
        .into_iter()
        .map(|f| fs::canonicalize(&f).with_context(|| f.display().to_string()))
        .collect::<anyhow::Result<Vec<_>>>()
        .input()?;
    if files.is_empty() {
        return Err(Exit::Input(anyhow!("empty-corpus: no WAV files in {}", dir.display())));
    }
    let corpus_id = dir
        .file_name()
        .map_or_else(|| "corpus".to_string(), |n| n.to_string_lossy().into_owned());
    let (_, manifest) = chunk_corpus(&corpus_id, &files, cfg.data.chunk_seconds, cfg.model.sample_rate).input()?;
    let manifest = split_dataset(&manifest, cfg.data.split, cfg.data.split_seed).input()?;
    save_manifest(&manifest, &cfg.paths.manifest)?;
    println!(
        "files={} chunks={} chunk_len={} manifest={}",
        files.len(),
        manifest.len(),
        manifest.chunk_length_samples,
        cfg.paths.manifest.display()
    );
    print_counts(&manifest);
    Ok(())
}

pub fn split(cfg: &RunConfig, out: Option<&Path>) -> Result<(), Exit> {
    let manifest = ChunkManifest::load(&cfg.paths.manifest).input()?;
    let manifest = split_dataset(&manifest, cfg.data.split, cfg.data.split_seed).input()?;
    save_manifest(&manifest, out.unwrap_or(&cfg.paths.manifest))?;
    print_counts(&manifest);
    Ok(())
}

fn load_data(cfg: &RunConfig) -> Result<(TrainData, usize), Exit> {
    let manifest = ChunkManifest::load(&cfg.paths.manifest).input()?;
    let chunks = load_chunks(&manifest, None).input()?;
    if let Some(c) = chunks.iter().find(|c| c.sample_rate() != cfg.model.sample_rate) {
        return Err(Exit::Input(anyhow!(
            "corpus is {} Hz but the model runs at {} Hz",
            c.sample_rate(),
            cfg.model.sample_rate
        )));
    }
    let pick = |tag| -> Vec<AudioBuffer> { manifest.ids_in(tag).into_iter().map(|i| chunks[i].clone()).collect() };
    let (train, val) = (pick(SplitTag::Train), pick(SplitTag::Validation));
    let n = train.len();
    let data = TrainData::from_buffers(&train, &val, cfg.model.quantizer().input()?).input()?;
    Ok((data, n))
}

pub fn train(mut cfg: RunConfig, resume: Option<&Path>, iterations: Option<u64>) -> Result<(), Exit> {
    let ckpt = resume.map(load_checkpoint).transpose().input()?;
    if let Some(c) = &ckpt {
        cfg.model = c.model_config.clone();
        cfg.train = c.train_config.clone();
        if let Some(n) = iterations {
            cfg.train.max_iterations = n;
        }
    }
    let (data, n_train) = load_data(&cfg)?;
    let mut trainer = match ckpt {
        Some(c) => {
            if c.stream.n_chunks() != n_train {
                return Err(Exit::Input(anyhow!(
                    "the manifest has {n_train} training chunks but the checkpoint was trained on {}",
                    c.stream.n_chunks()
                )));
            }
            let mut t = Trainer::from_checkpoint(c).input()?;
            t.set_max_iterations(cfg.train.max_iterations);
            t
        }
        None => Trainer::new(SampleRnn::init(cfg.model.clone()).input()?, cfg.train.clone(), n_train).input()?,
    };

    fs::create_dir_all(&cfg.paths.checkpoint_dir).failed()?;
    let metrics = cfg.metrics_path();
    let mut header = String::new();
    if let Some(path) = resume {
        header.push_str(&format!("# resume = {} at iteration {}\n", path.display(), trainer.iteration()));
    }
    header.push_str(&cfg.echo());
    let mut file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(resume.is_some())
        .truncate(resume.is_none())
        .open(&metrics)
        .with_context(|| format!("opening {}", metrics.display()))
        .failed()?;
    file.write_all(header.as_bytes()).failed()?;
    drop(file);

    let opts = LoopOptions {
        checkpoint_dir: Some(cfg.paths.checkpoint_dir.clone()),
        metrics_path: Some(metrics),
        on_checkpoint: None,
        on_metrics: Some(Box::new(|line| println!("{line}"))),
    };
    match train_loop(&mut trainer, &data, opts) {
        Ok(summary) => {
            let last = summary.checkpoints.last().map_or("none".to_string(), |p| p.display().to_string());
            println!(
                "done iterations={} epochs={:.2} checkpoints={} last={last}",
                trainer.iteration(),
                trainer.epochs(data.corpus_samples()),
                summary.checkpoints.len()
            );
            Ok(())
        }
        Err(e @ TrainError::Divergence { .. }) => Err(Exit::Diverged(e.into())),
        Err(e) => Err(Exit::Failed(e.into())),
    }
}

pub fn generate(cfg: &RunConfig, ckpt: Option<&Path>) -> Result<(), Exit> {
    let out_dir = &cfg.paths.output_dir;
    let records = match ckpt {
        Some(path) => {
            let c = load_checkpoint(path).input()?;
            let model = SampleRnn::from_params(c.model_config, c.params).input()?;
            generate_at_checkpoint(&model, c.iteration, out_dir, &cfg.gen).input()?
        }
        None => checkpoint_generation_schedule(&cfg.paths.checkpoint_dir, out_dir, &cfg.gen).input()?,
    };
    for r in &records {
        println!("{}", r.report);
    }
    println!("clips={} out_dir={}", records.len(), out_dir.display());
    Ok(())
}

pub fn diagnose(cfg: &RunConfig, inputs: &[PathBuf]) -> Result<(), Exit> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            files.extend(wavs_in(input)?);
        } else {
            files.push(input.clone());
        }
    }
    if files.is_empty() {
        return Err(Exit::Input(anyhow!("no WAV files to diagnose")));
    }
    let (mut noise, mut traps) = (0, 0);
    for f in &files {
        let clip = read_wav(f).input()?;
        let name = f.file_name().map_or_else(|| f.display().to_string(), |n| n.to_string_lossy().into_owned());
        let r = diagnose_clip(&name, &clip, &cfg.gen)
            .with_context(|| f.display().to_string())
            .input()?;
        noise += usize::from(r.white_noise_suspect);
        traps += usize::from(r.trap_suspect);
        println!("{r}");
    }
    println!("files={} white_noise_suspect={noise} trap_suspect={traps}", files.len());
    Ok(())
}

pub fn gradcheck(tolerance: f64, seed: u64, inject_fault: bool) -> Result<(), Exit> {
    let opts = GradCheckOptions {
        seed,
        fault: inject_fault.then_some(Fault::SigmoidBackward),
        ..GradCheckOptions::default()
    };
    let report = gradient_suite(tolerance, &opts).failed()?;
    print!("{report}");
    let groups: usize = report.checks.iter().map(|c| c.report.params.len()).sum();
    if report.passed() {
        println!(
            "gradcheck PASS groups={groups} max_rel_err={:.3e} tolerance={tolerance:e}",
            report.max_rel_err()
        );
        Ok(())
    } else {
        Err(Exit::Failed(anyhow!(
            "gradcheck FAIL: {} of {groups} parameter groups at or above {tolerance:e}",
            report.failures()
        )))
    }
}
