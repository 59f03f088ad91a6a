use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use samplernn::audio::SplitRatios;
use samplernn::generation::GenConfig;
use samplernn::model::ModelConfig;
use samplernn::training::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Preset {
    #[default]
    Full,
    Desk,
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Full => "full",
            Preset::Desk => "desk",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Paths {
    pub corpus_dir: PathBuf,
    pub manifest: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub output_dir: PathBuf,
    /// Defaults to `metrics.log` inside the checkpoint directory.
    pub metrics: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            corpus_dir: PathBuf::from("corpus"),
            manifest: PathBuf::from("manifest.tsv"),
            checkpoint_dir: PathBuf::from("checkpoints"),
            output_dir: PathBuf::from("generated"),
            metrics: None,
        }
    }
}

/// Chunking and split settings, stored under the `train.` namespace.
#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub chunk_seconds: f64,
    pub split: SplitRatios,
    pub split_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            chunk_seconds: 8.0,
            split: SplitRatios::default(),
            split_seed: 0,
        }
    }
}

/// Every setting of a run. Built from a preset, then a config file, then flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub gen: GenConfig,
    pub paths: Paths,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.trim().parse().map_err(|e| anyhow!("{key}: {e}"))
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let (model, train, data) = match preset {
            Preset::Full => (ModelConfig::full(), TrainConfig::full(), DataConfig::default()),
            Preset::Desk => (
                ModelConfig::desk(),
                TrainConfig::desk(),
                DataConfig {
                    chunk_seconds: 2.0,
                    ..DataConfig::default()
                },
            ),
        };
        Self {
            preset,
            model,
            train,
            data,
            gen: GenConfig::default(),
            paths: Paths::default(),
        }
    }

    /// Applies one namespaced setting such as `model.n_layers`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (ns, name) = key
            .split_once('.')
            .ok_or_else(|| anyhow!("unknown key '{key}' (keys are model.*, train.*, gen.* or paths.*)"))?;
        let path = || PathBuf::from(value.trim());
        match (ns, name) {
            ("model", k) => self.model.set(k, value).map_err(|e| anyhow!(e))?,
            ("train", "chunk_seconds") => self.data.chunk_seconds = parse(key, value)?,
            ("train", "split_seed") => self.data.split_seed = parse(key, value)?,
            ("train", "split_ratios") => {
                let parts: Vec<f64> = value
                    .split(',')
                    .map(|v| parse(key, v))
                    .collect::<Result<_>>()?;
                let [train, test, validation] = parts[..] else {
                    bail!("{key}: expected train,test,validation");
                };
                self.data.split = SplitRatios {
                    train,
                    test,
                    validation,
                };
            }
            ("train", k) => self.train.set(k, value).map_err(|e| anyhow!(e))?,
            ("gen", k) => self.gen.set(k, value).map_err(|e| anyhow!(e))?,
            ("paths", "corpus_dir") => self.paths.corpus_dir = path(),
            ("paths", "manifest") => self.paths.manifest = path(),
            ("paths", "checkpoint_dir") => self.paths.checkpoint_dir = path(),
            ("paths", "output_dir") => self.paths.output_dir = path(),
            ("paths", "metrics") => self.paths.metrics = Some(path()),
            _ => bail!("unknown key '{key}'"),
        }
        Ok(())
    }

    /// Applies a `key = value` file. `#` starts a comment; later lines win.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{origin}:{}: expected key = value", n + 1))?;
            self.set(key.trim(), value.trim())
                .with_context(|| format!("{origin}:{}", n + 1))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate(self.model.frame_size)?;
        self.gen.validate()?;
        if !(self.data.chunk_seconds > 0.0) {
            bail!("train.chunk_seconds must be positive");
        }
        Ok(())
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.paths
            .metrics
            .clone()
            .unwrap_or_else(|| self.paths.checkpoint_dir.join("metrics.log"))
    }

    /// Every effective value as `key = value`, in namespace order.
    pub fn to_kv(&self) -> Vec<(String, String)> {
        let mut out = vec![("preset".to_string(), self.preset.to_string())];
        let ns = |prefix: &'static str, kv: Vec<(String, String)>| {
            kv.into_iter().map(move |(k, v)| (format!("{prefix}.{k}"), v))
        };
        out.extend(ns("model", self.model.to_kv()));
        out.extend(ns("train", self.train.to_kv()));
        let s = self.data.split;
        out.push(("train.chunk_seconds".into(), format!("{:?}", self.data.chunk_seconds)));
        out.push(("train.split_ratios".into(), format!("{:?},{:?},{:?}", s.train, s.test, s.validation)));
        out.push(("train.split_seed".into(), self.data.split_seed.to_string()));
        out.extend(ns("gen", self.gen.to_kv()));
        let p = &self.paths;
        for (k, v) in [
            ("corpus_dir", &p.corpus_dir),
            ("manifest", &p.manifest),
            ("checkpoint_dir", &p.checkpoint_dir),
            ("output_dir", &p.output_dir),
            ("metrics", &self.metrics_path()),
        ] {
            out.push((format!("paths.{k}"), v.display().to_string()));
        }
        out
    }

    /// The effective configuration as a block of `# key = value` lines.
    pub fn echo(&self) -> String {
        self.to_kv().iter().map(|(k, v)| format!("# {k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_their_scales() {
        let p = RunConfig::preset(Preset::Full);
        assert_eq!(
            (p.model.n_layers, p.model.hidden_dim, p.model.embed_size, p.model.q_levels, p.train.batch_size),
            (5, 1024, 256, 256, 128)
        );
        let d = RunConfig::preset(Preset::Desk);
        assert_eq!(
            (d.model.n_layers, d.model.hidden_dim, d.model.embed_size, d.model.frame_size, d.train.batch_size),
            (1, 64, 16, 4, 8)
        );
        p.validate().unwrap();
        d.validate().unwrap();
    }

    #[test]
    fn file_values_and_comments() {
        let mut c = RunConfig::preset(Preset::Desk);
        c.apply_text(
            "# run\nmodel.n_layers = 3  # deeper\n\ntrain.lr=0.01\ngen.mode = argmax\npaths.manifest = m.tsv\ntrain.split_ratios = 0.8,0.1,0.1\n",
            "t",
        )
        .unwrap();
        assert_eq!(c.model.n_layers, 3);
        assert_eq!(c.train.lr, 0.01);
        assert_eq!(c.paths.manifest, PathBuf::from("m.tsv"));
        assert_eq!(c.data.split.test, 0.1);
        assert_eq!(c.gen.mode.to_string(), "argmax");
    }

    #[test]
    fn unknown_keys_are_errors() {
        let mut c = RunConfig::preset(Preset::Full);
        for bad in ["model.depth = 3", "layers = 3", "other.x = 1", "paths.nowhere = x", "model.n_layers 3"] {
            let e = c.apply_text(bad, "f").unwrap_err();
            assert!(format!("{e:#}").contains("f:1"), "{e:#}");
        }
        assert!(c.set("train.lr", "fast").is_err());
    }

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig::preset(Preset::Desk);
        c.set("model.cell", "gru").unwrap();
        c.set("paths.metrics", "m.log").unwrap();
        let mut back = RunConfig::preset(Preset::Full);
        for (k, v) in c.to_kv() {
            if k != "preset" {
                back.set(&k, &v).unwrap();
            }
        }
        back.preset = Preset::Desk;
        assert_eq!(back, c);
        assert!(c.echo().lines().all(|l| l.starts_with("# ")));
    }
}
