use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{read_wav, AudioBuffer, AudioError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitTag {
    Train,
    Test,
    Validation,
}

impl SplitTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Test => "test",
            SplitTag::Validation => "validation",
        }
    }
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitTag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(SplitTag::Train),
            "test" => Ok(SplitTag::Test),
            "validation" => Ok(SplitTag::Validation),
            other => Err(format!("unknown split tag '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkEntry {
    pub chunk_id: usize,
    pub source_file: PathBuf,
    pub offset_samples: usize,
    pub split: SplitTag,
}

/// Record of every chunk cut from a corpus and the split it belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkManifest {
    pub corpus_id: String,
    pub chunk_length_samples: usize,
    pub entries: Vec<ChunkEntry>,
    pub shuffle_seed: u64,
}

impl ChunkManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids_in(&self, split: SplitTag) -> Vec<usize> {
        self.entries
            .iter()
            .filter(|e| e.split == split)
            .map(|e| e.chunk_id)
            .collect()
    }

    /// (train, test, validation) counts.
    pub fn split_counts(&self) -> (usize, usize, usize) {
        let count = |t| self.entries.iter().filter(|e| e.split == t).count();
        (
            count(SplitTag::Train),
            count(SplitTag::Test),
            count(SplitTag::Validation),
        )
    }

    /// Serializes to the line-oriented manifest format.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "#corpus_id={} seed={} chunk_len={}\n",
            self.corpus_id, self.shuffle_seed, self.chunk_length_samples
        );
        for e in &self.entries {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                e.chunk_id,
                e.source_file.display(),
                e.offset_samples,
                e.split
            ));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: String| AudioError::Manifest { line, msg };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| bad(1, "missing header".into()))?;
        let header = header
            .strip_prefix('#')
            .ok_or_else(|| bad(1, "header must start with '#'".into()))?;
        let mut fields = HashMap::new();
        for kv in header.split_whitespace() {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| bad(1, format!("malformed header field '{kv}'")))?;
            fields.insert(k, v);
        }
        let field = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| bad(1, format!("header lacks '{k}'")))
        };
        let corpus_id = field("corpus_id")?.to_string();
        let shuffle_seed = field("seed")?
            .parse()
            .map_err(|e| bad(1, format!("seed: {e}")))?;
        let chunk_length_samples = field("chunk_len")?
            .parse()
            .map_err(|e| bad(1, format!("chunk_len: {e}")))?;

        let mut entries = Vec::new();
        for (i, line) in lines {
            let n = i + 1;
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(bad(n, format!("expected 4 columns, found {}", cols.len())));
            }
            let chunk_id: usize = cols[0].parse().map_err(|e| bad(n, format!("chunk_id: {e}")))?;
            if chunk_id != entries.len() {
                return Err(bad(n, format!("chunk ids must be dense; expected {}", entries.len())));
            }
            entries.push(ChunkEntry {
                chunk_id,
                source_file: PathBuf::from(cols[1]),
                offset_samples: cols[2].parse().map_err(|e| bad(n, format!("offset: {e}")))?,
                split: cols[3].parse().map_err(|e| bad(n, e))?,
            });
        }
        Ok(Self {
            corpus_id,
            chunk_length_samples,
            entries,
            shuffle_seed,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|source| AudioError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| AudioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }
}

/// Train/test/validation fractions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub test: f64,
    pub validation: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.88,
            test: 0.06,
            validation: 0.06,
        }
    }
}

impl SplitRatios {
    fn validate(&self) -> Result<()> {
        let all = [self.train, self.test, self.validation];
        if all.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(AudioError::InvalidRatios(format!("{all:?} must all be positive")));
        }
        let sum: f64 = all.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(AudioError::InvalidRatios(format!("{all:?} sum to {sum}, not 1")));
        }
        Ok(())
    }
}

fn chunk_len(chunk_seconds: f64, sample_rate: u32) -> Result<usize> {
    let n = (chunk_seconds * sample_rate as f64).round();
    if !(chunk_seconds > 0.0) || n < 1.0 || !n.is_finite() {
        return Err(AudioError::InvalidBuffer(format!(
            "chunk length of {chunk_seconds} s at {sample_rate} Hz is empty"
        )));
    }
    Ok(n as usize)
}

/// Cuts each file into consecutive, non-overlapping chunks of
/// `chunk_seconds * sample_rate` samples; trailing remainders are dropped.
/// Every chunk starts out tagged `train` until [`split_dataset`] runs.
pub fn chunk_corpus(
    corpus_id: &str,
    files: &[PathBuf],
    chunk_seconds: f64,
    sample_rate: u32,
) -> Result<(Vec<AudioBuffer>, ChunkManifest)> {
    let len = chunk_len(chunk_seconds, sample_rate)?;
    let mut chunks = Vec::new();
    let mut entries = Vec::new();
    for file in files {
        if file.to_string_lossy().contains(['\t', '\n']) {
            return Err(AudioError::InvalidBuffer(format!(
                "file name {} cannot be stored in a manifest",
                file.display()
            )));
        }
        let audio = read_wav(file)?;
        if audio.sample_rate() != sample_rate {
            return Err(AudioError::RateMismatch {
                path: file.clone(),
                expected: sample_rate,
                found: audio.sample_rate(),
            });
        }
        for (k, chunk) in audio.samples().chunks_exact(len).enumerate() {
            entries.push(ChunkEntry {
                chunk_id: entries.len(),
                source_file: file.clone(),
                offset_samples: k * len,
                split: SplitTag::Train,
            });
            chunks.push(AudioBuffer::new(chunk.to_vec(), sample_rate)?);
        }
    }
    if chunks.is_empty() {
        return Err(AudioError::EmptyCorpus);
    }
    let manifest = ChunkManifest {
        corpus_id: corpus_id.to_string(),
        chunk_length_samples: len,
        entries,
        shuffle_seed: 0,
    };
    Ok((chunks, manifest))
}

/// Shuffles chunk ids with a seeded PRNG and assigns `floor(N * ratio)` chunks
/// to test and validation (at least one each); the rest go to train.
pub fn split_dataset(manifest: &ChunkManifest, ratios: SplitRatios, seed: u64) -> Result<ChunkManifest> {
    ratios.validate()?;
    let n = manifest.len();
    if n < 3 {
        return Err(AudioError::InsufficientData(n));
    }
    let share = |r: f64| (((n as f64) * r + 1e-9).floor() as usize).max(1);
    let n_test = share(ratios.test);
    let n_val = share(ratios.validation);
    if n_test + n_val >= n {
        return Err(AudioError::InsufficientData(n));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = manifest.clone();
    out.shuffle_seed = seed;
    for (rank, &id) in order.iter().enumerate() {
        out.entries[id].split = if rank < n_test {
            SplitTag::Test
        } else if rank < n_test + n_val {
            SplitTag::Validation
        } else {
            SplitTag::Train
        };
    }
    Ok(out)
}

/// Re-reads the chunks listed in `manifest` from their source files, indexed by chunk id.
pub fn load_chunks(manifest: &ChunkManifest, base_dir: Option<&Path>) -> Result<Vec<AudioBuffer>> {
    let mut cache: HashMap<PathBuf, AudioBuffer> = HashMap::new();
    let len = manifest.chunk_length_samples;
    let mut out = Vec::with_capacity(manifest.len());
    for e in &manifest.entries {
        let path = match base_dir {
            Some(dir) if e.source_file.is_relative() => dir.join(&e.source_file),
            _ => e.source_file.clone(),
        };
        if !cache.contains_key(&path) {
            let audio = read_wav(&path)?;
            cache.insert(path.clone(), audio);
        }
        let audio = &cache[&path];
        let end = e.offset_samples + len;
        if end > audio.len() {
            return Err(AudioError::Manifest {
                line: e.chunk_id + 2,
                msg: format!("chunk runs past the end of {}", path.display()),
            });
        }
        out.push(AudioBuffer::new(
            audio.samples()[e.offset_samples..end].to_vec(),
            audio.sample_rate(),
        )?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::write_wav;
    use proptest::prelude::*;

    fn manifest_of(n: usize) -> ChunkManifest {
        ChunkManifest {
            corpus_id: "t".into(),
            chunk_length_samples: 4,
            entries: (0..n)
                .map(|i| ChunkEntry {
                    chunk_id: i,
                    source_file: "a.wav".into(),
                    offset_samples: 4 * i,
                    split: SplitTag::Train,
                })
                .collect(),
            shuffle_seed: 0,
        }
    }

    fn write_tone(dir: &Path, name: &str, n: usize, rate: u32) -> PathBuf {
        let path = dir.join(name);
        let xs = (0..n).map(|i| ((i % 100) as f32 / 100.0) - 0.5).collect();
        write_wav(&AudioBuffer::new(xs, rate).unwrap(), &path).unwrap();
        path
    }

    #[test]
    fn split_sizes() {
        let r = SplitRatios::default();
        assert_eq!(split_dataset(&manifest_of(3200), r, 1).unwrap().split_counts(), (2816, 192, 192));
        assert_eq!(split_dataset(&manifest_of(100), r, 1).unwrap().split_counts(), (88, 6, 6));
        assert_eq!(split_dataset(&manifest_of(3), r, 1).unwrap().split_counts(), (1, 1, 1));
    }

    #[test]
    fn split_is_deterministic_and_seed_dependent() {
        let m = manifest_of(50);
        let r = SplitRatios::default();
        assert_eq!(split_dataset(&m, r, 9).unwrap(), split_dataset(&m, r, 9).unwrap());
        assert_ne!(
            split_dataset(&m, r, 9).unwrap().ids_in(SplitTag::Test),
            split_dataset(&m, r, 10).unwrap().ids_in(SplitTag::Test)
        );
    }

    #[test]
    fn split_errors() {
        let r = SplitRatios::default();
        assert!(matches!(split_dataset(&manifest_of(2), r, 0), Err(AudioError::InsufficientData(2))));
        let bad = SplitRatios {
            train: 0.9,
            test: 0.06,
            validation: 0.06,
        };
        assert!(matches!(split_dataset(&manifest_of(10), bad, 0), Err(AudioError::InvalidRatios(_))));
    }

    #[test]
    fn chunk_lengths_and_remainders() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_tone(dir.path(), "a.wav", 16000 * 17, 16000);
        let b = write_tone(dir.path(), "b.wav", 16000 * 7, 16000);
        let (chunks, m) = chunk_corpus("c", &[a.clone(), b], 8.0, 16000).unwrap();
        assert_eq!(chunks.len(), 2);
        assert!(chunks.iter().all(|c| c.len() == 128_000));
        assert_eq!(m.entries[1].offset_samples, 128_000);
        assert_eq!(m.entries[1].source_file, a);
        assert_eq!(load_chunks(&m, None).unwrap(), chunks);
    }

    #[test]
    fn thirty_five_minutes_gives_262_chunks() {
        // low rate keeps the fixture small; the count only depends on durations
        let dir = tempfile::tempdir().unwrap();
        let f = write_tone(dir.path(), "album.wav", 35 * 60 * 100, 100);
        let (chunks, _) = chunk_corpus("album", &[f], 8.0, 100).unwrap();
        assert_eq!(chunks.len(), 262);
    }

    #[test]
    fn chunk_errors() {
        let dir = tempfile::tempdir().unwrap();
        let short = write_tone(dir.path(), "s.wav", 7 * 100, 100);
        assert!(matches!(
            chunk_corpus("c", &[short.clone()], 8.0, 100),
            Err(AudioError::EmptyCorpus)
        ));
        assert!(matches!(
            chunk_corpus("c", &[short], 1.0, 16000),
            Err(AudioError::RateMismatch { found: 100, .. })
        ));
    }

    #[test]
    fn manifest_text_round_trip() {
        let m = split_dataset(&manifest_of(20), SplitRatios::default(), 4).unwrap();
        let text = m.to_text();
        assert!(text.starts_with("#corpus_id=t seed=4 chunk_len=4\n"));
        assert_eq!(text.lines().nth(1).unwrap().split('\t').count(), 4);
        assert_eq!(ChunkManifest::parse(&text).unwrap(), m);
        assert!(ChunkManifest::parse("#corpus_id=t seed=1 chunk_len=4\n0\ta\t0\tdev\n").is_err());
        assert!(ChunkManifest::parse("#corpus_id=t seed=1 chunk_len=4\n1\ta\t0\ttrain\n").is_err());
    }

    proptest! {
        #[test]
        fn split_is_a_partition(n in 3usize..400, seed in any::<u64>()) {
            let m = split_dataset(&manifest_of(n), SplitRatios::default(), seed).unwrap();
            let (tr, te, va) = m.split_counts();
            prop_assert_eq!(tr + te + va, n);
            prop_assert!(tr >= 1 && te >= 1 && va >= 1);
            let mut ids: Vec<usize> = m.entries.iter().map(|e| e.chunk_id).collect();
            ids.sort_unstable();
            prop_assert_eq!(ids, (0..n).collect::<Vec<_>>());
        }

        #[test]
        fn chunking_conserves_samples(len in 1usize..5000, chunk in 1usize..700) {
            let dir = tempfile::tempdir().unwrap();
            let f = write_tone(dir.path(), "x.wav", len, 1000);
            match chunk_corpus("c", &[f], chunk as f64 / 1000.0, 1000) {
                Ok((chunks, _)) => {
                    let used: usize = chunks.iter().map(|c| c.len()).sum();
                    prop_assert_eq!(used + len % chunk, len);
                    prop_assert_eq!(chunks.len(), len / chunk);
                }
                Err(AudioError::EmptyCorpus) => prop_assert!(len < chunk),
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            }
        }
    }
}
