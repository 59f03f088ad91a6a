use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crc::{Crc, CRC_64_XZ};
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::model::{ModelConfig, RecurrentState};
use crate::numerics::{ParamStore, Real, Tensor};

use super::{Adam, BatchStream, Result, TrainConfig, TrainError};

const MAGIC: &[u8; 8] = b"SRNNCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;
const DIGEST: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);

/// Everything needed to resume training exactly where it stopped.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub iteration: u64,
    pub params: ParamStore<f32>,
    pub adam: Adam<f32>,
    /// Generator for randomized initial states.
    pub rng: ChaCha8Rng,
    pub stream: BatchStream,
    /// Chunk rows of the batch in flight and the next segment index.
    pub rows: Vec<usize>,
    pub segment: usize,
    pub carried: Option<RecurrentState<f32>>,
    pub val_history: Vec<(u64, f64)>,
}

fn put_record<T: Real>(out: &mut Vec<u8>, name: &str, t: &Tensor<T>) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(T::DTYPE_TAG);
    out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &x in t.data() {
        out.extend_from_slice(&x.to_le_bytes_vec());
    }
}

fn header(c: &Checkpoint, records: usize) -> String {
    let mut lines = Vec::new();
    for (k, v) in c.model_config.to_kv() {
        lines.push(format!("model.{k}={v}"));
    }
    for (k, v) in c.train_config.to_kv() {
        lines.push(format!("train.{k}={v}"));
    }
    let seed: String = c.rng.get_seed().iter().map(|b| format!("{b:02x}")).collect();
    let join = |v: Vec<String>| v.join(",");
    lines.extend([
        format!("iteration={}", c.iteration),
        format!("adam_step={}", c.adam.step),
        format!("rng_seed={seed}"),
        format!("rng_stream={}", c.rng.get_stream()),
        format!("rng_word_pos={}", c.rng.get_word_pos()),
        format!("stream_seed={}", c.stream.seed()),
        format!("stream_chunks={}", c.stream.n_chunks()),
        format!("stream_epoch={}", c.stream.epoch()),
        format!("stream_pos={}", c.stream.pos()),
        format!("rows={}", join(c.rows.iter().map(|r| r.to_string()).collect())),
        format!("segment={}", c.segment),
        format!(
            "val_history={}",
            join(c.val_history.iter().map(|(i, b)| format!("{i}:{b:?}")).collect())
        ),
        format!("records={records}"),
    ]);
    lines.join("\n")
}

/// Serializes a checkpoint into the binary format.
pub fn encode_checkpoint(c: &Checkpoint) -> Vec<u8> {
    let mut records = Vec::new();
    let mut n = 0;
    for (_, name, t) in c.params.iter() {
        put_record(&mut records, &format!("param/{name}"), t);
        n += 1;
    }
    for (i, (_, name, _)) in c.params.iter().enumerate() {
        put_record(&mut records, &format!("adam.m/{name}"), &c.adam.m[i]);
        put_record(&mut records, &format!("adam.v/{name}"), &c.adam.v[i]);
        n += 2;
    }
    if let Some(s) = &c.carried {
        for (l, t) in s.h.iter().enumerate() {
            put_record(&mut records, &format!("state.h/{l}"), t);
            n += 1;
        }
        for (l, t) in s.c.iter().flatten().enumerate() {
            put_record(&mut records, &format!("state.c/{l}"), t);
            n += 1;
        }
    }
    let header = header(c, n);
    let mut out = Vec::with_capacity(records.len() + header.len() + 32);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&records);
    let digest = DIGEST.checksum(&out);
    out.extend_from_slice(&digest.to_le_bytes());
    out
}

/// Writes atomically: a temporary sibling file is renamed over `path`.
pub fn save_checkpoint(path: &Path, c: &Checkpoint) -> Result<()> {
    let io = |source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    };
    let bytes = encode_checkpoint(c);
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(&bytes).map_err(io)?;
        f.sync_all().map_err(io)?;
    }
    fs::rename(&tmp, path).map_err(io)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_checkpoint(&bytes)
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| TrainError::Format("truncated record".into()))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn record(&mut self) -> Result<(String, Tensor<f32>)> {
        let len = self.u32()? as usize;
        let name = std::str::from_utf8(self.take(len)?)
            .map_err(|_| TrainError::Format("record name is not utf-8".into()))?
            .to_string();
        let dtype = self.take(1)?[0];
        if dtype != f32::DTYPE_TAG {
            return Err(TrainError::Format(format!("record {name}: unsupported dtype tag {dtype}")));
        }
        let ndim = self.u32()? as usize;
        if ndim == 0 || ndim > 8 {
            return Err(TrainError::Format(format!("record {name}: bad rank {ndim}")));
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(self.u64()? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| TrainError::Format(format!("record {name}: shape overflow")))?;
        let data = self.take(n)?.chunks_exact(4).map(f32::from_le_slice).collect();
        let t = Tensor::new(&shape, data).map_err(|e| TrainError::Format(format!("record {name}: {e}")))?;
        Ok((name, t))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < MAGIC.len() + 4 + 8 + 8 {
        return Err(TrainError::Format("file is truncated".into()));
    }
    if &bytes[..8] != MAGIC {
        return Err(TrainError::Format("missing SRNNCKPT magic".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    let computed = DIGEST.checksum(body);
    if stored != computed {
        return Err(TrainError::Digest { stored, computed });
    }
    let mut r = Reader { bytes: body, at: 8 };
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(TrainError::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let header_len = r.u64()? as usize;
    let header = std::str::from_utf8(r.take(header_len)?)
        .map_err(|_| TrainError::Format("header is not utf-8".into()))?;
    let mut model_config = ModelConfig::default();
    let mut train_config = TrainConfig::default();
    let mut kv = HashMap::new();
    for line in header.lines() {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| TrainError::Format(format!("header line without '=': {line}")))?;
        if let Some(k) = k.strip_prefix("model.") {
            model_config.set(k, v).map_err(TrainError::Format)?;
        } else if let Some(k) = k.strip_prefix("train.") {
            train_config.set(k, v).map_err(TrainError::Format)?;
        } else {
            kv.insert(k, v);
        }
    }
    let field = |k: &str| -> Result<&str> {
        kv.get(k)
            .copied()
            .ok_or_else(|| TrainError::Format(format!("header lacks {k}")))
    };
    fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
        v.parse().map_err(|_| TrainError::Format(format!("bad header value {k}={v}")))
    }
    let list = |k: &str| -> Result<Vec<&str>> { Ok(field(k)?.split(',').filter(|s| !s.is_empty()).collect()) };

    let seed_hex = field("rng_seed")?;
    if seed_hex.len() != 64 {
        return Err(TrainError::Format("rng_seed must be 32 hex bytes".into()));
    }
    let mut seed = [0u8; 32];
    for (i, b) in seed.iter_mut().enumerate() {
        *b = u8::from_str_radix(&seed_hex[2 * i..2 * i + 2], 16)
            .map_err(|_| TrainError::Format("rng_seed is not hex".into()))?;
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(num("rng_stream", field("rng_stream")?)?);
    rng.set_word_pos(num("rng_word_pos", field("rng_word_pos")?)?);

    let stream = BatchStream::from_parts(
        num("stream_seed", field("stream_seed")?)?,
        num("stream_chunks", field("stream_chunks")?)?,
        num("stream_epoch", field("stream_epoch")?)?,
        num("stream_pos", field("stream_pos")?)?,
    )?;
    let rows = list("rows")?.into_iter().map(|s| num("rows", s)).collect::<Result<Vec<usize>>>()?;
    let mut val_history = Vec::new();
    for item in list("val_history")? {
        let (i, b) = item
            .split_once(':')
            .ok_or_else(|| TrainError::Format(format!("bad val_history entry {item}")))?;
        val_history.push((num("val_history", i)?, num("val_history", b)?));
    }

    let n_records: usize = num("records", field("records")?)?;
    let mut params = ParamStore::new();
    let mut moments: HashMap<String, Tensor<f32>> = HashMap::new();
    let mut h = Vec::new();
    let mut c = Vec::new();
    for _ in 0..n_records {
        let (name, t) = r.record()?;
        if let Some(p) = name.strip_prefix("param/") {
            params
                .insert(p, t)
                .map_err(|e| TrainError::Format(e.to_string()))?;
        } else if name.starts_with("adam.") {
            moments.insert(name, t);
        } else if name.starts_with("state.h/") {
            h.push(t);
        } else if name.starts_with("state.c/") {
            c.push(t);
        } else {
            return Err(TrainError::Format(format!("unknown record {name}")));
        }
    }
    if r.at != body.len() {
        return Err(TrainError::Format("trailing bytes after records".into()));
    }
    let mut adam = Adam::new(&params);
    adam.step = num("adam_step", field("adam_step")?)?;
    for (i, (_, name, _)) in params.iter().enumerate() {
        for (kind, slot) in [("m", &mut adam.m[i]), ("v", &mut adam.v[i])] {
            let key = format!("adam.{kind}/{name}");
            *slot = moments
                .remove(&key)
                .ok_or_else(|| TrainError::Format(format!("missing record {key}")))?;
        }
    }
    if !moments.is_empty() || !adam.matches(&params) {
        return Err(TrainError::Format("optimizer moments do not match parameters".into()));
    }
    let carried = (!h.is_empty()).then(|| RecurrentState {
        h,
        c: (!c.is_empty()).then_some(c),
    });
    Ok(Checkpoint {
        model_config,
        train_config,
        iteration: num("iteration", field("iteration")?)?,
        params,
        adam,
        rng,
        stream,
        rows,
        segment: num("segment", field("segment")?)?,
        carried,
        val_history,
    })
}
