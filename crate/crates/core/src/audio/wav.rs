use std::fs;
use std::path::Path;

use super::{AudioBuffer, AudioError, Result};

const PCM_FORMAT_TAG: u16 = 1;
const BITS_PER_SAMPLE: u16 = 16;
const PCM_SCALE: f32 = 32768.0;

/// Reads a 16-bit mono PCM WAV file. Frames are mapped to [-1, 1) by dividing by 32768.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| AudioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_wav(&bytes)
}

/// Writes `buffer` as a 16-bit mono PCM WAV file.
pub fn write_wav(buffer: &AudioBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_wav(buffer)?;
    fs::write(path, bytes).map_err(|source| AudioError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn read_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

struct Fmt {
    channels: u16,
    sample_rate: u32,
}

pub fn decode_wav(bytes: &[u8]) -> Result<AudioBuffer> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(AudioError::Format("missing RIFF/WAVE signature".into()));
    }
    let mut fmt: Option<Fmt> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = read_u32(bytes, pos + 4) as usize;
        let body = pos + 8;
        let end = body
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| {
                AudioError::Format(format!(
                    "chunk '{}' overruns the file",
                    String::from_utf8_lossy(id)
                ))
            })?;
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(AudioError::Format(format!("fmt chunk too short ({size} bytes)")));
                }
                let tag = read_u16(bytes, body);
                let channels = read_u16(bytes, body + 2);
                let sample_rate = read_u32(bytes, body + 4);
                let bits = read_u16(bytes, body + 14);
                if tag != PCM_FORMAT_TAG {
                    return Err(AudioError::Unsupported {
                        field: "format_tag",
                        value: tag as u32,
                    });
                }
                if channels != 1 {
                    return Err(AudioError::Unsupported {
                        field: "channels",
                        value: channels as u32,
                    });
                }
                if bits != BITS_PER_SAMPLE {
                    return Err(AudioError::Unsupported {
                        field: "bits_per_sample",
                        value: bits as u32,
                    });
                }
                if sample_rate == 0 {
                    return Err(AudioError::Format("sample rate is zero".into()));
                }
                fmt = Some(Fmt {
                    channels,
                    sample_rate,
                });
            }
            b"data" => {
                let fmt = fmt
                    .as_ref()
                    .ok_or_else(|| AudioError::Format("data chunk precedes fmt chunk".into()))?;
                debug_assert_eq!(fmt.channels, 1);
                if size % 2 != 0 {
                    return Err(AudioError::Format("odd data length for 16-bit frames".into()));
                }
                let samples = bytes[body..end]
                    .chunks_exact(2)
                    .map(|f| i16::from_le_bytes([f[0], f[1]]) as f32 / PCM_SCALE)
                    .collect();
                return AudioBuffer::new(samples, fmt.sample_rate);
            }
            _ => {}
        }
        // chunks are word aligned
        pos = end + (size & 1);
    }
    Err(AudioError::Format(
        if fmt.is_some() { "no data chunk" } else { "no fmt chunk" }.into(),
    ))
}

fn to_pcm(x: f32) -> i16 {
    (x.clamp(-1.0, 1.0) * PCM_SCALE)
        .round()
        .clamp(i16::MIN as f32, i16::MAX as f32) as i16
}

pub fn encode_wav(buffer: &AudioBuffer) -> Result<Vec<u8>> {
    if buffer.is_empty() {
        return Err(AudioError::InvalidBuffer("cannot write an empty buffer".into()));
    }
    let data_len = u32::try_from(buffer.len() * 2)
        .ok()
        .filter(|n| *n <= u32::MAX - 36)
        .ok_or_else(|| AudioError::InvalidBuffer("buffer too long for a RIFF file".into()))?;
    let rate = buffer.sample_rate();
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&PCM_FORMAT_TAG.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&BITS_PER_SAMPLE.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in buffer.samples() {
        out.extend_from_slice(&to_pcm(s).to_le_bytes());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw_wav(channels: u16, bits: u16, rate: u32, frames: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36 + frames.len() as u32).to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&rate.to_le_bytes());
        let block = channels * bits / 8;
        out.extend_from_slice(&(rate * block as u32).to_le_bytes());
        out.extend_from_slice(&block.to_le_bytes());
        out.extend_from_slice(&bits.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&(frames.len() as u32).to_le_bytes());
        out.extend_from_slice(frames);
        out
    }

    fn pcm16(frames: &[i16]) -> Vec<u8> {
        frames.iter().flat_map(|f| f.to_le_bytes()).collect()
    }

    #[test]
    fn decodes_linear_pcm_scaling() {
        let wav = raw_wav(1, 16, 16000, &pcm16(&[0, 16384, -32768]));
        let buf = decode_wav(&wav).unwrap();
        assert_eq!(buf.samples(), &[0.0, 0.5, -1.0]);
        assert_eq!(buf.sample_rate(), 16000);
    }

    #[test]
    fn one_second_at_16k() {
        let wav = raw_wav(1, 16, 16000, &pcm16(&vec![7; 16000]));
        assert_eq!(decode_wav(&wav).unwrap().len(), 16000);
    }

    #[test]
    fn rejects_8_bit_and_stereo() {
        let err = decode_wav(&raw_wav(1, 8, 16000, &[1, 2, 3])).unwrap_err();
        assert!(matches!(
            err,
            AudioError::Unsupported {
                field: "bits_per_sample",
                value: 8
            }
        ));
        let err = decode_wav(&raw_wav(2, 16, 16000, &pcm16(&[1, 2]))).unwrap_err();
        assert!(matches!(err, AudioError::Unsupported { field: "channels", .. }));
    }

    #[test]
    fn rejects_malformed_headers() {
        assert!(matches!(decode_wav(b"RIFX"), Err(AudioError::Format(_))));
        let mut wav = raw_wav(1, 16, 16000, &pcm16(&[1, 2]));
        wav.truncate(wav.len() - 2);
        assert!(matches!(decode_wav(&wav), Err(AudioError::Format(_))));
    }

    #[test]
    fn skips_unknown_chunks() {
        let mut wav = raw_wav(1, 16, 8000, &pcm16(&[100]));
        let data_at = wav.len() - 10;
        let list = [b"LIST".as_slice(), &3u32.to_le_bytes(), b"abc\0"].concat();
        wav.splice(data_at..data_at, list);
        assert_eq!(decode_wav(&wav).unwrap().samples(), &[100.0 / 32768.0]);
    }

    #[test]
    fn encodes_and_clamps() {
        let frames = |xs: Vec<f32>| {
            let bytes = encode_wav(&AudioBuffer::new(xs, 16000).unwrap()).unwrap();
            bytes[44..]
                .chunks_exact(2)
                .map(|f| i16::from_le_bytes([f[0], f[1]]))
                .collect::<Vec<_>>()
        };
        assert_eq!(frames(vec![0.0]), vec![0]);
        assert_eq!(frames(vec![2.0]), vec![32767]);
        assert_eq!(frames(vec![-3.0, 1.0, 0.5]), vec![-32768, 32767, 16384]);
    }

    #[test]
    fn empty_buffer_is_rejected() {
        let buf = AudioBuffer::new(vec![], 16000).unwrap();
        assert!(encode_wav(&buf).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let buf = AudioBuffer::new(vec![0.25, -0.125, 0.999], 22050).unwrap();
        write_wav(&buf, &path).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate(), 22050);
        for (a, b) in buf.samples().iter().zip(back.samples()) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let buf = AudioBuffer::new(vec![0.0], 16000).unwrap();
        let err = write_wav(&buf, "/nonexistent-dir/x.wav").unwrap_err();
        assert!(matches!(err, AudioError::Io { .. }));
    }

    proptest! {
        #[test]
        fn round_trip_error_is_bounded(xs in prop::collection::vec(-1.0f32..=1.0, 1..64)) {
            let buf = AudioBuffer::new(xs.clone(), 16000).unwrap();
            let back = decode_wav(&encode_wav(&buf).unwrap()).unwrap();
            for (a, b) in xs.iter().zip(back.samples()) {
                prop_assert!((a - b).abs() <= 1.0 / 32768.0);
            }
        }

        #[test]
        fn requantized_buffers_are_bitwise_stable(frames in prop::collection::vec(any::<i16>(), 1..64)) {
            let wav = raw_wav(1, 16, 16000, &pcm16(&frames));
            let buf = decode_wav(&wav).unwrap();
            prop_assert_eq!(encode_wav(&buf).unwrap(), wav);
        }
    }
}
