//! WAV decode/encode and resampling to the canonical pipeline rate.
//!
//! Only integer PCM, 16-bit, mono or stereo is accepted; stereo is downmixed by
//! channel mean. Output files are always canonical minimal mono WAVs so that
//! emitting and re-parsing is a bit-exact round trip.

use thiserror::Error;

/// Everything downstream (fragment lengths, MFCC frame math) assumes this rate;
/// ingested audio is resampled to it before segmentation.
pub const CANONICAL_SAMPLE_RATE_HZ: u32 = 16_000;

const WAVE_FORMAT_PCM: u16 = 1;

/// Decoded mono waveform. Samples are in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WavError {
    #[error("not a RIFF/WAVE file (bad magic)")]
    MissingMagic,
    #[error("unsupported WAV format: tag {format_tag}, {bits} bits, {channels} channels (need PCM tag 1, 16-bit, 1-2 channels)")]
    UnsupportedFormat {
        format_tag: u16,
        bits: u16,
        channels: u16,
    },
    #[error("file truncated: {0}")]
    Truncated(&'static str),
}

/// Parse a RIFF/WAVE byte stream into a mono clip.
///
/// 16-bit sample `v` maps to `v / 32768.0`; stereo frames are averaged. Chunks
/// other than `fmt ` and `data` are skipped.
pub fn parse_wav(bytes: &[u8]) -> Result<AudioClip, WavError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(WavError::MissingMagic);
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // (tag, channels, rate, bits)
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        match id {
            b"fmt " => {
                if size < 16 || body_start + 16 > bytes.len() {
                    return Err(WavError::Truncated("fmt chunk too short"));
                }
                let b = &bytes[body_start..];
                fmt = Some((
                    u16::from_le_bytes([b[0], b[1]]),
                    u16::from_le_bytes([b[2], b[3]]),
                    u32::from_le_bytes([b[4], b[5], b[6], b[7]]),
                    u16::from_le_bytes([b[14], b[15]]),
                ));
            }
            b"data" => {
                if body_start + size > bytes.len() {
                    return Err(WavError::Truncated("data chunk exceeds file size"));
                }
                data = Some(&bytes[body_start..body_start + size]);
            }
            _ => {}
        }
        // Chunks are word-aligned; odd sizes carry a pad byte.
        pos = body_start + size + (size & 1);
    }

    let (format_tag, channels, sample_rate_hz, bits) =
        fmt.ok_or(WavError::Truncated("missing fmt chunk"))?;
    let data = data.ok_or(WavError::Truncated("missing data chunk"))?;
    if format_tag != WAVE_FORMAT_PCM || bits != 16 || !(1..=2).contains(&channels) {
        return Err(WavError::UnsupportedFormat {
            format_tag,
            bits,
            channels,
        });
    }

    let frame_bytes = 2 * channels as usize;
    let samples: Vec<f64> = data
        .chunks_exact(frame_bytes)
        .map(|frame| {
            let mut acc = 0.0;
            for ch in frame.chunks_exact(2) {
                acc += i16::from_le_bytes([ch[0], ch[1]]) as f64 / 32768.0;
            }
            acc / channels as f64
        })
        .collect();

    Ok(AudioClip {
        samples,
        sample_rate_hz,
    })
}

/// Encode a clip as a canonical minimal WAV: RIFF header, 16-byte fmt chunk
/// (PCM, mono, 16-bit), data chunk. Sample `s` maps to
/// `clamp(round(s * 32768), -32768, 32767)`, little-endian.
pub fn emit_wav(clip: &AudioClip) -> Vec<u8> {
    let data_len = (clip.samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&WAVE_FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // channels
    out.extend_from_slice(&clip.sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate_hz * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits per sample
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &clip.samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Linear-interpolation resample. Output sample `i` reads source position
/// `i * src_rate / target_rate`; positions past the last source sample clamp to
/// it. Output length is `floor(src_len * target / src)`.
pub fn resample_linear(clip: &AudioClip, target_rate_hz: u32) -> AudioClip {
    assert!(target_rate_hz > 0);
    if clip.sample_rate_hz == target_rate_hz || clip.samples.is_empty() {
        return AudioClip {
            samples: clip.samples.clone(),
            sample_rate_hz: target_rate_hz,
        };
    }
    let src = &clip.samples;
    let out_len = (src.len() as u64 * target_rate_hz as u64 / clip.sample_rate_hz as u64) as usize;
    let ratio = clip.sample_rate_hz as f64 / target_rate_hz as f64;
    let samples = (0..out_len)
        .map(|i| {
            let pos = i as f64 * ratio;
            let i0 = pos.floor() as usize;
            if i0 + 1 >= src.len() {
                src[src.len() - 1]
            } else {
                let frac = pos - i0 as f64;
                src[i0] * (1.0 - frac) + src[i0 + 1] * frac
            }
        })
        .collect();
    AudioClip {
        samples,
        sample_rate_hz: target_rate_hz,
    }
}
