//! Multichannel waveforms and RIFF/WAVE input/output.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{invalid, Error, Result};

/// PCM-16 full-scale divisor.
pub const PCM16_SCALE: f64 = 32768.0;

/// Time-domain audio, one sample sequence per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelWaveform {
    channels: Vec<Vec<f64>>,
    sample_rate: u32,
}

/// Sample encoding used when writing a WAV file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    Pcm16,
    Float32,
}

impl MultichannelWaveform {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return invalid("sample rate must be positive");
        }
        if let Some(first) = channels.first() {
            let n = first.len();
            if channels.iter().any(|c| c.len() != n) {
                return Err(Error::ShapeMismatch(
                    "channels must have identical length".into(),
                ));
            }
        }
        if channels.iter().flatten().any(|x| !x.is_finite()) {
            return invalid("waveform contains non-finite samples");
        }
        Ok(Self {
            channels,
            sample_rate,
        })
    }

    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::new(vec![samples], sample_rate)
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0 || self.channels.is_empty()
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.channels[i]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    pub fn duration_secs(&self) -> f64 {
        self.len() as f64 / f64::from(self.sample_rate)
    }

    /// Mean power over every sample of every channel.
    pub fn power(&self) -> f64 {
        let n = self.len() * self.num_channels();
        if n == 0 {
            return 0.0;
        }
        self.channels.iter().flatten().map(|x| x * x).sum::<f64>() / n as f64
    }

    /// Selects a single channel.
    pub fn to_mono(&self, channel_index: usize) -> Result<Self> {
        if channel_index >= self.num_channels() {
            return invalid(format!(
                "channel index {channel_index} out of range for {} channels",
                self.num_channels()
            ));
        }
        Ok(Self {
            channels: vec![self.channels[channel_index].clone()],
            sample_rate: self.sample_rate,
        })
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            channels: self
                .channels
                .iter()
                .map(|c| c.iter().map(|x| x * gain).collect())
                .collect(),
            sample_rate: self.sample_rate,
        }
    }
}

/// Convenience wrapper around [`MultichannelWaveform::to_mono`].
pub fn to_mono(w: &MultichannelWaveform, channel_index: usize) -> Result<MultichannelWaveform> {
    w.to_mono(channel_index)
}

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

struct FmtChunk {
    format: u16,
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

/// Decodes a RIFF/WAVE byte buffer.
pub fn decode_wav(bytes: &[u8]) -> Result<MultichannelWaveform> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Malformed("missing RIFF/WAVE header".into()));
    }
    let mut pos = 12;
    let mut fmt: Option<FmtChunk> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body = pos + 8;
        match id {
            b"fmt " => {
                if size < 16 || body + size > bytes.len() {
                    return Err(Error::Truncated("fmt chunk".into()));
                }
                let mut format = u16_at(bytes, body);
                if format == FORMAT_EXTENSIBLE && size >= 40 {
                    // sub-format GUID starts with the plain format tag
                    format = u16_at(bytes, body + 24);
                }
                fmt = Some(FmtChunk {
                    format,
                    channels: u16_at(bytes, body + 2),
                    sample_rate: u32_at(bytes, body + 4),
                    bits: u16_at(bytes, body + 14),
                });
            }
            b"data" => {
                let end = body + size;
                if end > bytes.len() {
                    return Err(Error::Truncated(format!(
                        "data chunk declares {size} bytes, {} present",
                        bytes.len() - body
                    )));
                }
                data = Some(&bytes[body..end]);
                break;
            }
            _ => {}
        }
        // chunks are word aligned
        pos = body + size + (size & 1);
    }
    let fmt = fmt.ok_or_else(|| Error::Malformed("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::Malformed("no data chunk".into()))?;
    let nch = usize::from(fmt.channels);
    if !(1..=8).contains(&nch) {
        return Err(Error::UnsupportedEncoding(format!("{nch} channels")));
    }
    if fmt.sample_rate == 0 {
        return Err(Error::Malformed("zero sample rate".into()));
    }
    let width = match (fmt.format, fmt.bits) {
        (FORMAT_PCM, 16) => 2,
        (FORMAT_FLOAT, 32) => 4,
        (f, b) => {
            return Err(Error::UnsupportedEncoding(format!(
                "format tag {f} with {b} bits per sample"
            )))
        }
    };
    let frame = width * nch;
    if data.len() % frame != 0 {
        return Err(Error::Truncated(format!(
            "data chunk of {} bytes is not a whole number of {frame}-byte frames",
            data.len()
        )));
    }
    let frames = data.len() / frame;
    let mut channels = vec![Vec::with_capacity(frames); nch];
    for (i, chunk) in data.chunks_exact(width).enumerate() {
        let v = if width == 2 {
            f64::from(i16::from_le_bytes([chunk[0], chunk[1]])) / PCM16_SCALE
        } else {
            f64::from(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]))
        };
        channels[i % nch].push(v);
    }
    MultichannelWaveform::new(channels, fmt.sample_rate)
}

/// Reads a PCM-16 or float-32 WAV file.
pub fn read_wav(path: impl AsRef<Path>) -> Result<MultichannelWaveform> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    decode_wav(&bytes)
}

/// Quantizes one sample to PCM-16 with saturation.
pub fn quantize_pcm16(x: f64) -> i16 {
    let v = (x * PCM16_SCALE).round();
    v.clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16
}

/// Encodes a waveform as a RIFF/WAVE byte buffer.
pub fn encode_wav(w: &MultichannelWaveform, encoding: Encoding) -> Result<Vec<u8>> {
    if w.is_empty() {
        return invalid("cannot write an empty waveform");
    }
    let nch = w.num_channels();
    if nch > 8 {
        return Err(Error::UnsupportedEncoding(format!("{nch} channels")));
    }
    let (tag, width) = match encoding {
        Encoding::Pcm16 => (FORMAT_PCM, 2u16),
        Encoding::Float32 => (FORMAT_FLOAT, 4u16),
    };
    let data_len = w.len() * nch * usize::from(width);
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&(nch as u16).to_le_bytes());
    out.extend_from_slice(&w.sample_rate().to_le_bytes());
    let block = nch as u16 * width;
    out.extend_from_slice(&(w.sample_rate() * u32::from(block)).to_le_bytes());
    out.extend_from_slice(&block.to_le_bytes());
    out.extend_from_slice(&(width * 8).to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for i in 0..w.len() {
        for c in 0..nch {
            let x = w.channel(c)[i];
            match encoding {
                Encoding::Pcm16 => out.extend_from_slice(&quantize_pcm16(x).to_le_bytes()),
                Encoding::Float32 => {
                    let v = x as f32;
                    if !v.is_finite() {
                        return invalid("sample overflows float32");
                    }
                    out.extend_from_slice(&v.to_le_bytes())
                }
            }
        }
    }
    Ok(out)
}

/// Writes a WAV file.
pub fn write_wav(w: &MultichannelWaveform, path: impl AsRef<Path>, encoding: Encoding) -> Result<()> {
    let bytes = encode_wav(w, encoding)?;
    let mut f = fs::File::create(path.as_ref())?;
    f.write_all(&bytes)?;
    Ok(())
}
