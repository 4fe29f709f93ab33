//! 16-bit mono 8 kHz WAV input and output.

use std::path::Path;

use thiserror::Error;

use crate::vad::SAMPLE_RATE_HZ;

#[derive(Debug, Error)]
pub enum WavError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: hound::Error,
    },
    #[error("{path}: expected 16-bit mono PCM at {SAMPLE_RATE_HZ} Hz, found {bits}-bit {channels}-channel at {rate} Hz")]
    Format {
        path: String,
        bits: u16,
        channels: u16,
        rate: u32,
    },
}

fn spec() -> hound::WavSpec {
    hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE_HZ,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    }
}

pub fn read_wav(path: &Path) -> Result<Vec<i16>, WavError> {
    let io = |source| WavError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut reader = hound::WavReader::open(path).map_err(io)?;
    let s = reader.spec();
    if s.channels != 1 || s.sample_rate != SAMPLE_RATE_HZ || s.bits_per_sample != 16 || s.sample_format != hound::SampleFormat::Int {
        return Err(WavError::Format {
            path: path.display().to_string(),
            bits: s.bits_per_sample,
            channels: s.channels,
            rate: s.sample_rate,
        });
    }
    reader.samples::<i16>().collect::<Result<_, _>>().map_err(io)
}

pub fn write_wav(path: &Path, pcm: &[i16]) -> Result<(), WavError> {
    let io = |source| WavError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = hound::WavWriter::create(path, spec()).map_err(io)?;
    for &x in pcm {
        w.write_sample(x).map_err(io)?;
    }
    w.finalize().map_err(io)
}
