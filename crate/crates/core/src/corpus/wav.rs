use std::io::Cursor;
use std::path::Path;

use hound::{SampleFormat, WavReader};

use super::Waveform;
use crate::error::{Error, Result};

/// Reads a 16-bit PCM mono WAV file. The utterance id is the file stem.
pub fn load_audio(path: &Path) -> Result<Waveform> {
    let bytes = std::fs::read(path)?;
    let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("utt").to_string();
    decode_wav(&bytes, id)
}

/// Decodes in-memory WAV bytes with the same contract as [`load_audio`].
pub fn decode_wav(bytes: &[u8], utterance_id: impl Into<String>) -> Result<Waveform> {
    let reader =
        WavReader::new(Cursor::new(bytes)).map_err(|e| Error::format("wav", e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::UnsupportedEncoding(format!("{} channels", spec.channels)));
    }
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedEncoding(format!(
            "{:?} {}-bit samples",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    if spec.sample_rate == 0 {
        return Err(Error::format("wav", "zero sample rate"));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| f64::from(v) / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::format("wav", e.to_string()))?;
    if samples.is_empty() {
        return Err(Error::EmptyAudio);
    }
    Ok(Waveform { samples, sample_rate: spec.sample_rate, utterance_id: utterance_id.into(), speaker_id: None })
}
