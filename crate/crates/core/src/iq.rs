//! IQ capture files: little-endian `f32` interleaved I/Q samples with a JSON
//! sidecar holding `sample_rate_hz`, `center_freq_hz`, and optional `label`
//! and `timestamp` fields.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex32;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::IqRecording;

/// Bytes per complex sample on disk.
pub const RECORD_BYTES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IqMetadata {
    pub sample_rate_hz: f64,
    pub center_freq_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

/// Sidecar path used when none is given: `capture.iq` -> `capture.iq.json`.
pub fn default_meta_path(data_path: &Path) -> PathBuf {
    let mut s = data_path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn load_iq(path: &Path, meta_path: &Path) -> Result<IqRecording> {
    let meta_text = std::fs::read_to_string(meta_path).map_err(|e| Error::io(meta_path, e))?;
    let meta: IqMetadata =
        serde_json::from_str(&meta_text).map_err(|e| Error::Metadata(e.to_string()))?;
    if !(meta.sample_rate_hz.is_finite() && meta.sample_rate_hz > 0.0) {
        return Err(Error::Metadata(format!(
            "sample_rate_hz must be positive, got {}",
            meta.sample_rate_hz
        )));
    }

    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let bytes = file.metadata().map_err(|e| Error::io(path, e))?.len();
    if bytes % RECORD_BYTES as u64 != 0 {
        return Err(Error::TruncatedRecord { bytes });
    }
    let mut raw = Vec::with_capacity(bytes as usize);
    BufReader::new(file)
        .read_to_end(&mut raw)
        .map_err(|e| Error::io(path, e))?;
    if raw.len() % RECORD_BYTES != 0 {
        return Err(Error::TruncatedRecord {
            bytes: raw.len() as u64,
        });
    }

    let samples = raw
        .chunks_exact(RECORD_BYTES)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            Complex32::new(re, im)
        })
        .collect();
    IqRecording::new(
        samples,
        meta.sample_rate_hz,
        meta.center_freq_hz,
        meta.label,
    )
}

pub fn save_iq(rec: &IqRecording, path: &Path, meta_path: &Path) -> Result<()> {
    if rec.is_empty() {
        return Err(Error::InvalidRecording("no samples".into()));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for s in rec.samples() {
        out.write_all(&s.re.to_le_bytes())
            .and_then(|_| out.write_all(&s.im.to_le_bytes()))
            .map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))?;

    let meta = IqMetadata {
        sample_rate_hz: rec.sample_rate_hz(),
        center_freq_hz: rec.center_freq_hz(),
        label: rec.label().map(str::to_owned),
        timestamp: None,
    };
    let text = serde_json::to_string_pretty(&meta)?;
    std::fs::write(meta_path, text).map_err(|e| Error::io(meta_path, e))?;
    Ok(())
}
