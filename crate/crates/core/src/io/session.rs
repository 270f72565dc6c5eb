//! Session files: a magic line, a one-line JSON header, then little-endian
//! payload: `f32` EMG `[T × 2 × 16]` followed by `(u64 timestamp, u32 key)`
//! label records.

use std::path::Path;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{RawEmgWindow, NUM_BANDS, NUM_CHANNELS, SAMPLE_RATE_HZ};

pub const SESSION_MAGIC: &str = "EMGTYPE-SESSION v1";
const LABEL_BYTES: usize = 12;
const SAMPLE_BYTES: usize = 4 * NUM_BANDS * NUM_CHANNELS;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    #[default]
    Train,
    TrainDomainVal,
    OtherDomainVal,
    TestDomainVal,
    TestDomainTest,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionHeader {
    pub participant_id: String,
    pub session_id: String,
    pub split: Split,
    pub sample_rate_hz: u32,
    pub num_samples: u64,
    pub num_labels: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyEvent {
    /// Sample index of the key press.
    pub timestamp: u64,
    pub key: char,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SessionRecord {
    pub participant_id: String,
    pub session_id: String,
    pub split: Split,
    pub emg: RawEmgWindow,
    pub labels: Vec<KeyEvent>,
}

impl SessionRecord {
    pub fn header(&self) -> SessionHeader {
        SessionHeader {
            participant_id: self.participant_id.clone(),
            session_id: self.session_id.clone(),
            split: self.split,
            sample_rate_hz: self.emg.sample_rate_hz,
            num_samples: self.emg.len() as u64,
            num_labels: self.labels.len() as u64,
        }
    }

    pub fn keys(&self) -> Vec<char> {
        self.labels.iter().map(|l| l.key).collect()
    }

    pub fn text(&self) -> String {
        self.labels.iter().map(|l| l.key).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.emg.sample_rate_hz != SAMPLE_RATE_HZ {
            return Err(Error::UnsupportedSampleRate(self.emg.sample_rate_hz));
        }
        check_timestamps(&self.labels, self.emg.len() as u64)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let header = serde_json::to_string(&self.header())
            .map_err(|e| Error::MalformedHeader(e.to_string()))?;
        let mut out = Vec::with_capacity(
            SESSION_MAGIC.len() + header.len() + 2 + self.emg.len() * SAMPLE_BYTES + self.labels.len() * LABEL_BYTES,
        );
        out.extend_from_slice(SESSION_MAGIC.as_bytes());
        out.push(b'\n');
        out.extend_from_slice(header.as_bytes());
        out.push(b'\n');
        for v in self.emg.samples.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for l in &self.labels {
            out.extend_from_slice(&l.timestamp.to_le_bytes());
            out.extend_from_slice(&(l.key as u32).to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (magic, rest) = split_line(bytes).ok_or_else(|| Error::BadMagic("missing magic line".into()))?;
        if magic != SESSION_MAGIC.as_bytes() {
            return Err(Error::BadMagic(String::from_utf8_lossy(magic).into_owned()));
        }
        let (header, payload) =
            split_line(rest).ok_or_else(|| Error::MalformedHeader("missing header line".into()))?;
        let header: SessionHeader =
            serde_json::from_slice(header).map_err(|e| Error::MalformedHeader(e.to_string()))?;
        if header.sample_rate_hz != SAMPLE_RATE_HZ {
            return Err(Error::UnsupportedSampleRate(header.sample_rate_hz));
        }
        let t = usize::try_from(header.num_samples).map_err(|_| Error::MalformedHeader("num_samples".into()))?;
        let l = usize::try_from(header.num_labels).map_err(|_| Error::MalformedHeader("num_labels".into()))?;
        let expected = t
            .checked_mul(SAMPLE_BYTES)
            .and_then(|e| l.checked_mul(LABEL_BYTES).and_then(|b| e.checked_add(b)))
            .ok_or_else(|| Error::MalformedHeader("payload size overflows".into()))?;
        if payload.len() < expected {
            return Err(Error::Truncated {
                expected,
                actual: payload.len(),
            });
        }
        if payload.len() > expected {
            return Err(Error::MalformedHeader(format!(
                "{} trailing bytes after payload of {expected}",
                payload.len() - expected
            )));
        }
        let (emg_bytes, label_bytes) = payload.split_at(t * SAMPLE_BYTES);
        let values: Vec<f32> = emg_bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let samples = Array3::from_shape_vec((t, NUM_BANDS, NUM_CHANNELS), values).expect("sized above");
        let labels = label_bytes
            .chunks_exact(LABEL_BYTES)
            .enumerate()
            .map(|(index, c)| {
                let timestamp = u64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
                let code = u32::from_le_bytes(c[8..].try_into().expect("4 bytes"));
                let key = char::from_u32(code)
                    .ok_or_else(|| Error::MalformedHeader(format!("label {index} has invalid key code {code:#x}")))?;
                Ok(KeyEvent { timestamp, key })
            })
            .collect::<Result<Vec<_>>>()?;
        check_timestamps(&labels, t as u64)?;
        Ok(Self {
            participant_id: header.participant_id,
            session_id: header.session_id,
            split: header.split,
            emg: RawEmgWindow::new(samples, header.sample_rate_hz)?,
            labels,
        })
    }
}

fn split_line(bytes: &[u8]) -> Option<(&[u8], &[u8])> {
    let i = bytes.iter().position(|&b| b == b'\n')?;
    Some((&bytes[..i], &bytes[i + 1..]))
}

fn check_timestamps(labels: &[KeyEvent], num_samples: u64) -> Result<()> {
    let mut prev: Option<u64> = None;
    for (index, l) in labels.iter().enumerate() {
        if prev.is_some_and(|p| l.timestamp <= p) || l.timestamp >= num_samples {
            return Err(Error::BadTimestamps { index });
        }
        prev = Some(l.timestamp);
    }
    Ok(())
}

pub fn read_session(path: impl AsRef<Path>) -> Result<SessionRecord> {
    SessionRecord::from_bytes(&std::fs::read(path)?)
}

pub fn write_session(record: &SessionRecord, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, record.to_bytes()?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record() -> SessionRecord {
        let mut emg = RawEmgWindow::zeros(40);
        for (i, v) in emg.samples.iter_mut().enumerate() {
            *v = (i as f32 * 0.37).sin();
        }
        SessionRecord {
            participant_id: "p0".into(),
            session_id: "s0".into(),
            split: Split::TestDomainTest,
            emg,
            labels: vec![
                KeyEvent { timestamp: 3, key: 'h' },
                KeyEvent { timestamp: 20, key: '⌫' },
            ],
        }
    }

    #[test]
    fn round_trip() {
        let r = record();
        let bytes = r.to_bytes().unwrap();
        let back = SessionRecord::from_bytes(&bytes).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn truncated_payload() {
        let bytes = record().to_bytes().unwrap();
        let err = SessionRecord::from_bytes(&bytes[..bytes.len() - 5]).unwrap_err();
        match err {
            Error::Truncated { expected, actual } => assert_eq!(expected, actual + 5),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn bad_magic() {
        let mut bytes = record().to_bytes().unwrap();
        bytes[0] = b'X';
        assert!(matches!(SessionRecord::from_bytes(&bytes), Err(Error::BadMagic(_))));
    }

    #[test]
    fn unsupported_rate() {
        let mut bytes = record().to_bytes().unwrap();
        let needle = b"\"sample_rate_hz\":2000";
        let at = bytes.windows(needle.len()).position(|w| w == needle).unwrap();
        bytes[at + needle.len() - 4] = b'1';
        let err = SessionRecord::from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("unsupported sample rate"));
    }

    #[test]
    fn timestamps_must_increase() {
        let mut r = record();
        r.labels[1].timestamp = 3;
        assert!(matches!(r.to_bytes(), Err(Error::BadTimestamps { index: 1 })));
        r.labels[1].timestamp = 40;
        assert!(matches!(r.to_bytes(), Err(Error::BadTimestamps { index: 1 })));
    }
}
