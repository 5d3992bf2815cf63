//! Record/replay of provider traffic.
//!
//! A transcript is NDJSON with one record per request:
//! `{"fp": <hex64>, "req": <canonical request>, "resp": [<text>...]}`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{CompletionRequest, Provider, ProviderError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptRecord {
    pub fp: String,
    pub req: serde_json::Value,
    pub resp: Vec<String>,
}

impl TranscriptRecord {
    pub fn new(req: &CompletionRequest, resp: Vec<String>) -> TranscriptRecord {
        TranscriptRecord {
            fp: req.fingerprint(),
            req: serde_json::from_str(&req.canonical_json()).expect("canonical json parses"),
            resp,
        }
    }
}

/// Forwards to `inner` and appends every successful exchange to a sink.
pub struct RecordingProvider<P> {
    inner: P,
    sink: Mutex<Box<dyn Write + Send>>,
}

impl<P: Provider> RecordingProvider<P> {
    pub fn new(inner: P, sink: Box<dyn Write + Send>) -> Self {
        RecordingProvider {
            inner,
            sink: Mutex::new(sink),
        }
    }

    pub fn to_file(inner: P, path: impl AsRef<Path>) -> std::io::Result<Self> {
        let file = File::create(path)?;
        Ok(Self::new(inner, Box::new(BufWriter::new(file))))
    }

    pub fn flush(&self) -> std::io::Result<()> {
        self.sink.lock().expect("transcript lock").flush()
    }
}

impl<P: Provider> Provider for RecordingProvider<P> {
    fn complete(&self, req: &CompletionRequest) -> Result<Vec<String>, ProviderError> {
        let resp = self.inner.complete(req)?;
        let mut line = serde_json::to_string(&TranscriptRecord::new(req, resp.clone()))
            .expect("record serializes");
        line.push('\n');
        let mut sink = self.sink.lock().expect("transcript lock");
        sink.write_all(line.as_bytes()).map_err(|e| ProviderError::Transport {
            attempts: 1,
            message: format!("writing transcript: {e}"),
        })?;
        Ok(resp)
    }

    fn supports_multi_sample(&self) -> bool {
        self.inner.supports_multi_sample()
    }
}

impl<P> Drop for RecordingProvider<P> {
    fn drop(&mut self) {
        if let Ok(sink) = self.sink.get_mut() {
            let _ = sink.flush();
        }
    }
}

/// Serves recorded responses by request fingerprint. Read-only after load.
#[derive(Debug, Default)]
pub struct ReplayProvider {
    records: HashMap<String, Vec<String>>,
    misses: Mutex<Vec<String>>,
}

impl ReplayProvider {
    pub fn from_records(records: impl IntoIterator<Item = TranscriptRecord>) -> Self {
        let mut map = HashMap::new();
        for r in records {
            // first recording wins for repeated fingerprints
            map.entry(r.fp).or_insert(r.resp);
        }
        ReplayProvider {
            records: map,
            misses: Mutex::default(),
        }
    }

    pub fn from_reader(reader: impl BufRead) -> std::io::Result<Self> {
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: TranscriptRecord = serde_json::from_str(&line).map_err(|e| {
                std::io::Error::new(std::io::ErrorKind::InvalidData, format!("transcript line {}: {e}", i + 1))
            })?;
            records.push(record);
        }
        Ok(Self::from_records(records))
    }

    pub fn from_file(path: impl AsRef<Path>) -> std::io::Result<Self> {
        Self::from_reader(BufReader::new(File::open(path)?))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Fingerprints requested but absent from the transcript, in order.
    pub fn misses(&self) -> Vec<String> {
        self.misses.lock().expect("miss log").clone()
    }
}

impl Provider for ReplayProvider {
    fn complete(&self, req: &CompletionRequest) -> Result<Vec<String>, ProviderError> {
        let fingerprint = req.fingerprint();
        match self.records.get(&fingerprint) {
            Some(resp) => Ok(resp.clone()),
            None => {
                self.misses.lock().expect("miss log").push(fingerprint.clone());
                Err(ProviderError::ReplayMiss { fingerprint })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::providers::{Message, RequestMeta, Role, SamplingProfile, ScriptedProvider, Stage};

    #[derive(Clone, Default)]
    struct Shared(Arc<Mutex<Vec<u8>>>);

    impl Write for Shared {
        fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
            self.0.lock().unwrap().extend_from_slice(buf);
            Ok(buf.len())
        }
        fn flush(&mut self) -> std::io::Result<()> {
            Ok(())
        }
    }

    fn req(text: &str) -> CompletionRequest {
        SamplingProfile::default().request(
            Stage::Generator,
            "m",
            vec![Message::new(Role::User, text)],
            2,
            RequestMeta::default(),
        )
    }

    #[test]
    fn record_then_replay_is_byte_identical() {
        let buf = Shared::default();
        let inner = ScriptedProvider::new(|r: &CompletionRequest| {
            Ok(vec![format!("{}\u{e9}\n\"x\"", r.messages[0].content); r.n_samples])
        });
        let recorder = RecordingProvider::new(inner, Box::new(buf.clone()));
        let a = recorder.complete(&req("a")).unwrap();
        let b = recorder.complete(&req("b")).unwrap();
        drop(recorder);

        let bytes = buf.0.lock().unwrap().clone();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert_eq!(text.lines().count(), 2);
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["fp"].as_str().unwrap(), req("a").fingerprint());

        let replay = ReplayProvider::from_reader(&bytes[..]).unwrap();
        assert_eq!(replay.complete(&req("a")).unwrap(), a);
        assert_eq!(replay.complete(&req("b")).unwrap(), b);
    }

    #[test]
    fn unknown_request_is_a_replay_miss() {
        let replay = ReplayProvider::from_records(vec![TranscriptRecord::new(&req("a"), vec!["x".into(), "y".into()])]);
        let missing = req("other");
        match replay.complete(&missing) {
            Err(ProviderError::ReplayMiss { fingerprint }) => assert_eq!(fingerprint, missing.fingerprint()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_transcript_line_is_rejected() {
        let err = ReplayProvider::from_reader(&b"{\"fp\": 1}\n"[..]).unwrap_err();
        assert_eq!(err.kind(), std::io::ErrorKind::InvalidData);
    }
}
