//! Client side of the sandbox worker protocol.
//!
//! The worker reads one JSON request per line on stdin and answers each with
//! one JSON line on stdout, in order:
//!
//! ```text
//! -> {"id": 1, "program": "...", "input": [1, 2], "timeout_ms": 2000}
//! <- {"id": 1, "status": "ok", "output": [2, 1]}
//! <- {"id": 1, "status": "error", "error": "timeout"}
//! ```
//!
//! The worker exits on EOF. The client also enforces a hard deadline of one
//! and a half times the limit: a worker that overruns it, dies, or breaks the
//! protocol is killed and replaced before the next example.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ExecutorConfig, ExecutorError, Prediction, INVALID_OUTPUT_SHAPE};

pub const MEMORY_LIMIT_ENV: &str = "INDUKT_MEMORY_LIMIT_MIB";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkRequest {
    pub id: i64,
    pub program: String,
    pub input: Vec<i64>,
    pub timeout_ms: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkStatus {
    Ok,
    Error,
}

/// A worker reply. `output` is kept as raw JSON so its shape can be checked.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkResponse {
    pub id: i64,
    pub status: WorkStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl WorkResponse {
    /// Flat integer list, or the executor's error text.
    pub fn into_prediction(self) -> Prediction {
        match self.status {
            WorkStatus::Error => Err(self.error.unwrap_or_else(|| "worker error".into())),
            WorkStatus::Ok => {
                let items = self
                    .output
                    .as_ref()
                    .and_then(|v| v.as_array())
                    .ok_or_else(|| INVALID_OUTPUT_SHAPE.to_string())?;
                items
                    .iter()
                    .map(|v| v.as_i64().ok_or_else(|| INVALID_OUTPUT_SHAPE.to_string()))
                    .collect()
            }
        }
    }
}

struct Worker {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    next_id: i64,
}

impl Worker {
    fn spawn(command: &[String], memory_limit_mib: u64) -> std::io::Result<Worker> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty command"))?;
        let mut child = Command::new(program)
            .args(args)
            .env(MEMORY_LIMIT_ENV, memory_limit_mib.to_string())
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Worker {
            child,
            stdin,
            lines: rx,
            next_id: 1,
        })
    }

    /// `Err` means the worker can no longer be trusted and must be replaced.
    fn request(&mut self, program: &str, input: &[i64], timeout_ms: u64) -> Result<Prediction, String> {
        let id = self.next_id;
        self.next_id += 1;
        let req = WorkRequest {
            id,
            program: program.to_string(),
            input: input.to_vec(),
            timeout_ms,
        };
        let mut line = serde_json::to_string(&req).expect("request serializes");
        line.push('\n');
        if self.stdin.write_all(line.as_bytes()).and_then(|_| self.stdin.flush()).is_err() {
            return Err("worker crashed".into());
        }
        let deadline = Duration::from_millis(timeout_ms + timeout_ms / 2);
        let reply = match self.lines.recv_timeout(deadline) {
            Ok(Ok(reply)) => reply,
            Ok(Err(_)) | Err(RecvTimeoutError::Disconnected) => return Err("worker crashed".into()),
            Err(RecvTimeoutError::Timeout) => return Err("timeout".into()),
        };
        let response: WorkResponse =
            serde_json::from_str(&reply).map_err(|_| "protocol violation: response is not valid JSON".to_string())?;
        if response.id != id {
            return Err(format!("protocol violation: expected id {id}, got {}", response.id));
        }
        Ok(response.into_prediction())
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Spawns workers on demand, at most `max_workers` alive at once.
pub struct SandboxPool {
    command: Vec<String>,
    memory_limit_mib: u64,
    max_workers: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a SandboxPool);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.active.lock().expect("pool lock") -= 1;
        self.0.freed.notify_one();
    }
}

impl SandboxPool {
    pub fn new(config: &ExecutorConfig) -> SandboxPool {
        SandboxPool {
            command: config.sandbox_command.clone(),
            memory_limit_mib: config.memory_limit_mib,
            max_workers: config.max_workers,
            active: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn permit(&self) -> Permit<'_> {
        let mut active = self.active.lock().expect("pool lock");
        while *active >= self.max_workers {
            active = self.freed.wait(active).expect("pool lock");
        }
        *active += 1;
        Permit(self)
    }

    fn spawn(&self) -> Result<Worker, ExecutorError> {
        Worker::spawn(&self.command, self.memory_limit_mib)
            .map_err(|e| ExecutorError::SandboxUnavailable(format!("{}: {e}", self.command.join(" "))))
    }

    /// Runs `program` on each input with one worker, replacing it whenever
    /// it times out, crashes, or breaks protocol.
    pub fn run(&self, program: &str, inputs: &[&[i64]], timeout_ms: u64) -> Result<Vec<Prediction>, ExecutorError> {
        let _permit = self.permit();
        let mut worker: Option<Worker> = None;
        let mut out = Vec::with_capacity(inputs.len());
        for input in inputs {
            let w = match worker.as_mut() {
                Some(w) => w,
                None => worker.insert(self.spawn()?),
            };
            match w.request(program, input, timeout_ms) {
                Ok(prediction) => out.push(prediction),
                Err(failure) => {
                    worker = None;
                    out.push(Err(failure));
                }
            }
        }
        Ok(out)
    }
}
