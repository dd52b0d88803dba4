//! Plain-text record of one invocation: resolved settings, artifacts with
//! their SHA-256 digests, and the outcome.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::failure::Failure;

pub struct Manifest {
    command: String,
    started_unix: u64,
    clock: Instant,
    inputs: Vec<(String, PathBuf)>,
    outputs: Vec<(String, PathBuf)>,
    notes: Vec<(String, String)>,
}

fn file_digest(path: &Path) -> String {
    match fs::read(path) {
        Ok(bytes) => Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect(),
        Err(_) => "unavailable".into(),
    }
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Manifest {
            command: command.to_string(),
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            clock: Instant::now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn input(&mut self, role: &str, path: &Path) {
        self.inputs.push((role.to_string(), path.to_path_buf()));
    }

    pub fn output(&mut self, role: &str, path: &Path) {
        self.outputs.push((role.to_string(), path.to_path_buf()));
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.notes.push((key.to_string(), value.to_string()));
    }

    pub fn render(&self, config: &RunConfig, outcome: &Result<(), Failure>) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command = {}", self.command);
        let _ = writeln!(s, "version = {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "started_unix = {}", self.started_unix);
        let _ = writeln!(s, "elapsed_seconds = {:.3}", self.clock.elapsed().as_secs_f64());
        match outcome {
            Ok(()) => {
                let _ = writeln!(s, "status = ok");
            }
            Err(f) => {
                let _ = writeln!(s, "status = {}", f.kind.as_str());
                let _ = writeln!(s, "exit_code = {}", f.kind.exit_code());
                let _ = writeln!(s, "error = {}", f.message.replace('\n', " "));
            }
        }
        for (k, v) in &self.notes {
            let _ = writeln!(s, "note.{k} = {v}");
        }
        for (role, p) in &self.inputs {
            let _ = writeln!(s, "input.{role} = {} sha256:{}", p.display(), file_digest(p));
        }
        for (role, p) in &self.outputs {
            let _ = writeln!(s, "output.{role} = {} sha256:{}", p.display(), file_digest(p));
        }
        for (k, v) in config.entries() {
            let origin = if config.is_explicit(k) { "set" } else { "default" };
            let _ = writeln!(s, "config.{k} = {v}    # {origin}");
        }
        s
    }

    /// Writes `manifest-<command>.txt` into `dir`.
    pub fn write(&self, dir: &Path, config: &RunConfig, outcome: &Result<(), Failure>) -> std::io::Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(format!("manifest-{}.txt", self.command));
        fs::write(&path, self.render(config, outcome))?;
        Ok(path)
    }
}
