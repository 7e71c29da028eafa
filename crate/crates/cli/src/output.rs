//! Versioned JSON envelope. Everything nondeterministic lives under `telemetry`.

use std::fs;
use std::path::Path;
use std::time::Duration;

use anyhow::{Context, Result};
use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct Telemetry {
    pub wall_time_seconds: f64,
    pub workers: usize,
}

#[derive(Debug, Serialize)]
pub struct Envelope<T: Serialize> {
    pub schema_version: u32,
    pub command: &'static str,
    pub result: T,
    pub telemetry: Telemetry,
}

impl<T: Serialize> Envelope<T> {
    pub fn new(command: &'static str, result: T, elapsed: Duration) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command,
            result,
            telemetry: Telemetry { wall_time_seconds: elapsed.as_secs_f64(), workers: rayon::current_num_threads() },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// Prints to stdout and, when an output directory is given, writes `<name>` there.
    pub fn emit(&self, out: Option<&Path>, name: &str) -> Result<()> {
        let json = self.to_json();
        println!("{json}");
        if let Some(dir) = out {
            write_file(&dir.join(name), &json)?;
        }
        Ok(())
    }
}

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, format!("{text}\n")).with_context(|| format!("writing {}", path.display()))
}
