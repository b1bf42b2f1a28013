//! Report persistence: data files with digests, the run manifest and the
//! optional plotting script.

use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::settings::{Format, Settings};
use crate::Failure;

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Serialize)]
pub struct Timing {
    pub operation: String,
    pub seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: &'static str,
    pub config: Settings,
    pub wall_time_seconds: f64,
    pub timings: Vec<Timing>,
    pub warnings: Vec<String>,
    /// Scalar results worth surfacing without opening the data files.
    pub summary: serde_json::Map<String, serde_json::Value>,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(data: &[u8]) -> String {
    Sha256::digest(data)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Collects files, timings and warnings for one run; the manifest is written last.
pub struct Recorder {
    dir: PathBuf,
    pub format: Format,
    started: Instant,
    manifest: RunManifest,
}

impl Recorder {
    pub fn new(command: &str, config: &Settings) -> Result<Self, Failure> {
        let dir = config
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from("qps-out"));
        std::fs::create_dir_all(&dir)
            .map_err(|e| Failure::Config(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir,
            format: config.format.unwrap_or(Format::Csv),
            started: Instant::now(),
            manifest: RunManifest {
                command: command.to_string(),
                version: env!("CARGO_PKG_VERSION"),
                config: config.clone(),
                wall_time_seconds: 0.0,
                timings: Vec::new(),
                warnings: Vec::new(),
                summary: serde_json::Map::new(),
                files: Vec::new(),
            },
        })
    }

    pub fn write(&mut self, name: &str, data: &[u8]) -> Result<(), Failure> {
        let path = self.dir.join(name);
        std::fs::write(&path, data)
            .map_err(|e| Failure::Numerical(format!("cannot write {}: {e}", path.display())))?;
        self.manifest.files.push(FileEntry {
            path: name.to_string(),
            sha256: sha256_hex(data),
            bytes: data.len(),
        });
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| Failure::Numerical(format!("serializing {name}: {e}")))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// `stem.csv` or `stem.json` depending on the output format.
    pub fn write_table(
        &mut self,
        stem: &str,
        csv: impl FnOnce() -> String,
        json: &impl Serialize,
    ) -> Result<(), Failure> {
        match self.format {
            Format::Csv => self.write(&format!("{stem}.csv"), csv().as_bytes()),
            Format::Json => self.write_json(&format!("{stem}.json"), json),
        }
    }

    pub fn time<T>(&mut self, operation: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.manifest.timings.push(Timing {
            operation: operation.to_string(),
            seconds: t.elapsed().as_secs_f64(),
        });
        out
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        let message = message.into();
        eprintln!("warning: {message}");
        self.manifest.warnings.push(message);
    }

    pub fn summary(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.manifest.summary.insert(key.to_string(), v);
    }

    pub fn finish(mut self, emit_plot: bool) -> Result<PathBuf, Failure> {
        if emit_plot {
            self.write("plot.py", PLOT_SCRIPT.as_bytes())?;
        }
        self.manifest.wall_time_seconds = self.started.elapsed().as_secs_f64();
        let path = self.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&self.manifest)
            .map_err(|e| Failure::Numerical(format!("serializing manifest: {e}")))?;
        std::fs::write(&path, text + "\n")
            .map_err(|e| Failure::Numerical(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}

const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Plot every CSV listed in manifest.json: first column against the rest."""
import csv
import json
import pathlib
import sys

here = pathlib.Path(__file__).resolve().parent
manifest = json.loads((here / "manifest.json").read_text())
try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    sys.exit("matplotlib is required to render plots")

for entry in manifest["files"]:
    name = entry["path"]
    if not name.endswith(".csv"):
        continue
    with open(here / name) as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if not body:
        continue
    xs = [float(r[0]) for r in body]
    fig, ax = plt.subplots()
    for col in range(1, len(header)):
        try:
            ys = [float(r[col]) for r in body]
        except ValueError:
            continue
        ax.plot(xs, ys, label=header[col])
    ax.set_xlabel(header[0])
    ax.legend()
    fig.savefig(here / (name[:-4] + ".png"), dpi=120)
    plt.close(fig)
"#;
