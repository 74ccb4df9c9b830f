// SPDX-License-Identifier: Apache-2.0

//! Delimited text data files with '#' metadata headers and a JSON sidecar.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use mqcspec::spectra::SpectrumSeries;
use serde::Serialize;
use serde_json::{json, Value};

use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Collects written files and metadata for the sidecar.
pub struct RunOutput {
    dir: PathBuf,
    command: String,
    parameters: Value,
    files: Vec<Value>,
}

impl RunOutput {
    pub fn new<P: Serialize>(dir: &Path, command: &str, parameters: &P) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(RunOutput {
            dir: dir.to_path_buf(),
            command: command.into(),
            parameters: serde_json::to_value(parameters).map_err(|e| CliError::Io(e.to_string()))?,
            files: Vec::new(),
        })
    }

    fn header(&self, kind: &str, extra: &[(&str, String)]) -> String {
        let mut h = String::new();
        let _ = writeln!(h, "# mqcspec {kind}");
        let _ = writeln!(h, "# version: {VERSION}");
        let _ = writeln!(h, "# command: {}", self.command);
        if let Value::Object(m) = &self.parameters {
            for (k, v) in m {
                if k != "grid" {
                    let _ = writeln!(h, "# {k}: {v}");
                }
            }
        }
        for (k, v) in extra {
            let _ = writeln!(h, "# {k}: {v}");
        }
        h
    }

    fn write(&mut self, name: &str, text: &str, meta: Value) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        let mut entry = json!({ "file": name });
        if let (Value::Object(e), Value::Object(m)) = (&mut entry, meta) {
            e.extend(m);
        }
        self.files.push(entry);
        Ok(path)
    }

    pub fn series(&mut self, s: &SpectrumSeries) -> Result<PathBuf, CliError> {
        let label = s.label();
        let mut cols = String::from("omega_detuning_over_gamma Re_S Im_S");
        if s.stderr.is_some() {
            cols.push_str(" SE_Re_S SE_Im_S");
        }
        let mut text = self.header(
            "spectrum",
            &[
                ("series", label.clone()),
                ("kappa", s.kappa.to_string()),
                ("channel", s.channel.to_string()),
                ("units", s.units.clone()),
                ("columns", cols),
            ],
        );
        for (i, (w, v)) in s.omega_detuning.iter().zip(&s.values).enumerate() {
            let _ = write!(text, "{w:.6} {:.12e} {:.12e}", v.re, v.im);
            if let Some(se) = &s.stderr {
                let _ = write!(text, " {:.6e} {:.6e}", se[i].re, se[i].im);
            }
            text.push('\n');
        }
        self.write(
            &format!("{label}.dat"),
            &text,
            json!({ "series": label, "kappa": s.kappa, "channel": s.channel.to_string(), "units": s.units }),
        )
    }

    /// Whitespace-separated table with a column header line.
    pub fn table(&mut self, name: &str, kind: &str, columns: &[&str], rows: &[Vec<String>]) -> Result<PathBuf, CliError> {
        let mut text = self.header(kind, &[("columns", columns.join(" "))]);
        for r in rows {
            text.push_str(&r.join(" "));
            text.push('\n');
        }
        self.write(name, &text, json!({ "kind": kind }))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))? + "\n";
        self.write(name, &text, json!({ "kind": "json" }))
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<PathBuf, CliError> {
        self.write(name, body, json!({ "kind": "text" }))
    }

    /// Writes run.json. `created_unix` is the only time-dependent field.
    pub fn finish(self, summary: Value) -> Result<PathBuf, CliError> {
        let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let side = json!({
            "version": VERSION,
            "command": self.command,
            "parameters": self.parameters,
            "files": self.files,
            "summary": summary,
            "created_unix": created,
        });
        let path = self.dir.join("run.json");
        let text = serde_json::to_string_pretty(&side).map_err(|e| CliError::Io(e.to_string()))? + "\n";
        fs::write(&path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}

pub fn fmt_e(v: f64) -> String {
    format!("{v:.10e}")
}
