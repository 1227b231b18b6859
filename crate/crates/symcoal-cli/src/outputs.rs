//! Result files: results.json (machine readable), results.csv (tabular),
//! manifest.json (config echo, seed, versions, content hashes).

use anyhow::Context;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

/// Tabular + structured results accumulated by a command.
pub struct ResultSink {
    pub csv_header: String,
    pub csv_rows: Vec<String>,
    pub json: Value,
    /// extra artifact files: (name, contents)
    pub extra_files: Vec<(String, String)>,
    /// embedded acceptance-style checks all passed
    pub pass: bool,
}

impl ResultSink {
    pub fn new(csv_header: &str) -> Self {
        Self {
            csv_header: csv_header.to_string(),
            csv_rows: Vec::new(),
            json: Value::Null,
            extra_files: Vec::new(),
            pass: true,
        }
    }

    pub fn push_row(&mut self, row: String) {
        self.csv_rows.push(row);
    }
}

pub struct WrittenOutputs {
    pub out_dir: PathBuf,
    pub files: Vec<(String, String)>, // (name, sha256)
}

/// Write results.json / results.csv / extra files / manifest.json.
pub fn write_outputs(
    out_dir: &Path,
    config_echo: &Value,
    seed: u64,
    sink: &ResultSink,
) -> anyhow::Result<WrittenOutputs> {
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let mut files = Vec::new();

    let results_json = serde_json::to_string_pretty(&json!({
        "command": config_echo.get("command").cloned().unwrap_or(Value::Null),
        "pass": sink.pass,
        "results": sink.json,
    }))? + "\n";
    files.push(write_file(out_dir, "results.json", &results_json)?);

    let mut csv = String::new();
    csv.push_str(&sink.csv_header);
    csv.push('\n');
    for row in &sink.csv_rows {
        csv.push_str(row);
        csv.push('\n');
    }
    files.push(write_file(out_dir, "results.csv", &csv)?);

    for (name, contents) in &sink.extra_files {
        files.push(write_file(out_dir, name, contents)?);
    }

    let manifest = serde_json::to_string_pretty(&json!({
        "config": config_echo,
        "master_seed": seed,
        "versions": {
            "symcoal": symcoal_version(),
            "symcoal-cli": env!("CARGO_PKG_VERSION"),
        },
        "outputs": files
            .iter()
            .map(|(name, hash)| json!({"file": name, "sha256": hash}))
            .collect::<Vec<_>>(),
    }))? + "\n";
    fs::write(out_dir.join("manifest.json"), manifest)?;

    Ok(WrittenOutputs {
        out_dir: out_dir.to_path_buf(),
        files,
    })
}

fn symcoal_version() -> &'static str {
    // the library crate version is pinned to this workspace
    env!("CARGO_PKG_VERSION")
}

fn write_file(dir: &Path, name: &str, contents: &str) -> anyhow::Result<(String, String)> {
    fs::write(dir.join(name), contents)
        .with_context(|| format!("writing {}", dir.join(name).display()))?;
    let mut hasher = Sha256::new();
    hasher.update(contents.as_bytes());
    Ok((name.to_string(), hex::encode(hasher.finalize())))
}
