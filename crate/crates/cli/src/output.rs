//! Output files with a metadata header.
//!
//! CSV files start with `#` comment lines; JSON files wrap the payload as
//! `{"meta": {...}, "data": ...}`. The `created_unix` field is the only one
//! that changes between identical runs.

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: String,
    pub config_sha256: String,
    pub seed: u64,
    pub created_unix: u64,
}

impl Meta {
    pub fn new(command: String, config: String, config_text: &str, seed: u64) -> Self {
        Meta {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            config_sha256: sha256_hex(config_text.as_bytes()),
            seed,
            created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        }
    }

    fn csv_header(&self) -> String {
        format!(
            "# tool = {} {}\n# command = {}\n# config = {}\n# config_sha256 = {}\n# seed = {}\n# created_unix = {}\n",
            self.tool, self.version, self.command, self.config, self.config_sha256, self.seed, self.created_unix
        )
    }
}

pub struct Writer {
    dir: PathBuf,
    meta: Meta,
}

impl Writer {
    pub fn new(dir: &Path, meta: Meta) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io("output", dir, e))?;
        Ok(Writer {
            dir: dir.to_path_buf(),
            meta,
        })
    }

    fn put(&mut self, name: &str, text: String) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| CliError::io("output", &path, e))
    }

    pub fn csv(&mut self, stem: &str, body: &str) -> Result<(), CliError> {
        let text = format!("{}{}", self.meta.csv_header(), body);
        self.put(&format!("{stem}.csv"), text)
    }

    pub fn json<T: Serialize>(&mut self, stem: &str, data: &T) -> Result<(), CliError> {
        let doc = json!({ "meta": self.meta, "data": data });
        let text = serde_json::to_string_pretty(&doc).expect("serializable output") + "\n";
        self.put(&format!("{stem}.json"), text)
    }

    /// Table as CSV, or as a JSON array of row objects.
    pub fn table(&mut self, stem: &str, format: Format, header: &[&str], rows: &[Vec<f64>]) -> Result<(), CliError> {
        match format {
            Format::Csv => {
                let mut body = header.join(",");
                body.push('\n');
                for r in rows {
                    let line: Vec<String> = r.iter().map(|v| v.to_string()).collect();
                    body.push_str(&line.join(","));
                    body.push('\n');
                }
                self.csv(stem, &body)
            }
            Format::Json => {
                let objs: Vec<Value> = rows
                    .iter()
                    .map(|r| Value::Object(header.iter().zip(r).map(|(h, v)| (h.to_string(), json!(v))).collect()))
                    .collect();
                self.json(stem, &objs)
            }
        }
    }
}

/// Reads a JSON file written by [`Writer::json`], or a bare payload.
pub fn read_payload(path: &Path) -> Result<Value, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io("input", path, e))?;
    let v: Value =
        serde_json::from_str(&text).map_err(|e| CliError::new("input", format!("{}: {e}", path.display())))?;
    Ok(match v {
        Value::Object(mut m) if m.contains_key("meta") && m.contains_key("data") => m.remove("data").unwrap(),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn json_round_trip_strips_meta() {
        let dir = tempfile::tempdir().unwrap();
        let meta = Meta::new("test".into(), "bundled".into(), "x", 1);
        let mut w = Writer::new(dir.path(), meta).unwrap();
        w.json("a", &json!({"k": 2.5})).unwrap();
        let v = read_payload(&dir.path().join("a.json")).unwrap();
        assert_eq!(v, json!({"k": 2.5}));
    }

    #[test]
    fn csv_table_has_header_block() {
        let dir = tempfile::tempdir().unwrap();
        let meta = Meta::new("test".into(), "bundled".into(), "x", 1);
        let mut w = Writer::new(dir.path(), meta).unwrap();
        w.table("t", Format::Csv, &["a", "b"], &[vec![1.0, 2.0]]).unwrap();
        let text = fs::read_to_string(dir.path().join("t.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# tool = tcsim"));
        assert_eq!(&lines[lines.len() - 2..], ["a,b", "1,2"]);
    }
}
