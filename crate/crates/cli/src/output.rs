//! Hashed, atomically written output files.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Hex SHA-256 of the JSON form of `config`.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let json = serde_json::to_vec(config).expect("configs serialise");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects files in memory, then writes each through a temporary file and a rename.
pub struct OutputSet {
    dir: PathBuf,
    hash: String,
    files: Vec<(String, Vec<u8>)>,
}

impl OutputSet {
    pub fn new(dir: &Path, hash: String) -> Self {
        Self { dir: dir.to_path_buf(), hash, files: Vec::new() }
    }

    /// CSV body preceded by the config hash comment.
    pub fn csv(&mut self, name: &str, body: &str) {
        self.files.push((name.into(), format!("# config_sha256: {}\n{body}", self.hash).into_bytes()));
    }

    /// JSON document `{ "config_sha256": ..., <fields of value> }`.
    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) {
        let mut map = serde_json::Map::new();
        map.insert("config_sha256".into(), self.hash.clone().into());
        match serde_json::to_value(value).expect("reports serialise") {
            serde_json::Value::Object(fields) => map.extend(fields),
            other => {
                map.insert("value".into(), other);
            }
        }
        let mut text = serde_json::to_string_pretty(&serde_json::Value::Object(map)).expect("json");
        text.push('\n');
        self.files.push((name.into(), text.into_bytes()));
    }

    pub fn write(self) -> std::io::Result<Vec<PathBuf>> {
        fs::create_dir_all(&self.dir)?;
        let mut written = Vec::new();
        for (name, bytes) in self.files {
            let target = self.dir.join(&name);
            let tmp = self.dir.join(format!(".{name}.tmp"));
            let result = (|| {
                let mut f = fs::File::create(&tmp)?;
                f.write_all(&bytes)?;
                f.sync_all()?;
                fs::rename(&tmp, &target)
            })();
            if let Err(e) = result {
                let _ = fs::remove_file(&tmp);
                return Err(e);
            }
            written.push(target);
        }
        Ok(written)
    }
}
