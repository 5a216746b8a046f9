//! Buffered artifacts committed to disk with temp-file + rename.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

/// Fixed 17-significant-digit scientific notation.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// In-memory output set; nothing touches the disk until [`Outputs::commit`].
#[derive(Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.into(), bytes.into()));
    }

    pub fn add_json(&mut self, name: impl Into<String>, value: &serde_json::Value) {
        let mut text = serde_json::to_string_pretty(value).expect("json value serializes");
        text.push('\n');
        self.add(name, text);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn files(&self) -> &[(String, Vec<u8>)] {
        &self.files
    }

    /// Writes every file into `dir`: all temporaries first, then the renames,
    /// so a failure leaves no partially written outputs.
    pub fn commit(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        let pid = std::process::id();
        let mut staged: Vec<(PathBuf, PathBuf)> = Vec::new();
        let result = (|| {
            for (name, bytes) in &self.files {
                let tmp = dir.join(format!(".{name}.tmp{pid}"));
                staged.push((tmp.clone(), dir.join(name)));
                let mut f = fs::File::create(&tmp)?;
                f.write_all(bytes)?;
                f.sync_all()?;
            }
            for (tmp, dst) in &staged {
                fs::rename(tmp, dst)?;
            }
            Ok(())
        })();
        if result.is_err() {
            for (tmp, _) in &staged {
                let _ = fs::remove_file(tmp);
            }
        }
        result
    }
}

/// CSV text with a header row.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self { text }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn finish(self) -> String {
        self.text
    }
}
