//! Run manifests: effective configuration, file inventory and summary values.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

/// Writes `bytes` to `path` through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// A `key = value` document listing the outputs of a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<(String, String)>,
    /// `(relative path, sha256)` of every file produced.
    pub files: Vec<(String, String)>,
    /// Extra preformatted `key = value` lines appended verbatim.
    pub blocks: Vec<String>,
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        self.entries.push((key.into(), value.to_string()));
        self
    }

    /// Hashes `root/rel` and adds it to the inventory.
    pub fn add_file(&mut self, root: &Path, rel: &str) -> io::Result<&mut Self> {
        let digest = sha256_file(&root.join(rel))?;
        self.files.push((rel.to_string(), digest));
        Ok(self)
    }

    pub fn push_block(&mut self, block: impl Into<String>) -> &mut Self {
        self.blocks.push(block.into());
        self
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(&format!("{k} = {v}\n"));
        }
        for (rel, digest) in &self.files {
            out.push_str(&format!("file.{rel} = sha256:{digest}\n"));
        }
        for b in &self.blocks {
            out.push_str(b);
            if !b.ends_with('\n') {
                out.push('\n');
            }
        }
        out
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        write_atomic(path, self.render().as_bytes())
    }
}

/// Reads `key = value` lines back into pairs, skipping blanks and comments.
pub fn parse_key_values(text: &str) -> Vec<(String, String)> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

/// Standard location of the manifest inside an output directory.
pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.txt")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_and_inventory() {
        let dir = tempfile::tempdir().unwrap();
        write_atomic(&dir.path().join("a.csv"), b"abc").unwrap();
        let mut m = Manifest::new();
        m.set("version", 1);
        m.add_file(dir.path(), "a.csv").unwrap();
        m.push_block("bootstrap.E_d = 1\n");
        let text = m.render();
        let kv = parse_key_values(&text);
        assert_eq!(kv[0], ("version".into(), "1".into()));
        // sha256("abc")
        assert_eq!(
            kv[1].1,
            "sha256:ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(kv[2].0, "bootstrap.E_d");
    }
}
