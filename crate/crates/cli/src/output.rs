//! All-or-nothing output: files are staged in memory and written together;
//! if any write fails, the ones already written are removed again.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<String>, contents: impl Into<Vec<u8>>) {
        self.files.push((name.into(), contents.into()));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    /// Writes every staged file under `dir`, returning the paths written.
    pub fn commit(self, dir: &Path) -> Result<Vec<PathBuf>> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut written = Vec::with_capacity(self.files.len());
        for (name, contents) in &self.files {
            let path = dir.join(name);
            if let Err(e) = fs::write(&path, contents) {
                // The failed file may exist half-written too.
                for p in written.iter().chain(std::iter::once(&path)) {
                    let _ = fs::remove_file(p);
                }
                if created_dir {
                    let _ = fs::remove_dir(dir);
                }
                return Err(e).with_context(|| format!("writing {}", path.display()));
            }
            written.push(path);
        }
        Ok(written)
    }
}

/// Example counts are reported as whole numbers, rounding halves up.
pub fn count(x: f64) -> u64 {
    (x + 0.5).floor().max(0.0) as u64
}

/// File-name-safe rendering of a label.
pub fn slug(text: &str) -> String {
    let s: String = text
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect();
    if s.is_empty() {
        "_".into()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_round_half_up() {
        assert_eq!(count(2.5), 3);
        assert_eq!(count(2.4999), 2);
        assert_eq!(count(0.5), 1);
        assert_eq!(count(0.0), 0);
    }

    #[test]
    fn failed_commit_leaves_nothing() {
        let dir = std::env::temp_dir().join(format!("perfunc-out-{}", std::process::id()));
        let mut out = Outputs::default();
        out.add("a.txt", "first");
        // A name with a missing parent directory cannot be written.
        out.add("missing/b.txt", "second");
        assert!(out.commit(&dir).is_err());
        assert!(!dir.exists());
    }

    #[test]
    fn slugs_are_file_safe() {
        assert_eq!(slug("sw/en P 3696"), "sw_en_P_3696");
    }
}
