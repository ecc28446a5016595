//! Bundle plumbing and the human-readable summary printed to stdout.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use anyhow::{Context, Result};

/// Create `out_dir` (if needed) and open one bundle file for writing.
pub fn create(out_dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let path = out_dir.join(name);
    let file = File::create(&path).with_context(|| format!("writing {}", path.display()))?;
    Ok(BufWriter::new(file))
}

/// A file-safe version of a user-provided label.
pub fn sanitize_label(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '-'
            }
        })
        .collect()
}

pub fn heading(title: &str) {
    println!("{title}");
    println!("{}", "-".repeat(title.len()));
}

pub fn kv(label: &str, value: impl std::fmt::Display) {
    println!("  {label:<28} {value}");
}

pub fn done(out_dir: &Path) {
    println!("bundle written to {}", out_dir.display());
}

/// Percent with two decimals, for fractions.
pub fn pct(f: f64) -> String {
    format!("{:.2}%", f * 100.0)
}
