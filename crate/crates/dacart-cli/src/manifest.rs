//! Run manifests: enough context to reproduce any output file bit-exactly.

use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

/// Write `<output>.manifest` next to every output file, recording the
/// command line, the effective seed and config, the artifact version, and a
/// timestamp. Outputs depend only on the recorded command and seed, so
/// re-running the command reproduces them byte for byte (the timestamp is
/// informational).
pub fn write_manifest(
    outputs: &[&Path],
    seed: Option<u64>,
    config: &[(String, String)],
) -> std::io::Result<()> {
    for target in outputs {
        let manifest_path = format!("{}.manifest", target.display());
        let mut out = std::fs::File::create(&manifest_path)?;
        writeln!(out, "dacart-manifest v1")?;
        writeln!(out, "artifact dacart {}", env!("CARGO_PKG_VERSION"))?;
        let created =
            SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        writeln!(out, "created_unix {created}")?;
        let argv: Vec<String> = std::env::args().collect();
        writeln!(out, "command {}", argv.join(" "))?;
        if let Some(seed) = seed {
            writeln!(out, "seed {seed}")?;
        }
        for (key, value) in config {
            writeln!(out, "config.{key} {value}")?;
        }
        for output in outputs {
            writeln!(out, "output {}", output.display())?;
        }
    }
    Ok(())
}
