use std::path::{Path, PathBuf};

use civet_core::manifest::{ManifestRecord, read_manifest, write_jsonl_atomic};
use civet_core::replay::{oracle_replay, random_replay};

use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplayMode {
    /// Every answer is the ground truth.
    Oracle,
    /// A uniformly random option per stimulus from a seeded stream.
    Random { seed: u64 },
}

/// Write a replay file answering every stimulus of the given manifests.
pub fn cmd_make_replay(manifests: &[PathBuf], mode: ReplayMode, out: &Path) -> Result<usize> {
    let mut records: Vec<ManifestRecord> = Vec::new();
    for m in manifests {
        records.extend(read_manifest(m)?);
    }
    let replay = match mode {
        ReplayMode::Oracle => oracle_replay(&records),
        ReplayMode::Random { seed } => random_replay(&records, seed),
    };
    write_jsonl_atomic(out, &replay)?;
    Ok(replay.len())
}
