use std::fs;
use std::path::{Path, PathBuf};

use civet_core::manifest::{read_manifest, write_jsonl_atomic};
use civet_harness::{AdapterConfig, ProgressLog, evaluate_blocking};

use crate::Result;

#[derive(Debug, Clone)]
pub struct EvaluateArgs {
    pub manifest: PathBuf,
    pub adapter: AdapterConfig,
    /// Defaults to [`default_responses_path`].
    pub out: Option<PathBuf>,
    /// Directory image paths are relative to; defaults to the manifest's.
    pub image_root: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvaluateSummary {
    pub out: PathBuf,
    pub total: usize,
    /// Responses obtained in this run (the rest were resumed).
    pub new: usize,
    pub input_errors: usize,
    pub transport_errors: usize,
}

/// `manifest.shape.jsonl` becomes `responses.shape.jsonl` in the same
/// directory; other names get a `.responses.jsonl` suffix.
pub fn default_responses_path(manifest: &Path) -> PathBuf {
    let name = manifest.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let file = match name.strip_prefix("manifest.") {
        Some(rest) => format!("responses.{rest}"),
        None => format!("{}.responses.jsonl", name.trim_end_matches(".jsonl")),
    };
    manifest.with_file_name(file)
}

fn partial_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".partial");
    PathBuf::from(s)
}

/// Evaluate a manifest, resuming from an earlier responses file and from the
/// progress log of an interrupted run. The final file is sorted by stimulus
/// id and written atomically; the progress log is removed afterwards.
pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<EvaluateSummary> {
    let manifest = read_manifest(&args.manifest)?;
    let out = args.out.clone().unwrap_or_else(|| default_responses_path(&args.manifest));
    let image_root = args.image_root.clone().unwrap_or_else(|| {
        args.manifest
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."))
    });
    let partial = partial_path(&out);
    let mut previous = ProgressLog::load(&out)?;
    previous.extend(ProgressLog::load(&partial)?);
    // later entries win when a stimulus appears in both
    let mut latest = std::collections::HashMap::new();
    for r in previous {
        latest.insert(r.stimulus_id.clone(), r);
    }
    let previous: Vec<_> = latest.into_values().collect();
    let resumed = previous.iter().filter(|r| r.error.is_none()).count();

    let mut log = ProgressLog::open(&partial)?;
    let responses = evaluate_blocking(&args.adapter, &manifest, &image_root, previous, |r| log.append(r))?;
    drop(log);
    write_jsonl_atomic(&out, &responses)?;
    fs::remove_file(&partial)?;

    let count = |prefix: &str| {
        responses
            .iter()
            .filter(|r| r.error.as_deref().is_some_and(|e| e.starts_with(prefix)))
            .count()
    };
    let summary = EvaluateSummary {
        out,
        total: responses.len(),
        new: responses.len() - resumed,
        input_errors: count("input:"),
        transport_errors: count("transport:"),
    };
    log::info!(
        "{} responses ({} new) written to {}; {} input errors, {} transport errors",
        summary.total,
        summary.new,
        summary.out.display(),
        summary.input_errors,
        summary.transport_errors
    );
    Ok(summary)
}
