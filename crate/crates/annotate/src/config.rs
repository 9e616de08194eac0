use std::collections::HashMap;
use std::path::{Path, PathBuf};

use civet_core::manifest::{ManifestRecord, read_manifest};
use civet_core::question::{Aspect, option_set};
use serde::{Deserialize, Serialize};

use crate::AnnotateError;

fn default_target() -> u32 {
    8
}
fn default_batch() -> usize {
    10
}
fn default_min_median_ms() -> u64 {
    1500
}
fn default_snapshot_every() -> u64 {
    100
}

/// Campaign settings, read from a JSON file. Relative paths resolve against
/// the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub manifest: PathBuf,
    /// Directory that manifest image paths are relative to; defaults to the
    /// manifest's directory.
    #[serde(default)]
    pub image_root: Option<PathBuf>,
    pub data_dir: PathBuf,
    /// Annotations wanted per stimulus.
    #[serde(default = "default_target")]
    pub target: u32,
    /// Stimuli per session.
    #[serde(default = "default_batch")]
    pub batch: usize,
    /// Keep only stimuli of this aspect.
    #[serde(default)]
    pub aspect: Option<Aspect>,
    /// Keep only stimuli whose id contains this text.
    #[serde(default)]
    pub stimulus_filter: Option<String>,
    /// Sessions whose median answer time is below this are rejected.
    #[serde(default = "default_min_median_ms")]
    pub min_median_ms: u64,
    /// Seed for per-session presentation order.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: u64,
    /// Static annotation UI bundle served at `/`.
    #[serde(default)]
    pub ui_dir: Option<PathBuf>,
    /// Bearer token required by the export endpoint when set.
    #[serde(default)]
    pub admin_token: Option<String>,
}

impl CampaignConfig {
    pub fn new(manifest: impl Into<PathBuf>, data_dir: impl Into<PathBuf>) -> Self {
        CampaignConfig {
            manifest: manifest.into(),
            image_root: None,
            data_dir: data_dir.into(),
            target: default_target(),
            batch: default_batch(),
            aspect: None,
            stimulus_filter: None,
            min_median_ms: default_min_median_ms(),
            seed: 0,
            snapshot_every: default_snapshot_every(),
            ui_dir: None,
            admin_token: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self, AnnotateError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AnnotateError::Config(format!("campaign file {}: {e}", path.display())))?;
        let mut cfg: CampaignConfig = serde_json::from_str(&text)
            .map_err(|e| AnnotateError::Config(format!("campaign file {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.manifest);
        resolve(&mut cfg.data_dir);
        cfg.image_root.as_mut().map(resolve);
        cfg.ui_dir.as_mut().map(resolve);
        Ok(cfg)
    }

    pub fn image_root(&self) -> PathBuf {
        self.image_root.clone().unwrap_or_else(|| {
            self.manifest
                .parent()
                .map(Path::to_path_buf)
                .unwrap_or_else(|| PathBuf::from("."))
        })
    }
}

/// The stimulus pool of a campaign, sorted by stimulus id.
#[derive(Debug)]
pub struct Campaign {
    pub config: CampaignConfig,
    pub stimuli: Vec<ManifestRecord>,
    /// Shared canonical option order; columns of the exported matrix.
    pub categories: Vec<String>,
    index: HashMap<String, usize>,
}

impl Campaign {
    pub fn load(config: CampaignConfig) -> Result<Self, AnnotateError> {
        let records = read_manifest(&config.manifest)
            .map_err(|e| AnnotateError::Config(format!("manifest {}: {e}", config.manifest.display())))?;
        Campaign::from_records(config, records)
    }

    pub fn from_records(config: CampaignConfig, records: Vec<ManifestRecord>) -> Result<Self, AnnotateError> {
        if config.target == 0 || config.batch == 0 {
            return Err(AnnotateError::Config("target and batch must be at least 1".into()));
        }
        let mut stimuli: Vec<ManifestRecord> = records
            .into_iter()
            .filter(|r| config.aspect.is_none_or(|a| a == r.aspect))
            .filter(|r| config.stimulus_filter.as_deref().is_none_or(|f| r.stimulus_id.contains(f)))
            .collect();
        if stimuli.is_empty() {
            return Err(AnnotateError::Config("no stimuli match the campaign filters".into()));
        }
        stimuli.sort_by(|a, b| a.stimulus_id.cmp(&b.stimulus_id));
        let categories = option_set(stimuli[0].aspect, &stimuli[0].world);
        for r in &stimuli {
            let mut mine = option_set(r.aspect, &r.world);
            let mut shared = categories.clone();
            mine.sort();
            shared.sort();
            if mine != shared {
                return Err(AnnotateError::Config(format!(
                    "stimulus {} has a different option set; a campaign needs one shared set",
                    r.stimulus_id
                )));
            }
        }
        let index = stimuli.iter().enumerate().map(|(i, r)| (r.stimulus_id.clone(), i)).collect();
        Ok(Campaign {
            config,
            stimuli,
            categories,
            index,
        })
    }

    pub fn position(&self, stimulus_id: &str) -> Option<usize> {
        self.index.get(stimulus_id).copied()
    }

    pub fn record(&self, stimulus_id: &str) -> Option<&ManifestRecord> {
        self.position(stimulus_id).map(|i| &self.stimuli[i])
    }

    /// Annotations needed for full coverage.
    pub fn required(&self) -> u64 {
        self.stimuli.len() as u64 * u64::from(self.config.target)
    }
}
