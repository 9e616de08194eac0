use std::fs;
use std::path::{Path, PathBuf};

use civet_core::manifest::{ManifestRecord, atomic_write, write_jsonl_atomic};
use civet_core::par;
use civet_core::question::{Aspect, aspects_for, build_questions};
use civet_core::render::{RenderConfig, SpriteStore, render};
use civet_core::world::{self, Category, Setting, SizeClass, Vocabulary, World};
use serde::{Deserialize, Serialize};

use crate::{CliError, Result};

const RUN_FILE: &str = "run.json";

#[derive(Debug, Clone)]
pub struct GenerateConfig {
    pub setting: Setting,
    /// Defaults to [`default_image_size`].
    pub image_size: Option<u32>,
    pub object_size: SizeClass,
    pub seed: u64,
    pub out: PathBuf,
    pub overwrite: bool,
    /// Defaults to every aspect the setting supports.
    pub aspects: Option<Vec<Aspect>>,
    /// Directory of `<category>.png` sprites, required for sprite scenes.
    pub sprites: Option<PathBuf>,
}

impl GenerateConfig {
    pub fn new(setting: Setting, out: impl Into<PathBuf>) -> Self {
        GenerateConfig {
            setting,
            image_size: None,
            object_size: SizeClass::Regular,
            seed: 0,
            out: out.into(),
            overwrite: false,
            aspects: None,
            sprites: None,
        }
    }
}

/// 1344 for sprite scenes, 672 otherwise.
pub fn default_image_size(setting: Setting) -> u32 {
    match setting {
        Setting::SingleObjectCoco => 1344,
        _ => 672,
    }
}

pub fn manifest_path(out: &Path, aspect: Aspect) -> PathBuf {
    out.join(format!("manifest.{}.jsonl", aspect.as_str()))
}

/// What a generation run was asked for; stored as `run.json` so reruns can
/// detect a mismatching output directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub setting: Setting,
    pub image_size: u32,
    pub object_size: SizeClass,
    pub seed: u64,
    pub aspects: Vec<Aspect>,
    pub worlds: usize,
}

#[derive(Debug, Clone)]
pub struct GenerateSummary {
    pub run: RunRecord,
    /// (aspect, manifest path, stimulus count)
    pub manifests: Vec<(Aspect, PathBuf, usize)>,
}

fn enumerate_worlds(cfg: &GenerateConfig) -> Result<(Vec<World>, Option<SpriteStore>)> {
    if cfg.setting != Setting::SingleObjectCoco {
        return Ok((world::enumerate(cfg.setting, cfg.object_size, cfg.seed)?, None));
    }
    let dir = cfg
        .sprites
        .as_deref()
        .ok_or_else(|| CliError::Config("single_object_coco needs --sprites <dir>".into()))?;
    let store = SpriteStore::load_dir(dir)?;
    let missing: Vec<&str> = Category::ALL
        .iter()
        .filter(|c| store.get(**c).is_none())
        .map(|c| c.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Config(format!(
            "sprite directory {} lacks {}",
            dir.display(),
            missing.iter().map(|m| format!("{m}.png")).collect::<Vec<_>>().join(", ")
        )));
    }
    let worlds = world::enumerate_single_object_coco(Category::ALL)?;
    let worlds = match cfg.object_size {
        SizeClass::Regular => worlds,
        size => worlds.iter().map(|w| w.with_size(size)).collect::<civet_core::Result<_>>()?,
    };
    Ok((worlds, Some(store)))
}

/// Refuse to write into a directory holding a different run unless
/// `overwrite` is set, in which case stale outputs are removed first.
fn prepare_out_dir(cfg: &GenerateConfig, run: &RunRecord) -> Result<()> {
    let out = &cfg.out;
    if out.exists() {
        let run_path = out.join(RUN_FILE);
        let previous: Option<RunRecord> = match fs::read_to_string(&run_path) {
            Ok(text) => serde_json::from_str(&text).ok(),
            Err(_) => None,
        };
        let has_outputs = run_path.exists()
            || out.join("images").exists()
            || fs::read_dir(out)?.filter_map(|e| e.ok()).any(|e| {
                let name = e.file_name();
                let name = name.to_string_lossy();
                name.starts_with("manifest.") && name.ends_with(".jsonl")
            });
        let matches = previous.as_ref() == Some(run);
        if has_outputs && !matches {
            if !cfg.overwrite {
                return Err(CliError::Conflict(format!(
                    "{} holds outputs of a different run; pass --overwrite to replace them",
                    out.display()
                )));
            }
            log::info!("removing previous outputs in {}", out.display());
            if out.join("images").exists() {
                fs::remove_dir_all(out.join("images"))?;
            }
            for entry in fs::read_dir(out)? {
                let entry = entry?;
                let name = entry.file_name().to_string_lossy().into_owned();
                if name == RUN_FILE || (name.starts_with("manifest.") && name.ends_with(".jsonl")) {
                    fs::remove_file(entry.path())?;
                }
            }
        }
    }
    fs::create_dir_all(out.join("images"))?;
    Ok(())
}

/// Enumerate, render and write one setting: `images/<world_id>.png`, one
/// `manifest.<aspect>.jsonl` per aspect and `run.json`. Deterministic, so a
/// rerun with the same configuration rewrites identical bytes.
pub fn cmd_generate(cfg: &GenerateConfig) -> Result<GenerateSummary> {
    let image_size = cfg.image_size.unwrap_or_else(|| default_image_size(cfg.setting));
    let render_cfg = RenderConfig::with_size(image_size);
    render_cfg.validate()?;
    let supported = aspects_for(cfg.setting);
    let aspects = match &cfg.aspects {
        Some(list) => {
            if let Some(bad) = list.iter().find(|a| !supported.contains(a)) {
                return Err(CliError::Config(format!(
                    "aspect {} does not apply to {}",
                    bad.as_str(),
                    cfg.setting.as_str()
                )));
            }
            list.clone()
        }
        None => supported.to_vec(),
    };
    let (worlds, sprites) = enumerate_worlds(cfg)?;
    let run = RunRecord {
        setting: cfg.setting,
        image_size,
        object_size: cfg.object_size,
        seed: cfg.seed,
        aspects: aspects.clone(),
        worlds: worlds.len(),
    };
    prepare_out_dir(cfg, &run)?;

    log::info!("rendering {} scenes at {image_size}px", worlds.len());
    let images = cfg.out.join("images");
    par::try_for_each(&worlds, |w| -> Result<()> {
        let img = render(w, &render_cfg, sprites.as_ref())?;
        atomic_write(&images.join(format!("{}.png", w.id())), |out| img.encode_png(out))?;
        Ok(())
    })?;

    let mut manifests = Vec::new();
    for &aspect in &aspects {
        let questions = build_questions(&worlds, aspect)?;
        let by_id: std::collections::HashMap<&str, &World> = worlds.iter().map(|w| (w.id(), w)).collect();
        let records: Vec<ManifestRecord> = questions
            .into_iter()
            .map(|q| {
                let world = by_id[q.world_id.as_str()];
                ManifestRecord::from_question(q, world, image_size, cfg.object_size)
            })
            .collect();
        let path = manifest_path(&cfg.out, aspect);
        write_jsonl_atomic(&path, &records)?;
        log::info!("{}: {} stimuli", path.display(), records.len());
        manifests.push((aspect, path, records.len()));
    }
    let run_path = cfg.out.join(RUN_FILE);
    atomic_write(&run_path, |w| {
        serde_json::to_writer_pretty(&mut *w, &run).map_err(std::io::Error::from)?;
        Ok(())
    })?;
    Ok(GenerateSummary { run, manifests })
}
