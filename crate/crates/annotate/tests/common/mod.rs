#![allow(dead_code)]

use std::path::Path;

use civet_annotate::{Campaign, CampaignConfig, Store};
use civet_core::manifest::{ManifestRecord, write_jsonl_atomic};
use civet_core::question::{Aspect, build_questions};
use civet_core::render::{RenderConfig, render};
use civet_core::world::{self, SizeClass};

pub const POOL_FILTER: &str = "so-star-yellow-none-";

/// Absolute-position and color stimuli for all single-object worlds.
pub fn write_manifest(dir: &Path) -> Vec<ManifestRecord> {
    let worlds = world::enumerate_single_object();
    let mut records = Vec::new();
    for aspect in [Aspect::AbsolutePosition, Aspect::Color] {
        let qs = build_questions(&worlds, aspect).unwrap();
        records.extend(
            qs.into_iter()
                .zip(&worlds)
                .map(|(q, w)| ManifestRecord::from_question(q, w, 336, SizeClass::Regular)),
        );
    }
    write_jsonl_atomic(&dir.join("manifest.jsonl"), &records).unwrap();
    records
}

pub fn write_images(dir: &Path, records: &[ManifestRecord]) {
    std::fs::create_dir_all(dir.join("images")).unwrap();
    let cfg = RenderConfig::with_size(336);
    for r in records {
        let png = render(&r.world, &cfg, None).unwrap().to_png().unwrap();
        std::fs::write(dir.join(&r.image_path), png).unwrap();
    }
}

/// The 81-stimulus position campaign over the yellow star.
pub fn position_config(dir: &Path) -> CampaignConfig {
    let mut cfg = CampaignConfig::new(dir.join("manifest.jsonl"), dir.join("data"));
    cfg.aspect = Some(Aspect::AbsolutePosition);
    cfg.stimulus_filter = Some(POOL_FILTER.into());
    cfg
}

pub fn open(cfg: &CampaignConfig) -> Store {
    Store::open(Campaign::load(cfg.clone()).unwrap()).unwrap()
}
