//! Line-delimited JSON records shared by every stage: manifests, responses,
//! replay files and annotation logs.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, invalid};
use crate::question::{Aspect, QuestionInstance};
use crate::world::{Setting, SizeClass, World};

/// One stimulus: everything needed to present it and to score answers to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub stimulus_id: String,
    pub world: World,
    pub setting: Setting,
    pub aspect: Aspect,
    pub question: String,
    pub options: Vec<String>,
    pub ground_truth: String,
    /// Relative to the manifest's directory.
    pub image_path: String,
    pub image_size: u32,
    pub object_size_class: SizeClass,
    pub permutation_index: u64,
}

impl ManifestRecord {
    pub fn from_question(q: QuestionInstance, world: &World, image_size: u32, object_size_class: SizeClass) -> Self {
        debug_assert_eq!(q.world_id, world.id());
        ManifestRecord {
            stimulus_id: q.stimulus_id,
            world: world.clone(),
            setting: q.setting,
            aspect: q.aspect,
            question: q.text,
            options: q.options,
            ground_truth: q.ground_truth,
            image_path: q.image_path,
            image_size,
            object_size_class,
            permutation_index: q.permutation_index,
        }
    }
}

/// One line of a replay file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub stimulus_id: String,
    pub raw_text: String,
}

pub fn write_jsonl<T: Serialize, W: Write>(mut out: W, items: &[T]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Write records to `path` through a temporary file and a rename.
pub fn write_jsonl_atomic<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    atomic_write(path, |w| write_jsonl(w, items))
}

pub fn atomic_write(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        body(&mut w)?;
        w.flush()?;
        w.get_ref().sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn parse_jsonl<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| Error::Record { line: i + 1, source })?);
    }
    Ok(out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    parse_jsonl(BufReader::new(File::open(path)?))
}

/// Like [`read_jsonl`], but tolerates a truncated final line (left behind by
/// an interrupted append) by dropping it.
pub fn read_jsonl_lenient<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    let lines: Vec<&str> = text.lines().collect();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(v) => out.push(v),
            Err(_) if i + 1 == lines.len() && !text.ends_with('\n') => break,
            Err(source) => return Err(Error::Record { line: i + 1, source }),
        }
    }
    Ok(out)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let records: Vec<ManifestRecord> = read_jsonl(path)?;
    let mut seen = std::collections::HashSet::new();
    for r in &records {
        if !seen.insert(r.stimulus_id.as_str()) {
            return Err(invalid(format!("duplicate stimulus id {} in {}", r.stimulus_id, path.display())));
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::question::{aspects_for, build_question};
    use crate::world::{self, Cell, Vocabulary};

    fn record(world: &World, aspect: Aspect, idx: u64) -> ManifestRecord {
        let q = build_question(world, aspect, idx).unwrap();
        ManifestRecord::from_question(q, world, 672, SizeClass::Regular)
    }

    proptest! {
        #[test]
        fn manifest_round_trip(setting_idx in 0usize..5, world_idx in 0usize..243, perm in 0u64..1_000_000) {
            let setting = Setting::ALL[setting_idx];
            let worlds = match setting {
                Setting::SingleObjectCoco => world::enumerate_single_object_coco(world::Category::ALL).unwrap(),
                Setting::RelativeDistance => world::enumerate_relative_distance(3).unwrap(),
                _ => world::enumerate(setting, SizeClass::Regular, 0).unwrap(),
            };
            let w = &worlds[world_idx % worlds.len()];
            for &aspect in aspects_for(setting) {
                if let Ok(q) = build_question(w, aspect, perm) {
                    let r = ManifestRecord::from_question(q, w, 1344, SizeClass::Regular);
                    let line = serde_json::to_string(&r).unwrap();
                    let back: ManifestRecord = serde_json::from_str(&line).unwrap();
                    prop_assert_eq!(back, r);
                }
            }
        }
    }

    #[test]
    fn lenient_reader_drops_truncated_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        let w = World::new(
            Setting::SingleObject,
            vec![world::ObjectSpec::elementary(
                world::Shape::Star,
                world::Color::Red,
                world::Sheen::None,
                SizeClass::Regular,
                Cell::new(0, 0).unwrap(),
            )],
        )
        .unwrap();
        let recs = vec![record(&w, Aspect::Shape, 0), record(&w, Aspect::Color, 1)];
        write_jsonl_atomic(&path, &recs).unwrap();
        let mut text = fs::read_to_string(&path).unwrap();
        text.push_str("{\"stimulus_id\":\"trunc");
        fs::write(&path, &text).unwrap();
        assert!(read_jsonl::<ManifestRecord>(&path).is_err());
        assert_eq!(read_jsonl_lenient::<ManifestRecord>(&path).unwrap(), recs);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let w = &world::enumerate_single_object()[0];
        let r = record(w, Aspect::Shape, 0);
        write_jsonl_atomic(&path, &[r.clone(), r]).unwrap();
        assert!(read_manifest(&path).is_err());
    }
}
