//! Assembles every report surface from a manifest and its responses.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::answer::ModelResponse;
use crate::error::{Result, invalid};
use crate::manifest::ManifestRecord;
use crate::metrics::{
    self, AnnotationMatrix, CellGrid, ClassMetrics, HumanAccuracy, MeanStd, Scored, Tally, round1,
};
use crate::question::{Aspect, option_set};
use crate::world::{Cell, SectionLabel, Vocabulary, section_of};

#[derive(Debug, Clone, Default)]
pub struct ReportOptions {
    /// Object description ("yellow star") whose absolute-position answers
    /// feed the position-assignment map.
    pub position_object: Option<String>,
    pub annotations: Option<AnnotationMatrix>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Coverage {
    pub stimuli: usize,
    pub responses: usize,
    pub missing: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AspectReport {
    pub aspect: Aspect,
    pub n: u64,
    pub accuracy: Option<f64>,
    /// Expected accuracy of a uniform random guess.
    pub random_baseline: f64,
    pub other_rate: f64,
    pub answer_length: Option<MeanStd>,
    pub f1: ClassMetrics,
    /// Accuracy marginalized per ground-truth value.
    pub by_value: BTreeMap<String, Tally>,
    pub by_section: BTreeMap<String, Tally>,
    pub cell_accuracy: CellGrid,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PositionMap {
    pub object: String,
    pub grid: CellGrid,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HumanReport {
    pub kappa: Option<f64>,
    pub accuracy: HumanAccuracy,
    pub position_map: CellGrid,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub coverage: Coverage,
    pub accuracy: Option<f64>,
    pub other_rate: f64,
    pub aspects: Vec<AspectReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub position_map: Option<PositionMap>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub human: Option<HumanReport>,
}

impl Report {
    pub fn aspect(&self, aspect: Aspect) -> Option<&AspectReport> {
        self.aspects.iter().find(|a| a.aspect == aspect)
    }
}

fn pct(t: &Tally) -> Option<f64> {
    t.percent().map(round1)
}

/// Options for `aspect` across the given records, canonical order, deduplicated.
fn classes_for(items: &[Scored]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in items {
        for o in option_set(s.record.aspect, &s.record.world) {
            if !out.contains(&o) {
                out.push(o);
            }
        }
    }
    out
}

fn aspect_report(aspect: Aspect, items: &[Scored]) -> Result<AspectReport> {
    let tally = metrics::accuracy(items);
    let classes = classes_for(items);
    let mut f1 = metrics::f1_for(items, &classes)?;
    for c in &mut f1.classes {
        c.precision = round1(c.precision);
        c.recall = round1(c.recall);
        c.f1 = round1(c.f1);
    }
    let baseline = items
        .iter()
        .map(|s| 100.0 / s.record.options.len() as f64)
        .sum::<f64>()
        / items.len().max(1) as f64;
    let mut cell_accuracy = metrics::cell_accuracy_map(items);
    for stat in cell_accuracy.cells.iter_mut().flatten() {
        stat.accuracy = stat.accuracy.map(round1);
    }
    Ok(AspectReport {
        aspect,
        n: tally.total,
        accuracy: pct(&tally),
        random_baseline: round1(baseline),
        other_rate: round1(metrics::other_rate(items)),
        answer_length: metrics::answer_length_stats(items).remove(&aspect),
        f1,
        by_value: metrics::grouped_accuracy(items, |s| Some(s.record.ground_truth.clone())),
        by_section: metrics::grouped_accuracy(items, |s| Some(section_of(s.cell()).as_str().to_string())),
        cell_accuracy,
    })
}

fn human_report(matrix: &AnnotationMatrix, manifest: &[ManifestRecord]) -> Result<HumanReport> {
    let by_id: HashMap<&str, &ManifestRecord> = manifest.iter().map(|r| (r.stimulus_id.as_str(), r)).collect();
    let truths: HashMap<String, String> = matrix
        .items
        .iter()
        .map(|row| {
            by_id
                .get(row.stimulus_id.as_str())
                .map(|r| (row.stimulus_id.clone(), r.ground_truth.clone()))
                .ok_or_else(|| invalid(format!("annotated stimulus {} is not in the manifest", row.stimulus_id)))
        })
        .collect::<Result<_>>()?;
    let accuracy = metrics::human_accuracy(matrix, &truths)?;
    let kappa = metrics::fleiss_kappa(matrix).ok();
    let rows: Vec<(Cell, &[u64], u64)> = matrix
        .items
        .iter()
        .map(|row| (by_id[row.stimulus_id.as_str()].world.primary().cell, row.counts.as_slice(), row.raters()))
        .collect();
    let mut position_map = metrics::vote_map(&matrix.categories, rows);
    let truth_order: Vec<String> = SectionLabel::ALL.iter().map(|l| l.as_str().to_string()).collect();
    if matrix.categories == truth_order {
        for cell in Cell::all() {
            let stat = &mut position_map.cells[cell.row() as usize][cell.col() as usize];
            if let Some(m) = &stat.majority {
                stat.accuracy = Some(if m == section_of(cell).as_str() { 100.0 } else { 0.0 });
            }
        }
    }
    Ok(HumanReport {
        kappa,
        accuracy,
        position_map,
    })
}

pub fn build_report(manifest: &[ManifestRecord], responses: &[ModelResponse], opts: &ReportOptions) -> Result<Report> {
    let joined = metrics::join(manifest, responses)?;
    let items = &joined.scored;
    let warning = (!joined.missing.is_empty()).then(|| {
        format!(
            "incomplete coverage: {} of {} stimuli have no response",
            joined.missing.len(),
            manifest.len()
        )
    });

    let mut by_aspect: BTreeMap<Aspect, Vec<Scored>> = BTreeMap::new();
    for s in items {
        by_aspect.entry(s.record.aspect).or_default().push(*s);
    }
    let aspects = by_aspect
        .iter()
        .map(|(a, v)| aspect_report(*a, v))
        .collect::<Result<Vec<_>>>()?;

    let position_map = opts.position_object.as_ref().and_then(|object| {
        let subset: Vec<Scored> = items
            .iter()
            .filter(|s| s.record.aspect == Aspect::AbsolutePosition && s.record.world.primary().description() == *object)
            .copied()
            .collect();
        (!subset.is_empty()).then(|| PositionMap {
            object: object.clone(),
            grid: metrics::position_assignment_map(&subset),
        })
    });

    let human = opts.annotations.as_ref().map(|m| human_report(m, manifest)).transpose()?;

    Ok(Report {
        coverage: Coverage {
            stimuli: manifest.len(),
            responses: items.len(),
            missing: joined.missing.len(),
            warning,
        },
        accuracy: pct(&metrics::accuracy(items)),
        other_rate: round1(metrics::other_rate(items)),
        aspects,
        position_map,
        human,
    })
}
