//! Report quantities over scored responses: accuracy (global, grouped and
//! marginalized), per-class F1, OTHER rates, answer lengths, per-cell grids
//! and inter-annotator agreement.

mod agreement;
mod grid;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

pub use agreement::{AnnotationMatrix, AnnotationRow, HumanAccuracy, fleiss_kappa, human_accuracy};
pub use grid::{CellGrid, CellStat, cell_accuracy_map, heatmap, majority, position_assignment_map, vote_map};

use crate::answer::{Match, ModelResponse};
use crate::error::{Result, invalid};
use crate::manifest::ManifestRecord;
use crate::par;
use crate::question::Aspect;
use crate::world::{Category, Cell, Color, SectionLabel, Shape, Sheen, SizeClass, section_of};

/// A response paired with the stimulus it answers.
#[derive(Debug, Clone, Copy)]
pub struct Scored<'a> {
    pub record: &'a ManifestRecord,
    pub response: &'a ModelResponse,
}

impl Scored<'_> {
    pub fn is_correct(&self) -> bool {
        self.response.matched.option() == Some(self.record.ground_truth.as_str())
    }

    /// Cell of the first object in the world.
    pub fn cell(&self) -> Cell {
        self.record.world.primary().cell
    }
}

#[derive(Debug)]
pub struct Joined<'a> {
    pub scored: Vec<Scored<'a>>,
    /// Manifest stimuli with no response.
    pub missing: Vec<String>,
}

/// Pair each response with its manifest record, in manifest order.
pub fn join<'a>(manifest: &'a [ManifestRecord], responses: &'a [ModelResponse]) -> Result<Joined<'a>> {
    let by_id: HashMap<&str, &ManifestRecord> = manifest.iter().map(|r| (r.stimulus_id.as_str(), r)).collect();
    let mut answered: HashMap<&str, &ModelResponse> = HashMap::new();
    for resp in responses {
        if !by_id.contains_key(resp.stimulus_id.as_str()) {
            return Err(invalid(format!("response for {} has no ground truth in the manifest", resp.stimulus_id)));
        }
        if answered.insert(resp.stimulus_id.as_str(), resp).is_some() {
            return Err(invalid(format!("two responses for {}", resp.stimulus_id)));
        }
    }
    let mut scored = Vec::with_capacity(answered.len());
    let mut missing = Vec::new();
    for record in manifest {
        match answered.get(record.stimulus_id.as_str()) {
            Some(response) => scored.push(Scored { record, response }),
            None => missing.push(record.stimulus_id.clone()),
        }
    }
    Ok(Joined { scored, missing })
}

/// Correct / total counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub correct: u64,
    pub total: u64,
}

impl Tally {
    #[allow(clippy::should_implement_trait)]
    pub fn add(mut self, correct: bool) -> Self {
        self.correct += u64::from(correct);
        self.total += 1;
        self
    }

    pub fn merge(self, other: Tally) -> Tally {
        Tally {
            correct: self.correct + other.correct,
            total: self.total + other.total,
        }
    }

    /// Accuracy in percent, `None` when empty.
    pub fn percent(&self) -> Option<f64> {
        (self.total > 0).then(|| 100.0 * self.correct as f64 / self.total as f64)
    }
}

/// Overall accuracy tally; OTHER responses count as incorrect.
pub fn accuracy(items: &[Scored]) -> Tally {
    par::fold(items, Tally::default, |t, s| t.add(s.is_correct()), Tally::merge)
}

/// Accuracy per group. Items for which `key` returns `None` are skipped.
pub fn grouped_accuracy<K, F>(items: &[Scored], key: F) -> BTreeMap<K, Tally>
where
    K: Ord + Send,
    F: Fn(&Scored) -> Option<K> + Sync + Send,
{
    par::fold(
        items,
        BTreeMap::new,
        |mut acc, s| {
            if let Some(k) = key(s) {
                let t: &mut Tally = acc.entry(k).or_default();
                *t = t.add(s.is_correct());
            }
            acc
        },
        |mut a, b| {
            for (k, t) in b {
                let e = a.entry(k).or_default();
                *e = e.merge(t);
            }
            a
        },
    )
}

/// Fixes one factor of a stimulus; used to marginalize accuracy over the rest.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "factor", content = "value", rename_all = "snake_case")]
pub enum Selector {
    Aspect(Aspect),
    Shape(Shape),
    Color(Color),
    Sheen(Sheen),
    Category(Category),
    Cell(Cell),
    Section(SectionLabel),
    ObjectSize(SizeClass),
    ImageSize(u32),
}

impl Selector {
    /// Whether the stimulus's first object (or configuration) has the fixed value.
    pub fn matches(&self, record: &ManifestRecord) -> bool {
        let obj = record.world.primary();
        match *self {
            Selector::Aspect(a) => record.aspect == a,
            Selector::Shape(v) => obj.shape() == Some(v),
            Selector::Color(v) => obj.color() == Some(v),
            Selector::Sheen(v) => obj.sheen() == Some(v),
            Selector::Category(v) => obj.category() == Some(v),
            Selector::Cell(c) => obj.cell == c,
            Selector::Section(s) => section_of(obj.cell) == s,
            Selector::ObjectSize(s) => record.object_size_class == s,
            Selector::ImageSize(px) => record.image_size == px,
        }
    }
}

/// Accuracy over exactly the stimuli matching every selector.
pub fn marginalized_accuracy(items: &[Scored], fixed: &[Selector]) -> Result<f64> {
    let selected: Vec<Scored> = items
        .iter()
        .filter(|s| fixed.iter().all(|sel| sel.matches(s.record)))
        .copied()
        .collect();
    accuracy(&selected)
        .percent()
        .ok_or_else(|| invalid(format!("no stimulus matches {fixed:?}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// One-vs-rest precision, recall and F1 (percent) per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub classes: Vec<ClassScore>,
}

impl ClassMetrics {
    pub fn get(&self, class: &str) -> Option<&ClassScore> {
        self.classes.iter().find(|c| c.class == class)
    }

    pub fn macro_f1(&self) -> f64 {
        self.classes.iter().map(|c| c.f1).sum::<f64>() / self.classes.len().max(1) as f64
    }
}

/// Per-class F1 from (ground truth, prediction) pairs. An OTHER prediction is
/// a false negative for its true class and a false positive for none.
pub fn f1_per_class<'a, I>(pairs: I, classes: &[String]) -> Result<ClassMetrics>
where
    I: IntoIterator<Item = (&'a str, &'a Match)>,
{
    let index: HashMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let mut tp = vec![0u64; classes.len()];
    let mut fp = vec![0u64; classes.len()];
    let mut support = vec![0u64; classes.len()];
    for (truth, predicted) in pairs {
        let t = *index
            .get(truth)
            .ok_or_else(|| invalid(format!("ground truth {truth:?} is not among the classes")))?;
        support[t] += 1;
        if let Some(p) = predicted.option().and_then(|p| index.get(p)) {
            if *p == t {
                tp[t] += 1;
            } else {
                fp[*p] += 1;
            }
        }
    }
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
    let classes = classes
        .iter()
        .enumerate()
        .map(|(i, class)| {
            let precision = ratio(tp[i], tp[i] + fp[i]);
            let recall = ratio(tp[i], support[i]);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassScore {
                class: class.clone(),
                precision,
                recall,
                f1,
                support: support[i],
            }
        })
        .collect();
    Ok(ClassMetrics { classes })
}

/// F1 per class over scored items, classes in the canonical option order.
pub fn f1_for(items: &[Scored], classes: &[String]) -> Result<ClassMetrics> {
    f1_per_class(items.iter().map(|s| (s.record.ground_truth.as_str(), &s.response.matched)), classes)
}

/// Percentage of OTHER responses.
pub fn other_rate(items: &[Scored]) -> f64 {
    if items.is_empty() {
        return 0.0;
    }
    let other = items.iter().filter(|s| s.response.matched.is_other()).count();
    100.0 * other as f64 / items.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub n: u64,
}

pub fn mean_std(values: impl IntoIterator<Item = f64>) -> Option<MeanStd> {
    let values: Vec<f64> = values.into_iter().collect();
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some(MeanStd {
        mean,
        std: var.sqrt(),
        n: values.len() as u64,
    })
}

/// Answer-length mean and deviation per question aspect.
pub fn answer_length_stats(items: &[Scored]) -> BTreeMap<Aspect, MeanStd> {
    let mut by_aspect: BTreeMap<Aspect, Vec<f64>> = BTreeMap::new();
    for s in items {
        by_aspect.entry(s.record.aspect).or_default().push(s.response.token_count as f64);
    }
    by_aspect
        .into_iter()
        .filter_map(|(a, v)| mean_std(v).map(|m| (a, m)))
        .collect()
}

/// Round a percentage to one decimal, the precision used in reports.
pub fn round1(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}
