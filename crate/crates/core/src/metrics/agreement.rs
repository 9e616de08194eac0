use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::grid::majority;
use crate::error::{Result, invalid};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRow {
    pub stimulus_id: String,
    /// Votes per category, aligned with [`AnnotationMatrix::categories`].
    pub counts: Vec<u64>,
}

impl AnnotationRow {
    pub fn raters(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Vote counts per stimulus and category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationMatrix {
    pub categories: Vec<String>,
    pub items: Vec<AnnotationRow>,
}

impl AnnotationMatrix {
    pub fn new(categories: Vec<String>, items: Vec<AnnotationRow>) -> Result<Self> {
        if let Some(bad) = items.iter().find(|r| r.counts.len() != categories.len()) {
            return Err(invalid(format!(
                "row {} has {} counts for {} categories",
                bad.stimulus_id,
                bad.counts.len(),
                categories.len()
            )));
        }
        Ok(AnnotationMatrix { categories, items })
    }

    /// The common rater count, or an error if rows differ.
    pub fn raters(&self) -> Result<u64> {
        let n = self.items.first().map_or(0, AnnotationRow::raters);
        if let Some(bad) = self.items.iter().find(|r| r.raters() != n) {
            return Err(invalid(format!(
                "stimulus {} has {} ratings, expected {n}",
                bad.stimulus_id,
                bad.raters()
            )));
        }
        Ok(n)
    }
}

/// Fleiss' kappa for a matrix with the same number of raters per item.
///
/// When every vote falls in one category the chance agreement is 1 and the
/// observed agreement is necessarily 1 as well; kappa is defined as 1 there.
pub fn fleiss_kappa(matrix: &AnnotationMatrix) -> Result<f64> {
    let n = matrix.raters()?;
    if n < 2 {
        return Err(invalid("fleiss kappa needs at least two raters per item"));
    }
    if matrix.items.is_empty() {
        return Err(invalid("fleiss kappa needs at least one item"));
    }
    let items = matrix.items.len() as f64;
    let nf = n as f64;
    let mut column = vec![0u64; matrix.categories.len()];
    let mut p_bar = 0.0;
    for row in &matrix.items {
        let sq: u64 = row.counts.iter().map(|c| c * c).sum();
        p_bar += (sq - n) as f64 / (nf * (nf - 1.0));
        for (acc, c) in column.iter_mut().zip(&row.counts) {
            *acc += c;
        }
    }
    p_bar /= items;
    let p_e: f64 = column
        .iter()
        .map(|&c| {
            let p = c as f64 / (items * nf);
            p * p
        })
        .sum();
    if p_e >= 1.0 {
        return Ok(1.0);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HumanAccuracy {
    /// Share of all individual annotations that are correct.
    pub micro: f64,
    /// Share of stimuli whose majority label is correct.
    pub majority: f64,
    pub items: u64,
    pub annotations: u64,
}

/// Human accuracy against ground truth, both over annotations and over
/// per-stimulus majority votes (ties broken by category order).
pub fn human_accuracy(matrix: &AnnotationMatrix, truths: &HashMap<String, String>) -> Result<HumanAccuracy> {
    let mut correct_votes = 0;
    let mut votes = 0;
    let mut correct_majorities = 0;
    for row in &matrix.items {
        let truth = truths
            .get(&row.stimulus_id)
            .ok_or_else(|| invalid(format!("no ground truth for {}", row.stimulus_id)))?;
        let t = matrix.categories.iter().position(|c| c == truth);
        votes += row.raters();
        if let Some(t) = t {
            correct_votes += row.counts[t];
            if majority(&row.counts, row.raters()).is_some_and(|(m, _, _)| m == t) {
                correct_majorities += 1;
            }
        }
    }
    if votes == 0 {
        return Err(invalid("no annotations"));
    }
    Ok(HumanAccuracy {
        micro: 100.0 * correct_votes as f64 / votes as f64,
        majority: 100.0 * correct_majorities as f64 / matrix.items.len() as f64,
        items: matrix.items.len() as u64,
        annotations: votes,
    })
}
