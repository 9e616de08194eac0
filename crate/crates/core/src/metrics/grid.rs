use serde::{Deserialize, Serialize};

use super::{Scored, Tally};
use crate::render::{SceneImage, cell_rect};
use crate::world::{Cell, GRID_DIM, SectionLabel, Vocabulary};

/// Aggregates for one grid cell.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CellStat {
    pub count: u64,
    pub accuracy: Option<f64>,
    pub majority: Option<String>,
    /// Share of votes (or predictions) going to the majority label.
    pub agreement: Option<f64>,
    /// The majority was tied and broken by label order.
    pub tie: bool,
}

/// A 9x9 array of per-cell aggregates, row-major with row 0 at the top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellGrid {
    pub cells: Vec<Vec<CellStat>>,
}

impl Default for CellGrid {
    fn default() -> Self {
        CellGrid {
            cells: vec![vec![CellStat::default(); GRID_DIM as usize]; GRID_DIM as usize],
        }
    }
}

impl CellGrid {
    pub fn at(&self, cell: Cell) -> &CellStat {
        &self.cells[cell.row() as usize][cell.col() as usize]
    }

    fn at_mut(&mut self, cell: Cell) -> &mut CellStat {
        &mut self.cells[cell.row() as usize][cell.col() as usize]
    }

    pub fn total_count(&self) -> u64 {
        self.cells.iter().flatten().map(|c| c.count).sum()
    }

    /// Accuracy values as a nested array (None for empty cells).
    pub fn accuracy_rows(&self) -> Vec<Vec<Option<f64>>> {
        self.cells.iter().map(|r| r.iter().map(|c| c.accuracy).collect()).collect()
    }

    pub fn majority_rows(&self) -> Vec<Vec<Option<String>>> {
        self.cells.iter().map(|r| r.iter().map(|c| c.majority.clone()).collect()).collect()
    }
}

/// Index of the most voted label, its share of `total`, and whether it tied.
/// Ties go to the lowest index. `None` when no label has a vote.
pub fn majority(votes: &[u64], total: u64) -> Option<(usize, f64, bool)> {
    let max = *votes.iter().max()?;
    if max == 0 || total == 0 {
        return None;
    }
    let first = votes.iter().position(|&v| v == max).unwrap();
    let tie = votes.iter().filter(|&&v| v == max).count() > 1;
    Some((first, max as f64 / total as f64, tie))
}

/// Per-cell accuracy keyed on the cell of each stimulus's first object.
pub fn cell_accuracy_map(items: &[Scored]) -> CellGrid {
    let mut tallies = vec![Tally::default(); 81];
    for s in items {
        let t = &mut tallies[s.cell().index()];
        *t = t.add(s.is_correct());
    }
    let mut grid = CellGrid::default();
    for cell in Cell::all() {
        let t = tallies[cell.index()];
        let stat = grid.at_mut(cell);
        stat.count = t.total;
        stat.accuracy = t.percent();
    }
    grid
}

/// Majority-vote map from per-cell label votes. `labels` fixes the tie order;
/// `totals` may exceed the vote sums when some votes matched no label.
pub fn vote_map<'a, I>(labels: &[String], votes: I) -> CellGrid
where
    I: IntoIterator<Item = (Cell, &'a [u64], u64)>,
{
    let mut counts = vec![vec![0u64; labels.len()]; 81];
    let mut totals = vec![0u64; 81];
    for (cell, v, total) in votes {
        for (acc, x) in counts[cell.index()].iter_mut().zip(v) {
            *acc += x;
        }
        totals[cell.index()] += total;
    }
    let mut grid = CellGrid::default();
    for cell in Cell::all() {
        let stat = grid.at_mut(cell);
        stat.count = totals[cell.index()];
        if let Some((i, agreement, tie)) = majority(&counts[cell.index()], totals[cell.index()]) {
            stat.majority = Some(labels[i].clone());
            stat.agreement = Some(agreement);
            stat.tie = tie;
        }
    }
    grid
}

/// Modal predicted section label per cell, with agreement ratio and accuracy.
/// OTHER predictions count toward the denominator but vote for no label.
pub fn position_assignment_map(items: &[Scored]) -> CellGrid {
    let labels: Vec<String> = SectionLabel::ALL.iter().map(|l| l.as_str().to_string()).collect();
    let mut rows: Vec<(Cell, Vec<u64>)> = Vec::with_capacity(items.len());
    for s in items {
        let mut v = vec![0u64; labels.len()];
        if let Some(i) = s.response.matched.option().and_then(|p| labels.iter().position(|l| l == p)) {
            v[i] = 1;
        }
        rows.push((s.cell(), v));
    }
    let mut grid = vote_map(&labels, rows.iter().map(|(c, v)| (*c, v.as_slice(), 1)));
    let acc = cell_accuracy_map(items);
    for cell in Cell::all() {
        grid.at_mut(cell).accuracy = acc.at(cell).accuracy;
    }
    grid
}

/// Fixed palette for the nine section labels.
const LABEL_COLORS: [[u8; 3]; 9] = [
    [228, 26, 28],
    [55, 126, 184],
    [77, 175, 74],
    [152, 78, 163],
    [255, 127, 0],
    [166, 86, 40],
    [247, 129, 191],
    [153, 153, 153],
    [0, 139, 139],
];

/// Render a grid as an image. Cells with a majority label take the label's
/// color faded toward white as agreement drops (full color at agreement 1,
/// white at 0); cells without one are shaded gray by accuracy.
pub fn heatmap(grid: &CellGrid, labels: &[String], image_size: u32) -> SceneImage {
    let mut img = SceneImage::filled(image_size, image_size, [255, 255, 255]);
    for cell in Cell::all() {
        let stat = grid.at(cell);
        let color = match (&stat.majority, stat.agreement) {
            (Some(label), Some(agreement)) => {
                let base = labels
                    .iter()
                    .position(|l| l == label)
                    .map_or([0, 0, 0], |i| LABEL_COLORS[i % LABEL_COLORS.len()]);
                base.map(|c| (255.0 - (255.0 - c as f64) * agreement).round() as u8)
            }
            _ => match stat.accuracy {
                Some(acc) => {
                    let v = (255.0 * (1.0 - acc / 100.0)).round() as u8;
                    [v, v, v]
                }
                None => [255, 255, 255],
            },
        };
        let r = cell_rect(cell, image_size);
        for y in r.top..r.bottom {
            for x in r.left..r.right {
                img.put(x, y, color);
            }
        }
    }
    img
}
