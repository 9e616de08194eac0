use std::fs;
use std::path::{Path, PathBuf};

use civet_core::answer::ModelResponse;
use civet_core::manifest::{ManifestRecord, atomic_write, read_jsonl, read_manifest};
use civet_core::metrics::{AnnotationMatrix, CellGrid, heatmap};
use civet_core::report::{Report, ReportOptions, build_report};
use civet_core::world::{SectionLabel, Vocabulary};

use crate::{CliError, Result};

const HEATMAP_SIZE: u32 = 336;

#[derive(Debug, Clone, Default)]
pub struct ReportArgs {
    pub manifests: Vec<PathBuf>,
    pub responses: Vec<PathBuf>,
    pub out: PathBuf,
    pub heatmaps: bool,
    /// Object description whose position answers build the assignment map.
    pub position_object: Option<String>,
    /// Exported annotation matrix from a finished campaign.
    pub annotations: Option<PathBuf>,
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(std::io::Error::other(e))
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(std::io::Error::other(e.to_string())))?;
    atomic_write(path, |out| {
        std::io::Write::write_all(out, &bytes)?;
        Ok(())
    })?;
    Ok(())
}

fn int(v: Option<f64>) -> String {
    v.map(|x| format!("{}", x.round() as i64)).unwrap_or_default()
}

fn grid_accuracy_rows(grid: &CellGrid) -> Vec<Vec<String>> {
    grid.accuracy_rows()
        .into_iter()
        .map(|row| row.into_iter().map(int).collect())
        .collect()
}

/// Majority labels per cell; a trailing `*` marks a tie.
fn grid_label_rows(grid: &CellGrid) -> Vec<Vec<String>> {
    grid.cells
        .iter()
        .map(|row| {
            row.iter()
                .map(|c| match &c.majority {
                    Some(m) if c.tie => format!("{m}*"),
                    Some(m) => m.clone(),
                    None => String::new(),
                })
                .collect()
        })
        .collect()
}

const GRID_HEADER: [&str; 9] = ["c0", "c1", "c2", "c3", "c4", "c5", "c6", "c7", "c8"];

fn write_png(path: &Path, grid: &CellGrid, labels: &[String]) -> Result<()> {
    let img = heatmap(grid, labels, HEATMAP_SIZE);
    atomic_write(path, |w| img.encode_png(w))?;
    Ok(())
}

/// Build the report and write `report.json` plus CSV tables (and heatmap
/// PNGs when asked) into `args.out`.
pub fn cmd_report(args: &ReportArgs) -> Result<Report> {
    if args.manifests.is_empty() {
        return Err(CliError::Config("at least one --manifest is required".into()));
    }
    let mut manifest: Vec<ManifestRecord> = Vec::new();
    for m in &args.manifests {
        manifest.extend(read_manifest(m)?);
    }
    let mut responses: Vec<ModelResponse> = Vec::new();
    for r in &args.responses {
        responses.extend(read_jsonl::<ModelResponse>(r)?);
    }
    let annotations = match &args.annotations {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            let m: AnnotationMatrix = serde_json::from_str(&text)
                .map_err(|e| CliError::Input(format!("annotation matrix {}: {e}", path.display())))?;
            Some(AnnotationMatrix::new(m.categories, m.items)?)
        }
        None => None,
    };
    let report = build_report(
        &manifest,
        &responses,
        &ReportOptions {
            position_object: args.position_object.clone(),
            annotations,
        },
    )?;
    if let Some(w) = &report.coverage.warning {
        log::warn!("{w}");
    }

    let out = &args.out;
    fs::create_dir_all(out)?;
    atomic_write(&out.join("report.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &report).map_err(std::io::Error::from)?;
        Ok(())
    })?;

    write_csv(
        &out.join("accuracy.csv"),
        &["aspect", "n", "accuracy", "random_baseline", "other_rate", "answer_length_mean", "answer_length_std"],
        report.aspects.iter().map(|a| {
            vec![
                a.aspect.as_str().to_string(),
                a.n.to_string(),
                int(a.accuracy),
                int(Some(a.random_baseline)),
                int(Some(a.other_rate)),
                a.answer_length.map(|l| format!("{:.2}", l.mean)).unwrap_or_default(),
                a.answer_length.map(|l| format!("{:.2}", l.std)).unwrap_or_default(),
            ]
        }),
    )?;
    write_csv(
        &out.join("f1.csv"),
        &["aspect", "class", "precision", "recall", "f1", "support"],
        report.aspects.iter().flat_map(|a| {
            a.f1.classes.iter().map(move |c| {
                vec![
                    a.aspect.as_str().to_string(),
                    c.class.clone(),
                    int(Some(c.precision)),
                    int(Some(c.recall)),
                    int(Some(c.f1)),
                    c.support.to_string(),
                ]
            })
        }),
    )?;
    write_csv(
        &out.join("by_value.csv"),
        &["aspect", "value", "correct", "total", "accuracy"],
        report.aspects.iter().flat_map(|a| {
            a.by_value.iter().map(move |(v, t)| {
                vec![
                    a.aspect.as_str().to_string(),
                    v.clone(),
                    t.correct.to_string(),
                    t.total.to_string(),
                    int(t.percent()),
                ]
            })
        }),
    )?;
    for a in &report.aspects {
        write_csv(
            &out.join(format!("cells.{}.csv", a.aspect.as_str())),
            &GRID_HEADER,
            grid_accuracy_rows(&a.cell_accuracy),
        )?;
        if args.heatmaps {
            write_png(&out.join(format!("cells.{}.png", a.aspect.as_str())), &a.cell_accuracy, &[])?;
        }
    }
    let sections: Vec<String> = SectionLabel::ALL.iter().map(|l| l.as_str().to_string()).collect();
    if let Some(pm) = &report.position_map {
        write_csv(&out.join("position_map.csv"), &GRID_HEADER, grid_label_rows(&pm.grid))?;
        if args.heatmaps {
            write_png(&out.join("position_map.png"), &pm.grid, &sections)?;
        }
    }
    if let Some(h) = &report.human {
        write_csv(&out.join("human_position_map.csv"), &GRID_HEADER, grid_label_rows(&h.position_map))?;
        if args.heatmaps {
            write_png(&out.join("human_position_map.png"), &h.position_map, &sections)?;
        }
    }
    Ok(report)
}
