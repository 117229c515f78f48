//! Per-image cell tables, CSV ingestion, and the dataset manifest.

use crate::dense::Dense;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

/// One segmented cell: centroid in µm, size in arbitrary positive units,
/// biomarker vector, optional cell-type annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub cell_id: u64,
    pub x: f64,
    pub y: f64,
    pub size: f64,
    pub biomarkers: Vec<f64>,
    pub cell_type: Option<String>,
}

/// All cells of one image plus the biomarker column names.
#[derive(Debug, Clone, PartialEq)]
pub struct CellTable {
    pub image_id: String,
    pub biomarker_names: Vec<String>,
    pub cells: Vec<Cell>,
}

impl CellTable {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Downstream feature dimension: biomarkers plus the size column.
    pub fn feature_dim(&self) -> usize {
        self.biomarker_names.len() + 1
    }

    pub fn positions(&self) -> Vec<(f64, f64)> {
        self.cells.iter().map(|c| (c.x, c.y)).collect()
    }

    pub fn fully_typed(&self) -> bool {
        self.cells.iter().all(|c| c.cell_type.is_some())
    }

    pub fn any_typed(&self) -> bool {
        self.cells.iter().any(|c| c.cell_type.is_some())
    }

    /// Node feature matrix: biomarkers with size appended last, row per cell
    /// in table order.
    pub fn feature_matrix(&self) -> Dense {
        let f = self.feature_dim();
        let mut m = Dense::zeros(self.len(), f);
        for (i, c) in self.cells.iter().enumerate() {
            let row = m.row_mut(i);
            row[..f - 1].copy_from_slice(&c.biomarkers);
            row[f - 1] = c.size;
        }
        m
    }
}

/// Maps logical columns onto CSV header names. An empty `biomarkers` list
/// means: every column not otherwise mapped is a biomarker, in header order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMapping {
    #[serde(default = "default_id_col")]
    pub id: String,
    #[serde(default = "default_x_col")]
    pub x: String,
    #[serde(default = "default_y_col")]
    pub y: String,
    #[serde(default = "default_size_col")]
    pub size: String,
    #[serde(default)]
    pub biomarkers: Vec<String>,
    #[serde(default = "default_type_col")]
    pub cell_type: Option<String>,
}

fn default_id_col() -> String {
    "cell_id".into()
}
fn default_x_col() -> String {
    "x".into()
}
fn default_y_col() -> String {
    "y".into()
}
fn default_size_col() -> String {
    "size".into()
}
fn default_type_col() -> Option<String> {
    Some("cell_type".into())
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            id: default_id_col(),
            x: default_x_col(),
            y: default_y_col(),
            size: default_size_col(),
            biomarkers: Vec::new(),
            cell_type: default_type_col(),
        }
    }
}

fn parse_finite(raw: &str, row: usize, column: &str) -> Result<f64> {
    let v: f64 = raw.trim().parse().map_err(|_| Error::NonFiniteValue {
        row,
        column: column.to_string(),
    })?;
    if !v.is_finite() {
        return Err(Error::NonFiniteValue { row, column: column.to_string() });
    }
    Ok(v)
}

/// Load and validate one cell table from CSV.
///
/// Row numbers in errors are 1-based data rows (the header is row 0).
/// The cell-type column is optional; absence is recorded as `None` types.
pub fn load_cell_table(path: &Path, image_id: &str, schema: &ColumnMapping) -> Result<CellTable> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.to_string()).collect();

    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn { column: name.to_string() })
    };
    let id_c = col(&schema.id)?;
    let x_c = col(&schema.x)?;
    let y_c = col(&schema.y)?;
    let size_c = col(&schema.size)?;
    let type_c = match &schema.cell_type {
        Some(name) => headers.iter().position(|h| h == name),
        None => None,
    };

    let bio_cols: Vec<(usize, String)> = if schema.biomarkers.is_empty() {
        let reserved: BTreeSet<usize> =
            [Some(id_c), Some(x_c), Some(y_c), Some(size_c), type_c].into_iter().flatten().collect();
        headers
            .iter()
            .enumerate()
            .filter(|(i, _)| !reserved.contains(i))
            .map(|(i, h)| (i, h.clone()))
            .collect()
    } else {
        let mut cols = Vec::with_capacity(schema.biomarkers.len());
        for name in &schema.biomarkers {
            cols.push((col(name)?, name.clone()));
        }
        cols
    };

    let mut cells = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record?;
        let field = |c: usize| record.get(c).unwrap_or("");

        let cell_id: u64 = field(id_c).trim().parse().map_err(|_| Error::NonFiniteValue {
            row,
            column: schema.id.clone(),
        })?;
        if !seen.insert(cell_id) {
            return Err(Error::DuplicateCellId { id: cell_id });
        }
        let x = parse_finite(field(x_c), row, &schema.x)?;
        let y = parse_finite(field(y_c), row, &schema.y)?;
        let size = parse_finite(field(size_c), row, &schema.size)?;
        if size <= 0.0 {
            return Err(Error::NonFiniteValue { row, column: schema.size.clone() });
        }
        let mut biomarkers = Vec::with_capacity(bio_cols.len());
        for (c, name) in &bio_cols {
            biomarkers.push(parse_finite(field(*c), row, name)?);
        }
        let cell_type = type_c.and_then(|c| {
            let raw = field(c).trim();
            if raw.is_empty() { None } else { Some(raw.to_string()) }
        });
        cells.push(Cell { cell_id, x, y, size, biomarkers, cell_type });
    }
    if cells.is_empty() {
        return Err(Error::EmptyTable);
    }
    Ok(CellTable {
        image_id: image_id.to_string(),
        biomarker_names: bio_cols.into_iter().map(|(_, n)| n).collect(),
        cells,
    })
}

/// Write a table as CSV using canonical column names plus the table's
/// biomarker names. Deterministic byte output for fixed input.
pub fn write_cell_table(table: &CellTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["cell_id".to_string(), "x".into(), "y".into(), "size".into()];
    header.extend(table.biomarker_names.iter().cloned());
    header.push("cell_type".into());
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for c in &table.cells {
        record.clear();
        record.push(c.cell_id.to_string());
        record.push(format!("{:?}", c.x));
        record.push(format!("{:?}", c.y));
        record.push(format!("{:?}", c.size));
        for b in &c.biomarkers {
            record.push(format!("{b:?}"));
        }
        record.push(c.cell_type.clone().unwrap_or_default());
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

// ── Manifest ────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Binary,
    Hazard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub kind: TaskKind,
}

/// Per-image, per-task label. Binary labels serialize as bare 0/1; hazard
/// labels as `{"time": t, "event": 0|1}` where event 0 means censored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Binary(u8),
    Hazard { time: f64, event: u8 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub image_id: String,
    pub path: String,
    pub group_id: String,
}

/// Dataset manifest: images with group assignments, group-level splits,
/// task declarations, and labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub images: Vec<ImageEntry>,
    pub splits: BTreeMap<String, Split>,
    pub tasks: Vec<TaskSpec>,
    pub labels: BTreeMap<String, BTreeMap<String, Label>>,
    #[serde(default)]
    pub columns: ColumnMapping,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.images.is_empty() {
            return Err(Error::Manifest { reason: "no images listed".into() });
        }
        if self.tasks.is_empty() {
            return Err(Error::Manifest { reason: "at least one task is required".into() });
        }
        let mut names = BTreeSet::new();
        for t in &self.tasks {
            if !names.insert(&t.name) {
                return Err(Error::Manifest { reason: format!("duplicate task name `{}`", t.name) });
            }
        }
        let mut ids = BTreeSet::new();
        for img in &self.images {
            if !ids.insert(&img.image_id) {
                return Err(Error::Manifest {
                    reason: format!("duplicate image id `{}`", img.image_id),
                });
            }
            if !self.splits.contains_key(&img.group_id) {
                return Err(Error::Manifest {
                    reason: format!(
                        "image `{}` has group `{}` with no split assignment",
                        img.image_id, img.group_id
                    ),
                });
            }
        }
        for (image_id, by_task) in &self.labels {
            if !ids.contains(image_id) {
                return Err(Error::Manifest {
                    reason: format!("labels reference unknown image `{image_id}`"),
                });
            }
            for (task, label) in by_task {
                let Some(spec) = self.tasks.iter().find(|t| &t.name == task) else {
                    return Err(Error::Manifest {
                        reason: format!("labels reference unknown task `{task}`"),
                    });
                };
                match (spec.kind, label) {
                    (TaskKind::Binary, Label::Binary(v)) if *v <= 1 => {}
                    (TaskKind::Hazard, Label::Hazard { time, event })
                        if *time > 0.0 && *event <= 1 => {}
                    _ => {
                        return Err(Error::Manifest {
                            reason: format!("invalid label for image `{image_id}`, task `{task}`"),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn split_of(&self, image: &ImageEntry) -> Split {
        self.splits[&image.group_id]
    }

    pub fn images_in(&self, split: Split) -> Vec<&ImageEntry> {
        self.images.iter().filter(|img| self.split_of(img) == split).collect()
    }

    pub fn label(&self, image_id: &str, task: &str) -> Option<&Label> {
        self.labels.get(image_id).and_then(|m| m.get(task))
    }
}
