//! Cross-dataset comparison tables.
//!
//! A suite manifest names datasets (qrels + one run per model) and
//! optional named subsets. Evaluation fills a cell grid of
//! NDCG/MRR/MAP values per (model, dataset); rendering emits TSV and
//! markdown with per-dataset columns and unweighted subset averages,
//! rounding to three decimals only at print time. Missing runs score 0
//! toward averages, are flagged, and never win a column.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{load_qrels, read_run};
use crate::error::{Error, Result};
use crate::metrics::{aggregate_datasets, evaluate_run, MetricSpec, MetricTriple};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub name: String,
    pub qrels: PathBuf,
    /// model tag -> run file
    pub runs: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteManifest {
    pub datasets: Vec<DatasetEntry>,
    pub models: Vec<String>,
    #[serde(default)]
    pub subsets: BTreeMap<String, Vec<String>>,
}

impl SuiteManifest {
    pub fn load(path: &Path) -> Result<SuiteManifest> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let manifest: SuiteManifest = serde_json::from_reader(file)
            .map_err(|e| Error::parse(path, 0, format!("bad suite manifest: {e}")))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::InvalidConfig("suite has no datasets".to_string()));
        }
        if self.models.is_empty() {
            return Err(Error::InvalidConfig("suite has no models".to_string()));
        }
        let names: BTreeSet<&str> = self.datasets.iter().map(|d| d.name.as_str()).collect();
        if names.len() != self.datasets.len() {
            return Err(Error::InvalidConfig("duplicate dataset name in suite".to_string()));
        }
        for (subset, members) in &self.subsets {
            for m in members {
                if !names.contains(m.as_str()) {
                    return Err(Error::InvalidConfig(format!(
                        "subset `{subset}` references unknown dataset `{m}`"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Evaluated cells for every (model, dataset) pair, full precision.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellGrid {
    pub models: Vec<String>,
    pub datasets: Vec<String>,
    #[serde(default)]
    pub subsets: BTreeMap<String, Vec<String>>,
    /// model -> dataset -> metrics
    pub cells: BTreeMap<String, BTreeMap<String, MetricTriple>>,
    /// model -> datasets whose run was missing (scored 0, flagged)
    #[serde(default)]
    pub missing: BTreeMap<String, Vec<String>>,
}

impl CellGrid {
    pub fn load(path: &Path) -> Result<CellGrid> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let grid: CellGrid = serde_json::from_reader(file)
            .map_err(|e| Error::parse(path, 0, format!("bad cell grid: {e}")))?;
        Ok(grid)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(file, self).map_err(|e| Error::parse(path, 0, e.to_string()))
    }

    pub fn cell(&self, model: &str, dataset: &str) -> Option<MetricTriple> {
        self.cells.get(model).and_then(|row| row.get(dataset)).copied()
    }

    pub fn is_missing(&self, model: &str, dataset: &str) -> bool {
        self.missing
            .get(model)
            .is_some_and(|list| list.iter().any(|d| d == dataset))
    }

    pub fn has_missing(&self) -> bool {
        self.missing.values().any(|v| !v.is_empty())
    }

    /// Unweighted subset average of one metric for one model; missing
    /// datasets contribute their recorded 0 cells.
    pub fn subset_average(
        &self,
        model: &str,
        members: &[String],
        metric: MetricKind,
    ) -> Result<f64> {
        let row = self
            .cells
            .get(model)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown model `{model}`")))?;
        let per_dataset: BTreeMap<String, f64> = row
            .iter()
            .map(|(d, t)| (d.clone(), metric.of(t)))
            .collect();
        aggregate_datasets(&per_dataset, Some(members))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Ndcg,
    Mrr,
    Map,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [MetricKind::Ndcg, MetricKind::Mrr, MetricKind::Map];

    pub fn of(&self, t: &MetricTriple) -> f64 {
        match self {
            MetricKind::Ndcg => t.ndcg,
            MetricKind::Mrr => t.mrr,
            MetricKind::Map => t.map,
        }
    }

    pub fn label(&self, k: usize) -> String {
        match self {
            MetricKind::Ndcg => format!("ndcg@{k}"),
            MetricKind::Mrr => format!("mrr@{k}"),
            MetricKind::Map => format!("map@{k}"),
        }
    }
}

impl std::str::FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "ndcg" => Ok(MetricKind::Ndcg),
            "mrr" => Ok(MetricKind::Mrr),
            "map" => Ok(MetricKind::Map),
            other => Err(format!("unknown metric `{other}` (expected ndcg, mrr, or map)")),
        }
    }
}

/// Evaluate every (model, dataset) pair of a manifest into a cell grid.
/// A missing run file is an error unless `allow_missing`, in which case
/// the cell scores 0 and the pair is flagged.
type ModelCells = BTreeMap<String, Option<MetricTriple>>;

pub fn run_suite(
    manifest: &SuiteManifest,
    spec: &MetricSpec,
    allow_missing: bool,
) -> Result<CellGrid> {
    manifest.validate()?;
    spec.validate()?;
    let per_dataset: Vec<Result<(String, ModelCells)>> = manifest
        .datasets
        .par_iter()
        .map(|entry| {
            let qrels = load_qrels(&entry.qrels)?;
            let mut cells = BTreeMap::new();
            for model in &manifest.models {
                let run_path = entry.runs.get(model);
                let available = run_path.map(|p| p.exists()).unwrap_or(false);
                if !available {
                    if !allow_missing {
                        return Err(Error::InvalidConfig(format!(
                            "model `{model}` has no run for dataset `{}`",
                            entry.name
                        )));
                    }
                    cells.insert(model.clone(), None);
                    continue;
                }
                let run = read_run(run_path.expect("checked above"))?;
                let report = evaluate_run(&run, &qrels, spec)?;
                cells.insert(model.clone(), Some(report.mean));
            }
            Ok((entry.name.clone(), cells))
        })
        .collect();

    let mut grid = CellGrid {
        models: manifest.models.clone(),
        datasets: manifest.datasets.iter().map(|d| d.name.clone()).collect(),
        subsets: manifest.subsets.clone(),
        cells: BTreeMap::new(),
        missing: BTreeMap::new(),
    };
    for result in per_dataset {
        let (dataset, cells) = result?;
        for (model, triple) in cells {
            let row = grid.cells.entry(model.clone()).or_default();
            match triple {
                Some(t) => {
                    row.insert(dataset.clone(), t);
                }
                None => {
                    row.insert(dataset.clone(), MetricTriple::default());
                    grid.missing.entry(model).or_default().push(dataset.clone());
                }
            }
        }
    }
    Ok(grid)
}

fn format_cell(v: f64) -> String {
    format!("{v:.3}")
}

/// Column layout shared by both renderers: per-dataset columns then one
/// average column per named subset (or `avg` over everything when no
/// subsets are named), repeated for each metric.
fn column_plan(grid: &CellGrid) -> Vec<(MetricKind, ColumnKind)> {
    let mut plan = Vec::new();
    let subsets: Vec<(String, Vec<String>)> = if grid.subsets.is_empty() {
        vec![("avg".to_string(), grid.datasets.clone())]
    } else {
        grid.subsets.iter().map(|(n, m)| (n.clone(), m.clone())).collect()
    };
    for metric in MetricKind::ALL {
        for d in &grid.datasets {
            plan.push((metric, ColumnKind::Dataset(d.clone())));
        }
        for (name, members) in &subsets {
            plan.push((metric, ColumnKind::SubsetAvg(name.clone(), members.clone())));
        }
    }
    plan
}

#[derive(Debug, Clone)]
enum ColumnKind {
    Dataset(String),
    SubsetAvg(String, Vec<String>),
}

/// One table cell: the value (None prints `-`) and bold eligibility.
type Cell = (Option<f64>, bool);

struct RenderedTable {
    header: Vec<String>,
    rows: Vec<(String, Vec<Cell>)>,
}

fn render_values(grid: &CellGrid, k: usize) -> Result<RenderedTable> {
    let plan = column_plan(grid);
    let mut header = vec!["model".to_string()];
    for (metric, col) in &plan {
        let name = match col {
            ColumnKind::Dataset(d) => format!("{}:{}", metric.label(k), d),
            ColumnKind::SubsetAvg(name, _) => format!("{}:avg({})", metric.label(k), name),
        };
        header.push(name);
    }
    let mut rows = Vec::with_capacity(grid.models.len());
    for model in &grid.models {
        let mut cells = Vec::with_capacity(plan.len());
        for (metric, col) in &plan {
            match col {
                ColumnKind::Dataset(d) => {
                    if grid.is_missing(model, d) {
                        cells.push((None, false));
                    } else {
                        let triple = grid.cell(model, d).ok_or_else(|| {
                            Error::InvalidConfig(format!("no cell for `{model}` on `{d}`"))
                        })?;
                        cells.push((Some(metric.of(&triple)), true));
                    }
                }
                ColumnKind::SubsetAvg(_, members) => {
                    let value = grid.subset_average(model, members, *metric)?;
                    let complete = members.iter().all(|d| !grid.is_missing(model, d));
                    cells.push((Some(value), complete));
                }
            }
        }
        rows.push((model.clone(), cells));
    }
    Ok(RenderedTable { header, rows })
}

/// Per-column best values (ties all marked) among bold-eligible cells.
fn best_per_column(table: &RenderedTable) -> Vec<Option<f64>> {
    let width = table.header.len() - 1;
    let mut best = vec![None; width];
    for (_, cells) in &table.rows {
        for (i, (value, eligible)) in cells.iter().enumerate() {
            if let (Some(v), true) = (value, eligible) {
                best[i] = Some(best[i].map_or(*v, |b: f64| b.max(*v)));
            }
        }
    }
    best
}

/// Render the grid as TSV. Missing cells print `-`; subset averages over
/// a missing run are suffixed with `*`.
pub fn render_tsv(grid: &CellGrid, k: usize) -> Result<String> {
    let table = render_values(grid, k)?;
    let mut out = table.header.join("\t");
    out.push('\n');
    for (model, cells) in &table.rows {
        out.push_str(model);
        for (value, eligible) in cells {
            out.push('\t');
            match value {
                None => out.push('-'),
                Some(v) => {
                    out.push_str(&format_cell(*v));
                    if !eligible {
                        out.push('*');
                    }
                }
            }
        }
        out.push('\n');
    }
    Ok(out)
}

/// Render the grid as an aligned markdown table with the best value
/// per column bolded (all ties bolded, missing-run cells never bolded).
pub fn render_markdown(grid: &CellGrid, k: usize) -> Result<String> {
    let table = render_values(grid, k)?;
    let best = best_per_column(&table);
    let mut text_rows: Vec<Vec<String>> = vec![table.header.clone()];
    for (model, cells) in &table.rows {
        let mut row = Vec::with_capacity(cells.len() + 1);
        row.push(model.clone());
        for (i, (value, eligible)) in cells.iter().enumerate() {
            row.push(match value {
                None => "-".to_string(),
                Some(v) => {
                    let cell = format_cell(*v);
                    // ties compare at display precision
                    let is_best =
                        *eligible && best[i].is_some_and(|b| format_cell(b) == cell);
                    if is_best {
                        format!("**{cell}**")
                    } else if *eligible {
                        cell
                    } else {
                        format!("{cell}*")
                    }
                }
            });
        }
        text_rows.push(row);
    }
    let widths: Vec<usize> = (0..table.header.len())
        .map(|c| text_rows.iter().map(|r| r[c].len()).max().unwrap_or(3).max(3))
        .collect();
    let mut out = String::new();
    for (r, row) in text_rows.iter().enumerate() {
        out.push('|');
        for (c, cell) in row.iter().enumerate() {
            out.push_str(&format!(" {cell:<width$} |", width = widths[c]));
        }
        out.push('\n');
        if r == 0 {
            out.push('|');
            for &w in &widths {
                out.push_str(&format!(" {:-<width$} |", "", width = w));
            }
            out.push('\n');
        }
    }
    if grid.has_missing() {
        out.push_str("\n`*` average includes a missing run scored as 0.\n");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triple(ndcg: f64, mrr: f64, map: f64) -> MetricTriple {
        MetricTriple { ndcg, mrr, map }
    }

    fn grid_with(models: &[&str], datasets: &[&str]) -> CellGrid {
        CellGrid {
            models: models.iter().map(|s| s.to_string()).collect(),
            datasets: datasets.iter().map(|s| s.to_string()).collect(),
            subsets: BTreeMap::new(),
            cells: BTreeMap::new(),
            missing: BTreeMap::new(),
        }
    }

    #[test]
    fn single_model_single_dataset_average_is_identity() {
        let mut grid = grid_with(&["m"], &["d"]);
        grid.cells
            .entry("m".to_string())
            .or_default()
            .insert("d".to_string(), triple(0.5, 0.6, 0.7));
        let avg = grid
            .subset_average("m", &["d".to_string()], MetricKind::Ndcg)
            .unwrap();
        assert_eq!(avg, 0.5);
        let tsv = render_tsv(&grid, 10).unwrap();
        assert!(tsv.contains("0.500"));
        assert!(tsv.contains("ndcg@10:avg(avg)"));
    }

    #[test]
    fn markdown_bolds_all_ties() {
        let mut grid = grid_with(&["m1", "m2"], &["d"]);
        for m in ["m1", "m2"] {
            grid.cells
                .entry(m.to_string())
                .or_default()
                .insert("d".to_string(), triple(0.5, 0.6, 0.7));
        }
        let md = render_markdown(&grid, 10).unwrap();
        // tied ndcg cell and its avg column are bolded for both models
        assert_eq!(md.matches("**0.500**").count(), 4);
    }

    #[test]
    fn missing_cells_print_dash_and_never_bold() {
        let mut grid = grid_with(&["m1", "m2"], &["d"]);
        grid.cells
            .entry("m1".to_string())
            .or_default()
            .insert("d".to_string(), triple(0.0, 0.0, 0.0));
        grid.cells
            .entry("m2".to_string())
            .or_default()
            .insert("d".to_string(), triple(0.4, 0.4, 0.4));
        grid.missing
            .entry("m1".to_string())
            .or_default()
            .push("d".to_string());
        let md = render_markdown(&grid, 10).unwrap();
        let m1_row = md.lines().find(|l| l.starts_with("| m1")).unwrap();
        assert!(m1_row.contains(" - "), "row: {m1_row}");
        assert!(!m1_row.contains("**"));
        assert!(md.contains("**0.400**"));
        assert!(md.contains("missing run"));
        let tsv = render_tsv(&grid, 10).unwrap();
        assert!(tsv.contains("\t-"));
        assert!(tsv.contains("0.000*"));
    }

    #[test]
    fn suite_manifest_validates_subset_names() {
        let manifest = SuiteManifest {
            datasets: vec![DatasetEntry {
                name: "d1".to_string(),
                qrels: PathBuf::from("q.txt"),
                runs: BTreeMap::new(),
            }],
            models: vec!["m".to_string()],
            subsets: BTreeMap::from([("bad".to_string(), vec!["nope".to_string()])]),
        };
        assert!(manifest.validate().is_err());
    }
}
