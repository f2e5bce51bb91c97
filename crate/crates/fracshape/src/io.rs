//! File formats: field CSV, mask JSON, history CSV, and mask-source resolution.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use fracshape_core::shapeopt::HistoryRow;
use fracshape_core::{Field, Grid, GridSpec, Mask};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::MaskSource;
use crate::error::CliError;

/// `node_index,x[,y],value` over interior nodes; floats in shortest round-trip form.
pub fn field_csv(u: &Field) -> String {
    let g = u.grid();
    let mut out = String::from(if g.dim() == 1 { "node_index,x,value\n" } else { "node_index,x,y,value\n" });
    for &n in g.interior_nodes() {
        let x = g.coords(n);
        if g.dim() == 1 {
            let _ = writeln!(out, "{n},{:?},{:?}", x[0], u.value(n));
        } else {
            let _ = writeln!(out, "{n},{:?},{:?},{:?}", x[0], x[1], u.value(n));
        }
    }
    out
}

pub fn history_csv(rows: &[HistoryRow]) -> String {
    let mut out = String::from("iter,cost,volume\n");
    for r in rows {
        let _ = writeln!(out, "{},{:?},{:?}", r.iter, r.cost, r.volume);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridHeader {
    pub dim: usize,
    pub nodes_per_axis: usize,
    pub padding_cells: usize,
    pub box_min: Vec<f64>,
    pub box_max: Vec<f64>,
}

impl From<&GridSpec> for GridHeader {
    fn from(s: &GridSpec) -> Self {
        GridHeader {
            dim: s.dim,
            nodes_per_axis: s.nodes_per_axis,
            padding_cells: s.padding_cells,
            box_min: s.box_min.clone(),
            box_max: s.box_max.clone(),
        }
    }
}

/// Mask file: grid header plus 0/1 per cell, first axis fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskFile {
    pub grid: GridHeader,
    pub cells: Vec<u8>,
}

impl MaskFile {
    pub fn of(mask: &Mask) -> Self {
        MaskFile {
            grid: mask.grid().spec().into(),
            cells: mask.cells().iter().map(|&b| u8::from(b)).collect(),
        }
    }
}

fn cells_to_mask(grid: &Arc<Grid>, cells: &[u8]) -> Result<Mask, CliError> {
    if let Some(v) = cells.iter().find(|&&v| v > 1) {
        return Err(CliError::validation(format!("mask entries must be 0 or 1, found {v}")));
    }
    Ok(Mask::from_cells(grid, cells.iter().map(|&v| v == 1).collect())?)
}

fn parse_arg(name: &str, prefix: &str) -> Option<String> {
    name.strip_prefix(prefix)?.strip_suffix(')').map(|s| s.trim().to_string())
}

fn named_mask(grid: &Arc<Grid>, name: &str) -> Result<Mask, CliError> {
    let spec = grid.spec();
    let centre: Vec<f64> = (0..spec.dim).map(|i| 0.5 * (spec.box_min[i] + spec.box_max[i])).collect();
    let mask = match name {
        "all" => Mask::full(grid),
        "empty" => Mask::empty(grid),
        "left-half" => Mask::from_predicate(grid, |x| x[0] < centre[0]),
        "right-half" => Mask::from_predicate(grid, |x| x[0] > centre[0]),
        "alternating" => {
            let cells: Vec<usize> = (0..grid.interior_count()).filter(|c| c % 2 == 0).collect();
            Mask::from_cell_indices(grid, &cells)?
        }
        _ => {
            if let Some(r) = parse_arg(name, "disk(") {
                let r: f64 = r.parse().map_err(|_| CliError::validation(format!("bad radius in mask `{name}`")))?;
                Mask::from_predicate(grid, |x| {
                    let d2: f64 = (0..spec.dim).map(|i| (x[i] - centre[i]).powi(2)).sum();
                    d2 < r * r
                })
            } else if let Some(seed) = parse_arg(name, "random(") {
                let seed: u64 = seed.parse().map_err(|_| CliError::validation(format!("bad seed in mask `{name}`")))?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Mask::from_cells(grid, (0..grid.interior_count()).map(|_| rng.gen_bool(0.5)).collect())?
            } else {
                return Err(CliError::validation(format!("unknown mask `{name}`")));
            }
        }
    };
    Ok(mask)
}

/// Reads a mask file, either a [`MaskFile`] or a bare 0/1 array.
pub fn read_mask_file(grid: &Arc<Grid>, path: &Path) -> Result<Mask, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("cannot read mask file {}: {e}", path.display())))?;
    let bad = |e: serde_json::Error| CliError::validation(format!("mask file {}: {e}", path.display()));
    let value: serde_json::Value = serde_json::from_str(&text).map_err(bad)?;
    if value.is_array() {
        let cells: Vec<u8> = serde_json::from_value(value).map_err(bad)?;
        return cells_to_mask(grid, &cells);
    }
    let file: MaskFile = serde_json::from_value(value).map_err(bad)?;
    if file.grid != GridHeader::from(grid.spec()) {
        return Err(CliError::validation(format!("mask file {} was written for a different grid", path.display())));
    }
    cells_to_mask(grid, &file.cells)
}

pub fn resolve_mask(grid: &Arc<Grid>, src: &MaskSource) -> Result<Mask, CliError> {
    match src {
        MaskSource::Named(n) => named_mask(grid, n),
        MaskSource::Cells(c) => cells_to_mask(grid, c),
        MaskSource::File { file } => read_mask_file(grid, file),
    }
}

/// `k` distinct cells drawn with a seeded generator.
pub fn random_cells(grid: &Arc<Grid>, k: usize, seed: u64) -> Result<Mask, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, grid.interior_count(), k).into_vec();
    idx.sort_unstable();
    Ok(Mask::from_cell_indices(grid, &idx)?)
}

pub fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(dim: usize, n: usize) -> Arc<Grid> {
        Grid::new(GridSpec::unit(dim, n, 2)).unwrap()
    }

    #[test]
    fn named_masks() {
        let g = grid(1, 10);
        assert_eq!(named_mask(&g, "left-half").unwrap().cell_indices(), vec![0, 1, 2, 3, 4]);
        assert_eq!(named_mask(&g, "right-half").unwrap().cell_indices(), vec![5, 6, 7, 8, 9]);
        assert_eq!(named_mask(&g, "alternating").unwrap().count(), 5);
        assert!(named_mask(&g, "empty").unwrap().is_empty());
        let d = named_mask(&grid(2, 10), "disk(0.3)").unwrap();
        assert!(d.count() > 20 && d.count() < 36);
        assert_eq!(named_mask(&g, "random(7)").unwrap(), named_mask(&g, "random(7)").unwrap());
        assert!(named_mask(&g, "triangle").is_err());
        assert!(named_mask(&g, "disk(x)").is_err());
    }

    #[test]
    fn inline_cells_checked() {
        let g = grid(1, 4);
        assert_eq!(cells_to_mask(&g, &[1, 0, 0, 1]).unwrap().cell_indices(), vec![0, 3]);
        assert!(cells_to_mask(&g, &[1, 0, 0]).is_err());
        assert!(cells_to_mask(&g, &[1, 0, 2, 0]).is_err());
    }

    #[test]
    fn mask_file_round_trip() {
        let g = grid(2, 4);
        let m = Mask::from_cell_indices(&g, &[0, 5, 15]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        fs::write(&path, serde_json::to_string(&MaskFile::of(&m)).unwrap()).unwrap();
        assert_eq!(read_mask_file(&g, &path).unwrap(), m);
        assert!(read_mask_file(&grid(2, 5), &path).is_err());
        fs::write(&path, "[1,0,0,0, 0,0,0,0, 0,0,0,0, 0,0,0,1]").unwrap();
        assert_eq!(read_mask_file(&g, &path).unwrap().cell_indices(), vec![0, 15]);
    }

    #[test]
    fn field_csv_layout() {
        let g = grid(2, 2);
        let u = Field::from_fn(&g, |x| x[0] + 10.0 * x[1]);
        let csv = field_csv(&u);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "node_index,x,y,value");
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[1], format!("{},0.25,0.25,2.75", g.cell_node(0)));
    }

    #[test]
    fn random_cells_sized_and_seeded() {
        let g = grid(1, 12);
        let a = random_cells(&g, 4, 3).unwrap();
        assert_eq!(a.count(), 4);
        assert_eq!(a, random_cells(&g, 4, 3).unwrap());
    }
}
