//! CSV dumps of the interaction matrices of a single pair.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{InteractionTensors, Model, SideInput};
use crate::error::{Error, Result};

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Writes an `N x M` grid: header row of document tokens, then one row per
/// query token led by the token itself.
pub fn write_matrix_csv(
    path: &Path,
    row_labels: &[String],
    col_labels: &[String],
    values: &[f64],
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let m = col_labels.len();
    let mut line = String::from("query\\doc");
    for c in col_labels {
        line.push(',');
        line.push_str(&csv_field(c));
    }
    writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    for (i, r) in row_labels.iter().enumerate() {
        let mut line = csv_field(r);
        for v in &values[i * m..(i + 1) * m] {
            line.push(',');
            line.push_str(&format!("{v:.6}"));
        }
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `S.csv`, `G.csv`, `A.csv` and `C.csv` for one pair into `dir` and
/// returns the written paths in that order.
pub fn dump_matrices(
    model: &Model,
    q: &SideInput,
    d: &SideInput,
    dir: &Path,
) -> Result<(InteractionTensors, Vec<PathBuf>)> {
    let qp = model.project_side(q);
    let dp = model.project_side(d);
    let it = model.interactions(&qp, &dp);
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for (name, values) in [("S", &it.s), ("G", &it.g), ("A", &it.a), ("C", &it.c)] {
        let path = dir.join(format!("{name}.csv"));
        write_matrix_csv(&path, &q.tokens, &d.tokens, values)?;
        paths.push(path);
    }
    Ok((it, paths))
}
