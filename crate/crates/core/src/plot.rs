//! Plot-ready columns comparing a deterministic and a stochastic run.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io::{write_table, Table};
use crate::manifold::Tube;
use crate::model::StateNames;
use crate::solver::Trajectory;

pub const PLOT_COLUMNS: [&str; 6] = ["tau", "deterministic", "stochastic", "center", "tube_lower", "tube_upper"];

/// One table per fast variable; tube bounds are `center ± h sqrt(L_ii)`,
/// the axis-aligned extent of the tube cross-section.
pub fn plot_tables(det: &Trajectory, stoch: &Trajectory, tube: &Tube, h: f64) -> Result<Vec<Table>> {
    if det.len() != stoch.len() || det.len() != tube.samples.len() {
        return Err(Error::Dimension {
            what: "plot grids",
            expected: det.len(),
            got: stoch.len().min(tube.samples.len()),
        });
    }
    let n = det.states.first().map_or(0, |s| s.x_bar.len());
    let mut tables: Vec<Table> = (0..n)
        .map(|_| Table {
            columns: PLOT_COLUMNS.iter().map(|c| c.to_string()).collect(),
            rows: Vec::with_capacity(det.len()),
        })
        .collect();
    for ((d, s), t) in det.states.iter().zip(&stoch.states).zip(&tube.samples) {
        if (d.tau - s.tau).abs() > 1e-9 * d.tau.abs().max(1.0) {
            return Err(Error::param(format!("plot grids differ at tau = {}", d.tau)));
        }
        for (i, table) in tables.iter_mut().enumerate() {
            let half = h * t.cross_section[(i, i)].sqrt();
            let c = t.center[i];
            table.rows.push(vec![d.tau, d.x_bar[i], s.x_bar[i], c, c - half, c + half]);
        }
    }
    Ok(tables)
}

/// Write `<dir>/<variable>.csv` for every fast variable.
pub fn emit_plot_data(
    det: &Trajectory,
    stoch: &Trajectory,
    tube: &Tube,
    h: f64,
    names: &StateNames,
    dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let tables = plot_tables(det, stoch, tube, h)?;
    let mut paths = Vec::with_capacity(tables.len());
    for (table, name) in tables.iter().zip(&names.x_bar) {
        let file: String = name
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' || c == '_' { c } else { '_' })
            .collect();
        let path = dir.join(format!("{file}.csv"));
        write_table(table, &path)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Share of rows whose stochastic value lies within the tube columns.
pub fn fraction_inside(table: &Table) -> f64 {
    if table.rows.is_empty() {
        return 1.0;
    }
    let inside = table.rows.iter().filter(|r| r[4] <= r[2] && r[2] <= r[5]).count();
    inside as f64 / table.rows.len() as f64
}
