//! CSV output. Numbers are written in shortest round-trip form, so equal
//! fields give byte-identical files.
//!
//! * 2D fields: one row per time node, one column per y node.
//! * 3D fields and policies: a directory with one file per time node, rows
//!   indexed by y and columns by z, plus `slices.csv` mapping file names to
//!   times.

use std::fs;
use std::path::Path;

use csv::Writer;

use crate::error::Result;
use crate::grid::UniformGrid;
use crate::hjb::ValueField2D;
use crate::hjbi::ValueField3D;
use crate::policy::PolicyField;
use crate::scalar::{to_f64, Scalar};
use crate::sde::PathBatch;

fn create(path: &Path) -> Result<Writer<fs::File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(Writer::from_path(path)?)
}

fn num<T: Scalar>(x: T) -> String {
    format!("{}", to_f64(x))
}

fn header<T: Scalar>(corner: &str, grid: &UniformGrid<T>) -> Vec<String> {
    std::iter::once(corner.to_string()).chain(grid.nodes().into_iter().map(num)).collect()
}

pub fn write_field_2d<T: Scalar>(field: &ValueField2D<T>, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(header("t\\y", &field.y_grid))?;
    let n_y = field.y_grid.len();
    for it in 0..field.t_grid.len() {
        let row = &field.values[it * n_y..(it + 1) * n_y];
        w.write_record(std::iter::once(num(field.t_grid.node(it))).chain(row.iter().map(|&v| num(v))))?;
    }
    w.flush()?;
    Ok(())
}

fn slice_name(it: usize) -> String {
    format!("t{it:05}.csv")
}

/// Writes `data` laid out `[t][y][z]` as per-time-slice files in `dir`.
fn write_slices<T: Scalar>(
    dir: &Path,
    t_grid: &UniformGrid<T>,
    y_grid: &UniformGrid<T>,
    z_grid: &UniformGrid<T>,
    data: impl Fn(usize, usize, usize) -> T,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut index = Writer::from_path(dir.join("slices.csv"))?;
    index.write_record(["file", "t"])?;
    for it in 0..t_grid.len() {
        let name = slice_name(it);
        index.write_record([name.clone(), num(t_grid.node(it))])?;
        let mut w = Writer::from_path(dir.join(&name))?;
        w.write_record(header("y\\z", z_grid))?;
        for j in 0..y_grid.len() {
            let row = (0..z_grid.len()).map(|k| num(data(it, j, k)));
            w.write_record(std::iter::once(num(y_grid.node(j))).chain(row))?;
        }
        w.flush()?;
    }
    index.flush()?;
    Ok(())
}

pub fn write_field_3d<T: Scalar>(field: &ValueField3D<T>, dir: &Path) -> Result<()> {
    write_slices(dir, &field.t_grid, &field.y_grid, &field.z_grid, |it, j, k| field.at(it, j, k))
}

/// Writes `alpha` and `beta` under `dir/alpha` and `dir/beta`; components
/// beyond the first go to `alpha_1`, `beta_1`, and so on.
pub fn write_policy<T: Scalar>(policy: &PolicyField<T>, dir: &Path) -> Result<()> {
    let name = |base: &str, c: usize| if c == 0 { base.to_string() } else { format!("{base}_{c}") };
    for c in 0..policy.control_dim {
        write_slices(&dir.join(name("alpha", c)), &policy.t_grid, &policy.y_grid, &policy.z_grid, |it, j, k| {
            policy.alpha_node(it, j, k)[c]
        })?;
    }
    for c in 0..policy.noise_dim {
        write_slices(&dir.join(name("beta", c)), &policy.t_grid, &policy.y_grid, &policy.z_grid, |it, j, k| {
            policy.beta_node(it, j, k)[c]
        })?;
    }
    Ok(())
}

/// Terminal state (and density, when present) of every path.
pub fn write_terminal_paths<T: Scalar>(batch: &PathBatch<T>, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let z = batch.terminal_z();
    let mut head = vec!["path".to_string()];
    head.extend((0..batch.dim).map(|i| format!("y{i}")));
    if z.is_some() {
        head.push("z".into());
    }
    w.write_record(&head)?;
    for p in 0..batch.n_paths {
        let mut rec = vec![p.to_string()];
        rec.extend(batch.y(p, batch.recorded_steps - 1).iter().map(|&v| num(v)));
        if let Some(z) = &z {
            rec.push(num(z[p]));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
