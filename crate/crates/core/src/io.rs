//! CSV serialization for measures and diagnostics.
//!
//! Every float is written with 17 significant digits (`{:.16e}`), enough to
//! reproduce the exact f64 on parse, so identical runs produce byte-identical
//! files and file round-trips preserve values bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{CoreError, Result};
use crate::jko::DiagRow;
use crate::measures::{Atom, GridMeasure, QuantileMeasure};

/// Canonical float serialization: 17 significant digits, exact on parse.
pub fn float17(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_field(field: &str, path: &Path, line: usize) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| {
        CoreError::InvalidInput(format!(
            "{}: line {line}: not a number: {field:?}",
            path.display()
        ))
    })
}

/// Reads a two-column CSV, checking the exact header.
fn read_two_columns(path: &Path, header: &str) -> Result<Vec<(f64, f64)>> {
    let file = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    let mut lines = file.lines().enumerate();
    match lines.next() {
        Some((_, first)) => {
            let first = first?;
            if first.trim() != header {
                return Err(CoreError::InvalidInput(format!(
                    "{}: expected header {header:?}, got {:?}",
                    path.display(),
                    first.trim()
                )));
            }
        }
        None => {
            return Err(CoreError::InvalidInput(format!("{}: empty file", path.display())));
        }
    }
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let (a, b) = (parts.next(), parts.next());
        if parts.next().is_some() || b.is_none() {
            return Err(CoreError::InvalidInput(format!(
                "{}: line {}: expected two comma-separated fields",
                path.display(),
                idx + 1
            )));
        }
        rows.push((
            parse_field(a.unwrap(), path, idx + 1)?,
            parse_field(b.unwrap(), path, idx + 1)?,
        ));
    }
    Ok(rows)
}

/// Writes `w,Y` rows: mass midpoints against quantile values.
pub fn write_quantile_csv(path: &Path, q: &QuantileMeasure) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "w,Y")?;
    for (i, y) in q.values().iter().enumerate() {
        writeln!(out, "{},{}", float17(q.w_at(i)), float17(*y))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a `w,Y` file.  The total mass is recovered from the first and last
/// midpoints (`w_0 + w_{n-1} = m` up to two roundings); the column must match
/// the uniform midpoint grid of that mass to `1e-9` relative.
pub fn read_quantile_csv(path: &Path) -> Result<QuantileMeasure> {
    let rows = read_two_columns(path, "w,Y")?;
    if rows.len() < 2 {
        return Err(CoreError::InvalidInput(format!(
            "{}: a quantile file needs at least 2 rows",
            path.display()
        )));
    }
    let mass = rows[0].0 + rows[rows.len() - 1].0;
    let q = QuantileMeasure::new(mass, rows.iter().map(|r| r.1).collect())?;
    for (i, row) in rows.iter().enumerate() {
        if (row.0 - q.w_at(i)).abs() > 1e-9 * (1.0 + mass) {
            return Err(CoreError::InvalidInput(format!(
                "{}: row {i}: w = {} is not the midpoint {} of a uniform mass grid",
                path.display(),
                row.0,
                q.w_at(i)
            )));
        }
    }
    Ok(q)
}

/// Writes `x,u` rows: cell centers against cell-averaged densities.  Atoms
/// are not included; dump them separately with [`write_atoms_csv`].
pub fn write_grid_csv(path: &Path, g: &GridMeasure) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "x,u")?;
    for (j, u) in g.density().iter().enumerate() {
        writeln!(out, "{},{}", float17(g.cell_center(j)), float17(*u))?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `x,alpha` rows, one atom per line.
pub fn write_atoms_csv(path: &Path, atoms: &[Atom]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "x,alpha")?;
    for a in atoms {
        writeln!(out, "{},{}", float17(a.position), float17(a.mass))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads an `x,alpha` atom list.
pub fn read_atoms_csv(path: &Path) -> Result<Vec<Atom>> {
    Ok(read_two_columns(path, "x,alpha")?
        .into_iter()
        .map(|(position, mass)| Atom { position, mass })
        .collect())
}

/// Reads an `x,u` density file (cell centers must form a uniform grid) and an
/// optional atom file into a grid measure carrying exactly its content.
pub fn read_grid_csv(density_path: &Path, atoms_path: Option<&Path>) -> Result<GridMeasure> {
    let rows = read_two_columns(density_path, "x,u")?;
    if rows.len() < 2 {
        return Err(CoreError::InvalidInput(format!(
            "{}: a density file needs at least 2 cells",
            density_path.display()
        )));
    }
    let dx = rows[1].0 - rows[0].0;
    if !(dx > 0.0) {
        return Err(CoreError::InvalidInput(format!(
            "{}: cell centers must increase",
            density_path.display()
        )));
    }
    for (j, pair) in rows.windows(2).enumerate() {
        let step = pair[1].0 - pair[0].0;
        if (step - dx).abs() > 1e-9 * dx {
            return Err(CoreError::InvalidInput(format!(
                "{}: nonuniform cell spacing at row {}: {step} vs {dx}",
                density_path.display(),
                j + 2
            )));
        }
    }
    let lo = rows[0].0 - 0.5 * dx;
    let hi = rows[rows.len() - 1].0 + 0.5 * dx;
    let density: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let atoms = match atoms_path {
        Some(p) => read_atoms_csv(p)?,
        None => Vec::new(),
    };
    let mass = dx * density.iter().sum::<f64>() + atoms.iter().map(|a| a.mass).sum::<f64>();
    GridMeasure::new(lo, hi, density, atoms, mass)
}

/// Writes the per-time diagnostics table.
pub fn write_diagnostics_csv(path: &Path, rows: &[DiagRow]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "t,F,I_grid,I_rate,W2_step,mom2,atom_mass_total")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            float17(r.t),
            float17(r.free_energy),
            float17(r.fisher_grid),
            float17(r.i_rate),
            float17(r.w2_step),
            float17(r.mom2),
            float17(r.atom_mass)
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Writes the refinement-study table for the `compare` subcommand.
pub fn write_compare_csv(path: &Path, rows: &[(usize, f64)]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "resolution,l1_distance")?;
    for (resolution, dist) in rows {
        writeln!(out, "{},{}", resolution, float17(*dist))?;
    }
    out.flush()?;
    Ok(())
}
