//! Trajectory CSV, binary field snapshots and JSON reports.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::construction::TrajectoryRow;
use crate::error::{invalid, Error, Result};
use crate::grid::{Field, Grid, C64};

pub const SNAPSHOT_MAGIC: [u8; 8] = *b"SNLSSNAP";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Header of the trajectory CSV for K solitons.
pub fn csv_header(k: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string(), "eps_h1".to_string()];
    for name in ["a_plus", "a_minus", "alpha", "theta"] {
        cols.extend((1..=k).map(|j| format!("{name}_{j}")));
    }
    for name in [
        "B_star",
        "lyapunov",
        "N_functional",
        "tube_eps_bound",
        "tube_aplus_bound",
        "tube_aminus_bound",
        "tube_param_bound",
        "mass",
    ] {
        cols.push(name.to_string());
    }
    cols
}

fn number(x: f64) -> String {
    format!("{x:.16e}")
}

fn row_values(r: &TrajectoryRow, k: usize) -> Result<Vec<f64>> {
    for v in [&r.a_plus, &r.a_minus, &r.alpha, &r.theta] {
        if v.len() != k {
            return Err(invalid(format!("row at t = {} has {} entries, expected {k}", r.t, v.len())));
        }
    }
    let mut out = vec![r.t, r.eps_h1];
    out.extend(&r.a_plus);
    out.extend(&r.a_minus);
    out.extend(&r.alpha);
    out.extend(&r.theta);
    out.extend([
        r.b_star,
        r.lyapunov,
        r.n_functional,
        r.tube_eps,
        r.tube_aplus,
        r.tube_aminus,
        r.tube_param,
        r.mass,
    ]);
    Ok(out)
}

/// Writes rows in the fixed column order with 17 significant digits.
pub fn write_trajectory_csv<W: Write>(mut w: W, rows: &[TrajectoryRow], k: usize) -> Result<()> {
    writeln!(w, "{}", csv_header(k).join(","))?;
    for r in rows {
        let line: Vec<String> = row_values(r, k)?.into_iter().map(number).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn trajectory_csv(rows: &[TrajectoryRow], k: usize) -> Result<String> {
    let mut buf = Vec::new();
    write_trajectory_csv(&mut buf, rows, k)?;
    String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
}

/// Parses a trajectory CSV back into its header and numeric rows.
pub fn read_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().ok_or_else(|| invalid("empty csv"))?.split(',').map(String::from).collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let vals = line
            .split(',')
            .map(|s| s.parse::<f64>().map_err(|e| invalid(format!("line {}: {e}", i + 2))))
            .collect::<Result<Vec<f64>>>()?;
        if vals.len() != header.len() {
            return Err(invalid(format!("line {} has {} columns, header has {}", i + 2, vals.len(), header.len())));
        }
        rows.push(vals);
    }
    Ok((header, rows))
}

/// Little-endian snapshot: magic, version, n_points, half_length, t, then
/// interleaved (re, im).
pub fn write_snapshot<W: Write>(mut w: W, field: &Field, t: f64) -> Result<()> {
    let g = field.grid();
    w.write_all(&SNAPSHOT_MAGIC)?;
    w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
    w.write_all(&(g.n_points() as u64).to_le_bytes())?;
    w.write_all(&g.half_length().to_le_bytes())?;
    w.write_all(&t.to_le_bytes())?;
    for z in field.values() {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    Ok(())
}

fn take<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| Error::Io(format!("truncated snapshot: {e}")))?;
    Ok(b)
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<(Field, f64)> {
    if take::<8, _>(&mut r)? != SNAPSHOT_MAGIC {
        return Err(Error::Io("not a field snapshot".into()));
    }
    let version = u32::from_le_bytes(take(&mut r)?);
    if version != SNAPSHOT_VERSION {
        return Err(Error::Io(format!("unsupported snapshot version {version}")));
    }
    let n = u64::from_le_bytes(take(&mut r)?) as usize;
    let half_length = f64::from_le_bytes(take(&mut r)?);
    let t = f64::from_le_bytes(take(&mut r)?);
    let grid = Grid::new(n, half_length)?;
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        let re = f64::from_le_bytes(take(&mut r)?);
        let im = f64::from_le_bytes(take(&mut r)?);
        values.push(C64::new(re, im));
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Io(format!("{} trailing bytes after snapshot", rest.len())));
    }
    Ok((Field::new(grid, values)?, t))
}

pub fn save_snapshot(path: &Path, field: &Field, t: f64) -> Result<()> {
    let mut buf = Vec::new();
    write_snapshot(&mut buf, field, t)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_snapshot(path: &Path) -> Result<(Field, f64)> {
    read_snapshot(fs::read(path)?.as_slice())
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = to_json(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub fn save_csv(path: &Path, rows: &[TrajectoryRow], k: usize) -> Result<()> {
    fs::write(path, trajectory_csv(rows, k)?)?;
    Ok(())
}
