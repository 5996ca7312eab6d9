//! CSV and legacy VTK writers. Floats are printed with 17 significant digits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::Vec2;

pub const CRACK_TIP_HEADER: &str = "t_us,ell_m,V_mps,n_soft,n_failed";
pub const ENERGY_HEADER: &str = "t_us,kinetic_J,potential_J,external_work_J,dissipated_J,residual_J";
pub const POWER_HEADER: &str = "t_us,dEdt_W,flux_adv_W,flux_nonlocal_W,residual_W";
pub const CONTOUR_HEADER: &str = "t_us,center_m,velocity_mps";
pub const FIELD_HEADER: &str = "i,j,u1_m,u2_m,soft";

#[inline]
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Buffered CSV file with a fixed header.
pub struct CsvWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl CsvWriter {
    pub fn create(path: &Path, header: &str) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        };
        w.line(header)?;
        Ok(w)
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.out, "{s}").map_err(|e| Error::io(&self.path, e))
    }

    pub fn row(&mut self, fields: &[String]) -> Result<()> {
        self.line(&fields.join(","))
    }

    pub fn floats(&mut self, values: &[f64]) -> Result<()> {
        let fields: Vec<String> = values.iter().map(|v| fmt_f64(*v)).collect();
        self.row(&fields)
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Legacy ASCII VTK point cloud with displacement vectors and damage.
pub fn write_vtk(path: &Path, positions: &[Vec2], u: &[Vec2], damage: &[f64], t: f64) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    let n = positions.len();
    writeln!(w, "# vtk DataFile Version 3.0").map_err(io)?;
    writeln!(w, "perifract t = {} s", fmt_f64(t)).map_err(io)?;
    writeln!(w, "ASCII\nDATASET POLYDATA\nPOINTS {n} double").map_err(io)?;
    for p in positions {
        writeln!(w, "{} {} 0", fmt_f64(p[0]), fmt_f64(p[1])).map_err(io)?;
    }
    writeln!(w, "VERTICES {n} {}", 2 * n).map_err(io)?;
    for i in 0..n {
        writeln!(w, "1 {i}").map_err(io)?;
    }
    writeln!(w, "POINT_DATA {n}\nVECTORS displacement double").map_err(io)?;
    for v in u {
        writeln!(w, "{} {} 0", fmt_f64(v[0]), fmt_f64(v[1])).map_err(io)?;
    }
    writeln!(w, "SCALARS damage double 1\nLOOKUP_TABLE default").map_err(io)?;
    for d in damage {
        writeln!(w, "{}", fmt_f64(*d)).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Parsed numeric CSV: header names and rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let c = self
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Input(format!("missing column `{name}`")))?;
        Ok(self.rows.iter().map(|r| r[c]).collect())
    }
}

pub fn read_csv(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .unwrap_or_default()
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let row = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::Input(format!("{}: bad row `{line}`", path.display())))?;
        if row.len() != header.len() {
            return Err(Error::Input(format!("{}: ragged row `{line}`", path.display())));
        }
        rows.push(row);
    }
    Ok(Table { header, rows })
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}
