//! Plain CSV tables with a one-line header and fixed-precision numbers.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

/// Significant digits used unless a table asks otherwise.
pub const DEFAULT_PRECISION: usize = 12;

pub const TRAJECTORY_HEADER: &[&str] = &["t", "theta", "phi", "residual"];
pub const BERRY_HEADER: &[&str] = &[
    "theta",
    "sigma",
    "phase_numeric",
    "phase_formula",
    "abs_error",
];
pub const INVERSION_HEADER: &[&str] = &["t", "sigma_z_exact", "sigma_z_oracle", "abs_diff"];

/// `value` in scientific notation with `precision` significant digits.
/// Non-finite values print as `nan`, `inf` or `-inf`.
pub fn format_value(value: f64, precision: usize) -> String {
    if value.is_nan() {
        return "nan".into();
    }
    if value.is_infinite() {
        return if value > 0.0 { "inf" } else { "-inf" }.into();
    }
    // avoid "-0" artifacts in otherwise identical runs
    let value = if value == 0.0 { 0.0 } else { value };
    format!("{:.*e}", precision.max(1) - 1, value)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
    precision: usize,
}

impl CsvTable {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
            precision: DEFAULT_PRECISION,
        }
    }

    pub fn with_precision(mut self, precision: usize) -> Self {
        self.precision = precision;
        self
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Panics if the row length differs from the header.
    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(
            row.len(),
            self.header.len(),
            "row length must match the header"
        );
        self.rows.push(row);
    }

    /// Largest value in column `name`, ignoring NaN.
    pub fn column_max(&self, name: &str) -> Option<f64> {
        let j = self.header.iter().position(|h| h == name)?;
        self.rows
            .iter()
            .map(|r| r[j])
            .filter(|v| !v.is_nan())
            .reduce(f64::max)
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}", format_value(*v, self.precision));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(self.render().as_bytes())
    }

    pub fn write_file(&self, path: &Path) -> io::Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.render())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formatting() {
        assert_eq!(format_value(1.0, 12), "1.00000000000e0");
        assert_eq!(format_value(-0.0, 3), "0.00e0");
        assert_eq!(format_value(-1234.5678, 4), "-1.235e3");
        assert_eq!(format_value(f64::NAN, 4), "nan");
    }

    #[test]
    fn render_and_column_max() {
        let mut t = CsvTable::new(TRAJECTORY_HEADER).with_precision(3);
        t.push(vec![0.0, 1.0, 2.0, 1e-9]);
        t.push(vec![0.5, 1.5, f64::NAN, 3e-9]);
        assert_eq!(
            t.render(),
            "t,theta,phi,residual\n0.00e0,1.00e0,2.00e0,1.00e-9\n5.00e-1,1.50e0,nan,3.00e-9\n"
        );
        assert_eq!(t.column_max("residual"), Some(3e-9));
        assert_eq!(t.column_max("phi"), Some(2.0));
        assert_eq!(t.column_max("missing"), None);
    }

    #[test]
    #[should_panic]
    fn ragged_rows_rejected() {
        CsvTable::new(&["a", "b"]).push(vec![1.0]);
    }
}
