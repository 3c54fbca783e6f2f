//! Deterministic CSV tables: `#` comment header, one column row, data rows.
//!
//! Numbers carry at most 6 significant digits, use `.` as decimal separator
//! and never need quoting; lines end in `\n`. Missing values are empty fields.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};

/// `x` rounded to 6 significant digits, trailing zeros dropped.
///
/// Plain notation for `1e-4 <= |x| < 1e6`, scientific (`1.5e-7`) otherwise.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let sign = if negative { "-" } else { "" };
    if !(-4..6).contains(&exp) {
        let mut m = format!("{}.{}", &digits[..1], &digits[1..]);
        trim_zeros(&mut m);
        return format!("{sign}{m}e{exp}");
    }
    let mut s = if exp >= 0 {
        let split = exp as usize + 1;
        format!("{}.{}", &digits[..split], &digits[split..])
    } else {
        format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
    };
    trim_zeros(&mut s);
    format!("{sign}{s}")
}

fn trim_zeros(s: &mut String) {
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

pub fn opt_int<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    name: String,
    comments: Vec<(String, String)>,
    columns: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&'static str]) -> Self {
        Self {
            name: name.into(),
            comments: Vec::new(),
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    /// File stem used by [`Table::write_to`].
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn columns(&self) -> &[&'static str] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    /// Adds a `# key: value` header line.
    pub fn comment(&mut self, key: &str, value: impl Into<String>) {
        self.comments.push((key.to_string(), value.into()));
    }

    pub fn comments(&self) -> &[(String, String)] {
        &self.comments
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row width of table {}",
            self.name
        );
        debug_assert!(row.iter().all(|f| !f.contains([',', '\n', '"'])));
        self.rows.push(row);
    }

    /// Field `column` of every row.
    pub fn column(&self, column: &str) -> Option<Vec<&str>> {
        let k = self.columns.iter().position(|c| *c == column)?;
        Some(self.rows.iter().map(|r| r[k].as_str()).collect())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.comments {
            let v = v.replace('\n', " ");
            let _ = writeln!(out, "# {k}: {v}");
        }
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Writes `<dir>/<name>.csv`, creating `dir` if needed.
    pub fn write_to(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = dir.join(format!("{}.csv", self.name));
        std::fs::write(&path, self.render()).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(0.15000000000000002), "0.15");
        assert_eq!(fmt_num(2.0 / 3.0), "0.666667");
        assert_eq!(fmt_num(-1234.5678), "-1234.57");
        assert_eq!(fmt_num(999999.5), "1e6");
        assert_eq!(fmt_num(123456.4), "123456");
        assert_eq!(fmt_num(0.0001234567), "0.000123457");
        assert_eq!(fmt_num(1.5e-7), "1.5e-7");
        assert_eq!(fmt_num(-0.0), "0");
        assert_eq!(fmt_num(f64::NAN), "nan");
    }

    #[test]
    fn render_layout() {
        let mut t = Table::new("x", &["a", "b"]);
        t.comment("seed", "1");
        t.push(vec![fmt_num(0.5), String::new()]);
        assert_eq!(t.render(), "# seed: 1\na,b\n0.5,\n");
        assert_eq!(t.column("a").unwrap(), vec!["0.5"]);
    }
}
