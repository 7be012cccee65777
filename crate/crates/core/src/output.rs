//! Result files. Everything is rendered to strings first and written in one
//! pass, so identical inputs give byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::grid::DensityField;
use crate::scheme::StepRecord;
use crate::steady::SteadyProfile;

pub const TRAJECTORY_HEADER: &str = "step,t,mass,energy,dissipation,newton_iters,residual,linf_change";

fn fmt_f(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn trajectory_csv(records: &[StepRecord]) -> String {
    let mut s = String::with_capacity(128 * (records.len() + 1));
    s.push_str(TRAJECTORY_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.step,
            fmt_f(r.t),
            fmt_f(r.mass),
            fmt_f(r.energy.unwrap_or(f64::INFINITY)),
            fmt_f(r.dissipation),
            r.newton_iters,
            fmt_f(r.residual),
            fmt_f(r.linf_change)
        );
    }
    s
}

pub fn field_csv(field: &DensityField) -> String {
    let mut buf = Vec::new();
    field.write_csv(&mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("CSV is ASCII")
}

/// `header` then one row per entry of `columns`, floats at 17 significant digits.
pub fn table_csv(header: &str, rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut s = String::new();
    s.push_str(header);
    s.push('\n');
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(fmt_f).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

/// Files keyed by path relative to the output directory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Artifacts {
    files: BTreeMap<PathBuf, String>,
}

impl Artifacts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, path: impl Into<PathBuf>, content: String) {
        self.files.insert(path.into(), content);
    }

    pub fn trajectory(&mut self, records: &[StepRecord]) {
        self.add("trajectory.csv", trajectory_csv(records));
    }

    /// `snapshots/rho_<step>.csv`.
    pub fn snapshot(&mut self, step: usize, field: &DensityField) {
        self.add(format!("snapshots/rho_{step:06}.csv"), field_csv(field));
    }

    /// `<stem>.csv` plus the `<stem>.json` sidecar.
    pub fn steady(&mut self, stem: &str, profile: &SteadyProfile) {
        self.add(format!("{stem}.csv"), field_csv(&profile.field));
        self.add(format!("{stem}.json"), profile.sidecar_json() + "\n");
    }

    /// `<stem>.json` and `<stem>.txt`.
    pub fn report(&mut self, stem: &str, json: String, text: String) {
        self.add(format!("{stem}.json"), json + "\n");
        self.add(format!("{stem}.txt"), text + "\n");
    }

    pub fn extend(&mut self, other: Artifacts) {
        self.files.extend(other.files);
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.files.keys().map(PathBuf::as_path)
    }

    pub fn get(&self, path: &str) -> Option<&str> {
        self.files.get(Path::new(path)).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    /// Writes every file under `dir`, creating directories as needed.
    pub fn emit(&self, dir: &Path) -> io::Result<Vec<PathBuf>> {
        let mut written = Vec::with_capacity(self.files.len());
        for (rel, content) in &self.files {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(&path, content)?;
            written.push(path);
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid1D;

    #[test]
    fn trajectory_header_and_format() {
        let r = StepRecord {
            step: 0,
            t: 0.0,
            mass: 0.3,
            energy: None,
            dissipation: 0.0,
            newton_iters: 0,
            residual: 0.0,
            linf_change: 0.0,
        };
        let csv = trajectory_csv(&[r]);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(TRAJECTORY_HEADER));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row.len(), 8);
        assert_eq!(row[2], "2.9999999999999999e-1");
        assert_eq!(row[3], "inf");
        assert_eq!(row[2].parse::<f64>().unwrap(), 0.3);
    }

    #[test]
    fn emit_writes_nested_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifacts::new();
        a.snapshot(10, &DensityField::constant(Grid1D::new(4).unwrap(), 0.5));
        a.add("x.txt", "hi\n".into());
        let written = a.emit(dir.path()).unwrap();
        assert_eq!(written.len(), 2);
        assert!(dir.path().join("snapshots/rho_000010.csv").is_file());
        assert_eq!(fs::read_to_string(dir.path().join("x.txt")).unwrap(), "hi\n");
    }
}
