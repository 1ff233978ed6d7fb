//! Diagnostics collected while filtering: singular value curves, chosen ranks,
//! fitted noise models and timings.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::dataset::write_atomic;
use crate::error::Result;
use crate::selection::E15Model;

/// One decomposition performed by a filter.
#[derive(Debug, Clone)]
pub struct SvdRecord {
    pub label: String,
    pub rows: usize,
    pub cols: usize,
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub e15: Option<E15Model>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default)]
pub struct StageReport {
    /// `"classic"`, `"prf"` or `"hankel"`.
    pub name: String,
    pub records: Vec<SvdRecord>,
    pub seconds: f64,
}

impl StageReport {
    pub fn new(name: &str) -> Self {
        StageReport {
            name: name.to_string(),
            ..Default::default()
        }
    }

    pub fn svd_calls(&self) -> usize {
        self.records.len()
    }
}

#[derive(Debug, Clone, Default)]
pub struct FilterReport {
    pub variant: String,
    pub domain: String,
    pub stages: Vec<StageReport>,
    pub total_seconds: f64,
    /// Warnings such as an all-noise PRF stage.
    pub flags: Vec<String>,
}

impl FilterReport {
    pub fn stage(&self, name: &str) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.name == name)
    }

    /// Number of SVDs performed in stages called `name`.
    pub fn svd_calls(&self, name: &str) -> usize {
        self.stages.iter().filter(|s| s.name == name).map(StageReport::svd_calls).sum()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "variant: {}", self.variant);
        let _ = writeln!(out, "domain: {}", self.domain);
        let _ = writeln!(out, "total_seconds: {:.6}", self.total_seconds);
        let flags = if self.flags.is_empty() {
            "none".to_string()
        } else {
            self.flags.join("; ")
        };
        let _ = writeln!(out, "flags: {flags}");
        for stage in &self.stages {
            let _ = writeln!(out);
            let _ = writeln!(out, "stage: {}", stage.name);
            let _ = writeln!(out, "stage_seconds: {:.6}", stage.seconds);
            let _ = writeln!(out, "svd_calls: {}", stage.svd_calls());
            for rec in &stage.records {
                let _ = writeln!(out, "record: {}", rec.label);
                let _ = writeln!(out, "  shape: {}x{}", rec.rows, rec.cols);
                let _ = writeln!(out, "  rank: {}", rec.rank);
                if let Some(first) = rec.singular_values.first() {
                    let _ = writeln!(out, "  s_max: {first:.6e}");
                }
                if let Some(m) = &rec.e15 {
                    let _ = writeln!(out, "  sigma_n: {:.6e}", m.sigma_n);
                    let _ = writeln!(out, "  corr: {}", m.corr);
                }
                let _ = writeln!(out, "  seconds: {:.6}", rec.seconds);
            }
        }
        out
    }

    /// Writes `<stem>.txt` plus one `<stem>_<stage>_sv.csv` per stage with the
    /// singular value curves. Returns the paths written.
    pub fn write(&self, stem: &Path) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        let txt = stem.with_extension("txt");
        write_atomic(&txt, self.to_text().as_bytes())?;
        written.push(txt);
        let base = stem.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        for stage in &self.stages {
            let path = stem.with_file_name(format!("{base}_{}_sv.csv", stage.name));
            write_atomic(&path, sv_csv(stage)?.as_slice())?;
            written.push(path);
        }
        Ok(written)
    }
}

fn sv_csv(stage: &StageReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["record", "index", "singular_value", "mp_curve", "cleanliness", "retained"])?;
    for rec in &stage.records {
        for (k, s) in rec.singular_values.iter().enumerate() {
            let (mp, clean) = match &rec.e15 {
                Some(m) => (m.mp_curve[k].to_string(), m.cleanliness[k].to_string()),
                None => (String::new(), String::new()),
            };
            w.write_record([
                rec.label.clone(),
                (k + 1).to_string(),
                s.to_string(),
                mp,
                clean,
                u8::from(k < rec.rank).to_string(),
            ])?;
        }
    }
    w.into_inner().map_err(|e| std::io::Error::other(e.to_string()).into())
}
