//! Deterministic file emission: CSV tables, SVG plots and run manifests.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::TimeSeries;
use crate::error::Result;
use crate::states::AmplitudeSeries;

/// Formats a float with 17 significant digits, independent of locale.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// `lambda_t,p_ground` table with LF line endings.
pub fn time_series_csv(series: &TimeSeries) -> String {
    let mut out = String::from("lambda_t,p_ground\n");
    for (t, p) in series.times.iter().zip(&series.values) {
        let _ = writeln!(out, "{},{}", fmt_f64(*t), fmt_f64(*p));
    }
    out
}

/// `n,re_bn,im_bn,abs2_bn` table with LF line endings.
pub fn bn_csv(series: &AmplitudeSeries) -> String {
    let mut out = String::from("n,re_bn,im_bn,abs2_bn\n");
    for (n, b) in series.coefficients.iter().enumerate() {
        let _ = writeln!(out, "{n},{},{},{}", fmt_f64(b.re), fmt_f64(b.im), fmt_f64(b.norm_sqr()));
    }
    out
}

/// Parses a numeric CSV with a header row into columns.
pub fn parse_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| crate::Error::domain("empty CSV"))?
        .split(',')
        .map(str::to_owned)
        .collect();
    let mut cols = vec![Vec::new(); header.len()];
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(crate::Error::domain(format!("CSV row {} has {} cells", i + 1, cells.len())));
        }
        for (c, cell) in cols.iter_mut().zip(cells) {
            c.push(cell.parse::<f64>().map_err(|e| crate::Error::domain(format!("CSV row {}: {e}", i + 1)))?);
        }
    }
    Ok((header, cols))
}

/// Polyline plot of one or more curves on a fixed 800×480 viewport with
/// linear axes; `P` spans `[0, 1]`.
pub fn svg_plot(title: &str, curves: &[(&str, &TimeSeries)]) -> String {
    const W: f64 = 800.0;
    const H: f64 = 480.0;
    const LEFT: f64 = 60.0;
    const RIGHT: f64 = 20.0;
    const TOP: f64 = 40.0;
    const BOTTOM: f64 = 50.0;
    const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    let t_lo = curves.iter().map(|(_, s)| s.times[0]).fold(f64::INFINITY, f64::min);
    let t_hi = curves
        .iter()
        .map(|(_, s)| *s.times.last().expect("non-empty series"))
        .fold(f64::NEG_INFINITY, f64::max);
    let span = if t_hi > t_lo { t_hi - t_lo } else { 1.0 };
    let x = |t: f64| LEFT + (t - t_lo) / span * (W - LEFT - RIGHT);
    let y = |p: f64| TOP + (1.0 - p) * (H - TOP - BOTTOM);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let (x0, x1, y0, y1) = (x(t_lo), x(t_hi), y(0.0), y(1.0));
    let _ = writeln!(
        out,
        r#"<path d="M{x0:.2},{y1:.2} L{x0:.2},{y0:.2} L{x1:.2},{y0:.2}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let p = k as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="end">{p:.2}</text>"#,
            x0 - 6.0,
            y(p) + 4.0
        );
        let t = t_lo + p * span;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
            x(t),
            y0 + 18.0,
            trim_number(t)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="14" text-anchor="middle">λt</text>"#,
        (x0 + x1) / 2.0,
        H - 10.0
    );
    for (i, (label, s)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut points = String::new();
        for (t, p) in s.times.iter().zip(&s.values) {
            let _ = write!(points, "{:.2},{:.2} ", x(*t), y(*p));
        }
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1" points="{}"/>"#,
            points.trim_end()
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" fill="{color}" text-anchor="end">{}</text>"#,
            x1,
            TOP + 14.0 * (i as f64 + 1.0),
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn trim_number(v: f64) -> String {
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_owned()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// One emitted file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Path relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Writes files below an output directory and records their checksums.
#[derive(Debug)]
pub struct ArtifactWriter {
    root: PathBuf,
    artifacts: Vec<Artifact>,
}

impl ArtifactWriter {
    pub fn new(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(ArtifactWriter {
            root: root.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes `contents` to `root/relative`.
    pub fn write(&mut self, relative: &str, contents: &[u8]) -> Result<()> {
        let path = self.root.join(relative);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, contents)?;
        self.record(relative, contents);
        Ok(())
    }

    /// Records a file written by someone else below `root`.
    pub fn record(&mut self, relative: &str, contents: &[u8]) {
        self.artifacts.retain(|a| a.path != relative);
        self.artifacts.push(Artifact {
            path: relative.to_owned(),
            sha256: sha256_hex(contents),
            bytes: contents.len() as u64,
        });
    }

    pub fn into_artifacts(mut self) -> Vec<Artifact> {
        self.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        self.artifacts
    }
}

/// Summary of a run written next to its artifacts as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub status: RunStatus,
    pub artifacts: Vec<Artifact>,
    pub diagnostics: serde_json::Value,
    pub wall_clock_seconds: f64,
}

/// Outcome recorded in a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStatus {
    pub ok: bool,
    pub exit_code: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// Recomputes checksums of every file below `root` (except the manifest) and
/// compares them with the manifest entries; returns the mismatches.
pub fn verify_manifest(root: &Path) -> Result<Vec<String>> {
    let manifest: RunManifest = serde_json::from_slice(&std::fs::read(root.join(MANIFEST_NAME))?)?;
    let mut problems = Vec::new();
    let mut on_disk = Vec::new();
    collect_files(root, root, &mut on_disk)?;
    for rel in &on_disk {
        if rel == MANIFEST_NAME {
            continue;
        }
        match manifest.artifacts.iter().find(|a| &a.path == rel) {
            None => problems.push(format!("{rel}: not listed")),
            Some(a) => {
                let actual = sha256_hex(&std::fs::read(root.join(rel))?);
                if actual != a.sha256 {
                    problems.push(format!("{rel}: checksum mismatch"));
                }
            }
        }
    }
    for a in &manifest.artifacts {
        if !on_disk.contains(&a.path) {
            problems.push(format!("{}: listed but missing", a.path));
        }
    }
    Ok(problems)
}

/// Relative `/`-separated paths of all regular files below `dir`, sorted.
pub fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let path = e.path();
        if e.file_type()?.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root).expect("below root");
            out.push(rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"));
        }
    }
    Ok(())
}
