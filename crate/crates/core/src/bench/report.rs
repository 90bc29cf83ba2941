use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{BenchError, BenchReport};

pub const CSV_HEADER: &str =
    "scene,resolution,upscale,repetition,mean_ms,fastest25_ms,slowest25_ms,median_ms,fps,count,dnf";

fn num(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_default()
}

pub fn to_csv(report: &BenchReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for c in &report.cells {
        let s = c.stats;
        let _ = writeln!(
            out,
            "{},{}x{},{},{},{},{},{},{},{},{},{}",
            c.scene,
            c.width,
            c.height,
            c.upscale,
            c.repetition,
            num(s.map(|s| s.mean_ms)),
            num(s.map(|s| s.fastest25_mean_ms)),
            num(s.map(|s| s.slowest25_mean_ms)),
            num(s.map(|s| s.median_ms)),
            num(s.map(|s| s.fps)),
            s.map(|s| s.count).unwrap_or(0),
            c.dnf
        );
    }
    out
}

pub fn to_json(report: &BenchReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}

fn arm_label(upscale: u32) -> String {
    if upscale == 1 {
        "native".into()
    } else {
        format!("upscale x{upscale}")
    }
}

/// Two blocks side by side, frame timings then frame rates; within each,
/// one group of scene columns per upscale arm. Rows are resolutions.
pub fn to_text_table(report: &BenchReport) -> String {
    let scenes = &report.meta.scenes;
    let arms = &report.meta.upscale_arms;
    let first = 18;
    let col = 9;
    let group = scenes.len() * (col + 3) - 3;
    let block = arms.len() * (group + 3) - 3;

    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:first$} | {:block$} | {:block$}",
        "", "Frame timings (ms)", "Frame rates (fps)"
    );
    let arm_row: Vec<String> = arms.iter().map(|a| format!("{:group$}", arm_label(*a))).collect();
    let arm_row = arm_row.join(" | ");
    let _ = writeln!(out, "{:first$} | {arm_row} | {arm_row}", "");
    let mut header = vec![format!("{:first$}", "Resolution\\Scene")];
    for _ in 0..2 * arms.len() {
        for s in scenes {
            header.push(format!("{s:>col$}"));
        }
    }
    let _ = writeln!(out, "{}", header.join(" | "));
    let _ = writeln!(out, "{}", "-".repeat(first + 2 * (block + 3)));

    for &res in &report.meta.resolutions {
        let mut timings = Vec::new();
        let mut rates = Vec::new();
        for &arm in arms {
            for s in scenes {
                let cell = report.summary(s, res, arm);
                match cell.stats {
                    Some(st) if !cell.dnf => {
                        timings.push(format!("{:>col$.2}", st.mean_ms));
                        rates.push(format!("{:>col$.2}", st.fps));
                    }
                    _ => {
                        timings.push(format!("{:>col$}", "DNF"));
                        rates.push(format!("{:>col$}", "DNF"));
                    }
                }
            }
        }
        let label = format!("{} x {}", res[0], res[1]);
        let _ = writeln!(out, "{label:first$} | {} | {}", timings.join(" | "), rates.join(" | "));
    }
    out.lines().map(|l| format!("{}\n", l.trim_end())).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub table: PathBuf,
}

/// Writes `report.csv`, `report.json` and `report.txt` into `dir`.
pub fn emit_report(report: &BenchReport, dir: &Path) -> Result<ReportFiles, BenchError> {
    if report.meta.scenes.is_empty() {
        return Err(BenchError::EmptyReport);
    }
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| BenchError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let files = ReportFiles {
        csv: dir.join("report.csv"),
        json: dir.join("report.json"),
        table: dir.join("report.txt"),
    };
    fs::write(&files.csv, to_csv(report)).map_err(io(&files.csv))?;
    fs::write(&files.json, to_json(report)).map_err(io(&files.json))?;
    fs::write(&files.table, to_text_table(report)).map_err(io(&files.table))?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{frame_stats, CellResult, OrbitPath, ReportMeta};

    fn report(scenes: &[&str]) -> BenchReport {
        let mut cells = Vec::new();
        for (i, s) in scenes.iter().enumerate() {
            let t = vec![10.0 + i as f64; 4];
            cells.push(CellResult {
                scene: s.to_string(),
                width: 320,
                height: 240,
                upscale: 1,
                repetition: 0,
                stats: Some(frame_stats(&t).unwrap()),
                dnf: false,
                error: None,
                timings_ms: t,
            });
        }
        BenchReport {
            meta: ReportMeta {
                seed: 0,
                threads: 1,
                host: "test".into(),
                samples_per_ray: 16,
                repetitions: 1,
                min_duration_s: 1.0,
                warmup_s: 0.0,
                frame_timeout_ms: 2000.0,
                stereo: false,
                orbit: OrbitPath::default(),
                scenes: scenes.iter().map(|s| s.to_string()).collect(),
                resolutions: vec![[320, 240], [640, 480]],
                upscale_arms: vec![1],
            },
            cells,
        }
    }

    #[test]
    fn json_roundtrip() {
        let r = report(&["a", "b"]);
        let back: BenchReport = serde_json::from_str(&to_json(&r)).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn csv_has_required_columns() {
        let csv = to_csv(&report(&["a"]));
        let mut lines = csv.lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        for col in ["scene", "resolution", "upscale", "mean_ms", "fastest25_ms", "slowest25_ms", "fps", "count", "dnf"] {
            assert!(header.contains(&col), "{col}");
        }
        assert_eq!(lines.next().unwrap(), "a,320x240,1,0,10.0000,10.0000,10.0000,10.0000,100.0000,4,false");
    }

    #[test]
    fn missing_cells_print_dnf() {
        let table = to_text_table(&report(&["a"]));
        let last = table.lines().last().unwrap();
        assert!(last.starts_with("640 x 480"));
        assert_eq!(last.matches("DNF").count(), 2);
    }

    #[test]
    fn empty_report_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        assert!(matches!(emit_report(&report(&[]), &out), Err(BenchError::EmptyReport)));
        assert!(!out.exists());
        let files = emit_report(&report(&["a"]), &out).unwrap();
        assert!(files.csv.is_file() && files.json.is_file() && files.table.is_file());
    }
}
