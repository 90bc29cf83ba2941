//! A published frame-time table rebuilt as a bench report.

use ngp_core::bench::{frame_stats, to_text_table, BenchReport, CellResult, OrbitPath, ReportMeta};

pub const SCENES: [&str; 3] = ["small", "medium", "large"];
pub const RESOLUTIONS: [[u32; 2]; 4] = [[320, 240], [640, 480], [1280, 720], [2560, 1440]];

/// Rows are resolutions; columns are timings (upscale on: 3 scenes, off: 3
/// scenes) then rates in the same order. `None` is DNF.
pub const TABLE: [[Option<f64>; 12]; 4] = {
    const fn s(v: f64) -> Option<f64> {
        Some(v)
    }
    [
        [s(26.94), s(35.98), s(39.65), s(26.44), s(54.03), s(48.85), s(37.11), s(27.79), s(25.22), s(37.82), s(18.51), s(20.47)],
        [s(27.83), s(48.02), s(55.6), s(27.38), s(124.34), s(108.59), s(35.93), s(20.83), s(17.99), s(36.52), s(8.04), s(9.21)],
        [s(27.38), s(54.41), s(57.58), s(46.95), s(338.05), s(282.57), s(36.53), s(18.38), s(17.37), s(21.30), s(2.96), s(3.54)],
        [s(31.93), s(153.68), s(138.82), s(100.14), None, None, s(31.32), s(6.51), s(7.20), s(9.99), None, None],
    ]
};

pub fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Midpoint of the means `m` with `round2(m) = timing` and
/// `round2(1000/m) = rate`.
pub fn consistent_mean(timing: f64, rate: f64) -> f64 {
    let lo = (timing - 0.005).max(1000.0 / (rate + 0.005));
    let hi = (timing + 0.005).min(1000.0 / (rate - 0.005));
    assert!(lo < hi, "no mean reproduces {timing} ms / {rate} fps");
    0.5 * (lo + hi)
}

pub fn table_report() -> BenchReport {
    let mut cells = Vec::new();
    for (r, res) in RESOLUTIONS.iter().enumerate() {
        for (a, upscale) in [2u32, 1].into_iter().enumerate() {
            for (s, scene) in SCENES.iter().enumerate() {
                let col = 3 * a + s;
                let (stats, timings) = match (TABLE[r][col], TABLE[r][col + 6]) {
                    (Some(t), Some(f)) => {
                        let m = consistent_mean(t, f);
                        let timings = vec![m; 4];
                        (Some(frame_stats(&timings).unwrap()), timings)
                    }
                    _ => (None, Vec::new()),
                };
                cells.push(CellResult {
                    scene: scene.to_string(),
                    width: res[0],
                    height: res[1],
                    upscale,
                    repetition: 0,
                    dnf: stats.is_none(),
                    stats,
                    error: None,
                    timings_ms: timings,
                });
            }
        }
    }
    BenchReport {
        meta: ReportMeta {
            seed: 0,
            threads: 1,
            host: "golden".into(),
            samples_per_ray: 128,
            repetitions: 1,
            min_duration_s: 60.0,
            warmup_s: 2.0,
            frame_timeout_ms: 2000.0,
            stereo: true,
            orbit: OrbitPath::default(),
            scenes: SCENES.iter().map(|s| s.to_string()).collect(),
            resolutions: RESOLUTIONS.to_vec(),
            upscale_arms: vec![2, 1],
        },
        cells,
    }
}

/// Checks every cell of the emitted text table against [`TABLE`] at two
/// decimals.
pub fn check_cells() -> Result<usize, String> {
    let table = to_text_table(&table_report());
    let rows: Vec<&str> = table.lines().skip(4).collect();
    if rows.len() != 4 {
        return Err(format!("{} data rows, expected 4", rows.len()));
    }
    let mut checked = 0;
    for (r, row) in rows.iter().enumerate() {
        let fields: Vec<&str> = row.split('|').map(str::trim).collect();
        let label = format!("{} x {}", RESOLUTIONS[r][0], RESOLUTIONS[r][1]);
        if fields.len() != 13 || fields[0] != label {
            return Err(format!("row {r} malformed: {row}"));
        }
        for (c, expected) in TABLE[r].iter().enumerate() {
            let want = match expected {
                None => "DNF".to_string(),
                Some(v) => format!("{:.2}", round2(*v)),
            };
            if fields[c + 1] != want {
                return Err(format!("row {r} col {c}: got {} expected {want}", fields[c + 1]));
            }
            checked += 1;
        }
    }
    Ok(checked)
}

#[allow(dead_code)]
pub const GOLDEN: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/published_timings.txt");
#[allow(dead_code)]
pub const GOLDEN_TEXT: &str = include_str!("../golden/published_timings.txt");
