//! Static SVG plots. Output depends only on the input values, so identical
//! reports give byte-identical files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{ErrorSummary, HIST_BINS, HIST_MIN, HIST_WIDTH};
use crate::error::{Error, Result};
use crate::forecast::{ForecastReport, ForecastRow};
use crate::table::format_ts;

const W: f64 = 640.0;
const H: f64 = 320.0;
const LEFT: f64 = 48.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 32.0;
const BOTTOM: f64 = 40.0;

fn header(out: &mut String, title: &str) {
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(out, r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="13">{title}</text>"#, W / 2.0).unwrap();
}

fn axes(out: &mut String, y_max: f64, y_ticks: &[f64], y_label: &str) {
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    writeln!(out, r#"<g stroke="black" stroke-width="1">"#).unwrap();
    writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}"/>"#).unwrap();
    writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/>"#).unwrap();
    writeln!(out, "</g>").unwrap();
    for &t in y_ticks {
        let y = y0 - (y0 - y1) * t / y_max;
        writeln!(
            out,
            r##"<line x1="{x0}" y1="{y:.2}" x2="{x1}" y2="{y:.2}" stroke="#dddddd"/><text x="{:.1}" y="{:.2}" text-anchor="end">{t}</text>"##,
            x0 - 4.0,
            y + 4.0
        )
        .unwrap();
    }
    writeln!(
        out,
        r#"<text x="12" y="{:.1}" transform="rotate(-90 12 {:.1})" text-anchor="middle">{y_label}</text>"#,
        H / 2.0,
        H / 2.0
    )
    .unwrap();
}

fn step_path(values: &[f64], y_max: f64) -> String {
    let n = values.len().max(1) as f64;
    let dx = (W - LEFT - RIGHT) / n;
    let y = |v: f64| H - BOTTOM - (H - BOTTOM - TOP) * v.clamp(0.0, y_max) / y_max;
    let mut d = String::new();
    for (i, &v) in values.iter().enumerate() {
        let x0 = LEFT + i as f64 * dx;
        let cmd = if i == 0 { 'M' } else { 'L' };
        write!(d, "{cmd}{x0:.2},{:.2} L{:.2},{:.2} ", y(v), x0 + dx, y(v)).unwrap();
    }
    d.trim_end().to_string()
}

/// Predicted (expected and argmax) against observed Kp for one day and horizon.
pub fn forecast_svg(rows: &[&ForecastRow]) -> String {
    let mut out = String::new();
    let title = match rows.first() {
        Some(r) => format!("Kp forecast issued {} horizon {} d", format_ts(r.day), r.horizon),
        None => "Kp forecast".to_string(),
    };
    header(&mut out, &title);
    axes(&mut out, 9.0, &[0.0, 3.0, 5.0, 7.0, 9.0], "Kp");
    let pick = |f: fn(&ForecastRow) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<f64>>();
    let series: [(&str, &str, &str, Vec<f64>); 3] = [
        ("observed", "black", "", pick(|r| r.kp_observed)),
        ("expected", "#1f5fbf", "", pick(|r| r.kp_expected)),
        ("argmax", "#d9531e", r#" stroke-dasharray="4 3""#, pick(|r| r.kp_argmax)),
    ];
    for (i, (name, color, dash, values)) in series.iter().enumerate() {
        writeln!(
            out,
            r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
            step_path(values, 9.0)
        )
        .unwrap();
        let lx = LEFT + 8.0 + 90.0 * i as f64;
        writeln!(
            out,
            r#"<line x1="{lx}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-width="2"{dash}/><text x="{:.1}" y="{:.1}">{name}</text>"#,
            H - 12.0,
            lx + 16.0,
            H - 12.0,
            lx + 20.0,
            H - 8.0
        )
        .unwrap();
    }
    if let (Some(a), Some(b)) = (rows.first(), rows.last()) {
        writeln!(
            out,
            r#"<text x="{LEFT}" y="{:.1}">{}</text><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            H - BOTTOM + 14.0,
            format_ts(a.step),
            W - RIGHT,
            H - BOTTOM + 14.0,
            format_ts(b.step)
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}

/// Error histogram for one horizon.
pub fn histogram_svg(summary: &ErrorSummary) -> String {
    let mut out = String::new();
    header(
        &mut out,
        &format!(
            "Error distribution, horizon {} d (n={}, MAE {:.3}, RMSE {:.3}, bias {:.3})",
            summary.horizon, summary.count, summary.mae, summary.rmse, summary.bias
        ),
    );
    let peak = summary.histogram.iter().copied().max().unwrap_or(0).max(1) as f64;
    let ticks = [0.0, (peak / 2.0).round(), peak];
    axes(&mut out, peak, &ticks, "count");
    let dx = (W - LEFT - RIGHT) / HIST_BINS as f64;
    for (i, &c) in summary.histogram.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let h = (H - BOTTOM - TOP) * c as f64 / peak;
        writeln!(
            out,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{h:.2}" fill="#1f5fbf"/>"##,
            LEFT + i as f64 * dx,
            H - BOTTOM - h,
            dx - 1.0
        )
        .unwrap();
    }
    for e in [-9.0, -6.0, -3.0, 0.0, 3.0, 6.0, 9.0] {
        let x = LEFT + (e - HIST_MIN) / HIST_WIDTH * dx;
        writeln!(out, r#"<text x="{x:.2}" y="{:.1}" text-anchor="middle">{e}</text>"#, H - BOTTOM + 14.0).unwrap();
    }
    writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">predicted - observed Kp</text>"#, W / 2.0, H - 8.0).unwrap();
    out.push_str("</svg>\n");
    out
}

fn write(path: PathBuf, text: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    files.push(path);
    Ok(())
}

/// One forecast plot per (day, horizon) and one histogram per horizon.
/// An empty report writes nothing.
pub fn emit_plots(summaries: &[ErrorSummary], report: &ForecastReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    if report.rows.is_empty() {
        return Ok(files);
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for (day, horizon) in report.groups() {
        let rows: Vec<&ForecastRow> = report.rows.iter().filter(|r| r.day == day && r.horizon == horizon).collect();
        let stamp: String = format_ts(day).chars().filter(|c| c.is_ascii_digit()).take(10).collect();
        write(out_dir.join(format!("forecast_{stamp}_h{horizon}.svg")), &forecast_svg(&rows), &mut files)?;
    }
    for s in summaries {
        write(out_dir.join(format!("errors_h{}.svg", s.horizon)), &histogram_svg(s), &mut files)?;
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::error_summary;

    fn report() -> ForecastReport {
        ForecastReport {
            rows: (0..8)
                .map(|s| ForecastRow {
                    day: 1_715_126_400,
                    horizon: 1,
                    step: 1_715_126_400 + s * 10_800,
                    kp_expected: 2.0 + s as f64 * 0.5,
                    kp_argmax: 2.0 + (s / 2) as f64,
                    kp_observed: 3.0,
                    error: s as f64 * 0.5 - 1.0,
                })
                .collect(),
            gaps: vec![],
        }
    }

    #[test]
    fn one_group_gives_two_files() {
        let dir = tempfile::tempdir().unwrap();
        let r = report();
        let files = emit_plots(&error_summary(&r), &r, dir.path()).unwrap();
        assert_eq!(files.len(), 2);
        let first = std::fs::read(&files[0]).unwrap();
        emit_plots(&error_summary(&r), &r, dir.path()).unwrap();
        assert_eq!(std::fs::read(&files[0]).unwrap(), first);
        assert!(files[0].file_name().unwrap().to_str().unwrap() == "forecast_2024050800_h1.svg");
    }

    #[test]
    fn empty_report_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("plots");
        let files = emit_plots(&[], &ForecastReport::default(), &target).unwrap();
        assert!(files.is_empty());
        assert!(!target.exists());
    }

    #[test]
    fn unwritable_directory_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, b"x").unwrap();
        let r = report();
        let err = emit_plots(&error_summary(&r), &r, &blocker.join("sub")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
