//! Minimal SVG line charts for sweep results.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::simulation::SweepRow;

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 320.0;
const MARGIN: f64 = 56.0;
const COLORS: [&str; 3] = ["#1f77b4", "#d62728", "#7f7f7f"];

pub struct Series<'a> {
    pub label: &'a str,
    pub ys: Vec<f64>,
    pub dashed: bool,
}

fn nice_range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in vals.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Renders one chart. `xs` are plotted on a log10 axis when `log_x`.
pub fn line_chart(title: &str, x_label: &str, xs: &[f64], series: &[Series], log_x: bool) -> String {
    let tx: Vec<f64> = xs
        .iter()
        .map(|&x| if log_x { x.log10() } else { x })
        .collect();
    let (x0, x1) = nice_range(tx.iter().copied());
    let (y0, y1) = nice_range(series.iter().flat_map(|s| s.ys.iter().copied()));
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 1.5 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 1.5 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (bx, by) = (px(x0), py(y0));
    let _ = writeln!(
        s,
        r#"<path d="M{bx:.1},{:.1} V{by:.1} H{:.1}" stroke="black" fill="none"/>"#,
        py(y1),
        px(x1)
    );
    for k in 0..=4 {
        let y = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            bx - 4.0,
            py(y) + 4.0,
            fmt_tick(y)
        );
    }
    for (x, t) in xs.iter().zip(&tx) {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            px(*t),
            by + 14.0,
            fmt_tick(*x)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    for (k, ser) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = tx
            .iter()
            .zip(&ser.ys)
            .filter(|(_, y)| y.is_finite())
            .map(|(x, y)| format!("{:.1},{:.1}", px(*x), py(*y)))
            .collect();
        let dash = if ser.dashed { r#" stroke-dasharray="5,4""# } else { "" };
        let _ = writeln!(
            s,
            r#"<polyline points="{}" stroke="{color}" fill="none" stroke-width="1.5"{dash}/>"#,
            pts.join(" ")
        );
        let ly = 34.0 + 14.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{ly:.1}" fill="{color}">{}</text>"#,
            WIDTH - MARGIN * 2.2,
            escape(ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.1e}")
    } else {
        format!("{:.3}", v)
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    }
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `fdr.svg`, `fnr.svg`, `diff.svg` and `kl.svg` into `dir`.
pub fn write_panels(
    dir: &Path,
    rows: &[SweepRow],
    x_label: &str,
    alpha_star: f64,
) -> Result<Vec<PathBuf>> {
    let xs: Vec<f64> = rows.iter().map(|r| r.sweep_value).collect();
    let col = |f: fn(&SweepRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let panels = [
        (
            "fdr.svg",
            "FDR",
            vec![
                Series { label: "correct", ys: col(|r| r.fdr_cor), dashed: false },
                Series { label: "misspecified", ys: col(|r| r.fdr_mis), dashed: false },
                Series { label: "nominal", ys: vec![alpha_star; rows.len()], dashed: true },
            ],
        ),
        (
            "fnr.svg",
            "FNR",
            vec![
                Series { label: "correct", ys: col(|r| r.fnr_cor), dashed: false },
                Series { label: "misspecified", ys: col(|r| r.fnr_mis), dashed: false },
            ],
        ),
        (
            "diff.svg",
            "Rejection rate difference",
            vec![Series { label: "cor - mis", ys: col(|r| r.rejection_rate_diff), dashed: false }],
        ),
        (
            "kl.svg",
            "KL divergence per dimension",
            vec![Series { label: "KL / m", ys: col(|r| r.kl_per_dim), dashed: false }],
        ),
    ];
    let log_x = xs.iter().all(|x| *x > 0.0);
    let mut out = Vec::new();
    for (file, title, series) in panels {
        let path = dir.join(file);
        std::fs::write(&path, line_chart(title, x_label, &xs, &series, log_x))?;
        out.push(path);
    }
    Ok(out)
}
