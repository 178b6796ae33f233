//! Deterministic SVG rendering of result tables: grouped bars per metric and
//! dataset, or metric-versus-alpha curves. Identical input bytes in, identical
//! SVG bytes out; floats are written with fixed precision.

use std::fmt::Write as _;
use std::path::Path;

use microdl_core::{Error, Result};

use crate::experiment::{ResultRow, ResultsTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    GroupedBars,
    AlphaCurve,
}

const METRICS: [(&str, fn(&ResultRow) -> f64); 4] = [
    ("Accuracy", |r| r.accuracy_mean),
    ("Jaccard", |r| r.jaccard_mean),
    ("FM", |r| r.fm_mean),
    ("Rand", |r| r.rand_mean),
];

const PALETTE: [&str; 6] = [
    "#4878d0", "#ee854a", "#6acc64", "#d65f5f", "#956cb4", "#8c613c",
];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn render_plots(table: &ResultsTable, kind: PlotKind, path: &Path) -> Result<()> {
    let svg = match kind {
        PlotKind::GroupedBars => grouped_bars_svg(table)?,
        PlotKind::AlphaCurve => alpha_curve_svg(table)?,
    };
    std::fs::write(path, svg)?;
    Ok(())
}

/// One panel per metric; groups are datasets, bars are methods.
pub fn grouped_bars_svg(table: &ResultsTable) -> Result<String> {
    let rows: Vec<&ResultRow> = table
        .rows
        .iter()
        .filter(|r| r.error.is_none() && r.method != "micro-dl-sweep")
        .collect();
    if rows.is_empty() {
        return Err(Error::Data("no plottable rows in results table".into()));
    }
    let mut datasets: Vec<&str> = Vec::new();
    let mut methods: Vec<&str> = Vec::new();
    for r in &rows {
        if !datasets.contains(&r.dataset.as_str()) {
            datasets.push(&r.dataset);
        }
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }

    let (pw, ph) = (370.0, 230.0);
    let (ml, mt) = (45.0, 28.0);
    let width = 2.0 * pw + 60.0;
    let height = 2.0 * ph + 110.0;
    let mut s = svg_open(width, height);

    for (mi, (metric_name, metric)) in METRICS.iter().enumerate() {
        let px = 20.0 + (mi % 2) as f64 * (pw + 20.0);
        let py = 10.0 + (mi / 2) as f64 * (ph + 30.0);
        let plot_w = pw - ml - 10.0;
        let plot_h = ph - mt - 30.0;
        let _ = write!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="13" font-family="sans-serif" font-weight="bold">{}</text>"#,
            px + ml,
            py + 16.0,
            esc(metric_name)
        );
        // axes
        let x0 = px + ml;
        let y0 = py + mt + plot_h;
        let _ = write!(
            s,
            r#"<line x1="{x0:.1}" y1="{:.1}" x2="{x0:.1}" y2="{y0:.1}" stroke="dimgray" stroke-width="1"/>"#,
            py + mt
        );
        let _ = write!(
            s,
            r#"<line x1="{x0:.1}" y1="{y0:.1}" x2="{:.1}" y2="{y0:.1}" stroke="dimgray" stroke-width="1"/>"#,
            x0 + plot_w
        );
        for tick in 0..=5 {
            let v = tick as f64 / 5.0;
            let y = y0 - v * plot_h;
            let _ = write!(
                s,
                r#"<text x="{:.1}" y="{:.1}" font-size="9" font-family="sans-serif" text-anchor="end">{v:.1}</text>"#,
                x0 - 4.0,
                y + 3.0
            );
        }
        let group_w = plot_w / datasets.len() as f64;
        let bar_w = (group_w * 0.8) / methods.len() as f64;
        for (di, d) in datasets.iter().enumerate() {
            let gx = x0 + di as f64 * group_w + group_w * 0.1;
            for (mj, m) in methods.iter().enumerate() {
                if let Some(row) = rows.iter().find(|r| r.dataset == *d && r.method == *m) {
                    let v = metric(row).clamp(0.0, 1.0);
                    let h = v * plot_h;
                    let _ = write!(
                        s,
                        r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                        gx + mj as f64 * bar_w,
                        y0 - h,
                        bar_w * 0.92,
                        h,
                        PALETTE[mj % PALETTE.len()]
                    );
                }
            }
            let _ = write!(
                s,
                r#"<text x="{:.1}" y="{:.1}" font-size="9" font-family="sans-serif" text-anchor="middle">{}</text>"#,
                gx + group_w * 0.4,
                y0 + 12.0,
                esc(d)
            );
        }
    }
    // legend
    let ly = height - 28.0;
    for (mj, m) in methods.iter().enumerate() {
        let lx = 40.0 + mj as f64 * 130.0;
        let _ = write!(
            s,
            r#"<rect x="{lx:.1}" y="{:.1}" width="12" height="12" fill="{}"/>"#,
            ly - 10.0,
            PALETTE[mj % PALETTE.len()]
        );
        let _ = write!(
            s,
            r#"<text x="{:.1}" y="{ly:.1}" font-size="11" font-family="sans-serif">{}</text>"#,
            lx + 16.0,
            esc(m)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Metric-versus-alpha line chart built from the sweep rows, averaged across
/// datasets; one polyline per metric.
pub fn alpha_curve_svg(table: &ResultsTable) -> Result<String> {
    let sweep: Vec<&ResultRow> = table
        .rows
        .iter()
        .filter(|r| r.error.is_none() && r.method == "micro-dl-sweep")
        .collect();
    if sweep.is_empty() {
        return Err(Error::Data(
            "results table has no alpha-sweep rows to plot".into(),
        ));
    }
    let mut alphas: Vec<f64> = sweep.iter().map(|r| r.alpha).collect();
    alphas.sort_by(|a, b| a.partial_cmp(b).expect("finite alphas"));
    alphas.dedup();

    let (width, height) = (520.0, 360.0);
    let (ml, mt, mr, mb) = (50.0, 20.0, 16.0, 70.0);
    let plot_w = width - ml - mr;
    let plot_h = height - mt - mb;
    let mut s = svg_open(width, height);
    let x0 = ml;
    let y0 = mt + plot_h;

    let _ = write!(
        s,
        r#"<line x1="{x0:.1}" y1="{mt:.1}" x2="{x0:.1}" y2="{y0:.1}" stroke="dimgray" stroke-width="1"/>"#
    );
    let _ = write!(
        s,
        r#"<line x1="{x0:.1}" y1="{y0:.1}" x2="{:.1}" y2="{y0:.1}" stroke="dimgray" stroke-width="1"/>"#,
        x0 + plot_w
    );
    let amin = alphas[0];
    let amax = *alphas.last().expect("nonempty");
    let span = (amax - amin).max(1e-9);
    let x_of = |a: f64| x0 + (a - amin) / span * plot_w;
    for &a in &alphas {
        let _ = write!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" font-family="sans-serif" text-anchor="middle">{a:.1}</text>"#,
            x_of(a),
            y0 + 14.0
        );
    }
    for tick in 0..=5 {
        let v = tick as f64 / 5.0;
        let _ = write!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" font-family="sans-serif" text-anchor="end">{v:.1}</text>"#,
            x0 - 5.0,
            y0 - v * plot_h + 3.0
        );
    }
    let _ = write!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-size="12" font-family="sans-serif" text-anchor="middle">scale coefficient</text>"#,
        x0 + plot_w / 2.0,
        y0 + 32.0
    );

    for (mi, (metric_name, metric)) in METRICS.iter().enumerate() {
        let mut points = String::new();
        for &a in &alphas {
            let at: Vec<f64> = sweep
                .iter()
                .filter(|r| r.alpha == a)
                .map(|r| metric(r))
                .collect();
            let mean = at.iter().sum::<f64>() / at.len() as f64;
            let _ = write!(
                points,
                "{:.2},{:.2} ",
                x_of(a),
                y0 - mean.clamp(0.0, 1.0) * plot_h
            );
        }
        let _ = write!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
            points.trim_end(),
            PALETTE[mi]
        );
        let lx = 50.0 + mi as f64 * 110.0;
        let ly = height - 16.0;
        let _ = write!(
            s,
            r#"<line x1="{lx:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{}" stroke-width="2"/>"#,
            ly - 4.0,
            lx + 14.0,
            ly - 4.0,
            PALETTE[mi]
        );
        let _ = write!(
            s,
            r#"<text x="{:.1}" y="{ly:.1}" font-size="11" font-family="sans-serif">{}</text>"#,
            lx + 18.0,
            esc(metric_name)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn svg_open(width: f64, height: f64) -> String {
    format!(
        concat!(
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" "#,
            r#"viewBox="0 0 {w:.0} {h:.0}">"#,
            r#"<rect x="0" y="0" width="{w:.0}" height="{h:.0}" fill="white"/>"#
        ),
        w = width,
        h = height
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(dataset: &str, method: &str, alpha: f64, acc: f64) -> ResultRow {
        ResultRow {
            dataset: dataset.into(),
            method: method.into(),
            alpha,
            repeats: 1,
            accuracy_mean: acc,
            accuracy_std: 0.0,
            jaccard_mean: acc * 0.9,
            jaccard_std: 0.0,
            fm_mean: acc * 0.95,
            fm_std: 0.0,
            rand_mean: acc * 0.8,
            rand_std: 0.0,
            rng_stream: "1".into(),
            error: None,
        }
    }

    #[test]
    fn grouped_bars_counts_bars_and_stays_well_formed() {
        let table = ResultsTable {
            rows: vec![
                row("ds1", "micro-dl", 0.3, 0.8),
                row("ds1", "nmicro-dl", 0.0, 0.7),
            ],
            friedman: None,
        };
        let svg = grouped_bars_svg(&table).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        // 2 methods x 1 dataset x 4 panels + 2 legend swatches + background
        let rects = svg.matches("<rect").count();
        assert_eq!(rects, 8 + 2 + 1);
        // tags balance
        assert_eq!(svg.matches("<svg").count(), svg.matches("</svg>").count());
        assert_eq!(svg.matches("<text").count(), svg.matches("</text>").count());
    }

    #[test]
    fn alpha_curve_has_one_vertex_per_alpha_per_metric() {
        let rows: Vec<ResultRow> = (1..=9)
            .map(|i| row("ds", "micro-dl-sweep", i as f64 / 10.0, 0.5))
            .collect();
        let table = ResultsTable {
            rows,
            friedman: None,
        };
        let svg = alpha_curve_svg(&table).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 4);
        for segment in svg.split("<polyline").skip(1) {
            let points = segment.split("points=\"").nth(1).unwrap();
            let points = points.split('"').next().unwrap();
            assert_eq!(points.split_whitespace().count(), 9);
        }
    }

    #[test]
    fn identical_tables_render_identical_bytes() {
        let table = ResultsTable {
            rows: vec![row("d", "micro-dl", 0.3, 0.61234567)],
            friedman: None,
        };
        assert_eq!(
            grouped_bars_svg(&table).unwrap(),
            grouped_bars_svg(&table).unwrap()
        );
    }

    #[test]
    fn empty_tables_are_rejected() {
        let table = ResultsTable {
            rows: vec![],
            friedman: None,
        };
        assert!(grouped_bars_svg(&table).is_err());
        assert!(alpha_curve_svg(&table).is_err());
    }

    #[test]
    fn dataset_names_are_xml_escaped() {
        let table = ResultsTable {
            rows: vec![row("a<b&c", "micro-dl", 0.3, 0.5)],
            friedman: None,
        };
        let svg = grouped_bars_svg(&table).unwrap();
        assert!(svg.contains("a&lt;b&amp;c"));
        assert!(!svg.contains("a<b&c"));
    }
}
