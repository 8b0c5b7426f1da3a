//! Minimal SVG line plots of result rows.

use std::fmt::Write;

use crsense::experiment::CsvRow;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const COLOURS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// One polyline per strategy for the first metric found in `rows`. Time
/// series plot slot against throughput; sweeps plot the swept value.
pub fn plot(title: &str, rows: &[CsvRow]) -> String {
    let Some(first) = rows.first() else {
        return empty(title);
    };
    let (var, metric) = (first.sweep_var.as_str(), first.metric.as_str());
    let points: Vec<&CsvRow> = rows.iter().filter(|r| r.sweep_var == var && r.metric == metric).collect();

    let mut strategies: Vec<&str> = Vec::new();
    for r in &points {
        if !strategies.contains(&r.strategy.as_str()) {
            strategies.push(&r.strategy);
        }
    }
    let xs = points.iter().map(|r| r.sweep_value).filter(|x| x.is_finite());
    let ys = points.iter().map(|r| r.mean).filter(|y| y.is_finite());
    let (x0, x1) = bounds(xs);
    let (y0, y1) = bounds(ys.chain([0.0]));
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = header(title);
    let _ = writeln!(
        s,
        r#"<line x1="{m}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{m}" y1="{t}" x2="{m}" y2="{b}" stroke="black"/>"#,
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN,
        t = MARGIN
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12">{var} [{x0:.3}, {x1:.3}]</text>"#, MARGIN, HEIGHT - 15.0);
    let _ = writeln!(s, r#"<text x="5" y="{}" font-size="12">{metric} [{y0:.3}, {y1:.3}]</text>"#, MARGIN - 10.0);
    for (i, strategy) in strategies.iter().enumerate() {
        let colour = COLOURS[i % COLOURS.len()];
        let path: Vec<String> = points
            .iter()
            .filter(|r| r.strategy == *strategy && r.sweep_value.is_finite() && r.mean.is_finite())
            .map(|r| format!("{:.2},{:.2}", sx(r.sweep_value), sy(r.mean)))
            .collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{colour}" points="{}"/>"#, path.join(" "));
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12" fill="{colour}">{strategy}</text>"#,
            WIDTH - MARGIN - 120.0,
            MARGIN + 15.0 * (i as f64 + 1.0)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, lo + 0.5)
    }
}

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\">\n\
         <text x=\"{MARGIN}\" y=\"20\" font-size=\"14\">{title}</text>\n"
    )
}

fn empty(title: &str) -> String {
    let mut s = header(title);
    s.push_str("</svg>\n");
    s
}
