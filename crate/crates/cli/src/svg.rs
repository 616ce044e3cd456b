//! Minimal SVG charts. Output depends only on the data passed in.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 52.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{:.1}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        W / 2.0,
        esc(title)
    );
}

/// Linear map from `[lo, hi]` to `[a, b]`; a flat range maps to the middle.
fn scale(v: f64, lo: f64, hi: f64, a: f64, b: f64) -> f64 {
    if hi > lo {
        a + (v - lo) / (hi - lo) * (b - a)
    } else {
        (a + b) / 2.0
    }
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.0e}")
    } else {
        format!("{v:.2}")
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo.is_finite() {
        (lo, hi)
    } else {
        (0.0, 1.0)
    }
}

fn axes(out: &mut String, x_label: &str, y_label: &str, x: (f64, f64), y: (f64, f64), log_x: bool) {
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    let _ = writeln!(
        out,
        "<path d=\"M{x0:.1},{y1:.1}V{y0:.1}H{x1:.1}\" fill=\"none\" stroke=\"black\"/>"
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let yv = y.0 + f * (y.1 - y.0);
        let py = scale(yv, y.0, y.1, y0, y1);
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
            x0 - 4.0,
            py + 4.0,
            fmt_tick(yv)
        );
        let xv = x.0 + f * (x.1 - x.0);
        let px = scale(xv, x.0, x.1, x0, x1);
        let label = if log_x { fmt_tick(10f64.powf(xv)) } else { fmt_tick(xv) };
        let _ = writeln!(
            out,
            "<text x=\"{px:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{label}</text>",
            y0 + 16.0
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
        (x0 + x1) / 2.0,
        H - 12.0,
        esc(x_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"14\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.1})\">{}</text>",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        esc(y_label)
    );
}

fn legend(out: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = TOP + 14.0 * i as f64;
        let _ = writeln!(
            out,
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"10\" height=\"10\" fill=\"{}\"/><text x=\"{:.1}\" y=\"{:.1}\">{}</text>",
            W - RIGHT + 12.0,
            y,
            PALETTE[i % PALETTE.len()],
            W - RIGHT + 26.0,
            y + 9.0,
            esc(name)
        );
    }
}

pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series], log_x: bool) -> String {
    let tx = |x: f64| if log_x { x.max(f64::MIN_POSITIVE).log10() } else { x };
    let x = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| tx(p.0))));
    let y = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let y = (y.0.min(0.0), y.1);
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, x_label, y_label, x, y, log_x);
    for (i, s) in series.iter().enumerate() {
        let mut d = String::new();
        for (k, &(px, py)) in s.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()).enumerate() {
            let sx = scale(tx(px), x.0, x.1, LEFT, W - RIGHT);
            let sy = scale(py, y.0, y.1, H - BOTTOM, TOP);
            let _ = write!(d, "{}{sx:.1},{sy:.1}", if k == 0 { "M" } else { "L" });
        }
        let _ = writeln!(
            out,
            "<path d=\"{d}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>",
            PALETTE[i % PALETTE.len()]
        );
    }
    legend(&mut out, &series.iter().map(|s| s.name.as_str()).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

pub fn bar_chart(title: &str, y_label: &str, bars: &[(String, f64)]) -> String {
    let hi = bars.iter().map(|b| b.1).fold(0.0f64, f64::max).max(1e-12);
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, "", y_label, (0.0, bars.len() as f64), (0.0, hi), false);
    let slot = (W - RIGHT - LEFT) / bars.len().max(1) as f64;
    for (i, (name, v)) in bars.iter().enumerate() {
        let h = scale(v.max(0.0), 0.0, hi, 0.0, H - BOTTOM - TOP);
        let x = LEFT + slot * i as f64 + slot * 0.15;
        let _ = writeln!(
            out,
            "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{h:.1}\" fill=\"{}\"/>",
            H - BOTTOM - h,
            slot * 0.7,
            PALETTE[i % PALETTE.len()]
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"9\">{}</text>",
            x + slot * 0.35,
            H - BOTTOM - h - 3.0,
            esc(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Grid of values, white (lowest) to dark blue (highest); `None` cells are grey.
pub fn heatmap(title: &str, rows: &[String], cols: &[String], values: &[Vec<Option<f64>>]) -> String {
    let (lo, hi) = bounds(values.iter().flatten().flatten().copied());
    let mut out = String::new();
    header(&mut out, title);
    let n = rows.len().max(cols.len()).max(1) as f64;
    let cell = ((H - TOP - BOTTOM) / n).min((W - LEFT - RIGHT) / n);
    for (i, row) in values.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let fill = match v {
                Some(v) => {
                    let t = scale(*v, lo, hi.max(lo + 1e-12), 0.0, 1.0);
                    let c = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
                    format!("#{:02x}{:02x}{:02x}", c(255.0, 8.0), c(255.0, 48.0), c(255.0, 107.0))
                }
                None => "#dddddd".into(),
            };
            let _ = writeln!(
                out,
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{cell:.1}\" height=\"{cell:.1}\" fill=\"{fill}\" stroke=\"white\"/>",
                LEFT + cell * j as f64,
                TOP + cell * i as f64
            );
        }
    }
    for (i, r) in rows.iter().enumerate() {
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
            LEFT - 4.0,
            TOP + cell * (i as f64 + 0.5) + 4.0,
            esc(r)
        );
    }
    for (j, c) in cols.iter().enumerate() {
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            LEFT + cell * (j as f64 + 0.5),
            TOP + cell * n + 14.0,
            esc(c)
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\">source (row) → target (column), {} to {} bits</text>",
        LEFT,
        H - 8.0,
        fmt_tick(lo),
        fmt_tick(hi)
    );
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo() -> Vec<Series> {
        vec![Series {
            name: "a<b".into(),
            points: vec![(1e-4, 0.0), (1e-2, 1.0), (1.0, 2.0)],
        }]
    }

    #[test]
    fn deterministic_and_well_formed() {
        let a = line_chart("t", "x", "y", &demo(), true);
        assert_eq!(a, line_chart("t", "x", "y", &demo(), true));
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert!(a.contains("a&lt;b"));
        assert_eq!(a.matches("<path").count(), 2);
    }

    #[test]
    fn bars_and_heatmap_render_empty_and_missing() {
        assert!(bar_chart("t", "y", &[]).ends_with("</svg>\n"));
        let names = vec!["a".to_string(), "b".to_string()];
        let h = heatmap("m", &names, &names, &[vec![None, Some(1.0)], vec![Some(0.0), None]]);
        assert_eq!(h.matches("#dddddd").count(), 2);
        assert!(h.contains("#08306b"));
        assert!(h.contains("#ffffff"));
    }
}
