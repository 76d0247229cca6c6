use std::fmt::Write;

use crate::diagnostics::RankHistogram;

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 300.0;
const MARGIN: f64 = 40.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#, WIDTH / 2.0, escape(title));
    s
}

fn axes(s: &mut String, x_max: f64, y_max: f64) {
    let (x0, y0) = (MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{}" y2="{y0}" stroke="black"/>"#, WIDTH - MARGIN / 2.0);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{MARGIN}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<text x="{x0}" y="{}" text-anchor="middle">0</text>"#, y0 + 15.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, WIDTH - MARGIN / 2.0, y0 + 15.0, fmt(x_max));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, x0 - 4.0, MARGIN + 4.0, fmt(y_max));
}

fn fmt(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e9 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

/// Bar chart of rank counts with the expected count as a dashed line and,
/// optionally, the weighted-rank histogram as an outline.
pub fn histogram_svg(hist: &RankHistogram, title: &str, weighted: Option<&RankHistogram>) -> String {
    let mut s = open(title);
    let plot_w = WIDTH - 1.5 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let y_max = hist
        .counts
        .iter()
        .chain(weighted.iter().flat_map(|w| w.counts.iter()))
        .copied()
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    axes(&mut s, hist.support as f64, y_max);
    let bar_w = plot_w / hist.bins as f64;
    for (j, &c) in hist.counts.iter().enumerate() {
        let h = c as f64 / y_max * plot_h;
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#7a9cc6" stroke="white"/>"##,
            MARGIN + j as f64 * bar_w,
            HEIGHT - MARGIN - h,
            bar_w,
            h
        );
    }
    if let Some(w) = weighted {
        let mut d = String::new();
        for (j, &c) in w.counts.iter().enumerate() {
            let y = HEIGHT - MARGIN - c as f64 / y_max * plot_h;
            let x = MARGIN + j as f64 * bar_w;
            let _ = write!(d, "{}{x:.2},{y:.2} L{:.2},{y:.2} ", if j == 0 { "M" } else { "L" }, x + bar_w);
        }
        let _ = writeln!(s, r##"<path d="{}" fill="none" stroke="#c0392b" stroke-width="1.5"/>"##, d.trim_end());
    }
    let ey = HEIGHT - MARGIN - hist.expected() / y_max * plot_h;
    let _ = writeln!(
        s,
        r#"<line x1="{MARGIN}" y1="{ey:.2}" x2="{:.2}" y2="{ey:.2}" stroke="black" stroke-dasharray="4 3"/>"#,
        MARGIN + plot_w
    );
    s.push_str("</svg>\n");
    s
}

/// Two density histograms on shared bins, drawn as step outlines.
pub fn overlay_svg(a: &[f64], b: &[f64], labels: [&str; 2], bins: usize, title: &str) -> String {
    let mut s = open(title);
    let all = a.iter().chain(b).copied().filter(|v| v.is_finite());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    let (lo, hi) = if lo < hi { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    let width = (hi - lo) / bins as f64;
    let density = |xs: &[f64]| {
        let mut c = vec![0.0; bins];
        for &x in xs {
            if x.is_finite() {
                c[(((x - lo) / width) as usize).min(bins - 1)] += 1.0;
            }
        }
        let n = xs.len().max(1) as f64;
        c.iter().map(|v| v / (n * width)).collect::<Vec<f64>>()
    };
    let (da, db) = (density(a), density(b));
    let y_max = da.iter().chain(&db).copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let plot_w = WIDTH - 1.5 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    axes(&mut s, hi, y_max);
    let _ = writeln!(s, r#"<text x="{MARGIN}" y="{}" text-anchor="start">{}</text>"#, HEIGHT - MARGIN + 15.0, fmt(lo));
    for (d, colour, label, ly) in [(&da, "#2c7fb8", labels[0], 38.0), (&db, "#d95f0e", labels[1], 54.0)] {
        let mut path = String::new();
        for (j, v) in d.iter().enumerate() {
            let x = MARGIN + j as f64 * plot_w / bins as f64;
            let y = HEIGHT - MARGIN - v / y_max * plot_h;
            let _ = write!(path, "{}{x:.2},{y:.2} L{:.2},{y:.2} ", if j == 0 { "M" } else { "L" }, x + plot_w / bins as f64);
        }
        let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#, path.trim_end());
        let _ = writeln!(s, r#"<text x="{}" y="{ly}" fill="{colour}" text-anchor="end">{}</text>"#, WIDTH - MARGIN, escape(label));
    }
    s.push_str("</svg>\n");
    s
}

/// Horizontal bar chart of a rank histogram, one line per bin.
pub fn ascii_histogram(hist: &RankHistogram, width: usize) -> String {
    let max = hist.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let e = hist.expected();
    let mark = ((e / max) * width as f64).round() as usize;
    let mut out = String::new();
    for (j, &c) in hist.counts.iter().enumerate() {
        let n = ((c as f64 / max) * width as f64).round() as usize;
        let mut bar: Vec<char> = std::iter::repeat_n('#', n).chain(std::iter::repeat_n(' ', width - n)).collect();
        if mark < width && bar[mark] == ' ' {
            bar[mark] = '|';
        }
        let lo = hist.edge(j);
        let _ = writeln!(out, "{lo:>9.1} {:>6} {}", c, bar.into_iter().collect::<String>().trim_end());
    }
    out
}
