use std::fmt::Write as _;

use crate::metrics::PeakRow;

const SIZE: f64 = 480.0;
const PAD: f64 = 48.0;

/// Standalone SVG of estimated against true peak height, isolated peaks in
/// blue and overlapping ones in orange, with the identity line.
pub fn scatter_svg(peaks: &[PeakRow], title: &str) -> String {
    let hi = peaks
        .iter()
        .flat_map(|p| [p.report.support.truth.height, p.report.estimate.height])
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max)
        .max(1e-12)
        * 1.05;
    let lo = peaks
        .iter()
        .map(|p| p.report.estimate.height)
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::min);
    let span = hi - lo;
    let px = |v: f64| PAD + (v - lo) / span * (SIZE - 2.0 * PAD);
    let py = |v: f64| SIZE - PAD - (v - lo) / span * (SIZE - 2.0 * PAD);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        SIZE / 2.0,
        escape(title)
    );
    let (x0, x1) = (px(lo), px(hi));
    let (y0, y1) = (py(lo), py(hi));
    let _ = writeln!(
        s,
        r#"<rect x="{x0:.2}" y="{y1:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y0 - y1
    );
    let _ = writeln!(
        s,
        r##"<line x1="{:.2}" y1="{:.2}" x2="{x1:.2}" y2="{y1:.2}" stroke="#888" stroke-dasharray="4 3"/>"##,
        px(lo.max(0.0)),
        py(lo.max(0.0))
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle">true height</text>"#,
        SIZE / 2.0,
        SIZE - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.2})">estimated height</text>"#,
        SIZE / 2.0,
        SIZE / 2.0
    );
    for p in peaks {
        let (t, e) = (p.report.support.truth.height, p.report.estimate.height);
        if !(t.is_finite() && e.is_finite()) {
            continue;
        }
        let color = if p.report.is_overlapping() { "#e07b00" } else { "#1f5fbf" };
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}" fill-opacity="0.7"/>"#,
            px(t),
            py(e)
        );
    }
    let _ = writeln!(
        s,
        r##"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" fill="#1f5fbf">isolated</text>"##,
        PAD + 8.0,
        PAD + 14.0
    );
    let _ = writeln!(
        s,
        r##"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" fill="#e07b00">overlap &gt; 30%</text>"##,
        PAD + 8.0,
        PAD + 28.0
    );
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
