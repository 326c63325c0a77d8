//! Minimal static line plots of aggregated curves.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::experiment::CurvePoint;

const W: f64 = 640.0;
const H: f64 = 420.0;
const PAD: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Median of each series against `x`, one polyline per (group, kind).
pub fn line_plot(points: &[CurvePoint], x_label: &str, y_label: &str) -> String {
    let mut series: BTreeMap<(String, String), Vec<(f64, f64)>> = BTreeMap::new();
    for p in points {
        series.entry((p.group.clone(), p.kind.clone())).or_default().push((p.x, p.median));
    }
    let (xmin, xmax) = bounds(points.iter().map(|p| p.x));
    let (ymin, ymax) = bounds(points.iter().map(|p| p.median));
    let sx = |x: f64| PAD + (x - xmin) / (xmax - xmin) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - ymin) / (ymax - ymin) * (H - 2.0 * PAD);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{PAD},{PAD} V{} H{}" fill="none" stroke="black"/>"#,
        H - PAD,
        W - PAD
    );
    for (v, label) in [(xmin, xmin), (xmax, xmax)] {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{label:.2}</text>"#,
            sx(v),
            H - PAD + 18.0
        );
    }
    for (v, label) in [(ymin, ymin), (ymax, ymax)] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{label:.3}</text>"#,
            PAD - 6.0,
            sy(v) + 4.0
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#, W / 2.0, H - 15.0);
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{y_label}</text>"#,
        H / 2.0,
        H / 2.0
    );
    for (i, ((group, kind), mut pts)) in series.into_iter().enumerate() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            path.join(" ")
        );
        for &(x, y) in &pts {
            let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, sx(x), sy(y));
        }
        let ly = PAD + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly:.1}" fill="{color}">{kind} ({group})</text>"#,
            W - PAD - 150.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plot_is_well_formed() {
        let pts = vec![
            CurvePoint {
                group: "prior".into(),
                kind: "spv".into(),
                x: 1.0,
                n: 1,
                mean: 0.2,
                median: 0.2,
                min: 0.2,
                max: 0.2,
                prior: 0.01,
            },
            CurvePoint {
                group: "prior".into(),
                kind: "spv".into(),
                x: 0.2,
                n: 1,
                mean: 0.1,
                median: 0.1,
                min: 0.1,
                max: 0.1,
                prior: 0.01,
            },
        ];
        let s = line_plot(&pts, "fraction", "AUPRC");
        assert!(s.starts_with("<svg"));
        assert!(s.trim_end().ends_with("</svg>"));
        assert_eq!(s.matches("<polyline").count(), 1);
        assert_eq!(s.matches("<circle").count(), 2);
    }
}
