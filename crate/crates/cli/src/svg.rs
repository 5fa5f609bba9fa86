//! Minimal SVG output: heatmaps over two-dimensional covariate points and
//! line plots. Presentation only.

use std::fmt::Write as _;

const SIZE: f64 = 400.0;
const MARGIN: f64 = 40.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

// viridis anchors
const RAMP: [(f64, f64, f64); 5] = [
    (68.0, 1.0, 84.0),
    (59.0, 82.0, 139.0),
    (33.0, 145.0, 140.0),
    (94.0, 201.0, 98.0),
    (253.0, 231.0, 37.0),
];

fn ramp(u: f64) -> String {
    let u = if u.is_finite() { u.clamp(0.0, 1.0) } else { 0.0 };
    let s = u * (RAMP.len() - 1) as f64;
    let i = (s.floor() as usize).min(RAMP.len() - 2);
    let f = s - i as f64;
    let mix = |a: f64, b: f64| (a + f * (b - a)).round() as u8;
    let (a, b) = (RAMP[i], RAMP[i + 1]);
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

fn distinct_sorted(v: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut xs: Vec<f64> = v.collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

fn header(out: &mut String, title: &str) {
    let full = SIZE + 2.0 * MARGIN;
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{full}" height="{full}" viewBox="0 0 {full} {full}">"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        full / 2.0,
        MARGIN * 0.6,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One cell per point, placed on the grid spanned by the distinct first and
/// second coordinates. Continuous values use a colour ramp; `categorical`
/// values are rounded to palette indices.
pub fn heatmap(points: &[Vec<f64>], values: &[f64], title: &str, categorical: bool) -> String {
    let xs = distinct_sorted(points.iter().map(|p| p[0]));
    let ys = distinct_sorted(points.iter().map(|p| p.get(1).copied().unwrap_or(0.0)));
    let (cw, ch) = (SIZE / xs.len().max(1) as f64, SIZE / ys.len().max(1) as f64);
    let finite = values.iter().copied().filter(|v| v.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, f64::min);
    let hi = finite.fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = String::new();
    header(&mut out, title);
    for (p, &v) in points.iter().zip(values) {
        let i = xs.partition_point(|&x| x < p[0]);
        let j = ys.partition_point(|&y| y < p.get(1).copied().unwrap_or(0.0));
        let colour = if categorical {
            PALETTE[(v.max(0.0) as usize) % PALETTE.len()].to_string()
        } else {
            ramp((v - lo) / span)
        };
        // row 0 at the bottom
        let _ = writeln!(
            out,
            r#"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="{colour}"/>"#,
            MARGIN + i as f64 * cw,
            MARGIN + SIZE - (j + 1) as f64 * ch,
            cw + 0.01,
            ch + 0.01
        );
    }
    if !categorical && lo.is_finite() {
        let _ = writeln!(
            out,
            r#"<text x="{MARGIN}" y="{}" font-family="sans-serif" font-size="11">range {lo:.4} to {hi:.4}</text>"#,
            2.0 * MARGIN + SIZE - 10.0
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Polylines of every `(label, y)` series over the shared `x`.
pub fn line_plot(x: &[f64], series: &[(String, Vec<f64>)], title: &str) -> String {
    let (xlo, xhi) = (x.first().copied().unwrap_or(0.0), x.last().copied().unwrap_or(1.0));
    let all = series
        .iter()
        .flat_map(|(_, y)| y.iter().copied())
        .filter(|v| v.is_finite());
    let ylo = all.clone().fold(f64::INFINITY, f64::min);
    let yhi = all.fold(f64::NEG_INFINITY, f64::max);
    let (xs, ys) = (
        if xhi > xlo { xhi - xlo } else { 1.0 },
        if yhi > ylo { yhi - ylo } else { 1.0 },
    );
    let mut out = String::new();
    header(&mut out, title);
    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{SIZE}" height="{SIZE}" fill="none" stroke="grey"/>"#
    );
    for (k, (label, y)) in series.iter().enumerate() {
        let pts: Vec<String> = x
            .iter()
            .zip(y)
            .filter(|(_, v)| v.is_finite())
            .map(|(a, b)| {
                format!(
                    "{:.3},{:.3}",
                    MARGIN + (a - xlo) / xs * SIZE,
                    MARGIN + SIZE - (b - ylo) / ys * SIZE
                )
            })
            .collect();
        let colour = PALETTE[k % PALETTE.len()];
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{colour}">{}</text>"#,
            MARGIN + 8.0,
            MARGIN + 14.0 * (k + 1) as f64,
            escape(label)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{MARGIN}" y="{}" font-family="sans-serif" font-size="11">x {xlo:.3} to {xhi:.3}, y {ylo:.3} to {yhi:.3}</text>"#,
        2.0 * MARGIN + SIZE - 10.0
    );
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heatmap_has_one_cell_per_point() {
        let pts: Vec<Vec<f64>> = (0..9).map(|i| vec![(i % 3) as f64, (i / 3) as f64]).collect();
        let v: Vec<f64> = (0..9).map(f64::from).collect();
        let s = heatmap(&pts, &v, "a < b", false);
        assert_eq!(s.matches("<rect").count(), 9);
        assert!(s.contains("a &lt; b"));
        assert!(s.contains("#440154") && s.contains("#fde725"));
    }

    #[test]
    fn line_plot_draws_each_series() {
        let x = [0.0, 0.5, 1.0];
        let s = line_plot(
            &x,
            &[("a".into(), vec![0.0, 1.0, 0.0]), ("b".into(), vec![1.0, 1.0, 1.0])],
            "t",
        );
        assert_eq!(s.matches("<polyline").count(), 2);
    }
}
