use std::fmt::Write;

use crate::groundtruth::ScalarField;

const STOPS: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

fn color(u: f64) -> String {
    let x = u.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let k = (x.floor() as usize).min(STOPS.len() - 2);
    let f = x - k as f64;
    let c: Vec<u8> = (0..3).map(|i| (STOPS[k][i] + f * (STOPS[k + 1][i] - STOPS[k][i])).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Heatmap of a scalar field with optional polylines on top. `t2` increases upward.
pub fn heatmap_svg(field: &ScalarField, paths: &[&[[f64; 2]]]) -> String {
    let g = field.grid;
    let (w, h) = (480.0, 480.0 * (g.ny as f64 / g.nx as f64).clamp(0.25, 4.0));
    let (cw, ch) = (w / g.nx as f64, h / g.ny as f64);
    let finite = field.values.iter().copied().filter(|v| v.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, f64::min);
    let hi = finite.fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, "<title>{}</title>", field.label);
    for (c, v) in field.values.iter().enumerate() {
        let (i, j) = g.coords(c);
        let fill = if v.is_finite() { color((v - lo) / span) } else { "#808080".into() };
        let _ = writeln!(
            s,
            r#"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="{fill}"/>"#,
            i as f64 * cw,
            h - (j + 1) as f64 * ch,
            cw + 0.05,
            ch + 0.05
        );
    }
    let [x0, x1, y0, y1] = g.bounds;
    for path in paths {
        let pts: Vec<String> = path
            .iter()
            .map(|p| format!("{:.3},{:.3}", (p[0] - x0) / (x1 - x0) * w, h - (p[1] - y0) / (y1 - y0) * h))
            .collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="white" stroke-width="2"/>"#, pts.join(" "));
    }
    s.push_str("</svg>\n");
    s
}
