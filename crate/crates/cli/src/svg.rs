//! Minimal static SVG bar charts for diagnostics.

/// Histogram with pre-binned counts. `edges` has one more entry than
/// `counts`; labels are printed at every other edge.
pub fn histogram_svg(title: &str, edges: &[f64], counts: &[usize]) -> String {
    assert_eq!(edges.len(), counts.len() + 1);
    let (w, h) = (640.0, 360.0);
    let (ml, mr, mt, mb) = (50.0, 15.0, 40.0, 45.0);
    let plot_w = w - ml - mr;
    let plot_h = h - mt - mb;
    let max = counts.iter().copied().max().unwrap_or(1).max(1) as f64;
    let n = counts.len() as f64;

    let mut s = String::new();
    s.push_str(&format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    ));
    s.push_str(&format!(
        r#"<rect width="{w}" height="{h}" fill="white"/><text x="{x}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{title}</text>"#,
        x = w / 2.0
    ));
    for (i, &c) in counts.iter().enumerate() {
        let bar_h = plot_h * c as f64 / max;
        let x = ml + plot_w * i as f64 / n;
        let y = mt + plot_h - bar_h;
        let bw = plot_w / n - 2.0;
        s.push_str(&format!(
            r##"<rect x="{x:.1}" y="{y:.1}" width="{bw:.1}" height="{bar_h:.1}" fill="#4878a8"/>"##
        ));
    }
    // axes
    s.push_str(&format!(
        r#"<line x1="{ml}" y1="{y}" x2="{x2}" y2="{y}" stroke="black"/><line x1="{ml}" y1="{mt}" x2="{ml}" y2="{y}" stroke="black"/>"#,
        y = mt + plot_h,
        x2 = w - mr
    ));
    for (i, e) in edges.iter().enumerate().step_by(2.max(edges.len() / 8)) {
        let x = ml + plot_w * i as f64 / n;
        s.push_str(&format!(
            r#"<text x="{x:.1}" y="{y}" font-family="sans-serif" font-size="11" text-anchor="middle">{e:.2}</text>"#,
            y = mt + plot_h + 16.0
        ));
    }
    s.push_str(&format!(
        r#"<text x="{x}" y="{y}" font-family="sans-serif" font-size="11" text-anchor="end">{max}</text>"#,
        x = ml - 6.0,
        y = mt + 10.0
    ));
    s.push_str("</svg>\n");
    s
}
