//! Minimal static SVG bar charts for the report command.

/// Renders one bar per (label, value). Deterministic output text.
pub fn bar_chart(title: &str, entries: &[(String, f64)]) -> String {
    let width = 640.0;
    let height = 360.0;
    let margin = 60.0;
    let plot_w = width - 2.0 * margin;
    let plot_h = height - 2.0 * margin;
    let max_v = entries.iter().map(|(_, v)| *v).fold(0.0f64, f64::max).max(1e-12);
    let n = entries.len().max(1) as f64;
    let slot = plot_w / n;
    let bar_w = slot * 0.6;

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    ));
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    s.push_str(&format!(
        "<text x=\"{:.1}\" y=\"30\" font-family=\"sans-serif\" font-size=\"18\" text-anchor=\"middle\">{}</text>\n",
        width / 2.0,
        title
    ));
    // axes
    s.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b:.1}\" x2=\"{r:.1}\" y2=\"{b:.1}\" stroke=\"black\"/>\n",
        m = margin,
        b = height - margin,
        r = width - margin
    ));
    s.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b:.1}\" stroke=\"black\"/>\n",
        m = margin,
        t = margin,
        b = height - margin
    ));
    for (i, (label, v)) in entries.iter().enumerate() {
        let h = (v / max_v) * plot_h;
        let x = margin + i as f64 * slot + (slot - bar_w) / 2.0;
        let y = height - margin - h;
        s.push_str(&format!(
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{bar_w:.2}\" height=\"{h:.2}\" fill=\"#4878a8\"/>\n"
        ));
        s.push_str(&format!(
            "<text x=\"{cx:.2}\" y=\"{ly:.2}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{label}</text>\n",
            cx = x + bar_w / 2.0,
            ly = height - margin + 16.0,
        ));
        s.push_str(&format!(
            "<text x=\"{cx:.2}\" y=\"{vy:.2}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{v:.4}</text>\n",
            cx = x + bar_w / 2.0,
            vy = y - 4.0,
        ));
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_contains_bars_and_is_deterministic() {
        let entries = vec![("a".to_string(), 0.5), ("b".to_string(), 1.0)];
        let a = bar_chart("abs_rel", &entries);
        let b = bar_chart("abs_rel", &entries);
        assert_eq!(a, b);
        assert_eq!(a.matches("<rect").count(), 3); // background + 2 bars
        assert!(a.contains("abs_rel"));
    }
}
