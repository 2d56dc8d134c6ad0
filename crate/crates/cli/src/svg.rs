//! Plain SVG line plots and heatmaps.

use std::fmt::Write;

const W: f64 = 480.0;
const H: f64 = 320.0;
const PAD: f64 = 48.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

pub struct Series<'a> {
    pub name: &'a str,
    /// Missing points break the line.
    pub values: Vec<Option<f64>>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">
<rect width="{W}" height="{H}" fill="white"/>
<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>
"#,
        W / 2.0,
        esc(title)
    );
}

/// Values in [0, 1] against categorical x positions.
pub fn line_plot(title: &str, x_label: &str, x_ticks: &[String], series: &[Series]) -> String {
    let mut s = String::new();
    header(&mut s, title);
    let (x0, x1, y0, y1) = (PAD, W - PAD, H - PAD, PAD);
    let n = x_ticks.len().max(2);
    let px = |i: usize| x0 + (x1 - x0) * i as f64 / (n - 1) as f64;
    let py = |v: f64| y0 + (y1 - y0) * v.clamp(0.0, 1.0);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for k in 0..=4 {
        let v = k as f64 / 4.0;
        let _ = writeln!(
            s,
            r##"<line x1="{x0}" y1="{y:.1}" x2="{x1}" y2="{y:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">{v:.2}</text>"##,
            x0 - 4.0,
            py(v) + 4.0,
            y = py(v)
        );
    }
    for (i, t) in x_ticks.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            px(i),
            y0 + 16.0,
            esc(t)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        H - 8.0,
        esc(x_label)
    );
    for (k, ser) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut segment: Vec<String> = Vec::new();
        let flush = |seg: &mut Vec<String>, s: &mut String| {
            if seg.len() > 1 {
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                    seg.join(" ")
                );
            }
            seg.clear();
        };
        for (i, v) in ser.values.iter().enumerate() {
            match v {
                Some(v) => {
                    segment.push(format!("{:.1},{:.1}", px(i), py(*v)));
                    let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, px(i), py(*v));
                }
                None => flush(&mut segment, &mut s),
            }
        }
        flush(&mut segment, &mut s);
        let ly = y1 + 4.0 + 14.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{ly}" width="10" height="10" fill="{color}"/><text x="{}" y="{}">{}</text>"#,
            x1 - 60.0,
            x1 - 46.0,
            ly + 9.0,
            esc(ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// `cells[r][c]` in [0, 1]; missing cells are drawn grey and labelled "–".
pub fn heatmap(title: &str, row_label: &str, col_label: &str, rows: &[String], cols: &[String], cells: &[Vec<Option<f64>>]) -> String {
    let mut s = String::new();
    header(&mut s, title);
    let (x0, y0) = (PAD + 16.0, PAD);
    let cw = (W - x0 - PAD) / cols.len().max(1) as f64;
    let ch = (H - y0 - PAD) / rows.len().max(1) as f64;
    for (r, label) in rows.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#,
            x0 - 4.0,
            y0 + ch * (r as f64 + 0.5) + 4.0,
            esc(label)
        );
        for c in 0..cols.len() {
            let v = cells.get(r).and_then(|row| row.get(c)).copied().flatten();
            let (fill, text) = match v {
                Some(v) => {
                    let t = v.clamp(0.0, 1.0);
                    // white to dark blue
                    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
                    (
                        format!("#{:02x}{:02x}{:02x}", lerp(255.0, 8.0), lerp(255.0, 48.0), lerp(255.0, 107.0)),
                        format!("{v:.3}"),
                    )
                }
                None => ("#bbbbbb".to_string(), "–".to_string()),
            };
            let ink = if v.is_some_and(|v| v > 0.5) { "white" } else { "black" };
            let (x, y) = (x0 + cw * c as f64, y0 + ch * r as f64);
            let _ = writeln!(
                s,
                r#"<rect x="{x:.1}" y="{y:.1}" width="{cw:.1}" height="{ch:.1}" fill="{fill}" stroke="white"/><text x="{:.1}" y="{:.1}" text-anchor="middle" fill="{ink}">{text}</text>"#,
                x + cw / 2.0,
                y + ch / 2.0 + 4.0
            );
        }
    }
    for (c, label) in cols.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            x0 + cw * (c as f64 + 0.5),
            H - PAD + 16.0,
            esc(label)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        x0 + (W - x0 - PAD) / 2.0,
        H - 8.0,
        esc(col_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        esc(row_label)
    );
    s.push_str("</svg>\n");
    s
}
