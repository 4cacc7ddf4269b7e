//! Minimal scatter plot: x = validation loss, y = energy per token, colour
//! = TTFT, radius = TPOT.

use std::fmt::Write;

pub struct Point {
    pub val_loss: f64,
    pub e_tok_uj: f64,
    pub ttft_ms: f64,
    pub tpot_ms: f64,
}

const W: f64 = 640.0;
const H: f64 = 480.0;
const PAD: f64 = 60.0;

fn span(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let lo = v.clone().fold(f64::INFINITY, f64::min);
    let hi = v.fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn unit(v: f64, (lo, hi): (f64, f64)) -> f64 {
    (v - lo) / (hi - lo)
}

/// Blue (low) to red (high).
fn colour(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let r = (40.0 + 200.0 * t) as u8;
    let b = (220.0 - 180.0 * t) as u8;
    format!("#{r:02x}50{b:02x}")
}

pub fn front_svg(points: &[Point], title: &str) -> String {
    let pts: Vec<&Point> = points
        .iter()
        .filter(|p| {
            [p.val_loss, p.e_tok_uj, p.ttft_ms, p.tpot_ms]
                .iter()
                .all(|v| v.is_finite())
        })
        .collect();
    let xs = span(pts.iter().map(|p| p.val_loss));
    let ys = span(pts.iter().map(|p| p.e_tok_uj));
    let cs = span(pts.iter().map(|p| p.ttft_ms));
    let rs = span(pts.iter().map(|p| p.tpot_ms));
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let (x0, x1, y0, y1) = (PAD, W - PAD, H - PAD, PAD);
    let _ = writeln!(
        s,
        r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let px = x0 + f * (x1 - x0);
        let py = y0 + f * (y1 - y0);
        let _ = writeln!(
            s,
            r#"<text x="{px:.1}" y="{}" text-anchor="middle">{:.3}</text>"#,
            y0 + 18.0,
            xs.0 + f * (xs.1 - xs.0)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{py:.1}" text-anchor="end">{:.3}</text>"#,
            x0 - 6.0,
            ys.0 + f * (ys.1 - ys.0)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">validation loss</text>"#,
        W / 2.0,
        H - 20.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" transform="rotate(-90 16 {})" text-anchor="middle">energy per token (uJ)</text>"#,
        H / 2.0,
        H / 2.0
    );
    for p in &pts {
        let px = x0 + unit(p.val_loss, xs) * (x1 - x0);
        let py = y0 + unit(p.e_tok_uj, ys) * (y1 - y0);
        let r = 3.0 + 9.0 * unit(p.tpot_ms, rs);
        let _ = writeln!(
            s,
            r#"<circle cx="{px:.2}" cy="{py:.2}" r="{r:.2}" fill="{}" fill-opacity="0.75" stroke="black" stroke-width="0.5"/>"#,
            colour(unit(p.ttft_ms, cs))
        );
    }
    let lx = W - PAD - 150.0;
    let _ = writeln!(
        s,
        r#"<text x="{lx}" y="{}">colour: TTFT {:.3} to {:.3} ms</text>"#,
        PAD - 20.0,
        cs.0,
        cs.1
    );
    let _ = writeln!(
        s,
        r#"<circle cx="{}" cy="{}" r="4" fill="{}"/><circle cx="{}" cy="{}" r="4" fill="{}"/>"#,
        lx - 24.0,
        PAD - 24.0,
        colour(0.0),
        lx - 12.0,
        PAD - 24.0,
        colour(1.0)
    );
    let _ = writeln!(
        s,
        r#"<text x="{lx}" y="{}">size: TPOT {:.3} to {:.3} ms</text>"#,
        PAD - 6.0,
        rs.0,
        rs.1
    );
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
