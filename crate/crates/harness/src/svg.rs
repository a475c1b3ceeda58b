//! Static SVG plots written by hand.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let pad = |(lo, hi): (f64, f64)| {
            let span = if hi > lo { hi - lo } else { lo.abs().max(1.0) };
            (lo - 0.05 * span, hi + 0.05 * span)
        };
        Self { x: pad(x), y: pad(y) }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, title: &str, xlabel: &str, ylabel: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">
<rect width="{W}" height="{H}" fill="white"/>
<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>
<text x="{}" y="{}" text-anchor="middle">{}</text>
<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>
"#,
        W / 2.0,
        escape(title),
        (LEFT + W - RIGHT) / 2.0,
        H - 10.0,
        escape(xlabel),
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    );
}

fn axes(out: &mut String, f: &Frame, xticks: &[(f64, String)], yticks: &[(f64, String)]) {
    let (x0, y0) = (LEFT, H - BOTTOM);
    let _ = writeln!(out, r#"<path d="M{x0} {TOP} V{y0} H{}" fill="none" stroke="black"/>"#, W - RIGHT);
    for (v, label) in xticks {
        let x = f.px(*v);
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{y0}" x2="{x:.2}" y2="{}" stroke="black"/><text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#,
            y0 + 5.0,
            y0 + 18.0,
            escape(label)
        );
    }
    for (v, label) in yticks {
        let y = f.py(*v);
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{y:.2}" x2="{x0}" y2="{y:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            y + 4.0,
            escape(label)
        );
    }
}

fn linear_ticks(lo: f64, hi: f64, n: usize) -> Vec<(f64, String)> {
    (0..=n)
        .map(|i| {
            let v = lo + (hi - lo) * i as f64 / n as f64;
            (v, format!("{v:.3}"))
        })
        .collect()
}

/// One box per horizon, whiskers at the given extremes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxStats {
    pub label: f64,
    pub low: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub high: f64,
}

/// Box series with a dashed reference line.
pub fn box_series(title: &str, ylabel: &str, boxes: &[BoxStats], reference: f64) -> String {
    let mut out = String::new();
    header(&mut out, title, "horizon T", ylabel);
    let lo = boxes.iter().map(|b| b.low).fold(reference, f64::min);
    let hi = boxes.iter().map(|b| b.high).fold(reference, f64::max);
    let n = boxes.len().max(1) as f64;
    let f = Frame::new((0.0, n), (lo, hi));
    let xticks: Vec<(f64, String)> = boxes.iter().enumerate().map(|(i, b)| (i as f64 + 0.5, format!("{}", b.label))).collect();
    axes(&mut out, &f, &xticks, &linear_ticks(lo, hi, 4));
    let half = 0.25 * (f.px(1.0) - f.px(0.0));
    for (i, b) in boxes.iter().enumerate() {
        let x = f.px(i as f64 + 0.5);
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="lightsteelblue" stroke="black"/><line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="2"/>"#,
            f.py(b.low),
            f.py(b.high),
            x - half,
            f.py(b.q75),
            2.0 * half,
            (f.py(b.q25) - f.py(b.q75)).max(0.5),
            x - half,
            f.py(b.median),
            x + half,
            f.py(b.median)
        );
    }
    let y = f.py(reference);
    let _ = writeln!(out, r#"<line x1="{LEFT}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="firebrick" stroke-dasharray="6 4"/>"#, W - RIGHT);
    out.push_str("</svg>\n");
    out
}

/// Log-log points with the least-squares line and a reference slope.
pub fn log_log(title: &str, ylabel: &str, x: &[f64], y: &[f64], slope: f64, reference_slope: f64) -> String {
    let mut out = String::new();
    header(&mut out, title, "log10 T", ylabel);
    let lx: Vec<f64> = x.iter().map(|v| v.log10()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.log10()).collect();
    let fold = |v: &[f64]| (v.iter().copied().fold(f64::INFINITY, f64::min), v.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let (x0, x1) = fold(&lx);
    let (y0, y1) = fold(&ly);
    let mx = lx.iter().sum::<f64>() / lx.len().max(1) as f64;
    let my = ly.iter().sum::<f64>() / ly.len().max(1) as f64;
    let line = |s: f64| [(x0, my + s * (x0 - mx)), (x1, my + s * (x1 - mx))];
    let lines = [line(slope), line(reference_slope)];
    let ylo = lines.iter().flatten().map(|p| p.1).fold(y0, f64::min);
    let yhi = lines.iter().flatten().map(|p| p.1).fold(y1, f64::max);
    let f = Frame::new((x0, x1), (ylo, yhi));
    axes(&mut out, &f, &linear_ticks(x0, x1, 3), &linear_ticks(ylo, yhi, 4));
    for ((a, b), (color, dash)) in lines.iter().map(|l| (l[0], l[1])).zip([("steelblue", ""), ("firebrick", "6 4")]) {
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-dasharray="{dash}"/>"#,
            f.px(a.0),
            f.py(a.1),
            f.px(b.0),
            f.py(b.1)
        );
    }
    for (a, b) in lx.iter().zip(&ly) {
        let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="steelblue"/>"#, f.px(*a), f.py(*b));
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="end">fitted slope {slope:.3}, reference {reference_slope:.3}</text>"#,
        W - RIGHT - 5.0,
        TOP + 12.0
    );
    out.push_str("</svg>\n");
    out
}

/// Paired bars per probe time.
pub fn deviation_bars(title: &str, probes: &[f64], first: (&str, &[f64]), second: (&str, &[f64])) -> String {
    let mut out = String::new();
    header(&mut out, title, "probe time t", "d2 distance");
    let hi = first.1.iter().chain(second.1).copied().fold(0.0, f64::max);
    let n = probes.len().max(1) as f64;
    let f = Frame::new((0.0, n), (0.0, hi));
    let xticks: Vec<(f64, String)> = probes.iter().enumerate().map(|(i, p)| (i as f64 + 0.5, format!("{p}"))).collect();
    axes(&mut out, &f, &xticks, &linear_ticks(0.0, hi, 4));
    let width = 0.35 * (f.px(1.0) - f.px(0.0));
    for (series, (color, offset)) in [first.1, second.1].iter().zip([("steelblue", -1.0), ("darkorange", 0.0)]) {
        for (i, v) in series.iter().enumerate() {
            let x = f.px(i as f64 + 0.5) + offset * width;
            let y = f.py(*v);
            let _ = writeln!(
                out,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{width:.2}" height="{:.2}" fill="{color}"/>"#,
                (f.py(0.0) - y).max(0.0)
            );
        }
    }
    for (k, (name, color)) in [(first.0, "steelblue"), (second.0, "darkorange")].iter().enumerate() {
        let y = TOP + 12.0 + 16.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/><text x="{}" y="{y}">{}</text>"#,
            W - RIGHT - 150.0,
            y - 9.0,
            W - RIGHT - 135.0,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plots_are_well_formed() {
        let b = BoxStats { label: 50.0, low: 0.5, q25: 0.9, median: 1.0, q75: 1.1, high: 1.5 };
        for svg in [
            box_series("theta", "estimate", &[b, b], 1.0),
            log_log("u", "log10 U^2", &[50.0, 200.0, 800.0], &[1e-2, 3e-3, 8e-4], -0.9, -0.6),
            deviation_bars("dev", &[0.0, 2.0], ("theta", &[0.0, 0.0]), ("plain", &[1.0, 1.1])),
        ] {
            assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
            assert!(!svg.contains("NaN"));
        }
    }
}
