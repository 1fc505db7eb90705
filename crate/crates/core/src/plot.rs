//! Log-log scatter of `D(gamma)` with the fitted line, as a standalone SVG.

use std::fmt::Write as _;

use crate::transport::ScalingFit;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 30.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 60.0;

struct Axis {
    lo: f64,
    hi: f64,
    px_lo: f64,
    px_hi: f64,
}

impl Axis {
    /// Natural-log range padded to whole decades.
    fn new(values: impl Iterator<Item = f64>, px_lo: f64, px_hi: f64) -> Self {
        let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let ln10 = std::f64::consts::LN_10;
        lo = (lo / ln10 - 0.05).floor() * ln10;
        hi = (hi / ln10 + 0.05).ceil() * ln10;
        Self { lo, hi, px_lo, px_hi }
    }

    fn px(&self, ln_v: f64) -> f64 {
        self.px_lo + (ln_v - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo)
    }

    /// `(ln value, label)` for decades, `None` label for minor ticks.
    fn ticks(&self) -> Vec<(f64, Option<String>)> {
        let ln10 = std::f64::consts::LN_10;
        let first = (self.lo / ln10).round() as i32;
        let last = (self.hi / ln10).round() as i32;
        let mut out = Vec::new();
        for e in first..=last {
            out.push((e as f64 * ln10, Some(decade_label(e))));
            if e < last {
                for m in 2..10 {
                    out.push((e as f64 * ln10 + (m as f64).ln(), None));
                }
            }
        }
        out
    }
}

fn decade_label(e: i32) -> String {
    match e {
        0 => "1".into(),
        1 => "10".into(),
        _ => format!("10^{e}"),
    }
}

pub fn scaling_svg(fit: &ScalingFit) -> String {
    let x = Axis::new(fit.points.iter().map(|p| p.0), MARGIN_L, WIDTH - MARGIN_R);
    let y = Axis::new(fit.points.iter().map(|p| p.1), HEIGHT - MARGIN_B, MARGIN_T);
    let mut s = String::new();
    let w = &mut s;
    writeln!(w, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#).unwrap();
    writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    let (x0, x1, y0, y1) = (x.px_lo, x.px_hi, y.px_lo, y.px_hi);
    writeln!(w, r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#, x1 - x0, y0 - y1).unwrap();

    for (v, label) in x.ticks() {
        let px = x.px(v);
        let len = if label.is_some() { 8.0 } else { 4.0 };
        writeln!(w, r#"<line x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#, y0 - len).unwrap();
        if let Some(l) = label {
            writeln!(w, r#"<text x="{px:.2}" y="{:.2}" font-size="12" text-anchor="middle">{l}</text>"#, y0 + 18.0).unwrap();
        }
    }
    for (v, label) in y.ticks() {
        let py = y.px(v);
        let len = if label.is_some() { 8.0 } else { 4.0 };
        writeln!(w, r#"<line x1="{x0}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="black"/>"#, x0 + len).unwrap();
        if let Some(l) = label {
            writeln!(w, r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="end">{l}</text>"#, x0 - 6.0, py + 4.0).unwrap();
        }
    }
    writeln!(w, r#"<text x="{:.2}" y="{:.2}" font-size="14" text-anchor="middle">γ</text>"#, 0.5 * (x0 + x1), HEIGHT - 15.0).unwrap();
    writeln!(
        w,
        r#"<text x="20" y="{:.2}" font-size="14" text-anchor="middle" transform="rotate(-90 20 {:.2})">D</text>"#,
        0.5 * (y0 + y1),
        0.5 * (y0 + y1)
    )
    .unwrap();

    let line_y = |lx: f64| fit.intercept + fit.slope * lx;
    writeln!(
        w,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="steelblue" stroke-width="1.5"/>"#,
        x.px(x.lo),
        y.px(line_y(x.lo)),
        x.px(x.hi),
        y.px(line_y(x.hi))
    )
    .unwrap();
    for &(lx, ly) in &fit.points {
        writeln!(w, r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="firebrick"/>"#, x.px(lx), y.px(ly)).unwrap();
    }
    writeln!(
        w,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="end">slope = {:.4}, R² = {:.6}</text>"#,
        x1 - 8.0,
        y1 + 18.0,
        fit.slope,
        fit.r_squared
    )
    .unwrap();
    w.push_str("</svg>\n");
    s
}
