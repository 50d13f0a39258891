//! Training curves as a standalone SVG.

use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

/// The metrics columns the plot reads; others are ignored.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct MetricsRow {
    pub episode: usize,
    pub stage: u8,
    pub learner_obj: f64,
    pub competitor_obj: f64,
    pub soc_per_customer: Option<f64>,
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let rows = rdr.deserialize().collect::<std::result::Result<Vec<MetricsRow>, _>>()?;
    if rows.is_empty() {
        return Err(Error::InvalidArgument(format!("{} has no metric rows", path.display())));
    }
    Ok(rows)
}

/// Trailing mean over the last `window` values (fewer at the start).
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    let mut sum = 0.0;
    for i in 0..xs.len() {
        sum += xs[i];
        if i >= window {
            sum -= xs[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

const W: f64 = 720.0;
const PANEL_H: f64 = 260.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 40.0;

struct Panel {
    y0: f64,
    lo: f64,
    hi: f64,
    x_lo: f64,
    x_hi: f64,
}

impl Panel {
    fn new(y0: f64, series: &[&[(f64, f64)]]) -> Self {
        let pts = series.iter().flat_map(|s| s.iter());
        let (mut x_lo, mut x_hi, mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts {
            x_lo = x_lo.min(x);
            x_hi = x_hi.max(x);
            lo = lo.min(y);
            hi = hi.max(y);
        }
        if x_hi <= x_lo {
            x_hi = x_lo + 1.0;
        }
        if hi <= lo {
            lo -= 0.5;
            hi += 0.5;
        }
        let pad = 0.05 * (hi - lo);
        Self {
            y0,
            lo: lo - pad,
            hi: hi + pad,
            x_lo,
            x_hi,
        }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x_lo) / (self.x_hi - self.x_lo) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        self.y0 + TOP + (self.hi - y) / (self.hi - self.lo) * (PANEL_H - TOP - BOTTOM)
    }

    fn bottom(&self) -> f64 {
        self.y0 + PANEL_H - BOTTOM
    }

    fn frame(&self, svg: &mut String, title: &str, x_label: &str) {
        let (l, r, t, b) = (LEFT, W - RIGHT, self.y0 + TOP, self.bottom());
        let _ = writeln!(svg, r##"<rect x="{l}" y="{t:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#444"/>"##, r - l, b - t);
        let _ = writeln!(svg, r#"<text x="{l}" y="{:.2}" font-size="14">{title}</text>"#, t - 10.0);
        for k in 0..=4 {
            let v = self.lo + (self.hi - self.lo) * f64::from(k) / 4.0;
            let y = self.py(v);
            let _ = writeln!(svg, r##"<line x1="{:.2}" y1="{y:.2}" x2="{l}" y2="{y:.2}" stroke="#444"/>"##, l - 4.0);
            let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{}</text>"#, l - 6.0, y + 4.0, tick(v));
            let xv = self.x_lo + (self.x_hi - self.x_lo) * f64::from(k) / 4.0;
            let x = self.px(xv);
            let _ = writeln!(svg, r##"<line x1="{x:.2}" y1="{b:.2}" x2="{x:.2}" y2="{:.2}" stroke="#444"/>"##, b + 4.0);
            let _ = writeln!(svg, r#"<text x="{x:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"#, b + 16.0, tick(xv));
        }
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{x_label}</text>"#, (l + r) / 2.0, b + 32.0);
    }

    fn line(&self, svg: &mut String, pts: &[(f64, f64)], color: &str, label: &str, slot: usize) {
        if pts.is_empty() {
            return;
        }
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y))).collect();
        let _ = writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, coords.join(" "));
        let lx = W - RIGHT - 170.0;
        let ly = self.y0 + TOP + 14.0 + 16.0 * slot as f64;
        let _ = writeln!(svg, r#"<line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/>"#, ly - 4.0, lx + 18.0, ly - 4.0);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{ly:.2}" font-size="11">{label}</text>"#, lx + 24.0);
    }

    fn marker(&self, svg: &mut String, at: f64) {
        if at < self.x_lo || at > self.x_hi {
            return;
        }
        let x = self.px(at);
        let _ = writeln!(
            svg,
            r##"<line class="stage-switch" x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#888" stroke-dasharray="5,4"/>"##,
            self.y0 + TOP,
            self.bottom()
        );
        let _ = writeln!(svg, r##"<text x="{:.2}" y="{:.2}" font-size="11" fill="#666">stage 2</text>"##, x + 4.0, self.bottom() - 6.0);
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

/// Moving-average objective per player, plus battery use per customer when
/// the log has it, with a dashed marker at the first stage-2 episode.
pub fn render_svg(rows: &[MetricsRow], window: usize, stage_switch: Option<usize>) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("no metric rows to plot".into()));
    }
    if window == 0 {
        return Err(Error::InvalidArgument("moving-average window must be positive".into()));
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.episode as f64).collect();
    let zip = |ys: Vec<f64>| -> Vec<(f64, f64)> { xs.iter().copied().zip(ys).collect() };
    let learner = zip(moving_average(&rows.iter().map(|r| r.learner_obj).collect::<Vec<_>>(), window));
    let competitor = zip(moving_average(&rows.iter().map(|r| r.competitor_obj).collect::<Vec<_>>(), window));
    let soc: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.soc_per_customer.map(|s| (r.episode as f64, s))).collect();
    let soc_ma: Vec<(f64, f64)> = {
        let ys: Vec<f64> = soc.iter().map(|p| p.1).collect();
        soc.iter().map(|p| p.0).zip(moving_average(&ys, window)).collect()
    };
    let switch = stage_switch.or_else(|| rows.iter().find(|r| r.stage >= 2).map(|r| r.episode));

    let height = if soc.is_empty() { PANEL_H } else { 2.0 * PANEL_H };
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{height}" viewBox="0 0 {W} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{height}" fill="white"/>"#);
    let top = Panel::new(0.0, &[&learner, &competitor]);
    top.frame(&mut svg, &format!("episode objective, moving average over {window}"), "episode");
    top.line(&mut svg, &learner, "#1f77b4", "learner", 0);
    top.line(&mut svg, &competitor, "#ff7f0e", "competitor", 1);
    if let Some(s) = switch {
        top.marker(&mut svg, s as f64);
    }
    if !soc.is_empty() {
        let low = Panel::new(PANEL_H, &[&soc_ma]);
        low.frame(&mut svg, "battery use per customer (learner)", "episode");
        low.line(&mut svg, &soc_ma, "#2ca02c", "SOC per customer", 0);
        if let Some(s) = switch {
            low.marker(&mut svg, s as f64);
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
