//! Dependency-free SVG line chart of episode returns.
//!
//! Renders the raw reward curve plus its K-window moving average — the same
//! quantity the training figures plot. Output is deterministic: fixed
//! canvas, fixed precision, no timestamps.

use std::path::Path;

use crate::error::{Error, Result};
use crate::exp::metrics::read_episodes_csv;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 50.0;

fn polyline(points: &[(f64, f64)], color: &str, width: f64) -> String {
    let coords: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    format!(
        "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\" points=\"{}\"/>\n",
        coords.join(" ")
    )
}

/// Render `episodes.csv` to an SVG chart with the raw per-episode returns and
/// their moving average (window capped by the episodes available so far).
pub fn emit_plot(episodes_csv: &Path, out_svg: &Path, window: usize) -> Result<()> {
    let records = read_episodes_csv(episodes_csv)?;
    if records.is_empty() {
        return Err(Error::Parse(format!(
            "{}: no episode rows to plot",
            episodes_csv.display()
        )));
    }
    let returns: Vec<f64> = records.iter().map(|r| r.episode_return).collect();
    let n = returns.len();

    let mut moving = Vec::with_capacity(n);
    let mut acc = 0.0;
    for i in 0..n {
        acc += returns[i];
        if i >= window {
            acc -= returns[i - window];
        }
        moving.push(acc / window.min(i + 1) as f64);
    }

    let (mut y_min, mut y_max) = returns
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if y_min == y_max {
        y_min -= 1.0;
        y_max += 1.0;
    }
    let x_max = (n - 1).max(1) as f64;

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let to_xy = |i: usize, v: f64| -> (f64, f64) {
        let x = MARGIN_LEFT + (i as f64 / x_max) * plot_w;
        let y = MARGIN_TOP + (1.0 - (v - y_min) / (y_max - y_min)) * plot_h;
        (x, y)
    };

    let raw: Vec<(f64, f64)> = returns.iter().enumerate().map(|(i, &v)| to_xy(i, v)).collect();
    let ma: Vec<(f64, f64)> = moving.iter().enumerate().map(|(i, &v)| to_xy(i, v)).collect();

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    // axes
    let x0 = MARGIN_LEFT;
    let y0 = MARGIN_TOP + plot_h;
    svg.push_str(&format!(
        "  <line x1=\"{x0}\" y1=\"{MARGIN_TOP}\" x2=\"{x0}\" y2=\"{y0}\" stroke=\"black\"/>\n"
    ));
    svg.push_str(&format!(
        "  <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{}\" y2=\"{y0}\" stroke=\"black\"/>\n",
        MARGIN_LEFT + plot_w
    ));

    // axis labels
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" font-size=\"14\" text-anchor=\"middle\">Episode</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    ));
    svg.push_str(&format!(
        "  <text x=\"18\" y=\"{}\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">Reward</text>\n",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    ));
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"end\">{y_max:.1}</text>\n",
        x0 - 6.0,
        MARGIN_TOP + 4.0
    ));
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"end\">{y_min:.1}</text>\n",
        x0 - 6.0,
        y0 + 4.0
    ));
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
        MARGIN_LEFT + plot_w,
        y0 + 18.0,
        n - 1
    ));

    svg.push_str(&polyline(&raw, "#9ecae1", 1.0));
    svg.push_str(&polyline(&ma, "#d62728", 2.0));
    svg.push_str("</svg>\n");

    std::fs::write(out_svg, svg)?;
    Ok(())
}
