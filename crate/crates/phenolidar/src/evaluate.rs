//! Estimate-vs-truth evaluation: per-plot errors, RMSE, mean absolute
//! percent error, and the signed-percent-error histogram (5%-wide,
//! left-closed bins aligned at zero) with an SVG rendering.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::HeightsCsvRow;

pub const HISTOGRAM_BIN_PERCENT: f64 = 5.0;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PlotEvaluation {
    pub row: usize,
    pub col: usize,
    pub estimate_m: f64,
    pub truth_m: f64,
    pub error_m: f64,
    pub percent_error: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo_percent: f64,
    pub hi_percent: f64,
    pub count: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub plots: Vec<PlotEvaluation>,
    pub n_evaluated: usize,
    /// Estimate rows flagged degenerate (excluded from the metrics).
    pub n_degenerate: usize,
    pub rmse_m: f64,
    pub mean_abs_percent_error: f64,
    pub mean_signed_percent_error: f64,
    pub bin_width_percent: f64,
    pub histogram: Vec<HistogramBin>,
}

/// Pair estimates with truth by (row, col) and compute the error metrics.
///
/// Degenerate estimate rows are excluded (counted in `n_degenerate`), but a
/// truth plot with no estimate row at all, or an estimate for an unknown
/// plot, is a pairing error listing the offenders.
pub fn evaluate(
    estimates: &[HeightsCsvRow],
    truth: &[(usize, usize, f64)],
) -> Result<EvaluationReport> {
    let mut truth_map: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for &(r, c, h) in truth {
        if truth_map.insert((r, c), h).is_some() {
            return Err(Error::InvalidParam(format!(
                "duplicate truth entry for plot ({r}, {c})"
            )));
        }
        if !(h > 0.0) {
            return Err(Error::InvalidParam(format!(
                "truth height for plot ({r}, {c}) must be positive, got {h}"
            )));
        }
    }

    let mut seen: BTreeMap<(usize, usize), ()> = BTreeMap::new();
    let mut missing_from_truth = Vec::new();
    let mut plots = Vec::new();
    let mut n_degenerate = 0usize;
    for e in estimates {
        let key = (e.row, e.col);
        if seen.insert(key, ()).is_some() {
            return Err(Error::InvalidParam(format!(
                "duplicate estimate entry for plot ({}, {})",
                e.row, e.col
            )));
        }
        let Some(&truth_m) = truth_map.get(&key) else {
            missing_from_truth.push(key);
            continue;
        };
        if e.degenerate {
            n_degenerate += 1;
            continue;
        }
        let Some(estimate_m) = e.height_m else {
            n_degenerate += 1;
            continue;
        };
        let error_m = estimate_m - truth_m;
        plots.push(PlotEvaluation {
            row: e.row,
            col: e.col,
            estimate_m,
            truth_m,
            error_m,
            percent_error: 100.0 * error_m / truth_m,
        });
    }
    let missing_from_estimates: Vec<(usize, usize)> = truth_map
        .keys()
        .filter(|k| !seen.contains_key(*k))
        .copied()
        .collect();
    if !missing_from_truth.is_empty() || !missing_from_estimates.is_empty() {
        return Err(Error::PlotPairing {
            missing_from_truth,
            missing_from_estimates,
        });
    }
    if plots.is_empty() {
        return Err(Error::EmptyInput);
    }

    let n = plots.len() as f64;
    let rmse_m = (plots.iter().map(|p| p.error_m * p.error_m).sum::<f64>() / n).sqrt();
    let mean_abs_percent_error = plots.iter().map(|p| p.percent_error.abs()).sum::<f64>() / n;
    let mean_signed_percent_error = plots.iter().map(|p| p.percent_error).sum::<f64>() / n;

    let bin_of = |pct: f64| (pct / HISTOGRAM_BIN_PERCENT).floor() as i64;
    let lo_bin = plots.iter().map(|p| bin_of(p.percent_error)).min().unwrap();
    let hi_bin = plots.iter().map(|p| bin_of(p.percent_error)).max().unwrap();
    let mut histogram: Vec<HistogramBin> = (lo_bin..=hi_bin)
        .map(|b| HistogramBin {
            lo_percent: b as f64 * HISTOGRAM_BIN_PERCENT,
            hi_percent: (b + 1) as f64 * HISTOGRAM_BIN_PERCENT,
            count: 0,
        })
        .collect();
    for p in &plots {
        histogram[(bin_of(p.percent_error) - lo_bin) as usize].count += 1;
    }

    Ok(EvaluationReport {
        n_evaluated: plots.len(),
        n_degenerate,
        rmse_m,
        mean_abs_percent_error,
        mean_signed_percent_error,
        bin_width_percent: HISTOGRAM_BIN_PERCENT,
        histogram,
        plots,
    })
}

/// Per-plot CSV rendering of the report.
pub fn report_csv(report: &EvaluationReport) -> String {
    let mut out = String::from("plot_row,plot_col,estimate_m,truth_m,error_m,percent_error\n");
    for p in &report.plots {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{:.6}\n",
            p.row, p.col, p.estimate_m, p.truth_m, p.error_m, p.percent_error
        ));
    }
    out
}

/// Bar-chart SVG of the signed-percent-error histogram (plain markup, no
/// charting dependency).
pub fn histogram_svg(report: &EvaluationReport) -> String {
    let width = 720.0;
    let height = 420.0;
    let margin_l = 60.0;
    let margin_r = 20.0;
    let margin_t = 40.0;
    let margin_b = 70.0;
    let plot_w = width - margin_l - margin_r;
    let plot_h = height - margin_t - margin_b;
    let n_bins = report.histogram.len().max(1);
    let max_count = report
        .histogram
        .iter()
        .map(|b| b.count)
        .max()
        .unwrap_or(1)
        .max(1);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">Signed percent error per plot (RMSE {:.1} cm, n = {})</text>\n",
        width / 2.0,
        report.rmse_m * 100.0,
        report.n_evaluated
    ));

    // y axis with integer ticks
    let ticks = max_count.clamp(1, 8);
    for i in 0..=ticks {
        let count = (max_count as f64 * i as f64 / ticks as f64).round();
        let y = margin_t + plot_h - plot_h * count / max_count as f64;
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#dddddd\"/>\n",
            margin_l,
            margin_l + plot_w
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
            margin_l - 6.0,
            y + 4.0,
            count as usize
        ));
    }

    let bar_w = plot_w / n_bins as f64;
    for (i, bin) in report.histogram.iter().enumerate() {
        let h = plot_h * bin.count as f64 / max_count as f64;
        let x = margin_l + i as f64 * bar_w;
        let y = margin_t + plot_h - h;
        svg.push_str(&format!(
            "<rect x=\"{:.1}\" y=\"{y:.1}\" width=\"{:.1}\" height=\"{h:.1}\" fill=\"#4878a8\" stroke=\"white\"/>\n",
            x,
            (bar_w - 1.0).max(1.0)
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\" transform=\"rotate(45 {:.1} {:.1})\">{} to {}%</text>\n",
            x + bar_w / 2.0,
            margin_t + plot_h + 14.0,
            x + bar_w / 2.0,
            margin_t + plot_h + 14.0,
            bin.lo_percent,
            bin.hi_percent
        ));
    }

    // axes
    svg.push_str(&format!(
        "<line x1=\"{margin_l}\" y1=\"{margin_t}\" x2=\"{margin_l}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        margin_t + plot_h
    ));
    svg.push_str(&format!(
        "<line x1=\"{margin_l}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        margin_t + plot_h,
        margin_l + plot_w,
        margin_t + plot_h
    ));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">signed percent error</text>\n",
        margin_l + plot_w / 2.0,
        height - 8.0
    ));
    svg.push_str("</svg>\n");
    svg
}
