//! Deterministic figure and table export: VSUP heatmaps of predictions or
//! interaction effects, per-level summary plots and truth-vs-estimate
//! scatters. Every renderer returns the document as a `String`; the
//! `emit_*` helpers write it to disk.

pub mod svg;
pub mod vsup;

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::posterior::{interaction_effect, level_summaries, predict_cells, LevelSummary};
use crate::sampler::PosteriorDraws;
use svg::{escape, tick, Scale, Svg};
pub use vsup::{hex, Rgb, VsupCell, VsupPalette};

/// A two-factor grid of (median, sd) with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapGrid {
    pub title: String,
    pub row_factor: String,
    pub col_factor: String,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    /// `cells[i][j] = (median, sd)`.
    pub cells: Vec<Vec<(f64, f64)>>,
}

impl HeatmapGrid {
    pub fn palette(&self, levels: usize) -> VsupPalette {
        VsupPalette::fit_to(levels, self.cells.iter().flatten())
    }
}

/// Rows by descending mean of medians, likewise columns; ties by label.
pub fn heatmap_order(
    medians: &[Vec<f64>],
    row_labels: &[String],
    col_labels: &[String],
) -> (Vec<usize>, Vec<usize>) {
    let rows = medians.len();
    let cols = medians.first().map_or(0, Vec::len);
    let row_mean: Vec<f64> = medians
        .iter()
        .map(|r| r.iter().sum::<f64>() / cols.max(1) as f64)
        .collect();
    let col_mean: Vec<f64> = (0..cols)
        .map(|j| medians.iter().map(|r| r[j]).sum::<f64>() / rows.max(1) as f64)
        .collect();
    let order = |means: &[f64], labels: &[String]| {
        let mut idx: Vec<usize> = (0..means.len()).collect();
        idx.sort_by(|&a, &b| {
            means[b]
                .total_cmp(&means[a])
                .then_with(|| labels[a].cmp(&labels[b]))
        });
        idx
    };
    (order(&row_mean, row_labels), order(&col_mean, col_labels))
}

fn base_cell(
    draws: &PosteriorDraws,
    pair: (usize, usize),
    fixed: &BTreeMap<usize, usize>,
) -> Result<Vec<usize>> {
    let layout = &draws.layout;
    let (r, c) = pair;
    let v = layout.n_factors();
    if r >= v || c >= v || r == c {
        return Err(Error::arg(format!("invalid factor pair ({r}, {c})")));
    }
    let mut base = vec![0; v];
    for f in (0..v).filter(|&f| f != r && f != c) {
        base[f] = *fixed.get(&f).ok_or_else(|| {
            Error::arg(format!(
                "no level fixed for factor `{}` (use --fix)",
                layout.factor_names()[f]
            ))
        })?;
    }
    layout.check_cell(&base)?;
    Ok(base)
}

/// Posterior predictions over a factor pair with the other factors fixed.
pub fn prediction_grid(
    draws: &PosteriorDraws,
    pair: (usize, usize),
    fixed: &BTreeMap<usize, usize>,
    include_noise: bool,
    seed: u64,
) -> Result<HeatmapGrid> {
    let layout = &draws.layout;
    let base = base_cell(draws, pair, fixed)?;
    let (r, c) = pair;
    let (rows, cols) = (layout.levels(r), layout.levels(c));
    let cells: Vec<Vec<usize>> = (0..rows)
        .flat_map(|i| {
            let base = &base;
            (0..cols).map(move |j| {
                let mut cell = base.clone();
                cell[r] = i;
                cell[c] = j;
                cell
            })
        })
        .collect();
    let preds = predict_cells(draws, &cells, include_noise, seed)?;
    Ok(HeatmapGrid {
        title: format!("Predicted {}{}", draws.response_name, fixed_suffix(draws, &base, pair)),
        row_factor: layout.factor_names()[r].clone(),
        col_factor: layout.factor_names()[c].clone(),
        row_labels: layout.level_names()[r].clone(),
        col_labels: layout.level_names()[c].clone(),
        cells: preds
            .chunks(cols)
            .map(|row| row.iter().map(|p| (p.median, p.sd)).collect())
            .collect(),
    })
}

/// Row-factor effect plus interaction over a factor pair.
pub fn interaction_grid(
    draws: &PosteriorDraws,
    pair: (usize, usize),
    fixed: &BTreeMap<usize, usize>,
) -> Result<HeatmapGrid> {
    let layout = &draws.layout;
    let base = base_cell(draws, pair, fixed)?;
    let g = interaction_effect(draws, pair, fixed)?;
    let (r, c) = pair;
    Ok(HeatmapGrid {
        title: format!(
            "{} effect plus interaction{}",
            layout.factor_names()[r],
            fixed_suffix(draws, &base, pair)
        ),
        row_factor: layout.factor_names()[r].clone(),
        col_factor: layout.factor_names()[c].clone(),
        row_labels: layout.level_names()[r].clone(),
        col_labels: layout.level_names()[c].clone(),
        cells: g
            .with_main
            .iter()
            .map(|row| row.iter().map(|s| (s.q50, s.sd)).collect())
            .collect(),
    })
}

fn fixed_suffix(draws: &PosteriorDraws, base: &[usize], pair: (usize, usize)) -> String {
    let layout = &draws.layout;
    let parts: Vec<String> = (0..base.len())
        .filter(|&f| f != pair.0 && f != pair.1)
        .map(|f| format!("{}={}", layout.factor_names()[f], layout.level_names()[f][base[f]]))
        .collect();
    if parts.is_empty() {
        String::new()
    } else {
        format!(" ({})", parts.join(", "))
    }
}

const CELL: f64 = 18.0;
const CHAR_W: f64 = 6.5;
const LEGEND_W: f64 = 160.0;
const LEGEND_ROW: f64 = 18.0;

/// Heatmap in sorted order with a VSUP tree legend.
///
/// Cell rects carry `class="cell"` and `data-row`/`data-col` labels; the
/// legend rects carry `class="legend"` and their `(level, bin)`.
pub fn render_heatmap_svg(grid: &HeatmapGrid, palette: &VsupPalette) -> String {
    let medians: Vec<Vec<f64>> = grid
        .cells
        .iter()
        .map(|r| r.iter().map(|c| c.0).collect())
        .collect();
    let (row_order, col_order) = heatmap_order(&medians, &grid.row_labels, &grid.col_labels);
    let longest = |ls: &[String]| ls.iter().map(|l| l.chars().count()).max().unwrap_or(0) as f64;
    let ml = 30.0 + CHAR_W * longest(&grid.row_labels);
    let mt = 40.0 + CHAR_W * longest(&grid.col_labels);
    let (rows, cols) = (row_order.len() as f64, col_order.len() as f64);
    let lx = ml + cols * CELL + 40.0;
    let levels = palette.levels;
    let legend_h = 40.0 + levels as f64 * LEGEND_ROW + 30.0;
    let width = lx + LEGEND_W + 110.0;
    let height = (mt + rows * CELL + 30.0).max(mt + legend_h);

    let mut doc = Svg::new(width, height);
    doc.text(ml, 18.0, "start", 13.0, &grid.title);
    for (pos_r, &i) in row_order.iter().enumerate() {
        let y = mt + pos_r as f64 * CELL;
        doc.text(ml - 4.0, y + CELL * 0.7, "end", 10.0, &grid.row_labels[i]);
        for (pos_c, &j) in col_order.iter().enumerate() {
            let (m, sd) = grid.cells[i][j];
            let q = palette.quantize(m, sd);
            let extra = format!(
                r#" data-row="{}" data-col="{}" data-median="{:.6}" data-sd="{:.6}" data-level="{}" data-bin="{}""#,
                escape(&grid.row_labels[i]),
                escape(&grid.col_labels[j]),
                m,
                sd,
                q.level,
                q.bin
            );
            doc.rect(ml + pos_c as f64 * CELL, y, CELL, CELL, &hex(q.color), "cell", &extra);
        }
    }
    for (pos_c, &j) in col_order.iter().enumerate() {
        doc.vtext(ml + pos_c as f64 * CELL + CELL * 0.7, mt - 4.0, 10.0, &grid.col_labels[j]);
    }
    doc.text(ml + cols * CELL / 2.0, mt + rows * CELL + 20.0, "middle", 11.0, &grid.row_factor);
    doc.text(ml + cols * CELL / 2.0, 32.0, "middle", 11.0, &grid.col_factor);

    // legend: most certain level on top, one row per level
    let ly = mt + 20.0;
    doc.text(lx, ly - 8.0, "start", 11.0, "value / uncertainty (sd)");
    for (row, level) in (0..levels).rev().enumerate() {
        let bins = 1usize << level;
        let y = ly + row as f64 * LEGEND_ROW;
        let w = LEGEND_W / bins as f64;
        for bin in 0..bins {
            let extra = format!(r#" data-level="{level}" data-bin="{bin}""#);
            doc.rect(lx + bin as f64 * w, y, w, LEGEND_ROW, &hex(palette.color(level, bin)), "legend", &extra);
        }
        let (s0, s1) = palette.level_band(level);
        let band = if level == 0 {
            format!("sd ≥ {}", tick(s0))
        } else {
            format!("sd {}–{}", tick(s0), tick(s1))
        };
        doc.text(lx + LEGEND_W + 6.0, y + LEGEND_ROW * 0.7, "start", 10.0, &band);
    }
    let by = ly + levels as f64 * LEGEND_ROW + 14.0;
    doc.text(lx, by, "start", 10.0, &tick(palette.value_range.0));
    doc.text(lx + LEGEND_W, by, "end", 10.0, &tick(palette.value_range.1));
    doc.finish()
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn emit_heatmap_svg(grid: &HeatmapGrid, palette: &VsupPalette, path: &Path) -> Result<()> {
    write_text(path, &render_heatmap_svg(grid, palette))
}

/// Long-format CSV of a heatmap grid, in label order.
pub fn heatmap_csv(grid: &HeatmapGrid) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([grid.row_factor.as_str(), grid.col_factor.as_str(), "median", "sd"])
        .map_err(csv_err)?;
    for (i, row) in grid.cells.iter().enumerate() {
        for (j, &(m, sd)) in row.iter().enumerate() {
            w.write_record([
                grid.row_labels[i].clone(),
                grid.col_labels[j].clone(),
                m.to_string(),
                sd.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    finish_csv(w)
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

pub(crate) fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("CSV of UTF-8 fields is UTF-8"))
}

pub fn level_summary_csv(factor: &str, rows: &[LevelSummary]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([factor, "median", "lower", "upper", "sd"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.level.clone(),
            r.median.to_string(),
            r.lower.to_string(),
            r.upper.to_string(),
            r.sd.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish_csv(w)
}

/// Point-and-bar plot of per-level medians with ±2 sd bars.
pub fn render_level_summary_svg(title: &str, factor: &str, rows: &[LevelSummary]) -> String {
    let (w, h) = (60.0 + 40.0 * rows.len().max(1) as f64 + 40.0, 320.0);
    let (top, bottom, left) = (40.0, 250.0, 60.0);
    let lo = rows.iter().map(|r| r.lower).fold(f64::INFINITY, f64::min);
    let hi = rows.iter().map(|r| r.upper).fold(f64::NEG_INFINITY, f64::max);
    let y = Scale::padded(lo, hi, (bottom, top));
    let mut doc = Svg::new(w, h);
    doc.text(left, 20.0, "start", 13.0, title);
    doc.line(left, top, left, bottom, "#000000", "axis");
    doc.line(left, bottom, w - 20.0, bottom, "#000000", "axis");
    for k in 0..=4 {
        let v = y.domain.0 + (y.domain.1 - y.domain.0) * k as f64 / 4.0;
        doc.text(left - 4.0, y.map(v) + 3.0, "end", 9.0, &tick(v));
    }
    for (k, r) in rows.iter().enumerate() {
        let x = left + 30.0 + 40.0 * k as f64;
        doc.line(x, y.map(r.lower), x, y.map(r.upper), "#444444", "bar");
        let extra = format!(r#" data-level="{}" data-median="{:.6}""#, escape(&r.level), r.median);
        doc.circle(x, y.map(r.median), 4.0, "#8c143c", "point", &extra);
        doc.vtext(x + 3.0, bottom + 50.0, 10.0, &r.level);
    }
    doc.text((left + w) / 2.0, h - 8.0, "middle", 11.0, factor);
    doc.finish()
}

/// Per-level summary CSV and, if `svg_path` is given, its plot.
pub fn emit_level_summary(
    draws: &PosteriorDraws,
    factor: usize,
    include_noise: bool,
    csv_path: &Path,
    svg_path: Option<&Path>,
) -> Result<Vec<LevelSummary>> {
    let rows = level_summaries(draws, factor, include_noise)?;
    let name = &draws.layout.factor_names()[factor];
    write_text(csv_path, &level_summary_csv(name, &rows)?)?;
    if let Some(p) = svg_path {
        let title = format!("Median {} by {name}", draws.response_name);
        write_text(p, &render_level_summary_svg(&title, name, &rows))?;
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPoint {
    pub label: String,
    pub truth: f64,
    pub estimate: f64,
    /// Optional 90% interval of the estimate.
    pub interval: Option<(f64, f64)>,
}

pub fn truth_scatter_csv(points: &[ScatterPoint]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["label", "truth", "estimate", "q05", "q95"]).map_err(csv_err)?;
    for p in points {
        let (a, b) = p
            .interval
            .map_or((String::new(), String::new()), |(a, b)| (a.to_string(), b.to_string()));
        w.write_record([p.label.clone(), p.truth.to_string(), p.estimate.to_string(), a, b])
            .map_err(csv_err)?;
    }
    finish_csv(w)
}

/// Truth (x) against estimate (y) with the identity line.
pub fn render_truth_scatter_svg(title: &str, points: &[ScatterPoint]) -> String {
    let (size, m) = (360.0, 50.0);
    let vals = points.iter().flat_map(|p| {
        let (a, b) = p.interval.unwrap_or((p.estimate, p.estimate));
        [p.truth, p.estimate, a, b]
    });
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };
    let x = Scale::padded(lo, hi, (m, size - 20.0));
    let y = Scale::padded(lo, hi, (size - m, 30.0));
    let mut doc = Svg::new(size, size);
    doc.text(m, 18.0, "start", 13.0, title);
    doc.line(m, size - m, size - 20.0, size - m, "#000000", "axis");
    doc.line(m, 30.0, m, size - m, "#000000", "axis");
    doc.line(x.map(x.domain.0), y.map(x.domain.0), x.map(x.domain.1), y.map(x.domain.1), "#999999", "identity");
    for k in 0..=4 {
        let v = x.domain.0 + (x.domain.1 - x.domain.0) * k as f64 / 4.0;
        doc.text(x.map(v), size - m + 14.0, "middle", 9.0, &tick(v));
        doc.text(m - 4.0, y.map(v) + 3.0, "end", 9.0, &tick(v));
    }
    for p in points {
        if let Some((a, b)) = p.interval {
            doc.line(x.map(p.truth), y.map(a), x.map(p.truth), y.map(b), "#bbbbbb", "interval");
        }
        let extra = format!(r#" data-label="{}""#, escape(&p.label));
        doc.circle(x.map(p.truth), y.map(p.estimate), 3.0, "#8c143c", "point", &extra);
    }
    doc.text((m + size) / 2.0, size - 12.0, "middle", 11.0, "true");
    doc.vtext(14.0, size / 2.0 + 20.0, 11.0, "estimated");
    doc.finish()
}
