//! SVG plots of sweep results.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use super::{BenchError, MetricRow};

const COLORS: [RGBColor; 9] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
    RGBColor(227, 119, 194),
    RGBColor(127, 127, 127),
    RGBColor(23, 190, 207),
];

fn plot_err<E: std::error::Error + Send + Sync + 'static>(e: DrawingAreaErrorKind<E>) -> BenchError {
    BenchError::Io(std::io::Error::other(e.to_string()))
}

/// One SVG per sweep found in `rows`, written to `out_dir`. Returns the
/// written paths; no rows means no plots.
pub fn emit_plots(rows: &[MetricRow], out_dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    let mut by_sweep: BTreeMap<&str, Vec<&MetricRow>> = BTreeMap::new();
    for r in rows {
        by_sweep.entry(r.sweep_name.as_str()).or_default().push(r);
    }
    let mut written = Vec::new();
    for (sweep, rows) in by_sweep {
        let path = out_dir.join(format!("{sweep}.svg"));
        draw(sweep, &rows, &path)?;
        written.push(path);
    }
    Ok(written)
}

fn draw(sweep: &str, rows: &[&MetricRow], path: &Path) -> Result<(), BenchError> {
    let relative = sweep == "pollers";
    let banded = sweep == "cores";
    let y_of = |r: &MetricRow| if relative { r.worker_rel_perf.unwrap_or(0.0) } else { r.throughput_ops_per_cycle };
    // Band edges scale throughput by the slowest and fastest core's share of the midrange.
    let band = |r: &MetricRow| {
        let mid = (r.ops_min + r.ops_max) as f64 / 2.0;
        if mid == 0.0 {
            (y_of(r), y_of(r))
        } else {
            (y_of(r) * r.ops_min as f64 / mid, y_of(r) * r.ops_max as f64 / mid)
        }
    };
    let log_x = !relative;
    let xs = |v: u64| if log_x { (v.max(1) as f64).log2() } else { v as f64 };
    let x_max = rows.iter().map(|r| xs(r.sweep_value)).fold(0.0f64, f64::max).max(1.0);
    let x_min = rows.iter().map(|r| xs(r.sweep_value)).fold(f64::INFINITY, f64::min).min(x_max - 1.0);
    let y_max = rows.iter().map(|r| if banded { band(r).1 } else { y_of(r) }).fold(0.0f64, f64::max).max(1e-3) * 1.1;

    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let y_label = if relative { "worker relative performance" } else { "throughput [ops/cycle]" };
    let x_label = if log_x { format!("log2({sweep})") } else { sweep.to_string() };
    let mut chart = ChartBuilder::on(&root)
        .caption(sweep, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x_min..x_max, 0.0..y_max)
        .map_err(plot_err)?;
    chart.configure_mesh().x_desc(x_label).y_desc(y_label).draw().map_err(plot_err)?;

    let mut series: BTreeMap<&str, Vec<&MetricRow>> = BTreeMap::new();
    for r in rows {
        series.entry(r.flavor.as_str()).or_default().push(r);
    }
    for (i, (flavor, mut pts)) in series.into_iter().enumerate() {
        pts.sort_by_key(|r| r.sweep_value);
        let color = COLORS[i % COLORS.len()];
        if banded {
            let upper: Vec<(f64, f64)> = pts.iter().map(|r| (xs(r.sweep_value), band(r).1)).collect();
            let lower: Vec<(f64, f64)> = pts.iter().rev().map(|r| (xs(r.sweep_value), band(r).0)).collect();
            let poly: Vec<(f64, f64)> = upper.into_iter().chain(lower).collect();
            chart.draw_series(std::iter::once(Polygon::new(poly, color.mix(0.2)))).map_err(plot_err)?;
        }
        let line: Vec<(f64, f64)> = pts.iter().map(|r| (xs(r.sweep_value), y_of(r))).collect();
        chart
            .draw_series(LineSeries::new(line.clone(), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(flavor)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color.stroke_width(2)));
        chart.draw_series(line.into_iter().map(|p| Circle::new(p, 3, color.filled()))).map_err(plot_err)?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}
