use std::path::{Path, PathBuf};

use plotters::prelude::*;

use super::metrics::{MetricTable, NMSE_CSV_HEADER};
use crate::error::{Error, Result};
use crate::link::{read_ber_csv, BER_CSV_HEADER};

/// One named line of (x, y) points.
struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

fn plot_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::format(path, format!("plotting failed: {e}"))
}

fn bounds(series: &[Series], log_y: bool) -> (std::ops::Range<f64>, std::ops::Range<f64>) {
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return (0.0..1.0, if log_y { 1e-6..1.0 } else { 0.0..1.0 });
    }
    let xr = if x1 > x0 { x0..x1 } else { x0 - 1.0..x1 + 1.0 };
    let yr = if log_y {
        y0 / 2.0..y1 * 2.0
    } else {
        let pad = ((y1 - y0) * 0.05).max(0.5);
        y0 - pad..y1 + pad
    };
    (xr, yr)
}

fn draw_panel<DB: DrawingBackend>(
    area: &DrawingArea<DB, plotters::coord::Shift>,
    title: &str,
    y_label: &str,
    series: &[Series],
    log_y: bool,
) -> std::result::Result<(), String> {
    let (xr, yr) = bounds(series, log_y);
    let mut builder = ChartBuilder::on(area);
    builder
        .caption(title, ("sans-serif", 18))
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(55);
    macro_rules! body {
        ($chart:expr) => {{
            let mut chart = $chart.map_err(|e| e.to_string())?;
            chart
                .configure_mesh()
                .x_desc("SNR (dB)")
                .y_desc(y_label)
                .draw()
                .map_err(|e| e.to_string())?;
            for (i, s) in series.iter().enumerate() {
                let color = Palette99::pick(i).to_rgba();
                chart
                    .draw_series(LineSeries::new(s.points.iter().copied(), color.stroke_width(2)))
                    .map_err(|e| e.to_string())?
                    .label(s.label.clone())
                    .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color.stroke_width(2)));
                chart
                    .draw_series(s.points.iter().map(|&p| Circle::new(p, 3, color.filled())))
                    .map_err(|e| e.to_string())?;
            }
            chart
                .configure_series_labels()
                .background_style(WHITE.mix(0.8))
                .border_style(BLACK)
                .draw()
                .map_err(|e| e.to_string())?;
        }};
    }
    if log_y {
        body!(builder.build_cartesian_2d(xr, yr.log_scale()));
    } else {
        body!(builder.build_cartesian_2d(xr, yr));
    }
    Ok(())
}

fn nmse_panels(table: &MetricTable) -> Vec<(String, Vec<Series>)> {
    let mut panels: Vec<(String, Vec<Series>)> = Vec::new();
    for r in table.rows() {
        let idx = match panels.iter().position(|(p, _)| *p == r.profile) {
            Some(i) => i,
            None => {
                panels.push((r.profile.clone(), Vec::new()));
                panels.len() - 1
            }
        };
        let series = &mut panels[idx].1;
        let label = r.scheme.to_string();
        match series.iter_mut().find(|s| s.label == label) {
            Some(s) => s.points.push((r.snr_db, r.nmse_db)),
            None => series.push(Series {
                label,
                points: vec![(r.snr_db, r.nmse_db)],
            }),
        }
    }
    for (_, series) in &mut panels {
        for s in series.iter_mut() {
            s.points.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
    }
    panels
}

/// Renders an NMSE or BER CSV (told apart by header) to `<out_dir>/<stem>.svg`.
///
/// NMSE tables get one panel per channel profile; BER tables one log-scale
/// panel, with zero-error points left out.
pub fn plot_csv(csv: &Path, out_dir: &Path) -> Result<PathBuf> {
    let text = std::fs::read_to_string(csv).map_err(|e| Error::io(csv, e))?;
    let header = text.lines().next().unwrap_or_default();
    let stem = csv
        .file_stem()
        .ok_or_else(|| Error::invalid(format!("{} has no file name", csv.display())))?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let out = out_dir.join(stem).with_extension("svg");

    if header == NMSE_CSV_HEADER {
        let panels = nmse_panels(&MetricTable::read_csv(csv)?);
        let n = panels.len().max(1);
        let root = SVGBackend::new(&out, (560 * n as u32, 420)).into_drawing_area();
        root.fill(&WHITE).map_err(|e| plot_err(&out, e))?;
        let areas = root.split_evenly((1, n));
        for ((profile, series), area) in panels.iter().zip(&areas) {
            draw_panel(area, &format!("NMSE, profile {profile}"), "NMSE (dB)", series, false)
                .map_err(|e| plot_err(&out, e))?;
        }
        root.present().map_err(|e| plot_err(&out, e))?;
    } else if header == BER_CSV_HEADER {
        let mut series: Vec<Series> = Vec::new();
        for r in read_ber_csv(csv)? {
            let label = r.estimator.to_string();
            let idx = match series.iter().position(|s| s.label == label) {
                Some(i) => i,
                None => {
                    series.push(Series {
                        label,
                        points: Vec::new(),
                    });
                    series.len() - 1
                }
            };
            if r.ber() > 0.0 {
                series[idx].points.push((r.snr_db, r.ber()));
            }
        }
        for s in &mut series {
            s.points.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
        let root = SVGBackend::new(&out, (640, 480)).into_drawing_area();
        root.fill(&WHITE).map_err(|e| plot_err(&out, e))?;
        draw_panel(&root, "Coded BER", "BER", &series, true).map_err(|e| plot_err(&out, e))?;
        root.present().map_err(|e| plot_err(&out, e))?;
    } else {
        return Err(Error::format(csv, format!("unrecognized CSV header `{header}`")));
    }
    Ok(out)
}
