//! SVG figures drawn from a trace CSV. Only the file on disk is consulted.

use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::error::{ExpError, Result};
use crate::trace::TraceFile;

const SIZE: (u32, u32) = (900, 540);
const FLOOR: f64 = 1e-300;

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

fn series(label: String, k: &[f64], ys: &[f64]) -> Series {
    let points = k
        .iter()
        .zip(ys)
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|(&x, &y)| (x, y.abs().max(FLOOR)))
        .collect();
    Series { label, points }
}

fn draw_log(path: &Path, title: &str, y_desc: &str, lines: &[Series]) -> Result<()> {
    let plot_err = |e: String| ExpError::Plot(format!("{}: {e}", path.display()));
    let all = lines.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return Err(plot_err("no finite samples".into()));
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 * 1.0001 {
        y0 /= 10.0;
        y1 *= 10.0;
    }

    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(e.to_string()))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(72)
        .build_cartesian_2d(x0..x1, (y0..y1).log_scale())
        .map_err(|e| plot_err(e.to_string()))?;
    chart
        .configure_mesh()
        .x_desc("k")
        .y_desc(y_desc)
        .y_label_formatter(&|v| format!("{v:.0e}"))
        .draw()
        .map_err(|e| plot_err(e.to_string()))?;
    for (i, s) in lines.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(s.points.iter().copied(), color.stroke_width(1)))
            .map_err(|e| plot_err(e.to_string()))?
            .label(s.label.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
    }
    if lines.len() > 1 {
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(|e| plot_err(e.to_string()))?;
    }
    root.present().map_err(|e| plot_err(e.to_string()))?;
    Ok(())
}

fn indexed(prefix: &str, cols: Vec<Vec<f64>>, k: &[f64]) -> Vec<Series> {
    cols.iter()
        .enumerate()
        .map(|(i, c)| series(format!("{prefix}{}", i + 1), k, c))
        .collect()
}

/// Reads `csv_path` and writes `<stem>-<figure>.svg` next to it. Returns the files written.
pub fn plot_trace(csv_path: &Path) -> Result<Vec<PathBuf>> {
    let trace = TraceFile::read(csv_path)?;
    let k = trace.column("k").ok_or_else(|| ExpError::Parse {
        path: csv_path.display().to_string(),
        message: "no k column".into(),
    })?;
    if k.is_empty() {
        return Ok(Vec::new());
    }
    let stem = csv_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("trace")
        .to_string();
    let dir = csv_path.parent().unwrap_or(Path::new("."));
    let name = &trace.header.scenario;
    let mut written = Vec::new();
    let mut emit = |fig: &str, title: String, y: &str, lines: Vec<Series>| -> Result<()> {
        let path = dir.join(format!("{stem}-{fig}.svg"));
        draw_log(&path, &title, y, &lines)?;
        written.push(path);
        Ok(())
    };

    emit(
        "sigma",
        format!("{name}: singular values of P"),
        "sigma(P)",
        indexed("sigma_", trace.columns_with_prefix("sigmaP_"), &k),
    )?;
    if let Some(kappa) = trace.column("kappaP") {
        emit(
            "kappa",
            format!("{name}: condition number of P"),
            "kappa(P)",
            vec![series("kappa".into(), &k, &kappa)],
        )?;
    }
    let z = trace.columns_with_prefix("z_");
    emit("z", format!("{name}: |z|"), "|z|", indexed("z_", z, &k))?;
    if let Some(truth) = &trace.header.theta_true {
        let theta = trace.columns_with_prefix("theta_");
        let err: Vec<f64> = (0..k.len())
            .map(|r| {
                theta
                    .iter()
                    .zip(truth)
                    .map(|(c, t)| (c[r] - t).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        emit(
            "theta-err",
            format!("{name}: parameter error"),
            "|theta - theta*|",
            vec![series("err".into(), &k, &err)],
        )?;
    }
    let psi = trace.columns_with_prefix("psi_");
    if !psi.is_empty() {
        emit(
            "psi",
            format!("{name}: column norms of psi"),
            "|psi_i|",
            indexed("psi_", psi, &k),
        )?;
    }
    Ok(written)
}
