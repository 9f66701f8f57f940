//! Plot-artifact emitters: 2-D scatter plots of projected datasets and loss
//! curves, written as self-contained SVG plus companion CSV files. All SVG
//! is generated directly — no plotting dependency — so the artifacts are
//! byte-stable across runs.

use std::path::Path;

use crate::ctgan::TrainingLog;
use crate::dataio::format_significant;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 54.0;

/// Fill colors keyed by label index (modulo); noise rows use grey.
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];
const NOISE_COLOR: &str = "#999999";

fn escape_xml(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Data range with padding; degenerate ranges widen to unit size.
fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    let span = hi - lo;
    if span <= 0.0 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo - 0.05 * span, hi + 0.05 * span)
    }
}

struct Frame {
    x_lo: f64,
    x_hi: f64,
    y_lo: f64,
    y_hi: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        MARGIN + (v - self.x_lo) / (self.x_hi - self.x_lo) * (WIDTH - 2.0 * MARGIN)
    }

    fn y(&self, v: f64) -> f64 {
        // SVG y grows downward.
        HEIGHT - MARGIN - (v - self.y_lo) / (self.y_hi - self.y_lo) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn svg_header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" \
         text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        escape_xml(title)
    )
}

fn svg_axes(frame: &Frame) -> String {
    let x0 = MARGIN;
    let x1 = WIDTH - MARGIN;
    let y0 = HEIGHT - MARGIN;
    let y1 = MARGIN;
    let mut out = String::new();
    out.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n"
    ));
    let label = |v: f64| format_significant(v, 4);
    out.push_str(&format!(
        "<text x=\"{x0}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n\
         <text x=\"{x1}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" \
         text-anchor=\"end\">{}</text>\n",
        y0 + 16.0,
        label(frame.x_lo),
        y0 + 16.0,
        label(frame.x_hi),
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{y0}\" font-family=\"sans-serif\" font-size=\"11\" \
         text-anchor=\"end\">{}</text>\n\
         <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" \
         text-anchor=\"end\">{}</text>\n",
        x0 - 6.0,
        label(frame.y_lo),
        x0 - 6.0,
        y1 + 4.0,
        label(frame.y_hi),
    ));
    out
}

/// Write a 2-D projection as CSV with columns `x,y,label`.
pub fn write_projection_csv(path: &Path, points: &Matrix, labels: &[i64]) -> Result<()> {
    check_projection(points, labels)?;
    let mut out = String::from("x,y,label\n");
    for (r, &label) in labels.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{label}\n",
            format_significant(points.get(r, 0), 12),
            format_significant(points.get(r, 1), 12)
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn check_projection(points: &Matrix, labels: &[i64]) -> Result<()> {
    if points.n_cols() != 2 {
        return Err(Error::Contract(format!(
            "scatter plots need 2 columns, got {}",
            points.n_cols()
        )));
    }
    if points.n_rows() != labels.len() {
        return Err(Error::Contract(format!(
            "{} points but {} labels",
            points.n_rows(),
            labels.len()
        )));
    }
    Ok(())
}

/// Write a colored scatter plot of a 2-D projection. Point color is keyed
/// by label index; noise labels (-1) render grey.
pub fn write_scatter_svg(
    path: &Path,
    title: &str,
    points: &Matrix,
    labels: &[i64],
) -> Result<()> {
    check_projection(points, labels)?;
    let frame = Frame {
        x_lo: 0.0,
        x_hi: 1.0,
        y_lo: 0.0,
        y_hi: 1.0,
    };
    let frame = if points.n_rows() == 0 {
        frame
    } else {
        let (x_lo, x_hi) = padded_range(points.column(0).into_iter());
        let (y_lo, y_hi) = padded_range(points.column(1).into_iter());
        Frame { x_lo, x_hi, y_lo, y_hi }
    };
    let mut svg = svg_header(title);
    svg.push_str(&svg_axes(&frame));
    for (r, &label) in labels.iter().enumerate() {
        let color = if label < 0 {
            NOISE_COLOR
        } else {
            PALETTE[label as usize % PALETTE.len()]
        };
        svg.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\" fill-opacity=\"0.75\"/>\n",
            frame.x(points.get(r, 0)),
            frame.y(points.get(r, 1))
        ));
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}

/// Write generator and discriminator loss curves as an SVG line chart over
/// training steps.
pub fn write_loss_svg(path: &Path, title: &str, log: &TrainingLog) -> Result<()> {
    let gen: Vec<f64> = log.steps.iter().map(|s| s.gen_loss).collect();
    let disc: Vec<f64> = log.steps.iter().map(|s| s.disc_loss).collect();
    write_line_chart_svg(
        path,
        title,
        &[("generator", &gen), ("discriminator", &disc)],
    )
}

/// Write an SVG line chart of one or more series over their index.
pub fn write_line_chart_svg(
    path: &Path,
    title: &str,
    series: &[(&str, &[f64])],
) -> Result<()> {
    let longest = series.iter().map(|(_, s)| s.len()).max().unwrap_or(0);
    let frame = if longest == 0 {
        Frame {
            x_lo: 0.0,
            x_hi: 1.0,
            y_lo: 0.0,
            y_hi: 1.0,
        }
    } else {
        let (y_lo, y_hi) =
            padded_range(series.iter().flat_map(|(_, s)| s.iter().copied()));
        Frame {
            x_lo: 0.0,
            x_hi: (longest.max(2) - 1) as f64,
            y_lo,
            y_hi,
        }
    };
    let mut svg = svg_header(title);
    svg.push_str(&svg_axes(&frame));
    for (idx, (name, values)) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        if values.len() > 1 {
            let mut path_points = String::new();
            for (i, &v) in values.iter().enumerate() {
                path_points.push_str(&format!(
                    "{:.2},{:.2} ",
                    frame.x(i as f64),
                    frame.y(v)
                ));
            }
            svg.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" \
                 stroke-width=\"1.5\"/>\n",
                path_points.trim_end()
            ));
        }
        // Legend entry.
        let legend_y = 40.0 + 18.0 * idx as f64;
        svg.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{color}\"/>\n\
             <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            WIDTH - MARGIN - 130.0,
            legend_y,
            WIDTH - MARGIN - 112.0,
            legend_y + 10.0,
            escape_xml(name)
        ));
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctgan::TrainingStep;
    use tempfile::tempdir;

    fn points() -> (Matrix, Vec<i64>) {
        let m = Matrix::from_rows(&[
            vec![0.0, 0.0],
            vec![1.0, 2.0],
            vec![-1.0, 0.5],
            vec![2.0, -1.0],
        ])
        .unwrap();
        (m, vec![0, 1, 0, -1])
    }

    #[test]
    fn projection_csv_has_row_per_point() {
        let (m, labels) = points();
        let dir = tempdir().unwrap();
        let path = dir.path().join("proj.csv");
        write_projection_csv(&path, &m, &labels).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x,y,label");
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[1], "0,0,0");
        assert_eq!(lines[4], "2,-1,-1");
    }

    #[test]
    fn scatter_svg_draws_each_point() {
        let (m, labels) = points();
        let dir = tempdir().unwrap();
        let path = dir.path().join("scatter.svg");
        write_scatter_svg(&path, "real <kmeans>", &m, &labels).unwrap();
        let svg = std::fs::read_to_string(&path).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<circle").count(), 4);
        // Title is XML-escaped.
        assert!(svg.contains("real &lt;kmeans&gt;"));
        // Noise point uses the grey fill.
        assert!(svg.contains(NOISE_COLOR));
    }

    #[test]
    fn scatter_handles_degenerate_and_empty_inputs() {
        let dir = tempdir().unwrap();
        let constant = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let path = dir.path().join("const.svg");
        write_scatter_svg(&path, "constant", &constant, &[0, 0]).unwrap();
        let svg = std::fs::read_to_string(&path).unwrap();
        assert_eq!(svg.matches("<circle").count(), 2);
        assert!(!svg.contains("NaN"));

        let empty = Matrix::zeros(0, 2);
        let path2 = dir.path().join("empty.svg");
        write_scatter_svg(&path2, "empty", &empty, &[]).unwrap();
        let svg2 = std::fs::read_to_string(&path2).unwrap();
        assert_eq!(svg2.matches("<circle").count(), 0);
        assert!(svg2.contains("</svg>"));

        let wrong = Matrix::zeros(2, 3);
        assert!(write_scatter_svg(&dir.path().join("w.svg"), "w", &wrong, &[0, 0]).is_err());
        assert!(write_projection_csv(&dir.path().join("w.csv"), &wrong, &[0, 0]).is_err());
    }

    #[test]
    fn loss_chart_draws_both_series() {
        let log = TrainingLog {
            steps: (0..10)
                .map(|i| TrainingStep {
                    step: i,
                    epoch: 0,
                    gen_loss: 1.0 / (i + 1) as f64,
                    disc_loss: 0.5 + 0.01 * i as f64,
                })
                .collect(),
            noise_rows_dropped: 0,
        };
        let dir = tempdir().unwrap();
        let path = dir.path().join("loss.svg");
        write_loss_svg(&path, "loss curves", &log).unwrap();
        let svg = std::fs::read_to_string(&path).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("generator"));
        assert!(svg.contains("discriminator"));
    }

    #[test]
    fn empty_line_chart_is_still_valid() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("none.svg");
        write_line_chart_svg(&path, "empty", &[("a", &[])]).unwrap();
        let svg = std::fs::read_to_string(&path).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 0);
        assert!(svg.contains("</svg>"));
    }
}
