//! SVG ROC figures: one panel per task, up to two curves per panel.

use std::path::Path;

use plotters::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::RocTable;

const PANEL_PX: u32 = 420;
const COLORS: [RGBColor; 2] = [RGBColor(31, 119, 180), RGBColor(214, 39, 40)];

pub struct RocPanel {
    pub title: String,
    /// (legend label, table); at most two.
    pub curves: Vec<(String, RocTable)>,
}

/// Draws one panel alone, or two to four panels on a 2×2 grid.
pub fn plot_roc(panels: &[RocPanel], out: &Path) -> Result<()> {
    if panels.is_empty() || panels.len() > 4 {
        return Err(Error::Invalid(format!("expected 1 to 4 ROC panels, got {}", panels.len())));
    }
    for p in panels {
        if p.curves.is_empty() || p.curves.len() > COLORS.len() {
            return Err(Error::Invalid(format!("panel `{}` needs one or two curves", p.title)));
        }
        if let Some((label, _)) = p.curves.iter().find(|(_, t)| t.fpr.is_empty() || t.fpr.len() != t.tpr.len()) {
            return Err(Error::Invalid(format!("ROC table `{label}` is empty or ragged")));
        }
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let (cols, rows) = if panels.len() == 1 { (1, 1) } else { (2, 2) };
    let draw_err = |e: String| Error::Invalid(format!("drawing {}: {e}", out.display()));
    let root = SVGBackend::new(out, (PANEL_PX * cols, PANEL_PX * rows)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| draw_err(e.to_string()))?;
    let areas = root.split_evenly((rows as usize, cols as usize));
    for (area, panel) in areas.iter().zip(panels) {
        draw_panel(area, panel).map_err(draw_err)?;
    }
    root.present().map_err(|e| draw_err(e.to_string()))
}

fn draw_panel<DB: DrawingBackend>(area: &DrawingArea<DB, plotters::coord::Shift>, panel: &RocPanel) -> std::result::Result<(), String> {
    let e = |e: DrawingAreaErrorKind<DB::ErrorType>| e.to_string();
    let mut chart = ChartBuilder::on(area)
        .caption(&panel.title, ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(48)
        .build_cartesian_2d(0f64..1f64, 0f64..1f64)
        .map_err(e)?;
    chart
        .configure_mesh()
        .x_desc("false positive rates")
        .y_desc("true positive rates")
        .draw()
        .map_err(e)?;
    chart
        .draw_series(LineSeries::new([(0.0, 0.0), (1.0, 1.0)], BLACK.mix(0.3)))
        .map_err(e)?;
    for ((label, table), color) in panel.curves.iter().zip(COLORS) {
        let pts: Vec<(f64, f64)> = table.fpr.iter().copied().zip(table.tpr.iter().copied()).collect();
        chart
            .draw_series(LineSeries::new(pts, color.stroke_width(2)))
            .map_err(e)?
            .label(label.as_str())
            .legend(move |(x, y)| PathElement::new([(x, y), (x + 18, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .position(SeriesLabelPosition::LowerRight)
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> RocTable {
        RocTable {
            fpr: vec![0.0, 0.2, 1.0],
            tpr: vec![0.0, 0.8, 1.0],
        }
    }

    #[test]
    fn one_and_four_panels() {
        let dir = tempfile::tempdir().unwrap();
        let one = dir.path().join("one.svg");
        plot_roc(
            &[RocPanel {
                title: "grade".into(),
                curves: vec![("model".into(), table())],
            }],
            &one,
        )
        .unwrap();
        let svg = std::fs::read_to_string(&one).unwrap();
        assert!(svg.contains("false positive rates") && svg.contains("true positive rates"));
        let four: Vec<RocPanel> = ["a", "b", "c", "d"]
            .iter()
            .map(|t| RocPanel {
                title: t.to_string(),
                curves: vec![("x".into(), table()), ("y".into(), table())],
            })
            .collect();
        plot_roc(&four, &dir.path().join("four.svg")).unwrap();
        let empty = RocPanel {
            title: "e".into(),
            curves: vec![("x".into(), RocTable { fpr: vec![], tpr: vec![] })],
        };
        assert!(plot_roc(&[empty], &dir.path().join("e.svg")).is_err());
    }
}
