//! Static SVG charts for the report subcommand.

use std::collections::BTreeMap;

use elicit_core::corpus::LabelCounts;
use elicit_core::metrics::PlotGroup;
use elicit_core::Label;
use plotters::prelude::*;
use plotters::style::text_anchor::{HPos, Pos, VPos};

type Series = [PlotGroup];

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

fn err(e: impl std::fmt::Display) -> String {
    format!("chart rendering failed: {e}")
}

/// Category names centered under integer x positions.
fn axis_labels<'a, DB, Y>(
    root: &DrawingArea<DB, plotters::coord::Shift>,
    chart: &ChartContext<'_, DB, Cartesian2d<plotters::coord::types::RangedCoordf64, Y>>,
    names: impl Iterator<Item = &'a str>,
) -> Result<(), String>
where
    DB: DrawingBackend,
    Y: Ranged,
    Y::ValueType: Default,
{
    let style = ("sans-serif", 15).into_font().color(&BLACK).pos(Pos::new(HPos::Center, VPos::Top));
    for (i, name) in names.enumerate() {
        let (x, y) = chart.backend_coord(&(i as f64, Y::ValueType::default()));
        root.draw(&Text::new(name.to_string(), (x, y + 8), style.clone())).map_err(err)?;
    }
    Ok(())
}

/// One bar per app, counts on the y axis.
pub fn app_distribution(apps: &BTreeMap<String, usize>) -> Result<String, String> {
    let names: Vec<&str> = apps.keys().map(String::as_str).collect();
    let top = apps.values().copied().max().unwrap_or(0).max(1);
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (800, 480)).into_drawing_area();
        root.fill(&WHITE).map_err(err)?;
        let n = names.len().max(1);
        let mut chart = ChartBuilder::on(&root)
            .caption("Reviews per app", ("sans-serif", 22))
            .margin(16)
            .x_label_area_size(48)
            .y_label_area_size(56)
            .build_cartesian_2d(-0.5f64..n as f64 - 0.5, 0usize..(top + top / 10 + 1))
            .map_err(err)?;
        chart.configure_mesh().disable_x_mesh().x_labels(0).y_desc("Reviews").draw().map_err(err)?;
        chart
            .draw_series(
                apps.values()
                    .enumerate()
                    .map(|(i, &count)| Rectangle::new([(i as f64 - 0.35, 0), (i as f64 + 0.35, count)], PALETTE[0].filled())),
            )
            .map_err(err)?;
        axis_labels(&root, &chart, names.iter().copied())?;
        root.present().map_err(err)?;
    }
    Ok(svg)
}

/// Pie of useful against not useful among labeled records.
pub fn label_distribution(counts: &LabelCounts) -> Result<String, String> {
    let sizes: Vec<f64> = Label::ALL.iter().map(|&l| counts.get(l) as f64).collect();
    let labels: Vec<String> = Label::ALL.iter().map(|&l| format!("{} ({})", l.as_str(), counts.get(l))).collect();
    let colors = [PALETTE[2], PALETTE[3]];
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (640, 480)).into_drawing_area();
        root.fill(&WHITE).map_err(err)?;
        let root = root.titled("Label distribution", ("sans-serif", 22)).map_err(err)?;
        if sizes.iter().sum::<f64>() > 0.0 {
            let (w, h) = root.dim_in_pixel();
            let center = (w as i32 / 2, h as i32 / 2);
            let radius = f64::from(w.min(h)) * 0.32;
            let mut pie = Pie::new(&center, &radius, &sizes, &colors, &labels);
            pie.start_angle(-90.0);
            pie.label_style(("sans-serif", 16).into_font().color(&BLACK));
            pie.percentages(("sans-serif", 15).into_font().color(&WHITE));
            root.draw(&pie).map_err(err)?;
        } else {
            root.draw(&Text::new("no labeled records", (220, 200), ("sans-serif", 18))).map_err(err)?;
        }
        root.present().map_err(err)?;
    }
    Ok(svg)
}

/// Grouped bars: one group per metric, one bar per model, values in percent.
/// Undefined metrics get no bar.
pub fn metric_comparison(series: &Series, title: &str) -> Result<String, String> {
    let models: Vec<String> = series.first().map(|(_, b)| b.iter().map(|(m, _)| m.clone()).collect()).unwrap_or_default();
    let groups = series.len().max(1);
    let k = models.len().max(1) as f64;
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (900, 520)).into_drawing_area();
        root.fill(&WHITE).map_err(err)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 22))
            .margin(16)
            .x_label_area_size(40)
            .y_label_area_size(56)
            .build_cartesian_2d(-0.5f64..groups as f64 - 0.5, 0f64..118f64)
            .map_err(err)?;
        chart.configure_mesh().disable_x_mesh().x_labels(0).y_desc("Percent").draw().map_err(err)?;
        axis_labels(&root, &chart, series.iter().map(|(metric, _)| *metric))?;
        let width = 0.8 / k;
        for (j, model) in models.iter().enumerate() {
            let color = PALETTE[j % PALETTE.len()];
            let bars = series.iter().enumerate().filter_map(move |(g, (_, bars))| {
                let v = bars.get(j).and_then(|(_, v)| *v)? * 100.0;
                let x0 = g as f64 - 0.4 + j as f64 * width;
                Some(Rectangle::new([(x0, 0.0), (x0 + width * 0.9, v)], color.filled()))
            });
            chart
                .draw_series(bars)
                .map_err(err)?
                .label(model.as_str())
                .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 12, y + 5)], color.filled()));
        }
        chart
            .configure_series_labels()
            .position(SeriesLabelPosition::UpperRight)
            .background_style(WHITE.mix(0.85))
            .border_style(BLACK)
            .draw()
            .map_err(err)?;
        root.present().map_err(err)?;
    }
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_render_svg() {
        let apps = BTreeMap::from([("A".to_string(), 3), ("B".to_string(), 5)]);
        let svg = app_distribution(&apps).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("Reviews per app"));
        let counts =
            LabelCounts { counts: BTreeMap::from([(Label::Useful, 3), (Label::NotUseful, 1)]), balance_ratio: Some(1.0 / 3.0) };
        assert!(label_distribution(&counts).unwrap().contains("useful (3)"));
        let series = vec![("accuracy", vec![("m1".into(), Some(0.9)), ("m2".into(), None)])];
        let svg = metric_comparison(&series, "Metrics").unwrap();
        assert!(svg.contains("m1") && svg.contains("accuracy"));
    }
}
