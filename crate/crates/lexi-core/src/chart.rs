//! Standalone SVG line charts for OPM series, deterministic for identical
//! input.

use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChartError {
    #[error("no series to draw")]
    Empty,
    #[error("series lengths differ: {0} vs {1}")]
    MismatchedLengths(usize, usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One labelled line: (year, OPM) points.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedSeries {
    pub name: String,
    pub points: Vec<(i32, f64)>,
}

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 520.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 220.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 64.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

/// Render an SVG line chart: x = slice years, y = OPM, one polyline per
/// series, legend on the right. Identical input gives byte-identical SVG.
pub fn render_series_svg(series: &[NamedSeries]) -> Result<String, ChartError> {
    if series.is_empty() {
        return Err(ChartError::Empty);
    }
    let len = series[0].points.len();
    for s in series {
        if s.points.len() != len {
            return Err(ChartError::MismatchedLengths(len, s.points.len()));
        }
    }
    if len == 0 {
        return Err(ChartError::Empty);
    }

    let x_min = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .min()
        .unwrap();
    let x_max = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .max()
        .unwrap();
    let y_max = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1))
        .fold(0.0f64, f64::max);
    let y_top = if y_max > 0.0 { y_max * 1.08 } else { 1.0 };

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x_span = (x_max - x_min).max(1) as f64;
    let to_x = |year: i32| MARGIN_LEFT + (year - x_min) as f64 / x_span * plot_w;
    let to_y = |opm: f64| MARGIN_TOP + (1.0 - opm / y_top) * plot_h;

    let mut svg = String::with_capacity(16 * 1024);
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str(
        "<style>text{font-family:sans-serif;font-size:12px}.axis{stroke:#333;stroke-width:1}\
         .grid{stroke:#ddd;stroke-width:0.5}.label{font-size:13px;font-weight:bold}</style>\n",
    );
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));

    // y grid + ticks
    let y_step = nice_step(y_top / 5.0);
    let mut tick = 0.0;
    loop {
        let y = to_y(tick);
        svg.push_str(&format!(
            "<line class=\"grid\" x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\"/>\n",
            MARGIN_LEFT,
            MARGIN_LEFT + plot_w
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>\n",
            MARGIN_LEFT - 8.0,
            y + 4.0,
            trim_float(tick)
        ));
        if tick >= y_top {
            break;
        }
        tick += y_step;
    }

    // x ticks on years
    let x_step = year_step(x_max - x_min);
    let mut year = x_min;
    while year <= x_max {
        let x = to_x(year);
        svg.push_str(&format!(
            "<line class=\"axis\" x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\"/>\n",
            MARGIN_TOP + plot_h,
            MARGIN_TOP + plot_h + 6.0
        ));
        svg.push_str(&format!(
            "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{year}</text>\n",
            MARGIN_TOP + plot_h + 22.0
        ));
        year += x_step;
    }

    // axes
    svg.push_str(&format!(
        "<line class=\"axis\" x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\"/>\n",
        MARGIN_LEFT,
        MARGIN_TOP,
        MARGIN_LEFT,
        MARGIN_TOP + plot_h
    ));
    svg.push_str(&format!(
        "<line class=\"axis\" x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\"/>\n",
        MARGIN_LEFT,
        MARGIN_TOP + plot_h,
        MARGIN_LEFT + plot_w,
        MARGIN_TOP + plot_h
    ));
    svg.push_str(&format!(
        "<text class=\"label\" x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">year</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 16.0
    ));
    svg.push_str(&format!(
        "<text class=\"label\" x=\"18\" y=\"{:.2}\" transform=\"rotate(-90 18 {:.2})\" \
         text-anchor=\"middle\">OPM</text>\n",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    ));

    // series polylines + legend
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = s
            .points
            .iter()
            .map(|&(year, opm)| format!("{:.2},{:.2}", to_x(year), to_y(opm)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\" points=\"{}\"/>\n",
            points.join(" ")
        ));

        let ly = MARGIN_TOP + 10.0 + i as f64 * 20.0;
        let lx = MARGIN_LEFT + plot_w + 16.0;
        svg.push_str(&format!(
            "<rect x=\"{lx:.2}\" y=\"{:.2}\" width=\"14\" height=\"4\" fill=\"{color}\"/>\n",
            ly - 2.0
        ));
        svg.push_str(&format!(
            "<text class=\"legend\" x=\"{:.2}\" y=\"{:.2}\">{}</text>\n",
            lx + 20.0,
            ly + 4.0,
            xml_escape(&s.name)
        ));
    }

    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn write_series_svg(series: &[NamedSeries], path: &Path) -> Result<(), ChartError> {
    let svg = render_series_svg(series)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(svg.as_bytes())?;
    Ok(())
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// 1-2-5 tick step covering roughly the requested raw step.
fn nice_step(raw: f64) -> f64 {
    if raw <= 0.0 {
        return 1.0;
    }
    let pow10 = 10f64.powf(raw.log10().floor());
    let frac = raw / pow10;
    let nice = if frac <= 1.0 {
        1.0
    } else if frac <= 2.0 {
        2.0
    } else if frac <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * pow10
}

fn year_step(span: i32) -> i32 {
    match span {
        0..=8 => 1,
        9..=16 => 2,
        17..=40 => 5,
        _ => 10,
    }
}

fn trim_float(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e9 {
        format!("{}", v as i64)
    } else {
        format!("{v:.2}")
    }
}
