//! Minimal SVG chart emission from CSV artifacts. Pure text output, no
//! rendering dependencies.

use aanet_core::{Error, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 24.0;
const MARGIN_B: f64 = 48.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

pub enum Kind {
    Line,
    Bar,
}

impl Kind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "line" => Ok(Kind::Line),
            "bar" => Ok(Kind::Bar),
            other => Err(Error::Argument(format!(
                "plot kind must be 'line' or 'bar', got '{other}'"
            ))),
        }
    }
}

struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn parse_csv(text: &str) -> Result<Csv> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Data("empty csv".into()))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for line in lines {
        let row: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
        if row.len() != header.len() {
            return Err(Error::Data(format!(
                "csv row has {} fields, header has {}",
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Data("csv has no data rows".into()));
    }
    Ok(Csv { header, rows })
}

/// One named series of (x, y) points.
struct Series {
    name: String,
    points: Vec<(f64, f64)>,
}

/// Numeric-first-column CSVs plot each remaining column as a series.
/// String-first-column CSVs pivot: one series per distinct leading value,
/// x from the second column, y from the third.
fn to_series(csv: &Csv) -> Result<Vec<Series>> {
    let numeric_first = csv.rows.iter().all(|r| r[0].parse::<f64>().is_ok());
    if numeric_first {
        let mut series: Vec<Series> = csv.header[1..]
            .iter()
            .map(|name| Series {
                name: name.clone(),
                points: Vec::new(),
            })
            .collect();
        for row in &csv.rows {
            let x: f64 = row[0].parse().expect("checked numeric");
            for (i, s) in series.iter_mut().enumerate() {
                let y: f64 = row[i + 1]
                    .parse()
                    .map_err(|_| Error::Data(format!("non-numeric value '{}'", row[i + 1])))?;
                s.points.push((x, y));
            }
        }
        Ok(series)
    } else {
        if csv.header.len() < 3 {
            return Err(Error::Data(
                "pivoted csv needs at least three columns".into(),
            ));
        }
        let mut series: Vec<Series> = Vec::new();
        for row in &csv.rows {
            let key = &row[0];
            let x: f64 = row[1]
                .parse()
                .map_err(|_| Error::Data(format!("non-numeric x '{}'", row[1])))?;
            let y: f64 = row[2]
                .parse()
                .map_err(|_| Error::Data(format!("non-numeric y '{}'", row[2])))?;
            match series.iter_mut().find(|s| &s.name == key) {
                Some(s) => s.points.push((x, y)),
                None => series.push(Series {
                    name: key.clone(),
                    points: vec![(x, y)],
                }),
            }
        }
        Ok(series)
    }
}

fn bounds(series: &[Series]) -> (f64, f64, f64, f64) {
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in &s.points {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if x_min == x_max {
        x_max += 1.0;
    }
    if y_min == y_max {
        y_max += 1.0;
    }
    (x_min, x_max, y_min.min(0.0), y_max)
}

fn svg_header() -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

fn axes(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> String {
    let x0 = MARGIN_L;
    let x1 = WIDTH - MARGIN_R;
    let y0 = HEIGHT - MARGIN_B;
    let y1 = MARGIN_T;
    let mut out = String::new();
    out.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n"
    ));
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let xv = x_min + t * (x_max - x_min);
        let yv = y_min + t * (y_max - y_min);
        let px = x0 + t * (x1 - x0);
        let py = y0 - t * (y0 - y1);
        out.push_str(&format!(
            "<text x=\"{px:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\">{xv:.3}</text>\n",
            y0 + 16.0
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{py:.1}\" font-size=\"11\" text-anchor=\"end\">{yv:.3}</text>\n",
            x0 - 6.0
        ));
    }
    out
}

/// Renders the CSV as an SVG chart.
pub fn render(csv_text: &str, kind: Kind) -> Result<String> {
    let csv = parse_csv(csv_text)?;
    match kind {
        Kind::Line => render_line(&csv),
        Kind::Bar => render_bar(&csv),
    }
}

fn render_line(csv: &Csv) -> Result<String> {
    let series = to_series(csv)?;
    let (x_min, x_max, y_min, y_max) = bounds(&series);
    let sx = |x: f64| MARGIN_L + (x - x_min) / (x_max - x_min) * (WIDTH - MARGIN_L - MARGIN_R);
    let sy =
        |y: f64| HEIGHT - MARGIN_B - (y - y_min) / (y_max - y_min) * (HEIGHT - MARGIN_T - MARGIN_B);
    let mut out = svg_header();
    out.push_str(&axes(x_min, x_max, y_min, y_max));
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" fill=\"{color}\">{}</text>\n",
            WIDTH - MARGIN_R + 8.0,
            MARGIN_T + 16.0 * i as f64 + 12.0,
            s.name
        ));
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn render_bar(csv: &Csv) -> Result<String> {
    // Label in the first column, value in the last.
    let last = csv.header.len() - 1;
    let mut bars: Vec<(String, f64)> = Vec::new();
    for row in &csv.rows {
        let v: f64 = row[last]
            .parse()
            .map_err(|_| Error::Data(format!("non-numeric value '{}'", row[last])))?;
        bars.push((row[0].clone(), v));
    }
    let y_max = bars
        .iter()
        .map(|b| b.1)
        .fold(f64::NEG_INFINITY, f64::max)
        .max(1e-12);
    let y_min = bars.iter().map(|b| b.1).fold(0.0f64, f64::min);
    let n = bars.len() as f64;
    let span = WIDTH - MARGIN_L - MARGIN_R;
    let bw = span / n * 0.7;
    let sy =
        |y: f64| HEIGHT - MARGIN_B - (y - y_min) / (y_max - y_min) * (HEIGHT - MARGIN_T - MARGIN_B);
    let mut out = svg_header();
    out.push_str(&axes(0.0, n, y_min, y_max));
    for (i, (label, v)) in bars.iter().enumerate() {
        let x = MARGIN_L + span * (i as f64 + 0.15) / n;
        let top = sy(*v);
        let base = sy(0.0f64.max(y_min));
        let color = COLORS[i % COLORS.len()];
        out.push_str(&format!(
            "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"{bw:.1}\" height=\"{:.1}\" fill=\"{color}\"/>\n",
            top.min(base),
            (base - top).abs()
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"middle\" \
             transform=\"rotate(30 {:.1} {:.1})\">{label}</text>\n",
            x + bw / 2.0,
            HEIGHT - MARGIN_B + 14.0,
            x + bw / 2.0,
            HEIGHT - MARGIN_B + 14.0
        ));
    }
    out.push_str("</svg>\n");
    Ok(out)
}
