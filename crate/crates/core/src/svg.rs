//! Static SVG emission for the pipeline's three plot kinds: line plots with
//! optional log axes, matrix heatmaps, and run-length-encoded mask images.
//! Every coordinate is formatted with fixed precision, so identical inputs
//! produce identical bytes.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SvgError {
    #[error("nothing to draw")]
    NoData,
    #[error("series {series:?} point {index} is not drawable: ({x}, {y})")]
    BadPoint {
        series: String,
        index: usize,
        x: f64,
        y: f64,
    },
    #[error("row {row} has {len} entries, expected {want}")]
    RaggedRows { row: usize, len: usize, want: usize },
    #[error("matrix entry ({row}, {col}) is not finite")]
    BadEntry { row: usize, col: usize },
}

/// One labeled curve.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Plot frame: title, axis labels, and per-axis log scaling.
#[derive(Debug, Clone)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 78.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 42.0;
const MARGIN_BOTTOM: f64 = 54.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

fn open_svg(width: f64, height: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {width:.0} {height:.0}\" \
         width=\"{width:.0}\" height=\"{height:.0}\" font-family=\"sans-serif\">\n"
    )
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Tick label without trailing zeros; large and tiny magnitudes fall back
/// to exponent form.
fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let mag = v.abs();
    if !(1e-4..1e6).contains(&mag) {
        return format!("{v:.0e}");
    }
    let mut s = format!("{v:.6}");
    while s.ends_with('0') {
        s.pop();
    }
    if s.ends_with('.') {
        s.pop();
    }
    s
}

fn nice_step(range: f64, target: usize) -> f64 {
    let raw = range / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    for m in [1.0, 2.0, 5.0, 10.0] {
        if mag * m >= raw {
            return mag * m;
        }
    }
    mag * 10.0
}

/// Tick positions and labels on one axis, in plot coordinates (already log
/// transformed when the axis is logarithmic).
fn ticks(lo: f64, hi: f64, log: bool) -> Vec<(f64, String)> {
    if log {
        let first = lo.ceil() as i64;
        let last = hi.floor() as i64;
        let span = (last - first).max(0) as usize + 1;
        let step = span.div_ceil(10).max(1) as i64;
        let mut out = Vec::new();
        let mut d = first;
        while d <= last {
            out.push((d as f64, format!("1e{d}")));
            d += step;
        }
        if out.is_empty() {
            out.push((lo, format!("{:.2}", 10f64.powf(lo))));
        }
        out
    } else {
        let step = nice_step(hi - lo, 4);
        let mut out = Vec::new();
        let mut v = (lo / step).ceil() * step;
        while v <= hi + 1e-9 * step {
            let snapped = if v.abs() < 1e-12 * step { 0.0 } else { v };
            out.push((snapped, fmt_tick(snapped)));
            v += step;
        }
        out
    }
}

/// Draws every series into one coordinate frame. Log axes reject
/// nonpositive coordinates; every coordinate must be finite.
pub fn line_plot(series: &[Series], spec: &PlotSpec) -> Result<String, SvgError> {
    if series.is_empty() || series.iter().all(|s| s.points.is_empty()) {
        return Err(SvgError::NoData);
    }
    let mut tx = Vec::new();
    for s in series {
        for (i, &(x, y)) in s.points.iter().enumerate() {
            let bad = !x.is_finite()
                || !y.is_finite()
                || (spec.log_x && x <= 0.0)
                || (spec.log_y && y <= 0.0);
            if bad {
                return Err(SvgError::BadPoint {
                    series: s.label.clone(),
                    index: i,
                    x,
                    y,
                });
            }
            let px = if spec.log_x { x.log10() } else { x };
            let py = if spec.log_y { y.log10() } else { y };
            tx.push((px, py));
        }
    }
    let (mut x_lo, mut x_hi) = tx
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.0), hi.max(p.0))
        });
    let (mut y_lo, mut y_hi) = tx
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.1), hi.max(p.1))
        });
    for (lo, hi) in [(&mut x_lo, &mut x_hi), (&mut y_lo, &mut y_hi)] {
        if *hi - *lo < 1e-12 {
            *lo -= 0.5;
            *hi += 0.5;
        } else {
            let pad = 0.04 * (*hi - *lo);
            *lo -= pad;
            *hi += pad;
        }
    }
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let to_px = |x: f64| MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let to_py = |y: f64| MARGIN_TOP + (y_hi - y) / (y_hi - y_lo) * plot_h;

    let mut out = open_svg(WIDTH, HEIGHT);
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    writeln!(
        out,
        "<text x=\"{:.2}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>",
        MARGIN_LEFT + plot_w / 2.0,
        escape(&spec.title)
    )
    .expect("string write");

    for (x, label) in ticks(x_lo, x_hi, spec.log_x) {
        let px = to_px(x);
        writeln!(
            out,
            "<line x1=\"{px:.2}\" y1=\"{:.2}\" x2=\"{px:.2}\" y2=\"{:.2}\" stroke=\"#dddddd\"/>",
            MARGIN_TOP,
            MARGIN_TOP + plot_h
        )
        .expect("string write");
        writeln!(
            out,
            "<text x=\"{px:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"11\">{label}</text>",
            MARGIN_TOP + plot_h + 16.0
        )
        .expect("string write");
    }
    for (y, label) in ticks(y_lo, y_hi, spec.log_y) {
        let py = to_py(y);
        writeln!(
            out,
            "<line x1=\"{:.2}\" y1=\"{py:.2}\" x2=\"{:.2}\" y2=\"{py:.2}\" stroke=\"#dddddd\"/>",
            MARGIN_LEFT,
            MARGIN_LEFT + plot_w
        )
        .expect("string write");
        writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-size=\"11\">{label}</text>",
            MARGIN_LEFT - 6.0,
            py + 4.0
        )
        .expect("string write");
    }
    writeln!(
        out,
        "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{plot_w:.2}\" height=\"{plot_h:.2}\" \
         fill=\"none\" stroke=\"black\"/>",
        MARGIN_LEFT, MARGIN_TOP
    )
    .expect("string write");
    writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"13\">{}</text>",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 12.0,
        escape(&spec.x_label)
    )
    .expect("string write");
    writeln!(
        out,
        "<text x=\"18\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"13\" \
         transform=\"rotate(-90 18 {:.2})\">{}</text>",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        escape(&spec.y_label)
    )
    .expect("string write");

    let mut offset = 0;
    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let mut pts = String::new();
        for &(px, py) in &tx[offset..offset + s.points.len()] {
            write!(pts, "{:.2},{:.2} ", to_px(px), to_py(py)).expect("string write");
        }
        offset += s.points.len();
        writeln!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
            pts.trim_end()
        )
        .expect("string write");
        let ly = MARGIN_TOP + 14.0 + 16.0 * si as f64;
        writeln!(
            out,
            "<line x1=\"{:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" \
             stroke=\"{color}\" stroke-width=\"2\"/>",
            MARGIN_LEFT + plot_w - 130.0,
            MARGIN_LEFT + plot_w - 108.0
        )
        .expect("string write");
        writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\">{}</text>",
            MARGIN_LEFT + plot_w - 102.0,
            ly + 4.0,
            escape(&s.label)
        )
        .expect("string write");
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Three-stop color ramp from dark blue through teal to sand, `v` in
/// `[0, 1]`.
fn ramp(v: f64) -> String {
    let stops = [(11, 37, 69), (42, 157, 143), (233, 196, 106)];
    let v = v.clamp(0.0, 1.0) * 2.0;
    let (a, b, frac) = if v <= 1.0 {
        (stops[0], stops[1], v)
    } else {
        (stops[1], stops[2], v - 1.0)
    };
    let mix = |x: i32, y: i32| (x as f64 + frac * (y - x) as f64).round() as i32;
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(a.0, b.0),
        mix(a.1, b.1),
        mix(a.2, b.2)
    )
}

/// Rectangular heatmap with one cell per matrix entry, value tooltips, and
/// a min/max legend. Rows must share a length and entries must be finite.
pub fn heatmap(values: &[Vec<f64>], title: &str) -> Result<String, SvgError> {
    let nrows = values.len();
    if nrows == 0 || values[0].is_empty() {
        return Err(SvgError::NoData);
    }
    let ncols = values[0].len();
    for (r, row) in values.iter().enumerate() {
        if row.len() != ncols {
            return Err(SvgError::RaggedRows {
                row: r,
                len: row.len(),
                want: ncols,
            });
        }
        for (c, v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(SvgError::BadEntry { row: r, col: c });
            }
        }
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for row in values {
        for &v in row {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let cell = (640.0 / ncols.max(nrows) as f64).min(28.0);
    let ox = 60.0;
    let oy = 48.0;
    let width = ox + cell * ncols as f64 + 24.0;
    let height = oy + cell * nrows as f64 + 40.0;
    let mut out = open_svg(width, height);
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    writeln!(
        out,
        "<text x=\"{:.2}\" y=\"26\" text-anchor=\"middle\" font-size=\"15\">{}</text>",
        ox + cell * ncols as f64 / 2.0,
        escape(title)
    )
    .expect("string write");
    for (r, row) in values.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            let norm = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
            writeln!(
                out,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{cell:.2}\" height=\"{cell:.2}\" \
                 fill=\"{}\"><title>({r}, {c}) = {v:.6e}</title></rect>",
                ox + cell * c as f64,
                oy + cell * r as f64,
                ramp(norm)
            )
            .expect("string write");
        }
    }
    let label_step = (nrows / 8).max(1);
    for r in (0..nrows).step_by(label_step) {
        writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-size=\"10\">{r}</text>",
            ox - 5.0,
            oy + cell * (r as f64 + 0.5) + 3.0
        )
        .expect("string write");
    }
    for c in (0..ncols).step_by((ncols / 8).max(1)) {
        writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"10\">{c}</text>",
            ox + cell * (c as f64 + 0.5),
            oy - 6.0
        )
        .expect("string write");
    }
    writeln!(
        out,
        "<text x=\"{ox:.2}\" y=\"{:.2}\" font-size=\"11\">min {} max {}</text>",
        oy + cell * nrows as f64 + 20.0,
        fmt_tick(lo),
        fmt_tick(hi)
    )
    .expect("string write");
    out.push_str("</svg>\n");
    Ok(out)
}

/// Black-on-white raster of a boolean mask, one unit square per set cell,
/// run-length encoded along rows. The viewBox is the cell lattice itself.
pub fn mask_image(bitmap: &[Vec<bool>], title: &str) -> Result<String, SvgError> {
    let nrows = bitmap.len();
    if nrows == 0 || bitmap[0].is_empty() {
        return Err(SvgError::NoData);
    }
    let ncols = bitmap[0].len();
    for (r, row) in bitmap.iter().enumerate() {
        if row.len() != ncols {
            return Err(SvgError::RaggedRows {
                row: r,
                len: row.len(),
                want: ncols,
            });
        }
    }
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {ncols} {nrows}\" \
         width=\"512\" height=\"{:.0}\" shape-rendering=\"crispEdges\">\n",
        512.0 * nrows as f64 / ncols as f64
    );
    writeln!(out, "<title>{}</title>", escape(title)).expect("string write");
    writeln!(out, "<rect width=\"{ncols}\" height=\"{nrows}\" fill=\"white\"/>").expect("string write");
    for (r, row) in bitmap.iter().enumerate() {
        let mut c = 0;
        while c < ncols {
            if row[c] {
                let start = c;
                while c < ncols && row[c] {
                    c += 1;
                }
                writeln!(
                    out,
                    "<rect x=\"{start}\" y=\"{r}\" width=\"{}\" height=\"1\" fill=\"black\"/>",
                    c - start
                )
                .expect("string write");
            } else {
                c += 1;
            }
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(log_x: bool, log_y: bool) -> PlotSpec {
        PlotSpec {
            title: "norms".to_string(),
            x_label: "t".to_string(),
            y_label: "sup".to_string(),
            log_x,
            log_y,
        }
    }

    fn well_formed(svg: &str) {
        assert!(svg.starts_with("<svg "));
        assert!(svg.ends_with("</svg>\n"));
        let mut stack: Vec<&str> = Vec::new();
        let mut rest = svg;
        while let Some(start) = rest.find('<') {
            let end = start + rest[start..].find('>').expect("unterminated tag");
            let token = &rest[start + 1..end];
            rest = &rest[end + 1..];
            if let Some(name) = token.strip_prefix('/') {
                assert_eq!(stack.pop(), Some(name.trim()), "mismatched closing tag");
            } else if !token.ends_with('/') {
                stack.push(token.split_whitespace().next().expect("tag name"));
            }
        }
        assert!(stack.is_empty(), "unclosed tags: {stack:?}");
    }

    #[test]
    fn line_plots_draw_one_polyline_per_series() {
        let series = vec![
            Series {
                label: "velocity".to_string(),
                points: (1..=8).map(|i| (i as f64, (i * i) as f64)).collect(),
            },
            Series {
                label: "tracer".to_string(),
                points: (1..=5).map(|i| (i as f64, 1.0 / i as f64)).collect(),
            },
        ];
        let svg = line_plot(&series, &spec(false, false)).expect("plot renders");
        well_formed(&svg);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("velocity"));
        assert!(svg.contains("tracer"));
        let first_polyline = svg
            .split("<polyline points=\"")
            .nth(1)
            .and_then(|s| s.split('"').next())
            .expect("polyline attribute");
        assert_eq!(first_polyline.split_whitespace().count(), 8);
    }

    #[test]
    fn log_axes_carry_decade_ticks() {
        let series = vec![Series {
            label: "decay".to_string(),
            points: vec![(1e-4, 1e-1), (1e-3, 1e-2), (1e-2, 1e-3), (1e-1, 1e-4)],
        }];
        let svg = line_plot(&series, &spec(true, true)).expect("plot renders");
        well_formed(&svg);
        for label in ["1e-4", "1e-3", "1e-2", "1e-1"] {
            assert!(svg.contains(label), "missing decade tick {label}");
        }
    }

    #[test]
    fn flat_series_still_render() {
        let series = vec![Series {
            label: "constant".to_string(),
            points: vec![(1.0, 3.0), (2.0, 3.0), (3.0, 3.0)],
        }];
        let svg = line_plot(&series, &spec(false, false)).expect("plot renders");
        well_formed(&svg);
    }

    #[test]
    fn bad_plot_inputs_are_rejected() {
        assert!(matches!(line_plot(&[], &spec(false, false)), Err(SvgError::NoData)));
        let nan = vec![Series {
            label: "bad".to_string(),
            points: vec![(1.0, f64::NAN)],
        }];
        assert!(matches!(
            line_plot(&nan, &spec(false, false)),
            Err(SvgError::BadPoint { index: 0, .. })
        ));
        let nonpositive = vec![Series {
            label: "bad".to_string(),
            points: vec![(0.0, 1.0)],
        }];
        assert!(line_plot(&nonpositive, &spec(false, false)).is_ok());
        assert!(matches!(
            line_plot(&nonpositive, &spec(true, false)),
            Err(SvgError::BadPoint { .. })
        ));
    }

    #[test]
    fn heatmaps_emit_one_cell_per_entry() {
        let values: Vec<Vec<f64>> = (0..4)
            .map(|r| (0..6).map(|c| (r * 6 + c) as f64 / 10.0).collect())
            .collect();
        let svg = heatmap(&values, "interactions").expect("heatmap renders");
        well_formed(&svg);
        assert_eq!(svg.matches("<title>").count(), 24);
        assert!(svg.contains("min 0 max 2.3"));
        assert!(svg.contains("interactions"));
    }

    #[test]
    fn heatmaps_reject_ragged_and_nonfinite_input() {
        let ragged = vec![vec![1.0, 2.0], vec![3.0]];
        assert!(matches!(
            heatmap(&ragged, "x"),
            Err(SvgError::RaggedRows { row: 1, len: 1, want: 2 })
        ));
        let nan = vec![vec![1.0, f64::NAN]];
        assert!(matches!(
            heatmap(&nan, "x"),
            Err(SvgError::BadEntry { row: 0, col: 1 })
        ));
        assert!(matches!(heatmap(&[], "x"), Err(SvgError::NoData)));
    }

    #[test]
    fn mask_images_run_length_encode_rows() {
        let bitmap = vec![
            vec![true, true, false, true],
            vec![false, false, false, false],
            vec![true, true, true, true],
        ];
        let svg = mask_image(&bitmap, "level mask").expect("mask renders");
        well_formed(&svg);
        assert!(svg.contains("viewBox=\"0 0 4 3\""));
        let black = svg.matches("fill=\"black\"").count();
        assert_eq!(black, 3);
        assert!(svg.contains("<rect x=\"0\" y=\"0\" width=\"2\" height=\"1\""));
        assert!(svg.contains("<rect x=\"3\" y=\"0\" width=\"1\" height=\"1\""));
        assert!(svg.contains("<rect x=\"0\" y=\"2\" width=\"4\" height=\"1\""));
    }

    #[test]
    fn identical_inputs_render_identical_bytes() {
        let series = vec![Series {
            label: "s".to_string(),
            points: vec![(0.1, 0.2), (0.3, 0.7), (0.5, 0.4)],
        }];
        let a = line_plot(&series, &spec(false, false)).expect("plot renders");
        let b = line_plot(&series, &spec(false, false)).expect("plot renders");
        assert_eq!(a, b);
        let values = vec![vec![0.0, 1.0], vec![2.0, 3.0]];
        assert_eq!(
            heatmap(&values, "t").expect("heatmap renders"),
            heatmap(&values, "t").expect("heatmap renders")
        );
    }

    #[test]
    fn titles_are_escaped() {
        let values = vec![vec![1.0]];
        let svg = heatmap(&values, "a < b & c").expect("heatmap renders");
        assert!(svg.contains("a &lt; b &amp; c"));
        assert!(!svg.contains("a < b & c"));
    }
}
