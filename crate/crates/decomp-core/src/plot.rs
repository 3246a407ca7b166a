//! Static SVG rendering of the bias contour plot.
//!
//! The plot follows the calibration-figure conventions: absolute imbalance
//! `|δ_u|` on the horizontal axis, absolute impact `|β_u|` on the vertical
//! axis, red markers for pre-weighting imbalance, green markers for
//! post-weighting imbalance, the critical-bias hyperbola in blue with the
//! killer region shaded above it, and labels on the three covariates with
//! the greatest bias. Everything is emitted as plain SVG paths; byte output
//! is a pure function of the inputs.

use crate::amplification::{top_bias_covariates, CalibrationPoint, ContourGrid};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN_LEFT: f64 = 78.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 56.0;
const MARGIN_BOTTOM: f64 = 64.0;
const BOUNDARY_SAMPLES: usize = 256;
const TICKS: usize = 5;

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

/// The visible part of the hyperbola `beta = critical_bias / delta` inside
/// the axis rectangle, as `(delta, beta)` pairs in data coordinates. Empty
/// when the whole curve lies above the plot.
pub fn boundary_polyline(grid: &ContourGrid, samples: usize) -> Vec<(f64, f64)> {
    let delta_max = *grid.delta_axis.last().unwrap_or(&0.0);
    let beta_max = *grid.beta_axis.last().unwrap_or(&0.0);
    if delta_max <= 0.0 || beta_max <= 0.0 {
        return Vec::new();
    }
    let delta_entry = grid.critical_bias / beta_max;
    if delta_entry >= delta_max {
        return Vec::new();
    }
    (0..=samples)
        .map(|k| {
            let d = delta_entry + (delta_max - delta_entry) * k as f64 / samples as f64;
            (d, grid.critical_bias / d)
        })
        .collect()
}

struct Scale {
    delta_max: f64,
    beta_max: f64,
}

impl Scale {
    fn x(&self, delta: f64) -> f64 {
        MARGIN_LEFT + (WIDTH - MARGIN_LEFT - MARGIN_RIGHT) * (delta / self.delta_max)
    }

    fn y(&self, beta: f64) -> f64 {
        HEIGHT - MARGIN_BOTTOM - (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM) * (beta / self.beta_max)
    }
}

/// Render the contour plot. `title` is drawn across the top.
pub fn render_contour_svg(grid: &ContourGrid, points: &[CalibrationPoint], title: &str) -> String {
    let scale = Scale {
        delta_max: *grid.delta_axis.last().unwrap_or(&1.0),
        beta_max: *grid.beta_axis.last().unwrap_or(&1.0),
    };

    let mut svg = String::with_capacity(16 * 1024);
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"28\" font-family=\"sans-serif\" font-size=\"17\" text-anchor=\"middle\">{}</text>\n",
        fmt(WIDTH / 2.0),
        escape_xml(title)
    ));

    // Killer region: polygon from the visible hyperbola up to the top-right
    // corner of the axes.
    let boundary = boundary_polyline(grid, BOUNDARY_SAMPLES);
    if let (Some(first), Some(last)) = (boundary.first(), boundary.last()) {
        let mut path = format!(
            "M {} {} ",
            fmt(scale.x(first.0)),
            fmt(scale.y(scale.beta_max))
        );
        for &(d, b) in &boundary {
            path.push_str(&format!("L {} {} ", fmt(scale.x(d)), fmt(scale.y(b))));
        }
        path.push_str(&format!(
            "L {} {} Z",
            fmt(scale.x(last.0)),
            fmt(scale.y(scale.beta_max))
        ));
        svg.push_str(&format!(
            "<path d=\"{path}\" fill=\"#4477cc\" fill-opacity=\"0.18\" stroke=\"none\"/>\n"
        ));
        let mut curve = String::new();
        for (k, &(d, b)) in boundary.iter().enumerate() {
            curve.push_str(if k == 0 { "M " } else { "L " });
            curve.push_str(&format!("{} {} ", fmt(scale.x(d)), fmt(scale.y(b))));
        }
        svg.push_str(&format!(
            "<path d=\"{}\" fill=\"none\" stroke=\"#2255bb\" stroke-width=\"2\"/>\n",
            curve.trim_end()
        ));
    }

    // Axes.
    let x0 = fmt(MARGIN_LEFT);
    let y0 = fmt(HEIGHT - MARGIN_BOTTOM);
    let x1 = fmt(WIDTH - MARGIN_RIGHT);
    let y1 = fmt(MARGIN_TOP);
    svg.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n"
    ));
    svg.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n"
    ));
    for k in 0..=TICKS {
        let frac = k as f64 / TICKS as f64;
        let dv = scale.delta_max * frac;
        let bv = scale.beta_max * frac;
        let xt = scale.x(dv);
        let yt = scale.y(bv);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{y0}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
            fmt(xt),
            fmt(xt),
            fmt(HEIGHT - MARGIN_BOTTOM + 5.0)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{:.3}</text>\n",
            fmt(xt),
            fmt(HEIGHT - MARGIN_BOTTOM + 20.0),
            dv
        ));
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{x0}\" y2=\"{}\" stroke=\"black\"/>\n",
            fmt(MARGIN_LEFT - 5.0),
            fmt(yt),
            fmt(yt)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">{:.3}</text>\n",
            fmt(MARGIN_LEFT - 9.0),
            fmt(yt + 4.0),
            bv
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">|delta_u| (imbalance)</text>\n",
        fmt((MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0),
        fmt(HEIGHT - 16.0)
    ));
    svg.push_str(&format!(
        "<text x=\"20\" y=\"{}\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 20 {})\">|beta_u| (impact)</text>\n",
        fmt((MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2.0),
        fmt((MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2.0)
    ));

    // Calibration markers: red = pre-weighting, green = post-weighting.
    for p in points {
        let (dx, dy) = (p.delta_pre.abs(), p.beta_u.abs());
        svg.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"4.5\" fill=\"#cc3333\" fill-opacity=\"0.85\"><title>{} (pre)</title></circle>\n",
            fmt(scale.x(dx.min(scale.delta_max))),
            fmt(scale.y(dy.min(scale.beta_max))),
            escape_xml(&p.covariate)
        ));
        let (gx, gy) = (p.delta_post.abs(), p.beta_u.abs());
        svg.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"4.5\" fill=\"#339944\" fill-opacity=\"0.85\"><title>{} (post)</title></circle>\n",
            fmt(scale.x(gx.min(scale.delta_max))),
            fmt(scale.y(gy.min(scale.beta_max))),
            escape_xml(&p.covariate)
        ));
    }

    // Label the three covariates with the greatest bias, at their
    // pre-weighting positions.
    for name in top_bias_covariates(points, 3) {
        if let Some(p) = points.iter().find(|p| p.covariate == name) {
            svg.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" class=\"covariate-label\">{}</text>\n",
                fmt(scale.x(p.delta_pre.abs().min(scale.delta_max)) + 7.0),
                fmt(scale.y(p.beta_u.abs().min(scale.beta_max)) - 7.0),
                escape_xml(&p.covariate)
            ));
        }
    }

    // Legend.
    let lx = MARGIN_LEFT + 12.0;
    let ly = MARGIN_TOP + 10.0;
    svg.push_str(&format!(
        "<circle cx=\"{}\" cy=\"{}\" r=\"4.5\" fill=\"#cc3333\"/><text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">pre-weighting imbalance</text>\n",
        fmt(lx), fmt(ly), fmt(lx + 10.0), fmt(ly + 4.0)
    ));
    svg.push_str(&format!(
        "<circle cx=\"{}\" cy=\"{}\" r=\"4.5\" fill=\"#339944\"/><text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">post-weighting imbalance</text>\n",
        fmt(lx), fmt(ly + 18.0), fmt(lx + 10.0), fmt(ly + 22.0)
    ));
    svg.push_str(&format!(
        "<rect x=\"{}\" y=\"{}\" width=\"9\" height=\"9\" fill=\"#4477cc\" fill-opacity=\"0.18\" stroke=\"#2255bb\"/><text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">killer confounder region (bias &gt; {:.4})</text>\n",
        fmt(lx - 4.0), fmt(ly + 29.0), fmt(lx + 10.0), fmt(ly + 38.0), grid.critical_bias
    ));

    svg.push_str("</svg>\n");
    svg
}
