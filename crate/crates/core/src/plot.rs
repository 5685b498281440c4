//! SVG scatter of label coordinates on two manifold dimensions.

use std::fmt::Write;

use crate::error::{Error, Result};
use crate::manifold::ManifoldEmbedding;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 800.0;
const MARGIN: f64 = 0.05;
const MARKER_RADIUS: f64 = 4.0;

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Maps data coordinates to the viewport with one uniform scale, so
/// distances on the plot stay proportional to manifold distances.
struct Viewport {
    cx: f64,
    cy: f64,
    scale: f64,
}

impl Viewport {
    fn fit(points: &[(f64, f64)]) -> Viewport {
        // The origin is always in view because the axes pass through it.
        let (mut x0, mut x1, mut y0, mut y1) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for &(x, y) in points {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        let usable = 1.0 - 2.0 * MARGIN;
        let span = (x1 - x0).max(y1 - y0);
        let scale = if span > 0.0 {
            (WIDTH * usable / span).min(HEIGHT * usable / span)
        } else {
            1.0
        };
        Viewport {
            cx: (x0 + x1) / 2.0,
            cy: (y0 + y1) / 2.0,
            scale,
        }
    }

    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        (
            WIDTH / 2.0 + (x - self.cx) * self.scale,
            // SVG y grows downward.
            HEIGHT / 2.0 - (y - self.cy) * self.scale,
        )
    }
}

/// One marker and one text label per emotion at `(mu[i], mu[j])`, axes
/// through the origin. Output depends only on the arguments.
pub fn emit_scatter_svg(emb: &ManifoldEmbedding, dims: (usize, usize), flip_x: bool, flip_y: bool) -> Result<String> {
    let (i, j) = dims;
    let l = emb.dim();
    if i == j {
        return Err(Error::validation("plot dimensions must differ"));
    }
    if i >= l || j >= l {
        return Err(Error::validation(format!(
            "plot dimensions ({i}, {j}) out of range for a {l}-dimensional manifold"
        )));
    }
    let sx = if flip_x { -1.0 } else { 1.0 };
    let sy = if flip_y { -1.0 } else { 1.0 };
    let points: Vec<(f64, f64)> = emb.mu().iter().map(|m| (sx * m[i], sy * m[j])).collect();
    let view = if points.len() == 1 {
        // A lone label sits in the middle of the plot.
        Viewport {
            cx: points[0].0,
            cy: points[0].1,
            scale: 1.0,
        }
    } else {
        Viewport::fit(&points)
    };

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let (ox, oy) = view.map(0.0, 0.0);
    let _ = writeln!(
        svg,
        r##"<g stroke="#999" stroke-width="1"><line x1="0" y1="{oy:.3}" x2="{WIDTH}" y2="{oy:.3}"/><line x1="{ox:.3}" y1="0" x2="{ox:.3}" y2="{HEIGHT}"/></g>"##
    );
    let _ = writeln!(svg, r#"<g font-family="sans-serif" font-size="12">"#);
    for (label, &(x, y)) in emb.labels().iter().zip(&points) {
        let (px, py) = view.map(x, y);
        let _ = writeln!(
            svg,
            r#"<circle cx="{px:.3}" cy="{py:.3}" r="{MARKER_RADIUS}" fill="steelblue"/><text x="{:.3}" y="{:.3}">{}</text>"#,
            px + MARKER_RADIUS + 2.0,
            py - MARKER_RADIUS,
            escape(label)
        );
    }
    svg.push_str("</g>\n</svg>\n");
    Ok(svg)
}
