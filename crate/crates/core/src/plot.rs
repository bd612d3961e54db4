//! Dependency-free SVG emission for the three figure types the pipeline
//! produces: frame-value scatter, histogram, and normal-probability plot.
//!
//! Output is deliberately element-countable: scatter and qq render one
//! `<circle>` per data point, histograms one `<rect>` per bin; axes use
//! `<line>` so they never inflate those counts.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::stats::{Histogram, QQData};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Scatter,
    Histogram,
    Qq,
}

impl std::str::FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scatter" => Ok(PlotKind::Scatter),
            "histogram" => Ok(PlotKind::Histogram),
            "qq" => Ok(PlotKind::Qq),
            other => Err(Error::Format(format!("unknown plot kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub kind: PlotKind,
    pub width: u32,
    pub height: u32,
    pub title: String,
}

impl PlotSpec {
    pub fn new(kind: PlotKind, width: u32, height: u32, title: impl Into<String>) -> Result<Self> {
        if width < 64 || height < 64 {
            return Err(Error::Domain(format!(
                "plot canvas must be at least 64x64, got {width}x{height}"
            )));
        }
        Ok(Self { kind, width, height, title: title.into() })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlotData {
    Scatter(Vec<(f64, f64)>),
    Histogram(Histogram),
    Qq(QQData),
}

impl PlotData {
    fn kind(&self) -> PlotKind {
        match self {
            PlotData::Scatter(_) => PlotKind::Scatter,
            PlotData::Histogram(_) => PlotKind::Histogram,
            PlotData::Qq(_) => PlotKind::Qq,
        }
    }
}

struct Frame {
    x0: f64,
    y0: f64, // pixel origin of the plot area (bottom-left)
    w: f64,
    h: f64,
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn new(spec: &PlotSpec, x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        let (cw, ch) = (spec.width as f64, spec.height as f64);
        let ml = 0.12 * cw;
        let mr = 0.04 * cw;
        let mt = 0.12 * ch;
        let mb = 0.10 * ch;
        // Pad degenerate ranges so the mapping stays finite.
        let (x_min, x_max) = pad_range(x_min, x_max);
        let (y_min, y_max) = pad_range(y_min, y_max);
        Self {
            x0: ml,
            y0: ch - mb,
            w: cw - ml - mr,
            h: ch - mt - mb,
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    fn px(&self, x: f64) -> f64 {
        self.x0 + (x - self.x_min) / (self.x_max - self.x_min) * self.w
    }

    fn py(&self, y: f64) -> f64 {
        self.y0 - (y - self.y_min) / (self.y_max - self.y_min) * self.h
    }
}

fn pad_range(min: f64, max: f64) -> (f64, f64) {
    if max > min {
        (min, max)
    } else {
        (min - 0.5, min + 0.5)
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn bounds(points: impl Iterator<Item = (f64, f64)>) -> (f64, f64, f64, f64) {
    let mut xm = f64::INFINITY;
    let mut xx = f64::NEG_INFINITY;
    let mut ym = f64::INFINITY;
    let mut yx = f64::NEG_INFINITY;
    for (x, y) in points {
        xm = xm.min(x);
        xx = xx.max(x);
        ym = ym.min(y);
        yx = yx.max(y);
    }
    (xm, xx, ym, yx)
}

/// Renders the data as an SVG 1.1 document. The data variant must agree
/// with `spec.kind`.
pub fn render_svg(data: &PlotData, spec: &PlotSpec) -> Result<String> {
    if data.kind() != spec.kind {
        return Err(Error::Domain(format!(
            "plot spec kind {:?} does not match the data ({:?})",
            spec.kind,
            data.kind()
        )));
    }
    let mut svg = String::new();
    // No background rect: histogram bins must be the only <rect> elements.
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" \
         width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" \
         style=\"background-color:white\">\n",
        w = spec.width,
        h = spec.height
    );

    match data {
        PlotData::Scatter(points) => {
            let (xm, xx, ym, yx) = bounds(points.iter().copied());
            let f = Frame::new(spec, xm, xx, ym, yx);
            axes(&mut svg, &f);
            for &(x, y) in points {
                circle(&mut svg, f.px(x), f.py(y), "#1f77b4");
            }
        }
        PlotData::Histogram(hist) => {
            let k = hist.bins();
            let y_max = hist.counts.iter().copied().max().unwrap_or(0) as f64;
            let f = Frame::new(spec, hist.bin_edges[0], hist.bin_edges[k], 0.0, y_max);
            axes(&mut svg, &f);
            for i in 0..k {
                let x_left = f.px(hist.bin_edges[i]);
                let x_right = f.px(hist.bin_edges[i + 1]);
                let y_top = f.py(hist.counts[i] as f64);
                let _ = write!(
                    svg,
                    "  <rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" \
                     fill=\"#1f77b4\" stroke=\"white\" stroke-width=\"0.5\"/>\n",
                    x_left,
                    y_top,
                    x_right - x_left,
                    f.y0 - y_top
                );
            }
        }
        PlotData::Qq(qq) => {
            let (xm, xx, ym, yx) = bounds(qq.points.iter().copied());
            let f = Frame::new(spec, xm, xx, ym, yx);
            axes(&mut svg, &f);
            // Reference line y = x across the data range.
            let lo = xm.min(ym);
            let hi = xx.max(yx);
            let _ = write!(
                svg,
                "  <line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" \
                 stroke=\"#d62728\" stroke-width=\"1\"/>\n",
                f.px(lo),
                f.py(lo),
                f.px(hi),
                f.py(hi)
            );
            for &(x, y) in &qq.points {
                circle(&mut svg, f.px(x), f.py(y), "#1f77b4");
            }
        }
    }

    if !spec.title.is_empty() {
        let _ = write!(
            svg,
            "  <text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"middle\">{}</text>\n",
            spec.width as f64 / 2.0,
            0.08 * spec.height as f64,
            xml_escape(&spec.title)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn circle(svg: &mut String, cx: f64, cy: f64, fill: &str) {
    let _ = write!(
        svg,
        "  <circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"2\" fill=\"{fill}\" fill-opacity=\"0.7\"/>\n"
    );
}

fn axes(svg: &mut String, f: &Frame) {
    let _ = write!(
        svg,
        "  <line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{x1:.2}\" y2=\"{y0:.2}\" \
         stroke=\"black\" stroke-width=\"1\"/>\n",
        x0 = f.x0,
        y0 = f.y0,
        x1 = f.x0 + f.w
    );
    let _ = write!(
        svg,
        "  <line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{x0:.2}\" y2=\"{y1:.2}\" \
         stroke=\"black\" stroke-width=\"1\"/>\n",
        x0 = f.x0,
        y0 = f.y0,
        y1 = f.y0 - f.h
    );
}
