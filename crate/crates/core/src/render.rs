//! Isolines of `R`, region-confined isoline tracing, blended edge drawing and
//! SVG output.

use std::fmt::Write as _;
use std::str::FromStr;

use base64::Engine as _;
use serde::Serialize;
use thiserror::Error;

use crate::edge::{EdgeGraph, EdgeNode};
use crate::raster::{ContinuousPoint, Dir, Image, LatticePoint, PixelCoefficients};
use crate::region::{Partition, TRI_E, TRI_N, TRI_S, TRI_W};
use crate::steepest::SteepestGraph;

const EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("isoline value {value} is not strictly inside the range of region {region}")]
    ValueOutOfRange { region: usize, value: f64 },
    #[error("isoline of value {value} in region {region} has no continuation at {at:?}")]
    NoContinuation { region: usize, value: f64, at: ContinuousPoint },
    #[error("isoline of value {value} in region {region} did not close within {steps} cells")]
    TooLong { region: usize, value: f64, steps: usize },
    #[error("unknown colormap {0:?}")]
    UnknownColormap(String),
    #[error("unknown layer {0:?}")]
    UnknownLayer(String),
}

/// One monotone piece of the level set inside a cell, in cell-local
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Branch {
    p: (f64, f64),
    q: (f64, f64),
    /// Parameterized by `x` (otherwise by `y`).
    by_x: bool,
    straight: bool,
}

impl Branch {
    fn main(&self, pt: (f64, f64)) -> f64 {
        if self.by_x {
            pt.0
        } else {
            pt.1
        }
    }

    fn at(&self, c: &PixelCoefficients, v: f64, u: f64) -> (f64, f64) {
        let (u0, u1) = (self.main(self.p), self.main(self.q));
        if self.straight {
            let t = if u1 == u0 { 0.0 } else { (u - u0) / (u1 - u0) };
            return (self.p.0 + t * (self.q.0 - self.p.0), self.p.1 + t * (self.q.1 - self.p.1));
        }
        if self.by_x {
            (u, (v - c.v00 - c.v10 * u) / (c.v01 + c.v11 * u))
        } else {
            ((v - c.v00 - c.v01 * u) / (c.v10 + c.v11 * u), u)
        }
    }

    fn contains(&self, c: &PixelCoefficients, v: f64, pt: (f64, f64)) -> bool {
        let u = self.main(pt);
        let (lo, hi) = (self.main(self.p).min(self.main(self.q)), self.main(self.p).max(self.main(self.q)));
        if u < lo - EPS || u > hi + EPS {
            return false;
        }
        let b = self.at(c, v, u.clamp(lo, hi));
        (b.0 - pt.0).abs() < 1e-7 && (b.1 - pt.1).abs() < 1e-7
    }
}

fn close(a: (f64, f64), b: (f64, f64)) -> bool {
    (a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12
}

/// Exact crossings of the level `v` with the cell boundary.
fn side_points(c: &PixelCoefficients, v: f64) -> Vec<(f64, f64)> {
    let lin = |base: f64, slope: f64| -> Option<f64> {
        if slope == 0.0 {
            return None;
        }
        let t = (v - base) / slope;
        (-1e-12..=1.0 + 1e-12).contains(&t).then(|| t.clamp(0.0, 1.0))
    };
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(4);
    let corners = [((0.0, 0.0), c.v00), ((1.0, 0.0), c.v00 + c.v10), ((0.0, 1.0), c.v00 + c.v01), ((1.0, 1.0), c.eval(1.0, 1.0))];
    for (p, val) in corners {
        if val == v {
            pts.push(p);
        }
    }
    if let Some(t) = lin(c.v00, c.v10) {
        pts.push((t, 0.0));
    }
    if let Some(t) = lin(c.v00 + c.v01, c.v10 + c.v11) {
        pts.push((t, 1.0));
    }
    if let Some(t) = lin(c.v00, c.v01) {
        pts.push((0.0, t));
    }
    if let Some(t) = lin(c.v00 + c.v10, c.v01 + c.v11) {
        pts.push((1.0, t));
    }
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for p in pts {
        if !out.iter().any(|&q| close(p, q)) {
            out.push(p);
        }
    }
    out
}

/// Level-set pieces of one cell. Boundary crossings on the same side of the
/// hyperbola centre belong to the same branch; an isolated crossing is a
/// tangent corner touch and carries no piece.
fn cell_branches(c: &PixelCoefficients, v: f64) -> Vec<Branch> {
    let pts = side_points(c, v);
    if pts.len() < 2 {
        return Vec::new();
    }
    let mut groups: [Vec<(f64, f64)>; 2] = [Vec::new(), Vec::new()];
    let straight;
    if c.v11 == 0.0 {
        straight = true;
        groups[0] = pts;
    } else {
        let x0 = -c.v01 / c.v11;
        let y0 = -c.v10 / c.v11;
        let k = (v - c.v00) * c.v11 + c.v01 * c.v10;
        straight = k == 0.0;
        for p in pts {
            let g = if straight { ((p.0 - x0).abs() > (p.1 - y0).abs()) as usize } else { (p.0 > x0) as usize };
            groups[g].push(p);
        }
    }
    let mut out = Vec::new();
    for mut g in groups {
        if g.len() < 2 {
            continue;
        }
        g.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let (p, q) = (g[0], g[g.len() - 1]);
        out.push(Branch { p, q, by_x: (q.0 - p.0).abs() >= (q.1 - p.1).abs(), straight });
    }
    out
}

/// Level set of `value` inside a cell as sampled polylines (global
/// coordinates), `samples` points per branch including the exact endpoints.
pub fn isoline_in_cell(img: &Image, cell: LatticePoint, value: f64, samples: usize) -> Vec<Vec<ContinuousPoint>> {
    let c = img.coefficients(cell);
    let (ox, oy) = (cell.i as f64, cell.j as f64);
    cell_branches(&c, value)
        .into_iter()
        .map(|b| {
            let (u0, u1) = (b.main(b.p), b.main(b.q));
            let n = samples.max(2);
            (0..n)
                .map(|k| {
                    let pt = match k {
                        0 => b.p,
                        _ if k == n - 1 => b.q,
                        _ => b.at(&c, value, u0 + (u1 - u0) * k as f64 / (n - 1) as f64),
                    };
                    ContinuousPoint::new(ox + pt.0, oy + pt.1)
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Isoline {
    pub value: f64,
    pub points: Vec<ContinuousPoint>,
}

impl Isoline {
    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].dist(w[1])).sum()
    }
}

fn quarter(x: f64, y: f64) -> usize {
    match (y < x, y < 1.0 - x) {
        (true, true) => TRI_S,
        (true, false) => TRI_E,
        (false, false) => TRI_N,
        (false, true) => TRI_W,
    }
}

struct Tracer<'a> {
    img: &'a Image,
    part: &'a Partition,
    region: usize,
    face: u32,
    value: f64,
    samples: usize,
}

impl Tracer<'_> {
    fn cells_x(&self) -> usize {
        self.img.cells_x()
    }

    fn in_region(&self, cell: usize, x: f64, y: f64) -> bool {
        self.part.faces.face_of_triangle(cell * 4 + quarter(x, y)) == self.face
    }

    fn is_perimeter(&self, v: usize, d: Dir) -> bool {
        if self.img.step(v, d).is_none() {
            return false;
        }
        let (l, r) = self.part.faces.sides(v, d);
        (l == self.face) != (r == self.face)
    }

    /// Cells whose closed square contains `p`.
    fn cells_at(&self, p: ContinuousPoint) -> Vec<usize> {
        let (cx, cy) = (self.cells_x() as isize, self.img.cells_y() as isize);
        let xs: Vec<isize> = if p.x.fract() == 0.0 { vec![p.x as isize - 1, p.x as isize] } else { vec![p.x.floor() as isize] };
        let ys: Vec<isize> = if p.y.fract() == 0.0 { vec![p.y as isize - 1, p.y as isize] } else { vec![p.y.floor() as isize] };
        let mut out = Vec::new();
        for &j in &ys {
            for &i in &xs {
                if i >= 0 && j >= 0 && i < cx && j < cy {
                    out.push((j * cx + i) as usize);
                }
            }
        }
        out
    }

    fn local(&self, cell: usize, p: ContinuousPoint) -> (f64, f64) {
        let (ci, cj) = (cell % self.cells_x(), cell / self.cells_x());
        (p.x - ci as f64, p.y - cj as f64)
    }

    fn coef(&self, cell: usize) -> PixelCoefficients {
        self.img.coefficients(LatticePoint::new(cell % self.cells_x(), cell / self.cells_x()))
    }

    /// A branch through `p` in some cell other than `prev`, heading into the
    /// region. Returns the cell, the branch and the main coordinate of the far
    /// end to walk towards.
    fn continuation(&self, p: ContinuousPoint, prev: Option<usize>) -> Option<(usize, Branch, f64)> {
        for cell in self.cells_at(p) {
            if Some(cell) == prev {
                continue;
            }
            let c = self.coef(cell);
            let lp = self.local(cell, p);
            for b in cell_branches(&c, self.value) {
                if !b.contains(&c, self.value, lp) {
                    continue;
                }
                let u = b.main(lp);
                for end in [b.main(b.p), b.main(b.q)] {
                    if (end - u).abs() < 1e-12 {
                        continue;
                    }
                    let probe = b.at(&c, self.value, u + (end - u) * 1e-6);
                    if self.in_region(cell, probe.0, probe.1) {
                        return Some((cell, b, end));
                    }
                }
            }
        }
        None
    }

    /// First crossing of the branch with a perimeter diagonal of the cell,
    /// strictly after `u0` and up to `u1`.
    fn diagonal_stop(&self, cell: usize, c: &PixelCoefficients, b: &Branch, u0: f64, u1: f64) -> Option<(f64, f64)> {
        let w = self.img.width();
        let (ci, cj) = (cell % self.cells_x(), cell / self.cells_x());
        let v00 = cj * w + ci;
        let v = self.value;
        let mut best: Option<(f64, (f64, f64))> = None;
        let mut consider = |pt: (f64, f64)| {
            let u = b.main(pt);
            let fwd = (u - u0) * (u1 - u0).signum();
            if fwd > 1e-12 && fwd <= (u1 - u0).abs() + 1e-12 && b.contains(c, v, pt) && best.is_none_or(|(f, _)| fwd < f) {
                best = Some((fwd, pt));
            }
        };
        // Along the main diagonal (t, t) and the anti-diagonal (t, 1 - t) the
        // level condition is a quadratic in t.
        if self.is_perimeter(v00, Dir::NE) {
            for t in quadratic_roots(c.v11, c.v10 + c.v01, c.v00 - v) {
                consider((t, t));
            }
        }
        if self.is_perimeter(v00 + 1, Dir::NW) {
            for t in quadratic_roots(-c.v11, c.v10 - c.v01 + c.v11, c.v00 + c.v01 - v) {
                consider((t, 1.0 - t));
            }
        }
        best.map(|x| x.1)
    }

    fn at_perimeter(&self, p: ContinuousPoint) -> bool {
        let w = self.img.width();
        let on_x = p.x.fract() == 0.0;
        let on_y = p.y.fract() == 0.0;
        if on_x && on_y {
            let v = p.y as usize * w + p.x as usize;
            return Dir::ALL.iter().any(|&d| self.is_perimeter(v, d));
        }
        if on_y {
            let v = p.y as usize * w + p.x.floor() as usize;
            return self.is_perimeter(v, Dir::E);
        }
        if on_x {
            let v = p.y.floor() as usize * w + p.x as usize;
            return self.is_perimeter(v, Dir::N);
        }
        false
    }

    fn trace(&self, start: ContinuousPoint) -> Result<Isoline, RenderError> {
        let mut points = vec![start];
        let mut p = start;
        let mut prev = None;
        let limit = 4 * self.img.cell_count() + 8;
        for _ in 0..limit {
            let Some((cell, b, end)) = self.continuation(p, prev) else {
                if points.len() == 1 {
                    return Err(RenderError::NoContinuation { region: self.region, value: self.value, at: p });
                }
                return Ok(Isoline { value: self.value, points });
            };
            let c = self.coef(cell);
            let (ox, oy) = ((cell % self.cells_x()) as f64, (cell / self.cells_x()) as f64);
            let u0 = b.main(self.local(cell, p));
            let stop = self.diagonal_stop(cell, &c, &b, u0, end);
            let target = stop.unwrap_or(if (b.main(b.p) - end).abs() < 1e-15 { b.p } else { b.q });
            let u1 = b.main(target);
            let n = self.samples.max(2);
            for k in 1..n - 1 {
                let pt = b.at(&c, self.value, u0 + (u1 - u0) * k as f64 / (n - 1) as f64);
                points.push(ContinuousPoint::new(ox + pt.0, oy + pt.1));
            }
            p = ContinuousPoint::new(ox + target.0, oy + target.1);
            points.push(p);
            if stop.is_some() || self.at_perimeter(p) {
                return Ok(Isoline { value: self.value, points });
            }
            prev = Some(cell);
        }
        Err(RenderError::TooLong { region: self.region, value: self.value, steps: limit })
    }
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let mut out = Vec::new();
    if a == 0.0 {
        if b != 0.0 {
            out.push(-c / b);
        }
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            let q = -0.5 * (b + b.signum() * sq);
            if q != 0.0 {
                out.push(q / a);
                out.push(c / q);
            } else {
                out.push(0.0);
            }
        }
    }
    out.retain(|t| (-1e-12..=1.0 + 1e-12).contains(t));
    out.iter_mut().for_each(|t| *t = t.clamp(0.0, 1.0));
    out
}

/// Follows the isoline of `value` through `start` across the region until it
/// meets the region perimeter again.
pub fn trace_isoline(
    img: &Image,
    part: &Partition,
    region: usize,
    start: ContinuousPoint,
    value: f64,
    samples: usize,
) -> Result<Isoline, RenderError> {
    let r = &part.regions[region];
    let (lo, hi) = (img.get(r.min), img.get(r.max));
    if !(value > lo && value < hi) {
        return Err(RenderError::ValueOutOfRange { region, value });
    }
    Tracer { img, part, region, face: r.face as u32, value, samples }.trace(start)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DrawnEdge {
    pub edge: usize,
    pub region: usize,
    pub points: Vec<ContinuousPoint>,
    pub carry: f64,
    /// Set when a node isoline shrank to a point.
    pub degenerate: bool,
}

fn arc_params(pts: &[ContinuousPoint]) -> Vec<f64> {
    let mut s = vec![0.0];
    for w in pts.windows(2) {
        s.push(s.last().unwrap() + w[0].dist(w[1]));
    }
    let total = *s.last().unwrap();
    if total > 0.0 {
        s.iter_mut().for_each(|x| *x /= total);
    }
    s
}

fn at_param(pts: &[ContinuousPoint], s: &[f64], t: f64) -> ContinuousPoint {
    if pts.len() == 1 || s[s.len() - 1] == 0.0 {
        return pts[0];
    }
    let k = s.partition_point(|&x| x <= t).clamp(1, s.len() - 1);
    let span = s[k] - s[k - 1];
    let f = if span > 0.0 { ((t - s[k - 1]) / span).clamp(0.0, 1.0) } else { 0.0 };
    pts[k - 1].lerp(pts[k], f)
}

/// Blends two polylines by normalized arc length: `(1 - t) A(t) + t B(t)`.
pub fn blend(a: &[ContinuousPoint], b: &[ContinuousPoint]) -> Vec<ContinuousPoint> {
    let (sa, sb) = (arc_params(a), arc_params(b));
    let mut ts: Vec<f64> = sa.iter().chain(sb.iter()).copied().collect();
    ts.push(0.0);
    ts.push(1.0);
    ts.sort_by(f64::total_cmp);
    ts.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
    let n = ts.len();
    ts.into_iter()
        .enumerate()
        .map(|(k, t)| {
            if k == 0 {
                return a[0];
            }
            if k == n - 1 {
                return b[b.len() - 1];
            }
            let pa = at_param(a, &sa, t);
            let pb = at_param(b, &sb, t);
            ContinuousPoint::new((1.0 - t) * pa.x + t * pb.x, (1.0 - t) * pa.y + t * pb.y)
        })
        .collect()
}

fn node_isoline(img: &Image, part: &Partition, region: usize, node: &EdgeNode, samples: usize) -> (Vec<ContinuousPoint>, bool) {
    match trace_isoline(img, part, region, node.crossing, node.value, samples) {
        Ok(iso) if iso.points.len() >= 2 => (iso.points, false),
        _ => (vec![node.crossing], true),
    }
}

/// Draws one edge-graph link as the arc-length blend of its two node isolines,
/// oriented from the left node to the right node.
pub fn draw_edge(img: &Image, part: &Partition, eg: &EdgeGraph, edge: usize, samples: usize) -> DrawnEdge {
    let link = &eg.edges[edge];
    let (l, r) = (&eg.nodes[link.from], &eg.nodes[link.to]);
    let (a, da) = node_isoline(img, part, link.region, l, samples);
    let (mut b, db) = node_isoline(img, part, link.region, r, samples);
    b.reverse();
    DrawnEdge { edge, region: link.region, points: blend(&a, &b), carry: link.carry_size(), degenerate: da || db }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Colormap {
    Gray,
    #[default]
    Viridis,
    Hot,
}

impl FromStr for Colormap {
    type Err = RenderError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gray" | "grey" => Ok(Colormap::Gray),
            "viridis" => Ok(Colormap::Viridis),
            "hot" => Ok(Colormap::Hot),
            _ => Err(RenderError::UnknownColormap(s.to_string())),
        }
    }
}

const VIRIDIS: [(f64, f64, f64); 9] = [
    (68.0, 1.0, 84.0),
    (71.0, 44.0, 122.0),
    (59.0, 81.0, 139.0),
    (44.0, 113.0, 142.0),
    (33.0, 144.0, 141.0),
    (39.0, 173.0, 129.0),
    (92.0, 200.0, 99.0),
    (170.0, 220.0, 50.0),
    (253.0, 231.0, 37.0),
];

impl Colormap {
    pub fn color(self, t: f64) -> (u8, u8, u8) {
        let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
        let q = |x: f64| (x.clamp(0.0, 1.0) * 255.0).round() as u8;
        match self {
            Colormap::Gray => (q(t), q(t), q(t)),
            Colormap::Hot => (q(3.0 * t), q(3.0 * t - 1.0), q(3.0 * t - 2.0)),
            Colormap::Viridis => {
                let x = t * (VIRIDIS.len() - 1) as f64;
                let k = (x.floor() as usize).min(VIRIDIS.len() - 2);
                let f = x - k as f64;
                let (a, b) = (VIRIDIS[k], VIRIDIS[k + 1]);
                let mix = |p: f64, r: f64| (p + f * (r - p)).round() as u8;
                (mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layers {
    pub edges: bool,
    pub isolines: bool,
    pub graph: bool,
    pub image: bool,
    pub nodes: bool,
}

impl Default for Layers {
    fn default() -> Self {
        Layers { edges: true, isolines: false, graph: false, image: false, nodes: false }
    }
}

impl FromStr for Layers {
    type Err = RenderError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut l = Layers { edges: false, isolines: false, graph: false, image: false, nodes: false };
        for name in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
            match name {
                "edges" => l.edges = true,
                "isolines" => l.isolines = true,
                "graph" => l.graph = true,
                "image" => l.image = true,
                "nodes" => l.nodes = true,
                _ => return Err(RenderError::UnknownLayer(name.to_string())),
            }
        }
        Ok(l)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvgStyle {
    pub colormap: Colormap,
    /// Move lattice points to pixel centres.
    pub shift: bool,
    pub stroke_width: f64,
    pub layers: Layers,
}

impl Default for SvgStyle {
    fn default() -> Self {
        SvgStyle { colormap: Colormap::default(), shift: true, stroke_width: 0.08, layers: Layers::default() }
    }
}

/// Everything an SVG document may show. Absent parts are skipped even when
/// their layer is on.
#[derive(Debug, Clone, Copy)]
pub struct SvgScene<'a> {
    pub width: usize,
    pub height: usize,
    pub edges: &'a [DrawnEdge],
    pub isolines: &'a [Isoline],
    pub graph: Option<&'a SteepestGraph>,
    pub image: Option<&'a Image>,
    pub nodes: &'a [EdgeNode],
}

fn num(x: f64) -> String {
    let s = format!("{x:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn backdrop_png(img: &Image) -> Vec<u8> {
    let (lo, hi) = img.values().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let scale = if hi > lo { 255.0 / (hi - lo) } else { 0.0 };
    let bytes: Vec<u8> = img.values().iter().map(|&v| ((v - lo) * scale).round() as u8).collect();
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width() as u32, img.height() as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().expect("in-memory PNG header");
        w.write_image_data(&bytes).expect("in-memory PNG data");
    }
    out
}

/// Renders an SVG 1.1 document. Drawn edges are coloured by carry relative to
/// the largest carry in the scene.
pub fn render_svg(scene: &SvgScene, style: &SvgStyle) -> String {
    let off = if style.shift { 0.5 } else { 0.0 };
    let pt = |p: ContinuousPoint| format!("{},{}", num(p.x + off), num(p.y + off));
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" xmlns:xlink="http://www.w3.org/1999/xlink" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = scene.width,
        h = scene.height
    );
    if style.layers.image {
        if let Some(img) = scene.image {
            let data = base64::engine::general_purpose::STANDARD.encode(backdrop_png(img));
            let _ = writeln!(
                s,
                r#"<g id="image"><image x="0" y="0" width="{}" height="{}" preserveAspectRatio="none" style="image-rendering:pixelated" xlink:href="data:image/png;base64,{data}"/></g>"#,
                img.width(),
                img.height()
            );
        }
    }
    if style.layers.graph {
        if let Some(g) = scene.graph {
            let _ = writeln!(s, r##"<g id="graph" stroke="#888888" stroke-width="{}" fill="none">"##, num(style.stroke_width * 0.5));
            for e in g.edges() {
                let _ = writeln!(s, r#"<line x1="{}" y1="{}" x2="{}" y2="{}"/>"#, num(e.tail.i as f64 + off), num(e.tail.j as f64 + off), num(e.head.i as f64 + off), num(e.head.j as f64 + off));
            }
            let _ = writeln!(s, "</g>");
        }
    }
    if style.layers.isolines && !scene.isolines.is_empty() {
        let _ = writeln!(s, r##"<g id="isolines" stroke="#d04040" stroke-width="{}" fill="none">"##, num(style.stroke_width * 0.5));
        for iso in scene.isolines {
            let pts: Vec<String> = iso.points.iter().map(|&p| pt(p)).collect();
            let _ = writeln!(s, r#"<polyline points="{}"/>"#, pts.join(" "));
        }
        let _ = writeln!(s, "</g>");
    }
    if style.layers.edges {
        let max_carry = scene.edges.iter().map(|e| e.carry).fold(0.0f64, f64::max);
        let _ = writeln!(s, r#"<g id="edges" stroke-width="{}" fill="none" stroke-linecap="round">"#, num(style.stroke_width));
        for e in scene.edges {
            let t = if max_carry > 0.0 { e.carry / max_carry } else { 0.0 };
            let (r, g, b) = style.colormap.color(t);
            let pts: Vec<String> = e.points.iter().map(|&p| pt(p)).collect();
            let _ = writeln!(s, r##"<polyline stroke="#{r:02x}{g:02x}{b:02x}" points="{}"/>"##, pts.join(" "));
        }
        let _ = writeln!(s, "</g>");
    }
    if style.layers.nodes && !scene.nodes.is_empty() {
        let _ = writeln!(s, r##"<g id="nodes" fill="#2060d0">"##);
        for n in scene.nodes {
            let _ = writeln!(s, r#"<circle cx="{}" cy="{}" r="{}"/>"#, num(n.crossing.x + off), num(n.crossing.y + off), num(style.stroke_width * 1.5));
        }
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(a: f64, b: f64, c: f64, d: f64) -> Image {
        Image::from_rows(&[&[a, b], &[c, d]]).unwrap()
    }

    #[test]
    fn planar_cell_gives_a_vertical_segment() {
        let img = cell(0.0, 1.0, 0.0, 1.0);
        let pieces = isoline_in_cell(&img, LatticePoint::new(0, 0), 0.5, 8);
        assert_eq!(pieces.len(), 1);
        assert!(pieces[0].iter().all(|p| (p.x - 0.5).abs() < 1e-15));
        let ys: Vec<f64> = [pieces[0][0].y, pieces[0][7].y].to_vec();
        assert_eq!(ys, vec![0.0, 1.0]);
    }

    #[test]
    fn skewed_cell_branch_and_isolated_corner() {
        // The level 2 branch joins (0, 0.5) and (1/3, 0); the corner (1, 1)
        // has value 2 too, but only as an isolated touch.
        let img = cell(3.0, 0.0, 1.0, 2.0);
        let pieces = isoline_in_cell(&img, LatticePoint::new(0, 0), 2.0, 16);
        assert_eq!(pieces.len(), 1);
        let (first, last) = (pieces[0][0], *pieces[0].last().unwrap());
        let ends = [(first.x, first.y), (last.x, last.y)];
        assert!(ends.contains(&(0.0, 0.5)));
        assert!(ends.iter().any(|&(x, y)| (x - 1.0 / 3.0).abs() < 1e-15 && y == 0.0));
        let c = img.coefficients(LatticePoint::new(0, 0));
        for p in &pieces[0] {
            assert!((c.eval(p.x, p.y) - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn split_level_gives_two_crossing_lines() {
        let img = cell(1.0, 0.0, 0.0, 1.0);
        let mut pieces = isoline_in_cell(&img, LatticePoint::new(0, 0), 0.5, 4);
        pieces.sort_by(|a, b| a[0].x.total_cmp(&b[0].x));
        assert_eq!(pieces.len(), 2);
        assert!(pieces.iter().any(|p| p.iter().all(|q| q.x == 0.5)));
        assert!(pieces.iter().any(|p| p.iter().all(|q| q.y == 0.5)));
    }

    #[test]
    fn value_outside_range_is_empty() {
        let img = cell(0.0, 1.0, 2.0, 3.0);
        assert!(isoline_in_cell(&img, LatticePoint::new(0, 0), 5.0, 8).is_empty());
    }

    #[test]
    fn blend_endpoints_and_drift() {
        let a = vec![ContinuousPoint::new(0.0, 0.25), ContinuousPoint::new(1.0, 0.25)];
        let b = vec![ContinuousPoint::new(0.0, 0.75), ContinuousPoint::new(1.0, 0.75)];
        let d = blend(&a, &b);
        assert_eq!(d[0], a[0]);
        assert_eq!(*d.last().unwrap(), b[1]);
        let same = blend(&a, &a);
        assert_eq!(same, a);
        let mid = blend(&[a[0], ContinuousPoint::new(0.5, 0.25), a[1]], &b);
        assert!((mid[1].y - 0.5).abs() < 1e-15);
    }

    #[test]
    fn colormaps_and_layers_parse() {
        assert_eq!("hot".parse::<Colormap>().unwrap(), Colormap::Hot);
        assert!("jet".parse::<Colormap>().is_err());
        let l: Layers = "edges,graph".parse().unwrap();
        assert!(l.edges && l.graph && !l.image && !l.isolines);
        assert!("edges,sky".parse::<Layers>().is_err());
        assert_eq!(Colormap::Gray.color(1.0), (255, 255, 255));
        assert_eq!(Colormap::Viridis.color(0.0), (68, 1, 84));
    }

    #[test]
    fn empty_scene_is_valid_svg() {
        let scene = SvgScene { width: 4, height: 3, edges: &[], isolines: &[], graph: None, image: None, nodes: &[] };
        let s = render_svg(&scene, &SvgStyle::default());
        assert!(s.starts_with("<?xml"));
        assert!(s.contains("viewBox=\"0 0 4 3\""));
        assert!(s.trim_end().ends_with("</svg>"));
        assert!(!s.contains("<polyline"));
    }

    #[test]
    fn one_edge_one_polyline() {
        let e = DrawnEdge {
            edge: 0,
            region: 0,
            points: vec![ContinuousPoint::new(0.0, 0.0), ContinuousPoint::new(1.5, 2.0)],
            carry: 1.0,
            degenerate: false,
        };
        let scene = SvgScene { width: 4, height: 3, edges: std::slice::from_ref(&e), isolines: &[], graph: None, image: None, nodes: &[] };
        let s = render_svg(&scene, &SvgStyle { shift: false, ..SvgStyle::default() });
        assert_eq!(s.matches("<polyline").count(), 1);
        assert!(s.contains(r#"points="0,0 1.5,2""#));
        let shifted = render_svg(&scene, &SvgStyle::default());
        assert!(shifted.contains(r#"points="0.5,0.5 2,2.5""#));
        let none = render_svg(&scene, &SvgStyle { layers: "graph".parse().unwrap(), ..SvgStyle::default() });
        assert!(!none.contains("<polyline"));
    }
}
