//! Faces of the planar steepest graph and the monotonic regions they form.
//!
//! Segments are the graph edges plus the lattice sides along the domain frame.
//! Faces are found by flood fill over quarter triangles (each cell is cut by
//! both diagonals into south, east, north and west triangles); boundary loops
//! come from the half-edge walk that keeps the face on its left.

use serde::Serialize;
use thiserror::Error;

use crate::raster::{ContinuousPoint, Dir, Image, LatticePoint};
use crate::saddle::SaddleSet;
use crate::steepest::{direction_between, Lemma, LemmaReport, SteepestGraph};

pub(crate) const OUTSIDE: u32 = u32::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegionError {
    #[error("face {face} near {at:?}: {reason}")]
    StructuralViolation { face: usize, at: LatticePoint, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinMaxPath {
    pub nodes: Vec<LatticePoint>,
    /// Geometric length of each step, 1 or √2.
    pub step_lengths: Vec<f64>,
}

/// One path through every edge, built by walking back along the first
/// predecessor and forward along the first successor, preferring edges not yet
/// covered. Paths are emitted in tail-major, direction-minor edge order.
pub fn extract_min_max_paths(g: &SteepestGraph) -> Vec<MinMaxPath> {
    let w = g.width();
    let mut covered = vec![[false; 8]; g.node_count()];
    let mut paths = Vec::new();
    for tail in 0..g.node_count() {
        for d in Dir::ALL {
            if !g.has_out(tail, d) || covered[tail][d as usize] {
                continue;
            }
            let mut back = vec![tail];
            let mut p = tail;
            loop {
                let pred = Dir::ALL
                    .into_iter()
                    .filter_map(|e| g.neighbor(p, e).filter(|&q| g.has_out(q, e.opposite())).map(|q| (q, e.opposite())))
                    .min_by_key(|&(q, e)| (covered[q][e as usize], e as usize));
                match pred {
                    Some((q, _)) => {
                        back.push(q);
                        p = q;
                    }
                    None => break,
                }
            }
            back.reverse();
            let mut nodes = back;
            let mut p = tail;
            let mut e = d;
            loop {
                p = g.neighbor(p, e).expect("edge in bounds");
                nodes.push(p);
                match Dir::ALL.into_iter().filter(|&x| g.has_out(p, x)).min_by_key(|&x| (covered[p][x as usize], x as usize)) {
                    Some(x) => e = x,
                    None => break,
                }
            }
            for win in nodes.windows(2) {
                let dd = direction_between(w, win[0], win[1]);
                covered[win[0]][dd as usize] = true;
            }
            let step_lengths = nodes.windows(2).map(|win| direction_between(w, win[0], win[1]).length()).collect();
            let nodes = nodes.into_iter().map(|k| LatticePoint::new(k % w, k / w)).collect();
            paths.push(MinMaxPath { nodes, step_lengths });
        }
    }
    paths
}

/// Whether `(v, d)` is a side of the domain frame.
#[inline]
pub(crate) fn is_frame(w: usize, h: usize, v: usize, d: Dir) -> bool {
    let (i, j) = (v % w, v / w);
    match d {
        Dir::E => (j == 0 || j == h - 1) && i + 1 < w,
        Dir::W => (j == 0 || j == h - 1) && i > 0,
        Dir::N => (i == 0 || i == w - 1) && j + 1 < h,
        Dir::S => (i == 0 || i == w - 1) && j > 0,
        _ => false,
    }
}

#[inline]
pub(crate) fn is_segment(g: &SteepestGraph, v: usize, d: Dir) -> bool {
    g.has_segment(v, d) || is_frame(g.width(), g.height(), v, d)
}

#[inline]
pub(crate) fn twin(g: &SteepestGraph, h: u32) -> u32 {
    let (v, d) = split_half(h);
    let q = g.neighbor(v, d).expect("half-edge in bounds");
    (q * 8 + d.opposite() as usize) as u32
}

#[inline]
pub(crate) fn split_half(h: u32) -> (usize, Dir) {
    ((h / 8) as usize, Dir::from_index((h % 8) as usize))
}

/// Next half-edge around the face on the left of `h`.
#[inline]
fn next_half(g: &SteepestGraph, h: u32) -> u32 {
    let (v, d) = split_half(h);
    let w = g.neighbor(v, d).expect("half-edge in bounds");
    let rev = d.opposite() as usize;
    for k in 1..=8 {
        let d2 = Dir::from_index((rev + 8 - k) & 7);
        if is_segment(g, w, d2) {
            return (w * 8 + d2 as usize) as u32;
        }
    }
    unreachable!("the reverse half-edge always exists")
}

/// Quarter triangle labels: face id per triangle, `tri = cell * 4 + q` with
/// `q` in south, east, north, west order.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceMap {
    width: usize,
    height: usize,
    tri_face: Vec<u32>,
    face_tris: Vec<u32>,
}

pub const TRI_S: usize = 0;
pub const TRI_E: usize = 1;
pub const TRI_N: usize = 2;
pub const TRI_W: usize = 3;

impl FaceMap {
    pub fn build(g: &SteepestGraph) -> FaceMap {
        let (w, h) = (g.width(), g.height());
        let (cx, cy) = (w - 1, h - 1);
        let n = cx * cy * 4;
        let mut tri_face = vec![OUTSIDE; n];
        let mut face_tris = Vec::new();
        let mut stack = Vec::new();
        for start in 0..n {
            if tri_face[start] != OUTSIDE {
                continue;
            }
            let face = face_tris.len() as u32;
            let mut count = 0u32;
            tri_face[start] = face;
            stack.push(start);
            while let Some(t) = stack.pop() {
                count += 1;
                let cell = t / 4;
                let (ci, cj) = (cell % cx, cell / cx);
                let v00 = cj * w + ci;
                let main = g.has_segment(v00, Dir::NE);
                let anti = g.has_segment(v00 + 1, Dir::NW);
                let mut push = |u: usize| {
                    if tri_face[u] == OUTSIDE {
                        tri_face[u] = face;
                        stack.push(u);
                    }
                };
                let base = cell * 4;
                match t % 4 {
                    TRI_S => {
                        if !anti {
                            push(base + TRI_E);
                        }
                        if !main {
                            push(base + TRI_W);
                        }
                        if cj > 0 && !g.has_segment(v00, Dir::E) {
                            push((cell - cx) * 4 + TRI_N);
                        }
                    }
                    TRI_E => {
                        if !anti {
                            push(base + TRI_S);
                        }
                        if !main {
                            push(base + TRI_N);
                        }
                        if ci + 1 < cx && !g.has_segment(v00 + 1, Dir::N) {
                            push((cell + 1) * 4 + TRI_W);
                        }
                    }
                    TRI_N => {
                        if !main {
                            push(base + TRI_E);
                        }
                        if !anti {
                            push(base + TRI_W);
                        }
                        if cj + 1 < cy && !g.has_segment(v00 + w, Dir::E) {
                            push((cell + cx) * 4 + TRI_S);
                        }
                    }
                    _ => {
                        if !anti {
                            push(base + TRI_N);
                        }
                        if !main {
                            push(base + TRI_S);
                        }
                        if ci > 0 && !g.has_segment(v00, Dir::N) {
                            push((cell - 1) * 4 + TRI_E);
                        }
                    }
                }
            }
            face_tris.push(count);
        }
        FaceMap { width: w, height: h, tri_face, face_tris }
    }

    pub fn face_count(&self) -> usize {
        self.face_tris.len()
    }

    #[inline]
    pub fn face_of_triangle(&self, tri: usize) -> u32 {
        self.tri_face[tri]
    }

    pub fn triangle_count(&self, face: usize) -> usize {
        self.face_tris[face] as usize
    }

    /// Triangle on the left of the half-edge `(v, d)`, if inside the domain.
    #[inline]
    pub fn left_triangle(&self, v: usize, d: Dir) -> Option<usize> {
        let (w, h) = (self.width, self.height);
        let (cx, cy) = (w - 1, h - 1);
        let (i, j) = (v % w, v / w);
        let cell = |ci: usize, cj: usize| (cj * cx + ci) * 4;
        match d {
            Dir::E => (j < cy).then(|| cell(i, j) + TRI_S),
            Dir::W => (j > 0).then(|| cell(i - 1, j - 1) + TRI_N),
            Dir::N => (i > 0).then(|| cell(i - 1, j) + TRI_E),
            Dir::S => (i < cx).then(|| cell(i, j - 1) + TRI_W),
            Dir::NE => Some(cell(i, j) + TRI_W),
            Dir::SW => Some(cell(i - 1, j - 1) + TRI_S),
            Dir::NW => Some(cell(i - 1, j) + TRI_W),
            Dir::SE => Some(cell(i, j - 1) + TRI_E),
        }
    }

    /// Face on the left of `(v, d)`, or [`OUTSIDE`].
    #[inline]
    pub fn left_face(&self, v: usize, d: Dir) -> u32 {
        self.left_triangle(v, d).map_or(OUTSIDE, |t| self.tri_face[t])
    }

    /// Faces on the left and right of the segment from `v` towards `d`.
    pub fn sides(&self, v: usize, d: Dir) -> (u32, u32) {
        let (di, dj) = d.offset();
        let q = ((v / self.width) as isize + dj) as usize * self.width + ((v % self.width) as isize + di) as usize;
        (self.left_face(v, d), self.left_face(q, d.opposite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PerimeterKind {
    Lattice,
    ProjectedSplit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerimeterPoint {
    pub position: ContinuousPoint,
    pub value: f64,
    pub kind: PerimeterKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicRegion {
    pub id: usize,
    #[serde(skip)]
    pub face: usize,
    pub min: LatticePoint,
    pub max: LatticePoint,
    /// Perimeter half with the region on its right, from min to max.
    #[serde(skip)]
    pub left_path: Vec<LatticePoint>,
    /// Perimeter half with the region on its left, from min to max.
    #[serde(skip)]
    pub right_path: Vec<LatticePoint>,
    /// Segments with this region on both sides (zero-width parts).
    #[serde(skip)]
    pub collapsed: Vec<[LatticePoint; 2]>,
    /// The non-collapsed perimeter counter-clockwise from `min`, with
    /// projected split points inserted, closed back at `min`.
    pub perimeter: Vec<PerimeterPoint>,
    /// Cells with at least one quarter triangle inside the region.
    #[serde(skip)]
    pub cells: Vec<LatticePoint>,
    pub area: f64,
    pub neighbors: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceKind {
    Outside,
    Region(usize),
    /// The single-pixel face around the split with this index.
    Dissolved(usize),
}

#[derive(Debug, Clone)]
pub struct Partition {
    pub regions: Vec<MonotonicRegion>,
    pub faces: FaceMap,
    face_kind: Vec<FaceKind>,
    pub(crate) face_loops: Vec<Vec<u32>>,
}

impl Partition {
    pub fn kind(&self, face: u32) -> FaceKind {
        if face == OUTSIDE {
            FaceKind::Outside
        } else {
            self.face_kind[face as usize]
        }
    }

    pub fn region_of_face(&self, face: u32) -> Option<usize> {
        match self.kind(face) {
            FaceKind::Region(r) => Some(r),
            _ => None,
        }
    }

    /// Regions on the left and right of the segment `(v, d)`.
    pub fn regions_of_segment(&self, v: usize, d: Dir) -> (Option<usize>, Option<usize>) {
        let (l, r) = self.faces.sides(v, d);
        (self.region_of_face(l), self.region_of_face(r))
    }

    pub fn dissolved_count(&self) -> usize {
        self.face_kind.iter().filter(|k| matches!(k, FaceKind::Dissolved(_))).count()
    }
}

/// Cancels adjacent twin pairs cyclically, leaving the non-collapsed loop.
pub(crate) fn reduce_loop(g: &SteepestGraph, hs: &[u32]) -> Vec<u32> {
    let mut out: Vec<u32> = Vec::with_capacity(hs.len());
    for &h in hs {
        if out.last().is_some_and(|&t| twin(g, t) == h) {
            out.pop();
        } else {
            out.push(h);
        }
    }
    let mut lo = 0;
    while out.len() - lo >= 2 && twin(g, out[lo]) == *out.last().unwrap() {
        lo += 1;
        out.pop();
    }
    out.drain(..lo);
    out
}

/// Positions of the cyclic strict local minima and maxima of the loop's
/// vertices under `≺`.
pub(crate) fn cyclic_extrema(img: &Image, verts: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let n = verts.len();
    let (mut mins, mut maxs) = (Vec::new(), Vec::new());
    for k in 0..n {
        let (p, c, q) = (verts[(k + n - 1) % n], verts[k], verts[(k + 1) % n]);
        if img.lower(c, p) && img.lower(c, q) {
            mins.push(k);
        } else if img.lower(p, c) && img.lower(q, c) {
            maxs.push(k);
        }
    }
    (mins, maxs)
}

pub(crate) fn is_unimodal(img: &Image, g: &SteepestGraph, hs: &[u32]) -> bool {
    let red = reduce_loop(g, hs);
    if red.len() < 2 {
        return false;
    }
    let verts: Vec<usize> = red.iter().map(|&h| split_half(h).0).collect();
    let (mins, maxs) = cyclic_extrema(img, &verts);
    mins.len() == 1 && maxs.len() == 1
}

/// Every boundary loop, grouped by the face on its left.
fn face_loops(g: &SteepestGraph, faces: &FaceMap) -> (Vec<Vec<Vec<u32>>>, Vec<Vec<u32>>) {
    let n = g.node_count();
    let mut seen = vec![0u8; n];
    let mut per_face: Vec<Vec<Vec<u32>>> = vec![Vec::new(); faces.face_count()];
    let mut outside = Vec::new();
    for v in 0..n {
        for d in Dir::ALL {
            if seen[v] & (1 << d as u8) != 0 || !is_segment(g, v, d) {
                continue;
            }
            let start = (v * 8 + d as usize) as u32;
            let mut hs = Vec::new();
            let mut h = start;
            loop {
                let (hv, hd) = split_half(h);
                seen[hv] |= 1 << hd as u8;
                hs.push(h);
                h = next_half(g, h);
                if h == start {
                    break;
                }
            }
            let face = faces.left_face(v, d);
            if face == OUTSIDE {
                outside.push(hs);
            } else {
                per_face[face as usize].push(hs);
            }
        }
    }
    (per_face, outside)
}

pub(crate) fn split_projections(img: &Image, saddles: &SaddleSet, a: usize, b: usize) -> Vec<PerimeterPoint> {
    let w = img.width();
    let d = direction_between(w, a, b);
    let lo = a.min(b);
    let (li, lj) = (lo % w, lo / w);
    let mut cells = Vec::with_capacity(2);
    match d {
        Dir::E | Dir::W => {
            if lj < img.cells_y() {
                cells.push(LatticePoint::new(li, lj));
            }
            if lj > 0 {
                cells.push(LatticePoint::new(li, lj - 1));
            }
        }
        Dir::N | Dir::S => {
            if li < img.cells_x() {
                cells.push(LatticePoint::new(li, lj));
            }
            if li > 0 {
                cells.push(LatticePoint::new(li - 1, lj));
            }
        }
        _ => return Vec::new(),
    }
    let pa = img.point(a).to_continuous();
    let pb = img.point(b).to_continuous();
    let mut pts: Vec<(f64, PerimeterPoint)> = cells
        .into_iter()
        .filter_map(|c| saddles.split_at(c))
        .map(|s| {
            let position = match d {
                Dir::E | Dir::W => ContinuousPoint::new(s.split_point.x, pa.y),
                _ => ContinuousPoint::new(pa.x, s.split_point.y),
            };
            let t = pa.dist(position) / pa.dist(pb);
            (t, PerimeterPoint { position, value: s.split_value, kind: PerimeterKind::ProjectedSplit })
        })
        .collect();
    pts.sort_by(|x, y| x.0.total_cmp(&y.0));
    pts.into_iter().map(|x| x.1).collect()
}

fn shoelace(pts: &[ContinuousPoint]) -> f64 {
    let n = pts.len();
    (0..n).map(|k| pts[k].x * pts[(k + 1) % n].y - pts[(k + 1) % n].x * pts[k].y).sum::<f64>() / 2.0
}

/// Splits the domain into monotonic regions along the graph's faces.
pub fn partition_regions(g: &SteepestGraph, img: &Image, saddles: &SaddleSet) -> Result<Partition, RegionError> {
    let w = img.width();
    let faces = FaceMap::build(g);
    let (mut per_face, _outside) = face_loops(g, &faces);
    let nf = faces.face_count();

    let mut face_kind = vec![FaceKind::Outside; nf];
    let mut cells_of_face: Vec<Vec<LatticePoint>> = vec![Vec::new(); nf];
    let cx = img.cells_x();
    for cell in 0..img.cell_count() {
        let mut last = OUTSIDE;
        for q in 0..4 {
            let f = faces.face_of_triangle(cell * 4 + q);
            if f != last && !cells_of_face[f as usize].last().is_some_and(|c| c.j * cx + c.i == cell) {
                cells_of_face[f as usize].push(LatticePoint::new(cell % cx, cell / cx));
            }
            last = f;
        }
    }

    let mut next_region = 0;
    for f in 0..nf {
        let cells = &cells_of_face[f];
        let split = if faces.triangle_count(f) == 4 && cells.len() == 1 { saddles.split_index(cells[0]) } else { None };
        face_kind[f] = match split {
            Some(k) => FaceKind::Dissolved(k),
            None => {
                next_region += 1;
                FaceKind::Region(next_region - 1)
            }
        };
    }

    let mut regions = Vec::with_capacity(next_region);
    let mut loops = Vec::with_capacity(nf);
    for f in 0..nf {
        let ls = std::mem::take(&mut per_face[f]);
        let at = cells_of_face[f].first().copied().unwrap_or(LatticePoint::new(0, 0));
        if ls.len() != 1 {
            return Err(RegionError::StructuralViolation {
                face: f,
                at,
                reason: format!("face has {} boundary loops", ls.len()),
            });
        }
        let full = ls.into_iter().next().unwrap();
        if let FaceKind::Region(id) = face_kind[f] {
            regions.push(assemble_region(g, img, saddles, &faces, &face_kind, f, id, &full, &cells_of_face[f])?);
        }
        loops.push(full);
    }
    let _ = w;
    Ok(Partition { regions, faces, face_kind, face_loops: loops })
}

#[allow(clippy::too_many_arguments)]
fn assemble_region(
    g: &SteepestGraph,
    img: &Image,
    saddles: &SaddleSet,
    faces: &FaceMap,
    face_kind: &[FaceKind],
    face: usize,
    id: usize,
    full: &[u32],
    cells: &[LatticePoint],
) -> Result<MonotonicRegion, RegionError> {
    let w = img.width();
    let pt = |v: usize| LatticePoint::new(v % w, v / w);
    let red = reduce_loop(g, full);
    let verts: Vec<usize> = red.iter().map(|&h| split_half(h).0).collect();
    let (mins, maxs) = cyclic_extrema(img, &verts);
    let at = cells.first().copied().unwrap_or(LatticePoint::new(0, 0));
    if mins.len() != 1 || maxs.len() != 1 {
        return Err(RegionError::StructuralViolation {
            face,
            at,
            reason: format!("perimeter has {} minima and {} maxima", mins.len(), maxs.len()),
        });
    }
    let n = verts.len();
    let (kmin, kmax) = (mins[0], maxs[0]);
    let mut right_path = Vec::new();
    let mut k = kmin;
    loop {
        right_path.push(pt(verts[k]));
        if k == kmax {
            break;
        }
        k = (k + 1) % n;
    }
    let mut left_path = Vec::new();
    let mut k = kmin;
    loop {
        left_path.push(pt(verts[k]));
        if k == kmax {
            break;
        }
        k = (k + n - 1) % n;
    }

    let mut perimeter = Vec::with_capacity(n + 1);
    for s in 0..n {
        let a = verts[(kmin + s) % n];
        let b = verts[(kmin + s + 1) % n];
        perimeter.push(PerimeterPoint {
            position: pt(a).to_continuous(),
            value: img.at(a),
            kind: PerimeterKind::Lattice,
        });
        perimeter.extend(split_projections(img, saddles, a, b));
    }
    perimeter.push(perimeter[0]);

    let mut collapsed = Vec::new();
    let mut neighbors = Vec::new();
    for &h in full {
        let (v, d) = split_half(h);
        let q = g.neighbor(v, d).expect("in bounds");
        let right = faces.left_face(q, d.opposite());
        if right == face as u32 {
            if v < q {
                collapsed.push([pt(v), pt(q)]);
            }
        } else if right != OUTSIDE {
            if let FaceKind::Region(r) = face_kind[right as usize] {
                neighbors.push(r);
            }
        }
    }
    neighbors.sort_unstable();
    neighbors.dedup();

    Ok(MonotonicRegion {
        id,
        face,
        min: pt(verts[kmin]),
        max: pt(verts[kmax]),
        left_path,
        right_path,
        collapsed,
        perimeter,
        cells: cells.to_vec(),
        area: faces.triangle_count(face) as f64 * 0.25,
        neighbors,
    })
}

/// Checks that regions tile the domain and that their interiors are saddle
/// free. Returns human-readable violations.
pub fn check_partition(p: &Partition, img: &Image, saddles: &SaddleSet) -> Vec<String> {
    partition_report(p, img, saddles).violations.into_iter().map(|v| v.witness).collect()
}

/// Region-level lemmas: areas tile the domain, perimeters match areas, and no
/// split pixel or mix point sits inside a region.
pub fn partition_report(p: &Partition, img: &Image, saddles: &SaddleSet) -> LemmaReport {
    let mut out = LemmaReport::default();
    let total: f64 = p.regions.iter().map(|r| r.area).sum::<f64>() + p.dissolved_count() as f64;
    let expect = img.cell_count() as f64;
    if (total - expect).abs() > 1e-9 {
        out.push(Lemma::AreaCoverage, format!("region areas sum to {total}, domain is {expect}"));
    }
    for r in &p.regions {
        let poly: Vec<ContinuousPoint> = r.perimeter[..r.perimeter.len() - 1].iter().map(|q| q.position).collect();
        let a = shoelace(&poly);
        // Collapsed parts add no area, so the reduced perimeter must match.
        if (a - r.area).abs() > 1e-9 {
            out.push(Lemma::AreaCoverage, format!("region {} shoelace area {a} differs from {}", r.id, r.area));
        }
        let lo = r.perimeter.iter().filter(|q| q.value < img.get(r.min)).count();
        let hi = r.perimeter.iter().filter(|q| q.value > img.get(r.max)).count();
        if lo + hi > 0 {
            out.push(Lemma::OneMinOneMax, format!("region {} perimeter leaves [min, max]", r.id));
        }
        for c in &r.cells {
            if saddles.split_at(*c).is_some() {
                out.push(Lemma::SaddleFreeInterior, format!("region {} contains split pixel {:?}", r.id, c));
            }
        }
    }
    for m in &saddles.mixes {
        let v = img.index(m.corner);
        let around: Vec<u32> = Dir::ALL.iter().map(|&d| p.faces.left_face(v, d)).collect();
        let all_same = around.iter().all(|&f| f == around[0]);
        let bare = Dir::ALL.iter().all(|&d| !is_segment_in(p, v, d));
        if all_same && bare {
            out.push(Lemma::SaddleFreeInterior, format!("mix point {:?} is interior to a region", m.corner));
        }
    }
    out
}

fn is_segment_in(p: &Partition, v: usize, d: Dir) -> bool {
    let (l, r) = p.faces.sides(v, d);
    l != r
}

/// Merges adjacent regions across saddle-free removable shared paths until no
/// merge applies, then rebuilds the partition on the reduced graph.
pub fn simplify_graph(
    g: &SteepestGraph,
    img: &Image,
    saddles: &SaddleSet,
    part: &Partition,
) -> Result<(SteepestGraph, Partition), RegionError> {
    let nf = part.faces.face_count();
    let mut parent: Vec<u32> = (0..nf as u32).collect();
    fn find(parent: &mut [u32], mut x: u32) -> u32 {
        while parent[x as usize] != x {
            parent[x as usize] = parent[parent[x as usize] as usize];
            x = parent[x as usize];
        }
        x
    }
    let mut loops: Vec<Vec<u32>> = part.face_loops.clone();
    let mut removed = vec![0u8; g.node_count()];
    let is_region = |f: u32| matches!(part.kind(f), FaceKind::Region(_));

    let mut order: Vec<u32> = (0..nf as u32).filter(|&f| is_region(f)).collect();
    order.sort_by_key(|&f| part.region_of_face(f));

    loop {
        let mut changed = false;
        for &a0 in &order {
            if find(&mut parent, a0) != a0 {
                continue;
            }
            loop {
                let a = a0;
                let mut cands: Vec<u32> = loops[a as usize]
                    .iter()
                    .filter_map(|&h| {
                        let t = twin(g, h);
                        let (tv, td) = split_half(t);
                        let f = part.faces.left_face(tv, td);
                        (f != OUTSIDE).then_some(f)
                    })
                    .map(|f| find(&mut parent, f))
                    .filter(|&f| f != a && is_region(f))
                    .collect();
                cands.sort_unstable();
                cands.dedup();
                let mut merged = false;
                for b in cands {
                    if let Some(m) = try_merge(g, img, saddles, part, &mut parent, &loops, a, b) {
                        for &h in &m.shared {
                            let (v, d) = split_half(h);
                            removed[v] |= 1 << d as u8;
                        }
                        parent[b as usize] = a;
                        loops[a as usize] = m.merged;
                        loops[b as usize] = Vec::new();
                        merged = true;
                        changed = true;
                        break;
                    }
                }
                if !merged {
                    break;
                }
            }
        }
        if !changed {
            break;
        }
    }

    let mut out = g.clone();
    for (v, &mask) in removed.iter().enumerate() {
        for d in Dir::ALL {
            if mask & (1 << d as u8) != 0 {
                out.remove_segment(v, d);
            }
        }
    }
    let p = partition_regions(&out, img, saddles)?;
    Ok((out, p))
}

struct Merge {
    merged: Vec<u32>,
    shared: Vec<u32>,
}

#[allow(clippy::too_many_arguments)]
fn try_merge(
    g: &SteepestGraph,
    img: &Image,
    saddles: &SaddleSet,
    part: &Partition,
    parent: &mut [u32],
    loops: &[Vec<u32>],
    a: u32,
    b: u32,
) -> Option<Merge> {
    let face_root = |h: u32| {
        let t = twin(g, h);
        let (tv, td) = split_half(t);
        let f = part.faces.left_face(tv, td);
        if f == OUTSIDE {
            OUTSIDE
        } else {
            let mut x = f;
            while parent[x as usize] != x {
                x = parent[x as usize];
            }
            x
        }
    };
    let la = &loops[a as usize];
    let lb = &loops[b as usize];
    let mark_a: Vec<bool> = la.iter().map(|&h| face_root(h) == b).collect();
    let mark_b: Vec<bool> = lb.iter().map(|&h| face_root(h) == a).collect();
    let (sa, ea) = single_run(&mark_a)?;
    let (sb, eb) = single_run(&mark_b)?;
    let run_len = (ea + la.len() - sa) % la.len();
    if run_len == 0 || run_len == la.len() || run_len == lb.len() {
        return None;
    }
    let shared: Vec<u32> = (0..run_len).map(|k| la[(sa + k) % la.len()]).collect();
    for &h in &shared {
        let (v, d) = split_half(h);
        let q = g.neighbor(v, d).expect("in bounds");
        let (tail, dir) = if g.has_out(v, d) { (v, d) } else { (q, d.opposite()) };
        let step = g.step_of(tail, dir);
        if step == 0 || step <= 2 {
            return None;
        }
    }
    for &h in &shared[1..] {
        let v = split_half(h).0;
        if saddles.is_mix_vertex(v) {
            return None;
        }
    }
    let _ = sb;
    let mut merged = Vec::with_capacity(la.len() + lb.len() - 2 * run_len);
    for k in 0..la.len() - run_len {
        merged.push(la[(ea + k) % la.len()]);
    }
    let run_b = (eb + lb.len() - sb) % lb.len();
    if run_b != run_len {
        return None;
    }
    for k in 0..lb.len() - run_b {
        merged.push(lb[(eb + k) % lb.len()]);
    }
    if !is_unimodal(img, g, &merged) {
        return None;
    }
    Some(Merge { merged, shared })
}

/// Start and one-past-end (cyclic) of the single run of `true`, if there is
/// exactly one.
fn single_run(mark: &[bool]) -> Option<(usize, usize)> {
    let n = mark.len();
    let starts: Vec<usize> = (0..n).filter(|&k| mark[k] && !mark[(k + n - 1) % n]).collect();
    if starts.len() != 1 {
        return None;
    }
    let s = starts[0];
    let mut e = s;
    while mark[e % n] {
        e += 1;
    }
    Some((s, e % n))
}
