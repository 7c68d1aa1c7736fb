//! Extrema classification and the directed steepest graph.
//!
//! Construction runs in four passes:
//!
//! 1. the four sides of every split pixel, oriented from the two low corners
//!    to the two high ones;
//! 2. the four n4 edges at every mix point, with the same low-to-high rule;
//! 3. for every node that is not a local maximum, the edge to its
//!    `≺`-greatest admissible neighbour (the union of these is exactly the
//!    union of all discrete steepest paths);
//! 4. for every remaining source that is not a local minimum, an edge from its
//!    `≺`-least admissible neighbour whose diagonal does not cross a diagonal
//!    already in the graph.
//!
//! Edges from passes 1 and 2 are non-removable.

use std::collections::VecDeque;
use std::fmt;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::raster::{diagonal_cell, neighbor_mask, Dir, Image, LatticePoint};
use crate::saddle::SaddleSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Extremum {
    Regular,
    LocalMin,
    LocalMax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtremaClassification {
    pub tags: Vec<Extremum>,
}

impl ExtremaClassification {
    pub fn tag(&self, idx: usize) -> Extremum {
        self.tags[idx]
    }

    pub fn minima(&self) -> impl Iterator<Item = usize> + '_ {
        self.tags.iter().enumerate().filter(|(_, t)| **t == Extremum::LocalMin).map(|(k, _)| k)
    }

    pub fn maxima(&self) -> impl Iterator<Item = usize> + '_ {
        self.tags.iter().enumerate().filter(|(_, t)| **t == Extremum::LocalMax).map(|(k, _)| k)
    }
}

/// A point is a local maximum (minimum) when every admissible neighbour
/// precedes (follows) it.
pub fn classify_extrema(img: &Image, saddles: &SaddleSet) -> ExtremaClassification {
    let tags = (0..img.len())
        .into_par_iter()
        .map(|p| {
            let mask = neighbor_mask(img, p, saddles);
            let (mut any_above, mut any_below) = (false, false);
            for d in Dir::ALL {
                if mask & (1 << d as u8) != 0 {
                    let q = img.step(p, d).expect("mask is clipped");
                    if img.lower(p, q) {
                        any_above = true;
                    } else {
                        any_below = true;
                    }
                }
            }
            match (any_above, any_below) {
                (false, _) => Extremum::LocalMax,
                (true, false) => Extremum::LocalMin,
                _ => Extremum::Regular,
            }
        })
        .collect();
    ExtremaClassification { tags }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GraphEdge {
    pub tail: LatticePoint,
    pub head: LatticePoint,
    /// Construction pass that introduced the edge (1 to 4).
    pub step: u8,
    pub non_removable: bool,
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("source {0:?} is not a local minimum and has no admissible lower neighbour")]
    NoJoiningEdge(LatticePoint),
    #[error("source repair did not terminate after {0} iterations")]
    NoTermination(usize),
}

/// Directed planar lattice graph. Edges are stored at their tail, one slot per
/// direction; a slot holds the construction pass (0 means no edge).
#[derive(Debug, Clone, PartialEq)]
pub struct SteepestGraph {
    width: usize,
    height: usize,
    out: Vec<[u8; 8]>,
}

impl SteepestGraph {
    pub fn empty(width: usize, height: usize) -> Self {
        SteepestGraph { width, height, out: vec![[0; 8]; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn node_count(&self) -> usize {
        self.out.len()
    }

    #[inline]
    pub fn step_of(&self, tail: usize, d: Dir) -> u8 {
        self.out[tail][d as usize]
    }

    #[inline]
    pub fn has_out(&self, tail: usize, d: Dir) -> bool {
        self.out[tail][d as usize] != 0
    }

    #[inline]
    pub fn neighbor(&self, idx: usize, d: Dir) -> Option<usize> {
        let (di, dj) = d.offset();
        let i = (idx % self.width) as isize + di;
        let j = (idx / self.width) as isize + dj;
        (i >= 0 && j >= 0 && (i as usize) < self.width && (j as usize) < self.height)
            .then(|| j as usize * self.width + i as usize)
    }

    /// Whether the undirected segment from `idx` in direction `d` is an edge.
    #[inline]
    pub fn has_segment(&self, idx: usize, d: Dir) -> bool {
        self.has_out(idx, d) || self.neighbor(idx, d).is_some_and(|q| self.has_out(q, d.opposite()))
    }

    pub fn out_degree(&self, idx: usize) -> usize {
        self.out[idx].iter().filter(|s| **s != 0).count()
    }

    pub fn in_degree(&self, idx: usize) -> usize {
        Dir::ALL
            .iter()
            .filter(|&&d| self.neighbor(idx, d).is_some_and(|q| self.has_out(q, d.opposite())))
            .count()
    }

    pub fn successors(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        Dir::ALL.into_iter().filter(move |&d| self.has_out(idx, d)).filter_map(move |d| self.neighbor(idx, d))
    }

    pub fn predecessors(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        Dir::ALL
            .into_iter()
            .filter_map(move |d| self.neighbor(idx, d).filter(|&q| self.has_out(q, d.opposite())))
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(|s| s.iter().filter(|x| **x != 0).count()).sum()
    }

    fn point(&self, idx: usize) -> LatticePoint {
        LatticePoint::new(idx % self.width, idx / self.width)
    }

    /// Edges in tail-major, direction-minor order.
    pub fn edges(&self) -> Vec<GraphEdge> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (tail, slots) in self.out.iter().enumerate() {
            for d in Dir::ALL {
                let step = slots[d as usize];
                if step != 0 {
                    let head = self.neighbor(tail, d).expect("edges stay in bounds");
                    out.push(GraphEdge {
                        tail: self.point(tail),
                        head: self.point(head),
                        step,
                        non_removable: step <= 2,
                    });
                }
            }
        }
        out
    }

    /// Inserts an edge, keeping the earliest pass if it already exists.
    pub fn insert(&mut self, tail: usize, d: Dir, step: u8) {
        let slot = &mut self.out[tail][d as usize];
        if *slot == 0 || step < *slot {
            *slot = step;
        }
    }

    pub fn remove(&mut self, tail: usize, d: Dir) {
        self.out[tail][d as usize] = 0;
    }

    /// Removes the segment in whichever orientation it is stored.
    pub fn remove_segment(&mut self, idx: usize, d: Dir) {
        self.out[idx][d as usize] = 0;
        if let Some(q) = self.neighbor(idx, d) {
            self.out[q][d.opposite() as usize] = 0;
        }
    }

    /// Diagonal crossing diagonal `d` out of `idx` (same cell, other diagonal).
    fn crossing_diagonal_present(&self, idx: usize, d: Dir) -> bool {
        let (a, b) = match d {
            Dir::NE | Dir::SW => (Dir::N, Dir::E),
            _ => (Dir::N, Dir::W),
        };
        // The crossing diagonal joins the two remaining corners of the cell.
        let (u, v) = match d {
            Dir::NE => (self.neighbor(idx, a), self.neighbor(idx, b)),
            Dir::SW => (self.neighbor(idx, Dir::S), self.neighbor(idx, Dir::W)),
            Dir::NW => (self.neighbor(idx, a), self.neighbor(idx, b)),
            Dir::SE => (self.neighbor(idx, Dir::S), self.neighbor(idx, Dir::E)),
            _ => unreachable!(),
        };
        match (u, v) {
            (Some(u), Some(v)) => {
                let dd = direction_between(self.width, u, v);
                self.has_segment(u, dd)
            }
            _ => false,
        }
    }
}

pub(crate) fn direction_between(width: usize, from: usize, to: usize) -> Dir {
    let di = (to % width) as isize - (from % width) as isize;
    let dj = (to / width) as isize - (from / width) as isize;
    Dir::from_offset(di, dj).expect("adjacent lattice points")
}

fn orient(img: &Image, g: &mut SteepestGraph, u: usize, v: usize, step: u8) {
    let (tail, head) = if img.lower(u, v) { (u, v) } else { (v, u) };
    g.insert(tail, direction_between(img.width(), tail, head), step);
}

pub fn build_steepest_graph(
    img: &Image,
    saddles: &SaddleSet,
    extrema: &ExtremaClassification,
) -> Result<SteepestGraph, GraphError> {
    let w = img.width();
    let mut g = SteepestGraph::empty(w, img.height());

    for s in &saddles.splits {
        let a = img.index(s.cell);
        let (b, c, d) = (a + 1, a + w, a + w + 1);
        orient(img, &mut g, a, b, 1);
        orient(img, &mut g, a, c, 1);
        orient(img, &mut g, d, b, 1);
        orient(img, &mut g, d, c, 1);
    }
    for m in &saddles.mixes {
        let p = img.index(m.corner);
        for d in [Dir::E, Dir::W, Dir::N, Dir::S] {
            let q = img.step(p, d).expect("mix points are interior");
            orient(img, &mut g, p, q, 2);
        }
    }

    let best: Vec<Option<Dir>> = (0..img.len())
        .into_par_iter()
        .map(|p| {
            if extrema.tag(p) == Extremum::LocalMax {
                return None;
            }
            let mask = neighbor_mask(img, p, saddles);
            let mut best: Option<(Dir, usize)> = None;
            for d in Dir::ALL {
                if mask & (1 << d as u8) != 0 {
                    let q = img.step(p, d).expect("mask is clipped");
                    if best.is_none_or(|(_, b)| img.lower(b, q)) {
                        best = Some((d, q));
                    }
                }
            }
            best.map(|(d, _)| d)
        })
        .collect();
    for (p, d) in best.into_iter().enumerate() {
        if let Some(d) = d {
            g.insert(p, d, 3);
        }
    }

    repair_sources(img, saddles, extrema, &mut g)?;
    Ok(g)
}

fn repair_sources(
    img: &Image,
    saddles: &SaddleSet,
    extrema: &ExtremaClassification,
    g: &mut SteepestGraph,
) -> Result<(), GraphError> {
    let mut indeg = vec![0u8; img.len()];
    for p in 0..img.len() {
        for q in g.successors(p) {
            indeg[q] += 1;
        }
    }
    let limit = img.len() + 1;
    let mut iterations = 0;
    loop {
        let mut sources: Vec<usize> =
            (0..img.len()).filter(|&p| indeg[p] == 0 && extrema.tag(p) != Extremum::LocalMin).collect();
        if sources.is_empty() {
            return Ok(());
        }
        // Ascending (value, j, i).
        sources.sort_by(|&a, &b| img.at(a).total_cmp(&img.at(b)).then(a.cmp(&b)));
        for p in sources {
            iterations += 1;
            if iterations > limit {
                return Err(GraphError::NoTermination(limit));
            }
            if indeg[p] != 0 {
                continue;
            }
            let mask = neighbor_mask(img, p, saddles);
            let mut lowest: Option<(Dir, usize)> = None;
            for d in Dir::ALL {
                if mask & (1 << d as u8) == 0 {
                    continue;
                }
                if d.is_diagonal() && g.crossing_diagonal_present(p, d) {
                    continue;
                }
                let q = img.step(p, d).expect("mask is clipped");
                if img.lower(q, p) && lowest.is_none_or(|(_, l)| img.lower(q, l)) {
                    lowest = Some((d, q));
                }
            }
            let (d, q) = lowest.ok_or_else(|| GraphError::NoJoiningEdge(img.point(p)))?;
            g.insert(q, d.opposite(), 4);
            indeg[p] += 1;
        }
    }
}

/// Structural properties checked by [`verify_lemmas`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Lemma {
    Acyclic,
    Planar,
    SourcesAreMinima,
    SinksAreMaxima,
    SaddlesConnected,
    MonotoneEmbedding,
    OneMinOneMax,
    SaddleFreeInterior,
    AreaCoverage,
    SpanTiling,
    NonEmptyCarry,
    OneNodePerSpan,
    SharedSupports,
}

impl fmt::Display for Lemma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Lemma::Acyclic => "acyclic graph",
            Lemma::Planar => "planar graph",
            Lemma::SourcesAreMinima => "only minima are sources",
            Lemma::SinksAreMaxima => "only maxima are sinks",
            Lemma::SaddlesConnected => "saddles reach extrema",
            Lemma::MonotoneEmbedding => "monotone embedding of paths",
            Lemma::OneMinOneMax => "one minimum and one maximum per region",
            Lemma::SaddleFreeInterior => "saddle-free region interiors",
            Lemma::AreaCoverage => "regions tile the domain",
            Lemma::SpanTiling => "spans tile each side",
            Lemma::NonEmptyCarry => "non-empty carry",
            Lemma::OneNodePerSpan => "one node per span",
            Lemma::SharedSupports => "shared sides carry identical supports",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub lemma: Lemma,
    pub witness: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LemmaReport {
    pub violations: Vec<Violation>,
    /// Number of min-to-max paths whose edges were certified.
    pub paths_checked: usize,
}

impl LemmaReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn push(&mut self, lemma: Lemma, witness: impl Into<String>) {
        self.violations.push(Violation { lemma, witness: witness.into() });
    }

    pub fn merge(&mut self, other: LemmaReport) {
        self.violations.extend(other.violations);
        self.paths_checked += other.paths_checked;
    }
}

/// Per-edge monotonicity certificate: a side edge is monotone because `R` is
/// linear along it; a diagonal must not cross a split pixel.
pub fn edge_certified(img: &Image, saddles: &SaddleSet, tail: usize, d: Dir) -> bool {
    let Some(head) = img.step(tail, d) else { return false };
    if !img.lower(tail, head) {
        return false;
    }
    !d.is_diagonal() || !saddles.is_split_cell(diagonal_cell(img, tail, d))
}

/// Checks the structural lemmas the graph must satisfy. `path_samples`
/// min-to-max paths are walked (deterministically from `seed`) and every edge
/// on them is certified.
pub fn verify_lemmas(
    g: &SteepestGraph,
    img: &Image,
    saddles: &SaddleSet,
    extrema: &ExtremaClassification,
    path_samples: usize,
    seed: u64,
) -> LemmaReport {
    let mut report = LemmaReport::default();
    let n = g.node_count();

    // Acyclicity by Kahn's algorithm; on failure report a node on a cycle.
    let mut indeg: Vec<usize> = (0..n).map(|p| g.in_degree(p)).collect();
    let mut queue: VecDeque<usize> = (0..n).filter(|&p| indeg[p] == 0).collect();
    let mut seen = 0;
    while let Some(p) = queue.pop_front() {
        seen += 1;
        for q in g.successors(p) {
            indeg[q] -= 1;
            if indeg[q] == 0 {
                queue.push_back(q);
            }
        }
    }
    if seen != n {
        let witness = (0..n).find(|&p| indeg[p] > 0).map(|p| g.point(p)).expect("cycle exists");
        report.push(Lemma::Acyclic, format!("node {:?} lies on or behind a cycle", witness));
    }
    for p in 0..n {
        for q in g.successors(p) {
            if !img.lower(p, q) {
                report.push(Lemma::Acyclic, format!("edge {:?}->{:?} does not increase", g.point(p), g.point(q)));
            }
        }
    }

    // Planarity: at most one diagonal per cell.
    let w = g.width();
    for j in 0..g.height() - 1 {
        for i in 0..w - 1 {
            let a = j * w + i;
            if g.has_segment(a, Dir::NE) && g.has_segment(a + 1, Dir::NW) {
                report.push(Lemma::Planar, format!("crossing diagonals in cell ({i}, {j})"));
            }
        }
    }

    for p in 0..n {
        let tag = extrema.tag(p);
        if g.in_degree(p) == 0 && tag != Extremum::LocalMin {
            report.push(Lemma::SourcesAreMinima, format!("{:?} has no incoming edge", g.point(p)));
        }
        if g.out_degree(p) == 0 && tag != Extremum::LocalMax {
            report.push(Lemma::SinksAreMaxima, format!("{:?} has no outgoing edge", g.point(p)));
        }
    }

    // Every saddle representative reaches a maximum forward and a minimum backward.
    let mut reps: Vec<usize> = saddles.mixes.iter().map(|m| img.index(m.corner)).collect();
    for s in &saddles.splits {
        let a = img.index(s.cell);
        reps.extend([a, a + 1, a + w, a + w + 1]);
    }
    for r in reps {
        let up = walk(r, |x| g.successors(x).next(), n);
        let down = walk(r, |x| g.predecessors(x).next(), n);
        let fine = up.is_some_and(|x| extrema.tag(x) == Extremum::LocalMax)
            && down.is_some_and(|x| extrema.tag(x) == Extremum::LocalMin);
        if !fine {
            report.push(Lemma::SaddlesConnected, format!("saddle corner {:?} is stranded", g.point(r)));
        }
    }

    // Random min-to-max walks, each edge certified.
    let minima: Vec<usize> = extrema.minima().collect();
    let mut state = seed ^ 0x9E37_79B9_7F4A_7C15;
    let mut next_rand = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state
    };
    if !minima.is_empty() {
        for _ in 0..path_samples {
            let mut p = minima[(next_rand() % minima.len() as u64) as usize];
            let mut steps = 0;
            loop {
                let dirs: Vec<Dir> = Dir::ALL.into_iter().filter(|&d| g.has_out(p, d)).collect();
                if dirs.is_empty() {
                    if extrema.tag(p) != Extremum::LocalMax {
                        report.push(Lemma::MonotoneEmbedding, format!("walk stalled at {:?}", g.point(p)));
                    }
                    break;
                }
                let d = dirs[(next_rand() % dirs.len() as u64) as usize];
                if !edge_certified(img, saddles, p, d) {
                    report.push(Lemma::MonotoneEmbedding, format!("edge {:?} {:?} not certified", g.point(p), d));
                }
                p = g.neighbor(p, d).expect("edge in bounds");
                steps += 1;
                if steps > n {
                    report.push(Lemma::MonotoneEmbedding, "walk exceeded node count".to_string());
                    break;
                }
            }
            report.paths_checked += 1;
        }
    }
    report
}

fn walk(start: usize, next: impl Fn(usize) -> Option<usize>, limit: usize) -> Option<usize> {
    let mut p = start;
    for _ in 0..=limit {
        match next(p) {
            Some(q) => p = q,
            None => return Some(p),
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::saddle::enumerate_saddles;

    fn build(img: &Image) -> (SaddleSet, ExtremaClassification, SteepestGraph) {
        let s = enumerate_saddles(img);
        let e = classify_extrema(img, &s);
        let g = build_steepest_graph(img, &s, &e).unwrap();
        (s, e, g)
    }

    type Pair = ((usize, usize), (usize, usize), u8);

    fn pairs(g: &SteepestGraph) -> Vec<Pair> {
        let mut v: Vec<_> = g.edges().iter().map(|e| ((e.tail.i, e.tail.j), (e.head.i, e.head.j), e.step)).collect();
        v.sort();
        v
    }

    #[test]
    fn ramp_extrema() {
        let img = Image::from_rows(&[&[0.0, 1.0], &[2.0, 3.0]]).unwrap();
        let (_, e, _) = build(&img);
        assert_eq!(e.tags, vec![Extremum::LocalMin, Extremum::Regular, Extremum::Regular, Extremum::LocalMax]);
    }

    #[test]
    fn checkerboard_extrema_and_edges() {
        let img = Image::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        let (_, e, g) = build(&img);
        assert_eq!(e.tags, vec![Extremum::LocalMax, Extremum::LocalMin, Extremum::LocalMin, Extremum::LocalMax]);
        assert_eq!(
            pairs(&g),
            vec![((0, 1), (0, 0), 1), ((0, 1), (1, 1), 1), ((1, 0), (0, 0), 1), ((1, 0), (1, 1), 1)]
        );
    }

    #[test]
    fn constant_image_has_one_min_and_one_max() {
        let img = Image::new(3, 3, vec![4.0; 9]).unwrap();
        let (_, e, _) = build(&img);
        let mins: Vec<_> = e.minima().collect();
        let maxs: Vec<_> = e.maxima().collect();
        // Key 2i + 3j is smallest at (0,0) and largest at (2,2).
        assert_eq!(mins, vec![0]);
        assert_eq!(maxs, vec![8]);
    }

    #[test]
    fn ramp_graph_edges() {
        let img = Image::from_rows(&[&[0.0, 1.0], &[2.0, 3.0]]).unwrap();
        let (s, e, g) = build(&img);
        assert_eq!(
            pairs(&g),
            vec![
                ((0, 0), (0, 1), 4),
                ((0, 0), (1, 0), 4),
                ((0, 0), (1, 1), 3),
                ((0, 1), (1, 1), 3),
                ((1, 0), (1, 1), 3)
            ]
        );
        assert!(verify_lemmas(&g, &img, &s, &e, 10, 1).is_ok());
    }

    #[test]
    fn sources_equal_minima() {
        let img = Image::from_fn(9, 7, |i, j| ((i * 31 + j * 17) % 23) as f64 + 0.01 * i as f64).unwrap();
        let (_, e, g) = build(&img);
        let sources = (0..img.len()).filter(|&p| g.in_degree(p) == 0).count();
        assert_eq!(sources, e.minima().count());
    }

    #[test]
    fn reversed_edge_is_reported() {
        let img = Image::from_rows(&[&[0.0, 1.0], &[2.0, 3.0]]).unwrap();
        let (s, e, mut g) = build(&img);
        // (1,1) -> (1,0) closes a cycle with (1,0) -> (1,1).
        g.insert(3, Dir::S, 3);
        let r = verify_lemmas(&g, &img, &s, &e, 0, 0);
        assert!(r.violations.iter().any(|v| v.lemma == Lemma::Acyclic));
    }
}
