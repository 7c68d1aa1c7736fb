//! The edge model: B-points and spans on region sides, one edge node per span,
//! and carry-matched links from left-side to right-side nodes.
//!
//! Region perimeters are cut into chains: maximal runs of non-collapsed
//! segments without junctions or value extrema. Every chain is monotone, is
//! stored in ascending order, and is shared by the (at most two) regions it
//! separates, so both regions see the same spans and the same nodes.

use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::raster::{eval_r, ContinuousPoint, Dir, Image, LatticePoint};
use crate::region::{is_segment, split_projections, Partition};
use crate::saddle::SaddleSet;
use crate::steepest::{direction_between, Lemma, LemmaReport, SteepestGraph};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EdgeError {
    #[error("unknown extraction policy {0:?} (expected \"threshold[:t]\" or \"greedy\")")]
    UnknownPolicy(String),
    #[error("merge ratio {0} outside [0, 1]")]
    BadRatio(f64),
    #[error("region {region} side does not decompose into chains at {at:?}")]
    BrokenSide { region: usize, at: LatticePoint },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BPointKind {
    /// Chain end at a value extremum of the perimeter.
    Extremum,
    /// Chain end where three or more chains meet.
    Junction,
    Split,
    Mix,
    /// Local minimum of the step slope.
    SlopeMin { slope: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BPoint {
    /// Arc length from the start of the chain.
    pub arc: f64,
    pub position: ContinuousPoint,
    pub value: f64,
    pub kind: BPointKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Chain {
    pub id: usize,
    /// Vertices in ascending order.
    pub vertices: Vec<LatticePoint>,
    /// Arc length at each vertex.
    pub arc: Vec<f64>,
    pub values: Vec<f64>,
    /// `|ΔI| / length` per step.
    pub slopes: Vec<f64>,
    pub bpoints: Vec<BPoint>,
    /// Region on the left when walking up the chain (the chain lies on its
    /// right path).
    pub region_on_left: Option<usize>,
    /// Region on the right when walking up the chain (its left path).
    pub region_on_right: Option<usize>,
}

impl Chain {
    pub fn length(&self) -> f64 {
        *self.arc.last().expect("chains have at least one step")
    }

    /// Index of the step containing arc position `s`.
    pub fn step_at(&self, s: f64) -> usize {
        let k = self.arc.partition_point(|&a| a <= s);
        k.saturating_sub(1).min(self.slopes.len() - 1)
    }

    pub fn point_at(&self, s: f64) -> ContinuousPoint {
        let k = self.step_at(s);
        let t = ((s - self.arc[k]) / (self.arc[k + 1] - self.arc[k])).clamp(0.0, 1.0);
        self.vertices[k].to_continuous().lerp(self.vertices[k + 1].to_continuous(), t)
    }

    /// Points of the chain polyline between two arc positions.
    pub fn polyline(&self, s0: f64, s1: f64) -> Vec<ContinuousPoint> {
        let mut out = vec![self.point_at(s0)];
        for k in 0..self.vertices.len() {
            if self.arc[k] > s0 && self.arc[k] < s1 {
                out.push(self.vertices[k].to_continuous());
            }
        }
        out.push(self.point_at(s1));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EdgeNode {
    pub id: usize,
    pub chain: usize,
    pub span: usize,
    /// Arc interval of the span on its chain.
    #[serde(skip)]
    pub arc: [f64; 2],
    /// Closed value interval covered by the span.
    pub support: [f64; 2],
    pub crossing: ContinuousPoint,
    #[serde(skip)]
    pub crossing_arc: f64,
    /// `R` at the crossing.
    pub value: f64,
    pub strength: f64,
    /// Largest step slope overlapping the span.
    #[serde(skip)]
    pub peak_slope: f64,
    pub region_on_left: Option<usize>,
    pub region_on_right: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EdgeLink {
    pub from: usize,
    pub to: usize,
    pub region: usize,
    pub carry: [f64; 2],
}

impl EdgeLink {
    pub fn carry_size(&self) -> f64 {
        self.carry[1] - self.carry[0]
    }
}

/// Chains making up one region's sides, each listed from Min to Max.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionSides {
    pub region: usize,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeGraph {
    pub chains: Vec<Chain>,
    pub sides: Vec<RegionSides>,
    pub nodes: Vec<EdgeNode>,
    pub edges: Vec<EdgeLink>,
    /// First node id of each chain; chain `c` owns `chain_start[c]..chain_start[c + 1]`.
    #[serde(skip)]
    pub chain_start: Vec<usize>,
}

impl EdgeGraph {
    pub fn chain_nodes(&self, c: usize) -> &[EdgeNode] {
        &self.nodes[self.chain_start[c]..self.chain_start[c + 1]]
    }

    pub fn out_edges(&self, n: usize) -> impl Iterator<Item = (usize, &EdgeLink)> {
        self.edges.iter().enumerate().filter(move |(_, e)| e.from == n)
    }

    /// Node ids along one side of a region, from Min to Max.
    pub fn side_nodes(&self, chains: &[usize]) -> Vec<usize> {
        chains.iter().flat_map(|&c| self.chain_start[c]..self.chain_start[c + 1]).collect()
    }
}

/// Slope-minimum B-point of the step, at its midpoint with the value clamped
/// to the step's endpoint range.
fn slope_min_bpoint(img: &Image, chain: &Chain, k: usize) -> BPoint {
    let a = chain.vertices[k].to_continuous();
    let b = chain.vertices[k + 1].to_continuous();
    let mid = a.lerp(b, 0.5);
    let (lo, hi) = (chain.values[k].min(chain.values[k + 1]), chain.values[k].max(chain.values[k + 1]));
    let value = eval_r(img, mid).expect("midpoint lies in the domain").clamp(lo, hi);
    BPoint {
        arc: 0.5 * (chain.arc[k] + chain.arc[k + 1]),
        position: mid,
        value,
        kind: BPointKind::SlopeMin { slope: chain.slopes[k] },
    }
}

fn kind_rank(k: &BPointKind) -> u8 {
    match k {
        BPointKind::Extremum | BPointKind::Junction => 0,
        BPointKind::Split => 1,
        BPointKind::Mix => 2,
        BPointKind::SlopeMin { .. } => 3,
    }
}

/// B-points along a chain: its two ends, projected splits and mix points on
/// it, and (optionally) interior slope minima. Sorted by arc, one per position.
pub fn compute_bpoints(img: &Image, saddles: &SaddleSet, chain: &Chain, include_type3: bool, end_kinds: [BPointKind; 2]) -> Vec<BPoint> {
    let w = img.width();
    let n = chain.vertices.len();
    let mut out = Vec::new();
    out.push(BPoint {
        arc: 0.0,
        position: chain.vertices[0].to_continuous(),
        value: chain.values[0],
        kind: end_kinds[0],
    });
    out.push(BPoint {
        arc: chain.length(),
        position: chain.vertices[n - 1].to_continuous(),
        value: chain.values[n - 1],
        kind: end_kinds[1],
    });
    for k in 0..n - 1 {
        let a = img.index(chain.vertices[k]);
        let b = img.index(chain.vertices[k + 1]);
        for p in split_projections(img, saddles, a, b) {
            let s = chain.arc[k] + chain.vertices[k].to_continuous().dist(p.position);
            out.push(BPoint { arc: s, position: p.position, value: p.value, kind: BPointKind::Split });
        }
        if k > 0 && saddles.is_mix_vertex(a) {
            out.push(BPoint { arc: chain.arc[k], position: chain.vertices[k].to_continuous(), value: chain.values[k], kind: BPointKind::Mix });
        }
        if include_type3 && k > 0 && k + 2 < n {
            let m = chain.slopes[k];
            if m < chain.slopes[k - 1] && m < chain.slopes[k + 1] {
                out.push(slope_min_bpoint(img, chain, k));
            }
        }
    }
    let _ = w;
    out.sort_by(|x, y| x.arc.total_cmp(&y.arc).then(kind_rank(&x.kind).cmp(&kind_rank(&y.kind))));
    out.dedup_by(|b, a| (b.arc - a.arc).abs() <= 1e-12);
    out
}

/// Weighted barycenter of the step slopes over a span, weights being slope
/// times overlap length. A span with no slope at all falls back to its arc
/// midpoint.
pub fn locate_crossing(chain: &Chain, s0: f64, s1: f64) -> (f64, f64) {
    let (mut num, mut den, mut peak) = (0.0, 0.0, 0.0f64);
    let mut k = chain.step_at(s0);
    while k < chain.slopes.len() && chain.arc[k] < s1 {
        let lo = chain.arc[k].max(s0);
        let hi = chain.arc[k + 1].min(s1);
        if hi > lo {
            let wk = chain.slopes[k] * (hi - lo);
            num += wk * 0.5 * (lo + hi);
            den += wk;
            peak = peak.max(chain.slopes[k]);
        }
        k += 1;
    }
    let s = if den > 0.0 { num / den } else { 0.5 * (s0 + s1) };
    (s.clamp(s0, s1), peak)
}

fn build_chain_nodes(img: &Image, chain: &Chain, first_id: usize) -> Vec<EdgeNode> {
    chain
        .bpoints
        .windows(2)
        .enumerate()
        .map(|(k, bp)| {
            let (s0, s1) = (bp[0].arc, bp[1].arc);
            let (s, peak) = locate_crossing(chain, s0, s1);
            let crossing = chain.point_at(s);
            let (lo, hi) = (bp[0].value.min(bp[1].value), bp[0].value.max(bp[1].value));
            EdgeNode {
                id: first_id + k,
                chain: chain.id,
                span: k,
                arc: [s0, s1],
                support: [lo, hi],
                crossing,
                crossing_arc: s,
                value: eval_r(img, crossing).expect("crossing on a chain"),
                strength: (hi - lo) / (s1 - s0),
                peak_slope: peak,
                region_on_left: chain.region_on_left,
                region_on_right: chain.region_on_right,
            }
        })
        .collect()
}

/// Links every left-side span to every right-side span of the same region
/// whose supports intersect (closed intervals).
fn link_region(nodes: &[EdgeNode], region: usize, left: &[usize], right: &[usize], out: &mut Vec<EdgeLink>) {
    let mut j0 = 0;
    for &l in left {
        let [llo, lhi] = nodes[l].support;
        while j0 < right.len() && nodes[right[j0]].support[1] < llo {
            j0 += 1;
        }
        let mut j = j0;
        while j < right.len() && nodes[right[j]].support[0] <= lhi {
            let r = right[j];
            let lo = llo.max(nodes[r].support[0]);
            let hi = lhi.min(nodes[r].support[1]);
            if lo <= hi {
                out.push(EdgeLink { from: l, to: r, region, carry: [lo, hi] });
            }
            j += 1;
        }
    }
}

fn assemble(img: &Image, chains: Vec<Chain>, sides: Vec<RegionSides>) -> EdgeGraph {
    let mut chain_start = Vec::with_capacity(chains.len() + 1);
    let mut acc = 0;
    for c in &chains {
        chain_start.push(acc);
        acc += c.bpoints.len() - 1;
    }
    chain_start.push(acc);
    let nodes: Vec<EdgeNode> = chains
        .par_iter()
        .zip(chain_start.par_iter())
        .flat_map_iter(|(c, &start)| build_chain_nodes(img, c, start))
        .collect();
    let per_region: Vec<Vec<EdgeLink>> = sides
        .par_iter()
        .map(|s| {
            let left: Vec<usize> = s.left.iter().flat_map(|&c| chain_start[c]..chain_start[c + 1]).collect();
            let right: Vec<usize> = s.right.iter().flat_map(|&c| chain_start[c]..chain_start[c + 1]).collect();
            let mut out = Vec::new();
            link_region(&nodes, s.region, &left, &right, &mut out);
            out
        })
        .collect();
    let edges = per_region.into_iter().flatten().collect();
    EdgeGraph { chains, sides, nodes, edges, chain_start }
}

/// Builds chains, B-points, spans, nodes and carry links for a partition.
pub fn build_edge_graph(
    g: &SteepestGraph,
    img: &Image,
    saddles: &SaddleSet,
    part: &Partition,
    include_type3: bool,
) -> Result<EdgeGraph, EdgeError> {
    let w = img.width();
    let n = img.len();
    let live = |v: usize, d: Dir| -> bool {
        if !is_segment(g, v, d) {
            return false;
        }
        let (l, r) = part.faces.sides(v, d);
        l != r && (part.region_of_face(l).is_some() || part.region_of_face(r).is_some())
    };
    let mut live_mask = vec![0u8; n];
    let mut degree = vec![0u8; n];
    for v in 0..n {
        for d in Dir::ALL {
            if g.neighbor(v, d).is_some() && live(v, d) {
                live_mask[v] |= 1 << d as u8;
                degree[v] += 1;
            }
        }
    }
    let lm = &live_mask;
    let dirs_of = move |v: usize| Dir::ALL.into_iter().filter(move |&d| lm[v] & (1 << d as u8) != 0);
    let is_break = |v: usize| -> bool {
        if degree[v] != 2 {
            return true;
        }
        let mut it = dirs_of(v);
        let a = g.neighbor(v, it.next().unwrap()).unwrap();
        let b = g.neighbor(v, it.next().unwrap()).unwrap();
        img.lower(v, a) == img.lower(v, b)
    };

    let mut used = vec![0u8; n];
    let mut raw: Vec<(Vec<usize>, [BPointKind; 2])> = Vec::new();
    let end_kind = |v: usize| if degree[v] >= 3 { BPointKind::Junction } else { BPointKind::Extremum };
    for start in 0..n {
        if degree[start] == 0 || !is_break(start) {
            continue;
        }
        for d in dirs_of(start).collect::<Vec<_>>() {
            if used[start] & (1 << d as u8) != 0 {
                continue;
            }
            let mut verts = vec![start];
            let (mut v, mut dir) = (start, d);
            loop {
                let q = g.neighbor(v, dir).unwrap();
                used[v] |= 1 << dir as u8;
                used[q] |= 1 << dir.opposite() as u8;
                verts.push(q);
                if is_break(q) {
                    break;
                }
                let back = dir.opposite();
                dir = dirs_of(q).find(|&x| x != back).expect("degree two");
                v = q;
            }
            if img.lower(*verts.last().unwrap(), verts[0]) {
                verts.reverse();
            }
            let kinds = [end_kind(verts[0]), end_kind(*verts.last().unwrap())];
            raw.push((verts, kinds));
        }
    }

    let mut seg_chain = vec![[u32::MAX; 8]; n];
    for (c, (verts, _)) in raw.iter().enumerate() {
        for win in verts.windows(2) {
            let d = direction_between(w, win[0], win[1]);
            seg_chain[win[0]][d as usize] = c as u32;
            seg_chain[win[1]][d.opposite() as usize] = c as u32;
        }
    }

    let chains: Vec<Chain> = raw
        .into_par_iter()
        .enumerate()
        .map(|(id, (verts, kinds))| {
            let mut arc = vec![0.0];
            let mut slopes = Vec::with_capacity(verts.len() - 1);
            for win in verts.windows(2) {
                let len = direction_between(w, win[0], win[1]).length();
                arc.push(arc.last().unwrap() + len);
                slopes.push((img.at(win[1]) - img.at(win[0])).abs() / len);
            }
            let d0 = direction_between(w, verts[0], verts[1]);
            let (l, r) = part.regions_of_segment(verts[0], d0);
            let mut chain = Chain {
                id,
                vertices: verts.iter().map(|&v| img.point(v)).collect(),
                arc,
                values: verts.iter().map(|&v| img.at(v)).collect(),
                slopes,
                bpoints: Vec::new(),
                region_on_left: l,
                region_on_right: r,
            };
            chain.bpoints = compute_bpoints(img, saddles, &chain, include_type3, kinds);
            chain
        })
        .collect();

    let chain_seq = |region: usize, path: &[LatticePoint]| -> Result<Vec<usize>, EdgeError> {
        let mut seq: Vec<usize> = Vec::new();
        for win in path.windows(2) {
            let (a, b) = (img.index(win[0]), img.index(win[1]));
            let c = seg_chain[a][direction_between(w, a, b) as usize];
            if c == u32::MAX {
                return Err(EdgeError::BrokenSide { region, at: win[0] });
            }
            if seq.last() != Some(&(c as usize)) {
                seq.push(c as usize);
            }
        }
        Ok(seq)
    };
    let sides = part
        .regions
        .iter()
        .map(|r| Ok(RegionSides { region: r.id, left: chain_seq(r.id, &r.left_path)?, right: chain_seq(r.id, &r.right_path)? }))
        .collect::<Result<Vec<_>, EdgeError>>()?;

    Ok(assemble(img, chains, sides))
}

/// Removes slope-minimum separations that are not deep enough relative to the
/// slope peaks of the two spans they separate, then rebuilds nodes and links.
///
/// A separation with minimum `m` between spans with peak slopes `p1`, `p2`
/// survives iff `m <= (1 - ratio) * min(p1, p2)`; spans are updated left to
/// right as merges happen. Other B-points always survive.
pub fn merge_parallel_edges(eg: &EdgeGraph, img: &Image, ratio: f64) -> Result<EdgeGraph, EdgeError> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(EdgeError::BadRatio(ratio));
    }
    let chains: Vec<Chain> = eg
        .chains
        .par_iter()
        .map(|c| {
            let mut kept: Vec<BPoint> = vec![c.bpoints[0]];
            let mut k = 1;
            while k < c.bpoints.len() {
                let bp = c.bpoints[k];
                if let BPointKind::SlopeMin { slope } = bp.kind {
                    let left_peak = locate_crossing(c, kept.last().unwrap().arc, bp.arc).1;
                    let next = c.bpoints[k + 1].arc;
                    let right_peak = locate_crossing(c, bp.arc, next).1;
                    if slope > (1.0 - ratio) * left_peak.min(right_peak) {
                        k += 1;
                        continue;
                    }
                }
                kept.push(bp);
                k += 1;
            }
            Chain { bpoints: kept, ..c.clone() }
        })
        .collect();
    Ok(assemble(img, chains, eg.sides.clone()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtractPolicy {
    /// Keep links whose carry is at least the threshold.
    CarryThreshold(f64),
    /// Grow paths from the strongest unused link along best-carry links.
    GreedyBestCarry,
}

impl FromStr for ExtractPolicy {
    type Err = EdgeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "greedy" => Ok(ExtractPolicy::GreedyBestCarry),
            None if s == "threshold" => Ok(ExtractPolicy::CarryThreshold(0.0)),
            Some(("threshold", t)) => t
                .parse::<f64>()
                .ok()
                .filter(|t| t.is_finite() && *t >= 0.0)
                .map(ExtractPolicy::CarryThreshold)
                .ok_or_else(|| EdgeError::UnknownPolicy(s.to_string())),
            _ => Err(EdgeError::UnknownPolicy(s.to_string())),
        }
    }
}

/// Decomposes the edge graph into node paths. A self-loop comes back as
/// `[n, n]`.
pub fn extract_image_edge(eg: &EdgeGraph, policy: ExtractPolicy) -> Vec<Vec<usize>> {
    let n = eg.nodes.len();
    let mut out_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut in_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    let admit = |e: &EdgeLink| match policy {
        ExtractPolicy::CarryThreshold(t) => e.carry_size() >= t,
        ExtractPolicy::GreedyBestCarry => e.carry_size() > 0.0,
    };
    for (k, e) in eg.edges.iter().enumerate() {
        if admit(e) {
            out_adj[e.from].push(k);
            in_adj[e.to].push(k);
        }
    }
    let by_carry = |a: &usize, b: &usize| {
        eg.edges[*b].carry_size().total_cmp(&eg.edges[*a].carry_size()).then(a.cmp(b))
    };
    for v in out_adj.iter_mut().chain(in_adj.iter_mut()) {
        v.sort_by(by_carry);
    }
    let mut used = vec![false; eg.edges.len()];
    let mut paths = Vec::new();
    match policy {
        ExtractPolicy::CarryThreshold(_) => {
            let mut indeg: Vec<usize> = in_adj.iter().map(|v| v.len()).collect();
            let starts: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0 && !out_adj[v].is_empty()).chain(0..n).collect();
            for s in starts {
                while let Some(&e0) = out_adj[s].iter().find(|&&e| !used[e]) {
                    let mut path = vec![s];
                    let mut e = e0;
                    loop {
                        used[e] = true;
                        let to = eg.edges[e].to;
                        indeg[to] -= 1;
                        path.push(to);
                        match out_adj[to].iter().find(|&&x| !used[x]) {
                            Some(&x) if to != s => e = x,
                            _ => break,
                        }
                    }
                    paths.push(path);
                }
            }
        }
        ExtractPolicy::GreedyBestCarry => {
            let mut order: Vec<usize> = (0..eg.edges.len()).filter(|&k| admit(&eg.edges[k])).collect();
            order.sort_by(by_carry);
            for seed in order {
                if used[seed] {
                    continue;
                }
                used[seed] = true;
                let e = eg.edges[seed];
                let mut path = std::collections::VecDeque::from([e.from, e.to]);
                let mut on_path = vec![e.from, e.to];
                if e.from != e.to {
                    let mut cur = e.to;
                    while let Some(&x) = out_adj[cur].iter().find(|&&x| !used[x] && !on_path.contains(&eg.edges[x].to)) {
                        used[x] = true;
                        cur = eg.edges[x].to;
                        on_path.push(cur);
                        path.push_back(cur);
                    }
                    let mut cur = e.from;
                    while let Some(&x) = in_adj[cur].iter().find(|&&x| !used[x] && !on_path.contains(&eg.edges[x].from)) {
                        used[x] = true;
                        cur = eg.edges[x].from;
                        on_path.push(cur);
                        path.push_front(cur);
                    }
                }
                paths.push(path.into_iter().collect());
            }
        }
    }
    paths
}

/// Edge-model invariants: spans tile `[Min, Max]` on both sides of every
/// region, each chain has one node per span, and every link carries a
/// non-empty interval inside both node supports.
pub fn check_edge_graph(eg: &EdgeGraph, part: &Partition, img: &Image) -> LemmaReport {
    let mut out = LemmaReport::default();
    for (c, chain) in eg.chains.iter().enumerate() {
        let have = eg.chain_start[c + 1] - eg.chain_start[c];
        if have + 1 != chain.bpoints.len() {
            out.push(Lemma::OneNodePerSpan, format!("chain {c} has {have} nodes and {} B-points", chain.bpoints.len()));
        }
        for n in eg.chain_nodes(c) {
            if n.chain != c {
                out.push(Lemma::SharedSupports, format!("node {} listed under chain {c}", n.id));
            }
        }
    }
    for (s, r) in eg.sides.iter().zip(&part.regions) {
        let (vmin, vmax) = (img.get(r.min), img.get(r.max));
        for (name, side) in [("left", &s.left), ("right", &s.right)] {
            let ids = eg.side_nodes(side);
            if ids.is_empty() {
                out.push(Lemma::SpanTiling, format!("region {} has no nodes on its {name} side", r.id));
                continue;
            }
            let mut cur = vmin;
            for &n in &ids {
                let sup = eg.nodes[n].support;
                if sup[0] != cur {
                    out.push(Lemma::SpanTiling, format!("region {} {name} side: gap at {cur}, next span starts at {}", r.id, sup[0]));
                }
                cur = sup[1];
            }
            if cur != vmax {
                out.push(Lemma::SpanTiling, format!("region {} {name} side ends at {cur}, max is {vmax}", r.id));
            }
        }
    }
    for (k, e) in eg.edges.iter().enumerate() {
        if e.carry.iter().any(|c| c.is_nan()) || e.carry[0] > e.carry[1] {
            out.push(Lemma::NonEmptyCarry, format!("link {k} has empty carry {:?}", e.carry));
        }
        for n in [e.from, e.to] {
            let s = eg.nodes[n].support;
            if e.carry[0] < s[0] || e.carry[1] > s[1] {
                out.push(Lemma::NonEmptyCarry, format!("link {k} carry {:?} leaves node {n} support {s:?}", e.carry));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_chain(values: &[f64]) -> Chain {
        let vertices: Vec<LatticePoint> = (0..values.len()).map(|j| LatticePoint::new(0, j)).collect();
        let arc = (0..values.len()).map(|k| k as f64).collect();
        let slopes = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        Chain {
            id: 0,
            vertices,
            arc,
            values: values.to_vec(),
            slopes,
            bpoints: Vec::new(),
            region_on_left: None,
            region_on_right: None,
        }
    }

    fn column(values: &[f64]) -> Image {
        let rows: Vec<Vec<f64>> = values.iter().map(|&v| vec![v, v + 10.0]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        Image::from_rows(&refs).unwrap()
    }

    fn ends() -> [BPointKind; 2] {
        [BPointKind::Extremum, BPointKind::Extremum]
    }

    #[test]
    fn no_interior_slope_minimum() {
        let v = [0.0, 0.1, 0.9, 1.0];
        let img = column(&v);
        let c = line_chain(&v);
        let b = compute_bpoints(&img, &SaddleSet::empty(&img), &c, true, ends());
        assert_eq!(b.len(), 2);
    }

    #[test]
    fn interior_slope_minimum_at_midpoint() {
        let v = [0.0, 0.5, 0.6, 1.0];
        let img = column(&v);
        let c = line_chain(&v);
        let b = compute_bpoints(&img, &SaddleSet::empty(&img), &c, true, ends());
        assert_eq!(b.len(), 3);
        assert_eq!(b[1].arc, 1.5);
        assert!((b[1].value - 0.55).abs() < 1e-15);
    }

    #[test]
    fn barycenter_example() {
        let c = line_chain(&[0.0, 1.0, 3.0]);
        let (s, peak) = locate_crossing(&c, 0.0, 2.0);
        assert!((s - 7.0 / 6.0).abs() < 1e-15);
        assert_eq!(peak, 2.0);
    }

    #[test]
    fn symmetric_tent_crossing_is_central() {
        let c = line_chain(&[0.0, 1.0, 3.0, 4.0]);
        assert!((locate_crossing(&c, 0.0, 3.0).0 - 1.5).abs() < 1e-15);
    }

    fn node(support: [f64; 2]) -> EdgeNode {
        EdgeNode {
            id: 0,
            chain: 0,
            span: 0,
            arc: [0.0, 2.0],
            support,
            crossing: ContinuousPoint::new(0.0, 0.0),
            crossing_arc: 0.0,
            value: 0.0,
            strength: (support[1] - support[0]) / 2.0,
            peak_slope: 0.0,
            region_on_left: None,
            region_on_right: None,
        }
    }

    #[test]
    fn strength_is_support_over_length() {
        assert!((node([0.2, 0.8]).strength - 0.3).abs() < 1e-15);
    }

    #[test]
    fn carry_matching() {
        let nodes = vec![node([0.0, 0.4]), node([0.4, 1.0]), node([0.0, 0.7]), node([0.7, 1.0])];
        let mut out = Vec::new();
        link_region(&nodes, 0, &[0, 1], &[2, 3], &mut out);
        let got: Vec<_> = out.iter().map(|e| (e.from, e.to, e.carry)).collect();
        assert_eq!(got, vec![(0, 2, [0.0, 0.4]), (1, 2, [0.4, 0.7]), (1, 3, [0.7, 1.0])]);
    }

    fn toy_graph(edges: &[(usize, usize, f64)], n: usize) -> EdgeGraph {
        EdgeGraph {
            chains: Vec::new(),
            sides: Vec::new(),
            nodes: (0..n).map(|_| node([0.0, 1.0])).collect(),
            edges: edges.iter().map(|&(f, t, c)| EdgeLink { from: f, to: t, region: 0, carry: [0.0, c] }).collect(),
            chain_start: Vec::new(),
        }
    }

    #[test]
    fn threshold_keeps_the_strong_chain() {
        let eg = toy_graph(&[(0, 1, 0.8), (1, 2, 0.8), (2, 3, 0.8), (4, 1, 0.01), (2, 5, 0.01)], 6);
        assert_eq!(extract_image_edge(&eg, ExtractPolicy::CarryThreshold(0.1)), vec![vec![0, 1, 2, 3]]);
        let greedy = extract_image_edge(&eg, ExtractPolicy::GreedyBestCarry);
        assert_eq!(greedy[0], vec![0, 1, 2, 3]);
    }

    #[test]
    fn self_loop_is_a_closed_path() {
        let eg = toy_graph(&[(3, 3, 0.5)], 4);
        assert_eq!(extract_image_edge(&eg, ExtractPolicy::CarryThreshold(0.0)), vec![vec![3, 3]]);
        assert_eq!(extract_image_edge(&eg, ExtractPolicy::GreedyBestCarry), vec![vec![3, 3]]);
    }

    #[test]
    fn policy_parsing() {
        assert_eq!("greedy".parse::<ExtractPolicy>().unwrap(), ExtractPolicy::GreedyBestCarry);
        assert_eq!("threshold:0.25".parse::<ExtractPolicy>().unwrap(), ExtractPolicy::CarryThreshold(0.25));
        assert!("widest".parse::<ExtractPolicy>().is_err());
        assert!("threshold:-1".parse::<ExtractPolicy>().is_err());
    }

    #[test]
    fn merge_rule() {
        // Peaks 0.9 and 0.6 around a minimum: kept at 0.1, merged at 0.3.
        for (m, kept) in [(0.1, true), (0.3, false)] {
            let v = [0.0, 0.9, 0.9 + m, 1.5 + m];
            let img = column(&v);
            let mut c = line_chain(&v);
            c.bpoints = compute_bpoints(&img, &SaddleSet::empty(&img), &c, true, ends());
            assert_eq!(c.bpoints.len(), 3);
            let eg = assemble(&img, vec![c], Vec::new());
            let merged = merge_parallel_edges(&eg, &img, 2.0 / 3.0).unwrap();
            assert_eq!(merged.nodes.len(), if kept { 2 } else { 1 });
            assert_eq!(merge_parallel_edges(&eg, &img, 0.0).unwrap().nodes.len(), 2);
            assert_eq!(merge_parallel_edges(&eg, &img, 1.0).unwrap().nodes.len(), 1);
        }
    }
}
