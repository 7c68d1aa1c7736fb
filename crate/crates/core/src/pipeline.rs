//! End-to-end detection with per-stage timing.

use std::fmt;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::edge::{build_edge_graph, extract_image_edge, merge_parallel_edges, EdgeError, EdgeGraph, ExtractPolicy};
use crate::export::{self, Document};
use crate::io::{load_image, ImageIoError};
use crate::raster::Image;
use crate::region::{partition_regions, simplify_graph, Partition, RegionError};
use crate::render::{draw_edge, render_svg, trace_isoline, Colormap, DrawnEdge, Isoline, Layers, SvgScene, SvgStyle};
use crate::saddle::{enumerate_saddles, SaddleSet};
use crate::steepest::{build_steepest_graph, classify_extrema, ExtremaClassification, GraphError, SteepestGraph};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Input(#[from] ImageIoError),
    #[error("cannot write {path}: {source}")]
    Write { path: String, source: std::io::Error },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Region(#[from] RegionError),
    #[error(transparent)]
    Edge(#[from] EdgeError),
}

impl Error {
    /// Errors that point at a bug rather than at bad input.
    pub fn is_internal(&self) -> bool {
        matches!(self, Error::Graph(_) | Error::Region(_) | Error::Edge(_))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineConfig {
    pub simplify: bool,
    pub merge_ratio: f64,
    pub include_type3: bool,
    pub carry_threshold: f64,
    pub samples_per_cell: usize,
    #[serde(skip)]
    pub layers: Layers,
    #[serde(skip)]
    pub colormap: Colormap,
    #[serde(skip)]
    pub svg_path: Option<PathBuf>,
    #[serde(skip)]
    pub json_path: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            simplify: true,
            merge_ratio: 2.0 / 3.0,
            include_type3: true,
            carry_threshold: 0.0,
            samples_per_cell: 8,
            layers: Layers::default(),
            colormap: Colormap::default(),
            svg_path: None,
            json_path: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(0.0..=1.0).contains(&self.merge_ratio) {
            return Err(Error::Config(format!("merge ratio {} is outside [0, 1]", self.merge_ratio)));
        }
        if self.carry_threshold.is_nan() || self.carry_threshold < 0.0 {
            return Err(Error::Config(format!("carry threshold {} is negative", self.carry_threshold)));
        }
        if self.samples_per_cell < 2 {
            return Err(Error::Config(format!("need at least 2 samples per cell, got {}", self.samples_per_cell)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Timings {
    pub pixels: usize,
    pub stages: Vec<(&'static str, Duration)>,
}

impl Timings {
    fn time<T>(&mut self, stage: &'static str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.stages.push((stage, t.elapsed()));
        out
    }

    pub fn get(&self, stage: &str) -> Option<Duration> {
        self.stages.iter().find(|(s, _)| *s == stage).map(|&(_, d)| d)
    }

    pub fn total(&self) -> Duration {
        self.stages.iter().map(|&(_, d)| d).sum()
    }

    pub fn per_mpixel(&self, d: Duration) -> f64 {
        d.as_secs_f64() * 1e6 / self.pixels.max(1) as f64
    }
}

impl fmt::Display for Timings {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>12} {:>14}", "stage", "ms", "s/Mpixel")?;
        for &(s, d) in self.stages.iter().chain(std::iter::once(&("total", self.total()))) {
            writeln!(f, "{s:<10} {:>12.3} {:>14.6}", d.as_secs_f64() * 1e3, self.per_mpixel(d))?;
        }
        Ok(())
    }
}

/// All intermediate results of one run.
#[derive(Debug, Clone)]
pub struct Detection {
    pub image: Image,
    pub saddles: SaddleSet,
    pub extrema: ExtremaClassification,
    pub graph: SteepestGraph,
    pub partition: Partition,
    pub edge_graph: EdgeGraph,
    pub image_edges: Vec<Vec<usize>>,
    pub timings: Timings,
}

pub fn detect(image: Image, cfg: &PipelineConfig) -> Result<Detection, Error> {
    cfg.validate()?;
    let mut tm = Timings { pixels: image.len(), stages: Vec::new() };
    let saddles = tm.time("saddles", || enumerate_saddles(&image));
    let extrema = tm.time("extrema", || classify_extrema(&image, &saddles));
    let graph = tm.time("graph", || build_steepest_graph(&image, &saddles, &extrema))?;
    let partition = tm.time("regions", || partition_regions(&graph, &image, &saddles))?;
    let (graph, partition) = if cfg.simplify {
        tm.time("simplify", || simplify_graph(&graph, &image, &saddles, &partition))?
    } else {
        (graph, partition)
    };
    let eg = tm.time("edges", || build_edge_graph(&graph, &image, &saddles, &partition, cfg.include_type3))?;
    let edge_graph = tm.time("merge", || merge_parallel_edges(&eg, &image, cfg.merge_ratio))?;
    let image_edges = tm.time("extract", || extract_image_edge(&edge_graph, ExtractPolicy::CarryThreshold(cfg.carry_threshold)));
    Ok(Detection { image, saddles, extrema, graph, partition, edge_graph, image_edges, timings: tm })
}

impl Detection {
    fn document<'a>(&'a self, cfg: &'a PipelineConfig) -> Document<'a, PipelineConfig> {
        Document {
            schema: export::SCHEMA,
            width: self.image.width(),
            height: self.image.height(),
            config: cfg,
            saddles: (&self.saddles).into(),
            graph: (&self.graph).into(),
            regions: &self.partition.regions,
            edge_graph: (&self.edge_graph).into(),
            image_edges: &self.image_edges,
        }
    }

    pub fn to_json(&self, cfg: &PipelineConfig) -> String {
        export::to_json(&self.document(cfg))
    }

    pub fn write_json(&self, cfg: &PipelineConfig, w: impl std::io::Write) -> std::io::Result<()> {
        export::write_json(w, &self.document(cfg))
    }

    /// Links whose carry reaches the threshold, drawn in link order.
    pub fn draw_edges(&self, cfg: &PipelineConfig) -> Vec<DrawnEdge> {
        let eg = &self.edge_graph;
        (0..eg.edges.len())
            .into_par_iter()
            .filter(|&e| eg.edges[e].carry_size() >= cfg.carry_threshold)
            .map(|e| draw_edge(&self.image, &self.partition, eg, e, cfg.samples_per_cell))
            .collect()
    }

    /// The isoline through every node crossing, once per adjacent region.
    pub fn node_isolines(&self, cfg: &PipelineConfig) -> Vec<Isoline> {
        self.edge_graph
            .nodes
            .par_iter()
            .flat_map_iter(|n| {
                [n.region_on_left, n.region_on_right].into_iter().flatten().filter_map(move |r| {
                    trace_isoline(&self.image, &self.partition, r, n.crossing, n.value, cfg.samples_per_cell).ok()
                })
            })
            .collect()
    }

    pub fn to_svg(&mut self, cfg: &PipelineConfig) -> String {
        let t = Instant::now();
        let edges = if cfg.layers.edges { self.draw_edges(cfg) } else { Vec::new() };
        let isolines = if cfg.layers.isolines { self.node_isolines(cfg) } else { Vec::new() };
        self.timings.stages.push(("draw", t.elapsed()));
        let style = SvgStyle { colormap: cfg.colormap, layers: cfg.layers, ..SvgStyle::default() };
        let scene = SvgScene {
            width: self.image.width(),
            height: self.image.height(),
            edges: &edges,
            isolines: &isolines,
            graph: Some(&self.graph),
            image: Some(&self.image),
            nodes: &self.edge_graph.nodes,
        };
        render_svg(&scene, &style)
    }
}

#[derive(Debug, Clone)]
pub struct DetectOutput {
    /// The JSON document, kept in memory only when no output path is set.
    pub json: Option<String>,
    pub svg: Option<String>,
    pub timings: Timings,
}

fn write_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Write { path: path.display().to_string(), source }
}

/// Loads `input`, runs every stage and writes the configured outputs. The SVG
/// is only rendered when an SVG path is set; with no paths at all the JSON is
/// returned instead.
pub fn run_detect(cfg: &PipelineConfig, input: impl AsRef<Path>) -> Result<DetectOutput, Error> {
    cfg.validate()?;
    let t = Instant::now();
    let image = load_image(input)?;
    let load = t.elapsed();
    let mut det = detect(image, cfg)?;
    det.timings.stages.insert(0, ("load", load));
    let json = match &cfg.json_path {
        Some(p) => {
            let f = std::fs::File::create(p).map_err(write_err(p))?;
            let mut w = std::io::BufWriter::new(f);
            det.write_json(cfg, &mut w).and_then(|_| w.flush()).map_err(write_err(p))?;
            None
        }
        None if cfg.svg_path.is_none() => Some(det.to_json(cfg)),
        None => None,
    };
    let svg = match &cfg.svg_path {
        Some(p) => {
            let s = det.to_svg(cfg);
            std::fs::write(p, &s).map_err(write_err(p))?;
            Some(s)
        }
        None => None,
    };
    Ok(DetectOutput { json, svg, timings: det.timings })
}
