//! Edge detection from the topology of the bilinear interpolant of a grayscale
//! image.
//!
//! The pipeline runs saddle detection, steepest-graph construction, the
//! partition into monotonic regions, the edge graph with its carry function,
//! and finally extraction and rendering of image edges.

pub mod raster;
pub mod io;
pub mod saddle;
pub mod steepest;
pub mod region;
pub mod edge;
pub mod render;
pub mod export;
pub mod pipeline;
pub mod verify;

pub use raster::{ContinuousPoint, Dir, Image, LatticePoint, RasterError};
pub use io::{decode_image, encode_pgm, load_image, ImageIoError};
pub use saddle::{enumerate_saddles, MixPoint, SaddleSet, SplitPixel};
pub use steepest::{build_steepest_graph, classify_extrema, Extremum, SteepestGraph};
pub use region::{extract_min_max_paths, partition_regions, simplify_graph, MinMaxPath, MonotonicRegion, Partition};
pub use edge::{build_edge_graph, extract_image_edge, merge_parallel_edges, EdgeGraph, ExtractPolicy};
pub use render::{draw_edge, isoline_in_cell, render_svg, trace_isoline, DrawnEdge, Isoline, SvgScene, SvgStyle};
pub use pipeline::{detect, run_detect, DetectOutput, Detection, Error, PipelineConfig, Timings};
pub use verify::{run_campaign, Campaign, CampaignReport, Fault};
