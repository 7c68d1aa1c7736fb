//! JSON export, schema `isoedge-graph/1`.

use std::io;

use serde::Serialize;
use serde_json::ser::{CompactFormatter, Formatter};

use crate::edge::{EdgeGraph, EdgeLink, EdgeNode, RegionSides};
use crate::region::MonotonicRegion;
use crate::saddle::{MixPoint, SaddleSet, SplitPixel};
use crate::steepest::{GraphEdge, SteepestGraph};

pub const SCHEMA: &str = "isoedge-graph/1";

/// Compact output with every float in 17 significant digits.
struct RoundTrip;

impl Formatter for RoundTrip {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        write!(w, "{v:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        CompactFormatter.write_f64(w, v as f64)
    }
}

/// Streams `value` to `w` with the round-trip float format, then a newline.
pub fn write_json<T: Serialize + ?Sized, W: io::Write>(mut w: W, value: &T) -> io::Result<()> {
    let mut ser = serde_json::Serializer::with_formatter(&mut w, RoundTrip);
    value.serialize(&mut ser).map_err(io::Error::other)?;
    w.write_all(b"\n")
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut out = Vec::new();
    write_json(&mut out, value).expect("serializing to memory cannot fail");
    String::from_utf8(out).expect("serde_json emits UTF-8")
}

#[derive(Serialize)]
pub struct SaddleDoc<'a> {
    pub splits: &'a [SplitPixel],
    pub mixes: &'a [MixPoint],
}

impl<'a> From<&'a SaddleSet> for SaddleDoc<'a> {
    fn from(s: &'a SaddleSet) -> Self {
        SaddleDoc { splits: &s.splits, mixes: &s.mixes }
    }
}

#[derive(Serialize)]
pub struct GraphDoc {
    pub width: usize,
    pub height: usize,
    pub edges: Vec<GraphEdge>,
}

impl From<&SteepestGraph> for GraphDoc {
    fn from(g: &SteepestGraph) -> Self {
        GraphDoc { width: g.width(), height: g.height(), edges: g.edges() }
    }
}

#[derive(Serialize)]
pub struct EdgeGraphDoc<'a> {
    pub nodes: &'a [EdgeNode],
    pub edges: &'a [EdgeLink],
    pub sides: &'a [RegionSides],
}

impl<'a> From<&'a EdgeGraph> for EdgeGraphDoc<'a> {
    fn from(eg: &'a EdgeGraph) -> Self {
        EdgeGraphDoc { nodes: &eg.nodes, edges: &eg.edges, sides: &eg.sides }
    }
}

#[derive(Serialize)]
pub struct Document<'a, C: Serialize> {
    pub schema: &'static str,
    pub width: usize,
    pub height: usize,
    pub config: &'a C,
    pub saddles: SaddleDoc<'a>,
    pub graph: GraphDoc,
    pub regions: &'a [MonotonicRegion],
    pub edge_graph: EdgeGraphDoc<'a>,
    /// Node paths picked by the extraction policy.
    pub image_edges: &'a [Vec<usize>],
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_exactly() {
        let xs = [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0, 1.0];
        let s = to_json(&xs);
        assert!(s.starts_with("[1.0000000000000001e-1,"), "{s}");
        let back: Vec<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, xs);
    }

    #[test]
    fn non_finite_becomes_null() {
        assert_eq!(to_json(&[f64::NAN]), "[null]\n");
    }
}
