//! Seeded property campaign over random real-valued images.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::edge::{build_edge_graph, check_edge_graph, merge_parallel_edges};
use crate::export::to_json;
use crate::raster::{Dir, Image};
use crate::region::{partition_regions, partition_report, simplify_graph};
use crate::saddle::enumerate_saddles;
use crate::steepest::{build_steepest_graph, classify_extrema, verify_lemmas, GraphError, Lemma, LemmaReport, SteepestGraph};

/// Deliberate graph corruption, used to show the checks can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Adds the reverse of the first edge, closing a two-cycle.
    ReverseEdge,
    /// Deletes every incoming edge of the global maximum.
    DropInEdges,
}

impl FromStr for Fault {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "reverse-edge" => Ok(Fault::ReverseEdge),
            "drop-in-edges" => Ok(Fault::DropInEdges),
            _ => Err(format!("unknown fault {s:?} (expected reverse-edge or drop-in-edges)")),
        }
    }
}

fn inject(g: &mut SteepestGraph, img: &Image, fault: Fault) {
    match fault {
        Fault::ReverseEdge => {
            if let Some(e) = g.edges().first() {
                let (t, h) = (img.index(e.tail), img.index(e.head));
                let d = Dir::ALL.into_iter().find(|&d| img.step(h, d) == Some(t)).expect("edge endpoints are neighbours");
                g.insert(h, d, 4);
            }
        }
        Fault::DropInEdges => {
            let top = (0..img.len()).max_by(|&a, &b| img.cmp_idx(a, b)).expect("images are non-empty");
            for d in Dir::ALL {
                if let Some(q) = img.step(top, d) {
                    g.remove(q, d.opposite());
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Campaign {
    pub seed: u64,
    pub count: usize,
    pub min_size: usize,
    pub max_size: usize,
    /// Min-to-max walks certified per image.
    pub paths_per_image: usize,
    pub fault: Option<Fault>,
    #[serde(skip)]
    pub witness_dir: Option<PathBuf>,
}

impl Default for Campaign {
    fn default() -> Self {
        Campaign { seed: 1, count: 100, min_size: 4, max_size: 16, paths_per_image: 4, fault: None, witness_dir: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseViolation {
    pub image: usize,
    pub lemma: Lemma,
    pub witness: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct CampaignReport {
    pub images: usize,
    pub pixels: usize,
    pub paths_checked: usize,
    pub violations: Vec<CaseViolation>,
    pub witnesses: Vec<PathBuf>,
}

impl CampaignReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, lemma: Lemma) -> usize {
        self.violations.iter().filter(|v| v.lemma == lemma).count()
    }
}

impl fmt::Display for CampaignReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "images: {}  pixels: {}  paths checked: {}", self.images, self.pixels, self.paths_checked)?;
        if self.is_ok() {
            return writeln!(f, "PASS: no violations");
        }
        let mut lemmas: Vec<Lemma> = Vec::new();
        for v in &self.violations {
            if !lemmas.contains(&v.lemma) {
                lemmas.push(v.lemma);
            }
        }
        writeln!(f, "FAIL: {} violations", self.violations.len())?;
        for l in lemmas {
            writeln!(f, "  {l}: {}", self.count(l))?;
        }
        for v in self.violations.iter().take(10) {
            writeln!(f, "  image {} [{}] {}", v.image, v.lemma, v.witness)?;
        }
        Ok(())
    }
}

/// Image `k` of the campaign. Each case has its own stream, so any case can
/// be regenerated alone.
pub fn campaign_image(c: &Campaign, k: usize) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    rng.set_stream(k as u64);
    let (lo, hi) = (c.min_size.max(2), c.max_size.max(c.min_size.max(2)));
    let w = rng.random_range(lo..=hi);
    let h = rng.random_range(lo..=hi);
    let values = (0..w * h).map(|_| rng.random::<f64>()).collect();
    Image::new(w, h, values).expect("generated images are valid")
}

fn graph_failure(e: GraphError) -> (Lemma, String) {
    match e {
        GraphError::NoJoiningEdge(p) => (Lemma::SourcesAreMinima, format!("construction: {p:?} cannot be joined")),
        other => (Lemma::SourcesAreMinima, format!("construction: {other}")),
    }
}

/// Runs every check on one image.
pub fn check_image(img: &Image, paths: usize, seed: u64, fault: Option<Fault>) -> LemmaReport {
    let mut rep = LemmaReport::default();
    let s = enumerate_saddles(img);
    let e = classify_extrema(img, &s);
    let g = match build_steepest_graph(img, &s, &e) {
        Ok(g) => g,
        Err(err) => {
            let (l, w) = graph_failure(err);
            rep.push(l, w);
            return rep;
        }
    };
    if let Some(f) = fault {
        let mut bad = g.clone();
        inject(&mut bad, img, f);
        rep.merge(verify_lemmas(&bad, img, &s, &e, paths, seed));
    } else {
        rep.merge(verify_lemmas(&g, img, &s, &e, paths, seed));
    }
    let p = match partition_regions(&g, img, &s) {
        Ok(p) => p,
        Err(err) => {
            rep.push(Lemma::OneMinOneMax, err.to_string());
            return rep;
        }
    };
    rep.merge(partition_report(&p, img, &s));
    let (g2, p2) = match simplify_graph(&g, img, &s, &p) {
        Ok(x) => x,
        Err(err) => {
            rep.push(Lemma::OneMinOneMax, format!("after simplification: {err}"));
            return rep;
        }
    };
    rep.merge(partition_report(&p2, img, &s));
    match build_edge_graph(&g2, img, &s, &p2, true) {
        Ok(eg) => {
            rep.merge(check_edge_graph(&eg, &p2, img));
            match merge_parallel_edges(&eg, img, 2.0 / 3.0) {
                Ok(m) => rep.merge(check_edge_graph(&m, &p2, img)),
                Err(err) => rep.push(Lemma::SpanTiling, format!("merge: {err}")),
            }
        }
        Err(err) => rep.push(Lemma::SpanTiling, format!("edge model: {err}")),
    }
    rep
}

#[derive(Serialize)]
struct Witness<'a> {
    seed: u64,
    image: usize,
    width: usize,
    height: usize,
    values: &'a [f64],
    violations: &'a [CaseViolation],
}

fn dump_witness(dir: &Path, c: &Campaign, k: usize, img: &Image, v: &[CaseViolation]) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("witness-{}-{k}.json", c.seed));
    let doc = Witness { seed: c.seed, image: k, width: img.width(), height: img.height(), values: img.values(), violations: v };
    std::fs::write(&path, to_json(&doc))?;
    Ok(path)
}

/// Runs the campaign. Cases run in parallel; results are reported in case
/// order.
pub fn run_campaign(c: &Campaign) -> std::io::Result<CampaignReport> {
    let cases: Vec<(usize, usize, Vec<CaseViolation>)> = (0..c.count)
        .into_par_iter()
        .map(|k| {
            let img = campaign_image(c, k);
            let rep = check_image(&img, c.paths_per_image, c.seed ^ k as u64, c.fault);
            let v = rep.violations.into_iter().map(|v| CaseViolation { image: k, lemma: v.lemma, witness: v.witness }).collect();
            (img.len(), rep.paths_checked, v)
        })
        .collect();
    let mut report = CampaignReport { images: c.count, ..Default::default() };
    for (k, (px, paths, v)) in cases.into_iter().enumerate() {
        report.pixels += px;
        report.paths_checked += paths;
        if !v.is_empty() {
            if let Some(dir) = &c.witness_dir {
                report.witnesses.push(dump_witness(dir, c, k, &campaign_image(c, k), &v)?);
            }
            report.violations.extend(v);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_campaign_passes() {
        let r = run_campaign(&Campaign { count: 0, ..Default::default() }).unwrap();
        assert!(r.is_ok());
        assert_eq!(r.images, 0);
    }

    #[test]
    fn cases_are_reproducible_and_sized() {
        let c = Campaign { min_size: 3, max_size: 5, ..Default::default() };
        for k in 0..20 {
            let a = campaign_image(&c, k);
            assert_eq!(a, campaign_image(&c, k));
            assert!((3..=5).contains(&a.width()) && (3..=5).contains(&a.height()));
        }
        assert_ne!(campaign_image(&c, 0), campaign_image(&c, 1));
    }

    #[test]
    fn small_campaign_passes() {
        let r = run_campaign(&Campaign { count: 30, ..Default::default() }).unwrap();
        assert!(r.is_ok(), "{r}");
        assert!(r.paths_checked > 0);
    }

    #[test]
    fn faults_name_their_lemma() {
        let c = Campaign { count: 5, fault: Some(Fault::ReverseEdge), ..Default::default() };
        let r = run_campaign(&c).unwrap();
        assert!(r.count(Lemma::Acyclic) >= 5, "{r}");
        let c = Campaign { fault: Some(Fault::DropInEdges), ..c };
        let r = run_campaign(&c).unwrap();
        assert!(r.count(Lemma::SourcesAreMinima) >= 5, "{r}");
    }

    #[test]
    fn witnesses_are_written() {
        let dir = std::env::temp_dir().join(format!("isoedge-witness-{}", std::process::id()));
        let c = Campaign { count: 2, fault: Some(Fault::ReverseEdge), witness_dir: Some(dir.clone()), ..Default::default() };
        let r = run_campaign(&c).unwrap();
        assert_eq!(r.witnesses.len(), 2);
        let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&r.witnesses[0]).unwrap()).unwrap();
        assert_eq!(doc["values"].as_array().unwrap().len(), campaign_image(&c, 0).len());
        std::fs::remove_dir_all(dir).unwrap();
    }
}
