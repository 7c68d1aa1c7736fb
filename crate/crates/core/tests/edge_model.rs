use isoedge::edge::check_edge_graph;
use isoedge::{
    build_edge_graph, build_steepest_graph, classify_extrema, enumerate_saddles, merge_parallel_edges, partition_regions,
    simplify_graph, Image,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn check(eg: &isoedge::EdgeGraph, part: &isoedge::Partition, img: &Image) -> Vec<String> {
    let mut out: Vec<String> =
        check_edge_graph(eg, part, img).violations.into_iter().map(|v| format!("{}: {}", v.lemma, v.witness)).collect();
    for n in &eg.nodes {
        if n.strength.is_nan() || n.strength <= 0.0 {
            out.push(format!("node {} strength {}", n.id, n.strength));
        }
    }
    out
}

#[test]
fn random_edge_graphs_satisfy_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut failures = Vec::new();
    for k in 0..400 {
        let (w, h) = (rng.random_range(2..17), rng.random_range(2..17));
        let vals: Vec<f64> = (0..w * h).map(|_| rng.random::<f64>()).collect();
        let img = Image::new(w, h, vals).unwrap();
        let s = enumerate_saddles(&img);
        let e = classify_extrema(&img, &s);
        let g = build_steepest_graph(&img, &s, &e).unwrap();
        let p = partition_regions(&g, &img, &s).unwrap();
        let (g2, p2) = simplify_graph(&g, &img, &s, &p).unwrap();
        for (gg, pp) in [(&g, &p), (&g2, &p2)] {
            let eg = build_edge_graph(gg, &img, &s, pp, true).unwrap();
            failures.extend(check(&eg, pp, &img).into_iter().map(|m| format!("{k}: {m}")));
            let merged = merge_parallel_edges(&eg, &img, 2.0 / 3.0).unwrap();
            failures.extend(check(&merged, pp, &img).into_iter().map(|m| format!("{k} merged: {m}")));
        }
    }
    assert!(failures.is_empty(), "{} failures: {:?}", failures.len(), &failures[..failures.len().min(5)]);
}
