use isoedge::region::check_partition;
use isoedge::{build_steepest_graph, classify_extrema, enumerate_saddles, partition_regions, simplify_graph, Image};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng_level(rng: &mut ChaCha8Rng, levels: u32) -> f64 {
    rng.random_range(0..levels) as f64
}

#[test]
fn random_partitions_are_well_formed() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut failures = Vec::new();
    for k in 0..600 {
        let w = rng.random_range(2..14);
        let h = rng.random_range(2..14);
        let levels = [2, 3, 5, 256][k % 4];
        let img = {
            let vals: Vec<f64> = (0..w * h).map(|_| rng_level(&mut rng, levels)).collect();
            Image::new(w, h, vals).unwrap()
        };
        let s = enumerate_saddles(&img);
        let e = classify_extrema(&img, &s);
        let g = build_steepest_graph(&img, &s, &e).unwrap();
        match partition_regions(&g, &img, &s) {
            Ok(p) => {
                let issues = check_partition(&p, &img, &s);
                if !issues.is_empty() {
                    failures.push(format!("{k}: {issues:?}"));
                }
                match simplify_graph(&g, &img, &s, &p) {
                    Ok((_, p2)) => {
                        let issues = check_partition(&p2, &img, &s);
                        if !issues.is_empty() {
                            failures.push(format!("{k} simplified: {issues:?}"));
                        }
                    }
                    Err(err) => failures.push(format!("{k} simplified: {err} {:?}", img.values())),
                }
            }
            Err(err) => failures.push(format!("{k} ({w}x{h}): {err} {:?}", img.values())),
        }
    }
    assert!(failures.is_empty(), "{} failures, first: {:?}", failures.len(), &failures[..failures.len().min(3)]);
}
