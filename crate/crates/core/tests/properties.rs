use isoedge::raster::eval_r;
use isoedge::verify::check_image;
use isoedge::{decode_image, detect, encode_pgm, enumerate_saddles, ContinuousPoint, Image, LatticePoint, PipelineConfig};
use proptest::prelude::*;

fn image(max: usize, levels: Option<u32>) -> impl Strategy<Value = Image> {
    (2..=max, 2..=max).prop_flat_map(move |(w, h)| {
        let cell = match levels {
            Some(l) => (0..l).prop_map(|v| v as f64).boxed(),
            None => (0.0..1.0f64).boxed(),
        };
        proptest::collection::vec(cell, w * h).prop_map(move |v| Image::new(w, h, v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn surface_interpolates_lattice_values(img in image(9, None)) {
        for j in 0..img.height() {
            for i in 0..img.width() {
                let v = eval_r(&img, ContinuousPoint::new(i as f64, j as f64)).unwrap();
                prop_assert!((v - img.get(LatticePoint::new(i, j))).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn surface_is_continuous_across_cell_sides(img in image(9, None), t in 0.0..1.0f64) {
        // Sample each shared vertical side from both adjacent cells.
        for j in 0..img.cells_y() {
            for i in 1..img.cells_x() {
                let p = ContinuousPoint::new(i as f64, j as f64 + t);
                let l = img.eval_in_cell(LatticePoint::new(i - 1, j), p);
                let r = img.eval_in_cell(LatticePoint::new(i, j), p);
                prop_assert!((l - r).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn split_points_are_critical(img in image(9, None)) {
        for s in &enumerate_saddles(&img).splits {
            let k = img.coefficients(s.cell);
            let (x, y) = (s.split_point.x - s.cell.i as f64, s.split_point.y - s.cell.j as f64);
            prop_assert!(x > 0.0 && x < 1.0 && y > 0.0 && y < 1.0);
            let g = k.grad(x, y);
            prop_assert!(g[0].abs() < 1e-9 && g[1].abs() < 1e-9);
            prop_assert!((k.eval(x, y) - s.split_value).abs() < 1e-12);
        }
    }

    #[test]
    fn real_images_satisfy_every_lemma(img in image(12, None), seed in any::<u64>()) {
        let r = check_image(&img, 3, seed, None);
        prop_assert!(r.is_ok(), "{:?}", r.violations);
    }

    #[test]
    fn quantized_images_satisfy_every_lemma(img in image(12, Some(3)), seed in any::<u64>()) {
        let r = check_image(&img, 3, seed, None);
        prop_assert!(r.is_ok(), "{:?}", r.violations);
    }

    #[test]
    fn pgm_round_trip(img in image(10, Some(65536))) {
        prop_assert_eq!(decode_image(&encode_pgm(&img, 65535)).unwrap(), img);
    }

    #[test]
    fn detection_json_is_repeatable(img in image(8, None)) {
        let cfg = PipelineConfig::default();
        let a = detect(img.clone(), &cfg).unwrap().to_json(&cfg);
        let b = detect(img, &cfg).unwrap().to_json(&cfg);
        prop_assert_eq!(a, b);
    }
}
