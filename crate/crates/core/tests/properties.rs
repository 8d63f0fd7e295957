use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ecc_core::coarsen::{build_pyramid, CoarsenOptions, DegreeLabels};
use ecc_core::graph::LabeledGraph;
use ecc_core::netcfg::{LayerSpec, NetSpec};
use ecc_core::pointcloud::{self, LabelScheme, PointCloud};
use ecc_core::tensor::Tensor;

fn decimal() -> impl Strategy<Value = f64> {
    (1u32..4000).prop_map(|k| f64::from(k) / 64.0)
}

fn body_layer() -> impl Strategy<Value = String> {
    prop_oneof![
        (1usize..300).prop_map(|c| format!("C({c})")),
        Just("MP".to_string()),
    ]
}

fn head_layer() -> impl Strategy<Value = String> {
    prop_oneof![
        (1usize..300).prop_map(|c| format!("FC({c})")),
        (0u32..99).prop_map(|p| format!("D({})", f64::from(p) / 100.0)),
    ]
}

fn config() -> impl Strategy<Value = String> {
    (
        prop::collection::vec(body_layer(), 1..8),
        prop::option::of(prop_oneof![Just("GAP"), Just("GMP")]),
        prop::collection::vec(head_layer(), 0..4),
        1usize..20,
    )
        .prop_map(|(body, global, head, out)| {
            let mut parts = body;
            parts.extend(global.map(str::to_string));
            parts.extend(head);
            parts.push(format!("FC({out})"));
            parts.join("-")
        })
}

fn grid_config() -> impl Strategy<Value = String> {
    prop::collection::vec((1usize..64, decimal(), decimal()), 1..5).prop_map(|layers| {
        let mut parts: Vec<String> = Vec::new();
        for (c, r, rho) in layers {
            parts.push(format!("C({c})"));
            parts.push(format!("MP({r},{rho})"));
        }
        parts.push("GAP-FC(3)".into());
        parts.join("-")
    })
}

fn undirected_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2usize..30).prop_flat_map(|n| (Just(n), prop::collection::vec((0..n, 0..n), 0..3 * n)))
}

fn finalized(n: usize, und: &[(usize, usize)], width: usize) -> LabeledGraph {
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for &(a, b) in und {
        if a != b && !edges.contains(&(a, b)) {
            edges.push((a, b));
            edges.push((b, a));
        }
    }
    let m = edges.len();
    let labels = Tensor::new(&[m, width], (0..m * width).map(|k| (k % 3) as f64).collect()).unwrap();
    LabeledGraph::new(n, &edges, labels, Tensor::zeros(&[n, 2])).unwrap().finalize(&vec![0.0; width]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn parser_round_trip(s in prop_oneof![config(), grid_config()]) {
        let spec = NetSpec::parse(&s).unwrap();
        let text = spec.render();
        prop_assert_eq!(NetSpec::parse(&text).unwrap(), spec.clone());
        prop_assert_eq!(NetSpec::parse(&text).unwrap().render(), text);
    }

    #[test]
    fn parser_never_panics(s in "\\PC{0,40}") {
        let _ = NetSpec::parse(&s);
    }

    #[test]
    fn fraction_arguments(a in 1u32..100, b in 1u32..100) {
        let spec = NetSpec::parse(&format!("C(4)-MP({a}/{b},1)-GAP-FC(2)")).unwrap();
        match spec.layers[1] {
            LayerSpec::MaxPoolGrid { resolution, .. } => prop_assert_eq!(resolution, f64::from(a) / f64::from(b)),
            other => prop_assert!(false, "unexpected {:?}", other),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pyramid_invariants(
        (n, und) in undirected_graph(),
        levels in 0usize..4,
        degree in prop_oneof![
            Just(DegreeLabels::None),
            Just(DegreeLabels::InvSqrt),
            Just(DegreeLabels::Inv),
            Just(DegreeLabels::Sqrt),
            Just(DegreeLabels::Raw),
        ],
        sparsify in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let g = finalized(n, &und, 3);
        let opts = CoarsenOptions { levels, q: sparsify.then_some(4.0), degree_labels: degree };
        let (p, reports) = build_pyramid(&g, &opts, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(p.depth(), levels);
        prop_assert_eq!(p.levels().len(), levels + 1);
        prop_assert_eq!(reports.len(), levels);
        let extra = degree.extra_width();
        prop_assert_eq!(p.level(0).label_width(), 3 + extra);
        for h in 0..levels {
            let map = &p.maps()[h];
            prop_assert_eq!(map.n_fine(), p.level(h).num_vertices());
            prop_assert_eq!(map.n_coarse(), p.level(h + 1).num_vertices());
            prop_assert!(map.assignment().iter().all(|&c| c < map.n_coarse()));
            let coarse = p.level(h + 1);
            prop_assert!(coarse.is_finalized());
            prop_assert!(coarse.edge_labels().all_finite());
            if !reports[h].repeated {
                prop_assert_eq!(coarse.label_width(), 1 + extra);
                // Kron weights are nonnegative.
                prop_assert!((0..coarse.num_edges()).all(|e| coarse.edge_labels().row(e)[0] >= 0.0));
            }
        }
    }

    #[test]
    fn cloud_pyramid_maps_are_total(
        pts in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0), 1..120),
        r0 in 0.2f64..1.0,
    ) {
        let points: Vec<[f64; 3]> = pts.iter().map(|&(x, y, z)| [x, y, z]).collect();
        let pc = PointCloud::new(points, None).unwrap();
        let levels = [(r0, 2.0 * r0), (2.0 * r0, 4.0 * r0), (4.0 * r0, 8.0 * r0)];
        let (p, clouds) = pointcloud::build_pyramid(&pc, &levels, LabelScheme::Full6d).unwrap();
        prop_assert_eq!(p.depth(), 2);
        for h in 0..2 {
            prop_assert!(clouds[h + 1].len() <= clouds[h].len());
            let map = &p.maps()[h];
            prop_assert_eq!(map.n_fine(), clouds[h].len());
            prop_assert!(map.assignment().iter().all(|&c| c < clouds[h + 1].len()));
            let mut hit = vec![false; map.n_coarse()];
            map.assignment().iter().for_each(|&c| hit[c] = true);
            prop_assert!(hit.iter().all(|&h| h), "every coarse point receives a fine point");
        }
    }
}
