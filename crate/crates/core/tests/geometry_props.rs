use frwcap_core::geometry::{
    parse_structure, Conductor, Cube, CubeVoxels, Cuboid, Dielectric, DielectricGrid, Lattice, Structure,
    StructureFile,
};
use frwcap_core::Error;
use proptest::prelude::*;

fn boxed(lo: [f64; 3], size: [f64; 3]) -> Cuboid {
    let hi = [
        (lo[0] + size[0]).min(100.0),
        (lo[1] + size[1]).min(100.0),
        (lo[2] + size[2]).min(100.0),
    ];
    Cuboid::new(lo, hi).unwrap()
}

fn triple(r: std::ops::Range<f64>) -> impl Strategy<Value = [f64; 3]> {
    [r.clone(), r.clone(), r]
}

fn scene() -> impl Strategy<Value = Structure> {
    let conductors = prop::collection::vec((triple(5.0..80.0), triple(2.0..15.0)), 1..4);
    let dielectrics = prop::collection::vec((triple(0.0..90.0), triple(1.0..60.0), 1.0f64..20.0), 0..5);
    (conductors, dielectrics, 1.0f64..10.0).prop_map(|(cs, ds, bg)| {
        let conductors = cs
            .into_iter()
            .enumerate()
            .map(|(i, (lo, size))| Conductor { id: i as u32 + 1, bounds: boxed(lo, size) })
            .collect();
        let dielectrics = ds.into_iter().map(|(lo, size, eps)| Dielectric { bounds: boxed(lo, size), eps_r: eps }).collect();
        Structure::new(conductors, dielectrics, bg, Cuboid::new([0.0; 3], [100.0; 3]).unwrap(), 1).unwrap()
    })
}

fn chebyshev_to_box(p: [f64; 3], b: &Cuboid) -> f64 {
    (0..3).map(|k| (b.lo[k] - p[k]).max(p[k] - b.hi[k]).max(0.0)).fold(0.0, f64::max)
}

fn dense_eps(s: &Structure, cube: Cube, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * n * n);
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                out.push(s.permittivity_at(cube.node_point([x, y, z], n)).unwrap());
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn free_cube_matches_brute_force(s in scene(), p in triple(1.0..99.0)) {
        let inside = s.conductors().iter().any(|c| chebyshev_to_box(p, &c.bounds) <= 0.0);
        match s.max_free_cube(p) {
            Err(Error::InsideConductor { .. }) => prop_assert!(inside),
            Err(e) => prop_assert!(false, "unexpected {e}"),
            Ok((hw, nearest)) => {
                prop_assert!(!inside);
                let conductor = s
                    .conductors()
                    .iter()
                    .map(|c| (chebyshev_to_box(p, &c.bounds), c.id))
                    .fold((f64::INFINITY, 0), |a, b| if b.0 < a.0 { b } else { a });
                let wall = (0..3).map(|k| p[k].min(100.0 - p[k])).fold(f64::INFINITY, f64::min);
                prop_assert_eq!(hw, conductor.0.min(wall));
                if conductor.0 < wall {
                    prop_assert_eq!(nearest, Some(conductor.1));
                }
                // the cube is free, and no larger concentric cube is
                let cube = Cuboid::centered(p, hw * (1.0 - 1e-9));
                prop_assert!(s.conductors().iter().all(|c| !c.bounds.interiors_overlap(&cube)));
                let bigger = Cuboid::centered(p, hw * 1.01);
                let blocked = s.conductors().iter().any(|c| c.bounds.interiors_overlap(&bigger))
                    || !s.world().contains_box(&bigger);
                prop_assert!(blocked);
            }
        }
    }

    #[test]
    fn compressed_voxels_match_point_queries(s in scene(), p in triple(1.0..99.0), n in 1usize..12) {
        prop_assume!(s.max_free_cube(p).is_ok());
        let (hw, _) = s.max_free_cube(p).unwrap();
        let cube = Cube::new(p, hw);
        let view = CubeVoxels::new(&s, cube, n, false).unwrap();
        let eps = dense_eps(&s, cube, n);
        let grid = view.materialize();
        prop_assert_eq!(grid.eps_values(), &eps[..]);
        let reference = DielectricGrid::from_eps(n, eps, cube).unwrap();
        prop_assert_eq!(view.classify(), reference.tag());
    }

    #[test]
    fn expanded_cubes_mark_conductor_voxels(s in scene(), p in triple(10.0..90.0), n in 2usize..10) {
        prop_assume!(s.max_free_cube(p).is_ok());
        let cube = Cube::new(p, 10.0f64.min(s.world().wall_distance(p)));
        let view = CubeVoxels::new(&s, cube, n, true).unwrap();
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    let c = cube.node_point([x, y, z], n);
                    let want = s.conductors().iter().find(|k| k.bounds.contains(c)).map(|k| k.id);
                    prop_assert_eq!(view.conductor([x, y, z]), want);
                }
            }
        }
    }

    #[test]
    fn translation_preserves_free_cubes_and_classification(
        s in scene(),
        p in triple(1.0..99.0),
        t in triple(-500.0..500.0),
    ) {
        let moved = s.translated(t);
        let q = [p[0] + t[0], p[1] + t[1], p[2] + t[2]];
        match (s.max_free_cube(p), moved.max_free_cube(q)) {
            (Ok((a, ia)), Ok((b, ib))) => {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
                if (a - b).abs() == 0.0 {
                    prop_assert_eq!(ia, ib);
                }
                let n = 8;
                let (va, vb) = (
                    CubeVoxels::new(&s, Cube::new(p, a), n, false).unwrap(),
                    CubeVoxels::new(&moved, Cube::new(q, b), n, false).unwrap(),
                );
                prop_assert_eq!(va.classify(), vb.classify());
            }
            (Err(_), Err(_)) => {}
            (x, y) => prop_assert!(false, "{x:?} vs {y:?}"),
        }
    }

    #[test]
    fn disjoint_dielectric_order_is_irrelevant(s in scene(), p in triple(1.0..99.0), seed in any::<u64>()) {
        let ds = s.dielectrics();
        let disjoint = ds.iter().enumerate().all(|(i, a)| ds[..i].iter().all(|b| !a.bounds.interiors_overlap(&b.bounds)));
        prop_assume!(disjoint && s.max_free_cube(p).is_ok());
        let mut order: Vec<Dielectric> = ds.to_vec();
        let len = order.len().max(1);
        order.rotate_left((seed as usize) % len);
        let shuffled = Structure::new(s.conductors().to_vec(), order, s.background_eps_r(), *s.world(), 1).unwrap();
        let (hw, _) = s.max_free_cube(p).unwrap();
        let cube = Cube::new(p, hw);
        let (a, b) = (CubeVoxels::new(&s, cube, 7, false).unwrap(), CubeVoxels::new(&shuffled, cube, 7, false).unwrap());
        prop_assert_eq!(a.classify(), b.classify());
        let (ga, gb) = (a.materialize(), b.materialize());
        prop_assert_eq!(ga.eps_values(), gb.eps_values());
    }

    #[test]
    fn structure_files_round_trip(s in scene()) {
        let text = serde_json::to_string_pretty(&StructureFile::from_structure(&s)).unwrap();
        prop_assert_eq!(parse_structure(&text).unwrap(), s);
    }
}

#[test]
fn syntax_errors_carry_positions() {
    let err = parse_structure("{\n  \"units\": \"nm\",\n  \"background_eps\": ,\n}").unwrap_err();
    match err {
        Error::Syntax { line, column, .. } => assert_eq!((line, column > 0), (3, true)),
        other => panic!("expected a syntax error, got {other}"),
    }
}

#[test]
fn invalid_documents_are_rejected() {
    let base = |body: &str| format!("{{\"units\": \"nm\", \"background_eps\": 3.9, {body}}}");
    let cases = [
        base("\"conductors\": [], \"master\": 1"),
        base("\"conductors\": [{\"id\": 1, \"lo\": [0,0,0], \"hi\": [1,1,1]}, {\"id\": 1, \"lo\": [2,2,2], \"hi\": [3,3,3]}], \"master\": 1"),
        base("\"conductors\": [{\"id\": 1, \"lo\": [0,0,0], \"hi\": [1,1,1]}], \"dielectrics\": [{\"lo\": [0,0,0], \"hi\": [1,1,1], \"eps\": -2}], \"master\": 1"),
        base("\"world\": {\"lo\": [0,0,0], \"hi\": [5,5,5]}, \"conductors\": [{\"id\": 1, \"lo\": [4,4,4], \"hi\": [6,6,6]}], \"master\": 1"),
        base("\"conductors\": [{\"id\": 1, \"lo\": [0,0,0], \"hi\": [1,1,1]}], \"master\": 2"),
    ];
    for text in cases {
        assert!(matches!(parse_structure(&text), Err(Error::Validation(_))), "{text}");
    }
}

#[test]
fn later_dielectric_wins_in_overlap() {
    let text = r#"{"units": "nm", "background_eps": 1.0,
        "conductors": [{"id": 1, "lo": [0,0,0], "hi": [1,1,1]}],
        "dielectrics": [{"lo": [2,2,2], "hi": [6,6,6], "eps": 3.9}, {"lo": [4,4,4], "hi": [8,8,8], "eps": 7.0}],
        "master": 1}"#;
    let s = parse_structure(text).unwrap();
    assert_eq!(s.permittivity_at([5.0; 3]).unwrap(), 7.0);
    assert_eq!(s.permittivity_at([3.0; 3]).unwrap(), 3.9);
    assert_eq!(s.permittivity_at([7.5; 3]).unwrap(), 7.0);
}
