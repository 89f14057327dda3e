use frwcap_core::geometry::{Conductor, Cube, Cuboid, DielectricGrid, Lattice, Structure};
use frwcap_core::microwalk::{microwalk_e_transit, ExitKind, MicroWalker};
use frwcap_core::oracle::{compare_distribution, exact_chain, random_block_grid, random_exp_grid, DEFAULT_DENSE_CAP};
use frwcap_core::rng::stream;

const SAMPLES: u64 = 400_000;

#[test]
fn exits_follow_the_exact_absorption_row() {
    for (g, n) in [3usize, 4, 5].into_iter().enumerate() {
        for grid in [random_exp_grid(n, &mut stream(11, g as u64)), random_block_grid(n, 3, &mut stream(12, g as u64))] {
            let exact = exact_chain(&grid, DEFAULT_DENSE_CAP).unwrap().absorption;
            let mut walker = MicroWalker::new(&grid).unwrap();
            let rep = compare_distribution(
                &exact,
                |r| match walker.transit(r).unwrap().exit.kind {
                    ExitKind::SurfacePanel(p) => p,
                    ExitKind::Conductor(_) => unreachable!(),
                },
                SAMPLES,
                &mut stream(13, g as u64),
            )
            .unwrap();
            assert!(rep.p_value > 1e-4, "n={n}: p={} tv={}", rep.p_value, rep.tv_distance);
            assert!(rep.tv_distance < 0.02, "n={n}: tv={}", rep.tv_distance);
        }
    }
}

#[test]
fn mean_steps_follow_the_exact_expectation() {
    for (g, n) in [2usize, 4, 6, 8].into_iter().enumerate() {
        let grid = random_block_grid(n, 4, &mut stream(21, g as u64));
        let exact = exact_chain(&grid, DEFAULT_DENSE_CAP).unwrap().expected_steps;
        let mut walker = MicroWalker::new(&grid).unwrap();
        let mut rng = stream(22, g as u64);
        let m = 100_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..m {
            let k = walker.transit(&mut rng).unwrap().steps as f64;
            s1 += k;
            s2 += k * k;
        }
        let mean = s1 / m as f64;
        let se = ((s2 / m as f64 - mean * mean) / m as f64).sqrt();
        assert!((mean - exact).abs() < 4.0 * se, "n={n}: {mean} vs {exact} (se {se})");
    }
}

/// Conductor voxels in two slabs; bins are the surface panels followed by one
/// bin per conductor id.
fn masked_grid(n: usize) -> DielectricGrid {
    let mut rng = stream(31, n as u64);
    let base = random_block_grid(n, 3, &mut rng);
    let mask = (0..n * n * n)
        .map(|i| {
            let (x, z) = (i % n, i / (n * n));
            if x == n - 1 && z > 0 {
                Some(7)
            } else if z == 0 && x < n / 2 {
                Some(9)
            } else {
                None
            }
        })
        .collect();
    DielectricGrid::with_mask(n, base.eps_values().to_vec(), Some(mask), base.cube()).unwrap()
}

#[test]
fn masked_lattices_match_the_exact_chain() {
    for n in [3usize, 4, 6] {
        let grid = masked_grid(n);
        let chain = exact_chain(&grid, DEFAULT_DENSE_CAP).unwrap();
        let surface = 6 * n * n;
        let mut exact = chain.absorption[..surface].to_vec();
        exact.push(chain.conductor_mass(7));
        exact.push(chain.conductor_mass(9));
        assert!(exact[surface] > 0.01 && exact[surface + 1] > 0.01);
        let mut walker = MicroWalker::new(&grid).unwrap();
        let rep = compare_distribution(
            &exact,
            |r| match walker.transit(r).unwrap().exit.kind {
                ExitKind::SurfacePanel(p) => p,
                ExitKind::Conductor(7) => surface,
                ExitKind::Conductor(_) => surface + 1,
            },
            SAMPLES,
            &mut stream(32, n as u64),
        )
        .unwrap();
        assert!(rep.p_value > 1e-4, "n={n}: p={}", rep.p_value);
    }
}

#[test]
fn expanded_transits_absorb_on_conductor_faces() {
    let plate = Cuboid::new([-50.0, -50.0, 4.0], [50.0, 50.0, 6.0]).unwrap();
    let s = Structure::new(
        vec![Conductor { id: 3, bounds: plate }],
        vec![],
        2.0,
        Cuboid::new([-100.0; 3], [100.0; 3]).unwrap(),
        3,
    )
    .unwrap();
    let (mut absorbed, trials) = (0, 4000);
    for i in 0..trials {
        let t = microwalk_e_transit(&s, [0.0; 3], 4.0, 3.0, 12, &mut stream(41, i)).unwrap();
        match t.exit.kind {
            ExitKind::Conductor(id) => {
                assert_eq!(id, 3);
                assert!((t.exit.point[2] - 4.0).abs() < 1.0 + 1e-9, "{:?}", t.exit.point);
                absorbed += 1;
            }
            ExitKind::SurfacePanel(_) => {
                let c = Cube::new([0.0; 3], 12.0);
                assert!((0..3).any(|k| (t.exit.point[k].abs() - c.half_width).abs() < 1e-9));
            }
        }
    }
    // the plate covers most of the expanded cube's upper half
    assert!(absorbed > trials / 4, "{absorbed}");
}
