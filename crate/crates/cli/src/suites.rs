//! Lattice-level validation suites run by `validate-sgf`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use frwcap_core::geometry::{Cube, DielectricGrid};
use frwcap_core::microwalk::{neighbor_weights, ExitKind, MicroWalker};
use frwcap_core::oracle::{
    compare_distribution, exact_chain, random_block_grid, CubeSymmetry, DEFAULT_DENSE_CAP,
};
use frwcap_core::rng::{stream, WalkRng};
use frwcap_core::sgf::{assemble_system, expected_steps, panel_offset, solve_absorption_row, solve_sgf};
use frwcap_core::Result;

/// Mean exit time of the uniform lattice walk in units of `N^2`.
pub const UNIFORM_STEP_CONSTANT: f64 = 0.3373;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, limit, passed: value <= limit }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateOptions {
    pub n: usize,
    pub grids: usize,
    pub samples: u64,
    pub blocks: usize,
    pub tv_limit: f64,
    pub step_ns: Vec<usize>,
    pub step_grids: usize,
    pub step_samples: u64,
    pub uniform_n: usize,
    pub property_ns: Vec<usize>,
    pub seed: u64,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            n: 4,
            grids: 20,
            samples: 1_000_000,
            blocks: 4,
            tv_limit: 0.01,
            step_ns: vec![4, 8],
            step_grids: 10,
            step_samples: 100_000,
            uniform_n: 24,
            property_ns: vec![3, 4, 5, 6],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvRow {
    pub grid: usize,
    pub n: usize,
    pub tv_distance: f64,
    pub p_value: f64,
    pub samples: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub grid: usize,
    pub n: usize,
    pub exact: f64,
    pub mean: f64,
    pub std_err: f64,
    /// `|mean - exact| / std_err`.
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub options: ValidateOptions,
    pub equivalence: Vec<TvRow>,
    pub step_law: Vec<StepRow>,
    pub uniform_step_ratio: f64,
    pub checks: Vec<Check>,
    pub passed: bool,
}

fn validation_grid(n: usize, blocks: usize, seed: u64, index: u64) -> DielectricGrid {
    random_block_grid(n, blocks, &mut stream(seed, index))
}

fn surface_exit(walker: &mut MicroWalker<'_, DielectricGrid>, rng: &mut WalkRng) -> (usize, u64) {
    let t = walker.transit(rng).expect("transit within the step cap");
    match t.exit.kind {
        ExitKind::SurfacePanel(p) => (p, t.steps),
        ExitKind::Conductor(_) => unreachable!("validation lattices are conductor-free"),
    }
}

/// MicroWalk exit histograms against the exact absorption row on random
/// block lattices.
pub fn equivalence(opts: &ValidateOptions) -> Result<Vec<TvRow>> {
    (0..opts.grids)
        .into_par_iter()
        .map(|g| {
            let grid = validation_grid(opts.n, opts.blocks, opts.seed, g as u64);
            let exact = if opts.n <= DEFAULT_DENSE_CAP {
                exact_chain(&grid, DEFAULT_DENSE_CAP)?.absorption
            } else {
                solve_absorption_row(&assemble_system(&grid)?)?.probs().to_vec()
            };
            let mut walker = MicroWalker::new(&grid)?;
            let mut rng = stream(opts.seed.wrapping_add(1), g as u64);
            let rep = compare_distribution(&exact, |r| surface_exit(&mut walker, r).0, opts.samples, &mut rng)?;
            Ok(TvRow { grid: g, n: opts.n, tv_distance: rep.tv_distance, p_value: rep.p_value, samples: rep.samples })
        })
        .collect()
}

/// Empirical mean exit time against the exact expectation.
pub fn step_law(opts: &ValidateOptions) -> Result<Vec<StepRow>> {
    (0..opts.step_grids)
        .into_par_iter()
        .map(|g| {
            let n = opts.step_ns[g % opts.step_ns.len()];
            let grid = validation_grid(n, opts.blocks, opts.seed.wrapping_add(2), g as u64);
            let exact = if n <= DEFAULT_DENSE_CAP {
                exact_chain(&grid, DEFAULT_DENSE_CAP)?.expected_steps
            } else {
                expected_steps(&assemble_system(&grid)?)?
            };
            let mut walker = MicroWalker::new(&grid)?;
            let mut rng = stream(opts.seed.wrapping_add(3), g as u64);
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..opts.step_samples {
                let k = surface_exit(&mut walker, &mut rng).1 as f64;
                s1 += k;
                s2 += k * k;
            }
            let m = opts.step_samples as f64;
            let mean = s1 / m;
            let var = (s2 - m * mean * mean) / (m - 1.0);
            let std_err = (var / m).sqrt();
            Ok(StepRow { grid: g, n, exact, mean, std_err, z: (mean - exact).abs() / std_err })
        })
        .collect()
}

pub fn uniform_step_ratio(n: usize) -> Result<f64> {
    let tau = expected_steps(&assemble_system(&DielectricGrid::uniform(n, 1.0))?)?;
    Ok(tau / (n * n) as f64)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Layered along z, so any potential linear in x or y is discretely harmonic.
fn z_layered(n: usize) -> DielectricGrid {
    let eps = (0..n * n * n).map(|i| 1.0 + 3.0 * ((i / (n * n)) % 3) as f64).collect();
    DielectricGrid::from_eps(n, eps, Cube::new([0.0; 3], 1.0)).expect("positive permittivities")
}

/// Normalization, kernel zero sums, linear-field exactness, cube symmetry,
/// permittivity scale invariance and dense/sparse agreement.
pub fn sgf_properties(ns: &[usize], blocks: usize, seed: u64) -> Result<Vec<Check>> {
    let (mut norm, mut min_prob, mut kernel_sum) = (0.0f64, f64::INFINITY, 0.0f64);
    let (mut linear, mut symmetry, mut scale_solved, mut dense) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut beta_mismatch = 0usize;
    for (i, &n) in ns.iter().enumerate() {
        let grid = validation_grid(n, blocks, seed.wrapping_add(4), i as u64);
        let sgf = solve_sgf(&assemble_system(&grid)?)?;
        norm = norm.max((sgf.probs().iter().sum::<f64>() - 1.0).abs());
        min_prob = sgf.probs().iter().copied().fold(min_prob, f64::min);
        for a in 0..3 {
            kernel_sum = kernel_sum.max(sgf.grad_kernel(a).iter().sum::<f64>().abs());
        }

        for layered in [DielectricGrid::uniform(n, 2.0), z_layered(n)] {
            let sgf = solve_sgf(&assemble_system(&layered)?)?;
            for b in 0..2 {
                let phi: Vec<f64> = (0..6 * n * n).map(|p| panel_offset(n, p)[b]).collect();
                let centre: f64 = sgf.probs().iter().zip(&phi).map(|(p, f)| p * f).sum();
                linear = linear.max(centre.abs());
                for a in 0..2 {
                    let g: f64 = sgf.grad_kernel(a).iter().zip(&phi).map(|(k, f)| k * f).sum();
                    linear = linear.max((g - if a == b { 1.0 } else { 0.0 }).abs());
                }
            }
        }

        let uniform = solve_absorption_row(&assemble_system(&DielectricGrid::uniform(n, 1.0))?)?;
        for sym in CubeSymmetry::all() {
            for (p, &v) in uniform.probs().iter().enumerate() {
                symmetry = symmetry.max((uniform.probs()[sym.apply_panel(p, n)] - v).abs());
            }
        }

        for lambda in [0.5, 2.0, 1024.0] {
            let scaled = grid.scaled(lambda);
            for z in 0..n {
                for y in 0..n {
                    for x in 0..n {
                        let (a, b) = (neighbor_weights(&grid, [x, y, z]), neighbor_weights(&scaled, [x, y, z]));
                        beta_mismatch += a.iter().zip(&b).filter(|(u, v)| u.to_bits() != v.to_bits()).count();
                    }
                }
            }
        }
        let scaled = solve_sgf(&assemble_system(&grid.scaled(3.7))?)?;
        scale_solved = scale_solved.max(max_abs_diff(scaled.probs(), sgf.probs()));

        if n <= 6 {
            let exact = exact_chain(&grid, DEFAULT_DENSE_CAP)?.absorption;
            dense = dense.max(max_abs_diff(&exact, sgf.probs()));
        }
    }
    Ok(vec![
        Check::at_most("normalization", norm, 1e-9),
        Check { name: "min_probability".into(), value: min_prob, limit: 0.0, passed: min_prob >= 0.0 },
        Check::at_most("kernel_zero_sum", kernel_sum, 1e-9),
        Check::at_most("linear_field", linear, 1e-6),
        Check::at_most("octahedral_symmetry", symmetry, 1e-8),
        Check::at_most("beta_scale_bits", beta_mismatch as f64, 0.0),
        Check::at_most("sgf_scale_invariance", scale_solved, 1e-8),
        Check::at_most("dense_vs_sparse", dense, 1e-8),
    ])
}

pub fn run_validation(opts: &ValidateOptions) -> Result<ValidationReport> {
    let equivalence = equivalence(opts)?;
    let step_law = step_law(opts)?;
    let uniform_step_ratio = uniform_step_ratio(opts.uniform_n)?;
    let mut checks = sgf_properties(&opts.property_ns, opts.blocks, opts.seed)?;
    let worst_tv = equivalence.iter().map(|r| r.tv_distance).fold(0.0, f64::max);
    checks.push(Check::at_most("max_tv_distance", worst_tv, opts.tv_limit));
    let worst_z = step_law.iter().map(|r| r.z).fold(0.0, f64::max);
    checks.push(Check::at_most("max_step_z", worst_z, 3.0));
    checks.push(Check::at_most(
        "uniform_step_constant_rel_err",
        (uniform_step_ratio / UNIFORM_STEP_CONSTANT - 1.0).abs(),
        0.05,
    ));
    let passed = checks.iter().all(|c| c.passed);
    Ok(ValidationReport { options: opts.clone(), equivalence, step_law, uniform_step_ratio, checks, passed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes() {
        let opts = ValidateOptions {
            grids: 2,
            samples: 50_000,
            tv_limit: 0.05,
            step_grids: 2,
            step_samples: 20_000,
            uniform_n: 8,
            property_ns: vec![3, 4],
            ..ValidateOptions::default()
        };
        let r = run_validation(&opts).unwrap();
        for c in &r.checks {
            if c.name != "uniform_step_constant_rel_err" {
                assert!(c.passed, "{c:?}");
            }
        }
        assert_eq!(r.equivalence.len(), 2);
    }
}
