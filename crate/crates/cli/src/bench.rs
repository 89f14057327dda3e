//! Timing of MicroWalk transits and FDM solves across lattice sizes.

use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use frwcap_core::geometry::{Cube, DielectricGrid};
use frwcap_core::microwalk::MicroWalker;
use frwcap_core::rng::stream;
use frwcap_core::sgf::{assemble_system, expected_steps, solve_absorption_row, solve_sgf};
use frwcap_core::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchOptions {
    pub n_list: Vec<usize>,
    pub reps: usize,
    /// FDM solves are skipped above this size.
    pub fdm_max_n: usize,
    /// Lattice steps simulated per MicroWalk repetition.
    pub steps_per_rep: f64,
    /// Random dielectric blocks in the scene; zero gives uniform permittivity.
    pub blocks: usize,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self { n_list: vec![8, 16, 32, 64], reps: 5, fdm_max_n: 32, steps_per_rep: 4e6, blocks: 0, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub expected_steps: f64,
    pub mean_steps: f64,
    pub microwalk_s: f64,
    /// One FDM transition: assembly, absorption-row solve and a draw.
    pub fdm_row_s: Option<f64>,
    /// A full SGF with its gradient kernels, the cost of a cache miss.
    pub fdm_sgf_s: Option<f64>,
    /// FDM time over MicroWalk time per transition.
    pub speedup: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub options: BenchOptions,
    pub rows: Vec<BenchRow>,
    pub slope_expected_steps: Option<f64>,
    pub slope_microwalk: Option<f64>,
    /// Fitted on the full SGF time.
    pub slope_fdm: Option<f64>,
}

/// Random blocks placed in the unit cube once and rasterized at each size,
/// so every lattice in a sweep discretizes the same scene.
#[derive(Debug, Clone)]
pub struct BlockScene {
    background: f64,
    blocks: Vec<([f64; 3], [f64; 3], f64)>,
}

impl BlockScene {
    pub fn random(blocks: usize, seed: u64) -> Self {
        let mut rng = stream(seed, 0);
        let dist = Exp::<f64>::new(0.1).expect("positive rate");
        let draw_eps = |rng: &mut frwcap_core::rng::WalkRng| -> f64 { dist.sample(rng).max(1e-12) };
        let background = if blocks == 0 { 1.0 } else { draw_eps(&mut rng) };
        let blocks = (0..blocks)
            .map(|_| {
                let mut lo = [0.0; 3];
                let mut hi = [0.0; 3];
                for k in 0..3 {
                    let (a, b): (f64, f64) = (rng.random(), rng.random());
                    lo[k] = a.min(b);
                    hi[k] = a.max(b);
                }
                (lo, hi, draw_eps(&mut rng))
            })
            .collect();
        Self { background, blocks }
    }

    pub fn grid(&self, n: usize) -> DielectricGrid {
        let mut eps = vec![self.background; n * n * n];
        let c = |i: usize| (i as f64 + 0.5) / n as f64;
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    let p = [c(x), c(y), c(z)];
                    for (lo, hi, e) in &self.blocks {
                        if (0..3).all(|k| p[k] >= lo[k] && p[k] <= hi[k]) {
                            eps[x + n * (y + n * z)] = *e;
                        }
                    }
                }
            }
        }
        DielectricGrid::from_eps(n, eps, Cube::new([0.0; 3], 1.0)).expect("positive permittivities")
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let k = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (lx, ly) = (x.ln(), y.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    let den = k * sxx - sx * sx;
    (den > 0.0).then(|| (k * sxy - sx * sy) / den)
}

/// Median seconds per call of `f` over `reps` timed repetitions, after one
/// discarded warmup repetition. Each repetition makes `calls` calls.
fn time_median(reps: usize, calls: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    let mut times = Vec::with_capacity(reps);
    for rep in 0..=reps {
        let start = Instant::now();
        for _ in 0..calls {
            f()?;
        }
        if rep > 0 {
            times.push(start.elapsed().as_secs_f64() / calls as f64);
        }
    }
    Ok(median(times))
}

pub fn bench_row(scene: &BlockScene, n: usize, opts: &BenchOptions) -> Result<BenchRow> {
    let grid = scene.grid(n);
    let tau = expected_steps(&assemble_system(&grid)?)?;
    let calls = ((opts.steps_per_rep / tau).ceil() as usize).max(100);
    let mut walker = MicroWalker::new(&grid)?;
    let mut rng = stream(opts.seed.wrapping_add(1), n as u64);
    let (mut steps, mut transits) = (0u64, 0u64);
    let microwalk_s = time_median(opts.reps, calls, || {
        steps += walker.transit(&mut rng)?.steps;
        transits += 1;
        Ok(())
    })?;
    let (fdm_row_s, fdm_sgf_s) = if n <= opts.fdm_max_n {
        let calls = |work: f64| ((work / (n * n * n) as f64).ceil() as usize).max(1);
        let row = time_median(opts.reps, calls(2e5), || {
            let dist = solve_absorption_row(&assemble_system(&grid)?)?;
            std::hint::black_box(dist.sample(&mut rng));
            Ok(())
        })?;
        let sgf = time_median(opts.reps, calls(5e4), || {
            std::hint::black_box(solve_sgf(&assemble_system(&grid)?)?);
            Ok(())
        })?;
        (Some(row), Some(sgf))
    } else {
        (None, None)
    };
    Ok(BenchRow {
        n,
        expected_steps: tau,
        mean_steps: steps as f64 / transits as f64,
        microwalk_s,
        fdm_row_s,
        fdm_sgf_s,
        speedup: fdm_row_s.map(|f| f / microwalk_s),
    })
}

pub fn bench_scaling(opts: &BenchOptions) -> Result<BenchReport> {
    if opts.n_list.is_empty() || opts.n_list.contains(&0) {
        return Err(Error::Config("the N list must hold positive sizes".into()));
    }
    if opts.reps == 0 {
        return Err(Error::Config("at least one timed repetition is needed".into()));
    }
    let scene = BlockScene::random(opts.blocks, opts.seed);
    let rows = opts.n_list.iter().map(|&n| bench_row(&scene, n, opts)).collect::<Result<Vec<_>>>()?;
    let fit = |f: &dyn Fn(&BenchRow) -> Option<f64>| {
        loglog_slope(&rows.iter().filter_map(|r| f(r).map(|y| (r.n as f64, y))).collect::<Vec<_>>())
    };
    Ok(BenchReport {
        options: opts.clone(),
        slope_expected_steps: fit(&|r| Some(r.expected_steps)),
        slope_microwalk: fit(&|r| Some(r.microwalk_s)),
        slope_fdm: fit(&|r| r.fdm_sgf_s),
        rows,
    })
}
