//! The floating random walk outer loop.
//!
//! Each walk starts at a uniformly sampled point of the Gaussian surface
//! around the master, takes a weighted first hop using a cached stratified
//! SGF and its gradient kernel, and then hops from cube to cube until it is
//! absorbed by a conductor or by the grounded world box. The weight of the
//! walk is credited to the terminal it lands on.

mod config;
mod gaussian;

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{Axis, Cube, CubeVoxels, Point, Structure};
use crate::microwalk::{expanded_cube, ExitKind, MicroWalker, Transit};
use crate::rng::{stream, WalkRng};
use crate::sgf::{assemble_system, panel_point, solve_absorption_row, CacheStats, ProfileKey, SgfCache};
use crate::{Error, Result, EPS0, NM};

pub use config::{Config, Mode};
pub use gaussian::{gaussian_surface, sample_gaussian, GaussianSurface, SurfaceSample};

/// Concentric shrink factors tried for a non-stratified first cube.
const SHRINK_FACTORS: [f64; 14] = [0.95, 0.9, 0.85, 0.8, 0.75, 0.7, 0.65, 0.6, 0.55, 0.5, 0.45, 0.4, 0.35, 0.3];

/// Largest within-slice share of the permittivity variance for which layer
/// homogenization is still used.
const LAYER_VARIANCE_SHARE: f64 = 0.5;

const MAX_GAUSSIAN_RESAMPLES: u32 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FirstBranch {
    Stratified,
    Shrink,
    LayerHomogenized,
    FullHomogenized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionPath {
    CachedStratified,
    MicroWalk,
    MicroWalkE,
    Fdm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WalkEvent {
    Continue(Point),
    Terminate(u32),
    TerminateGround,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstStep {
    pub next: Point,
    pub weight: f64,
    pub branch: FirstBranch,
    pub cube: Cube,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FirstDispatch {
    pub stratified: u64,
    pub shrink: u64,
    pub layer_homogenized: u64,
    pub full_homogenized: u64,
}

impl FirstDispatch {
    pub fn total(&self) -> u64 {
        self.stratified + self.shrink + self.layer_homogenized + self.full_homogenized
    }

    fn record(&mut self, b: FirstBranch) {
        match b {
            FirstBranch::Stratified => self.stratified += 1,
            FirstBranch::Shrink => self.shrink += 1,
            FirstBranch::LayerHomogenized => self.layer_homogenized += 1,
            FirstBranch::FullHomogenized => self.full_homogenized += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsequentDispatch {
    pub cached_stratified: u64,
    pub microwalk: u64,
    pub microwalk_e: u64,
    pub fdm: u64,
}

impl SubsequentDispatch {
    pub fn total(&self) -> u64 {
        self.cached_stratified + self.microwalk + self.microwalk_e + self.fdm
    }

    fn record(&mut self, p: TransitionPath) {
        match p {
            TransitionPath::CachedStratified => self.cached_stratified += 1,
            TransitionPath::MicroWalk => self.microwalk += 1,
            TransitionPath::MicroWalkE => self.microwalk_e += 1,
            TransitionPath::Fdm => self.fdm += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DispatchStats {
    pub first: FirstDispatch,
    pub subsequent: SubsequentDispatch,
    /// MicroWalk-E cubes whose centre was engulfed, walked without expansion.
    pub expansion_fallbacks: u64,
    pub gaussian_resamples: u64,
    pub hop_cap_aborts: u64,
    pub micro_steps: u64,
}

impl DispatchStats {
    fn merge(&mut self, o: &DispatchStats) {
        self.first.stratified += o.first.stratified;
        self.first.shrink += o.first.shrink;
        self.first.layer_homogenized += o.first.layer_homogenized;
        self.first.full_homogenized += o.first.full_homogenized;
        self.subsequent.cached_stratified += o.subsequent.cached_stratified;
        self.subsequent.microwalk += o.subsequent.microwalk;
        self.subsequent.microwalk_e += o.subsequent.microwalk_e;
        self.subsequent.fdm += o.subsequent.fdm;
        self.expansion_fallbacks += o.expansion_fallbacks;
        self.gaussian_resamples += o.gaussian_resamples;
        self.hop_cap_aborts += o.hop_cap_aborts;
        self.micro_steps += o.micro_steps;
    }
}

/// Per-walk bookkeeping, merged in walk order.
#[derive(Debug, Clone, Default)]
pub struct WalkTally {
    pub dispatch: DispatchStats,
    pub micro_walk_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    Conductor(u32),
    Ground,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacitanceEntry {
    pub terminal: Terminal,
    /// Maxwell capacitance in farads.
    pub value: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub micro_walk_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacitanceResult {
    pub master: u32,
    pub entries: Vec<CapacitanceEntry>,
    pub walks: u64,
    pub converged: bool,
    pub dispatch: DispatchStats,
    pub cache: CacheStats,
    pub timings: Timings,
}

impl CapacitanceResult {
    pub fn entry(&self, terminal: Terminal) -> Option<&CapacitanceEntry> {
        self.entries.iter().find(|e| e.terminal == terminal)
    }

    pub fn self_capacitance(&self) -> &CapacitanceEntry {
        self.entry(Terminal::Conductor(self.master)).expect("master entry")
    }

    /// Conductor couplings (excluding the master and the virtual ground).
    pub fn couplings(&self) -> impl Iterator<Item = &CapacitanceEntry> {
        let master = self.master;
        self.entries
            .iter()
            .filter(move |e| matches!(e.terminal, Terminal::Conductor(id) if id != master))
    }

    pub fn largest_coupling(&self) -> Option<&CapacitanceEntry> {
        self.couplings().max_by(|a, b| a.value.abs().total_cmp(&b.value.abs()))
    }
}

struct WalkOutcome {
    terminal: usize,
    weight: f64,
    tally: WalkTally,
}

/// A configured extraction over one structure and SGF cache.
pub struct Engine<'a> {
    s: &'a Structure,
    cfg: Config,
    cache: &'a SgfCache,
    surface: GaussianSurface,
    snap: f64,
    terminals: Vec<Terminal>,
}

impl<'a> Engine<'a> {
    pub fn new(s: &'a Structure, cfg: Config, cache: &'a SgfCache) -> Result<Self> {
        cfg.validate()?;
        if cache.n() != cfg.grid_n {
            return Err(Error::Config(format!(
                "cache lattice size {} differs from grid_n {}",
                cache.n(),
                cfg.grid_n
            )));
        }
        let surface = gaussian_surface(s, cfg.gaussian_gap_fraction)?;
        let snap = cfg.snap_tol * surface.min_half_extent();
        let mut terminals: Vec<Terminal> = s.conductors().iter().map(|c| Terminal::Conductor(c.id)).collect();
        terminals.push(Terminal::Ground);
        Ok(Self { s, cfg, cache, surface, snap, terminals })
    }

    pub fn config(&self) -> &Config {
        &self.cfg
    }

    pub fn surface(&self) -> &GaussianSurface {
        &self.surface
    }

    /// Absolute snapping distance (nm).
    pub fn snap_distance(&self) -> f64 {
        self.snap
    }

    fn terminal_index(&self, t: Terminal) -> usize {
        self.terminals.iter().position(|&x| x == t).expect("known terminal")
    }

    fn voxels(&self, cube: Cube) -> Result<CubeVoxels> {
        CubeVoxels::new(self.s, cube, self.cfg.grid_n, false)
    }

    /// Stratified profile for the first cube, following the ladder: the cube
    /// itself, a concentric shrink, slice homogenization, whole-cube averaging.
    fn first_profile(&self, p: Point, half_width: f64) -> Result<(Cube, ProfileKey, FirstBranch)> {
        let n = self.cfg.grid_n;
        let cube = Cube::new(p, half_width);
        let base = self.voxels(cube)?;
        if base.classify().is_stratified() {
            return Ok((cube, ProfileKey::from_view(&base)?, FirstBranch::Stratified));
        }
        for f in SHRINK_FACTORS {
            let shrunk = Cube::new(p, f * half_width);
            let v = self.voxels(shrunk)?;
            if v.classify().is_stratified() {
                return Ok((shrunk, ProfileKey::from_view(&v)?, FirstBranch::Shrink));
            }
        }
        let (mean, var) = base.volume_stats();
        let total = var * (n * n * n) as f64;
        let (axis, (profile, within)) = Axis::ALL
            .into_iter()
            .map(|a| (a, base.slice_averages(a)))
            .min_by(|x, y| x.1 .1.total_cmp(&y.1 .1))
            .expect("three axes");
        if within <= LAYER_VARIANCE_SHARE * total {
            return Ok((cube, ProfileKey::stratified(n, axis, &profile), FirstBranch::LayerHomogenized));
        }
        Ok((cube, ProfileKey::uniform(n, mean), FirstBranch::FullHomogenized))
    }

    /// Weighted first hop from a Gaussian-surface sample. `None` when the
    /// sample sits too close to a conductor and must be redrawn.
    pub fn first_transition<R: Rng + ?Sized>(&self, smp: &SurfaceSample, rng: &mut R) -> Result<Option<FirstStep>> {
        let p = smp.point;
        let half_width = match self.s.max_free_cube(p) {
            Ok((hw, _)) => hw,
            Err(Error::InsideConductor { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        if half_width < self.snap {
            return Ok(None);
        }
        let (cube, key, branch) = self.first_profile(p, half_width)?;
        let sgf = self.cache.get(&key)?;
        let x = sgf.sample(rng);
        let kernel = sgf.grad_kernel(smp.axis)[x];
        let prob = sgf.probs()[x];
        let eps_r = self.s.permittivity_at(p)?;
        // outward flux of -eps grad(phi), estimated through one sampled panel
        let weight = -smp.area * EPS0 * eps_r * smp.sign * kernel / (cube.half_width * NM * prob);
        Ok(Some(FirstStep {
            next: panel_point(&cube, self.cfg.grid_n, x),
            weight,
            branch,
            cube,
        }))
    }

    fn micro_walk<R: Rng + ?Sized>(&self, voxels: &CubeVoxels, rng: &mut R, tally: &mut WalkTally) -> Result<Transit> {
        let t = MicroWalker::new(voxels)?.transit(rng)?;
        tally.dispatch.micro_steps += t.steps;
        Ok(t)
    }

    /// One hop of a walk currently at `p`.
    pub fn transition<R: Rng + ?Sized>(&self, p: Point, rng: &mut R, tally: &mut WalkTally) -> Result<WalkEvent> {
        if let Some(id) = self.s.conductor_at(p, self.snap) {
            return Ok(WalkEvent::Terminate(id));
        }
        if self.s.world().wall_distance(p) <= self.snap {
            return Ok(WalkEvent::TerminateGround);
        }
        let n = self.cfg.grid_n;
        let (half_width, _) = self.s.max_free_cube(p)?;
        let cube = Cube::new(p, half_width);
        let voxels = self.voxels(cube)?;
        let mode = self.cfg.mode;
        if mode.uses_cache() && voxels.classify().is_stratified() {
            let sgf = self.cache.get(&ProfileKey::from_view(&voxels)?)?;
            let panel = sgf.sample(rng);
            tally.dispatch.subsequent.record(TransitionPath::CachedStratified);
            return Ok(WalkEvent::Continue(panel_point(&cube, n, panel)));
        }
        match mode {
            Mode::Fdm => {
                let dist = solve_absorption_row(&assemble_system(&voxels)?)?;
                let panel = dist.sample(rng);
                tally.dispatch.subsequent.record(TransitionPath::Fdm);
                Ok(WalkEvent::Continue(panel_point(&cube, n, panel)))
            }
            Mode::Mw | Mode::HybridMw => {
                let start = Instant::now();
                let t = self.micro_walk(&voxels, rng, tally)?;
                tally.micro_walk_seconds += start.elapsed().as_secs_f64();
                tally.dispatch.subsequent.record(TransitionPath::MicroWalk);
                Ok(WalkEvent::Continue(t.exit.point))
            }
            Mode::Mwe | Mode::HybridMwe => {
                let start = Instant::now();
                let big = expanded_cube(self.s, p, half_width, self.cfg.expansion);
                let expanded = CubeVoxels::new(self.s, big, n, true)?;
                let t = match MicroWalker::new(&expanded) {
                    Ok(mut w) => {
                        tally.dispatch.subsequent.record(TransitionPath::MicroWalkE);
                        let t = w.transit(rng)?;
                        tally.dispatch.micro_steps += t.steps;
                        t
                    }
                    Err(Error::EngulfedCentre) => {
                        tally.dispatch.expansion_fallbacks += 1;
                        tally.dispatch.subsequent.record(TransitionPath::MicroWalk);
                        self.micro_walk(&voxels, rng, tally)?
                    }
                    Err(e) => return Err(e),
                };
                tally.micro_walk_seconds += start.elapsed().as_secs_f64();
                Ok(match t.exit.kind {
                    ExitKind::Conductor(id) => WalkEvent::Terminate(id),
                    ExitKind::SurfacePanel(_) => WalkEvent::Continue(t.exit.point),
                })
            }
        }
    }

    fn run_walk(&self, index: u64) -> Result<WalkOutcome> {
        let mut rng: WalkRng = stream(self.cfg.seed, index);
        let mut tally = WalkTally::default();
        let mut resamples = 0;
        let first = loop {
            let smp = self.surface.sample(&mut rng);
            if let Some(f) = self.first_transition(&smp, &mut rng)? {
                break f;
            }
            resamples += 1;
            tally.dispatch.gaussian_resamples += 1;
            if resamples >= MAX_GAUSSIAN_RESAMPLES {
                return Err(Error::Validation("Gaussian surface samples keep landing on conductors".into()));
            }
        };
        tally.dispatch.first.record(first.branch);
        let mut p = first.next;
        let mut hops = 0;
        let terminal = loop {
            if hops >= self.cfg.hop_cap {
                tally.dispatch.hop_cap_aborts += 1;
                break Terminal::Ground;
            }
            match self.transition(p, &mut rng, &mut tally)? {
                WalkEvent::Continue(q) => p = q,
                WalkEvent::Terminate(id) => break Terminal::Conductor(id),
                WalkEvent::TerminateGround => break Terminal::Ground,
            }
            hops += 1;
        };
        Ok(WalkOutcome { terminal: self.terminal_index(terminal), weight: first.weight, tally })
    }

    /// Run walks in batches until the tolerance is met or `max_walks` is reached.
    pub fn extract(&self) -> Result<CapacitanceResult> {
        let start = Instant::now();
        let k = self.terminals.len();
        let mut s1 = vec![0.0; k];
        let mut s2 = vec![0.0; k];
        let mut dispatch = DispatchStats::default();
        let mut micro_walk_s = 0.0;
        let mut walks = 0u64;
        let mut converged = false;
        let master = self.terminal_index(Terminal::Conductor(self.s.master_id()));
        while walks < self.cfg.max_walks {
            let end = (walks + self.cfg.batch).min(self.cfg.max_walks);
            let outcomes: Vec<WalkOutcome> =
                (walks..end).into_par_iter().map(|i| self.run_walk(i)).collect::<Result<_>>()?;
            for o in &outcomes {
                s1[o.terminal] += o.weight;
                s2[o.terminal] += o.weight * o.weight;
                dispatch.merge(&o.tally.dispatch);
                micro_walk_s += o.tally.micro_walk_seconds;
            }
            walks = end;
            let entries = self.entries(&s1, &s2, walks);
            let rel = |e: &CapacitanceEntry| e.std_err / e.value.abs();
            let self_ok = rel(&entries[master]) < self.cfg.rel_std_tol;
            let coupling_ok = entries
                .iter()
                .enumerate()
                .filter(|(i, e)| *i != master && matches!(e.terminal, Terminal::Conductor(_)))
                .max_by(|a, b| a.1.value.abs().total_cmp(&b.1.value.abs()))
                .is_none_or(|(_, e)| rel(e) < self.cfg.rel_std_tol);
            log::debug!(
                "{walks} walks: C_self = {:.4e} +- {:.2e}",
                entries[master].value,
                entries[master].std_err
            );
            if walks >= self.cfg.min_walks && self_ok && coupling_ok {
                converged = true;
                break;
            }
        }
        if dispatch.hop_cap_aborts > 0 {
            log::warn!("{} walks hit the hop cap and were counted as grounded", dispatch.hop_cap_aborts);
        }
        let entries = self.entries(&s1, &s2, walks);
        if !(entries[master].value.is_finite()) {
            return Err(Error::Validation("no finite estimate for the master conductor".into()));
        }
        Ok(CapacitanceResult {
            master: self.s.master_id(),
            entries,
            walks,
            converged,
            dispatch,
            cache: self.cache.stats(),
            timings: Timings { micro_walk_s, total_s: start.elapsed().as_secs_f64() },
        })
    }

    fn entries(&self, s1: &[f64], s2: &[f64], walks: u64) -> Vec<CapacitanceEntry> {
        let w = walks as f64;
        self.terminals
            .iter()
            .enumerate()
            .map(|(i, &terminal)| {
                let mean = s1[i] / w;
                let var = if walks > 1 { ((s2[i] - w * mean * mean) / (w - 1.0)).max(0.0) } else { 0.0 };
                CapacitanceEntry { terminal, value: mean, std_err: (var / w).sqrt() }
            })
            .collect()
    }
}

/// Extract the master conductor's capacitance row with a fresh SGF cache.
pub fn extract(s: &Structure, cfg: &Config) -> Result<CapacitanceResult> {
    let cache = SgfCache::with_capacity(cfg.grid_n, cfg.cache_capacity);
    Engine::new(s, cfg.clone(), &cache)?.extract()
}

/// Extraction sharing a caller-owned (possibly pre-loaded) SGF cache.
pub fn extract_with_cache(s: &Structure, cfg: &Config, cache: &SgfCache) -> Result<CapacitanceResult> {
    Engine::new(s, cfg.clone(), cache)?.extract()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Conductor, Cuboid, Dielectric};

    fn plates(eps: f64) -> Structure {
        Structure::new(
            vec![
                Conductor { id: 1, bounds: Cuboid::new([0.0, 0.0, 0.0], [100.0, 100.0, 10.0]).unwrap() },
                Conductor { id: 2, bounds: Cuboid::new([0.0, 0.0, 30.0], [100.0, 100.0, 40.0]).unwrap() },
            ],
            vec![Dielectric { bounds: Cuboid::new([-50.0, -50.0, 20.0], [150.0, 150.0, 60.0]).unwrap(), eps_r: eps }],
            1.0,
            Cuboid::new([-300.0, -300.0, -300.0], [400.0, 400.0, 400.0]).unwrap(),
            1,
        )
        .unwrap()
    }

    fn quick(mode: Mode) -> Config {
        Config { grid_n: 6, mode, min_walks: 512, max_walks: 512, batch: 256, seed: 11, ..Config::default() }
    }

    #[test]
    fn snapping_terminates_near_conductors() {
        let s = plates(1.0);
        let cache = SgfCache::new(6);
        let e = Engine::new(&s, quick(Mode::HybridMw), &cache).unwrap();
        let mut tally = WalkTally::default();
        let p = [50.0, 50.0, 10.0 + 0.3 * e.snap_distance()];
        let ev = e.transition(p, &mut stream(0, 0), &mut tally).unwrap();
        assert_eq!(ev, WalkEvent::Terminate(1));
        let far = [399.9999999, 0.0, 0.0];
        assert_eq!(e.transition(far, &mut stream(0, 0), &mut tally).unwrap(), WalkEvent::TerminateGround);
    }

    #[test]
    fn stratified_first_cube_uses_cache() {
        let s = plates(3.9);
        let cache = SgfCache::new(6);
        let e = Engine::new(&s, quick(Mode::HybridMw), &cache).unwrap();
        let smp = SurfaceSample { point: [50.0, 50.0, 15.0], axis: 2, sign: 1.0, area: 1e-15 };
        let step = e.first_transition(&smp, &mut stream(4, 0)).unwrap().unwrap();
        assert_eq!(step.branch, FirstBranch::Stratified);
        assert_eq!(cache.stats().misses, 1);
        assert!(step.weight.is_finite());
    }

    #[test]
    fn seeded_runs_are_identical_and_accounted() {
        let s = plates(3.9);
        let cfg = quick(Mode::HybridMwe);
        let a = extract(&s, &cfg).unwrap();
        let b = extract(&s, &cfg).unwrap();
        assert_eq!(a.entries, b.entries);
        assert_eq!(a.dispatch, b.dispatch);
        assert_eq!(a.walks, 512);
        assert_eq!(a.dispatch.first.total(), 512);
        assert!(a.self_capacitance().value > 0.0);
    }
}
