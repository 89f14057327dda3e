//! Transitions by direct simulation of the lattice's absorbing Markov chain.
//!
//! From interior node `v` the chain moves to neighbour `i` with probability
//! `beta_i = alpha_i / sum(alpha)`, where `alpha_i` is the finite-difference
//! coupling. Surface panels and conductor faces absorb. The exit panel is
//! distributed exactly as the centre row of `A_II^-1 A_IB`, so no linear
//! system is ever assembled.

use rand::Rng;
use rustc_hash::FxHashMap;

use crate::geometry::{Cube, CubeVoxels, Lattice, Point, Structure};
use crate::rng::uniform;
use crate::sgf::{center_nodes, exit_panel, panel_point, DIRECTIONS};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    /// Cube-surface panel index; the macro walk continues from `point`.
    SurfacePanel(usize),
    /// Absorbed on a conductor face inside an expanded cube.
    Conductor(u32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exit {
    pub kind: ExitKind,
    pub point: Point,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transit {
    pub exit: Exit,
    pub steps: u64,
}

/// Couplings to the six neighbours of `node`, in [`DIRECTIONS`] order.
pub fn neighbor_alphas<L: Lattice + ?Sized>(grid: &L, node: [usize; 3]) -> [f64; 6] {
    let n = grid.n();
    let eps_v = grid.eps(node);
    let mut alpha = [1.0; 6];
    for (dir, &(axis, step)) in DIRECTIONS.iter().enumerate() {
        let coord = node[axis] as isize + step;
        if coord < 0 || coord >= n as isize {
            continue;
        }
        let mut nb = node;
        nb[axis] = coord as usize;
        if grid.conductor(nb).is_some() {
            continue;
        }
        let eps_i = grid.eps(nb);
        alpha[dir] = eps_i / (eps_i + eps_v);
    }
    alpha
}

/// Normalized transition probabilities out of interior `node`.
pub fn neighbor_weights<L: Lattice + ?Sized>(grid: &L, node: [usize; 3]) -> [f64; 6] {
    let alpha = neighbor_alphas(grid, node);
    let total: f64 = alpha.iter().sum();
    alpha.map(|a| a / total)
}

fn cumulative(beta: [f64; 6]) -> [f64; 6] {
    let mut c = [0.0; 6];
    let mut acc = 0.0;
    for (slot, b) in c.iter_mut().zip(beta) {
        acc += b;
        *slot = acc;
    }
    c[5] = 1.0;
    c
}

/// Walker over one lattice. Transition tables are memoized per transit;
/// sampled trajectories do not depend on whether memoization is enabled.
pub struct MicroWalker<'a, L: Lattice + ?Sized> {
    grid: &'a L,
    memo: Option<FxHashMap<u32, [f64; 6]>>,
    step_cap: u64,
    starts: Vec<[usize; 3]>,
}

impl<'a, L: Lattice + ?Sized> MicroWalker<'a, L> {
    pub fn new(grid: &'a L) -> Result<Self> {
        let n = grid.n();
        let starts: Vec<_> = center_nodes(n).into_iter().filter(|&c| grid.conductor(c).is_none()).collect();
        if starts.is_empty() {
            return Err(Error::EngulfedCentre);
        }
        Ok(Self {
            grid,
            memo: Some(FxHashMap::default()),
            step_cap: default_step_cap(n),
            starts,
        })
    }

    pub fn with_memo(mut self, enabled: bool) -> Self {
        self.memo = enabled.then(FxHashMap::default);
        self
    }

    pub fn with_step_cap(mut self, cap: u64) -> Self {
        self.step_cap = cap;
        self
    }

    #[inline]
    fn table(&mut self, node: [usize; 3]) -> [f64; 6] {
        let grid = self.grid;
        match &mut self.memo {
            Some(memo) => {
                let n = grid.n();
                let key = (node[0] + n * (node[1] + n * node[2])) as u32;
                *memo.entry(key).or_insert_with(|| cumulative(neighbor_weights(grid, node)))
            }
            None => cumulative(neighbor_weights(grid, node)),
        }
    }

    /// One transit from the cube centre to an absorbing panel. For even `n`
    /// the start is one of the middle 2x2x2 nodes, drawn uniformly.
    pub fn transit<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Transit> {
        let n = self.grid.n();
        let mut node = if self.starts.len() == 1 {
            self.starts[0]
        } else {
            let k = (uniform(rng) * self.starts.len() as f64) as usize;
            self.starts[k.min(self.starts.len() - 1)]
        };
        if let Some(memo) = &mut self.memo {
            memo.clear();
        }
        let mut steps = 0u64;
        loop {
            if steps >= self.step_cap {
                return Err(Error::StepCap(self.step_cap));
            }
            let cdf = self.table(node);
            let u = uniform(rng);
            let dir = cdf.iter().position(|&c| u < c).unwrap_or(5);
            steps += 1;
            let (axis, step) = DIRECTIONS[dir];
            let coord = node[axis] as isize + step;
            let cube = self.grid.cube();
            if coord < 0 || coord >= n as isize {
                let panel = exit_panel(n, node, dir);
                let point = panel_point(&cube, n, panel);
                return Ok(Transit { exit: Exit { kind: ExitKind::SurfacePanel(panel), point }, steps });
            }
            let mut next = node;
            next[axis] = coord as usize;
            if let Some(id) = self.grid.conductor(next) {
                let mut point = cube.node_point(node, n);
                point[axis] += 0.5 * cube.pitch(n) * step as f64;
                return Ok(Transit { exit: Exit { kind: ExitKind::Conductor(id), point }, steps });
            }
            node = next;
        }
    }
}

pub fn default_step_cap(n: usize) -> u64 {
    1000 * (n as u64) * (n as u64)
}

/// One MicroWalk transit through a conductor-free lattice.
pub fn microwalk_transit<L: Lattice + ?Sized, R: Rng + ?Sized>(grid: &L, rng: &mut R) -> Result<Exit> {
    if grid.has_conductors() {
        return Err(Error::Validation("plain MicroWalk needs a conductor-free lattice".into()));
    }
    Ok(MicroWalker::new(grid)?.transit(rng)?.exit)
}

/// Expanded cube around `center`: `expansion` times the free half-width,
/// clipped to the world box only.
pub fn expanded_cube(s: &Structure, center: Point, base_half_width: f64, expansion: f64) -> Cube {
    let hw = (expansion * base_half_width).min(s.world().wall_distance(center));
    Cube::new(center, hw)
}

/// MicroWalk-E: a transit through an expanded cube that may contain
/// conductors, whose faces absorb the walk.
pub fn microwalk_e_transit<R: Rng + ?Sized>(
    s: &Structure,
    center: Point,
    base_half_width: f64,
    expansion: f64,
    n: usize,
    rng: &mut R,
) -> Result<Transit> {
    if expansion < 1.0 {
        return Err(Error::Config(format!("expansion {expansion} must be at least 1")));
    }
    let cube = expanded_cube(s, center, base_half_width, expansion);
    let voxels = CubeVoxels::new(s, cube, n, true)?;
    MicroWalker::new(&voxels)?.transit(rng)
}
