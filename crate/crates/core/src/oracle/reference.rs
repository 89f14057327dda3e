//! Whole-domain finite-difference capacitance solver on a graded,
//! box-conforming tensor mesh.
//!
//! Every box face is a mesh plane, so each cell is entirely inside or outside
//! every conductor and dielectric. Cell size is `h` inside the conductor
//! bounding box and grows linearly (`h + g*d`) with the distance `d` from it.
//! Free cells carry unknown potentials; conductor cells and the world walls
//! are Dirichlet. Face conductances use the series (harmonic) rule.

use serde::{Deserialize, Serialize};

use crate::geometry::Structure;
use crate::sgf::{solve_spd_plain, CsrMatrix, SolverOptions};
use crate::{Error, Result, EPS0, NM};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    /// Fine cells across the thinnest side of the conductor bounding box.
    pub resolution: usize,
    /// Growth rate of the cell size away from the conductors.
    pub grading: f64,
    pub rel_tol: f64,
    /// Refuse meshes with more cells than this.
    pub max_cells: usize,
    pub keep_potential: bool,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            resolution: 32,
            grading: 0.3,
            rel_tol: 1e-9,
            max_cells: 6_000_000,
            keep_potential: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSolution {
    pub resolution: usize,
    pub cells: [usize; 3],
    /// Conductor ids, in the row/column order of `matrix`.
    pub ids: Vec<u32>,
    /// Maxwell capacitance matrix in farads; `matrix[k][j]` is the charge on
    /// conductor `ids[k]` with `ids[j]` at 1 V and the rest grounded. Rows for
    /// excitations that were not solved are NaN.
    pub matrix: Vec<Vec<f64>>,
    /// Largest final relative residual over the solves.
    pub residual: f64,
    /// Potential of the last excitation, cell-indexed `x + nx*(y + ny*z)`.
    #[serde(skip)]
    pub potential: Option<Vec<f64>>,
}

impl ReferenceSolution {
    fn index_of(&self, id: u32) -> Option<usize> {
        self.ids.iter().position(|&x| x == id)
    }

    /// `C[i][j]` by conductor id.
    pub fn get(&self, i: u32, j: u32) -> Option<f64> {
        Some(self.matrix[self.index_of(i)?][self.index_of(j)?])
    }

    /// Charges induced on all conductors when `master` is at 1 V.
    pub fn row(&self, master: u32) -> Option<Vec<(u32, f64)>> {
        let j = self.index_of(master)?;
        Some(self.ids.iter().enumerate().map(|(k, &id)| (id, self.matrix[k][j])).collect())
    }

    /// Largest `|C_ij - C_ji| / max|C|` over solved pairs.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.matrix.iter().flatten().filter(|v| v.is_finite()).fold(0.0f64, |m, v| m.max(v.abs()));
        let mut worst = 0.0f64;
        for i in 0..self.ids.len() {
            for j in 0..i {
                let (a, b) = (self.matrix[i][j], self.matrix[j][i]);
                if a.is_finite() && b.is_finite() {
                    worst = worst.max((a - b).abs() / scale);
                }
            }
        }
        worst
    }
}

/// One mesh axis: node coordinates, strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisMesh {
    pub nodes: Vec<f64>,
}

impl AxisMesh {
    pub fn cells(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn width(&self, i: usize) -> f64 {
        self.nodes[i + 1] - self.nodes[i]
    }

    pub fn center(&self, i: usize) -> f64 {
        0.5 * (self.nodes[i] + self.nodes[i + 1])
    }
}

/// Stretched coordinate `F(x) = ∫ dx / (h + g*dist(x, [c0, c1]))` and its inverse.
struct Stretch {
    h: f64,
    g: f64,
    c0: f64,
    c1: f64,
}

impl Stretch {
    fn forward(&self, x: f64) -> f64 {
        if x < self.c0 {
            -((self.h + self.g * (self.c0 - x)) / self.h).ln() / self.g
        } else if x <= self.c1 {
            (x - self.c0) / self.h
        } else {
            (self.c1 - self.c0) / self.h + ((self.h + self.g * (x - self.c1)) / self.h).ln() / self.g
        }
    }

    fn inverse(&self, f: f64) -> f64 {
        let f1 = (self.c1 - self.c0) / self.h;
        if f < 0.0 {
            self.c0 - self.h / self.g * ((-self.g * f).exp() - 1.0)
        } else if f <= f1 {
            self.c0 + f * self.h
        } else {
            self.c1 + self.h / self.g * ((self.g * (f - f1)).exp() - 1.0)
        }
    }
}

/// Graded mesh along one axis through all `breakpoints` (sorted, within the world).
pub fn graded_axis(breakpoints: &[f64], core: (f64, f64), h: f64, grading: f64) -> AxisMesh {
    let st = Stretch { h, g: grading, c0: core.0, c1: core.1 };
    let mut nodes = vec![breakpoints[0]];
    for w in breakpoints.windows(2) {
        let (a, b) = (w[0], w[1]);
        let inside_core = b > core.0 && a < core.1;
        let min_cells = if inside_core { 3 } else { 2 };
        let (fa, fb) = (st.forward(a), st.forward(b));
        let m = ((fb - fa).ceil() as usize).max(min_cells);
        for i in 1..m {
            nodes.push(st.inverse(fa + (fb - fa) * i as f64 / m as f64));
        }
        nodes.push(b);
    }
    AxisMesh { nodes }
}

fn breakpoints(s: &Structure, k: usize) -> Vec<f64> {
    let world = s.world();
    let mut v = vec![world.lo[k], world.hi[k]];
    for c in s.conductors() {
        v.extend([c.bounds.lo[k], c.bounds.hi[k]]);
    }
    for d in s.dielectrics() {
        v.extend([d.bounds.lo[k], d.bounds.hi[k]]);
    }
    v.retain(|x| *x >= world.lo[k] && *x <= world.hi[k]);
    v.sort_by(f64::total_cmp);
    let tol = 1e-9 * world.extent(k);
    v.dedup_by(|b, a| (*b - *a).abs() <= tol);
    v
}

/// Conforming graded mesh of the whole world box.
pub fn build_mesh(s: &Structure, resolution: usize, grading: f64) -> [AxisMesh; 3] {
    let mut core = [(0.0, 0.0); 3];
    for (k, slot) in core.iter_mut().enumerate() {
        let lo = s.conductors().iter().map(|c| c.bounds.lo[k]).fold(f64::INFINITY, f64::min);
        let hi = s.conductors().iter().map(|c| c.bounds.hi[k]).fold(f64::NEG_INFINITY, f64::max);
        *slot = (lo, hi);
    }
    let thinnest = core.iter().map(|(a, b)| b - a).fold(f64::INFINITY, f64::min);
    let h = thinnest / resolution as f64;
    [0, 1, 2].map(|k| graded_axis(&breakpoints(s, k), core[k], h, grading))
}

const FREE: u32 = u32::MAX;

struct Discretization {
    dims: [usize; 3],
    mesh: [AxisMesh; 3],
    eps: Vec<f64>,
    /// Conductor slot (index into the structure's conductor list) or `FREE`.
    owner: Vec<u32>,
    unknown: Vec<u32>,
}

impl Discretization {
    fn new(s: &Structure, mesh: [AxisMesh; 3]) -> Self {
        let dims = [mesh[0].cells(), mesh[1].cells(), mesh[2].cells()];
        let total = dims[0] * dims[1] * dims[2];
        let mut eps = Vec::with_capacity(total);
        let mut owner = Vec::with_capacity(total);
        let mut unknown = Vec::with_capacity(total);
        let mut next = 0u32;
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    let p = [mesh[0].center(x), mesh[1].center(y), mesh[2].center(z)];
                    eps.push(s.eps_unchecked(p));
                    let slot = s.conductors().iter().position(|c| c.bounds.contains(p));
                    match slot {
                        Some(i) => {
                            owner.push(i as u32);
                            unknown.push(FREE);
                        }
                        None => {
                            owner.push(FREE);
                            unknown.push(next);
                            next += 1;
                        }
                    }
                }
            }
        }
        Self { dims, mesh, eps, owner, unknown }
    }

    fn index(&self, c: [usize; 3]) -> usize {
        c[0] + self.dims[0] * (c[1] + self.dims[1] * c[2])
    }

    fn coords(&self, i: usize) -> [usize; 3] {
        let x = i % self.dims[0];
        let y = (i / self.dims[0]) % self.dims[1];
        [x, y, i / (self.dims[0] * self.dims[1])]
    }

    fn face_area(&self, c: [usize; 3], axis: usize) -> f64 {
        let (b, d) = ((axis + 1) % 3, (axis + 2) % 3);
        self.mesh[b].width(c[b]) * self.mesh[d].width(c[d])
    }

    /// Half-cell resistance of cell `i` across `axis`.
    fn half(&self, i: usize, c: [usize; 3], axis: usize) -> f64 {
        self.mesh[axis].width(c[axis]) / (2.0 * self.eps[i])
    }

    fn neighbour(&self, c: [usize; 3], axis: usize, step: isize) -> Option<[usize; 3]> {
        let v = c[axis] as isize + step;
        if v < 0 || v >= self.dims[axis] as isize {
            return None;
        }
        let mut nb = c;
        nb[axis] = v as usize;
        Some(nb)
    }
}

const STEPS: [(usize, isize); 6] = [(0, -1), (0, 1), (1, -1), (1, 1), (2, -1), (2, 1)];

/// Maxwell matrix of all conductors.
pub fn reference_capacitance(s: &Structure, resolution: usize) -> Result<ReferenceSolution> {
    let ids: Vec<u32> = s.conductors().iter().map(|c| c.id).collect();
    reference_solve(s, &ids, &OracleOptions { resolution, ..OracleOptions::default() })
}

/// Only the column excited by `s.master_id()`, which equals the master's row.
pub fn reference_row(s: &Structure, opts: &OracleOptions) -> Result<ReferenceSolution> {
    reference_solve(s, &[s.master_id()], opts)
}

/// Solve the excitations listed in `excite` (conductor ids).
pub fn reference_solve(s: &Structure, excite: &[u32], opts: &OracleOptions) -> Result<ReferenceSolution> {
    if opts.resolution < 16 {
        return Err(Error::Config(format!("oracle resolution {} is below 16", opts.resolution)));
    }
    let mesh = build_mesh(s, opts.resolution, opts.grading);
    let dims = [mesh[0].cells(), mesh[1].cells(), mesh[2].cells()];
    let total = dims[0] * dims[1] * dims[2];
    if total > opts.max_cells {
        return Err(Error::TooLarge(total));
    }
    let disc = Discretization::new(s, mesh);
    let unknowns = disc.unknown.iter().filter(|&&u| u != FREE).count();

    // Conductance matrix over free cells; Dirichlet couplings kept per conductor.
    let mut builder = CsrMatrix::builder(unknowns, 7 * unknowns);
    let conductors = s.conductors().len();
    let mut dirichlet: Vec<Vec<(usize, f64)>> = vec![Vec::new(); conductors];
    let mut row_entries: Vec<(usize, f64)> = Vec::with_capacity(7);
    for i in 0..total {
        let u = disc.unknown[i];
        if u == FREE {
            continue;
        }
        let c = disc.coords(i);
        let mut diag = 0.0;
        row_entries.clear();
        for &(axis, step) in &STEPS {
            let area = disc.face_area(c, axis);
            let own = disc.half(i, c, axis);
            match disc.neighbour(c, axis, step) {
                None => diag += area / own,
                Some(nb) => {
                    let j = disc.index(nb);
                    if disc.owner[j] != FREE {
                        let g = area / own;
                        diag += g;
                        dirichlet[disc.owner[j] as usize].push((u as usize, g));
                    } else {
                        let g = area / (own + disc.half(j, nb, axis));
                        diag += g;
                        row_entries.push((disc.unknown[j] as usize, -g));
                    }
                }
            }
        }
        builder.push(u as usize, diag);
        for &(col, v) in &row_entries {
            builder.push(col, v);
        }
        builder.finish_row();
    }
    let a = builder.build();
    let solver = SolverOptions { rel_tol: opts.rel_tol, ..SolverOptions::default() };

    let mut matrix = vec![vec![f64::NAN; conductors]; conductors];
    let mut residual = 0.0f64;
    let mut potential = None;
    for &id in excite {
        let j = s
            .conductors()
            .iter()
            .position(|c| c.id == id)
            .ok_or_else(|| Error::Validation(format!("no conductor with id {id}")))?;
        let mut rhs = vec![0.0; unknowns];
        for &(u, g) in &dirichlet[j] {
            rhs[u] += g;
        }
        let (phi, stats) = solve_spd_plain(&a, &rhs, &solver)?;
        residual = residual.max(stats.residual);
        for (k, row) in matrix.iter_mut().enumerate() {
            let volts = if k == j { 1.0 } else { 0.0 };
            // flux leaving conductor k through its faces with free cells
            let q: f64 = dirichlet[k].iter().map(|&(u, g)| g * (volts - phi[u])).sum();
            row[j] = q * EPS0 * NM;
        }
        if opts.keep_potential {
            let mut full = vec![0.0; total];
            for i in 0..total {
                full[i] = match (disc.unknown[i], disc.owner[i]) {
                    (u, _) if u != FREE => phi[u as usize],
                    (_, o) if o as usize == j => 1.0,
                    _ => 0.0,
                };
            }
            potential = Some(full);
        }
    }
    Ok(ReferenceSolution {
        resolution: opts.resolution,
        cells: dims,
        ids: s.conductors().iter().map(|c| c.id).collect(),
        matrix,
        residual,
        potential,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stretch_round_trips() {
        let st = Stretch { h: 2.0, g: 0.3, c0: 0.0, c1: 10.0 };
        for x in [-500.0, -3.0, 0.0, 4.5, 10.0, 77.0, 1e4] {
            assert!((st.inverse(st.forward(x)) - x).abs() < 1e-9 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn mesh_conforms_and_grades() {
        let m = graded_axis(&[-1000.0, 0.0, 40.0, 100.0, 1000.0], (0.0, 100.0), 10.0, 0.3);
        for b in [-1000.0, 0.0, 40.0, 100.0, 1000.0] {
            assert!(m.nodes.contains(&b));
        }
        assert!(m.nodes.windows(2).all(|w| w[1] > w[0]));
        let inner = (0..m.cells()).filter(|&i| m.center(i) > 0.0 && m.center(i) < 100.0);
        assert!(inner.clone().all(|i| m.width(i) <= 10.0 + 1e-9));
        assert_eq!(inner.count(), 10);
        // coarse far away, a few dozen cells in total
        assert!(m.width(0) > 100.0);
        assert!(m.cells() < 60);
    }
}
