//! Analytic and randomized fixtures.

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::geometry::{Cube, DielectricGrid};
use crate::sgf::face_axes;
use crate::{Error, Result, EPS0};

/// Series parallel-plate capacitance `eps0 * area / sum(d_k / eps_k)`;
/// thicknesses in metres, area in m^2.
pub fn analytic_plate_capacitance(layers: &[(f64, f64)], area: f64) -> Result<f64> {
    if layers.is_empty() {
        return Err(Error::Validation("no dielectric layers".into()));
    }
    let mut resistance = 0.0;
    for &(d, eps) in layers {
        if !(d > 0.0) || !(eps > 0.0) {
            return Err(Error::Validation(format!("layer ({d}, {eps}) must have positive thickness and eps")));
        }
        resistance += d / eps;
    }
    Ok(EPS0 * area / resistance)
}

fn exp_draw<R: Rng + ?Sized>(dist: &Exp<f64>, rng: &mut R) -> f64 {
    // a zero draw has probability zero but would break positivity
    dist.sample(rng).max(1e-12)
}

/// Every voxel drawn independently from Exp(0.1).
pub fn random_exp_grid<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DielectricGrid {
    let dist = Exp::new(0.1).expect("positive rate");
    let eps = (0..n * n * n).map(|_| exp_draw(&dist, rng)).collect();
    DielectricGrid::from_eps(n, eps, Cube::new([0.0; 3], 1.0)).expect("positive permittivities")
}

/// Background plus `blocks` randomly placed boxes, each permittivity from Exp(0.1).
pub fn random_block_grid<R: Rng + ?Sized>(n: usize, blocks: usize, rng: &mut R) -> DielectricGrid {
    let dist = Exp::new(0.1).expect("positive rate");
    let mut eps = vec![exp_draw(&dist, rng); n * n * n];
    for _ in 0..blocks {
        let value = exp_draw(&dist, rng);
        let mut lo = [0; 3];
        let mut hi = [0; 3];
        for k in 0..3 {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            lo[k] = a.min(b);
            hi[k] = a.max(b) + 1;
        }
        for z in lo[2]..hi[2] {
            for y in lo[1]..hi[1] {
                for x in lo[0]..hi[0] {
                    eps[x + n * (y + n * z)] = value;
                }
            }
        }
    }
    DielectricGrid::from_eps(n, eps, Cube::new([0.0; 3], 1.0)).expect("positive permittivities")
}

/// One of the 48 symmetries of the cube: new axis `perm[k]` receives old
/// axis `k`, mirrored when `flip[k]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CubeSymmetry {
    pub perm: [usize; 3],
    pub flip: [bool; 3],
}

impl CubeSymmetry {
    pub fn all() -> Vec<CubeSymmetry> {
        const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let mut out = Vec::with_capacity(48);
        for perm in PERMS {
            for bits in 0..8u8 {
                out.push(CubeSymmetry { perm, flip: [bits & 1 != 0, bits & 2 != 0, bits & 4 != 0] });
            }
        }
        out
    }

    /// Image of an integer coordinate triple; -1 and n (just outside) are allowed.
    fn map(&self, c: [isize; 3], n: usize) -> [isize; 3] {
        let mut out = [0; 3];
        for k in 0..3 {
            out[self.perm[k]] = if self.flip[k] { n as isize - 1 - c[k] } else { c[k] };
        }
        out
    }

    pub fn apply_node(&self, node: [usize; 3], n: usize) -> [usize; 3] {
        self.map(node.map(|v| v as isize), n).map(|v| v as usize)
    }

    /// Image of a surface panel index.
    pub fn apply_panel(&self, panel: usize, n: usize) -> usize {
        let face = panel / (n * n);
        let (j, k) = ((panel % (n * n)) / n, panel % n);
        let axis = face / 2;
        let (b, c) = face_axes(axis);
        // the panel as the virtual node just outside the face
        let mut coord = [0isize; 3];
        coord[axis] = if face % 2 == 0 { -1 } else { n as isize };
        coord[b] = j as isize;
        coord[c] = k as isize;
        let m = self.map(coord, n);
        let axis = (0..3).find(|&a| m[a] < 0 || m[a] >= n as isize).expect("outside node");
        let face = 2 * axis + usize::from(m[axis] >= 0);
        let (b, c) = face_axes(axis);
        face * n * n + m[b] as usize * n + m[c] as usize
    }

    /// Permute a node-indexed lattice array under this symmetry.
    pub fn apply_grid(&self, grid: &DielectricGrid) -> DielectricGrid {
        use crate::geometry::Lattice;
        let n = grid.n();
        let mut eps = vec![0.0; n * n * n];
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    let m = self.apply_node([x, y, z], n);
                    eps[m[0] + n * (m[1] + n * m[2])] = grid.eps([x, y, z]);
                }
            }
        }
        DielectricGrid::from_eps(n, eps, grid.cube()).expect("permuted grid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn plate_formulas() {
        let a = 1e-12;
        let one = analytic_plate_capacitance(&[(1e-7, 3.9)], a).unwrap();
        assert!((one - EPS0 * 3.9 * a / 1e-7).abs() < 1e-30);
        let split = analytic_plate_capacitance(&[(0.5e-7, 3.9), (0.5e-7, 3.9)], a).unwrap();
        let double = analytic_plate_capacitance(&[(1e-7, 3.9)], a).unwrap();
        assert!((split - double).abs() < 1e-12 * double);
        let mixed = analytic_plate_capacitance(&[(1e-7, 3.9), (1e-7, 22.0)], a).unwrap();
        assert!((1.0 / mixed - (1e-7 / 3.9 + 1e-7 / 22.0) / (EPS0 * a)).abs() < 1e-9 / mixed);
        assert!(analytic_plate_capacitance(&[], a).is_err());
        assert!(analytic_plate_capacitance(&[(0.0, 1.0)], a).is_err());
    }

    #[test]
    fn symmetries_are_bijections() {
        let n = 3;
        let all = CubeSymmetry::all();
        assert_eq!(all.len(), 48);
        for g in &all {
            let mut seen = vec![false; 6 * n * n];
            for p in 0..6 * n * n {
                let q = g.apply_panel(p, n);
                assert!(!seen[q]);
                seen[q] = true;
            }
        }
    }

    #[test]
    fn random_grids_are_valid() {
        let mut rng = stream(1, 1);
        let g = random_exp_grid(4, &mut rng);
        assert!(g.eps_values().iter().all(|&e| e > 0.0));
        let b = random_block_grid(6, 3, &mut rng);
        assert_eq!(b.eps_values().len(), 216);
    }
}
