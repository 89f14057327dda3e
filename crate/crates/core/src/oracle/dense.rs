//! Exact absorbing-chain quantities of a small lattice by dense LU.
//!
//! Built straight from the transition probabilities of the walk on the
//! lattice, sharing no assembly or solver code with the sparse path.

use nalgebra::{DMatrix, DVector};

use crate::geometry::{DielectricGrid, Lattice};
use crate::{Error, Result};

pub const DEFAULT_DENSE_CAP: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct ExactChain {
    /// Absorption probabilities from the centre: the `6n^2` surface panels
    /// (face-major, face order -x,+x,-y,+y,-z,+z) followed by one entry per
    /// exposed conductor face, enumerated by voxel (x fastest) then direction.
    pub absorption: Vec<f64>,
    /// Conductor id of each conductor-face entry.
    pub conductor_faces: Vec<u32>,
    /// Mean number of steps to absorption from the centre.
    pub expected_steps: f64,
}

impl ExactChain {
    /// Absorption mass per conductor id.
    pub fn conductor_mass(&self, id: u32) -> f64 {
        let surface = self.absorption.len() - self.conductor_faces.len();
        self.conductor_faces
            .iter()
            .zip(&self.absorption[surface..])
            .filter(|(c, _)| **c == id)
            .map(|(_, p)| p)
            .sum()
    }
}

/// Centre row of the absorption matrix, using the default size cap.
pub fn exact_absorption_row(grid: &DielectricGrid) -> Result<Vec<f64>> {
    Ok(exact_chain(grid, DEFAULT_DENSE_CAP)?.absorption)
}

pub fn exact_expected_steps(grid: &DielectricGrid) -> Result<f64> {
    Ok(exact_chain(grid, DEFAULT_DENSE_CAP)?.expected_steps)
}

pub fn exact_chain(grid: &DielectricGrid, cap: usize) -> Result<ExactChain> {
    let n = grid.n();
    if n > cap {
        return Err(Error::OracleCap { n, cap });
    }
    let at = |x: usize, y: usize, z: usize| x + n * (y + n * z);
    let is_conductor = |x: usize, y: usize, z: usize| grid.conductor([x, y, z]).is_some();

    let mut state = vec![usize::MAX; n * n * n];
    let mut transient = Vec::new();
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                if !is_conductor(x, y, z) {
                    state[at(x, y, z)] = transient.len();
                    transient.push([x, y, z]);
                }
            }
        }
    }
    let m = transient.len();
    if m == 0 {
        return Err(Error::NoInteriorNodes);
    }

    let surface = 6 * n * n;
    let mut q = DMatrix::<f64>::zeros(m, m);
    // absorbing transitions as (state, column, probability)
    let mut r: Vec<(usize, usize, f64)> = Vec::new();
    let mut conductor_faces = Vec::new();
    for (v, &[x, y, z]) in transient.iter().enumerate() {
        let e_v = grid.eps([x, y, z]);
        let c = [x as isize, y as isize, z as isize];
        // targets in the order -x, +x, -y, +y, -z, +z
        let mut weights = [0.0; 6];
        let mut targets = [(false, 0usize); 6];
        for d in 0..6 {
            let axis = d / 2;
            let mut t = c;
            t[axis] += if d % 2 == 0 { -1 } else { 1 };
            if t[axis] < 0 || t[axis] >= n as isize {
                let (j, k) = match axis {
                    0 => (c[1], c[2]),
                    1 => (c[0], c[2]),
                    _ => (c[0], c[1]),
                };
                weights[d] = 1.0;
                targets[d] = (true, d * n * n + j as usize * n + k as usize);
                continue;
            }
            let (tx, ty, tz) = (t[0] as usize, t[1] as usize, t[2] as usize);
            if let Some(id) = grid.conductor([tx, ty, tz]) {
                weights[d] = 1.0;
                targets[d] = (true, surface + conductor_faces.len());
                conductor_faces.push(id);
                continue;
            }
            let e_t = grid.eps([tx, ty, tz]);
            weights[d] = e_t / (e_t + e_v);
            targets[d] = (false, state[at(tx, ty, tz)]);
        }
        let total: f64 = weights.iter().sum();
        for d in 0..6 {
            let p = weights[d] / total;
            match targets[d] {
                (true, col) => r.push((v, col, p)),
                (false, s) => q[(v, s)] += p,
            }
        }
    }

    let centre: Vec<usize> = if n % 2 == 1 {
        vec![[n / 2; 3]]
    } else {
        let mut v = Vec::new();
        for dz in 0..2 {
            for dy in 0..2 {
                for dx in 0..2 {
                    v.push([n / 2 - 1 + dx, n / 2 - 1 + dy, n / 2 - 1 + dz]);
                }
            }
        }
        v
    }
    .into_iter()
    .filter(|&[x, y, z]| !is_conductor(x, y, z))
    .map(|[x, y, z]| state[at(x, y, z)])
    .collect();
    if centre.is_empty() {
        return Err(Error::EngulfedCentre);
    }

    // fundamental matrix N = (I - Q)^-1; we need e_c^T N and N 1
    let fundamental = DMatrix::<f64>::identity(m, m) - q;
    let lu_t = fundamental.transpose().lu();
    let mut ec = DVector::<f64>::zeros(m);
    for &c in &centre {
        ec[c] += 1.0 / centre.len() as f64;
    }
    let y = lu_t
        .solve(&ec)
        .ok_or_else(|| Error::Validation("singular absorbing chain".into()))?;
    let mut absorption = vec![0.0; surface + conductor_faces.len()];
    for &(v, col, p) in &r {
        absorption[col] += y[v] * p;
    }
    let expected_steps = y.sum();
    Ok(ExactChain { absorption, conductor_faces, expected_steps })
}
