//! Voxelization of transition cubes.
//!
//! A cube of half-width `h` is split into `n^3` voxels of pitch `2h/n`; a voxel
//! takes the permittivity found at its centre. [`CubeVoxels`] keeps that field
//! compressed as a rectilinear block partition induced by the boxes crossing
//! the cube, so building and classifying a cube costs O(boxes) rather than
//! O(n^3). [`DielectricGrid`] is the fully materialized array.

use serde::{Deserialize, Serialize};

use super::{Axis, Cuboid, Point, Structure};
use crate::{Error, Result};

/// Relative tolerance for treating two permittivities as equal.
pub const EPS_MATCH_RTOL: f64 = 1e-9;

pub(crate) fn eps_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= EPS_MATCH_RTOL * a.abs().max(b.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    pub center: Point,
    pub half_width: f64,
}

impl Cube {
    pub fn new(center: Point, half_width: f64) -> Self {
        Self { center, half_width }
    }

    pub fn bounds(&self) -> Cuboid {
        Cuboid::centered(self.center, self.half_width)
    }

    pub fn pitch(&self, n: usize) -> f64 {
        2.0 * self.half_width / n as f64
    }

    /// Coordinate of the centre of voxel `i` along axis `k`.
    #[inline]
    pub fn voxel_center(&self, k: usize, i: usize, n: usize) -> f64 {
        self.center[k] - self.half_width + (i as f64 + 0.5) * self.pitch(n)
    }

    pub fn node_point(&self, node: [usize; 3], n: usize) -> Point {
        [
            self.voxel_center(0, node[0], n),
            self.voxel_center(1, node[1], n),
            self.voxel_center(2, node[2], n),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stratification {
    Uniform,
    Stratified(Axis),
    General,
}

impl Stratification {
    pub fn is_stratified(self) -> bool {
        !matches!(self, Stratification::General)
    }
}

/// Read access to a voxelized cube, shared by the dense grid and the
/// compressed view.
pub trait Lattice {
    fn n(&self) -> usize;
    fn cube(&self) -> Cube;
    fn eps(&self, node: [usize; 3]) -> f64;
    fn conductor(&self, node: [usize; 3]) -> Option<u32>;
    fn has_conductors(&self) -> bool;
}

#[inline]
pub(crate) fn linear_index(node: [usize; 3], n: usize) -> usize {
    node[0] + n * (node[1] + n * node[2])
}

/// Compressed voxelization of one transition cube.
#[derive(Debug, Clone)]
pub struct CubeVoxels {
    cube: Cube,
    n: usize,
    cuts: [Vec<usize>; 3],
    cell_of: [Vec<u32>; 3],
    eps: Vec<f64>,
    conductor: Option<Vec<Option<u32>>>,
}

/// Index range `[i0, i1)` of voxels whose centres fall in `[lo, hi]` along axis `k`.
fn voxel_range(cube: &Cube, n: usize, k: usize, lo: f64, hi: f64) -> (usize, usize) {
    let first = |pred: &dyn Fn(f64) -> bool| {
        // smallest i with pred(center(i)) true; pred is monotone
        let (mut a, mut b) = (0usize, n);
        while a < b {
            let m = (a + b) / 2;
            if pred(cube.voxel_center(k, m, n)) {
                b = m;
            } else {
                a = m + 1;
            }
        }
        a
    };
    let i0 = first(&|c| c >= lo);
    let i1 = first(&|c| c > hi);
    (i0, i1.max(i0))
}

fn box_ranges(cube: &Cube, n: usize, b: &Cuboid) -> Option<[(usize, usize); 3]> {
    let mut out = [(0, 0); 3];
    for k in 0..3 {
        let r = voxel_range(cube, n, k, b.lo[k], b.hi[k]);
        if r.0 >= r.1 {
            return None;
        }
        out[k] = r;
    }
    Some(out)
}

impl CubeVoxels {
    pub fn new(s: &Structure, cube: Cube, n: usize, allow_conductors: bool) -> Result<Self> {
        assert!(n >= 1, "lattice size must be positive");
        let bounds = cube.bounds();
        let mut dielectric_ranges = Vec::new();
        for d in s.dielectrics() {
            if let Some(r) = box_ranges(&cube, n, &d.bounds) {
                dielectric_ranges.push((r, d.eps_r));
            }
        }
        let mut conductor_ranges = Vec::new();
        for c in s.conductors() {
            if !allow_conductors {
                // cubes sized by max_free_cube touch a conductor up to roundoff
                if c.bounds.inflate(-1e-9 * cube.half_width).interiors_overlap(&bounds) {
                    return Err(Error::CubeHitsConductor(c.id));
                }
                continue;
            }
            if let Some(r) = box_ranges(&cube, n, &c.bounds) {
                conductor_ranges.push((r, c.id));
            }
        }

        let mut cuts: [Vec<usize>; 3] = Default::default();
        for k in 0..3 {
            let mut v = vec![0, n];
            for (r, _) in &dielectric_ranges {
                v.extend([r[k].0, r[k].1]);
            }
            for (r, _) in &conductor_ranges {
                v.extend([r[k].0, r[k].1]);
            }
            v.sort_unstable();
            v.dedup();
            cuts[k] = v;
        }
        let mut cell_of: [Vec<u32>; 3] = Default::default();
        for k in 0..3 {
            let mut map = vec![0u32; n];
            for (c, w) in cuts[k].windows(2).enumerate() {
                for slot in &mut map[w[0]..w[1]] {
                    *slot = c as u32;
                }
            }
            cell_of[k] = map;
        }
        let dims = [cuts[0].len() - 1, cuts[1].len() - 1, cuts[2].len() - 1];
        let cell_count = dims[0] * dims[1] * dims[2];
        let cell_range = |r: &[(usize, usize); 3], k: usize| {
            (cell_of[k][r[k].0] as usize, cell_of[k][r[k].1 - 1] as usize + 1)
        };

        let mut eps = vec![s.background_eps_r(); cell_count];
        for (r, value) in &dielectric_ranges {
            let (x0, x1) = cell_range(r, 0);
            let (y0, y1) = cell_range(r, 1);
            let (z0, z1) = cell_range(r, 2);
            for cz in z0..z1 {
                for cy in y0..y1 {
                    let row = dims[0] * (cy + dims[1] * cz);
                    eps[row + x0..row + x1].fill(*value);
                }
            }
        }
        let conductor = if conductor_ranges.is_empty() {
            None
        } else {
            let mut mask = vec![None; cell_count];
            // reverse so the first declared conductor wins
            for (r, id) in conductor_ranges.iter().rev() {
                let (x0, x1) = cell_range(r, 0);
                let (y0, y1) = cell_range(r, 1);
                let (z0, z1) = cell_range(r, 2);
                for cz in z0..z1 {
                    for cy in y0..y1 {
                        let row = dims[0] * (cy + dims[1] * cz);
                        mask[row + x0..row + x1].fill(Some(*id));
                    }
                }
            }
            Some(mask)
        };
        Ok(Self { cube, n, cuts, cell_of, eps, conductor })
    }

    fn dims(&self) -> [usize; 3] {
        [self.cuts[0].len() - 1, self.cuts[1].len() - 1, self.cuts[2].len() - 1]
    }

    #[inline]
    fn cell_index(&self, node: [usize; 3]) -> usize {
        let d = self.dims();
        self.cell_of[0][node[0]] as usize
            + d[0] * (self.cell_of[1][node[1]] as usize + d[1] * self.cell_of[2][node[2]] as usize)
    }

    fn cell_is_conductor(&self, c: usize) -> bool {
        self.conductor.as_ref().is_some_and(|m| m[c].is_some())
    }

    /// Number of voxels in cell slab `c` along axis `k`.
    fn cell_width(&self, k: usize, c: usize) -> usize {
        self.cuts[k][c + 1] - self.cuts[k][c]
    }

    pub fn cell_count(&self) -> usize {
        self.eps.len()
    }

    /// Classification over non-conductor voxels.
    pub fn classify(&self) -> Stratification {
        let d = self.dims();
        let idx = |c: [usize; 3]| c[0] + d[0] * (c[1] + d[1] * c[2]);
        let first = (0..self.eps.len()).find(|&c| !self.cell_is_conductor(c));
        let Some(first) = first else {
            return Stratification::Uniform;
        };
        let reference = self.eps[first];
        if (0..self.eps.len()).all(|c| self.cell_is_conductor(c) || eps_equal(self.eps[c], reference)) {
            return Stratification::Uniform;
        }
        'axes: for axis in Axis::ALL {
            let a = axis.index();
            let (b, c) = ((a + 1) % 3, (a + 2) % 3);
            for s in 0..d[a] {
                let mut slice_ref: Option<f64> = None;
                for j in 0..d[b] {
                    for k in 0..d[c] {
                        let mut cell = [0; 3];
                        cell[a] = s;
                        cell[b] = j;
                        cell[c] = k;
                        let ci = idx(cell);
                        if self.cell_is_conductor(ci) {
                            continue;
                        }
                        match slice_ref {
                            None => slice_ref = Some(self.eps[ci]),
                            Some(r) if eps_equal(r, self.eps[ci]) => {}
                            Some(_) => continue 'axes,
                        }
                    }
                }
            }
            return Stratification::Stratified(axis);
        }
        Stratification::General
    }

    /// Permittivity of each voxel slice along `axis`, taken from the first
    /// non-conductor cell of the slice. Only meaningful for stratified cubes.
    pub fn layer_profile(&self, axis: Axis) -> Vec<f64> {
        let d = self.dims();
        let a = axis.index();
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        let mut per_cell = vec![f64::NAN; d[a]];
        for (s, slot) in per_cell.iter_mut().enumerate() {
            'find: for j in 0..d[b] {
                for k in 0..d[c] {
                    let mut cell = [0; 3];
                    cell[a] = s;
                    cell[b] = j;
                    cell[c] = k;
                    let ci = cell[0] + d[0] * (cell[1] + d[1] * cell[2]);
                    if !self.cell_is_conductor(ci) {
                        *slot = self.eps[ci];
                        break 'find;
                    }
                }
            }
        }
        (0..self.n).map(|i| per_cell[self.cell_of[a][i] as usize]).collect()
    }

    /// Volume-weighted mean permittivity of each voxel slice along `axis`,
    /// together with the weighted within-slice variance summed over slices.
    pub fn slice_averages(&self, axis: Axis) -> (Vec<f64>, f64) {
        let d = self.dims();
        let a = axis.index();
        let mut sum = vec![0.0; d[a]];
        let mut sum_sq = vec![0.0; d[a]];
        let mut weight = vec![0.0; d[a]];
        for cz in 0..d[2] {
            for cy in 0..d[1] {
                for cx in 0..d[0] {
                    let ci = cx + d[0] * (cy + d[1] * cz);
                    if self.cell_is_conductor(ci) {
                        continue;
                    }
                    let cell = [cx, cy, cz];
                    let mut w = 1.0;
                    for k in 0..3 {
                        if k != a {
                            w *= self.cell_width(k, cell[k]) as f64;
                        }
                    }
                    let e = self.eps[ci];
                    sum[cell[a]] += w * e;
                    sum_sq[cell[a]] += w * e * e;
                    weight[cell[a]] += w;
                }
            }
        }
        let mut within = 0.0;
        let mut per_cell = vec![0.0; d[a]];
        for s in 0..d[a] {
            if weight[s] > 0.0 {
                let mean = sum[s] / weight[s];
                per_cell[s] = mean;
                let thickness = self.cell_width(a, s) as f64;
                within += thickness * (sum_sq[s] - weight[s] * mean * mean).max(0.0);
            }
        }
        let fallback = per_cell.iter().copied().find(|&e| e > 0.0).unwrap_or(1.0);
        let profile = (0..self.n)
            .map(|i| {
                let e = per_cell[self.cell_of[a][i] as usize];
                if e > 0.0 {
                    e
                } else {
                    fallback
                }
            })
            .collect();
        (profile, within)
    }

    /// Volume-weighted mean and variance of the permittivity over non-conductor voxels.
    pub fn volume_stats(&self) -> (f64, f64) {
        let d = self.dims();
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for cz in 0..d[2] {
            for cy in 0..d[1] {
                for cx in 0..d[0] {
                    let ci = cx + d[0] * (cy + d[1] * cz);
                    if self.cell_is_conductor(ci) {
                        continue;
                    }
                    let w = (self.cell_width(0, cx) * self.cell_width(1, cy) * self.cell_width(2, cz)) as f64;
                    s0 += w;
                    s1 += w * self.eps[ci];
                    s2 += w * self.eps[ci] * self.eps[ci];
                }
            }
        }
        if s0 == 0.0 {
            return (1.0, 0.0);
        }
        let mean = s1 / s0;
        (mean, (s2 / s0 - mean * mean).max(0.0))
    }

    pub fn materialize(&self) -> DielectricGrid {
        let n = self.n;
        let mut eps = Vec::with_capacity(n * n * n);
        let mut mask = self.conductor.as_ref().map(|_| Vec::with_capacity(n * n * n));
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    let ci = self.cell_index([x, y, z]);
                    eps.push(self.eps[ci]);
                    if let (Some(m), Some(src)) = (mask.as_mut(), self.conductor.as_ref()) {
                        m.push(src[ci]);
                    }
                }
            }
        }
        DielectricGrid {
            n,
            eps,
            conductor_mask: mask,
            tag: self.classify(),
            cube: self.cube,
        }
    }
}

impl Lattice for CubeVoxels {
    fn n(&self) -> usize {
        self.n
    }

    fn cube(&self) -> Cube {
        self.cube
    }

    #[inline]
    fn eps(&self, node: [usize; 3]) -> f64 {
        self.eps[self.cell_index(node)]
    }

    #[inline]
    fn conductor(&self, node: [usize; 3]) -> Option<u32> {
        self.conductor.as_ref().and_then(|m| m[self.cell_index(node)])
    }

    fn has_conductors(&self) -> bool {
        self.conductor.is_some()
    }
}

/// Fully materialized `n^3` permittivity lattice of one transition cube.
#[derive(Debug, Clone, PartialEq)]
pub struct DielectricGrid {
    n: usize,
    eps: Vec<f64>,
    conductor_mask: Option<Vec<Option<u32>>>,
    tag: Stratification,
    cube: Cube,
}

impl DielectricGrid {
    /// Grid from a raw permittivity array indexed `x + n*(y + n*z)`.
    pub fn from_eps(n: usize, eps: Vec<f64>, cube: Cube) -> Result<Self> {
        Self::with_mask(n, eps, None, cube)
    }

    pub fn with_mask(
        n: usize,
        eps: Vec<f64>,
        conductor_mask: Option<Vec<Option<u32>>>,
        cube: Cube,
    ) -> Result<Self> {
        if n == 0 || eps.len() != n * n * n {
            return Err(Error::Validation(format!("expected {} permittivities", n * n * n)));
        }
        if let Some(bad) = eps.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            return Err(Error::Validation(format!("voxel permittivity {bad} must be positive")));
        }
        if conductor_mask.as_ref().is_some_and(|m| m.len() != eps.len()) {
            return Err(Error::Validation("conductor mask size mismatch".into()));
        }
        let tag = classify_dense(n, &eps, conductor_mask.as_deref());
        Ok(Self { n, eps, conductor_mask, tag, cube })
    }

    pub fn uniform(n: usize, eps: f64) -> Self {
        Self::from_eps(n, vec![eps; n * n * n], Cube::new([0.0; 3], 1.0)).expect("valid uniform grid")
    }

    pub fn tag(&self) -> Stratification {
        self.tag
    }

    pub fn eps_values(&self) -> &[f64] {
        &self.eps
    }

    pub fn conductor_mask(&self) -> Option<&[Option<u32>]> {
        self.conductor_mask.as_deref()
    }

    /// Same grid with every permittivity multiplied by `lambda`.
    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            eps: self.eps.iter().map(|e| e * lambda).collect(),
            ..self.clone()
        }
    }
}

impl Lattice for DielectricGrid {
    fn n(&self) -> usize {
        self.n
    }

    fn cube(&self) -> Cube {
        self.cube
    }

    #[inline]
    fn eps(&self, node: [usize; 3]) -> f64 {
        self.eps[linear_index(node, self.n)]
    }

    #[inline]
    fn conductor(&self, node: [usize; 3]) -> Option<u32> {
        self.conductor_mask.as_ref().and_then(|m| m[linear_index(node, self.n)])
    }

    fn has_conductors(&self) -> bool {
        self.conductor_mask.as_ref().is_some_and(|m| m.iter().any(Option::is_some))
    }
}

fn classify_dense(n: usize, eps: &[f64], mask: Option<&[Option<u32>]>) -> Stratification {
    let free = |i: usize| mask.is_none_or(|m| m[i].is_none());
    let Some(first) = (0..eps.len()).find(|&i| free(i)) else {
        return Stratification::Uniform;
    };
    if (0..eps.len()).all(|i| !free(i) || eps_equal(eps[i], eps[first])) {
        return Stratification::Uniform;
    }
    'axes: for axis in Axis::ALL {
        let a = axis.index();
        let mut slice_ref = vec![None::<f64>; n];
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    let i = linear_index([x, y, z], n);
                    if !free(i) {
                        continue;
                    }
                    let s = [x, y, z][a];
                    match slice_ref[s] {
                        None => slice_ref[s] = Some(eps[i]),
                        Some(r) if eps_equal(r, eps[i]) => {}
                        Some(_) => continue 'axes,
                    }
                }
            }
        }
        return Stratification::Stratified(axis);
    }
    Stratification::General
}

/// Voxelize the cube `(center, half_width)` at resolution `n`.
pub fn build_grid(s: &Structure, cube: Cube, n: usize, allow_conductors: bool) -> Result<DielectricGrid> {
    Ok(CubeVoxels::new(s, cube, n, allow_conductors)?.materialize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Conductor, Dielectric};

    fn world_scene(dielectrics: Vec<(Cuboid, f64)>, conductors: Vec<(u32, Cuboid)>) -> Structure {
        let mut cs: Vec<Conductor> = conductors.into_iter().map(|(id, bounds)| Conductor { id, bounds }).collect();
        if cs.is_empty() {
            cs.push(Conductor { id: 99, bounds: Cuboid::new([900.0; 3], [950.0; 3]).unwrap() });
        }
        let master = cs[0].id;
        Structure::new(
            cs,
            dielectrics.into_iter().map(|(bounds, eps_r)| Dielectric { bounds, eps_r }).collect(),
            1.0,
            Cuboid::new([-1000.0; 3], [1000.0; 3]).unwrap(),
            master,
        )
        .unwrap()
    }

    #[test]
    fn uniform_background_cube() {
        let s = world_scene(vec![], vec![]);
        let g = build_grid(&s, Cube::new([0.0; 3], 10.0), 4, false).unwrap();
        assert_eq!(g.eps_values().len(), 64);
        assert!(g.eps_values().iter().all(|&e| e == 1.0));
        assert_eq!(g.tag(), Stratification::Uniform);
    }

    #[test]
    fn horizontal_interface_is_stratified_in_z() {
        let s = world_scene(vec![(Cuboid::new([-1000.0; 3], [1000.0, 1000.0, 2.0]).unwrap(), 3.9)], vec![]);
        let g = build_grid(&s, Cube::new([0.0; 3], 10.0), 8, false).unwrap();
        assert_eq!(g.tag(), Stratification::Stratified(Axis::Z));
        let mut distinct: Vec<f64> = g.eps_values().to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        assert_eq!(distinct, vec![1.0, 3.9]);
    }

    #[test]
    fn corner_block_is_general() {
        let s = world_scene(vec![(Cuboid::new([5.0; 3], [10.0; 3]).unwrap(), 22.0)], vec![]);
        let g = build_grid(&s, Cube::new([0.0; 3], 10.0), 8, false).unwrap();
        assert_eq!(g.tag(), Stratification::General);
    }

    #[test]
    fn grid_matches_pointwise_permittivity() {
        let s = world_scene(
            vec![
                (Cuboid::new([-3.0, -7.0, -1.0], [4.0, 2.0, 9.0]).unwrap(), 3.9),
                (Cuboid::new([0.0, -2.5, -8.0], [8.0, 8.0, 1.25]).unwrap(), 7.5),
            ],
            vec![],
        );
        let cube = Cube::new([0.5, 0.25, -0.5], 9.0);
        let n = 12;
        let g = build_grid(&s, cube, n, false).unwrap();
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    let p = cube.node_point([x, y, z], n);
                    assert_eq!(g.eps([x, y, z]), s.permittivity_at(p).unwrap());
                }
            }
        }
        assert_eq!(g.tag(), Stratification::General);
    }

    #[test]
    fn conductor_intersection_is_rejected_unless_allowed() {
        let s = world_scene(vec![], vec![(1, Cuboid::new([5.0, -20.0, -20.0], [30.0, 20.0, 20.0]).unwrap())]);
        let cube = Cube::new([0.0; 3], 10.0);
        assert!(matches!(build_grid(&s, cube, 4, false), Err(Error::CubeHitsConductor(1))));
        let g = build_grid(&s, cube, 4, true).unwrap();
        // voxel centres at x = -7.5, -2.5, 2.5, 7.5; only the last lies in the conductor
        assert_eq!(g.conductor([3, 0, 0]), Some(1));
        assert_eq!(g.conductor([2, 0, 0]), None);
        assert_eq!(g.tag(), Stratification::Uniform);
        // touching is fine
        let touching = build_grid(&s, Cube::new([-5.0, 0.0, 0.0], 10.0), 4, false).unwrap();
        assert!(!touching.has_conductors());
    }
}
