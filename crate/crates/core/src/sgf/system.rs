//! Finite-difference system of one transition cube.
//!
//! Interior nodes sit at voxel centres, boundary nodes at the centres of the
//! `6n^2` surface panels (and, for lattices with conductor voxels, at the
//! centres of faces shared with conductor voxels). For interior node `v` and
//! neighbour `i` the coupling is `eps_i / (eps_i + eps_v)` when `i` is
//! interior and `1` when `i` is a boundary node; row `v` of `A_II` has
//! diagonal equal to the sum of its couplings.

use crate::geometry::{Cube, Lattice, Point};
use crate::{Error, Result};

use super::sparse::CsrMatrix;

/// Neighbour directions in fixed order: -x, +x, -y, +y, -z, +z.
pub const DIRECTIONS: [(usize, isize); 6] = [(0, -1), (0, 1), (1, -1), (1, 1), (2, -1), (2, 1)];

/// In-face axes of a face whose normal is along `axis`, in increasing order.
#[inline]
pub fn face_axes(axis: usize) -> (usize, usize) {
    match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

/// Index of the surface panel reached by stepping out of `node` in direction `dir`.
#[inline]
pub fn exit_panel(n: usize, node: [usize; 3], dir: usize) -> usize {
    let (b, c) = face_axes(dir / 2);
    dir * n * n + node[b] * n + node[c]
}

/// Panel centre relative to the cube centre, in units of the half-width.
pub fn panel_offset(n: usize, panel: usize) -> [f64; 3] {
    let face = panel / (n * n);
    let r = panel % (n * n);
    let (j, k) = (r / n, r % n);
    let a = face / 2;
    let (b, c) = face_axes(a);
    let mut out = [0.0; 3];
    out[a] = if face % 2 == 0 { -1.0 } else { 1.0 };
    out[b] = -1.0 + (j as f64 + 0.5) * 2.0 / n as f64;
    out[c] = -1.0 + (k as f64 + 0.5) * 2.0 / n as f64;
    out
}

/// Panel index → (face, in-face offsets in half-width units).
pub fn panel_geometry(n: usize, panel: usize) -> (usize, [f64; 2]) {
    let face = panel / (n * n);
    let off = panel_offset(n, panel);
    let (b, c) = face_axes(face / 2);
    (face, [off[b], off[c]])
}

pub fn panel_point(cube: &Cube, n: usize, panel: usize) -> Point {
    let off = panel_offset(n, panel);
    [
        cube.center[0] + cube.half_width * off[0],
        cube.center[1] + cube.half_width * off[1],
        cube.center[2] + cube.half_width * off[2],
    ]
}

/// Lattice nodes whose average stands for the cube centre: the single middle
/// node for odd `n`, the middle 2x2x2 block for even `n`.
pub fn center_nodes(n: usize) -> Vec<[usize; 3]> {
    if n % 2 == 1 {
        let c = n / 2;
        return vec![[c, c, c]];
    }
    let lo = n / 2 - 1;
    let mut out = Vec::with_capacity(8);
    for dz in 0..2 {
        for dy in 0..2 {
            for dx in 0..2 {
                out.push([lo + dx, lo + dy, lo + dz]);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConductorPanel {
    pub conductor: u32,
    pub point: Point,
}

#[derive(Debug, Clone)]
pub struct FdSystem {
    n: usize,
    cube: Cube,
    interior_of: Vec<u32>,
    nodes: Vec<[usize; 3]>,
    eps: Vec<f64>,
    a_ii: CsrMatrix,
    a_ib: CsrMatrix,
    center: Vec<usize>,
    conductor_panels: Vec<ConductorPanel>,
}

const NOT_INTERIOR: u32 = u32::MAX;

impl FdSystem {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cube(&self) -> Cube {
        self.cube
    }

    pub fn interior_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn boundary_count(&self) -> usize {
        self.a_ib.cols()
    }

    pub fn surface_panel_count(&self) -> usize {
        6 * self.n * self.n
    }

    pub fn a_ii(&self) -> &CsrMatrix {
        &self.a_ii
    }

    pub fn a_ib(&self) -> &CsrMatrix {
        &self.a_ib
    }

    /// Interior node permittivities, in interior order.
    pub fn eps(&self) -> &[f64] {
        &self.eps
    }

    pub fn node(&self, interior: usize) -> [usize; 3] {
        self.nodes[interior]
    }

    pub fn interior_index(&self, node: [usize; 3]) -> Option<usize> {
        let i = self.interior_of[node[0] + self.n * (node[1] + self.n * node[2])];
        (i != NOT_INTERIOR).then_some(i as usize)
    }

    /// Interior indices standing for the cube centre.
    pub fn center_indices(&self) -> &[usize] {
        &self.center
    }

    /// Absorbing conductor-face panels, indexed from `6n^2` upward.
    pub fn conductor_panels(&self) -> &[ConductorPanel] {
        &self.conductor_panels
    }

    pub fn panel_point(&self, panel: usize) -> Point {
        let surface = self.surface_panel_count();
        if panel < surface {
            panel_point(&self.cube, self.n, panel)
        } else {
            self.conductor_panels[panel - surface].point
        }
    }

    pub fn panel_conductor(&self, panel: usize) -> Option<u32> {
        panel
            .checked_sub(self.surface_panel_count())
            .map(|i| self.conductor_panels[i].conductor)
    }

    pub fn diagonal(&self, interior: usize) -> f64 {
        self.a_ii.get(interior, interior)
    }
}

/// Build `A_II` and `A_IB` for a voxelized cube.
pub fn assemble_system<L: Lattice + ?Sized>(grid: &L) -> Result<FdSystem> {
    let n = grid.n();
    let cube = grid.cube();
    let masked = grid.has_conductors();
    let total = n * n * n;
    let mut interior_of = vec![NOT_INTERIOR; total];
    let mut nodes = Vec::with_capacity(total);
    let mut eps = Vec::with_capacity(total);
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                let node = [x, y, z];
                if masked && grid.conductor(node).is_some() {
                    continue;
                }
                interior_of[x + n * (y + n * z)] = nodes.len() as u32;
                nodes.push(node);
                eps.push(grid.eps(node));
            }
        }
    }
    if nodes.is_empty() {
        return Err(Error::NoInteriorNodes);
    }
    let surface = 6 * n * n;
    let mut conductor_panels = Vec::new();
    let mut ii = CsrMatrix::builder(nodes.len(), 7 * nodes.len());
    // column count of A_IB is only known after the sweep
    let mut ib_rows: Vec<Vec<usize>> = Vec::with_capacity(nodes.len());
    let pitch = cube.pitch(n);
    for (v, &node) in nodes.iter().enumerate() {
        let eps_v = eps[v];
        let mut diag = 0.0;
        let mut offdiag: Vec<(usize, f64)> = Vec::with_capacity(6);
        let mut row_b = Vec::new();
        for (dir, &(axis, step)) in DIRECTIONS.iter().enumerate() {
            let coord = node[axis] as isize + step;
            if coord < 0 || coord >= n as isize {
                row_b.push(exit_panel(n, node, dir));
                diag += 1.0;
                continue;
            }
            let mut nb = node;
            nb[axis] = coord as usize;
            let li = nb[0] + n * (nb[1] + n * nb[2]);
            if interior_of[li] == NOT_INTERIOR {
                let id = grid.conductor(nb).expect("non-interior voxel is a conductor");
                let mut point = cube.node_point(node, n);
                point[axis] += 0.5 * pitch * step as f64;
                row_b.push(surface + conductor_panels.len());
                conductor_panels.push(ConductorPanel { conductor: id, point });
                diag += 1.0;
                continue;
            }
            let eps_i = grid.eps(nb);
            let alpha = eps_i / (eps_i + eps_v);
            diag += alpha;
            offdiag.push((interior_of[li] as usize, -alpha));
        }
        ii.push(v, diag);
        for (c, a) in offdiag {
            ii.push(c, a);
        }
        ii.finish_row();
        ib_rows.push(row_b);
    }
    let mut ib = CsrMatrix::builder(surface + conductor_panels.len(), surface);
    for row in ib_rows {
        for c in row {
            ib.push(c, 1.0);
        }
        ib.finish_row();
    }

    let mut center = Vec::new();
    for node in center_nodes(n) {
        let i = interior_of[node[0] + n * (node[1] + n * node[2])];
        if i != NOT_INTERIOR {
            center.push(i as usize);
        }
    }
    if center.is_empty() {
        return Err(Error::EngulfedCentre);
    }
    Ok(FdSystem {
        n,
        cube,
        interior_of,
        nodes,
        eps,
        a_ii: ii.build(),
        a_ib: ib.build(),
        center,
        conductor_panels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DielectricGrid;

    #[test]
    fn single_node_system() {
        let sys = assemble_system(&DielectricGrid::uniform(1, 3.3)).unwrap();
        assert_eq!(sys.interior_count(), 1);
        assert_eq!(sys.boundary_count(), 6);
        assert_eq!(sys.diagonal(0), 6.0);
        let row: Vec<_> = sys.a_ib().row(0).collect();
        assert_eq!(row.len(), 6);
        assert!(row.iter().all(|&(_, v)| v == 1.0));
    }

    #[test]
    fn two_by_two_uniform_diagonal() {
        let sys = assemble_system(&DielectricGrid::uniform(2, 1.0)).unwrap();
        for v in 0..8 {
            assert_eq!(sys.diagonal(v), 4.5);
            let off: Vec<_> = sys.a_ii().row(v).filter(|&(c, _)| c != v).collect();
            assert_eq!(off.len(), 3);
            assert!(off.iter().all(|&(_, a)| a == -0.5));
            assert_eq!(sys.a_ib().row(v).count(), 3);
        }
        assert_eq!(sys.center_indices().len(), 8);
    }

    #[test]
    fn interface_coefficient() {
        let mut eps = vec![1.0; 8];
        eps[1] = 3.0; // node (1,0,0)
        let g = DielectricGrid::from_eps(2, eps, Cube::new([0.0; 3], 1.0)).unwrap();
        let sys = assemble_system(&g).unwrap();
        let v = sys.interior_index([0, 0, 0]).unwrap();
        let i = sys.interior_index([1, 0, 0]).unwrap();
        assert_eq!(sys.a_ii().get(v, i), -0.75);
        assert_eq!(sys.a_ii().get(i, v), -0.25);
    }

    #[test]
    fn rows_are_balanced() {
        let n = 5;
        let eps: Vec<f64> = (0..n * n * n).map(|i| 1.0 + (i * 7 % 11) as f64).collect();
        let g = DielectricGrid::from_eps(n, eps, Cube::new([0.0; 3], 1.0)).unwrap();
        let sys = assemble_system(&g).unwrap();
        let boundary = sys.a_ib().row_sums();
        for v in 0..sys.interior_count() {
            let diag = sys.diagonal(v);
            let off: f64 = sys.a_ii().row(v).filter(|&(c, _)| c != v).map(|(_, a)| -a).sum();
            assert!(diag > 0.0);
            assert!((diag - off - boundary[v]).abs() < 1e-12);
            let neighbours = sys.a_ii().row(v).count() - 1 + sys.a_ib().row(v).count();
            assert_eq!(neighbours, 6);
        }
    }

    #[test]
    fn panel_indices_round_trip_through_geometry() {
        let n = 3;
        let node = [2, 0, 1];
        // +x face at in-face (y, z) = (0, 1)
        let p = exit_panel(n, node, 1);
        let (face, uv) = panel_geometry(n, p);
        assert_eq!(face, 1);
        assert!((uv[0] - (-2.0 / 3.0)).abs() < 1e-15);
        assert!(uv[1].abs() < 1e-15);
    }

    #[test]
    fn conductor_faces_become_absorbing_panels() {
        let n = 3;
        let mut mask = vec![None; 27];
        mask[2 + 3 * (1 + 3 * 1)] = Some(5); // node (2,1,1)
        let g = DielectricGrid::with_mask(n, vec![1.0; 27], Some(mask), Cube::new([0.0; 3], 3.0)).unwrap();
        let sys = assemble_system(&g).unwrap();
        assert_eq!(sys.interior_count(), 26);
        // the conductor voxel has 5 lattice neighbours
        assert_eq!(sys.conductor_panels().len(), 5);
        assert!(sys.conductor_panels().iter().all(|p| p.conductor == 5));
        let centre = sys.interior_index([1, 1, 1]).unwrap();
        let panel = sys.a_ib().row(centre).map(|(c, _)| c).find(|&c| c >= 54).unwrap();
        assert_eq!(sys.panel_conductor(panel), Some(5));
        assert_eq!(sys.panel_point(panel), [1.0, 0.0, 0.0]);
    }
}
