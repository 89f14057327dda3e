//! Scene description and the spatial queries used by the walk engine.

mod parse;
mod voxel;

pub use parse::{parse_structure, parse_structure_with_margin, StructureFile};
pub use voxel::{build_grid, Cube, CubeVoxels, DielectricGrid, Lattice, Stratification};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type Point = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Axis {
        Self::ALL[i]
    }
}

/// Axis-aligned box in nanometres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cuboid {
    pub lo: Point,
    pub hi: Point,
}

impl Cuboid {
    pub fn new(lo: Point, hi: Point) -> Result<Self> {
        for k in 0..3 {
            if !lo[k].is_finite() || !hi[k].is_finite() {
                return Err(Error::Validation(format!("non-finite box coordinate in {lo:?}..{hi:?}")));
            }
            if lo[k] >= hi[k] {
                return Err(Error::Validation(format!(
                    "box lo[{k}]={} is not below hi[{k}]={}",
                    lo[k], hi[k]
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn centered(center: Point, half_width: f64) -> Self {
        Self {
            lo: [center[0] - half_width, center[1] - half_width, center[2] - half_width],
            hi: [center[0] + half_width, center[1] + half_width, center[2] + half_width],
        }
    }

    /// Closed containment.
    pub fn contains(&self, p: Point) -> bool {
        (0..3).all(|k| p[k] >= self.lo[k] && p[k] <= self.hi[k])
    }

    pub fn contains_box(&self, other: &Cuboid) -> bool {
        (0..3).all(|k| other.lo[k] >= self.lo[k] && other.hi[k] <= self.hi[k])
    }

    /// True when the open interiors overlap (touching faces do not count).
    pub fn interiors_overlap(&self, other: &Cuboid) -> bool {
        (0..3).all(|k| self.lo[k] < other.hi[k] && other.lo[k] < self.hi[k])
    }

    pub fn inflate(&self, d: f64) -> Cuboid {
        Cuboid {
            lo: [self.lo[0] - d, self.lo[1] - d, self.lo[2] - d],
            hi: [self.hi[0] + d, self.hi[1] + d, self.hi[2] + d],
        }
    }

    pub fn extent(&self, k: usize) -> f64 {
        self.hi[k] - self.lo[k]
    }

    pub fn center(&self) -> Point {
        [
            0.5 * (self.lo[0] + self.hi[0]),
            0.5 * (self.lo[1] + self.hi[1]),
            0.5 * (self.lo[2] + self.hi[2]),
        ]
    }

    /// Half-width of the largest cube centred at `p` whose interior misses this box.
    /// Zero when `p` is inside or on the box.
    pub fn chebyshev_distance(&self, p: Point) -> f64 {
        let mut d: f64 = 0.0;
        for k in 0..3 {
            d = d.max(self.lo[k] - p[k]).max(p[k] - self.hi[k]);
        }
        d
    }

    /// Chebyshev gap between two boxes (zero when they touch or overlap).
    pub fn chebyshev_gap(&self, other: &Cuboid) -> f64 {
        let mut d: f64 = 0.0;
        for k in 0..3 {
            d = d.max(other.lo[k] - self.hi[k]).max(self.lo[k] - other.hi[k]);
        }
        d
    }

    /// Distance from an interior point to the nearest face, measured per axis.
    pub fn wall_distance(&self, p: Point) -> f64 {
        let mut d = f64::INFINITY;
        for k in 0..3 {
            d = d.min(p[k] - self.lo[k]).min(self.hi[k] - p[k]);
        }
        d
    }

    pub fn translate(&self, t: Point) -> Cuboid {
        Cuboid {
            lo: [self.lo[0] + t[0], self.lo[1] + t[1], self.lo[2] + t[2]],
            hi: [self.hi[0] + t[0], self.hi[1] + t[1], self.hi[2] + t[2]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conductor {
    pub id: u32,
    pub bounds: Cuboid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dielectric {
    pub bounds: Cuboid,
    pub eps_r: f64,
}

/// A validated 3-D scene. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Structure {
    conductors: Vec<Conductor>,
    dielectrics: Vec<Dielectric>,
    background_eps_r: f64,
    world: Cuboid,
    master_id: u32,
}

impl Structure {
    pub fn new(
        conductors: Vec<Conductor>,
        dielectrics: Vec<Dielectric>,
        background_eps_r: f64,
        world: Cuboid,
        master_id: u32,
    ) -> Result<Self> {
        if conductors.is_empty() {
            return Err(Error::Validation("structure has no conductors".into()));
        }
        if !(background_eps_r > 0.0 && background_eps_r.is_finite()) {
            return Err(Error::Validation(format!("background permittivity {background_eps_r} must be positive")));
        }
        let mut ids: Vec<u32> = conductors.iter().map(|c| c.id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Validation(format!("duplicate conductor id {}", w[0])));
        }
        if !ids.contains(&master_id) {
            return Err(Error::Validation(format!("master id {master_id} is not a conductor")));
        }
        for c in &conductors {
            Cuboid::new(c.bounds.lo, c.bounds.hi)?;
            if !world.contains_box(&c.bounds) {
                return Err(Error::Validation(format!("conductor {} lies outside the world box", c.id)));
            }
        }
        for (i, d) in dielectrics.iter().enumerate() {
            Cuboid::new(d.bounds.lo, d.bounds.hi)?;
            if !(d.eps_r > 0.0 && d.eps_r.is_finite()) {
                return Err(Error::Validation(format!("dielectric #{i} has non-positive eps {}", d.eps_r)));
            }
            if !world.contains_box(&d.bounds) {
                return Err(Error::Validation(format!("dielectric #{i} lies outside the world box")));
            }
        }
        Ok(Self {
            conductors,
            dielectrics,
            background_eps_r,
            world,
            master_id,
        })
    }

    pub fn conductors(&self) -> &[Conductor] {
        &self.conductors
    }

    pub fn dielectrics(&self) -> &[Dielectric] {
        &self.dielectrics
    }

    pub fn background_eps_r(&self) -> f64 {
        self.background_eps_r
    }

    pub fn world(&self) -> &Cuboid {
        &self.world
    }

    pub fn master_id(&self) -> u32 {
        self.master_id
    }

    pub fn conductor(&self, id: u32) -> Option<&Conductor> {
        self.conductors.iter().find(|c| c.id == id)
    }

    /// Same scene with a different master conductor.
    pub fn with_master(&self, master_id: u32) -> Result<Self> {
        Self::new(
            self.conductors.clone(),
            self.dielectrics.clone(),
            self.background_eps_r,
            self.world,
            master_id,
        )
    }

    pub fn translated(&self, t: Point) -> Self {
        Self {
            conductors: self
                .conductors
                .iter()
                .map(|c| Conductor { id: c.id, bounds: c.bounds.translate(t) })
                .collect(),
            dielectrics: self
                .dielectrics
                .iter()
                .map(|d| Dielectric { bounds: d.bounds.translate(t), eps_r: d.eps_r })
                .collect(),
            background_eps_r: self.background_eps_r,
            world: self.world.translate(t),
            master_id: self.master_id,
        }
    }

    /// Relative permittivity at `p`: the last declared dielectric box containing
    /// the point wins, otherwise the background value.
    pub fn permittivity_at(&self, p: Point) -> Result<f64> {
        if !self.world.contains(p) {
            return Err(Error::OutsideWorld(p));
        }
        Ok(self.eps_unchecked(p))
    }

    pub(crate) fn eps_unchecked(&self, p: Point) -> f64 {
        self.dielectrics
            .iter()
            .rev()
            .find(|d| d.bounds.contains(p))
            .map_or(self.background_eps_r, |d| d.eps_r)
    }

    /// First conductor whose box, inflated by `tol`, contains `p`.
    pub fn conductor_at(&self, p: Point, tol: f64) -> Option<u32> {
        self.conductors
            .iter()
            .find(|c| c.bounds.chebyshev_distance(p) <= tol)
            .map(|c| c.id)
    }

    /// Largest conductor-free cube centred at `p`, clipped to the world box.
    /// Returns its half-width and the nearest conductor (`None` when the world
    /// wall is strictly nearer).
    pub fn max_free_cube(&self, p: Point) -> Result<(f64, Option<u32>)> {
        if !self.world.contains(p) {
            return Err(Error::OutsideWorld(p));
        }
        let mut best = f64::INFINITY;
        let mut nearest = None;
        for c in &self.conductors {
            let d = c.bounds.chebyshev_distance(p);
            if d <= 0.0 {
                return Err(Error::InsideConductor { point: p, id: c.id });
            }
            if d < best {
                best = d;
                nearest = Some(c.id);
            }
        }
        let wall = self.world.wall_distance(p);
        if wall < best {
            return Ok((wall, None));
        }
        Ok((best, nearest))
    }
}
