//! Gaussian surface around the master conductor and uniform-area sampling on it.

use rand::Rng;

use crate::geometry::{Cuboid, Point, Structure};
use crate::rng::uniform;
use crate::{Error, Result, NM};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianSurface {
    pub shell: Cuboid,
    /// Distance the master box was inflated by (nm).
    pub inflation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub point: Point,
    pub axis: usize,
    /// +1 for the upper face along `axis`, -1 for the lower one.
    pub sign: f64,
    /// Total shell area in m^2.
    pub area: f64,
}

/// Master box inflated by `fraction` of the Chebyshev gap to the nearest
/// other conductor or world wall.
pub fn gaussian_surface(s: &Structure, fraction: f64) -> Result<GaussianSurface> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Validation(format!("Gaussian gap fraction {fraction} must lie in (0, 1)")));
    }
    let master = s.conductor(s.master_id()).expect("validated master");
    let world = s.world();
    let mut gap = f64::INFINITY;
    for k in 0..3 {
        gap = gap.min(master.bounds.lo[k] - world.lo[k]).min(world.hi[k] - master.bounds.hi[k]);
    }
    for c in s.conductors() {
        if c.id == master.id {
            continue;
        }
        let g = master.bounds.chebyshev_gap(&c.bounds);
        if g <= 0.0 {
            return Err(Error::Validation(format!(
                "master conductor {} touches conductor {}",
                master.id, c.id
            )));
        }
        gap = gap.min(g);
    }
    if !(gap > 0.0) {
        return Err(Error::Validation("master conductor touches the world boundary".into()));
    }
    let inflation = fraction * gap;
    Ok(GaussianSurface { shell: master.bounds.inflate(inflation), inflation })
}

impl GaussianSurface {
    fn face_areas(&self) -> [f64; 6] {
        let e = [self.shell.extent(0), self.shell.extent(1), self.shell.extent(2)];
        let a = [e[1] * e[2], e[0] * e[2], e[0] * e[1]];
        [a[0], a[0], a[1], a[1], a[2], a[2]]
    }

    /// Total area in nm^2.
    pub fn area_nm2(&self) -> f64 {
        self.face_areas().iter().sum()
    }

    /// Smallest half-extent of the shell (nm).
    pub fn min_half_extent(&self) -> f64 {
        (0..3).map(|k| 0.5 * self.shell.extent(k)).fold(f64::INFINITY, f64::min)
    }

    /// Face probability of each of the six faces (-x, +x, -y, +y, -z, +z).
    pub fn face_probabilities(&self) -> [f64; 6] {
        let a = self.face_areas();
        let total: f64 = a.iter().sum();
        a.map(|x| x / total)
    }

    /// Point uniform over the shell area: a face by area, then uniform in-face.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SurfaceSample {
        let areas = self.face_areas();
        let total: f64 = areas.iter().sum();
        let u = uniform(rng) * total;
        let mut face = 5;
        let mut acc = 0.0;
        for (f, a) in areas.iter().enumerate() {
            acc += a;
            if u < acc {
                face = f;
                break;
            }
        }
        let axis = face / 2;
        let upper = face % 2 == 1;
        let mut point = [0.0; 3];
        for (k, slot) in point.iter_mut().enumerate() {
            *slot = if k == axis {
                if upper {
                    self.shell.hi[k]
                } else {
                    self.shell.lo[k]
                }
            } else {
                self.shell.lo[k] + uniform(rng) * self.shell.extent(k)
            };
        }
        SurfaceSample {
            point,
            axis,
            sign: if upper { 1.0 } else { -1.0 },
            area: total * NM * NM,
        }
    }
}

pub fn sample_gaussian<R: Rng + ?Sized>(surface: &GaussianSurface, rng: &mut R) -> SurfaceSample {
    surface.sample(rng)
}
