use serde::{Deserialize, Serialize};

use super::{Conductor, Cuboid, Dielectric, Point, Structure};
use crate::{Error, Result};

/// On-disk structure document. Coordinates are in nanometres.
///
/// ```json
/// {
///   "units": "nm",
///   "world": { "lo": [-2000, -2000, -800], "hi": [3000, 3000, 1200] },
///   "background_eps": 3.9,
///   "conductors": [ { "id": 1, "lo": [0, 0, 300], "hi": [1000, 1000, 400] } ],
///   "dielectrics": [ { "lo": [0, 0, 0], "hi": [1000, 1000, 250], "eps": 7.0 } ],
///   "master": 1
/// }
/// ```
///
/// `world` and `dielectrics` are optional. Without `world` the bounding box
/// of all declared boxes is scaled about its centre by the world margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureFile {
    pub units: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub world: Option<BoxEntry>,
    pub background_eps: f64,
    pub conductors: Vec<ConductorEntry>,
    #[serde(default)]
    pub dielectrics: Vec<DielectricEntry>,
    pub master: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxEntry {
    pub lo: Point,
    pub hi: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConductorEntry {
    pub id: u32,
    pub lo: Point,
    pub hi: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DielectricEntry {
    pub lo: Point,
    pub hi: Point,
    pub eps: f64,
}

pub const DEFAULT_WORLD_MARGIN: f64 = 5.0;

pub fn parse_structure(text: &str) -> Result<Structure> {
    parse_structure_with_margin(text, DEFAULT_WORLD_MARGIN)
}

pub fn parse_structure_with_margin(text: &str, world_margin: f64) -> Result<Structure> {
    let file: StructureFile = serde_json::from_str(text).map_err(|e| Error::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    file.into_structure(world_margin)
}

impl StructureFile {
    pub fn into_structure(self, world_margin: f64) -> Result<Structure> {
        if self.units != "nm" {
            return Err(Error::Validation(format!("units must be \"nm\", got {:?}", self.units)));
        }
        let conductors = self
            .conductors
            .iter()
            .map(|c| {
                Cuboid::new(c.lo, c.hi)
                    .map(|bounds| Conductor { id: c.id, bounds })
                    .map_err(|e| Error::Validation(format!("conductor {}: {e}", c.id)))
            })
            .collect::<Result<Vec<_>>>()?;
        let dielectrics = self
            .dielectrics
            .iter()
            .enumerate()
            .map(|(i, d)| {
                Cuboid::new(d.lo, d.hi)
                    .map(|bounds| Dielectric { bounds, eps_r: d.eps })
                    .map_err(|e| Error::Validation(format!("dielectric #{i}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let world = match self.world {
            Some(w) => Cuboid::new(w.lo, w.hi)?,
            None => {
                if !(world_margin >= 1.0) {
                    return Err(Error::Validation(format!("world margin {world_margin} must be >= 1")));
                }
                auto_world(&conductors, &dielectrics, world_margin)?
            }
        };
        Structure::new(conductors, dielectrics, self.background_eps, world, self.master)
    }

    pub fn from_structure(s: &Structure) -> Self {
        Self {
            units: "nm".into(),
            world: Some(BoxEntry { lo: s.world().lo, hi: s.world().hi }),
            background_eps: s.background_eps_r(),
            conductors: s
                .conductors()
                .iter()
                .map(|c| ConductorEntry { id: c.id, lo: c.bounds.lo, hi: c.bounds.hi })
                .collect(),
            dielectrics: s
                .dielectrics()
                .iter()
                .map(|d| DielectricEntry { lo: d.bounds.lo, hi: d.bounds.hi, eps: d.eps_r })
                .collect(),
            master: s.master_id(),
        }
    }
}

fn auto_world(conductors: &[Conductor], dielectrics: &[Dielectric], margin: f64) -> Result<Cuboid> {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    let boxes = conductors.iter().map(|c| &c.bounds).chain(dielectrics.iter().map(|d| &d.bounds));
    for b in boxes {
        for k in 0..3 {
            lo[k] = lo[k].min(b.lo[k]);
            hi[k] = hi[k].max(b.hi[k]);
        }
    }
    if !lo[0].is_finite() {
        return Err(Error::Validation("structure has no conductors".into()));
    }
    let mut wlo = [0.0; 3];
    let mut whi = [0.0; 3];
    for k in 0..3 {
        let c = 0.5 * (lo[k] + hi[k]);
        let h = 0.5 * margin * (hi[k] - lo[k]);
        wlo[k] = (c - h).min(lo[k]);
        whi[k] = (c + h).max(hi[k]);
    }
    Cuboid::new(wlo, whi)
}
