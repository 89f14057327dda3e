use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Transition strategy for cubes after the first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Cached SGF for stratified cubes, a fresh sparse solve for general ones.
    #[serde(rename = "FDM")]
    Fdm,
    /// MicroWalk for every cube.
    #[serde(rename = "MW")]
    Mw,
    /// MicroWalk-E for every cube.
    #[serde(rename = "MWE")]
    Mwe,
    /// Cached SGF for stratified cubes, MicroWalk for general ones.
    #[serde(rename = "HYBRID-MW")]
    HybridMw,
    /// Cached SGF for stratified cubes, MicroWalk-E for general ones.
    #[serde(rename = "HYBRID-MWE")]
    HybridMwe,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::Fdm, Mode::Mw, Mode::Mwe, Mode::HybridMw, Mode::HybridMwe];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Fdm => "FDM",
            Mode::Mw => "MW",
            Mode::Mwe => "MWE",
            Mode::HybridMw => "HYBRID-MW",
            Mode::HybridMwe => "HYBRID-MWE",
        }
    }

    /// Whether stratified cubes go through the SGF cache.
    pub fn uses_cache(self) -> bool {
        matches!(self, Mode::Fdm | Mode::HybridMw | Mode::HybridMwe)
    }

    pub fn expands(self) -> bool {
        matches!(self, Mode::Mwe | Mode::HybridMwe)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub grid_n: usize,
    pub expansion: f64,
    pub mode: Mode,
    pub rel_std_tol: f64,
    pub min_walks: u64,
    pub max_walks: u64,
    pub batch: u64,
    pub seed: u64,
    /// Snap distance relative to the smallest half-extent of the Gaussian surface.
    pub snap_tol: f64,
    pub hop_cap: u64,
    pub gaussian_gap_fraction: f64,
    pub world_margin: f64,
    /// Optional bound on cached SGF entries.
    pub cache_capacity: Option<usize>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            grid_n: 24,
            expansion: 5.0,
            mode: Mode::HybridMwe,
            rel_std_tol: 0.01,
            min_walks: 10_000,
            max_walks: 10_000_000,
            batch: 1024,
            seed: 0,
            snap_tol: 1e-4,
            hop_cap: 10_000,
            gaussian_gap_fraction: 0.5,
            world_margin: 5.0,
            cache_capacity: None,
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.rel_std_tol > 0.0 && self.rel_std_tol < 1.0) {
            return fail(format!("tolerance {} must lie in (0, 1)", self.rel_std_tol));
        }
        if self.grid_n < 2 {
            return fail(format!("grid_n {} must be at least 2", self.grid_n));
        }
        if !(self.expansion >= 1.0) {
            return fail(format!("expansion {} must be at least 1", self.expansion));
        }
        if self.min_walks > self.max_walks || self.max_walks == 0 {
            return fail(format!("walk bounds {}..{} are inconsistent", self.min_walks, self.max_walks));
        }
        if self.batch == 0 {
            return fail("batch must be positive".into());
        }
        if !(self.snap_tol > 0.0 && self.snap_tol < 1.0) {
            return fail(format!("snap tolerance {} must lie in (0, 1)", self.snap_tol));
        }
        if self.hop_cap == 0 {
            return fail("hop cap must be positive".into());
        }
        if !(self.gaussian_gap_fraction > 0.0 && self.gaussian_gap_fraction < 1.0) {
            return fail(format!(
                "Gaussian gap fraction {} must lie in (0, 1)",
                self.gaussian_gap_fraction
            ));
        }
        if !(self.world_margin >= 1.0) {
            return fail(format!("world margin {} must be at least 1", self.world_margin));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = Config::default();
        c.validate().unwrap();
        assert_eq!((c.grid_n, c.expansion, c.rel_std_tol), (24, 5.0, 0.01));
        assert_eq!(c.mode, Mode::HybridMwe);
    }

    #[test]
    fn mode_names_round_trip() {
        for m in Mode::ALL {
            assert_eq!(m.name().to_lowercase().parse::<Mode>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
        }
        assert!("fast".parse::<Mode>().is_err());
    }

    #[test]
    fn invalid_settings_are_rejected() {
        let bad = [
            Config { rel_std_tol: 0.0, ..Config::default() },
            Config { grid_n: 1, ..Config::default() },
            Config { expansion: 0.5, ..Config::default() },
            Config { min_walks: 10, max_walks: 5, ..Config::default() },
            Config { gaussian_gap_fraction: 0.0, ..Config::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }
}
