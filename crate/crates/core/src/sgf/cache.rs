//! Memo table of solved SGFs for stratified (and uniform) dielectric profiles.
//!
//! A profile is keyed by lattice size, stratification axis and the per-slice
//! permittivities rounded to six significant digits. The system is assembled
//! from the rounded values, so equal keys always give bit-identical SGFs and
//! the cache is scale-free: kernels are stored per unit half-width.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use dashmap::DashMap;
use serde::{Deserialize, Serialize};

use crate::geometry::{Axis, Cube, CubeVoxels, DielectricGrid, Stratification};
use crate::{Error, Result};

use super::green::{solve_sgf, DiscreteSGF, PanelDistribution};
use super::system::assemble_system;

/// Six significant digits as (mantissa in [1e5, 1e6), decimal exponent).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Sig6 {
    mantissa: i32,
    exponent: i16,
}

impl Sig6 {
    fn quantize(x: f64) -> Self {
        debug_assert!(x > 0.0 && x.is_finite());
        let mut e = x.log10().floor() as i32;
        let mut m = (x / 10f64.powi(e - 5)).round() as i64;
        if m >= 1_000_000 {
            m = (m + 5) / 10;
            e += 1;
        } else if m < 100_000 {
            e -= 1;
            m = (x / 10f64.powi(e - 5)).round() as i64;
        }
        Self { mantissa: m as i32, exponent: e as i16 }
    }

    fn value(self) -> f64 {
        format!("{}e{}", self.mantissa, self.exponent as i32 - 5)
            .parse()
            .expect("well-formed float literal")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ProfileKey {
    n: u32,
    axis: Axis,
    layers: Vec<Sig6>,
    expanded: bool,
    conductor_signature: Option<u64>,
}

impl ProfileKey {
    /// Key for a profile of `n` slice permittivities along `axis`. A profile
    /// with all slices equal is canonicalized to the uniform key.
    pub fn stratified(n: usize, axis: Axis, layer_eps: &[f64]) -> Self {
        assert_eq!(layer_eps.len(), n);
        let layers: Vec<Sig6> = layer_eps.iter().map(|&e| Sig6::quantize(e)).collect();
        let axis = if layers.iter().all(|l| *l == layers[0]) { Axis::Z } else { axis };
        Self { n: n as u32, axis, layers, expanded: false, conductor_signature: None }
    }

    pub fn uniform(n: usize, eps: f64) -> Self {
        Self::stratified(n, Axis::Z, &vec![eps; n])
    }

    pub fn from_view(view: &CubeVoxels) -> Result<Self> {
        use crate::geometry::Lattice;
        let n = view.n();
        match view.classify() {
            Stratification::Uniform => Ok(Self::uniform(n, view.eps([0, 0, 0]))),
            Stratification::Stratified(axis) => Ok(Self::stratified(n, axis, &view.layer_profile(axis))),
            Stratification::General => Err(Error::NotStratified),
        }
    }

    pub fn from_grid(grid: &DielectricGrid) -> Result<Self> {
        use crate::geometry::Lattice;
        let n = grid.n();
        match grid.tag() {
            Stratification::Uniform => Ok(Self::uniform(n, grid.eps([0, 0, 0]))),
            Stratification::Stratified(axis) => {
                let a = axis.index();
                let layers: Vec<f64> = (0..n)
                    .map(|i| {
                        let mut node = [0; 3];
                        node[a] = i;
                        grid.eps(node)
                    })
                    .collect();
                Ok(Self::stratified(n, axis, &layers))
            }
            Stratification::General => Err(Error::NotStratified),
        }
    }

    pub fn n(&self) -> usize {
        self.n as usize
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    /// The rounded slice permittivities the SGF is assembled from.
    pub fn layer_eps(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.value()).collect()
    }

    /// Unit-half-width grid realizing this profile.
    pub fn grid(&self) -> DielectricGrid {
        let n = self.n();
        let a = self.axis.index();
        let layers = self.layer_eps();
        let mut eps = Vec::with_capacity(n * n * n);
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    eps.push(layers[[x, y, z][a]]);
                }
            }
        }
        DielectricGrid::from_eps(n, eps, Cube::new([0.0; 3], 1.0)).expect("positive layer permittivities")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub entries: usize,
}

impl CacheStats {
    pub fn hit_rate(&self) -> f64 {
        let total = self.hits + self.misses;
        if total == 0 {
            return 0.0;
        }
        self.hits as f64 / total as f64
    }
}

struct Entry {
    sgf: Arc<DiscreteSGF>,
    last_used: AtomicU64,
}

/// Concurrent SGF memo table. Duplicate concurrent misses may both solve;
/// the first insertion wins and both results are identical anyway.
pub struct SgfCache {
    n: usize,
    map: DashMap<ProfileKey, Entry>,
    capacity: Option<usize>,
    clock: AtomicU64,
    hits: AtomicU64,
    misses: AtomicU64,
}

const MAGIC: &[u8; 4] = b"SGF1";

impl SgfCache {
    pub fn new(n: usize) -> Self {
        Self::with_capacity(n, None)
    }

    /// `capacity` bounds the entry count with least-recently-used eviction.
    pub fn with_capacity(n: usize, capacity: Option<usize>) -> Self {
        Self {
            n,
            map: DashMap::new(),
            capacity,
            clock: AtomicU64::new(0),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
            entries: self.map.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Cached SGF for a stratified profile, solving it on first use.
    pub fn get(&self, key: &ProfileKey) -> Result<Arc<DiscreteSGF>> {
        if key.n() != self.n {
            return Err(Error::Config(format!("cache holds n={}, key has n={}", self.n, key.n())));
        }
        let tick = self.clock.fetch_add(1, Ordering::Relaxed);
        if let Some(e) = self.map.get(key) {
            e.last_used.store(tick, Ordering::Relaxed);
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(Arc::clone(&e.sgf));
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let sgf = Arc::new(solve_sgf(&assemble_system(&key.grid())?)?);
        let stored = Arc::clone(
            &self
                .map
                .entry(key.clone())
                .or_insert(Entry { sgf, last_used: AtomicU64::new(tick) })
                .sgf,
        );
        self.evict();
        Ok(stored)
    }

    fn evict(&self) {
        let Some(cap) = self.capacity else { return };
        while self.map.len() > cap {
            let oldest = self
                .map
                .iter()
                .min_by_key(|e| e.last_used.load(Ordering::Relaxed))
                .map(|e| e.key().clone());
            match oldest {
                Some(k) => {
                    self.map.remove(&k);
                }
                None => break,
            }
        }
    }

    /// Little-endian dump: magic, n (u32), entry count (u64), then per entry
    /// axis (u8), expanded (u8), signature flag (u8) + value (u64), the n
    /// slice permittivities, the 6n^2 probabilities, three 6n^2 kernels and
    /// the expected step count, all as f64.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&(self.n as u32).to_le_bytes())?;
        let mut entries: Vec<(ProfileKey, Arc<DiscreteSGF>)> =
            self.map.iter().map(|e| (e.key().clone(), Arc::clone(&e.sgf))).collect();
        // stable file contents regardless of hash order
        entries.sort_by(|a, b| {
            (a.0.axis, a.0.layer_eps().iter().map(|x| x.to_bits()).collect::<Vec<_>>())
                .cmp(&(b.0.axis, b.0.layer_eps().iter().map(|x| x.to_bits()).collect::<Vec<_>>()))
        });
        w.write_all(&(entries.len() as u64).to_le_bytes())?;
        for (key, sgf) in entries {
            w.write_all(&[key.axis.index() as u8, key.expanded as u8])?;
            w.write_all(&[key.conductor_signature.is_some() as u8])?;
            w.write_all(&key.conductor_signature.unwrap_or(0).to_le_bytes())?;
            let write_f64s = |w: &mut BufWriter<File>, v: &[f64]| -> std::io::Result<()> {
                for x in v {
                    w.write_all(&x.to_le_bytes())?;
                }
                Ok(())
            };
            write_f64s(&mut w, &key.layer_eps())?;
            write_f64s(&mut w, sgf.probs())?;
            for a in 0..3 {
                write_f64s(&mut w, sgf.grad_kernel(a))?;
            }
            write_f64s(&mut w, &[sgf.expected_steps()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Load entries written by [`save`](Self::save); returns how many were accepted.
    /// Entries failing the normalization checks are skipped.
    pub fn load(&self, path: &Path) -> Result<usize> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::CacheFormat("bad magic bytes".into()));
        }
        let n = read_u32(&mut r)? as usize;
        if n != self.n {
            return Err(Error::CacheFormat(format!("file holds n={n}, solver uses n={}", self.n)));
        }
        let count = read_u64(&mut r)?;
        let panels = 6 * n * n;
        let mut accepted = 0;
        for _ in 0..count {
            let mut head = [0u8; 3];
            r.read_exact(&mut head)?;
            let sig = read_u64(&mut r)?;
            let axis = match head[0] {
                0..=2 => Axis::from_index(head[0] as usize),
                other => return Err(Error::CacheFormat(format!("bad axis byte {other}"))),
            };
            let layers = read_f64s(&mut r, n)?;
            let probs = read_f64s(&mut r, panels)?;
            let kernels = [read_f64s(&mut r, panels)?, read_f64s(&mut r, panels)?, read_f64s(&mut r, panels)?];
            let steps = read_f64s(&mut r, 1)?[0];
            if layers.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
                continue;
            }
            let sum: f64 = probs.iter().sum();
            let probs_ok = (sum - 1.0).abs() <= 1e-9 && probs.iter().all(|p| *p >= 0.0);
            let kernels_ok = kernels.iter().all(|k| k.iter().sum::<f64>().abs() <= 1e-9);
            if !probs_ok || !kernels_ok {
                log::warn!("dropping cache entry that fails normalization");
                continue;
            }
            let mut key = ProfileKey::stratified(n, axis, &layers);
            key.expanded = head[1] != 0;
            key.conductor_signature = (head[2] != 0).then_some(sig);
            let sgf = DiscreteSGF::from_parts(n, PanelDistribution::with_cdf(probs), kernels, steps);
            let tick = self.clock.fetch_add(1, Ordering::Relaxed);
            self.map.insert(key, Entry { sgf: Arc::new(sgf), last_used: AtomicU64::new(tick) });
            accepted += 1;
        }
        self.evict();
        Ok(accepted)
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s(r: &mut impl Read, count: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; count * 8];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantization_keeps_six_digits() {
        for (x, expect) in [(3.9, 3.9), (22.0, 22.0), (1.23456789, 1.23457), (9.999999, 10.0), (0.001, 0.001)] {
            let q = Sig6::quantize(x);
            assert!((100_000..1_000_000).contains(&q.mantissa), "{x}: {q:?}");
            assert_eq!(q.value(), expect);
            assert_eq!(Sig6::quantize(q.value()), q);
        }
    }

    #[test]
    fn equal_profiles_hit() {
        let cache = SgfCache::new(4);
        let key = ProfileKey::stratified(4, Axis::Z, &[1.0, 1.0, 3.9, 3.9]);
        let a = cache.get(&key).unwrap();
        assert_eq!(cache.stats().misses, 1);
        let same = ProfileKey::stratified(4, Axis::Z, &[1.0, 1.0000000001, 3.9, 3.9]);
        let b = cache.get(&same).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(cache.stats(), CacheStats { hits: 1, misses: 1, entries: 1 });
    }

    #[test]
    fn general_profiles_are_refused() {
        let mut eps = vec![1.0; 27];
        eps[0] = 5.0;
        let g = DielectricGrid::from_eps(3, eps, Cube::new([0.0; 3], 1.0)).unwrap();
        assert!(matches!(ProfileKey::from_grid(&g), Err(Error::NotStratified)));
    }

    #[test]
    fn lru_cap_bounds_entries() {
        let cache = SgfCache::with_capacity(2, Some(2));
        for e in [1.0, 2.0, 3.0] {
            cache.get(&ProfileKey::stratified(2, Axis::X, &[1.0, e + 0.5])).unwrap();
        }
        assert_eq!(cache.len(), 2);
    }

    #[test]
    fn persistence_round_trip() {
        let cache = SgfCache::new(3);
        let key = ProfileKey::stratified(3, Axis::Y, &[2.0, 7.0, 7.0]);
        let original = cache.get(&key).unwrap();
        cache.get(&ProfileKey::uniform(3, 3.9)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.sgf");
        cache.save(&path).unwrap();

        let mut bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"SGF1");

        let fresh = SgfCache::new(3);
        assert_eq!(fresh.load(&path).unwrap(), 2);
        let loaded = fresh.get(&key).unwrap();
        assert_eq!(loaded.probs(), original.probs());
        assert_eq!(loaded.grad_kernel(1), original.grad_kernel(1));
        assert_eq!(loaded.expected_steps(), original.expected_steps());
        assert_eq!(fresh.stats().misses, 0);

        // corrupt the first probability of the first entry: it must be rejected
        let offset = 4 + 4 + 8 + 3 + 8 + 3 * 8;
        bytes[offset..offset + 8].copy_from_slice(&0.5f64.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        assert_eq!(SgfCache::new(3).load(&path).unwrap(), 1);
        assert!(SgfCache::new(4).load(&path).is_err());
    }
}
