use frwcap_core::engine::{extract, extract_with_cache, CapacitanceResult, Config, Mode, Terminal};
use frwcap_core::geometry::{parse_structure, Structure};
use frwcap_core::sgf::SgfCache;

const PLATES: &str = include_str!("../../../structures/plates.json");
const CROSSING: &str = include_str!("../../../structures/crossing.json");

fn quick(mode: Mode, tol: f64, seed: u64) -> Config {
    Config { mode, rel_std_tol: tol, min_walks: 2048, seed, ..Config::default() }
}

fn value(r: &CapacitanceResult, t: Terminal) -> (f64, f64) {
    let e = r.entry(t).unwrap();
    (e.value, e.std_err)
}

fn overlap_3sigma(a: (f64, f64), b: (f64, f64)) -> bool {
    (a.0 - b.0).abs() <= 3.0 * (a.1 * a.1 + b.1 * b.1).sqrt()
}

fn assert_maxwell(r: &CapacitanceResult) {
    let own = r.self_capacitance();
    assert!(own.value > 0.0);
    let mut off = 0.0;
    let mut var = own.std_err.powi(2);
    for e in r.entries.iter().filter(|e| e.terminal != Terminal::Conductor(r.master)) {
        assert!(e.value <= 3.0 * e.std_err, "{e:?}");
        off += e.value.abs();
        var += e.std_err.powi(2);
    }
    assert!(own.value - off >= -3.0 * var.sqrt(), "{} vs {off}", own.value);
}

fn plates() -> Structure {
    parse_structure(PLATES).unwrap()
}

#[test]
fn mirrored_masters_agree() {
    let s = plates();
    let a = extract(&s, &quick(Mode::HybridMw, 0.02, 1)).unwrap();
    let b = extract(&s.with_master(2).unwrap(), &quick(Mode::HybridMw, 0.02, 2)).unwrap();
    assert!(a.converged && b.converged);
    assert!(overlap_3sigma(value(&a, Terminal::Conductor(1)), value(&b, Terminal::Conductor(2))));
    assert!(overlap_3sigma(value(&a, Terminal::Conductor(2)), value(&b, Terminal::Conductor(1))));
    assert_maxwell(&a);
    assert_maxwell(&b);
}

#[test]
fn std_err_shrinks_as_inverse_square_root() {
    let s = plates();
    let fixed = |walks: u64| Config { min_walks: walks, max_walks: walks, seed: 5, ..quick(Mode::HybridMw, 1e-6, 5) };
    let small = extract(&s, &fixed(4096)).unwrap();
    let large = extract(&s, &fixed(16384)).unwrap();
    assert_eq!((small.walks, large.walks), (4096, 16384));
    assert!(!large.converged);
    let ratio = small.self_capacitance().std_err / large.self_capacitance().std_err;
    assert!((ratio / 2.0 - 1.0).abs() < 0.2, "{ratio}");
}

#[test]
fn results_do_not_depend_on_scheduling() {
    let s = plates();
    let cfg = quick(Mode::HybridMwe, 0.03, 9);
    let a = extract(&s, &cfg).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = pool.install(|| extract(&s, &cfg)).unwrap();
    assert_eq!(a.entries, b.entries);
    assert_eq!(a.dispatch, b.dispatch);
    assert_eq!(a.walks, b.walks);
}

#[test]
fn fdm_and_microwalk_modes_agree_on_a_general_structure() {
    let s = parse_structure(CROSSING).unwrap();
    let small = |mode| Config { grid_n: 8, ..quick(mode, 0.04, 3) };
    let cache = SgfCache::new(8);
    let fdm = extract_with_cache(&s, &small(Mode::Fdm), &cache).unwrap();
    let mw = extract_with_cache(&s, &small(Mode::HybridMw), &cache).unwrap();
    let mwe = extract_with_cache(&s, &small(Mode::HybridMwe), &cache).unwrap();
    assert!(fdm.dispatch.subsequent.fdm > 0);
    assert!(mw.dispatch.subsequent.microwalk > 0);
    assert!(mwe.dispatch.subsequent.microwalk_e > 0);
    for t in [Terminal::Conductor(1), Terminal::Conductor(2), Terminal::Ground] {
        assert!(overlap_3sigma(value(&fdm, t), value(&mw, t)), "{t:?}: {:?} vs {:?}", value(&fdm, t), value(&mw, t));
        let (a, b) = (value(&mwe, t), value(&mw, t));
        assert!((a.0 - b.0).abs() <= 0.03 * b.0.abs() + 3.0 * (a.1 * a.1 + b.1 * b.1).sqrt(), "{t:?}");
    }
    for r in [&fdm, &mw, &mwe] {
        assert_maxwell(r);
        assert_eq!(r.dispatch.first.total(), r.walks);
    }
}

#[test]
fn pure_microwalk_modes_skip_the_cache() {
    let s = plates();
    let cfg = Config { grid_n: 8, max_walks: 2048, min_walks: 1024, ..quick(Mode::Mw, 0.05, 4) };
    let r = extract(&s, &cfg).unwrap();
    assert_eq!(r.dispatch.subsequent.cached_stratified, 0);
    assert!(r.dispatch.subsequent.microwalk > 0);
    // only first transitions consult the cache
    assert_eq!(r.cache.hits + r.cache.misses, r.walks);
}

#[test]
fn cache_persistence_reproduces_results() {
    let s = parse_structure(CROSSING).unwrap();
    let cfg = Config { grid_n: 8, ..quick(Mode::HybridMw, 0.05, 8) };
    let warm = SgfCache::new(8);
    let first = extract_with_cache(&s, &cfg, &warm).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sgf.bin");
    warm.save(&path).unwrap();
    let loaded = SgfCache::new(8);
    assert_eq!(loaded.load(&path).unwrap(), warm.len());
    let second = extract_with_cache(&s, &cfg, &loaded).unwrap();
    assert_eq!(first.entries, second.entries);
    assert_eq!(second.cache.misses, 0);
}
