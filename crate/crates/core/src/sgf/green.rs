//! Discrete surface Green's functions: exit distributions of the lattice
//! chain from the cube centre, their directional-derivative kernels, and the
//! expected absorption time.

use rand::Rng;

use crate::rng::uniform;
use crate::{Error, Result};

use super::sparse::{solve_spd, ScaledOperator, SolverOptions};
use super::system::{center_nodes, FdSystem};

/// Probability vector over panels with its cumulative table.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDistribution {
    probs: Vec<f64>,
    cdf: Vec<f64>,
}

impl PanelDistribution {
    /// Normalizes `weights` (non-negative, positive sum).
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Validation("panel weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Validation("panel weights sum to zero".into()));
        }
        Ok(Self::with_cdf(weights.into_iter().map(|w| w / total).collect()))
    }

    /// Trusts `probs` to be normalized already (e.g. read back from disk).
    pub(crate) fn with_cdf(probs: Vec<f64>) -> Self {
        let mut cdf = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in &probs {
            acc += p;
            cdf.push(acc);
        }
        // make the table end exactly at 1 and flatten any roundoff tail
        let last_positive = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        for c in &mut cdf[last_positive..] {
            *c = 1.0;
        }
        Self { probs, cdf }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// CDF inversion of one variate `u` in `[0, 1)`.
    #[inline]
    pub fn sample_with(&self, u: f64) -> usize {
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.sample_with(uniform(rng))
    }
}

/// Exit distribution of a conductor-free cube together with the kernels that
/// estimate the potential gradient at the centre from boundary values.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSGF {
    n: usize,
    dist: PanelDistribution,
    grad_kernels: [Vec<f64>; 3],
    expected_steps: f64,
}

impl DiscreteSGF {
    pub(crate) fn from_parts(
        n: usize,
        dist: PanelDistribution,
        grad_kernels: [Vec<f64>; 3],
        expected_steps: f64,
    ) -> Self {
        Self { n, dist, grad_kernels, expected_steps }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn probs(&self) -> &[f64] {
        self.dist.probs()
    }

    pub fn cdf(&self) -> &[f64] {
        self.dist.cdf()
    }

    pub fn distribution(&self) -> &PanelDistribution {
        &self.dist
    }

    /// Gradient kernel along `axis`, in units of 1/half-width: the derivative
    /// at the centre of a cube with half-width `h` is `Σ_k K[k] φ_k / h`.
    pub fn grad_kernel(&self, axis: usize) -> &[f64] {
        &self.grad_kernels[axis]
    }

    pub fn expected_steps(&self) -> f64 {
        self.expected_steps
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.dist.sample(rng)
    }
}

pub fn sample_panel<R: Rng + ?Sized>(dist: &PanelDistribution, rng: &mut R) -> usize {
    dist.sample(rng)
}

/// `y` solving `A_IIᵀ y = c` for a sparse right-hand side.
fn adjoint_solve(sys: &FdSystem, rhs: &[(usize, f64)], opts: &SolverOptions) -> Result<Vec<f64>> {
    // A_II = D^-1 S with D = diag(eps) and S symmetric, so A_IIᵀ = S D^-1.
    let op = ScaledOperator { a: sys.a_ii(), row_scale: sys.eps() };
    let mut b = vec![0.0; sys.interior_count()];
    for &(i, w) in rhs {
        b[i] += w;
    }
    let (z, stats) = solve_spd(&op, &b, opts)?;
    log::trace!(
        "adjoint solve: {} iterations, residual {:.2e}, direct {}",
        stats.iterations,
        stats.residual,
        stats.direct
    );
    Ok(z.iter().zip(sys.eps()).map(|(z, e)| z * e).collect())
}

fn boundary_row(sys: &FdSystem, y: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; sys.boundary_count()];
    sys.a_ib().transpose_mul_vec(y, &mut out);
    out
}

fn center_rhs(sys: &FdSystem) -> Vec<(usize, f64)> {
    let w = 1.0 / sys.center_indices().len() as f64;
    sys.center_indices().iter().map(|&i| (i, w)).collect()
}

fn steps_from_adjoint(sys: &FdSystem, y: &[f64]) -> f64 {
    y.iter().enumerate().map(|(v, yv)| yv * sys.diagonal(v)).sum()
}

/// Centre row of `A_II^-1 A_IB`, including conductor panels when present.
pub fn solve_absorption_row(sys: &FdSystem) -> Result<PanelDistribution> {
    solve_absorption_row_with(sys, &SolverOptions::default())
}

pub fn solve_absorption_row_with(sys: &FdSystem, opts: &SolverOptions) -> Result<PanelDistribution> {
    let y = adjoint_solve(sys, &center_rhs(sys), opts)?;
    PanelDistribution::from_weights(clean(boundary_row(sys, &y)))
}

/// Expected number of lattice steps before absorption when starting at the centre.
pub fn expected_steps(sys: &FdSystem) -> Result<f64> {
    let y = adjoint_solve(sys, &center_rhs(sys), &SolverOptions::default())?;
    Ok(steps_from_adjoint(sys, &y))
}

/// Interior potentials `A_II^-1 A_IB φ_B`.
pub fn solve_interior(sys: &FdSystem, boundary_values: &[f64]) -> Result<Vec<f64>> {
    assert_eq!(boundary_values.len(), sys.boundary_count());
    let mut rhs = vec![0.0; sys.interior_count()];
    sys.a_ib().mul_vec(boundary_values, &mut rhs);
    for (r, e) in rhs.iter_mut().zip(sys.eps()) {
        *r *= e;
    }
    let op = ScaledOperator { a: sys.a_ii(), row_scale: sys.eps() };
    Ok(solve_spd(&op, &rhs, &SolverOptions::default())?.0)
}

/// Roundoff can leave entries a hair below zero.
fn clean(mut v: Vec<f64>) -> Vec<f64> {
    for x in &mut v {
        if *x < 0.0 {
            debug_assert!(*x > -1e-10, "negative absorption probability {x}");
            *x = 0.0;
        }
    }
    v
}

/// Solve the SGF and its gradient kernels. The lattice must be conductor-free.
pub fn solve_sgf(sys: &FdSystem) -> Result<DiscreteSGF> {
    solve_sgf_with(sys, &SolverOptions::default())
}

pub fn solve_sgf_with(sys: &FdSystem, opts: &SolverOptions) -> Result<DiscreteSGF> {
    if !sys.conductor_panels().is_empty() {
        return Err(Error::Validation("gradient kernels need a conductor-free lattice".into()));
    }
    let n = sys.n();
    let y = adjoint_solve(sys, &center_rhs(sys), opts)?;
    let dist = PanelDistribution::from_weights(clean(boundary_row(sys, &y)))?;
    let probs = dist.probs();
    let steps = steps_from_adjoint(sys, &y);

    let mut kernels: [Vec<f64>; 3] = Default::default();
    for (axis, kernel) in kernels.iter_mut().enumerate() {
        let mut k = if n == 1 {
            // derivative from the two opposite panels, two half-widths apart
            let mut k = vec![0.0; 6];
            k[2 * axis] = -0.5;
            k[2 * axis + 1] = 0.5;
            k
        } else {
            let (up, down, spacing) = gradient_stencil(n, axis);
            let w = 1.0 / (up.len() as f64 * spacing);
            let mut rhs = Vec::with_capacity(up.len() * 2);
            for node in up {
                rhs.push((sys.interior_index(node).expect("conductor-free"), w));
            }
            for node in down {
                rhs.push((sys.interior_index(node).expect("conductor-free"), -w));
            }
            let y = adjoint_solve(sys, &rhs, opts)?;
            boundary_row(sys, &y)
        };
        // project out the constant-field component left by the iterative solve
        let drift: f64 = k.iter().sum();
        for (kv, p) in k.iter_mut().zip(probs) {
            *kv -= drift * p;
        }
        *kernel = k;
    }
    Ok(DiscreteSGF::from_parts(n, dist, kernels, steps))
}

/// Nodes on either side of the centre along `axis` and their separation in
/// half-width units.
fn gradient_stencil(n: usize, axis: usize) -> (Vec<[usize; 3]>, Vec<[usize; 3]>, f64) {
    let pitch = 2.0 / n as f64;
    if n % 2 == 1 {
        let c = n / 2;
        let mut up = [c, c, c];
        let mut down = [c, c, c];
        up[axis] += 1;
        down[axis] -= 1;
        (vec![up], vec![down], 2.0 * pitch)
    } else {
        let (up, down): (Vec<_>, Vec<_>) = center_nodes(n).into_iter().partition(|v| v[axis] == n / 2);
        (up, down, pitch)
    }
}
