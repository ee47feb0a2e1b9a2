//! Transverse-field XY chain: Hamiltonian construction and exact ground
//! states.
//!
//! The Hamiltonian on `N` two-level sites is
//!
//! ```text
//! H = -J Σ_i [ (1+γ)/4 σˣᵢσˣᵢ₊₁ + (1-γ)/4 σʸᵢσʸᵢ₊₁ ] - (h/2) Σ_i σᶻᵢ
//! ```
//!
//! with the bond sum running over `N-1` bonds for an open chain and `N`
//! bonds (wrapping `N → 1`) for a ring.
//!
//! Conventions, fixed bit-exactly because dataset files depend on them:
//! bit `λ = 0` is spin up (σᶻ eigenvalue `+1`), site 1 is the most
//! significant bit, so configuration `v = (λ₁…λ_N)` maps to the integer
//! `Σ_j λ_j · 2^(N-j)`. In this basis every matrix element of H is real:
//! `σʸσʸ` flips a pair of bits with sign `-(-1)^(λᵢ+λⱼ)`.

use ndarray::Array2;
use ndarray_linalg::{Eigh, UPLO};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Chain topology, applying independently to Hamiltonians and to Born
/// machine architectures.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Open,
    Periodic,
}

impl std::fmt::Display for Boundary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Boundary::Open => write!(f, "open"),
            Boundary::Periodic => write!(f, "periodic"),
        }
    }
}

impl std::str::FromStr for Boundary {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "open" | "obc" => Ok(Boundary::Open),
            "periodic" | "pbc" => Ok(Boundary::Periodic),
            other => Err(format!(
                "unknown boundary `{other}` (expected open|periodic)"
            )),
        }
    }
}

#[derive(Debug, Error)]
pub enum SpinModelError {
    #[error("chain length must be at least 2, got {0}")]
    ChainTooShort(usize),
    #[error("chain length {n} exceeds the limit {max} for this solver")]
    ChainTooLarge { n: usize, max: usize },
    #[error("state length {got} does not match 2^{sites} = {expected}")]
    LengthMismatch {
        sites: usize,
        expected: usize,
        got: usize,
    },
    #[error(
        "Lanczos did not converge after {iterations} iterations (residual norm {residual:.3e})"
    )]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("linear algebra backend error: {0}")]
    Linalg(String),
}

/// Couplings of the transverse-field XY Hamiltonian together with the
/// chain geometry.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    /// Spin-spin coupling J.
    pub coupling: f64,
    /// Anisotropy γ between the x and y interaction channels.
    pub anisotropy: f64,
    /// Transverse field h along z.
    pub field: f64,
    /// Number of sites N.
    pub sites: usize,
    pub boundary: Boundary,
}

impl ModelParameters {
    pub fn new(
        coupling: f64,
        anisotropy: f64,
        field: f64,
        sites: usize,
        boundary: Boundary,
    ) -> Result<Self, SpinModelError> {
        if sites < 2 {
            return Err(SpinModelError::ChainTooShort(sites));
        }
        Ok(Self {
            coupling,
            anisotropy,
            field,
            sites,
            boundary,
        })
    }

    /// Bonds as 1-based site pairs, in sum order. The ring closes with
    /// the (N, 1) bond.
    pub fn bonds(&self) -> Vec<(usize, usize)> {
        let n = self.sites;
        match self.boundary {
            Boundary::Open => (1..n).map(|i| (i, i + 1)).collect(),
            Boundary::Periodic => (1..=n).map(|i| (i, i % n + 1)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        1usize << self.sites
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum PauliKind {
    X,
    Y,
    Z,
    Identity,
}

/// A single-site Pauli factor; `site` is 1-based.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct PauliOperator {
    pub kind: PauliKind,
    pub site: usize,
}

impl PauliOperator {
    pub fn new(kind: PauliKind, site: usize) -> Self {
        Self { kind, site }
    }
}

/// One weighted Pauli string of the Hamiltonian (one or two non-identity
/// factors).
#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianTerm {
    pub weight: f64,
    pub ops: Vec<PauliOperator>,
}

/// Expand the Hamiltonian into weighted Pauli strings: per bond an XX
/// term with weight `-J(1+γ)/4` and a YY term with weight `-J(1-γ)/4`,
/// plus a Z term with weight `-h/2` per site. Bond terms are omitted
/// entirely when `J = 0`, field terms when `h = 0`.
pub fn build_terms(params: &ModelParameters) -> Vec<HamiltonianTerm> {
    let mut terms = Vec::new();
    if params.coupling != 0.0 {
        let w_xx = -params.coupling * (1.0 + params.anisotropy) / 4.0;
        let w_yy = -params.coupling * (1.0 - params.anisotropy) / 4.0;
        for (i, j) in params.bonds() {
            terms.push(HamiltonianTerm {
                weight: w_xx,
                ops: vec![
                    PauliOperator::new(PauliKind::X, i),
                    PauliOperator::new(PauliKind::X, j),
                ],
            });
            terms.push(HamiltonianTerm {
                weight: w_yy,
                ops: vec![
                    PauliOperator::new(PauliKind::Y, i),
                    PauliOperator::new(PauliKind::Y, j),
                ],
            });
        }
    }
    if params.field != 0.0 {
        let w_z = -params.field / 2.0;
        for i in 1..=params.sites {
            terms.push(HamiltonianTerm {
                weight: w_z,
                ops: vec![PauliOperator::new(PauliKind::Z, i)],
            });
        }
    }
    terms
}

/// A real state vector over all 2^N configurations, indexed with site 1
/// as the most significant bit.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseState {
    sites: usize,
    amplitudes: Vec<f64>,
}

impl DenseState {
    pub fn new(sites: usize, amplitudes: Vec<f64>) -> Result<Self, SpinModelError> {
        if amplitudes.len() != (1usize << sites) {
            return Err(SpinModelError::LengthMismatch {
                sites,
                expected: 1usize << sites,
                got: amplitudes.len(),
            });
        }
        Ok(Self { sites, amplitudes })
    }

    pub fn zeros(sites: usize) -> Self {
        Self {
            sites,
            amplitudes: vec![0.0; 1usize << sites],
        }
    }

    /// Basis state |v⟩ for a configuration index.
    pub fn basis_state(sites: usize, index: usize) -> Self {
        let mut s = Self::zeros(sites);
        s.amplitudes[index] = 1.0;
        s
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [f64] {
        &mut self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a * a).sum()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm_sqr() - 1.0).abs() <= tol
    }

    pub fn normalize(&mut self) {
        let n = self.norm_sqr().sqrt();
        if n > 0.0 {
            for a in &mut self.amplitudes {
                *a /= n;
            }
        }
    }

    pub fn dot(&self, other: &DenseState) -> f64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Probability vector |amplitude|² in index order.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a * a).collect()
    }

    /// Flip the sign so the first largest-magnitude amplitude is positive.
    pub fn fix_sign(&mut self) {
        let mut best = 0usize;
        for (i, a) in self.amplitudes.iter().enumerate() {
            if a.abs() > self.amplitudes[best].abs() {
                best = i;
            }
        }
        if self.amplitudes[best] < 0.0 {
            for a in &mut self.amplitudes {
                *a = -*a;
            }
        }
    }
}

/// Bit of configuration `v` at 1-based site `j` on an `n`-site chain.
#[inline]
pub fn bit_at(v: usize, j: usize, n: usize) -> usize {
    (v >> (n - j)) & 1
}

/// Per-bond data prepared for the matvec: the two-bit flip mask and the
/// XX / YY weights.
struct BondAction {
    mask: usize,
    w_xx: f64,
    w_yy: f64,
}

fn bond_actions(params: &ModelParameters) -> Vec<BondAction> {
    if params.coupling == 0.0 {
        return Vec::new();
    }
    let n = params.sites;
    let w_xx = -params.coupling * (1.0 + params.anisotropy) / 4.0;
    let w_yy = -params.coupling * (1.0 - params.anisotropy) / 4.0;
    params
        .bonds()
        .iter()
        .map(|&(i, j)| BondAction {
            mask: (1usize << (n - i)) | (1usize << (n - j)),
            w_xx,
            w_yy,
        })
        .collect()
}

/// Apply H to a dense state. All arithmetic is real; each output index is
/// accumulated in a fixed order (field term, then bonds), so results are
/// bit-identical across thread counts.
pub fn apply_hamiltonian(
    params: &ModelParameters,
    state: &DenseState,
) -> Result<DenseState, SpinModelError> {
    if state.sites != params.sites || state.amplitudes.len() != params.dim() {
        return Err(SpinModelError::LengthMismatch {
            sites: params.sites,
            expected: params.dim(),
            got: state.amplitudes.len(),
        });
    }
    let mut out = DenseState::zeros(params.sites);
    apply_hamiltonian_slice(params, &state.amplitudes, &mut out.amplitudes);
    Ok(out)
}

fn apply_hamiltonian_slice(params: &ModelParameters, input: &[f64], out: &mut [f64]) {
    let n = params.sites;
    let bonds = bond_actions(params);
    let half_h = params.field / 2.0;
    let chunk = 1usize << 10;
    out.par_chunks_mut(chunk)
        .enumerate()
        .for_each(|(c, block)| {
            let base = c * chunk;
            for (off, slot) in block.iter_mut().enumerate() {
                let w = base + off;
                // -h/2 Σ_j (1 - 2λ_j) on the diagonal
                let mut acc =
                    -half_h * (n as f64 - 2.0 * (w as u64).count_ones() as f64) * input[w];
                for b in &bonds {
                    let v = w ^ b.mask;
                    acc += b.w_xx * input[v];
                    // σʸσʸ: sign -(-1)^(λᵢ+λⱼ)
                    let sign = if (w & b.mask).count_ones() % 2 == 0 {
                        -1.0
                    } else {
                        1.0
                    };
                    acc += b.w_yy * sign * input[v];
                }
                *slot = acc;
            }
        });
}

/// Ground-state result: the lowest eigenpair plus a gap estimate used to
/// flag near-degeneracy (ordered-phase doublets).
#[derive(Clone, Debug)]
pub struct GroundState {
    pub energy: f64,
    pub state: DenseState,
    /// Estimated distance to the next eigenvalue (exact for the dense
    /// solver, Ritz-based for Lanczos).
    pub gap: f64,
}

impl GroundState {
    /// Near-degenerate doublet, as in the ordered phase |h| < 1.
    pub fn is_degenerate(&self) -> bool {
        self.gap < 1e-10
    }
}

pub const DENSE_MAX_SITES: usize = 12;
pub const LANCZOS_MAX_SITES: usize = 20;

/// Assemble the full 2^N × 2^N real matrix of H, filling entries term by
/// term.
pub fn dense_hamiltonian(params: &ModelParameters) -> Result<Array2<f64>, SpinModelError> {
    if params.sites > DENSE_MAX_SITES {
        return Err(SpinModelError::ChainTooLarge {
            n: params.sites,
            max: DENSE_MAX_SITES,
        });
    }
    let dim = params.dim();
    let n = params.sites;
    let mut h = Array2::<f64>::zeros((dim, dim));
    let half_h = params.field / 2.0;
    for v in 0..dim {
        h[(v, v)] += -half_h * (n as f64 - 2.0 * (v as u64).count_ones() as f64);
    }
    for b in bond_actions(params) {
        for v in 0..dim {
            let w = v ^ b.mask;
            h[(w, v)] += b.w_xx;
            let sign = if (v & b.mask).count_ones() % 2 == 0 {
                -1.0
            } else {
                1.0
            };
            h[(w, v)] += b.w_yy * sign;
        }
    }
    Ok(h)
}

/// Lowest eigenpair by dense diagonalization of the full 2^N × 2^N
/// matrix (N ≤ 12), using LAPACK's dsyevr restricted to the two lowest
/// eigenvalues. The eigenvector is normalized with its first
/// largest-magnitude amplitude made positive.
pub fn ground_state_dense(params: &ModelParameters) -> Result<GroundState, SpinModelError> {
    let h = dense_hamiltonian(params)?;
    let dim = params.dim();
    let (vals, ground) = lowest_two_eigenpairs(h)?;
    let mut state = DenseState::new(params.sites, ground)?;
    state.normalize();
    state.fix_sign();
    let _ = dim;
    Ok(GroundState {
        energy: vals.0,
        state,
        gap: vals.1 - vals.0,
    })
}

/// dsyevr on a symmetric matrix, eigenvalues 1..2 in ascending order.
/// Returns ((λ₀, λ₁), eigenvector of λ₀).
fn lowest_two_eigenpairs(h: Array2<f64>) -> Result<((f64, f64), Vec<f64>), SpinModelError> {
    let n = h.nrows() as i32;
    // column-major copy; H is symmetric so the memory order is immaterial
    let mut a = h.into_raw_vec();
    let mut w = vec![0.0f64; n as usize];
    let mut z = vec![0.0f64; (n as usize) * 2];
    let mut isuppz = vec![0i32; 4];
    let mut m = 0i32;
    let mut info = 0i32;
    // workspace query
    let mut work_query = [0.0f64];
    let mut iwork_query = [0i32];
    unsafe {
        lapack::dsyevr(
            b'V',
            b'I',
            b'L',
            n,
            &mut a,
            n,
            0.0,
            0.0,
            1,
            2,
            0.0,
            &mut m,
            &mut w,
            &mut z,
            n,
            &mut isuppz,
            &mut work_query,
            -1,
            &mut iwork_query,
            -1,
            &mut info,
        );
    }
    if info != 0 {
        return Err(SpinModelError::Linalg(format!(
            "dsyevr workspace query failed (info = {info})"
        )));
    }
    let lwork = work_query[0] as i32;
    let liwork = iwork_query[0];
    let mut work = vec![0.0f64; lwork as usize];
    let mut iwork = vec![0i32; liwork as usize];
    unsafe {
        lapack::dsyevr(
            b'V',
            b'I',
            b'L',
            n,
            &mut a,
            n,
            0.0,
            0.0,
            1,
            2,
            0.0,
            &mut m,
            &mut w,
            &mut z,
            n,
            &mut isuppz,
            &mut work,
            lwork,
            &mut iwork,
            liwork,
            &mut info,
        );
    }
    if info != 0 || m < 2 {
        return Err(SpinModelError::Linalg(format!(
            "dsyevr failed (info = {info}, m = {m})"
        )));
    }
    let ground = z[..n as usize].to_vec();
    Ok(((w[0], w[1]), ground))
}

/// Tuning knobs for the Lanczos solver. The defaults converge for every
/// phase point at N ≤ 20.
#[derive(Copy, Clone, Debug)]
pub struct LanczosOptions {
    /// Abort after this many matvecs.
    pub max_iterations: usize,
    /// Converged when the lowest Ritz value changes by less than this
    /// between iterations.
    pub tolerance: f64,
    /// Seed for the random start vector.
    pub seed: u64,
    /// Cap on the stored Krylov basis; the iteration restarts from the
    /// current Ritz vector when it fills up.
    pub max_basis: usize,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tolerance: 1e-12,
            seed: 0x5EED_1357,
            max_basis: 220,
        }
    }
}

/// Lowest eigenpair via Lanczos with full reorthogonalization on
/// matvecs of `apply_hamiltonian` (N ≤ 20). Same sign convention as the
/// dense solver.
pub fn ground_state_lanczos(params: &ModelParameters) -> Result<GroundState, SpinModelError> {
    ground_state_lanczos_with(params, &LanczosOptions::default())
}

pub fn ground_state_lanczos_with(
    params: &ModelParameters,
    opts: &LanczosOptions,
) -> Result<GroundState, SpinModelError> {
    if params.sites > LANCZOS_MAX_SITES {
        return Err(SpinModelError::ChainTooLarge {
            n: params.sites,
            max: LANCZOS_MAX_SITES,
        });
    }
    let dim = params.dim();
    let mut rng = ChaCha12Rng::seed_from_u64(opts.seed);
    let mut v0: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>() - 0.5).collect();
    normalize_vec(&mut v0);

    let mut total_iters = 0usize;
    let mut prev_theta = f64::INFINITY;
    loop {
        let cycle = run_lanczos_cycle(params, v0, opts, &mut total_iters, &mut prev_theta)?;
        match cycle {
            CycleOutcome::Converged {
                energy,
                gap,
                vector,
            } => {
                let mut state = DenseState::new(params.sites, vector)?;
                state.normalize();
                state.fix_sign();
                return Ok(GroundState { energy, state, gap });
            }
            CycleOutcome::Restart { vector } => v0 = vector,
            CycleOutcome::OutOfIterations { residual } => {
                return Err(SpinModelError::NoConvergence {
                    iterations: total_iters,
                    residual,
                })
            }
        }
    }
}

enum CycleOutcome {
    Converged {
        energy: f64,
        gap: f64,
        vector: Vec<f64>,
    },
    Restart {
        vector: Vec<f64>,
    },
    OutOfIterations {
        residual: f64,
    },
}

fn run_lanczos_cycle(
    params: &ModelParameters,
    v0: Vec<f64>,
    opts: &LanczosOptions,
    total_iters: &mut usize,
    prev_theta: &mut f64,
) -> Result<CycleOutcome, SpinModelError> {
    let dim = params.dim();
    let mut basis: Vec<Vec<f64>> = vec![v0];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();

    loop {
        if *total_iters >= opts.max_iterations {
            let (theta, y) = tridiag_lowest(&alphas, &betas)?;
            let x = ritz_vector(&basis, &y, dim);
            let residual = residual_norm(params, &x, theta);
            return Ok(CycleOutcome::OutOfIterations { residual });
        }
        *total_iters += 1;

        let k = alphas.len();
        let vk = &basis[k];
        let mut w = vec![0.0; dim];
        apply_hamiltonian_slice(params, vk, &mut w);
        let alpha = dot(&w, vk);
        alphas.push(alpha);

        axpy(&mut w, -alpha, vk);
        if k > 0 {
            let beta_prev = betas[k - 1];
            let prev = &basis[k - 1];
            axpy(&mut w, -beta_prev, prev);
        }
        // full reorthogonalization, two passes
        for _ in 0..2 {
            for q in &basis {
                let c = dot(&w, q);
                axpy(&mut w, -c, q);
            }
        }

        let (theta, y) = tridiag_lowest(&alphas, &betas)?;
        let converged = (*prev_theta - theta).abs() < opts.tolerance;
        *prev_theta = theta;
        if converged {
            let gap = tridiag_gap(&alphas, &betas)?;
            let x = ritz_vector(&basis, &y, dim);
            return Ok(CycleOutcome::Converged {
                energy: theta,
                gap,
                vector: x,
            });
        }

        let beta = dot(&w, &w).sqrt();
        if beta < 1e-14 {
            // Krylov space exhausted: the tridiagonal eigenpair is exact.
            let gap = tridiag_gap(&alphas, &betas)?;
            let x = ritz_vector(&basis, &y, dim);
            return Ok(CycleOutcome::Converged {
                energy: theta,
                gap,
                vector: x,
            });
        }
        betas.push(beta);
        for x in &mut w {
            *x /= beta;
        }

        if basis.len() == opts.max_basis {
            let x = ritz_vector(&basis, &y, dim);
            return Ok(CycleOutcome::Restart { vector: x });
        }
        basis.push(w);
    }
}

fn normalize_vec(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    for x in v.iter_mut() {
        *x /= n;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn tridiag_matrix(alphas: &[f64], betas: &[f64]) -> Array2<f64> {
    let m = alphas.len();
    let mut t = Array2::<f64>::zeros((m, m));
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    t
}

fn tridiag_lowest(alphas: &[f64], betas: &[f64]) -> Result<(f64, Vec<f64>), SpinModelError> {
    if alphas.len() == 1 {
        return Ok((alphas[0], vec![1.0]));
    }
    let t = tridiag_matrix(alphas, betas);
    let (vals, vecs) = t
        .eigh(UPLO::Lower)
        .map_err(|e| SpinModelError::Linalg(e.to_string()))?;
    Ok((vals[0], vecs.column(0).to_vec()))
}

fn tridiag_gap(alphas: &[f64], betas: &[f64]) -> Result<f64, SpinModelError> {
    if alphas.len() == 1 {
        return Ok(f64::INFINITY);
    }
    let t = tridiag_matrix(alphas, betas);
    let (vals, _) = t
        .eigh(UPLO::Lower)
        .map_err(|e| SpinModelError::Linalg(e.to_string()))?;
    Ok(vals[1] - vals[0])
}

fn ritz_vector(basis: &[Vec<f64>], y: &[f64], dim: usize) -> Vec<f64> {
    let mut x = vec![0.0; dim];
    for (q, &c) in basis.iter().zip(y) {
        axpy(&mut x, c, q);
    }
    normalize_vec(&mut x);
    x
}

fn residual_norm(params: &ModelParameters, x: &[f64], theta: f64) -> f64 {
    let mut hx = vec![0.0; x.len()];
    apply_hamiltonian_slice(params, x, &mut hx);
    hx.iter()
        .zip(x)
        .map(|(h, xi)| (h - theta * xi) * (h - theta * xi))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn params(j: f64, gamma: f64, h: f64, n: usize, boundary: Boundary) -> ModelParameters {
        ModelParameters::new(j, gamma, h, n, boundary).unwrap()
    }

    /// Independent oracle: dense H from explicit complex Kronecker
    /// products of 2×2 Pauli matrices over the terms of `build_terms`.
    fn kron_oracle(p: &ModelParameters) -> Array2<f64> {
        let dim = p.dim();
        let mut h = Array2::<Complex64>::zeros((dim, dim));
        for term in build_terms(p) {
            let mut m = Array2::<Complex64>::eye(1);
            for site in 1..=p.sites {
                let op = term
                    .ops
                    .iter()
                    .find(|o| o.site == site)
                    .map(|o| o.kind)
                    .unwrap_or(PauliKind::Identity);
                m = kron(&m, &pauli_matrix(op));
            }
            h = h + m.mapv(|x| x * Complex64::new(term.weight, 0.0));
        }
        let max_imag = h.iter().map(|z| z.im.abs()).fold(0.0f64, f64::max);
        assert!(max_imag < 1e-14, "H should be real, got imag {max_imag}");
        h.mapv(|z| z.re)
    }

    fn pauli_matrix(kind: PauliKind) -> Array2<Complex64> {
        let z = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        match kind {
            PauliKind::Identity => ndarray::array![[one, z], [z, one]],
            PauliKind::X => ndarray::array![[z, one], [one, z]],
            PauliKind::Y => ndarray::array![[z, -i], [i, z]],
            PauliKind::Z => ndarray::array![[one, z], [z, -one]],
        }
    }

    fn kron(a: &Array2<Complex64>, b: &Array2<Complex64>) -> Array2<Complex64> {
        let (ra, ca) = a.dim();
        let (rb, cb) = b.dim();
        let mut out = Array2::<Complex64>::zeros((ra * rb, ca * cb));
        for ia in 0..ra {
            for ja in 0..ca {
                for ib in 0..rb {
                    for jb in 0..cb {
                        out[(ia * rb + ib, ja * cb + jb)] = a[(ia, ja)] * b[(ib, jb)];
                    }
                }
            }
        }
        out
    }

    fn random_state(n: usize, seed: u64) -> DenseState {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let amps: Vec<f64> = (0..1usize << n).map(|_| rng.gen::<f64>() - 0.5).collect();
        DenseState::new(n, amps).unwrap()
    }

    #[test]
    fn build_terms_ising_critical_n2() {
        let t = build_terms(&params(1.0, 1.0, 1.0, 2, Boundary::Open));
        let xx: Vec<_> = t.iter().filter(|t| t.ops[0].kind == PauliKind::X).collect();
        let yy: Vec<_> = t.iter().filter(|t| t.ops[0].kind == PauliKind::Y).collect();
        let zz: Vec<_> = t.iter().filter(|t| t.ops[0].kind == PauliKind::Z).collect();
        assert_eq!((xx.len(), yy.len(), zz.len()), (1, 1, 2));
        assert_eq!(xx[0].weight, -0.5);
        assert_eq!(yy[0].weight, 0.0);
        assert!(zz.iter().all(|t| t.weight == -0.5));
    }

    #[test]
    fn build_terms_periodic_n3() {
        let t = build_terms(&params(1.0, 0.5, 0.5, 3, Boundary::Periodic));
        let count = |k: PauliKind| t.iter().filter(|t| t.ops[0].kind == k).count();
        assert_eq!(count(PauliKind::X), 3);
        assert_eq!(count(PauliKind::Y), 3);
        assert_eq!(count(PauliKind::Z), 3);
        for term in &t {
            match term.ops[0].kind {
                PauliKind::X => assert_eq!(term.weight, -0.375),
                PauliKind::Y => assert_eq!(term.weight, -0.125),
                PauliKind::Z => assert_eq!(term.weight, -0.25),
                PauliKind::Identity => unreachable!(),
            }
        }
    }

    #[test]
    fn build_terms_zero_coupling() {
        let t = build_terms(&params(0.0, 0.7, 1.0, 4, Boundary::Open));
        assert_eq!(t.len(), 4);
        assert!(t
            .iter()
            .all(|t| t.ops.len() == 1 && t.ops[0].kind == PauliKind::Z && t.weight == -0.5));
    }

    #[test]
    fn matvec_matches_kron_oracle() {
        for &boundary in &[Boundary::Open, Boundary::Periodic] {
            for &n in &[2usize, 3, 5, 6] {
                let p = params(1.0, 0.6, 0.8, n, boundary);
                let h = kron_oracle(&p);
                let v = random_state(n, 42 + n as u64);
                let got = apply_hamiltonian(&p, &v).unwrap();
                let want = h.dot(&ndarray::Array1::from(v.amplitudes().to_vec()));
                for (g, w) in got.amplitudes().iter().zip(want.iter()) {
                    assert!((g - w).abs() < 1e-12 * want.len() as f64);
                }
            }
        }
    }

    #[test]
    fn matvec_example_n2() {
        // H|00⟩ = -|00⟩ - (1/2)|11⟩ at the Ising critical point
        let p = params(1.0, 1.0, 1.0, 2, Boundary::Open);
        let v = DenseState::basis_state(2, 0b00);
        let hv = apply_hamiltonian(&p, &v).unwrap();
        assert!((hv.amplitudes()[0b00] + 1.0).abs() < 1e-15);
        assert!((hv.amplitudes()[0b01]).abs() < 1e-15);
        assert!((hv.amplitudes()[0b10]).abs() < 1e-15);
        assert!((hv.amplitudes()[0b11] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn matvec_field_only_is_diagonal() {
        let p = params(0.0, 0.3, 1.0, 5, Boundary::Open);
        for v_idx in [0usize, 7, 19, 31] {
            let v = DenseState::basis_state(5, v_idx);
            let hv = apply_hamiltonian(&p, &v).unwrap();
            let lam_sum: f64 = (1..=5)
                .map(|j| 1.0 - 2.0 * bit_at(v_idx, j, 5) as f64)
                .sum();
            for (i, a) in hv.amplitudes().iter().enumerate() {
                let expect = if i == v_idx { -0.5 * lam_sum } else { 0.0 };
                assert!((a - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn matvec_is_symmetric() {
        for &boundary in &[Boundary::Open, Boundary::Periodic] {
            let p = params(1.3, 0.4, 0.9, 6, boundary);
            let u = random_state(6, 1);
            let v = random_state(6, 2);
            let hu = apply_hamiltonian(&p, &u).unwrap();
            let hv = apply_hamiltonian(&p, &v).unwrap();
            assert!((u.dot(&hv) - hu.dot(&v)).abs() < 1e-12);
        }
    }

    #[test]
    fn z2_parity_string_commutes() {
        // Πσᶻ multiplies each amplitude by (-1)^popcount; H only connects
        // configurations of equal bit parity, so the commutator vanishes.
        for &boundary in &[Boundary::Open, Boundary::Periodic] {
            let p = params(1.0, 0.8, 1.2, 6, boundary);
            let v = random_state(6, 9);
            let parity = |s: &DenseState| {
                let mut out = s.clone();
                for (i, a) in out.amplitudes_mut().iter_mut().enumerate() {
                    if (i as u64).count_ones() % 2 == 1 {
                        *a = -*a;
                    }
                }
                out
            };
            let h_par = apply_hamiltonian(&p, &parity(&v)).unwrap();
            let par_h = parity(&apply_hamiltonian(&p, &v).unwrap());
            for (a, b) in h_par.amplitudes().iter().zip(par_h.amplitudes()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ground_state_dense_ising_n2() {
        let gs = ground_state_dense(&params(1.0, 1.0, 1.0, 2, Boundary::Open)).unwrap();
        assert!((gs.energy + 5.0f64.sqrt() / 2.0).abs() < 1e-12);
        assert!(gs.state.is_normalized(1e-12));
    }

    #[test]
    fn ground_state_dense_field_only() {
        let gs = ground_state_dense(&params(0.0, 0.0, 1.0, 6, Boundary::Open)).unwrap();
        assert!((gs.energy + 3.0).abs() < 1e-12);
        assert!((gs.state.amplitudes()[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ground_state_dense_rejects_large_chain() {
        let p = params(1.0, 1.0, 1.0, 13, Boundary::Open);
        assert!(matches!(
            ground_state_dense(&p),
            Err(SpinModelError::ChainTooLarge { .. })
        ));
    }

    #[test]
    fn lanczos_matches_dense_n10() {
        let p = params(1.0, 1.0, 1.0, 10, Boundary::Open);
        let dense = ground_state_dense(&p).unwrap();
        let lanczos = ground_state_lanczos(&p).unwrap();
        assert!((dense.energy - lanczos.energy).abs() < 1e-8);
        // eigenvectors agree up to the fixed sign convention
        let overlap = dense.state.dot(&lanczos.state).abs();
        assert!(overlap > 1.0 - 1e-8, "overlap {overlap}");
    }

    #[test]
    fn lanczos_field_only_n19() {
        let p = params(0.0, 0.0, 1.0, 19, Boundary::Open);
        let gs = ground_state_lanczos(&p).unwrap();
        assert!((gs.energy + 9.5).abs() < 1e-9);
    }

    #[test]
    fn lanczos_reproducible_across_start_vectors() {
        let p = params(1.0, 1.0, 1.0, 13, Boundary::Open);
        let a = ground_state_lanczos_with(
            &p,
            &LanczosOptions {
                seed: 7,
                ..Default::default()
            },
        )
        .unwrap();
        let b = ground_state_lanczos_with(
            &p,
            &LanczosOptions {
                seed: 4242,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((a.energy - b.energy).abs() < 1e-9);
    }

    #[test]
    fn periodic_ground_energy_translation_invariant() {
        let p = params(1.0, 1.0, 1.0, 6, Boundary::Periodic);
        let gs = ground_state_dense(&p).unwrap();
        // cyclically relabel sites: rotate each configuration left by one
        let n = 6;
        let dim = 1usize << n;
        let mut shifted = DenseState::zeros(n);
        for v in 0..dim {
            let rotated = ((v << 1) & (dim - 1)) | (v >> (n - 1));
            shifted.amplitudes_mut()[rotated] = gs.state.amplitudes()[v];
        }
        let h_shift = apply_hamiltonian(&p, &shifted).unwrap();
        let e = shifted.dot(&h_shift);
        assert!((e - gs.energy).abs() < 1e-10);
    }

    #[test]
    fn energy_non_increasing_in_field() {
        for &gamma in &[0.0, 0.5, 1.0, 1.5] {
            let mut prev = f64::INFINITY;
            for k in 0..=8 {
                let h = 0.25 * k as f64;
                let gs = ground_state_dense(&params(1.0, gamma, h, 8, Boundary::Open)).unwrap();
                assert!(
                    gs.energy <= prev + 1e-10,
                    "gamma={gamma} h={h}: {} > {prev}",
                    gs.energy
                );
                prev = gs.energy;
            }
        }
    }

    #[test]
    fn chain_too_short_rejected() {
        assert!(matches!(
            ModelParameters::new(1.0, 1.0, 1.0, 1, Boundary::Open),
            Err(SpinModelError::ChainTooShort(1))
        ));
    }
}
