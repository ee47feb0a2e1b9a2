//! Tensor trains (matrix product states) in the two Born machine
//! architectures: an open chain, where the edge tensors carry a single
//! bond index, and a ring, where a bond between the last and first site
//! completes the loop.
//!
//! Tensors are stored with index order (left bond, physical, right bond).
//! Open edge tensors keep a dummy bond of size 1 in memory; their logical
//! shapes are `(d, D)` and `(D, d)`. All contraction outputs are carried
//! as log-magnitude plus sign/phase so that long unnormalized chains
//! cannot overflow.

mod contract;
mod environments;
mod rotate;


pub use environments::EvaluationCache;
pub use rotate::{dense_basis_probabilities, rotate_dense, rotation_matrix, MeasurementBasis};

use ndarray::{Array3, Axis};
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::spin_model::Boundary;

pub const PHYS_DIM: usize = 2;

/// Largest chain for which full 2^N dense expansion is permitted.
pub const DENSE_EXPANSION_MAX_SITES: usize = 14;

#[derive(Debug, Error)]
pub enum MpsError {
    #[error("need at least 2 sites, got {0}")]
    TooFewSites(usize),
    #[error("bond dimension must be at least 1")]
    ZeroBondDim,
    #[error("configuration length {got} does not match chain length {expected}")]
    ConfigLengthMismatch { expected: usize, got: usize },
    #[error("chain lengths differ: {a} vs {b}")]
    SiteCountMismatch { a: usize, b: usize },
    #[error("{n} sites exceeds the dense-expansion limit of {max}")]
    TooLargeForDense { n: usize, max: usize },
    #[error("site {site} out of range 1..={n}")]
    SiteOutOfRange { site: usize, n: usize },
    #[error("pauli string sites must be distinct")]
    DuplicateSite,
    #[error("tensor {site} has shape {got:?}, expected {expected:?}")]
    BadShape {
        site: usize,
        got: (usize, usize, usize),
        expected: (usize, usize, usize),
    },
    #[error("tensor {site} contains a non-finite entry")]
    NonFinite { site: usize },
    #[error("tensor train has zero norm")]
    ZeroNorm,
    #[error("configuration bits must be 0 or 1")]
    BadBit,
    #[error("linear algebra backend error: {0}")]
    Linalg(String),
}

/// One measurement outcome: bits λ₁…λ_N, site 1 first.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpinConfiguration {
    bits: Vec<u8>,
}

impl SpinConfiguration {
    pub fn new(bits: Vec<u8>) -> Result<Self, MpsError> {
        if bits.iter().any(|&b| b > 1) {
            return Err(MpsError::BadBit);
        }
        Ok(Self { bits })
    }

    /// Configuration for the integer index Σ_j λ_j 2^(N-j).
    pub fn from_index(index: usize, sites: usize) -> Self {
        let bits = (0..sites)
            .map(|j| ((index >> (sites - 1 - j)) & 1) as u8)
            .collect();
        Self { bits }
    }

    pub fn to_index(&self) -> usize {
        self.bits
            .iter()
            .fold(0usize, |acc, &b| (acc << 1) | b as usize)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    /// Bit at 0-based position `k` (site k+1).
    pub fn bit(&self, k: usize) -> usize {
        self.bits[k] as usize
    }

    /// σᶻ eigenvalue 1 - 2λ at 0-based position `k`.
    pub fn spin(&self, k: usize) -> f64 {
        1.0 - 2.0 * self.bits[k] as f64
    }

    /// Cyclic left shift by `shift` positions.
    pub fn rotated_left(&self, shift: usize) -> Self {
        let n = self.bits.len();
        let bits = (0..n).map(|j| self.bits[(j + shift) % n]).collect();
        Self { bits }
    }
}

impl std::fmt::Display for SpinConfiguration {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for b in &self.bits {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

impl std::fmt::Debug for SpinConfiguration {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SpinConfiguration({self})")
    }
}

impl std::str::FromStr for SpinConfiguration {
    type Err = MpsError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bits: Result<Vec<u8>, _> = s
            .chars()
            .map(|c| match c {
                '0' => Ok(0u8),
                '1' => Ok(1u8),
                _ => Err(MpsError::BadBit),
            })
            .collect();
        Ok(Self { bits: bits? })
    }
}

/// The MPS model: one rank-3 tensor per site, linked by bonds of size D.
#[derive(Clone, Debug)]
pub struct TensorTrain<T: Scalar> {
    boundary: Boundary,
    bond_dim: usize,
    tensors: Vec<Array3<T>>,
    version: u64,
}

impl<T: Scalar> TensorTrain<T> {
    /// Expected storage shape of the tensor at 0-based `site`.
    fn expected_shape(
        boundary: Boundary,
        sites: usize,
        bond_dim: usize,
        site: usize,
    ) -> (usize, usize, usize) {
        match boundary {
            Boundary::Periodic => (bond_dim, PHYS_DIM, bond_dim),
            Boundary::Open => {
                let dl = if site == 0 { 1 } else { bond_dim };
                let dr = if site == sites - 1 { 1 } else { bond_dim };
                (dl, PHYS_DIM, dr)
            }
        }
    }

    pub fn from_tensors(
        boundary: Boundary,
        bond_dim: usize,
        tensors: Vec<Array3<T>>,
    ) -> Result<Self, MpsError> {
        let sites = tensors.len();
        if sites < 2 {
            return Err(MpsError::TooFewSites(sites));
        }
        if bond_dim == 0 {
            return Err(MpsError::ZeroBondDim);
        }
        for (k, t) in tensors.iter().enumerate() {
            let expected = Self::expected_shape(boundary, sites, bond_dim, k);
            if t.dim() != expected {
                return Err(MpsError::BadShape {
                    site: k + 1,
                    got: t.dim(),
                    expected,
                });
            }
            if t.iter().any(|x| !x.is_finite_scalar()) {
                return Err(MpsError::NonFinite { site: k + 1 });
            }
        }
        Ok(Self {
            boundary,
            bond_dim,
            tensors,
            version: 0,
        })
    }

    /// Noiseless base point of the initialization: every physical slice
    /// is the identity on the bond indices, truncated to the edge shapes
    /// for an open chain.
    pub fn identity(sites: usize, bond_dim: usize, boundary: Boundary) -> Result<Self, MpsError> {
        let tensors = (0..sites)
            .map(|k| {
                let (dl, _, dr) = Self::expected_shape(boundary, sites, bond_dim, k);
                Array3::from_shape_fn((dl, PHYS_DIM, dr), |(l, _, r)| {
                    if l == r {
                        T::one()
                    } else {
                        T::zero()
                    }
                })
            })
            .collect();
        Self::from_tensors(boundary, bond_dim, tensors)
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn site_count(&self) -> usize {
        self.tensors.len()
    }

    pub fn bond_dim(&self) -> usize {
        self.bond_dim
    }

    /// Monotone stamp, bumped by every mutation; caches compare against
    /// it to detect staleness.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn tensors(&self) -> &[Array3<T>] {
        &self.tensors
    }

    pub fn tensor(&self, site: usize) -> &Array3<T> {
        &self.tensors[site]
    }

    /// Physical slice (Dl × Dr) of the tensor at `site` for bit value `s`.
    pub fn slice(&self, site: usize, s: usize) -> ndarray::ArrayView2<'_, T> {
        self.tensors[site].index_axis(Axis(1), s)
    }

    pub fn tensors_mut(&mut self) -> &mut [Array3<T>] {
        self.version += 1;
        &mut self.tensors
    }

    /// Replace the tensor list wholesale (shapes re-checked).
    pub fn set_tensors(&mut self, tensors: Vec<Array3<T>>) -> Result<(), MpsError> {
        let replacement = Self::from_tensors(self.boundary, self.bond_dim, tensors)?;
        self.tensors = replacement.tensors;
        self.version += 1;
        Ok(())
    }

    /// Multiply every tensor by `exp(ln_factor / N)`, shifting ln Z by
    /// exactly 2·ln_factor without changing Born probabilities.
    pub fn rescale_all(&mut self, ln_factor: f64) {
        let n = self.tensors.len() as f64;
        let per_site = (ln_factor / n).exp();
        for t in &mut self.tensors {
            t.mapv_inplace(|x| x.scale_by(per_site));
        }
        self.version += 1;
    }

    /// Total number of scalar parameters Ω of this architecture.
    pub fn parameter_count(&self) -> usize {
        parameter_count(self.site_count(), self.bond_dim, self.boundary)
    }
}

impl TensorTrain<f64> {
    /// Standard initialization: broadcast identity on the bond indices
    /// plus i.i.d. Gaussian noise of standard deviation 0.01 from a
    /// seeded generator. Identical (sites, bond_dim, boundary, seed)
    /// give bit-identical tensors.
    pub fn near_identity(
        sites: usize,
        bond_dim: usize,
        boundary: Boundary,
        seed: u64,
    ) -> Result<Self, MpsError> {
        let mut tt = Self::identity(sites, bond_dim, boundary)?;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.01).expect("valid normal");
        for t in &mut tt.tensors {
            for x in t.iter_mut() {
                *x += noise.sample(&mut rng);
            }
        }
        Ok(tt)
    }

    /// Lift to complex entries (used by operator-insertion contractions).
    pub fn to_complex(&self) -> TensorTrain<num_complex::Complex64> {
        TensorTrain {
            boundary: self.boundary,
            bond_dim: self.bond_dim,
            tensors: self
                .tensors
                .iter()
                .map(|t| t.mapv(|x| num_complex::Complex64::new(x, 0.0)))
                .collect(),
            version: self.version,
        }
    }
}

/// Number of scalar parameters of an architecture:
/// open `2·(2D) + (N-2)·(2D²)`, periodic `N·(2D²)`.
pub fn parameter_count(sites: usize, bond_dim: usize, boundary: Boundary) -> usize {
    let d = PHYS_DIM;
    match boundary {
        Boundary::Open => 2 * (d * bond_dim) + (sites - 2) * (d * bond_dim * bond_dim),
        Boundary::Periodic => sites * (d * bond_dim * bond_dim),
    }
}
