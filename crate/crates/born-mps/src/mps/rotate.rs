//! Measurement-basis rotation, plus exact dense ⇄ train conversion.
//!
//! Training happens on z-basis data only; x- and y-basis distributions
//! of a trained model come from rotating every physical index by the
//! single-site unitary that maps measurement in the requested basis to
//! the computational basis (X → Hadamard, Y → Hadamard·diag(1, −i)).

use ndarray::{Array2, Array3};
use ndarray_linalg::SVDInto;
use num_complex::Complex64;

use super::{MpsError, TensorTrain, PHYS_DIM};
use crate::scalar::Scalar;
use crate::spin_model::{Boundary, DenseState};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum MeasurementBasis {
    X,
    Y,
    Z,
}

impl std::fmt::Display for MeasurementBasis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MeasurementBasis::X => write!(f, "x"),
            MeasurementBasis::Y => write!(f, "y"),
            MeasurementBasis::Z => write!(f, "z"),
        }
    }
}

impl std::str::FromStr for MeasurementBasis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Ok(MeasurementBasis::X),
            "y" => Ok(MeasurementBasis::Y),
            "z" => Ok(MeasurementBasis::Z),
            other => Err(format!("unknown basis `{other}` (expected x|y|z)")),
        }
    }
}

/// Single-site unitary rows: amplitude of outcome s' in the requested
/// basis is Σ_s U[s',s]·ψ_s.
pub fn rotation_matrix(basis: MeasurementBasis) -> Array2<Complex64> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let c = Complex64::new;
    match basis {
        MeasurementBasis::Z => {
            ndarray::array![[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]]
        }
        MeasurementBasis::X => ndarray::array![[c(h, 0.0), c(h, 0.0)], [c(h, 0.0), c(-h, 0.0)]],
        MeasurementBasis::Y => ndarray::array![[c(h, 0.0), c(0.0, -h)], [c(h, 0.0), c(0.0, h)]],
    }
}

impl<T: Scalar> TensorTrain<T> {
    /// Rotate every physical index into the requested measurement basis.
    /// Output entries are complex (with zero imaginary part for X and Z).
    pub fn rotate_basis(&self, basis: MeasurementBasis) -> TensorTrain<Complex64> {
        let u = rotation_matrix(basis);
        let tensors = self
            .tensors()
            .iter()
            .map(|t| {
                let (dl, _, dr) = t.dim();
                Array3::from_shape_fn((dl, PHYS_DIM, dr), |(l, sp, r)| {
                    (0..PHYS_DIM)
                        .map(|s| u[(sp, s)] * t[(l, s, r)].to_complex())
                        .fold(Complex64::new(0.0, 0.0), |a, b| a + b)
                })
            })
            .collect();
        TensorTrain::from_tensors(self.boundary(), self.bond_dim(), tensors)
            .expect("rotation preserves shapes")
    }
}

/// Rotate a dense amplitude vector into a measurement basis by applying
/// the single-site unitary at every site.
pub fn rotate_dense(amps: &[Complex64], sites: usize, basis: MeasurementBasis) -> Vec<Complex64> {
    let u = rotation_matrix(basis);
    let mut out = amps.to_vec();
    for site in 1..=sites {
        let stride = 1usize << (sites - site);
        for v in 0..out.len() {
            if v & stride == 0 {
                let a0 = out[v];
                let a1 = out[v | stride];
                out[v] = u[(0, 0)] * a0 + u[(0, 1)] * a1;
                out[v | stride] = u[(1, 0)] * a0 + u[(1, 1)] * a1;
            }
        }
    }
    out
}

/// Probabilities of measuring a real dense state in the given basis.
pub fn dense_basis_probabilities(state: &DenseState, basis: MeasurementBasis) -> Vec<f64> {
    let amps: Vec<Complex64> = state
        .amplitudes()
        .iter()
        .map(|&a| Complex64::new(a, 0.0))
        .collect();
    let rotated = rotate_dense(&amps, state.sites(), basis);
    let norm: f64 = rotated.iter().map(|z| z.norm_sqr()).sum();
    rotated.iter().map(|z| z.norm_sqr() / norm).collect()
}

impl TensorTrain<f64> {
    /// Exact open-boundary factorization of a dense state by successive
    /// SVD splits, zero-padded to a uniform bond dimension. No
    /// truncation is performed, so `to_dense` reproduces the input to
    /// rounding error.
    pub fn from_dense(state: &DenseState) -> Result<Self, MpsError> {
        let n = state.sites();
        if n < 2 {
            return Err(MpsError::TooFewSites(n));
        }
        let mut raw: Vec<Array3<f64>> = Vec::with_capacity(n);
        // rows of `rest`: (left bond α, current bit s); columns: the tail
        let mut rest = Array2::from_shape_vec((2, 1usize << (n - 1)), state.amplitudes().to_vec())
            .expect("amplitude length is 2^N");
        for _site in 0..n - 1 {
            let (rows, cols) = rest.dim();
            let (u, sv, vt) = rest
                .svd_into(true, true)
                .map_err(|e| MpsError::Linalg(e.to_string()))?;
            let u = u.expect("requested");
            let vt = vt.expect("requested");
            let rank = sv.len().min(rows).min(cols);
            let dl = rows / 2;
            let mut tensor = Array3::zeros((dl, 2, rank));
            for r in 0..rows {
                for c in 0..rank {
                    tensor[(r / 2, r % 2, c)] = u[(r, c)];
                }
            }
            raw.push(tensor);
            // carry S·Vᵀ and split off the next bit
            let mut carry = Array2::zeros((rank, cols));
            for i in 0..rank {
                for j in 0..cols {
                    carry[(i, j)] = sv[i] * vt[(i, j)];
                }
            }
            rest = carry
                .into_shape((rank * 2, cols / 2))
                .expect("column count is even");
        }
        let (rows, _) = rest.dim();
        let mut last = Array3::zeros((rows / 2, 2, 1));
        for r in 0..rows {
            last[(r / 2, r % 2, 0)] = rest[(r, 0)];
        }
        raw.push(last);

        // pad to the uniform bond dimension the architecture requires
        let d = raw
            .iter()
            .flat_map(|t| [t.dim().0, t.dim().2])
            .max()
            .unwrap()
            .max(1);
        let tensors: Vec<Array3<f64>> = raw
            .into_iter()
            .enumerate()
            .map(|(k, t)| {
                let (dl, _, dr) = t.dim();
                let target = (
                    if k == 0 { 1 } else { d },
                    2usize,
                    if k == n - 1 { 1 } else { d },
                );
                let mut padded = Array3::zeros(target);
                for l in 0..dl {
                    for s in 0..2 {
                        for r in 0..dr {
                            padded[(l, s, r)] = t[(l, s, r)];
                        }
                    }
                }
                padded
            })
            .collect();
        TensorTrain::from_tensors(Boundary::Open, d, tensors)
    }
}
