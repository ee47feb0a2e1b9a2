//! Suffix environments of the doubled (bra ⊗ ket) chain.
//!
//! These are the shared workhorse behind ancestral sampling and the
//! normalization side of the gradient: for an open chain, `envs[k]` is
//! the right zipper matrix of sites k..N; for a ring it is the suffix
//! product of transfer matrices, closed by a trace. They work uniformly
//! for both boundary kinds, which is why no canonical-form machinery
//! exists in this crate.

use ndarray::Array2;

use super::contract::transfer_matrix;
use super::{MpsError, TensorTrain, PHYS_DIM};
use crate::scalar::Scalar;
use crate::spin_model::Boundary;

/// Cached suffix environments plus ln Z, stamped with the train version
/// so mutation invalidates them.
#[derive(Clone, Debug)]
pub struct EvaluationCache<T: Scalar> {
    version: u64,
    boundary: Boundary,
    log_norm_sqr: f64,
    /// `envs[k]` covers sites k..N; `envs[N]` is the terminal identity.
    /// Open: (Dl_k × Dl_k) with (ket, bra) indices. Periodic: (D² × D²).
    envs: Vec<Array2<T>>,
    /// ln of the factor pulled out of `envs[k]`.
    ln_scales: Vec<f64>,
}

impl<T: Scalar> EvaluationCache<T> {
    pub fn new(tt: &TensorTrain<T>) -> Result<Self, MpsError> {
        let n = tt.site_count();
        let mut envs: Vec<Array2<T>> = Vec::with_capacity(n + 1);
        let mut ln_scales = vec![0.0f64; n + 1];
        match tt.boundary() {
            Boundary::Open => {
                envs.push(Array2::from_elem((1, 1), T::one()));
                for k in (0..n).rev() {
                    let dl = tt.tensor(k).dim().0;
                    let mut r = Array2::<T>::zeros((dl, dl));
                    {
                        let prev = envs.last().unwrap();
                        for s in 0..PHYS_DIM {
                            let m = tt.slice(k, s);
                            let m_conj_t = m.mapv(|x| x.conj()).reversed_axes();
                            r = r + m.dot(prev).dot(&m_conj_t);
                        }
                    }
                    let f = rescale_env(&mut r);
                    ln_scales[k] = ln_scales[k + 1] + f;
                    envs.push(r);
                }
            }
            Boundary::Periodic => {
                let d2 = tt.bond_dim() * tt.bond_dim();
                envs.push(Array2::<T>::eye(d2));
                for k in (0..n).rev() {
                    let e = transfer_matrix(tt, k);
                    let mut r = e.dot(envs.last().unwrap());
                    let f = rescale_env(&mut r);
                    ln_scales[k] = ln_scales[k + 1] + f;
                    envs.push(r);
                }
            }
        }
        envs.reverse();
        // fully contracted environment reproduces Z
        let z_val = match tt.boundary() {
            Boundary::Open => envs[0][(0, 0)].re(),
            Boundary::Periodic => envs[0].diag().iter().fold(T::zero(), |a, &x| a + x).re(),
        };
        if !(z_val > 0.0) || !z_val.is_finite() {
            return Err(MpsError::ZeroNorm);
        }
        Ok(Self {
            version: tt.version(),
            boundary: tt.boundary(),
            log_norm_sqr: z_val.ln() + ln_scales[0],
            envs,
            ln_scales,
        })
    }

    pub fn is_valid_for(&self, tt: &TensorTrain<T>) -> bool {
        self.version == tt.version() && self.boundary == tt.boundary()
    }

    /// ln Z of the train the cache was built from.
    pub fn log_norm_sqr(&self) -> f64 {
        self.log_norm_sqr
    }

    /// Suffix environment covering sites `k..N` (0-based; `k = N` is the
    /// terminal), together with the ln factor pulled out of it.
    pub fn env(&self, k: usize) -> (&Array2<T>, f64) {
        (&self.envs[k], self.ln_scales[k])
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }
}

fn rescale_env<T: Scalar>(m: &mut Array2<T>) -> f64 {
    let mm = m.iter().map(|x| x.modulus()).fold(0.0f64, f64::max);
    if mm == 0.0 || !mm.is_finite() {
        return 0.0;
    }
    m.mapv_inplace(|x| x.scale_by(1.0 / mm));
    mm.ln()
}
