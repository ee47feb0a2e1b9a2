//! Contraction primitives: amplitudes, norms, overlaps, dense expansion
//! and Pauli-string expectation values.
//!
//! Every chain product rescales its running object to unit max-modulus
//! per site and accumulates the pulled-out factor as a log, so results
//! stay finite for arbitrarily scaled tensors on chains of any length.

use ndarray::{Array1, Array2, ArrayView2};
use num_complex::Complex64;

use super::{MpsError, SpinConfiguration, TensorTrain, DENSE_EXPANSION_MAX_SITES, PHYS_DIM};
use crate::scalar::{LogScalar, Scalar};
use crate::spin_model::{Boundary, PauliKind, PauliOperator};

fn max_modulus<T: Scalar>(m: &Array2<T>) -> f64 {
    m.iter().map(|x| x.modulus()).fold(0.0, f64::max)
}

/// Rescale `m` to unit max-modulus, returning ln of the factor pulled
/// out, or `None` when `m` is exactly zero.
fn rescale<T: Scalar>(m: &mut Array2<T>) -> Option<f64> {
    let mm = max_modulus(m);
    if mm == 0.0 {
        return None;
    }
    m.mapv_inplace(|x| x.scale_by(1.0 / mm));
    Some(mm.ln())
}

fn trace<T: Scalar>(m: &Array2<T>) -> T {
    m.diag().iter().fold(T::zero(), |acc, &x| acc + x)
}

/// Physical slice of `tt` at `site`, promoted to a full D×D ring slice
/// when `tt` is open (first site: data in row 0; last: column 0). An
/// open chain contracted this way as a ring yields identical amplitudes.
fn ring_slice<T: Scalar>(tt: &TensorTrain<T>, site: usize, s: usize) -> Array2<T> {
    let n = tt.site_count();
    if tt.boundary() == Boundary::Periodic || (site != 0 && site != n - 1) {
        return tt.slice(site, s).to_owned();
    }
    let d = tt.bond_dim();
    let mut buf = Array2::zeros((d, d));
    let v = tt.slice(site, s);
    if site == 0 {
        for j in 0..d {
            buf[(0, j)] = v[(0, j)];
        }
    } else {
        for i in 0..d {
            buf[(i, 0)] = v[(i, 0)];
        }
    }
    buf
}

impl<T: Scalar> TensorTrain<T> {
    /// ψ̂(v): the chain product selected by the configuration. Open
    /// chains contract left-to-right; rings take the trace of the slice
    /// product.
    pub fn amplitude(&self, config: &SpinConfiguration) -> Result<LogScalar<T>, MpsError> {
        let n = self.site_count();
        if config.len() != n {
            return Err(MpsError::ConfigLengthMismatch {
                expected: n,
                got: config.len(),
            });
        }
        match self.boundary() {
            Boundary::Open => {
                let mut v: Array1<T> = Array1::from_elem(1, T::one());
                let mut ln_mag = 0.0;
                for k in 0..n {
                    v = v.dot(&self.slice(k, config.bit(k)));
                    let mm = v.iter().map(|x| x.modulus()).fold(0.0, f64::max);
                    if mm == 0.0 {
                        return Ok(LogScalar::zero());
                    }
                    v.mapv_inplace(|x| x.scale_by(1.0 / mm));
                    ln_mag += mm.ln();
                }
                Ok(LogScalar::from_value(v[0]).scaled(ln_mag))
            }
            Boundary::Periodic => {
                let mut a = self.slice(0, config.bit(0)).to_owned();
                let mut ln_mag = match rescale(&mut a) {
                    Some(f) => f,
                    None => return Ok(LogScalar::zero()),
                };
                for k in 1..n {
                    a = a.dot(&self.slice(k, config.bit(k)));
                    match rescale(&mut a) {
                        Some(f) => ln_mag += f,
                        None => return Ok(LogScalar::zero()),
                    }
                }
                Ok(LogScalar::from_value(trace(&a)).scaled(ln_mag))
            }
        }
    }

    /// Z = Σ_v |ψ̂(v)|², the Born-rule denominator, log-scaled.
    pub fn norm_squared(&self) -> LogScalar<f64> {
        match self.boundary() {
            Boundary::Open => {
                let mut w: Array2<T> = Array2::from_elem((1, 1), T::one());
                let mut ln_mag = 0.0;
                for k in 0..self.site_count() {
                    let dr = self.tensor(k).dim().2;
                    let mut next = Array2::zeros((dr, dr));
                    for s in 0..PHYS_DIM {
                        let m = self.slice(k, s);
                        let m_conj = m.mapv(|x| x.conj());
                        next = next + m.t().dot(&w).dot(&m_conj);
                    }
                    w = next;
                    match rescale(&mut w) {
                        Some(f) => ln_mag += f,
                        None => return LogScalar::zero(),
                    }
                }
                let z = w[(0, 0)].re();
                if z <= 0.0 {
                    LogScalar::zero()
                } else {
                    LogScalar::from_value(z).scaled(ln_mag)
                }
            }
            Boundary::Periodic => {
                let d2 = self.bond_dim() * self.bond_dim();
                let mut w = Array2::<T>::eye(d2);
                let mut ln_mag = 0.0;
                for k in 0..self.site_count() {
                    w = w.dot(&transfer_matrix(self, k));
                    match rescale(&mut w) {
                        Some(f) => ln_mag += f,
                        None => return LogScalar::zero(),
                    }
                }
                let z = trace(&w).re();
                if z <= 0.0 {
                    LogScalar::zero()
                } else {
                    LogScalar::from_value(z).scaled(ln_mag)
                }
            }
        }
    }

    /// All 2^N amplitudes by enumeration, unnormalized and in raw (not
    /// log-scaled) arithmetic.
    pub fn to_dense(&self) -> Result<Vec<T>, MpsError> {
        let n = self.site_count();
        if n > DENSE_EXPANSION_MAX_SITES {
            return Err(MpsError::TooLargeForDense {
                n,
                max: DENSE_EXPANSION_MAX_SITES,
            });
        }
        let mut out = vec![T::zero(); 1usize << n];
        match self.boundary() {
            Boundary::Open => {
                let start: Array1<T> = Array1::from_elem(1, T::one());
                self.dense_rec_open(0, 0, &start, &mut out);
            }
            Boundary::Periodic => {
                for s in 0..PHYS_DIM {
                    let a = self.slice(0, s).to_owned();
                    self.dense_rec_periodic(1, s, &a, &mut out);
                }
            }
        }
        Ok(out)
    }

    fn dense_rec_open(&self, site: usize, prefix: usize, v: &Array1<T>, out: &mut [T]) {
        if site == self.site_count() {
            out[prefix] = v[0];
            return;
        }
        for s in 0..PHYS_DIM {
            let next = v.dot(&self.slice(site, s));
            self.dense_rec_open(site + 1, (prefix << 1) | s, &next, out);
        }
    }

    fn dense_rec_periodic(&self, site: usize, prefix: usize, a: &Array2<T>, out: &mut [T]) {
        if site == self.site_count() {
            out[prefix] = trace(a);
            return;
        }
        for s in 0..PHYS_DIM {
            let next = a.dot(&self.slice(site, s));
            self.dense_rec_periodic(site + 1, (prefix << 1) | s, &next, out);
        }
    }

    /// ⟨self|other⟩ with conjugation applied to `self`. Boundary kinds
    /// may differ: open chains are promoted to zero-padded ring slices.
    pub fn inner_product(&self, other: &TensorTrain<T>) -> Result<LogScalar<T>, MpsError> {
        let n = self.site_count();
        if other.site_count() != n {
            return Err(MpsError::SiteCountMismatch {
                a: n,
                b: other.site_count(),
            });
        }
        if self.boundary() == Boundary::Open && other.boundary() == Boundary::Open {
            // zipper over (bra, ket) bond pairs
            let mut w: Array2<T> = Array2::from_elem((1, 1), T::one());
            let mut ln_mag = 0.0;
            for k in 0..n {
                let dra = self.tensor(k).dim().2;
                let drb = other.tensor(k).dim().2;
                let mut next = Array2::zeros((dra, drb));
                for s in 0..PHYS_DIM {
                    let a_conj = self.slice(k, s).mapv(|x| x.conj());
                    next = next + a_conj.t().dot(&w).dot(&other.slice(k, s));
                }
                w = next;
                match rescale(&mut w) {
                    Some(f) => ln_mag += f,
                    None => return Ok(LogScalar::zero()),
                }
            }
            Ok(LogScalar::from_value(w[(0, 0)]).scaled(ln_mag))
        } else {
            let da = self.bond_dim();
            let db = other.bond_dim();
            let mut w = Array2::<T>::eye(da * db);
            let mut ln_mag = 0.0;
            for k in 0..n {
                let mut f = Array2::<T>::zeros((da * db, da * db));
                for s in 0..PHYS_DIM {
                    let a = ring_slice(self, k, s);
                    let b = ring_slice(other, k, s);
                    accumulate_kron_conj_left(&mut f, &a.view(), &b.view());
                }
                w = w.dot(&f);
                match rescale(&mut w) {
                    Some(x) => ln_mag += x,
                    None => return Ok(LogScalar::zero()),
                }
            }
            Ok(LogScalar::from_value(trace(&w)).scaled(ln_mag))
        }
    }

    /// ⟨ψ̂|O|ψ̂⟩ / Z for a string of single-site Paulis: exact, by
    /// operator-inserted transfer contraction. O is Hermitian so the
    /// result is real.
    pub fn expectation_pauli_string(&self, ops: &[PauliOperator]) -> Result<f64, MpsError> {
        let n = self.site_count();
        let mut site_ops: Vec<Option<PauliKind>> = vec![None; n];
        for op in ops {
            if op.site == 0 || op.site > n {
                return Err(MpsError::SiteOutOfRange { site: op.site, n });
            }
            if site_ops[op.site - 1].is_some() {
                return Err(MpsError::DuplicateSite);
            }
            site_ops[op.site - 1] = Some(op.kind);
        }
        let z = self.norm_squared();
        if z.is_zero() {
            return Err(MpsError::ZeroNorm);
        }

        let num: LogScalar<Complex64> = match self.boundary() {
            Boundary::Open => {
                let mut w = Array2::<Complex64>::from_elem((1, 1), Complex64::new(1.0, 0.0));
                let mut ln_mag = 0.0;
                for k in 0..n {
                    let dr = self.tensor(k).dim().2;
                    let u = pauli_2x2(site_ops[k]);
                    let mut next = Array2::<Complex64>::zeros((dr, dr));
                    for s in 0..PHYS_DIM {
                        let m_ket = self.slice(k, s).mapv(Scalar::to_complex);
                        for sp in 0..PHYS_DIM {
                            let coeff = u[(sp, s)];
                            if coeff == Complex64::new(0.0, 0.0) {
                                continue;
                            }
                            let m_bra = self.slice(k, sp).mapv(|x| x.conj().to_complex());
                            next = next + m_ket.t().dot(&w).dot(&m_bra).mapv(|x| x * coeff);
                        }
                    }
                    w = next;
                    match rescale(&mut w) {
                        Some(f) => ln_mag += f,
                        None => return Ok(0.0),
                    }
                }
                LogScalar::from_value(w[(0, 0)]).scaled(ln_mag)
            }
            Boundary::Periodic => {
                let d2 = self.bond_dim() * self.bond_dim();
                let mut w = Array2::<Complex64>::eye(d2);
                let mut ln_mag = 0.0;
                for k in 0..n {
                    let g = operator_transfer_matrix(self, k, site_ops[k]);
                    w = w.dot(&g);
                    match rescale(&mut w) {
                        Some(f) => ln_mag += f,
                        None => return Ok(0.0),
                    }
                }
                LogScalar::from_value(trace(&w)).scaled(ln_mag)
            }
        };
        if num.is_zero() {
            return Ok(0.0);
        }
        Ok((num.phase * (num.ln_mag - z.ln_mag).exp()).re)
    }
}

impl TensorTrain<f64> {
    /// Σ_v ref(v)·ψ̂(v) against a dense vector, streamed by depth-first
    /// enumeration so no 2^N amplitude buffer is allocated. Works for
    /// any N the dense side can hold. The train is contracted at its
    /// natural scale; callers should renormalize wild trains first.
    pub fn overlap_with_dense(
        &self,
        reference: &crate::spin_model::DenseState,
    ) -> Result<LogScalar<f64>, MpsError> {
        let n = self.site_count();
        if reference.sites() != n {
            return Err(MpsError::SiteCountMismatch {
                a: n,
                b: reference.sites(),
            });
        }
        let amps = reference.amplitudes();
        let mut acc = 0.0f64;
        match self.boundary() {
            Boundary::Open => {
                let start: Array1<f64> = Array1::from_elem(1, 1.0);
                self.overlap_rec_open(0, 0, &start, amps, &mut acc);
            }
            Boundary::Periodic => {
                for s in 0..PHYS_DIM {
                    let a = self.slice(0, s).to_owned();
                    self.overlap_rec_periodic(1, s, &a, amps, &mut acc);
                }
            }
        }
        Ok(LogScalar::from_value(acc))
    }

    fn overlap_rec_open(
        &self,
        site: usize,
        prefix: usize,
        v: &Array1<f64>,
        amps: &[f64],
        acc: &mut f64,
    ) {
        if site == self.site_count() {
            *acc += amps[prefix] * v[0];
            return;
        }
        for s in 0..PHYS_DIM {
            let next = v.dot(&self.slice(site, s));
            self.overlap_rec_open(site + 1, (prefix << 1) | s, &next, amps, acc);
        }
    }

    fn overlap_rec_periodic(
        &self,
        site: usize,
        prefix: usize,
        a: &Array2<f64>,
        amps: &[f64],
        acc: &mut f64,
    ) {
        if site == self.site_count() {
            *acc += amps[prefix] * trace(a);
            return;
        }
        for s in 0..PHYS_DIM {
            let next = a.dot(&self.slice(site, s));
            self.overlap_rec_periodic(site + 1, (prefix << 1) | s, &next, amps, acc);
        }
    }
}

/// F_k = Σ_s conj(A_k[s]) ⊗ B_k[s] accumulated into `f`, index pairs
/// (bra, ket) flattened as `i_a·Db + i_b`.
fn accumulate_kron_conj_left<T: Scalar>(
    f: &mut Array2<T>,
    a: &ArrayView2<'_, T>,
    b: &ArrayView2<'_, T>,
) {
    let (da, dap) = a.dim();
    let (db, dbp) = b.dim();
    for ia in 0..da {
        for ib in 0..db {
            for ja in 0..dap {
                for jb in 0..dbp {
                    f[(ia * db + ib, ja * dbp + jb)] =
                        f[(ia * db + ib, ja * dbp + jb)] + a[(ia, ja)].conj() * b[(ib, jb)];
                }
            }
        }
    }
}

/// E_k = Σ_s M_k[s] ⊗ conj(M_k[s]) over (ket, bra) bond pairs.
pub(super) fn transfer_matrix<T: Scalar>(tt: &TensorTrain<T>, site: usize) -> Array2<T> {
    let (dl, _, dr) = tt.tensor(site).dim();
    let mut e = Array2::<T>::zeros((dl * dl, dr * dr));
    for s in 0..PHYS_DIM {
        let m = tt.slice(site, s);
        for a in 0..dl {
            for b in 0..dl {
                for c in 0..dr {
                    for d in 0..dr {
                        e[(a * dl + b, c * dr + d)] =
                            e[(a * dl + b, c * dr + d)] + m[(a, c)] * m[(b, d)].conj();
                    }
                }
            }
        }
    }
    e
}

/// G_k = Σ_{s,s'} U[s',s] · M_k[s] ⊗ conj(M_k[s']), the transfer matrix
/// with a single-site operator inserted.
fn operator_transfer_matrix<T: Scalar>(
    tt: &TensorTrain<T>,
    site: usize,
    op: Option<PauliKind>,
) -> Array2<Complex64> {
    let (dl, _, dr) = tt.tensor(site).dim();
    let u = pauli_2x2(op);
    let mut g = Array2::<Complex64>::zeros((dl * dl, dr * dr));
    for s in 0..PHYS_DIM {
        let m_s = tt.slice(site, s);
        for sp in 0..PHYS_DIM {
            let coeff = u[(sp, s)];
            if coeff == Complex64::new(0.0, 0.0) {
                continue;
            }
            let m_sp = tt.slice(site, sp);
            for a in 0..dl {
                for b in 0..dl {
                    for c in 0..dr {
                        for d in 0..dr {
                            let ket = m_s[(a, c)].to_complex();
                            let bra = m_sp[(b, d)].conj().to_complex();
                            g[(a * dl + b, c * dr + d)] += coeff * ket * bra;
                        }
                    }
                }
            }
        }
    }
    g
}

pub(crate) fn pauli_2x2(op: Option<PauliKind>) -> Array2<Complex64> {
    let z = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    match op {
        None | Some(PauliKind::Identity) => ndarray::array![[one, z], [z, one]],
        Some(PauliKind::X) => ndarray::array![[z, one], [one, z]],
        Some(PauliKind::Y) => ndarray::array![[z, -i], [i, z]],
        Some(PauliKind::Z) => ndarray::array![[one, z], [z, -one]],
    }
}
