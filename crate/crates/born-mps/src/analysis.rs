//! Evaluation quantities: fidelity, Shannon entropy, total-variation
//! distances, the pair-averaged connected correlation function G(r) and
//! its exponential fit.

use std::collections::BTreeSet;

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::mps::{MpsError, TensorTrain};
use crate::sampler::{Dataset, EmpiricalDistribution, SamplerError};
use crate::spin_model::{Boundary, DenseState, PauliKind, PauliOperator};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("site counts differ: {a} vs {b}")]
    SiteMismatch { a: usize, b: usize },
    #[error("separation {r} out of range (max {max})")]
    SeparationOutOfRange { r: usize, max: usize },
    #[error("only {usable} usable points above the fit floor; need at least 3")]
    TooFewPoints { usable: usize },
    #[error("reference and model have zero overlap normalization")]
    ZeroNorm,
    #[error(transparent)]
    Mps(#[from] MpsError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

/// Reference side of a fidelity computation.
pub enum StateRef<'a> {
    Dense(&'a DenseState),
    Train(&'a TensorTrain<f64>),
}

/// F = |⟨ref|model⟩|² / (‖ref‖²·‖model‖²).
pub fn fidelity(model: &TensorTrain<f64>, reference: StateRef<'_>) -> Result<f64, AnalysisError> {
    match reference {
        StateRef::Dense(state) => fidelity_to_dense(model, state),
        StateRef::Train(other) => fidelity_between_trains(model, other),
    }
}

/// Fidelity against a dense reference via the streamed overlap; exact
/// for any N the dense side can hold.
pub fn fidelity_to_dense(
    model: &TensorTrain<f64>,
    reference: &DenseState,
) -> Result<f64, AnalysisError> {
    let z = model.norm_squared();
    if z.is_zero() {
        return Err(AnalysisError::ZeroNorm);
    }
    // contract at unit norm so the 2^N partial products stay bounded
    let mut normalized = model.clone();
    normalized.rescale_all(-z.ln_mag / 2.0);
    let overlap = normalized.overlap_with_dense(reference)?;
    let ref_norm = reference.norm_sqr();
    if ref_norm == 0.0 {
        return Err(AnalysisError::ZeroNorm);
    }
    let z_after = normalized.norm_squared();
    Ok((2.0 * overlap.ln_mag - z_after.ln_mag - ref_norm.ln()).exp())
}

/// Fidelity between two trains by doubled-chain contraction; boundary
/// kinds may differ.
pub fn fidelity_between_trains(
    a: &TensorTrain<f64>,
    b: &TensorTrain<f64>,
) -> Result<f64, AnalysisError> {
    let za = a.norm_squared();
    let zb = b.norm_squared();
    if za.is_zero() || zb.is_zero() {
        return Err(AnalysisError::ZeroNorm);
    }
    let ip = a.inner_product(b)?;
    if ip.is_zero() {
        return Ok(0.0);
    }
    Ok((2.0 * ip.ln_mag - za.ln_mag - zb.ln_mag).exp())
}

/// Fidelity between two dense states.
pub fn fidelity_dense_pair(a: &DenseState, b: &DenseState) -> Result<f64, AnalysisError> {
    if a.sites() != b.sites() {
        return Err(AnalysisError::SiteMismatch {
            a: a.sites(),
            b: b.sites(),
        });
    }
    let na = a.norm_sqr();
    let nb = b.norm_sqr();
    if na == 0.0 || nb == 0.0 {
        return Err(AnalysisError::ZeroNorm);
    }
    let dot = a.dot(b);
    Ok(dot * dot / (na * nb))
}

/// Shannon entropy of the empirical training distribution, in nats:
/// the attainable floor of the NLL.
pub fn shannon_entropy(data: &Dataset) -> Result<f64, AnalysisError> {
    if data.is_empty() {
        return Err(AnalysisError::EmptyDataset);
    }
    let emp = crate::sampler::empirical_distribution(data)?;
    Ok(entropy_of(&emp))
}

/// Entropy of any distribution over configurations, in nats.
pub fn entropy_of(dist: &EmpiricalDistribution) -> f64 {
    -dist
        .iter()
        .filter(|(_, p)| *p > 0.0)
        .map(|(_, p)| p * p.ln())
        .sum::<f64>()
}

/// (1/2) Σ_v |p(v) − q(v)| over the union of supports.
pub fn tv_distance(
    p: &EmpiricalDistribution,
    q: &EmpiricalDistribution,
) -> Result<f64, AnalysisError> {
    if p.sites() != q.sites() {
        return Err(AnalysisError::SiteMismatch {
            a: p.sites(),
            b: q.sites(),
        });
    }
    let support: BTreeSet<usize> = p
        .iter()
        .map(|(k, _)| k)
        .chain(q.iter().map(|(k, _)| k))
        .collect();
    Ok(support
        .into_iter()
        .map(|k| (p.frequency(k) - q.frequency(k)).abs())
        .sum::<f64>()
        / 2.0)
}

/// One separation of the correlation report.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CorrelationPoint {
    pub r: usize,
    pub g: f64,
    /// Number of distinct site pairs averaged: N−r open, N periodic.
    pub pairs: usize,
}

/// Result of the exponential fit G(r) ≈ A·e^(−r/ξ).
#[derive(Clone, Debug, Serialize)]
pub struct CorrelationFit {
    pub amplitude: f64,
    /// Fitted correlation length; `None` is the "no decay measurable"
    /// sentinel for a nonnegative slope.
    pub xi: Option<f64>,
    /// RMS residual of the fit in ln|G| space.
    pub residual: f64,
    /// Inclusive window of separations used.
    pub window: (usize, usize),
    pub sign_changes: usize,
    /// More than one sign change inside the window.
    pub oscillatory: bool,
}

/// G(r) values with pair counts and (optionally) the fitted decay.
#[derive(Clone, Debug, Serialize)]
pub struct CorrelationReport {
    pub boundary: Boundary,
    pub points: Vec<CorrelationPoint>,
    pub fit: Option<CorrelationFit>,
}

/// What to measure G(r) on.
pub enum CorrelationSource<'a> {
    Train(&'a TensorTrain<f64>),
    Dense(&'a DenseState),
    Data(&'a Dataset),
}

/// Largest admissible separation for a boundary kind.
pub fn max_separation(sites: usize, boundary: Boundary) -> usize {
    match boundary {
        Boundary::Open => sites - 1,
        Boundary::Periodic => sites / 2,
    }
}

/// Pair-averaged connected correlator
/// G(r) = Σ_i (⟨σᶻᵢσᶻᵢ₊ᵣ⟩ − ⟨σᶻᵢ⟩⟨σᶻᵢ₊ᵣ⟩) / N_p for r = 1…r_max.
/// State and train sources are exact; datasets use sample means. On a
/// ring, i+r wraps and every site contributes (N_p = N).
pub fn correlation_function(
    source: CorrelationSource<'_>,
    boundary: Boundary,
    r_max: usize,
) -> Result<CorrelationReport, AnalysisError> {
    let sites = match &source {
        CorrelationSource::Train(tt) => tt.site_count(),
        CorrelationSource::Dense(s) => s.sites(),
        CorrelationSource::Data(d) => d.sites(),
    };
    let max = max_separation(sites, boundary);
    if r_max == 0 || r_max > max {
        return Err(AnalysisError::SeparationOutOfRange { r: r_max, max });
    }

    // ⟨σᶻᵢ⟩ and ⟨σᶻᵢσᶻⱼ⟩ for all needed pairs
    let (singles, pair_fn): (Vec<f64>, Box<dyn Fn(usize, usize) -> f64>) = match source {
        CorrelationSource::Dense(state) => {
            let (singles, pairs) = dense_z_moments(state);
            (singles, Box::new(move |i, j| pairs[i][j]))
        }
        CorrelationSource::Data(data) => {
            if data.is_empty() {
                return Err(AnalysisError::EmptyDataset);
            }
            let (singles, pairs) = dataset_z_moments(data);
            (singles, Box::new(move |i, j| pairs[i][j]))
        }
        CorrelationSource::Train(tt) => {
            let n = tt.site_count();
            let mut singles = Vec::with_capacity(n);
            for i in 0..n {
                singles
                    .push(tt.expectation_pauli_string(&[PauliOperator::new(PauliKind::Z, i + 1)])?);
            }
            let mut pairs = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in (i + 1)..n {
                    let v = tt.expectation_pauli_string(&[
                        PauliOperator::new(PauliKind::Z, i + 1),
                        PauliOperator::new(PauliKind::Z, j + 1),
                    ])?;
                    pairs[i][j] = v;
                    pairs[j][i] = v;
                }
            }
            (singles, Box::new(move |i, j| pairs[i][j]))
        }
    };

    let mut points = Vec::with_capacity(r_max);
    for r in 1..=r_max {
        let (indices, pairs): (Vec<(usize, usize)>, usize) = match boundary {
            Boundary::Open => ((0..sites - r).map(|i| (i, i + r)).collect(), sites - r),
            Boundary::Periodic => ((0..sites).map(|i| (i, (i + r) % sites)).collect(), sites),
        };
        let g: f64 = indices
            .iter()
            .map(|&(i, j)| pair_fn(i, j) - singles[i] * singles[j])
            .sum::<f64>()
            / pairs as f64;
        points.push(CorrelationPoint { r, g, pairs });
    }
    Ok(CorrelationReport {
        boundary,
        points,
        fit: None,
    })
}

fn dense_z_moments(state: &DenseState) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = state.sites();
    let norm = state.norm_sqr();
    let mut singles = vec![0.0; n];
    let mut pairs = vec![vec![0.0; n]; n];
    for (v, &a) in state.amplitudes().iter().enumerate() {
        let p = a * a / norm;
        if p == 0.0 {
            continue;
        }
        let spins: Vec<f64> = (0..n)
            .map(|k| 1.0 - 2.0 * ((v >> (n - 1 - k)) & 1) as f64)
            .collect();
        for i in 0..n {
            singles[i] += p * spins[i];
            for j in (i + 1)..n {
                pairs[i][j] += p * spins[i] * spins[j];
            }
        }
    }
    for i in 0..n {
        pairs[i][i] = 1.0;
        for j in 0..i {
            pairs[i][j] = pairs[j][i];
        }
    }
    (singles, pairs)
}

fn dataset_z_moments(data: &Dataset) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = data.sites();
    let count = data.len() as f64;
    let mut singles = vec![0.0; n];
    let mut pairs = vec![vec![0.0; n]; n];
    for c in data.configurations() {
        let spins: Vec<f64> = (0..n).map(|k| c.spin(k)).collect();
        for i in 0..n {
            singles[i] += spins[i];
            for j in (i + 1)..n {
                pairs[i][j] += spins[i] * spins[j];
            }
        }
    }
    for s in &mut singles {
        *s /= count;
    }
    for i in 0..n {
        pairs[i][i] = 1.0;
        for j in (i + 1)..n {
            pairs[i][j] /= count;
        }
        for j in 0..i {
            pairs[i][j] = pairs[j][i];
        }
    }
    (singles, pairs)
}

/// Magnitudes below this floor end the fit window.
pub const FIT_FLOOR: f64 = 1e-6;

/// Ordinary least squares of ln|G(r)| on r over the window ending just
/// before |G| first drops below the floor. Returns ξ = −1/slope, with
/// `xi = None` as the "no decay measurable" sentinel when the slope is
/// nonnegative. Reports `oscillatory = true` when G changes sign more
/// than once inside the window.
pub fn fit_correlation_length(report: &CorrelationReport) -> Result<CorrelationFit, AnalysisError> {
    let mut window = Vec::new();
    for p in &report.points {
        if p.g.abs() < FIT_FLOOR {
            break;
        }
        window.push(p);
    }
    if window.len() < 3 {
        return Err(AnalysisError::TooFewPoints {
            usable: window.len(),
        });
    }
    let sign_changes = window
        .windows(2)
        .filter(|w| w[0].g.signum() != w[1].g.signum())
        .count();

    let xs: Vec<f64> = window.iter().map(|p| p.r as f64).collect();
    let ys: Vec<f64> = window.iter().map(|p| p.g.abs().ln()).collect();
    let m = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / m;
    let mean_y = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x).powi(2)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (intercept + slope * x)).powi(2))
        .sum::<f64>()
        / m)
        .sqrt();
    Ok(CorrelationFit {
        amplitude: intercept.exp(),
        xi: if slope < 0.0 {
            Some(-1.0 / slope)
        } else {
            None
        },
        residual,
        window: (window[0].r, window[window.len() - 1].r),
        sign_changes,
        oscillatory: sign_changes > 1,
    })
}

/// p-value of the chi-square goodness-of-fit statistic of observed
/// counts against expected probabilities. Cells with expected count
/// below 5 are pooled into one.
pub fn chi_square_pvalue(observed: &[u64], expected_probs: &[f64]) -> f64 {
    assert_eq!(observed.len(), expected_probs.len());
    let n: u64 = observed.iter().sum();
    let n = n as f64;
    let mut stat = 0.0;
    let mut bins = 0usize;
    let mut pooled_obs = 0.0;
    let mut pooled_exp = 0.0;
    for (&o, &p) in observed.iter().zip(expected_probs) {
        let e = p * n;
        if e < 5.0 {
            pooled_obs += o as f64;
            pooled_exp += e;
        } else {
            stat += (o as f64 - e).powi(2) / e;
            bins += 1;
        }
    }
    if pooled_exp > 0.0 {
        stat += (pooled_obs - pooled_exp).powi(2) / pooled_exp;
        bins += 1;
    }
    if bins < 2 {
        return 1.0;
    }
    let dof = (bins - 1) as f64;
    let dist = ChiSquared::new(dof).expect("dof >= 1");
    1.0 - dist.cdf(stat)
}
