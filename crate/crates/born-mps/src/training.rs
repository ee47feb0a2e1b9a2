//! NLL minimization of a tensor-train Born machine with analytic
//! environment-based gradients and Adam.
//!
//! The loss on a batch B is
//!
//! ```text
//! L = -(1/|B|) Σ_{v∈B} ln P̂(v),   P̂(v) = ψ̂(v)² / Z
//!   =  ln Z - (2/|B|) Σ_v ln |ψ̂(v)|
//! ```
//!
//! and its gradient splits into a normalization term, contracted from
//! the doubled chain with a hole at each tensor, and a data term from
//! per-sample single-chain environments. Both are exact; a
//! finite-difference check per coordinate is part of the test suite.
//!
//! The model trains unnormalized, exactly as the loss is written. Every
//! 100 steps all tensors are rescaled so ln Z = 0. Born probabilities
//! are scale-free, so this cannot change the loss (asserted by a
//! property test) and exists purely for numerical conditioning.

use ndarray::{Array1, Array2, Array3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::analysis;
use crate::mps::{EvaluationCache, MpsError, SpinConfiguration, TensorTrain, PHYS_DIM};
use crate::sampler::Dataset;
use crate::spin_model::{Boundary, DenseState};

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("batch is empty")]
    EmptyBatch,
    #[error("every batch configuration has zero amplitude")]
    AllZeroAmplitudes,
    #[error("amplitude is exactly zero for configuration {configuration}")]
    ZeroAmplitude { configuration: String },
    #[error("model has {model} sites but data has {data}")]
    SiteCountMismatch { model: usize, data: usize },
    #[error("gradient shape does not match parameters at site {site}")]
    ShapeMismatch { site: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(transparent)]
    Mps(#[from] MpsError),
    #[error(transparent)]
    Analysis(#[from] analysis::AnalysisError),
}

/// Hyperparameters of a training run.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub shuffle_seed: u64,
    /// Born probabilities are floored here before the log; breaches are
    /// counted in the loss diagnostics rather than silently clipped.
    pub probability_floor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 200,
            epochs: 20,
            learning_rate: 0.005,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            shuffle_seed: 0,
            probability_floor: 1e-30,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainingError> {
        if self.batch_size < 1 {
            return Err(TrainingError::InvalidConfig(
                "batch_size must be ≥ 1".into(),
            ));
        }
        if self.epochs < 1 {
            return Err(TrainingError::InvalidConfig("epochs must be ≥ 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(TrainingError::InvalidConfig(
                "learning_rate must be positive".into(),
            ));
        }
        for (name, beta) in [("beta1", self.adam_beta1), ("beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(TrainingError::InvalidConfig(format!(
                    "adam_{name} must lie in [0, 1)"
                )));
            }
        }
        Ok(())
    }
}

/// Loss of one batch together with its diagnostics.
#[derive(Clone, Copy, Debug)]
pub struct LossValue {
    /// Negative log-likelihood in nats. Bounded below by the empirical
    /// entropy of the full dataset, not by zero.
    pub nll: f64,
    /// ln Z used for the Born probabilities.
    pub log_norm: f64,
    pub batch_id: u64,
    /// Batch members whose probability hit the floor.
    pub floored: usize,
}

/// Per-tensor gradient, shapes mirroring the train.
#[derive(Clone, Debug)]
pub struct Gradient {
    tensors: Vec<Array3<f64>>,
}

impl Gradient {
    pub fn zeros_like(tt: &TensorTrain<f64>) -> Self {
        Self {
            tensors: tt
                .tensors()
                .iter()
                .map(|t| Array3::zeros(t.dim()))
                .collect(),
        }
    }

    pub fn tensors(&self) -> &[Array3<f64>] {
        &self.tensors
    }

    fn add_assign(&mut self, other: &Gradient) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            *a += b;
        }
    }
}

/// Adam accumulators, one pair per model parameter.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    first_moment: Vec<Array3<f64>>,
    second_moment: Vec<Array3<f64>>,
    step: u64,
}

impl OptimizerState {
    pub fn new(tt: &TensorTrain<f64>) -> Self {
        let zeros: Vec<Array3<f64>> = tt
            .tensors()
            .iter()
            .map(|t| Array3::zeros(t.dim()))
            .collect();
        Self {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update; increments the step counter.
pub fn adam_step(
    params: &mut TensorTrain<f64>,
    grads: &Gradient,
    state: &mut OptimizerState,
    config: &TrainConfig,
) -> Result<(), TrainingError> {
    if grads.tensors.len() != params.tensors().len() {
        return Err(TrainingError::ShapeMismatch { site: 0 });
    }
    for (k, (g, t)) in grads.tensors.iter().zip(params.tensors()).enumerate() {
        if g.dim() != t.dim() {
            return Err(TrainingError::ShapeMismatch { site: k + 1 });
        }
    }
    state.step += 1;
    let t = state.step;
    let b1 = config.adam_beta1;
    let b2 = config.adam_beta2;
    let bc1 = 1.0 - b1.powi(t as i32);
    let bc2 = 1.0 - b2.powi(t as i32);
    let tensors = params.tensors_mut();
    for k in 0..tensors.len() {
        let m = &mut state.first_moment[k];
        let v = &mut state.second_moment[k];
        let g = &grads.tensors[k];
        ndarray::Zip::from(&mut tensors[k])
            .and(m)
            .and(v)
            .and(g)
            .for_each(|theta, m, v, &g| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *theta -= config.learning_rate * m_hat / (v_hat.sqrt() + config.adam_epsilon);
            });
    }
    Ok(())
}

/// Batch NLL in log space, with probabilities floored at the configured
/// floor. Errors only when every batch member has amplitude exactly
/// zero.
pub fn nll_loss(
    tt: &TensorTrain<f64>,
    batch: &[SpinConfiguration],
    config: &TrainConfig,
    batch_id: u64,
) -> Result<LossValue, TrainingError> {
    if batch.is_empty() {
        return Err(TrainingError::EmptyBatch);
    }
    let z = tt.norm_squared();
    if z.is_zero() {
        return Err(TrainingError::AllZeroAmplitudes);
    }
    let ln_floor = config.probability_floor.ln();
    let mut sum = 0.0;
    let mut floored = 0usize;
    let mut nonzero = false;
    for (cfg, count) in dedup(batch) {
        let amp = tt.amplitude(&cfg)?;
        let logp = if amp.is_zero() {
            f64::NEG_INFINITY
        } else {
            nonzero = true;
            2.0 * amp.ln_mag - z.ln_mag
        };
        let logp = if logp < ln_floor {
            floored += count;
            ln_floor
        } else {
            logp
        };
        sum += count as f64 * logp;
    }
    if !nonzero {
        return Err(TrainingError::AllZeroAmplitudes);
    }
    Ok(LossValue {
        nll: -sum / batch.len() as f64,
        log_norm: z.ln_mag,
        batch_id,
        floored,
    })
}

/// ∂L/∂θ for every tensor coordinate. Errors when any batch member has
/// amplitude exactly zero (a probability-floor breach the analytic data
/// term cannot represent).
pub fn nll_gradient(
    tt: &TensorTrain<f64>,
    batch: &[SpinConfiguration],
) -> Result<Gradient, TrainingError> {
    Ok(loss_and_gradient(tt, batch, &TrainConfig::default(), 0)?.1)
}

/// Unique batch configurations with multiplicities, in index order (a
/// deterministic reduction order for the data term).
fn dedup(batch: &[SpinConfiguration]) -> Vec<(SpinConfiguration, usize)> {
    let mut counts: std::collections::BTreeMap<usize, usize> = std::collections::BTreeMap::new();
    for c in batch {
        *counts.entry(c.to_index()).or_insert(0) += 1;
    }
    let sites = batch[0].len();
    counts
        .into_iter()
        .map(|(idx, count)| (SpinConfiguration::from_index(idx, sites), count))
        .collect()
}

/// Loss and gradient of one batch, sharing the environment sweeps.
pub fn loss_and_gradient(
    tt: &TensorTrain<f64>,
    batch: &[SpinConfiguration],
    config: &TrainConfig,
    batch_id: u64,
) -> Result<(LossValue, Gradient), TrainingError> {
    if batch.is_empty() {
        return Err(TrainingError::EmptyBatch);
    }
    for c in batch {
        if c.len() != tt.site_count() {
            return Err(TrainingError::Mps(MpsError::ConfigLengthMismatch {
                expected: tt.site_count(),
                got: c.len(),
            }));
        }
    }
    let cache = EvaluationCache::new(tt).map_err(TrainingError::Mps)?;
    let ln_z = cache.log_norm_sqr();

    // normalization term: ∂lnZ/∂θ from doubled-chain hole contractions
    let mut grad = match tt.boundary() {
        Boundary::Open => norm_gradient_open(tt, &cache),
        Boundary::Periodic => norm_gradient_periodic(tt, &cache),
    };

    // data term, chunked for a thread-count-independent reduction order
    let unique = dedup(batch);
    let chunk_results: Result<Vec<(Gradient, f64, usize)>, TrainingError> = unique
        .par_chunks(32)
        .map(|chunk| {
            let mut partial = Gradient::zeros_like(tt);
            let mut log_amp_sum = 0.0;
            let mut floored = 0usize;
            for (cfg, count) in chunk {
                let ln_amp = match tt.boundary() {
                    Boundary::Open => data_term_open(tt, cfg, *count, &mut partial),
                    Boundary::Periodic => data_term_periodic(tt, cfg, *count, &mut partial),
                };
                let ln_amp = ln_amp.ok_or_else(|| TrainingError::ZeroAmplitude {
                    configuration: cfg.to_string(),
                })?;
                let logp = 2.0 * ln_amp - ln_z;
                let ln_floor = config.probability_floor.ln();
                if logp < ln_floor {
                    floored += count;
                    log_amp_sum += *count as f64 * ln_floor;
                } else {
                    log_amp_sum += *count as f64 * logp;
                }
            }
            Ok((partial, log_amp_sum, floored))
        })
        .collect();
    let chunk_results = chunk_results?;

    let inv_batch = 1.0 / batch.len() as f64;
    let mut logp_total = 0.0;
    let mut floored = 0usize;
    let mut data_grad = Gradient::zeros_like(tt);
    for (partial, lp, fl) in &chunk_results {
        data_grad.add_assign(partial);
        logp_total += lp;
        floored += fl;
    }
    for (g, d) in grad.tensors.iter_mut().zip(&data_grad.tensors) {
        ndarray::Zip::from(g).and(d).for_each(|g, &d| {
            *g -= 2.0 * inv_batch * d;
        });
    }

    let loss = LossValue {
        nll: -logp_total * inv_batch,
        log_norm: ln_z,
        batch_id,
        floored,
    };
    Ok((loss, grad))
}

/// ∂lnZ/∂M_k[s] = 2·(L_{k-1}·M_k[s]·R_{k+1})/Z for an open chain, with
/// L/R the left/right environments of the doubled chain.
fn norm_gradient_open(tt: &TensorTrain<f64>, cache: &EvaluationCache<f64>) -> Gradient {
    let n = tt.site_count();
    let ln_z = cache.log_norm_sqr();
    let mut grad = Gradient::zeros_like(tt);

    // left environments, built forward with per-site rescaling
    let mut left = Array2::<f64>::from_elem((1, 1), 1.0);
    let mut ln_left = 0.0;
    for k in 0..n {
        let (right, ln_right) = cache.env(k + 1);
        let factor = (ln_left + ln_right - ln_z).exp();
        for s in 0..PHYS_DIM {
            let m = tt.slice(k, s);
            let block = left.dot(&m).dot(right);
            let gt = &mut grad.tensors[k];
            for l in 0..block.nrows() {
                for r in 0..block.ncols() {
                    gt[(l, s, r)] = 2.0 * block[(l, r)] * factor;
                }
            }
        }
        // advance the left environment through site k
        let dr = tt.tensor(k).dim().2;
        let mut next = Array2::<f64>::zeros((dr, dr));
        for s in 0..PHYS_DIM {
            let m = tt.slice(k, s);
            next = next + m.t().dot(&left).dot(&m);
        }
        left = next;
        let mm = left.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        if mm > 0.0 {
            left.mapv_inplace(|x| x / mm);
            ln_left += mm.ln();
        }
    }
    grad
}

/// Ring version: ∂lnZ/∂M_k[s][α,β] = (2/Z)·Σ_{b,d} M_k[s][b,d]·
/// S[(βd),(αb)] with S = suffix·prefix of transfer matrices.
fn norm_gradient_periodic(tt: &TensorTrain<f64>, cache: &EvaluationCache<f64>) -> Gradient {
    let n = tt.site_count();
    let d = tt.bond_dim();
    let ln_z = cache.log_norm_sqr();
    let mut grad = Gradient::zeros_like(tt);

    let mut prefix = Array2::<f64>::eye(d * d);
    let mut ln_prefix = 0.0;
    for k in 0..n {
        let (suffix, ln_suffix) = cache.env(k + 1);
        // ring environment around site k
        let ring = suffix.dot(&prefix);
        let factor = (ln_prefix + ln_suffix - ln_z).exp();
        for s in 0..PHYS_DIM {
            let m = tt.slice(k, s);
            let gt = &mut grad.tensors[k];
            for alpha in 0..d {
                for beta in 0..d {
                    let mut acc = 0.0;
                    for b in 0..d {
                        for e in 0..d {
                            acc += m[(b, e)] * ring[(beta * d + e, alpha * d + b)];
                        }
                    }
                    gt[(alpha, s, beta)] = 2.0 * acc * factor;
                }
            }
        }
        // advance the prefix product through site k
        let e_k = transfer_matrix_real(tt, k);
        prefix = prefix.dot(&e_k);
        let mm = prefix.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        if mm > 0.0 {
            prefix.mapv_inplace(|x| x / mm);
            ln_prefix += mm.ln();
        }
    }
    grad
}

fn transfer_matrix_real(tt: &TensorTrain<f64>, site: usize) -> Array2<f64> {
    let d = tt.bond_dim();
    let mut e = Array2::<f64>::zeros((d * d, d * d));
    for s in 0..PHYS_DIM {
        let m = tt.slice(site, s);
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    for f in 0..d {
                        e[(a * d + b, c * d + f)] += m[(a, c)] * m[(b, f)];
                    }
                }
            }
        }
    }
    e
}

/// Accumulate count·(∂ψ/∂θ)/ψ along one configuration of an open chain.
/// Returns ln|ψ(v)|, or `None` when ψ(v) = 0.
fn data_term_open(
    tt: &TensorTrain<f64>,
    cfg: &SpinConfiguration,
    count: usize,
    grad: &mut Gradient,
) -> Option<f64> {
    let n = tt.site_count();
    // left partials l_k (product over sites < k) and right partials r_k
    let mut lefts: Vec<Array1<f64>> = Vec::with_capacity(n + 1);
    let mut ln_lefts = vec![0.0f64; n + 1];
    lefts.push(Array1::from_elem(1, 1.0));
    for k in 0..n {
        let mut next = lefts[k].dot(&tt.slice(k, cfg.bit(k)));
        let mm = next.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        if mm == 0.0 {
            return None;
        }
        next.mapv_inplace(|x| x / mm);
        ln_lefts[k + 1] = ln_lefts[k] + mm.ln();
        lefts.push(next);
    }
    let psi_hat = lefts[n][0];
    if psi_hat == 0.0 {
        return None;
    }
    let ln_psi = ln_lefts[n] + psi_hat.abs().ln();

    let mut rights: Vec<Array1<f64>> = vec![Array1::from_elem(1, 1.0); n + 1];
    let mut ln_rights = vec![0.0f64; n + 1];
    for k in (0..n).rev() {
        let mut next = tt.slice(k, cfg.bit(k)).dot(&rights[k + 1]);
        let mm = next.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        if mm == 0.0 {
            return None;
        }
        next.mapv_inplace(|x| x / mm);
        ln_rights[k] = ln_rights[k + 1] + mm.ln();
        rights[k] = next;
    }

    let sign = psi_hat.signum();
    for k in 0..n {
        let s = cfg.bit(k);
        let factor = count as f64 * sign * (ln_lefts[k] + ln_rights[k + 1] - ln_psi).exp();
        let l = &lefts[k];
        let r = &rights[k + 1];
        let gt = &mut grad.tensors[k];
        for a in 0..l.len() {
            for b in 0..r.len() {
                gt[(a, s, b)] += factor * l[a] * r[b];
            }
        }
    }
    Some(ln_psi)
}

/// Ring version of the data term: ∂ψ/∂M_k[v_k] = (B_{k+1}·A_{k-1})ᵀ.
fn data_term_periodic(
    tt: &TensorTrain<f64>,
    cfg: &SpinConfiguration,
    count: usize,
    grad: &mut Gradient,
) -> Option<f64> {
    let n = tt.site_count();
    let d = tt.bond_dim();
    let mut prefixes: Vec<Array2<f64>> = Vec::with_capacity(n + 1);
    let mut ln_prefixes = vec![0.0f64; n + 1];
    prefixes.push(Array2::eye(d));
    for k in 0..n {
        let mut next = prefixes[k].dot(&tt.slice(k, cfg.bit(k)));
        let mm = next.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        if mm == 0.0 {
            return None;
        }
        next.mapv_inplace(|x| x / mm);
        ln_prefixes[k + 1] = ln_prefixes[k] + mm.ln();
        prefixes.push(next);
    }
    let trace_hat: f64 = prefixes[n].diag().sum();
    if trace_hat == 0.0 {
        return None;
    }
    let ln_psi = ln_prefixes[n] + trace_hat.abs().ln();
    let sign = trace_hat.signum();

    let mut suffixes: Vec<Array2<f64>> = vec![Array2::eye(d); n + 1];
    let mut ln_suffixes = vec![0.0f64; n + 1];
    for k in (0..n).rev() {
        let mut next = tt.slice(k, cfg.bit(k)).dot(&suffixes[k + 1]);
        let mm = next.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        if mm == 0.0 {
            return None;
        }
        next.mapv_inplace(|x| x / mm);
        ln_suffixes[k] = ln_suffixes[k + 1] + mm.ln();
        suffixes[k] = next;
    }

    for k in 0..n {
        let s = cfg.bit(k);
        let factor = count as f64 * sign * (ln_suffixes[k + 1] + ln_prefixes[k] - ln_psi).exp();
        let env = suffixes[k + 1].dot(&prefixes[k]);
        let gt = &mut grad.tensors[k];
        for alpha in 0..d {
            for beta in 0..d {
                gt[(alpha, s, beta)] += factor * env[(beta, alpha)];
            }
        }
    }
    Some(ln_psi)
}

/// One recorded batch step.
#[derive(Clone, Copy, Debug)]
pub struct StepLoss {
    pub step: u64,
    pub epoch: usize,
    pub nll: f64,
}

/// Everything a training run records.
#[derive(Clone, Debug, Default)]
pub struct TrainHistory {
    pub step_losses: Vec<StepLoss>,
    /// Full-dataset NLL at each epoch boundary.
    pub epoch_dataset_nll: Vec<f64>,
    /// Fidelity against the reference, once per epoch (empty without a
    /// reference).
    pub epoch_fidelity: Vec<f64>,
    pub epoch_seconds: Vec<f64>,
}

/// Steps between conditioning renormalizations (ln Z reset to 0).
const RENORM_INTERVAL: u64 = 100;

/// Run the full protocol: epochs × batches of Adam on shuffled data,
/// recording per-step batch loss, per-epoch full-dataset loss and
/// (optionally) per-epoch fidelity against a reference state.
pub fn train(
    tt: &TensorTrain<f64>,
    data: &Dataset,
    config: &TrainConfig,
    reference: Option<&DenseState>,
) -> Result<(TensorTrain<f64>, TrainHistory), TrainingError> {
    config.validate()?;
    if data.is_empty() {
        return Err(TrainingError::EmptyDataset);
    }
    if data.sites() != tt.site_count() {
        return Err(TrainingError::SiteCountMismatch {
            model: tt.site_count(),
            data: data.sites(),
        });
    }

    let mut model = tt.clone();
    let mut opt = OptimizerState::new(&model);
    let mut history = TrainHistory::default();
    let all: Vec<SpinConfiguration> = data.configurations().to_vec();
    let mut step: u64 = 0;

    for epoch in 0..config.epochs {
        let t0 = std::time::Instant::now();
        let mut order: Vec<usize> = (0..all.len()).collect();
        let mut rng = ChaCha12Rng::seed_from_u64(config.shuffle_seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);

        for batch_indices in order.chunks(config.batch_size) {
            let batch: Vec<SpinConfiguration> =
                batch_indices.iter().map(|&i| all[i].clone()).collect();
            let (loss, grad) = loss_and_gradient(&model, &batch, config, step)?;
            history.step_losses.push(StepLoss {
                step,
                epoch,
                nll: loss.nll,
            });
            adam_step(&mut model, &grad, &mut opt, config)?;
            step += 1;
            if step % RENORM_INTERVAL == 0 {
                let z = model.norm_squared();
                if !z.is_zero() && z.ln_mag.is_finite() {
                    model.rescale_all(-z.ln_mag / 2.0);
                }
            }
        }

        let full = nll_loss(&model, &all, config, u64::MAX)?;
        history.epoch_dataset_nll.push(full.nll);
        if let Some(state) = reference {
            history
                .epoch_fidelity
                .push(analysis::fidelity_to_dense(&model, state)?);
        }
        history.epoch_seconds.push(t0.elapsed().as_secs_f64());
    }
    Ok((model, history))
}
