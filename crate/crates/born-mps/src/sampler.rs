//! Exact i.i.d. sampling from dense states and tensor trains.
//!
//! Both samplers are ancestral: site k is drawn from its exact
//! conditional given the already-drawn prefix, so there is no
//! autocorrelation and no burn-in. Sample `k` always consumes substream
//! `k` of the seeded generator (one uniform per site), which makes the
//! dataset bit-identical whether samples are drawn serially or in
//! parallel.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::mps::{
    EvaluationCache, MeasurementBasis, MpsError, SpinConfiguration, TensorTrain, PHYS_DIM,
};
use crate::scalar::Scalar;
use crate::spin_model::{Boundary, DenseState};

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("state is not normalized: |norm² - 1| = {0:.3e}")]
    Unnormalized(f64),
    #[error("cannot sample from a zero-norm source")]
    ZeroNorm,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("conditional probability {value:.3e} at site {site} is negative beyond tolerance")]
    NegativeConditional { site: usize, value: f64 },
    #[error(transparent)]
    Mps(#[from] MpsError),
}

/// Provenance recorded with every dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetMetadata {
    pub sites: usize,
    /// Boundary of the source Hamiltonian (or model).
    pub boundary: Boundary,
    pub basis: MeasurementBasis,
    pub source: String,
    pub seed: u64,
    pub sample_count: usize,
}

/// Ordered collection of measurement outcomes plus provenance.
#[derive(Clone, Debug)]
pub struct Dataset {
    configurations: Vec<SpinConfiguration>,
    metadata: DatasetMetadata,
}

impl Dataset {
    pub fn new(
        configurations: Vec<SpinConfiguration>,
        metadata: DatasetMetadata,
    ) -> Result<Self, SamplerError> {
        for c in &configurations {
            if c.len() != metadata.sites {
                return Err(SamplerError::Mps(MpsError::ConfigLengthMismatch {
                    expected: metadata.sites,
                    got: c.len(),
                }));
            }
        }
        let mut metadata = metadata;
        metadata.sample_count = configurations.len();
        Ok(Self {
            configurations,
            metadata,
        })
    }

    pub fn configurations(&self) -> &[SpinConfiguration] {
        &self.configurations
    }

    pub fn metadata(&self) -> &DatasetMetadata {
        &self.metadata
    }

    pub fn len(&self) -> usize {
        self.configurations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configurations.is_empty()
    }

    pub fn sites(&self) -> usize {
        self.metadata.sites
    }

    /// Configuration counts keyed by index, in lexicographic order.
    pub fn counts(&self) -> BTreeMap<usize, usize> {
        let mut counts = BTreeMap::new();
        for c in &self.configurations {
            *counts.entry(c.to_index()).or_insert(0) += 1;
        }
        counts
    }
}

/// Relative frequencies over configurations; iteration is lexicographic.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalDistribution {
    sites: usize,
    frequencies: BTreeMap<usize, f64>,
}

impl EmpiricalDistribution {
    pub fn from_frequencies(sites: usize, frequencies: BTreeMap<usize, f64>) -> Self {
        Self { sites, frequencies }
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn frequency(&self, index: usize) -> f64 {
        self.frequencies.get(&index).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.frequencies.iter().map(|(&k, &v)| (k, v))
    }

    pub fn support_len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.frequencies.values().sum()
    }
}

/// Frequency map of a dataset; iteration order over entries is
/// lexicographic by configuration.
pub fn empirical_distribution(data: &Dataset) -> Result<EmpiricalDistribution, SamplerError> {
    if data.is_empty() {
        return Err(SamplerError::EmptyDataset);
    }
    let n = data.len() as f64;
    let frequencies = data
        .counts()
        .into_iter()
        .map(|(k, c)| (k, c as f64 / n))
        .collect();
    Ok(EmpiricalDistribution {
        sites: data.sites(),
        frequencies,
    })
}

/// Exact distribution of a probability vector as an
/// `EmpiricalDistribution` (zero entries omitted).
pub fn distribution_from_probabilities(sites: usize, probs: &[f64]) -> EmpiricalDistribution {
    let frequencies = probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(i, &p)| (i, p))
        .collect();
    EmpiricalDistribution { sites, frequencies }
}

fn substream_rng(seed: u64, sample: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(sample);
    rng
}

/// Binary tree of subtree probability masses over the 2^N leaves;
/// walking it root-to-leaf draws each site from its exact conditional
/// (the suffix marginalization is precomputed by partial summation).
struct MassTree {
    sites: usize,
    /// 1-based heap layout: node i has children 2i, 2i+1; leaves are
    /// nodes dim..2·dim in index order.
    nodes: Vec<f64>,
}

impl MassTree {
    fn new(probs: &[f64]) -> Self {
        let dim = probs.len();
        let sites = dim.trailing_zeros() as usize;
        let mut nodes = vec![0.0; 2 * dim];
        nodes[dim..2 * dim].copy_from_slice(probs);
        for i in (1..dim).rev() {
            nodes[i] = nodes[2 * i] + nodes[2 * i + 1];
        }
        Self { sites, nodes }
    }

    fn draw(&self, rng: &mut ChaCha12Rng) -> SpinConfiguration {
        let mut node = 1usize;
        let mut bits = Vec::with_capacity(self.sites);
        for _ in 0..self.sites {
            let left = self.nodes[2 * node];
            let total = self.nodes[node];
            let p_left = if total > 0.0 { left / total } else { 0.5 };
            let u: f64 = rng.gen();
            let bit = u >= p_left;
            bits.push(bit as u8);
            node = 2 * node + bit as usize;
        }
        SpinConfiguration::new(bits).expect("bits are 0/1")
    }
}

/// Draw `count` i.i.d. configurations from |amplitude|² of a normalized
/// dense state.
pub fn sample_dense(
    state: &DenseState,
    count: usize,
    seed: u64,
    boundary: Boundary,
    source: impl Into<String>,
) -> Result<Dataset, SamplerError> {
    let miss = (state.norm_sqr() - 1.0).abs();
    if miss > 1e-9 {
        return Err(SamplerError::Unnormalized(miss));
    }
    let probs = state.probabilities();
    sample_probabilities(
        state.sites(),
        &probs,
        count,
        seed,
        boundary,
        MeasurementBasis::Z,
        source,
    )
}

/// Draw from an explicit probability vector (used for basis-rotated
/// dense states, whose amplitudes are complex).
pub fn sample_probabilities(
    sites: usize,
    probs: &[f64],
    count: usize,
    seed: u64,
    boundary: Boundary,
    basis: MeasurementBasis,
    source: impl Into<String>,
) -> Result<Dataset, SamplerError> {
    let total: f64 = probs.iter().sum();
    if !(total > 0.0) {
        return Err(SamplerError::ZeroNorm);
    }
    let tree = MassTree::new(probs);
    let configurations: Vec<SpinConfiguration> = (0..count as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = substream_rng(seed, k);
            tree.draw(&mut rng)
        })
        .collect();
    Dataset::new(
        configurations,
        DatasetMetadata {
            sites,
            boundary,
            basis,
            source: source.into(),
            seed,
            sample_count: count,
        },
    )
}

/// Exact ancestral sampling from a tensor train using cached suffix
/// environments; works for both boundary kinds and for complex
/// (basis-rotated) trains.
pub fn sample_tensor_train<T: Scalar>(
    tt: &TensorTrain<T>,
    count: usize,
    seed: u64,
    basis: MeasurementBasis,
    source: impl Into<String>,
) -> Result<Dataset, SamplerError> {
    let cache = EvaluationCache::new(tt).map_err(|e| match e {
        MpsError::ZeroNorm => SamplerError::ZeroNorm,
        other => SamplerError::Mps(other),
    })?;
    let sampler = TrainSampler { tt, cache: &cache };
    let configurations: Result<Vec<SpinConfiguration>, SamplerError> = (0..count as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = substream_rng(seed, k);
            sampler.draw(&mut rng)
        })
        .collect();
    Dataset::new(
        configurations?,
        DatasetMetadata {
            sites: tt.site_count(),
            boundary: tt.boundary(),
            basis,
            source: source.into(),
            seed,
            sample_count: count,
        },
    )
}

/// Tolerance for contraction noise in conditionals: values below
/// `-1e-10` (relative) are an error, larger negatives clamp to zero.
const CONDITIONAL_TOL: f64 = 1e-10;

struct TrainSampler<'a, T: Scalar> {
    tt: &'a TensorTrain<T>,
    cache: &'a EvaluationCache<T>,
}

impl<'a, T: Scalar> TrainSampler<'a, T> {
    fn draw(&self, rng: &mut ChaCha12Rng) -> Result<SpinConfiguration, SamplerError> {
        match self.tt.boundary() {
            Boundary::Open => self.draw_open(rng),
            Boundary::Periodic => self.draw_periodic(rng),
        }
    }

    fn draw_open(&self, rng: &mut ChaCha12Rng) -> Result<SpinConfiguration, SamplerError> {
        let n = self.tt.site_count();
        let mut bits = Vec::with_capacity(n);
        // ket-side prefix vector, renormalized per site (scale cancels)
        let mut left = ndarray::Array1::<T>::from_elem(1, T::one());
        for k in 0..n {
            let (env, _) = self.cache.env(k + 1);
            let mut weights = [0.0f64; PHYS_DIM];
            let mut candidates: [Option<ndarray::Array1<T>>; PHYS_DIM] = [None, None];
            for (s, c) in candidates.iter_mut().enumerate() {
                let x = left.dot(&self.tt.slice(k, s));
                // p_s ∝ Σ_{β β'} x_β · env[β, β'] · conj(x_β')
                let mut p = 0.0;
                for b in 0..x.len() {
                    for bp in 0..x.len() {
                        p += (x[b] * env[(b, bp)] * x[bp].conj()).re();
                    }
                }
                weights[s] = p;
                *c = Some(x);
            }
            let bit = choose_bit(&weights, k, rng)?;
            bits.push(bit as u8);
            left = candidates[bit].take().expect("filled above");
            let mm = left.iter().map(|x| x.modulus()).fold(0.0, f64::max);
            if mm > 0.0 {
                left.mapv_inplace(|x| x.scale_by(1.0 / mm));
            }
        }
        Ok(SpinConfiguration::new(bits).expect("bits are 0/1"))
    }

    fn draw_periodic(&self, rng: &mut ChaCha12Rng) -> Result<SpinConfiguration, SamplerError> {
        let n = self.tt.site_count();
        let d = self.tt.bond_dim();
        let mut bits = Vec::with_capacity(n);
        // ket-side prefix slice product (the bra side is its conjugate)
        let mut prefix = ndarray::Array2::<T>::eye(d);
        for k in 0..n {
            let (env, _) = self.cache.env(k + 1);
            let mut weights = [0.0f64; PHYS_DIM];
            let mut candidates: [Option<ndarray::Array2<T>>; PHYS_DIM] = [None, None];
            for (s, cand) in candidates.iter_mut().enumerate() {
                let b_mat = prefix.dot(&self.tt.slice(k, s));
                // p_s ∝ Σ B[a,c]·conj(B[b,d])·env[(c d),(a b)]
                let mut p = 0.0;
                for a in 0..d {
                    for b in 0..d {
                        for c in 0..d {
                            for e in 0..d {
                                p += (b_mat[(a, c)]
                                    * b_mat[(b, e)].conj()
                                    * env[(c * d + e, a * d + b)])
                                    .re();
                            }
                        }
                    }
                }
                weights[s] = p;
                *cand = Some(b_mat);
            }
            let bit = choose_bit(&weights, k, rng)?;
            bits.push(bit as u8);
            prefix = candidates[bit].take().expect("filled above");
            let mm = prefix.iter().map(|x| x.modulus()).fold(0.0, f64::max);
            if mm > 0.0 {
                prefix.mapv_inplace(|x| x.scale_by(1.0 / mm));
            }
        }
        Ok(SpinConfiguration::new(bits).expect("bits are 0/1"))
    }
}

fn choose_bit(
    weights: &[f64; 2],
    site: usize,
    rng: &mut ChaCha12Rng,
) -> Result<usize, SamplerError> {
    let scale = weights[0]
        .abs()
        .max(weights[1].abs())
        .max(f64::MIN_POSITIVE);
    let mut w = *weights;
    for v in &mut w {
        if *v < 0.0 {
            if *v < -CONDITIONAL_TOL * scale {
                return Err(SamplerError::NegativeConditional {
                    site: site + 1,
                    value: *v,
                });
            }
            *v = 0.0;
        }
    }
    let total = w[0] + w[1];
    if total <= 0.0 {
        return Err(SamplerError::ZeroNorm);
    }
    let p0 = (w[0] / total).clamp(0.0, 1.0);
    let u: f64 = rng.gen();
    Ok((u >= p0) as usize)
}

/// Product of the per-site conditionals the sampler would use along
/// `config`; equals amplitude(v)²/Z. Exposed for consistency checks.
pub fn trajectory_probability<T: Scalar>(
    tt: &TensorTrain<T>,
    cache: &EvaluationCache<T>,
    config: &SpinConfiguration,
) -> Result<f64, SamplerError> {
    let n = tt.site_count();
    let mut log_p = 0.0;
    match tt.boundary() {
        Boundary::Open => {
            let mut left = ndarray::Array1::<T>::from_elem(1, T::one());
            for k in 0..n {
                let (env, _) = cache.env(k + 1);
                let mut weights = [0.0f64; 2];
                for s in 0..PHYS_DIM {
                    let x = left.dot(&tt.slice(k, s));
                    let mut p = 0.0;
                    for b in 0..x.len() {
                        for bp in 0..x.len() {
                            p += (x[b] * env[(b, bp)] * x[bp].conj()).re();
                        }
                    }
                    weights[s] = p.max(0.0);
                }
                let s = config.bit(k);
                log_p += (weights[s] / (weights[0] + weights[1])).ln();
                left = left.dot(&tt.slice(k, s));
                let mm = left.iter().map(|x| x.modulus()).fold(0.0, f64::max);
                if mm > 0.0 {
                    left.mapv_inplace(|x| x.scale_by(1.0 / mm));
                }
            }
        }
        Boundary::Periodic => {
            let d = tt.bond_dim();
            let mut prefix = ndarray::Array2::<T>::eye(d);
            for k in 0..n {
                let (env, _) = cache.env(k + 1);
                let mut weights = [0.0f64; 2];
                for s in 0..PHYS_DIM {
                    let b_mat = prefix.dot(&tt.slice(k, s));
                    let mut p = 0.0;
                    for a in 0..d {
                        for b in 0..d {
                            for c in 0..d {
                                for e in 0..d {
                                    p += (b_mat[(a, c)]
                                        * b_mat[(b, e)].conj()
                                        * env[(c * d + e, a * d + b)])
                                        .re();
                                }
                            }
                        }
                    }
                    weights[s] = p.max(0.0);
                }
                let s = config.bit(k);
                log_p += (weights[s] / (weights[0] + weights[1])).ln();
                prefix = prefix.dot(&tt.slice(k, s));
                let mm = prefix.iter().map(|x| x.modulus()).fold(0.0, f64::max);
                if mm > 0.0 {
                    prefix.mapv_inplace(|x| x.scale_by(1.0 / mm));
                }
            }
        }
    }
    Ok(log_p.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mps::tests::random_train;

    fn tv_distance_vs_exact(emp: &EmpiricalDistribution, probs: &[f64]) -> f64 {
        let mut tv = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            tv += (emp.frequency(i) - p).abs();
        }
        tv / 2.0
    }

    #[test]
    fn one_hot_state_samples_identically() {
        let state = DenseState::basis_state(4, 0b1010);
        let data = sample_dense(&state, 50, 1, Boundary::Open, "test").unwrap();
        assert_eq!(data.len(), 50);
        for c in data.configurations() {
            assert_eq!(c.to_index(), 0b1010);
        }
    }

    #[test]
    fn uniform_state_bit_means() {
        let n = 4;
        let dim = 1usize << n;
        let amp = (1.0 / dim as f64).sqrt();
        let state = DenseState::new(n, vec![amp; dim]).unwrap();
        let data = sample_dense(&state, 100_000, 7, Boundary::Open, "uniform").unwrap();
        for j in 0..n {
            let mean: f64 = data
                .configurations()
                .iter()
                .map(|c| c.bit(j) as f64)
                .sum::<f64>()
                / data.len() as f64;
            assert!((mean - 0.5).abs() < 0.01, "site {j}: {mean}");
        }
    }

    #[test]
    fn dense_sampling_close_in_tv() {
        let n = 6;
        let mut gs = crate::spin_model::ground_state_dense(
            &crate::spin_model::ModelParameters::new(1.0, 1.0, 1.0, n, Boundary::Open).unwrap(),
        )
        .unwrap();
        gs.state.normalize();
        let data = sample_dense(&gs.state, 200_000, 11, Boundary::Open, "ed").unwrap();
        let emp = empirical_distribution(&data).unwrap();
        let tv = tv_distance_vs_exact(&emp, &gs.state.probabilities());
        assert!(tv < 0.01, "tv = {tv}");
    }

    #[test]
    fn unnormalized_state_rejected() {
        let state = DenseState::new(2, vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            sample_dense(&state, 10, 0, Boundary::Open, "bad"),
            Err(SamplerError::Unnormalized(_))
        ));
    }

    #[test]
    fn product_train_samples_identically() {
        let mut t0 = ndarray::Array3::<f64>::zeros((1, 2, 1));
        t0[(0, 1, 0)] = 1.0;
        let mut t1 = ndarray::Array3::<f64>::zeros((1, 2, 1));
        t1[(0, 0, 0)] = 1.0;
        let tt = TensorTrain::from_tensors(Boundary::Open, 1, vec![t0, t1.clone(), t1]).unwrap();
        let data = sample_tensor_train(&tt, 40, 3, MeasurementBasis::Z, "prod").unwrap();
        for c in data.configurations() {
            assert_eq!(c.to_string(), "100");
        }
    }

    #[test]
    fn train_sampling_close_in_tv_both_boundaries() {
        for &boundary in &[Boundary::Open, Boundary::Periodic] {
            let tt = random_train(6, 3, boundary, 201);
            let data = sample_tensor_train(&tt, 200_000, 5, MeasurementBasis::Z, "tt").unwrap();
            let emp = empirical_distribution(&data).unwrap();
            let dense = tt.to_dense().unwrap();
            let z: f64 = dense.iter().map(|a| a * a).sum();
            let probs: Vec<f64> = dense.iter().map(|a| a * a / z).collect();
            let tv = tv_distance_vs_exact(&emp, &probs);
            assert!(tv < 0.01, "{boundary}: tv = {tv}");
        }
    }

    #[test]
    fn conditional_chain_matches_born_probability() {
        for &boundary in &[Boundary::Open, Boundary::Periodic] {
            let tt = random_train(5, 3, boundary, 211);
            let cache = EvaluationCache::new(&tt).unwrap();
            let z = tt.norm_squared();
            for v in [0usize, 3, 17, 30] {
                let cfg = SpinConfiguration::from_index(v, 5);
                let traj = trajectory_probability(&tt, &cache, &cfg).unwrap();
                let amp = tt.amplitude(&cfg).unwrap();
                let born = (amp.abs_sqr().ln_mag - z.ln_mag).exp();
                assert!(
                    (traj - born).abs() <= 1e-8 * born.max(1e-300),
                    "{boundary} v={v}: {traj} vs {born}"
                );
            }
        }
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let tt = random_train(5, 2, Boundary::Periodic, 221);
        let a = sample_tensor_train(&tt, 500, 17, MeasurementBasis::Z, "a").unwrap();
        let b = sample_tensor_train(&tt, 500, 17, MeasurementBasis::Z, "b").unwrap();
        assert_eq!(a.configurations(), b.configurations());
        let c = sample_tensor_train(&tt, 500, 18, MeasurementBasis::Z, "c").unwrap();
        assert!(a.configurations() != c.configurations());
    }

    #[test]
    fn empirical_distribution_examples() {
        let cfgs = ["00", "00", "11", "11"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        let data = Dataset::new(
            cfgs,
            DatasetMetadata {
                sites: 2,
                boundary: Boundary::Open,
                basis: MeasurementBasis::Z,
                source: "literal".into(),
                seed: 0,
                sample_count: 4,
            },
        )
        .unwrap();
        let emp = empirical_distribution(&data).unwrap();
        assert_eq!(emp.frequency(0b00), 0.5);
        assert_eq!(emp.frequency(0b11), 0.5);
        assert_eq!(emp.frequency(0b01), 0.0);
        assert!((emp.total_mass() - 1.0).abs() < 1e-12);

        let single = Dataset::new(vec!["10".parse().unwrap()], data.metadata().clone()).unwrap();
        let emp = empirical_distribution(&single).unwrap();
        assert_eq!(emp.frequency(0b10), 1.0);
    }

    #[test]
    fn empty_dataset_rejected() {
        let data = Dataset::new(
            vec![],
            DatasetMetadata {
                sites: 2,
                boundary: Boundary::Open,
                basis: MeasurementBasis::Z,
                source: "empty".into(),
                seed: 0,
                sample_count: 0,
            },
        )
        .unwrap();
        assert!(matches!(
            empirical_distribution(&data),
            Err(SamplerError::EmptyDataset)
        ));
    }
}
