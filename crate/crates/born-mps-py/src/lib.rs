//! Python bindings for the born-mps crate: ground states, tensor-train
//! Born machines, sampling, training and the evaluation metrics.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use born_mps::analysis;
use born_mps::io;
use born_mps::mps::{self, MeasurementBasis, SpinConfiguration};
use born_mps::sampler;
use born_mps::spin_model::{self, Boundary, ModelParameters};
use born_mps::training;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn io_err(e: impl std::fmt::Display) -> PyErr {
    PyIOError::new_err(e.to_string())
}

fn parse_boundary(s: &str) -> PyResult<Boundary> {
    s.parse().map_err(value_err)
}

fn parse_basis(s: &str) -> PyResult<MeasurementBasis> {
    s.parse::<MeasurementBasis>().map_err(value_err)
}

fn parse_configs(samples: Vec<String>) -> PyResult<Vec<SpinConfiguration>> {
    samples
        .iter()
        .map(|s| s.parse::<SpinConfiguration>().map_err(value_err))
        .collect()
}

/// Exact ground state of the transverse-field XY chain.
#[pyclass]
#[derive(Clone)]
struct GroundState {
    inner: spin_model::GroundState,
    boundary: Boundary,
}

#[pymethods]
impl GroundState {
    #[getter]
    fn energy(&self) -> f64 {
        self.inner.energy
    }

    #[getter]
    fn gap(&self) -> f64 {
        self.inner.gap
    }

    #[getter]
    fn degenerate(&self) -> bool {
        self.inner.is_degenerate()
    }

    #[getter]
    fn boundary(&self) -> String {
        self.boundary.to_string()
    }

    #[getter]
    fn sites(&self) -> usize {
        self.inner.state.sites()
    }

    /// All 2^N amplitudes in configuration-index order.
    fn amplitudes(&self) -> Vec<f64> {
        self.inner.state.amplitudes().to_vec()
    }

    /// Draw i.i.d. measurement outcomes, optionally in the x or y basis.
    #[pyo3(signature = (count, seed, basis = "z"))]
    fn sample(&self, count: usize, seed: u64, basis: &str) -> PyResult<Vec<String>> {
        let basis = parse_basis(basis)?;
        let mut state = self.inner.state.clone();
        state.normalize();
        let data = match basis {
            MeasurementBasis::Z => {
                sampler::sample_dense(&state, count, seed, self.boundary, "python")
                    .map_err(value_err)?
            }
            other => {
                let probs = mps::dense_basis_probabilities(&state, other);
                sampler::sample_probabilities(
                    state.sites(),
                    &probs,
                    count,
                    seed,
                    self.boundary,
                    other,
                    "python",
                )
                .map_err(value_err)?
            }
        };
        Ok(data
            .configurations()
            .iter()
            .map(|c| c.to_string())
            .collect())
    }

    /// Connected σᶻ–σᶻ correlation G(r) for r = 1..=r_max.
    fn correlation_function(&self, r_max: usize) -> PyResult<Vec<(usize, f64, usize)>> {
        let report = analysis::correlation_function(
            analysis::CorrelationSource::Dense(&self.inner.state),
            self.boundary,
            r_max,
        )
        .map_err(value_err)?;
        Ok(report.points.iter().map(|p| (p.r, p.g, p.pairs)).collect())
    }
}

/// An MPS Born machine with open or periodic architecture.
#[pyclass]
#[derive(Clone)]
struct TensorTrain {
    inner: mps::TensorTrain<f64>,
}

#[pymethods]
impl TensorTrain {
    /// Standard initialization: bond-identity plus seeded Gaussian noise
    /// of standard deviation 0.01.
    #[staticmethod]
    fn near_identity(sites: usize, bond_dim: usize, boundary: &str, seed: u64) -> PyResult<Self> {
        let boundary = parse_boundary(boundary)?;
        Ok(Self {
            inner: mps::TensorTrain::near_identity(sites, bond_dim, boundary, seed)
                .map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        match io::load_model(&path).map_err(io_err)? {
            io::ModelFile::Real(inner) => Ok(Self { inner }),
            io::ModelFile::Complex(_) => Err(value_err("model file holds a complex train")),
        }
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        io::save_model_real(&path, &self.inner).map_err(io_err)
    }

    #[getter]
    fn sites(&self) -> usize {
        self.inner.site_count()
    }

    #[getter]
    fn bond_dim(&self) -> usize {
        self.inner.bond_dim()
    }

    #[getter]
    fn boundary(&self) -> String {
        self.inner.boundary().to_string()
    }

    /// Total number of trainable parameters Ω.
    fn parameter_count(&self) -> usize {
        self.inner.parameter_count()
    }

    /// ψ̂(v) for a configuration string such as "0110".
    fn amplitude(&self, configuration: &str) -> PyResult<f64> {
        let cfg: SpinConfiguration = configuration.parse().map_err(value_err)?;
        Ok(self.inner.amplitude(&cfg).map_err(value_err)?.value())
    }

    /// ln Σ_v ψ̂(v)².
    fn log_norm_squared(&self) -> f64 {
        self.inner.norm_squared().ln_mag
    }

    /// All 2^N unnormalized amplitudes (N ≤ 14).
    fn to_dense(&self) -> PyResult<Vec<f64>> {
        self.inner.to_dense().map_err(value_err)
    }

    /// Born probabilities in the requested measurement basis (N ≤ 14).
    #[pyo3(signature = (basis = "z"))]
    fn probabilities(&self, basis: &str) -> PyResult<Vec<f64>> {
        let basis = parse_basis(basis)?;
        let rotated = self.inner.rotate_basis(basis);
        let dense = rotated.to_dense().map_err(value_err)?;
        let z: f64 = dense.iter().map(|a| a.norm_sqr()).sum();
        Ok(dense.iter().map(|a| a.norm_sqr() / z).collect())
    }

    /// Exact ancestral samples from the Born distribution.
    fn sample(&self, count: usize, seed: u64) -> PyResult<Vec<String>> {
        let data =
            sampler::sample_tensor_train(&self.inner, count, seed, MeasurementBasis::Z, "python")
                .map_err(value_err)?;
        Ok(data
            .configurations()
            .iter()
            .map(|c| c.to_string())
            .collect())
    }

    /// ⟨ψ̂|O|ψ̂⟩/Z for a Pauli string given as [(kind, site), ...] with
    /// kind in "xyz" and 1-based sites.
    fn expectation(&self, ops: Vec<(String, usize)>) -> PyResult<f64> {
        let ops: PyResult<Vec<spin_model::PauliOperator>> = ops
            .iter()
            .map(|(kind, site)| {
                let kind = match kind.to_ascii_lowercase().as_str() {
                    "x" => spin_model::PauliKind::X,
                    "y" => spin_model::PauliKind::Y,
                    "z" => spin_model::PauliKind::Z,
                    other => return Err(value_err(format!("unknown Pauli `{other}`"))),
                };
                Ok(spin_model::PauliOperator::new(kind, *site))
            })
            .collect();
        self.inner
            .expectation_pauli_string(&ops?)
            .map_err(value_err)
    }

    /// Connected σᶻ–σᶻ correlation of the model distribution.
    fn correlation_function(&self, r_max: usize) -> PyResult<Vec<(usize, f64, usize)>> {
        let report = analysis::correlation_function(
            analysis::CorrelationSource::Train(&self.inner),
            self.inner.boundary(),
            r_max,
        )
        .map_err(value_err)?;
        Ok(report.points.iter().map(|p| (p.r, p.g, p.pairs)).collect())
    }
}

/// Ground state of H = −J Σ[(1+γ)/4 σˣσˣ + (1−γ)/4 σʸσʸ] − (h/2) Σ σᶻ;
/// dense diagonalization for N ≤ 12, Lanczos beyond.
#[pyfunction]
#[pyo3(signature = (gamma, h, sites, coupling = 1.0, boundary = "open", seed = 1))]
fn ground_state(
    gamma: f64,
    h: f64,
    sites: usize,
    coupling: f64,
    boundary: &str,
    seed: u64,
) -> PyResult<GroundState> {
    let boundary = parse_boundary(boundary)?;
    let params = ModelParameters::new(coupling, gamma, h, sites, boundary).map_err(value_err)?;
    let gs = if sites <= spin_model::DENSE_MAX_SITES {
        spin_model::ground_state_dense(&params).map_err(value_err)?
    } else {
        let opts = spin_model::LanczosOptions {
            seed,
            ..Default::default()
        };
        spin_model::ground_state_lanczos_with(&params, &opts).map_err(value_err)?
    };
    Ok(GroundState {
        inner: gs,
        boundary,
    })
}

/// Minimize the NLL with Adam; returns the trained model and a history
/// dict with per-step and per-epoch losses (and fidelities when a
/// reference ground state is supplied).
#[pyfunction]
#[pyo3(signature = (
    model, samples, epochs = 20, batch_size = 200, learning_rate = 0.005,
    shuffle_seed = 0, reference = None, boundary = "open",
))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    model: &TensorTrain,
    samples: Vec<String>,
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    shuffle_seed: u64,
    reference: Option<&GroundState>,
    boundary: &str,
) -> PyResult<(TensorTrain, Py<PyDict>)> {
    let configs = parse_configs(samples)?;
    let data = sampler::Dataset::new(
        configs,
        sampler::DatasetMetadata {
            sites: model.inner.site_count(),
            boundary: parse_boundary(boundary)?,
            basis: MeasurementBasis::Z,
            source: "python".into(),
            seed: 0,
            sample_count: 0,
        },
    )
    .map_err(value_err)?;
    let config = training::TrainConfig {
        epochs,
        batch_size,
        learning_rate,
        shuffle_seed,
        ..training::TrainConfig::default()
    };
    let reference_state = reference.map(|g| {
        let mut s = g.inner.state.clone();
        s.normalize();
        s
    });
    let (trained, history) =
        training::train(&model.inner, &data, &config, reference_state.as_ref())
            .map_err(value_err)?;
    let dict = PyDict::new_bound(py);
    dict.set_item(
        "step_nll",
        history
            .step_losses
            .iter()
            .map(|s| s.nll)
            .collect::<Vec<f64>>(),
    )?;
    dict.set_item("epoch_dataset_nll", history.epoch_dataset_nll.clone())?;
    dict.set_item("epoch_fidelity", history.epoch_fidelity.clone())?;
    Ok((TensorTrain { inner: trained }, dict.into()))
}

/// |⟨Ψ|Ψ̂⟩|² / (‖Ψ‖²‖Ψ̂‖²) between a model and a ground state.
#[pyfunction]
fn fidelity(model: &TensorTrain, reference: &GroundState) -> PyResult<f64> {
    analysis::fidelity_to_dense(&model.inner, &reference.inner.state).map_err(value_err)
}

/// Fidelity between two models (boundary kinds may differ).
#[pyfunction]
fn fidelity_between(a: &TensorTrain, b: &TensorTrain) -> PyResult<f64> {
    analysis::fidelity_between_trains(&a.inner, &b.inner).map_err(value_err)
}

/// Shannon entropy (nats) of a list of configuration strings.
#[pyfunction]
fn shannon_entropy(samples: Vec<String>) -> PyResult<f64> {
    let configs = parse_configs(samples)?;
    if configs.is_empty() {
        return Err(value_err("empty sample list"));
    }
    let sites = configs[0].len();
    let data = sampler::Dataset::new(
        configs,
        sampler::DatasetMetadata {
            sites,
            boundary: Boundary::Open,
            basis: MeasurementBasis::Z,
            source: "python".into(),
            seed: 0,
            sample_count: 0,
        },
    )
    .map_err(value_err)?;
    analysis::shannon_entropy(&data).map_err(value_err)
}

/// Average negative log-likelihood of samples under a model, in nats.
#[pyfunction]
fn nll(model: &TensorTrain, samples: Vec<String>) -> PyResult<f64> {
    let configs = parse_configs(samples)?;
    let loss = training::nll_loss(&model.inner, &configs, &training::TrainConfig::default(), 0)
        .map_err(value_err)?;
    Ok(loss.nll)
}

/// Least-squares fit G(r) ≈ A·e^(−r/ξ); returns (A, ξ or None, residual).
#[pyfunction]
fn fit_correlation_length(points: Vec<(usize, f64, usize)>) -> PyResult<(f64, Option<f64>, f64)> {
    let report = analysis::CorrelationReport {
        boundary: Boundary::Open,
        points: points
            .iter()
            .map(|&(r, g, pairs)| analysis::CorrelationPoint { r, g, pairs })
            .collect(),
        fit: None,
    };
    let fit = analysis::fit_correlation_length(&report).map_err(value_err)?;
    Ok((fit.amplitude, fit.xi, fit.residual))
}

#[pyfunction]
fn parameter_count(sites: usize, bond_dim: usize, boundary: &str) -> PyResult<usize> {
    Ok(mps::parameter_count(
        sites,
        bond_dim,
        parse_boundary(boundary)?,
    ))
}

#[pymodule]
fn born_mps_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<GroundState>()?;
    m.add_class::<TensorTrain>()?;
    m.add_function(wrap_pyfunction!(ground_state, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(fidelity_between, m)?)?;
    m.add_function(wrap_pyfunction!(shannon_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(nll, m)?)?;
    m.add_function(wrap_pyfunction!(fit_correlation_length, m)?)?;
    m.add_function(wrap_pyfunction!(parameter_count, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
