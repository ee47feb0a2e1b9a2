//! The six subcommands: generate, sample, train, evaluate, table1,
//! report. Each writes its outputs under the configured directory and
//! embeds the resolved configuration so any artifact can be reproduced.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::{CliError, CliResult, ExperimentConfig, ARTIFACT_VERSION};
use crate::analysis::{
    self, correlation_function, fit_correlation_length, max_separation, shannon_entropy,
    tv_distance, CorrelationFit, CorrelationReport, CorrelationSource,
};
use crate::io::{
    load_dataset, load_model, load_state, save_dataset, save_model_real, save_state, ModelFile,
    StateFile,
};
use crate::mps::{
    dense_basis_probabilities, parameter_count, MeasurementBasis, SpinConfiguration, TensorTrain,
};
use crate::sampler::{
    distribution_from_probabilities, empirical_distribution, sample_dense, sample_probabilities,
    Dataset,
};
use crate::spin_model::{
    ground_state_dense, ground_state_lanczos_with, Boundary, DenseState, GroundState,
    LanczosOptions, ModelParameters, DENSE_MAX_SITES,
};
use crate::training::{nll_loss, train, TrainConfig, TrainHistory};

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Io(format!("serialize {}: {e}", path.display())))?;
    fs::write(path, text + "\n")
        .map_err(|e| CliError::Io(format!("write {}: {e}", path.display())))?;
    Ok(())
}

/// 17 significant digits, as the trace CSVs require.
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Serialize)]
struct GenerateMetadata {
    energy: f64,
    gap_estimate: f64,
    degenerate: bool,
    solver: &'static str,
    config: BTreeMap<String, serde_json::Value>,
}

/// Compute the ground state (dense for N ≤ 12, Lanczos otherwise) and
/// write the state file plus a JSON metadata sidecar.
pub fn cmd_generate(config: &ExperimentConfig) -> CliResult<(PathBuf, GroundState)> {
    let params = config.model_parameters(config.data_boundary)?;
    let (gs, solver) = solve_ground_state(&params, config.seed_state)?;
    ensure_dir(&config.out_dir)?;
    let state_path = config.out_dir.join("ground_state.xygs");
    save_state(
        &state_path,
        &StateFile {
            boundary: config.data_boundary,
            basis: MeasurementBasis::Z,
            state: gs.state.clone(),
        },
    )?;
    write_json(
        &config.out_dir.join("ground_state.json"),
        &GenerateMetadata {
            energy: gs.energy,
            gap_estimate: gs.gap,
            degenerate: gs.is_degenerate(),
            solver,
            config: config.echo(),
        },
    )?;
    println!(
        "generate: N={} boundary={} E0={:.12} gap={:.3e}{}",
        config.sites,
        config.data_boundary,
        gs.energy,
        gs.gap,
        if gs.is_degenerate() {
            " (degenerate)"
        } else {
            ""
        }
    );
    Ok((state_path, gs))
}

pub fn solve_ground_state(
    params: &ModelParameters,
    seed: u64,
) -> CliResult<(GroundState, &'static str)> {
    if params.sites <= DENSE_MAX_SITES {
        Ok((ground_state_dense(params)?, "dense"))
    } else {
        let opts = LanczosOptions {
            seed,
            ..Default::default()
        };
        Ok((ground_state_lanczos_with(params, &opts)?, "lanczos"))
    }
}

/// Sample a dataset from a state file in the requested basis.
pub fn cmd_sample(
    config: &ExperimentConfig,
    state_path: &Path,
    basis: MeasurementBasis,
) -> CliResult<PathBuf> {
    let file = load_state(state_path)?;
    let mut state = file.state;
    state.normalize();
    let source = format!(
        "ground_state gamma={} h={} J={} N={} boundary={}",
        config.gamma, config.h, config.coupling, config.sites, file.boundary
    );
    let data = match basis {
        MeasurementBasis::Z => sample_dense(
            &state,
            config.samples,
            config.seed_sample,
            file.boundary,
            source,
        )?,
        other => {
            let probs = dense_basis_probabilities(&state, other);
            sample_probabilities(
                state.sites(),
                &probs,
                config.samples,
                config.seed_sample,
                file.boundary,
                other,
                source,
            )?
        }
    };
    ensure_dir(&config.out_dir)?;
    let path = config.out_dir.join(format!("dataset_{basis}.txt"));
    save_dataset(&path, &data)?;
    println!(
        "sample: {} configurations (basis {basis}) -> {}",
        data.len(),
        path.display()
    );
    Ok(path)
}

#[derive(Serialize)]
struct TrainRunSummary {
    final_dataset_nll: f64,
    dataset_entropy_nats: f64,
    final_fidelity: Option<f64>,
    steps: usize,
    config: BTreeMap<String, serde_json::Value>,
}

/// Train a fresh model on a dataset file; writes the model file, the
/// per-step and per-epoch loss traces, the optional fidelity trace and
/// a JSON summary.
pub fn cmd_train(
    config: &ExperimentConfig,
    dataset_path: &Path,
    reference_path: Option<&Path>,
) -> CliResult<(PathBuf, TrainHistory)> {
    let data = load_dataset(dataset_path)?;
    if data.sites() != config.sites {
        return Err(CliError::Usage(format!(
            "dataset has {} sites but config says {}",
            data.sites(),
            config.sites
        )));
    }
    let reference = match reference_path {
        Some(p) => {
            let mut f = load_state(p)?;
            f.state.normalize();
            Some(f.state)
        }
        None => None,
    };
    let init = TensorTrain::near_identity(
        config.sites,
        config.bond_dim,
        config.model_boundary,
        config.seed_init,
    )?;
    let train_config = config.train_config();
    train_config.validate()?;
    let (model, history) = train(&init, &data, &train_config, reference.as_ref())?;

    ensure_dir(&config.out_dir)?;
    let model_path = config.out_dir.join("model.xytt");
    save_model_real(&model_path, &model)?;

    let mut trace = String::from("step,epoch,nll\n");
    for s in &history.step_losses {
        trace.push_str(&format!("{},{},{}\n", s.step, s.epoch, fmt_f64(s.nll)));
    }
    fs::write(config.out_dir.join("loss_trace.csv"), trace)?;

    let mut epoch_trace = String::from("epoch,nll\n");
    for (e, nll) in history.epoch_dataset_nll.iter().enumerate() {
        epoch_trace.push_str(&format!("{},{}\n", e, fmt_f64(*nll)));
    }
    fs::write(config.out_dir.join("epoch_nll.csv"), epoch_trace)?;

    if !history.epoch_fidelity.is_empty() {
        let mut ftrace = String::from("epoch,fidelity\n");
        for (e, f) in history.epoch_fidelity.iter().enumerate() {
            ftrace.push_str(&format!("{},{}\n", e, fmt_f64(*f)));
        }
        fs::write(config.out_dir.join("fidelity.csv"), ftrace)?;
    }

    let entropy = shannon_entropy(&data)?;
    let final_nll = *history.epoch_dataset_nll.last().expect("epochs >= 1");
    let final_fidelity = history.epoch_fidelity.last().copied();
    write_json(
        &config.out_dir.join("train_run.json"),
        &TrainRunSummary {
            final_dataset_nll: final_nll,
            dataset_entropy_nats: entropy,
            final_fidelity,
            steps: history.step_losses.len(),
            config: config.echo(),
        },
    )?;
    match final_fidelity {
        Some(f) => println!("train: final NLL {final_nll:.6} | S(T) {entropy:.6} | F {f:.6}"),
        None => println!("train: final NLL {final_nll:.6} | S(T) {entropy:.6}"),
    }
    Ok((model_path, history))
}

#[derive(Serialize)]
pub struct MetricsReport {
    pub fidelity: f64,
    /// |train-train − dense| cross-check, present when both paths ran.
    pub fidelity_paths_delta: Option<f64>,
    pub shannon_entropy_nats: f64,
    pub final_nll: f64,
    pub nll_minus_entropy: f64,
    /// NLL − S(T) > 0.1 nats: the model failed to reach the attainable
    /// floor.
    pub learning_shortfall: bool,
    pub parameter_count: usize,
    /// TV(exact model dist, exact oracle dist) per basis.
    pub tv_model_vs_oracle: BTreeMap<String, f64>,
    /// TV(dataset empirical, exact model dist) in the z basis.
    pub tv_data_vs_model_z: Option<f64>,
    pub correlation_model: CorrelationReport,
    pub correlation_oracle: CorrelationReport,
    pub correlation_data: CorrelationReport,
    pub xi_fit_model: Option<CorrelationFit>,
    pub xi_fit_oracle: Option<CorrelationFit>,
    /// Boundary whose pair convention G(r) was computed with.
    pub pair_convention_boundary: Boundary,
    pub config: BTreeMap<String, serde_json::Value>,
}

/// Evaluate a trained model against the exact state and the training
/// dataset; writes metrics.json, three G(r) CSVs and per-basis
/// histograms.
pub fn cmd_evaluate(
    config: &ExperimentConfig,
    model_path: &Path,
    state_path: &Path,
    dataset_path: &Path,
) -> CliResult<PathBuf> {
    let model = match load_model(model_path)? {
        ModelFile::Real(m) => m,
        ModelFile::Complex(_) => {
            return Err(CliError::Usage(
                "evaluate expects a real (trainable) model file".into(),
            ))
        }
    };
    let state_file = load_state(state_path)?;
    let mut oracle = state_file.state;
    oracle.normalize();
    let data = load_dataset(dataset_path)?;
    let n = model.site_count();
    if oracle.sites() != n || data.sites() != n {
        return Err(CliError::Usage(format!(
            "site counts disagree: model {n}, state {}, dataset {}",
            oracle.sites(),
            data.sites()
        )));
    }

    // fidelity: train-train contraction against the exactly factorized
    // oracle, cross-checked against the streamed dense overlap
    let fidelity_dense = analysis::fidelity_to_dense(&model, &oracle)?;
    let (fidelity, fidelity_paths_delta) = if n <= crate::mps::DENSE_EXPANSION_MAX_SITES {
        let oracle_train = TensorTrain::from_dense(&oracle)?;
        let f_tt = analysis::fidelity_between_trains(&model, &oracle_train)?;
        (f_tt, Some((f_tt - fidelity_dense).abs()))
    } else {
        (fidelity_dense, None)
    };

    let entropy = shannon_entropy(&data)?;
    let final_nll = nll_loss(
        &model,
        data.configurations(),
        &TrainConfig::default(),
        u64::MAX,
    )?
    .nll;

    // correlation pipeline, all three sources under one pair convention
    let pair_boundary = data.metadata().boundary;
    let r_max = max_separation(n, pair_boundary);
    let corr_model = correlation_function(CorrelationSource::Train(&model), pair_boundary, r_max)?;
    let corr_oracle =
        correlation_function(CorrelationSource::Dense(&oracle), pair_boundary, r_max)?;
    let corr_data = correlation_function(CorrelationSource::Data(&data), pair_boundary, r_max)?;
    let xi_fit_model = fit_correlation_length(&corr_model).ok();
    let xi_fit_oracle = fit_correlation_length(&corr_oracle).ok();

    ensure_dir(&config.out_dir)?;
    for (name, rep) in [
        ("corr_model.csv", &corr_model),
        ("corr_oracle.csv", &corr_oracle),
        ("corr_data.csv", &corr_data),
    ] {
        let mut csv = String::from("r,G,Np\n");
        for p in &rep.points {
            csv.push_str(&format!("{},{},{}\n", p.r, fmt_f64(p.g), p.pairs));
        }
        fs::write(config.out_dir.join(name), csv)?;
    }

    // per-basis histograms and TV distances (exact at N ≤ 14)
    let mut tv_model_vs_oracle = BTreeMap::new();
    let mut tv_data_vs_model_z = None;
    if n <= crate::mps::DENSE_EXPANSION_MAX_SITES {
        let emp = empirical_distribution(&data)?;
        for basis in config.parsed_bases()? {
            let model_rot = model.rotate_basis(basis);
            let model_dense = model_rot.to_dense()?;
            let zm: f64 = model_dense.iter().map(|z| z.norm_sqr()).sum();
            let model_probs: Vec<f64> = model_dense.iter().map(|z| z.norm_sqr() / zm).collect();
            let oracle_probs = dense_basis_probabilities(&oracle, basis);

            let model_dist = distribution_from_probabilities(n, &model_probs);
            let oracle_dist = distribution_from_probabilities(n, &oracle_probs);
            tv_model_vs_oracle.insert(basis.to_string(), tv_distance(&model_dist, &oracle_dist)?);

            let mut csv = String::from("configuration,freq_data,freq_model\n");
            for v in 0..model_probs.len() {
                let cfg = SpinConfiguration::from_index(v, n);
                let freq_data = if basis == MeasurementBasis::Z {
                    emp.frequency(v)
                } else {
                    oracle_probs[v]
                };
                csv.push_str(&format!(
                    "{cfg},{},{}\n",
                    fmt_f64(freq_data),
                    fmt_f64(model_probs[v])
                ));
            }
            fs::write(config.out_dir.join(format!("histogram_{basis}.csv")), csv)?;

            if basis == MeasurementBasis::Z {
                tv_data_vs_model_z = Some(tv_distance(&emp, &model_dist)?);
            }
        }
    }

    let report = MetricsReport {
        fidelity,
        fidelity_paths_delta,
        shannon_entropy_nats: entropy,
        final_nll,
        nll_minus_entropy: final_nll - entropy,
        learning_shortfall: final_nll - entropy > 0.1,
        parameter_count: model.parameter_count(),
        tv_model_vs_oracle,
        tv_data_vs_model_z,
        correlation_model: corr_model,
        correlation_oracle: corr_oracle,
        correlation_data: corr_data,
        xi_fit_model,
        xi_fit_oracle,
        pair_convention_boundary: pair_boundary,
        config: config.echo(),
    };
    let path = config.out_dir.join("metrics.json");
    write_json(&path, &report)?;
    println!(
        "evaluate: F={:.6} S(T)={:.6} NLL={:.6} shortfall={}",
        report.fidelity, report.shannon_entropy_nats, report.final_nll, report.learning_shortfall
    );
    Ok(path)
}

/// One repeat of a Table-1 cell.
#[derive(Clone, Debug, Serialize)]
pub struct RepeatResult {
    pub seed: u64,
    pub fidelity: f64,
    pub final_nll: f64,
    #[serde(skip)]
    pub history: TrainHistory,
}

/// Aggregated result of one (model boundary, data boundary, D) cell.
#[derive(Clone, Debug, Serialize)]
pub struct TableCell {
    pub model_boundary: Boundary,
    pub data_boundary: Boundary,
    pub bond_dim: usize,
    pub omega: usize,
    pub fidelity_max: Option<f64>,
    pub fidelity_mean: Option<f64>,
    pub status: String,
    pub repeats: Vec<RepeatResult>,
}

/// Train one cell `repeats` times with init/shuffle seeds
/// `seed_base + r` and aggregate the fidelities.
pub fn run_table_cell(
    reference: &DenseState,
    data: &Dataset,
    model_boundary: Boundary,
    bond_dim: usize,
    train_config: &TrainConfig,
    seed_base: u64,
    repeats: usize,
) -> TableCell {
    let sites = data.sites();
    let mut results = Vec::new();
    let mut errors = Vec::new();
    for r in 0..repeats {
        let seed = seed_base + r as u64;
        let run = (|| -> CliResult<RepeatResult> {
            let init = TensorTrain::near_identity(sites, bond_dim, model_boundary, seed)?;
            let config = TrainConfig {
                shuffle_seed: seed,
                ..train_config.clone()
            };
            let (model, history) = train(&init, data, &config, None)?;
            let fidelity = analysis::fidelity_to_dense(&model, reference)?;
            let final_nll = *history.epoch_dataset_nll.last().expect("epochs >= 1");
            Ok(RepeatResult {
                seed,
                fidelity,
                final_nll,
                history,
            })
        })();
        match run {
            Ok(res) => results.push(res),
            Err(e) => errors.push(format!("seed {seed}: {e}")),
        }
    }
    let (f_max, f_mean) = if results.is_empty() {
        (None, None)
    } else {
        let max = results.iter().map(|r| r.fidelity).fold(f64::MIN, f64::max);
        let mean = results.iter().map(|r| r.fidelity).sum::<f64>() / results.len() as f64;
        (Some(max), Some(mean))
    };
    TableCell {
        model_boundary,
        data_boundary: data.metadata().boundary,
        bond_dim,
        omega: parameter_count(sites, bond_dim, model_boundary),
        fidelity_max: f_max,
        fidelity_mean: f_mean,
        status: if errors.is_empty() {
            "ok".into()
        } else {
            errors.join("; ")
        },
        repeats: results,
    }
}

pub const TABLE1_BOND_DIMS: [usize; 6] = [2, 3, 4, 6, 8, 10];

/// The full fidelity-table grid: 4 boundary pairings × the bond
/// dimensions above, at the configured (γ, h, N, |T|). Rows run
/// concurrently; each repeat has its own derived seeds.
pub fn cmd_table1(
    config: &ExperimentConfig,
    repeats: usize,
    bond_dims: &[usize],
) -> CliResult<PathBuf> {
    let mut datasets: BTreeMap<&'static str, (DenseState, Dataset)> = BTreeMap::new();
    for boundary in [Boundary::Open, Boundary::Periodic] {
        let params = config.model_parameters(boundary)?;
        let (gs, _) = solve_ground_state(&params, config.seed_state)?;
        let mut state = gs.state;
        state.normalize();
        let source = format!(
            "ground_state gamma={} h={} J={} N={} boundary={boundary}",
            config.gamma, config.h, config.coupling, config.sites
        );
        let data = sample_dense(&state, config.samples, config.seed_sample, boundary, source)?;
        let key = match boundary {
            Boundary::Open => "open",
            Boundary::Periodic => "periodic",
        };
        datasets.insert(key, (state, data));
    }

    let train_config = config.train_config();
    train_config.validate()?;
    let pairings = [
        (Boundary::Open, "open"),
        (Boundary::Open, "periodic"),
        (Boundary::Periodic, "open"),
        (Boundary::Periodic, "periodic"),
    ];
    let mut jobs = Vec::new();
    for (model_boundary, data_key) in pairings {
        for &d in bond_dims {
            jobs.push((model_boundary, data_key, d));
        }
    }
    let cells: Vec<TableCell> = jobs
        .par_iter()
        .map(|&(model_boundary, data_key, d)| {
            let (state, data) = &datasets[data_key];
            run_table_cell(
                state,
                data,
                model_boundary,
                d,
                &train_config,
                config.seed_init,
                repeats,
            )
        })
        .collect();

    ensure_dir(&config.out_dir)?;
    let path = config.out_dir.join("table1.csv");
    let mut csv = String::from("model,data,D,Omega,F,F_mean,status\n");
    for cell in &cells {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            cell.model_boundary,
            cell.data_boundary,
            cell.bond_dim,
            cell.omega,
            cell.fidelity_max
                .map(|f| format!("{f:.6}"))
                .unwrap_or_default(),
            cell.fidelity_mean
                .map(|f| format!("{f:.6}"))
                .unwrap_or_default(),
            cell.status
        ));
    }
    fs::write(&path, csv)?;
    write_json(
        &config.out_dir.join("table1_config.json"),
        &serde_json::json!({
            "repeats": repeats,
            "bond_dims": bond_dims,
            "config": config.echo(),
            "artifact_version": ARTIFACT_VERSION,
        }),
    )?;
    println!("table1: {} rows -> {}", cells.len(), path.display());
    for cell in &cells {
        println!(
            "  {:>8} model / {:>8} data  D={:<2} Omega={:<4} F={}",
            cell.model_boundary.to_string(),
            cell.data_boundary.to_string(),
            cell.bond_dim,
            cell.omega,
            cell.fidelity_max
                .map(|f| format!("{f:.4}"))
                .unwrap_or_else(|| "-".into())
        );
    }
    Ok(path)
}

/// Pretty-print a metrics.json file.
pub fn cmd_report(path: &Path) -> CliResult<()> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Io(format!("{} is not valid JSON: {e}", path.display())))?;
    let get = |key: &str| value.get(key).cloned().unwrap_or(serde_json::Value::Null);
    println!("metrics report: {}", path.display());
    println!("  fidelity            {}", get("fidelity"));
    println!("  S(T) [nats]         {}", get("shannon_entropy_nats"));
    println!("  final NLL [nats]    {}", get("final_nll"));
    println!("  NLL - S(T)          {}", get("nll_minus_entropy"));
    println!("  learning shortfall  {}", get("learning_shortfall"));
    println!("  parameter count     {}", get("parameter_count"));
    if let Some(fit) = value.get("xi_fit_model") {
        println!(
            "  model xi            {}",
            fit.get("xi").cloned().unwrap_or(serde_json::Value::Null)
        );
    }
    if let Some(fit) = value.get("xi_fit_oracle") {
        println!(
            "  oracle xi           {}",
            fit.get("xi").cloned().unwrap_or(serde_json::Value::Null)
        );
    }
    println!("  TV model vs oracle  {}", get("tv_model_vs_oracle"));
    Ok(())
}
