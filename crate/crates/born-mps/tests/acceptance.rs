//! Acceptance suite: one test per criterion, each printing a
//! `[criterion N] PASS/FAIL` line (visible with `-- --nocapture`).
//!
//! Training-based criteria share fixed, pre-registered seeds; every run
//! is bit-deterministic, so the printed numbers are reproducible.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use born_mps::analysis::{
    chi_square_pvalue, correlation_function, fidelity_to_dense, fit_correlation_length,
    shannon_entropy, CorrelationSource,
};
use born_mps::cli::commands::{run_table_cell, TableCell};
use born_mps::mps::{parameter_count, MeasurementBasis, SpinConfiguration, TensorTrain};
use born_mps::sampler::{empirical_distribution, sample_dense, sample_tensor_train, Dataset};
use born_mps::spin_model::{
    ground_state_dense, ground_state_lanczos, Boundary, DenseState, ModelParameters,
};
use born_mps::training::{nll_gradient, nll_loss, train, TrainConfig, TrainHistory};

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

fn check(criterion: &str, ok: bool, detail: &str) {
    println!(
        "[criterion {criterion}] {}: {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "[criterion {criterion}] FAIL: {detail}");
}

fn critical_params(boundary: Boundary) -> ModelParameters {
    ModelParameters::new(1.0, 1.0, 1.0, 13, boundary).unwrap()
}

fn normalized_ground_state(params: &ModelParameters) -> DenseState {
    let mut gs = ground_state_lanczos(params).unwrap();
    gs.state.normalize();
    gs.state
}

fn random_train(sites: usize, bond_dim: usize, boundary: Boundary, seed: u64) -> TensorTrain<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let tensors = (0..sites)
        .map(|k| {
            let dl = match boundary {
                Boundary::Periodic => bond_dim,
                Boundary::Open if k == 0 => 1,
                Boundary::Open => bond_dim,
            };
            let dr = match boundary {
                Boundary::Periodic => bond_dim,
                Boundary::Open if k == sites - 1 => 1,
                Boundary::Open => bond_dim,
            };
            Array3::from_shape_fn((dl, 2, dr), |_| rng.gen::<f64>() - 0.5)
        })
        .collect();
    TensorTrain::from_tensors(boundary, bond_dim, tensors).unwrap()
}

/// Criterion 2 context: the five Table-1 cells at |T| = 10000, 20
/// epochs, batch 200, learning rate 0.01, repeats over seeds 7..=10.
struct TableContext {
    cells: BTreeMap<&'static str, TableCell>,
    open_entropy: f64,
    periodic_entropy: f64,
}

fn table_context() -> &'static TableContext {
    static CTX: OnceLock<TableContext> = OnceLock::new();
    CTX.get_or_init(|| {
        let mut datasets: BTreeMap<Boundary, (DenseState, Dataset)> = BTreeMap::new();
        for boundary in [Boundary::Open, Boundary::Periodic] {
            let state = normalized_ground_state(&critical_params(boundary));
            let data = sample_dense(&state, 10_000, 42, boundary, "ed").unwrap();
            datasets.insert(boundary, (state, data));
        }
        let config = TrainConfig {
            learning_rate: 0.01,
            ..TrainConfig::default()
        };
        let specs = [
            ("oo2", Boundary::Open, Boundary::Open, 2),
            ("oo4", Boundary::Open, Boundary::Open, 4),
            ("pp2", Boundary::Periodic, Boundary::Periodic, 2),
            ("pp3", Boundary::Periodic, Boundary::Periodic, 3),
            ("pp4", Boundary::Periodic, Boundary::Periodic, 4),
            ("op2", Boundary::Open, Boundary::Periodic, 2),
        ];
        let mut cells = BTreeMap::new();
        for (name, model_b, data_b, d) in specs {
            let (state, data) = &datasets[&data_b];
            cells.insert(name, run_table_cell(state, data, model_b, d, &config, 7, 4));
        }
        TableContext {
            cells,
            open_entropy: shannon_entropy(&datasets[&Boundary::Open].1).unwrap(),
            periodic_entropy: shannon_entropy(&datasets[&Boundary::Periodic].1).unwrap(),
        }
    })
}

/// Criteria 3/4/8 context: the showcase runs at |T| = 30000, D = 4,
/// open/open, library-default optimizer, seed 11.
struct ShowcaseContext {
    critical_model: TensorTrain<f64>,
    critical_state: DenseState,
    critical_history: TrainHistory,
    critical_entropy: f64,
    oscillatory_history: TrainHistory,
    oscillatory_entropy: f64,
}

fn showcase_context() -> &'static ShowcaseContext {
    static CTX: OnceLock<ShowcaseContext> = OnceLock::new();
    CTX.get_or_init(|| {
        let config = TrainConfig {
            shuffle_seed: 11,
            ..TrainConfig::default()
        };
        let run = |gamma: f64, h: f64| {
            let params = ModelParameters::new(1.0, gamma, h, 13, Boundary::Open).unwrap();
            let state = normalized_ground_state(&params);
            let data = sample_dense(&state, 30_000, 42, Boundary::Open, "ed").unwrap();
            let init = TensorTrain::near_identity(13, 4, Boundary::Open, 11).unwrap();
            let (model, history) = train(&init, &data, &config, None).unwrap();
            let entropy = shannon_entropy(&data).unwrap();
            (model, state, history, entropy)
        };
        let (critical_model, critical_state, critical_history, critical_entropy) = run(1.0, 1.0);
        let (_, _, oscillatory_history, oscillatory_entropy) = run(0.5, 0.5);
        ShowcaseContext {
            critical_model,
            critical_state,
            critical_history,
            critical_entropy,
            oscillatory_history,
            oscillatory_entropy,
        }
    })
}

#[test]
fn criterion_1_parameter_count_table() {
    let rows: [(usize, usize, usize); 6] = [
        (2, 96, 104),
        (3, 210, 234),
        (4, 368, 416),
        (6, 816, 936),
        (8, 1440, 1664),
        (10, 2240, 2600),
    ];
    let mut all_ok = true;
    for (d, open, periodic) in rows {
        all_ok &= parameter_count(13, d, Boundary::Open) == open;
        all_ok &= parameter_count(13, d, Boundary::Periodic) == periodic;
    }
    check(
        "1",
        all_ok,
        "all 24 (model, D) -> Omega values match exactly (open D=2 -> 96, periodic D=10 -> 2600)",
    );
}

#[test]
fn criterion_2_table1_fidelity_bands() {
    let ctx = table_context();
    let f = |name: &str| ctx.cells[name].fidelity_max.unwrap();
    let oo2 = f("oo2");
    let oo4 = f("oo4");
    let pp3 = f("pp3");
    let pp4 = f("pp4");
    let pp2 = f("pp2");
    let op2 = f("op2");
    let ok = oo2 >= 0.97
        && oo4 >= 0.985
        && pp3 >= 0.985
        && pp4 >= 0.985
        && op2 <= 0.95
        && (pp2 - op2) >= 0.05;
    check(
        "2",
        ok,
        &format!(
            "open/open D=2 F={oo2:.4} (>=0.97), open/open D=4 F={oo4:.4} (>=0.985), \
             periodic/periodic D=3 F={pp3:.4} (>=0.985), periodic/periodic D=4 F={pp4:.4} \
             (>=0.985), open/periodic D=2 F={op2:.4} \
             (<=0.95 and {:.4} below periodic/periodic D=2 F={pp2:.4})",
            pp2 - op2
        ),
    );
}

#[test]
fn criterion_3_critical_point_showcase() {
    let ctx = showcase_context();
    let f = fidelity_to_dense(&ctx.critical_model, &ctx.critical_state).unwrap();
    let final_nll = *ctx.critical_history.epoch_dataset_nll.last().unwrap();
    let gap = final_nll - ctx.critical_entropy;
    let ok = f > 0.99 && gap.abs() < 0.05;
    check(
        "3",
        ok,
        &format!("critical point D=4 |T|=30000: F={f:.4} (>0.99), NLL-S(T)={gap:.4} (|.|<0.05)"),
    );
}

#[test]
fn criterion_4_oscillatory_shortfall() {
    let ctx = showcase_context();
    let final_nll = *ctx.oscillatory_history.epoch_dataset_nll.last().unwrap();
    let gap = final_nll - ctx.oscillatory_entropy;
    check(
        "4",
        gap > 0.1,
        &format!("oscillatory point (0.5, 0.5): NLL-S(T)={gap:.4} (>0.1 nats)"),
    );
}

#[test]
fn criterion_5_gradient_oracle() {
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    for &boundary in &[Boundary::Open, Boundary::Periodic] {
        for trial in 0..20u64 {
            let n = 2 + (trial as usize) % 4; // 2..=5
            let d = 1 + (trial as usize) % 3; // 1..=3
            let tt = random_train(n, d, boundary, 1000 + trial);
            let mut rng = ChaCha12Rng::seed_from_u64(2000 + trial);
            let batch: Vec<SpinConfiguration> = (0..6)
                .map(|_| SpinConfiguration::from_index(rng.gen_range(0..1usize << n), n))
                .collect();
            let grad = nll_gradient(&tt, &batch).unwrap();
            let config = TrainConfig::default();
            let step = 1e-5;
            for site in 0..n {
                let dims = tt.tensor(site).dim();
                for l in 0..dims.0 {
                    for s in 0..dims.1 {
                        for r in 0..dims.2 {
                            let mut plus = tt.clone();
                            plus.tensors_mut()[site][(l, s, r)] += step;
                            let mut minus = tt.clone();
                            minus.tensors_mut()[site][(l, s, r)] -= step;
                            let lp = nll_loss(&plus, &batch, &config, 0).unwrap().nll;
                            let lm = nll_loss(&minus, &batch, &config, 0).unwrap().nll;
                            let fd = (lp - lm) / (2.0 * step);
                            let an = grad.tensors()[site][(l, s, r)];
                            let rel = (an - fd).abs() / fd.abs().max(1e-8);
                            worst = worst.max(rel);
                            checked += 1;
                            assert!(
                                rel < 1e-5,
                                "[criterion 5] FAIL: {boundary} trial {trial} site {site} \
                                 ({l},{s},{r}): analytic {an} vs fd {fd} (rel {rel:.2e})"
                            );
                        }
                    }
                }
            }
        }
    }
    check(
        "5",
        true,
        &format!("{checked} coordinates across 40 trains match finite differences (worst rel {worst:.2e})"),
    );
}

#[test]
fn criterion_6_sampler_exactness() {
    let mut worst_tv: f64 = 0.0;
    let mut chi_square_failures = 0usize;
    for &boundary in &[Boundary::Open, Boundary::Periodic] {
        // ten random trains: TV(empirical, exact) < 0.01 at n = 200000
        for trial in 0..10u64 {
            let tt = random_train(6, 3, boundary, 3000 + trial);
            let data =
                sample_tensor_train(&tt, 200_000, 500 + trial, MeasurementBasis::Z, "tt").unwrap();
            let emp = empirical_distribution(&data).unwrap();
            let dense = tt.to_dense().unwrap();
            let z: f64 = dense.iter().map(|a| a * a).sum();
            let tv: f64 = dense
                .iter()
                .enumerate()
                .map(|(v, a)| (emp.frequency(v) - a * a / z).abs())
                .sum::<f64>()
                / 2.0;
            worst_tv = worst_tv.max(tv);
            assert!(
                tv < 0.01,
                "[criterion 6] FAIL: {boundary} trial {trial}: TV = {tv:.4}"
            );
        }
        // twenty seeded trials of the chi-square test on one train
        let tt = random_train(6, 3, boundary, 4000);
        let dense = tt.to_dense().unwrap();
        let z: f64 = dense.iter().map(|a| a * a).sum();
        let probs: Vec<f64> = dense.iter().map(|a| a * a / z).collect();
        for seed in 0..20u64 {
            let data =
                sample_tensor_train(&tt, 200_000, 600 + seed, MeasurementBasis::Z, "tt").unwrap();
            let mut observed = vec![0u64; probs.len()];
            for (k, c) in data.counts() {
                observed[k] = c as u64;
            }
            if chi_square_pvalue(&observed, &probs) <= 0.001 {
                chi_square_failures += 1;
            }
        }
    }
    let ok = chi_square_failures <= 2; // one allowed per boundary kind
    check(
        "6",
        ok,
        &format!(
            "worst TV over 20 trains = {worst_tv:.4} (<0.01); chi-square p>0.001 failures: \
             {chi_square_failures}/40 (allowance 1 per 20)"
        ),
    );
}

#[test]
fn criterion_7_ground_state_oracle_agreement() {
    let presets = [(1.0, 1.0), (1.5, 0.5), (2.0, 2.0), (0.5, 0.5)];
    let mut worst: f64 = 0.0;
    for (gamma, h) in presets {
        for n in [8usize, 10, 12] {
            for boundary in [Boundary::Open] {
                let p = ModelParameters::new(1.0, gamma, h, n, boundary).unwrap();
                let dense = ground_state_dense(&p).unwrap();
                let lanczos = ground_state_lanczos(&p).unwrap();
                let diff = (dense.energy - lanczos.energy).abs();
                worst = worst.max(diff);
                assert!(
                    diff < 1e-8,
                    "[criterion 7] FAIL: gamma={gamma} h={h} N={n}: dense {} vs lanczos {}",
                    dense.energy,
                    lanczos.energy
                );
            }
        }
    }
    let p2 = ModelParameters::new(1.0, 1.0, 1.0, 2, Boundary::Open).unwrap();
    let e2 = ground_state_dense(&p2).unwrap().energy;
    let exact = -5.0f64.sqrt() / 2.0;
    let ok = (e2 - exact).abs() < 1e-12;
    check(
        "7",
        ok,
        &format!(
            "dense vs Lanczos agree to {worst:.2e} over 4 presets x N in {{8,10,12}}; \
             N=2 Ising-critical energy {e2:.12} = -sqrt(5)/2 to 1e-12"
        ),
    );
}

#[test]
fn criterion_8_correlation_pipeline() {
    let ctx = showcase_context();
    let r_max = 6;
    let corr_model = correlation_function(
        CorrelationSource::Train(&ctx.critical_model),
        Boundary::Open,
        r_max,
    )
    .unwrap();
    let corr_oracle = correlation_function(
        CorrelationSource::Dense(&ctx.critical_state),
        Boundary::Open,
        r_max,
    )
    .unwrap();
    let mut max_diff: f64 = 0.0;
    for (m, o) in corr_model.points.iter().zip(&corr_oracle.points) {
        max_diff = max_diff.max((m.g - o.g).abs());
    }
    let fit_model = fit_correlation_length(&corr_model).unwrap();
    let fit_oracle = fit_correlation_length(&corr_oracle).unwrap();
    let xi_m = fit_model.xi.unwrap();
    let xi_o = fit_oracle.xi.unwrap();
    let rel = (xi_m - xi_o).abs() / xi_o;
    let ok = max_diff < 0.02 && rel < 0.15;
    check(
        "8",
        ok,
        &format!(
            "max |G_model - G_oracle| = {max_diff:.4} for r<=6 (<0.02); \
             xi_model={xi_m:.3} vs xi_oracle={xi_o:.3} ({:.1}% < 15%)",
            rel * 100.0
        ),
    );
}

#[test]
fn criterion_9_loss_lower_bound() {
    let table = table_context();
    let showcase = showcase_context();
    let mut checked = 0usize;
    let mut ok = true;
    for (name, cell) in &table.cells {
        let entropy = match cell.data_boundary {
            Boundary::Open => table.open_entropy,
            Boundary::Periodic => table.periodic_entropy,
        };
        for repeat in &cell.repeats {
            for (epoch, nll) in repeat.history.epoch_dataset_nll.iter().enumerate() {
                ok &= *nll >= entropy - 1e-9;
                checked += 1;
                assert!(
                    *nll >= entropy - 1e-9,
                    "[criterion 9] FAIL: cell {name} seed {} epoch {epoch}: NLL {nll} < S {entropy}",
                    repeat.seed
                );
            }
        }
    }
    for (history, entropy) in [
        (&showcase.critical_history, showcase.critical_entropy),
        (&showcase.oscillatory_history, showcase.oscillatory_entropy),
    ] {
        for nll in &history.epoch_dataset_nll {
            ok &= *nll >= entropy - 1e-9;
            checked += 1;
        }
    }
    check(
        "9",
        ok,
        &format!("full-dataset NLL >= S_emp(T) - 1e-9 at all {checked} epoch boundaries"),
    );
}

#[test]
fn criterion_10_determinism() {
    // a full pipeline, twice, in a one-thread pool: loss traces must be
    // bit-exact and the metrics JSON byte-identical
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let run_once = || {
        let params = ModelParameters::new(1.0, 1.0, 1.0, 9, Boundary::Periodic).unwrap();
        let mut gs = ground_state_dense(&params).unwrap();
        gs.state.normalize();
        let data = sample_dense(&gs.state, 2000, 5, Boundary::Periodic, "ed").unwrap();
        let init = TensorTrain::near_identity(9, 2, Boundary::Periodic, 3).unwrap();
        let config = TrainConfig {
            epochs: 5,
            learning_rate: 0.01,
            shuffle_seed: 3,
            ..TrainConfig::default()
        };
        let (model, history) = train(&init, &data, &config, Some(&gs.state)).unwrap();
        let report = serde_json::json!({
            "fidelity": fidelity_to_dense(&model, &gs.state).unwrap(),
            "entropy": shannon_entropy(&data).unwrap(),
            "epoch_nll": history.epoch_dataset_nll,
        });
        let bits: Vec<u64> = history
            .step_losses
            .iter()
            .map(|s| s.nll.to_bits())
            .collect();
        (bits, serde_json::to_string(&report).unwrap())
    };
    let (bits_a, json_a) = pool.install(run_once);
    let (bits_b, json_b) = pool.install(run_once);
    // and once on the default multi-thread pool: the chunked reductions
    // keep even this bit-identical
    let (bits_c, _) = run_once();
    let ok = bits_a == bits_b && json_a == json_b && bits_a == bits_c;
    check(
        "10",
        ok,
        &format!(
            "loss traces bit-exact across reruns ({} steps) and thread counts; report JSON byte-identical",
            bits_a.len()
        ),
    );
}

/// Extended suite (opt-in, slow): boundary sensitivity at N = 19 with
/// limited data and a small bond dimension. Run with
/// `cargo test --release --test acceptance -- --ignored --nocapture`.
#[test]
#[ignore = "slow: N=19 Lanczos plus four training runs"]
fn extended_n19_boundary_sensitivity() {
    let mut fidelities: BTreeMap<(Boundary, Boundary), f64> = BTreeMap::new();
    for data_boundary in [Boundary::Open, Boundary::Periodic] {
        let params = ModelParameters::new(1.0, 1.0, 1.0, 19, data_boundary).unwrap();
        let state = normalized_ground_state(&params);
        let data = sample_dense(&state, 30_000, 42, data_boundary, "ed").unwrap();
        for model_boundary in [Boundary::Open, Boundary::Periodic] {
            let init = TensorTrain::near_identity(19, 2, model_boundary, 11).unwrap();
            let config = TrainConfig {
                learning_rate: 0.01,
                shuffle_seed: 11,
                ..TrainConfig::default()
            };
            let (model, _) = train(&init, &data, &config, None).unwrap();
            let f = fidelity_to_dense(&model, &state).unwrap();
            println!("  N=19 D=2 model={model_boundary} data={data_boundary}: F={f:.4}");
            fidelities.insert((model_boundary, data_boundary), f);
        }
    }
    let mut ok = true;
    for data_boundary in [Boundary::Open, Boundary::Periodic] {
        let matched = fidelities[&(data_boundary, data_boundary)];
        let opposite = match data_boundary {
            Boundary::Open => Boundary::Periodic,
            Boundary::Periodic => Boundary::Open,
        };
        let mismatched = fidelities[&(opposite, data_boundary)];
        ok &= matched > 0.90 && matched - mismatched >= 0.1;
        println!(
            "  data={data_boundary}: F_matched={matched:.4} F_mismatched={mismatched:.4} \
             (matched > 0.90, gap >= 0.1)"
        );
    }
    check(
        "extended",
        ok,
        "N=19 D=2 |T|=30000 boundary-matching advantage",
    );
}
