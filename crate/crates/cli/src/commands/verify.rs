use nalgebra::{DMatrix, DVector};
use plg_core::distributions::RngStream;
use plg_core::ergodicity::empirical_drift_check;
use plg_core::gibbs::{initial_state, run_chain, ChainConfig, InitMode, KernelOptions};
use plg_core::model::{FusedState, GroupState, SparseGroupState, State};
use plg_core::output::{column_matrix, mcse};
use plg_core::verification::{
    fused_marginal_prior_check, fused_prior_propriety_check, geweke_joint_test,
    posterior_oracle_1d, sigma2_entry_invariance_check, CheckResult, GewekeConfig, OracleSpec,
    Statistic,
};
use plg_core::{Dataset, GroupStructure, Hyperparameters, ModelKind};
use rand::Rng;

use crate::args::{Suite, VerifyArgs};
use crate::error::Result;
use crate::io::write_json;
use crate::reports::{VerifyReport, SCHEMA_VERSION};

const MODELS: [ModelKind; 3] = [ModelKind::Bfl, ModelKind::Bgl, ModelKind::Bsgl];

fn statistic(name: impl Into<String>, value: f64, threshold: f64, estimate: f64, reference: f64) -> Statistic {
    Statistic {
        name: name.into(),
        value,
        threshold,
        passed: value.abs() <= threshold,
        estimate: Some(estimate),
        reference: Some(reference),
    }
}

fn check(name: impl Into<String>, statistics: Vec<Statistic>) -> CheckResult {
    CheckResult {
        name: name.into(),
        passed: statistics.iter().all(|s| s.passed),
        statistics,
        notes: Vec::new(),
    }
}

fn geweke_suite(args: &VerifyArgs, kernel: &KernelOptions, rng: &RngStream) -> Result<Vec<CheckResult>> {
    let hyper = Hyperparameters::new(1.0, 1.2, 3.0, 2.0);
    let groups = GroupStructure::new(vec![2, 1])?;
    let config = GewekeConfig {
        replicates: args.replicates,
        ..GewekeConfig::default()
    };
    let mut out = Vec::new();
    for (i, model) in MODELS.into_iter().enumerate() {
        let g = model.needs_groups().then_some(&groups);
        out.push(geweke_joint_test(model, 4, 3, g, &hyper, &config, kernel, &rng.split(i as u64))?);
        out.push(sigma2_entry_invariance_check(model, 4, 3, g, &hyper, kernel, 100, &rng.split(10 + i as u64))?);
    }
    Ok(out)
}

fn prior_suite(args: &VerifyArgs, rng: &RngStream) -> Result<Vec<CheckResult>> {
    let mut out = vec![
        fused_prior_propriety_check(1, 1.0, 1.0, args.mc_samples, &rng.split(0))?,
        fused_prior_propriety_check(3, 1.0, 1.0, args.mc_samples, &rng.split(1))?,
    ];
    let mut pairs_rng = rng.split(2);
    for p in [1usize, 2] {
        let point = |r: &mut RngStream| -> Vec<f64> { (0..p).map(|_| 1.5 * r.standard_normal()).collect() };
        let pairs: Vec<_> = (0..10).map(|_| (point(&mut pairs_rng), point(&mut pairs_rng))).collect();
        out.push(fused_marginal_prior_check(p, 1.3, 0.8, 0.7, &pairs, args.mc_samples, &rng.split(3 + p as u64))?);
    }
    Ok(out)
}

fn random_state(model: ModelKind, beta_scale: f64, groups: &GroupStructure, rng: &mut RngStream) -> State {
    let p = groups.p();
    let beta: Vec<f64> = (0..p).map(|_| beta_scale * rng.standard_normal()).collect();
    let mut scales = |len: usize| -> Vec<f64> { (0..len).map(|_| 10f64.powf(rng.random_range(-2.0..2.0))).collect() };
    match model {
        ModelKind::Bfl => State::Bfl(FusedState {
            tau2: scales(p),
            w2: scales(p - 1),
            beta,
            sigma2: 1.0,
        }),
        ModelKind::Bgl => State::Bgl(GroupState {
            tau2: scales(groups.k()),
            beta,
            sigma2: 1.0,
        }),
        ModelKind::Bsgl => State::Bsgl(SparseGroupState {
            tau2: scales(groups.k()),
            gamma2: scales(p),
            beta,
            sigma2: 1.0,
        }),
    }
}

fn drift_suite(rng: &RngStream) -> Result<Vec<CheckResult>> {
    let mut r = rng.split(0);
    let x = DMatrix::from_fn(15, 4, |_, _| r.standard_normal());
    let truth = DVector::from_column_slice(&[1.0, -0.5, 0.0, 2.0]);
    let y = &x * truth + DVector::from_fn(15, |_, _| 0.5 * r.standard_normal());
    let data = Dataset::new(y, x)?;
    let groups = GroupStructure::new(vec![2, 2])?;
    let hyper = Hyperparameters::new(1.5, 1.0, 1.0, 1.0);
    let mut out = Vec::new();
    for (i, model) in MODELS.into_iter().enumerate() {
        let g = model.needs_groups().then_some(&groups);
        let mut states = vec![initial_state(model, &data, &hyper, g, &InitMode::Default)?];
        for _ in 0..20 {
            let scale = 10f64.powf(r.random_range(-2.0..1.0));
            states.push(random_state(model, scale, &groups, &mut r));
        }
        let result = empirical_drift_check(model, &states, &data, &hyper, g, 1_000, &rng.split(1 + i as u64))?;
        let statistics = result
            .rows
            .iter()
            .enumerate()
            .map(|(s, row)| Statistic {
                name: if s == 0 { "default_start".into() } else { format!("state{s}") },
                value: (row.expected_next_v - row.bound) / row.mc_se.max(f64::MIN_POSITIVE),
                threshold: 3.0,
                passed: row.satisfied,
                estimate: Some(row.expected_next_v),
                reference: Some(row.bound),
            })
            .collect();
        let mut c = check(format!("empirical_drift_{model}"), statistics);
        c.notes.push(format!("phi = {}, L = {}, {} replicates per state", result.phi, result.l, result.replicates));
        out.push(c);
    }
    Ok(out)
}

fn oracle_suite(args: &VerifyArgs, kernel: &KernelOptions, rng: &RngStream) -> Result<Vec<CheckResult>> {
    let mut r = rng.split(0);
    let x: Vec<Vec<f64>> = (0..6).map(|_| vec![r.standard_normal()]).collect();
    let y: Vec<f64> = x.iter().map(|row| 0.8 * row[0] + 0.7 * r.standard_normal()).collect();
    let data = Dataset::from_rows(y, &x)?;
    let hyper = Hyperparameters::new(1.1, 1.0, 2.0, 1.5);
    let groups = GroupStructure::singletons(1)?;
    let oracle = posterior_oracle_1d(&data, &hyper, &OracleSpec::default())?;
    let mut out = Vec::new();
    for (i, model) in [ModelKind::Bfl, ModelKind::Bgl].into_iter().enumerate() {
        let config = ChainConfig {
            burn_in: args.oracle_iters / 100,
            kernel: *kernel,
            stream_id: 1 + i as u64,
            ..ChainConfig::new(args.oracle_iters, args.seed)
        };
        let chain = run_chain(model, &data, &hyper, model.needs_groups().then_some(&groups), &config)?;
        let mut statistics = Vec::new();
        for (label, target) in [("beta.1", oracle.beta_mean), ("sigma2", oracle.sigma2_mean)] {
            let draws = chain.column_by_label(label).expect("label exists");
            let mean = draws.iter().sum::<f64>() / draws.len() as f64;
            let se = mcse(&column_matrix(&draws), None)?[0];
            statistics.push(statistic(format!("{label}_mean"), (mean - target) / se, 3.0, mean, target));
        }
        out.push(check(format!("posterior_oracle_{model}"), statistics));
    }
    Ok(out)
}

/// Runs the requested suites and writes the report; returns whether every
/// check passed.
pub fn verify(args: &VerifyArgs) -> Result<bool> {
    let kernel = KernelOptions {
        mutation: args.mutation,
        ..KernelOptions::default()
    };
    let root = RngStream::new(args.seed, 0);
    let wanted = |s: Suite| args.suite == Suite::All || args.suite == s;
    let mut checks = Vec::new();
    if wanted(Suite::Geweke) {
        checks.extend(geweke_suite(args, &kernel, &root.split(1))?);
    }
    if wanted(Suite::Prior) {
        checks.extend(prior_suite(args, &root.split(2))?);
    }
    if wanted(Suite::Drift) {
        checks.extend(drift_suite(&root.split(3))?);
    }
    if wanted(Suite::Oracle) {
        checks.extend(oracle_suite(args, &kernel, &root.split(4))?);
    }
    let passed = checks.iter().all(|c| c.passed);
    for c in &checks {
        println!("{} {}", if c.passed { "PASS" } else { "FAIL" }, c.name);
    }
    write_json(
        &args.out,
        &VerifyReport {
            schema_version: SCHEMA_VERSION.into(),
            suite: args.suite.name().into(),
            seed: args.seed,
            mutation: args.mutation.map(|m| m.as_str().to_string()),
            passed,
            checks,
        },
    )?;
    Ok(passed)
}
