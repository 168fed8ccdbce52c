use plg_core::distributions::{GaussianMethod, RngStream};
use plg_core::gibbs::{run_chain, ChainConfig, KernelOptions};
use plg_core::output::{column_matrix, mcse};
use plg_core::verification::{posterior_oracle_1d, OracleSpec};
use plg_core::{Dataset, GroupStructure, Hyperparameters, ModelKind};

fn data() -> Dataset {
    let x = [0.4, -1.2, 0.9, 1.7, -0.3, 0.8, -0.6];
    let y = [0.9, -1.1, 1.4, 2.2, 0.1, 0.4, -0.2];
    let rows: Vec<Vec<f64>> = x.iter().map(|v| vec![*v]).collect();
    Dataset::from_rows(y.to_vec(), &rows).unwrap()
}

fn assert_matches_oracle(model: ModelKind, kernel: KernelOptions, seed: u64) {
    let data = data();
    let hyper = Hyperparameters::new(0.8, 1.0, 2.5, 1.0);
    let groups = GroupStructure::singletons(1).unwrap();
    let oracle = posterior_oracle_1d(&data, &hyper, &OracleSpec::default()).unwrap();
    let config = ChainConfig {
        burn_in: 1_000,
        kernel,
        ..ChainConfig::new(100_000, seed)
    };
    let chain = run_chain(model, &data, &hyper, model.needs_groups().then_some(&groups), &config).unwrap();
    for (label, target) in [("beta.1", oracle.beta_mean), ("sigma2", oracle.sigma2_mean)] {
        let draws = chain.column_by_label(label).unwrap();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let se = mcse(&column_matrix(&draws), None).unwrap()[0];
        assert!((mean - target).abs() <= 3.0 * se, "{model} {label}: {mean} vs {target} (se {se})");
    }
}

#[test]
fn group_chain_matches_oracle() {
    assert_matches_oracle(ModelKind::Bgl, KernelOptions::default(), 11);
}

#[test]
fn fused_chain_matches_oracle_with_fast_sampler() {
    assert_matches_oracle(ModelKind::Bfl, KernelOptions::with_method(GaussianMethod::FastNp), 12);
}

#[test]
fn oracle_is_deterministic() {
    let hyper = Hyperparameters::new(0.8, 1.0, 2.5, 1.0);
    let a = posterior_oracle_1d(&data(), &hyper, &OracleSpec::default()).unwrap();
    let b = posterior_oracle_1d(&data(), &hyper, &OracleSpec::default()).unwrap();
    assert_eq!(a, b);
    assert!(a.rel_error < 1e-4);
}

#[test]
fn streams_reproduce() {
    let mut a = RngStream::new(3, 4);
    let mut b = RngStream::new(3, 4);
    assert_eq!(a.standard_normal(), b.standard_normal());
}
