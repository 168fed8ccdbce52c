//! One Gibbs sweep started from an exact draw of the joint model, with the
//! response simulated from that draw, must leave the parameter distribution
//! at the prior.

use nalgebra::DMatrix;
use plg_core::distributions::RngStream;
use plg_core::gibbs::{step, KernelOptions};
use plg_core::model::State;
use plg_core::verification::{sample_joint_prior, sample_response};
use plg_core::{Dataset, GroupStructure, Hyperparameters, ModelKind};

const REPLICATES: usize = 100_000;

fn features(s: &State) -> [f64; 5] {
    let b = s.beta();
    let s2 = s.sigma2();
    [b[0], b[2] * b[2], s2.ln(), s.tau2()[0].ln(), (b[1] - b[0]).abs()]
}

struct Moments {
    sum: [f64; 5],
    sq: [f64; 5],
}

impl Moments {
    fn new() -> Self {
        Moments { sum: [0.0; 5], sq: [0.0; 5] }
    }

    fn push(&mut self, f: [f64; 5]) {
        for i in 0..5 {
            self.sum[i] += f[i];
            self.sq[i] += f[i] * f[i];
        }
    }

    fn mean_var(&self, i: usize) -> (f64, f64) {
        let n = REPLICATES as f64;
        let m = self.sum[i] / n;
        (m, (self.sq[i] / n - m * m) * n / (n - 1.0))
    }
}

fn one_step_matches_prior(model: ModelKind, seed: u64) {
    let hyper = Hyperparameters::new(1.0, 1.2, 3.0, 2.0);
    let groups = GroupStructure::new(vec![2, 1]).unwrap();
    let g = model.needs_groups().then_some(&groups);
    let mut rng = RngStream::new(seed, 0);
    let x = DMatrix::from_fn(4, 3, |_, _| rng.standard_normal());
    let mut after = Moments::new();
    let mut reference = Moments::new();
    for _ in 0..REPLICATES {
        let theta = sample_joint_prior(model, 3, &hyper, g, &mut rng).unwrap();
        let data = Dataset::new(sample_response(&x, &theta, &mut rng), x.clone()).unwrap();
        let next = step(&theta, &data, &hyper, g, &mut rng, &KernelOptions::default()).unwrap();
        after.push(features(&next));
        reference.push(features(&sample_joint_prior(model, 3, &hyper, g, &mut rng).unwrap()));
    }
    for i in 0..5 {
        let (ma, va) = after.mean_var(i);
        let (mr, vr) = reference.mean_var(i);
        let z = (ma - mr) / ((va + vr) / REPLICATES as f64).sqrt();
        assert!(z.abs() < 4.0, "{model} feature {i}: {ma} vs {mr}, z = {z}");
    }
}

#[test]
fn fused_sweep_preserves_joint() {
    one_step_matches_prior(ModelKind::Bfl, 1);
}

#[test]
fn group_sweep_preserves_joint() {
    one_step_matches_prior(ModelKind::Bgl, 2);
}

#[test]
fn sparse_group_sweep_preserves_joint() {
    one_step_matches_prior(ModelKind::Bsgl, 3);
}
