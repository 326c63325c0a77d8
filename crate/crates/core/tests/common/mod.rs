#![allow(dead_code)]

use gpsr::data::{EncodedSequence, Step};
use gpsr::model::{
    backward_sequence, build_architecture, forward_sequence, ArchitectureConfig, ArchitectureKind, GpsrOutput, Mode, ModelParams,
    TaskLayout,
};
use gpsr::numkernel::{finite_diff_grad, relative_error, RngStream};

pub struct TinyProblem {
    pub params: ModelParams,
    pub seq: EncodedSequence,
    pub p: f64,
    pub dropout_stream: Option<(u64, u64)>,
}

/// d_in=6, h=8, e=5, three 3-class tasks, four steps (plus one masked step).
pub fn tiny_problem(seed: u64, kind: ArchitectureKind, output: GpsrOutput, p: f64, dropout: bool) -> TinyProblem {
    let layout = TaskLayout::new(vec![3, 3, 3]).unwrap();
    let mut cfg = ArchitectureConfig::new(kind, 6, 8, 5, layout);
    cfg.gpsr_output = output;
    if dropout {
        cfg.emb_dropout = 0.25;
        cfg.branch_dropout = 0.2;
    }
    let mut params = build_architecture(&cfg, seed).unwrap();
    // Nonzero biases so their gradients are exercised as well.
    let mut rng = RngStream::new(seed, 99);
    params.for_each_block_mut(|b, m| {
        if b.is_bias() {
            for v in m.as_mut_slice() {
                *v = rng.uniform_range(-0.3, 0.3);
            }
        }
    });
    let mut steps: Vec<Step> = (0..4)
        .map(|k| Step {
            time: k as f64,
            input: (0..6).map(|_| rng.uniform_range(-1.0, 1.0)).collect(),
            label: rng.bernoulli(0.5) || k == 3,
            gpsr: (0..3).map(|_| rng.int_inclusive(0, 2) as u16).collect(),
            valid: true,
        })
        .collect();
    let mut masked = steps[1].clone();
    masked.valid = false;
    steps.insert(2, masked);
    for (k, s) in steps.iter_mut().enumerate() {
        s.time = k as f64;
    }
    TinyProblem {
        params,
        seq: EncodedSequence {
            admission_id: format!("tiny-{seed}"),
            steps,
        },
        p,
        dropout_stream: dropout.then_some((seed, 7)),
    }
}

impl TinyProblem {
    fn mode_rng(&self) -> Option<RngStream> {
        self.dropout_stream.map(|(s, id)| RngStream::new(s, id))
    }

    pub fn loss(&self, params: &ModelParams) -> f64 {
        let mut rng = self.mode_rng();
        let mode = match rng.as_mut() {
            Some(r) => Mode::Train(r),
            None => Mode::Eval,
        };
        forward_sequence(&self.seq, params, self.p, mode).unwrap().loss
    }

    pub fn analytic(&self) -> ModelParams {
        let mut rng = self.mode_rng();
        let mode = match rng.as_mut() {
            Some(r) => Mode::Train(r),
            None => Mode::Eval,
        };
        backward_sequence(&self.seq, &self.params, self.p, mode).unwrap().1
    }

    /// Largest relative error between BPTT and central differences (ε = 1e-5).
    pub fn max_gradient_error(&self) -> f64 {
        let analytic = self.analytic().to_flat();
        let mut probe = self.params.clone();
        let numeric = finite_diff_grad(
            |theta| {
                probe.set_flat(theta).unwrap();
                self.loss(&probe)
            },
            &self.params.to_flat(),
            1e-5,
        )
        .unwrap();
        analytic
            .as_slice()
            .iter()
            .zip(numeric.as_slice())
            .map(|(&a, &n)| relative_error(a, n, GRAD_FLOOR))
            .fold(0.0, f64::max)
    }
}

/// Denominator floor for relative errors of near-zero gradient coordinates.
pub const GRAD_FLOOR: f64 = 1e-6;

pub fn kinds_cycle(i: usize) -> ArchitectureKind {
    ArchitectureKind::ALL[i % 5]
}

/// A few hundred short admissions with a high prior, fast enough to train
/// many times per test.
pub fn small_synthetic(seed: u64) -> gpsr::data::SyntheticConfig {
    gpsr::data::SyntheticConfig {
        seed,
        observation_classes: vec![3, 2, 3, 3, 2, 3],
        train_admissions: 160,
        valid_admissions: 60,
        test_admissions: 80,
        min_steps: 6,
        max_steps: 12,
        hazard_gain: 3.0,
        target_prior: 0.08,
        prior_band: None,
        ..Default::default()
    }
}

pub fn small_cohort(seed: u64) -> gpsr::data::Cohort {
    gpsr::data::generate_synthetic_cohort(&small_synthetic(seed)).unwrap().cohort
}

pub fn small_arch(kind: ArchitectureKind, cohort: &gpsr::data::Cohort) -> ArchitectureConfig {
    let obs = &cohort.meta.observations;
    ArchitectureConfig::new(kind, obs.input_width(), 8, 5, obs.task_layout())
}

pub fn quick_train(seed: u64) -> gpsr::experiment::TrainConfig {
    gpsr::experiment::TrainConfig {
        batch_size: 16,
        max_epochs: 4,
        patience: 2,
        seed,
        ..Default::default()
    }
}
