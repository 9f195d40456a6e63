//! Loss regularization, the accumulated-squared-gradient update and the
//! epoch loop with best-dev selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tbm_autodiff::Tensor;

use crate::data::DialogueFragment;
use crate::model::{Prepared, TbmModel};
use crate::params::ParamStore;
use crate::{Error, Result};

/// Guard under the square root of the update.
pub const EPSILON: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// L2 weight λ.
    pub lambda: f64,
    /// Initial learning rate μ.
    pub mu: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub max_target_len: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 1e-5,
            mu: 0.1,
            epochs: 30,
            batch_size: 8,
            max_target_len: 40,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda.is_nan() || self.lambda < 0.0 || self.lambda.is_infinite() {
            return Err(Error::Config(format!("train.lambda must be >= 0, got {}", self.lambda)));
        }
        if self.mu.is_nan() || self.mu <= 0.0 || self.mu.is_infinite() {
            return Err(Error::Config(format!("train.mu must be > 0, got {}", self.mu)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be at least 1".into()));
        }
        if self.max_target_len == 0 {
            return Err(Error::Config("train.max_target_len must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-parameter running sum of squared gradients `G`.
#[derive(Clone, Debug, PartialEq)]
pub struct Accumulator {
    pub g: Vec<Tensor>,
}

impl Accumulator {
    pub fn new(params: &ParamStore) -> Self {
        Accumulator {
            g: params.values().iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }
}

/// Adds `λ‖δ‖²` to the objective: accumulates `2λδ` into `grads` and returns
/// the penalty value.
pub fn regularize(params: &ParamStore, grads: &mut [Tensor], lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    for (g, p) in grads.iter_mut().zip(params.values()) {
        for (gv, pv) in g.data_mut().iter_mut().zip(p.data()) {
            *gv += 2.0 * lambda * pv;
        }
    }
    lambda * params.sum_squares()
}

/// `G += f²; δ −= μ·f/√(G + ε)`, elementwise. Every gradient is checked
/// before any parameter moves.
pub fn optimizer_step(params: &mut ParamStore, grads: &[Tensor], state: &mut Accumulator, mu: f64) -> Result<()> {
    for (p, g) in grads.iter().enumerate() {
        if let Some(index) = g.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient {
                name: params.names()[p].clone(),
                index,
            });
        }
    }
    for ((p, g), acc) in params.values_mut().iter_mut().zip(grads).zip(&mut state.g) {
        for ((d, &f), gsum) in p.data_mut().iter_mut().zip(g.data()).zip(acc.data_mut()) {
            *gsum += f * f;
            *d -= mu * f / (*gsum + EPSILON).sqrt();
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean NLL per target token over the epoch's training steps.
    pub train_nll: f64,
    /// Mean NLL per target token on the dev split after the epoch.
    pub dev_nll: Option<f64>,
}

impl EpochStats {
    /// `epoch=K train_nll=… dev_nll=…`
    pub fn log_line(&self) -> String {
        let dev = self.dev_nll.map_or_else(|| "nan".to_string(), |d| format!("{d:.6}"));
        format!("epoch={} train_nll={:.6} dev_nll={dev}", self.epoch, self.train_nll)
    }
}

pub fn prepare_all(model: &TbmModel, fragments: &[DialogueFragment], max_target_len: usize) -> Result<Vec<Prepared>> {
    fragments
        .iter()
        .map(|f| model.prepare_fragment(f, max_target_len))
        .collect()
}

/// Mean NLL per target token. Fragments are scored in parallel and summed in
/// order.
pub fn mean_nll(model: &TbmModel, prepared: &[Prepared]) -> Result<f64> {
    let scores = prepared
        .par_iter()
        .map(|p| Ok((model.nll(p)?, p.target.len())))
        .collect::<Result<Vec<_>>>()?;
    let (nll, tokens) = scores.iter().fold((0.0, 0usize), |(a, n), (b, m)| (a + b, n + m));
    Ok(nll / tokens.max(1) as f64)
}

/// Optimizer state and data order of one run.
pub struct Trainer {
    pub model: TbmModel,
    pub config: TrainConfig,
    pub state: Accumulator,
    rng: ChaCha8Rng,
    epoch: usize,
}

impl Trainer {
    pub fn new(model: TbmModel, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let state = Accumulator::new(&model.params);
        Ok(Trainer {
            model,
            config,
            state,
            rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed),
            epoch: 0,
        })
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// One step on one batch: summed fragment gradients plus the L2 term.
    /// Returns the batch NLL (without the penalty) and its token count.
    pub fn step(&mut self, batch: &[&Prepared]) -> Result<(f64, usize)> {
        let model = &self.model;
        let parts = batch
            .par_iter()
            .map(|p| model.nll_and_grad(p))
            .collect::<Result<Vec<_>>>()?;
        let mut nll = 0.0;
        let mut tokens = 0;
        let mut grads: Vec<Tensor> = Vec::new();
        for part in parts {
            nll += part.nll;
            tokens += part.tokens;
            if grads.is_empty() {
                grads = part.grads;
            } else {
                for (acc, g) in grads.iter_mut().zip(&part.grads) {
                    for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                        *a += b;
                    }
                }
            }
        }
        if !nll.is_finite() {
            return Err(Error::Divergence {
                epoch: self.epoch + 1,
                detail: format!("batch loss is {nll}"),
            });
        }
        regularize(&self.model.params, &mut grads, self.config.lambda);
        optimizer_step(&mut self.model.params, &grads, &mut self.state, self.config.mu).map_err(|e| {
            Error::Divergence {
                epoch: self.epoch + 1,
                detail: e.to_string(),
            }
        })?;
        Ok((nll, tokens))
    }

    /// One shuffled pass over `train`; returns mean NLL per token.
    pub fn run_epoch(&mut self, train: &[Prepared]) -> Result<f64> {
        if train.is_empty() {
            return Err(Error::Invalid("training split is empty".into()));
        }
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut self.rng);
        let mut nll = 0.0;
        let mut tokens = 0;
        for chunk in order.chunks(self.config.batch_size) {
            let batch: Vec<&Prepared> = chunk.iter().map(|&i| &train[i]).collect();
            let (n, t) = self.step(&batch)?;
            nll += n;
            tokens += t;
        }
        self.epoch += 1;
        Ok(nll / tokens.max(1) as f64)
    }
}

/// Result of [`train`].
pub struct TrainOutcome {
    /// Parameters with the lowest dev NLL (train NLL when there is no dev split).
    pub best: TbmModel,
    pub best_epoch: usize,
    pub last: TbmModel,
    pub log: Vec<EpochStats>,
}

/// Observer called after every epoch with the stats, the current model and
/// whether it is the new best.
pub trait EpochObserver {
    fn epoch_done(&mut self, stats: &EpochStats, model: &TbmModel, is_best: bool) -> Result<()>;
}

impl<F> EpochObserver for F
where
    F: FnMut(&EpochStats, &TbmModel, bool) -> Result<()>,
{
    fn epoch_done(&mut self, stats: &EpochStats, model: &TbmModel, is_best: bool) -> Result<()> {
        self(stats, model, is_best)
    }
}

/// Runs `config.epochs` epochs (or until `stop` returns true).
pub fn train(
    model: TbmModel,
    train: &[DialogueFragment],
    dev: &[DialogueFragment],
    config: TrainConfig,
    observer: &mut dyn EpochObserver,
    stop: &dyn Fn(&EpochStats) -> bool,
) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(Error::Invalid("training split is empty".into()));
    }
    let mut trainer = Trainer::new(model, config)?;
    let train_prep = prepare_all(&trainer.model, train, config.max_target_len)?;
    let dev_prep = prepare_all(&trainer.model, dev, config.max_target_len)?;
    let mut best: Option<(f64, usize, TbmModel)> = None;
    let mut log = Vec::new();
    for _ in 0..config.epochs {
        let train_nll = trainer.run_epoch(&train_prep)?;
        let dev_nll = if dev_prep.is_empty() {
            None
        } else {
            Some(mean_nll(&trainer.model, &dev_prep)?)
        };
        let stats = EpochStats {
            epoch: trainer.epoch(),
            train_nll,
            dev_nll,
        };
        if !train_nll.is_finite() || dev_nll.is_some_and(|d| !d.is_finite()) {
            return Err(Error::Divergence {
                epoch: stats.epoch,
                detail: stats.log_line(),
            });
        }
        let key = dev_nll.unwrap_or(train_nll);
        let is_best = best.as_ref().is_none_or(|(b, _, _)| key < *b);
        if is_best {
            best = Some((key, stats.epoch, trainer.model.clone()));
        }
        observer.epoch_done(&stats, &trainer.model, is_best)?;
        log.push(stats);
        if stop(&stats) {
            break;
        }
    }
    let last = trainer.model;
    let (best, best_epoch) = match best {
        Some((_, epoch, model)) => (model, epoch),
        None => (last.clone(), 0),
    };
    Ok(TrainOutcome {
        best,
        best_epoch,
        last,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::{small_config, toy_context, toy_model};
    use proptest::prelude::*;

    fn single(value: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("delta", Tensor::scalar(value));
        s
    }

    #[test]
    fn hand_trace_of_two_updates() {
        let mut p = single(1.0);
        let mut acc = Accumulator::new(&p);
        let f = [Tensor::scalar(0.5)];
        optimizer_step(&mut p, &f, &mut acc, 0.1).unwrap();
        assert!((acc.g[0].data()[0] - 0.25).abs() < 1e-15);
        assert!((p.values()[0].data()[0] - 0.9).abs() < 1e-9);
        optimizer_step(&mut p, &f, &mut acc, 0.1).unwrap();
        assert!((acc.g[0].data()[0] - 0.5).abs() < 1e-15);
        let expected = 0.9 - 0.1 * 0.5 / 0.5f64.sqrt();
        assert!((p.values()[0].data()[0] - expected).abs() < 1e-9);
        assert!((p.values()[0].data()[0] - 0.82929).abs() < 1e-5);
    }

    #[test]
    fn zero_gradient_leaves_parameter() {
        let mut p = single(1.0);
        let mut acc = Accumulator::new(&p);
        optimizer_step(&mut p, &[Tensor::scalar(0.0)], &mut acc, 0.1).unwrap();
        assert_eq!(p.values()[0].data()[0], 1.0);
    }

    #[test]
    fn non_finite_gradient_aborts_before_any_update() {
        let mut p = ParamStore::new();
        p.add("a", Tensor::vector(vec![1.0, 2.0]));
        p.add("b", Tensor::vector(vec![3.0, 4.0]));
        let before = p.clone();
        let mut acc = Accumulator::new(&p);
        let grads = [Tensor::vector(vec![0.1, 0.1]), Tensor::vector(vec![0.2, f64::NAN])];
        match optimizer_step(&mut p, &grads, &mut acc, 0.1) {
            Err(Error::NonFiniteGradient { name, index }) => {
                assert_eq!(name, "b");
                assert_eq!(index, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(p, before);
        assert_eq!(acc, Accumulator::new(&before));
    }

    #[test]
    fn regularizer_cases() {
        let p = single(2.0);
        let mut g = vec![Tensor::scalar(0.0)];
        assert_eq!(regularize(&p, &mut g, 1.0), 4.0);
        assert_eq!(g[0].data()[0], 4.0);
        let mut g = vec![Tensor::scalar(0.0)];
        assert_eq!(regularize(&p, &mut g, 0.0), 0.0);
        assert_eq!(g[0].data()[0], 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = [
            TrainConfig {
                lambda: -1.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                mu: 0.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                batch_size: 0,
                ..TrainConfig::default()
            },
            TrainConfig {
                lambda: f64::NAN,
                ..TrainConfig::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn uniform_model_nll() {
        let n: f64 = 100.0;
        let per_step = -(1.0 / n).ln();
        assert!((3.0 * per_step - 3.0 * n.ln()).abs() < 1e-12);
    }

    fn toy_fragments() -> Vec<DialogueFragment> {
        let (_, target) = toy_model(small_config(), 0);
        let mut ctx = toy_context();
        ctx.extend(toy_context()[1..].iter().cloned());
        vec![DialogueFragment::new("toy:6", ctx, target).unwrap()]
    }

    #[test]
    fn training_is_deterministic_and_learns() {
        let run = || {
            let (model, _) = toy_model(small_config(), 1);
            let config = TrainConfig {
                epochs: 15,
                batch_size: 1,
                ..TrainConfig::default()
            };
            let mut log = Vec::new();
            let mut obs = |s: &EpochStats, _: &TbmModel, _: bool| {
                log.push(s.train_nll.to_bits());
                Ok(())
            };
            let out = train(model, &toy_fragments(), &[], config, &mut obs, &|_| false).unwrap();
            (log, out)
        };
        let (a, out) = run();
        let (b, _) = run();
        assert_eq!(a, b);
        assert_eq!(out.log.len(), 15);
        assert!(out.log[14].train_nll < out.log[0].train_nll);
        let prep = out.best.prepare_fragment(&toy_fragments()[0], 40).unwrap();
        let best_nll = out.best.nll(&prep).unwrap();
        assert!(best_nll.is_finite());
    }

    #[test]
    fn stop_predicate_ends_training() {
        let (model, _) = toy_model(small_config(), 2);
        let config = TrainConfig {
            epochs: 50,
            ..TrainConfig::default()
        };
        let out = train(
            model,
            &toy_fragments(),
            &[],
            config,
            &mut |_: &EpochStats, _: &TbmModel, _: bool| Ok(()),
            &|s| s.epoch == 3,
        )
        .unwrap();
        assert_eq!(out.log.len(), 3);
    }

    #[test]
    fn divergence_is_reported() {
        let (mut model, _) = toy_model(small_config(), 3);
        let id = model.decoder.b_out;
        model.params.get_mut(id).data_mut()[4] = f64::NAN;
        let config = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        let r = train(
            model,
            &toy_fragments(),
            &[],
            config,
            &mut |_: &EpochStats, _: &TbmModel, _: bool| Ok(()),
            &|_| false,
        );
        assert!(matches!(r, Err(Error::Divergence { epoch: 1, .. })));
    }

    #[test]
    fn log_line_format() {
        let s = EpochStats {
            epoch: 3,
            train_nll: 1.25,
            dev_nll: Some(2.5),
        };
        assert_eq!(s.log_line(), "epoch=3 train_nll=1.250000 dev_nll=2.500000");
    }

    proptest! {
        #[test]
        fn accumulator_grows_and_step_size_shrinks(
            grads in proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 3), 1..12),
        ) {
            let mut p = ParamStore::new();
            p.add("w", Tensor::vector(vec![0.1, -0.2, 0.3]));
            let mut acc = Accumulator::new(&p);
            let mut prev_g = vec![0.0; 3];
            let mut prev_rate = [f64::INFINITY; 3];
            for f in grads {
                optimizer_step(&mut p, &[Tensor::vector(f)], &mut acc, 0.1).unwrap();
                let g = acc.g[0].data().to_vec();
                for k in 0..3 {
                    prop_assert!(g[k] >= prev_g[k]);
                    prop_assert!(g[k] >= 0.0);
                    let rate = 0.1 / (g[k] + EPSILON).sqrt();
                    prop_assert!(rate <= prev_rate[k]);
                    prev_rate[k] = rate;
                }
                prev_g = g;
            }
        }
    }
}
