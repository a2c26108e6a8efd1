//! One-step supervised training on consecutive snapshot pairs.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Adam, AdamHyper, Graph, Tensor};
use crate::datagen::{mix_seed, Dataset};
use crate::error::{Error, Result};
use crate::field::{Field, ParamVector};
use crate::model::{field_to_tensor, forward_graph, Model};

/// A consecutive pair `(u_t, u_{t+1})` and the parameters of its trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub state: Field,
    pub next: Field,
    pub params: ParamVector,
}

pub fn make_pairs(ds: &Dataset) -> Vec<Pair> {
    ds.trajectories()
        .iter()
        .flat_map(|t| {
            t.snapshots.windows(2).map(|w| Pair { state: w[0].clone(), next: w[1].clone(), params: t.params.clone() })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Constant Adam learning rate.
    pub lr: f64,
    pub seed: u64,
    pub shuffle: bool,
    /// Number of the first epoch; shuffling is keyed by the absolute epoch so
    /// a resumed run continues the same permutation sequence.
    pub start_epoch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 200, batch_size: 16, lr: 3e-4, seed: 0, shuffle: true, start_epoch: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter("epochs and batch size must be at least 1".into()));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::InvalidParameter(format!("learning rate {} must be finite and non-negative", self.lr)));
        }
        Ok(())
    }
}

/// Visiting order of `n` samples in `epoch`; depends only on `(seed, epoch)`.
pub fn epoch_order(n: usize, seed: u64, epoch: usize, shuffle: bool) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, epoch as u64));
        order.shuffle(&mut rng);
    }
    order
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-sample increment MSE seen while training the epoch.
    pub train_mse: f64,
    pub eval_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn last_epoch(&self) -> Option<usize> {
        self.records.last().map(|r| r.epoch)
    }

    pub fn extend(&mut self, other: TrainHistory) {
        self.records.extend(other.records);
    }

    /// `epoch,train_mse,eval_mse`; the eval column is empty when not measured.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_mse,eval_mse\n");
        for r in &self.records {
            let eval = r.eval_mse.map(|v| format!("{v:e}")).unwrap_or_default();
            let _ = writeln!(s, "{},{:e},{}", r.epoch, r.train_mse, eval);
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("epoch,train_mse,eval_mse") {
            return Err(Error::InvalidParameter("loss history has an unexpected header".into()));
        }
        let bad = |l: &str| Error::InvalidParameter(format!("malformed loss history row {l:?}"));
        let mut records = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(bad(line));
            }
            let epoch = cols[0].parse().map_err(|_| bad(line))?;
            let train_mse = cols[1].parse().map_err(|_| bad(line))?;
            let eval_mse = if cols[2].is_empty() { None } else { Some(cols[2].parse().map_err(|_| bad(line))?) };
            records.push(EpochRecord { epoch, train_mse, eval_mse });
        }
        Ok(Self { records })
    }
}

/// Network inputs and regression target of one pair, in network units.
struct Sample {
    state: Tensor<f32>,
    feature: Option<Tensor<f32>>,
    /// Increment the trainable branch must produce, divided by the output scale.
    target: Tensor<f32>,
    params: Vec<f64>,
}

fn prepare(model: &Model, pairs: &[Pair]) -> Result<Vec<Sample>> {
    let cfg = model.config();
    pairs
        .iter()
        .map(|p| {
            if *p.state.grid() != cfg.fine_grid || p.state.channels() != cfg.channels {
                return Err(Error::GridMismatch("dataset does not match the model's grid or channels".into()));
            }
            let delta_pde = model.pde_increment(&p.state, &p.params)?;
            let mut target = p.next.sub(&p.state)?;
            if cfg.adds_pde() {
                if let Some(d) = &delta_pde {
                    target = target.sub(d)?;
                }
            }
            let (state, feature) = model.network_inputs(&p.state, delta_pde.as_ref());
            let target = field_to_tensor(&target.scale(1.0 / cfg.norm.output_scale));
            Ok(Sample { state, feature, target, params: model.param_values(&p.params)? })
        })
        .collect()
}

/// Loss of one sample in network units and, when `grads` is given, its
/// gradient added to it.
fn sample_loss(model: &Model, s: &Sample, grads: Option<&mut [Vec<f32>]>) -> Result<f64> {
    let mut g = Graph::<f32>::new();
    let vars = model.weights().register(&mut g, grads.is_some());
    let state = g.constant(s.state.clone());
    let feature = s.feature.as_ref().map(|f| g.constant(f.clone()));
    let out = forward_graph(&mut g, model.config(), &vars, state, &s.params, feature)?;
    let target = g.constant(s.target.clone());
    let loss = g.mse(out, target)?;
    let value = g.value(loss).data()[0] as f64;
    if let Some(acc) = grads {
        if value.is_finite() {
            let gr = g.backward(loss)?;
            for (a, &v) in acc.iter_mut().zip(&vars) {
                if let Some(gv) = gr.get(v) {
                    a.iter_mut().zip(gv).for_each(|(a, &g)| *a += g);
                }
            }
        }
    }
    Ok(value)
}

/// Adam on the mean-squared increment error. Gradients of a mini-batch are
/// summed in visiting order and divided by the batch size. A non-finite
/// loss aborts with [`Error::TrainingDiverged`].
pub fn train(model: &mut Model, ds: &Dataset, eval: Option<&Dataset>, cfg: &TrainConfig) -> Result<TrainHistory> {
    cfg.validate()?;
    let samples = prepare(model, &make_pairs(ds))?;
    if samples.is_empty() {
        return Err(Error::InvalidParameter("dataset has no snapshot pairs".into()));
    }
    let eval_samples = eval.map(|e| prepare(model, &make_pairs(e))).transpose()?;
    let mut opt = Adam::<f32>::new(AdamHyper::with_lr(cfg.lr), &model.weights().sizes());
    let mut history = TrainHistory::default();
    // network-unit losses back to physical increment units
    let unit = model.config().norm.output_scale.powi(2);
    for epoch in cfg.start_epoch..cfg.start_epoch + cfg.epochs {
        let order = epoch_order(samples.len(), cfg.seed, epoch, cfg.shuffle);
        let mut total = 0.0;
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads: Vec<Vec<f32>> = model.weights().sizes().into_iter().map(|n| vec![0.0; n]).collect();
            for &i in chunk {
                let loss = sample_loss(model, &samples[i], Some(&mut grads))?;
                if !loss.is_finite() {
                    return Err(Error::TrainingDiverged { epoch, batch });
                }
                total += loss;
            }
            let inv = 1.0 / chunk.len() as f32;
            grads.iter_mut().flatten().for_each(|g| *g *= inv);
            let grad_refs: Vec<&[f32]> = grads.iter().map(Vec::as_slice).collect();
            let mut params: Vec<&mut [f32]> = model.weights_mut().tensors_mut().map(|t| t.data_mut()).collect();
            opt.step(&mut params, &grad_refs)?;
        }
        let eval_mse = eval_samples.as_ref().map(|s| mean_loss(model, s).map(|l| l * unit)).transpose()?;
        history.records.push(EpochRecord { epoch, train_mse: total * unit / samples.len() as f64, eval_mse });
    }
    Ok(history)
}

fn mean_loss(model: &Model, samples: &[Sample]) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        total += sample_loss(model, s, None)?;
    }
    Ok(total / samples.len().max(1) as f64)
}

/// Mean over all pairs of the one-step mean-squared error of `model.step`,
/// without touching the weights.
pub fn evaluate_onestep(model: &Model, ds: &Dataset) -> Result<f64> {
    let pairs = make_pairs(ds);
    if pairs.is_empty() {
        return Err(Error::InvalidParameter("dataset has no snapshot pairs".into()));
    }
    let mut total = 0.0;
    for p in &pairs {
        let pred = model.step(&p.state, &p.params)?;
        let diff = pred.sub(&p.next)?;
        total += diff.data().iter().map(|v| v * v).sum::<f64>() / diff.data().len() as f64;
    }
    Ok(total / pairs.len() as f64)
}
