//! Autoregressive rollouts and the relative full-field error.

use std::fmt::Write as _;

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::field::{l2_norm, Field, Grid2D, ParamVector};
use crate::model::{pde_branch, Model, ModelConfig};
use crate::physics::PdeSpec;

/// Anything that advances a fine-grid state by one learning step.
pub trait Stepper {
    fn label(&self) -> &str;
    fn step(&self, u: &Field, params: &ParamVector) -> Result<Field>;
}

impl Stepper for Model {
    fn label(&self) -> &str {
        Model::label(self)
    }

    fn step(&self, u: &Field, params: &ParamVector) -> Result<Field> {
        Model::step(self, u, params)
    }
}

/// The PDE-preserving branch used on its own: `u + upsample(coarse increment)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseSolver {
    pub template: PdeSpec,
    pub coarse_grid: Grid2D,
    pub substeps: usize,
    pub dt_learn: f64,
}

impl CoarseSolver {
    /// The coarse solver embedded in a PDE-preserving model configuration.
    pub fn from_config(config: &ModelConfig) -> Result<Self> {
        let template = config.pde.ok_or_else(|| Error::InvalidParameter("configuration has no PDE branch".into()))?;
        Ok(Self { template, coarse_grid: config.coarse_grid, substeps: config.substeps, dt_learn: config.dt_learn })
    }
}

impl Stepper for CoarseSolver {
    fn label(&self) -> &str {
        "coarse"
    }

    fn step(&self, u: &Field, params: &ParamVector) -> Result<Field> {
        let spec = self.template.bind(params)?;
        let next = u.add(&pde_branch(u, &spec, &self.coarse_grid, self.substeps, self.dt_learn)?)?;
        if !next.is_finite() {
            return Err(Error::Diverged { step: 0 });
        }
        Ok(next)
    }
}

/// States `u_0 ..= u_k` of one rollout. `diverged_at` is the first step whose
/// output was not finite; no state is recorded from that step on.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub states: Vec<Field>,
    pub diverged_at: Option<usize>,
}

/// Applies `stepper` `n_steps` times starting from `u0`. Divergence stops the
/// rollout and is recorded rather than returned as an error.
pub fn rollout(stepper: &dyn Stepper, u0: &Field, params: &ParamVector, n_steps: usize) -> Result<Rollout> {
    if n_steps == 0 {
        return Err(Error::InvalidParameter("a rollout needs at least one step".into()));
    }
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(u0.clone());
    for k in 1..=n_steps {
        match stepper.step(&states[k - 1], params) {
            Ok(next) if next.is_finite() => states.push(next),
            Ok(_) | Err(Error::Diverged { .. }) | Err(Error::NonFinite) => {
                return Ok(Rollout { states, diverged_at: Some(k) });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Rollout { states, diverged_at: None })
}

/// `||pred - reference|| / ||reference||`.
pub fn relative_error(pred: &Field, reference: &Field) -> Result<f64> {
    let denom = l2_norm(reference)?;
    if denom == 0.0 {
        return Err(Error::InvalidParameter("reference field has zero norm".into()));
    }
    Ok(l2_norm(&pred.sub(reference)?)? / denom)
}

/// Mean and envelope of the relative error over the trajectories still alive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub step: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub n_alive: usize,
}

impl StepStats {
    fn from_errors(step: usize, errors: impl Iterator<Item = f64>) -> Self {
        let (mut sum, mut min, mut max, mut n) = (0.0, f64::INFINITY, f64::NEG_INFINITY, 0usize);
        for e in errors {
            sum += e;
            min = min.min(e);
            max = max.max(e);
            n += 1;
        }
        if n == 0 {
            return Self { step, mean: f64::NAN, min: f64::NAN, max: f64::NAN, n_alive: 0 };
        }
        // guard the mean against rounding past the envelope
        Self { step, mean: (sum / n as f64).clamp(min, max), min, max, n_alive: n }
    }
}

/// Per-trajectory errors `[trajectory][step]` (`None` once diverged) and the
/// per-step statistics, for steps `0 ..= n` where `n + 1` is the reference length.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTable {
    pub per_trajectory: Vec<Vec<Option<f64>>>,
    pub stats: Vec<StepStats>,
}

/// The relative full-field error averaged over trajectories at every step.
/// `preds[i][k]` is the prediction of trajectory `i` at step `k`; a shorter
/// prediction marks a trajectory that diverged and is excluded from then on.
pub fn epsilon_t(preds: &[Vec<Field>], refs: &[Vec<Field>]) -> Result<ErrorTable> {
    if preds.len() != refs.len() {
        return Err(Error::ShapeMismatch(format!("{} predictions for {} references", preds.len(), refs.len())));
    }
    let n = refs.iter().map(Vec::len).min().unwrap_or(0);
    let mut per_trajectory = Vec::with_capacity(refs.len());
    for (p, r) in preds.iter().zip(refs) {
        if p.len() > r.len() {
            return Err(Error::ShapeMismatch("prediction is longer than its reference".into()));
        }
        let row = (0..n).map(|k| p.get(k).map(|f| relative_error(f, &r[k])).transpose()).collect::<Result<Vec<_>>>()?;
        per_trajectory.push(row);
    }
    let stats = (0..n).map(|k| StepStats::from_errors(k, per_trajectory.iter().filter_map(|row| row[k]))).collect();
    Ok(ErrorTable { per_trajectory, stats })
}

/// Rollout errors of one model on a test set.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutReport {
    pub model: String,
    /// Statistics for steps `1 ..= n_steps`.
    pub stats: Vec<StepStats>,
    pub per_trajectory: Vec<Vec<Option<f64>>>,
    pub diverged_at: Vec<Option<usize>>,
    /// Number of steps covered by the training data.
    pub horizon: usize,
    pub dt_learn: f64,
}

impl RolloutReport {
    pub fn n_steps(&self) -> usize {
        self.stats.len()
    }

    /// Statistics at step `k >= 1`.
    pub fn at(&self, k: usize) -> Option<&StepStats> {
        k.checked_sub(1).and_then(|i| self.stats.get(i))
    }

    /// Mean error at step `k`, `None` when no trajectory is alive there.
    pub fn mean_at(&self, k: usize) -> Option<f64> {
        self.at(k).filter(|s| s.n_alive > 0).map(|s| s.mean)
    }

    pub fn first_divergence(&self) -> Option<usize> {
        self.diverged_at.iter().flatten().copied().min()
    }
}

/// Rolls every stepper out from each test trajectory's first snapshot for
/// `n_steps` and compares against the recorded snapshots.
pub fn compare(steppers: &[&dyn Stepper], test: &Dataset, n_steps: usize, horizon: usize) -> Result<Vec<RolloutReport>> {
    if test.n_snapshots() < n_steps + 1 {
        return Err(Error::InvalidParameter(format!(
            "test set has {} snapshots, {} steps need {}",
            test.n_snapshots(),
            n_steps,
            n_steps + 1
        )));
    }
    let refs: Vec<Vec<Field>> = test.trajectories().iter().map(|t| t.snapshots[..=n_steps].to_vec()).collect();
    steppers
        .iter()
        .map(|s| {
            let mut preds = Vec::with_capacity(refs.len());
            let mut diverged_at = Vec::with_capacity(refs.len());
            for t in test.trajectories() {
                let r = rollout(*s, &t.snapshots[0], &t.params, n_steps)?;
                diverged_at.push(r.diverged_at);
                preds.push(r.states);
            }
            let table = epsilon_t(&preds, &refs)?;
            Ok(RolloutReport {
                model: s.label().to_string(),
                stats: table.stats[1..].to_vec(),
                per_trajectory: table.per_trajectory.into_iter().map(|row| row[1..].to_vec()).collect(),
                diverged_at,
                horizon,
                dt_learn: test.dt_learn(),
            })
        })
        .collect()
}

/// `step,time,model,eps_mean,eps_min,eps_max,n_alive`, one row per model and step.
pub fn report_csv(reports: &[RolloutReport]) -> String {
    let mut s = String::from("step,time,model,eps_mean,eps_min,eps_max,n_alive\n");
    for r in reports {
        for st in &r.stats {
            let _ = writeln!(
                s,
                "{},{:e},{},{:e},{:e},{:e},{}",
                st.step,
                st.step as f64 * r.dt_learn,
                r.model,
                st.mean,
                st.min,
                st.max,
                st.n_alive
            );
        }
    }
    s
}

/// A stepper reported under a different name.
pub struct Named<'a> {
    pub name: String,
    pub inner: &'a dyn Stepper,
}

impl<'a> Named<'a> {
    pub fn new(name: impl Into<String>, inner: &'a dyn Stepper) -> Self {
        Self { name: name.into(), inner }
    }
}

impl Stepper for Named<'_> {
    fn label(&self) -> &str {
        &self.name
    }

    fn step(&self, u: &Field, params: &ParamVector) -> Result<Field> {
        self.inner.step(u, params)
    }
}
