//! Central finite-difference checks of reverse-mode gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, Tensor, Var};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckOptions {
    /// Central-difference step.
    pub h: f64,
    /// Check at most this many randomly chosen coordinates per input.
    pub max_coords: Option<usize>,
    pub seed: u64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self { h: 1e-6, max_coords: None, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    /// `(input, coordinate)` of the largest relative error.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
}

impl GradcheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.checked > 0 && self.max_rel_error <= tol
    }
}

/// Compares `grad_fn` against central differences of `value_fn`.
///
/// The relative error of a coordinate is
/// `|a - n| / max(|a|, |n|, 1e-3 * s, 1e-10)` where `s` is the largest
/// derivative of that input, analytic over all coordinates or numeric over
/// the checked ones. Entries that are tiny compared to the rest of the
/// gradient are judged on an absolute scale.
pub fn compare_gradients<V, G>(value_fn: V, grad_fn: G, inputs: &[Tensor<f64>], opts: &GradcheckOptions) -> Result<GradcheckReport>
where
    V: Fn(&[Tensor<f64>]) -> Result<f64>,
    G: Fn(&[Tensor<f64>]) -> Result<Vec<Vec<f64>>>,
{
    let analytic = grad_fn(inputs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut work = inputs.to_vec();
    let mut report = GradcheckReport { max_rel_error: 0.0, worst: None, checked: 0 };
    for (k, input) in inputs.iter().enumerate() {
        let n = input.len();
        let coords: Vec<usize> = match opts.max_coords {
            Some(m) if m < n => {
                let mut c = sample(&mut rng, n, m).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..n).collect(),
        };
        let mut numeric = Vec::with_capacity(coords.len());
        for &i in &coords {
            let x0 = work[k].data()[i];
            work[k].data_mut()[i] = x0 + opts.h;
            let fp = value_fn(&work)?;
            work[k].data_mut()[i] = x0 - opts.h;
            let fm = value_fn(&work)?;
            work[k].data_mut()[i] = x0;
            numeric.push((fp - fm) / (2.0 * opts.h));
        }
        let full = analytic.get(k).map_or(0.0, |g| g.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        let scale = numeric.iter().fold(full, |m, v| m.max(v.abs()));
        for (&i, &num) in coords.iter().zip(&numeric) {
            let a = analytic.get(k).and_then(|g| g.get(i)).copied().unwrap_or(0.0);
            let denom = a.abs().max(num.abs()).max(1e-3 * scale).max(1e-10);
            let rel = (a - num).abs() / denom;
            report.checked += 1;
            if !(rel <= report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst = Some((k, i));
            }
        }
    }
    Ok(report)
}

/// Checks the gradients of a graph built by `build` from `inputs`, each
/// registered as a trainable leaf. `build` must return a one-element loss.
pub fn gradcheck<B>(inputs: &[Tensor<f64>], build: B, opts: &GradcheckOptions) -> Result<GradcheckReport>
where
    B: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let run = |xs: &[Tensor<f64>]| -> Result<(Graph<f64>, Vec<Var>, Var)> {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|x| g.param(x.clone())).collect();
        let loss = build(&mut g, &vars)?;
        Ok((g, vars, loss))
    };
    compare_gradients(
        |xs| {
            let (g, _, loss) = run(xs)?;
            Ok(g.value(loss).data()[0])
        },
        |xs| {
            let (g, vars, loss) = run(xs)?;
            let grads = g.backward(loss)?;
            Ok(vars.iter().zip(xs).map(|(&v, x)| grads.get_or_zeros(v, x.len())).collect())
        },
        inputs,
        opts,
    )
}
