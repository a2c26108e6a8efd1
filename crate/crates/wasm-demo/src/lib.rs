//! Browser bindings for three interactive views:
//!
//! * [`Simulation`] steps Burgers or reaction-diffusion on the fine grid and
//!   renders a channel as RGBA pixels.
//! * [`Comparison`] advances the fine reference next to the coarse solver
//!   (coarse Euler step, bicubic upsampling of the increment) and reports the
//!   relative error after every learning step.
//! * [`Resampling`] shows a state, its bilinear restriction and the bicubic
//!   reconstruction.
//!
//! The plain-Rust constructors (`build`) are what the native tests exercise;
//! the `#[wasm_bindgen]` surface only converts errors.

use ppnn_core::datagen::{burgers_fourier_ic, rd_random_ic};
use ppnn_core::field::{downsample_bilinear, upsample_bicubic, Field, Grid2D, ParamVector};
use ppnn_core::physics::{integrate, PdeSpec};
use ppnn_core::rollout::{relative_error, CoarseSolver, Stepper};
use ppnn_core::Result;
use wasm_bindgen::prelude::*;

const FINE_N: usize = 64;

/// Desk setup of one system: domain, reference time step and initial state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Setup {
    pub length: f64,
    pub dt_num: f64,
    pub steps_per_snapshot: usize,
    burgers: bool,
}

impl Setup {
    pub fn for_system(system: &str) -> Result<Self> {
        match system {
            "burgers" => Ok(Self { length: 3.2, dt_num: 1e-4, steps_per_snapshot: 200, burgers: true }),
            "rd" => Ok(Self { length: 6.4, dt_num: 8e-5, steps_per_snapshot: 200, burgers: false }),
            other => Err(ppnn_core::Error::InvalidParameter(format!("unknown system {other:?} (burgers or rd)"))),
        }
    }

    pub fn dt_learn(&self) -> f64 {
        self.dt_num * self.steps_per_snapshot as f64
    }

    pub fn spec(&self, coefficient: f64) -> Result<PdeSpec> {
        if self.burgers {
            PdeSpec::burgers(coefficient)
        } else {
            PdeSpec::rd_full(coefficient)
        }
    }

    pub fn initial_state(&self, n: usize, seed: u64, coefficient: f64) -> Result<Field> {
        let grid = Grid2D::square(n, self.length)?;
        if self.burgers {
            burgers_fourier_ic(grid, seed, 4)
        } else {
            // noise is smoothed by a short spin-up as in the generated datasets
            let u = rd_random_ic(grid, seed)?;
            integrate(&self.spec(coefficient)?, &u, 2000.0 * self.dt_num, 2000)
        }
    }
}

fn js(e: ppnn_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

const PALETTE: [[f64; 3]; 6] = [
    [68.0, 1.0, 84.0],
    [65.0, 68.0, 135.0],
    [42.0, 120.0, 142.0],
    [34.0, 168.0, 132.0],
    [122.0, 209.0, 81.0],
    [253.0, 231.0, 37.0],
];

/// Row-major RGBA pixels of one channel, `lo..hi` mapped onto a perceptual palette.
pub fn render(field: &Field, channel: usize, lo: f64, hi: f64) -> Vec<u8> {
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = Vec::with_capacity(4 * field.grid().len());
    for &v in field.channel(channel) {
        let t = if v.is_finite() { ((v - lo) / span).clamp(0.0, 1.0) } else { 0.0 };
        let x = t * (PALETTE.len() - 1) as f64;
        let k = (x.floor() as usize).min(PALETTE.len() - 2);
        let w = x - k as f64;
        for c in 0..3 {
            out.push((PALETTE[k][c] * (1.0 - w) + PALETTE[k + 1][c] * w).round() as u8);
        }
        out.push(255);
    }
    out
}

fn channel_range(field: &Field, channel: usize) -> (f64, f64) {
    field.channel(channel).iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

#[wasm_bindgen]
pub struct Simulation {
    setup: Setup,
    spec: PdeSpec,
    state: Field,
    steps: usize,
}

impl Simulation {
    pub fn build(system: &str, coefficient: f64, seed: u64) -> Result<Self> {
        let setup = Setup::for_system(system)?;
        let spec = setup.spec(coefficient)?;
        let state = setup.initial_state(FINE_N, seed, coefficient)?;
        Ok(Self { setup, spec, state, steps: 0 })
    }

    pub fn state(&self) -> &Field {
        &self.state
    }

    pub fn try_advance(&mut self, learning_steps: usize) -> Result<()> {
        for _ in 0..learning_steps {
            self.state = integrate(&self.spec, &self.state, self.setup.dt_learn(), self.setup.steps_per_snapshot)?;
            self.steps += 1;
        }
        Ok(())
    }
}

#[wasm_bindgen]
impl Simulation {
    #[wasm_bindgen(constructor)]
    pub fn new(system: &str, coefficient: f64, seed: u32) -> std::result::Result<Simulation, JsError> {
        Self::build(system, coefficient, seed as u64).map_err(js)
    }

    pub fn advance(&mut self, learning_steps: usize) -> std::result::Result<(), JsError> {
        self.try_advance(learning_steps).map_err(js)
    }

    pub fn size(&self) -> usize {
        self.state.grid().nx()
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.setup.dt_learn()
    }

    /// Pixels of `channel` scaled to its current range.
    pub fn rgba(&self, channel: usize) -> Vec<u8> {
        let (lo, hi) = channel_range(&self.state, channel);
        render(&self.state, channel, lo, hi)
    }
}

#[wasm_bindgen]
pub struct Comparison {
    setup: Setup,
    spec: PdeSpec,
    params: ParamVector,
    solver: CoarseSolver,
    reference: Field,
    coarse: Option<Field>,
    errors: Vec<f64>,
}

impl Comparison {
    pub fn build(system: &str, coefficient: f64, seed: u64, coarse_n: usize) -> Result<Self> {
        let setup = Setup::for_system(system)?;
        let spec = setup.spec(coefficient)?;
        let reference = setup.initial_state(FINE_N, seed, coefficient)?;
        let solver = CoarseSolver { template: spec, coarse_grid: Grid2D::square(coarse_n, setup.length)?, substeps: 1, dt_learn: setup.dt_learn() };
        let params = ParamVector::single(spec.param_name(), coefficient)?;
        Ok(Self { setup, spec, params, solver, coarse: Some(reference.clone()), reference, errors: vec![] })
    }

    pub fn reference(&self) -> &Field {
        &self.reference
    }

    /// `None` once the coarse solver has blown up.
    pub fn coarse(&self) -> Option<&Field> {
        self.coarse.as_ref()
    }

    pub fn errors(&self) -> &[f64] {
        &self.errors
    }

    pub fn try_advance(&mut self) -> Result<f64> {
        self.reference = integrate(&self.spec, &self.reference, self.setup.dt_learn(), self.setup.steps_per_snapshot)?;
        self.coarse = self.coarse.take().and_then(|u| self.solver.step(&u, &self.params).ok());
        let e = match &self.coarse {
            Some(u) => relative_error(u, &self.reference)?,
            None => f64::INFINITY,
        };
        self.errors.push(e);
        Ok(e)
    }
}

#[wasm_bindgen]
impl Comparison {
    #[wasm_bindgen(constructor)]
    pub fn new(system: &str, coefficient: f64, seed: u32, coarse_n: usize) -> std::result::Result<Comparison, JsError> {
        Self::build(system, coefficient, seed as u64, coarse_n).map_err(js)
    }

    /// One learning step of both solvers; returns the relative error, infinite after divergence.
    pub fn advance(&mut self) -> std::result::Result<f64, JsError> {
        self.try_advance().map_err(js)
    }

    pub fn size(&self) -> usize {
        FINE_N
    }

    pub fn steps(&self) -> usize {
        self.errors.len()
    }

    pub fn diverged(&self) -> bool {
        self.coarse.is_none()
    }

    pub fn error_history(&self) -> Vec<f64> {
        self.errors.clone()
    }

    pub fn reference_rgba(&self, channel: usize) -> Vec<u8> {
        let (lo, hi) = channel_range(&self.reference, channel);
        render(&self.reference, channel, lo, hi)
    }

    /// Coarse state on the reference colour scale; black after divergence.
    pub fn coarse_rgba(&self, channel: usize) -> Vec<u8> {
        let (lo, hi) = channel_range(&self.reference, channel);
        match &self.coarse {
            Some(u) => render(u, channel, lo, hi),
            None => [0, 0, 0, 255].repeat(FINE_N * FINE_N),
        }
    }
}

#[wasm_bindgen]
pub struct Resampling {
    original: Field,
    restricted: Field,
    reconstructed: Field,
}

impl Resampling {
    pub fn build(system: &str, seed: u64, coarse_n: usize) -> Result<Self> {
        let setup = Setup::for_system(system)?;
        let coefficient = if setup.burgers { 0.05 } else { 1.0 };
        let original = setup.initial_state(FINE_N, seed, coefficient)?;
        let restricted = downsample_bilinear(&original, &Grid2D::square(coarse_n, setup.length)?)?;
        let reconstructed = upsample_bicubic(&restricted, original.grid())?;
        Ok(Self { original, restricted, reconstructed })
    }

    pub fn fields(&self) -> [&Field; 3] {
        [&self.original, &self.restricted, &self.reconstructed]
    }
}

#[wasm_bindgen]
impl Resampling {
    #[wasm_bindgen(constructor)]
    pub fn new(system: &str, seed: u32, coarse_n: usize) -> std::result::Result<Resampling, JsError> {
        Self::build(system, seed as u64, coarse_n).map_err(js)
    }

    pub fn fine_size(&self) -> usize {
        self.original.grid().nx()
    }

    pub fn coarse_size(&self) -> usize {
        self.restricted.grid().nx()
    }

    /// Relative L2 error of fine -> coarse -> fine.
    pub fn roundtrip_error(&self) -> f64 {
        relative_error(&self.reconstructed, &self.original).unwrap_or(f64::NAN)
    }

    /// 0 = original, 1 = restricted, 2 = reconstructed; all on the original's colour scale.
    pub fn rgba(&self, which: usize, channel: usize) -> Vec<u8> {
        let (lo, hi) = channel_range(&self.original, channel);
        render(self.fields()[which.min(2)], channel, lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_covers_the_palette_ends() {
        let g = Grid2D::square(4, 1.0).unwrap();
        let mut data = vec![0.5; 16];
        (data[0], data[1], data[2]) = (0.0, 1.0, f64::NAN);
        let px = render(&Field::from_vec(g, 1, data).unwrap(), 0, 0.0, 1.0);
        assert_eq!(px[..8], [68, 1, 84, 255, 253, 231, 37, 255]);
        assert_eq!(px[8..12], [68, 1, 84, 255]);
        assert_eq!(px.len(), 64);
    }

    #[test]
    fn simulation_advances_and_renders() {
        let mut s = Simulation::build("burgers", 0.05, 1).unwrap();
        let u0 = s.state().clone();
        s.try_advance(2).unwrap();
        assert!(s.state().is_finite());
        assert_ne!(s.state(), &u0);
        assert_eq!(s.rgba(1).len(), 4 * FINE_N * FINE_N);
        assert!((s.time() - 0.04).abs() < 1e-12);
        assert!(Simulation::build("heat", 1.0, 0).is_err());
    }

    #[test]
    fn comparison_error_starts_small_and_grows() {
        let mut c = Comparison::build("burgers", 0.05, 3, 16).unwrap();
        let first = c.try_advance().unwrap();
        for _ in 0..9 {
            c.try_advance().unwrap();
        }
        assert!(first > 0.0 && first < 0.1, "{first}");
        assert!(c.errors()[9] > first);
        assert!(c.coarse().is_some());
    }

    #[test]
    fn rd_comparison_runs() {
        let mut c = Comparison::build("rd", 1.0, 2, 16).unwrap();
        let e = c.try_advance().unwrap();
        assert!(e.is_finite() && e > 0.0);
    }

    #[test]
    fn explicit_coarse_rd_blows_up_on_a_fine_coarse_grid() {
        // gamma dt / dx^2 = 1.3 * 0.016 / 0.04 is past the Euler limit of the 6th-order Laplacian
        let mut c = Comparison::build("rd", 1.3, 2, 32).unwrap();
        for _ in 0..40 {
            c.try_advance().unwrap();
        }
        assert!(c.coarse().is_none());
        assert!(c.errors().last().unwrap().is_infinite());
    }

    #[test]
    fn resampling_roundtrip_improves_with_resolution() {
        let e = |n| {
            let r = Resampling::build("burgers", 4, n).unwrap();
            relative_error(r.fields()[2], r.fields()[0]).unwrap()
        };
        let (e8, e32) = (e(8), e(32));
        assert!(e32 < e8, "{e32} vs {e8}");
        assert!(e(FINE_N) < 1e-12);
    }
}
