//! The PDE-preserving network and its black-box counterpart.
//!
//! Both models predict an increment at fine resolution. The PDE-preserving
//! variant also downsamples the state, advances it with the coarse explicit
//! solver, upsamples the resulting increment and adds it to the residual.
//! That increment is additionally fed to the trainable network as input
//! channels, depending on [`PdeFusion`].

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::autodiff::{Graph, Padding, Real, Tensor, Var};
use crate::datagen::Dataset;
use crate::error::{Error, FormatError, Result};
use crate::field::{downsample_bilinear, upsample_bicubic, Field, Grid2D, ParamVector};
use crate::io::{write_atomic, Reader};
use crate::physics::{integrate, PdeKind, PdeSpec};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"PPCK";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// How the coarse-solver increment enters the PDE-preserving model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdeFusion {
    /// Added to the residual and fed to the network as extra channels.
    AddAndInput,
    InputOnly,
    AddOnly,
}

impl PdeFusion {
    pub fn as_str(self) -> &'static str {
        match self {
            PdeFusion::AddAndInput => "add+input",
            PdeFusion::InputOnly => "input-only",
            PdeFusion::AddOnly => "add-only",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "add+input" => Some(PdeFusion::AddAndInput),
            "input-only" => Some(PdeFusion::InputOnly),
            "add-only" => Some(PdeFusion::AddOnly),
            _ => None,
        }
    }
}

/// Architecture and PDE-branch settings. `pde == None` gives the black-box model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub fine_grid: Grid2D,
    pub coarse_grid: Grid2D,
    pub channels: usize,
    pub n_params: usize,
    pub hidden_channels: usize,
    pub n_resblocks: usize,
    pub res_kernel: usize,
    pub encoder_kernel: usize,
    pub encoder_stride: usize,
    pub encoder_padding: usize,
    pub encoder_layers: usize,
    pub shuffle_factor: usize,
    /// PDE template; its coefficient is replaced by each sample's parameter.
    pub pde: Option<PdeSpec>,
    pub substeps: usize,
    pub dt_learn: f64,
    pub fusion: PdeFusion,
    pub norm: Normalization,
}

/// Fixed affine scalings between physical fields and network units, fitted
/// once on the training set. The identity leaves every quantity unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    /// State fed to the network is `(u - state_mean) / state_scale`.
    pub state_mean: f64,
    pub state_scale: f64,
    /// The PDE feature is divided by this.
    pub feature_scale: f64,
    /// The network output is multiplied by this to give the increment.
    pub output_scale: f64,
    /// Each scalar parameter is divided by its entry before conditioning.
    pub param_scale: Vec<f64>,
}

impl Normalization {
    pub fn identity(n_params: usize) -> Self {
        Self { state_mean: 0.0, state_scale: 1.0, feature_scale: 1.0, output_scale: 1.0, param_scale: vec![1.0; n_params] }
    }

    pub fn validate(&self, n_params: usize) -> Result<()> {
        let scales = [self.state_scale, self.feature_scale, self.output_scale];
        if !self.state_mean.is_finite() || scales.iter().chain(&self.param_scale).any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidParameter("normalization scales must be finite and positive".into()));
        }
        if self.param_scale.len() != n_params {
            return Err(Error::InvalidParameter(format!("{} parameter scales for {n_params} parameters", self.param_scale.len())));
        }
        Ok(())
    }
}

impl ModelConfig {
    pub fn ppnn(fine_grid: Grid2D, coarse_grid: Grid2D, pde: PdeSpec, dt_learn: f64) -> Self {
        Self {
            fine_grid,
            coarse_grid,
            channels: 2,
            n_params: 1,
            hidden_channels: 48,
            n_resblocks: 3,
            res_kernel: 5,
            encoder_kernel: 6,
            encoder_stride: 2,
            encoder_padding: 2,
            encoder_layers: 2,
            shuffle_factor: 4,
            pde: Some(pde),
            substeps: 1,
            dt_learn,
            fusion: PdeFusion::AddAndInput,
            norm: Normalization::identity(1),
        }
    }

    pub fn blackbox(fine_grid: Grid2D, dt_learn: f64) -> Self {
        Self { pde: None, ..Self::ppnn(fine_grid, fine_grid, PdeSpec::rd_diffusion_only(1.0).expect("valid"), dt_learn) }
    }

    pub fn with_hidden_channels(mut self, hidden: usize) -> Self {
        self.hidden_channels = hidden;
        self
    }

    pub fn is_ppnn(&self) -> bool {
        self.pde.is_some()
    }

    pub fn label(&self) -> &'static str {
        if self.is_ppnn() {
            "ppnn"
        } else {
            "blackbox"
        }
    }

    pub fn feeds_feature(&self) -> bool {
        self.is_ppnn() && self.fusion != PdeFusion::AddOnly
    }

    pub fn adds_pde(&self) -> bool {
        self.is_ppnn() && self.fusion != PdeFusion::InputOnly
    }

    pub fn input_channels(&self) -> usize {
        self.channels + self.n_params + if self.feeds_feature() { self.channels } else { 0 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.channels == 0 || self.hidden_channels == 0 || self.encoder_layers == 0 {
            return bad("channels, hidden channels and encoder layers must be positive".into());
        }
        let total_stride = self.encoder_stride.pow(self.encoder_layers as u32);
        if self.shuffle_factor != total_stride {
            return bad(format!("shuffle factor {} must equal the encoder's total stride {total_stride}", self.shuffle_factor));
        }
        let r2 = self.shuffle_factor * self.shuffle_factor;
        if self.hidden_channels % r2 != 0 {
            return bad(format!("hidden channels {} must be divisible by {r2}", self.hidden_channels));
        }
        if self.res_kernel % 2 == 0 {
            return bad("residual kernel size must be odd".into());
        }
        let (mut h, mut w) = (self.fine_grid.ny(), self.fine_grid.nx());
        for _ in 0..self.encoder_layers {
            h = crate::autodiff::conv_output_size(h, self.encoder_kernel, self.encoder_padding, self.encoder_stride)?;
            w = crate::autodiff::conv_output_size(w, self.encoder_kernel, self.encoder_padding, self.encoder_stride)?;
        }
        if h * self.shuffle_factor != self.fine_grid.ny() || w * self.shuffle_factor != self.fine_grid.nx() {
            return bad("encoder and pixel shuffle do not restore the fine resolution".into());
        }
        if !self.coarse_grid.same_domain(&self.fine_grid) {
            return Err(Error::GridMismatch("coarse and fine grids must cover the same domain".into()));
        }
        if self.is_ppnn() && self.substeps == 0 {
            return bad("substeps must be at least 1".into());
        }
        if !(self.dt_learn > 0.0) {
            return bad(format!("learning step {} must be positive", self.dt_learn));
        }
        self.norm.validate(self.n_params)
    }

    /// Stable textual form hashed into the checkpoint fingerprint.
    pub fn canonical_text(&self) -> String {
        let mut s = String::new();
        let g = |g: &Grid2D| format!("{}x{}:{:?}x{:?}", g.nx(), g.ny(), g.lx(), g.ly());
        let _ = writeln!(s, "fine={}", g(&self.fine_grid));
        let _ = writeln!(s, "channels={} n_params={}", self.channels, self.n_params);
        let _ = writeln!(s, "hidden={} resblocks={} res_kernel={}", self.hidden_channels, self.n_resblocks, self.res_kernel);
        let _ = writeln!(
            s,
            "encoder={}x{} kernel={} stride={} pad={} shuffle={}",
            self.encoder_layers, self.hidden_channels, self.encoder_kernel, self.encoder_stride, self.encoder_padding, self.shuffle_factor
        );
        let n = &self.norm;
        let _ = writeln!(
            s,
            "norm={:?},{:?},{:?},{:?},{:?}",
            n.state_mean, n.state_scale, n.feature_scale, n.output_scale, n.param_scale
        );
        match &self.pde {
            None => s.push_str("pde=none\n"),
            Some(p) => {
                let extra = match p.kind {
                    PdeKind::RdFull { alpha, beta, .. } => format!(" alpha={alpha:?} beta={beta:?}"),
                    _ => String::new(),
                };
                let _ = writeln!(
                    s,
                    "pde={}{} laplacian={} coarse={} substeps={} dt={:?} fusion={}",
                    p.label(),
                    extra,
                    p.laplacian_order.order(),
                    g(&self.coarse_grid),
                    self.substeps,
                    self.dt_learn,
                    self.fusion.as_str()
                );
            }
        }
        s
    }

    pub fn fingerprint(&self) -> u64 {
        let digest = Sha256::digest(self.canonical_text().as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }

    /// Names and shapes of every trainable tensor, in storage order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let (ny, nx) = (self.fine_grid.ny(), self.fine_grid.nx());
        let hid = self.hidden_channels;
        let (ek, rk) = (self.encoder_kernel, self.res_kernel);
        let mut out = Vec::new();
        for p in 0..self.n_params {
            out.push((format!("param{p}.col"), vec![ny, 1]));
            out.push((format!("param{p}.row"), vec![1, nx]));
        }
        let mut c_in = self.input_channels();
        for l in 0..self.encoder_layers {
            out.push((format!("enc{l}.w"), vec![hid, c_in, ek, ek]));
            out.push((format!("enc{l}.b"), vec![hid]));
            c_in = hid;
        }
        for k in 0..self.n_resblocks {
            out.push((format!("res{k}.w"), vec![hid, hid, rk, rk]));
            out.push((format!("res{k}.b"), vec![hid]));
            out.push((format!("res{k}.ln_gain"), vec![hid]));
            out.push((format!("res{k}.ln_bias"), vec![hid]));
        }
        let shuffled = hid / (self.shuffle_factor * self.shuffle_factor);
        out.push(("head.w".into(), vec![self.channels, shuffled, rk, rk]));
        out.push(("head.b".into(), vec![self.channels]));
        out
    }
}

/// Named trainable tensors in layout order.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights<T> {
    entries: Vec<(String, Tensor<T>)>,
}

impl<T: Real> Weights<T> {
    pub fn from_entries(config: &ModelConfig, entries: Vec<(String, Tensor<T>)>) -> Result<Self> {
        let layout = config.layout();
        if layout.len() != entries.len() {
            return Err(Error::ShapeMismatch(format!("expected {} tensors, got {}", layout.len(), entries.len())));
        }
        for ((name, shape), (n, t)) in layout.iter().zip(&entries) {
            if name != n || shape.as_slice() != t.shape() {
                return Err(Error::ShapeMismatch(format!("tensor {n} {:?} does not match {name} {shape:?}", t.shape())));
            }
        }
        Ok(Self { entries })
    }

    pub fn zeros(config: &ModelConfig) -> Self {
        Self { entries: config.layout().into_iter().map(|(n, s)| (n, Tensor::zeros(s))).collect() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.entries.iter().map(|(_, t)| t.len()).collect()
    }

    pub fn n_scalars(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> Weights<U> {
        Weights { entries: self.entries.iter().map(|(n, t)| (n.clone(), t.cast())).collect() }
    }

    /// Registers every tensor as a graph leaf, trainable or constant.
    pub fn register(&self, g: &mut Graph<T>, trainable: bool) -> Vec<Var> {
        self.entries.iter().map(|(_, t)| if trainable { g.param(t.clone()) } else { g.constant(t.clone()) }).collect()
    }
}

/// Deterministic initialization: fan-in uniform kernels, zero biases, unit
/// layer-norm gains and `0.01 * N(0, 1)` rank-1 parameter vectors.
pub fn init_weights(config: &ModelConfig, seed: u64) -> Weights<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries = config
        .layout()
        .into_iter()
        .map(|(name, shape)| {
            let n: usize = shape.iter().product();
            let data: Vec<f32> = if name.ends_with(".col") || name.ends_with(".row") {
                (0..n).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); 0.01 * z as f32 }).collect()
            } else if name.ends_with(".ln_gain") {
                vec![1.0; n]
            } else if name.ends_with(".w") {
                let fan_in: usize = shape[1..].iter().product();
                let bound = 1.0 / (fan_in as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                (0..n).map(|_| dist.sample(&mut rng) as f32).collect()
            } else {
                vec![0.0; n]
            };
            (name, Tensor::new(shape, data).expect("layout shape"))
        })
        .collect();
    Weights { entries }
}

pub fn field_to_tensor<T: Real>(f: &Field) -> Tensor<T> {
    let g = f.grid();
    Tensor::new(vec![f.channels(), g.ny(), g.nx()], f.data().iter().map(|&v| T::of(v)).collect()).expect("field layout")
}

pub fn tensor_to_field<T: Real>(t: &Tensor<T>, grid: Grid2D) -> Result<Field> {
    let c = match t.shape() {
        &[c, h, w] if h == grid.ny() && w == grid.nx() => c,
        other => return Err(Error::ShapeMismatch(format!("tensor {other:?} does not fit grid {}x{}", grid.ny(), grid.nx()))),
    };
    Field::from_vec(grid, c, t.data().iter().map(|v| v.to_f64_lossy()).collect())
}

/// Fits [`Normalization`] for `config` on consecutive snapshot pairs of
/// `ds`: state mean and standard deviation, root-mean-square of the PDE
/// feature and of the increment the network has to produce, mean absolute
/// value of each parameter.
pub fn fit_normalization(config: &ModelConfig, ds: &Dataset) -> Result<Normalization> {
    let mut probe = config.clone();
    probe.norm = Normalization::identity(config.n_params);
    let model = Model::from_weights(probe.clone(), Weights::zeros(&probe))?;
    let (mut s1, mut s2, mut count) = (0.0, 0.0, 0usize);
    let (mut f2, mut o2, mut pairs) = (0.0, 0.0, 0usize);
    let mut psum = vec![0.0; config.n_params];
    for t in ds.trajectories() {
        for (p, v) in psum.iter_mut().zip(t.params.values()) {
            *p += v.abs();
        }
        for s in &t.snapshots {
            s1 += s.data().iter().sum::<f64>();
            s2 += s.data().iter().map(|v| v * v).sum::<f64>();
            count += s.data().len();
        }
        for w in t.snapshots.windows(2) {
            let mut target = w[1].sub(&w[0])?;
            if let Some(d) = model.pde_increment(&w[0], &t.params)? {
                f2 += mean_square(&d);
                if config.adds_pde() {
                    target = target.sub(&d)?;
                }
            }
            o2 += mean_square(&target);
            pairs += 1;
        }
    }
    if count == 0 || pairs == 0 {
        return Err(Error::InvalidParameter("normalization needs at least one snapshot pair".into()));
    }
    let positive = |v: f64| if v.is_finite() && v > 0.0 { v } else { 1.0 };
    let mean = s1 / count as f64;
    let n_traj = ds.trajectories().len() as f64;
    Ok(Normalization {
        state_mean: mean,
        state_scale: positive((s2 / count as f64 - mean * mean).max(0.0).sqrt()),
        feature_scale: positive((f2 / pairs as f64).sqrt()),
        output_scale: positive((o2 / pairs as f64).sqrt()),
        param_scale: psum.into_iter().map(|p| positive(p / n_traj)).collect(),
    })
}

fn mean_square(f: &Field) -> f64 {
    f.data().iter().map(|v| v * v).sum::<f64>() / f.data().len() as f64
}

/// Upsampled coarse-solver increment: downsample `u`, advance it by
/// `dt_learn` in `substeps` Euler steps, upsample the difference.
pub fn pde_branch(u: &Field, spec: &PdeSpec, coarse: &Grid2D, substeps: usize, dt_learn: f64) -> Result<Field> {
    let uc = downsample_bilinear(u, coarse)?;
    let next = integrate(spec, &uc, dt_learn, substeps)?;
    upsample_bicubic(&next.sub(&uc)?, u.grid())
}

/// Records the trainable branch on `g` and returns its output increment.
/// `vars` are the weights registered in layout order.
pub fn forward_graph<T: Real>(
    g: &mut Graph<T>,
    config: &ModelConfig,
    vars: &[Var],
    state: Var,
    params: &[f64],
    feature: Option<Var>,
) -> Result<Var> {
    if params.len() != config.n_params {
        return Err(Error::ShapeMismatch(format!("model expects {} parameters, got {}", config.n_params, params.len())));
    }
    if feature.is_some() != config.feeds_feature() {
        return Err(Error::ShapeMismatch("PDE feature presence does not match the model configuration".into()));
    }
    let mut w = vars.iter().copied();
    let mut next = || w.next().ok_or_else(|| Error::Graph("too few weight variables".into()));
    let mut inputs = vec![state];
    for &p in params {
        let (col, row) = (next()?, next()?);
        inputs.push(g.rank1(T::of(p), col, row)?);
    }
    inputs.extend(feature);
    let (c_in, ..) = g.value(state).dims3()?;
    if c_in != config.channels {
        return Err(Error::ChannelMismatch { expected: config.channels, actual: c_in });
    }
    let mut h = g.concat(&inputs)?;
    for _ in 0..config.encoder_layers {
        let (wv, bv) = (next()?, next()?);
        let z = g.conv2d(h, wv, bv, config.encoder_stride, Padding::Zero(config.encoder_padding))?;
        h = g.relu(z);
    }
    let pad = Padding::Zero(config.res_kernel / 2);
    let eps = T::of(LAYER_NORM_EPS);
    for _ in 0..config.n_resblocks {
        let (wv, bv, gain, bias) = (next()?, next()?, next()?, next()?);
        let z = g.conv2d(h, wv, bv, 1, pad)?;
        let z = g.relu(z);
        let z = g.layer_norm(z, gain, bias, eps)?;
        h = g.add(h, z)?;
    }
    let h = g.pixel_shuffle(h, config.shuffle_factor)?;
    let (wv, bv) = (next()?, next()?);
    g.conv2d(h, wv, bv, 1, pad)
}

/// Evaluates the trainable branch without recording gradients.
pub fn trainable_forward<T: Real>(
    config: &ModelConfig,
    weights: &Weights<T>,
    state: &Tensor<T>,
    params: &[f64],
    feature: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let vars = weights.register(&mut g, false);
    let s = g.constant(state.clone());
    let f = feature.map(|f| g.constant(f.clone()));
    let out = forward_graph(&mut g, config, &vars, s, params, f)?;
    Ok(g.value(out).clone())
}

/// Increments that make up one model step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepParts {
    /// Upsampled coarse-solver increment (PDE-preserving model only).
    pub delta_pde: Option<Field>,
    pub delta_nn: Field,
}

/// A next-step model with single-precision weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    weights: Weights<f32>,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let weights = init_weights(&config, seed);
        Ok(Self { config, weights })
    }

    pub fn from_weights(config: ModelConfig, weights: Weights<f32>) -> Result<Self> {
        config.validate()?;
        let weights = Weights::from_entries(&config, weights.entries)?;
        Ok(Self { config, weights })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn weights(&self) -> &Weights<f32> {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Weights<f32> {
        &mut self.weights
    }

    pub fn label(&self) -> &'static str {
        self.config.label()
    }

    /// Scaled parameter values in the order the network consumes them.
    pub fn param_values(&self, params: &ParamVector) -> Result<Vec<f64>> {
        if params.len() != self.config.n_params {
            return Err(Error::ShapeMismatch(format!("model expects {} parameters, got {}", self.config.n_params, params.len())));
        }
        Ok(params.values().zip(&self.config.norm.param_scale).map(|(p, s)| p / s).collect())
    }

    /// Normalized state and, when the network consumes it, PDE feature.
    pub fn network_inputs(&self, u: &Field, delta_pde: Option<&Field>) -> (Tensor<f32>, Option<Tensor<f32>>) {
        let n = &self.config.norm;
        let state = field_to_tensor(&u.map(|v| (v - n.state_mean) / n.state_scale));
        let feature = if self.config.feeds_feature() {
            delta_pde.map(|d| field_to_tensor(&d.scale(1.0 / n.feature_scale)))
        } else {
            None
        };
        (state, feature)
    }

    /// The PDE branch for one sample, or `None` for the black-box model.
    pub fn pde_increment(&self, u: &Field, params: &ParamVector) -> Result<Option<Field>> {
        let Some(template) = &self.config.pde else { return Ok(None) };
        let spec = template.bind(params)?;
        pde_branch(u, &spec, &self.config.coarse_grid, self.config.substeps, self.config.dt_learn).map(Some)
    }

    pub fn step_parts(&self, u: &Field, params: &ParamVector) -> Result<StepParts> {
        if *u.grid() != self.config.fine_grid {
            return Err(Error::GridMismatch("state is not on the model's fine grid".into()));
        }
        let delta_pde = self.pde_increment(u, params)?;
        let (state, feature) = self.network_inputs(u, delta_pde.as_ref());
        let out = trainable_forward(&self.config, &self.weights, &state, &self.param_values(params)?, feature.as_ref())?;
        let delta_nn = tensor_to_field(&out, self.config.fine_grid)?.scale(self.config.norm.output_scale);
        Ok(StepParts { delta_pde, delta_nn })
    }

    /// `u + delta_pde + delta_nn` (PDE-preserving) or `u + delta_nn` (black box).
    pub fn step(&self, u: &Field, params: &ParamVector) -> Result<Field> {
        let parts = self.step_parts(u, params)?;
        let mut next = u.clone();
        if self.config.adds_pde() {
            if let Some(d) = &parts.delta_pde {
                next = next.add(d)?;
            }
        }
        let next = next.add(&parts.delta_nn)?;
        if !next.is_finite() {
            return Err(Error::Diverged { step: 0 });
        }
        Ok(next)
    }

    /// Hash of the configuration of the fixed PDE branch (template, coarse
    /// grid, substeps, learning step); training cannot change it.
    pub fn pde_branch_hash(&self) -> [u8; 32] {
        let text = match &self.config.pde {
            None => "none".to_string(),
            Some(p) => format!("{p:?}|{:?}|{}|{:?}", self.config.coarse_grid, self.config.substeps, self.config.dt_learn),
        };
        Sha256::digest(text.as_bytes()).into()
    }

    /// SHA-256 of the raw weight bytes, in layout order.
    pub fn weights_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for (name, t) in self.weights.iter() {
            h.update(name.as_bytes());
            for v in t.data() {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().into()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &encode_checkpoint(self)).map_err(FormatError::from)?;
        Ok(())
    }

    /// Loads weights for `config`; the stored fingerprint must match.
    pub fn load(path: &Path, config: ModelConfig) -> Result<Self> {
        let bytes = fs::read(path).map_err(FormatError::from)?;
        let weights = decode_checkpoint(&bytes, &config)?;
        Self::from_weights(config, weights)
    }
}

/// One step of a PDE-preserving model.
pub fn ppnn_step(model: &Model, u: &Field, params: &ParamVector) -> Result<Field> {
    if !model.config.is_ppnn() {
        return Err(Error::InvalidParameter("ppnn_step needs a model with a PDE branch".into()));
    }
    model.step(u, params)
}

/// One step of a black-box model.
pub fn blackbox_step(model: &Model, u: &Field, params: &ParamVector) -> Result<Field> {
    if model.config.is_ppnn() {
        return Err(Error::InvalidParameter("blackbox_step needs a model without a PDE branch".into()));
    }
    model.step(u, params)
}

pub fn encode_checkpoint(model: &Model) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + 4 * model.weights.n_scalars());
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&model.config.fingerprint().to_le_bytes());
    out.extend_from_slice(&(model.weights.len() as u32).to_le_bytes());
    for (name, t) in model.weights.iter() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.shape().len() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8], config: &ModelConfig) -> Result<Weights<f32>, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(CHECKPOINT_MAGIC)?;
    r.version(CHECKPOINT_VERSION)?;
    let found = r.u64()?;
    let expected = config.fingerprint();
    if found != expected {
        return Err(FormatError::FingerprintMismatch { expected, found });
    }
    let count = r.u32()? as usize;
    let layout = config.layout();
    let mut entries = Vec::with_capacity(layout.len());
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| FormatError::Dimension("tensor name is not UTF-8".into()))?;
        let ndim = r.u8()? as usize;
        let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let Some((_, expected_shape)) = layout.iter().find(|(n, _)| *n == name) else {
            return Err(FormatError::UnexpectedTensor(name));
        };
        if *expected_shape != shape {
            return Err(FormatError::Dimension(format!("tensor {name} has shape {shape:?}, expected {expected_shape:?}")));
        }
        let data = r.f32s(shape.iter().product())?;
        entries.push((name, Tensor::new(shape, data).expect("length checked")));
    }
    if r.remaining() != 0 {
        return Err(FormatError::TrailingBytes);
    }
    let mut ordered = Vec::with_capacity(layout.len());
    for (name, _) in &layout {
        let pos = entries.iter().position(|(n, _)| n == name).ok_or_else(|| FormatError::MissingTensor(name.clone()))?;
        ordered.push(entries.swap_remove(pos));
    }
    if let Some((name, _)) = entries.pop() {
        return Err(FormatError::UnexpectedTensor(name));
    }
    Ok(Weights { entries: ordered })
}
