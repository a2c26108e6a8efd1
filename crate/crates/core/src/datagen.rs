//! Initial conditions, reference trajectories and the on-disk dataset container.
//!
//! # Dataset container
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! "PPDS" | u32 version = 1 | u32 channels | u32 ny | u32 nx
//! f64 lx | f64 ly | f64 dt_learn | u32 n_traj | u32 n_snap | u32 n_params
//! per trajectory:
//!     n_params x f64 parameter values
//!     n_snap x (channels * ny * nx) x f32, channel-major then row-major
//! ```
//!
//! A plain-text sidecar `<file>.meta` holds `key=value` lines with the system
//! name, scheme, parameter names and generator seeds.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, FormatError, Result};
use crate::field::{linear_rescale, Field, Grid2D, ParamVector};
use crate::io::{write_atomic, Reader};
use crate::physics::{euler_step, PdeSpec};

pub const DATASET_MAGIC: [u8; 4] = *b"PPDS";
pub const DATASET_VERSION: u32 = 1;
pub const IC_RANGE: (f64, f64) = (0.1, 1.1);

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-trajectory seed: `splitmix64(dataset_seed ^ splitmix64(index))`.
/// Depends only on the pair, so trajectories can be generated in any order.
pub fn mix_seed(dataset_seed: u64, index: u64) -> u64 {
    splitmix64(dataset_seed ^ splitmix64(index))
}

/// Two channels of i.i.d. standard normal noise, rescaled to [0.1, 1.1].
pub fn rd_random_ic(grid: Grid2D, seed: u64) -> Result<Field> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..2 * grid.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    linear_rescale(&Field::from_vec(grid, 2, data)?, IC_RANGE.0, IC_RANGE.1)
}

/// Random Fourier coefficients for one velocity component:
/// `sin_coeffs[(i + m) * (2m + 1) + (j + m)]` multiplies `sin(k_i x + k_j y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierModes {
    pub max_mode: usize,
    pub sin_coeffs: Vec<f64>,
    pub cos_coeffs: Vec<f64>,
}

impl FourierModes {
    pub fn zeros(max_mode: usize) -> Self {
        let n = (2 * max_mode + 1).pow(2);
        Self { max_mode, sin_coeffs: vec![0.0; n], cos_coeffs: vec![0.0; n] }
    }

    pub fn index(&self, i: isize, j: isize) -> usize {
        let m = self.max_mode as isize;
        ((i + m) * (2 * m + 1) + (j + m)) as usize
    }

    /// Evaluates the mode sum with wavenumbers `2 pi i / lx`, `2 pi j / ly`.
    pub fn evaluate(&self, grid: &Grid2D) -> Vec<f64> {
        let m = self.max_mode as isize;
        let mut out = vec![0.0; grid.len()];
        for i in -m..=m {
            for j in -m..=m {
                let k = self.index(i, j);
                let (a, b) = (self.sin_coeffs[k], self.cos_coeffs[k]);
                if a == 0.0 && b == 0.0 {
                    continue;
                }
                let (kx, ky) = (2.0 * PI * i as f64 / grid.lx(), 2.0 * PI * j as f64 / grid.ly());
                for jj in 0..grid.ny() {
                    for ii in 0..grid.nx() {
                        let (x, y) = grid.coords(ii, jj);
                        let phase = kx * x + ky * y;
                        out[jj * grid.nx() + ii] += a * phase.sin() + b * phase.cos();
                    }
                }
            }
        }
        out
    }
}

/// Velocity field built from `(2 max_mode + 1)^2` random sine and cosine modes
/// per component, then rescaled to [0.1, 1.1] as one object.
pub fn burgers_fourier_ic(grid: Grid2D, seed: u64, max_mode: usize) -> Result<Field> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |modes: &mut FourierModes| {
        for v in modes.sin_coeffs.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for v in modes.cos_coeffs.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
    };
    let mut u_modes = FourierModes::zeros(max_mode);
    let mut v_modes = FourierModes::zeros(max_mode);
    draw(&mut u_modes);
    draw(&mut v_modes);
    fourier_velocity(grid, &u_modes, &v_modes)
}

/// Two-component field from explicit coefficients, rescaled to [0.1, 1.1].
pub fn fourier_velocity(grid: Grid2D, u_modes: &FourierModes, v_modes: &FourierModes) -> Result<Field> {
    let mut data = u_modes.evaluate(&grid);
    data.extend(v_modes.evaluate(&grid));
    linear_rescale(&Field::from_vec(grid, 2, data)?, IC_RANGE.0, IC_RANGE.1)
}

/// Snapshots spaced by the learning step `dt_learn`, plus the parameters that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub params: ParamVector,
    pub snapshots: Vec<Field>,
    pub dt_learn: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// The first `n` snapshots.
    pub fn truncated(&self, n: usize) -> Trajectory {
        Trajectory { params: self.params.clone(), snapshots: self.snapshots[..n.min(self.len())].to_vec(), dt_learn: self.dt_learn }
    }
}

/// Runs `burn_in` Euler steps, then records a snapshot every
/// `steps_per_snapshot` steps until `n_snapshots` are collected.
/// Divergence aborts with the zero-based index of the failing numerical step.
pub fn generate_trajectory(
    spec: &PdeSpec,
    ic: &Field,
    dt_num: f64,
    steps_per_snapshot: usize,
    n_snapshots: usize,
    burn_in: usize,
) -> Result<Trajectory> {
    if !(dt_num > 0.0) || steps_per_snapshot == 0 {
        return Err(Error::InvalidParameter("need dt_num > 0 and steps_per_snapshot >= 1".into()));
    }
    if n_snapshots < 2 {
        return Err(Error::InvalidParameter("a trajectory needs at least 2 snapshots".into()));
    }
    let mut step = 0usize;
    let mut advance = |u: &Field| -> Result<Field> {
        let next = euler_step(spec, u, dt_num).map_err(|e| match e {
            Error::Diverged { .. } => Error::Diverged { step },
            other => other,
        })?;
        step += 1;
        Ok(next)
    };
    let mut u = ic.clone();
    for _ in 0..burn_in {
        u = advance(&u)?;
    }
    let mut snapshots = Vec::with_capacity(n_snapshots);
    snapshots.push(u.clone());
    while snapshots.len() < n_snapshots {
        for _ in 0..steps_per_snapshot {
            u = advance(&u)?;
        }
        snapshots.push(u.clone());
    }
    let params = ParamVector::single(spec.param_name(), spec.coefficient())?;
    Ok(Trajectory { params, snapshots, dt_learn: dt_num * steps_per_snapshot as f64 })
}

/// Descriptive metadata stored in the sidecar file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetMeta {
    pub system: String,
    pub scheme: String,
    pub param_names: Vec<String>,
    pub seeds: Vec<u64>,
    pub extra: BTreeMap<String, String>,
}

/// Homogeneous collection of trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    grid: Grid2D,
    channels: usize,
    dt_learn: f64,
    trajectories: Vec<Trajectory>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn new(grid: Grid2D, channels: usize, dt_learn: f64, trajectories: Vec<Trajectory>, meta: DatasetMeta) -> Result<Self> {
        let n_snap = trajectories.first().map_or(0, Trajectory::len);
        let n_params = trajectories.first().map_or(0, |t| t.params.len());
        for (k, t) in trajectories.iter().enumerate() {
            if t.len() != n_snap || t.params.len() != n_params {
                return Err(Error::ShapeMismatch(format!("trajectory {k} differs in snapshot or parameter count")));
            }
            if (t.dt_learn - dt_learn).abs() > 1e-12 * dt_learn.abs() {
                return Err(Error::ShapeMismatch(format!("trajectory {k} has dt {} instead of {dt_learn}", t.dt_learn)));
            }
            for s in &t.snapshots {
                if *s.grid() != grid || s.channels() != channels {
                    return Err(Error::ShapeMismatch(format!("trajectory {k} has a snapshot on a different grid")));
                }
                if !s.is_finite() {
                    return Err(Error::NonFinite);
                }
            }
        }
        Ok(Self { grid, channels, dt_learn, trajectories, meta })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dt_learn(&self) -> f64 {
        self.dt_learn
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn n_snapshots(&self) -> usize {
        self.trajectories.first().map_or(0, Trajectory::len)
    }

    /// Same dataset with every trajectory cut to its first `n` snapshots.
    pub fn truncated(&self, n: usize) -> Dataset {
        let trajectories = self.trajectories.iter().map(|t| t.truncated(n)).collect();
        Dataset { trajectories, ..self.clone() }
    }

    /// Rounds every stored value to single precision, the on-disk precision.
    pub fn quantized(&self) -> Dataset {
        let trajectories = self
            .trajectories
            .iter()
            .map(|t| Trajectory {
                params: t.params.clone(),
                snapshots: t.snapshots.iter().map(|s| s.map(|v| v as f32 as f64)).collect(),
                dt_learn: t.dt_learn,
            })
            .collect();
        Dataset { trajectories, ..self.clone() }
    }
}

/// Initial-condition family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IcKind {
    /// Rescaled white noise.
    Noise,
    /// Rescaled random Fourier modes up to the given wavenumber index.
    Fourier { max_mode: usize },
}

/// Everything needed to regenerate a dataset bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecipe {
    pub spec: PdeSpec,
    pub ic: IcKind,
    pub grid: Grid2D,
    /// Diffusion coefficient of each trajectory.
    pub coefficients: Vec<f64>,
    pub seed: u64,
    pub dt_num: f64,
    pub steps_per_snapshot: usize,
    pub n_snapshots: usize,
    pub burn_in: usize,
}

/// Generates every trajectory of `recipe`; trajectory `k` draws its initial
/// condition from `mix_seed(recipe.seed, k)`.
pub fn generate_dataset(recipe: &DatasetRecipe) -> Result<Dataset> {
    let mut trajectories = Vec::with_capacity(recipe.coefficients.len());
    let mut seeds = Vec::with_capacity(recipe.coefficients.len());
    for (k, &coefficient) in recipe.coefficients.iter().enumerate() {
        let seed = mix_seed(recipe.seed, k as u64);
        let ic = match recipe.ic {
            IcKind::Noise => rd_random_ic(recipe.grid, seed)?,
            IcKind::Fourier { max_mode } => burgers_fourier_ic(recipe.grid, seed, max_mode)?,
        };
        let spec = recipe.spec.with_coefficient(coefficient)?;
        let traj = generate_trajectory(&spec, &ic, recipe.dt_num, recipe.steps_per_snapshot, recipe.n_snapshots, recipe.burn_in)?;
        trajectories.push(traj);
        seeds.push(seed);
    }
    let meta = DatasetMeta {
        system: recipe.spec.label().to_string(),
        scheme: format!(
            "forward-euler dt={} laplacian-order={} convection=upwind3 steps-per-snapshot={} burn-in={}",
            recipe.dt_num,
            recipe.spec.laplacian_order.order(),
            recipe.steps_per_snapshot,
            recipe.burn_in
        ),
        param_names: vec![recipe.spec.param_name().to_string()],
        seeds,
        extra: BTreeMap::from([("dataset_seed".to_string(), recipe.seed.to_string())]),
    };
    Dataset::new(recipe.grid, 2, recipe.dt_num * recipe.steps_per_snapshot as f64, trajectories, meta)
}

/// `n_values` coefficients evenly spaced over `[lo, hi]` (endpoints included),
/// each repeated `per_value` times.
pub fn training_coefficients(lo: f64, hi: f64, n_values: usize, per_value: usize) -> Vec<f64> {
    let values: Vec<f64> = match n_values {
        0 => vec![],
        1 => vec![0.5 * (lo + hi)],
        n => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    };
    values.iter().flat_map(|&v| std::iter::repeat_n(v, per_value)).collect()
}

/// How unseen test coefficients relate to the training interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestSampling {
    /// Uniform inside the training interval, avoiding the training values.
    Interpolation,
    /// Uniform in `(hi, hi + (hi - lo) / 4]`.
    Extrapolation,
}

/// Draws `n` unseen coefficients.
pub fn test_coefficients(lo: f64, hi: f64, training: &[f64], n: usize, sampling: TestSampling, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = hi - lo;
    let tol = 1e-6 * width.abs().max(1e-12);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let v = match sampling {
            TestSampling::Interpolation => lo + width * rng.random::<f64>(),
            TestSampling::Extrapolation => hi + 0.25 * width * (1.0 - rng.random::<f64>()),
        };
        if training.iter().all(|t| (t - v).abs() > tol) {
            out.push(v);
        }
    }
    out
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".meta");
    PathBuf::from(p)
}

/// Serializes the dataset container. Snapshot values are stored as `f32`.
pub fn encode_dataset(ds: &Dataset) -> Vec<u8> {
    let n_snap = ds.n_snapshots();
    let n_params = ds.trajectories.first().map_or(0, |t| t.params.len());
    let per_snap = ds.channels * ds.grid.len();
    let mut out = Vec::with_capacity(64 + ds.trajectories.len() * (8 * n_params + 4 * n_snap * per_snap));
    out.extend_from_slice(&DATASET_MAGIC);
    for v in [DATASET_VERSION, ds.channels as u32, ds.grid.ny() as u32, ds.grid.nx() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in [ds.grid.lx(), ds.grid.ly(), ds.dt_learn] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in [ds.trajectories.len() as u32, n_snap as u32, n_params as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for t in &ds.trajectories {
        for p in t.params.values() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        for s in &t.snapshots {
            for &v in s.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    out
}

/// Parses a dataset container. Parameter names come from `param_names`,
/// falling back to `p0`, `p1`, ...
pub fn decode_dataset(bytes: &[u8], meta: DatasetMeta) -> Result<Dataset, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(DATASET_MAGIC)?;
    r.version(DATASET_VERSION)?;
    let channels = r.u32()? as usize;
    let ny = r.u32()? as usize;
    let nx = r.u32()? as usize;
    let lx = r.f64()?;
    let ly = r.f64()?;
    let dt_learn = r.f64()?;
    let n_traj = r.u32()? as usize;
    let n_snap = r.u32()? as usize;
    let n_params = r.u32()? as usize;
    let grid = Grid2D::new(nx, ny, lx, ly).map_err(|e| FormatError::Dimension(e.to_string()))?;
    if channels == 0 {
        return Err(FormatError::Dimension("zero channels".into()));
    }
    if !(dt_learn > 0.0) {
        return Err(FormatError::Dimension(format!("dt_learn {dt_learn} is not positive")));
    }
    let per_snap = channels
        .checked_mul(grid.len())
        .ok_or_else(|| FormatError::Dimension("snapshot size overflows".into()))?;
    let per_traj = (n_params * 8)
        .checked_add(n_snap.checked_mul(per_snap * 4).ok_or(FormatError::Truncated)?)
        .ok_or(FormatError::Truncated)?;
    let expected = per_traj.checked_mul(n_traj).ok_or(FormatError::Truncated)?;
    if r.remaining() < expected {
        return Err(FormatError::Truncated);
    }
    if r.remaining() > expected {
        return Err(FormatError::TrailingBytes);
    }
    let names: Vec<String> = (0..n_params)
        .map(|k| meta.param_names.get(k).cloned().unwrap_or_else(|| format!("p{k}")))
        .collect();
    let mut trajectories = Vec::with_capacity(n_traj);
    for _ in 0..n_traj {
        let mut comps = Vec::with_capacity(n_params);
        for name in &names {
            comps.push((name.clone(), r.f64()?));
        }
        let params = ParamVector::new(comps).map_err(|e| FormatError::Dimension(e.to_string()))?;
        let mut snapshots = Vec::with_capacity(n_snap);
        for _ in 0..n_snap {
            let data = r.f32s(per_snap)?.into_iter().map(f64::from).collect();
            snapshots.push(Field::from_vec(grid, channels, data).map_err(|e| FormatError::Dimension(e.to_string()))?);
        }
        trajectories.push(Trajectory { params, snapshots, dt_learn });
    }
    Dataset::new(grid, channels, dt_learn, trajectories, meta).map_err(|e| FormatError::Dimension(e.to_string()))
}

fn encode_meta(ds: &Dataset) -> String {
    let m = &ds.meta;
    let mut out = String::new();
    out.push_str(&format!("system={}\n", m.system));
    out.push_str(&format!("scheme={}\n", m.scheme));
    out.push_str(&format!("param_names={}\n", m.param_names.join(",")));
    out.push_str(&format!("seeds={}\n", m.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(",")));
    out.push_str(&format!("grid={}x{}\n", ds.grid.nx(), ds.grid.ny()));
    out.push_str(&format!("domain={}x{}\n", ds.grid.lx(), ds.grid.ly()));
    out.push_str(&format!("dt_learn={}\n", ds.dt_learn));
    out.push_str(&format!("trajectories={}\n", ds.trajectories.len()));
    out.push_str(&format!("snapshots={}\n", ds.n_snapshots()));
    for (k, v) in &m.extra {
        out.push_str(&format!("{k}={v}\n"));
    }
    out
}

fn decode_meta(text: &str) -> DatasetMeta {
    let mut meta = DatasetMeta::default();
    for line in text.lines() {
        let Some((key, value)) = line.split_once('=') else { continue };
        match key.trim() {
            "system" => meta.system = value.to_string(),
            "scheme" => meta.scheme = value.to_string(),
            "param_names" => meta.param_names = value.split(',').filter(|s| !s.is_empty()).map(str::to_string).collect(),
            "seeds" => meta.seeds = value.split(',').filter_map(|s| s.parse().ok()).collect(),
            "grid" | "domain" | "dt_learn" | "trajectories" | "snapshots" => {}
            other => {
                meta.extra.insert(other.to_string(), value.to_string());
            }
        }
    }
    meta
}

/// Writes the binary container and its `.meta` sidecar.
pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    write_atomic(path, &encode_dataset(ds)).map_err(FormatError::from)?;
    write_atomic(&meta_path(path), encode_meta(ds).as_bytes()).map_err(FormatError::from)?;
    Ok(())
}

/// Reads a dataset; the sidecar is optional.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path).map_err(FormatError::from)?;
    let meta = fs::read_to_string(meta_path(path)).map(|t| decode_meta(&t)).unwrap_or_default();
    Ok(decode_dataset(&bytes, meta)?)
}
