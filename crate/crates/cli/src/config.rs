//! Flat `key = value` run configuration.
//!
//! Lines are `key = value`; `#` starts a comment. The `system` key picks a
//! preset (`burgers` or `rd`) that supplies every key not given explicitly.
//! Unknown keys and repeated keys are errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use ppnn_core::datagen::{mix_seed, training_coefficients, test_coefficients, DatasetRecipe, IcKind, TestSampling};
use ppnn_core::field::Grid2D;
use ppnn_core::model::{ModelConfig, Normalization, PdeFusion};
use ppnn_core::physics::PdeSpec;
use ppnn_core::stencil::LaplacianOrder;
use ppnn_core::train::TrainConfig;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum System {
    Burgers,
    Rd,
}

impl System {
    pub fn as_str(self) -> &'static str {
        match self {
            System::Burgers => "burgers",
            System::Rd => "rd",
        }
    }
}

/// Physics preserved by the model: the full equation, its diffusion part
/// only, or nothing (the black-box baseline).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdeChoice {
    Full,
    Diffusion,
    None,
}

impl PdeChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            PdeChoice::Full => "full",
            PdeChoice::Diffusion => "diffusion",
            PdeChoice::None => "none",
        }
    }

    /// File stem used for checkpoints and loss histories.
    pub fn model_name(self) -> &'static str {
        match self {
            PdeChoice::Full => "ppnn",
            PdeChoice::Diffusion => "ppnn-partial",
            PdeChoice::None => "blackbox",
        }
    }
}

/// Every documented key with a one-line description, in file order.
pub const KEYS: &[(&str, &str)] = &[
    ("system", "burgers | rd; selects the preset for unspecified keys"),
    ("pde_spec", "full | diffusion | none; physics kept by the model (none = black box)"),
    ("fine_n", "fine grid points per side"),
    ("coarse_n", "coarse grid points per side of the PDE branch"),
    ("length", "side of the periodic square domain"),
    ("coeff_lo", "lower end of the varied coefficient (gamma or nu)"),
    ("coeff_hi", "upper end of the varied coefficient"),
    ("train_values", "distinct training coefficients, evenly spaced"),
    ("train_per_value", "trajectories per training coefficient"),
    ("test_count", "unseen test trajectories"),
    ("test_sampling", "interpolation | extrapolation"),
    ("dt_num", "explicit Euler step of the reference solver"),
    ("steps_per_snapshot", "solver steps per learning step"),
    ("train_snapshots", "snapshots per training trajectory (training horizon)"),
    ("test_snapshots", "snapshots per test trajectory"),
    ("burn_in", "solver steps discarded before the first snapshot"),
    ("ic_max_mode", "largest Fourier mode of the Burgers initial condition"),
    ("laplacian_order", "2 | 6"),
    ("substeps", "Euler sub-steps of the PDE branch per learning step"),
    ("hidden_channels", "width of the trainable network"),
    ("n_resblocks", "residual blocks of the trainable network"),
    ("epochs", "training epochs"),
    ("batch_size", "pairs per Adam step"),
    ("lr", "constant Adam learning rate"),
    ("shuffle", "true | false; reshuffle pairs every epoch"),
    ("rollout_steps", "autoregressive steps in compare and coarse"),
    ("seed", "master seed; every random stream is derived from it"),
    ("out", "output directory"),
    ("norm_state_mean", "fitted normalization (written beside checkpoints)"),
    ("norm_state_scale", "fitted normalization"),
    ("norm_feature_scale", "fitted normalization"),
    ("norm_output_scale", "fitted normalization"),
    ("norm_param_scale", "fitted normalization"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub system: System,
    pub pde_spec: PdeChoice,
    pub fine_n: usize,
    pub coarse_n: usize,
    pub length: f64,
    pub coeff_lo: f64,
    pub coeff_hi: f64,
    pub train_values: usize,
    pub train_per_value: usize,
    pub test_count: usize,
    pub test_sampling: TestSampling,
    pub dt_num: f64,
    pub steps_per_snapshot: usize,
    pub train_snapshots: usize,
    pub test_snapshots: usize,
    pub burn_in: usize,
    pub ic_max_mode: usize,
    pub laplacian_order: usize,
    pub substeps: usize,
    pub hidden_channels: usize,
    pub n_resblocks: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub shuffle: bool,
    pub rollout_steps: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Present once a model has been fitted to a training set.
    pub norm: Option<Normalization>,
}

impl RunConfig {
    /// Desk-scale defaults: 64x64 fine grid, 16x16 coarse grid, 16 training
    /// trajectories of 50 snapshots, 8 test trajectories of 101 snapshots.
    pub fn preset(system: System) -> Self {
        let base = Self {
            system,
            pde_spec: PdeChoice::Full,
            fine_n: 64,
            coarse_n: 16,
            length: 3.2,
            coeff_lo: 0.02,
            coeff_hi: 0.07,
            train_values: 4,
            train_per_value: 4,
            test_count: 8,
            test_sampling: TestSampling::Interpolation,
            dt_num: 1e-4,
            steps_per_snapshot: 200,
            train_snapshots: 50,
            test_snapshots: 101,
            burn_in: 0,
            ic_max_mode: 4,
            laplacian_order: 6,
            substeps: 1,
            hidden_channels: 32,
            n_resblocks: 3,
            epochs: 40,
            batch_size: 16,
            lr: 1e-3,
            shuffle: true,
            rollout_steps: 100,
            seed: 0,
            out: PathBuf::from("out"),
            norm: None,
        };
        match system {
            System::Burgers => base,
            System::Rd => Self { length: 6.4, coeff_lo: 0.6, coeff_hi: 1.3, dt_num: 8e-5, burn_in: 2000, epochs: 45, ..base },
        }
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`, got {raw:?}", i + 1)))?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if !KEYS.iter().any(|(name, _)| *name == k) {
                return Err(CliError::Config(format!("line {}: unknown key {k:?}", i + 1)));
            }
            if let Some((first, _)) = entries.insert(k.clone(), (i + 1, v)) {
                return Err(CliError::Config(format!("line {}: key {k:?} already set on line {first}", i + 1)));
            }
        }
        let system = match entries.remove("system") {
            Some((_, v)) => parse_system(&v)?,
            None => return Err(CliError::Config("missing required key \"system\"".into())),
        };
        let mut cfg = Self::preset(system);
        let mut norm = NormParts::default();
        for (k, (line, v)) in entries {
            cfg.set_with(&k, &v, &mut norm).map_err(|e| match e {
                CliError::Config(m) => CliError::Config(format!("line {line}: {m}")),
                other => other,
            })?;
        }
        cfg.norm = norm.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key from its textual value. Normalization keys must be given
    /// together and are only accepted through [`RunConfig::parse`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        if key.starts_with("norm_") || key == "system" {
            return Err(CliError::Config(format!("{key} cannot be overridden")));
        }
        self.set_with(key, value, &mut NormParts::default())
    }

    fn set_with(&mut self, key: &str, v: &str, norm: &mut NormParts) -> Result<(), CliError> {
        match key {
            "system" => self.system = parse_system(v)?,
            "pde_spec" => {
                self.pde_spec = match v {
                    "full" => PdeChoice::Full,
                    "diffusion" => PdeChoice::Diffusion,
                    "none" => PdeChoice::None,
                    _ => return Err(bad(key, v)),
                }
            }
            "fine_n" => self.fine_n = num(key, v)?,
            "coarse_n" => self.coarse_n = num(key, v)?,
            "length" => self.length = num(key, v)?,
            "coeff_lo" => self.coeff_lo = num(key, v)?,
            "coeff_hi" => self.coeff_hi = num(key, v)?,
            "train_values" => self.train_values = num(key, v)?,
            "train_per_value" => self.train_per_value = num(key, v)?,
            "test_count" => self.test_count = num(key, v)?,
            "test_sampling" => {
                self.test_sampling = match v {
                    "interpolation" => TestSampling::Interpolation,
                    "extrapolation" => TestSampling::Extrapolation,
                    _ => return Err(bad(key, v)),
                }
            }
            "dt_num" => self.dt_num = num(key, v)?,
            "steps_per_snapshot" => self.steps_per_snapshot = num(key, v)?,
            "train_snapshots" => self.train_snapshots = num(key, v)?,
            "test_snapshots" => self.test_snapshots = num(key, v)?,
            "burn_in" => self.burn_in = num(key, v)?,
            "ic_max_mode" => self.ic_max_mode = num(key, v)?,
            "laplacian_order" => self.laplacian_order = num(key, v)?,
            "substeps" => self.substeps = num(key, v)?,
            "hidden_channels" => self.hidden_channels = num(key, v)?,
            "n_resblocks" => self.n_resblocks = num(key, v)?,
            "epochs" => self.epochs = num(key, v)?,
            "batch_size" => self.batch_size = num(key, v)?,
            "lr" => self.lr = num(key, v)?,
            "shuffle" => self.shuffle = num(key, v)?,
            "rollout_steps" => self.rollout_steps = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "out" => self.out = PathBuf::from(v),
            "norm_state_mean" => norm.state_mean = Some(num(key, v)?),
            "norm_state_scale" => norm.state_scale = Some(num(key, v)?),
            "norm_feature_scale" => norm.feature_scale = Some(num(key, v)?),
            "norm_output_scale" => norm.output_scale = Some(num(key, v)?),
            "norm_param_scale" => {
                norm.param_scale = Some(v.split(',').map(|p| num(key, p.trim())).collect::<Result<Vec<f64>, _>>()?)
            }
            _ => return Err(CliError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |m: String| Err(CliError::Config(m));
        if self.pde_spec == PdeChoice::Diffusion && self.system == System::Burgers {
            return fail("pde_spec = diffusion is only defined for the rd system".into());
        }
        if !(self.coeff_lo > 0.0 && self.coeff_hi > self.coeff_lo && self.coeff_hi.is_finite()) {
            return fail(format!("coefficient range [{}, {}] must satisfy 0 < lo < hi", self.coeff_lo, self.coeff_hi));
        }
        if !(self.length > 0.0 && self.length.is_finite()) || !(self.dt_num > 0.0 && self.dt_num.is_finite()) {
            return fail("length and dt_num must be positive".into());
        }
        for (k, v) in [
            ("fine_n", self.fine_n),
            ("coarse_n", self.coarse_n),
            ("train_values", self.train_values),
            ("train_per_value", self.train_per_value),
            ("test_count", self.test_count),
            ("steps_per_snapshot", self.steps_per_snapshot),
            ("substeps", self.substeps),
            ("hidden_channels", self.hidden_channels),
            ("rollout_steps", self.rollout_steps),
        ] {
            if v == 0 {
                return fail(format!("{k} must be at least 1"));
            }
        }
        if self.train_snapshots < 2 {
            return fail("train_snapshots must be at least 2".into());
        }
        if self.test_snapshots < 2 {
            return fail("test_snapshots must be at least 2".into());
        }
        LaplacianOrder::from_order(self.laplacian_order).map_err(|e| CliError::Config(e.to_string()))?;
        self.train_config().validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.model_config(self.norm.clone().unwrap_or_else(|| Normalization::identity(1)))?
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    /// Resolved configuration with every key, in documented order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let sampling = match self.test_sampling {
            TestSampling::Interpolation => "interpolation",
            TestSampling::Extrapolation => "extrapolation",
        };
        let values: Vec<(&str, String)> = vec![
            ("system", self.system.as_str().into()),
            ("pde_spec", self.pde_spec.as_str().into()),
            ("fine_n", self.fine_n.to_string()),
            ("coarse_n", self.coarse_n.to_string()),
            ("length", format!("{:?}", self.length)),
            ("coeff_lo", format!("{:?}", self.coeff_lo)),
            ("coeff_hi", format!("{:?}", self.coeff_hi)),
            ("train_values", self.train_values.to_string()),
            ("train_per_value", self.train_per_value.to_string()),
            ("test_count", self.test_count.to_string()),
            ("test_sampling", sampling.into()),
            ("dt_num", format!("{:?}", self.dt_num)),
            ("steps_per_snapshot", self.steps_per_snapshot.to_string()),
            ("train_snapshots", self.train_snapshots.to_string()),
            ("test_snapshots", self.test_snapshots.to_string()),
            ("burn_in", self.burn_in.to_string()),
            ("ic_max_mode", self.ic_max_mode.to_string()),
            ("laplacian_order", self.laplacian_order.to_string()),
            ("substeps", self.substeps.to_string()),
            ("hidden_channels", self.hidden_channels.to_string()),
            ("n_resblocks", self.n_resblocks.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("lr", format!("{:?}", self.lr)),
            ("shuffle", self.shuffle.to_string()),
            ("rollout_steps", self.rollout_steps.to_string()),
            ("seed", self.seed.to_string()),
            ("out", self.out.display().to_string()),
        ];
        for (k, v) in values {
            let _ = writeln!(s, "{k} = {v}");
        }
        if let Some(n) = &self.norm {
            let _ = writeln!(s, "norm_state_mean = {:?}", n.state_mean);
            let _ = writeln!(s, "norm_state_scale = {:?}", n.state_scale);
            let _ = writeln!(s, "norm_feature_scale = {:?}", n.feature_scale);
            let _ = writeln!(s, "norm_output_scale = {:?}", n.output_scale);
            let ps: Vec<String> = n.param_scale.iter().map(|p| format!("{p:?}")).collect();
            let _ = writeln!(s, "norm_param_scale = {}", ps.join(","));
        }
        s
    }

    pub fn fine_grid(&self) -> Result<Grid2D, CliError> {
        Ok(Grid2D::square(self.fine_n, self.length)?)
    }

    pub fn coarse_grid(&self) -> Result<Grid2D, CliError> {
        Ok(Grid2D::square(self.coarse_n, self.length)?)
    }

    pub fn dt_learn(&self) -> f64 {
        self.dt_num * self.steps_per_snapshot as f64
    }

    fn order(&self) -> LaplacianOrder {
        LaplacianOrder::from_order(self.laplacian_order).unwrap_or(LaplacianOrder::Sixth)
    }

    fn mid(&self) -> f64 {
        0.5 * (self.coeff_lo + self.coeff_hi)
    }

    /// Physics that generates the data.
    pub fn data_spec(&self) -> Result<PdeSpec, CliError> {
        let spec = match self.system {
            System::Burgers => PdeSpec::burgers(self.mid())?,
            System::Rd => PdeSpec::rd_full(self.mid())?,
        };
        Ok(spec.with_laplacian_order(self.order()))
    }

    /// Physics preserved by the model, `None` for the black box.
    pub fn model_spec(&self) -> Result<Option<PdeSpec>, CliError> {
        let spec = match (self.pde_spec, self.system) {
            (PdeChoice::None, _) => return Ok(None),
            (PdeChoice::Full, _) => self.data_spec()?,
            (PdeChoice::Diffusion, System::Rd) => PdeSpec::rd_diffusion_only(self.mid())?,
            (PdeChoice::Diffusion, System::Burgers) => {
                return Err(CliError::Config("pde_spec = diffusion is only defined for the rd system".into()))
            }
        };
        Ok(Some(spec.with_laplacian_order(self.order())))
    }

    pub fn training_coefficients(&self) -> Vec<f64> {
        training_coefficients(self.coeff_lo, self.coeff_hi, self.train_values, self.train_per_value)
    }

    pub fn test_coefficients(&self) -> Vec<f64> {
        let training = self.training_coefficients();
        test_coefficients(self.coeff_lo, self.coeff_hi, &training, self.test_count, self.test_sampling, mix_seed(self.seed, 2))
    }

    fn ic(&self) -> IcKind {
        match self.system {
            System::Burgers => IcKind::Fourier { max_mode: self.ic_max_mode },
            System::Rd => IcKind::Noise,
        }
    }

    pub fn train_recipe(&self) -> Result<DatasetRecipe, CliError> {
        Ok(DatasetRecipe {
            spec: self.data_spec()?,
            ic: self.ic(),
            grid: self.fine_grid()?,
            coefficients: self.training_coefficients(),
            seed: mix_seed(self.seed, 0),
            dt_num: self.dt_num,
            steps_per_snapshot: self.steps_per_snapshot,
            n_snapshots: self.train_snapshots,
            burn_in: self.burn_in,
        })
    }

    pub fn test_recipe(&self) -> Result<DatasetRecipe, CliError> {
        Ok(DatasetRecipe {
            coefficients: self.test_coefficients(),
            seed: mix_seed(self.seed, 1),
            n_snapshots: self.test_snapshots,
            ..self.train_recipe()?
        })
    }

    /// Architecture for this run with the given normalization.
    pub fn model_config(&self, norm: Normalization) -> Result<ModelConfig, CliError> {
        let fine = self.fine_grid()?;
        let dt = self.dt_learn();
        let mut cfg = match self.model_spec()? {
            Some(spec) => ModelConfig::ppnn(fine, self.coarse_grid()?, spec, dt),
            None => ModelConfig::blackbox(fine, dt),
        };
        cfg.hidden_channels = self.hidden_channels;
        cfg.n_resblocks = self.n_resblocks;
        cfg.substeps = self.substeps;
        cfg.fusion = PdeFusion::AddAndInput;
        cfg.norm = norm;
        Ok(cfg)
    }

    pub fn init_seed(&self) -> u64 {
        mix_seed(self.seed, 3)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            seed: mix_seed(self.seed, 4),
            shuffle: self.shuffle,
            start_epoch: 0,
        }
    }
}

#[derive(Default)]
struct NormParts {
    state_mean: Option<f64>,
    state_scale: Option<f64>,
    feature_scale: Option<f64>,
    output_scale: Option<f64>,
    param_scale: Option<Vec<f64>>,
}

impl NormParts {
    fn finish(self) -> Result<Option<Normalization>, CliError> {
        match (self.state_mean, self.state_scale, self.feature_scale, self.output_scale, self.param_scale) {
            (None, None, None, None, None) => Ok(None),
            (Some(state_mean), Some(state_scale), Some(feature_scale), Some(output_scale), Some(param_scale)) => {
                let n = Normalization { state_mean, state_scale, feature_scale, output_scale, param_scale };
                n.validate(1).map_err(|e| CliError::Config(e.to_string()))?;
                Ok(Some(n))
            }
            _ => Err(CliError::Config("normalization keys must be given all together".into())),
        }
    }
}

fn parse_system(v: &str) -> Result<System, CliError> {
    match v {
        "burgers" => Ok(System::Burgers),
        "rd" => Ok(System::Rd),
        _ => Err(bad("system", v)),
    }
}

fn bad(key: &str, v: &str) -> CliError {
    CliError::Config(format!("invalid value {v:?} for {key}"))
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse().map_err(|_| bad(key, v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_roundtrips_through_text() {
        for system in [System::Burgers, System::Rd] {
            let cfg = RunConfig::preset(system);
            assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
        }
    }

    #[test]
    fn normalization_roundtrips_bitwise() {
        let mut cfg = RunConfig::preset(System::Rd);
        cfg.norm = Some(Normalization {
            state_mean: 0.5358634934249176,
            state_scale: 0.06491845798062947,
            feature_scale: 0.002425216055553359,
            output_scale: 1.0236112485983413e-5,
            param_scale: vec![0.9500000000000001],
        });
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_input() {
        let err = |t: &str| RunConfig::parse(t).unwrap_err().to_string();
        assert!(err("system = rd\nwidth = 3\n").contains("unknown key"));
        assert!(err("system = rd\nepochs = 2\nepochs = 3\n").contains("already set"));
        assert!(err("epochs = 2\n").contains("system"));
        assert!(err("system = rd\ncoeff_lo = -1\n").contains("coefficient"));
        assert!(err("system = burgers\npde_spec = diffusion\n").contains("rd system"));
        assert!(err("system = rd\nnorm_state_mean = 1\n").contains("together"));
        assert!(err("system = rd\nepochs = many\n").contains("epochs"));
        assert!(err("system = rd\nhidden_channels = 40\n").contains("hidden"));
        assert!(err("system = rd\njust words\n").contains("key = value"));
    }

    #[test]
    fn comments_and_overrides() {
        let mut cfg = RunConfig::parse("# desk\nsystem = rd   # preset\n\nepochs = 3\n").unwrap();
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.length, 6.4);
        cfg.set("seed", "9").unwrap();
        assert_eq!(cfg.seed, 9);
        assert!(cfg.set("norm_state_mean", "1").is_err());
        assert!(cfg.set("nonsense", "1").is_err());
    }

    #[test]
    fn derived_quantities() {
        let cfg = RunConfig::preset(System::Rd);
        assert_eq!(cfg.training_coefficients().len(), 16);
        assert!((cfg.dt_learn() - 0.016).abs() < 1e-15);
        let recipe = cfg.test_recipe().unwrap();
        assert_eq!(recipe.coefficients.len(), 8);
        assert_eq!(recipe.n_snapshots, 101);
        assert_ne!(recipe.seed, cfg.train_recipe().unwrap().seed);
        let bb = RunConfig { pde_spec: PdeChoice::None, ..cfg.clone() };
        assert!(!bb.model_config(Normalization::identity(1)).unwrap().is_ppnn());
        assert_eq!(cfg.model_config(Normalization::identity(1)).unwrap().input_channels(), 5);
        // the two model kinds differ only in the preserved physics
        let (a, b) = (cfg.model_config(Normalization::identity(1)).unwrap(), bb.model_config(Normalization::identity(1)).unwrap());
        assert_eq!((a.hidden_channels, a.n_resblocks, a.fine_grid), (b.hidden_channels, b.n_resblocks, b.fine_grid));
    }
}
