//! The four pipeline stages. Each writes its resolved configuration next to
//! its outputs; every file is written atomically.

use std::fs;
use std::path::{Path, PathBuf};

use ppnn_core::datagen::{generate_dataset, read_dataset, write_dataset, Dataset};
use ppnn_core::io::write_atomic;
use ppnn_core::model::{fit_normalization, Model, Normalization};
use ppnn_core::rollout::{compare as compare_rollouts, report_csv, CoarseSolver, Named, RolloutReport, Stepper};
use ppnn_core::train::{train as train_model, TrainHistory};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::svg::error_chart;

pub const TRAIN_FILE: &str = "train.ppds";
pub const TEST_FILE: &str = "test.ppds";

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    write_atomic(path, bytes).map_err(CliError::io(path))
}

/// Sidecar holding the resolved configuration and fitted normalization of a checkpoint.
pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    let mut p = checkpoint.as_os_str().to_owned();
    p.push(".cfg");
    PathBuf::from(p)
}

/// Loss history stored beside a checkpoint `<dir>/<name>.ppck` as `<dir>/<name>_loss.csv`.
pub fn loss_path(checkpoint: &Path) -> PathBuf {
    let stem = checkpoint.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    checkpoint.with_file_name(format!("{stem}_loss.csv"))
}

pub fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    read_dataset(path).map_err(CliError::file(path))
}

/// Loads a checkpoint together with the configuration it was trained under.
pub fn load_model(checkpoint: &Path) -> Result<(Model, RunConfig), CliError> {
    let side = sidecar_path(checkpoint);
    let text = fs::read_to_string(&side).map_err(CliError::io(&side))?;
    let cfg = RunConfig::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", side.display())))?;
    let norm = cfg.norm.clone().ok_or_else(|| CliError::Config(format!("{}: no normalization recorded", side.display())))?;
    let model = Model::load(checkpoint, cfg.model_config(norm)?).map_err(CliError::file(checkpoint))?;
    Ok((model, cfg))
}

fn check_dataset(cfg: &RunConfig, ds: &Dataset, path: &Path) -> Result<(), CliError> {
    let fine = cfg.fine_grid()?;
    if *ds.grid() != fine || ds.channels() != 2 {
        return Err(CliError::Config(format!(
            "{}: dataset grid {}x{} does not match the configured {}x{}",
            path.display(),
            ds.grid().nx(),
            ds.grid().ny(),
            fine.nx(),
            fine.ny()
        )));
    }
    if (ds.dt_learn() - cfg.dt_learn()).abs() > 1e-12 * cfg.dt_learn() {
        return Err(CliError::Config(format!(
            "{}: dataset learning step {} differs from the configured {}",
            path.display(),
            ds.dt_learn(),
            cfg.dt_learn()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct DatasetSummary {
    pub path: PathBuf,
    pub trajectories: usize,
    pub snapshots: usize,
    pub dt_learn: f64,
}

/// Generates the training and test sets into `cfg.out`.
pub fn gen_data(cfg: &RunConfig) -> Result<Vec<DatasetSummary>, CliError> {
    ensure_dir(&cfg.out)?;
    let mut out = Vec::new();
    for (name, recipe) in [(TRAIN_FILE, cfg.train_recipe()?), (TEST_FILE, cfg.test_recipe()?)] {
        let ds = generate_dataset(&recipe)?;
        let path = cfg.out.join(name);
        write_dataset(&ds, &path).map_err(CliError::file(&path))?;
        out.push(DatasetSummary { path, trajectories: ds.trajectories().len(), snapshots: ds.n_snapshots(), dt_learn: ds.dt_learn() });
    }
    write(&cfg.out.join("gen-data.cfg"), cfg.to_text().as_bytes())?;
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub checkpoint: PathBuf,
    pub loss_csv: PathBuf,
    pub history: TrainHistory,
    pub model: Model,
}

/// Trains the model selected by `cfg.pde_spec` on `dataset`. With `resume`
/// the weights, normalization and loss history of that checkpoint are
/// continued; the optimizer moments restart from zero.
pub fn train(cfg: &RunConfig, dataset: &Path, eval: Option<&Path>, resume: Option<&Path>) -> Result<TrainOutput, CliError> {
    let ds = load_dataset(dataset)?;
    check_dataset(cfg, &ds, dataset)?;
    let eval_ds = eval.map(|p| load_dataset(p).and_then(|d| check_dataset(cfg, &d, p).map(|_| d))).transpose()?;
    let (mut model, mut history, norm) = match resume {
        Some(ckpt) => {
            let (model, prev) = load_model(ckpt)?;
            if prev.pde_spec != cfg.pde_spec || prev.system != cfg.system {
                return Err(CliError::Config(format!("{} was trained with a different system or pde_spec", ckpt.display())));
            }
            let lp = loss_path(ckpt);
            let text = fs::read_to_string(&lp).map_err(CliError::io(&lp))?;
            let history = TrainHistory::from_csv(&text).map_err(CliError::file(&lp))?;
            let norm = prev.norm.clone().expect("load_model checks normalization");
            (model, history, norm)
        }
        None => {
            let norm = fit_normalization(&cfg.model_config(Normalization::identity(1))?, &ds)?;
            (Model::new(cfg.model_config(norm.clone())?, cfg.init_seed())?, TrainHistory::default(), norm)
        }
    };
    let mut tc = cfg.train_config();
    tc.start_epoch = history.last_epoch().map_or(0, |e| e + 1);
    history.extend(train_model(&mut model, &ds, eval_ds.as_ref(), &tc)?);

    ensure_dir(&cfg.out)?;
    let checkpoint = cfg.out.join(format!("{}.ppck", cfg.pde_spec.model_name()));
    let resolved = RunConfig { norm: Some(norm), ..cfg.clone() };
    model.save(&checkpoint).map_err(CliError::file(&checkpoint))?;
    write(&sidecar_path(&checkpoint), resolved.to_text().as_bytes())?;
    let loss_csv = loss_path(&checkpoint);
    write(&loss_csv, history.to_csv().as_bytes())?;
    Ok(TrainOutput { checkpoint, loss_csv, history, model })
}

#[derive(Debug, Clone)]
pub struct CompareOutput {
    pub report_csv: PathBuf,
    pub report_svg: PathBuf,
    pub reports: Vec<RolloutReport>,
}

fn unique_names(paths: &[PathBuf]) -> Vec<String> {
    let stems: Vec<String> =
        paths.iter().map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into())).collect();
    stems
        .iter()
        .enumerate()
        .map(|(i, s)| if stems.iter().filter(|t| *t == s).count() > 1 { format!("{s}#{}", i + 1) } else { s.clone() })
        .collect()
}

fn emit(cfg: &RunConfig, stem: &str, title: &str, steppers: &[&dyn Stepper], test: &Dataset) -> Result<CompareOutput, CliError> {
    let reports = compare_rollouts(steppers, test, cfg.rollout_steps, cfg.train_snapshots)?;
    ensure_dir(&cfg.out)?;
    let report_csv_path = cfg.out.join(format!("{stem}.csv"));
    let report_svg = cfg.out.join(format!("{stem}.svg"));
    write(&report_csv_path, report_csv(&reports).as_bytes())?;
    write(&report_svg, error_chart(&reports, title).as_bytes())?;
    write(&cfg.out.join(format!("{stem}.cfg")), cfg.to_text().as_bytes())?;
    Ok(CompareOutput { report_csv: report_csv_path, report_svg, reports })
}

/// Rolls every checkpoint out on the test set and writes `report.csv` and `report.svg`.
pub fn compare(cfg: &RunConfig, checkpoints: &[PathBuf], dataset: &Path) -> Result<CompareOutput, CliError> {
    if checkpoints.is_empty() {
        return Err(CliError::Config("compare needs at least one --checkpoint".into()));
    }
    let test = load_dataset(dataset)?;
    check_dataset(cfg, &test, dataset)?;
    let models = checkpoints.iter().map(|c| load_model(c).map(|(m, _)| m)).collect::<Result<Vec<_>, _>>()?;
    let names = unique_names(checkpoints);
    let named: Vec<Named> = names.iter().zip(&models).map(|(n, m)| Named::new(n.clone(), m as &dyn Stepper)).collect();
    let steppers: Vec<&dyn Stepper> = named.iter().map(|n| n as &dyn Stepper).collect();
    emit(cfg, "report", &format!("{} rollout error", cfg.system.as_str()), &steppers, &test)
}

/// Coarse solver alone (the PDE-preserving branch without the network), optionally
/// next to trained checkpoints; writes `coarse_report.csv` and `coarse_report.svg`.
pub fn coarse(cfg: &RunConfig, checkpoints: &[PathBuf], dataset: &Path) -> Result<CompareOutput, CliError> {
    let test = load_dataset(dataset)?;
    check_dataset(cfg, &test, dataset)?;
    let solver = CoarseSolver {
        template: cfg.model_spec()?.map_or_else(|| cfg.data_spec(), Ok)?,
        coarse_grid: cfg.coarse_grid()?,
        substeps: cfg.substeps,
        dt_learn: cfg.dt_learn(),
    };
    let models = checkpoints.iter().map(|c| load_model(c).map(|(m, _)| m)).collect::<Result<Vec<_>, _>>()?;
    let names = unique_names(checkpoints);
    let named: Vec<Named> = names.iter().zip(&models).map(|(n, m)| Named::new(n.clone(), m as &dyn Stepper)).collect();
    let mut steppers: Vec<&dyn Stepper> = vec![&solver];
    steppers.extend(named.iter().map(|n| n as &dyn Stepper));
    emit(cfg, "coarse_report", &format!("{} coarse solver vs models", cfg.system.as_str()), &steppers, &test)
}
