use ppnn_core::datagen::{Dataset, DatasetMeta, Trajectory};
use ppnn_core::field::{Field, Grid2D, ParamVector};
use ppnn_core::model::{Model, ModelConfig, Weights};
use ppnn_core::physics::PdeSpec;
use ppnn_core::rollout::*;
use ppnn_core::{Error, Result};
use proptest::prelude::*;

fn grid() -> Grid2D {
    Grid2D::square(16, 3.2).unwrap()
}

fn nu(v: f64) -> ParamVector {
    ParamVector::single("nu", v).unwrap()
}

fn wave(phase: f64) -> Field {
    Field::from_fn(grid(), 2, |c, x, y| 0.5 + 0.4 * (1.96 * x + phase).sin() * (1.96 * y + c as f64).cos())
}

struct Identity;

impl Stepper for Identity {
    fn label(&self) -> &str {
        "identity"
    }
    fn step(&self, u: &Field, _: &ParamVector) -> Result<Field> {
        Ok(u.clone())
    }
}

/// Multiplies the state by a constant each step.
struct Grow(f64);

impl Stepper for Grow {
    fn label(&self) -> &str {
        "grow"
    }
    fn step(&self, u: &Field, _: &ParamVector) -> Result<Field> {
        Ok(u.scale(self.0))
    }
}

#[test]
fn identity_rollout_repeats_the_initial_state() {
    let u0 = wave(0.3);
    let r = rollout(&Identity, &u0, &nu(0.05), 5).unwrap();
    assert_eq!(r.states.len(), 6);
    assert!(r.states.iter().all(|s| *s == u0));
    assert_eq!(r.diverged_at, None);
    assert!(rollout(&Identity, &u0, &nu(0.05), 0).is_err());
}

#[test]
fn relative_error_examples() {
    let r = wave(0.0);
    assert_eq!(relative_error(&r, &r).unwrap(), 0.0);
    let zero = r.scale(0.0);
    assert!((relative_error(&zero, &r).unwrap() - 1.0).abs() < 1e-15);
    assert!((relative_error(&r.scale(1.2), &r).unwrap() - 0.2).abs() < 1e-14);
    assert!(matches!(relative_error(&r, &zero), Err(Error::InvalidParameter(_))));
}

#[test]
fn epsilon_mean_and_envelope() {
    let r = wave(1.0);
    let refs = vec![vec![r.clone(), r.clone()]; 3];
    let preds = vec![vec![r.clone(), r.scale(1.1)], vec![r.clone(), r.scale(0.8)], vec![r.clone(), r.scale(1.3)]];
    let t = epsilon_t(&preds, &refs).unwrap();
    assert_eq!(t.stats[0].mean, 0.0);
    let s = t.stats[1];
    assert!((s.mean - 0.2).abs() < 1e-14);
    assert!((s.min - 0.1).abs() < 1e-14 && (s.max - 0.3).abs() < 1e-14);
    assert_eq!(s.n_alive, 3);
    assert!(epsilon_t(&preds[..2], &refs).is_err());
}

#[test]
fn diverged_trajectories_leave_the_statistics() {
    let r = wave(2.0);
    let refs = vec![vec![r.clone(); 3]; 2];
    let preds = vec![vec![r.clone(); 3], vec![r.clone()]];
    let t = epsilon_t(&preds, &refs).unwrap();
    assert_eq!(t.stats[0].n_alive, 2);
    assert_eq!(t.stats[1].n_alive, 1);
    assert_eq!(t.per_trajectory[1][2], None);
    let empty = epsilon_t(&[vec![r.clone()]], &[vec![r.clone(); 2]]).unwrap();
    assert!(empty.stats[1].mean.is_nan());
}

#[test]
fn explosive_stepper_is_recorded_as_divergence() {
    let r = rollout(&Grow(1e200), &wave(0.0), &nu(0.05), 10).unwrap();
    assert_eq!(r.diverged_at, Some(2));
    assert_eq!(r.states.len(), 2);
}

#[test]
fn coarse_solver_matches_zero_weight_ppnn() {
    let cfg = ModelConfig::ppnn(grid(), Grid2D::square(8, 3.2).unwrap(), PdeSpec::burgers(0.05).unwrap(), 0.02).with_hidden_channels(16);
    let zero = Model::from_weights(cfg.clone(), Weights::zeros(&cfg)).unwrap();
    let coarse = CoarseSolver::from_config(&cfg).unwrap();
    let u0 = wave(0.7);
    let a = rollout(&coarse, &u0, &nu(0.04), 6).unwrap();
    let b = rollout(&zero, &u0, &nu(0.04), 6).unwrap();
    assert_eq!(a, b);
    assert!(CoarseSolver::from_config(&ModelConfig::blackbox(grid(), 0.02)).is_err());
}

#[test]
fn coarse_solver_diverges_for_low_viscosity_and_large_step() {
    // u^2 dt well above 2 nu: the explicit coarse update is unstable
    let fine = Grid2D::square(32, 3.2).unwrap();
    let coarse = CoarseSolver {
        template: PdeSpec::burgers(0.05).unwrap(),
        coarse_grid: Grid2D::square(8, 3.2).unwrap(),
        substeps: 1,
        dt_learn: 0.5,
    };
    let u0 = Field::from_fn(fine, 2, |c, x, y| 1.5 * (1.96 * x + c as f64).sin() * (1.96 * y).cos());
    let r = rollout(&coarse, &u0, &nu(0.001), 200).unwrap();
    let k = r.diverged_at.expect("the coarse solver should blow up");
    assert!(k < 200);
    assert_eq!(r.states.len(), k);
}

fn toy_dataset(n_traj: usize, n_snap: usize) -> Dataset {
    let trajectories = (0..n_traj)
        .map(|i| Trajectory {
            params: nu(0.02 + 0.01 * i as f64),
            snapshots: (0..n_snap).map(|k| wave(0.1 * k as f64 + i as f64)).collect(),
            dt_learn: 0.02,
        })
        .collect();
    let meta = DatasetMeta {
        system: "burgers".into(),
        scheme: "synthetic".into(),
        param_names: vec!["nu".into()],
        seeds: (0..n_traj as u64).collect(),
        extra: Default::default(),
    };
    Dataset::new(grid(), 2, 0.02, trajectories, meta).unwrap()
}

#[test]
fn compare_reports_steps_from_one() {
    let ds = toy_dataset(3, 6);
    let reports = compare(&[&Identity, &Named::new("renamed", &Grow(1.0))], &ds, 5, 3).unwrap();
    assert_eq!(reports.len(), 2);
    assert_eq!(reports[1].model, "renamed");
    assert_eq!(reports[0].n_steps(), 5);
    assert_eq!(reports[0].at(1).unwrap().step, 1);
    assert!(reports[0].at(0).is_none());
    assert_eq!(reports[0].stats, reports[1].stats);
    assert!(reports[0].mean_at(5).unwrap() > 0.0);
    assert_eq!(reports[0].first_divergence(), None);
    assert!(compare(&[&Identity], &ds, 6, 3).is_err());

    let csv = report_csv(&reports);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("step,time,model,eps_mean,eps_min,eps_max,n_alive"));
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[0], "1");
    assert!((first[1].parse::<f64>().unwrap() - 0.02).abs() < 1e-15);
    assert_eq!(first[2], "identity");
    assert_eq!(first[6], "3");
    assert_eq!(csv.lines().count(), 1 + 2 * 5);
}

#[test]
fn composed_rollout_equals_longer_rollout() {
    let cfg = ModelConfig::ppnn(grid(), Grid2D::square(8, 3.2).unwrap(), PdeSpec::burgers(0.05).unwrap(), 0.02).with_hidden_channels(16);
    let m = Model::new(cfg, 9).unwrap();
    let u0 = wave(0.4);
    let long = rollout(&m, &u0, &nu(0.03), 6).unwrap();
    let first = rollout(&m, &u0, &nu(0.03), 3).unwrap();
    let second = rollout(&m, first.states.last().unwrap(), &nu(0.03), 3).unwrap();
    assert_eq!(long.states[3..], second.states[..]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn relative_error_is_scale_invariant(phase in 0.0f64..6.0, s in 0.1f64..10.0, bias in -0.5f64..0.5) {
        let r = wave(phase);
        let p = r.map(|v| v + bias * v * v);
        let a = relative_error(&p, &r).unwrap();
        let b = relative_error(&p.scale(s), &r.scale(s)).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a));
    }

    #[test]
    fn mean_lies_in_envelope(scales in proptest::collection::vec(0.0f64..3.0, 1..6)) {
        let r = wave(0.2);
        let refs = vec![vec![r.clone()]; scales.len()];
        let preds: Vec<Vec<Field>> = scales.iter().map(|&s| vec![r.scale(s)]).collect();
        let st = epsilon_t(&preds, &refs).unwrap().stats[0];
        prop_assert!(st.min <= st.mean && st.mean <= st.max);
        prop_assert_eq!(st.n_alive, scales.len());
    }

    #[test]
    fn alive_count_never_increases(cuts in proptest::collection::vec(1usize..8, 1..5)) {
        let r = wave(0.9);
        let refs = vec![vec![r.clone(); 8]; cuts.len()];
        let preds: Vec<Vec<Field>> = cuts.iter().map(|&c| vec![r.clone(); c]).collect();
        let t = epsilon_t(&preds, &refs).unwrap();
        for w in t.stats.windows(2) {
            prop_assert!(w[1].n_alive <= w[0].n_alive);
        }
    }
}
