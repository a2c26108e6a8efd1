use ppnn_core::autodiff::{compare_gradients, gradcheck, GradcheckOptions, Graph, Padding, Tensor, Var};
use ppnn_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-5;
const SEEDS: u64 = 20;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Random target so every output coordinate gets a distinct upstream gradient.
fn loss_against(g: &mut Graph<f64>, y: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xdead_beef);
    let target = random(&mut rng, g.value(y).shape());
    let t = g.constant(target);
    g.mse(y, t)
}

fn check(name: &str, inputs: Vec<Tensor<f64>>, seed: u64, build: impl Fn(&mut Graph<f64>, &[Var]) -> Result<Var>) {
    let opts = GradcheckOptions { max_coords: Some(40), seed, ..Default::default() };
    let r = gradcheck(&inputs, build, &opts).unwrap();
    assert!(r.passed(TOL), "{name} seed {seed}: max rel error {:e} at {:?}", r.max_rel_error, r.worst);
}

#[test]
fn conv_zero_padded_strided() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = vec![random(&mut rng, &[2, 8, 8]), random(&mut rng, &[3, 2, 6, 6]), random(&mut rng, &[3])];
        check("conv stride 2", inputs, seed, |g, v| {
            let y = g.conv2d(v[0], v[1], v[2], 2, Padding::Zero(2))?;
            loss_against(g, y, seed)
        });
    }
}

#[test]
fn conv_periodic() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = vec![random(&mut rng, &[2, 6, 7]), random(&mut rng, &[2, 2, 5, 5]), random(&mut rng, &[2])];
        check("conv periodic", inputs, seed, |g, v| {
            let y = g.conv2d(v[0], v[1], v[2], 1, Padding::Periodic)?;
            loss_against(g, y, seed)
        });
    }
}

#[test]
fn relu_away_from_kink() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = random(&mut rng, &[2, 4, 4]);
        // keep inputs away from 0 so the difference quotient does not straddle the kink
        for v in x.data_mut() {
            if v.abs() < 0.05 {
                *v += 0.1f64.copysign(*v);
            }
        }
        check("relu", vec![x], seed, |g, v| {
            let y = g.relu(v[0]);
            loss_against(g, y, seed)
        });
    }
}

#[test]
fn layer_norm() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = vec![random(&mut rng, &[3, 4, 5]), random(&mut rng, &[3]), random(&mut rng, &[3])];
        check("layer norm", inputs, seed, |g, v| {
            let y = g.layer_norm(v[0], v[1], v[2], 1e-5)?;
            loss_against(g, y, seed)
        });
    }
}

#[test]
fn pixel_shuffle() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        check("pixel shuffle", vec![random(&mut rng, &[8, 3, 2])], seed, |g, v| {
            let y = g.pixel_shuffle(v[0], 2)?;
            loss_against(g, y, seed)
        });
    }
}

#[test]
fn rank1() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scalar = rng.random_range(0.5..1.5);
        let inputs = vec![random(&mut rng, &[5, 1]), random(&mut rng, &[1, 6])];
        check("rank1", inputs, seed, |g, v| {
            let y = g.rank1(scalar, v[0], v[1])?;
            loss_against(g, y, seed)
        });
    }
}

#[test]
fn add_concat_scale_sum() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = vec![random(&mut rng, &[1, 3, 3]), random(&mut rng, &[2, 3, 3])];
        check("composite", inputs, seed, |g, v| {
            let c = g.concat(&[v[0], v[1]])?;
            let s = g.scale(c, -1.7);
            let d = g.concat(&[v[1], v[0]])?;
            let e = g.add(s, d)?;
            let l = loss_against(g, e, seed)?;
            let tot = g.sum(v[0]);
            let tot = g.scale(tot, 0.3);
            g.add(l, tot)
        });
    }
}

#[test]
fn small_network() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = vec![
            random(&mut rng, &[2, 8, 8]),
            random(&mut rng, &[4, 3, 4, 4]),
            random(&mut rng, &[4]),
            random(&mut rng, &[4, 4, 3, 3]),
            random(&mut rng, &[4]),
            random(&mut rng, &[4]),
            random(&mut rng, &[4]),
            random(&mut rng, &[4, 1]),
            random(&mut rng, &[1, 4]),
        ];
        check("network", inputs, seed, |g, v| {
            let p = g.rank1(0.8, v[7], v[8])?;
            let p = g.concat(&[p, p, p, p])?;
            let p = g.pixel_shuffle(p, 2)?;
            let x = g.concat(&[v[0], p])?;
            let h = g.conv2d(x, v[1], v[2], 2, Padding::Zero(1))?;
            let h = g.relu(h);
            let z = g.conv2d(h, v[3], v[4], 1, Padding::Periodic)?;
            let z = g.relu(z);
            let z = g.layer_norm(z, v[5], v[6], 1e-5)?;
            let z = g.add(h, z)?;
            let y = g.pixel_shuffle(z, 2)?;
            loss_against(g, y, seed)
        });
    }
}

#[test]
fn negative_control_detects_wrong_gradient() {
    // f(x) = sum x^3 with a gradient that drops the factor 3
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = random(&mut rng, &[10]);
    let value = |xs: &[Tensor<f64>]| Ok(xs[0].data().iter().map(|v| v * v * v).sum());
    let right = |xs: &[Tensor<f64>]| Ok(vec![xs[0].data().iter().map(|v| 3.0 * v * v).collect()]);
    let wrong = |xs: &[Tensor<f64>]| Ok(vec![xs[0].data().iter().map(|v| v * v).collect()]);
    let opts = GradcheckOptions::default();
    assert!(compare_gradients(value, right, std::slice::from_ref(&x), &opts).unwrap().passed(TOL));
    let r = compare_gradients(value, wrong, std::slice::from_ref(&x), &opts).unwrap();
    assert!(!r.passed(TOL));
    assert!(r.max_rel_error > 0.5);
}
