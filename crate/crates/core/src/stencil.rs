//! Finite-difference stencils applied as fixed, periodically wrapped 1D
//! convolutions along one grid axis.

use crate::error::{Error, Result};
use crate::field::Field;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Direction of the advecting velocity an upwind stencil is biased against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowSign {
    Positive,
    Negative,
}

/// Accuracy of the central second-derivative stencil.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaplacianOrder {
    Second,
    Sixth,
}

impl LaplacianOrder {
    pub fn from_order(order: usize) -> Result<Self> {
        match order {
            2 => Ok(Self::Second),
            6 => Ok(Self::Sixth),
            other => Err(Error::UnsupportedOrder(other)),
        }
    }

    pub fn order(self) -> usize {
        match self {
            Self::Second => 2,
            Self::Sixth => 6,
        }
    }
}

/// A 1D stencil: `out[i] = sum_k taps[k] * in[i + first_offset + k] / h^spacing_power`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    taps: Vec<f64>,
    first_offset: isize,
    axis: Axis,
    derivative_order: u32,
    accuracy_order: u32,
    spacing_power: i32,
}

impl Stencil {
    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn first_offset(&self) -> isize {
        self.first_offset
    }

    pub fn offsets(&self) -> impl Iterator<Item = (isize, f64)> + '_ {
        self.taps.iter().enumerate().map(|(k, &w)| (self.first_offset + k as isize, w))
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    pub fn derivative_order(&self) -> u32 {
        self.derivative_order
    }

    pub fn accuracy_order(&self) -> u32 {
        self.accuracy_order
    }

    pub fn spacing_power(&self) -> i32 {
        self.spacing_power
    }

    pub fn along(mut self, axis: Axis) -> Self {
        self.axis = axis;
        self
    }

    /// Highest monomial degree the stencil differentiates exactly.
    pub fn exact_degree(&self) -> u32 {
        self.derivative_order + self.accuracy_order - 1
    }

    /// Largest violation of the discrete moment conditions
    /// `sum_k w_k s_k^m / m! = [m == derivative_order]` for `m` up to the exact degree.
    pub fn moment_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        let mut factorial = 1.0;
        for m in 0..=self.exact_degree() {
            if m > 0 {
                factorial *= m as f64;
            }
            let moment: f64 = self.offsets().map(|(s, w)| w * (s as f64).powi(m as i32)).sum::<f64>() / factorial;
            let target = if m == self.derivative_order { 1.0 } else { 0.0 };
            worst = worst.max((moment - target).abs());
        }
        worst
    }
}

/// Central second-derivative stencil of order 2 or 6 along x.
pub fn second_derivative_stencil(order: usize) -> Result<Stencil> {
    let (taps, first_offset, accuracy_order) = match LaplacianOrder::from_order(order)? {
        LaplacianOrder::Second => (vec![1.0, -2.0, 1.0], -1, 2),
        LaplacianOrder::Sixth => (
            vec![1.0 / 90.0, -3.0 / 20.0, 3.0 / 2.0, -49.0 / 18.0, 3.0 / 2.0, -3.0 / 20.0, 1.0 / 90.0],
            -3,
            6,
        ),
    };
    Ok(Stencil { taps, first_offset, axis: Axis::X, derivative_order: 2, accuracy_order, spacing_power: 2 })
}

/// Third-order upwind-biased first derivative. For positive flow
/// `(2u[i+1] + 3u[i] - 6u[i-1] + u[i-2]) / 6h`; mirrored for negative flow.
pub fn first_derivative_upwind3(axis: Axis, flow: FlowSign) -> Stencil {
    let (taps, first_offset) = match flow {
        FlowSign::Positive => (vec![1.0 / 6.0, -1.0, 0.5, 1.0 / 3.0], -2),
        FlowSign::Negative => (vec![-1.0 / 3.0, -0.5, 1.0, -1.0 / 6.0], -1),
    };
    Stencil { taps, first_offset, axis, derivative_order: 1, accuracy_order: 3, spacing_power: 1 }
}

/// Checks every built-in coefficient table against its moment conditions.
pub fn validate_tables() -> Result<()> {
    let mut all = vec![second_derivative_stencil(2)?, second_derivative_stencil(6)?];
    for flow in [FlowSign::Positive, FlowSign::Negative] {
        all.push(first_derivative_upwind3(Axis::X, flow));
    }
    for s in &all {
        let defect = s.moment_defect();
        if defect > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "stencil {:?} violates its moment conditions by {defect:e}",
                s.taps()
            )));
        }
    }
    Ok(())
}

fn spacing(f: &Field, axis: Axis) -> f64 {
    match axis {
        Axis::X => f.grid().dx(),
        Axis::Y => f.grid().dy(),
    }
}

/// Wrapped neighbour tables: `table[i][k]` is the index of `i + offset_k` mod `n`.
fn neighbour_table(n: usize, s: &Stencil) -> Vec<usize> {
    let width = s.taps.len();
    let mut table = Vec::with_capacity(n * width);
    for i in 0..n {
        for (off, _) in s.offsets() {
            table.push((i as isize + off).rem_euclid(n as isize) as usize);
        }
    }
    table
}

/// Applies `s` to one channel slice, writing into `out` and scaling by `scale`.
fn apply_channel(src: &[f64], out: &mut [f64], nx: usize, ny: usize, s: &Stencil, scale: f64) {
    let width = s.taps.len();
    match s.axis {
        Axis::X => {
            let table = neighbour_table(nx, s);
            for j in 0..ny {
                let row = &src[j * nx..(j + 1) * nx];
                let dst = &mut out[j * nx..(j + 1) * nx];
                for i in 0..nx {
                    let idx = &table[i * width..(i + 1) * width];
                    let acc: f64 = idx.iter().zip(&s.taps).map(|(&k, &w)| w * row[k]).sum();
                    dst[i] = acc * scale;
                }
            }
        }
        Axis::Y => {
            let table = neighbour_table(ny, s);
            for j in 0..ny {
                let idx = &table[j * width..(j + 1) * width];
                let dst = &mut out[j * nx..(j + 1) * nx];
                dst.fill(0.0);
                for (&jj, &w) in idx.iter().zip(&s.taps) {
                    let row = &src[jj * nx..(jj + 1) * nx];
                    for (d, &v) in dst.iter_mut().zip(row) {
                        *d += w * v;
                    }
                }
                for d in dst.iter_mut() {
                    *d *= scale;
                }
            }
        }
    }
}

/// Per-channel periodic convolution along the stencil's axis, divided by
/// `h^spacing_power`.
pub fn apply_stencil(f: &Field, s: &Stencil) -> Field {
    let (nx, ny) = (f.grid().nx(), f.grid().ny());
    let scale = spacing(f, s.axis).powi(-s.spacing_power);
    let mut out = f.clone();
    for c in 0..f.channels() {
        apply_channel(f.channel(c), out.channel_mut(c), nx, ny, s, scale);
    }
    out
}

/// Second-derivative stencil applied along x plus along y.
pub fn laplacian(f: &Field, order: LaplacianOrder) -> Field {
    let sxx = second_derivative_stencil(order.order()).expect("supported order");
    let syy = sxx.clone().along(Axis::Y);
    let mut out = apply_stencil(f, &sxx);
    let dyy = apply_stencil(f, &syy);
    for (o, v) in out.data_mut().iter_mut().zip(dyy.data()) {
        *o += v;
    }
    out
}

/// How many points selected each upwind direction, per axis.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UpwindCounts {
    pub x_positive: usize,
    pub x_negative: usize,
    pub y_positive: usize,
    pub y_negative: usize,
}

/// `(u d/dx + v d/dy) a` for every channel of `advected`, with the upwind
/// direction picked per point from the sign of the local velocity component.
pub fn upwind_convection(velocity: &Field, advected: &Field) -> Result<Field> {
    upwind_convection_traced(velocity, advected).map(|(f, _)| f)
}

/// [`upwind_convection`] that also reports which stencils were selected.
/// A zero velocity component selects the positive-flow stencil.
pub fn upwind_convection_traced(velocity: &Field, advected: &Field) -> Result<(Field, UpwindCounts)> {
    if velocity.channels() != 2 {
        return Err(Error::ChannelMismatch { expected: 2, actual: velocity.channels() });
    }
    if velocity.grid() != advected.grid() {
        return Err(Error::GridMismatch("velocity and advected field live on different grids".into()));
    }
    let derivative = |axis, flow| apply_stencil(advected, &first_derivative_upwind3(axis, flow));
    let dx_pos = derivative(Axis::X, FlowSign::Positive);
    let dx_neg = derivative(Axis::X, FlowSign::Negative);
    let dy_pos = derivative(Axis::Y, FlowSign::Positive);
    let dy_neg = derivative(Axis::Y, FlowSign::Negative);
    let (u, v) = (velocity.channel(0), velocity.channel(1));
    let n = advected.grid().len();
    let mut counts = UpwindCounts::default();
    let mut out = advected.clone();
    for c in 0..advected.channels() {
        let range = c * n..(c + 1) * n;
        let (dxp, dxn) = (&dx_pos.data()[range.clone()], &dx_neg.data()[range.clone()]);
        let (dyp, dyn_) = (&dy_pos.data()[range.clone()], &dy_neg.data()[range]);
        let dst = out.channel_mut(c);
        for p in 0..n {
            let ddx = if u[p] >= 0.0 {
                counts.x_positive += 1;
                dxp[p]
            } else {
                counts.x_negative += 1;
                dxn[p]
            };
            let ddy = if v[p] >= 0.0 {
                counts.y_positive += 1;
                dyp[p]
            } else {
                counts.y_negative += 1;
                dyn_[p]
            };
            dst[p] = u[p] * ddx + v[p] * ddy;
        }
    }
    Ok((out, counts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{constant_field, Grid2D};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn max_abs_diff(a: &Field, b: &Field) -> f64 {
        a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    /// Evaluates the stencil on samples of `p` at `x0 + k h` with no wrap.
    fn apply_at(s: &Stencil, p: impl Fn(f64) -> f64, x0: f64, h: f64) -> f64 {
        s.offsets().map(|(k, w)| w * p(x0 + k as f64 * h)).sum::<f64>() / h.powi(s.spacing_power())
    }

    #[test]
    fn built_in_tables_validate() {
        validate_tables().unwrap();
    }

    #[test]
    fn second_order_taps() {
        assert_eq!(second_derivative_stencil(2).unwrap().taps(), &[1.0, -2.0, 1.0]);
        assert!(matches!(second_derivative_stencil(4), Err(Error::UnsupportedOrder(4))));
        let s6 = second_derivative_stencil(6).unwrap();
        assert!(s6.taps().iter().sum::<f64>().abs() < 1e-15);
    }

    #[test]
    fn polynomial_exactness_oracle() {
        // Differentiate monomials directly and compare with analytic derivatives.
        let h = 0.1;
        let cases = [
            (second_derivative_stencil(2).unwrap(), 2u32),
            (second_derivative_stencil(6).unwrap(), 2),
            (first_derivative_upwind3(Axis::X, FlowSign::Positive), 1),
            (first_derivative_upwind3(Axis::X, FlowSign::Negative), 1),
        ];
        for (s, d) in cases {
            for degree in 0..=s.exact_degree() as i32 {
                for &x0 in &[0.7, 1.3, 2.05] {
                    let got = apply_at(&s, |x| x.powi(degree), x0, h);
                    let exact = match (d, degree) {
                        (_, n) if n < d as i32 => 0.0,
                        (1, n) => n as f64 * x0.powi(n - 1),
                        (2, n) => (n * (n - 1)) as f64 * x0.powi(n - 2),
                        _ => unreachable!(),
                    };
                    let tol = 1e-9 * exact.abs().max(1.0);
                    assert!((got - exact).abs() <= tol, "{:?} degree {degree}: {got} vs {exact}", s.taps());
                }
            }
        }
    }

    #[test]
    fn sixth_order_on_quartic() {
        let s = second_derivative_stencil(6).unwrap();
        for &x in &[0.5, 1.0, 3.0] {
            let got = apply_at(&s, |x| x.powi(4), x, 0.05);
            assert!((got - 12.0 * x * x).abs() <= 1e-9 * 12.0 * x * x);
        }
    }

    #[test]
    fn upwind_on_linear_and_cubic() {
        let s = first_derivative_upwind3(Axis::X, FlowSign::Positive);
        assert!((apply_at(&s, |x| x, 1.0, 0.1) - 1.0).abs() < 1e-12);
        assert!((apply_at(&s, |x| x.powi(3), 1.5, 0.1) - 3.0 * 1.5 * 1.5).abs() < 1e-10);
        assert!(apply_at(&s, |_| 4.2, 1.0, 0.1).abs() < 1e-12);
        assert!(s.taps().iter().sum::<f64>().abs() < 1e-15);
    }

    #[test]
    fn second_derivative_of_sine() {
        let l = 2.0 * PI;
        let g = Grid2D::square(64, l).unwrap();
        let k = 2.0 * PI / l;
        let f = Field::from_fn(g, 1, |_, x, _| (k * x).sin());
        let d2 = apply_stencil(&f, &second_derivative_stencil(6).unwrap());
        let exact = f.scale(-k * k);
        assert!(max_abs_diff(&d2, &exact) < 1e-8);
        let zero = apply_stencil(&constant_field(g, 2, 3.0).unwrap(), &second_derivative_stencil(6).unwrap());
        assert!(zero.data().iter().all(|v| v.abs() < 1e-10));
    }

    fn sine_laplacian_error(n: usize) -> f64 {
        let g = Grid2D::square(n, 2.0 * PI).unwrap();
        let f = Field::from_fn(g, 1, |_, x, y| x.sin() * y.sin());
        max_abs_diff(&laplacian(&f, LaplacianOrder::Sixth), &f.scale(-2.0))
    }

    #[test]
    fn laplacian_accuracy_and_order() {
        let e64 = sine_laplacian_error(64);
        assert!(e64 < 1e-7, "{e64}");
        let rate = (sine_laplacian_error(32) / e64).log2();
        assert!((5.5..=6.5).contains(&rate), "measured order {rate}");
        let g = Grid2D::square(16, 1.0).unwrap();
        let lap = laplacian(&constant_field(g, 1, 5.0).unwrap(), LaplacianOrder::Second);
        assert!(lap.data().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn upwind_convection_cases() {
        let g = Grid2D::square(16, 1.0).unwrap();
        let vel = Field::from_fn(g, 2, |c, _, _| if c == 0 { 0.8 } else { 0.0 });
        let a = constant_field(g, 1, 2.0).unwrap();
        let conv = upwind_convection(&vel, &a).unwrap();
        assert!(conv.data().iter().all(|v| v.abs() < 1e-12));

        let unit = Field::from_fn(g, 2, |c, _, _| if c == 0 { 1.0 } else { 0.0 });
        let ramp = Field::from_fn(g, 1, |_, x, _| x);
        let conv = upwind_convection(&unit, &ramp).unwrap();
        for j in 0..16 {
            for i in 2..15 {
                assert!((conv.at(0, j, i) - 1.0).abs() < 1e-12);
            }
        }

        let back = Field::from_fn(g, 2, |c, _, _| if c == 0 { -1.0 } else { 0.0 });
        let (conv, counts) = upwind_convection_traced(&back, &ramp).unwrap();
        assert_eq!(counts.x_negative, 256);
        assert_eq!(counts.x_positive, 0);
        // Zero y-velocity takes the positive branch.
        assert_eq!(counts.y_positive, 256);
        for j in 0..16 {
            for i in 1..14 {
                assert!((conv.at(0, j, i) + 1.0).abs() < 1e-12);
            }
        }

        assert!(upwind_convection(&a, &ramp).is_err());
    }

    #[test]
    fn laplacian_matches_direct_loop() {
        let g = Grid2D::new(12, 9, 1.2, 0.9).unwrap();
        let f = Field::from_fn(g, 2, |c, x, y| ((c + 1) as f64 * 13.7 * x + 5.1 * y * y).sin());
        let lap = laplacian(&f, LaplacianOrder::Second);
        let (nx, ny) = (12usize, 9usize);
        let (dx, dy) = (g.dx(), g.dy());
        for c in 0..2 {
            for j in 0..ny {
                for i in 0..nx {
                    let at = |ii: usize, jj: usize| f.at(c, jj, ii);
                    let direct = (at((i + 1) % nx, j) - 2.0 * at(i, j) + at((i + nx - 1) % nx, j)) / (dx * dx)
                        + (at(i, (j + 1) % ny) - 2.0 * at(i, j) + at(i, (j + ny - 1) % ny)) / (dy * dy);
                    assert!((lap.at(c, j, i) - direct).abs() < 1e-12 * direct.abs().max(1.0));
                }
            }
        }
    }

    fn random_field(nx: usize, ny: usize) -> impl Strategy<Value = Field> {
        proptest::collection::vec(-1.0f64..1.0, nx * ny).prop_map(move |d| {
            Field::from_vec(Grid2D::new(nx, ny, 1.0, 2.0).unwrap(), 1, d).unwrap()
        })
    }

    proptest! {
        #[test]
        fn stencils_are_linear_and_shift_equivariant(
            f in random_field(10, 8),
            g in random_field(10, 8),
            a in -2.0f64..2.0,
            sx in -5isize..5,
            sy in -5isize..5,
        ) {
            for s in [
                second_derivative_stencil(6).unwrap(),
                second_derivative_stencil(2).unwrap().along(Axis::Y),
                first_derivative_upwind3(Axis::Y, FlowSign::Negative),
            ] {
                let lhs = apply_stencil(&f.axpy(a, &g).unwrap(), &s);
                let rhs = apply_stencil(&f, &s).axpy(a, &apply_stencil(&g, &s)).unwrap();
                prop_assert!(max_abs_diff(&lhs, &rhs) < 1e-9);
                let shifted = apply_stencil(&f.shifted(sx, sy), &s);
                prop_assert_eq!(shifted, apply_stencil(&f, &s).shifted(sx, sy));
            }
        }

        #[test]
        fn laplacian_matches_loop_oracle_on_random_fields(f in random_field(10, 8)) {
            let lap = laplacian(&f, LaplacianOrder::Second);
            let (dx, dy) = (f.grid().dx(), f.grid().dy());
            for j in 0..8usize {
                for i in 0..10usize {
                    let at = |ii: usize, jj: usize| f.at(0, jj, ii);
                    let direct = (at((i + 1) % 10, j) - 2.0 * at(i, j) + at((i + 9) % 10, j)) / (dx * dx)
                        + (at(i, (j + 1) % 8) - 2.0 * at(i, j) + at(i, (j + 7) % 8)) / (dy * dy);
                    prop_assert!((lap.at(0, j, i) - direct).abs() < 1e-12 * direct.abs().max(1.0));
                }
            }
        }
    }
}
