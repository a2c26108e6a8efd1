//! Periodic 2D grids, multi-channel fields and the inter-grid transfer
//! operators used by the multi-resolution PDE branch.
//!
//! Grid point `(i, j)` sits at `(i * dx, j * dy)`. Index `nx` aliases index
//! `0`, so the periodic boundary column is never stored twice.

use crate::error::{Error, Result};

/// Uniform, doubly periodic grid over `[0, lx) x [0, ly)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 4 || ny < 4 {
            return Err(Error::InvalidGrid(format!("need at least 4x4 points, got {nx}x{ny}")));
        }
        if !(lx.is_finite() && ly.is_finite() && lx > 0.0 && ly > 0.0) {
            return Err(Error::InvalidGrid(format!("domain lengths must be positive, got {lx}x{ly}")));
        }
        Ok(Self { nx, ny, lx, ly })
    }

    /// Square `n x n` grid on `[0, length)^2`.
    pub fn square(n: usize, length: f64) -> Result<Self> {
        Self::new(n, n, length, length)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Physical coordinates of grid point `(i, j)` (column `i`, row `j`).
    pub fn coords(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.dx(), j as f64 * self.dy())
    }

    pub fn same_domain(&self, other: &Grid2D) -> bool {
        rel_eq(self.lx, other.lx) && rel_eq(self.ly, other.ly)
    }
}

fn rel_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// Ordered named scalar parameters of a trajectory (for example `gamma` or `nu`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamVector {
    components: Vec<(String, f64)>,
}

impl ParamVector {
    pub fn new(components: Vec<(String, f64)>) -> Result<Self> {
        for (name, value) in &components {
            if !value.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} = {value} is not finite")));
            }
        }
        Ok(Self { components })
    }

    pub fn single(name: &str, value: f64) -> Result<Self> {
        Self::new(vec![(name.to_string(), value)])
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.components.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.components.iter().map(|&(_, v)| v)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> + '_ {
        self.components.iter().map(|(n, _)| n.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> + '_ {
        self.components.iter().map(|(n, v)| (n.as_str(), *v))
    }
}

/// A `C`-channel scalar field on a periodic grid, stored channel-major then
/// row-major: `data[c * ny * nx + j * nx + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid2D,
    channels: usize,
    data: Vec<f64>,
}

impl Field {
    pub fn from_vec(grid: Grid2D, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::ShapeMismatch("a field needs at least one channel".into()));
        }
        if data.len() != channels * grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values for {channels}x{}x{}, got {}",
                channels * grid.len(),
                grid.ny(),
                grid.nx(),
                data.len()
            )));
        }
        Ok(Self { grid, channels, data })
    }

    /// Samples `f(channel, x, y)` at every grid point.
    pub fn from_fn(grid: Grid2D, channels: usize, f: impl Fn(usize, f64, f64) -> f64) -> Self {
        let mut data = Vec::with_capacity(channels * grid.len());
        for c in 0..channels {
            for j in 0..grid.ny() {
                for i in 0..grid.nx() {
                    let (x, y) = grid.coords(i, j);
                    data.push(f(c, x, y));
                }
            }
        }
        Self { grid, channels: channels.max(1), data }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.grid.len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.grid.len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn at(&self, c: usize, j: usize, i: usize) -> f64 {
        self.data[(c * self.grid.ny() + j) * self.grid.nx() + i]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Checks that `other` lives on the same grid with the same channel count.
    pub fn check_compatible(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!(
                "{}x{} vs {}x{}",
                self.grid.nx(),
                self.grid.ny(),
                other.grid.nx(),
                other.grid.ny()
            )));
        }
        if self.channels != other.channels {
            return Err(Error::ChannelMismatch { expected: self.channels, actual: other.channels });
        }
        Ok(())
    }

    /// Elementwise `self + scale * other`.
    pub fn axpy(&self, scale: f64, other: &Field) -> Result<Field> {
        self.check_compatible(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + scale * b).collect();
        Ok(Field { grid: self.grid, channels: self.channels, data })
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.axpy(-1.0, other)
    }

    pub fn scale(&self, s: f64) -> Field {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { grid: self.grid, channels: self.channels, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Cyclic shift by `(sx, sy)` cells: `out(i + sx, j + sy) = in(i, j)`.
    pub fn shifted(&self, sx: isize, sy: isize) -> Field {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        let mut out = vec![0.0; self.data.len()];
        for c in 0..self.channels {
            let base = c * nx * ny;
            for j in 0..ny {
                let tj = (j as isize + sy).rem_euclid(ny as isize) as usize;
                for i in 0..nx {
                    let ti = (i as isize + sx).rem_euclid(nx as isize) as usize;
                    out[base + tj * nx + ti] = self.data[base + j * nx + i];
                }
            }
        }
        Field { grid: self.grid, channels: self.channels, data: out }
    }

    /// Copy of the given channels, in order.
    pub fn select_channels(&self, channels: &[usize]) -> Result<Field> {
        let mut data = Vec::with_capacity(channels.len() * self.grid.len());
        for &c in channels {
            if c >= self.channels {
                return Err(Error::ChannelMismatch { expected: self.channels, actual: c + 1 });
            }
            data.extend_from_slice(self.channel(c));
        }
        Field::from_vec(self.grid, channels.len(), data)
    }
}

/// Field with every entry equal to `value`.
pub fn constant_field(grid: Grid2D, channels: usize, value: f64) -> Result<Field> {
    if channels == 0 {
        return Err(Error::ShapeMismatch("a field needs at least one channel".into()));
    }
    Ok(Field { grid, channels, data: vec![value; channels * grid.len()] })
}

/// Discrete 2-norm over all channels and points. Non-finite fields are rejected.
pub fn l2_norm(f: &Field) -> Result<f64> {
    let mut acc = 0.0;
    for &v in f.data() {
        if !v.is_finite() {
            return Err(Error::NonFinite);
        }
        acc += v * v;
    }
    Ok(acc.sqrt())
}

/// One global affine map taking `min(f)` to `lo` and `max(f)` to `hi`.
pub fn linear_rescale(f: &Field, lo: f64, hi: f64) -> Result<Field> {
    if !(hi > lo) {
        return Err(Error::InvalidParameter(format!("rescale interval [{lo}, {hi}] is empty")));
    }
    if !f.is_finite() {
        return Err(Error::NonFinite);
    }
    let (min, max) = (f.min(), f.max());
    if !(max > min) {
        return Err(Error::ConstantField);
    }
    let slope = (hi - lo) / (max - min);
    let mut out = f.map(|v| lo + (v - min) * slope);
    // Pin the extremes so they land on the interval ends bit-exactly.
    for (src, dst) in f.data().iter().zip(out.data_mut()) {
        if *src == min {
            *dst = lo;
        } else if *src == max {
            *dst = hi;
        }
    }
    Ok(out)
}

/// Source position of a target sample along one axis, in fractional source
/// cells, split into a base index and an offset in `[0, 1)`.
fn locate(target_index: usize, target_spacing: f64, source_spacing: f64, n_source: usize) -> (usize, f64) {
    let pos = target_index as f64 * target_spacing / source_spacing;
    let base = pos.floor();
    let mut frac = pos - base;
    let mut base = base as isize;
    // Snap round-off so exactly coincident points take the source value as is.
    if frac > 1.0 - 1e-12 {
        base += 1;
        frac = 0.0;
    } else if frac < 1e-12 {
        frac = 0.0;
    }
    (base.rem_euclid(n_source as isize) as usize, frac)
}

fn check_transfer(src: &Grid2D, dst: &Grid2D) -> Result<()> {
    if !src.same_domain(dst) {
        return Err(Error::GridMismatch(format!(
            "domain {}x{} vs {}x{}",
            src.lx(),
            src.ly(),
            dst.lx(),
            dst.ly()
        )));
    }
    Ok(())
}

/// Bilinear restriction onto a coarser grid with periodic wrap. Each coarse
/// sample is the bilinear interpolant of `f` at that sample's physical
/// location; arbitrary (non-integer) ratios are supported.
pub fn downsample_bilinear(f: &Field, coarse: &Grid2D) -> Result<Field> {
    let fine = f.grid();
    check_transfer(fine, coarse)?;
    if coarse.nx() > fine.nx() || coarse.ny() > fine.ny() {
        return Err(Error::GridMismatch("target grid is finer than the source".into()));
    }
    let (fnx, fny) = (fine.nx(), fine.ny());
    let xs: Vec<_> = (0..coarse.nx()).map(|i| locate(i, coarse.dx(), fine.dx(), fnx)).collect();
    let ys: Vec<_> = (0..coarse.ny()).map(|j| locate(j, coarse.dy(), fine.dy(), fny)).collect();
    let mut data = Vec::with_capacity(f.channels() * coarse.len());
    for c in 0..f.channels() {
        let src = f.channel(c);
        for &(j0, ty) in &ys {
            let j1 = (j0 + 1) % fny;
            for &(i0, tx) in &xs {
                let i1 = (i0 + 1) % fnx;
                let bottom = (1.0 - tx) * src[j0 * fnx + i0] + tx * src[j0 * fnx + i1];
                let top = (1.0 - tx) * src[j1 * fnx + i0] + tx * src[j1 * fnx + i1];
                data.push((1.0 - ty) * bottom + ty * top);
            }
        }
    }
    Field::from_vec(*coarse, f.channels(), data)
}

/// Catmull-Rom (a = -0.5) cubic convolution weights for the samples at
/// offsets -1, 0, 1, 2 around a point `t` in `[0, 1)`.
fn catmull_rom(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

/// Separable bicubic (Catmull-Rom) prolongation onto a finer grid with
/// periodic wrap.
pub fn upsample_bicubic(f: &Field, fine: &Grid2D) -> Result<Field> {
    let coarse = f.grid();
    check_transfer(coarse, fine)?;
    if fine.nx() < coarse.nx() || fine.ny() < coarse.ny() {
        return Err(Error::GridMismatch("target grid is coarser than the source".into()));
    }
    let (cnx, cny) = (coarse.nx(), coarse.ny());
    let taps = |n: usize, (base, t): (usize, f64)| -> ([usize; 4], [f64; 4]) {
        let idx = [(base + n - 1) % n, base, (base + 1) % n, (base + 2) % n];
        (idx, catmull_rom(t))
    };
    let xs: Vec<_> = (0..fine.nx()).map(|i| taps(cnx, locate(i, fine.dx(), coarse.dx(), cnx))).collect();
    let ys: Vec<_> = (0..fine.ny()).map(|j| taps(cny, locate(j, fine.dy(), coarse.dy(), cny))).collect();

    let mut data = Vec::with_capacity(f.channels() * fine.len());
    let mut rows = vec![0.0; cny * fine.nx()];
    for c in 0..f.channels() {
        let src = f.channel(c);
        // Interpolate along x for every coarse row, then along y.
        for cj in 0..cny {
            let row = &src[cj * cnx..(cj + 1) * cnx];
            for (fi, (idx, w)) in xs.iter().enumerate() {
                rows[cj * fine.nx() + fi] = w[0] * row[idx[0]] + w[1] * row[idx[1]] + w[2] * row[idx[2]] + w[3] * row[idx[3]];
            }
        }
        for (idx, w) in &ys {
            for fi in 0..fine.nx() {
                let at = |k: usize| rows[idx[k] * fine.nx() + fi];
                data.push(w[0] * at(0) + w[1] * at(1) + w[2] * at(2) + w[3] * at(3));
            }
        }
    }
    Field::from_vec(*fine, f.channels(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn grid(n: usize, l: f64) -> Grid2D {
        Grid2D::square(n, l).unwrap()
    }

    #[test]
    fn grid_rejects_tiny_or_degenerate() {
        assert!(Grid2D::new(3, 8, 1.0, 1.0).is_err());
        assert!(Grid2D::new(8, 8, 0.0, 1.0).is_err());
        let g = grid(64, 6.4);
        assert!((g.dx() * 64.0 - 6.4).abs() < 1e-15);
    }

    #[test]
    fn constant_fields() {
        let f = constant_field(grid(4, 1.0), 2, 0.0).unwrap();
        assert!(f.data().iter().all(|&v| v == 0.0));
        let f = constant_field(grid(4, 1.0), 1, 7.0).unwrap();
        assert!(f.data().iter().all(|&v| v == 7.0));
        let f = constant_field(grid(64, 1.0), 2, 1.0).unwrap();
        assert!((l2_norm(&f).unwrap() - (2.0f64 * 64.0 * 64.0).sqrt()).abs() < 1e-12);
        assert!((l2_norm(&f).unwrap() - 90.51).abs() < 1e-2);
        assert!(constant_field(grid(4, 1.0), 0, 1.0).is_err());
    }

    #[test]
    fn norm_cases() {
        let g = grid(4, 1.0);
        assert_eq!(l2_norm(&constant_field(g, 1, 0.0).unwrap()).unwrap(), 0.0);
        let mut f = constant_field(g, 1, 0.0).unwrap();
        f.data_mut()[5] = 3.0;
        assert_eq!(l2_norm(&f).unwrap(), 3.0);
        f.data_mut()[6] = f64::NAN;
        assert!(matches!(l2_norm(&f), Err(Error::NonFinite)));
    }

    #[test]
    fn norm_of_all_ones_two_by_two() {
        // Grids are at least 4x4, so exercise the 4-entry sum on a raw 1-channel
        // field whose first four entries are one.
        let mut f = constant_field(grid(4, 1.0), 1, 0.0).unwrap();
        f.data_mut()[..4].fill(1.0);
        assert_eq!(l2_norm(&f).unwrap(), 2.0);
    }

    #[test]
    fn rescale_maps_endpoints() {
        let g = grid(4, 1.0);
        let mut f = constant_field(g, 1, 0.5).unwrap();
        f.data_mut()[0] = -2.0;
        f.data_mut()[1] = 3.0;
        let r = linear_rescale(&f, 0.1, 1.1).unwrap();
        assert_eq!(r.data()[0], 0.1);
        assert_eq!(r.data()[1], 1.1);
        assert!((r.data()[2] - 0.6).abs() < 1e-15);
        assert!(matches!(linear_rescale(&constant_field(g, 1, 2.0).unwrap(), 0.1, 1.1), Err(Error::ConstantField)));
        assert!(linear_rescale(&f, 1.0, 1.0).is_err());
    }

    #[test]
    fn downsample_constant_and_shape() {
        let f = constant_field(grid(256, 6.4), 2, 7.0).unwrap();
        let c = downsample_bilinear(&f, &grid(48, 6.4)).unwrap();
        assert_eq!((c.grid().nx(), c.grid().ny()), (48, 48));
        assert!(c.data().iter().all(|&v| (v - 7.0).abs() < 1e-12));
        assert!(downsample_bilinear(&f, &grid(48, 3.2)).is_err());
    }

    #[test]
    fn downsample_reproduces_affine_functions_away_from_the_seam() {
        let fine = grid(64, 2.0);
        let coarse = grid(24, 2.0);
        let (a, b, c) = (0.3, -1.7, 2.5);
        let f = Field::from_fn(fine, 1, |_, x, y| a + b * x + c * y);
        let d = downsample_bilinear(&f, &coarse).unwrap();
        for j in 0..coarse.ny() {
            for i in 0..coarse.nx() {
                let (x, y) = coarse.coords(i, j);
                // Interpolation stencil must not wrap past the last fine sample.
                if x > 2.0 - 2.0 * fine.dx() || y > 2.0 - 2.0 * fine.dy() {
                    continue;
                }
                assert!((d.at(0, j, i) - (a + b * x + c * y)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn upsample_constant_and_shape() {
        let f = constant_field(grid(48, 6.4), 2, 7.0).unwrap();
        let u = upsample_bicubic(&f, &grid(256, 6.4)).unwrap();
        assert_eq!(u.grid().nx(), 256);
        assert!(u.data().iter().all(|&v| (v - 7.0).abs() < 1e-12));
    }

    #[test]
    fn upsample_single_mode_matches_analytic() {
        let l = 1.0;
        let f = Field::from_fn(grid(32, l), 1, |_, x, _| (2.0 * PI * x / l).sin());
        let u = upsample_bicubic(&f, &grid(128, l)).unwrap();
        let exact = Field::from_fn(grid(128, l), 1, |_, x, _| (2.0 * PI * x / l).sin());
        let err = u.data().iter().zip(exact.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-2, "max deviation {err}");
    }

    #[test]
    fn matched_grids_are_identity() {
        let g = grid(16, 3.2);
        let f = Field::from_fn(g, 2, |c, x, y| (x + c as f64).sin() * (2.0 * y).cos());
        assert_eq!(downsample_bilinear(&f, &g).unwrap(), f);
        assert_eq!(upsample_bicubic(&f, &g).unwrap(), f);
    }

    #[test]
    fn down_then_up_of_constant_is_identity() {
        let f = constant_field(grid(64, 6.4), 2, -0.25).unwrap();
        let round = upsample_bicubic(&downsample_bilinear(&f, &grid(16, 6.4)).unwrap(), &grid(64, 6.4)).unwrap();
        assert!(round.data().iter().all(|&v| (v + 0.25).abs() < 1e-12));
    }

    #[test]
    fn resamplers_commute_with_whole_cell_shifts() {
        let fine = grid(64, 1.0);
        let coarse = grid(16, 1.0);
        let f = Field::from_fn(fine, 1, |_, x, y| (7.0 * x).sin() + (3.0 * y * y).cos());
        // Shift by one coarse cell = four fine cells.
        let lhs = downsample_bilinear(&f.shifted(4, -8), &coarse).unwrap();
        let rhs = downsample_bilinear(&f, &coarse).unwrap().shifted(1, -2);
        assert!(lhs.data().iter().zip(rhs.data()).all(|(a, b)| (a - b).abs() < 1e-12));

        let c = downsample_bilinear(&f, &coarse).unwrap();
        let lhs = upsample_bicubic(&c.shifted(3, 1), &fine).unwrap();
        let rhs = upsample_bicubic(&c, &fine).unwrap().shifted(12, 4);
        assert!(lhs.data().iter().zip(rhs.data()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    fn random_field(grid: Grid2D, channels: usize) -> impl Strategy<Value = Field> {
        proptest::collection::vec(-10.0f64..10.0, channels * grid.len())
            .prop_map(move |data| Field::from_vec(grid, channels, data).unwrap())
    }

    proptest! {
        #[test]
        fn resamplers_are_linear(
            f in random_field(grid(20, 2.0), 2),
            g in random_field(grid(20, 2.0), 2),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let combo = f.scale(a).axpy(b, &g).unwrap();
            let coarse = grid(7, 2.0);
            let lhs = downsample_bilinear(&combo, &coarse).unwrap();
            let rhs = downsample_bilinear(&f, &coarse).unwrap().scale(a)
                .axpy(b, &downsample_bilinear(&g, &coarse).unwrap()).unwrap();
            for (x, y) in lhs.data().iter().zip(rhs.data()) {
                prop_assert!((x - y).abs() < 1e-12 * (1.0 + x.abs()));
            }
            let fine = grid(33, 2.0);
            let lhs = upsample_bicubic(&combo, &fine).unwrap();
            let rhs = upsample_bicubic(&f, &fine).unwrap().scale(a)
                .axpy(b, &upsample_bicubic(&g, &fine).unwrap()).unwrap();
            for (x, y) in lhs.data().iter().zip(rhs.data()) {
                prop_assert!((x - y).abs() < 1e-12 * (1.0 + x.abs()));
            }
        }

        #[test]
        fn norm_is_a_norm(
            f in random_field(grid(4, 1.0), 2),
            g in random_field(grid(4, 1.0), 2),
            a in -5.0f64..5.0,
        ) {
            let nf = l2_norm(&f).unwrap();
            let ng = l2_norm(&g).unwrap();
            prop_assert!(l2_norm(&f.add(&g).unwrap()).unwrap() <= nf + ng + 1e-12);
            prop_assert!((l2_norm(&f.scale(a)).unwrap() - a.abs() * nf).abs() < 1e-10 * (1.0 + nf));
        }
    }
}
