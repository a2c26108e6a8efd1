use super::conv::{ConvGeometry, Padding};
use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    Conv2d { x: Var, w: Var, b: Var, geom: ConvGeometry, cols: Vec<T> },
    Relu { x: Var },
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<T>, inv_std: T },
    PixelShuffle { x: Var, r: usize },
    Rank1 { col: Var, row: Var, scalar: T },
    Add { a: Var, b: Var },
    Concat { parts: Vec<Var> },
    Scale { x: Var, s: T },
    Mse { pred: Var, target: Var },
    Sum { x: Var },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Operations recorded in execution order. Node indices are a topological
/// order, so the backward sweep simply walks them in reverse.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// Constant input; no gradient is tracked.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad: false });
        Var(self.nodes.len() - 1)
    }

    /// Trainable input; its gradient is reported by [`Graph::backward`].
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad: true });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Cross-correlation of `x: [C_in, H, W]` with `w: [C_out, C_in, kh, kw]` plus `b: [C_out]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, padding: Padding) -> Result<Var> {
        let (c_in, h, width) = self.value(x).dims3()?;
        let (c_out, kh, kw) = match self.value(w).shape() {
            &[co, ci, kh, kw] if ci == c_in => (co, kh, kw),
            other => return Err(Error::ShapeMismatch(format!("kernel {other:?} does not match {c_in} input channels"))),
        };
        if self.value(b).shape() != [c_out] {
            return Err(Error::ShapeMismatch(format!("bias {:?} does not match {c_out} outputs", self.value(b).shape())));
        }
        let geom = ConvGeometry::new(c_in, h, width, kh, kw, stride, padding)?;
        let cols = geom.im2col(self.value(x).data());
        let (k, n) = (geom.patch_len(), geom.out_len());
        let mut out = Vec::with_capacity(c_out * n);
        for &bias in self.value(b).data() {
            out.extend(std::iter::repeat_n(bias, n));
        }
        T::gemm(c_out, k, n, self.value(w).data(), (k as isize, 1), &cols, (n as isize, 1), T::one(), &mut out, (n as isize, 1));
        let value = Tensor { shape: vec![c_out, geom.h_out, geom.w_out], data: out };
        Ok(self.push(value, Op::Conv2d { x, w, b, geom, cols }, &[x, w, b]))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let value = Tensor { shape: src.shape.clone(), data: src.data.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect() };
        self.push(value, Op::Relu { x }, &[x])
    }

    /// Normalizes over all of `[C, H, W]` jointly, then applies a per-channel
    /// affine map `gain[c] * xhat + bias[c]`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: T) -> Result<Var> {
        let (c, h, w) = self.value(x).dims3()?;
        if self.value(gain).shape() != [c] || self.value(bias).shape() != [c] {
            return Err(Error::ShapeMismatch(format!("layer norm affine parameters must have shape [{c}]")));
        }
        let src = self.value(x).data();
        let n = T::of(src.len() as f64);
        let mean = src.iter().copied().sum::<T>() / n;
        let var = src.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let inv_std = T::one() / (var + eps).sqrt();
        let xhat: Vec<T> = src.iter().map(|&v| (v - mean) * inv_std).collect();
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let hw = h * w;
        let data = xhat.iter().enumerate().map(|(i, &xh)| g[i / hw] * xh + b[i / hw]).collect();
        let value = Tensor { shape: vec![c, h, w], data };
        Ok(self.push(value, Op::LayerNorm { x, gain, bias, xhat, inv_std }, &[x, gain, bias]))
    }

    /// `[C r^2, H, W] -> [C, rH, rW]` with `out(c, rh + a, rw + b) = in(c r^2 + a r + b, h, w)`.
    pub fn pixel_shuffle(&mut self, x: Var, r: usize) -> Result<Var> {
        let (cr, h, w) = self.value(x).dims3()?;
        if r == 0 || cr % (r * r) != 0 {
            return Err(Error::ShapeMismatch(format!("{cr} channels not divisible by {r}^2")));
        }
        let c = cr / (r * r);
        let src = self.value(x).data();
        let mut data = vec![T::zero(); src.len()];
        for (dst, s) in shuffle_index(c, h, w, r) {
            data[dst] = src[s];
        }
        let value = Tensor { shape: vec![c, r * h, r * w], data };
        Ok(self.push(value, Op::PixelShuffle { x, r }, &[x]))
    }

    /// `scalar * col ⊗ row` as a one-channel `[1, ny, nx]` field, with
    /// `col: [ny, 1]` and `row: [1, nx]`.
    pub fn rank1(&mut self, scalar: T, col: Var, row: Var) -> Result<Var> {
        let ny = match self.value(col).shape() {
            &[ny, 1] => ny,
            other => return Err(Error::ShapeMismatch(format!("column vector must be [n, 1], got {other:?}"))),
        };
        let nx = match self.value(row).shape() {
            &[1, nx] => nx,
            other => return Err(Error::ShapeMismatch(format!("row vector must be [1, n], got {other:?}"))),
        };
        let (cv, rv) = (self.value(col).data(), self.value(row).data());
        let mut data = Vec::with_capacity(ny * nx);
        for &ck in cv {
            data.extend(rv.iter().map(|&r| scalar * ck * r));
        }
        let value = Tensor { shape: vec![1, ny, nx], data };
        Ok(self.push(value, Op::Rank1 { col, row, scalar }, &[col, row]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape != vb.shape {
            return Err(Error::ShapeMismatch(format!("add {:?} + {:?}", va.shape, vb.shape)));
        }
        let value = Tensor { shape: va.shape.clone(), data: va.data.iter().zip(&vb.data).map(|(&x, &y)| x + y).collect() };
        Ok(self.push(value, Op::Add { a, b }, &[a, b]))
    }

    /// Stacks `[C_i, H, W]` tensors along the channel axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::ShapeMismatch("concat of nothing".into()));
        };
        let (_, h, w) = self.value(first).dims3()?;
        let mut channels = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (c, ph, pw) = self.value(p).dims3()?;
            if (ph, pw) != (h, w) {
                return Err(Error::ShapeMismatch(format!("concat spatial sizes {h}x{w} vs {ph}x{pw}")));
            }
            channels += c;
            data.extend_from_slice(self.value(p).data());
        }
        let value = Tensor { shape: vec![channels, h, w], data };
        Ok(self.push(value, Op::Concat { parts: parts.to_vec() }, parts))
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        let src = self.value(x);
        let value = Tensor { shape: src.shape.clone(), data: src.data.iter().map(|&v| v * s).collect() };
        self.push(value, Op::Scale { x, s }, &[x])
    }

    /// Mean of squared differences, as a one-element tensor.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        if p.shape != t.shape {
            return Err(Error::ShapeMismatch(format!("mse {:?} vs {:?}", p.shape, t.shape)));
        }
        let n = T::of(p.data.len().max(1) as f64);
        let loss = p.data.iter().zip(&t.data).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>() / n;
        Ok(self.push(Tensor::scalar(loss), Op::Mse { pred, target }, &[pred, target]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data.iter().copied().sum::<T>();
        self.push(Tensor::scalar(total), Op::Sum { x }, &[x])
    }

    /// Reverse sweep from a one-element `loss`. Gradients of every node that
    /// depends on a trainable input are accumulated; repeated uses sum.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let Some(node) = self.nodes.get(loss.0) else {
            return Err(Error::Graph(format!("node {} has not been recorded by a forward pass", loss.0)));
        };
        if node.value.len() != 1 {
            return Err(Error::Graph(format!("backward needs a scalar loss, got shape {:?}", node.value.shape())));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(up) = grads[idx].take() else { continue };
            self.propagate(node, &up, &mut grads);
            grads[idx] = Some(up);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<T>>], v: Var, f: impl FnOnce(&mut [T])) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| vec![T::zero(); self.nodes[v.0].value.len()]);
        f(slot);
    }

    fn propagate(&self, node: &Node<T>, up: &[T], grads: &mut [Option<Vec<T>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, geom, cols } => {
                let c_out = node.value.shape[0];
                let (k, n) = (geom.patch_len(), geom.out_len());
                self.accumulate(grads, *w, |gw| {
                    T::gemm(c_out, n, k, up, (n as isize, 1), cols, (1, n as isize), T::one(), gw, (k as isize, 1));
                });
                self.accumulate(grads, *b, |gb| {
                    for (co, g) in gb.iter_mut().enumerate() {
                        *g += up[co * n..(co + 1) * n].iter().copied().sum::<T>();
                    }
                });
                if self.nodes[x.0].needs_grad {
                    let mut dcols = vec![T::zero(); k * n];
                    let wv = self.value(*w).data();
                    T::gemm(k, c_out, n, wv, (1, k as isize), up, (n as isize, 1), T::zero(), &mut dcols, (n as isize, 1));
                    self.accumulate(grads, *x, |gx| geom.col2im(&dcols, gx));
                }
            }
            Op::Relu { x } => {
                let src = self.value(*x).data();
                self.accumulate(grads, *x, |gx| {
                    for ((g, &u), &v) in gx.iter_mut().zip(up).zip(src) {
                        if v > T::zero() {
                            *g += u;
                        }
                    }
                });
            }
            Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                let hw = node.value.shape[1] * node.value.shape[2];
                let g = self.value(*gain).data();
                self.accumulate(grads, *gain, |gg| {
                    for (i, (&u, &xh)) in up.iter().zip(xhat).enumerate() {
                        gg[i / hw] += u * xh;
                    }
                });
                self.accumulate(grads, *bias, |gb| {
                    for (i, &u) in up.iter().enumerate() {
                        gb[i / hw] += u;
                    }
                });
                if self.nodes[x.0].needs_grad {
                    let n = T::of(up.len() as f64);
                    let dxhat: Vec<T> = up.iter().enumerate().map(|(i, &u)| u * g[i / hw]).collect();
                    let mean_d = dxhat.iter().copied().sum::<T>() / n;
                    let mean_dx = dxhat.iter().zip(xhat).map(|(&d, &xh)| d * xh).sum::<T>() / n;
                    self.accumulate(grads, *x, |gx| {
                        for ((gi, &d), &xh) in gx.iter_mut().zip(&dxhat).zip(xhat) {
                            *gi += *inv_std * (d - mean_d - xh * mean_dx);
                        }
                    });
                }
            }
            Op::PixelShuffle { x, r } => {
                let (c, h, w) = (node.value.shape[0], node.value.shape[1] / r, node.value.shape[2] / r);
                self.accumulate(grads, *x, |gx| {
                    for (dst, src) in shuffle_index(c, h, w, *r) {
                        gx[src] += up[dst];
                    }
                });
            }
            Op::Rank1 { col, row, scalar } => {
                let (cv, rv) = (self.value(*col).data(), self.value(*row).data());
                let nx = rv.len();
                self.accumulate(grads, *col, |gc| {
                    for (k, g) in gc.iter_mut().enumerate() {
                        *g += *scalar * up[k * nx..(k + 1) * nx].iter().zip(rv).map(|(&u, &r)| u * r).sum::<T>();
                    }
                });
                self.accumulate(grads, *row, |gr| {
                    for (k, &ck) in cv.iter().enumerate() {
                        for (g, &u) in gr.iter_mut().zip(&up[k * nx..(k + 1) * nx]) {
                            *g += *scalar * ck * u;
                        }
                    }
                });
            }
            Op::Add { a, b } => {
                for v in [a, b] {
                    self.accumulate(grads, *v, |g| g.iter_mut().zip(up).for_each(|(g, &u)| *g += u));
                }
            }
            Op::Concat { parts } => {
                let mut offset = 0;
                for p in parts {
                    let len = self.value(*p).len();
                    self.accumulate(grads, *p, |g| {
                        g.iter_mut().zip(&up[offset..offset + len]).for_each(|(g, &u)| *g += u)
                    });
                    offset += len;
                }
            }
            Op::Scale { x, s } => {
                self.accumulate(grads, *x, |g| g.iter_mut().zip(up).for_each(|(g, &u)| *g += u * *s));
            }
            Op::Mse { pred, target } => {
                let (p, t) = (self.value(*pred).data(), self.value(*target).data());
                let coef = T::of(2.0) * up[0] / T::of(p.len().max(1) as f64);
                self.accumulate(grads, *pred, |g| {
                    for ((g, &a), &b) in g.iter_mut().zip(p).zip(t) {
                        *g += coef * (a - b);
                    }
                });
                self.accumulate(grads, *target, |g| {
                    for ((g, &a), &b) in g.iter_mut().zip(p).zip(t) {
                        *g -= coef * (a - b);
                    }
                });
            }
            Op::Sum { x } => {
                self.accumulate(grads, *x, |g| g.iter_mut().for_each(|g| *g += up[0]));
            }
        }
    }
}

/// `(destination, source)` index pairs of the pixel shuffle permutation.
fn shuffle_index(c: usize, h: usize, w: usize, r: usize) -> impl Iterator<Item = (usize, usize)> {
    let (oh, ow) = (h * r, w * r);
    (0..c).flat_map(move |ci| {
        (0..oh).flat_map(move |y| {
            (0..ow).map(move |x| {
                let (hh, a, ww, b) = (y / r, y % r, x / r, x % r);
                let src = ((ci * r * r + a * r + b) * h + hh) * w + ww;
                ((ci * oh + y) * ow + x, src)
            })
        })
    })
}

/// Inverse of the pixel shuffle: `[C, rH, rW] -> [C r^2, H, W]`.
pub fn pixel_unshuffle<T: Real>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let (c, oh, ow) = x.dims3()?;
    if r == 0 || oh % r != 0 || ow % r != 0 {
        return Err(Error::ShapeMismatch(format!("{oh}x{ow} not divisible by {r}")));
    }
    let (h, w) = (oh / r, ow / r);
    let mut data = vec![T::zero(); x.len()];
    for (dst, src) in shuffle_index(c, h, w, r) {
        data[src] = x.data()[dst];
    }
    Tensor::new(vec![c * r * r, h, w], data)
}

/// Gradients produced by one backward sweep.
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of the loss with respect to `v`, if `v` took part in it.
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient of `v`, or zeros of length `len` when it did not affect the loss.
    pub fn get_or_zeros(&self, v: Var, len: usize) -> Vec<T> {
        self.get(v).map_or_else(|| vec![T::zero(); len], <[T]>::to_vec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn periodic_conv_of_ones() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::filled(vec![1, 3, 3], 1.0));
        let w = g.constant(Tensor::filled(vec![1, 1, 3, 3], 1.0));
        let b = g.constant(Tensor::zeros(vec![1]));
        let y = g.conv2d(x, w, b, 1, Padding::Periodic).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 3, 3]);
        assert!(g.value(y).data().iter().all(|&v| v == 9.0));
    }

    #[test]
    fn strided_conv_halves_resolution() {
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::zeros(vec![5, 64, 64]));
        let w = g.constant(Tensor::zeros(vec![16, 5, 6, 6]));
        let b = g.constant(Tensor::zeros(vec![16]));
        let y = g.conv2d(x, w, b, 2, Padding::Zero(2)).unwrap();
        assert_eq!(g.value(y).shape(), &[16, 32, 32]);
        let x = g.constant(Tensor::zeros(vec![5, 63, 63]));
        assert!(g.conv2d(x, w, b, 2, Padding::Zero(2)).is_err());
    }

    #[test]
    fn conv_matches_direct_sum() {
        let mut g = Graph::new();
        let xs: Vec<f64> = (0..2 * 5 * 6).map(|i| (i as f64 * 0.37).sin()).collect();
        let ws: Vec<f64> = (0..3 * 2 * 3 * 2).map(|i| (i as f64 * 1.3).cos()).collect();
        let x = g.constant(t(&[2, 5, 6], &xs));
        let w = g.constant(t(&[3, 2, 3, 2], &ws));
        let b = g.constant(t(&[3], &[0.1, -0.2, 0.3]));
        let y = g.conv2d(x, w, b, 1, Padding::Zero(1)).unwrap();
        let (ho, wo) = (5 + 2 - 3 + 1, 6 + 2 - 2 + 1);
        assert_eq!(g.value(y).shape(), &[3, ho, wo]);
        for co in 0..3 {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = [0.1, -0.2, 0.3][co];
                    for ci in 0..2 {
                        for ky in 0..3 {
                            for kx in 0..2 {
                                let (iy, ix) = (oy as isize + ky as isize - 1, ox as isize + kx as isize - 1);
                                if iy < 0 || iy >= 5 || ix < 0 || ix >= 6 {
                                    continue;
                                }
                                acc += ws[((co * 2 + ci) * 3 + ky) * 2 + kx] * xs[(ci * 5 + iy as usize) * 6 + ix as usize];
                            }
                        }
                    }
                    assert!((g.value(y).data()[(co * ho + oy) * wo + ox] - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn relu_values_and_gradient() {
        let mut g = Graph::new();
        let x = g.param(t(&[3], &[-1.0, 0.0, 2.0]));
        let y = g.relu(x);
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);

        let mut g = Graph::new();
        let x = g.param(t(&[2], &[-1.0, 2.0]));
        let y = g.relu(x);
        let target = g.constant(t(&[2], &[-2.5, -3.5]));
        let mse = g.mse(y, target).unwrap();
        // d mse / dy = y - target since 2 / n = 1.
        let grads = g.backward(mse).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[0.0, 5.5]);
    }

    #[test]
    fn layer_norm_of_constant_is_zero() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::filled(vec![2, 3, 3], 4.0));
        let gain = g.constant(Tensor::filled(vec![2], 1.0));
        let bias = g.constant(Tensor::zeros(vec![2]));
        let y = g.layer_norm(x, gain, bias, 1e-5).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));

        let xs: Vec<f64> = (0..18).map(|i| (i as f64 * 2.1).sin() * 3.0 + 1.0).collect();
        let x = g.constant(t(&[2, 3, 3], &xs));
        let y = g.layer_norm(x, gain, bias, 1e-12).unwrap();
        let v = g.value(y).data();
        let mean = v.iter().sum::<f64>() / 18.0;
        let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 18.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pixel_shuffle_layout() {
        let mut g = Graph::new();
        let x = g.constant(t(&[4, 1, 1], &[1.0, 2.0, 3.0, 4.0]));
        let y = g.pixel_shuffle(x, 2).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 2, 2]);
        assert_eq!(g.value(y).data(), &[1.0, 2.0, 3.0, 4.0]);
        let bad = g.constant(Tensor::zeros(vec![3, 2, 2]));
        assert!(g.pixel_shuffle(bad, 2).is_err());
    }

    #[test]
    fn pixel_shuffle_is_a_permutation() {
        let xs: Vec<f64> = (0..32 * 3 * 2).map(|i| i as f64 * 0.5 - 7.0).collect();
        let mut g = Graph::new();
        let x = g.constant(t(&[32, 3, 2], &xs));
        let y = g.pixel_shuffle(x, 4).unwrap();
        assert_eq!(g.value(y).shape(), &[2, 12, 8]);
        assert_eq!(g.value(y).data().iter().sum::<f64>(), xs.iter().sum::<f64>());
        assert_eq!(pixel_unshuffle(g.value(y), 4).unwrap().data(), xs.as_slice());
    }

    #[test]
    fn rank1_map() {
        let mut g = Graph::new();
        let col = g.param(Tensor::filled(vec![3, 1], 1.0));
        let row = g.param(Tensor::filled(vec![1, 4], 1.0));
        let y = g.rank1(0.7, col, row).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 3, 4]);
        assert!(g.value(y).data().iter().all(|&v| v == 0.7));
        let z = g.rank1(0.0, col, row).unwrap();
        assert!(g.value(z).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn add_concat_scale() {
        let mut g = Graph::new();
        let x = g.param(t(&[1, 1, 2], &[1.0, 2.0]));
        let zero = g.constant(Tensor::zeros(vec![1, 1, 2]));
        let y = g.add(x, zero).unwrap();
        assert_eq!(g.value(y).data(), g.value(x).data());
        let c = g.concat(&[x, zero, y]).unwrap();
        assert_eq!(g.value(c).shape(), &[3, 1, 2]);
        let s = g.scale(c, 3.0);
        let loss = g.sum(s);
        let grads = g.backward(loss).unwrap();
        // x feeds concat directly and through y.
        assert_eq!(grads.get(x).unwrap(), &[6.0, 6.0]);
        assert!(grads.get(zero).is_none());
    }

    #[test]
    fn sum_gradients_accumulate() {
        let mut g = Graph::new();
        let x = g.param(t(&[3], &[1.0, -2.0, 3.0]));
        let l = g.sum(x);
        assert_eq!(g.backward(l).unwrap().get(x).unwrap(), &[1.0, 1.0, 1.0]);
        let xx = g.add(x, x).unwrap();
        let l = g.sum(xx);
        assert_eq!(g.backward(l).unwrap().get(x).unwrap(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn mse_values() {
        let mut g = Graph::new();
        let a = g.param(t(&[1], &[0.0]));
        let b = g.constant(t(&[1], &[2.0]));
        let l = g.mse(a, b).unwrap();
        assert_eq!(g.value(l).data(), &[4.0]);
        assert_eq!(g.backward(l).unwrap().get(a).unwrap(), &[-4.0]);
        let l = g.mse(b, b).unwrap();
        assert_eq!(g.value(l).data(), &[0.0]);
        let c = g.constant(t(&[2], &[1.0, 1.0]));
        assert!(g.mse(a, c).is_err());
    }

    #[test]
    fn backward_errors() {
        let g = Graph::<f64>::new();
        assert!(g.backward(Var(0)).is_err());
        let mut g = Graph::new();
        let x = g.param(t(&[2], &[1.0, 2.0]));
        assert!(g.backward(x).is_err());
    }

    #[test]
    fn backward_is_additive_over_loss_terms() {
        let xs = [0.3, -1.2, 2.0, 0.7];
        let build = |which: u8| {
            let mut g = Graph::new();
            let x = g.param(t(&[1, 2, 2], &xs));
            let r = g.relu(x);
            let tgt = g.constant(t(&[1, 2, 2], &[1.0, 1.0, -1.0, 0.0]));
            let l1 = g.mse(r, tgt).unwrap();
            let s = g.scale(x, 0.5);
            let l2 = g.sum(s);
            let loss = match which {
                0 => l1,
                1 => l2,
                _ => g.add(l1, l2).unwrap(),
            };
            g.backward(loss).unwrap().get(x).unwrap().to_vec()
        };
        let (a, b, both) = (build(0), build(1), build(2));
        for k in 0..4 {
            assert_eq!(both[k], a[k] + b[k]);
        }
    }
}
