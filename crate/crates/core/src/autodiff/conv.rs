//! im2col lowering for 2D cross-correlation.

use super::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// `p` zeros on every side.
    Zero(usize),
    /// Periodic wrap keeping the spatial size (stride 1 only).
    Periodic,
}

/// Output length along one axis for zero padding, or an error when the
/// stride does not divide the padded extent.
pub fn conv_output_size(input: usize, kernel: usize, pad: usize, stride: usize) -> Result<usize> {
    let padded = input + 2 * pad;
    if stride == 0 || kernel == 0 || padded < kernel {
        return Err(Error::ShapeMismatch(format!("kernel {kernel} does not fit input {input} with padding {pad}")));
    }
    if (padded - kernel) % stride != 0 {
        return Err(Error::ShapeMismatch(format!(
            "stride {stride} does not divide padded extent {padded} minus kernel {kernel}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

/// Resolved convolution geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: Padding,
    pub h_out: usize,
    pub w_out: usize,
}

impl ConvGeometry {
    pub fn new(c_in: usize, h: usize, w: usize, kh: usize, kw: usize, stride: usize, padding: Padding) -> Result<Self> {
        let (h_out, w_out) = match padding {
            Padding::Zero(p) => (conv_output_size(h, kh, p, stride)?, conv_output_size(w, kw, p, stride)?),
            Padding::Periodic => {
                if stride != 1 {
                    return Err(Error::ShapeMismatch("periodic padding requires stride 1".into()));
                }
                if kh > h || kw > w {
                    return Err(Error::ShapeMismatch("periodic kernel larger than the input".into()));
                }
                (h, w)
            }
        };
        Ok(Self { c_in, h, w, kh, kw, stride, padding, h_out, w_out })
    }

    pub fn patch_len(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    pub fn out_len(&self) -> usize {
        self.h_out * self.w_out
    }

    fn offsets(&self) -> (isize, isize) {
        match self.padding {
            Padding::Zero(p) => (p as isize, p as isize),
            Padding::Periodic => (((self.kh - 1) / 2) as isize, ((self.kw - 1) / 2) as isize),
        }
    }

    /// Source index along one axis, or `None` inside zero padding.
    #[inline]
    fn source(&self, out: usize, k: usize, pad: isize, n: usize) -> Option<usize> {
        let pos = (out * self.stride + k) as isize - pad;
        match self.padding {
            Padding::Periodic => Some(pos.rem_euclid(n as isize) as usize),
            Padding::Zero(_) => (pos >= 0 && (pos as usize) < n).then_some(pos as usize),
        }
    }

    /// `cols[(ci * kh + ky) * kw + kx][oy * w_out + ox]`.
    pub fn im2col<T: Real>(&self, x: &[T]) -> Vec<T> {
        let (pad_y, pad_x) = self.offsets();
        let n_out = self.out_len();
        let mut cols = vec![T::zero(); self.patch_len() * n_out];
        let xs: Vec<Vec<Option<usize>>> =
            (0..self.kw).map(|kx| (0..self.w_out).map(|ox| self.source(ox, kx, pad_x, self.w)).collect()).collect();
        for ci in 0..self.c_in {
            let plane = &x[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = ((ci * self.kh + ky) * self.kw + kx) * n_out;
                    let xmap = &xs[kx];
                    for oy in 0..self.h_out {
                        let Some(iy) = self.source(oy, ky, pad_y, self.h) else { continue };
                        let src = &plane[iy * self.w..(iy + 1) * self.w];
                        let dst = &mut cols[row + oy * self.w_out..row + (oy + 1) * self.w_out];
                        for (d, ix) in dst.iter_mut().zip(xmap) {
                            if let Some(ix) = *ix {
                                *d = src[ix];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    /// Scatter-adds column gradients back onto the input layout.
    pub fn col2im<T: Real>(&self, cols: &[T], dx: &mut [T]) {
        let (pad_y, pad_x) = self.offsets();
        let n_out = self.out_len();
        let xs: Vec<Vec<Option<usize>>> =
            (0..self.kw).map(|kx| (0..self.w_out).map(|ox| self.source(ox, kx, pad_x, self.w)).collect()).collect();
        for ci in 0..self.c_in {
            let plane = &mut dx[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = ((ci * self.kh + ky) * self.kw + kx) * n_out;
                    let xmap = &xs[kx];
                    for oy in 0..self.h_out {
                        let Some(iy) = self.source(oy, ky, pad_y, self.h) else { continue };
                        let src = &cols[row + oy * self.w_out..row + (oy + 1) * self.w_out];
                        let dst = &mut plane[iy * self.w..(iy + 1) * self.w];
                        for (s, ix) in src.iter().zip(xmap) {
                            if let Some(ix) = *ix {
                                dst[ix] += *s;
                            }
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_sizes() {
        assert_eq!(conv_output_size(64, 6, 2, 2).unwrap(), 32);
        assert_eq!(conv_output_size(32, 6, 2, 2).unwrap(), 16);
        assert_eq!(conv_output_size(16, 5, 2, 1).unwrap(), 16);
        assert!(conv_output_size(65, 6, 2, 2).is_err());
        assert!(conv_output_size(2, 6, 1, 1).is_err());
        assert!(ConvGeometry::new(1, 8, 8, 3, 3, 2, Padding::Periodic).is_err());
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), c> == <x, col2im(c)> for arbitrary x, c.
        for padding in [Padding::Zero(2), Padding::Zero(0), Padding::Periodic] {
            let stride = if padding == Padding::Periodic { 1 } else { 2 };
            let Ok(g) = ConvGeometry::new(2, 10, 10, 4, 4, stride, padding) else { continue };
            let x: Vec<f64> = (0..200).map(|i| ((i * 37 % 101) as f64 - 50.0) / 7.0).collect();
            let c: Vec<f64> = (0..g.patch_len() * g.out_len()).map(|i| ((i * 53 % 97) as f64 - 48.0) / 5.0).collect();
            let lhs: f64 = g.im2col(&x).iter().zip(&c).map(|(a, b)| a * b).sum();
            let mut back = vec![0.0; 200];
            g.col2im(&c, &mut back);
            let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
        }
    }
}
