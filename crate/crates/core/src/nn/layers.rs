//! Volumetric layers with explicit backward passes.
//!
//! Feature maps are channel-major: channel `c` occupies
//! `data[c * n..(c + 1) * n]` with `n` voxels in volume order.

use crate::volume::Shape3;

use super::scalar::Scalar;

/// Upper bound on im2col buffer elements per chunk.
const COL_BUDGET: usize = 1 << 18;

#[derive(Clone, Debug, PartialEq)]
pub struct Features<T> {
    pub channels: usize,
    pub shape: Shape3,
    pub data: Vec<T>,
}

impl<T: Scalar> Features<T> {
    pub fn zeros(channels: usize, shape: Shape3) -> Self {
        Features {
            channels,
            shape,
            data: vec![T::ZERO; channels * shape.len()],
        }
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let n = self.shape.len();
        &self.data[c * n..(c + 1) * n]
    }

    /// Stacks channels of `a` followed by channels of `b`.
    pub fn concat(a: &Features<T>, b: &Features<T>) -> Features<T> {
        debug_assert_eq!(a.shape, b.shape);
        let mut data = Vec::with_capacity(a.data.len() + b.data.len());
        data.extend_from_slice(&a.data);
        data.extend_from_slice(&b.data);
        Features {
            channels: a.channels + b.channels,
            shape: a.shape,
            data,
        }
    }

    /// Inverse of [`Features::concat`] for gradients.
    pub fn split(self, first: usize) -> (Features<T>, Features<T>) {
        let n = self.shape.len();
        let mut data = self.data;
        let rest = data.split_off(first * n);
        (
            Features {
                channels: first,
                shape: self.shape,
                data,
            },
            Features {
                channels: self.channels - first,
                shape: self.shape,
                data: rest,
            },
        )
    }
}

/// A convolution with `k x k x k` kernel (`k` odd), stride 1 and "same"
/// zero padding. Weights are `[cout][cin][k^3]` at `weight` in the flat
/// parameter vector, followed by `cout` biases at `bias`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv3d {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub weight: usize,
    pub bias: usize,
}

impl Conv3d {
    pub fn taps(&self) -> usize {
        self.kernel.pow(3)
    }

    pub fn weight_len(&self) -> usize {
        self.cout * self.cin * self.taps()
    }

    pub fn param_len(&self) -> usize {
        self.weight_len() + self.cout
    }

    fn rows_per_chunk(&self, shape: Shape3) -> usize {
        let k = self.cin * self.taps();
        (COL_BUDGET / (k * shape.nx)).clamp(1, shape.ny * shape.nz)
    }

    pub fn forward<T: Scalar>(&self, params: &[T], input: &Features<T>) -> Features<T> {
        let w = &params[self.weight..self.weight + self.weight_len()];
        let b = &params[self.bias..self.bias + self.cout];
        self.apply(w, Some(b), input)
    }

    fn apply<T: Scalar>(&self, w: &[T], bias: Option<&[T]>, input: &Features<T>) -> Features<T> {
        debug_assert_eq!(input.channels, self.cin);
        let shape = input.shape;
        let n = shape.len();
        let mut out = Features::zeros(self.cout, shape);
        if let Some(b) = bias {
            for (co, ch) in out.data.chunks_mut(n).enumerate() {
                ch.fill(b[co]);
            }
        }
        if self.kernel == 1 {
            T::gemm(self.cout, self.cin, n, T::ONE, w, self.cin, 1, &input.data, n, 1, T::ONE, &mut out.data, n, 1);
            return out;
        }
        let k = self.cin * self.taps();
        let rows = shape.ny * shape.nz;
        let per = self.rows_per_chunk(shape);
        let mut col = vec![T::ZERO; k * per * shape.nx];
        let mut r0 = 0;
        while r0 < rows {
            let r1 = (r0 + per).min(rows);
            let p = (r1 - r0) * shape.nx;
            let col = &mut col[..k * p];
            self.im2col(input, r0, r1, col);
            let p0 = r0 * shape.nx;
            T::gemm(self.cout, k, p, T::ONE, w, k, 1, col, p, 1, T::ONE, &mut out.data[p0..], n, 1);
            r0 = r1;
        }
        out
    }

    /// The adjoint of a stride-1 "same" convolution is the convolution with
    /// channel-transposed, spatially flipped kernels.
    fn transposed<T: Scalar>(&self, w: &[T]) -> (Conv3d, Vec<T>) {
        let taps = self.taps();
        let mut flipped = vec![T::ZERO; w.len()];
        for co in 0..self.cout {
            for ci in 0..self.cin {
                for t in 0..taps {
                    flipped[(ci * self.cout + co) * taps + (taps - 1 - t)] = w[(co * self.cin + ci) * taps + t];
                }
            }
        }
        let conv = Conv3d { cin: self.cout, cout: self.cin, kernel: self.kernel, weight: 0, bias: 0 };
        (conv, flipped)
    }

    /// Accumulates parameter gradients into `grad_params` and returns the
    /// gradient with respect to the input when `want_input` is set.
    pub fn backward<T: Scalar>(
        &self,
        params: &[T],
        input: &Features<T>,
        grad_out: &Features<T>,
        grad_params: &mut [T],
        want_input: bool,
    ) -> Option<Features<T>> {
        let shape = input.shape;
        let n = shape.len();
        let w = &params[self.weight..self.weight + self.weight_len()];
        {
            let gb = &mut grad_params[self.bias..self.bias + self.cout];
            for (co, g) in gb.iter_mut().enumerate() {
                *g += grad_out.channel(co).iter().copied().sum::<T>();
            }
        }
        let gw = &mut grad_params[self.weight..self.weight + self.weight_len()];
        if self.kernel == 1 {
            T::gemm(self.cout, n, self.cin, T::ONE, &grad_out.data, n, 1, &input.data, 1, n, T::ONE, gw, self.cin, 1);
        } else {
            let k = self.cin * self.taps();
            let rows = shape.ny * shape.nz;
            let per = self.rows_per_chunk(shape);
            // gather rows of a voxel-major im2col matrix from a channel-last
            // copy of the input so the long reduction axis is contiguous in
            // both gemm operands; columns come out tap-major
            let taps = self.taps();
            let cin = self.cin;
            let mut last = vec![T::ZERO; n * cin];
            transpose(&input.data, cin, n, &mut last);
            let mut g_perm = vec![T::ZERO; self.cout * k];
            let mut col_t = vec![T::ZERO; k * per * shape.nx];
            let half = (self.kernel / 2) as isize;
            let mut r0 = 0;
            while r0 < rows {
                let r1 = (r0 + per).min(rows);
                let p = (r1 - r0) * shape.nx;
                let p0 = r0 * shape.nx;
                let col_t = &mut col_t[..k * p];
                for (j, row) in col_t.chunks_exact_mut(k).enumerate() {
                    let (x, y, z) = shape.coords(p0 + j);
                    for (t, dst) in row.chunks_exact_mut(cin).enumerate() {
                        let sx = x as isize + (t % self.kernel) as isize - half;
                        let sy = y as isize + ((t / self.kernel) % self.kernel) as isize - half;
                        let sz = z as isize + (t / (self.kernel * self.kernel)) as isize - half;
                        if sx < 0 || sy < 0 || sz < 0 || sx as usize >= shape.nx || sy as usize >= shape.ny || sz as usize >= shape.nz {
                            dst.fill(T::ZERO);
                        } else {
                            let v = shape.index(sx as usize, sy as usize, sz as usize);
                            dst.copy_from_slice(&last[v * cin..(v + 1) * cin]);
                        }
                    }
                }
                T::gemm(self.cout, p, k, T::ONE, &grad_out.data[p0..], n, 1, col_t, k, 1, T::ONE, &mut g_perm, k, 1);
                r0 = r1;
            }
            for co in 0..self.cout {
                for t in 0..taps {
                    for ci in 0..cin {
                        gw[(co * cin + ci) * taps + t] += g_perm[co * k + t * cin + ci];
                    }
                }
            }
        }
        want_input.then(|| {
            let (conv, flipped) = self.transposed(w);
            conv.apply(&flipped, None, grad_out)
        })
    }

    /// Visits every (input channel, tap, output row) of a chunk, handing the
    /// callback the column-buffer row, the source row (if inside the grid)
    /// and the x offset of the tap.
    fn for_each_tap(&self, shape: Shape3, r0: usize, r1: usize, mut f: impl FnMut(usize, Option<usize>, isize)) {
        let half = (self.kernel / 2) as isize;
        let taps = self.taps();
        let p = (r1 - r0) * shape.nx;
        let n = shape.len();
        for ci in 0..self.cin {
            for t in 0..taps {
                let kx = (t % self.kernel) as isize - half;
                let ky = ((t / self.kernel) % self.kernel) as isize - half;
                let kz = (t / (self.kernel * self.kernel)) as isize - half;
                let row_base = (ci * taps + t) * p;
                for r in r0..r1 {
                    let y = (r % shape.ny) as isize + ky;
                    let z = (r / shape.ny) as isize + kz;
                    let dst = row_base + (r - r0) * shape.nx;
                    let src = (y >= 0 && z >= 0 && (y as usize) < shape.ny && (z as usize) < shape.nz)
                        .then(|| ci * n + shape.index(0, y as usize, z as usize));
                    f(dst, src, kx);
                }
            }
        }
    }

    fn im2col<T: Scalar>(&self, input: &Features<T>, r0: usize, r1: usize, col: &mut [T]) {
        let nx = input.shape.nx;
        let data = &input.data;
        self.for_each_tap(input.shape, r0, r1, |dst, src, kx| {
            let out = &mut col[dst..dst + nx];
            match src {
                None => out.fill(T::ZERO),
                Some(s) => {
                    let row = &data[s..s + nx];
                    shifted_copy(out, row, kx);
                }
            }
        });
    }
}

/// Writes the `cols x rows` transpose of row-major `src` into `dst`.
fn transpose<T: Scalar>(src: &[T], rows: usize, cols: usize, dst: &mut [T]) {
    const B: usize = 32;
    for r0 in (0..rows).step_by(B) {
        for c0 in (0..cols).step_by(B) {
            for r in r0..(r0 + B).min(rows) {
                for c in c0..(c0 + B).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// `out[x] = row[x + shift]`, zero outside the row.
#[inline]
fn shifted_copy<T: Scalar>(out: &mut [T], row: &[T], shift: isize) {
    let nx = row.len();
    let s = shift.unsigned_abs().min(nx);
    if shift >= 0 {
        out[..nx - s].copy_from_slice(&row[s..]);
        out[nx - s..].fill(T::ZERO);
    } else {
        out[..s].fill(T::ZERO);
        out[s..].copy_from_slice(&row[..nx - s]);
    }
}

pub fn leaky_relu_inplace<T: Scalar>(x: &mut Features<T>, slope: T) {
    for v in &mut x.data {
        if *v < T::ZERO {
            *v *= slope;
        }
    }
}

/// Masks `grad` by the activation derivative, read off the activation's
/// output (same sign as its input for positive slopes).
pub fn leaky_relu_backward<T: Scalar>(out: &Features<T>, grad: &mut Features<T>, slope: T) {
    for (g, &o) in grad.data.iter_mut().zip(&out.data) {
        if o <= T::ZERO {
            *g *= slope;
        }
    }
}

/// 2x2x2 max pooling; returns the pooled map and the winning child (0..8)
/// of every output element.
pub fn max_pool2<T: Scalar>(x: &Features<T>) -> (Features<T>, Vec<u8>) {
    let s = x.shape;
    let h = s.halved();
    let n = s.len();
    let m = h.len();
    let mut out = Features::zeros(x.channels, h);
    let mut arg = vec![0u8; x.channels * m];
    for c in 0..x.channels {
        let src = &x.data[c * n..(c + 1) * n];
        for z in 0..h.nz {
            for y in 0..h.ny {
                for xx in 0..h.nx {
                    let o = h.index(xx, y, z);
                    let mut best = T::ZERO;
                    let mut which = 0u8;
                    for k in 0..8 {
                        let v = src[s.index(2 * xx + (k & 1), 2 * y + ((k >> 1) & 1), 2 * z + (k >> 2))];
                        if k == 0 || v > best {
                            best = v;
                            which = k as u8;
                        }
                    }
                    out.data[c * m + o] = best;
                    arg[c * m + o] = which;
                }
            }
        }
    }
    (out, arg)
}

pub fn max_pool2_backward<T: Scalar>(grad: &Features<T>, arg: &[u8], input_shape: Shape3) -> Features<T> {
    let h = grad.shape;
    let n = input_shape.len();
    let m = h.len();
    let mut out = Features::zeros(grad.channels, input_shape);
    for c in 0..grad.channels {
        for z in 0..h.nz {
            for y in 0..h.ny {
                for x in 0..h.nx {
                    let o = c * m + h.index(x, y, z);
                    let k = arg[o] as usize;
                    let i = input_shape.index(2 * x + (k & 1), 2 * y + ((k >> 1) & 1), 2 * z + (k >> 2));
                    out.data[c * n + i] += grad.data[o];
                }
            }
        }
    }
    out
}

/// Nearest-neighbour x2 upsampling.
pub fn upsample2<T: Scalar>(x: &Features<T>) -> Features<T> {
    let s = x.shape;
    let d = s.doubled();
    let n = s.len();
    let mut out = Features::zeros(x.channels, d);
    let m = d.len();
    for c in 0..x.channels {
        let src = &x.data[c * n..(c + 1) * n];
        let dst = &mut out.data[c * m..(c + 1) * m];
        for z in 0..d.nz {
            for y in 0..d.ny {
                let srow = s.index(0, y / 2, z / 2);
                let drow = d.index(0, y, z);
                for xx in 0..d.nx {
                    dst[drow + xx] = src[srow + xx / 2];
                }
            }
        }
    }
    out
}

pub fn upsample2_backward<T: Scalar>(grad: &Features<T>) -> Features<T> {
    let d = grad.shape;
    let s = d.halved();
    let n = s.len();
    let m = d.len();
    let mut out = Features::zeros(grad.channels, s);
    for c in 0..grad.channels {
        let src = &grad.data[c * m..(c + 1) * m];
        let dst = &mut out.data[c * n..(c + 1) * n];
        for z in 0..d.nz {
            for y in 0..d.ny {
                let srow = d.index(0, y, z);
                let drow = s.index(0, y / 2, z / 2);
                for xx in 0..d.nx {
                    dst[drow + xx / 2] += src[srow + xx];
                }
            }
        }
    }
    out
}
