use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{axpy, dot, Param, ParamVisitor, ParamVisitorMut, Scalar, Tensor3};

/// Boundary handling for same-length convolutions and pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    #[default]
    Zero,
    Circular,
}

/// Contiguous runs `(dst_start, src_start, len)` such that
/// `out[dst + j]` reads `in[src + j]` for an index shift of `shift`.
pub(crate) fn shifted_runs(len: usize, shift: isize, padding: Padding) -> ([(usize, usize, usize); 2], usize) {
    let n = len as isize;
    let mut runs = [(0, 0, 0); 2];
    match padding {
        Padding::Zero => {
            let start = (-shift).max(0);
            let end = (n - shift).min(n);
            if end > start {
                runs[0] = (start as usize, (start + shift) as usize, (end - start) as usize);
                return (runs, 1);
            }
            (runs, 0)
        }
        Padding::Circular => {
            let s = shift.rem_euclid(n);
            if s == 0 {
                runs[0] = (0, 0, len);
                return (runs, 1);
            }
            let s = s as usize;
            runs[0] = (0, s, len - s);
            runs[1] = (len - s, 0, s);
            (runs, 2)
        }
    }
}

/// Same-padded, stride-1 1-D convolution (odd kernel lengths).
#[derive(Debug, Clone)]
pub struct Conv1d<T> {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub padding: Padding,
    /// `[out][in][k]`
    pub weight: Param<T>,
    /// Absent for convolutions that feed a batch norm.
    pub bias: Option<Param<T>>,
}

impl<T: Scalar> Conv1d<T> {
    /// Kaiming-uniform weights, zero bias.
    pub fn new<R: Rng>(in_ch: usize, out_ch: usize, kernel: usize, padding: Padding, rng: &mut R) -> Self {
        let mut conv = Self::without_bias(in_ch, out_ch, kernel, padding, rng);
        conv.bias = Some(Param::zeros(vec![out_ch]));
        conv
    }

    pub fn without_bias<R: Rng>(in_ch: usize, out_ch: usize, kernel: usize, padding: Padding, rng: &mut R) -> Self {
        assert!(kernel % 2 == 1, "kernel length must be odd");
        let fan_in = (in_ch * kernel) as f64;
        let bound = (6.0 / fan_in).sqrt();
        let weight = (0..out_ch * in_ch * kernel)
            .map(|_| T::lit(rng.gen_range(-bound..bound)))
            .collect();
        Self {
            in_ch,
            out_ch,
            kernel,
            padding,
            weight: Param::new(vec![out_ch, in_ch, kernel], weight),
            bias: None,
        }
    }

    fn half(&self) -> isize {
        (self.kernel / 2) as isize
    }

    pub fn forward(&self, x: &Tensor3<T>) -> Tensor3<T> {
        assert_eq!(x.c, self.in_ch, "conv input channels");
        let t = x.t;
        let mut y = Tensor3::zeros(x.n, self.out_ch, t);
        let out_len = self.out_ch * t;
        y.data
            .par_chunks_mut(out_len)
            .enumerate()
            .for_each(|(i, ys)| {
                let xs = x.sample(i);
                for o in 0..self.out_ch {
                    let yo = &mut ys[o * t..(o + 1) * t];
                    yo.fill(self.bias.as_ref().map_or(T::zero(), |b| b.value[o]));
                    for c in 0..self.in_ch {
                        let xc = &xs[c * t..(c + 1) * t];
                        let w = &self.weight.value[(o * self.in_ch + c) * self.kernel..][..self.kernel];
                        for (k, &wk) in w.iter().enumerate() {
                            let (runs, m) = shifted_runs(t, k as isize - self.half(), self.padding);
                            for &(dst, src, len) in &runs[..m] {
                                axpy(wk, &xc[src..src + len], &mut yo[dst..dst + len]);
                            }
                        }
                    }
                }
            });
        y
    }

    /// Accumulates weight/bias gradients and returns the input gradient when
    /// `need_input_grad` is set.
    pub fn backward(&mut self, x: &Tensor3<T>, dy: &Tensor3<T>, need_input_grad: bool) -> Option<Tensor3<T>> {
        let t = x.t;
        let (in_ch, out_ch, kernel, half, padding) = (self.in_ch, self.out_ch, self.kernel, self.half(), self.padding);
        let weight = &self.weight.value;
        let per_sample: Vec<(Vec<T>, Vec<T>, Option<Vec<T>>)> = (0..x.n)
            .into_par_iter()
            .map(|i| {
                let xs = x.sample(i);
                let dys = dy.sample(i);
                let mut dw = vec![T::zero(); out_ch * in_ch * kernel];
                let mut db = vec![T::zero(); out_ch];
                let mut dx = need_input_grad.then(|| vec![T::zero(); in_ch * t]);
                for o in 0..out_ch {
                    let dyo = &dys[o * t..(o + 1) * t];
                    db[o] = dyo.iter().copied().sum();
                    for c in 0..in_ch {
                        let xc = &xs[c * t..(c + 1) * t];
                        let base = (o * in_ch + c) * kernel;
                        for k in 0..kernel {
                            let (runs, m) = shifted_runs(t, k as isize - half, padding);
                            let mut acc = T::zero();
                            for &(dst, src, len) in &runs[..m] {
                                acc += dot(&dyo[dst..dst + len], &xc[src..src + len]);
                                if let Some(dx) = dx.as_mut() {
                                    let dxc = &mut dx[c * t..(c + 1) * t];
                                    axpy(weight[base + k], &dyo[dst..dst + len], &mut dxc[src..src + len]);
                                }
                            }
                            dw[base + k] = acc;
                        }
                    }
                }
                (dw, db, dx)
            })
            .collect();

        let mut dx_all = need_input_grad.then(|| Tensor3::zeros(x.n, in_ch, t));
        for (i, (dw, db, dx)) in per_sample.into_iter().enumerate() {
            for (g, v) in self.weight.grad.iter_mut().zip(dw) {
                *g += v;
            }
            if let Some(bias) = self.bias.as_mut() {
                for (g, v) in bias.grad.iter_mut().zip(db) {
                    *g += v;
                }
            }
            if let (Some(all), Some(dx)) = (dx_all.as_mut(), dx) {
                all.sample_mut(i).copy_from_slice(&dx);
            }
        }
        dx_all
    }

    pub fn visit(&self, prefix: &str, f: &mut ParamVisitor<'_, T>) {
        f(&format!("{prefix}.weight"), &self.weight);
        if let Some(b) = &self.bias {
            f(&format!("{prefix}.bias"), b);
        }
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<'_, T>) {
        f(&format!("{prefix}.weight"), &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(&format!("{prefix}.bias"), b);
        }
    }
}
