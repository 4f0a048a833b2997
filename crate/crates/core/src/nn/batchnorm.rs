use rayon::prelude::*;

use super::{Mode, Param, ParamVisitor, ParamVisitorMut, Scalar, Tensor3};

/// Per-channel batch normalization over `(batch, time)`.
#[derive(Debug, Clone)]
pub struct BatchNorm1d<T> {
    pub channels: usize,
    pub eps: f64,
    pub momentum: f64,
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Param<T>,
    pub running_var: Param<T>,
}

#[derive(Debug, Clone)]
pub struct BnCache<T> {
    mode: Mode,
    xhat: Tensor3<T>,
    inv_std: Vec<T>,
}

impl<T: Scalar> BatchNorm1d<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            eps: 1e-5,
            momentum: 0.1,
            gamma: Param::new(vec![channels], vec![T::one(); channels]),
            beta: Param::zeros(vec![channels]),
            running_mean: Param::buffer(vec![channels], vec![T::zero(); channels]),
            running_var: Param::buffer(vec![channels], vec![T::one(); channels]),
        }
    }

    /// Per-channel `(sum, sum of squared deviations)` accumulated in sample
    /// order.
    fn batch_stats(&self, x: &Tensor3<T>) -> (Vec<T>, Vec<T>) {
        let count = T::from_usize(x.n * x.t).unwrap();
        let c = self.channels;
        let mut mean = vec![T::zero(); c];
        for i in 0..x.n {
            for (ch, m) in mean.iter_mut().enumerate() {
                *m += x.row(i, ch).iter().copied().sum::<T>();
            }
        }
        mean.iter_mut().for_each(|m| *m = *m / count);
        let mut var = vec![T::zero(); c];
        for i in 0..x.n {
            for (ch, v) in var.iter_mut().enumerate() {
                let m = mean[ch];
                *v += x.row(i, ch).iter().map(|&a| (a - m) * (a - m)).sum::<T>();
            }
        }
        var.iter_mut().for_each(|v| *v = *v / count);
        (mean, var)
    }

    pub fn forward(&mut self, x: &Tensor3<T>, mode: Mode) -> (Tensor3<T>, BnCache<T>) {
        assert_eq!(x.c, self.channels, "batch-norm channels");
        let eps = T::lit(self.eps);
        let (mean, inv_std) = match mode {
            Mode::Train => {
                let (mean, var) = self.batch_stats(x);
                let m = T::lit(self.momentum);
                let count = x.n * x.t;
                let unbias = if count > 1 {
                    T::from_usize(count).unwrap() / T::from_usize(count - 1).unwrap()
                } else {
                    T::one()
                };
                for ch in 0..self.channels {
                    let rm = &mut self.running_mean.value[ch];
                    *rm = (T::one() - m) * *rm + m * mean[ch];
                    let rv = &mut self.running_var.value[ch];
                    *rv = (T::one() - m) * *rv + m * var[ch] * unbias;
                }
                let inv: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
                (mean, inv)
            }
            Mode::Eval => {
                let inv = self
                    .running_var
                    .value
                    .iter()
                    .map(|&v| T::one() / (v + eps).sqrt())
                    .collect();
                (self.running_mean.value.clone(), inv)
            }
        };

        let t = x.t;
        let c = self.channels;
        let mut xhat = Tensor3::zeros(x.n, c, t);
        let mut y = Tensor3::zeros(x.n, c, t);
        let (gamma, beta) = (&self.gamma.value, &self.beta.value);
        xhat.data
            .par_chunks_mut(t)
            .zip(y.data.par_chunks_mut(t))
            .zip(x.data.par_chunks(t))
            .enumerate()
            .for_each(|(row, ((hr, yr), xr))| {
                let ch = row % c;
                for j in 0..t {
                    let h = (xr[j] - mean[ch]) * inv_std[ch];
                    hr[j] = h;
                    yr[j] = gamma[ch] * h + beta[ch];
                }
            });
        (y, BnCache { mode, xhat, inv_std })
    }

    pub fn backward(&mut self, cache: &BnCache<T>, dy: &Tensor3<T>) -> Tensor3<T> {
        let c = self.channels;
        let t = dy.t;
        let xhat = &cache.xhat;
        let mut sum_dy = vec![T::zero(); c];
        let mut sum_dy_xhat = vec![T::zero(); c];
        for i in 0..dy.n {
            for ch in 0..c {
                let g = dy.row(i, ch);
                let h = xhat.row(i, ch);
                sum_dy[ch] += g.iter().copied().sum::<T>();
                sum_dy_xhat[ch] += super::dot(g, h);
            }
        }
        for ch in 0..c {
            self.gamma.grad[ch] += sum_dy_xhat[ch];
            self.beta.grad[ch] += sum_dy[ch];
        }

        let count = T::from_usize(dy.n * t).unwrap();
        let gamma = &self.gamma.value;
        let mode = cache.mode;
        let mut dx = Tensor3::zeros(dy.n, c, t);
        dx.data
            .par_chunks_mut(t)
            .zip(dy.data.par_chunks(t))
            .zip(xhat.data.par_chunks(t))
            .enumerate()
            .for_each(|(row, ((dxr, dyr), hr))| {
                let ch = row % c;
                let scale = gamma[ch] * cache.inv_std[ch];
                match mode {
                    Mode::Train => {
                        let mean_dy = sum_dy[ch] / count;
                        let mean_dyh = sum_dy_xhat[ch] / count;
                        for j in 0..t {
                            dxr[j] = scale * (dyr[j] - mean_dy - hr[j] * mean_dyh);
                        }
                    }
                    Mode::Eval => {
                        for j in 0..t {
                            dxr[j] = scale * dyr[j];
                        }
                    }
                }
            });
        dx
    }

    pub fn visit(&self, prefix: &str, f: &mut ParamVisitor<'_, T>) {
        f(&format!("{prefix}.gamma"), &self.gamma);
        f(&format!("{prefix}.beta"), &self.beta);
        f(&format!("{prefix}.running_mean"), &self.running_mean);
        f(&format!("{prefix}.running_var"), &self.running_var);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<'_, T>) {
        f(&format!("{prefix}.gamma"), &mut self.gamma);
        f(&format!("{prefix}.beta"), &mut self.beta);
        f(&format!("{prefix}.running_mean"), &mut self.running_mean);
        f(&format!("{prefix}.running_var"), &mut self.running_var);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn train_mode_standardizes_and_backward_matches_fd() {
        let data: Vec<f64> = (0..2 * 2 * 6).map(|i| ((i * 7919) % 13) as f64 * 0.3 - 1.0).collect();
        let x = Tensor3::from_vec(2, 2, 6, data);
        let mut bn = BatchNorm1d::<f64>::new(2);
        bn.gamma.value = vec![1.5, -0.7];
        bn.beta.value = vec![0.2, 0.1];
        let probe: Vec<f64> = (0..x.data.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let loss = |bn: &BatchNorm1d<f64>, x: &Tensor3<f64>| -> f64 {
            let mut b = bn.clone();
            let (y, _) = b.forward(x, Mode::Train);
            y.data.iter().zip(&probe).map(|(a, p)| a * p).sum()
        };
        let (_, cache) = bn.clone().forward(&x, Mode::Train);
        let dx = bn.backward(&cache, &Tensor3::from_vec(2, 2, 6, probe.clone()));
        let h = 1e-6;
        for j in 0..x.data.len() {
            let mut xp = x.clone();
            xp.data[j] += h;
            let mut xm = x.clone();
            xm.data[j] -= h;
            let fd = (loss(&bn, &xp) - loss(&bn, &xm)) / (2.0 * h);
            assert!((fd - dx.data[j]).abs() < 1e-6, "{fd} vs {}", dx.data[j]);
        }
        let mut plain = BatchNorm1d::<f64>::new(2);
        let (y, _) = plain.forward(&x, Mode::Train);
        for ch in 0..2 {
            let vals: Vec<f64> = (0..2).flat_map(|i| y.row(i, ch).to_vec()).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-12);
        }
    }
}
