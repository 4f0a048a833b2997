use rayon::prelude::*;

use super::{Padding, Scalar, Tensor3};

/// Width-3, stride-1 max pooling with same-length output.
#[derive(Debug, Clone, Copy)]
pub struct MaxPool3 {
    pub padding: Padding,
}

/// Source time index of each pooled output element.
#[derive(Debug, Clone)]
pub struct PoolCache {
    argmax: Vec<u32>,
}

impl MaxPool3 {
    pub fn forward<T: Scalar>(&self, x: &Tensor3<T>) -> (Tensor3<T>, PoolCache) {
        let t = x.t;
        let mut y = Tensor3::zeros(x.n, x.c, t);
        let mut argmax = vec![0u32; x.data.len()];
        y.data
            .par_chunks_mut(t)
            .zip(argmax.par_chunks_mut(t))
            .zip(x.data.par_chunks(t))
            .for_each(|((yr, ar), xr)| {
                for j in 0..t {
                    let mut best = j;
                    for cand in [j as isize - 1, j as isize + 1] {
                        let idx = match self.padding {
                            Padding::Zero if cand < 0 || cand >= t as isize => continue,
                            Padding::Zero => cand as usize,
                            Padding::Circular => cand.rem_euclid(t as isize) as usize,
                        };
                        if xr[idx] > xr[best] {
                            best = idx;
                        }
                    }
                    yr[j] = xr[best];
                    ar[j] = best as u32;
                }
            });
        (y, PoolCache { argmax })
    }

    pub fn backward<T: Scalar>(&self, cache: &PoolCache, dy: &Tensor3<T>) -> Tensor3<T> {
        let t = dy.t;
        let mut dx = Tensor3::zeros(dy.n, dy.c, t);
        dx.data
            .par_chunks_mut(t)
            .zip(dy.data.par_chunks(t))
            .zip(cache.argmax.par_chunks(t))
            .for_each(|((dxr, dyr), ar)| {
                for (j, &src) in ar.iter().enumerate() {
                    dxr[src as usize] += dyr[j];
                }
            });
        dx
    }
}
