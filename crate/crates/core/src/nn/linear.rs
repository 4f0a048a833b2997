use rand::Rng;

use super::{axpy, dot, Matrix, Param, ParamVisitor, ParamVisitorMut, Scalar};

/// Fully connected layer `y = W x + b`, `W` stored `[out][in]`.
#[derive(Debug, Clone)]
pub struct Linear<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn new<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = (1.0 / in_dim as f64).sqrt();
        let weight = (0..in_dim * out_dim)
            .map(|_| T::lit(rng.gen_range(-bound..bound)))
            .collect();
        let bias = (0..out_dim)
            .map(|_| T::lit(rng.gen_range(-bound..bound)))
            .collect();
        Self {
            in_dim,
            out_dim,
            weight: Param::new(vec![out_dim, in_dim], weight),
            bias: Param::new(vec![out_dim], bias),
        }
    }

    pub fn forward(&self, x: &Matrix<T>) -> Matrix<T> {
        assert_eq!(x.cols, self.in_dim, "linear input width");
        let mut y = Matrix::zeros(x.rows, self.out_dim);
        for r in 0..x.rows {
            let xr = x.row(r);
            for o in 0..self.out_dim {
                let w = &self.weight.value[o * self.in_dim..(o + 1) * self.in_dim];
                y.data[r * self.out_dim + o] = dot(w, xr) + self.bias.value[o];
            }
        }
        y
    }

    /// Returns `dL/dx`. Parameter gradients are accumulated only when
    /// `accumulate` is set (frozen layers still propagate).
    pub fn backward(&mut self, x: &Matrix<T>, dy: &Matrix<T>, accumulate: bool) -> Matrix<T> {
        let mut dx = Matrix::zeros(x.rows, self.in_dim);
        for r in 0..x.rows {
            let xr = x.row(r);
            let dyr = dy.row(r);
            for (o, &g) in dyr.iter().enumerate() {
                let w = &self.weight.value[o * self.in_dim..(o + 1) * self.in_dim];
                axpy(g, w, dx.row_mut(r));
                if accumulate {
                    axpy(g, xr, &mut self.weight.grad[o * self.in_dim..(o + 1) * self.in_dim]);
                    self.bias.grad[o] += g;
                }
            }
        }
        dx
    }

    pub fn visit(&self, prefix: &str, f: &mut ParamVisitor<'_, T>) {
        f(&format!("{prefix}.weight"), &self.weight);
        f(&format!("{prefix}.bias"), &self.bias);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<'_, T>) {
        f(&format!("{prefix}.weight"), &mut self.weight);
        f(&format!("{prefix}.bias"), &mut self.bias);
    }
}
