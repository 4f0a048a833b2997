use super::Scalar;

/// Dense `[n][c][t]` activation tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3<T> {
    pub n: usize,
    pub c: usize,
    pub t: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor3<T> {
    pub fn zeros(n: usize, c: usize, t: usize) -> Self {
        Self {
            n,
            c,
            t,
            data: vec![T::zero(); n * c * t],
        }
    }

    pub fn from_vec(n: usize, c: usize, t: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), n * c * t, "tensor data length");
        Self { n, c, t, data }
    }

    pub fn sample_len(&self) -> usize {
        self.c * self.t
    }

    pub fn sample(&self, i: usize) -> &[T] {
        let len = self.sample_len();
        &self.data[i * len..(i + 1) * len]
    }

    pub fn sample_mut(&mut self, i: usize) -> &mut [T] {
        let len = self.sample_len();
        &mut self.data[i * len..(i + 1) * len]
    }

    pub fn row(&self, i: usize, ch: usize) -> &[T] {
        let start = (i * self.c + ch) * self.t;
        &self.data[start..start + self.t]
    }

    /// Concatenates tensors with equal `n` and `t` along channels.
    pub fn concat_channels(parts: &[&Tensor3<T>]) -> Self {
        let n = parts[0].n;
        let t = parts[0].t;
        let c: usize = parts.iter().map(|p| p.c).sum();
        let mut out = Vec::with_capacity(n * c * t);
        for i in 0..n {
            for p in parts {
                debug_assert!(p.n == n && p.t == t);
                out.extend_from_slice(p.sample(i));
            }
        }
        Self::from_vec(n, c, t, out)
    }

    /// Inverse of [`Tensor3::concat_channels`].
    pub fn split_channels(&self, widths: &[usize]) -> Vec<Tensor3<T>> {
        debug_assert_eq!(widths.iter().sum::<usize>(), self.c);
        let mut outs: Vec<Vec<T>> = widths
            .iter()
            .map(|w| Vec::with_capacity(self.n * w * self.t))
            .collect();
        for i in 0..self.n {
            let sample = self.sample(i);
            let mut offset = 0;
            for (out, w) in outs.iter_mut().zip(widths) {
                out.extend_from_slice(&sample[offset * self.t..(offset + w) * self.t]);
                offset += w;
            }
        }
        outs.into_iter()
            .zip(widths)
            .map(|(d, &w)| Tensor3::from_vec(self.n, w, self.t, d))
            .collect()
    }

    pub fn add_assign(&mut self, other: &Tensor3<T>) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Global average pooling over time: `[n][c][t] -> [n][c]`.
    pub fn mean_over_time(&self) -> Matrix<T> {
        let scale = T::one() / T::from_usize(self.t).unwrap();
        let mut out = Matrix::zeros(self.n, self.c);
        for i in 0..self.n {
            for ch in 0..self.c {
                let s: T = self.row(i, ch).iter().copied().sum();
                out.data[i * self.c + ch] = s * scale;
            }
        }
        out
    }

    /// Backward of [`Tensor3::mean_over_time`].
    pub fn broadcast_time_grad(grad: &Matrix<T>, t: usize) -> Self {
        let scale = T::one() / T::from_usize(t).unwrap();
        let mut out = Tensor3::zeros(grad.rows, grad.cols, t);
        for (chunk, &g) in out.data.chunks_mut(t).zip(&grad.data) {
            chunk.fill(g * scale);
        }
        out
    }
}

/// Row-major `[rows][cols]` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Horizontal concatenation `[a | b]`.
    pub fn hcat(a: &Matrix<T>, b: &Matrix<T>) -> Self {
        assert_eq!(a.rows, b.rows);
        let cols = a.cols + b.cols;
        let mut data = Vec::with_capacity(a.rows * cols);
        for r in 0..a.rows {
            data.extend_from_slice(a.row(r));
            data.extend_from_slice(b.row(r));
        }
        Self::from_vec(a.rows, cols, data)
    }

    /// Keeps the first `cols` columns.
    pub fn take_cols(&self, cols: usize) -> Self {
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[..cols]);
        }
        Self::from_vec(self.rows, cols, data)
    }
}
