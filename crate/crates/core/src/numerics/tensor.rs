use crate::error::{shape_err, Result};
use crate::scalar::Scalar;

/// Dense row-major tensor. Rank 0 (`[]`) holds a single scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(shape_err!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, T::zero())
    }

    pub fn filled(shape: &[usize], value: T) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<T>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(shape_err!(
                    "row {r} has {} columns, expected {cols}",
                    row.len()
                ));
            }
            data.extend_from_slice(row);
        }
        Self::matrix(rows.len(), cols, data)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        t
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::new(shape.to_vec(), data.iter().map(|&x| T::of(x)).collect())
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|x| x.as_f64()).collect()
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| U::of(x.as_f64())).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<T> {
        if self.data.len() != 1 {
            return Err(shape_err!("item() on tensor of shape {:?}", self.shape));
        }
        Ok(self.data[0])
    }

    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[r, c] => Ok((r, c)),
            s => Err(shape_err!("expected a matrix, got shape {s:?}")),
        }
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    pub fn cols(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }

    pub fn row(&self, r: usize) -> &[T] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn get2(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols() + c]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(shape_err!("cannot reshape {:?} into {shape:?}", self.shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    fn same_shape(&self, other: &Self, op: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(shape_err!(
                "{op}: shapes {:?} and {:?} differ",
                self.shape,
                other.shape
            ));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, op: &str, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.same_shape(other, op)?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|x| x * c)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.same_shape(other, "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let (m, k) = self.dims2()?;
        let (k2, n) = other.dims2()?;
        if k != k2 {
            return Err(shape_err!("matmul: {m}x{k} times {k2}x{n}"));
        }
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let o_row = &mut out[i * n..(i + 1) * n];
            for (p, &a) in a_row.iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Self::matrix(m, n, out)
    }

    pub fn transpose(&self) -> Result<Self> {
        let (m, n) = self.dims2()?;
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Self::matrix(n, m, out)
    }

    /// `self[r, :] + bias` for every row.
    pub fn add_row(&self, bias: &Self) -> Result<Self> {
        let (m, n) = self.dims2()?;
        if bias.shape != [n] {
            return Err(shape_err!("add_row: bias {:?} for {m}x{n}", bias.shape));
        }
        let mut out = self.data.clone();
        for row in out.chunks_mut(n.max(1)) {
            for (o, &b) in row.iter_mut().zip(&bias.data) {
                *o += b;
            }
        }
        Self::matrix(m, n, out)
    }

    /// Column sums of a matrix.
    pub fn sum_rows(&self) -> Result<Self> {
        let (_, n) = self.dims2()?;
        let mut out = vec![T::zero(); n];
        for row in self.data.chunks(n.max(1)) {
            for (o, &x) in out.iter_mut().zip(row) {
                *o += x;
            }
        }
        Ok(Self::vector(out))
    }

    pub fn concat_cols(parts: &[&Self]) -> Result<Self> {
        let rows = match parts.first() {
            Some(p) => p.dims2()?.0,
            None => return Err(shape_err!("concat_cols of nothing")),
        };
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let (r, c) = p.dims2()?;
            if r != rows {
                return Err(shape_err!("concat_cols: row counts {rows} and {r}"));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&p.data[r * w..(r + 1) * w]);
            }
        }
        Self::matrix(rows, total, out)
    }

    pub fn concat_rows(parts: &[&Self]) -> Result<Self> {
        let cols = match parts.first() {
            Some(p) => p.dims2()?.1,
            None => return Err(shape_err!("concat_rows of nothing")),
        };
        let mut rows = 0;
        let mut out = Vec::new();
        for p in parts {
            let (r, c) = p.dims2()?;
            if c != cols {
                return Err(shape_err!("concat_rows: column counts {cols} and {c}"));
            }
            rows += r;
            out.extend_from_slice(&p.data);
        }
        Self::matrix(rows, cols, out)
    }

    /// Columns `[start, start + width)` of a matrix.
    pub fn slice_cols(&self, start: usize, width: usize) -> Result<Self> {
        let (m, n) = self.dims2()?;
        if start + width > n {
            return Err(shape_err!("slice_cols {start}+{width} of {n}"));
        }
        let mut out = Vec::with_capacity(m * width);
        for r in 0..m {
            out.extend_from_slice(&self.data[r * n + start..r * n + start + width]);
        }
        Self::matrix(m, width, out)
    }

    pub fn slice_rows(&self, start: usize, count: usize) -> Result<Self> {
        let (m, n) = self.dims2()?;
        if start + count > m {
            return Err(shape_err!("slice_rows {start}+{count} of {m}"));
        }
        Self::matrix(count, n, self.data[start * n..(start + count) * n].to_vec())
    }

    pub fn gather_rows(&self, index: &[usize]) -> Result<Self> {
        let (m, n) = self.dims2()?;
        let mut out = Vec::with_capacity(index.len() * n);
        for &i in index {
            if i >= m {
                return Err(shape_err!("gather_rows: index {i} out of {m} rows"));
            }
            out.extend_from_slice(&self.data[i * n..(i + 1) * n]);
        }
        Self::matrix(index.len(), n, out)
    }

    /// `out[index[r]] += self[r]`, with `out` having `out_rows` rows.
    pub fn scatter_add_rows(&self, index: &[usize], out_rows: usize) -> Result<Self> {
        let (m, n) = self.dims2()?;
        if index.len() != m {
            return Err(shape_err!(
                "scatter_add_rows: {} indices for {m} rows",
                index.len()
            ));
        }
        let mut out = vec![T::zero(); out_rows * n];
        for (r, &i) in index.iter().enumerate() {
            if i >= out_rows {
                return Err(shape_err!(
                    "scatter_add_rows: index {i} out of {out_rows} rows"
                ));
            }
            for (o, &x) in out[i * n..(i + 1) * n]
                .iter_mut()
                .zip(&self.data[r * n..(r + 1) * n])
            {
                *o += x;
            }
        }
        Self::matrix(out_rows, n, out)
    }

    pub fn scale_rows(&self, factors: &[T]) -> Result<Self> {
        let (m, n) = self.dims2()?;
        if factors.len() != m {
            return Err(shape_err!(
                "scale_rows: {} factors for {m} rows",
                factors.len()
            ));
        }
        let mut out = self.data.clone();
        for (row, &f) in out.chunks_mut(n.max(1)).zip(factors) {
            for x in row {
                *x *= f;
            }
        }
        Self::matrix(m, n, out)
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&self) -> Result<Self> {
        let (m, n) = self.dims2()?;
        if n == 0 {
            return Err(shape_err!("softmax_rows needs at least one column"));
        }
        let mut out = self.data.clone();
        for row in out.chunks_mut(n) {
            let max = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
            let mut total = T::zero();
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                total += *x;
            }
            for x in row.iter_mut() {
                *x /= total;
            }
        }
        Self::matrix(m, n, out)
    }

    /// Row norms, plus the divisor actually used (`max(norm, eps)` semantics: rows
    /// with norm below `eps` are divided by `eps`).
    pub(crate) fn row_divisors(&self, eps: T) -> Result<Vec<T>> {
        let (_, n) = self.dims2()?;
        Ok(self
            .data
            .chunks(n.max(1))
            .map(|row| {
                let norm = row.iter().map(|&x| x * x).sum::<T>().sqrt();
                if norm > eps {
                    norm
                } else {
                    eps
                }
            })
            .collect())
    }

    pub fn l2_normalize_rows(&self, eps: T) -> Result<Self> {
        let (m, _) = self.dims2()?;
        let div = self.row_divisors(eps)?;
        let small = div.iter().filter(|&&d| d == eps).count();
        if small > 0 && m > 0 {
            log::debug!("l2_normalize_rows: {small} row(s) below eps, divided by eps");
        }
        let n = self.cols().max(1);
        let mut out = self.data.clone();
        for (row, &d) in out.chunks_mut(n).zip(&div) {
            for x in row {
                *x /= d;
            }
        }
        Self::new(self.shape.clone(), out)
    }

    /// Number of rows whose norm falls below `eps` (the guarded rows of
    /// [`Tensor::l2_normalize_rows`]).
    pub fn count_small_rows(&self, eps: T) -> Result<usize> {
        Ok(self
            .row_divisors(eps)?
            .iter()
            .filter(|&&d| d == eps)
            .count())
    }

    /// Batched bilinear form: `out[p, k] = hi[p]ᵀ W[:, k, :] hj[p] + b[k]` for
    /// `W` of shape `[d, K, d]`.
    pub fn bilinear(hi: &Self, w: &Self, hj: &Self, b: &Self) -> Result<Self> {
        let (p, d) = hi.dims2()?;
        let (p2, d2) = hj.dims2()?;
        let (wd, k, wd2) = match w.shape.as_slice() {
            &[a, k, c] => (a, k, c),
            s => return Err(shape_err!("bilinear weight must be rank 3, got {s:?}")),
        };
        if p != p2 || d != wd || d2 != wd2 || b.shape != [k] {
            return Err(shape_err!(
                "bilinear: hi {:?}, W {:?}, hj {:?}, b {:?}",
                hi.shape,
                w.shape,
                hj.shape,
                b.shape
            ));
        }
        let mut out = Vec::with_capacity(p * k);
        for r in 0..p {
            let x = &hi.data[r * d..(r + 1) * d];
            let y = &hj.data[r * d2..(r + 1) * d2];
            for c in 0..k {
                let mut s = b.data[c];
                for (a, &xa) in x.iter().enumerate() {
                    if xa == T::zero() {
                        continue;
                    }
                    let wrow = &w.data[(a * k + c) * d2..(a * k + c + 1) * d2];
                    let inner: T = wrow.iter().zip(y).map(|(&wv, &yv)| wv * yv).sum();
                    s += xa * inner;
                }
                out.push(s);
            }
        }
        Self::matrix(p, k, out)
    }
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn silu<T: Scalar>(x: T) -> T {
    x * sigmoid(x)
}
