//! Forward kernels on plain tensors.
//!
//! Every differentiable operation recorded by [`Tape`](super::Tape) computes
//! its value with one of these functions, and the tape-free
//! [`Eval`](super::Eval) backend calls them directly.

use super::{NumericsError, Tensor};

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> NumericsError {
    NumericsError::ShapeMismatch {
        op,
        left: a.shape(),
        right: b.shape(),
    }
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor, NumericsError> {
    if a.cols() != b.rows() {
        return Err(mismatch("matmul", a, b));
    }
    let (n, k, m) = (a.rows(), a.cols(), b.cols());
    let mut out = Tensor::zeros(n, m);
    let bd = b.data();
    for i in 0..n {
        let arow = a.row(i);
        let orow = out.row_mut(i);
        for (p, &av) in arow.iter().enumerate().take(k) {
            if av == 0.0 {
                continue;
            }
            let brow = &bd[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(out)
}

/// `aᵀ · b` without materializing the transpose.
pub fn matmul_tn(a: &Tensor, b: &Tensor) -> Result<Tensor, NumericsError> {
    if a.rows() != b.rows() {
        return Err(mismatch("matmul_tn", a, b));
    }
    let (k, n, m) = (a.rows(), a.cols(), b.cols());
    let mut out = Tensor::zeros(n, m);
    let od = out.data_mut();
    for p in 0..k {
        let arow = a.row(p);
        let brow = b.row(p);
        for (i, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut od[i * m..(i + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(out)
}

/// `a · bᵀ` without materializing the transpose.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Result<Tensor, NumericsError> {
    if a.cols() != b.cols() {
        return Err(mismatch("matmul_nt", a, b));
    }
    let (n, m) = (a.rows(), b.rows());
    let mut out = Tensor::zeros(n, m);
    for i in 0..n {
        let arow = a.row(i);
        for j in 0..m {
            let brow = b.row(j);
            let dot: f64 = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
            out.set(i, j, dot);
        }
    }
    Ok(out)
}

fn zip_with(op: &'static str, a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, NumericsError> {
    if a.shape() != b.shape() {
        return Err(mismatch(op, a, b));
    }
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.rows(), a.cols(), data)
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor, NumericsError> {
    zip_with("add", a, b, |x, y| x + y)
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor, NumericsError> {
    zip_with("sub", a, b, |x, y| x - y)
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor, NumericsError> {
    zip_with("mul", a, b, |x, y| x * y)
}

/// Adds a `1 × cols` row to every row of `x`.
pub fn add_row(x: &Tensor, row: &Tensor) -> Result<Tensor, NumericsError> {
    if row.rows() != 1 || row.cols() != x.cols() {
        return Err(mismatch("add_row", x, row));
    }
    let mut out = x.clone();
    for r in 0..out.rows() {
        for (o, &b) in out.row_mut(r).iter_mut().zip(row.data()) {
            *o += b;
        }
    }
    Ok(out)
}

/// Multiplies each row of `x` by the matching entry of the `rows × 1` column `w`.
pub fn mul_col(x: &Tensor, w: &Tensor) -> Result<Tensor, NumericsError> {
    if w.cols() != 1 || w.rows() != x.rows() {
        return Err(mismatch("mul_col", x, w));
    }
    let mut out = x.clone();
    for r in 0..out.rows() {
        let s = w.data()[r];
        out.row_mut(r).iter_mut().for_each(|v| *v *= s);
    }
    Ok(out)
}

pub fn scale(x: &Tensor, c: f64) -> Tensor {
    x.map(|v| v * c)
}

pub fn exp(x: &Tensor) -> Result<Tensor, NumericsError> {
    let out = x.map(f64::exp);
    if !out.is_finite() {
        return Err(NumericsError::NonFinite { op: "exp" });
    }
    Ok(out)
}

pub fn log(x: &Tensor) -> Result<Tensor, NumericsError> {
    if let Some(&bad) = x.data().iter().find(|&&v| v.is_nan() || v <= 0.0) {
        return Err(NumericsError::Domain { op: "log", value: bad });
    }
    Ok(x.map(f64::ln))
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Mean of each row, as a `rows × 1` column.
pub fn mean_rows(x: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(x.rows(), 1);
    if x.cols() == 0 {
        return out;
    }
    let inv = 1.0 / x.cols() as f64;
    for r in 0..x.rows() {
        out.data_mut()[r] = x.row(r).iter().sum::<f64>() * inv;
    }
    out
}

/// Sum of each row, as a `rows × 1` column.
pub fn row_sums(x: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(x.rows(), 1);
    for r in 0..x.rows() {
        out.data_mut()[r] = x.row(r).iter().sum();
    }
    out
}

pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor, NumericsError> {
    let rows = parts.first().map_or(0, |t| t.rows());
    if let Some(bad) = parts.iter().find(|t| t.rows() != rows) {
        return Err(mismatch("concat_cols", parts[0], bad));
    }
    let cols: usize = parts.iter().map(|t| t.cols()).sum();
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for t in parts {
            data.extend_from_slice(t.row(r));
        }
    }
    Tensor::from_vec(rows, cols, data)
}

pub fn slice_cols(x: &Tensor, lo: usize, hi: usize) -> Result<Tensor, NumericsError> {
    if lo > hi || hi > x.cols() {
        return Err(NumericsError::ShapeMismatch {
            op: "slice_cols",
            left: x.shape(),
            right: (lo, hi),
        });
    }
    let mut data = Vec::with_capacity(x.rows() * (hi - lo));
    for r in 0..x.rows() {
        data.extend_from_slice(&x.row(r)[lo..hi]);
    }
    Tensor::from_vec(x.rows(), hi - lo, data)
}

pub fn concat_rows(parts: &[&Tensor]) -> Result<Tensor, NumericsError> {
    let cols = parts.first().map_or(0, |t| t.cols());
    if let Some(bad) = parts.iter().find(|t| t.cols() != cols) {
        return Err(mismatch("concat_rows", parts[0], bad));
    }
    let rows: usize = parts.iter().map(|t| t.rows()).sum();
    let mut data = Vec::with_capacity(rows * cols);
    for t in parts {
        data.extend_from_slice(t.data());
    }
    Tensor::from_vec(rows, cols, data)
}

pub fn gather_rows(x: &Tensor, index: &[usize]) -> Result<Tensor, NumericsError> {
    let mut out = Tensor::zeros(index.len(), x.cols());
    for (i, &src) in index.iter().enumerate() {
        if src >= x.rows() {
            return Err(NumericsError::IndexOutOfRange {
                op: "gather_rows",
                index: src,
                len: x.rows(),
            });
        }
        out.row_mut(i).copy_from_slice(x.row(src));
    }
    Ok(out)
}

/// Sums row `i` of `x` into row `index[i]` of an `n_out × cols` zero tensor.
pub fn scatter_add_rows(x: &Tensor, index: &[usize], n_out: usize) -> Result<Tensor, NumericsError> {
    if index.len() != x.rows() {
        return Err(NumericsError::ShapeMismatch {
            op: "scatter_add_rows",
            left: x.shape(),
            right: (index.len(), 1),
        });
    }
    let mut out = Tensor::zeros(n_out, x.cols());
    for (i, &dst) in index.iter().enumerate() {
        if dst >= n_out {
            return Err(NumericsError::IndexOutOfRange {
                op: "scatter_add_rows",
                index: dst,
                len: n_out,
            });
        }
        for (o, &v) in out.row_mut(dst).iter_mut().zip(x.row(i)) {
            *o += v;
        }
    }
    Ok(out)
}

fn softmax_in_place(values: &mut [f64]) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in values.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in values.iter_mut() {
        *v /= total;
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    out
}

/// Softmax over groups of rows, independently per column.
///
/// Rows sharing the same `segment[i]` form one group; a group's entries in a
/// given column sum to one.
pub fn segment_softmax(x: &Tensor, segment: &[usize], n_segments: usize) -> Result<Tensor, NumericsError> {
    if segment.len() != x.rows() {
        return Err(NumericsError::ShapeMismatch {
            op: "segment_softmax",
            left: x.shape(),
            right: (segment.len(), 1),
        });
    }
    let cols = x.cols();
    let mut max = Tensor::filled(n_segments, cols, f64::NEG_INFINITY);
    for (i, &s) in segment.iter().enumerate() {
        if s >= n_segments {
            return Err(NumericsError::IndexOutOfRange {
                op: "segment_softmax",
                index: s,
                len: n_segments,
            });
        }
        for (m, &v) in max.row_mut(s).iter_mut().zip(x.row(i)) {
            *m = m.max(v);
        }
    }
    let mut out = Tensor::zeros(x.rows(), cols);
    let mut totals = Tensor::zeros(n_segments, cols);
    for (i, &s) in segment.iter().enumerate() {
        for c in 0..cols {
            let e = (x.get(i, c) - max.get(s, c)).exp();
            out.set(i, c, e);
            totals.data_mut()[s * cols + c] += e;
        }
    }
    for (i, &s) in segment.iter().enumerate() {
        for c in 0..cols {
            let v = out.get(i, c) / totals.get(s, c);
            out.set(i, c, v);
        }
    }
    Ok(out)
}
