//! Row-major flat-tensor helpers shared by the TQD and tomography modules.

use nalgebra::DMatrix;

use crate::scalar::{Complex, Real};

/// Row-major strides: `strides[i]` is the product of `dims[i+1..]`.
pub(crate) fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

/// Decomposes a flat row-major index into per-axis digits.
pub(crate) fn digits(mut flat: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0usize; dims.len()];
    for i in (0..dims.len()).rev() {
        out[i] = flat % dims[i];
        flat /= dims[i];
    }
    out
}

/// Contracts one axis of a flat row-major tensor with a matrix:
/// `out[.., r, ..] = sum_a mat[r, a] data[.., a, ..]`. Returns the new data
/// and shape (the axis dimension becomes `mat.nrows()`).
pub(crate) fn contract_axis<T: Real>(
    data: &[Complex<T>],
    shape: &[usize],
    axis: usize,
    mat: &DMatrix<Complex<T>>,
) -> (Vec<Complex<T>>, Vec<usize>) {
    assert!(axis < shape.len(), "axis out of range");
    assert_eq!(mat.ncols(), shape[axis], "contraction dimension mismatch");
    let outer: usize = shape[..axis].iter().product();
    let a_dim = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let rows = mat.nrows();

    let mut out = vec![Complex::<T>::default(); outer * rows * inner];
    for o in 0..outer {
        for r in 0..rows {
            for i in 0..inner {
                let mut acc = Complex::<T>::default();
                for a in 0..a_dim {
                    acc += mat[(r, a)] * data[(o * a_dim + a) * inner + i];
                }
                out[(o * rows + r) * inner + i] = acc;
            }
        }
    }
    let mut new_shape = shape.to_vec();
    new_shape[axis] = rows;
    (out, new_shape)
}

/// Sums out one axis of a flat row-major tensor, removing it from the shape.
pub(crate) fn sum_axis<T: Real>(
    data: &[Complex<T>],
    shape: &[usize],
    axis: usize,
) -> (Vec<Complex<T>>, Vec<usize>) {
    let ones = DMatrix::from_element(1, shape[axis], Complex::new(T::one(), T::zero()));
    let (summed, _) = contract_axis(data, shape, axis, &ones);
    let mut new_shape = shape.to_vec();
    new_shape.remove(axis);
    (summed, new_shape)
}
