//! Dense complex operator algebra on tensor-factored Hilbert spaces.
//!
//! [`Operator`] is the universal carrier for states, POVM elements, Choi
//! matrices, and temporal states: a square complex matrix together with the
//! ordered list of tensor-factor dimensions it acts on. Factor 0 is the
//! leftmost (slowest-varying) index of the Kronecker layout; temporal states
//! order their factors time-descending, `(t_n, …, t_0)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use nalgebra::ComplexField as _;
use crate::scalar::{im, is_finite, re, Complex, Real, Tolerances};

/// Complex square matrix with tensor-factor bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator<T: Real> {
    entries: DMatrix<Complex<T>>,
    factor_dims: Vec<usize>,
}

/// Schatten p-norm selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchattenP {
    /// Trace norm (sum of singular values).
    One,
    /// Hilbert-Schmidt / Frobenius norm.
    Two,
    /// Operator norm (largest singular value).
    Inf,
}

/// Eigendecomposition of a Hermitian operator, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermitianEigen<T: Real> {
    pub values: DVector<T>,
    /// Eigenvectors as columns, matching `values`.
    pub vectors: DMatrix<Complex<T>>,
}

/// Decomposition of an arbitrary operator into PSD pieces with coefficients
/// in `{1, -1, i, -i}`.
#[derive(Debug, Clone)]
pub struct PsdCombination<T: Real> {
    pub terms: Vec<(Complex<T>, Operator<T>)>,
}

impl<T: Real> PsdCombination<T> {
    /// Weighted sum of the terms.
    pub fn resum(&self) -> Operator<T> {
        let (first_coeff, first_op) = &self.terms[0];
        let mut acc = first_op.scaled(*first_coeff);
        for (c, op) in &self.terms[1..] {
            acc = &acc + &op.scaled(*c);
        }
        acc
    }
}

use crate::flat::{digits, strides};

impl<T: Real> Operator<T> {
    /// Wraps a square matrix, validating shape and finiteness.
    pub fn new(entries: DMatrix<Complex<T>>, factor_dims: impl Into<Vec<usize>>) -> Result<Self> {
        let factor_dims = factor_dims.into();
        if factor_dims.is_empty() || factor_dims.contains(&0) {
            return Err(Error::InvalidOperator(
                "factor_dims must be a nonempty list of positive dimensions".into(),
            ));
        }
        let d: usize = factor_dims.iter().product();
        if entries.nrows() != d || entries.ncols() != d {
            return Err(Error::InvalidOperator(format!(
                "matrix is {}x{} but factor dims {:?} require {}x{}",
                entries.nrows(),
                entries.ncols(),
                factor_dims,
                d,
                d
            )));
        }
        if entries.iter().any(|z| !is_finite(z.re) || !is_finite(z.im)) {
            return Err(Error::InvalidOperator("matrix has NaN or Inf entries".into()));
        }
        Ok(Self { entries, factor_dims })
    }

    /// Single-factor operator on a space of dimension `entries.nrows()`.
    pub fn square(entries: DMatrix<Complex<T>>) -> Result<Self> {
        let d = entries.nrows();
        Self::new(entries, vec![d])
    }

    pub fn from_fn(
        factor_dims: impl Into<Vec<usize>>,
        f: impl Fn(usize, usize) -> Complex<T>,
    ) -> Result<Self> {
        let dims = factor_dims.into();
        let d: usize = dims.iter().product();
        Self::new(DMatrix::from_fn(d, d, f), dims)
    }

    pub fn identity(factor_dims: impl Into<Vec<usize>>) -> Self {
        let dims: Vec<usize> = factor_dims.into();
        let d: usize = dims.iter().product();
        Self { entries: DMatrix::identity(d, d), factor_dims: dims }
    }

    pub fn zeros(factor_dims: impl Into<Vec<usize>>) -> Self {
        let dims: Vec<usize> = factor_dims.into();
        let d: usize = dims.iter().product();
        Self { entries: DMatrix::zeros(d, d), factor_dims: dims }
    }

    /// Outer product `|u><v|` as a single-factor operator.
    pub fn outer(u: &DVector<Complex<T>>, v: &DVector<Complex<T>>) -> Self {
        Self { entries: u * v.adjoint(), factor_dims: vec![u.len()] }
    }

    /// Rank-one projector `|v><v|`.
    pub fn projector(v: &DVector<Complex<T>>) -> Self {
        Self::outer(v, v)
    }

    /// The swap operator on `[d, d]`.
    pub fn swap(d: usize) -> Self {
        let mut m = DMatrix::zeros(d * d, d * d);
        for i in 0..d {
            for j in 0..d {
                m[(i * d + j, j * d + i)] = re(T::one());
            }
        }
        Self { entries: m, factor_dims: vec![d, d] }
    }

    /// Pauli matrix `sigma_mu` for `mu` in `0..=3` (identity, x, y, z).
    pub fn pauli(mu: usize) -> Self {
        let o = Complex::<T>::default();
        let one = re(T::one());
        let i = im::<T>();
        let rows = match mu {
        0 => [[one, o], [o, one]],
            1 => [[o, one], [one, o]],
            2 => [[o, -i], [i, o]],
            3 => [[one, o], [o, -one]],
            _ => panic!("pauli index {mu} out of range"),
        };
        let m = DMatrix::from_fn(2, 2, |r, c| rows[r][c]);
        Self { entries: m, factor_dims: vec![2] }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn factor_dims(&self) -> &[usize] {
        &self.factor_dims
    }

    pub fn matrix(&self) -> &DMatrix<Complex<T>> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<Complex<T>> {
        self.entries
    }

    /// Reinterprets the same matrix with a different factorization.
    pub fn with_factor_dims(&self, factor_dims: impl Into<Vec<usize>>) -> Result<Self> {
        Self::new(self.entries.clone(), factor_dims)
    }

    pub fn trace(&self) -> Complex<T> {
        self.entries.diagonal().sum()
    }

    pub fn adjoint(&self) -> Self {
        Self { entries: self.entries.adjoint(), factor_dims: self.factor_dims.clone() }
    }

    /// Full transpose in the computational basis.
    pub fn transpose(&self) -> Self {
        Self { entries: self.entries.transpose(), factor_dims: self.factor_dims.clone() }
    }

    pub fn conjugate(&self) -> Self {
        Self { entries: self.entries.map(|z| z.conj()), factor_dims: self.factor_dims.clone() }
    }

    pub fn scaled(&self, c: Complex<T>) -> Self {
        Self { entries: self.entries.map(|z| z * c), factor_dims: self.factor_dims.clone() }
    }

    /// `(X + X^dag)/2`.
    pub fn hermitian_part(&self) -> Self {
        let adj = self.entries.adjoint();
        let half = re(T::lit(0.5));
        Self {
            entries: (&self.entries + adj).map(|z| z * half),
            factor_dims: self.factor_dims.clone(),
        }
    }

    /// `(X - X^dag)/(2i)`; Hermitian, with `X = H + i A`.
    pub fn anti_hermitian_part(&self) -> Self {
        let adj = self.entries.adjoint();
        let c = Complex::new(T::zero(), -T::lit(0.5));
        Self {
            entries: (&self.entries - adj).map(|z| z * c),
            factor_dims: self.factor_dims.clone(),
        }
    }

    /// Largest entrywise deviation from Hermiticity.
    pub fn hermitian_deviation(&self) -> T {
        let d = self.dim();
        let mut worst = T::zero();
        for i in 0..d {
            for j in 0..d {
                let dev = (self.entries[(i, j)] - self.entries[(j, i)].conj()).modulus();
                if dev > worst {
                    worst = dev;
                }
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: T) -> bool {
        self.hermitian_deviation() <= tol * (T::one() + self.max_abs_entry())
    }

    pub fn max_abs_entry(&self) -> T {
        self.entries.iter().fold(T::zero(), |acc, z| {
            let n = z.modulus();
            if n > acc {
                n
            } else {
                acc
            }
        })
    }

    /// `Tr(A B)` without materializing the product.
    pub fn trace_product(&self, other: &Self) -> Complex<T> {
        let d = self.dim();
        let mut acc = Complex::default();
        for i in 0..d {
            for j in 0..d {
                acc += self.entries[(i, j)] * other.entries[(j, i)];
            }
        }
        acc
    }

    /// Hilbert-Schmidt inner product `Tr(A^dag B)`.
    pub fn hs_inner(&self, other: &Self) -> Complex<T> {
        let mut acc = Complex::default();
        for (a, b) in self.entries.iter().zip(other.entries.iter()) {
            acc += a.conj() * *b;
        }
        acc
    }

    /// 2-norm distance to another operator.
    pub fn distance(&self, other: &Self) -> T {
        (self - other).schatten_norm(SchattenP::Two)
    }

    /// Kronecker product; `self`'s indices are the slower-varying ones.
    pub fn tensor(&self, other: &Self) -> Self {
        let mut dims = self.factor_dims.clone();
        dims.extend_from_slice(&other.factor_dims);
        Self { entries: self.entries.kronecker(&other.entries), factor_dims: dims }
    }

    /// Kronecker product of a list, left to right.
    pub fn tensor_all(ops: &[&Self]) -> Self {
        assert!(!ops.is_empty(), "tensor_all needs at least one operator");
        let mut acc = ops[0].clone();
        for op in &ops[1..] {
            acc = acc.tensor(op);
        }
        acc
    }

    /// Traces out every factor not listed in `keep`; kept factors remain in
    /// their original order.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<Self> {
        let n = self.factor_dims.len();
        let mut keep = keep.to_vec();
        keep.sort_unstable();
        keep.dedup();
        if keep.is_empty() {
            return Err(Error::InvalidParam("partial_trace: keep must be nonempty".into()));
        }
        if let Some(&bad) = keep.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: bad, count: n });
        }
        let traced: Vec<usize> = (0..n).filter(|i| !keep.contains(i)).collect();
        let kept_dims: Vec<usize> = keep.iter().map(|&i| self.factor_dims[i]).collect();
        let traced_dims: Vec<usize> = traced.iter().map(|&i| self.factor_dims[i]).collect();
        let dk: usize = kept_dims.iter().product();
        let dt: usize = traced_dims.iter().product();
        let st = strides(&self.factor_dims);

        let base_of = |flat: usize, positions: &[usize], dims: &[usize]| -> usize {
            digits(flat, dims)
                .iter()
                .zip(positions)
                .map(|(&dig, &pos)| dig * st[pos])
                .sum()
        };

        let traced_offsets: Vec<usize> =
            (0..dt).map(|t| base_of(t, &traced, &traced_dims)).collect();

        let mut out = DMatrix::zeros(dk, dk);
        for r in 0..dk {
            let rbase = base_of(r, &keep, &kept_dims);
            for c in 0..dk {
                let cbase = base_of(c, &keep, &kept_dims);
                let mut acc = Complex::default();
                for &off in &traced_offsets {
                    acc += self.entries[(rbase + off, cbase + off)];
                }
                out[(r, c)] = acc;
            }
        }
        Self::new(out, kept_dims)
    }

    /// Transposes a single tensor factor.
    pub fn partial_transpose(&self, factor: usize) -> Result<Self> {
        let n = self.factor_dims.len();
        if factor >= n {
            return Err(Error::IndexOutOfRange { index: factor, count: n });
        }
        let st = strides(&self.factor_dims);
        let d_f = self.factor_dims[factor];
        let s_f = st[factor];
        let d = self.dim();
        let mut out = DMatrix::zeros(d, d);
        for r in 0..d {
            let dr = (r / s_f) % d_f;
            for c in 0..d {
                let dc = (c / s_f) % d_f;
                let r2 = r - dr * s_f + dc * s_f;
                let c2 = c - dc * s_f + dr * s_f;
                out[(r2, c2)] = self.entries[(r, c)];
            }
        }
        Ok(Self { entries: out, factor_dims: self.factor_dims.clone() })
    }

    /// Reorders tensor factors: new factor `k` is old factor `perm[k]`.
    pub fn permute_factors(&self, perm: &[usize]) -> Result<Self> {
        let n = self.factor_dims.len();
        let mut seen = vec![false; n];
        if perm.len() != n {
            return Err(Error::InvalidParam(format!(
                "permutation length {} does not match factor count {}",
                perm.len(),
                n
            )));
        }
        for &p in perm {
            if p >= n {
                return Err(Error::IndexOutOfRange { index: p, count: n });
            }
            seen[p] = true;
        }
        if seen.iter().any(|&s| !s) {
            return Err(Error::InvalidParam("not a permutation".into()));
        }
        let new_dims: Vec<usize> = perm.iter().map(|&p| self.factor_dims[p]).collect();
        let old_strides = strides(&self.factor_dims);
        let new_dims_ref = &new_dims;
        let to_old = |flat: usize| -> usize {
            digits(flat, new_dims_ref)
                .iter()
                .zip(perm)
                .map(|(&dig, &p)| dig * old_strides[p])
                .sum()
        };
        let d = self.dim();
        let mut out = DMatrix::zeros(d, d);
        for r in 0..d {
            let ro = to_old(r);
            for c in 0..d {
                out[(r, c)] = self.entries[(ro, to_old(c))];
            }
        }
        Self::new(out, new_dims)
    }

    /// Eigendecomposition of a Hermitian operator; rejects non-Hermitian
    /// input rather than symmetrizing it.
    pub fn hermitian_eig(&self, tol: T) -> Result<HermitianEigen<T>> {
        let dev = self.hermitian_deviation();
        if dev > tol * (T::one() + self.max_abs_entry()) {
            return Err(Error::NotHermitian { deviation: dev.as_f64() });
        }
        Ok(eig_of_hermitian_part(&self.entries))
    }

    /// `V f(Lambda) V^dag` for a Hermitian operator.
    pub fn hermitian_fn(&self, tol: T, f: impl Fn(T) -> T) -> Result<Self> {
        let eig = self.hermitian_eig(tol)?;
        let d = self.dim();
        let mut scaled = eig.vectors.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            let fv = re(f(eig.values[k]));
            for r in 0..d {
                col[r] *= fv;
            }
        }
        let m = scaled * eig.vectors.adjoint();
        Ok(Self { entries: m, factor_dims: self.factor_dims.clone() })
    }

    /// `X^{-1/2}` of a Hermitian positive definite operator.
    pub fn inv_sqrt(&self, tol: &Tolerances<T>) -> Result<Self> {
        let eig = self.hermitian_eig(tol.tol_recon)?;
        let min = eig.values.min();
        if min < tol.eps_pd {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: min.as_f64() });
        }
        self.hermitian_fn(tol.tol_recon, |x| T::one() / x.sqrt())
    }

    /// Splits into PSD pieces: `X = H + iA` with Hermitian `H`, `A`, then
    /// each of those into positive and negative spectral parts. Terms that
    /// vanish at the `tol_psd` scale are dropped, so an operator that is
    /// already PSD comes back as the single term `(1, X)`.
    pub fn psd_decompose(&self, tol: &Tolerances<T>) -> PsdCombination<T> {
        let scale = T::one() + self.max_abs_entry();
        let threshold = tol.tol_psd * scale;
        let mut terms: Vec<(Complex<T>, Operator<T>)> = Vec::new();

        let parts = [
            (re(T::one()), self.hermitian_part()),
            (im::<T>(), self.anti_hermitian_part()),
        ];
        for (coeff, herm) in parts {
            if herm.max_abs_entry() <= threshold {
                continue;
            }
            let eig = eig_of_hermitian_part(herm.matrix());
            let min = eig.values.min();
            let max = eig.values.max();
            if min >= -threshold {
                terms.push((coeff, herm));
            } else if max <= threshold {
                terms.push((-coeff, herm.scaled(re(-T::one()))));
            } else {
                let part = |pred: &dyn Fn(T) -> bool, flip: bool| -> Operator<T> {
                    let d = herm.dim();
                    let mut m = DMatrix::zeros(d, d);
                    for (k, lambda) in eig.values.iter().enumerate() {
                        if pred(*lambda) {
                            let v = eig.vectors.column(k);
                            let w = if flip { -*lambda } else { *lambda };
                            m += (v * v.adjoint()).map(|z| z * re(w));
                        }
                    }
                    Operator { entries: m, factor_dims: herm.factor_dims.clone() }
                };
                terms.push((coeff, part(&|l| l > T::zero(), false)));
                terms.push((-coeff, part(&|l| l <= T::zero(), true)));
            }
        }
        if terms.is_empty() {
            terms.push((re(T::one()), Self::zeros(self.factor_dims.clone())));
        }
        PsdCombination { terms }
    }

    /// Schatten p-norm for p in {1, 2, inf}.
    pub fn schatten_norm(&self, p: SchattenP) -> T {
        match p {
            SchattenP::Two => {
                let mut acc = T::zero();
                for z in self.entries.iter() {
                    acc += z.norm_sqr();
                }
                acc.sqrt()
            }
            SchattenP::One | SchattenP::Inf => {
                let sv = self.singular_values();
                match p {
                    SchattenP::One => sv.iter().fold(T::zero(), |a, &s| a + s),
                    _ => sv.iter().fold(T::zero(), |a, &s| if s > a { s } else { a }),
                }
            }
        }
    }

    /// Singular values, descending, via the Hermitian spectrum of `X^dag X`.
    pub fn singular_values(&self) -> Vec<T> {
        let gram = self.entries.adjoint() * &self.entries;
        let eig = eig_of_hermitian_part(&gram);
        let mut sv: Vec<T> = eig
            .values
            .iter()
            .map(|&l| if l > T::zero() { l.sqrt() } else { T::zero() })
            .collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        sv
    }

    /// Smallest eigenvalue of a Hermitian operator.
    pub fn min_eigenvalue(&self, tol: T) -> Result<T> {
        Ok(self.hermitian_eig(tol)?.values.min())
    }

    /// PSD check with slack `tol.tol_psd` (Hermiticity checked first).
    pub fn is_psd(&self, tol: &Tolerances<T>) -> bool {
        let scale = T::one() + self.max_abs_entry();
        self.is_hermitian(tol.tol_recon)
            && eig_of_hermitian_part(&self.entries).values.min() >= -tol.tol_psd * scale
    }
}

/// Eigendecomposition of the Hermitian part of a matrix. Used internally on
/// matrices that are Hermitian by construction.
pub(crate) fn eig_of_hermitian_part<T: Real>(m: &DMatrix<Complex<T>>) -> HermitianEigen<T> {
    let d = m.nrows();
    if d == 1 {
        return HermitianEigen {
            values: DVector::from_element(1, m[(0, 0)].re),
            vectors: DMatrix::identity(1, 1),
        };
    }
    let herm = m.hermitian_part();
    let se = herm.symmetric_eigen();
    // sort ascending
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap());
    let values = DVector::from_fn(d, |k, _| se.eigenvalues[order[k]]);
    let mut vectors = DMatrix::zeros(d, d);
    for (k, &src) in order.iter().enumerate() {
        vectors.set_column(k, &se.eigenvectors.column(src));
    }
    HermitianEigen { values, vectors }
}

/// Computational basis ket `|k>` in dimension `d`.
pub fn basis_ket<T: Real>(d: usize, k: usize) -> DVector<Complex<T>> {
    let mut v = DVector::from_element(d, Complex::default());
    v[k] = re(T::one());
    v
}

impl<'b, T: Real> std::ops::Add<&'b Operator<T>> for &Operator<T> {
    type Output = Operator<T>;
    fn add(self, rhs: &'b Operator<T>) -> Operator<T> {
        assert_eq!(self.factor_dims, rhs.factor_dims, "operator factor dims differ");
        Operator { entries: &self.entries + &rhs.entries, factor_dims: self.factor_dims.clone() }
    }
}

impl<'b, T: Real> std::ops::Sub<&'b Operator<T>> for &Operator<T> {
    type Output = Operator<T>;
    fn sub(self, rhs: &'b Operator<T>) -> Operator<T> {
        assert_eq!(self.factor_dims, rhs.factor_dims, "operator factor dims differ");
        Operator { entries: &self.entries - &rhs.entries, factor_dims: self.factor_dims.clone() }
    }
}

impl<'b, T: Real> std::ops::Mul<&'b Operator<T>> for &Operator<T> {
    type Output = Operator<T>;
    fn mul(self, rhs: &'b Operator<T>) -> Operator<T> {
        assert_eq!(self.factor_dims, rhs.factor_dims, "operator factor dims differ");
        Operator { entries: &self.entries * &rhs.entries, factor_dims: self.factor_dims.clone() }
    }
}

impl<T: Real> std::ops::Neg for &Operator<T> {
    type Output = Operator<T>;
    fn neg(self) -> Operator<T> {
        self.scaled(re(-T::one()))
    }
}

#[derive(Serialize, Deserialize)]
struct OperatorJson<T> {
    dims: Vec<usize>,
    re: Vec<Vec<T>>,
    im: Vec<Vec<T>>,
}

impl<T: Real> Serialize for Operator<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let d = self.dim();
        let row = |k: usize, f: &dyn Fn(Complex<T>) -> T| -> Vec<T> {
            (0..d).map(|j| f(self.entries[(k, j)])).collect()
        };
        OperatorJson {
            dims: self.factor_dims.clone(),
            re: (0..d).map(|k| row(k, &|z| z.re)).collect(),
            im: (0..d).map(|k| row(k, &|z| z.im)).collect(),
        }
        .serialize(s)
    }
}

impl<'de, T: Real> Deserialize<'de> for Operator<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as DeError;
        let raw = OperatorJson::<T>::deserialize(d)?;
        let dim: usize = raw.dims.iter().product();
        let check = |m: &Vec<Vec<T>>, name: &str| -> std::result::Result<(), D::Error> {
            if m.len() != dim || m.iter().any(|r| r.len() != dim) {
                return Err(D::Error::custom(format!("{name} part is not {dim}x{dim}")));
            }
            Ok(())
        };
        check(&raw.re, "re")?;
        check(&raw.im, "im")?;
        let entries =
            DMatrix::from_fn(dim, dim, |r, c| Complex::new(raw.re[r][c], raw.im[r][c]));
        Operator::new(entries, raw.dims).map_err(D::Error::custom)
    }
}
