//! Operator frames: rank-one positive bases, IC-POVMs, Gram matrices, and
//! canonical dual frames for linear operator reconstruction.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use nalgebra::ComplexField as _;
use crate::qla::{eig_of_hermitian_part, Operator, SchattenP};
use crate::scalar::{im, re, Complex, Real, Tolerances};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameKind {
    Ic,
    Projective,
    Custom,
}

/// A family of Hermitian operators `{K_beta}` with its Gram matrix
/// `G_{ab} = Tr(K_a K_b)` and, when available, the canonical dual `{G_beta}`.
#[derive(Debug, Clone)]
pub struct OperatorFrame<T: Real> {
    elements: Vec<Operator<T>>,
    gram: DMatrix<T>,
    gram_rank: usize,
    dual: Option<Vec<Operator<T>>>,
    is_povm: bool,
    is_ic: bool,
    kind: FrameKind,
    d: usize,
}

impl<T: Real> OperatorFrame<T> {
    /// Builds a frame from Hermitian elements, computing the Gram matrix,
    /// numerical rank, POVM/IC flags, and the canonical dual when the frame
    /// admits one (full-rank Gram, or informationally complete).
    pub fn from_elements(
        elements: Vec<Operator<T>>,
        kind: FrameKind,
        tol: &Tolerances<T>,
    ) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidParam("frame needs at least one element".into()));
        }
        let d = elements[0].dim();
        for el in &elements {
            if el.dim() != d {
                return Err(Error::DimensionMismatch(format!(
                    "frame elements have mixed dimensions {} and {}",
                    d,
                    el.dim()
                )));
            }
            if !el.is_hermitian(tol.tol_recon) {
                return Err(Error::NotHermitian {
                    deviation: el.hermitian_deviation().as_f64(),
                });
            }
        }
        let m = elements.len();
        let gram = DMatrix::from_fn(m, m, |a, b| elements[a].hs_inner(&elements[b]).re);

        let eig = gram.clone().symmetric_eigen();
        let max_eig = eig.eigenvalues.iter().fold(T::zero(), |a, &x| if x > a { x } else { a });
        let cut = tol.rank_tol * max_eig;
        let gram_rank = eig.eigenvalues.iter().filter(|&&x| x > cut).count();

        let mut sum = Operator::zeros(elements[0].factor_dims().to_vec());
        for el in &elements {
            sum = &sum + el;
        }
        let sum_ok =
            sum.distance(&Operator::identity(elements[0].factor_dims().to_vec())) <= tol.tol_recon;
        let scale = elements.iter().map(|e| e.max_abs_entry()).fold(T::one(), |a, x| a + x);
        let all_psd = elements.iter().all(|e| {
            eig_of_hermitian_part(e.matrix()).values.min() >= -tol.tol_psd * scale
        });
        let is_povm = sum_ok && all_psd;
        let is_ic = m >= d * d && gram_rank == d * d;

        let dual = if gram_rank == m {
            Some(Self::dual_from_inverse(&elements, &exact_inverse(&gram)?))
        } else if is_ic {
            Some(Self::dual_from_inverse(&elements, &pseudo_inverse(&gram, tol.rank_tol)))
        } else {
            None
        };

        Ok(Self { elements, gram, gram_rank, dual, is_povm, is_ic, kind, d })
    }

    fn dual_from_inverse(elements: &[Operator<T>], inv: &DMatrix<T>) -> Vec<Operator<T>> {
        let m = elements.len();
        (0..m)
            .map(|a| {
                let mut acc = elements[0].scaled(re(inv[(a, 0)]));
                for b in 1..m {
                    acc = &acc + &elements[b].scaled(re(inv[(a, b)]));
                }
                acc
            })
            .collect()
    }

    pub fn elements(&self) -> &[Operator<T>] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn gram(&self) -> &DMatrix<T> {
        &self.gram
    }

    pub fn gram_rank(&self) -> usize {
        self.gram_rank
    }

    pub fn is_povm(&self) -> bool {
        self.is_povm
    }

    pub fn is_ic(&self) -> bool {
        self.is_ic
    }

    pub fn kind(&self) -> FrameKind {
        self.kind
    }

    /// Ratio of the largest to the smallest above-cutoff Gram eigenvalue.
    pub fn gram_condition_number(&self, tol: &Tolerances<T>) -> T {
        let eig = self.gram.clone().symmetric_eigen();
        let max = eig.eigenvalues.iter().fold(T::zero(), |a, &x| if x > a { x } else { a });
        let cut = tol.rank_tol * max;
        let min = eig
            .eigenvalues
            .iter()
            .filter(|&&x| x > cut)
            .fold(max, |a, &x| if x < a { x } else { a });
        max / min
    }

    /// Canonical dual frame `G_a = sum_b (G^-1)_{ab} K_b` (Gram pseudo-inverse
    /// when the frame is informationally complete but overcomplete).
    pub fn dual(&self) -> Result<&[Operator<T>]> {
        self.dual.as_deref().ok_or(Error::SingularGram {
            rank: self.gram_rank,
            size: self.elements.len(),
        })
    }

    /// Coefficients `c` with `sum_b c_b K_b = x`, solved through the Gram
    /// system with right-hand side `Tr(K_b x)`.
    pub fn expand(&self, x: &Operator<T>, tol: &Tolerances<T>) -> Result<DVector<Complex<T>>> {
        if x.dim() != self.d {
            return Err(Error::DimensionMismatch(format!(
                "operator dimension {} does not match frame dimension {}",
                x.dim(),
                self.d
            )));
        }
        let m = self.elements.len();
        let rhs: Vec<Complex<T>> = self.elements.iter().map(|k| k.hs_inner(x)).collect();
        let rhs_re = DVector::from_fn(m, |k, _| rhs[k].re);
        let rhs_im = DVector::from_fn(m, |k, _| rhs[k].im);

        let (sol_re, sol_im) = if self.gram_rank == m {
            let chol = Cholesky::new(self.gram.clone())
                .ok_or(Error::SingularGram { rank: self.gram_rank, size: m })?;
            (chol.solve(&rhs_re), chol.solve(&rhs_im))
        } else if self.is_ic {
            let pinv = pseudo_inverse(&self.gram, tol.rank_tol);
            (&pinv * rhs_re, &pinv * rhs_im)
        } else {
            return Err(Error::SingularGram { rank: self.gram_rank, size: m });
        };

        let coeffs = DVector::from_fn(m, |k, _| Complex::new(sol_re[k], sol_im[k]));
        let recon = self.resum(&coeffs);
        let residual = recon.distance(x);
        let scale = T::one() + x.schatten_norm(SchattenP::Two);
        if residual > tol.tol_recon * scale {
            return Err(Error::NotInSpan { residual: residual.as_f64() });
        }
        Ok(coeffs)
    }

    /// `sum_b c_b K_b`.
    pub fn resum(&self, coeffs: &DVector<Complex<T>>) -> Operator<T> {
        let mut acc = self.elements[0].scaled(coeffs[0]);
        for b in 1..self.elements.len() {
            acc = &acc + &self.elements[b].scaled(coeffs[b]);
        }
        acc
    }

    /// `sum_b G_b Tr(K_b x)`; identity on the span for frames with a dual.
    pub fn reconstruct(&self, x: &Operator<T>) -> Result<Operator<T>> {
        let dual = self.dual()?;
        let mut acc = dual[0].scaled(self.elements[0].hs_inner(x));
        for b in 1..dual.len() {
            acc = &acc + &dual[b].scaled(self.elements[b].hs_inner(x));
        }
        Ok(acc)
    }
}

fn exact_inverse<T: Real>(gram: &DMatrix<T>) -> Result<DMatrix<T>> {
    let m = gram.nrows();
    let chol = Cholesky::new(gram.clone())
        .ok_or(Error::SingularGram { rank: m, size: m })?;
    Ok(chol.solve(&DMatrix::identity(m, m)))
}

fn pseudo_inverse<T: Real>(gram: &DMatrix<T>, rank_tol: T) -> DMatrix<T> {
    let m = gram.nrows();
    let eig = gram.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(T::zero(), |a, &x| if x > a { x } else { a });
    let cut = rank_tol * max;
    let mut acc = DMatrix::zeros(m, m);
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > cut {
            let v = eig.eigenvectors.column(k);
            acc += (v * v.transpose()).map(|x| x / lambda);
        }
    }
    acc
}

/// The rank-one positive operator basis: `|k><k|` for each basis label, then
/// for every pair `j < k` the symmetric combination
/// `(|j>+|k>)(<j|+<k|)/2` followed by `(|j>+i|k>)(<j|-i<k|)/2`.
pub fn projector_basis<T: Real>(d: usize) -> Vec<Operator<T>> {
    let mut ops = Vec::with_capacity(d * d);
    for k in 0..d {
        ops.push(Operator::projector(&crate::qla::basis_ket(d, k)));
    }
    let half = re(T::lit(0.5));
    for j in 0..d {
        for k in (j + 1)..d {
            let ej = crate::qla::basis_ket::<T>(d, j);
            let ek = crate::qla::basis_ket::<T>(d, k);
            let plus = &ej + &ek;
            ops.push(Operator::projector(&plus).scaled(half));
            let curled = &ej + &ek.map(|z| z * im::<T>());
            ops.push(Operator::projector(&curled).scaled(half));
        }
    }
    ops
}

/// IC-POVM from the rank-one basis: `K_a = Pi^{-1/2} Pi_a Pi^{-1/2}` with
/// `Pi = sum_a Pi_a`. Yields `d^2` PSD elements summing to the identity.
pub fn ic_povm<T: Real>(d: usize, tol: &Tolerances<T>) -> Result<OperatorFrame<T>> {
    let basis = projector_basis::<T>(d);
    let mut total = Operator::zeros([d]);
    for p in &basis {
        total = &total + p;
    }
    let corr = total.inv_sqrt(tol)?;
    let elements: Vec<Operator<T>> =
        basis.iter().map(|p| &(&corr * p) * &corr).collect();
    let frame = OperatorFrame::from_elements(elements, FrameKind::Ic, tol)?;
    debug_assert!(frame.is_povm() && frame.is_ic());
    Ok(frame)
}

/// Rank-one projective frame from a complete orthonormal basis.
pub fn projective_frame<T: Real>(
    vectors: &[DVector<Complex<T>>],
    tol: &Tolerances<T>,
) -> Result<OperatorFrame<T>> {
    if vectors.is_empty() {
        return Err(Error::InvalidParam("projective frame needs vectors".into()));
    }
    let d = vectors[0].len();
    if vectors.len() != d || vectors.iter().any(|v| v.len() != d) {
        return Err(Error::InvalidParam(format!(
            "projective frame needs exactly {d} vectors of dimension {d}"
        )));
    }
    let mut worst = T::zero();
    for (i, u) in vectors.iter().enumerate() {
        for (j, v) in vectors.iter().enumerate() {
            let overlap = u.dotc(v);
            let target = if i == j { re(T::one()) } else { Complex::default() };
            let dev = (overlap - target).modulus();
            if dev > worst {
                worst = dev;
            }
        }
    }
    if worst > tol.tol_recon {
        return Err(Error::NotOrthonormal { deviation: worst.as_f64() });
    }
    let elements = vectors.iter().map(Operator::projector).collect();
    OperatorFrame::from_elements(elements, FrameKind::Projective, tol)
}

/// Z, X, and Y qubit bases by name; used by frame configs.
pub fn qubit_basis<T: Real>(name: &str) -> Result<Vec<DVector<Complex<T>>>> {
    let h = T::lit(std::f64::consts::FRAC_1_SQRT_2);
    let z0 = crate::qla::basis_ket::<T>(2, 0);
    let z1 = crate::qla::basis_ket::<T>(2, 1);
    let vecs = match name {
        "z" => vec![z0, z1],
        "x" => vec![
            (&z0 + &z1).map(|v| v * re(h)),
            (&z0 - &z1).map(|v| v * re(h)),
        ],
        "y" => vec![
            (&z0 + &z1.map(|v| v * im::<T>())).map(|v| v * re(h)),
            (&z0 - &z1.map(|v| v * im::<T>())).map(|v| v * re(h)),
        ],
        other => {
            return Err(Error::InvalidParam(format!("unknown qubit basis {other:?}")));
        }
    };
    Ok(vecs)
}

#[derive(Serialize, Deserialize)]
struct FrameJson<T> {
    d: usize,
    kind: FrameKind,
    elements: Vec<T>,
}

impl<T: Real> Serialize for OperatorFrame<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FrameJson { d: self.d, kind: self.kind, elements: self.elements.clone() }.serialize(s)
    }
}

impl<'de, T: Real> Deserialize<'de> for OperatorFrame<T> {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as DeError;
        let raw = FrameJson::<Operator<T>>::deserialize(de)?;
        if raw.elements.iter().any(|e| e.dim() != raw.d) {
            return Err(D::Error::custom("frame element dimension does not match d"));
        }
        OperatorFrame::from_elements(raw.elements, raw.kind, &Tolerances::default())
            .map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qla::basis_ket;
    use crate::random::random_operator;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    type Op = Operator<f64>;

    fn tol() -> Tolerances<f64> {
        Tolerances::default()
    }

    #[test]
    fn projector_basis_counts_and_rank_one() {
        for d in 1..=4usize {
            let basis = projector_basis::<f64>(d);
            assert_eq!(basis.len(), d * d);
            for p in &basis {
                assert!((p.trace().re - 1.0).abs() < 1e-12);
                assert!((&(p * p) - p).schatten_norm(SchattenP::Two) < 1e-12);
                assert!(p.min_eigenvalue(1e-10).unwrap() >= -1e-12);
            }
        }
    }

    #[test]
    fn projector_basis_d2_explicit() {
        let basis = projector_basis::<f64>(2);
        let plus = (basis_ket::<f64>(2, 0) + basis_ket::<f64>(2, 1)).map(|z| z * re(0.5f64.sqrt()));
        let right = (basis_ket::<f64>(2, 0)
            + basis_ket::<f64>(2, 1).map(|z| z * im::<f64>()))
        .map(|z| z * re(0.5f64.sqrt()));
        let expect = [
            Op::projector(&basis_ket(2, 0)),
            Op::projector(&basis_ket(2, 1)),
            Op::projector(&plus),
            Op::projector(&right),
        ];
        for (got, want) in basis.iter().zip(&expect) {
            assert!(got.distance(want) < 1e-12);
        }
    }

    #[test]
    fn projector_basis_d3_gram_rank() {
        let frame =
            OperatorFrame::from_elements(projector_basis::<f64>(3), FrameKind::Custom, &tol())
                .unwrap();
        assert_eq!(frame.gram_rank(), 9);
    }

    #[test]
    fn ic_povm_sums_to_identity() {
        for d in [1usize, 2, 3, 4] {
            let frame = ic_povm::<f64>(d, &tol()).unwrap();
            assert_eq!(frame.len(), d * d);
            assert!(frame.is_povm());
            assert!(frame.is_ic());
            let mut sum = Op::zeros([d]);
            for k in frame.elements() {
                sum = &sum + k;
            }
            assert!(sum.distance(&Op::identity([d])) < 1e-10);
            assert_eq!(frame.gram_rank(), d * d);
        }
    }

    #[test]
    fn ic_povm_d2_pi_matrix() {
        let basis = projector_basis::<f64>(2);
        let mut pi = Op::zeros([2]);
        for p in &basis {
            pi = &pi + p;
        }
        let expect = Op::from_fn([2], |r, c| match (r, c) {
            (0, 0) | (1, 1) => re(2.0),
            (0, 1) => Complex::new(0.5, -0.5),
            _ => Complex::new(0.5, 0.5),
        })
        .unwrap();
        assert!(pi.distance(&expect) < 1e-12);
    }

    #[test]
    fn ic_povm_d2_condition_number_regression() {
        let frame = ic_povm::<f64>(2, &tol()).unwrap();
        let cond = frame.gram_condition_number(&tol());
        assert!((cond - 6.4260152189392645).abs() < 1e-6, "cond = {cond}");
    }

    #[test]
    fn projective_frames() {
        let z = projective_frame::<f64>(&qubit_basis("z").unwrap(), &tol()).unwrap();
        assert_eq!(z.len(), 2);
        assert!(z.is_povm());
        assert!(!z.is_ic());
        assert!(z.gram().clone().map(|x| x) == DMatrix::identity(2, 2));

        let x = projective_frame::<f64>(&qubit_basis("x").unwrap(), &tol()).unwrap();
        let plus = (basis_ket::<f64>(2, 0) + basis_ket::<f64>(2, 1)).map(|z| z * re(0.5f64.sqrt()));
        assert!(x.elements()[0].distance(&Op::projector(&plus)) < 1e-12);

        let bad = vec![basis_ket::<f64>(2, 0), plus];
        assert!(matches!(
            projective_frame::<f64>(&bad, &tol()),
            Err(Error::NotOrthonormal { .. })
        ));
    }

    #[test]
    fn dual_of_orthonormal_projective_frame_is_itself() {
        let z = projective_frame::<f64>(&qubit_basis("z").unwrap(), &tol()).unwrap();
        let dual = z.dual().unwrap();
        for (g, k) in dual.iter().zip(z.elements()) {
            assert!(g.distance(k) < 1e-12);
        }
    }

    #[test]
    fn dual_reconstructs_random_operators() {
        let frame = ic_povm::<f64>(2, &tol()).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for _ in 0..20 {
            let x = random_operator::<f64>(&mut rng, 2);
            let recon = frame.reconstruct(&x).unwrap();
            assert!(recon.distance(&x) <= 1e-10);
        }
    }

    #[test]
    fn repeated_element_gives_singular_gram() {
        let z = qubit_basis::<f64>("z").unwrap();
        let elements = vec![
            Op::projector(&z[0]),
            Op::projector(&z[0]),
            Op::projector(&z[1]),
        ];
        let frame = OperatorFrame::from_elements(elements, FrameKind::Custom, &tol()).unwrap();
        assert!(matches!(frame.dual(), Err(Error::SingularGram { rank: 2, size: 3 })));
    }

    #[test]
    fn expand_examples() {
        let t = tol();
        let frame = ic_povm::<f64>(2, &t).unwrap();
        // frame member -> unit coefficient vector
        let c = frame.expand(&frame.elements()[2].clone(), &t).unwrap();
        for (k, ck) in c.iter().enumerate() {
            let want = if k == 2 { 1.0 } else { 0.0 };
            assert!((ck - re(want)).modulus() < 1e-9);
        }
        // identity in the Z projective frame -> (1, 1)
        let z = projective_frame::<f64>(&qubit_basis("z").unwrap(), &t).unwrap();
        let c = z.expand(&Op::identity([2]), &t).unwrap();
        assert!((c[0] - re(1.0)).modulus() < 1e-12 && (c[1] - re(1.0)).modulus() < 1e-12);
        // sigma_x expands and resums in the IC frame
        let c = frame.expand(&Op::pauli(1), &t).unwrap();
        assert!(frame.resum(&c).distance(&Op::pauli(1)) < 1e-10);
        // sigma_x is outside the Z projective span
        assert!(matches!(
            z.expand(&Op::pauli(1), &t),
            Err(Error::NotInSpan { .. })
        ));
    }

    #[test]
    fn overcomplete_pauli6_frame_is_ic_with_pinv_dual() {
        let t = tol();
        let third = re(1.0 / 3.0);
        let mut elements = Vec::new();
        for name in ["z", "x", "y"] {
            for v in qubit_basis::<f64>(name).unwrap() {
                elements.push(Op::projector(&v).scaled(third));
            }
        }
        let frame = OperatorFrame::from_elements(elements, FrameKind::Custom, &t).unwrap();
        assert!(frame.is_povm());
        assert!(frame.is_ic());
        assert_eq!(frame.gram_rank(), 4);
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        for _ in 0..10 {
            let x = random_operator::<f64>(&mut rng, 2);
            assert!(frame.reconstruct(&x).unwrap().distance(&x) < 1e-10);
            let c = frame.expand(&x, &t).unwrap();
            assert!(frame.resum(&c).distance(&x) < 1e-9);
        }
    }

    #[test]
    fn duality_identity_on_span() {
        let t = tol();
        let frame = ic_povm::<f64>(3, &t).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        for _ in 0..50 {
            let x = random_operator::<f64>(&mut rng, 3);
            assert!(frame.reconstruct(&x).unwrap().distance(&x) < 1e-9);
        }
    }

    #[test]
    fn frame_serde_roundtrip() {
        let t = tol();
        let frame = ic_povm::<f64>(2, &t).unwrap();
        let text = serde_json::to_string(&frame).unwrap();
        let back: OperatorFrame<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back.len(), frame.len());
        assert!(back.is_ic() && back.is_povm());
        assert_eq!(back.kind(), FrameKind::Ic);
        for (a, b) in back.elements().iter().zip(frame.elements()) {
            assert!(a.distance(b) < 1e-12);
        }
    }
}
