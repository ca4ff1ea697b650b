//! Random operators, states, and channels for tests and pilot calibration.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::qla::Operator;
use crate::scalar::{re, Complex, Real, Tolerances};
use crate::snapshot::Superoperator;

fn gaussian<T: Real>(rng: &mut impl Rng) -> Complex<T> {
    let x: f64 = rng.sample(StandardNormal);
    let y: f64 = rng.sample(StandardNormal);
    Complex::new(T::lit(x), T::lit(y))
}

/// Square matrix with i.i.d. complex Gaussian entries.
pub fn random_operator<T: Real>(rng: &mut impl Rng, d: usize) -> Operator<T> {
    let m = DMatrix::from_fn(d, d, |_, _| gaussian::<T>(rng));
    Operator::square(m).expect("finite Gaussian matrix")
}

/// Haar-ish random pure state.
pub fn random_state_vector<T: Real>(rng: &mut impl Rng, d: usize) -> DVector<Complex<T>> {
    let v = DVector::from_fn(d, |_, _| gaussian::<T>(rng));
    let norm = v.iter().fold(T::zero(), |a, z| a + z.norm_sqr()).sqrt();
    v.map(|z| z / re(norm))
}

/// Full-rank random density operator (Ginibre construction).
pub fn random_density<T: Real>(rng: &mut impl Rng, d: usize) -> Operator<T> {
    let g = random_operator::<T>(rng, d);
    let p = &g * &g.adjoint();
    let tr = p.trace().re;
    p.scaled(re(T::one() / tr))
}

/// Random unitary as `exp(iH)` for a Gaussian Hermitian `H`.
pub fn random_unitary<T: Real>(rng: &mut impl Rng, d: usize) -> Operator<T> {
    let h = random_operator::<T>(rng, d).hermitian_part();
    let eig = h.hermitian_eig(T::lit(1e-8)).expect("hermitian by construction");
    let mut m = DMatrix::zeros(d, d);
    for (k, lambda) in eig.values.iter().enumerate() {
        let phase = Complex::new(lambda.cos(), lambda.sin());
        let v = eig.vectors.column(k);
        m += (v * v.adjoint()).map(|z| z * phase);
    }
    Operator::square(m).expect("finite unitary")
}

/// Random CPTP map on `d_in -> d_out` via a normalized Ginibre Choi matrix.
pub fn random_cptp<T: Real>(rng: &mut impl Rng, d_in: usize, d_out: usize) -> Superoperator<T> {
    let d = d_in * d_out;
    let g = random_operator::<T>(rng, d);
    let raw = (&g * &g.adjoint()).with_factor_dims([d_in, d_out]).expect("square");
    let marginal = raw.partial_trace(&[0]).expect("valid factor");
    let tol = Tolerances::<T>::default();
    let corr = marginal.inv_sqrt(&tol).expect("Ginibre marginal is full rank");
    let corr_full = corr.tensor(&Operator::identity([d_out]));
    let choi = &(&corr_full * &raw) * &corr_full;
    Superoperator::from_choi(choi).expect("valid Choi")
}
