//! Choi-matrix superoperator calculus, quantum instruments built from
//! operator frames, and decomposition of arbitrary superoperators into
//! instrument elements with complex coefficients.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::OperatorFrame;
use crate::qla::{eig_of_hermitian_part, Operator};
use crate::scalar::{re, Complex, Real, Tolerances};

/// A linear map on operators, stored as its Choi matrix
/// `Phi = sum_ij |i><j| (x) F(|i><j|)` with factors ordered (input, output).
#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator<T: Real> {
    choi: Operator<T>,
    d_in: usize,
    d_out: usize,
}

/// Which side of the state a frame element multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseSide {
    Left,
    Right,
    Doubled,
}

impl<T: Real> Superoperator<T> {
    /// Wraps a Choi matrix carried on factors `[d_in, d_out]`.
    pub fn from_choi(choi: Operator<T>) -> Result<Self> {
        let dims = choi.factor_dims();
        if dims.len() != 2 {
            return Err(Error::InvalidOperator(format!(
                "a Choi matrix needs factors [d_in, d_out], got {dims:?}"
            )));
        }
        let (d_in, d_out) = (dims[0], dims[1]);
        Ok(Self { choi, d_in, d_out })
    }

    /// Choi matrix of a linear map given as a closure on operators.
    pub fn choi_of(
        map_action: impl Fn(&Operator<T>) -> Operator<T>,
        d_in: usize,
        d_out: usize,
    ) -> Result<Self> {
        let d = d_in * d_out;
        let mut m = DMatrix::zeros(d, d);
        for i in 0..d_in {
            for j in 0..d_in {
                let unit = Operator::outer(
                    &crate::qla::basis_ket::<T>(d_in, i),
                    &crate::qla::basis_ket::<T>(d_in, j),
                );
                let image = map_action(&unit);
                if image.dim() != d_out {
                    return Err(Error::DimensionMismatch(format!(
                        "map image has dimension {}, expected {}",
                        image.dim(),
                        d_out
                    )));
                }
                for o1 in 0..d_out {
                    for o2 in 0..d_out {
                        m[(i * d_out + o1, j * d_out + o2)] = image.matrix()[(o1, o2)];
                    }
                }
            }
        }
        Ok(Self { choi: Operator::new(m, vec![d_in, d_out])?, d_in, d_out })
    }

    /// The identity channel.
    pub fn identity(d: usize) -> Self {
        Self::choi_of(|x| x.clone(), d, d).expect("identity channel")
    }

    /// Channel from Kraus operators `rho -> sum_l K_l rho K_l^dag`.
    pub fn from_kraus(kraus: &[Operator<T>]) -> Result<Self> {
        if kraus.is_empty() {
            return Err(Error::InvalidParam("needs at least one Kraus operator".into()));
        }
        let d_out = kraus[0].matrix().nrows();
        let d_in = kraus[0].matrix().ncols();
        Self::choi_of(
            |x| {
                let mut acc = Operator::zeros([d_out]);
                for k in kraus {
                    let m = k.matrix() * x.matrix() * k.matrix().adjoint();
                    acc = &acc + &Operator::square(m).expect("square image");
                }
                acc
            },
            d_in,
            d_out,
        )
    }

    pub fn choi(&self) -> &Operator<T> {
        &self.choi
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    /// Applies the map: `F(rho) = Tr_in[(rho^T (x) I_out) Phi]`.
    pub fn apply(&self, rho: &Operator<T>) -> Result<Operator<T>> {
        if rho.dim() != self.d_in {
            return Err(Error::DimensionMismatch(format!(
                "state dimension {} does not match channel input {}",
                rho.dim(),
                self.d_in
            )));
        }
        let (di, dn) = (self.d_in, self.d_out);
        let mut out = DMatrix::zeros(dn, dn);
        for o1 in 0..dn {
            for o2 in 0..dn {
                let mut acc = Complex::default();
                for k in 0..di {
                    for i in 0..di {
                        acc += rho.matrix()[(k, i)]
                            * self.choi.matrix()[(k * dn + o1, i * dn + o2)];
                    }
                }
                out[(o1, o2)] = acc;
            }
        }
        Operator::square(out)
    }

    /// Applies the map to the leading tensor factor of a multi-factor
    /// operator, leaving the remaining factors untouched.
    pub fn apply_to_leading_factor(&self, x: &Operator<T>) -> Result<Operator<T>> {
        let dims = x.factor_dims();
        if dims.is_empty() || dims[0] != self.d_in {
            return Err(Error::DimensionMismatch(format!(
                "leading factor of {dims:?} does not match channel input {}",
                self.d_in
            )));
        }
        let rest: usize = dims[1..].iter().product();
        let (di, dn) = (self.d_in, self.d_out);
        let mut out = DMatrix::zeros(dn * rest, dn * rest);
        for o1 in 0..dn {
            for o2 in 0..dn {
                for r1 in 0..rest {
                    for r2 in 0..rest {
                        let mut acc = Complex::default();
                        for i in 0..di {
                            for j in 0..di {
                                acc += self.choi.matrix()[(i * dn + o1, j * dn + o2)]
                                    * x.matrix()[(i * rest + r1, j * rest + r2)];
                            }
                        }
                        out[(o1 * rest + r1, o2 * rest + r2)] = acc;
                    }
                }
            }
        }
        let mut new_dims = vec![dn];
        new_dims.extend_from_slice(&dims[1..]);
        Operator::new(out, new_dims)
    }

    /// Composition `self . earlier` (self runs second).
    pub fn compose(&self, earlier: &Self) -> Result<Self> {
        if earlier.d_out != self.d_in {
            return Err(Error::DimensionMismatch(format!(
                "cannot compose: inner dimensions {} and {}",
                earlier.d_out, self.d_in
            )));
        }
        Self::choi_of(
            |x| self.apply(&earlier.apply(x).expect("dims checked")).expect("dims checked"),
            earlier.d_in,
            self.d_out,
        )
    }

    pub fn scaled(&self, c: Complex<T>) -> Self {
        Self { choi: self.choi.scaled(c), d_in: self.d_in, d_out: self.d_out }
    }

    /// Complete positivity: Choi PSD within `tol_psd`.
    pub fn is_cp(&self, tol: &Tolerances<T>) -> bool {
        self.choi.is_psd(tol)
    }

    /// Trace preservation: `Tr_out(Choi) = I_in` within `tol_recon`.
    pub fn is_tp(&self, tol: &Tolerances<T>) -> bool {
        match self.choi.partial_trace(&[0]) {
            Ok(marginal) => {
                marginal.distance(&Operator::identity([self.d_in])) <= tol.tol_recon
            }
            Err(_) => false,
        }
    }

    pub fn is_cptp(&self, tol: &Tolerances<T>) -> bool {
        self.is_cp(tol) && self.is_tp(tol)
    }

    /// Trace non-increasing: `Tr_out(Choi) <= I_in` within `tol_psd`.
    pub fn is_tni(&self, tol: &Tolerances<T>) -> bool {
        let marginal = match self.choi.partial_trace(&[0]) {
            Ok(m) => m,
            Err(_) => return false,
        };
        let gap = &Operator::identity([self.d_in]) - &marginal;
        let scale = T::one() + gap.max_abs_entry();
        eig_of_hermitian_part(gap.matrix()).values.min() >= -tol.tol_psd * scale
    }
}

/// Depolarizing channel `rho -> (1-p) rho + p Tr(rho) I/d`.
pub fn depolarizing<T: Real>(d: usize, p: T) -> Superoperator<T> {
    let inv_d = T::one() / T::from_usize(d).unwrap();
    Superoperator::choi_of(
        |x| {
            let keep = x.scaled(re(T::one() - p));
            let mix = Operator::identity([d]).scaled(x.trace() * re(p * inv_d));
            &keep + &mix
        },
        d,
        d,
    )
    .expect("depolarizing channel")
}

/// Qubit amplitude damping with decay probability `gamma`.
pub fn amplitude_damping<T: Real>(gamma: T) -> Superoperator<T> {
    let k0 = Operator::from_fn([2], |r, c| match (r, c) {
        (0, 0) => re(T::one()),
        (1, 1) => re((T::one() - gamma).sqrt()),
        _ => Complex::default(),
    })
    .unwrap();
    let k1 = Operator::from_fn([2], |r, c| match (r, c) {
        (0, 1) => re(gamma.sqrt()),
        _ => Complex::default(),
    })
    .unwrap();
    Superoperator::from_kraus(&[k0, k1]).expect("amplitude damping channel")
}

/// Qubit bit flip `rho -> (1-p) rho + p X rho X`.
pub fn bit_flip<T: Real>(p: T) -> Superoperator<T> {
    let x = Operator::pauli(1);
    Superoperator::choi_of(
        |rho| {
            let keep = rho.scaled(re(T::one() - p));
            let flip = (&(&x * rho) * &x).scaled(re(p));
            &keep + &flip
        },
        2,
        2,
    )
    .expect("bit flip channel")
}

/// A finite family of CP trace-nonincreasing maps summing to a CPTP map.
#[derive(Debug, Clone)]
pub struct Instrument<T: Real> {
    maps: Vec<Superoperator<T>>,
}

impl<T: Real> Instrument<T> {
    pub fn new(maps: Vec<Superoperator<T>>, tol: &Tolerances<T>) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::NotAnInstrument("no outcome maps".into()));
        }
        let (d_in, d_out) = (maps[0].d_in, maps[0].d_out);
        let mut total_marginal = Operator::zeros([d_in]);
        for (k, map) in maps.iter().enumerate() {
            if map.d_in != d_in || map.d_out != d_out {
                return Err(Error::NotAnInstrument(format!("outcome {k} has mixed dimensions")));
            }
            if !map.is_cp(tol) {
                return Err(Error::NotAnInstrument(format!("outcome {k} is not CP")));
            }
            if !map.is_tni(tol) {
                return Err(Error::NotAnInstrument(format!(
                    "outcome {k} is not trace-nonincreasing"
                )));
            }
            total_marginal = &total_marginal + &map.choi.partial_trace(&[0])?;
        }
        let gap = total_marginal.distance(&Operator::identity([d_in]));
        if gap > tol.tol_recon {
            return Err(Error::NotAnInstrument(format!(
                "outcome maps do not sum to a trace-preserving map (deviation {:.3e})",
                gap.as_f64()
            )));
        }
        Ok(Self { maps })
    }

    pub fn maps(&self) -> &[Superoperator<T>] {
        &self.maps
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn d_in(&self) -> usize {
        self.maps[0].d_in
    }

    pub fn d_out(&self) -> usize {
        self.maps[0].d_out
    }

    /// Outcome probabilities `p(a) = Tr(I_a(rho))`.
    pub fn probabilities(&self, rho: &Operator<T>) -> Result<Vec<T>> {
        self.maps
            .iter()
            .map(|m| Ok(m.apply(rho)?.trace().re))
            .collect()
    }
}

/// The instrument induced by a POVM on the input (x) output space:
/// outcome `a` acts as `rho -> Tr_in[(rho^T (x) I_out) K_a] / d_out`.
///
/// The `1/d_out` rescaling makes the summed map exactly trace preserving
/// (the constant channel onto `I_out/d_out`); the decomposition coefficients
/// absorb the factor automatically.
pub fn instrument_from_frame<T: Real>(
    frame: &OperatorFrame<T>,
    d_in: usize,
    d_out: usize,
    tol: &Tolerances<T>,
) -> Result<Instrument<T>> {
    if !frame.is_povm() {
        return Err(Error::NotAPovm(
            "instrument construction needs PSD elements summing to the identity".into(),
        ));
    }
    if frame.dim() != d_in * d_out {
        return Err(Error::DimensionMismatch(format!(
            "frame dimension {} is not d_in*d_out = {}",
            frame.dim(),
            d_in * d_out
        )));
    }
    let scale = re(T::one() / T::from_usize(d_out).unwrap());
    let maps = frame
        .elements()
        .iter()
        .map(|k| {
            let choi = k.scaled(scale).with_factor_dims([d_in, d_out])?;
            Superoperator::from_choi(choi)
        })
        .collect::<Result<Vec<_>>>()?;
    Instrument::new(maps, tol)
}

/// Phase-space superoperators of a frame: right multiplication `rho K_b`,
/// left multiplication `K_a rho`, or the doubled sandwich `K_a rho K_b`
/// over ordered pairs `(a, b)` in lexicographic order. None of these is
/// required to be CP.
pub fn phase_space_superops<T: Real>(
    frame: &OperatorFrame<T>,
    side: PhaseSide,
) -> Vec<Superoperator<T>> {
    let d = frame.dim();
    let build = |f: &dyn Fn(&Operator<T>) -> Operator<T>| {
        Superoperator::choi_of(|x| f(x), d, d).expect("phase-space superoperator")
    };
    match side {
        PhaseSide::Right => frame
            .elements()
            .iter()
            .map(|k| {
                let k = k.clone();
                build(&move |x: &Operator<T>| {
                    Operator::square(x.matrix() * k.matrix()).expect("square")
                })
            })
            .collect(),
        PhaseSide::Left => frame
            .elements()
            .iter()
            .map(|k| {
                let k = k.clone();
                build(&move |x: &Operator<T>| {
                    Operator::square(k.matrix() * x.matrix()).expect("square")
                })
            })
            .collect(),
        PhaseSide::Doubled => {
            let mut out = Vec::with_capacity(frame.len() * frame.len());
            for ka in frame.elements() {
                for kb in frame.elements() {
                    let (ka, kb) = (ka.clone(), kb.clone());
                    out.push(build(&move |x: &Operator<T>| {
                        Operator::square(ka.matrix() * x.matrix() * kb.matrix())
                            .expect("square")
                    }));
                }
            }
            out
        }
    }
}

/// Expansion of a target superoperator over an instrument's maps.
#[derive(Debug, Clone)]
pub struct SnapshotDecomposition<T: Real> {
    /// One complex coefficient per instrument outcome.
    pub chi: DVector<Complex<T>>,
    /// 2-norm of `sum_a chi_a Choi(I_a) - Choi(target)`.
    pub residual: T,
}

/// Solves `target = sum_a chi_a I_a` through the Gram system of the
/// instrument's Choi matrices (least squares via the Gram pseudo-inverse).
pub fn decompose<T: Real>(
    target: &Superoperator<T>,
    inst: &Instrument<T>,
    tol: &Tolerances<T>,
) -> Result<SnapshotDecomposition<T>> {
    if target.d_in() != inst.d_in() || target.d_out() != inst.d_out() {
        return Err(Error::DimensionMismatch(format!(
            "target is {}->{} but instrument is {}->{}",
            target.d_in(),
            target.d_out(),
            inst.d_in(),
            inst.d_out()
        )));
    }
    let m = inst.len();
    let full = inst.d_in() * inst.d_out();
    let span_needed = full * full;

    let gram = DMatrix::from_fn(m, m, |a, b| {
        inst.maps()[a].choi().hs_inner(inst.maps()[b].choi())
    });
    let eig = eig_of_hermitian_part(&gram);
    let max_eig = eig.values.iter().fold(T::zero(), |a, &x| if x > a { x } else { a });
    let cut = tol.rank_tol * max_eig;
    let rank = eig.values.iter().filter(|&&x| x > cut).count();
    if rank < span_needed.min(m) || rank < span_needed {
        return Err(Error::SingularGram { rank, size: m });
    }

    let rhs = DVector::from_fn(m, |a, _| inst.maps()[a].choi().hs_inner(target.choi()));
    // chi = V f(Lambda) V^dag rhs with f = 1/lambda on the support
    let vt_rhs = eig.vectors.adjoint() * &rhs;
    let mut scaled = vt_rhs;
    for (k, lambda) in eig.values.iter().enumerate() {
        scaled[k] = if *lambda > cut { scaled[k] / re(*lambda) } else { Complex::default() };
    }
    let chi = &eig.vectors * scaled;

    let mut recon = Operator::zeros(vec![inst.d_in(), inst.d_out()]);
    for (a, map) in inst.maps().iter().enumerate() {
        recon = &recon + &map.choi().scaled(chi[a]);
    }
    let residual = recon.distance(target.choi());
    Ok(SnapshotDecomposition { chi, residual })
}

#[derive(Serialize, Deserialize)]
struct SuperoperatorJson<T> {
    d_in: usize,
    d_out: usize,
    choi: T,
}

impl<T: Real> Serialize for Superoperator<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SuperoperatorJson { d_in: self.d_in, d_out: self.d_out, choi: self.choi.clone() }
            .serialize(s)
    }
}

impl<'de, T: Real> Deserialize<'de> for Superoperator<T> {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as DeError;
        let raw = SuperoperatorJson::<Operator<T>>::deserialize(de)?;
        let choi = raw
            .choi
            .with_factor_dims([raw.d_in, raw.d_out])
            .map_err(D::Error::custom)?;
        Superoperator::from_choi(choi).map_err(D::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct InstrumentJson<T> {
    maps: Vec<T>,
}

impl<T: Real> Serialize for Instrument<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        InstrumentJson { maps: self.maps.clone() }.serialize(s)
    }
}

impl<'de, T: Real> Deserialize<'de> for Instrument<T> {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as DeError;
        let raw = InstrumentJson::<Superoperator<T>>::deserialize(de)?;
        Instrument::new(raw.maps, &Tolerances::default()).map_err(D::Error::custom)
    }
}
