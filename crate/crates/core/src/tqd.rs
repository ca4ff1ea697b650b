//! Temporal quasiprobability distributions (TQDs) for multi-time processes
//! and the reconstruction routes from them to temporal states.
//!
//! A process is given time-ascending, `(rho_{t0}, E_{t1<-t0}, ...)`. TQD
//! value arrays, temporal-state tensor factors, and every per-time list
//! stored inside [`Tqd`] are time-descending, `(t_n, ..., t_0)`, matching
//! the row-major serialization with `beta_n` slowest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flat::{digits, strides, sum_axis};
use crate::frames::OperatorFrame;
use crate::qla::Operator;
use crate::scalar::{re, Complex, Real, Tolerances};
use crate::snapshot::{PhaseSide, Superoperator};

/// TQD flavor: which side frame elements multiply, and whether the real part
/// has been taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "left-kd")]
    LeftKd,
    #[serde(rename = "right-kd")]
    RightKd,
    #[serde(rename = "doubled-kd")]
    DoubledKd,
    #[serde(rename = "left-mh")]
    LeftMh,
    #[serde(rename = "right-mh")]
    RightMh,
    #[serde(rename = "doubled-mh")]
    DoubledMh,
}

impl Variant {
    pub fn side(self) -> PhaseSide {
        match self {
            Variant::LeftKd | Variant::LeftMh => PhaseSide::Left,
            Variant::RightKd | Variant::RightMh => PhaseSide::Right,
            Variant::DoubledKd | Variant::DoubledMh => PhaseSide::Doubled,
        }
    }

    pub fn is_mh(self) -> bool {
        matches!(self, Variant::LeftMh | Variant::RightMh | Variant::DoubledMh)
    }

    pub fn mh(self) -> Variant {
        match self {
            Variant::LeftKd | Variant::LeftMh => Variant::LeftMh,
            Variant::RightKd | Variant::RightMh => Variant::RightMh,
            Variant::DoubledKd | Variant::DoubledMh => Variant::DoubledMh,
        }
    }

    pub fn kd(self) -> Variant {
        match self {
            Variant::LeftKd | Variant::LeftMh => Variant::LeftKd,
            Variant::RightKd | Variant::RightMh => Variant::RightKd,
            Variant::DoubledKd | Variant::DoubledMh => Variant::DoubledKd,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::LeftKd => "left-kd",
            Variant::RightKd => "right-kd",
            Variant::DoubledKd => "doubled-kd",
            Variant::LeftMh => "left-mh",
            Variant::RightMh => "right-mh",
            Variant::DoubledMh => "doubled-mh",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "left-kd" => Variant::LeftKd,
            "right-kd" => Variant::RightKd,
            "doubled-kd" => Variant::DoubledKd,
            "left-mh" => Variant::LeftMh,
            "right-mh" => Variant::RightMh,
            "doubled-mh" => Variant::DoubledMh,
            other => return Err(Error::InvalidParam(format!("unknown variant {other:?}"))),
        })
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Initial state plus time-ordered CPTP maps.
#[derive(Debug, Clone)]
pub struct TemporalProcess<T: Real> {
    rho0: Operator<T>,
    channels: Vec<Superoperator<T>>,
}

impl<T: Real> TemporalProcess<T> {
    pub fn new(
        rho0: Operator<T>,
        channels: Vec<Superoperator<T>>,
        tol: &Tolerances<T>,
    ) -> Result<Self> {
        if (rho0.trace().re - T::one()).abs() > tol.tol_recon
            || rho0.trace().im.abs() > tol.tol_recon
        {
            return Err(Error::InvalidParam(format!(
                "initial state trace {} is not 1",
                rho0.trace().re.as_f64()
            )));
        }
        if !rho0.is_psd(tol) {
            return Err(Error::InvalidParam("initial state is not PSD".into()));
        }
        let mut d = rho0.dim();
        for (k, ch) in channels.iter().enumerate() {
            if ch.d_in() != d {
                return Err(Error::DimensionMismatch(format!(
                    "channel {} expects input dimension {}, previous time has {}",
                    k,
                    ch.d_in(),
                    d
                )));
            }
            if !ch.is_cptp(tol) {
                return Err(Error::InvalidParam(format!("channel {k} is not CPTP")));
            }
            d = ch.d_out();
        }
        Ok(Self { rho0, channels })
    }

    pub fn rho0(&self) -> &Operator<T> {
        &self.rho0
    }

    pub fn channels(&self) -> &[Superoperator<T>] {
        &self.channels
    }

    pub fn n_times(&self) -> usize {
        self.channels.len() + 1
    }

    /// Hilbert-space dimensions, time-ascending `[d_{t0}, ..., d_{tn}]`.
    pub fn dims(&self) -> Vec<usize> {
        let mut out = vec![self.rho0.dim()];
        out.extend(self.channels.iter().map(|c| c.d_out()));
        out
    }

    pub fn total_dim(&self) -> usize {
        self.dims().iter().product()
    }

    /// State at time `t_k`: the initial state pushed through `k` channels.
    pub fn state_at(&self, k: usize) -> Result<Operator<T>> {
        if k >= self.n_times() {
            return Err(Error::IndexOutOfRange { index: k, count: self.n_times() });
        }
        let mut rho = self.rho0.clone();
        for ch in &self.channels[..k] {
            rho = ch.apply(&rho)?;
        }
        Ok(rho)
    }

    /// Process restricted to a subset of times: the initial state is pushed
    /// to the first kept time and the channels between kept times composed.
    pub fn reduced(&self, keep_times: &[usize]) -> Result<Self> {
        let mut keep = keep_times.to_vec();
        keep.sort_unstable();
        keep.dedup();
        if keep.is_empty() {
            return Err(Error::InvalidParam("reduced process needs at least one time".into()));
        }
        if *keep.last().unwrap() >= self.n_times() {
            return Err(Error::IndexOutOfRange {
                index: *keep.last().unwrap(),
                count: self.n_times(),
            });
        }
        let rho = self.state_at(keep[0])?;
        let mut channels = Vec::with_capacity(keep.len() - 1);
        for win in keep.windows(2) {
            let (from, to) = (win[0], win[1]);
            let mut composed = self.channels[from].clone();
            for k in (from + 1)..to {
                composed = self.channels[k].compose(&composed)?;
            }
            channels.push(composed);
        }
        Ok(Self { rho0: rho, channels })
    }
}

/// Complex-valued distribution over trajectories of the temporal phase
/// space. All per-time arrays are stored time-descending.
#[derive(Debug, Clone)]
pub struct Tqd<T: Real> {
    variant: Variant,
    /// Flat row-major over `(beta_n, ..., beta_0)`, `beta_n` slowest.
    values: Vec<Complex<T>>,
    /// Phase-space points per time, `[m_n, ..., m_0]` (`m^2` for doubled).
    outcome_counts: Vec<usize>,
    /// Hilbert dimensions per time, `[d_n, ..., d_0]`.
    dims: Vec<usize>,
    /// Frames per time, `[frame_n, ..., frame_0]`.
    frames: Vec<OperatorFrame<T>>,
}

impl<T: Real> Tqd<T> {
    fn points_per_time(frame: &OperatorFrame<T>, side: PhaseSide) -> usize {
        match side {
            PhaseSide::Doubled => frame.len() * frame.len(),
            _ => frame.len(),
        }
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn values(&self) -> &[Complex<T>] {
        &self.values
    }

    /// Outcome counts, time-descending.
    pub fn outcome_counts(&self) -> &[usize] {
        &self.outcome_counts
    }

    /// Hilbert dimensions, time-descending.
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Frames, time-descending.
    pub fn frames(&self) -> &[OperatorFrame<T>] {
        &self.frames
    }

    pub fn n_times(&self) -> usize {
        self.outcome_counts.len()
    }

    /// Value at a trajectory given time-descending `(beta_n, ..., beta_0)`.
    pub fn value(&self, beta: &[usize]) -> Complex<T> {
        let st = strides(&self.outcome_counts);
        let flat: usize = beta.iter().zip(&st).map(|(&b, &s)| b * s).sum();
        self.values[flat]
    }

    pub fn sum(&self) -> Complex<T> {
        self.values.iter().fold(Complex::default(), |a, &v| a + v)
    }

    /// Real part, tagged as the matching MH variant. MH input is returned
    /// unchanged (values are already real).
    pub fn mh_part(&self) -> Tqd<T> {
        Tqd {
            variant: self.variant.mh(),
            values: self.values.iter().map(|v| re(v.re)).collect(),
            outcome_counts: self.outcome_counts.clone(),
            dims: self.dims.clone(),
            frames: self.frames.clone(),
        }
    }

    /// Sums out every time not listed; `keep_times` uses ascending time
    /// labels `0..=n`. The result is the TQD of the reduced process.
    pub fn marginal(&self, keep_times: &[usize]) -> Result<Tqd<T>> {
        let n_times = self.n_times();
        let mut keep = keep_times.to_vec();
        keep.sort_unstable();
        keep.dedup();
        if keep.is_empty() {
            return Err(Error::InvalidParam("marginal needs at least one time".into()));
        }
        if *keep.last().unwrap() >= n_times {
            return Err(Error::IndexOutOfRange {
                index: *keep.last().unwrap(),
                count: n_times,
            });
        }
        // axis for time k in the descending layout
        let keep_axes: Vec<usize> = keep.iter().map(|&k| n_times - 1 - k).collect();
        let mut data = self.values.clone();
        let mut shape = self.outcome_counts.clone();
        let mut kept_axis_flags: Vec<bool> = (0..n_times).map(|a| keep_axes.contains(&a)).collect();
        let mut axis = 0;
        while axis < shape.len() {
            if kept_axis_flags[axis] {
                axis += 1;
            } else {
                let (d, s) = sum_axis(&data, &shape, axis);
                data = d;
                shape = s;
                kept_axis_flags.remove(axis);
            }
        }
        let kept_desc: Vec<usize> = (0..n_times).filter(|a| keep_axes.contains(a)).collect();
        Ok(Tqd {
            variant: self.variant,
            values: data,
            outcome_counts: shape,
            dims: kept_desc.iter().map(|&a| self.dims[a]).collect(),
            frames: kept_desc.iter().map(|&a| self.frames[a].clone()).collect(),
        })
    }

    /// Negativity `sum max(-Re Q, 0)` and imaginarity `sum |Im Q|`; both
    /// vanish exactly when the TQD is a genuine probability distribution.
    pub fn nonclassicality(&self) -> Nonclassicality<T> {
        let mut negativity = T::zero();
        let mut imaginarity = T::zero();
        for v in &self.values {
            if v.re < T::zero() {
                negativity += -v.re;
            }
            imaginarity += v.im.abs();
        }
        Nonclassicality { negativity, imaginarity }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nonclassicality<T> {
    pub negativity: T,
    pub imaginarity: T,
}

#[derive(Serialize)]
struct TqdJson<'a, T> {
    variant: &'a str,
    outcome_counts: &'a [usize],
    re: Vec<T>,
    im: Vec<T>,
}

impl<T: Real> Serialize for Tqd<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TqdJson {
            variant: self.variant.as_str(),
            outcome_counts: &self.outcome_counts,
            re: self.values.iter().map(|v| v.re).collect(),
            im: self.values.iter().map(|v| v.im).collect(),
        }
        .serialize(s)
    }
}

/// Operator on the tensor product of the per-time Hilbert spaces, factors
/// time-descending `(t_n, ..., t_0)`.
#[derive(Debug, Clone)]
pub struct TemporalState<T: Real> {
    op: Operator<T>,
    variant: Variant,
}

impl<T: Real> TemporalState<T> {
    pub fn new(op: Operator<T>, variant: Variant) -> Self {
        Self { op, variant }
    }

    /// A single-time temporal state is the density operator itself.
    pub fn from_density(rho: Operator<T>, variant: Variant) -> Self {
        Self { op: rho, variant }
    }

    pub fn op(&self) -> &Operator<T> {
        &self.op
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    /// Hilbert dimensions per time, descending.
    pub fn dims(&self) -> &[usize] {
        self.op.factor_dims()
    }

    pub fn n_times(&self) -> usize {
        self.op.factor_dims().len()
    }

    pub fn trace(&self) -> Complex<T> {
        self.op.trace()
    }

    /// Hermitian part, tagged as the matching MH variant.
    pub fn mh_part(&self) -> TemporalState<T> {
        TemporalState { op: self.op.hermitian_part(), variant: self.variant.mh() }
    }

    /// Reduced temporal state (ascending time labels), by partial trace.
    pub fn reduced(&self, keep_times: &[usize]) -> Result<TemporalState<T>> {
        let n = self.n_times();
        let mut axes: Vec<usize> = keep_times
            .iter()
            .map(|&k| {
                if k < n {
                    Ok(n - 1 - k)
                } else {
                    Err(Error::IndexOutOfRange { index: k, count: n })
                }
            })
            .collect::<Result<_>>()?;
        axes.sort_unstable();
        Ok(TemporalState { op: self.op.partial_trace(&axes)?, variant: self.variant })
    }

    pub fn distance(&self, other: &TemporalState<T>) -> T {
        self.op.distance(&other.op)
    }
}

fn check_frames<T: Real>(
    dims_ascending: &[usize],
    frames_ascending: &[&OperatorFrame<T>],
) -> Result<()> {
    if dims_ascending.len() != frames_ascending.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} frames supplied for {} times",
            frames_ascending.len(),
            dims_ascending.len()
        )));
    }
    for (k, (d, f)) in dims_ascending.iter().zip(frames_ascending).enumerate() {
        if f.dim() != *d {
            return Err(Error::DimensionMismatch(format!(
                "frame at time {k} has dimension {}, process has {d}",
                f.dim()
            )));
        }
    }
    Ok(())
}

fn apply_phase_point<T: Real>(
    frame: &OperatorFrame<T>,
    side: PhaseSide,
    point: usize,
    sigma: &Operator<T>,
) -> Operator<T> {
    match side {
        PhaseSide::Right => {
            Operator::square(sigma.matrix() * frame.elements()[point].matrix()).expect("square")
        }
        PhaseSide::Left => {
            Operator::square(frame.elements()[point].matrix() * sigma.matrix()).expect("square")
        }
        PhaseSide::Doubled => {
            let m = frame.len();
            let (a, b) = (point / m, point % m);
            Operator::square(
                frame.elements()[a].matrix() * sigma.matrix() * frame.elements()[b].matrix(),
            )
            .expect("square")
        }
    }
}

/// Exact TQD of a process: every trajectory of the temporal phase space is
/// evaluated by depth-first recursion over time steps, sharing the partial
/// composition of common prefixes. MH variants are the real part of the
/// matching KD computation.
pub fn exact_tqd<T: Real>(
    process: &TemporalProcess<T>,
    frames_ascending: &[&OperatorFrame<T>],
    variant: Variant,
) -> Result<Tqd<T>> {
    let dims = process.dims();
    check_frames(&dims, frames_ascending)?;
    let n_times = process.n_times();
    let side = variant.side();
    let counts_asc: Vec<usize> = frames_ascending
        .iter()
        .map(|f| Tqd::points_per_time(f, side))
        .collect();
    // flat layout is beta_n slowest: time k has stride prod_{j<k} m_j
    let mut stride_asc = vec![1usize; n_times];
    for k in 1..n_times {
        stride_asc[k] = stride_asc[k - 1] * counts_asc[k - 1];
    }
    let total: usize = counts_asc.iter().product();
    let mut values = vec![Complex::<T>::default(); total];

    struct Ctx<'a, T: Real> {
        frames: &'a [&'a OperatorFrame<T>],
        counts: &'a [usize],
        strides: &'a [usize],
        side: PhaseSide,
        channels: &'a [Superoperator<T>],
        values: &'a mut [Complex<T>],
    }
    fn recurse<T: Real>(ctx: &mut Ctx<'_, T>, k: usize, sigma: &Operator<T>, base: usize) -> Result<()> {
        let last = k + 1 == ctx.counts.len();
        for point in 0..ctx.counts[k] {
            let tau = apply_phase_point(ctx.frames[k], ctx.side, point, sigma);
            let idx = base + point * ctx.strides[k];
            if last {
                ctx.values[idx] = tau.trace();
            } else {
                let next = ctx.channels[k].apply(&tau)?;
                recurse(ctx, k + 1, &next, idx)?;
            }
        }
        Ok(())
    }
    let mut ctx = Ctx {
        frames: frames_ascending,
        counts: &counts_asc,
        strides: &stride_asc,
        side,
        channels: process.channels(),
        values: &mut values,
    };
    recurse(&mut ctx, 0, process.rho0(), 0)?;

    if variant.is_mh() {
        for v in &mut values {
            *v = re(v.re);
        }
    }
    let mut frames_desc: Vec<OperatorFrame<T>> =
        frames_ascending.iter().map(|&f| f.clone()).collect();
    frames_desc.reverse();
    let mut dims_desc = dims;
    dims_desc.reverse();
    let mut counts_desc = counts_asc;
    counts_desc.reverse();
    Ok(Tqd { variant, values, outcome_counts: counts_desc, dims: dims_desc, frames: frames_desc })
}

/// Generalized Born rule: `Q(beta) = Tr(Upsilon K_{beta_n} (x) ... (x) K_{beta_0})`.
/// Defined for left/right variants; the doubled temporal state is out of scope.
pub fn born_rule<T: Real>(
    state: &TemporalState<T>,
    frames_ascending: &[&OperatorFrame<T>],
) -> Result<Tqd<T>> {
    let variant = state.variant();
    if matches!(variant.side(), PhaseSide::Doubled) {
        return Err(Error::UnsupportedVariant("doubled"));
    }
    let mut dims_asc = state.dims().to_vec();
    dims_asc.reverse();
    check_frames(&dims_asc, frames_ascending)?;
    let n_times = frames_ascending.len();
    let counts_desc: Vec<usize> = (0..n_times)
        .map(|axis| frames_ascending[n_times - 1 - axis].len())
        .collect();
    let total: usize = counts_desc.iter().product();
    let mut values = vec![Complex::<T>::default(); total];

    // depth-first over descending times, sharing Kronecker prefixes
    fn recurse<T: Real>(
        frames_desc: &[&OperatorFrame<T>],
        state: &Operator<T>,
        axis: usize,
        base: usize,
        stride_rest: usize,
        prefix: Option<&Operator<T>>,
        values: &mut [Complex<T>],
        mh: bool,
    ) {
        let m = frames_desc[axis].len();
        let inner_stride = stride_rest / m;
        for b in 0..m {
            let k = &frames_desc[axis].elements()[b];
            let joined = match prefix {
                Some(p) => p.tensor(k),
                None => k.clone(),
            };
            let idx = base + b * inner_stride;
            if axis + 1 == frames_desc.len() {
                let q = state.trace_product(&joined);
                values[idx] = if mh { re(q.re) } else { q };
            } else {
                recurse(
                    frames_desc,
                    state,
                    axis + 1,
                    idx,
                    inner_stride,
                    Some(&joined),
                    values,
                    mh,
                );
            }
        }
    }
    let frames_desc: Vec<&OperatorFrame<T>> =
        frames_ascending.iter().rev().copied().collect();
    recurse(
        &frames_desc,
        state.op(),
        0,
        0,
        total,
        None,
        &mut values,
        variant.is_mh(),
    );

    let dims_desc = state.dims().to_vec();
    Ok(Tqd {
        variant,
        values,
        outcome_counts: counts_desc,
        dims: dims_desc,
        frames: frames_desc.into_iter().cloned().collect(),
    })
}

/// Dual-frame reconstruction `Upsilon = sum_beta G_{beta_n} (x) ... (x) G_{beta_0} Q(beta)`.
/// Requires every per-time frame to be informationally complete.
pub fn state_from_tqd<T: Real>(q: &Tqd<T>) -> Result<TemporalState<T>> {
    if matches!(q.variant.side(), PhaseSide::Doubled) {
        return Err(Error::UnsupportedVariant("doubled"));
    }
    for f in &q.frames {
        if !f.is_ic() {
            return Err(Error::NotInformationallyComplete);
        }
    }
    let duals: Vec<&[Operator<T>]> =
        q.frames.iter().map(|f| f.dual()).collect::<Result<_>>()?;
    let total_dim: usize = q.dims.iter().product();
    let mut acc = Operator::zeros(q.dims.clone());

    fn recurse<T: Real>(
        duals: &[&[Operator<T>]],
        values: &[Complex<T>],
        strides: &[usize],
        axis: usize,
        base: usize,
        prefix: Option<&Operator<T>>,
        acc: &mut Operator<T>,
    ) {
        for (b, dual) in duals[axis].iter().enumerate() {
            let joined = match prefix {
                Some(p) => p.tensor(dual),
                None => dual.clone(),
            };
            let idx = base + b * strides[axis];
            if axis + 1 == duals.len() {
                let contribution = joined.scaled(values[idx]);
                *acc = &*acc + &contribution.with_factor_dims(acc.factor_dims().to_vec()).expect("dims match");
            } else {
                recurse(duals, values, strides, axis + 1, idx, Some(&joined), acc);
            }
        }
    }
    let st = strides(&q.outcome_counts);
    recurse(&duals, &q.values, &st, 0, 0, None, &mut acc);
    debug_assert_eq!(acc.dim(), total_dim);

    let op = if q.variant.is_mh() { acc.hermitian_part() } else { acc };
    Ok(TemporalState::new(op, q.variant))
}

/// Temporal Bloch route for qubit times: per-time Pauli expansions in the
/// frame turn the TQD into temporal Pauli correlators `T^{mu_n ... mu_0}`,
/// and `Upsilon = 2^{-(n+1)} sum T^{mu} sigma_{mu_n} (x) ... (x) sigma_{mu_0}`.
pub fn temporal_bloch<T: Real>(q: &Tqd<T>, tol: &Tolerances<T>) -> Result<TemporalState<T>> {
    if matches!(q.variant.side(), PhaseSide::Doubled) {
        return Err(Error::UnsupportedVariant("doubled"));
    }
    if let Some(&d) = q.dims.iter().find(|&&d| d != 2) {
        return Err(Error::NotQubit(d));
    }
    for f in &q.frames {
        if !f.is_ic() {
            return Err(Error::NotInformationallyComplete);
        }
    }
    let n_times = q.n_times();
    // contract each time axis with its 4 x m Pauli-expansion matrix
    let mut data = q.values.clone();
    let mut shape = q.outcome_counts.clone();
    for axis in 0..n_times {
        let frame = &q.frames[axis];
        let m = frame.len();
        let mut mat = nalgebra::DMatrix::<Complex<T>>::zeros(4, m);
        for mu in 0..4 {
            let coeffs = frame.expand(&Operator::pauli(mu), tol)?;
            for b in 0..m {
                mat[(mu, b)] = coeffs[b];
            }
        }
        let (d, s) = crate::flat::contract_axis(&data, &shape, axis, &mat);
        data = d;
        shape = s;
    }

    // assemble 2^{-(n+1)} sum T^{mu} sigma_mu kron
    let paulis: Vec<Operator<T>> = (0..4).map(Operator::pauli).collect();
    let norm = re(T::lit(0.5).powi(n_times as i32));
    let mut acc = Operator::zeros(q.dims.clone());
    for (flat, t_mu) in data.iter().enumerate() {
        let mu = digits(flat, &shape);
        let mut kron = paulis[mu[0]].clone();
        for &m_k in &mu[1..] {
            kron = kron.tensor(&paulis[m_k]);
        }
        acc = &acc + &kron.scaled(*t_mu * norm).with_factor_dims(q.dims.clone()).expect("qubit dims");
    }
    let op = if q.variant.is_mh() { acc.hermitian_part() } else { acc };
    Ok(TemporalState::new(op, q.variant))
}

/// One step of the temporal link product for the right-KD convention:
/// `E * x = reorder(Phi_E^{T_in} (x (x) I_out))`, realized by duplicating the
/// leading time factor with a swap and pushing it through the channel. The
/// defining property is agreement with the dual-frame reconstruction for
/// every informationally complete frame choice.
pub fn link_product<T: Real>(
    channel: &Superoperator<T>,
    x: &TemporalState<T>,
) -> Result<TemporalState<T>> {
    if x.variant() != Variant::RightKd {
        return Err(Error::UnsupportedVariant("link product is pinned to right-kd"));
    }
    let dims = x.op().factor_dims();
    let d_lead = dims[0];
    if channel.d_in() != d_lead {
        return Err(Error::DimensionMismatch(format!(
            "channel input {} does not match leading time dimension {}",
            channel.d_in(),
            d_lead
        )));
    }
    // embed x on [fresh, slot, rest...] with its leading factor on `fresh`
    let with_id = x.op().tensor(&Operator::identity([d_lead]));
    let nf = with_id.factor_dims().len();
    let mut perm = vec![0usize, nf - 1];
    perm.extend(1..nf - 1);
    let embedded = with_id.permute_factors(&perm)?;

    let mut swap = Operator::swap(d_lead);
    if dims.len() > 1 {
        swap = swap.tensor(&Operator::identity(dims[1..].to_vec()));
    }
    let omega = &embedded * &swap;
    let out = channel.apply_to_leading_factor(&omega)?;
    Ok(TemporalState::new(out, Variant::RightKd))
}

/// Right-KD temporal state of a whole process by the link-product recursion.
pub fn link_recursion<T: Real>(process: &TemporalProcess<T>) -> Result<TemporalState<T>> {
    let mut state = TemporalState::from_density(process.rho0().clone(), Variant::RightKd);
    for ch in process.channels() {
        state = link_product(ch, &state)?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{ic_povm, projective_frame, qubit_basis, FrameKind, OperatorFrame};
    use crate::qla::basis_ket;
    use crate::random::{random_cptp, random_density, random_unitary};
    use crate::scalar::im;
    use crate::snapshot::depolarizing;
    use nalgebra::ComplexField as _;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    type Op = Operator<f64>;

    fn tol() -> Tolerances<f64> {
        Tolerances::default()
    }

    fn z_frame() -> OperatorFrame<f64> {
        projective_frame::<f64>(&qubit_basis("z").unwrap(), &tol()).unwrap()
    }

    fn x_frame() -> OperatorFrame<f64> {
        projective_frame::<f64>(&qubit_basis("x").unwrap(), &tol()).unwrap()
    }

    fn random_process(rng: &mut ChaCha12Rng, n_channels: usize) -> TemporalProcess<f64> {
        let rho = random_density::<f64>(rng, 2);
        let channels = (0..n_channels).map(|_| random_cptp::<f64>(rng, 2, 2)).collect();
        TemporalProcess::new(rho, channels, &tol()).unwrap()
    }

    /// A second IC frame family: the standard one conjugated by a fixed unitary.
    fn rotated_ic_frame(rng: &mut ChaCha12Rng) -> OperatorFrame<f64> {
        let u = random_unitary::<f64>(rng, 2);
        let elements = ic_povm::<f64>(2, &tol())
            .unwrap()
            .elements()
            .iter()
            .map(|k| &(&u * k) * &u.adjoint())
            .collect();
        OperatorFrame::from_elements(elements, FrameKind::Custom, &tol()).unwrap()
    }

    #[test]
    fn exact_tqd_eigenstate_is_deterministic() {
        let p = TemporalProcess::new(
            Op::projector(&basis_ket(2, 0)),
            vec![Superoperator::identity(2)],
            &tol(),
        )
        .unwrap();
        let zf = z_frame();
        let q = exact_tqd(&p, &[&zf, &zf], Variant::RightKd).unwrap();
        assert!((q.value(&[0, 0]) - re(1.0)).modulus() < 1e-12);
        for beta in [[0, 1], [1, 0], [1, 1]] {
            assert!(q.value(&beta).modulus() < 1e-12);
        }
    }

    #[test]
    fn exact_tqd_plus_state_is_half_diagonal() {
        let plus = (basis_ket::<f64>(2, 0) + basis_ket::<f64>(2, 1)).map(|v| v * re(0.5f64.sqrt()));
        let p = TemporalProcess::new(
            Op::projector(&plus),
            vec![Superoperator::identity(2)],
            &tol(),
        )
        .unwrap();
        let zf = z_frame();
        let q = exact_tqd(&p, &[&zf, &zf], Variant::RightKd).unwrap();
        // oracle: Q(b1, b0) = Tr(rho Pi_{b0} Pi_{b1})
        for b1 in 0..2 {
            for b0 in 0..2 {
                let want = if b1 == b0 { 0.5 } else { 0.0 };
                assert!((q.value(&[b1, b0]) - re(want)).modulus() < 1e-12);
            }
        }
    }

    #[test]
    fn exact_tqd_negativity_witness() {
        let theta = 3.0 * std::f64::consts::PI / 8.0;
        let psi = nalgebra::DVector::from_vec(vec![re(theta.cos()), re(theta.sin())]);
        let p = TemporalProcess::new(
            Op::projector(&psi),
            vec![Superoperator::identity(2)],
            &tol(),
        )
        .unwrap();
        let q = exact_tqd(&p, &[&z_frame(), &x_frame()], Variant::RightKd).unwrap();
        // independent oracle <x|psi><psi|z><z|x>, frozen: -(sqrt(2)-1)/4
        let got = q.value(&[1, 0]);
        assert!((got.re + 0.10355339059327376).abs() < 1e-12, "Q(-,0) = {got}");
        assert!(got.im.abs() < 1e-12);

        let nc = q.nonclassicality();
        assert!((nc.negativity - 0.10355339059327376).abs() < 1e-10);
        assert!(nc.imaginarity < 1e-12);
    }

    #[test]
    fn tqd_normalization_all_variants() {
        let mut rng = ChaCha12Rng::seed_from_u64(61);
        let frame = ic_povm::<f64>(2, &tol()).unwrap();
        for n_channels in 0..3usize {
            let p = random_process(&mut rng, n_channels);
            let frames: Vec<&OperatorFrame<f64>> = (0..=n_channels).map(|_| &frame).collect();
            for variant in [
                Variant::LeftKd,
                Variant::RightKd,
                Variant::DoubledKd,
                Variant::LeftMh,
                Variant::RightMh,
                Variant::DoubledMh,
            ] {
                let q = exact_tqd(&p, &frames, variant).unwrap();
                assert!((q.sum() - re(1.0)).modulus() < 1e-10, "variant {variant}");
                if variant.is_mh() {
                    assert!(q.values().iter().all(|v| v.im == 0.0));
                }
            }
        }
    }

    #[test]
    fn marginal_matches_reduced_process() {
        let mut rng = ChaCha12Rng::seed_from_u64(67);
        let frame = ic_povm::<f64>(2, &tol()).unwrap();
        let p = random_process(&mut rng, 2);
        let frames = [&frame, &frame, &frame];
        for variant in [Variant::RightKd, Variant::LeftKd, Variant::DoubledKd] {
            let q = exact_tqd(&p, &frames, variant).unwrap();
            for keep in [vec![0], vec![1], vec![2], vec![0, 1], vec![1, 2], vec![0, 2]] {
                let marg = q.marginal(&keep).unwrap();
                let reduced = p.reduced(&keep).unwrap();
                let sub_frames: Vec<&OperatorFrame<f64>> = keep.iter().map(|_| &frame).collect();
                let expect = exact_tqd(&reduced, &sub_frames, variant).unwrap();
                for (a, b) in marg.values().iter().zip(expect.values()) {
                    assert!((a - b).modulus() < 1e-10, "variant {variant} keep {keep:?}");
                }
            }
        }
    }

    #[test]
    fn marginal_collapses_to_single_time_povm_statistics() {
        let mut rng = ChaCha12Rng::seed_from_u64(71);
        let frame = ic_povm::<f64>(2, &tol()).unwrap();
        let p = random_process(&mut rng, 1);
        let q = exact_tqd(&p, &[&frame, &frame], Variant::RightKd).unwrap();
        // sum over beta_1: Tr(rho K_{b0})
        let m0 = q.marginal(&[0]).unwrap();
        for (b0, k) in frame.elements().iter().enumerate() {
            let want = p.rho0().trace_product(k);
            assert!((m0.value(&[b0]) - want).modulus() < 1e-12);
        }
        // sum over beta_0: Tr(E(rho) K_{b1})
        let m1 = q.marginal(&[1]).unwrap();
        let evolved = p.channels()[0].apply(p.rho0()).unwrap();
        for (b1, k) in frame.elements().iter().enumerate() {
            let want = evolved.trace_product(k);
            assert!((m1.value(&[b1]) - want).modulus() < 1e-12);
        }
        // keep everything: unchanged
        let all = q.marginal(&[0, 1]).unwrap();
        assert_eq!(all.values(), q.values());
    }

    #[test]
    fn born_rule_on_maximally_mixed_state() {
        let frame = ic_povm::<f64>(2, &tol()).unwrap();
        let upsilon =
            TemporalState::new(Op::identity([2, 2]).scaled(re(0.25)), Variant::RightKd);
        let q = born_rule(&upsilon, &[&frame, &frame]).unwrap();
        for b1 in 0..4 {
            for b0 in 0..4 {
                let want = frame.elements()[b1].trace() * frame.elements()[b0].trace()
                    * re(0.25);
                assert!((q.value(&[b1, b0]) - want).modulus() < 1e-12);
            }
        }
    }

    #[test]
    fn born_rule_on_swap_half_with_projective_frames() {
        let zf = z_frame();
        let upsilon = TemporalState::new(Op::swap(2).scaled(re(0.5)), Variant::RightKd);
        let q = born_rule(&upsilon, &[&zf, &zf]).unwrap();
        for b1 in 0..2 {
            for b0 in 0..2 {
                let want = if b1 == b0 { 0.5 } else { 0.0 };
                assert!((q.value(&[b1, b0]) - re(want)).modulus() < 1e-12);
            }
        }
    }

    #[test]
    fn born_and_dual_frame_are_inverse() {
        let mut rng = ChaCha12Rng::seed_from_u64(73);
        let frame = ic_povm::<f64>(2, &tol()).unwrap();
        let p = random_process(&mut rng, 1);
        let q = exact_tqd(&p, &[&frame, &frame], Variant::RightKd).unwrap();
        let upsilon = state_from_tqd(&q).unwrap();
        // born_rule(state_from_tqd(q)) = q
        let q2 = born_rule(&upsilon, &[&frame, &frame]).unwrap();
        for (a, b) in q2.values().iter().zip(q.values()) {
            assert!((a - b).modulus() < 1e-10);
        }
        // state_from_tqd(born_rule(s)) = s
        let upsilon2 = state_from_tqd(&q2).unwrap();
        assert!(upsilon2.distance(&upsilon) < 1e-10);
    }

    #[test]
    fn state_from_tqd_known_forms() {
        let frame = ic_povm::<f64>(2, &tol()).unwrap();
        // identity channel on I/2 -> SWAP/2
        let p = TemporalProcess::new(
            Op::identity([2]).scaled(re(0.5)),
            vec![Superoperator::identity(2)],
            &tol(),
        )
        .unwrap();
        let q = exact_tqd(&p, &[&frame, &frame], Variant::RightKd).unwrap();
        let upsilon = state_from_tqd(&q).unwrap();
        assert!(upsilon.op().distance(&Op::swap(2).scaled(re(0.5))) < 1e-10);
        assert!((upsilon.trace() - re(1.0)).modulus() < 1e-10);

        // single time: spatial tomography special case
        let mut rng = ChaCha12Rng::seed_from_u64(79);
        let rho = random_density::<f64>(&mut rng, 2);
        let p1 = TemporalProcess::new(rho.clone(), vec![], &tol()).unwrap();
        let q1 = exact_tqd(&p1, &[&frame], Variant::RightKd).unwrap();
        let s1 = state_from_tqd(&q1).unwrap();
        assert!(s1.op().distance(&rho) < 1e-10);

        // |0><0| through the identity: both marginals are |0><0|
        let p0 = TemporalProcess::new(
            Op::projector(&basis_ket(2, 0)),
            vec![Superoperator::identity(2)],
            &tol(),
        )
        .unwrap();
        let q0 = exact_tqd(&p0, &[&frame, &frame], Variant::RightKd).unwrap();
        let s0 = state_from_tqd(&q0).unwrap();
        let marg_t0 = s0.reduced(&[0]).unwrap();
        let marg_t1 = s0.reduced(&[1]).unwrap();
        let proj0 = Op::projector(&basis_ket(2, 0));
        assert!(marg_t0.op().distance(&proj0) < 1e-10);
        assert!(marg_t1.op().distance(&proj0) < 1e-10);
    }

    #[test]
    fn state_requires_ic_frames() {
        let zf = z_frame();
        let p = TemporalProcess::new(
            Op::identity([2]).scaled(re(0.5)),
            vec![Superoperator::identity(2)],
            &tol(),
        )
        .unwrap();
        let q = exact_tqd(&p, &[&zf, &zf], Variant::RightKd).unwrap();
        assert!(matches!(
            state_from_tqd(&q),
            Err(Error::NotInformationallyComplete)
        ));
    }

    #[test]
    fn frame_independence_of_reconstructed_state() {
        let mut rng = ChaCha12Rng::seed_from_u64(83);
        let frame_a = ic_povm::<f64>(2, &tol()).unwrap();
        let frame_b = rotated_ic_frame(&mut rng);
        for n_channels in 1..3usize {
            let p = random_process(&mut rng, n_channels);
            let fa: Vec<&OperatorFrame<f64>> = (0..=n_channels).map(|_| &frame_a).collect();
            let fb: Vec<&OperatorFrame<f64>> = (0..=n_channels).map(|_| &frame_b).collect();
            let ua = state_from_tqd(&exact_tqd(&p, &fa, Variant::RightKd).unwrap()).unwrap();
            let ub = state_from_tqd(&exact_tqd(&p, &fb, Variant::RightKd).unwrap()).unwrap();
            assert!(ua.distance(&ub) < 1e-9, "frame dependence at n = {n_channels}");
        }
    }

    #[test]
    fn temporal_bloch_examples() {
        let frame = ic_povm::<f64>(2, &tol()).unwrap();
        // single time |0><0|: T^3 = +1, T^1 = T^2 = 0 encoded in the state
        let p = TemporalProcess::new(Op::projector(&basis_ket(2, 0)), vec![], &tol()).unwrap();
        let q = exact_tqd(&p, &[&frame], Variant::RightKd).unwrap();
        let s = temporal_bloch(&q, &tol()).unwrap();
        assert!(s.op().distance(&Op::projector(&basis_ket(2, 0))) < 1e-10);

        // normalization correlator: T^{0...0} = sum Q = 1
        assert!((q.sum() - re(1.0)).modulus() < 1e-12);
    }

    #[test]
    fn temporal_bloch_agrees_with_dual_frame_route() {
        let mut rng = ChaCha12Rng::seed_from_u64(89);
        let frame = ic_povm::<f64>(2, &tol()).unwrap();
        let p = random_process(&mut rng, 2);
        let frames = [&frame, &frame, &frame];
        for variant in [Variant::RightKd, Variant::RightMh, Variant::LeftKd] {
            let q = exact_tqd(&p, &frames, variant).unwrap();
            let a = temporal_bloch(&q, &tol()).unwrap();
            let b = state_from_tqd(&q).unwrap();
            assert!(a.distance(&b) < 1e-10, "variant {variant}");
        }
    }

    #[test]
    fn temporal_bloch_rejects_qutrits() {
        let frame = ic_povm::<f64>(3, &tol()).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(97);
        let rho = random_density::<f64>(&mut rng, 3);
        let p = TemporalProcess::new(rho, vec![], &tol()).unwrap();
        let q = exact_tqd(&p, &[&frame], Variant::RightKd).unwrap();
        assert!(matches!(temporal_bloch(&q, &tol()), Err(Error::NotQubit(3))));
    }

    #[test]
    fn link_product_identity_on_mixed_state_is_swap_half() {
        let rho = Op::identity([2]).scaled(re(0.5));
        let state = TemporalState::from_density(rho, Variant::RightKd);
        let linked = link_product(&Superoperator::identity(2), &state).unwrap();
        assert!(linked.op().distance(&Op::swap(2).scaled(re(0.5))) < 1e-12);

        // pseudo-density correspondence: Hermitian part = (1/4) sum sigma (x) sigma
        let mh = linked.mh_part();
        let mut pdo = Op::zeros([2, 2]);
        for mu in 0..4 {
            pdo = &pdo + &Op::pauli(mu).tensor(&Op::pauli(mu)).scaled(re(0.25));
        }
        assert!(mh.op().distance(&pdo) < 1e-12);
    }

    #[test]
    fn link_product_matches_dual_frame_reconstruction() {
        let mut rng = ChaCha12Rng::seed_from_u64(101);
        let frame = ic_povm::<f64>(2, &tol()).unwrap();
        for _ in 0..10 {
            let p = random_process(&mut rng, 1);
            let q = exact_tqd(&p, &[&frame, &frame], Variant::RightKd).unwrap();
            let via_dual = state_from_tqd(&q).unwrap();
            let via_link = link_recursion(&p).unwrap();
            assert!(via_link.distance(&via_dual) < 1e-9);
        }
    }

    #[test]
    fn link_recursion_matches_three_time_reconstruction() {
        let mut rng = ChaCha12Rng::seed_from_u64(103);
        let frame = ic_povm::<f64>(2, &tol()).unwrap();
        let p = random_process(&mut rng, 2);
        let q = exact_tqd(&p, &[&frame, &frame, &frame], Variant::RightKd).unwrap();
        let via_dual = state_from_tqd(&q).unwrap();
        let via_link = link_recursion(&p).unwrap();
        assert!(via_link.distance(&via_dual) < 1e-9);
    }

    #[test]
    fn mh_part_commutes_with_state_reconstruction() {
        let mut rng = ChaCha12Rng::seed_from_u64(107);
        let frame = ic_povm::<f64>(2, &tol()).unwrap();
        let p = random_process(&mut rng, 1);
        let q = exact_tqd(&p, &[&frame, &frame], Variant::RightKd).unwrap();
        let a = state_from_tqd(&q.mh_part()).unwrap();
        let b = state_from_tqd(&q).unwrap().mh_part();
        assert!(a.distance(&b) < 1e-10);

        // real-valued TQD values unchanged by mh_part
        let zf = z_frame();
        let p0 = TemporalProcess::new(
            Op::identity([2]).scaled(re(0.5)),
            vec![Superoperator::identity(2)],
            &tol(),
        )
        .unwrap();
        let q0 = exact_tqd(&p0, &[&zf, &zf], Variant::RightKd).unwrap();
        let q0_mh = q0.mh_part();
        for (a, b) in q0.values().iter().zip(q0_mh.values()) {
            assert!((a - b).modulus() < 1e-12);
        }
        // Hermitian state unchanged by mh_part
        let s = TemporalState::new(Op::swap(2).scaled(re(0.5)), Variant::RightKd);
        assert!(s.mh_part().op().distance(s.op()) < 1e-12);
    }

    #[test]
    fn left_and_right_states_are_adjoints() {
        let mut rng = ChaCha12Rng::seed_from_u64(109);
        let frame = ic_povm::<f64>(2, &tol()).unwrap();
        let p = random_process(&mut rng, 1);
        let right = state_from_tqd(&exact_tqd(&p, &[&frame, &frame], Variant::RightKd).unwrap())
            .unwrap();
        let left = state_from_tqd(&exact_tqd(&p, &[&frame, &frame], Variant::LeftKd).unwrap())
            .unwrap();
        assert!(left.op().distance(&right.op().adjoint()) < 1e-10);
    }

    #[test]
    fn doubled_diagonal_matches_sequential_measurement() {
        let zf = z_frame();
        let plus = (basis_ket::<f64>(2, 0) + basis_ket::<f64>(2, 1)).map(|v| v * re(0.5f64.sqrt()));
        let p = TemporalProcess::new(
            Op::projector(&plus),
            vec![depolarizing(2, 0.3)],
            &tol(),
        )
        .unwrap();
        let q = exact_tqd(&p, &[&zf, &zf], Variant::DoubledKd).unwrap();
        // diagonal (a_k = b_k) entries: real, nonnegative, sequential-measurement stats
        for a1 in 0..2 {
            for a0 in 0..2 {
                let v = q.value(&[a1 * 2 + a1, a0 * 2 + a0]);
                assert!(v.im.abs() < 1e-12);
                assert!(v.re >= -1e-12);
                // oracle: Tr[Pi_{a1} E(Pi_{a0} rho Pi_{a0})]
                let pa0 = Op::projector(&basis_ket::<f64>(2, a0));
                let pa1 = Op::projector(&basis_ket::<f64>(2, a1));
                let inner = Op::square(pa0.matrix() * p.rho0().matrix() * pa0.matrix()).unwrap();
                let evolved = p.channels()[0].apply(&inner).unwrap();
                let want = evolved.trace_product(&pa1).re;
                assert!((v.re - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn doubled_state_reconstruction_is_out_of_scope() {
        let frame = ic_povm::<f64>(2, &tol()).unwrap();
        let p = TemporalProcess::new(
            Op::identity([2]).scaled(re(0.5)),
            vec![Superoperator::identity(2)],
            &tol(),
        )
        .unwrap();
        let q = exact_tqd(&p, &[&frame, &frame], Variant::DoubledKd).unwrap();
        assert!(matches!(state_from_tqd(&q), Err(Error::UnsupportedVariant(_))));
    }

    #[test]
    fn process_validation() {
        let t = tol();
        // non-normalized initial state
        let bad = Op::identity([2]);
        assert!(TemporalProcess::new(bad, vec![], &t).is_err());
        // dimension chain mismatch
        let rho = Op::identity([2]).scaled(re(0.5));
        let ch3 = Superoperator::<f64>::identity(3);
        assert!(matches!(
            TemporalProcess::new(rho, vec![ch3], &t),
            Err(Error::DimensionMismatch(_))
        ));
        // non-Hermitian "state"
        let skew = Op::pauli(1).scaled(im()).scaled(re(0.5));
        assert!(TemporalProcess::new(skew, vec![], &t).is_err());
    }

    #[test]
    fn tqd_serialization_layout() {
        let zf = z_frame();
        let p = TemporalProcess::new(
            Op::projector(&basis_ket(2, 0)),
            vec![Superoperator::identity(2)],
            &tol(),
        )
        .unwrap();
        let q = exact_tqd(&p, &[&zf, &zf], Variant::RightKd).unwrap();
        let json: serde_json::Value = serde_json::to_value(&q).unwrap();
        assert_eq!(json["variant"], "right-kd");
        assert_eq!(json["outcome_counts"], serde_json::json!([2, 2]));
        let re_vals = json["re"].as_array().unwrap();
        assert_eq!(re_vals.len(), 4);
        // beta = (0, 0) is the first flat entry
        assert!((re_vals[0].as_f64().unwrap() - 1.0).abs() < 1e-12);
    }
}
