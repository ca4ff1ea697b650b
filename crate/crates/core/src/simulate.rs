//! Experimentally accessible data: exact trajectory probability
//! distributions for time-ordered instruments, and seeded Monte-Carlo
//! samples at finite shot counts.
//!
//! Trajectory arrays follow the TQD layout: flat row-major over
//! `(alpha_n, ..., alpha_0)` with `alpha_n` slowest.

use rand::distributions::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::Binomial;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flat::{strides, sum_axis};
use crate::frames::ic_povm;
use crate::qla::Operator;
use crate::scalar::{re, Complex, Real, Tolerances};
use crate::snapshot::{instrument_from_frame, Instrument};
use crate::tqd::TemporalProcess;

/// Identifier of the counter-based generator recorded in output files.
pub const RNG_ALGORITHM: &str = "chacha12";

/// Derives the per-trial stream seed.
pub fn stream_seed(seed: u64, trial_index: u64) -> u64 {
    seed ^ trial_index
}

fn rng_for(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// One instrument per time step, each acting on that step's Hilbert space.
#[derive(Debug, Clone)]
pub struct InstrumentSchedule<T: Real> {
    instruments: Vec<Instrument<T>>,
}

impl<T: Real> InstrumentSchedule<T> {
    pub fn new(instruments: Vec<Instrument<T>>) -> Result<Self> {
        if instruments.is_empty() {
            return Err(Error::InvalidParam("schedule needs at least one instrument".into()));
        }
        for (k, inst) in instruments.iter().enumerate() {
            if inst.d_in() != inst.d_out() {
                return Err(Error::DimensionMismatch(format!(
                    "instrument at time {k} must act on a single space, got {} -> {}",
                    inst.d_in(),
                    inst.d_out()
                )));
            }
        }
        Ok(Self { instruments })
    }

    /// The snapshotting schedule: at each time the instrument induced by the
    /// IC-POVM on the doubled space (input (x) output), `m_k = d_k^4` outcomes.
    pub fn snapshotting(dims_ascending: &[usize], tol: &Tolerances<T>) -> Result<Self> {
        let instruments = dims_ascending
            .iter()
            .map(|&d| {
                let frame = ic_povm::<T>(d * d, tol)?;
                instrument_from_frame(&frame, d, d, tol)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(instruments)
    }

    /// Instruments, time-ascending.
    pub fn instruments(&self) -> &[Instrument<T>] {
        &self.instruments
    }

    pub fn n_times(&self) -> usize {
        self.instruments.len()
    }

    /// Outcome counts, time-descending `[m_n, ..., m_0]`.
    pub fn outcome_counts_desc(&self) -> Vec<usize> {
        self.instruments.iter().rev().map(|i| i.len()).collect()
    }

    pub fn total_trajectories(&self) -> usize {
        self.instruments.iter().map(|i| i.len()).product()
    }
}

/// Exact probabilities over measurement trajectories.
#[derive(Debug, Clone)]
pub struct TrajectoryDistribution<T: Real> {
    /// Flat row-major over `(alpha_n, ..., alpha_0)`.
    p: Vec<T>,
    /// Outcome counts per time, `[m_n, ..., m_0]`.
    outcome_counts: Vec<usize>,
}

impl<T: Real> TrajectoryDistribution<T> {
    pub fn new(p: Vec<T>, outcome_counts: Vec<usize>, tol: &Tolerances<T>) -> Result<Self> {
        let total: usize = outcome_counts.iter().product();
        if p.len() != total {
            return Err(Error::DimensionMismatch(format!(
                "distribution has {} entries, outcome counts require {total}",
                p.len()
            )));
        }
        if let Some(&bad) = p.iter().find(|&&x| x < -tol.tol_psd) {
            return Err(Error::InvalidParam(format!(
                "trajectory probability {:.3e} below the PSD slack; non-CP instrument upstream",
                bad.as_f64()
            )));
        }
        let sum = p.iter().fold(T::zero(), |a, &x| a + x);
        if (sum - T::one()).abs() > tol.tol_recon {
            return Err(Error::InvalidParam(format!(
                "trajectory probabilities sum to {}, expected 1",
                sum.as_f64()
            )));
        }
        Ok(Self { p, outcome_counts })
    }

    pub fn probabilities(&self) -> &[T] {
        &self.p
    }

    /// Outcome counts per time, descending.
    pub fn outcome_counts(&self) -> &[usize] {
        &self.outcome_counts
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn value(&self, alpha_desc: &[usize]) -> T {
        let st = strides(&self.outcome_counts);
        self.p[alpha_desc.iter().zip(&st).map(|(&a, &s)| a * s).sum::<usize>()]
    }

    /// Probabilities with tiny negatives clamped to zero and renormalized.
    pub fn clamped(&self) -> Vec<T> {
        let mut p: Vec<T> = self
            .p
            .iter()
            .map(|&x| if x < T::zero() { T::zero() } else { x })
            .collect();
        let sum = p.iter().fold(T::zero(), |a, &x| a + x);
        for x in &mut p {
            *x /= sum;
        }
        p
    }

    /// Sums out the leading (latest) time, giving the distribution of the
    /// truncated schedule.
    pub fn truncate_latest(&self) -> Result<TrajectoryDistribution<T>> {
        if self.outcome_counts.len() < 2 {
            return Err(Error::InvalidParam("nothing to truncate".into()));
        }
        let data: Vec<Complex<T>> = self.p.iter().map(|&x| re(x)).collect();
        let (summed, shape) = sum_axis(&data, &self.outcome_counts, 0);
        Ok(TrajectoryDistribution {
            p: summed.iter().map(|z| z.re).collect(),
            outcome_counts: shape,
        })
    }
}

/// Exact trajectory distribution
/// `p(alpha) = Tr[I_{alpha_n} E_n ... I_{alpha_1} E_1 I_{alpha_0}(rho)]`,
/// evaluated by prefix-shared depth-first recursion.
pub fn trajectory_distribution<T: Real>(
    process: &TemporalProcess<T>,
    schedule: &InstrumentSchedule<T>,
    tol: &Tolerances<T>,
) -> Result<TrajectoryDistribution<T>> {
    let dims = process.dims();
    if schedule.n_times() != dims.len() {
        return Err(Error::DimensionMismatch(format!(
            "schedule has {} instruments for {} times",
            schedule.n_times(),
            dims.len()
        )));
    }
    for (k, (inst, d)) in schedule.instruments().iter().zip(&dims).enumerate() {
        if inst.d_in() != *d {
            return Err(Error::DimensionMismatch(format!(
                "instrument at time {k} acts on dimension {}, process has {d}",
                inst.d_in()
            )));
        }
    }
    let n_times = dims.len();
    let counts_asc: Vec<usize> = schedule.instruments().iter().map(|i| i.len()).collect();
    let mut stride_asc = vec![1usize; n_times];
    for k in 1..n_times {
        stride_asc[k] = stride_asc[k - 1] * counts_asc[k - 1];
    }
    let total: usize = counts_asc.iter().product();
    let mut p = vec![T::zero(); total];

    fn recurse<T: Real>(
        schedule: &[Instrument<T>],
        channels: &[crate::snapshot::Superoperator<T>],
        strides_asc: &[usize],
        k: usize,
        sigma: &Operator<T>,
        base: usize,
        p: &mut [T],
    ) -> Result<()> {
        let last = k + 1 == schedule.len();
        for (a, map) in schedule[k].maps().iter().enumerate() {
            let tau = map.apply(sigma)?;
            let idx = base + a * strides_asc[k];
            if last {
                p[idx] = tau.trace().re;
            } else {
                let next = channels[k].apply(&tau)?;
                recurse(schedule, channels, strides_asc, k + 1, &next, idx, p)?;
            }
        }
        Ok(())
    }
    recurse(
        schedule.instruments(),
        process.channels(),
        &stride_asc,
        0,
        process.rho0(),
        0,
        &mut p,
    )?;

    let mut counts_desc = counts_asc;
    counts_desc.reverse();
    TrajectoryDistribution::new(p, counts_desc, tol)
}

/// Integer counts over trajectories from `n_shots` i.i.d. runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub counts: Vec<u64>,
    pub n_shots: u64,
    pub seed: u64,
    /// Outcome counts per time, descending; matches the count layout.
    pub outcome_counts: Vec<usize>,
}

/// Multinomial draw from the exact joint distribution, by chained binomial
/// conditionals. Bitwise reproducible for a given seed.
pub fn sample<T: Real>(
    dist: &TrajectoryDistribution<T>,
    n_shots: u64,
    seed: u64,
) -> Result<SampleBatch> {
    if n_shots == 0 {
        return Err(Error::InvalidParam("n_shots must be at least 1".into()));
    }
    let p = dist.clamped();
    let mut rng = rng_for(seed);
    let mut counts = vec![0u64; p.len()];
    let mut remaining_shots = n_shots;
    let mut remaining_mass = 1.0f64;
    for (k, &pk) in p.iter().enumerate() {
        if remaining_shots == 0 {
            break;
        }
        if k + 1 == p.len() {
            counts[k] = remaining_shots;
            break;
        }
        let pk = pk.as_f64();
        let cond = if remaining_mass <= 0.0 {
            0.0
        } else {
            (pk / remaining_mass).clamp(0.0, 1.0)
        };
        let draw = Binomial::new(remaining_shots, cond)
            .map_err(|e| Error::InvalidParam(format!("binomial: {e}")))?
            .sample(&mut rng);
        counts[k] = draw;
        remaining_shots -= draw;
        remaining_mass -= pk;
    }
    Ok(SampleBatch { counts, n_shots, seed, outcome_counts: dist.outcome_counts().to_vec() })
}

/// Shot-by-shot sampling through the conditional post-measurement states
/// `I_alpha(sigma)/p(alpha)`. Same joint distribution as [`sample`]; scales
/// to trajectory counts where the joint vector does not fit.
pub fn sample_sequential<T: Real>(
    process: &TemporalProcess<T>,
    schedule: &InstrumentSchedule<T>,
    n_shots: u64,
    seed: u64,
) -> Result<SampleBatch> {
    if n_shots == 0 {
        return Err(Error::InvalidParam("n_shots must be at least 1".into()));
    }
    let counts_desc = schedule.outcome_counts_desc();
    let strides_desc = strides(&counts_desc);
    let n_times = schedule.n_times();
    let total: usize = counts_desc.iter().product();
    let mut counts = vec![0u64; total];
    let mut rng = rng_for(seed);
    use rand::Rng;

    for _ in 0..n_shots {
        let mut sigma = process.rho0().clone();
        let mut flat = 0usize;
        for k in 0..n_times {
            if k > 0 {
                sigma = process.channels()[k - 1].apply(&sigma)?;
            }
            let inst = &schedule.instruments()[k];
            let probs = inst.probabilities(&sigma)?;
            let norm: T = probs
                .iter()
                .fold(T::zero(), |a, &x| a + if x > T::zero() { x } else { T::zero() });
            let u: f64 = rng.gen::<f64>() * norm.as_f64();
            let mut acc = 0.0f64;
            let mut picked = inst.len() - 1;
            for (a, &pa) in probs.iter().enumerate() {
                acc += pa.as_f64().max(0.0);
                if u < acc {
                    picked = a;
                    break;
                }
            }
            let raw = inst.maps()[picked].apply(&sigma)?;
            let tr = raw.trace().re;
            sigma = raw.scaled(re(T::one() / tr));
            // descending layout: time k sits at axis n_times-1-k
            flat += picked * strides_desc[n_times - 1 - k];
        }
        counts[flat] += 1;
    }
    Ok(SampleBatch { counts, n_shots, seed, outcome_counts: counts_desc })
}

/// Sampling strategy switch: exact joint multinomial up to a trajectory-count
/// cap, sequential conditional sampling above it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub max_exact_trajectories: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { max_exact_trajectories: 1_000_000 }
    }
}

/// Samples a process with the configured strategy.
pub fn sample_process<T: Real>(
    process: &TemporalProcess<T>,
    schedule: &InstrumentSchedule<T>,
    n_shots: u64,
    seed: u64,
    cfg: SamplerConfig,
    tol: &Tolerances<T>,
) -> Result<SampleBatch> {
    if schedule.total_trajectories() <= cfg.max_exact_trajectories {
        let dist = trajectory_distribution(process, schedule, tol)?;
        sample(&dist, n_shots, seed)
    } else {
        sample_sequential(process, schedule, n_shots, seed)
    }
}

/// Empirical frequencies `counts / N`; sums to 1 exactly in exact arithmetic.
pub fn empirical<T: Real>(batch: &SampleBatch) -> Result<TrajectoryDistribution<T>> {
    if batch.n_shots == 0 {
        return Err(Error::InvalidParam("empty sample batch".into()));
    }
    let n = T::from_u64(batch.n_shots)
        .ok_or_else(|| Error::InvalidParam("shot count not representable".into()))?;
    let p = batch.counts.iter().map(|&c| T::from_u64(c).unwrap() / n).collect();
    // counts are nonnegative integers summing to N; no further validation
    Ok(TrajectoryDistribution { p, outcome_counts: batch.outcome_counts.clone() })
}

impl SampleBatch {
    /// CSV rows `alpha_{n},...,alpha_0,count` (all trajectories, flat order).
    pub fn to_csv(&self) -> String {
        let n_times = self.outcome_counts.len();
        let mut out = String::new();
        for k in (0..n_times).rev() {
            out.push_str(&format!("alpha_{k},"));
        }
        out.push_str("count\n");
        for (flat, &c) in self.counts.iter().enumerate() {
            let idx = crate::flat::digits(flat, &self.outcome_counts);
            for a in idx {
                out.push_str(&format!("{a},"));
            }
            out.push_str(&format!("{c}\n"));
        }
        out
    }

    /// Sidecar metadata: shot count, seed, and RNG algorithm identifier.
    pub fn sidecar_json(&self) -> serde_json::Value {
        serde_json::json!({
            "N": self.n_shots,
            "seed": self.seed,
            "rng": RNG_ALGORITHM,
        })
    }

    /// Parses the CSV produced by [`SampleBatch::to_csv`]; outcome counts are
    /// inferred from the maximum index per column.
    pub fn from_csv(text: &str, n_shots: u64, seed: u64) -> Result<SampleBatch> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidParam("empty samples file".into()))?;
        let n_times = header.split(',').filter(|c| c.starts_with("alpha_")).count();
        if n_times == 0 {
            return Err(Error::InvalidParam("samples file has no alpha columns".into()));
        }
        let mut rows: Vec<(Vec<usize>, u64)> = Vec::new();
        let mut max_idx = vec![0usize; n_times];
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != n_times + 1 {
                return Err(Error::InvalidParam(format!(
                    "samples file line {}: expected {} fields, got {}",
                    lineno + 2,
                    n_times + 1,
                    fields.len()
                )));
            }
            let idx: Vec<usize> = fields[..n_times]
                .iter()
                .map(|f| {
                    f.trim().parse::<usize>().map_err(|e| {
                        Error::InvalidParam(format!("samples file line {}: {e}", lineno + 2))
                    })
                })
                .collect::<Result<_>>()?;
            let count: u64 = fields[n_times].trim().parse().map_err(|e| {
                Error::InvalidParam(format!("samples file line {}: {e}", lineno + 2))
            })?;
            for (m, &i) in max_idx.iter_mut().zip(&idx) {
                *m = (*m).max(i);
            }
            rows.push((idx, count));
        }
        let outcome_counts: Vec<usize> = max_idx.iter().map(|&m| m + 1).collect();
        let st = strides(&outcome_counts);
        let total: usize = outcome_counts.iter().product();
        let mut counts = vec![0u64; total];
        let mut seen = 0u64;
        for (idx, c) in rows {
            let flat: usize = idx.iter().zip(&st).map(|(&a, &s)| a * s).sum();
            counts[flat] += c;
            seen += c;
        }
        if seen != n_shots {
            return Err(Error::InvalidParam(format!(
                "samples file counts sum to {seen}, sidecar says {n_shots}"
            )));
        }
        Ok(SampleBatch { counts, n_shots, seed, outcome_counts })
    }
}
