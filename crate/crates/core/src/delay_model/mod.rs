//! Propagation-delay laws and the reach / first-arrival / threshold probabilities
//! every downstream computation is built on.
//!
//! Delays are measured in seconds from the moment a proposer releases its block.
//! A block released at `delta` reaches an attestor in time when `delta + delay <= tau1`.

pub mod quadrature;
pub mod special;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use quadrature::{integrate, integrate_with_breaks, Integral, QuadratureConfig};

/// Largest Gamma shape accepted; keeps the incomplete-gamma iterations bounded.
pub const MAX_SHAPE: f64 = 1e5;

/// A density on `[0, inf)` with a closed-form CDF.
pub trait DelayDensity<T: Scalar>: Sync {
    fn pdf(&self, x: T) -> T;
    fn cdf(&self, x: T) -> T;
    fn mean(&self) -> T;
}

/// Gamma(shape, rate) propagation delay; the mean is `shape / rate` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DelayDistribution<T: Scalar> {
    shape: T,
    rate: T,
}

/// How a partner distribution with mean `gamma * mean` is derived from a base law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanScaling {
    /// Keep the shape, divide the rate by `gamma`.
    #[default]
    FixedShape,
    /// Keep the rate, multiply the shape by `gamma`.
    FixedRate,
}

impl<T: Scalar> DelayDistribution<T> {
    pub fn new(shape: T, rate: T) -> Result<Self> {
        let ok = shape > T::zero()
            && rate > T::zero()
            && shape.is_finite()
            && rate.is_finite()
            && shape <= T::lit(MAX_SHAPE);
        if !ok {
            return Err(Error::domain(
                "gamma delay parameters",
                format!("shape={shape} rate={rate} (need 0 < shape <= {MAX_SHAPE}, rate > 0)"),
            ));
        }
        Ok(Self { shape, rate })
    }

    /// Gamma law with the given shape and mean.
    pub fn with_mean(shape: T, mean: T) -> Result<Self> {
        if !(mean > T::zero()) {
            return Err(Error::domain("gamma delay mean", format!("{mean}")));
        }
        Self::new(shape, shape / mean)
    }

    pub fn shape(&self) -> T {
        self.shape
    }

    pub fn rate(&self) -> T {
        self.rate
    }

    /// The partner law with mean `gamma` times this one's.
    pub fn scaled(&self, gamma: T, rule: MeanScaling) -> Result<Self> {
        if !(gamma > T::zero()) {
            return Err(Error::domain("mean ratio gamma", format!("{gamma}")));
        }
        match rule {
            MeanScaling::FixedShape => Self::new(self.shape, self.rate / gamma),
            MeanScaling::FixedRate => Self::new(self.shape * gamma, self.rate),
        }
    }
}

impl<T: Scalar> DelayDensity<T> for DelayDistribution<T> {
    fn pdf(&self, x: T) -> T {
        if x < T::zero() {
            return T::zero();
        }
        let one = T::one();
        if x == T::zero() {
            return if self.shape < one {
                T::infinity()
            } else if self.shape == one {
                self.rate
            } else {
                T::zero()
            };
        }
        let ln = self.shape * self.rate.ln() + (self.shape - one) * x.ln()
            - self.rate * x
            - special::ln_gamma(self.shape);
        ln.exp()
    }

    fn cdf(&self, x: T) -> T {
        special::gamma_p(self.shape, self.rate * x).expect("validated gamma shape converges")
    }

    fn mean(&self) -> T {
        self.shape / self.rate
    }
}

/// Uniform density on `[lo, hi]`. Only used as a reference law in tests and checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformDelay<T> {
    lo: T,
    hi: T,
}

impl<T: Scalar> UniformDelay<T> {
    pub fn new(lo: T, hi: T) -> Result<Self> {
        if !(lo >= T::zero() && hi > lo) {
            return Err(Error::domain("uniform delay bounds", format!("[{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }
}

impl<T: Scalar> DelayDensity<T> for UniformDelay<T> {
    fn pdf(&self, x: T) -> T {
        if x < self.lo || x > self.hi {
            T::zero()
        } else {
            T::one() / (self.hi - self.lo)
        }
    }

    fn cdf(&self, x: T) -> T {
        ((x - self.lo) / (self.hi - self.lo)).max(T::zero()).min(T::one())
    }

    fn mean(&self) -> T {
        T::lit(0.5) * (self.lo + self.hi)
    }
}

/// Slot timing and attestation thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ProtocolParams<T: Scalar> {
    /// Slot length in seconds.
    pub slot_len: T,
    /// Attestation deadline; blocks arriving later are not attested.
    pub attest_deadline: T,
    /// Aggregation deadline.
    pub aggregate_deadline: T,
    pub n_attestors: usize,
    /// Minimum attestations for a block to be confirmable.
    pub threshold: usize,
}

impl<T: Scalar> ProtocolParams<T> {
    /// `floor(2n/3) + 1`.
    pub fn supermajority(n: usize) -> usize {
        2 * n / 3 + 1
    }

    /// Ethereum timing with a 127-member committee.
    pub fn ethereum() -> Self {
        Self::with_committee(127, Self::supermajority(127))
    }

    /// The small committee used by the equilibrium experiments.
    pub fn experiment() -> Self {
        Self::with_committee(12, 9)
    }

    pub fn with_committee(n_attestors: usize, threshold: usize) -> Self {
        Self {
            slot_len: T::lit(12.0),
            attest_deadline: T::lit(4.0),
            aggregate_deadline: T::lit(8.0),
            n_attestors,
            threshold,
        }
    }

    pub fn tau1(&self) -> T {
        self.attest_deadline
    }

    pub fn validate(&self) -> Result<()> {
        let z = T::zero();
        if !(z < self.attest_deadline
            && self.attest_deadline < self.aggregate_deadline
            && self.aggregate_deadline < self.slot_len)
        {
            return Err(Error::domain(
                "slot timing",
                format!(
                    "need 0 < tau1 < tau2 < tau, got tau1={} tau2={} tau={}",
                    self.attest_deadline, self.aggregate_deadline, self.slot_len
                ),
            ));
        }
        if !(1 <= self.threshold && self.threshold <= self.n_attestors) {
            return Err(Error::domain(
                "attestation threshold",
                format!("need 1 <= K <= n, got K={} n={}", self.threshold, self.n_attestors),
            ));
        }
        Ok(())
    }

    pub(crate) fn check_delay(&self, delta: T) -> Result<()> {
        if delta >= T::zero() && delta <= self.attest_deadline {
            Ok(())
        } else {
            Err(Error::domain(
                "proposal delay",
                format!("{delta} outside [0, {}]", self.attest_deadline),
            ))
        }
    }
}

pub fn pdf<T: Scalar, D: DelayDensity<T>>(dist: &D, x: T) -> T {
    dist.pdf(x)
}

pub fn cdf<T: Scalar, D: DelayDensity<T>>(dist: &D, x: T) -> T {
    dist.cdf(x)
}

/// Probability that a block released at `delta` reaches a given attestor by `tau1`.
pub fn q_reach<T: Scalar, D: DelayDensity<T>>(
    dist: &D,
    delta: T,
    params: &ProtocolParams<T>,
) -> Result<T> {
    params.check_delay(delta)?;
    Ok(dist.cdf(params.tau1() - delta))
}

/// Probability that block `i` reaches an attestor strictly before block `j`, both by `tau1`.
///
/// Only the outer integral is numeric; the inner one is `F_j(tau1 - delta_j) - F_j(x + delta_i - delta_j)`
/// with the lower limit clamped at zero.
pub fn p_first<T, Di, Dj>(
    dist_i: &Di,
    dist_j: &Dj,
    delta_i: T,
    delta_j: T,
    params: &ProtocolParams<T>,
    quad: &QuadratureConfig<T>,
) -> Result<T>
where
    T: Scalar,
    Di: DelayDensity<T>,
    Dj: DelayDensity<T>,
{
    params.check_delay(delta_i)?;
    params.check_delay(delta_j)?;
    let tau1 = params.tau1();
    let upper = tau1 - delta_i;
    let q_j = dist_j.cdf(tau1 - delta_j);
    if upper <= T::zero() || q_j <= T::zero() {
        return Ok(T::zero());
    }
    let shift = delta_i - delta_j;
    let integrand = |x: T| {
        let inner = q_j - dist_j.cdf((x + shift).max(T::zero()));
        dist_i.pdf(x) * inner.max(T::zero())
    };
    let r = integrate_with_breaks(integrand, T::zero(), upper, &[-shift], quad)?;
    let q_i = dist_i.cdf(upper);
    Ok(r.value.max(T::zero()).min(q_i * q_j))
}

/// `P[Bin(n, q) >= K]`: the probability at least `K` of `n` attestors receive the block.
pub fn m_threshold<T: Scalar>(q: T, n: usize, k: usize) -> Result<T> {
    if !(q >= T::zero() && q <= T::one()) {
        return Err(Error::domain("reach probability", format!("{q}")));
    }
    if k == 0 || k > n {
        return Err(Error::domain("attestation threshold", format!("K={k} n={n}")));
    }
    Ok(special::binomial_upper_tail(q, n, k))
}

/// `(integral_a^b f(x)^2 dx)^(1/2)`.
pub fn restricted_l2<T: Scalar, D: DelayDensity<T>>(
    dist: &D,
    a: T,
    b: T,
    quad: &QuadratureConfig<T>,
) -> Result<T> {
    if !(a >= T::zero() && b >= a) {
        return Err(Error::domain("L2 interval", format!("[{a}, {b}]")));
    }
    let r = integrate(
        |x: T| {
            let f = dist.pdf(x);
            f * f
        },
        a,
        b,
        quad,
    )?;
    Ok(r.value.max(T::zero()).sqrt())
}

/// Peakedness condition `L2[0, tau1] >= 1 / (2 sqrt(tau1))` assumed by the homogeneous equilibrium result.
pub fn is_peaked<T: Scalar, D: DelayDensity<T>>(
    dist: &D,
    tau1: T,
    quad: &QuadratureConfig<T>,
) -> Result<bool> {
    let norm = restricted_l2(dist, T::zero(), tau1, quad)?;
    Ok(norm >= T::one() / (T::lit(2.0) * tau1.sqrt()))
}
