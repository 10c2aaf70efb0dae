//! Block valuation, closed-form Latency Game utilities for the two-proposer protocol,
//! the single-proposer objective and the collusion probability.
//!
//! All utilities are normalized by the base block reward, so a block released on time
//! is worth `1` and a block released at `delta` is worth `1 + v(delta)`.

use serde::{Deserialize, Serialize};

use crate::delay_model::{
    m_threshold, p_first, q_reach, special::ln_binomial, DelayDensity, DelayDistribution,
    ProtocolParams, QuadratureConfig,
};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Linear extra value `v(delta) = slope_c * delta` accumulated by delaying a block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ValuationModel<T: Scalar> {
    /// Extra normalized value per second of delay.
    pub slope_c: T,
    /// Base block reward; informational, utilities are already divided by it.
    pub normalizer: T,
    /// Latest admissible delay (the attestation deadline).
    pub horizon: T,
}

impl<T: Scalar> Default for ValuationModel<T> {
    /// `v(tau1) = 1` with `tau1 = 4`.
    fn default() -> Self {
        Self {
            slope_c: T::lit(0.25),
            normalizer: T::one(),
            horizon: T::lit(4.0),
        }
    }
}

impl<T: Scalar> ValuationModel<T> {
    pub fn new(slope_c: T, horizon: T) -> Result<Self> {
        let v = Self {
            slope_c,
            normalizer: T::one(),
            horizon,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.slope_c >= T::zero() && self.slope_c.is_finite()) {
            return Err(Error::domain("valuation slope", format!("{}", self.slope_c)));
        }
        if !(self.normalizer > T::zero() && self.horizon > T::zero()) {
            return Err(Error::domain(
                "valuation normalizer/horizon",
                format!("{} / {}", self.normalizer, self.horizon),
            ));
        }
        Ok(())
    }
}

/// `v(delta)` in normalized units.
pub fn block_value<T: Scalar>(val: &ValuationModel<T>, delta: T) -> Result<T> {
    if !(delta >= T::zero() && delta <= val.horizon) {
        return Err(Error::domain(
            "proposal delay",
            format!("{delta} outside [0, {}]", val.horizon),
        ));
    }
    Ok(val.slope_c * delta)
}

/// The two proposers' delay laws together with protocol and valuation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ScenarioSpec<T: Scalar> {
    pub dist_0: DelayDistribution<T>,
    pub dist_1: DelayDistribution<T>,
    pub params: ProtocolParams<T>,
    pub valuation: ValuationModel<T>,
    #[serde(default)]
    pub quad: QuadratureConfig<T>,
}

impl<T: Scalar> ScenarioSpec<T> {
    pub fn new(
        dist_0: DelayDistribution<T>,
        dist_1: DelayDistribution<T>,
        params: ProtocolParams<T>,
        valuation: ValuationModel<T>,
    ) -> Result<Self> {
        let spec = Self {
            dist_0,
            dist_1,
            params,
            valuation,
            quad: QuadratureConfig::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn homogeneous(
        dist: DelayDistribution<T>,
        params: ProtocolParams<T>,
        valuation: ValuationModel<T>,
    ) -> Result<Self> {
        Self::new(dist, dist, params, valuation)
    }

    pub fn validate(&self) -> Result<()> {
        // Re-run the constructor checks; fields are public.
        DelayDistribution::new(self.dist_0.shape(), self.dist_0.rate())?;
        DelayDistribution::new(self.dist_1.shape(), self.dist_1.rate())?;
        self.params.validate()?;
        self.valuation.validate()?;
        self.quad.validate()?;
        if self.valuation.horizon != self.params.attest_deadline {
            return Err(Error::domain(
                "valuation horizon",
                format!(
                    "{} differs from attestation deadline {}",
                    self.valuation.horizon, self.params.attest_deadline
                ),
            ));
        }
        Ok(())
    }

    pub fn dist(&self, player: Player) -> &DelayDistribution<T> {
        match player {
            Player::P0 => &self.dist_0,
            Player::P1 => &self.dist_1,
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        self.dist_0 == self.dist_1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Player {
    P0,
    P1,
}

impl Player {
    pub fn other(self) -> Self {
        match self {
            Player::P0 => Player::P1,
            Player::P1 => Player::P0,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// `U_i = r1 + r2`: value when both blocks are confirmable plus value when only this one is.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct UtilityBreakdown<T: Scalar> {
    pub r1: T,
    pub r2: T,
    pub total: T,
}

/// Per-attestor probabilities from one player's point of view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReachProbabilities<T> {
    /// Own block reaches an attestor in time.
    pub q_own: T,
    pub q_other: T,
    /// Own block arrives first, both in time.
    pub p_own: T,
    pub p_other: T,
}

/// How the inner vote-split sum is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VoteSum {
    /// Term-by-term binomial sum over the split of common attestors.
    Direct,
    /// Closed form of the same sum.
    #[default]
    Collapsed,
}

/// `ln C(n, k)` for all `k <= n`.
#[derive(Debug, Clone)]
pub struct LnBinomialTable<T> {
    n: usize,
    ln_fact: Vec<T>,
}

impl<T: Scalar> LnBinomialTable<T> {
    pub fn new(n: usize) -> Self {
        let mut ln_fact = Vec::with_capacity(n + 1);
        let mut acc = T::zero();
        ln_fact.push(acc);
        for k in 1..=n {
            acc += T::from_usize_lossy(k).ln();
            ln_fact.push(acc);
        }
        Self { n, ln_fact }
    }

    pub fn ln_choose(&self, n: usize, k: usize) -> T {
        debug_assert!(n <= self.n);
        if k > n {
            return T::neg_infinity();
        }
        self.ln_fact[n] - self.ln_fact[k] - self.ln_fact[n - k]
    }

    /// Number of ways to pick `w` common, `x - w` own-only and `y - w` other-only attestors.
    pub fn ln_e(&self, x: usize, y: usize, w: usize) -> T {
        let n = self.n;
        self.ln_choose(n, w) + self.ln_choose(n - w, x - w) + self.ln_choose(n - x, y - w)
    }
}

/// Expected vote share of the own block among `x + y - w` voters when `w` attestors saw both.
///
/// `sum_z C(w,z) p_own^z p_other^(w-z) (x - w + z) / (x + y - w)`.
pub fn vote_share_sum<T: Scalar>(
    x: usize,
    y: usize,
    w: usize,
    p_own: T,
    p_other: T,
    mode: VoteSum,
) -> T {
    let voters = T::from_usize_lossy(x + y - w);
    let excl = T::from_usize_lossy(x - w);
    match mode {
        VoteSum::Collapsed => {
            let s = p_own + p_other;
            let wi = w as i32;
            let lead = excl * s.powi(wi);
            let common = if w == 0 {
                T::zero()
            } else {
                T::from_usize_lossy(w) * p_own * s.powi(wi - 1)
            };
            (lead + common) / voters
        }
        VoteSum::Direct => {
            let mut acc = T::zero();
            for z in 0..=w {
                let c = ln_binomial::<T>(w, z).exp();
                let weight = c * p_own.powi(z as i32) * p_other.powi((w - z) as i32);
                acc += weight * (excl + T::from_usize_lossy(z)) / voters;
            }
            acc
        }
    }
}

/// Evaluates the closed form from precomputed per-attestor probabilities.
///
/// `v_own`, `v_other` are `v(delta)` of the two blocks; `m_own`, `m_other` the
/// threshold probabilities `M^K`.
#[allow(clippy::too_many_arguments)]
pub fn utility_from_probabilities<T: Scalar>(
    probs: &ReachProbabilities<T>,
    v_own: T,
    v_other: T,
    m_own: T,
    m_other: T,
    k_min: usize,
    table: &LnBinomialTable<T>,
    mode: VoteSum,
) -> UtilityBreakdown<T> {
    let n = table.n;
    let one = T::one();
    let ReachProbabilities {
        q_own,
        q_other,
        p_own,
        p_other,
    } = *probs;
    let only_own = q_own * (one - q_other);
    let only_other = q_other * (one - q_own);
    let neither = (one - q_own) * (one - q_other);

    let mut r1 = T::zero();
    if k_min >= 1 && k_min <= n {
        for x in k_min..=n {
            for y in k_min..=n {
                let w_lo = (x + y).saturating_sub(n);
                for w in w_lo..=x.min(y) {
                    let voters = x + y - w;
                    if voters == 0 {
                        continue;
                    }
                    let weight = table.ln_e(x, y, w).exp()
                        * only_own.powi((x - w) as i32)
                        * only_other.powi((y - w) as i32)
                        * neither.powi((n - voters) as i32);
                    if weight == T::zero() {
                        continue;
                    }
                    r1 += weight * vote_share_sum(x, y, w, p_own, p_other, mode);
                }
            }
        }
    }
    r1 *= one + T::lit(0.5) * (v_own + v_other);
    let r2 = m_own * (one - m_other) * (one + v_own);
    UtilityBreakdown {
        r1,
        r2,
        total: r1 + r2,
    }
}

/// Sum of the first-term probability weights over all `x, y in [0, n]`; equals one when
/// `p_own + p_other = q_own * q_other`.
pub fn total_probability<T: Scalar>(probs: &ReachProbabilities<T>, n: usize) -> T {
    let table = LnBinomialTable::<T>::new(n);
    let one = T::one();
    let only_own = probs.q_own * (one - probs.q_other);
    let only_other = probs.q_other * (one - probs.q_own);
    let neither = (one - probs.q_own) * (one - probs.q_other);
    let both = probs.p_own + probs.p_other;
    let mut acc = T::zero();
    for x in 0..=n {
        for y in 0..=n {
            for w in (x + y).saturating_sub(n)..=x.min(y) {
                acc += table.ln_e(x, y, w).exp()
                    * only_own.powi((x - w) as i32)
                    * only_other.powi((y - w) as i32)
                    * neither.powi((n - (x + y - w)) as i32)
                    * both.powi(w as i32);
            }
        }
    }
    acc
}

/// Expected normalized utility of `player` when the proposers delay by `delta_0`, `delta_1`.
pub fn utility_2prop<T: Scalar>(
    spec: &ScenarioSpec<T>,
    delta_0: T,
    delta_1: T,
    player: Player,
) -> Result<UtilityBreakdown<T>> {
    utility_2prop_with(spec, delta_0, delta_1, player, VoteSum::Collapsed)
}

pub fn utility_2prop_with<T: Scalar>(
    spec: &ScenarioSpec<T>,
    delta_0: T,
    delta_1: T,
    player: Player,
    mode: VoteSum,
) -> Result<UtilityBreakdown<T>> {
    let (d_own, d_other) = match player {
        Player::P0 => (delta_0, delta_1),
        Player::P1 => (delta_1, delta_0),
    };
    let own = spec.dist(player);
    let other = spec.dist(player.other());
    let params = &spec.params;
    let probs = ReachProbabilities {
        q_own: q_reach(own, d_own, params)?,
        q_other: q_reach(other, d_other, params)?,
        p_own: p_first(own, other, d_own, d_other, params, &spec.quad)?,
        p_other: p_first(other, own, d_other, d_own, params, &spec.quad)?,
    };
    let n = params.n_attestors;
    let k = params.threshold;
    let table = LnBinomialTable::new(n);
    Ok(utility_from_probabilities(
        &probs,
        block_value(&spec.valuation, d_own)?,
        block_value(&spec.valuation, d_other)?,
        m_threshold(probs.q_own, n, k)?,
        m_threshold(probs.q_other, n, k)?,
        k,
        &table,
        mode,
    ))
}

/// Single-proposer objective `(1 + v(delta)) * M^K(q(delta))`.
pub fn utility_xi<T: Scalar, D: DelayDensity<T>>(
    dist: &D,
    delta: T,
    params: &ProtocolParams<T>,
    val: &ValuationModel<T>,
) -> Result<T> {
    let q = q_reach(dist, delta, params)?;
    let m = m_threshold(q, params.n_attestors, params.threshold)?;
    Ok((T::one() + block_value(val, delta)?) * m)
}

/// Success probability of a colluding timing attack when both proposers must be captured.
pub fn collusion_probability<T: Scalar>(p_single: T) -> Result<T> {
    if !(p_single >= T::zero() && p_single <= T::one()) {
        return Err(Error::domain("collusion probability", format!("{p_single}")));
    }
    Ok(p_single * p_single)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(shape1: f64, rate1: f64) -> ScenarioSpec<f64> {
        ScenarioSpec::new(
            DelayDistribution::new(2.0, 2.0).unwrap(),
            DelayDistribution::new(shape1, rate1).unwrap(),
            ProtocolParams::experiment(),
            ValuationModel::default(),
        )
        .unwrap()
    }

    #[test]
    fn block_value_examples() {
        let v = ValuationModel::<f64>::default();
        assert_eq!(block_value(&v, 0.0).unwrap(), 0.0);
        assert_eq!(block_value(&v, 2.25).unwrap(), 0.5625);
        assert_eq!(1.0 + block_value(&v, 2.25).unwrap(), 1.5625);
        assert_eq!(block_value(&v, 4.0).unwrap(), 1.0);
        assert!(block_value(&v, 4.5).is_err());
        assert!(block_value(&v, -0.1).is_err());
    }

    #[test]
    fn both_at_deadline_is_worthless() {
        let s = spec(2.0, 0.2);
        for p in [Player::P0, Player::P1] {
            let u = utility_2prop(&s, 4.0, 4.0, p).unwrap();
            assert_eq!(u.total, 0.0);
        }
    }

    #[test]
    fn homogeneous_symmetry() {
        let s = spec(2.0, 2.0);
        for &(a, b) in &[(0.0, 0.0), (0.5, 1.7), (2.3, 0.05), (3.9, 1.0)] {
            let u0 = utility_2prop(&s, a, b, Player::P0).unwrap();
            let u1 = utility_2prop(&s, b, a, Player::P1).unwrap();
            assert!((u0.total - u1.total).abs() < 1e-12);
        }
    }

    #[test]
    fn breakdown_sums() {
        let s = spec(2.0, 0.2);
        let u = utility_2prop(&s, 1.0, 0.5, Player::P0).unwrap();
        assert_eq!(u.total, u.r1 + u.r2);
        assert!(u.r1 >= 0.0 && u.r2 >= 0.0);
    }

    #[test]
    fn direct_and_collapsed_agree() {
        let s = spec(1.5, 0.5);
        for p in [Player::P0, Player::P1] {
            let a = utility_2prop_with(&s, 0.7, 1.2, p, VoteSum::Direct).unwrap();
            let b = utility_2prop_with(&s, 0.7, 1.2, p, VoteSum::Collapsed).unwrap();
            assert!((a.total - b.total).abs() < 1e-12);
        }
    }

    #[test]
    fn xi_examples() {
        let d = DelayDistribution::new(2.0, 2.0).unwrap();
        let p = ProtocolParams::experiment();
        let v = ValuationModel::default();
        assert_eq!(utility_xi(&d, 4.0, &p, &v).unwrap(), 0.0);
        let flat = ValuationModel::new(0.0, 4.0).unwrap();
        let m0 = utility_xi(&d, 0.0, &p, &flat).unwrap();
        let m = m_threshold(q_reach(&d, 0.0, &p).unwrap(), 12, 9).unwrap();
        assert_eq!(m0, m);
        for k in 1..=80 {
            assert!(utility_xi(&d, k as f64 * 0.05, &p, &flat).unwrap() <= m0);
        }
    }

    #[test]
    fn collusion_examples() {
        assert_eq!(collusion_probability(0.0_f64).unwrap(), 0.0);
        assert_eq!(collusion_probability(1.0_f64).unwrap(), 1.0);
        assert_eq!(collusion_probability(0.3_f64).unwrap(), 0.3 * 0.3);
        assert!(collusion_probability(1.5_f64).is_err());
    }

    #[test]
    fn horizon_must_match_deadline() {
        let d = DelayDistribution::new(2.0, 2.0).unwrap();
        let v = ValuationModel::new(0.25, 5.0).unwrap();
        assert!(ScenarioSpec::homogeneous(d, ProtocolParams::experiment(), v).is_err());
    }
}
