//! Event-level Monte-Carlo simulation of one slot: per-attestor arrivals, attestations
//! and order-of-reception votes, confirmation with the hash die roll, reward shares.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::delay_model::DelayDistribution;
use crate::error::{Error, Result};
use crate::payoff::{block_value, Player, ScenarioSpec};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimMode {
    /// Two competing proposers.
    #[default]
    TwoProp,
    /// Single proposer (player 0 only).
    XiBaseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SlotInputs<T: Scalar> {
    pub spec: ScenarioSpec<T>,
    pub delta_0: T,
    pub delta_1: T,
    pub seed: u64,
    pub mode: SimMode,
}

impl<T: Scalar> SlotInputs<T> {
    pub fn new(spec: ScenarioSpec<T>, delta_0: T, delta_1: T, seed: u64, mode: SimMode) -> Result<Self> {
        spec.params.check_delay(delta_0)?;
        spec.params.check_delay(delta_1)?;
        Ok(Self {
            spec,
            delta_0,
            delta_1,
            seed,
            mode,
        })
    }
}

/// What one attestor saw by the attestation deadline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AttestorObservation<T: Scalar> {
    pub arrival_0: Option<T>,
    pub arrival_1: Option<T>,
    /// The block this attestor votes for; `None` means an empty attestation.
    pub first_block: Option<Player>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SlotOutcome<T: Scalar> {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
    pub confirmed: Option<Player>,
    pub r0: T,
    pub r1: T,
    /// `r_i * (1 + v(delta_confirmed))`.
    pub value0: T,
    pub value1: T,
}

/// 32-byte block root fed to the die roll.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockCommitment {
    pub root: [u8; 32],
}

impl BlockCommitment {
    /// `H(seed || slot || proposer)`, all big-endian `u64`.
    pub fn derive(seed: u64, slot: u64, proposer: u64) -> Self {
        let mut h = Sha256::new();
        h.update(seed.to_be_bytes());
        h.update(slot.to_be_bytes());
        h.update(proposer.to_be_bytes());
        Self { root: sha256(&h.finalize()) }
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.root)
    }
}

fn sha256(data: &[u8]) -> [u8; 32] {
    let mut out = [0u8; 32];
    out.copy_from_slice(&Sha256::digest(data));
    out
}

fn hamming(a: &[u8; 32], b: &[u8; 32]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

/// The combined hash `H(H(root_0) || ... || H(root_{k-1}))`.
pub fn combined_hash(roots: &[BlockCommitment]) -> [u8; 32] {
    let mut h = Sha256::new();
    for r in roots {
        h.update(sha256(&r.root));
    }
    sha256(&h.finalize())
}

/// Selects one of `roots` as the block whose hashed root is nearest (Hamming) to the
/// combined hash. Equal distances are resolved by `H(combined) mod #tied`.
pub fn die_roll(roots: &[BlockCommitment]) -> Result<usize> {
    if roots.is_empty() {
        return Err(Error::domain("die roll", "no block commitments"));
    }
    let combined = combined_hash(roots);
    let dist: Vec<u32> = roots
        .iter()
        .map(|r| hamming(&combined, &sha256(&r.root)))
        .collect();
    let best = *dist.iter().min().expect("non-empty");
    let tied: Vec<usize> = (0..roots.len()).filter(|&d| dist[d] == best).collect();
    if tied.len() == 1 {
        return Ok(tied[0]);
    }
    let salt = sha256(&combined);
    let word = u64::from_be_bytes(salt[..8].try_into().expect("8 bytes"));
    Ok(tied[(word % tied.len() as u64) as usize])
}

/// Vote-proportional reward fractions.
pub fn reward_share<T: Scalar>(x0: usize, x1: usize, y0: usize, y1: usize, k: usize) -> Result<(T, T)> {
    if y0 > x0 || y1 > x1 {
        return Err(Error::domain(
            "vote counts",
            format!("votes exceed attestations: x=({x0},{x1}) y=({y0},{y1})"),
        ));
    }
    let (z, one) = (T::zero(), T::one());
    Ok(match (x0 >= k, x1 >= k) {
        (true, false) => (one, z),
        (false, true) => (z, one),
        (false, false) => (z, z),
        (true, true) if y0 + y1 == 0 => (T::lit(0.5), T::lit(0.5)),
        (true, true) => {
            let total = T::from_usize_lossy(y0 + y1);
            (T::from_usize_lossy(y0) / total, T::from_usize_lossy(y1) / total)
        }
    })
}

fn sampler<T: Scalar>(dist: &DelayDistribution<T>) -> Gamma<f64> {
    Gamma::new(dist.shape().as_f64(), 1.0 / dist.rate().as_f64()).expect("validated gamma parameters")
}

/// Simulates slot `slot` of the stream seeded by `inputs.seed`.
pub fn run_slot_indexed<T: Scalar>(inputs: &SlotInputs<T>, slot: u64) -> SlotOutcome<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(inputs.seed);
    rng.set_stream(slot);
    let spec = &inputs.spec;
    let tau1 = spec.params.tau1();
    let k = spec.params.threshold;
    let two = inputs.mode == SimMode::TwoProp;
    let g0 = sampler(&spec.dist_0);
    let g1 = sampler(&spec.dist_1);

    let (mut x0, mut x1, mut y0, mut y1) = (0, 0, 0, 0);
    for _ in 0..spec.params.n_attestors {
        let obs = observe(inputs, &g0, &g1, two, tau1, &mut rng);
        x0 += obs.arrival_0.is_some() as usize;
        x1 += obs.arrival_1.is_some() as usize;
        match obs.first_block {
            Some(Player::P0) => y0 += 1,
            Some(Player::P1) => y1 += 1,
            None => {}
        }
    }

    let confirmed = match (x0 >= k, x1 >= k) {
        (true, true) => {
            let roots = [
                BlockCommitment::derive(inputs.seed, slot, 0),
                BlockCommitment::derive(inputs.seed, slot, 1),
            ];
            let pick = die_roll(&roots).expect("two commitments");
            Some(if pick == 0 { Player::P0 } else { Player::P1 })
        }
        (true, false) => Some(Player::P0),
        (false, true) => Some(Player::P1),
        (false, false) => None,
    };
    let (r0, r1) = reward_share::<T>(x0, x1, y0, y1, k).expect("tallies are consistent");
    let worth = match confirmed {
        Some(Player::P0) => T::one() + block_value(&spec.valuation, inputs.delta_0).expect("validated delay"),
        Some(Player::P1) => T::one() + block_value(&spec.valuation, inputs.delta_1).expect("validated delay"),
        None => T::zero(),
    };
    SlotOutcome {
        x0,
        x1,
        y0,
        y1,
        confirmed,
        r0,
        r1,
        value0: r0 * worth,
        value1: r1 * worth,
    }
}

fn observe<T: Scalar>(
    inputs: &SlotInputs<T>,
    g0: &Gamma<f64>,
    g1: &Gamma<f64>,
    two: bool,
    tau1: T,
    rng: &mut ChaCha8Rng,
) -> AttestorObservation<T> {
    let t0 = inputs.delta_0 + T::lit(g0.sample(rng));
    let arrival_0 = (t0 <= tau1).then_some(t0);
    let arrival_1 = if two {
        let t1 = inputs.delta_1 + T::lit(g1.sample(rng));
        (t1 <= tau1).then_some(t1)
    } else {
        None
    };
    let first_block = match (arrival_0, arrival_1) {
        (Some(a), Some(b)) if a < b => Some(Player::P0),
        (Some(a), Some(b)) if b < a => Some(Player::P1),
        (Some(_), Some(_)) => Some(if rng.random::<bool>() { Player::P0 } else { Player::P1 }),
        (Some(_), None) => Some(Player::P0),
        (None, Some(_)) => Some(Player::P1),
        (None, None) => None,
    };
    AttestorObservation {
        arrival_0,
        arrival_1,
        first_block,
    }
}

/// The attestor-level observations of slot `slot`, in attestor order.
pub fn observations<T: Scalar>(inputs: &SlotInputs<T>, slot: u64) -> Vec<AttestorObservation<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(inputs.seed);
    rng.set_stream(slot);
    let g0 = sampler(&inputs.spec.dist_0);
    let g1 = sampler(&inputs.spec.dist_1);
    let two = inputs.mode == SimMode::TwoProp;
    let tau1 = inputs.spec.params.tau1();
    (0..inputs.spec.params.n_attestors)
        .map(|_| observe(inputs, &g0, &g1, two, tau1, &mut rng))
        .collect()
}

pub fn run_slot<T: Scalar>(inputs: &SlotInputs<T>) -> SlotOutcome<T> {
    run_slot_indexed(inputs, 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct MonteCarloEstimate<T: Scalar> {
    pub mean_0: T,
    pub mean_1: T,
    pub stderr_0: T,
    pub stderr_1: T,
    pub trials: usize,
    /// False for a single trial, where the standard errors are reported as zero.
    pub stderr_defined: bool,
}

/// Averages realized normalized rewards over `trials` independent slots.
pub fn monte_carlo_utility<T: Scalar>(
    spec: &ScenarioSpec<T>,
    delta_0: T,
    delta_1: T,
    trials: usize,
    seed: u64,
    mode: SimMode,
) -> Result<MonteCarloEstimate<T>> {
    if trials == 0 {
        return Err(Error::domain("trials", "need at least one trial"));
    }
    let inputs = SlotInputs::new(*spec, delta_0, delta_1, seed, mode)?;
    let values: Vec<(f64, f64)> = (0..trials as u64)
        .into_par_iter()
        .map(|slot| {
            let o = run_slot_indexed(&inputs, slot);
            (o.value0.as_f64(), o.value1.as_f64())
        })
        .collect();
    let (m0, s0) = mean_stderr(values.iter().map(|v| v.0), trials);
    let (m1, s1) = mean_stderr(values.iter().map(|v| v.1), trials);
    Ok(MonteCarloEstimate {
        mean_0: T::lit(m0),
        mean_1: T::lit(m1),
        stderr_0: T::lit(s0),
        stderr_1: T::lit(s1),
        trials,
        stderr_defined: trials > 1,
    })
}

fn mean_stderr(xs: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = xs.clone().sum::<f64>() / nf;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (nf - 1.0);
    (mean, (var / nf).sqrt())
}

/// One JSON-lines trace record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SlotTrace<T: Scalar> {
    pub slot: u64,
    pub seed: u64,
    pub mode: SimMode,
    pub delta_0: T,
    pub delta_1: T,
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
    pub confirmed: Option<Player>,
    pub r0: T,
    pub r1: T,
    pub value0: T,
    pub value1: T,
    /// Lowercase hex block roots.
    pub roots: [String; 2],
    /// Lowercase hex combined hash, present when the die roll decided the slot.
    pub die_hash: Option<String>,
}

pub fn trace_record<T: Scalar>(inputs: &SlotInputs<T>, slot: u64) -> SlotTrace<T> {
    let o = run_slot_indexed(inputs, slot);
    let roots = [
        BlockCommitment::derive(inputs.seed, slot, 0),
        BlockCommitment::derive(inputs.seed, slot, 1),
    ];
    let k = inputs.spec.params.threshold;
    let rolled = o.x0 >= k && o.x1 >= k;
    SlotTrace {
        slot,
        seed: inputs.seed,
        mode: inputs.mode,
        delta_0: inputs.delta_0,
        delta_1: inputs.delta_1,
        x0: o.x0,
        x1: o.x1,
        y0: o.y0,
        y1: o.y1,
        confirmed: o.confirmed,
        r0: o.r0,
        r1: o.r1,
        value0: o.value0,
        value1: o.value1,
        roots: [roots[0].to_hex(), roots[1].to_hex()],
        die_hash: rolled.then(|| hex::encode(combined_hash(&roots))),
    }
}

/// Writes `slots` trace records as JSON lines.
pub fn write_traces<T: Scalar, W: Write>(inputs: &SlotInputs<T>, slots: u64, mut out: W) -> Result<()> {
    for slot in 0..slots {
        serde_json::to_writer(&mut out, &trace_record(inputs, slot))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay_model::{DelayDistribution, MeanScaling, ProtocolParams};
    use crate::payoff::ValuationModel;

    fn fig5() -> ScenarioSpec<f64> {
        let d0 = DelayDistribution::new(2.0, 2.0).unwrap();
        ScenarioSpec::new(
            d0,
            d0.scaled(10.0, MeanScaling::FixedShape).unwrap(),
            ProtocolParams::experiment(),
            ValuationModel::default(),
        )
        .unwrap()
    }

    #[test]
    fn reward_share_cases() {
        assert_eq!(reward_share::<f64>(10, 3, 7, 3, 9).unwrap(), (1.0, 0.0));
        assert_eq!(reward_share::<f64>(10, 10, 5, 5, 9).unwrap(), (0.5, 0.5));
        assert_eq!(reward_share::<f64>(3, 3, 2, 1, 9).unwrap(), (0.0, 0.0));
        assert_eq!(reward_share::<f64>(9, 9, 0, 0, 9).unwrap(), (0.5, 0.5));
        assert_eq!(reward_share::<f64>(12, 9, 9, 3, 9).unwrap(), (0.75, 0.25));
        assert!(reward_share::<f64>(3, 3, 4, 0, 9).is_err());
    }

    #[test]
    fn die_roll_cases() {
        assert!(die_roll(&[]).is_err());
        let r = BlockCommitment { root: [7u8; 32] };
        assert_eq!(die_roll(&[r]).unwrap(), 0);
        // identical roots are always tied; the salt decides deterministically
        let pick = die_roll(&[r, r]).unwrap();
        assert!(pick < 2);
        assert_eq!(pick, die_roll(&[r, r]).unwrap());
    }

    #[test]
    fn sha256_is_fips() {
        assert_eq!(
            hex::encode(sha256(b"abc")),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn empty_committee() {
        let mut spec = fig5();
        spec.params.n_attestors = 0;
        spec.params.threshold = 1;
        let o = run_slot(&SlotInputs::new(spec, 0.0, 0.0, 1, SimMode::TwoProp).unwrap());
        assert_eq!((o.x0, o.x1, o.y0, o.y1), (0, 0, 0, 0));
        assert_eq!(o.confirmed, None);
    }

    #[test]
    fn both_at_deadline_never_arrive() {
        let inputs = SlotInputs::new(fig5(), 4.0, 4.0, 3, SimMode::TwoProp).unwrap();
        for slot in 0..50 {
            let o = run_slot_indexed(&inputs, slot);
            assert_eq!((o.x0, o.x1), (0, 0));
            assert_eq!(o.confirmed, None);
            assert_eq!((o.r0, o.r1), (0.0, 0.0));
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let inputs = SlotInputs::new(fig5(), 1.0, 0.5, 99, SimMode::TwoProp).unwrap();
        let a = serde_json::to_string(&run_slot_indexed(&inputs, 17)).unwrap();
        let b = serde_json::to_string(&run_slot_indexed(&inputs, 17)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn observations_agree_with_tallies() {
        let inputs = SlotInputs::new(fig5(), 0.3, 0.0, 5, SimMode::TwoProp).unwrap();
        for slot in 0..20 {
            let obs = observations(&inputs, slot);
            let o = run_slot_indexed(&inputs, slot);
            assert_eq!(obs.iter().filter(|a| a.arrival_0.is_some()).count(), o.x0);
            assert_eq!(obs.iter().filter(|a| a.first_block == Some(Player::P1)).count(), o.y1);
            for a in &obs {
                if let Some(p) = a.first_block {
                    let arrived = match p {
                        Player::P0 => a.arrival_0,
                        Player::P1 => a.arrival_1,
                    };
                    assert!(arrived.is_some());
                }
            }
        }
    }

    #[test]
    fn single_trial_estimate() {
        let spec = fig5();
        let est = monte_carlo_utility(&spec, 0.0, 0.0, 1, 11, SimMode::TwoProp).unwrap();
        let o = run_slot_indexed(&SlotInputs::new(spec, 0.0, 0.0, 11, SimMode::TwoProp).unwrap(), 0);
        assert_eq!(est.mean_0, o.value0);
        assert_eq!(est.stderr_0, 0.0);
        assert!(!est.stderr_defined);
        assert!(monte_carlo_utility(&spec, 0.0, 0.0, 0, 11, SimMode::TwoProp).is_err());
        let zero = monte_carlo_utility(&spec, 4.0, 4.0, 200, 11, SimMode::TwoProp).unwrap();
        assert_eq!((zero.mean_0, zero.mean_1), (0.0, 0.0));
    }

    #[test]
    fn trace_lines_are_hex() {
        let inputs = SlotInputs::new(fig5(), 0.0, 0.0, 2, SimMode::TwoProp).unwrap();
        let mut buf = Vec::new();
        write_traces(&inputs, 3, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        let rec: SlotTrace<f64> = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(rec.roots[0].len(), 64);
        assert!(rec.roots[0].chars().all(|c| c.is_ascii_digit() || ('a'..='f').contains(&c)));
    }
}
