//! Brute-force references shared by the integration suites.
#![allow(dead_code)]

use twoprop::payoff::ReachProbabilities;

/// Outcome of one attestor: both with own first, both with other first, only own,
/// only other, neither.
pub fn enumerate_utility(probs: &ReachProbabilities<f64>, n: usize, k: usize, v_own: f64, v_other: f64) -> f64 {
    let ReachProbabilities { q_own, q_other, p_own, p_other } = *probs;
    let weights = [p_own, p_other, q_own * (1.0 - q_other), q_other * (1.0 - q_own), (1.0 - q_own) * (1.0 - q_other)];
    let mut total = 0.0;
    let outcomes = 5usize.pow(n as u32);
    for code in 0..outcomes {
        let mut c = code;
        let mut counts = [0usize; 5];
        let mut prob = 1.0;
        for _ in 0..n {
            counts[c % 5] += 1;
            prob *= weights[c % 5];
            c /= 5;
        }
        let x = counts[0] + counts[1] + counts[2];
        let y = counts[0] + counts[1] + counts[3];
        let votes_own = counts[0] + counts[2];
        let voters = votes_own + counts[1] + counts[3];
        let reward = if x >= k && y >= k {
            votes_own as f64 / voters as f64 * (1.0 + 0.5 * (v_own + v_other))
        } else if x >= k {
            1.0 + v_own
        } else {
            0.0
        };
        total += prob * reward;
    }
    total
}

/// Chi-square statistic of observed counts against a uniform expectation.
pub fn chi_square_uniform(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum()
}
