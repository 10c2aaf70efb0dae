//! Closed forms checked against brute-force enumeration and independent quadrature.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use twoprop::delay_model::{cdf, m_threshold, p_first, pdf, q_reach, restricted_l2};
use twoprop::payoff::{
    block_value, total_probability, utility_2prop, utility_2prop_with, utility_xi, vote_share_sum, Player,
    ReachProbabilities, VoteSum,
};
mod common;

use common::enumerate_utility;
use twoprop::{DelayDistribution, ProtocolParams, QuadratureConfig, ScenarioSpec, ValuationModel};

// Gamma function for shapes in {k/2}: recurrence from Γ(1) = 1 and Γ(1/2) = √π.
fn gamma_half_integer(a: f64) -> f64 {
    let twice = (2.0 * a).round() as i64;
    assert!((2.0 * a - twice as f64).abs() < 1e-12 && twice > 0);
    let (mut g, mut x) = if twice % 2 == 0 { (1.0, 1.0) } else { (std::f64::consts::PI.sqrt(), 0.5) };
    while x < a - 1e-12 {
        g *= x;
        x += 1.0;
    }
    g
}

fn oracle_pdf(shape: f64, rate: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    rate.powf(shape) * x.powf(shape - 1.0) * (-rate * x).exp() / gamma_half_integer(shape)
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

// x = t^2 removes the endpoint singularity of shapes below 2
fn oracle_cdf(shape: f64, rate: f64, x: f64) -> f64 {
    simpson(|t| oracle_pdf(shape, rate, t * t) * 2.0 * t, 0.0, x.sqrt(), 4000)
}

/// Double Simpson integral for the first-arrival probability, split at the kink.
fn oracle_p_first(si: (f64, f64), sj: (f64, f64), di: f64, dj: f64, tau1: f64) -> f64 {
    let upper = tau1 - di;
    let inner = |x: f64| {
        let lo = (x + di - dj).max(0.0);
        let hi = tau1 - dj;
        if hi <= lo {
            0.0
        } else {
            simpson(|y| oracle_pdf(sj.0, sj.1, y), lo, hi, 400)
        }
    };
    let f = |x: f64| oracle_pdf(si.0, si.1, x) * inner(x);
    let kink = dj - di;
    if kink > 0.0 && kink < upper {
        simpson(f, 0.0, kink, 600) + simpson(f, kink, upper, 600)
    } else {
        simpson(f, 0.0, upper, 1200)
    }
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[test]
fn pdf_and_cdf_against_closed_forms() {
    let d = DelayDistribution::new(2.0, 2.0).unwrap();
    assert!((pdf(&d, 1.0) - 4.0 * (-2.0_f64).exp()).abs() < 1e-15);
    assert_eq!(pdf(&d, -1.0), 0.0);
    let e = DelayDistribution::new(1.0, 1.0).unwrap();
    assert_eq!(pdf(&e, 0.0), 1.0);
    assert!((cdf(&d, 4.0) - (1.0 - 9.0 * (-8.0_f64).exp())).abs() < 1e-14);
    assert!(cdf(&DelayDistribution::new(1.5, 5.0).unwrap(), 1e6) == 1.0);
    for &(a, l) in &[(1.5, 5.0), (2.0, 2.0), (2.5, 0.7), (3.0, 0.394)] {
        let dist = DelayDistribution::new(a, l).unwrap();
        for &x in &[0.3, 1.0, 2.2, 4.0] {
            let want = oracle_cdf(a, l, x);
            let got = cdf(&dist, x);
            assert!((got - want).abs() < 2e-8, "a={a} l={l} x={x}: {got} vs {want}");
        }
    }
}

#[test]
fn cdf_derivative_is_pdf() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = 1e-5;
    for _ in 0..50 {
        let d = DelayDistribution::new(rng.random_range(1.0..6.0), rng.random_range(0.2..5.0)).unwrap();
        let x = rng.random_range(0.05..6.0);
        let fd = (cdf(&d, x + h) - cdf(&d, x - h)) / (2.0 * h);
        assert!((fd - pdf(&d, x)).abs() < 1e-5, "{d:?} x={x}");
    }
}

#[test]
fn q_reach_is_shifted_cdf() {
    let p = ProtocolParams::experiment();
    let d = DelayDistribution::new(1.5, 2.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let delta = rng.random_range(0.0..4.0);
        assert_eq!(q_reach(&d, delta, &p).unwrap(), cdf(&d, 4.0 - delta));
    }
}

#[test]
fn p_first_against_double_quadrature() {
    let p = ProtocolParams::experiment();
    let quad = QuadratureConfig::default();
    let cases = [
        ((2.0, 2.0), (2.0, 0.2), 0.0, 0.0),
        ((2.0, 2.0), (2.0, 0.2), 2.3, 0.0),
        ((2.0, 2.0), (2.0, 2.0), 1.0, 1.0),
        ((3.0, 5.0), (2.5, 1.0), 0.5, 1.7),
        ((2.5, 0.5), (3.0, 2.0), 3.1, 0.2),
    ];
    for (si, sj, di, dj) in cases {
        let a = DelayDistribution::new(si.0, si.1).unwrap();
        let b = DelayDistribution::new(sj.0, sj.1).unwrap();
        let got = p_first(&a, &b, di, dj, &p, &quad).unwrap();
        let want = oracle_p_first(si, sj, di, dj, 4.0);
        assert!((got - want).abs() < 1e-7, "{si:?} {sj:?} {di} {dj}: {got} vs {want}");
    }
}

#[test]
fn identical_laws_split_evenly() {
    let p = ProtocolParams::experiment();
    let quad = QuadratureConfig::default();
    let d = DelayDistribution::new(2.0, 2.0).unwrap();
    for &delta in &[0.0, 1.3, 3.9] {
        let q = q_reach(&d, delta, &p).unwrap();
        let pf = p_first(&d, &d, delta, delta, &p, &quad).unwrap();
        assert!((pf - q * q / 2.0).abs() < 1e-9);
    }
    assert_eq!(p_first(&d, &d, 4.0, 0.0, &p, &quad).unwrap(), 0.0);
}

#[test]
fn m_threshold_equals_subset_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in 1..=6usize {
        for k in 1..=n {
            let q: f64 = rng.random();
            let mut want = 0.0;
            for mask in 0u32..(1 << n) {
                let hits = mask.count_ones() as usize;
                if hits >= k {
                    want += q.powi(hits as i32) * (1.0 - q).powi((n - hits) as i32);
                }
            }
            let got = m_threshold(q, n, k).unwrap();
            assert!((got - want).abs() < 1e-13, "n={n} k={k} q={q}");
        }
    }
    // the four-term sum for n = 12, K = 9
    let q = 0.9_f64;
    let direct: f64 = (9..=12).map(|k| binom(12, k) * q.powi(k as i32) * (1.0 - q).powi(12 - k as i32)).sum();
    assert!((m_threshold(q, 12, 9).unwrap() - direct).abs() < 1e-14);
}

#[test]
fn m_threshold_monotone() {
    let n = 127;
    let mut prev = 0.0;
    for i in 0..=100 {
        let q = i as f64 / 100.0;
        let m = m_threshold(q, n, 85).unwrap();
        assert!(m >= prev - 1e-15);
        prev = m;
    }
    for k in 1..n {
        assert!(m_threshold(0.7, n, k).unwrap() >= m_threshold(0.7, n, k + 1).unwrap());
    }
    assert!(m_threshold(0.7, n, 1).unwrap() >= m_threshold(0.7, n, n).unwrap());
}

#[test]
fn restricted_l2_against_simpson() {
    let quad = QuadratureConfig::default();
    let d = DelayDistribution::new(2.0, 2.0).unwrap();
    let got = restricted_l2(&d, 0.0, 4.0, &quad).unwrap();
    let want = simpson(|x| oracle_pdf(2.0, 2.0, x).powi(2), 0.0, 4.0, 4000).sqrt();
    assert!((got - want).abs() < 1e-9);
    assert!(got >= 1.0 / (2.0 * 2.0));
}

#[test]
fn closed_form_matches_five_outcome_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0_f64;
    for case in 0..20 {
        let n = 2 + case % 4;
        let k = rng.random_range(1..=n);
        let d0 = DelayDistribution::new(rng.random_range(1.0..4.0), rng.random_range(0.3..4.0)).unwrap();
        let d1 = DelayDistribution::new(rng.random_range(1.0..4.0), rng.random_range(0.3..4.0)).unwrap();
        let params = ProtocolParams::with_committee(n, k);
        let val = ValuationModel::new(rng.random_range(0.0..0.5), 4.0).unwrap();
        let mut spec = ScenarioSpec::new(d0, d1, params, val).unwrap();
        // first-arrival probabilities must satisfy p_own + p_other = q_own q_other well
        // below the comparison tolerance for the enumeration to be exact
        spec.quad = QuadratureConfig { abs_tol: 1e-14, rel_tol: 1e-13, max_subdivisions: 5000 };
        let (a, b) = (rng.random_range(0.0..4.0), rng.random_range(0.0..4.0));
        for player in [Player::P0, Player::P1] {
            let (own, other, d_own, d_other) = match player {
                Player::P0 => (&d0, &d1, a, b),
                Player::P1 => (&d1, &d0, b, a),
            };
            let probs = ReachProbabilities {
                q_own: q_reach(own, d_own, &params).unwrap(),
                q_other: q_reach(other, d_other, &params).unwrap(),
                p_own: p_first(own, other, d_own, d_other, &params, &spec.quad).unwrap(),
                p_other: p_first(other, own, d_other, d_own, &params, &spec.quad).unwrap(),
            };
            let want = enumerate_utility(
                &probs,
                n,
                k,
                block_value(&val, d_own).unwrap(),
                block_value(&val, d_other).unwrap(),
            );
            let got = utility_2prop(&spec, a, b, player).unwrap().total;
            worst = worst.max((got - want).abs());
        }
    }
    assert!(worst < 1e-9, "max deviation {worst}");
}

#[test]
fn weights_are_complete() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let (q_own, q_other): (f64, f64) = (rng.random(), rng.random());
        let s: f64 = rng.random();
        let both = q_own * q_other;
        let probs = ReachProbabilities { q_own, q_other, p_own: s * both, p_other: (1.0 - s) * both };
        for n in [1, 5, 12, 40] {
            let t = total_probability(&probs, n);
            assert!((t - 1.0).abs() < 1e-10, "n={n} total={t}");
        }
    }
}

#[test]
fn collapsed_vote_sum_equals_direct() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..100 {
        let n = rng.random_range(1..=40usize);
        let x = rng.random_range(1..=n);
        let y = rng.random_range(1..=n);
        let w = rng.random_range((x + y).saturating_sub(n)..=x.min(y));
        let (pa, pb): (f64, f64) = (rng.random(), rng.random());
        let (pa, pb) = (pa * 0.5, pb * 0.5);
        let fast = vote_share_sum(x, y, w, pa, pb, VoteSum::Collapsed);
        let slow = vote_share_sum(x, y, w, pa, pb, VoteSum::Direct);
        assert!((fast - slow).abs() < 1e-12, "x={x} y={y} w={w}: {fast} vs {slow}");
    }
    let d0 = DelayDistribution::new(2.0, 2.0).unwrap();
    let d1 = DelayDistribution::new(2.0, 0.2).unwrap();
    let spec = ScenarioSpec::new(d0, d1, ProtocolParams::experiment(), ValuationModel::default()).unwrap();
    for (a, b) in [(0.0, 0.0), (2.25, 0.0), (1.0, 3.0)] {
        let u = utility_2prop_with(&spec, a, b, Player::P0, VoteSum::Collapsed).unwrap();
        let v = utility_2prop_with(&spec, a, b, Player::P0, VoteSum::Direct).unwrap();
        assert!((u.total - v.total).abs() < 1e-12);
    }
}

#[test]
fn homogeneous_symmetry() {
    let d = DelayDistribution::new(2.0, 2.0 / 0.66).unwrap();
    let spec = ScenarioSpec::homogeneous(d, ProtocolParams::experiment(), ValuationModel::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10 {
        let (a, b) = (rng.random_range(0.0..4.0), rng.random_range(0.0..4.0));
        let u0 = utility_2prop(&spec, a, b, Player::P0).unwrap().total;
        let u1 = utility_2prop(&spec, b, a, Player::P1).unwrap().total;
        assert!((u0 - u1).abs() < 1e-12);
    }
}

#[test]
fn xi_is_value_times_threshold() {
    let d = DelayDistribution::new(2.0, 2.0).unwrap();
    let p = ProtocolParams::experiment();
    let val = ValuationModel::default();
    for i in 0..=80 {
        let delta = i as f64 * 0.05;
        let delta = delta.min(4.0);
        let q = q_reach(&d, delta, &p).unwrap();
        let want = (1.0 + 0.25 * delta) * m_threshold(q, 12, 9).unwrap();
        assert_eq!(utility_xi(&d, delta, &p, &val).unwrap(), want);
    }
    let flat = ValuationModel::new(0.0, 4.0).unwrap();
    assert_eq!(utility_xi(&d, 0.0, &p, &flat).unwrap(), m_threshold(q_reach(&d, 0.0, &p).unwrap(), 12, 9).unwrap());
}

#[test]
fn single_precision_tracks_double() {
    use twoprop::{delay_model, payoff};
    let d0 = delay_model::DelayDistribution::<f32>::new(2.0, 2.0).unwrap();
    let d1 = delay_model::DelayDistribution::<f32>::new(2.0, 0.2).unwrap();
    let spec32 = payoff::ScenarioSpec::new(
        d0,
        d1,
        delay_model::ProtocolParams::<f32>::experiment(),
        payoff::ValuationModel::<f32>::default(),
    )
    .unwrap();
    let spec64 = ScenarioSpec::new(
        DelayDistribution::new(2.0, 2.0).unwrap(),
        DelayDistribution::new(2.0, 0.2).unwrap(),
        ProtocolParams::experiment(),
        ValuationModel::default(),
    )
    .unwrap();
    for (a, b) in [(0.0, 0.0), (2.25, 0.0), (1.0, 1.0)] {
        let u32 = utility_2prop(&spec32, a as f32, b as f32, Player::P0).unwrap().total;
        let u64 = utility_2prop(&spec64, a, b, Player::P0).unwrap().total;
        assert!((u32 as f64 - u64).abs() < 1e-4, "({a}, {b}): {u32} vs {u64}");
    }
}
