//! Log-gamma, the regularized incomplete gamma function and binomial tails.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

const MAX_ITER: usize = 1000;

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma<T: Scalar>(x: T) -> T {
    let half = T::lit(0.5);
    if x < half {
        // reflection
        let pi = T::PI();
        return (pi / (pi * x).sin()).ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut acc = T::lit(LANCZOS_COEF[0]);
    for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += T::lit(c) / (x + T::from_usize_lossy(i));
    }
    let t = x + T::lit(LANCZOS_G) + half;
    half * (T::lit(2.0) * T::PI()).ln() + (x + half) * t.ln() - t + acc.ln()
}

/// `ln C(n, k)`; `-inf` when `k > n`.
pub fn ln_binomial<T: Scalar>(n: usize, k: usize) -> T {
    if k > n {
        return T::neg_infinity();
    }
    if k == 0 || k == n {
        return T::zero();
    }
    let one = T::one();
    ln_gamma(T::from_usize_lossy(n) + one)
        - ln_gamma(T::from_usize_lossy(k) + one)
        - ln_gamma(T::from_usize_lossy(n - k) + one)
}

/// Regularized lower incomplete gamma `P(a, x)` for `a > 0`; zero for `x <= 0`.
pub fn gamma_p<T: Scalar>(a: T, x: T) -> Result<T> {
    if !(a > T::zero()) {
        return Err(Error::domain("gamma shape", format!("{a}")));
    }
    if x <= T::zero() {
        return Ok(T::zero());
    }
    if x.is_infinite() {
        return Ok(T::one());
    }
    let log_prefactor = a * x.ln() - x - ln_gamma(a);
    if x < a + T::one() {
        series(a, x, log_prefactor)
    } else if log_prefactor < T::min_positive_value().ln() {
        Ok(T::one())
    } else {
        Ok(T::one() - continued_fraction(a, x, log_prefactor)?)
    }
}

fn series<T: Scalar>(a: T, x: T, log_prefactor: T) -> Result<T> {
    let eps = T::epsilon();
    let mut ap = a;
    let mut term = T::one() / a;
    let mut sum = term;
    for _ in 0..MAX_ITER {
        ap += T::one();
        term = term * x / ap;
        sum += term;
        if term.abs() <= sum.abs() * eps {
            return Ok((log_prefactor.exp() * sum).min(T::one()));
        }
    }
    Err(Error::Convergence("incomplete gamma series"))
}

/// Upper tail `Q(a, x)` by modified Lentz.
fn continued_fraction<T: Scalar>(a: T, x: T, log_prefactor: T) -> Result<T> {
    let eps = T::epsilon();
    let tiny = T::min_positive_value() / eps;
    let one = T::one();
    let two = T::lit(2.0);
    let mut b = x + one - a;
    let mut c = one / tiny;
    let mut d = one / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let i = T::from_usize_lossy(i);
        let an = -i * (i - a);
        b += two;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        let delta = d * c;
        h *= delta;
        if (delta - one).abs() <= eps {
            return Ok((log_prefactor.exp() * h).max(T::zero()));
        }
    }
    Err(Error::Convergence("incomplete gamma continued fraction"))
}

/// `ln(exp(a) + exp(b))` without overflow.
fn log_add<T: Scalar>(a: T, b: T) -> T {
    if a == T::neg_infinity() {
        return b;
    }
    if b == T::neg_infinity() {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Upper binomial tail `P[Bin(n, q) >= k_min]`, accumulated in log space.
pub fn binomial_upper_tail<T: Scalar>(q: T, n: usize, k_min: usize) -> T {
    if k_min == 0 {
        return T::one();
    }
    if k_min > n || q <= T::zero() {
        return T::zero();
    }
    if q >= T::one() {
        return T::one();
    }
    let ln_q = q.ln();
    let ln_qc = (-q).ln_1p();
    let mut acc = T::neg_infinity();
    for k in k_min..=n {
        let term = ln_binomial::<T>(n, k)
            + T::from_usize_lossy(k) * ln_q
            + T::from_usize_lossy(n - k) * ln_qc;
        acc = log_add(acc, term);
    }
    acc.exp().min(T::one())
}
