//! Globally adaptive Gauss-Kronrod (7/15) integration on finite intervals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
// Gauss weights for the odd Kronrod nodes 1, 3, 5 and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct QuadratureConfig<T: Scalar> {
    pub abs_tol: T,
    pub rel_tol: T,
    pub max_subdivisions: usize,
}

impl<T: Scalar> Default for QuadratureConfig<T> {
    fn default() -> Self {
        Self {
            abs_tol: T::lit(1e-10).max(T::tol_floor()),
            rel_tol: T::lit(1e-8).max(T::tol_floor()),
            max_subdivisions: 2000,
        }
    }
}

impl<T: Scalar> QuadratureConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > T::zero()) || !(self.rel_tol > T::zero()) {
            return Err(Error::domain(
                "quadrature tolerance",
                format!("abs_tol={} rel_tol={}", self.abs_tol, self.rel_tol),
            ));
        }
        if self.max_subdivisions == 0 {
            return Err(Error::domain("quadrature max_subdivisions", "0"));
        }
        Ok(())
    }
}

/// Result of an integration with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral<T> {
    pub value: T,
    pub error: T,
}

#[derive(Clone, Copy)]
struct Segment<T> {
    a: T,
    b: T,
    value: T,
    error: T,
}

fn kronrod<T: Scalar, F: Fn(T) -> T>(f: &F, a: T, b: T) -> Segment<T> {
    let half = T::lit(0.5);
    let centre = half * (a + b);
    let half_len = half * (b - a);
    let fc = f(centre);
    let mut kron = fc * T::lit(WGK[7]);
    let mut gauss = fc * T::lit(WG[3]);
    for j in 0..7 {
        let dx = half_len * T::lit(XGK[j]);
        let pair = f(centre - dx) + f(centre + dx);
        kron += T::lit(WGK[j]) * pair;
        if j % 2 == 1 {
            gauss += T::lit(WG[j / 2]) * pair;
        }
    }
    Segment {
        a,
        b,
        value: kron * half_len,
        error: ((kron - gauss) * half_len).abs(),
    }
}

/// Integrates `f` over `[a, b]`.
pub fn integrate<T, F>(f: F, a: T, b: T, cfg: &QuadratureConfig<T>) -> Result<Integral<T>>
where
    T: Scalar,
    F: Fn(T) -> T,
{
    integrate_with_breaks(f, a, b, &[], cfg)
}

/// Integrates `f` over `[a, b]`, splitting first at any `breaks` strictly inside the interval
/// (kinks of the integrand).
pub fn integrate_with_breaks<T, F>(
    f: F,
    a: T,
    b: T,
    breaks: &[T],
    cfg: &QuadratureConfig<T>,
) -> Result<Integral<T>>
where
    T: Scalar,
    F: Fn(T) -> T,
{
    if !(b > a) {
        return Ok(Integral {
            value: T::zero(),
            error: T::zero(),
        });
    }
    let mut cuts: Vec<T> = breaks.iter().copied().filter(|&c| c > a && c < b).collect();
    cuts.sort_by(|x, y| x.partial_cmp(y).expect("finite breakpoints"));
    let mut segments = Vec::with_capacity(cuts.len() + 16);
    let mut lo = a;
    for c in cuts.into_iter().chain(std::iter::once(b)) {
        if c > lo {
            segments.push(kronrod(&f, lo, c));
            lo = c;
        }
    }

    let mut subdivisions = 0;
    loop {
        let value: T = segments.iter().map(|s| s.value).sum();
        let error: T = segments.iter().map(|s| s.error).sum();
        let tol = cfg.abs_tol.max(cfg.rel_tol * value.abs());
        if error <= tol {
            return Ok(Integral { value, error });
        }
        if subdivisions >= cfg.max_subdivisions {
            return Err(Error::Quadrature {
                estimate: value.as_f64(),
                error_estimate: error.as_f64(),
                subdivisions,
            });
        }
        let (worst, _) = segments
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |acc, (i, s)| {
                if s.error > acc.1 {
                    (i, s.error)
                } else {
                    acc
                }
            });
        let seg = segments.swap_remove(worst);
        let mid = T::lit(0.5) * (seg.a + seg.b);
        if !(mid > seg.a && mid < seg.b) {
            // interval exhausted at machine precision
            return Err(Error::Quadrature {
                estimate: value.as_f64(),
                error_estimate: error.as_f64(),
                subdivisions,
            });
        }
        segments.push(kronrod(&f, seg.a, mid));
        segments.push(kronrod(&f, mid, seg.b));
        subdivisions += 1;
    }
}
