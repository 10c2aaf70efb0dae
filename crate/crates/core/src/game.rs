//! The discretized Latency Game: payoff matrices over a delay grid, pure equilibria,
//! best responses and the single-proposer optimum.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::delay_model::{m_threshold, p_first, q_reach, DelayDensity, ProtocolParams};
use crate::error::{Error, Result};
use crate::payoff::{
    block_value, utility_from_probabilities, utility_xi, LnBinomialTable, Player,
    ReachProbabilities, ScenarioSpec, ValuationModel, VoteSum,
};
use crate::scalar::{round_decimal, Scalar};

/// Default comparison tolerance on normalized utilities.
pub const DEFAULT_EPS: f64 = 1e-9;

/// `{0, step, 2 step, ..., horizon}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct StrategyGrid<T: Scalar> {
    step: T,
    horizon: T,
    points: Vec<T>,
}

impl<T: Scalar> StrategyGrid<T> {
    pub fn new(step: T, horizon: T) -> Result<Self> {
        if !(step > T::zero() && horizon > T::zero() && step <= horizon) {
            return Err(Error::domain(
                "strategy grid",
                format!("step={step} horizon={horizon}"),
            ));
        }
        let ratio = horizon / step;
        let count = ratio.round();
        if (ratio - count).abs() > T::lit(1e-9).max(T::tol_floor()) * count.max(T::one()) {
            return Err(Error::domain(
                "strategy grid",
                format!("horizon {horizon} is not a multiple of step {step}"),
            ));
        }
        let count = count.to_usize().expect("finite grid size");
        let mut points: Vec<T> = (0..count)
            .map(|k| round_decimal(T::from_usize_lossy(k) * step))
            .collect();
        points.push(horizon);
        Ok(Self {
            step,
            horizon,
            points,
        })
    }

    pub fn step(&self) -> T {
        self.step
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn points(&self) -> &[T] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the grid point equal to `delta` up to rounding.
    pub fn index_of(&self, delta: T) -> Option<usize> {
        let tol = T::lit(1e-9).max(T::tol_floor()) * self.horizon.max(T::one());
        let k = (delta / self.step).round().to_usize()?;
        (k < self.points.len() && (self.points[k] - delta).abs() <= tol).then_some(k)
    }
}

/// Both players' utilities, indexed `[delta_0 index][delta_1 index]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PayoffMatrix<T: Scalar> {
    pub grid: StrategyGrid<T>,
    pub u0: Vec<Vec<T>>,
    pub u1: Vec<Vec<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PureEquilibrium<T: Scalar> {
    pub delta_0: T,
    pub delta_1: T,
    pub u0: T,
    pub u1: T,
}

impl<T: Scalar> PayoffMatrix<T> {
    pub fn utility(&self, player: Player, a: usize, b: usize) -> T {
        match player {
            Player::P0 => self.u0[a][b],
            Player::P1 => self.u1[a][b],
        }
    }

    /// The same game with the players' roles exchanged.
    pub fn swap_players(&self) -> Self {
        let n = self.grid.len();
        let t = |m: &Vec<Vec<T>>| -> Vec<Vec<T>> {
            (0..n).map(|a| (0..n).map(|b| m[b][a]).collect()).collect()
        };
        Self {
            grid: self.grid.clone(),
            u0: t(&self.u1),
            u1: t(&self.u0),
        }
    }

    /// Whether cell `(a, b)` is a mutual best response within `eps`.
    pub fn is_equilibrium(&self, a: usize, b: usize, eps: T) -> bool {
        let n = self.grid.len();
        let best0 = (0..n).map(|i| self.u0[i][b]).fold(T::neg_infinity(), T::max);
        let best1 = (0..n).map(|j| self.u1[a][j]).fold(T::neg_infinity(), T::max);
        self.u0[a][b] >= best0 - eps && self.u1[a][b] >= best1 - eps
    }
}

struct CellInputs<T> {
    q0: Vec<T>,
    q1: Vec<T>,
    m0: Vec<T>,
    m1: Vec<T>,
    v: Vec<T>,
}

/// Fills both utility matrices over `grid`.
///
/// Reach and threshold probabilities are computed once per grid point and first-arrival
/// probabilities once per pair; cells are evaluated in parallel.
pub fn build_matrix<T: Scalar>(spec: &ScenarioSpec<T>, grid: &StrategyGrid<T>) -> Result<PayoffMatrix<T>> {
    spec.validate()?;
    if grid.horizon() != spec.params.attest_deadline {
        return Err(Error::domain(
            "strategy grid",
            format!(
                "horizon {} differs from attestation deadline {}",
                grid.horizon(),
                spec.params.attest_deadline
            ),
        ));
    }
    let params = &spec.params;
    let (n, k) = (params.n_attestors, params.threshold);
    let pts = grid.points();
    let per_point = |dist: &dyn Fn(T) -> Result<T>| -> Result<Vec<T>> { pts.iter().map(|&d| dist(d)).collect() };
    let q0 = per_point(&|d| q_reach(&spec.dist_0, d, params))?;
    let q1 = per_point(&|d| q_reach(&spec.dist_1, d, params))?;
    let inputs = CellInputs {
        m0: q0.iter().map(|&q| m_threshold(q, n, k)).collect::<Result<_>>()?,
        m1: q1.iter().map(|&q| m_threshold(q, n, k)).collect::<Result<_>>()?,
        v: per_point(&|d| block_value(&spec.valuation, d))?,
        q0,
        q1,
    };
    let table = LnBinomialTable::<T>::new(n);

    let rows: Vec<(Vec<T>, Vec<T>)> = (0..pts.len())
        .into_par_iter()
        .map(|a| -> Result<(Vec<T>, Vec<T>)> {
            let mut r0 = Vec::with_capacity(pts.len());
            let mut r1 = Vec::with_capacity(pts.len());
            for b in 0..pts.len() {
                let (x0, x1) = cell(spec, pts[a], pts[b], a, b, &inputs, &table).map_err(|e| {
                    Error::Cell {
                        delta_0: pts[a].as_f64(),
                        delta_1: pts[b].as_f64(),
                        source: Box::new(e),
                    }
                })?;
                r0.push(x0);
                r1.push(x1);
            }
            Ok((r0, r1))
        })
        .collect::<Result<_>>()?;
    let (u0, u1) = rows.into_iter().unzip();
    Ok(PayoffMatrix {
        grid: grid.clone(),
        u0,
        u1,
    })
}

fn cell<T: Scalar>(
    spec: &ScenarioSpec<T>,
    d0: T,
    d1: T,
    a: usize,
    b: usize,
    inp: &CellInputs<T>,
    table: &LnBinomialTable<T>,
) -> Result<(T, T)> {
    let params = &spec.params;
    let p01 = p_first(&spec.dist_0, &spec.dist_1, d0, d1, params, &spec.quad)?;
    let p10 = p_first(&spec.dist_1, &spec.dist_0, d1, d0, params, &spec.quad)?;
    let k = params.threshold;
    let for0 = ReachProbabilities {
        q_own: inp.q0[a],
        q_other: inp.q1[b],
        p_own: p01,
        p_other: p10,
    };
    let for1 = ReachProbabilities {
        q_own: inp.q1[b],
        q_other: inp.q0[a],
        p_own: p10,
        p_other: p01,
    };
    let u0 = utility_from_probabilities(
        &for0, inp.v[a], inp.v[b], inp.m0[a], inp.m1[b], k, table, VoteSum::Collapsed,
    );
    let u1 = utility_from_probabilities(
        &for1, inp.v[b], inp.v[a], inp.m1[b], inp.m0[a], k, table, VoteSum::Collapsed,
    );
    Ok((u0.total, u1.total))
}

/// All pure-strategy Nash equilibria within `eps`, ordered by `(delta_0, delta_1)`.
pub fn find_psne<T: Scalar>(m: &PayoffMatrix<T>, eps: T) -> Vec<PureEquilibrium<T>> {
    let n = m.grid.len();
    let pts = m.grid.points();
    let col_best: Vec<T> = (0..n)
        .map(|b| (0..n).map(|a| m.u0[a][b]).fold(T::neg_infinity(), T::max))
        .collect();
    let row_best: Vec<T> = (0..n)
        .map(|a| m.u1[a].iter().copied().fold(T::neg_infinity(), T::max))
        .collect();
    let mut out = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if m.u0[a][b] >= col_best[b] - eps && m.u1[a][b] >= row_best[a] - eps {
                out.push(PureEquilibrium {
                    delta_0: pts[a],
                    delta_1: pts[b],
                    u0: m.u0[a][b],
                    u1: m.u1[a][b],
                });
            }
        }
    }
    out
}

/// Grid points maximizing `player`'s utility against `opponent_delta`, within `eps`.
pub fn best_response<T: Scalar>(
    m: &PayoffMatrix<T>,
    player: Player,
    opponent_delta: T,
    eps: T,
) -> Result<Vec<T>> {
    let j = m.grid.index_of(opponent_delta).ok_or_else(|| {
        Error::domain("opponent delay", format!("{opponent_delta} is not a grid point"))
    })?;
    let n = m.grid.len();
    let payoff = |i: usize| match player {
        Player::P0 => m.u0[i][j],
        Player::P1 => m.u1[j][i],
    };
    let best = (0..n).map(payoff).fold(T::neg_infinity(), T::max);
    Ok((0..n)
        .filter(|&i| payoff(i) >= best - eps)
        .map(|i| m.grid.points()[i])
        .collect())
}

/// Best single-proposer delay on the grid; ties go to the smaller delay.
pub fn optimal_delay_xi<T: Scalar, D: DelayDensity<T>>(
    dist: &D,
    params: &ProtocolParams<T>,
    val: &ValuationModel<T>,
    grid: &StrategyGrid<T>,
) -> Result<(T, T)> {
    let mut best: Option<(T, T)> = None;
    for &d in grid.points() {
        let u = utility_xi(dist, d, params, val)?;
        match best {
            Some((_, bu)) if u <= bu => {}
            _ => best = Some((d, u)),
        }
    }
    best.ok_or_else(|| Error::domain("strategy grid", "empty"))
}

/// `%g`-style formatting with `digits` significant digits.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let p = digits.max(1) - 1;
    let sci = format!("{x:.p$e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        format!("{}e{}", trim_zeros(mantissa), exp)
    } else {
        let decimals = (p as i32 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// One player's matrix as CSV: header row and first column hold grid points.
pub fn write_matrix_csv<T: Scalar, W: Write>(m: &PayoffMatrix<T>, player: Player, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let pts = m.grid.points();
    let mut header = vec!["delta_0\\delta_1".to_string()];
    header.extend(pts.iter().map(|p| format_sig(p.as_f64(), 6)));
    w.write_record(&header)?;
    for (a, &d0) in pts.iter().enumerate() {
        let mut row = vec![format_sig(d0.as_f64(), 6)];
        row.extend((0..pts.len()).map(|b| format_sig(m.utility(player, a, b).as_f64(), 6)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// JSON bundle of a scenario, its grid, both matrices and the equilibria.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct MatrixDocument<T: Scalar> {
    pub scenario: ScenarioSpec<T>,
    pub matrix: PayoffMatrix<T>,
    pub equilibria: Vec<PureEquilibrium<T>>,
}
