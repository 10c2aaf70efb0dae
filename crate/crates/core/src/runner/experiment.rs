//! Single-scenario experiments and gamma sweeps.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Preset, RunMode, SweepRow};
use crate::delay_model::DelayDensity;
use crate::error::{Error, Result};
use crate::game::{build_matrix, find_psne, optimal_delay_xi, write_matrix_csv, PayoffMatrix, PureEquilibrium, DEFAULT_EPS};
use crate::payoff::{utility_2prop, Player, ScenarioSpec};
use crate::slot_sim::{monte_carlo_utility, MonteCarloEstimate, SimMode};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Output file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiOptimum {
    pub player: usize,
    pub delta: f64,
    pub utility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibria {
    /// Every pure equilibrium, lexicographically ordered.
    pub two_prop: Vec<PureEquilibrium<f64>>,
    pub xi: [XiOptimum; 2],
}

/// Analytic vs simulated utilities at one strategy pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub delta_0: f64,
    pub delta_1: f64,
    pub analytic_0: f64,
    pub analytic_1: f64,
    pub monte_carlo: MonteCarloEstimate<f64>,
    /// `monte_carlo.mean_i - analytic_i`
    pub diff_0: f64,
    pub diff_1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: ExperimentConfig,
    pub version: String,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub scenario: ScenarioSpec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub matrix: Option<PayoffMatrix<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub equilibria: Option<Equilibria>,
    /// Plain simulation result in monte-carlo mode.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub simulation: Option<CrossCheck>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cross_check: Option<CrossCheck>,
    pub notes: Vec<String>,
    pub provenance: Provenance,
}

impl ExperimentReport {
    pub fn first_equilibrium(&self) -> Option<&PureEquilibrium<f64>> {
        self.equilibria.as_ref().and_then(|e| e.two_prop.first())
    }
}

fn simulate_at(spec: &ScenarioSpec<f64>, d0: f64, d1: f64, trials: usize, seed: u64) -> Result<CrossCheck> {
    let a0 = utility_2prop(spec, d0, d1, Player::P0)?.total;
    let a1 = utility_2prop(spec, d0, d1, Player::P1)?.total;
    let mc = monte_carlo_utility(spec, d0, d1, trials, seed, SimMode::TwoProp)?;
    Ok(CrossCheck {
        delta_0: d0,
        delta_1: d1,
        analytic_0: a0,
        analytic_1: a1,
        monte_carlo: mc,
        diff_0: mc.mean_0 - a0,
        diff_1: mc.mean_1 - a1,
    })
}

/// Runs the analytic pipeline and, depending on the mode, the simulator.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let spec = cfg.scenario_spec()?;
    let grid = cfg.strategy_grid()?;
    let mut notes = Vec::new();

    let analytic = matches!(cfg.mode, RunMode::Analytic | RunMode::Both);
    let (matrix, equilibria) = if analytic {
        let m = build_matrix(&spec, &grid)?;
        let two_prop = find_psne(&m, DEFAULT_EPS);
        let xi0 = optimal_delay_xi(&spec.dist_0, &spec.params, &spec.valuation, &grid)?;
        let xi1 = optimal_delay_xi(&spec.dist_1, &spec.params, &spec.valuation, &grid)?;
        if two_prop.is_empty() {
            notes.push("no pure-strategy equilibrium on this grid".into());
        } else if two_prop.len() > 1 {
            notes.push(format!("{} pure-strategy equilibria; summaries use the first", two_prop.len()));
        }
        if matches!(cfg.preset, Some(Preset::Fig5 | Preset::Fig5Calibrated)) {
            notes.push(
                "the reference summary for this scenario lists 2-Prop equilibrium utilities (0, 0); \
                 the values reported here are the matrix entries at the equilibrium cell"
                    .into(),
            );
        }
        let xi = [
            XiOptimum { player: 0, delta: xi0.0, utility: xi0.1 },
            XiOptimum { player: 1, delta: xi1.0, utility: xi1.1 },
        ];
        (Some(m), Some(Equilibria { two_prop, xi }))
    } else {
        (None, None)
    };

    let (simulation, cross_check) = match cfg.mode {
        RunMode::Analytic => (None, None),
        RunMode::MonteCarlo => {
            let (d0, d1) = cfg.strategy;
            (Some(simulate_at(&spec, d0, d1, cfg.trials, cfg.seed)?), None)
        }
        RunMode::Both => {
            let (d0, d1) = equilibria
                .as_ref()
                .and_then(|e| e.two_prop.first())
                .map(|e| (e.delta_0, e.delta_1))
                .unwrap_or(cfg.strategy);
            (None, Some(simulate_at(&spec, d0, d1, cfg.trials, cfg.seed)?))
        }
    };

    Ok(ExperimentReport {
        scenario: spec,
        matrix,
        equilibria,
        simulation,
        cross_check,
        notes,
        provenance: Provenance {
            config: cfg.clone(),
            version: ARTIFACT_VERSION.to_string(),
            wall_time_secs: start.elapsed().as_secs_f64(),
        },
    })
}

fn create(dir: &Path, name: &str) -> Result<fs::File> {
    Ok(fs::File::create(dir.join(name))?)
}

/// Writes `u0.csv`, `u1.csv`, `equilibria.csv` (csv) and/or `report.json` (json).
/// `None` writes both.
pub fn write_report(report: &ExperimentReport, dir: &Path, format: Option<OutputFormat>) -> Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if format != Some(OutputFormat::Json) {
        if let Some(m) = &report.matrix {
            write_matrix_csv(m, Player::P0, create(dir, "u0.csv")?)?;
            write_matrix_csv(m, Player::P1, create(dir, "u1.csv")?)?;
            written.extend(["u0.csv".to_string(), "u1.csv".to_string()]);
        }
        if let Some(eq) = &report.equilibria {
            write_equilibria_csv(eq, create(dir, "equilibria.csv")?)?;
            written.push("equilibria.csv".into());
        }
        for (name, cc) in [("simulation.csv", &report.simulation), ("cross_check.csv", &report.cross_check)] {
            if let Some(cc) = cc {
                write_cross_check_csv(cc, create(dir, name)?)?;
                written.push(name.into());
            }
        }
    }
    if format != Some(OutputFormat::Csv) {
        let mut f = create(dir, "report.json")?;
        serde_json::to_writer_pretty(&mut f, report)?;
        writeln!(f)?;
        written.push("report.json".into());
    }
    Ok(written)
}

pub fn write_equilibria_csv<W: Write>(eq: &Equilibria, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["kind", "player", "delta_0", "delta_1", "u0", "u1"])?;
    for e in &eq.two_prop {
        w.write_record([
            "2prop".to_string(),
            String::new(),
            e.delta_0.to_string(),
            e.delta_1.to_string(),
            e.u0.to_string(),
            e.u1.to_string(),
        ])?;
    }
    for x in &eq.xi {
        let (d0, d1, u0, u1) = if x.player == 0 {
            (x.delta.to_string(), String::new(), x.utility.to_string(), String::new())
        } else {
            (String::new(), x.delta.to_string(), String::new(), x.utility.to_string())
        };
        w.write_record(["xi".to_string(), x.player.to_string(), d0, d1, u0, u1])?;
    }
    w.flush()?;
    Ok(())
}

fn write_cross_check_csv<W: Write>(cc: &CrossCheck, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["player", "delta_0", "delta_1", "analytic", "mean", "stderr", "trials"])?;
    let mc = &cc.monte_carlo;
    for (p, a, m, s) in [(0, cc.analytic_0, mc.mean_0, mc.stderr_0), (1, cc.analytic_1, mc.mean_1, mc.stderr_1)] {
        w.write_record([
            p.to_string(),
            cc.delta_0.to_string(),
            cc.delta_1.to_string(),
            a.to_string(),
            m.to_string(),
            s.to_string(),
            mc.trials.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One game of a gamma sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub case: String,
    pub row: usize,
    pub shape_0: f64,
    pub rate_0: f64,
    pub gamma: f64,
    pub mean_0: f64,
    pub mean_1: f64,
    pub delta_0_ne: Option<f64>,
    pub delta_1_ne: Option<f64>,
    pub u0_ne: Option<f64>,
    pub u1_ne: Option<f64>,
    pub psne_count: usize,
    pub xi_delta_0: Option<f64>,
    pub xi_delta_1: Option<f64>,
    /// `ok`, or the error that stopped this game.
    pub status: String,
}

impl SweepPoint {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

struct Game<'a> {
    row: usize,
    spec: &'a SweepRow,
    gamma: f64,
}

fn run_game(cfg: &ExperimentConfig, g: &Game) -> SweepPoint {
    let mut p = SweepPoint {
        case: g.spec.case.clone(),
        row: g.row,
        shape_0: g.spec.shape_0,
        rate_0: g.spec.rate_0,
        gamma: g.gamma,
        mean_0: g.spec.shape_0 / g.spec.rate_0,
        mean_1: f64::NAN,
        delta_0_ne: None,
        delta_1_ne: None,
        u0_ne: None,
        u1_ne: None,
        psne_count: 0,
        xi_delta_0: None,
        xi_delta_1: None,
        status: "ok".into(),
    };
    let res = (|| -> Result<()> {
        let spec = cfg.scenario_with_gamma(g.spec.shape_0, g.spec.rate_0, g.gamma)?;
        p.mean_1 = spec.dist_1.mean();
        let grid = cfg.strategy_grid()?;
        let m = build_matrix(&spec, &grid)?;
        let eq = find_psne(&m, DEFAULT_EPS);
        p.psne_count = eq.len();
        if let Some(e) = eq.first() {
            p.delta_0_ne = Some(e.delta_0);
            p.delta_1_ne = Some(e.delta_1);
            p.u0_ne = Some(e.u0);
            p.u1_ne = Some(e.u1);
        }
        p.xi_delta_0 = Some(optimal_delay_xi(&spec.dist_0, &spec.params, &spec.valuation, &grid)?.0);
        p.xi_delta_1 = Some(optimal_delay_xi(&spec.dist_1, &spec.params, &spec.valuation, &grid)?.0);
        Ok(())
    })();
    if let Err(e) = res {
        p.status = e.to_string();
    }
    p
}

/// Runs one row: proposer 1 gets mean `gamma * mean_0` for every listed gamma.
/// Failures are recorded per game.
pub fn sweep_gamma(cfg: &ExperimentConfig, row_index: usize, row: &SweepRow) -> Result<Vec<SweepPoint>> {
    if row.gammas.is_empty() {
        return Err(Error::domain("gamma list", "empty"));
    }
    if let Some(g) = row.gammas.iter().find(|g| !(**g > 0.0)) {
        return Err(Error::domain("gamma list", format!("non-positive entry {g}")));
    }
    Ok(row
        .gammas
        .par_iter()
        .map(|&gamma| run_game(cfg, &Game { row: row_index, spec: row, gamma }))
        .collect())
}

/// Runs the selected rows of `cfg.sweep` (all when `rows` is `None`).
pub fn run_sweep(cfg: &ExperimentConfig, rows: Option<&[usize]>) -> Result<Vec<SweepPoint>> {
    cfg.validate()?;
    if cfg.sweep.is_empty() {
        return Err(Error::Config(vec![crate::error::FieldError {
            field: "sweep".into(),
            message: "no sweep rows; use a row preset or list rows in the config".into(),
        }]));
    }
    let selected: Vec<usize> = match rows {
        Some(r) => {
            if let Some(bad) = r.iter().find(|&&i| i >= cfg.sweep.len()) {
                return Err(Error::Config(vec![crate::error::FieldError {
                    field: "row".into(),
                    message: format!("row {bad} out of range (0..{})", cfg.sweep.len()),
                }]));
            }
            r.to_vec()
        }
        None => (0..cfg.sweep.len()).collect(),
    };
    let games: Vec<Game> = selected
        .iter()
        .flat_map(|&i| {
            cfg.sweep[i].gammas.iter().map(move |&gamma| Game {
                row: i,
                spec: &cfg.sweep[i],
                gamma,
            })
        })
        .collect();
    Ok(games.par_iter().map(|g| run_game(cfg, g)).collect())
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub const SWEEP_HEADER: [&str; 15] = [
    "case", "row", "shape_0", "rate_0", "gamma", "mean_0", "mean_1", "delta0_ne", "delta1_ne", "u0_ne", "u1_ne",
    "psne_count", "xi_delta0", "xi_delta1", "status",
];

pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for p in points {
        w.write_record([
            p.case.clone(),
            p.row.to_string(),
            p.shape_0.to_string(),
            p.rate_0.to_string(),
            p.gamma.to_string(),
            p.mean_0.to_string(),
            p.mean_1.to_string(),
            opt(p.delta_0_ne),
            opt(p.delta_1_ne),
            opt(p.u0_ne),
            opt(p.u1_ne),
            p.psne_count.to_string(),
            opt(p.xi_delta_0),
            opt(p.xi_delta_1),
            p.status.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `sweep.csv` and/or `sweep.json`.
pub fn write_sweep(points: &[SweepPoint], dir: &Path, format: Option<OutputFormat>) -> Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if format != Some(OutputFormat::Json) {
        write_sweep_csv(points, create(dir, "sweep.csv")?)?;
        written.push("sweep.csv".into());
    }
    if format != Some(OutputFormat::Csv) {
        let mut f = create(dir, "sweep.json")?;
        serde_json::to_writer_pretty(&mut f, points)?;
        writeln!(f)?;
        written.push("sweep.json".into());
    }
    Ok(written)
}
