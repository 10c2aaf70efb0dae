//! JSON experiment configuration, presets and validation.

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::delay_model::{is_peaked, DelayDistribution, MeanScaling, ProtocolParams, QuadratureConfig};
use crate::error::{Error, FieldError, Result};
use crate::game::StrategyGrid;
use crate::payoff::{ScenarioSpec, ValuationModel};

/// Named parameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    /// Fast proposer Gamma(2, 2) against a partner ten times slower, 12 attestors, K = 9.
    #[serde(rename = "fig5")]
    Fig5,
    /// Same scenario with threshold 8 and slope 0.26, the values that reproduce the
    /// reference utility matrix digit for digit.
    #[serde(rename = "fig5-calibrated")]
    Fig5Calibrated,
    /// Heterogeneous rows where proposer 0 is fast.
    #[serde(rename = "D1-row")]
    D1Row,
    /// Heterogeneous rows where proposer 0 is slow.
    #[serde(rename = "D2-row")]
    D2Row,
    /// All D1 and D2 rows.
    #[serde(rename = "table2")]
    Table2,
    /// Identical proposers with mean `mu`.
    #[serde(rename = "homogeneous-mu")]
    HomogeneousMu,
    /// Ethereum committee, n = 127 and K = 85.
    #[serde(rename = "ethereum")]
    Ethereum,
}

impl Preset {
    pub const ALL: [Preset; 7] = [
        Preset::Fig5,
        Preset::Fig5Calibrated,
        Preset::D1Row,
        Preset::D2Row,
        Preset::Table2,
        Preset::HomogeneousMu,
        Preset::Ethereum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig5 => "fig5",
            Preset::Fig5Calibrated => "fig5-calibrated",
            Preset::D1Row => "D1-row",
            Preset::D2Row => "D2-row",
            Preset::Table2 => "table2",
            Preset::HomogeneousMu => "homogeneous-mu",
            Preset::Ethereum => "ethereum",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<_> = Preset::ALL.iter().map(|p| p.name()).collect();
                Error::Config(vec![FieldError {
                    field: "preset".into(),
                    message: format!("unknown preset {s:?}; expected one of {}", names.join(", ")),
                }])
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    #[default]
    Analytic,
    MonteCarlo,
    Both,
}

/// One row of the heterogeneous suite: a base law for proposer 0 and the mean ratios
/// used for proposer 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub case: String,
    pub shape_0: f64,
    pub rate_0: f64,
    pub gammas: Vec<f64>,
}

impl SweepRow {
    fn new(case: &str, shape_0: f64, rate_0: f64, gammas: &[f64]) -> Self {
        Self {
            case: case.into(),
            shape_0,
            rate_0,
            gammas: gammas.to_vec(),
        }
    }
}

/// Three fast-proposer rows (means 0.3, 0.6 and 1 seconds).
pub fn d1_rows() -> Vec<SweepRow> {
    vec![
        SweepRow::new(
            "D1",
            1.5,
            5.0,
            &[0.33, 0.5, 1.0, 2.0, 5.0, 10.0, 10.25, 10.5, 10.75, 11.0, 11.25, 11.5, 11.66, 12.67, 13.0, 13.33, 13.67, 14.0],
        ),
        SweepRow::new(
            "D1",
            1.5,
            2.5,
            &[0.33, 0.5, 1.0, 2.0, 5.0, 5.2, 5.4, 5.6, 5.7, 5.83, 6.0, 6.2, 6.33, 6.5, 6.67, 6.84, 7.0, 10.0],
        ),
        SweepRow::new(
            "D1",
            2.0,
            2.0,
            &[0.33, 0.5, 1.0, 2.0, 2.2, 2.4, 2.6, 2.8, 3.0, 3.3, 3.5, 3.6, 3.7, 3.8, 3.9, 4.0, 4.1, 4.2, 5.0, 10.0],
        ),
    ]
}

/// Three slow-proposer rows (means about 3.81, 4.05 and 4.29 seconds).
pub fn d2_rows() -> Vec<SweepRow> {
    const G: [f64; 11] = [0.05, 0.07, 0.11, 0.2, 0.4, 0.5, 0.6, 0.8, 1.0, 1.2, 1.4];
    vec![
        SweepRow::new("D2", 1.5, 0.394, &G),
        SweepRow::new("D2", 1.5, 0.37, &G),
        SweepRow::new("D2", 1.5, 0.35, &G),
    ]
}

/// Plain-number scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub shape_0: f64,
    pub rate_0: f64,
    /// Mean ratio of proposer 1 to proposer 0; ignored when `shape_1`/`rate_1` are given.
    pub gamma: f64,
    pub shape_1: Option<f64>,
    pub rate_1: Option<f64>,
    pub mean_scaling: MeanScaling,
    pub n_attestors: usize,
    pub threshold: usize,
    pub slot_len: f64,
    pub attest_deadline: f64,
    pub aggregate_deadline: f64,
    pub slope_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub zeta: f64,
    pub tau1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub preset: Option<Preset>,
    pub scenario: ScenarioConfig,
    pub grid: GridConfig,
    pub mode: RunMode,
    pub trials: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Strategy pair simulated when no equilibrium is available.
    pub strategy: (f64, f64),
    pub sweep: Vec<SweepRow>,
}

/// The on-disk document; every field optional and layered over preset defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    preset: Option<String>,
    scenario: Option<RawScenario>,
    grid: Option<RawGrid>,
    mode: Option<RunMode>,
    trials: Option<usize>,
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    strategy: Option<(f64, f64)>,
    /// Mean of the homogeneous preset.
    mu: Option<f64>,
    sweep: Option<Vec<SweepRow>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    shape_0: Option<f64>,
    rate_0: Option<f64>,
    gamma: Option<f64>,
    shape_1: Option<f64>,
    rate_1: Option<f64>,
    mean_scaling: Option<MeanScaling>,
    n_attestors: Option<usize>,
    threshold: Option<usize>,
    slot_len: Option<f64>,
    attest_deadline: Option<f64>,
    aggregate_deadline: Option<f64>,
    slope_c: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    zeta: Option<f64>,
    tau1: Option<f64>,
}

/// Mean used by the homogeneous preset when the document gives none.
pub const DEFAULT_HOMOGENEOUS_MEAN: f64 = 0.16;
/// Shape of the homogeneous preset's Gamma law.
pub const HOMOGENEOUS_SHAPE: f64 = 2.0;

impl ExperimentConfig {
    /// Experiment defaults, optionally specialized by a preset.
    pub fn preset_defaults(preset: Option<Preset>) -> Self {
        let mut cfg = Self {
            preset,
            scenario: ScenarioConfig {
                shape_0: 2.0,
                rate_0: 2.0,
                gamma: 10.0,
                shape_1: None,
                rate_1: None,
                mean_scaling: MeanScaling::FixedShape,
                n_attestors: 12,
                threshold: 9,
                slot_len: 12.0,
                attest_deadline: 4.0,
                aggregate_deadline: 8.0,
                slope_c: 0.25,
            },
            grid: GridConfig { zeta: 0.05, tau1: 4.0 },
            mode: RunMode::Analytic,
            trials: 100_000,
            seed: 0,
            output_dir: PathBuf::from("out"),
            strategy: (0.0, 0.0),
            sweep: Vec::new(),
        };
        match preset {
            None | Some(Preset::Fig5) => {}
            Some(Preset::Fig5Calibrated) => {
                cfg.scenario.threshold = 8;
                cfg.scenario.slope_c = 0.26;
            }
            Some(Preset::D1Row) => cfg.set_rows(d1_rows()),
            Some(Preset::D2Row) => cfg.set_rows(d2_rows()),
            Some(Preset::Table2) => cfg.set_rows(d1_rows().into_iter().chain(d2_rows()).collect()),
            Some(Preset::HomogeneousMu) => cfg.set_homogeneous_mean(DEFAULT_HOMOGENEOUS_MEAN),
            Some(Preset::Ethereum) => {
                cfg.scenario.n_attestors = 127;
                cfg.scenario.threshold = ProtocolParams::<f64>::supermajority(127);
            }
        }
        cfg
    }

    fn set_rows(&mut self, rows: Vec<SweepRow>) {
        let first = &rows[0];
        self.scenario.shape_0 = first.shape_0;
        self.scenario.rate_0 = first.rate_0;
        self.scenario.gamma = first.gammas[0];
        self.sweep = rows;
    }

    fn set_homogeneous_mean(&mut self, mu: f64) {
        self.scenario.shape_0 = HOMOGENEOUS_SHAPE;
        self.scenario.rate_0 = HOMOGENEOUS_SHAPE / mu;
        self.scenario.gamma = 1.0;
    }

    pub fn protocol(&self) -> ProtocolParams<f64> {
        let s = &self.scenario;
        ProtocolParams {
            slot_len: s.slot_len,
            attest_deadline: s.attest_deadline,
            aggregate_deadline: s.aggregate_deadline,
            n_attestors: s.n_attestors,
            threshold: s.threshold,
        }
    }

    /// Builds the analytic scenario with proposer 1 derived from `gamma`.
    pub fn scenario_with_gamma(&self, shape_0: f64, rate_0: f64, gamma: f64) -> Result<ScenarioSpec<f64>> {
        let d0 = DelayDistribution::new(shape_0, rate_0)?;
        let d1 = d0.scaled(gamma, self.scenario.mean_scaling)?;
        self.scenario_with(d0, d1)
    }

    pub fn scenario_spec(&self) -> Result<ScenarioSpec<f64>> {
        let s = &self.scenario;
        match (s.shape_1, s.rate_1) {
            (Some(shape), Some(rate)) => self.scenario_with(
                DelayDistribution::new(s.shape_0, s.rate_0)?,
                DelayDistribution::new(shape, rate)?,
            ),
            _ => self.scenario_with_gamma(s.shape_0, s.rate_0, s.gamma),
        }
    }

    fn scenario_with(&self, d0: DelayDistribution<f64>, d1: DelayDistribution<f64>) -> Result<ScenarioSpec<f64>> {
        let val = ValuationModel::new(self.scenario.slope_c, self.scenario.attest_deadline)?;
        ScenarioSpec::new(d0, d1, self.protocol(), val)
    }

    pub fn strategy_grid(&self) -> Result<StrategyGrid<f64>> {
        StrategyGrid::new(self.grid.zeta, self.grid.tau1)
    }

    /// Checks every field, collecting all violations.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let mut bad = |field: &str, message: String| {
            errs.push(FieldError {
                field: field.into(),
                message,
            })
        };
        let s = &self.scenario;
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(s.shape_0) {
            bad("scenario.shape_0", format!("must be > 0, got {}", s.shape_0));
        }
        if !positive(s.rate_0) {
            bad("scenario.rate_0", format!("must be > 0, got {}", s.rate_0));
        }
        if !positive(s.gamma) {
            bad("scenario.gamma", format!("must be > 0, got {}", s.gamma));
        }
        match (s.shape_1, s.rate_1) {
            (None, None) => {}
            (Some(a), Some(b)) => {
                if !positive(a) {
                    bad("scenario.shape_1", format!("must be > 0, got {a}"));
                }
                if !positive(b) {
                    bad("scenario.rate_1", format!("must be > 0, got {b}"));
                }
            }
            _ => bad("scenario.shape_1", "shape_1 and rate_1 must be given together".into()),
        }
        if s.n_attestors == 0 {
            bad("scenario.n_attestors", "must be >= 1".into());
        }
        if s.threshold == 0 || s.threshold > s.n_attestors {
            bad(
                "scenario.threshold",
                format!("need 1 <= K <= n, got K={} n={}", s.threshold, s.n_attestors),
            );
        }
        if !(0.0 < s.attest_deadline && s.attest_deadline < s.aggregate_deadline && s.aggregate_deadline < s.slot_len) {
            bad(
                "scenario.attest_deadline",
                format!(
                    "need 0 < tau1 < tau2 < tau, got {} / {} / {}",
                    s.attest_deadline, s.aggregate_deadline, s.slot_len
                ),
            );
        }
        if !(s.slope_c >= 0.0 && s.slope_c.is_finite()) {
            bad("scenario.slope_c", format!("must be >= 0, got {}", s.slope_c));
        }
        if self.grid.tau1 != s.attest_deadline {
            bad(
                "grid.tau1",
                format!("{} differs from scenario.attest_deadline {}", self.grid.tau1, s.attest_deadline),
            );
        }
        if let Err(e) = StrategyGrid::new(self.grid.zeta, self.grid.tau1) {
            bad("grid.zeta", e.to_string());
        }
        if self.trials == 0 {
            bad("trials", "must be >= 1".into());
        }
        let (a, b) = self.strategy;
        for (name, d) in [("strategy[0]", a), ("strategy[1]", b)] {
            if !(0.0..=s.attest_deadline).contains(&d) {
                bad(name, format!("{d} outside [0, {}]", s.attest_deadline));
            }
        }
        for (i, row) in self.sweep.iter().enumerate() {
            if !positive(row.shape_0) || !positive(row.rate_0) {
                bad(&format!("sweep[{i}]"), "shape_0 and rate_0 must be > 0".into());
            }
            if row.gammas.is_empty() {
                bad(&format!("sweep[{i}].gammas"), "must be non-empty".into());
            }
            if let Some(g) = row.gammas.iter().find(|g| !positive(**g)) {
                bad(&format!("sweep[{i}].gammas"), format!("must be > 0, got {g}"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// Non-fatal findings: proposers failing the peakedness condition.
    pub fn warnings(&self) -> Vec<String> {
        let Ok(spec) = self.scenario_spec() else {
            return Vec::new();
        };
        let quad = QuadratureConfig::default();
        let tau1 = spec.params.tau1();
        let mut out = Vec::new();
        for (name, d) in [("proposer 0", &spec.dist_0), ("proposer 1", &spec.dist_1)] {
            match is_peaked(d, tau1, &quad) {
                Ok(true) => {}
                Ok(false) => out.push(format!(
                    "{name}: restricted L2 norm on [0, {tau1}] is below 1/(2 sqrt(tau1)); the homogeneous no-delay equilibrium is not guaranteed"
                )),
                Err(e) => out.push(format!("{name}: restricted L2 norm not computable: {e}")),
            }
        }
        out
    }
}

/// A validated configuration and its warnings.
#[derive(Debug, Clone)]
pub struct Validated {
    pub config: ExperimentConfig,
    pub warnings: Vec<String>,
}

/// Parses a JSON document (empty text means `{}`), layers it over the preset's defaults
/// and validates it. A preset named on the command line wins over one in the document.
pub fn validate_config(raw: &str, preset: Option<Preset>) -> Result<Validated> {
    let raw: RawConfig = if raw.trim().is_empty() {
        RawConfig::default()
    } else {
        serde_json::from_str(raw).map_err(|e| Error::Parse(e.to_string()))?
    };
    let preset = match (preset, raw.preset.as_deref()) {
        (Some(p), _) => Some(p),
        (None, Some(name)) => Some(name.parse()?),
        (None, None) => None,
    };
    let mut cfg = ExperimentConfig::preset_defaults(preset);
    if let Some(mu) = raw.mu {
        if !(mu > 0.0) {
            return Err(Error::Config(vec![FieldError {
                field: "mu".into(),
                message: format!("must be > 0, got {mu}"),
            }]));
        }
        cfg.set_homogeneous_mean(mu);
    }
    if let Some(s) = raw.scenario {
        let c = &mut cfg.scenario;
        macro_rules! layer {
            ($($f:ident),*) => { $( if let Some(v) = s.$f { c.$f = v; } )* };
        }
        layer!(shape_0, rate_0, gamma, mean_scaling, n_attestors, threshold, slot_len, attest_deadline, aggregate_deadline, slope_c);
        if s.shape_1.is_some() || s.rate_1.is_some() {
            c.shape_1 = s.shape_1;
            c.rate_1 = s.rate_1;
        }
        // the grid follows the attestation deadline unless set explicitly
        if let Some(t) = s.attest_deadline {
            cfg.grid.tau1 = t;
        }
    }
    if let Some(g) = raw.grid {
        if let Some(z) = g.zeta {
            cfg.grid.zeta = z;
        }
        if let Some(t) = g.tau1 {
            cfg.grid.tau1 = t;
        }
    }
    if let Some(m) = raw.mode {
        cfg.mode = m;
    }
    if let Some(t) = raw.trials {
        cfg.trials = t;
    }
    if let Some(s) = raw.seed {
        cfg.seed = s;
    }
    if let Some(o) = raw.output_dir {
        cfg.output_dir = o;
    }
    if let Some(s) = raw.strategy {
        cfg.strategy = s;
    }
    if let Some(rows) = raw.sweep {
        cfg.sweep = rows;
    }
    cfg.validate()?;
    let warnings = cfg.warnings();
    Ok(Validated { config: cfg, warnings })
}
