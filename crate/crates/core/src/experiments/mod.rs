//! Orchestrated studies confronting the solver with the quantitative claims
//! it is supposed to satisfy: dissipativity, pair stability, smoothing
//! contraction, regularization convergence, finite propagation speed, and
//! the box-counting dimension of snapshot clouds.

pub mod dimension;
pub mod dissipative;
pub mod pair;
pub mod propagation;
pub mod regularization;
pub mod smoothing;

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::model::{ModelConfig, ModelParams};
use crate::solver::{Provenance, SolverConfig, State, Trajectory};

pub const STUDY_NAMES: [&str; 6] = [
    "dissipative",
    "pair",
    "smoothing",
    "regularization",
    "propagation",
    "dimension",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub lengths: Vec<f64>,
    pub cells: Vec<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            dim: 1,
            lengths: vec![1.0],
            cells: vec![64],
        }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.dim, &self.lengths, &self.cells)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    /// initial-condition family: "bump", "plateau" or "trig"
    pub family: String,
    pub count: usize,
    pub seed: u64,
    pub amplitude: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            family: "bump".to_string(),
            count: 8,
            seed: 0,
            amplitude: 1.0,
        }
    }
}

/// Every tolerance a verdict may cite. Verdicts reference these by name; no
/// study hard-codes a hidden threshold.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// max/min factor allowed between final norms across IC amplitudes
    pub amplitude_factor: f64,
    /// allowed relative spread of the stability ratio across perturbation sizes
    pub epsilon_stability: f64,
    /// slack in the half-contraction check: LHS <= 0.5 x(0) (1 + slack)
    pub contraction_slack: f64,
    /// allowed support-radius growth per unit time, as a fraction of the
    /// initial radius
    pub support_growth: f64,
    /// cap defining "bounded" for empirical ratio ladders
    pub ratio_cap: f64,
    /// dimension below which a snapshot cloud counts as collapsed
    pub steady_state_dim: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            amplitude_factor: 2.0,
            epsilon_stability: 0.2,
            contraction_slack: 0.1,
            support_growth: 0.5,
            ratio_cap: 1e3,
            steady_state_dim: 0.1,
        }
    }
}

/// Study-specific knobs shared across the six studies.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyKnobs {
    /// sublevel threshold delta for masks and the level-set study
    pub delta: f64,
    /// start of the smoothing time window (t1, T)
    pub t1: f64,
    /// end of the smoothing time window
    pub big_t: f64,
    /// perturbation amplitudes for the pair-stability ladder
    pub epsilons: Vec<f64>,
    /// IC amplitudes for the dissipative study
    pub amplitudes: Vec<f64>,
    /// horizon of the dissipative decay runs
    pub decay_t: f64,
    /// regularization indices n for the convergence ladder
    pub reg_ladder: Vec<u32>,
    /// support threshold for propagation tracking
    pub support_tol: f64,
    /// snapshots before this time are discarded as transient in the
    /// dimension study
    pub transient_cut: f64,
    /// box-counting radii for the dimension study
    pub radii: Vec<f64>,
    pub tolerances: Tolerances,
}

impl Default for StudyKnobs {
    fn default() -> Self {
        Self {
            delta: 0.2,
            t1: 0.2,
            big_t: 1.0,
            epsilons: vec![1e-2, 1e-3, 1e-4],
            amplitudes: vec![1.0, 5.0, 25.0],
            decay_t: 10.0,
            reg_ladder: vec![10, 20, 40, 80],
            support_tol: 1e-6,
            transient_cut: 0.5,
            radii: vec![0.005, 0.01, 0.02, 0.05, 0.08],
            tolerances: Tolerances::default(),
        }
    }
}

/// One reproducible study setup: model, integrator, mesh, initial-condition
/// ensemble and study knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub solver: SolverConfig,
    pub grid: GridConfig,
    pub ensemble: EnsembleConfig,
    pub study: StudyKnobs,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig {
                alpha: 4.0,
                gamma: 3.5,
                beta: 3.2,
                spec: "example2_corrected".to_string(),
                constants: None,
            },
            solver: SolverConfig::default(),
            grid: GridConfig::default(),
            ensemble: EnsembleConfig::default(),
            study: StudyKnobs::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn model_params(&self) -> Result<ModelParams> {
        self.model.clone().into_params()
    }
}

/// One pass/fail decision; always cites the tolerance it used.
#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub tolerance: f64,
    pub tolerance_name: String,
    pub detail: String,
}

impl Verdict {
    pub fn new(
        name: &str,
        pass: bool,
        value: f64,
        tolerance: f64,
        tolerance_name: &str,
        detail: String,
    ) -> Self {
        Self {
            name: name.to_string(),
            pass,
            value,
            tolerance,
            tolerance_name: tolerance_name.to_string(),
            detail,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub study: String,
    pub records: serde_json::Value,
    pub verdicts: Vec<Verdict>,
    pub provenance: Provenance,
    /// unix seconds; excluded from determinism comparisons
    pub generated_at: u64,
}

impl ExperimentReport {
    pub fn new(
        study: &str,
        records: serde_json::Value,
        verdicts: Vec<Verdict>,
        provenance: Provenance,
    ) -> Self {
        let generated_at = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            study: study.to_string(),
            records,
            verdicts,
            provenance,
            generated_at,
        }
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn write(&self, study_dir: &Path) -> Result<()> {
        fs::create_dir_all(study_dir)?;
        let json = serde_json::to_string_pretty(self)?;
        fs::write(study_dir.join("report.json"), json + "\n")?;
        Ok(())
    }
}

/// Dispatch a study by name into `<outdir>/<study>/`.
pub fn run_study(name: &str, config: &ExperimentConfig, outdir: &Path) -> Result<ExperimentReport> {
    let study_dir = outdir.join(name);
    fs::create_dir_all(&study_dir)?;
    let report = match name {
        "dissipative" => dissipative::run(config, &study_dir)?,
        "pair" => pair::run(config, &study_dir)?,
        "smoothing" => smoothing::run(config, &study_dir)?,
        "regularization" => regularization::run(config, &study_dir)?,
        "propagation" => propagation::run(config, &study_dir)?,
        "dimension" => dimension::run(config, &study_dir)?,
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown study {other:?}; valid names: {}",
                STUDY_NAMES.join(", ")
            )))
        }
    };
    report.write(&study_dir)?;
    Ok(report)
}

/// A compactly supported smooth bump of the given amplitude.
pub fn bump_field(grid: &Grid, amplitude: f64, center: [f64; 2], radius: f64) -> ScalarField {
    let dim = grid.dim();
    ScalarField::from_fn(grid.clone(), 0.0, move |x, y| {
        let mut r2 = ((x - center[0]) / radius).powi(2);
        if dim == 2 {
            r2 += ((y - center[1]) / radius).powi(2);
        }
        if r2 < 1.0 {
            amplitude * (1.0 - r2).powi(2)
        } else {
            0.0
        }
    })
}

/// Draw one nonnegative initial state from the configured family.
pub fn random_initial_state(
    grid: &Grid,
    family: &str,
    amplitude: f64,
    rng: &mut ChaCha8Rng,
) -> Result<State> {
    let lx = grid.lengths()[0];
    let ly = if grid.dim() == 2 { grid.lengths()[1] } else { 0.0 };
    let m0 = match family {
        "bump" => {
            let cx = rng.gen_range(0.3 * lx..0.7 * lx);
            let cy = if grid.dim() == 2 {
                rng.gen_range(0.3 * ly..0.7 * ly)
            } else {
                0.0
            };
            let radius = rng.gen_range(0.1 * lx..0.25 * lx);
            bump_field(grid, amplitude, [cx, cy], radius)
        }
        "plateau" => {
            let a = rng.gen_range(0.1 * lx..0.3 * lx);
            let b = rng.gen_range(0.6 * lx..0.9 * lx);
            let edge = 0.05 * lx;
            ScalarField::from_fn(grid.clone(), 0.0, move |x, _| {
                let rise = ((x - a) / edge).clamp(0.0, 1.0);
                let fall = ((b - x) / edge).clamp(0.0, 1.0);
                amplitude * rise * rise * fall * fall
            })
        }
        "trig" => {
            let dim = grid.dim();
            let k1 = rng.gen_range(1..4) as f64;
            let k2 = rng.gen_range(1..4) as f64;
            let a1: f64 = rng.gen_range(0.3..1.0);
            let a2: f64 = rng.gen_range(0.0..0.7);
            ScalarField::from_fn(grid.clone(), 0.0, move |x, y| {
                let pi = std::f64::consts::PI;
                let sx = a1 * (k1 * pi * x / lx).sin().powi(2)
                    + a2 * (k2 * pi * x / lx).sin().powi(2);
                let sy = if dim == 2 {
                    (pi * y / ly).sin().powi(2)
                } else {
                    1.0
                };
                amplitude * sx * sy / (a1 + a2)
            })
        }
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown IC family {other:?}; expected bump, plateau or trig"
            )))
        }
    };
    let rho0 = ScalarField::constant(grid.clone(), 1.0, 1.0);
    State::new(m0, rho0, 0.0)
}

/// The whole configured ensemble, reproducible from the seed.
pub fn ensemble(config: &ExperimentConfig) -> Result<Vec<State>> {
    let grid = config.grid.build()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.ensemble.seed);
    (0..config.ensemble.count)
        .map(|_| {
            random_initial_state(
                &grid,
                &config.ensemble.family,
                config.ensemble.amplitude,
                &mut rng,
            )
        })
        .collect()
}

/// Discrete L^inf x W^(1,inf) norm of a state: max of |M|, |rho| and |grad rho|.
pub fn state_sup_norm(state: &State) -> f64 {
    let grad_rho = crate::grid::gradient(&state.rho);
    state
        .m
        .max_abs()
        .max(state.rho.max_abs())
        .max(grad_rho.max_abs())
}

/// Series of the sup norm along a trajectory.
pub fn sup_norm_series(traj: &Trajectory) -> Vec<(f64, f64)> {
    traj.snapshots()
        .iter()
        .map(|s| (s.time, state_sup_norm(s)))
        .collect()
}

/// Write a gnuplot-compatible two-column series.
pub fn write_dat(path: &Path, series: &[(f64, f64)]) -> Result<()> {
    let mut out = String::new();
    for (t, v) in series {
        out.push_str(&format!("{t:.12e} {v:.12e}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Write runs.csv with a header row and numeric records.
pub fn write_csv(path: &Path, header: &str, rows: &[Vec<f64>]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "{header}")?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.12e}")).collect();
        writeln!(f, "{}", line.join(","))?;
    }
    Ok(())
}
