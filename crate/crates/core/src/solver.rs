//! Time integration of the regularized biomass/nutrient system.
//!
//! One step is IMEX: the nutrient diffuses implicitly (unconditionally
//! stable, discrete maximum principle) and reacts semi-implicitly (division
//! by a positive factor, so nonnegativity survives); the biomass moves by an
//! explicit conservative flux with regularized degenerate diffusivity
//! `(M + 1/n)^alpha` and first-order upwinded taxis, followed by an exact
//! exponential integration of the stiff linear reaction part.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{divergence, gradient, laplacian_dirichlet, Grid, ScalarField, VectorField};
use crate::model::ModelParams;
use crate::norms::{hminus1_norm, lp_norm, DiffNorms, NormWorkspace};

/// Biomass and nutrient at one instant; both fields share a grid, with
/// Dirichlet traces M = 0 and rho = 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub m: ScalarField,
    pub rho: ScalarField,
    pub time: f64,
}

impl State {
    /// Build a state; both components must be nonnegative and share a grid.
    pub fn new(m: ScalarField, rho: ScalarField, time: f64) -> Result<Self> {
        if m.grid != rho.grid {
            return Err(Error::GridMismatch);
        }
        if m.min_value() < 0.0 {
            return Err(Error::NegativeInput(format!("min M = {}", m.min_value())));
        }
        if rho.min_value() < 0.0 {
            return Err(Error::NegativeInput(format!(
                "min rho = {}",
                rho.min_value()
            )));
        }
        if !(time >= 0.0) {
            return Err(Error::InvalidParameter(format!("time = {time}")));
        }
        Ok(Self { m, rho, time })
    }

    pub fn grid(&self) -> &Grid {
        &self.m.grid
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ImexUpwind,
}

/// Time-integration configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// regularization index n; the regularized diffusivity is (M + 1/n)^alpha
    pub reg_n: u32,
    pub dt_max: f64,
    pub cfl_safety: f64,
    pub t_end: f64,
    pub snapshot_every: f64,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    /// treat the diffusion exponent as 0 (constant diffusivity 1), solved
    /// implicitly; the infinite-propagation-speed contrast mode
    #[serde(default)]
    pub disable_degeneracy: bool,
}

fn default_scheme() -> Scheme {
    Scheme::ImexUpwind
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            reg_n: 100,
            dt_max: 1e-3,
            cfl_safety: 0.3,
            t_end: 1.0,
            snapshot_every: 0.1,
            scheme: Scheme::ImexUpwind,
            disable_degeneracy: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reg_n < 1 {
            return Err(Error::InvalidParameter("reg_n must be >= 1".to_string()));
        }
        if !(self.dt_max > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "dt_max must be > 0, got {}",
                self.dt_max
            )));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "cfl_safety must lie in (0, 1], got {}",
                self.cfl_safety
            )));
        }
        if !(self.t_end >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "t_end must be >= 0, got {}",
                self.t_end
            )));
        }
        if !(self.snapshot_every > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "snapshot_every must be > 0, got {}",
                self.snapshot_every
            )));
        }
        Ok(())
    }

    fn eps_reg(&self) -> f64 {
        1.0 / self.reg_n as f64
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub model_hash: String,
}

/// Ordered snapshots of one evolution, first snapshot at the initial time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    snapshots: Vec<State>,
    pub provenance: Provenance,
}

impl Trajectory {
    pub fn snapshots(&self) -> &[State] {
        &self.snapshots
    }

    pub fn initial(&self) -> &State {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &State {
        self.snapshots.last().unwrap()
    }
}

pub fn config_hash(config: &SolverConfig) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

pub fn model_hash(params: &ModelParams) -> String {
    let desc = format!(
        "{} alpha={} gamma={} beta={} constants={}",
        params.spec.name(),
        params.alpha,
        params.gamma,
        params.beta,
        serde_json::to_string(&params.constants).expect("constants serialize"),
    );
    hex::encode(Sha256::digest(desc.as_bytes()))
}

/// Per-cell biomass diffusivity (M + 1/n)^alpha, or 1 in the
/// degeneracy-disabled contrast mode.
fn diffusivity(m: f64, eps: f64, alpha: f64, disabled: bool) -> f64 {
    if disabled {
        1.0
    } else {
        (m + eps).powf(alpha)
    }
}

/// M at a face: arithmetic mean of the two adjacent cells, the Dirichlet
/// trace at the wall.
fn face_m(m: &ScalarField) -> VectorField {
    let grid = &m.grid;
    let nx = grid.nx();
    let ny = grid.ny();
    let b = m.boundary_value;
    let mut out = VectorField::zeros(grid.clone());
    for iy in 0..ny {
        for ix in 0..=nx {
            out.components[0][iy * (nx + 1) + ix] = if ix == 0 || ix == nx {
                b
            } else {
                0.5 * (m.values[grid.idx(ix - 1, iy)] + m.values[grid.idx(ix, iy)])
            };
        }
    }
    if grid.dim() == 2 {
        for iy in 0..=ny {
            for ix in 0..nx {
                out.components[1][iy * nx + ix] = if iy == 0 || iy == ny {
                    b
                } else {
                    0.5 * (m.values[grid.idx(ix, iy - 1)] + m.values[grid.idx(ix, iy)])
                };
            }
        }
    }
    out
}

/// Taxis face velocity (M + 1/n)^(gamma - 1) * grad rho (the flux
/// (M+1/n)^gamma grad rho written as velocity x M for upwinding).
fn taxis_velocity(
    mf: &VectorField,
    grad_rho: &VectorField,
    eps: f64,
    gamma: f64,
) -> VectorField {
    let mut out = VectorField::zeros(mf.grid.clone());
    for axis in 0..mf.grid.dim() {
        for (o, (&m, &g)) in out.components[axis]
            .iter_mut()
            .zip(mf.components[axis].iter().zip(&grad_rho.components[axis]))
        {
            *o = (m + eps).powf(gamma - 1.0) * g;
        }
    }
    out
}

/// Largest stable explicit step:
/// cfl * min(h^2/(2 N max D), h/(2 max |velocity|), dt_max).
pub fn stable_dt(state: &State, params: &ModelParams, config: &SolverConfig) -> f64 {
    let grid = state.grid();
    let eps = config.eps_reg();
    let h = grid.min_spacing();
    let dim = grid.dim() as f64;

    // the contrast mode solves its (linear) diffusion implicitly, so only
    // the degenerate explicit flux constrains dt
    let max_d = if config.disable_degeneracy {
        0.0
    } else {
        state
            .m
            .values
            .iter()
            .map(|&m| diffusivity(m, eps, params.alpha, false))
            .fold(0.0f64, f64::max)
    };

    let grad_rho = gradient(&state.rho);
    let mf = face_m(&state.m);
    let vel = taxis_velocity(&mf, &grad_rho, eps, params.gamma);
    let max_v = vel.max_abs();

    let dt_diff = if max_d > 0.0 {
        h * h / (2.0 * dim * max_d)
    } else {
        f64::INFINITY
    };
    let dt_adv = if max_v > 0.0 {
        h / (2.0 * max_v)
    } else {
        f64::INFINITY
    };
    config.cfl_safety * dt_diff.min(dt_adv).min(config.dt_max)
}

/// Solve (I - dt lap) u = rhs where u carries the same Dirichlet trace b as
/// `rhs`; shifting by b reduces to a zero-trace Helmholtz problem.
fn helmholtz_solve(rhs: &ScalarField, dt: f64) -> Result<ScalarField> {
    let grid = &rhs.grid;
    let b = rhs.boundary_value;
    let shifted: Vec<f64> = rhs.values.iter().map(|&v| v - b).collect();

    let solved = if grid.dim() == 1 {
        let n = grid.nx();
        let h2 = grid.spacing()[0] * grid.spacing()[0];
        let off = -dt / h2;
        let diag = |i: usize| {
            if i == 0 || i == n - 1 {
                1.0 + 3.0 * dt / h2
            } else {
                1.0 + 2.0 * dt / h2
            }
        };
        // Thomas algorithm
        let mut c_prime = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut denom = diag(0);
        c_prime[0] = off / denom;
        d[0] = shifted[0] / denom;
        for i in 1..n {
            denom = diag(i) - off * c_prime[i - 1];
            c_prime[i] = off / denom;
            d[i] = (shifted[i] - off * d[i - 1]) / denom;
        }
        let mut x = vec![0.0; n];
        x[n - 1] = d[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = d[i] - c_prime[i] * x[i + 1];
        }
        x
    } else {
        helmholtz_cg(grid, &shifted, dt)?
    };

    Ok(ScalarField {
        grid: grid.clone(),
        values: solved.iter().map(|&u| u + b).collect(),
        boundary_value: b,
    })
}

fn helmholtz_cg(grid: &Grid, rhs: &[f64], dt: f64) -> Result<Vec<f64>> {
    let n = grid.n_cells();
    let apply = |v: &[f64]| -> Vec<f64> {
        let field = ScalarField {
            grid: grid.clone(),
            values: v.to_vec(),
            boundary_value: 0.0,
        };
        let lap = laplacian_dirichlet(&field);
        v.iter().zip(&lap.values).map(|(x, l)| x - dt * l).collect()
    };
    let b_norm = rhs.iter().map(|x| x * x).sum::<f64>().sqrt();
    if b_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut rs_old: f64 = r.iter().map(|v| v * v).sum();
    let tol = 1e-12;
    let max_iter = 10 * n;
    for _ in 0..max_iter {
        if rs_old.sqrt() <= tol * b_norm {
            return Ok(x);
        }
        let ap = apply(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        let alpha = rs_old / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rs_new / rs_old;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs_old = rs_new;
    }
    Err(Error::SolverNoConvergence {
        residual: rs_old.sqrt() / b_norm,
        iterations: max_iter,
    })
}

/// One IMEX step of size dt; requires dt <= stable_dt.
pub fn step(state: &State, params: &ModelParams, config: &SolverConfig, dt: f64) -> Result<State> {
    let limit = stable_dt(state, params, config);
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::UnstableTimeStep { dt, limit });
    }
    let grid = state.grid();
    let eps = config.eps_reg();

    // (a) nutrient: implicit diffusion, then semi-implicit reaction
    let rho_diffused = helmholtz_solve(&state.rho, dt)?;
    let g1 = params.g_linear_coeff();
    let rho_new = ScalarField {
        grid: grid.clone(),
        values: rho_diffused
            .values
            .iter()
            .zip(&state.m.values)
            .map(|(&r, &m)| r / (1.0 + dt * (g1 + params.g2_slope(r) * m)))
            .collect(),
        boundary_value: state.rho.boundary_value,
    };

    // (b) biomass: explicit conservative flux, then split reaction
    let grad_m = gradient(&state.m);
    let grad_rho = gradient(&rho_new);
    let mf = face_m(&state.m);
    let vel = taxis_velocity(&mf, &grad_rho, eps, params.gamma);

    // total face flux: D grad M - velocity * upwinded M
    let mut flux = VectorField::zeros(grid.clone());
    let nx = grid.nx();
    let ny = grid.ny();
    for iy in 0..ny {
        for ix in 0..=nx {
            let j = iy * (nx + 1) + ix;
            let d = if config.disable_degeneracy {
                0.0 // linear diffusion handled implicitly below
            } else {
                diffusivity(mf.components[0][j], eps, params.alpha, false)
            };
            let u = vel.components[0][j];
            let m_up = if u > 0.0 {
                if ix == 0 {
                    state.m.boundary_value
                } else {
                    state.m.values[grid.idx(ix - 1, iy)]
                }
            } else if ix == nx {
                state.m.boundary_value
            } else {
                state.m.values[grid.idx(ix, iy)]
            };
            flux.components[0][j] = d * grad_m.components[0][j] - u * m_up;
        }
    }
    if grid.dim() == 2 {
        for iy in 0..=ny {
            for ix in 0..nx {
                let j = iy * nx + ix;
                let d = if config.disable_degeneracy {
                    0.0
                } else {
                    diffusivity(mf.components[1][j], eps, params.alpha, false)
                };
                let u = vel.components[1][j];
                let m_up = if u > 0.0 {
                    if iy == 0 {
                        state.m.boundary_value
                    } else {
                        state.m.values[grid.idx(ix, iy - 1)]
                    }
                } else if iy == ny {
                    state.m.boundary_value
                } else {
                    state.m.values[grid.idx(ix, iy)]
                };
                flux.components[1][j] = d * grad_m.components[1][j] - u * m_up;
            }
        }
    }

    let div = divergence(&flux);
    let mut transported = ScalarField {
        grid: grid.clone(),
        values: state
            .m
            .values
            .iter()
            .zip(&div.values)
            .map(|(&m, &dv)| m + dt * dv)
            .collect(),
        boundary_value: state.m.boundary_value,
    };
    if config.disable_degeneracy {
        // constant-diffusivity contrast mode: the diffusion is linear, so an
        // implicit solve (with its infinite propagation speed) replaces the
        // explicit degenerate flux
        transported = helmholtz_solve(&transported, dt)?;
    }

    // reaction f = F5 M + f_tilde, the linear part integrated exactly
    let f5 = params.linear_coeff();
    let decay = (-f5 * dt).exp();
    let m_new = ScalarField {
        grid: grid.clone(),
        values: transported
            .values
            .iter()
            .zip(&rho_new.values)
            .map(|(&m, &r)| {
                let s = m.max(0.0).powf(params.beta);
                m * decay - dt * params.f_tilde_raw(s, r.max(0.0))
            })
            .collect(),
        boundary_value: state.m.boundary_value,
    };

    let time = state.time + dt;
    if !m_new.is_finite() || !rho_new.is_finite() {
        return Err(Error::NonFiniteState {
            time,
            detail: "non-finite value after IMEX step".to_string(),
        });
    }
    Ok(State {
        m: m_new,
        rho: rho_new,
        time,
    })
}

/// Convex combination of two states at an intermediate time.
fn interpolate(a: &State, b: &State, t: f64) -> State {
    let theta = if b.time > a.time {
        ((t - a.time) / (b.time - a.time)).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let lerp = |x: &ScalarField, y: &ScalarField| ScalarField {
        grid: x.grid.clone(),
        values: x
            .values
            .iter()
            .zip(&y.values)
            .map(|(&u, &v)| (1.0 - theta) * u + theta * v)
            .collect(),
        boundary_value: x.boundary_value,
    };
    State {
        m: lerp(&a.m, &b.m),
        rho: lerp(&a.rho, &b.rho),
        time: t,
    }
}

/// Snapshot times: the start, every `snapshot_every`, and the end.
fn snapshot_times(t0: f64, config: &SolverConfig) -> Vec<f64> {
    let t_end = t0 + config.t_end;
    let mut times = vec![t0];
    let mut k = 1u64;
    loop {
        let t = t0 + k as f64 * config.snapshot_every;
        if t >= t_end - 1e-12 {
            break;
        }
        times.push(t);
        k += 1;
    }
    if config.t_end > 0.0 {
        times.push(t_end);
    }
    times
}

/// Advance to t_end with adaptive dt, recording snapshots at the configured
/// cadence (linear interpolation between bracketing steps).
pub fn evolve(state0: &State, params: &ModelParams, config: &SolverConfig) -> Result<Trajectory> {
    config.validate()?;
    let provenance = Provenance {
        config_hash: config_hash(config),
        model_hash: model_hash(params),
    };
    let times = snapshot_times(state0.time, config);
    let t_end = state0.time + config.t_end;

    let mut snapshots = vec![state0.clone()];
    let mut next = 1;
    let mut cur = state0.clone();
    while cur.time < t_end - 1e-12 {
        let dt = stable_dt(&cur, params, config).min(t_end - cur.time);
        let new = step(&cur, params, config, dt)?;
        while next < times.len() && times[next] <= new.time + 1e-12 {
            snapshots.push(interpolate(&cur, &new, times[next]));
            next += 1;
        }
        cur = new;
    }
    Ok(Trajectory {
        snapshots,
        provenance,
    })
}

/// One paired snapshot: difference norms plus the degenerate pairing
/// integral int (M1^(a+1) - M2^(a+1)) (M1 - M2).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PairRecord {
    pub time: f64,
    pub norms: DiffNorms,
    pub degenerate_pairing: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairTrajectory {
    pub a: Trajectory,
    pub b: Trajectory,
    pub records: Vec<PairRecord>,
}

fn pair_record(
    ws: &NormWorkspace,
    a: &State,
    b: &State,
    alpha: f64,
) -> Result<PairRecord> {
    let w = a.m.sub(&b.m)?;
    let v = a.rho.sub(&b.rho)?;
    let hm1 = hminus1_norm(ws, &w)?;
    let l2 = lp_norm(&v, 2.0)?;
    let vol = a.grid().cell_volume();
    let pairing = a
        .m
        .values
        .iter()
        .zip(&b.m.values)
        .map(|(&m1, &m2)| (m1.powf(alpha + 1.0) - m2.powf(alpha + 1.0)) * (m1 - m2))
        .sum::<f64>()
        * vol;
    Ok(PairRecord {
        time: a.time,
        norms: DiffNorms::from_components(hm1, l2),
        degenerate_pairing: pairing,
    })
}

/// Advance two states in lockstep (shared dt sequence) and record difference
/// norms at every snapshot time.
pub fn evolve_pair(
    state_a: &State,
    state_b: &State,
    params: &ModelParams,
    config: &SolverConfig,
) -> Result<PairTrajectory> {
    config.validate()?;
    if state_a.grid() != state_b.grid() {
        return Err(Error::GridMismatch);
    }
    if state_a.time != state_b.time {
        return Err(Error::InvalidParameter(
            "paired states must start at the same time".to_string(),
        ));
    }
    let provenance = Provenance {
        config_hash: config_hash(config),
        model_hash: model_hash(params),
    };
    let ws = NormWorkspace::new(state_a.grid().clone());
    let times = snapshot_times(state_a.time, config);
    let t_end = state_a.time + config.t_end;

    let mut snaps_a = vec![state_a.clone()];
    let mut snaps_b = vec![state_b.clone()];
    let mut records = vec![pair_record(&ws, state_a, state_b, params.alpha)?];
    let mut next = 1;
    let (mut cur_a, mut cur_b) = (state_a.clone(), state_b.clone());
    while cur_a.time < t_end - 1e-12 {
        let dt = stable_dt(&cur_a, params, config)
            .min(stable_dt(&cur_b, params, config))
            .min(t_end - cur_a.time);
        let new_a = step(&cur_a, params, config, dt)?;
        let new_b = step(&cur_b, params, config, dt)?;
        while next < times.len() && times[next] <= new_a.time + 1e-12 {
            let sa = interpolate(&cur_a, &new_a, times[next]);
            let sb = interpolate(&cur_b, &new_b, times[next]);
            records.push(pair_record(&ws, &sa, &sb, params.alpha)?);
            snaps_a.push(sa);
            snaps_b.push(sb);
            next += 1;
        }
        cur_a = new_a;
        cur_b = new_b;
    }
    Ok(PairTrajectory {
        a: Trajectory {
            snapshots: snaps_a,
            provenance: provenance.clone(),
        },
        b: Trajectory {
            snapshots: snaps_b,
            provenance,
        },
        records,
    })
}

/// Manifest entry for one persisted snapshot pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnapshotFiles {
    pub time: f64,
    pub m_file: String,
    pub rho_file: String,
    pub m_sha256: String,
    pub rho_sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryManifest {
    pub provenance: Provenance,
    pub times: Vec<f64>,
    pub snapshots: Vec<SnapshotFiles>,
}

/// Write a trajectory as manifest.json plus one field-file pair per
/// snapshot (M_####.fld / rho_####.fld), hashing every file.
pub fn persist_trajectory(dir: &std::path::Path, traj: &Trajectory) -> Result<TrajectoryManifest> {
    std::fs::create_dir_all(dir)?;
    let mut snapshots = Vec::new();
    for (k, s) in traj.snapshots().iter().enumerate() {
        let m_file = format!("M_{k:04}.fld");
        let rho_file = format!("rho_{k:04}.fld");
        crate::fld::write_field(&dir.join(&m_file), &s.m)?;
        crate::fld::write_field(&dir.join(&rho_file), &s.rho)?;
        let m_sha256 = hex::encode(Sha256::digest(std::fs::read(dir.join(&m_file))?));
        let rho_sha256 = hex::encode(Sha256::digest(std::fs::read(dir.join(&rho_file))?));
        snapshots.push(SnapshotFiles {
            time: s.time,
            m_file,
            rho_file,
            m_sha256,
            rho_sha256,
        });
    }
    let manifest = TrajectoryManifest {
        provenance: traj.provenance.clone(),
        times: traj.snapshots().iter().map(|s| s.time).collect(),
        snapshots,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(dir.join("manifest.json"), json + "\n")?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::integrate;
    use crate::model::{CustomSpec, NonlinearitySpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn grid1d(n: usize) -> Grid {
        Grid::new(1, &[1.0], &[n]).unwrap()
    }

    fn bump(grid: Grid, amplitude: f64, center: f64, radius: f64) -> ScalarField {
        ScalarField::from_fn(grid, 0.0, move |x, _| {
            let r = (x - center) / radius;
            if r.abs() < 1.0 {
                amplitude * (1.0 - r * r).powi(2)
            } else {
                0.0
            }
        })
    }

    fn quick_config(t_end: f64) -> SolverConfig {
        SolverConfig {
            t_end,
            snapshot_every: t_end.max(0.05) / 4.0,
            ..SolverConfig::default()
        }
    }

    /// f = g = 0 entirely: pure transport, exact mass conservation.
    fn transport_only() -> NonlinearitySpec {
        NonlinearitySpec::Custom(CustomSpec {
            f: Arc::new(|_, _| 0.0),
            g: Arc::new(|_, _| 0.0),
            f_tilde: Arc::new(|_, _| 0.0),
            g2: Arc::new(|_| 0.0),
            linear_coeff: 0.0,
        })
    }

    #[test]
    fn stable_dt_examples() {
        let grid = grid1d(64);
        let h = 1.0 / 64.0;
        let state = State::new(
            ScalarField::zeros(grid.clone()),
            ScalarField::constant(grid, 1.0, 1.0),
            0.0,
        )
        .unwrap();
        let params = ModelParams::example2_default();
        let mut config = SolverConfig {
            reg_n: 10,
            dt_max: 1e9,
            cfl_safety: 1.0,
            ..SolverConfig::default()
        };
        // M = 0, grad rho = 0: only the diffusive bound with D = 0.1^4
        let expect = h * h / (2.0 * 0.1f64.powi(4));
        let got = stable_dt(&state, &params, &config);
        assert!((got - expect).abs() < 1e-9 * expect, "{got} vs {expect}");

        config.cfl_safety = 0.5;
        let half = stable_dt(&state, &params, &config);
        assert!((half - 0.5 * got).abs() < 1e-12 * got);

        // doubled resolution quarters the diffusive bound
        let grid2 = grid1d(128);
        let state2 = State::new(
            ScalarField::zeros(grid2.clone()),
            ScalarField::constant(grid2, 1.0, 1.0),
            0.0,
        )
        .unwrap();
        config.cfl_safety = 1.0;
        let fine = stable_dt(&state2, &params, &config);
        assert!((fine - 0.25 * got).abs() < 1e-9 * got);
    }

    #[test]
    fn step_rejects_oversized_dt() {
        let grid = grid1d(32);
        let state = State::new(
            bump(grid.clone(), 1.0, 0.5, 0.2),
            ScalarField::constant(grid, 1.0, 1.0),
            0.0,
        )
        .unwrap();
        let params = ModelParams::example2_default();
        let config = SolverConfig::default();
        let limit = stable_dt(&state, &params, &config);
        assert!(matches!(
            step(&state, &params, &config, 10.0 * limit),
            Err(Error::UnstableTimeStep { .. })
        ));
    }

    #[test]
    fn zero_biomass_stays_exactly_zero() {
        let grid = grid1d(48);
        let rho0 = ScalarField::from_fn(grid.clone(), 1.0, |x, _| 1.0 + 0.5 * (3.0 * x).sin());
        let state = State::new(ScalarField::zeros(grid), rho0, 0.0).unwrap();
        let params = ModelParams::example2_default();
        let traj = evolve(&state, &params, &quick_config(0.2)).unwrap();
        for s in traj.snapshots() {
            assert!(s.m.values.iter().all(|&v| v == 0.0), "M drifted off zero");
        }
    }

    #[test]
    fn zero_reaction_keeps_rho_at_one() {
        let grid = grid1d(48);
        let state = State::new(
            bump(grid.clone(), 1.0, 0.5, 0.2),
            ScalarField::constant(grid, 1.0, 1.0),
            0.0,
        )
        .unwrap();
        let params = ModelParams::new(4.0, 3.5, 3.2, NonlinearitySpec::Example1Counterexample);
        let traj = evolve(&state, &params, &quick_config(0.2)).unwrap();
        for s in traj.snapshots() {
            for &r in &s.rho.values {
                assert!((r - 1.0).abs() < 1e-12, "rho = {r}");
            }
        }
    }

    #[test]
    fn mass_conserved_without_reaction() {
        // compact bump away from the boundary, f = g = 0: the conservative
        // flux telescopes and the boundary flux vanishes on zero cells
        let grid = grid1d(128);
        let m0 = bump(grid.clone(), 1.0, 0.5, 0.15);
        let state = State::new(m0, ScalarField::constant(grid, 1.0, 1.0), 0.0).unwrap();
        let params = ModelParams::new(4.0, 3.5, 3.2, transport_only());
        let config = SolverConfig::default();
        let mass0 = integrate(&state.m);
        let mut cur = state;
        for _ in 0..50 {
            let dt = stable_dt(&cur, &params, &config);
            cur = step(&cur, &params, &config, dt).unwrap();
            assert!((integrate(&cur.m) - mass0).abs() < 1e-12, "mass drifted");
        }
    }

    #[test]
    fn positivity_on_random_initial_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let params = ModelParams::example2_default();
        let config = quick_config(0.05);
        for _ in 0..50 {
            let grid = grid1d(32);
            let m_vals: Vec<f64> = (0..32).map(|_| rng.gen_range(0.0..2.0)).collect();
            let r_vals: Vec<f64> = (0..32).map(|_| rng.gen_range(0.0..2.0)).collect();
            let state = State::new(
                ScalarField::new(grid.clone(), m_vals, 0.0).unwrap(),
                ScalarField::new(grid, r_vals, 1.0).unwrap(),
                0.0,
            )
            .unwrap();
            let traj = evolve(&state, &params, &config).unwrap();
            for s in traj.snapshots() {
                assert!(s.m.min_value() >= 0.0, "min M = {}", s.m.min_value());
                assert!(s.rho.min_value() >= 0.0, "min rho = {}", s.rho.min_value());
            }
        }
    }

    #[test]
    fn rho_respects_maximum_principle() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let params = ModelParams::example2_default();
        let config = quick_config(0.1);
        for _ in 0..10 {
            let grid = grid1d(40);
            let m_vals: Vec<f64> = (0..40).map(|_| rng.gen_range(0.0..1.5)).collect();
            let r_vals: Vec<f64> = (0..40).map(|_| rng.gen_range(0.0..2.0)).collect();
            let state = State::new(
                ScalarField::new(grid.clone(), m_vals, 0.0).unwrap(),
                ScalarField::new(grid, r_vals, 1.0).unwrap(),
                0.0,
            )
            .unwrap();
            let cap = state.rho.max_value().max(1.0);
            let traj = evolve(&state, &params, &config).unwrap();
            for s in traj.snapshots() {
                assert!(s.rho.max_value() <= cap + 1e-12);
                assert!(s.rho.min_value() >= 0.0);
            }
        }
    }

    #[test]
    fn zero_t_end_gives_single_snapshot() {
        let grid = grid1d(16);
        let state = State::new(
            ScalarField::zeros(grid.clone()),
            ScalarField::constant(grid, 1.0, 1.0),
            0.0,
        )
        .unwrap();
        let params = ModelParams::example2_default();
        let config = SolverConfig {
            t_end: 0.0,
            ..SolverConfig::default()
        };
        let traj = evolve(&state, &params, &config).unwrap();
        assert_eq!(traj.snapshots().len(), 1);
        assert_eq!(traj.snapshots()[0], state);
    }

    #[test]
    fn semigroup_property() {
        // fixed dt below every stability bound makes the two stepping
        // schedules coincide, so the composition must match tightly
        let grid = grid1d(32);
        let state = State::new(
            bump(grid.clone(), 1.0, 0.5, 0.25),
            ScalarField::from_fn(grid, 1.0, |x, _| 1.0 + 0.2 * (2.0 * x).sin()),
            0.0,
        )
        .unwrap();
        let params = ModelParams::example2_default();
        let config = |t_end: f64| SolverConfig {
            dt_max: 2e-5,
            cfl_safety: 1.0,
            t_end,
            snapshot_every: t_end.max(0.01),
            ..SolverConfig::default()
        };
        let two_stage_mid = evolve(&state, &params, &config(0.05)).unwrap();
        let two_stage = evolve(two_stage_mid.last(), &params, &config(0.05)).unwrap();
        let direct = evolve(&state, &params, &config(0.1)).unwrap();
        let diff = two_stage.last().m.sub(&direct.last().m).unwrap();
        assert!(diff.max_abs() < 1e-10, "semigroup gap {}", diff.max_abs());
        let diff_rho = two_stage.last().rho.sub(&direct.last().rho).unwrap();
        assert!(diff_rho.max_abs() < 1e-10);
    }

    #[test]
    fn lockstep_identical_inputs_bitwise() {
        let grid = grid1d(40);
        let state = State::new(
            bump(grid.clone(), 1.0, 0.4, 0.2),
            ScalarField::constant(grid, 1.0, 1.0),
            0.0,
        )
        .unwrap();
        let params = ModelParams::example2_default();
        let pair = evolve_pair(&state, &state, &params, &quick_config(0.1)).unwrap();
        for (sa, sb) in pair.a.snapshots().iter().zip(pair.b.snapshots()) {
            assert_eq!(sa, sb);
        }
        for r in &pair.records {
            assert_eq!(r.norms.x_combined, 0.0);
            assert_eq!(r.degenerate_pairing, 0.0);
        }
    }

    #[test]
    fn pair_initial_norms_match_definitions() {
        let grid = grid1d(64);
        let m0 = bump(grid.clone(), 1.0, 0.5, 0.2);
        let rho_a = ScalarField::constant(grid.clone(), 1.0, 1.0);
        let eps = 1e-2;
        let rho_b = ScalarField::from_fn(grid.clone(), 1.0, move |x, _| {
            1.0 + eps * (std::f64::consts::PI * x).sin()
        });
        let a = State::new(m0.clone(), rho_a, 0.0).unwrap();
        let b = State::new(m0, rho_b, 0.0).unwrap();
        let params = ModelParams::example2_default();
        let pair = evolve_pair(&a, &b, &params, &quick_config(0.05)).unwrap();
        let first = &pair.records[0];
        assert_eq!(first.norms.h_minus1_w, 0.0);
        // ||eps sin(pi x)||_L2 = eps/sqrt(2)
        let expect = eps / 2.0f64.sqrt();
        assert!((first.norms.l2_v - expect).abs() < 1e-4);
    }

    #[test]
    fn self_convergence_order() {
        // L1 restriction comparison across h, h/2, h/4 on a smooth bump
        let run = |n: usize| {
            let grid = grid1d(n);
            let state = State::new(
                bump(grid.clone(), 1.0, 0.5, 0.3),
                ScalarField::constant(grid, 1.0, 1.0),
                0.0,
            )
            .unwrap();
            let params = ModelParams::example2_default();
            let config = SolverConfig {
                t_end: 0.05,
                snapshot_every: 0.05,
                ..SolverConfig::default()
            };
            evolve(&state, &params, &config).unwrap().last().m.clone()
        };
        let restrict = |f: &ScalarField| -> Vec<f64> {
            f.values.chunks_exact(2).map(|c| 0.5 * (c[0] + c[1])).collect()
        };
        let l1 = |a: &[f64], b: &[f64]| -> f64 {
            a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
        };
        let (c, m, f) = (run(32), run(64), run(128));
        let e1 = l1(&restrict(&m), &c.values);
        let e2 = l1(&restrict(&f), &m.values);
        let order = (e1 / e2).log2();
        assert!(order >= 0.9, "self-convergence order {order}");
    }

    #[test]
    fn regularization_ladder_decreasing() {
        let run = |reg_n: u32| {
            let grid = grid1d(64);
            let state = State::new(
                bump(grid.clone(), 1.0, 0.5, 0.2),
                ScalarField::constant(grid, 1.0, 1.0),
                0.0,
            )
            .unwrap();
            let params = ModelParams::example2_default();
            let config = SolverConfig {
                reg_n,
                t_end: 0.2,
                snapshot_every: 0.2,
                ..SolverConfig::default()
            };
            evolve(&state, &params, &config).unwrap().last().m.clone()
        };
        let (m10, m20, m40) = (run(10), run(20), run(40));
        let d1 = lp_norm(&m10.sub(&m20).unwrap(), 2.0).unwrap();
        let d2 = lp_norm(&m20.sub(&m40).unwrap(), 2.0).unwrap();
        assert!(d2 < d1, "ladder not decreasing: {d1} then {d2}");
    }

    #[test]
    fn contrast_mode_spreads_support_in_one_step() {
        let grid = grid1d(64);
        let m0 = bump(grid.clone(), 1.0, 0.5, 0.1);
        let state = State::new(m0, ScalarField::constant(grid, 1.0, 1.0), 0.0).unwrap();
        let params = ModelParams::example2_default();
        let config = SolverConfig {
            disable_degeneracy: true,
            ..SolverConfig::default()
        };
        let dt = stable_dt(&state, &params, &config);
        let after = step(&state, &params, &config, dt).unwrap();
        // implicit linear diffusion couples every cell immediately
        assert!(after.m.values.iter().all(|&v| v > 1e-300));
    }

    #[test]
    fn config_validation() {
        let mut c = SolverConfig::default();
        assert!(c.validate().is_ok());
        c.reg_n = 0;
        assert!(c.validate().is_err());
        c = SolverConfig {
            dt_max: -1.0,
            ..SolverConfig::default()
        };
        assert!(c.validate().is_err());
        c = SolverConfig {
            cfl_safety: 1.5,
            ..SolverConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn state_rejects_negative_data() {
        let grid = grid1d(8);
        let neg = ScalarField::new(grid.clone(), vec![-0.1; 8], 0.0).unwrap();
        let ok = ScalarField::constant(grid, 1.0, 1.0);
        assert!(State::new(neg, ok, 0.0).is_err());
    }
}
