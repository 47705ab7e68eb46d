//! Pair-stability study: lockstep evolution of base/perturbed pairs across a
//! ladder of perturbation amplitudes, measuring the empirical stability
//! constant sup_t x(t)/x(0) and the largest bounded sup-norm exponent.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::experiments::{
    bump_field, write_csv, write_dat, ExperimentConfig, ExperimentReport, Verdict,
};
use crate::grid::ScalarField;
use crate::solver::{config_hash, evolve_pair, model_hash, Provenance, State};

#[derive(Debug, Clone, Serialize)]
pub struct EpsilonRecord {
    pub epsilon: f64,
    pub x0: f64,
    /// sup_t x(t)/x(0), the empirical Lipschitz constant over the window
    pub l0: f64,
    /// largest candidate exponent theta with
    /// sup_t ||(W,v)(t)||_inf / x(0)^theta below the ratio cap
    pub theta_inf: Option<f64>,
    pub max_pairing: f64,
    pub skipped: bool,
}

pub fn run(config: &ExperimentConfig, study_dir: &Path) -> Result<ExperimentReport> {
    let params = config.model_params()?;
    let grid = config.grid.build()?;
    let tol = &config.study.tolerances;
    let lx = grid.lengths()[0];
    let ly = if grid.dim() == 2 { grid.lengths()[1] } else { 0.0 };
    let dim = grid.dim();

    let m0 = bump_field(
        &grid,
        config.ensemble.amplitude,
        [0.5 * lx, 0.5 * ly],
        0.25 * lx,
    );
    let rho0 = ScalarField::constant(grid.clone(), 1.0, 1.0);
    let base = State::new(m0.clone(), rho0, 0.0)?;

    let epsilons = config.study.epsilons.clone();
    let results: Vec<(EpsilonRecord, Vec<(f64, f64)>)> = epsilons
        .par_iter()
        .map(|&eps| {
            // perturb the nutrient only: x(0) is then exactly the L2 norm of
            // the sine profile
            let rho_pert = ScalarField::from_fn(grid.clone(), 1.0, move |x, y| {
                let pi = std::f64::consts::PI;
                let mut p = (pi * x / lx).sin();
                if dim == 2 {
                    p *= (pi * y / ly).sin();
                }
                1.0 + eps * p
            });
            let perturbed = State::new(m0.clone(), rho_pert, 0.0)?;
            let traj = evolve_pair(&base, &perturbed, &params, &config.solver)?;
            let x0 = traj.records[0].norms.x_combined;
            if x0 == 0.0 {
                return Ok((
                    EpsilonRecord {
                        epsilon: eps,
                        x0,
                        l0: f64::NAN,
                        theta_inf: None,
                        max_pairing: 0.0,
                        skipped: true,
                    },
                    Vec::new(),
                ));
            }
            let ratio_series: Vec<(f64, f64)> = traj
                .records
                .iter()
                .map(|r| (r.time, r.norms.x_combined / x0))
                .collect();
            let l0 = ratio_series.iter().map(|&(_, v)| v).fold(0.0f64, f64::max);
            let max_pairing = traj
                .records
                .iter()
                .map(|r| r.degenerate_pairing)
                .fold(0.0f64, f64::max);

            // sup-norm exponent ladder
            let sup_diff = traj
                .a
                .snapshots()
                .iter()
                .zip(traj.b.snapshots())
                .map(|(sa, sb)| {
                    let w = sa.m.sub(&sb.m).map(|d| d.max_abs()).unwrap_or(f64::NAN);
                    let v = sa.rho.sub(&sb.rho).map(|d| d.max_abs()).unwrap_or(f64::NAN);
                    w.max(v)
                })
                .fold(0.0f64, f64::max);
            let theta_inf = [1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1]
                .iter()
                .find(|&&theta| sup_diff / x0.powf(theta) <= tol.ratio_cap)
                .copied();

            Ok((
                EpsilonRecord {
                    epsilon: eps,
                    x0,
                    l0,
                    theta_inf,
                    max_pairing,
                    skipped: false,
                },
                ratio_series,
            ))
        })
        .collect::<Result<_>>()?;

    let records: Vec<EpsilonRecord> = results.iter().map(|(r, _)| r.clone()).collect();
    for (record, series) in &results {
        if !series.is_empty() {
            write_dat(
                &study_dir.join(format!("ratio_eps_{:e}.dat", record.epsilon)),
                series,
            )?;
        }
    }
    write_csv(
        &study_dir.join("runs.csv"),
        "epsilon,x0,l0,theta_inf,max_pairing",
        &records
            .iter()
            .map(|r| {
                vec![
                    r.epsilon,
                    r.x0,
                    r.l0,
                    r.theta_inf.unwrap_or(f64::NAN),
                    r.max_pairing,
                ]
            })
            .collect::<Vec<_>>(),
    )?;

    let active: Vec<&EpsilonRecord> = records.iter().filter(|r| !r.skipped).collect();
    let mut verdicts = Vec::new();
    if !active.is_empty() {
        let max_l0 = active.iter().map(|r| r.l0).fold(0.0f64, f64::max);
        verdicts.push(Verdict::new(
            "l0_bounded",
            max_l0.is_finite() && max_l0 <= tol.ratio_cap,
            max_l0,
            tol.ratio_cap,
            "ratio_cap",
            "empirical stability ratio must stay bounded".to_string(),
        ));
        if active.len() >= 2 {
            let min_l0 = active.iter().map(|r| r.l0).fold(f64::INFINITY, f64::min);
            let spread = max_l0 / min_l0.max(1e-300) - 1.0;
            verdicts.push(Verdict::new(
                "l0_stable_across_epsilon",
                spread <= tol.epsilon_stability,
                spread,
                tol.epsilon_stability,
                "epsilon_stability",
                "linearity regime: ratio spread across perturbation sizes".to_string(),
            ));
        }
    }

    let all_skipped = records.iter().all(|r| r.skipped);
    let records_json = serde_json::json!({
        "per_epsilon": records,
        "all_skipped": all_skipped,
    });
    Ok(ExperimentReport::new(
        "pair",
        records_json,
        verdicts,
        Provenance {
            config_hash: config_hash(&config.solver),
            model_hash: model_hash(&params),
        },
    ))
}
