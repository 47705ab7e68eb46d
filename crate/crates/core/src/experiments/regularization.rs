//! Regularization-ladder study: the solutions of the nondegenerate
//! approximations must converge as n grows, observed through successive
//! differences ||M_n - M_2n||_L2 at the final time.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::experiments::{bump_field, write_csv, ExperimentConfig, ExperimentReport, Verdict};
use crate::grid::ScalarField;
use crate::norms::lp_norm;
use crate::solver::{config_hash, evolve, model_hash, Provenance, State};

#[derive(Debug, Clone, Serialize)]
pub struct LadderRecord {
    pub reg_n: u32,
    pub final_l2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DifferenceRecord {
    pub n_coarse: u32,
    pub n_fine: u32,
    pub l2_difference: f64,
}

pub fn run(config: &ExperimentConfig, study_dir: &Path) -> Result<ExperimentReport> {
    let params = config.model_params()?;
    let grid = config.grid.build()?;
    let lx = grid.lengths()[0];
    let ly = if grid.dim() == 2 { grid.lengths()[1] } else { 0.0 };

    let m0 = bump_field(
        &grid,
        config.ensemble.amplitude,
        [0.5 * lx, 0.5 * ly],
        0.25 * lx,
    );
    let rho0 = ScalarField::constant(grid.clone(), 1.0, 1.0);
    let state0 = State::new(m0, rho0, 0.0)?;

    let ladder = config.study.reg_ladder.clone();
    let finals: Vec<(u32, ScalarField)> = ladder
        .par_iter()
        .map(|&n| {
            let mut solver = config.solver.clone();
            solver.reg_n = n;
            let traj = evolve(&state0, &params, &solver)?;
            Ok((n, traj.last().m.clone()))
        })
        .collect::<Result<_>>()?;

    let records: Vec<LadderRecord> = finals
        .iter()
        .map(|(n, m)| {
            Ok(LadderRecord {
                reg_n: *n,
                final_l2: lp_norm(m, 2.0)?,
            })
        })
        .collect::<Result<_>>()?;
    let mut differences = Vec::new();
    for pair in finals.windows(2) {
        let (n0, m_coarse) = &pair[0];
        let (n1, m_fine) = &pair[1];
        differences.push(DifferenceRecord {
            n_coarse: *n0,
            n_fine: *n1,
            l2_difference: lp_norm(&m_coarse.sub(m_fine)?, 2.0)?,
        });
    }

    write_csv(
        &study_dir.join("runs.csv"),
        "n_coarse,n_fine,l2_difference",
        &differences
            .iter()
            .map(|d| vec![d.n_coarse as f64, d.n_fine as f64, d.l2_difference])
            .collect::<Vec<_>>(),
    )?;

    let mut verdicts = Vec::new();
    if differences.len() >= 2 {
        let strictly_decreasing = differences
            .windows(2)
            .all(|w| w[1].l2_difference < w[0].l2_difference);
        let worst_ratio = differences
            .windows(2)
            .map(|w| w[1].l2_difference / w[0].l2_difference.max(1e-300))
            .fold(0.0f64, f64::max);
        verdicts.push(Verdict::new(
            "ladder_strictly_decreasing",
            strictly_decreasing,
            worst_ratio,
            1.0,
            "decay_sign",
            "successive approximation differences must shrink as n doubles".to_string(),
        ));
    }

    // extrapolated convergence order in n (reported, not asserted)
    let order = if differences.len() >= 2 {
        let rates: Vec<f64> = differences
            .windows(2)
            .map(|w| (w[0].l2_difference / w[1].l2_difference.max(1e-300)).log2())
            .collect();
        Some(rates.iter().sum::<f64>() / rates.len() as f64)
    } else {
        None
    };

    let records_json = serde_json::json!({
        "ladder": records,
        "differences": differences,
        "extrapolated_order": order,
    });
    Ok(ExperimentReport::new(
        "regularization",
        records_json,
        verdicts,
        Provenance {
            config_hash: config_hash(&config.solver),
            model_hash: model_hash(&params),
        },
    ))
}
