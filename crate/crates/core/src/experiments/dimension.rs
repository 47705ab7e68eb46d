//! Dimension study: embed post-transient snapshots as coarse feature
//! vectors and estimate the box-counting dimension of the resulting cloud.

use std::path::Path;

use serde::Serialize;

use crate::analysis::{box_counting_dimension, coarse_features, BoxCountFit};
use crate::error::{Error, Result};
use crate::experiments::{bump_field, write_csv, ExperimentConfig, ExperimentReport, Verdict};
use crate::grid::ScalarField;
use crate::solver::{config_hash, evolve, model_hash, Provenance, State};

const FEATURE_BINS: usize = 16;

#[derive(Debug, Clone, Serialize)]
pub struct DimensionRecord {
    pub n_snapshots_total: usize,
    pub n_points: usize,
    pub transient_cut: f64,
    pub fit: BoxCountFit,
    /// max coordinate spread of the cloud, the collapse indicator
    pub cloud_extent: f64,
}

pub fn run(config: &ExperimentConfig, study_dir: &Path) -> Result<ExperimentReport> {
    let params = config.model_params()?;
    let grid = config.grid.build()?;
    let knobs = &config.study;
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

    // ensure a usable post-transient record regardless of the run horizon
    let mut solver = config.solver.clone();
    let required = knobs.transient_cut + 30.0 * solver.snapshot_every;
    solver.t_end = solver.t_end.max(required);

    let traj = evolve(&state0, &params, &solver)?;
    let points: Vec<Vec<f64>> = traj
        .snapshots()
        .iter()
        .filter(|s| s.time > knobs.transient_cut)
        .map(|s| {
            let mut feats = coarse_features(&s.m, FEATURE_BINS);
            feats.extend(coarse_features(&s.rho, FEATURE_BINS));
            feats
        })
        .collect();
    if points.len() < 10 {
        return Err(Error::TooFewSnapshots {
            min: 10,
            got: points.len(),
        });
    }

    let dims = points[0].len();
    let mut extent = 0.0f64;
    for d in 0..dims {
        let lo = points.iter().map(|p| p[d]).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(|p| p[d]).fold(f64::NEG_INFINITY, f64::max);
        extent = extent.max(hi - lo);
    }

    let fit = box_counting_dimension(&points, &knobs.radii)?;
    let record = DimensionRecord {
        n_snapshots_total: traj.snapshots().len(),
        n_points: points.len(),
        transient_cut: knobs.transient_cut,
        fit: fit.clone(),
        cloud_extent: extent,
    };

    write_csv(
        &study_dir.join("runs.csv"),
        "radius,box_count",
        &fit
            .counts
            .iter()
            .map(|&(r, n)| vec![r, n as f64])
            .collect::<Vec<_>>(),
    )?;

    let tol = &knobs.tolerances;
    let verdicts = vec![Verdict::new(
        "dimension_finite",
        fit.dim.is_finite() && fit.residual.is_finite() && fit.dim >= -1e-9,
        fit.dim,
        tol.ratio_cap,
        "ratio_cap",
        "estimated snapshot-cloud dimension must be a finite nonnegative \
         number"
            .to_string(),
    )];

    let records_json = serde_json::to_value(&record)?;
    Ok(ExperimentReport::new(
        "dimension",
        records_json,
        verdicts,
        Provenance {
            config_hash: config_hash(&config.solver),
            model_hash: model_hash(&params),
        },
    ))
}
