//! Level-set geometry, cutoff construction, support/propagation diagnostics,
//! decay fitting, and box-counting dimension estimation.

use std::collections::HashSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::norms::holder_seminorm;
use crate::solver::Trajectory;

/// Boolean cell selection with the defining predicate recorded.
#[derive(Debug, Clone)]
pub struct CellMask {
    grid: Grid,
    flags: Vec<bool>,
    predicate: String,
}

impl CellMask {
    pub fn full(grid: Grid) -> Self {
        let n = grid.n_cells();
        Self {
            grid,
            flags: vec![true; n],
            predicate: "all".to_string(),
        }
    }

    pub fn from_predicate(grid: Grid, pred: impl Fn(usize) -> bool, label: &str) -> Self {
        let flags = (0..grid.n_cells()).map(&pred).collect();
        Self {
            grid,
            flags,
            predicate: label.to_string(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn predicate(&self) -> &str {
        &self.predicate
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        self.flags[i]
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&b| b).count()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.flags
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn is_subset_of(&self, other: &CellMask) -> bool {
        self.flags
            .iter()
            .zip(&other.flags)
            .all(|(&a, &b)| !a || b)
    }
}

/// Mask of cells where the field exceeds `delta`.
pub fn sublevel_mask(m0: &ScalarField, delta: f64) -> CellMask {
    CellMask {
        grid: m0.grid.clone(),
        flags: m0.values.iter().map(|&v| v > delta).collect(),
        predicate: format!("M0 > {delta}"),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelsetDistance {
    /// minimum cell-center distance between {M0 <= delta} and {M0 >= 2 delta};
    /// infinite when either set is empty
    pub distance: f64,
    /// delta^(1/theta) * |M0|_{C^theta}^(-1/theta) with the measured seminorm
    pub bound: f64,
    pub holder_seminorm: f64,
    pub lower_set_empty: bool,
    pub upper_set_empty: bool,
    /// one-cell tolerance on the comparison
    pub cell_spacing: f64,
}

/// Distance between the sub- and superlevel sets of `m0` at levels delta and
/// 2*delta, compared against the Hoelder lower bound.
pub fn levelset_distance(m0: &ScalarField, delta: f64, theta: f64) -> Result<LevelsetDistance> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "delta must be positive, got {delta}"
        )));
    }
    let grid = &m0.grid;
    let lower: Vec<usize> = (0..grid.n_cells())
        .filter(|&i| m0.values[i] <= delta)
        .collect();
    let upper: Vec<usize> = (0..grid.n_cells())
        .filter(|&i| m0.values[i] >= 2.0 * delta)
        .collect();

    let seminorm = holder_seminorm(m0, theta)?;
    let bound = if seminorm > 0.0 {
        delta.powf(1.0 / theta) * seminorm.powf(-1.0 / theta)
    } else {
        f64::INFINITY
    };

    let distance = if lower.is_empty() || upper.is_empty() {
        f64::INFINITY
    } else {
        let mut min = f64::INFINITY;
        for &a in &lower {
            for &b in &upper {
                min = min.min(grid.center_distance(a, b));
            }
        }
        min
    };

    Ok(LevelsetDistance {
        distance,
        bound,
        holder_seminorm: seminorm,
        lower_set_empty: lower.is_empty(),
        upper_set_empty: upper.is_empty(),
        cell_spacing: grid.min_spacing(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CutoffReport {
    /// measured max |D phi| / phi^(1-omega) over cells with phi > 0
    pub conformance_constant: f64,
    pub zero_plateau_exact: bool,
    pub one_plateau_exact: bool,
    pub in_unit_interval: bool,
}

/// Cutoff `phi` vanishing on {M0 <= delta0}, equal to 1 on {M0 > delta1},
/// built as a smoothstep of the distance to the lower set:
/// phi = exp((1 - 1/r)/omega) with r = clamp(d/w, 0, 1).
pub fn build_cutoff(
    m0: &ScalarField,
    delta0: f64,
    delta1: f64,
    omega: f64,
) -> Result<(ScalarField, CutoffReport)> {
    if !(0.0 < delta0 && delta0 < delta1) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < delta0 < delta1, got {delta0}, {delta1}"
        )));
    }
    if !(omega > 0.0 && omega < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "omega must lie in (0,1), got {omega}"
        )));
    }
    let grid = &m0.grid;
    let n = grid.n_cells();
    let lower: Vec<usize> = (0..n).filter(|&i| m0.values[i] <= delta0).collect();

    let values = if lower.is_empty() {
        // no low region: the whole domain is the upper plateau
        vec![1.0; n]
    } else {
        // distance to the lower set per cell
        let dist: Vec<f64> = (0..n)
            .map(|i| {
                lower
                    .iter()
                    .map(|&j| grid.center_distance(i, j))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        // transition width: closest approach of the delta1-superlevel set to
        // the lower set, so every cell above delta1 lands on the 1-plateau
        let w = (0..n)
            .filter(|&i| m0.values[i] > delta1)
            .map(|i| dist[i])
            .fold(f64::INFINITY, f64::min);
        let w = if w.is_finite() && w > 0.0 {
            w
        } else {
            grid.min_spacing()
        };
        dist.iter()
            .map(|&d| {
                let r = (d / w).clamp(0.0, 1.0);
                if r <= 0.0 {
                    0.0
                } else if r >= 1.0 {
                    1.0
                } else {
                    ((1.0 - 1.0 / r) / omega).exp()
                }
            })
            .collect()
    };

    let phi = ScalarField::new(grid.clone(), values, 0.0)?;

    // measured conformance |D phi| <= C phi^(1-omega)
    let grad = cell_centered_gradient_magnitude(&phi);
    let mut c_phi = 0.0f64;
    for i in 0..n {
        if phi.values[i] > 0.0 {
            c_phi = c_phi.max(grad[i] / phi.values[i].powf(1.0 - omega));
        }
    }

    let zero_ok = (0..n).all(|i| m0.values[i] >= delta0 || phi.values[i] == 0.0);
    let one_ok = (0..n).all(|i| m0.values[i] <= delta1 || phi.values[i] == 1.0);
    let unit = phi.values.iter().all(|&v| (0.0..=1.0).contains(&v));

    let report = CutoffReport {
        conformance_constant: c_phi,
        zero_plateau_exact: zero_ok,
        one_plateau_exact: one_ok,
        in_unit_interval: unit,
    };
    Ok((phi, report))
}

/// |grad f| at cell centers by central differences (one-sided at the domain
/// edge), ignoring the Dirichlet trace.
pub(crate) fn cell_centered_gradient_magnitude(f: &ScalarField) -> Vec<f64> {
    let grid = &f.grid;
    let nx = grid.nx();
    let ny = grid.ny();
    let hx = grid.spacing()[0];
    let mut out = vec![0.0; grid.n_cells()];
    for iy in 0..ny {
        for ix in 0..nx {
            let i = grid.idx(ix, iy);
            let gx = if ix == 0 {
                (f.values[grid.idx(1, iy)] - f.values[i]) / hx
            } else if ix == nx - 1 {
                (f.values[i] - f.values[grid.idx(nx - 2, iy)]) / hx
            } else {
                (f.values[grid.idx(ix + 1, iy)] - f.values[grid.idx(ix - 1, iy)]) / (2.0 * hx)
            };
            let mut g2 = gx * gx;
            if grid.dim() == 2 {
                let hy = grid.spacing()[1];
                let gy = if iy == 0 {
                    (f.values[grid.idx(ix, 1)] - f.values[i]) / hy
                } else if iy == ny - 1 {
                    (f.values[i] - f.values[grid.idx(ix, ny - 2)]) / hy
                } else {
                    (f.values[grid.idx(ix, iy + 1)] - f.values[grid.idx(ix, iy - 1)]) / (2.0 * hy)
                };
                g2 += gy * gy;
            }
            out[i] = g2.sqrt();
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct SublevelMinima {
    /// (time, min over masked cells) per snapshot
    pub series: Vec<(f64, f64)>,
    pub infimum: f64,
    pub empty_mask: bool,
}

/// Minimum of M over the masked cells, per snapshot and overall.
pub fn min_on_sublevel(traj: &Trajectory, mask: &CellMask) -> Result<SublevelMinima> {
    if mask.count() == 0 {
        return Ok(SublevelMinima {
            series: traj
                .snapshots()
                .iter()
                .map(|s| (s.time, f64::INFINITY))
                .collect(),
            infimum: f64::INFINITY,
            empty_mask: true,
        });
    }
    let mut series = Vec::new();
    let mut inf = f64::INFINITY;
    for s in traj.snapshots() {
        if s.m.grid != *mask.grid() {
            return Err(Error::GridMismatch);
        }
        let min = mask
            .indices()
            .map(|i| s.m.values[i])
            .fold(f64::INFINITY, f64::min);
        inf = inf.min(min);
        series.push((s.time, min));
    }
    Ok(SublevelMinima {
        series,
        infimum: inf,
        empty_mask: false,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SupportMeasure {
    pub measure: f64,
    pub radius: f64,
}

/// Lebesgue measure and centroid radius of {M > tol}.
pub fn support_measure(m: &ScalarField, tol: f64) -> SupportMeasure {
    let grid = &m.grid;
    let supported: Vec<usize> = (0..grid.n_cells())
        .filter(|&i| m.values[i] > tol)
        .collect();
    if supported.is_empty() {
        return SupportMeasure {
            measure: 0.0,
            radius: 0.0,
        };
    }
    let measure = supported.len() as f64 * grid.cell_volume();
    let mut cx = 0.0;
    let mut cy = 0.0;
    for &i in &supported {
        let [x, y] = grid.cell_center(i);
        cx += x;
        cy += y;
    }
    cx /= supported.len() as f64;
    cy /= supported.len() as f64;
    let radius = supported
        .iter()
        .map(|&i| {
            let [x, y] = grid.cell_center(i);
            ((x - cx).powi(2) + (y - cy).powi(2)).sqrt()
        })
        .fold(0.0f64, f64::max);
    SupportMeasure { measure, radius }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoxCountFit {
    pub dim: f64,
    pub residual: f64,
    /// (radius, box count) pairs actually used in the fit
    pub counts: Vec<(f64, usize)>,
}

/// Box-counting dimension: least-squares slope of log N_r against log(1/r),
/// with N_r the number of occupied axis-aligned boxes of side r anchored at
/// the cloud's bounding-box corner.
pub fn box_counting_dimension(points: &[Vec<f64>], radii: &[f64]) -> Result<BoxCountFit> {
    if points.len() < 10 {
        return Err(Error::InvalidParameter(format!(
            "need at least 10 points, got {}",
            points.len()
        )));
    }
    if radii.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "need at least 4 radii, got {}",
            radii.len()
        )));
    }
    let rmin = radii.iter().cloned().fold(f64::INFINITY, f64::min);
    let rmax = radii.iter().cloned().fold(0.0f64, f64::max);
    if !(rmin > 0.0) || rmax / rmin < 10.0 - 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "radii must be positive and span at least one decade, got [{rmin}, {rmax}]"
        )));
    }
    let d = points[0].len();
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::InvalidParameter(
            "points have inconsistent dimension".to_string(),
        ));
    }
    let mut origin = vec![f64::INFINITY; d];
    for p in points {
        for (o, &x) in origin.iter_mut().zip(p) {
            *o = o.min(x);
        }
    }

    let mut counts = Vec::with_capacity(radii.len());
    for &r in radii {
        let mut boxes: HashSet<Vec<i64>> = HashSet::new();
        for p in points {
            let key: Vec<i64> = p
                .iter()
                .zip(&origin)
                .map(|(&x, &o)| ((x - o) / r).floor() as i64)
                .collect();
            boxes.insert(key);
        }
        counts.push((r, boxes.len()));
    }

    // slope of log N vs log(1/r)
    let xs: Vec<f64> = counts.iter().map(|&(r, _)| (1.0 / r).ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|&(_, n)| (n as f64).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let pred = my + slope * (x - mx);
            (y - pred) * (y - pred)
        })
        .sum::<f64>()
        / n)
        .sqrt();

    Ok(BoxCountFit {
        dim: slope,
        residual,
        counts,
    })
}

/// Coarse feature vector: `bins` block averages of the field values (the
/// embedding used for snapshot clouds before box counting).
pub fn coarse_features(f: &ScalarField, bins: usize) -> Vec<f64> {
    let grid = &f.grid;
    let mut sums = vec![0.0; bins];
    let mut cnts = vec![0usize; bins];
    if grid.dim() == 1 {
        let n = grid.nx();
        for i in 0..n {
            let b = (i * bins / n).min(bins - 1);
            sums[b] += f.values[i];
            cnts[b] += 1;
        }
    } else {
        // square-ish block layout
        let side = (bins as f64).sqrt().round() as usize;
        let (bx, by) = (side.max(1), (bins / side.max(1)).max(1));
        let nx = grid.nx();
        let ny = grid.ny();
        for iy in 0..ny {
            for ix in 0..nx {
                let jx = (ix * bx / nx).min(bx - 1);
                let jy = (iy * by / ny).min(by - 1);
                let b = (jy * bx + jx).min(bins - 1);
                sums[b] += f.values[grid.idx(ix, iy)];
                cnts[b] += 1;
            }
        }
    }
    sums.iter()
        .zip(&cnts)
        .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DecayFit {
    pub c_fit: f64,
    pub omega_fit: f64,
    pub d_fit: f64,
    pub residual: f64,
    pub converged: bool,
}

/// Nonlinear least squares for v(t) ~ C exp(-omega t) + D via
/// Levenberg-Marquardt with the log-slope initialization.
pub fn fit_dissipative(series: &[(f64, f64)]) -> Result<DecayFit> {
    if series.len() < 8 {
        return Err(Error::InvalidParameter(format!(
            "need at least 8 samples, got {}",
            series.len()
        )));
    }
    if series.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::InvalidParameter(
            "sample times must be strictly increasing".to_string(),
        ));
    }

    let n = series.len();
    let tail = &series[3 * n / 4..];
    let d0 = tail.iter().map(|&(_, v)| v).sum::<f64>() / tail.len() as f64;
    let head = series[..n.div_ceil(4)]
        .iter()
        .map(|&(_, v)| v)
        .sum::<f64>()
        / n.div_ceil(4) as f64;
    let c0 = head - d0;

    let scale = series.iter().map(|&(_, v)| v.abs()).fold(0.0f64, f64::max);
    if c0.abs() <= 1e-12 * (1.0 + scale) {
        // flat series: degenerate fit convention C = 0
        let residual = rms_residual(series, 0.0, 0.0, d0);
        return Ok(DecayFit {
            c_fit: 0.0,
            omega_fit: 0.0,
            d_fit: d0,
            residual,
            converged: true,
        });
    }

    // initialization A (saturation): D = tail mean, log-slope of (v - D)/C
    let omega0 = log_slope(
        &series
            .iter()
            .filter_map(|&(t, v)| {
                let w = (v - d0) / c0;
                (w > 1e-12).then(|| (t, w.ln()))
            })
            .collect::<Vec<_>>(),
    )
    .map(|s| -s)
    .unwrap_or(0.0);
    let mut best = lm_refine(series, c0, omega0, d0);

    // initialization B (pure exponential, D = 0): catches growing series
    // where the saturation basin is a poor local minimum
    if series.iter().all(|&(_, v)| v > 0.0) {
        let pts: Vec<(f64, f64)> = series.iter().map(|&(t, v)| (t, v.ln())).collect();
        if let Some(slope) = log_slope(&pts) {
            let alt = lm_refine(series, series[0].1, -slope, 0.0);
            if alt.3 < best.3 {
                best = alt;
            }
        }
    }

    let (c, omega, d, cost, converged) = best;
    Ok(DecayFit {
        c_fit: c,
        omega_fit: omega,
        d_fit: d,
        residual: if converged {
            (cost / series.len() as f64).sqrt()
        } else {
            f64::INFINITY
        },
        converged,
    })
}

/// Least-squares slope of y against t.
fn log_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    let stl: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    (stt > 0.0).then(|| stl / stt)
}

/// Levenberg-Marquardt refinement of (C, omega, D) from one starting point;
/// returns (C, omega, D, squared cost, converged).
fn lm_refine(
    series: &[(f64, f64)],
    mut c: f64,
    mut omega: f64,
    mut d: f64,
) -> (f64, f64, f64, f64, bool) {
    let mut lambda = 1e-3;
    let mut cost = sq_residual(series, c, omega, d);
    let mut converged = false;
    for _ in 0..200 {
        // normal equations J^T J + lambda diag, J^T r
        let mut a = [[0.0f64; 3]; 3];
        let mut g = [0.0f64; 3];
        for &(t, v) in series {
            let e = (-omega * t).exp();
            let r = c * e + d - v;
            let j = [e, -c * t * e, 1.0];
            for (i, &ji) in j.iter().enumerate() {
                g[i] += ji * r;
                for (k, &jk) in j.iter().enumerate() {
                    a[i][k] += ji * jk;
                }
            }
        }
        let mut damped = a;
        for (i, row) in damped.iter_mut().enumerate() {
            row[i] += lambda * (a[i][i].max(1e-12));
        }
        let Some(step) = solve3(&damped, &g) else {
            break;
        };
        let trial = (c - step[0], omega - step[1], d - step[2]);
        let trial_cost = sq_residual(series, trial.0, trial.1, trial.2);
        if trial_cost.is_finite() && trial_cost < cost {
            (c, omega, d) = trial;
            let rel = (cost - trial_cost) / cost.max(1e-300);
            cost = trial_cost;
            lambda = (lambda * 0.3).max(1e-12);
            if rel < 1e-14 || step.iter().all(|s| s.abs() < 1e-12) {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                converged = true; // stalled at a (local) optimum
                break;
            }
        }
    }
    (c, omega, d, cost, converged)
}

fn sq_residual(series: &[(f64, f64)], c: f64, omega: f64, d: f64) -> f64 {
    series
        .iter()
        .map(|&(t, v)| {
            let r = c * (-omega * t).exp() + d - v;
            r * r
        })
        .sum()
}

fn rms_residual(series: &[(f64, f64)], c: f64, omega: f64, d: f64) -> f64 {
    (sq_residual(series, c, omega, d) / series.len() as f64).sqrt()
}

fn solve3(a: &[[f64; 3]; 3], b: &[f64; 3]) -> Option<[f64; 3]> {
    let mut m = *a;
    let mut v = *b;
    for col in 0..3 {
        let mut piv = col;
        for row in col + 1..3 {
            if m[row][col].abs() > m[piv][col].abs() {
                piv = row;
            }
        }
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        v.swap(col, piv);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            v[row] -= f * v[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut s = v[row];
        for k in row + 1..3 {
            s -= m[row][k] * x[k];
        }
        x[row] = s / m[row][row];
    }
    Some(x)
}
