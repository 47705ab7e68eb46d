//! Norms and seminorms of the stability analysis, including the discrete
//! H^-1 norm computed through the Dirichlet-Poisson solve
//! `-lap phi = w`, `||w||_{H^-1} = ||grad phi||_{L^2}`.

use serde::Serialize;

use crate::analysis::CellMask;
use crate::error::{Error, Result};
use crate::grid::{gradient, inner_product, laplacian_dirichlet, Grid, ScalarField};

/// Cached solver context for repeated H^-1 evaluations on one grid.
///
/// 1D uses a direct tridiagonal factorization of the Dirichlet Laplacian;
/// 2D falls back to conjugate gradients with a relative tolerance.
pub struct NormWorkspace {
    grid: Grid,
    tolerance: f64,
    tridiag: Option<TridiagFactor>,
}

/// Precomputed Thomas-algorithm factors for -lap in 1D.
struct TridiagFactor {
    /// modified superdiagonal c'
    c_prime: Vec<f64>,
    /// elimination denominators b_i - a * c'_{i-1}
    denom: Vec<f64>,
    /// off-diagonal entry (-1/h^2)
    off: f64,
}

impl NormWorkspace {
    pub fn new(grid: Grid) -> Self {
        Self::with_tolerance(grid, 1e-10)
    }

    pub fn with_tolerance(grid: Grid, tolerance: f64) -> Self {
        let tridiag = if grid.dim() == 1 {
            Some(TridiagFactor::build(&grid))
        } else {
            None
        };
        Self {
            grid,
            tolerance,
            tridiag,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Solve -lap(phi) = w with phi = 0 on the boundary.
    pub fn solve_poisson(&self, w: &ScalarField) -> Result<ScalarField> {
        if w.grid != self.grid {
            return Err(Error::GridMismatch);
        }
        match &self.tridiag {
            Some(f) => Ok(ScalarField {
                grid: self.grid.clone(),
                values: f.solve(&w.values),
                boundary_value: 0.0,
            }),
            None => self.solve_cg(w),
        }
    }

    fn solve_cg(&self, w: &ScalarField) -> Result<ScalarField> {
        let n = self.grid.n_cells();
        let apply = |v: &[f64]| -> Vec<f64> {
            let field = ScalarField {
                grid: self.grid.clone(),
                values: v.to_vec(),
                boundary_value: 0.0,
            };
            laplacian_dirichlet(&field)
                .values
                .iter()
                .map(|x| -x)
                .collect()
        };
        let b = &w.values;
        let b_norm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if b_norm == 0.0 {
            return Ok(ScalarField::zeros(self.grid.clone()));
        }
        let mut x = vec![0.0; n];
        let mut r = b.clone();
        let mut p = r.clone();
        let mut rs_old: f64 = r.iter().map(|v| v * v).sum();
        let max_iter = 20 * n;
        for _ in 0..max_iter {
            if rs_old.sqrt() <= self.tolerance * b_norm {
                return Ok(ScalarField {
                    grid: self.grid.clone(),
                    values: x,
                    boundary_value: 0.0,
                });
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
}

impl TridiagFactor {
    fn build(grid: &Grid) -> Self {
        let n = grid.nx();
        let h2 = grid.spacing()[0] * grid.spacing()[0];
        let off = -1.0 / h2;
        // -lap with mirrored ghosts: diag 3/h^2 at the two boundary cells,
        // 2/h^2 inside
        let diag = |i: usize| {
            if i == 0 || i == n - 1 {
                3.0 / h2
            } else {
                2.0 / h2
            }
        };
        let mut c_prime = vec![0.0; n];
        let mut denom = vec![0.0; n];
        denom[0] = diag(0);
        c_prime[0] = off / denom[0];
        for i in 1..n {
            denom[i] = diag(i) - off * c_prime[i - 1];
            c_prime[i] = off / denom[i];
        }
        Self {
            c_prime,
            denom,
            off,
        }
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let mut d = vec![0.0; n];
        d[0] = rhs[0] / self.denom[0];
        for i in 1..n {
            d[i] = (rhs[i] - self.off * d[i - 1]) / self.denom[i];
        }
        let mut x = vec![0.0; n];
        x[n - 1] = d[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = d[i] - self.c_prime[i] * x[i + 1];
        }
        x
    }
}

/// (integral |f|^p)^(1/p) by midpoint quadrature; max |f| for p = infinity.
pub fn lp_norm(f: &ScalarField, p: f64) -> Result<f64> {
    if p.is_infinite() {
        return Ok(f.max_abs());
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("p must be >= 1, got {p}")));
    }
    let vol = f.grid.cell_volume();
    let sum: f64 = f.values.iter().map(|v| v.abs().powf(p)).sum();
    Ok((sum * vol).powf(1.0 / p))
}

/// ||grad f||_{L^2} with the Dirichlet trace of `f`.
pub fn h1_seminorm(f: &ScalarField) -> f64 {
    gradient(f).l2_norm()
}

/// Discrete H^-1 norm of a zero-trace difference field.
pub fn hminus1_norm(ws: &NormWorkspace, w: &ScalarField) -> Result<f64> {
    let phi = ws.solve_poisson(w)?;
    Ok(h1_seminorm(&phi))
}

/// Same quantity through the duality route sqrt(integral w*phi); used as an
/// internal consistency check of the pseudo-inverse identities.
pub fn hminus1_norm_via_duality(ws: &NormWorkspace, w: &ScalarField) -> Result<f64> {
    let phi = ws.solve_poisson(w)?;
    Ok(inner_product(w, &phi)?.max(0.0).sqrt())
}

/// Product-space norm on X = H^-1 x L^2.
pub fn x_norm(ws: &NormWorkspace, w: &ScalarField, v: &ScalarField) -> Result<f64> {
    if w.grid != v.grid {
        return Err(Error::GridMismatch);
    }
    let a = hminus1_norm(ws, w)?;
    let b = lp_norm(v, 2.0)?;
    Ok((a * a + b * b).sqrt())
}

/// sup over cell-center pairs at distance >= one spacing of
/// |f(x)-f(y)| / |x-y|^theta.
pub fn holder_seminorm(f: &ScalarField, theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "theta must lie in (0, 1], got {theta}"
        )));
    }
    let grid = &f.grid;
    let n = grid.n_cells();
    let min_dist = grid.min_spacing() * (1.0 - 1e-12);
    let mut sup = 0.0f64;
    for i in 0..n {
        let ci = grid.cell_center(i);
        for j in (i + 1)..n {
            let cj = grid.cell_center(j);
            let d = ((ci[0] - cj[0]).powi(2) + (ci[1] - cj[1]).powi(2)).sqrt();
            if d < min_dist {
                continue;
            }
            let ratio = (f.values[i] - f.values[j]).abs() / d.powf(theta);
            sup = sup.max(ratio);
        }
    }
    Ok(sup)
}

/// L^2 norm restricted to masked cells.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MaskedNorm {
    pub value: f64,
    /// set when the mask was empty (value is 0 by convention)
    pub empty_mask: bool,
}

pub fn sublevel_l2_norm(f: &ScalarField, mask: &CellMask) -> Result<MaskedNorm> {
    if f.grid != *mask.grid() {
        return Err(Error::GridMismatch);
    }
    if mask.count() == 0 {
        return Ok(MaskedNorm {
            value: 0.0,
            empty_mask: true,
        });
    }
    let vol = f.grid.cell_volume();
    let sum: f64 = mask
        .indices()
        .map(|i| f.values[i] * f.values[i] * vol)
        .sum();
    Ok(MaskedNorm {
        value: sum.sqrt(),
        empty_mask: false,
    })
}

/// Time-summed masked L^2 norm over a snapshot slice:
/// sqrt( sum_k ||u^k||^2_{L^2(mask)} dt ).
pub fn sublevel_l2_time_norm(
    slice: &[ScalarField],
    mask: &CellMask,
    dt: f64,
) -> Result<MaskedNorm> {
    let mut sum = 0.0;
    let mut empty = false;
    for f in slice {
        let m = sublevel_l2_norm(f, mask)?;
        empty |= m.empty_mask;
        sum += m.value * m.value * dt;
    }
    Ok(MaskedNorm {
        value: sum.sqrt(),
        empty_mask: empty,
    })
}

/// Masked sum of squared second differences (the discrete H^2 ingredient),
/// taken only at masked cells whose axis neighbours are also masked.
fn second_difference_sq(f: &ScalarField, mask: &CellMask) -> f64 {
    let grid = &f.grid;
    let nx = grid.nx();
    let ny = grid.ny();
    let vol = grid.cell_volume();
    let mut sum = 0.0;
    for iy in 0..ny {
        for ix in 0..nx {
            let i = grid.idx(ix, iy);
            if !mask.get(i) {
                continue;
            }
            let mut d2 = 0.0;
            let mut interior = true;
            if ix == 0 || ix == nx - 1 {
                interior = false;
            } else {
                let l = grid.idx(ix - 1, iy);
                let r = grid.idx(ix + 1, iy);
                if mask.get(l) && mask.get(r) {
                    let hx2 = grid.spacing()[0] * grid.spacing()[0];
                    d2 += (f.values[l] - 2.0 * f.values[i] + f.values[r]) / hx2;
                } else {
                    interior = false;
                }
            }
            if grid.dim() == 2 {
                if iy == 0 || iy == ny - 1 {
                    interior = false;
                } else {
                    let b = grid.idx(ix, iy - 1);
                    let t = grid.idx(ix, iy + 1);
                    if mask.get(b) && mask.get(t) {
                        let hy2 = grid.spacing()[1] * grid.spacing()[1];
                        d2 += (f.values[b] - 2.0 * f.values[i] + f.values[t]) / hy2;
                    } else {
                        interior = false;
                    }
                }
            }
            if interior {
                sum += d2 * d2 * vol;
            }
        }
    }
    sum
}

/// Discrete parabolic W^{(1,2),2} norm of a uniform-dt snapshot slice on a
/// masked subdomain: second differences on the mask interior, discrete time
/// derivative, and the zeroth-order L^2 term.
pub fn parabolic_z_norm(slice: &[ScalarField], mask: &CellMask, dt: f64) -> Result<f64> {
    if slice.len() < 2 {
        return Err(Error::TooFewSnapshots {
            min: 2,
            got: slice.len(),
        });
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be > 0, got {dt}")));
    }
    let mut sum = 0.0;
    for f in slice {
        sum += second_difference_sq(f, mask) * dt;
        let l2 = sublevel_l2_norm(f, mask)?;
        sum += l2.value * l2.value * dt;
    }
    let vol = slice[0].grid.cell_volume();
    for k in 0..slice.len() - 1 {
        let mut dsum = 0.0;
        for i in mask.indices() {
            let d = (slice[k + 1].values[i] - slice[k].values[i]) / dt;
            dsum += d * d * vol;
        }
        sum += dsum * dt;
    }
    Ok(sum.sqrt())
}

/// Per-snapshot difference norms of a solution pair.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DiffNorms {
    pub h_minus1_w: f64,
    pub l2_v: f64,
    pub x_combined: f64,
    pub y_sublevel: f64,
    pub z_parabolic: f64,
}

impl DiffNorms {
    pub fn from_components(h_minus1_w: f64, l2_v: f64) -> Self {
        Self {
            h_minus1_w,
            l2_v,
            x_combined: (h_minus1_w * h_minus1_w + l2_v * l2_v).sqrt(),
            y_sublevel: 0.0,
            z_parabolic: 0.0,
        }
    }
}

/// Empirical ratio ||w||_inf / (|w|_{C^theta}^{1-theta1} ||w||_{H^-1}^theta1)
/// of the Sobolev interpolation diagnostic. The constant is not pinned by
/// the analysis; only finiteness and positivity are meaningful.
pub fn interpolation_ratio(
    ws: &NormWorkspace,
    w: &ScalarField,
    theta: f64,
    theta1: f64,
) -> Result<f64> {
    let sup = lp_norm(w, f64::INFINITY)?;
    let hol = holder_seminorm(w, theta)?;
    let hm1 = hminus1_norm(ws, w)?;
    Ok(sup / (hol.powf(1.0 - theta1) * hm1.powf(theta1)))
}
