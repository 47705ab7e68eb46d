//! Structured cell-centered grids on axis-aligned boxes and the discrete
//! differential operators built on them.
//!
//! The layout is cell-centered with Dirichlet boundaries handled through
//! ghost cells mirrored across the boundary value: `ghost = 2*b - interior`.
//! This keeps the composition `divergence(gradient(f))` identical to the
//! direct Laplacian stencil and preserves second-order accuracy up to the
//! boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Structured 1D/2D cell-centered mesh over a box domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    lengths: Vec<f64>,
    cells: Vec<usize>,
    spacing: Vec<f64>,
}

impl Grid {
    /// Build a grid; rejects unsupported dimensions, nonpositive lengths and
    /// axes with fewer than 3 cells.
    pub fn new(dim: usize, lengths: &[f64], cells: &[usize]) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::UnsupportedDimension(dim));
        }
        if lengths.len() != dim || cells.len() != dim {
            return Err(Error::InvalidParameter(format!(
                "expected {dim} lengths and cell counts, got {} and {}",
                lengths.len(),
                cells.len()
            )));
        }
        for &l in lengths {
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::NonpositiveLength(l));
            }
        }
        for &n in cells {
            if n < 3 {
                return Err(Error::TooFewCells(n));
            }
        }
        let spacing = lengths
            .iter()
            .zip(cells)
            .map(|(&l, &n)| l / n as f64)
            .collect();
        Ok(Self {
            dim,
            lengths: lengths.to_vec(),
            cells: cells.to_vec(),
            spacing,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn cells_per_axis(&self) -> &[usize] {
        &self.cells
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn n_cells(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Extent along axis 0 (number of cells in x).
    pub fn nx(&self) -> usize {
        self.cells[0]
    }

    /// Extent along axis 1; 1 in one dimension.
    pub fn ny(&self) -> usize {
        if self.dim == 2 {
            self.cells[1]
        } else {
            1
        }
    }

    /// Flat row-major index of cell (ix, iy).
    #[inline]
    pub fn idx(&self, ix: usize, iy: usize) -> usize {
        debug_assert!(ix < self.nx() && iy < self.ny());
        iy * self.nx() + ix
    }

    /// Cell-center coordinates; the y component is 0 in one dimension.
    pub fn cell_center(&self, flat: usize) -> [f64; 2] {
        let nx = self.nx();
        let ix = flat % nx;
        let iy = flat / nx;
        let x = (ix as f64 + 0.5) * self.spacing[0];
        let y = if self.dim == 2 {
            (iy as f64 + 0.5) * self.spacing[1]
        } else {
            0.0
        };
        [x, y]
    }

    /// Euclidean distance between two cell centers.
    pub fn center_distance(&self, a: usize, b: usize) -> f64 {
        let ca = self.cell_center(a);
        let cb = self.cell_center(b);
        ((ca[0] - cb[0]).powi(2) + (ca[1] - cb[1]).powi(2)).sqrt()
    }
}

/// Discrete scalar quantity: one value per cell plus a Dirichlet trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub boundary_value: f64,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>, boundary_value: f64) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::SizeMismatch {
                got: values.len(),
                expected: grid.n_cells(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue(i));
        }
        if !boundary_value.is_finite() {
            return Err(Error::NonFiniteValue(usize::MAX));
        }
        Ok(Self {
            grid,
            values,
            boundary_value,
        })
    }

    pub fn constant(grid: Grid, value: f64, boundary_value: f64) -> Self {
        let n = grid.n_cells();
        Self {
            grid,
            values: vec![value; n],
            boundary_value,
        }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0, 0.0)
    }

    /// Sample a function of the cell-center coordinates.
    pub fn from_fn(grid: Grid, boundary_value: f64, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.n_cells())
            .map(|i| {
                let [x, y] = grid.cell_center(i);
                f(x, y)
            })
            .collect();
        Self {
            grid,
            values,
            boundary_value,
        }
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Pointwise difference; both fields must share a grid. The difference
    /// carries a zero Dirichlet trace only when the traces match.
    pub fn sub(&self, other: &ScalarField) -> Result<ScalarField> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(ScalarField {
            grid: self.grid.clone(),
            values,
            boundary_value: self.boundary_value - other.boundary_value,
        })
    }
}

/// Face-centered vector quantity: one component array per axis.
///
/// Axis 0 faces are indexed `iy * (nx + 1) + ix` with `ix in 0..=nx`;
/// axis 1 faces are indexed `iy * nx + ix` with `iy in 0..=ny`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub grid: Grid,
    pub components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn zeros(grid: Grid) -> Self {
        let components = (0..grid.dim())
            .map(|axis| vec![0.0; face_count(&grid, axis)])
            .collect();
        Self { grid, components }
    }

    /// Largest component magnitude over all faces.
    pub fn max_abs(&self) -> f64 {
        self.components
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// L2 norm with boundary faces carrying half a cell volume.
    ///
    /// The half weight is exactly what makes the discrete duality
    /// `||grad phi||^2 = integral(w * phi)` hold for `-lap phi = w` with a
    /// zero trace.
    pub fn l2_norm(&self) -> f64 {
        let vol = self.grid.cell_volume();
        let nx = self.grid.nx();
        let ny = self.grid.ny();
        let mut sum = 0.0;
        for (axis, comp) in self.components.iter().enumerate() {
            let n_axis = if axis == 0 { nx } else { ny };
            for (j, &v) in comp.iter().enumerate() {
                let along = if axis == 0 { j % (nx + 1) } else { j / nx };
                let w = if along == 0 || along == n_axis {
                    0.5
                } else {
                    1.0
                };
                sum += w * v * v * vol;
            }
        }
        sum.sqrt()
    }
}

pub(crate) fn face_count(grid: &Grid, axis: usize) -> usize {
    let nx = grid.nx();
    let ny = grid.ny();
    if axis == 0 {
        (nx + 1) * ny
    } else {
        nx * (ny + 1)
    }
}

/// Face-centered gradient with ghost-mirrored Dirichlet boundaries.
pub fn gradient(f: &ScalarField) -> VectorField {
    let grid = &f.grid;
    let nx = grid.nx();
    let ny = grid.ny();
    let b = f.boundary_value;
    let mut out = VectorField::zeros(grid.clone());

    let hx = grid.spacing()[0];
    for iy in 0..ny {
        for ix in 0..=nx {
            let g = if ix == 0 {
                // ghost = 2b - f[0]: (f[0] - ghost)/h = 2*(f[0] - b)/h
                2.0 * (f.values[grid.idx(0, iy)] - b) / hx
            } else if ix == nx {
                2.0 * (b - f.values[grid.idx(nx - 1, iy)]) / hx
            } else {
                (f.values[grid.idx(ix, iy)] - f.values[grid.idx(ix - 1, iy)]) / hx
            };
            out.components[0][iy * (nx + 1) + ix] = g;
        }
    }
    if grid.dim() == 2 {
        let hy = grid.spacing()[1];
        for iy in 0..=ny {
            for ix in 0..nx {
                let g = if iy == 0 {
                    2.0 * (f.values[grid.idx(ix, 0)] - b) / hy
                } else if iy == ny {
                    2.0 * (b - f.values[grid.idx(ix, ny - 1)]) / hy
                } else {
                    (f.values[grid.idx(ix, iy)] - f.values[grid.idx(ix, iy - 1)]) / hy
                };
                out.components[1][iy * nx + ix] = g;
            }
        }
    }
    out
}

/// Cell-centered divergence of a face field.
pub fn divergence(field: &VectorField) -> ScalarField {
    let grid = &field.grid;
    let nx = grid.nx();
    let ny = grid.ny();
    let mut values = vec![0.0; grid.n_cells()];

    let hx = grid.spacing()[0];
    for iy in 0..ny {
        for ix in 0..nx {
            let right = field.components[0][iy * (nx + 1) + ix + 1];
            let left = field.components[0][iy * (nx + 1) + ix];
            values[grid.idx(ix, iy)] += (right - left) / hx;
        }
    }
    if grid.dim() == 2 {
        let hy = grid.spacing()[1];
        for iy in 0..ny {
            for ix in 0..nx {
                let top = field.components[1][(iy + 1) * nx + ix];
                let bottom = field.components[1][iy * nx + ix];
                values[grid.idx(ix, iy)] += (top - bottom) / hy;
            }
        }
    }
    ScalarField {
        grid: grid.clone(),
        values,
        boundary_value: 0.0,
    }
}

/// Direct 3-point (1D) / 5-point (2D) Laplacian with ghost-mirrored
/// Dirichlet boundaries; identical to `divergence(gradient(f))`.
pub fn laplacian_dirichlet(f: &ScalarField) -> ScalarField {
    let grid = &f.grid;
    let nx = grid.nx();
    let ny = grid.ny();
    let b = f.boundary_value;
    let mut values = vec![0.0; grid.n_cells()];

    let hx2 = grid.spacing()[0] * grid.spacing()[0];
    for iy in 0..ny {
        for ix in 0..nx {
            let c = f.values[grid.idx(ix, iy)];
            let left = if ix == 0 {
                2.0 * b - c
            } else {
                f.values[grid.idx(ix - 1, iy)]
            };
            let right = if ix == nx - 1 {
                2.0 * b - c
            } else {
                f.values[grid.idx(ix + 1, iy)]
            };
            values[grid.idx(ix, iy)] += (left - 2.0 * c + right) / hx2;
        }
    }
    if grid.dim() == 2 {
        let hy2 = grid.spacing()[1] * grid.spacing()[1];
        for iy in 0..ny {
            for ix in 0..nx {
                let c = f.values[grid.idx(ix, iy)];
                let bottom = if iy == 0 {
                    2.0 * b - c
                } else {
                    f.values[grid.idx(ix, iy - 1)]
                };
                let top = if iy == ny - 1 {
                    2.0 * b - c
                } else {
                    f.values[grid.idx(ix, iy + 1)]
                };
                values[grid.idx(ix, iy)] += (bottom - 2.0 * c + top) / hy2;
            }
        }
    }
    ScalarField {
        grid: grid.clone(),
        values,
        boundary_value: 0.0,
    }
}

/// Midpoint quadrature: sum of cell values times the cell volume.
pub fn integrate(f: &ScalarField) -> f64 {
    f.values.iter().sum::<f64>() * f.grid.cell_volume()
}

/// Midpoint quadrature of the pointwise product of two fields.
pub fn inner_product(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| x * y)
        .sum::<f64>()
        * a.grid.cell_volume())
}
