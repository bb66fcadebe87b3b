//! Curvature regularizer for B-spline displacement fields:
//!
//! ```text
//! CURV(u) = 1/2 * s1 * s2 * sum_points ((lap u1)^2 + (lap u2)^2)
//! ```
//!
//! with the Laplacian discretized by 3-point second differences per axis,
//! centered at interior control points and shifted one step inward at grid
//! borders so every coefficient is penalized. Second differences of linear
//! functions vanish for any 3-point placement, so affine displacement fields
//! carry exactly zero penalty: the regularizer punishes bending, not rigid or
//! affine motion. The gradient is assembled through the exact adjoint of the
//! stencils, making it the exact gradient of the discrete value.

use crate::transform::BSplineField;

/// Curvature penalty on a fixed control-grid geometry.
#[derive(Debug, Clone)]
pub struct CurvatureOp {
    nx: usize,
    ny: usize,
    inv_s1_sq: f64,
    inv_s2_sq: f64,
    /// `s1 * s2`, the control-cell area weight.
    cell_area: f64,
    lap: Vec<f64>,
}

impl CurvatureOp {
    /// Builds the operator for fields with `geometry`'s grid and spacing.
    pub fn new(geometry: &BSplineField) -> Self {
        let (nx, ny) = geometry.grid_size();
        let (s1, s2) = geometry.spacing();
        Self {
            nx,
            ny,
            inv_s1_sq: 1.0 / (s1 * s1),
            inv_s2_sq: 1.0 / (s2 * s2),
            cell_area: s1 * s2,
            lap: vec![0.0; nx * ny],
        }
    }

    /// Number of scalar coefficients expected (`2 * nx * ny`).
    pub fn dof(&self) -> usize {
        2 * self.nx * self.ny
    }

    /// Stencil centers: interior points use themselves, border points reuse
    /// the adjacent interior stencil (shifted second difference).
    fn centers(p: usize, n: usize) -> usize {
        p.clamp(1, n - 2)
    }

    fn laplacian(&self, plane: &[f64], out: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        for q in 0..ny {
            let cy = Self::centers(q, ny);
            for p in 0..nx {
                let cx = Self::centers(p, nx);
                let mut v = 0.0;
                if nx >= 3 {
                    let i = q * nx + cx;
                    v += (plane[i + 1] - 2.0 * plane[i] + plane[i - 1]) * self.inv_s1_sq;
                }
                if ny >= 3 {
                    let i = cy * nx + p;
                    v += (plane[i + nx] - 2.0 * plane[i] + plane[i - nx]) * self.inv_s2_sq;
                }
                out[q * nx + p] = v;
            }
        }
    }

    /// Penalty value for `coeffs` (layout as in [`BSplineField::coeffs`]).
    pub fn value(&mut self, coeffs: &[f64]) -> f64 {
        debug_assert_eq!(coeffs.len(), self.dof());
        let plane_len = self.nx * self.ny;
        let mut total = 0.0;
        for plane in [&coeffs[..plane_len], &coeffs[plane_len..]] {
            let mut lap = std::mem::take(&mut self.lap);
            self.laplacian(plane, &mut lap);
            total += lap.iter().map(|v| v * v).sum::<f64>();
            self.lap = lap;
        }
        0.5 * self.cell_area * total
    }

    /// Value of `weight * CURV`; accumulates `weight * dCURV/dcoeffs` into
    /// `grad` (adjoint Laplacian scatter).
    pub fn accumulate_value_and_gradient(
        &mut self,
        coeffs: &[f64],
        weight: f64,
        grad: &mut [f64],
    ) -> f64 {
        debug_assert_eq!(coeffs.len(), self.dof());
        debug_assert_eq!(grad.len(), self.dof());
        let plane_len = self.nx * self.ny;
        let nx = self.nx;
        let mut total = 0.0;
        for (plane, gplane) in [
            (&coeffs[..plane_len], 0usize),
            (&coeffs[plane_len..], plane_len),
        ] {
            let mut lap = std::mem::take(&mut self.lap);
            self.laplacian(plane, &mut lap);
            let g = &mut grad[gplane..gplane + plane_len];
            let w = weight * self.cell_area;
            for q in 0..self.ny {
                let cy = Self::centers(q, self.ny);
                for p in 0..nx {
                    let cx = Self::centers(p, nx);
                    let v = lap[q * nx + p];
                    total += v * v;
                    let wv = w * v;
                    if nx >= 3 {
                        let i = q * nx + cx;
                        let s = wv * self.inv_s1_sq;
                        g[i - 1] += s;
                        g[i] -= 2.0 * s;
                        g[i + 1] += s;
                    }
                    if self.ny >= 3 {
                        let i = cy * nx + p;
                        let s = wv * self.inv_s2_sq;
                        g[i - nx] += s;
                        g[i] -= 2.0 * s;
                        g[i + nx] += s;
                    }
                }
            }
            self.lap = lap;
        }
        weight * 0.5 * self.cell_area * total
    }
}
