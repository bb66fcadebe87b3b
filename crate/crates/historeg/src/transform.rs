//! Transform models: rigid and affine maps of the plane plus a first-order
//! (multilinear) B-spline displacement field, combined additively as
//! `y(x) = affine(x) + u(x)`.
//!
//! All transforms map physical reference coordinates to physical template
//! coordinates.

use crate::error::{Error, Result};

/// Rigid motion: rotation by `angle` about `center`, then translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rigid2D {
    pub angle: f64,
    pub translation: (f64, f64),
    pub center: (f64, f64),
}

impl Rigid2D {
    pub fn new(angle: f64, translation: (f64, f64), center: (f64, f64)) -> Self {
        Self {
            angle,
            translation,
            center,
        }
    }

    pub fn identity() -> Self {
        Self::new(0.0, (0.0, 0.0), (0.0, 0.0))
    }

    pub fn apply(&self, p: (f64, f64)) -> (f64, f64) {
        let (c, s) = (self.angle.cos(), self.angle.sin());
        let dx = p.0 - self.center.0;
        let dy = p.1 - self.center.1;
        (
            self.center.0 + c * dx - s * dy + self.translation.0,
            self.center.1 + s * dx + c * dy + self.translation.1,
        )
    }
}

/// Affine map `y = A x + b` with coefficients
/// `y1 = a[0] x1 + a[1] x2 + a[2]`, `y2 = a[3] x1 + a[4] x2 + a[5]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine2D {
    pub a: [f64; 6],
}

impl Affine2D {
    pub fn identity() -> Self {
        Self {
            a: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        }
    }

    /// Expands a rigid motion into affine coefficients.
    pub fn from_rigid(r: &Rigid2D) -> Self {
        let (c, s) = (r.angle.cos(), r.angle.sin());
        let bx = r.translation.0 + r.center.0 - (c * r.center.0 - s * r.center.1);
        let by = r.translation.1 + r.center.1 - (s * r.center.0 + c * r.center.1);
        Self {
            a: [c, -s, bx, s, c, by],
        }
    }

    pub fn apply(&self, p: (f64, f64)) -> (f64, f64) {
        (
            self.a[0] * p.0 + self.a[1] * p.1 + self.a[2],
            self.a[3] * p.0 + self.a[4] * p.1 + self.a[5],
        )
    }

    /// The constant Jacobian `[[dy1/dx1, dy1/dx2], [dy2/dx1, dy2/dx2]]`.
    pub fn jacobian(&self) -> [[f64; 2]; 2] {
        [[self.a[0], self.a[1]], [self.a[3], self.a[4]]]
    }
}

/// Displacement field parameterized by first-order B-splines: multilinear
/// interpolation of control-point displacements on a regular grid spanning
/// the reference domain, extended as a constant outside it.
#[derive(Debug, Clone, PartialEq)]
pub struct BSplineField {
    nx: usize,
    ny: usize,
    origin: (f64, f64),
    spacing: (f64, f64),
    /// `2 * ny * nx` values: the x-displacement plane followed by the
    /// y-displacement plane, each row-major.
    coeffs: Vec<f64>,
}

/// Interpolation footprint of one evaluation point: four control indices into
/// a coefficient plane and their multilinear weights.
#[derive(Debug, Clone, Copy)]
pub struct CellWeights {
    pub idx: [usize; 4],
    pub w: [f64; 4],
}

impl BSplineField {
    /// A zero field with `nx * ny` control points spanning
    /// `[origin, origin + extent]`; both axes need at least two points.
    pub fn zeros(nx: usize, ny: usize, origin: (f64, f64), extent: (f64, f64)) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidTransform(format!(
                "control grid {nx}x{ny} needs at least 2 points per axis"
            )));
        }
        if !(extent.0 > 0.0 && extent.1 > 0.0) {
            return Err(Error::InvalidTransform(format!(
                "control domain extent {extent:?} must be positive"
            )));
        }
        Ok(Self {
            nx,
            ny,
            origin,
            spacing: (extent.0 / (nx - 1) as f64, extent.1 / (ny - 1) as f64),
            coeffs: vec![0.0; 2 * nx * ny],
        })
    }

    /// Rebuilds a field from stored parts; `coeffs` is laid out as in
    /// [`BSplineField::coeffs`].
    pub fn from_parts(
        nx: usize,
        ny: usize,
        origin: (f64, f64),
        extent: (f64, f64),
        coeffs: Vec<f64>,
    ) -> Result<Self> {
        let mut field = Self::zeros(nx, ny, origin, extent)?;
        if coeffs.len() != field.coeffs.len() {
            return Err(Error::InvalidTransform(format!(
                "{} coefficients for a {nx}x{ny} grid (expected {})",
                coeffs.len(),
                field.coeffs.len()
            )));
        }
        field.coeffs = coeffs;
        Ok(field)
    }

    pub fn grid_size(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn origin(&self) -> (f64, f64) {
        self.origin
    }

    pub fn spacing(&self) -> (f64, f64) {
        self.spacing
    }

    pub fn extent(&self) -> (f64, f64) {
        (
            self.spacing.0 * (self.nx - 1) as f64,
            self.spacing.1 * (self.ny - 1) as f64,
        )
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    /// Number of scalar parameters (`2 * nx * ny`).
    pub fn dof(&self) -> usize {
        self.coeffs.len()
    }

    /// Physical location of control point `(p, q)` (column, row).
    pub fn control_point(&self, p: usize, q: usize) -> (f64, f64) {
        (
            self.origin.0 + p as f64 * self.spacing.0,
            self.origin.1 + q as f64 * self.spacing.1,
        )
    }

    /// Indices and weights of the four control points that influence `p`.
    /// Points outside the control domain clamp to the boundary, which
    /// realizes the constant extension.
    pub fn weights_at(&self, p: (f64, f64)) -> CellWeights {
        let u = ((p.0 - self.origin.0) / self.spacing.0).clamp(0.0, (self.nx - 1) as f64);
        let v = ((p.1 - self.origin.1) / self.spacing.1).clamp(0.0, (self.ny - 1) as f64);
        let p0 = (u.floor() as usize).min(self.nx - 2);
        let q0 = (v.floor() as usize).min(self.ny - 2);
        let fu = u - p0 as f64;
        let fv = v - q0 as f64;
        let base = q0 * self.nx + p0;
        CellWeights {
            idx: [base, base + 1, base + self.nx, base + self.nx + 1],
            w: [
                (1.0 - fu) * (1.0 - fv),
                fu * (1.0 - fv),
                (1.0 - fu) * fv,
                fu * fv,
            ],
        }
    }

    /// Displacement `u(p) = (u1, u2)`.
    pub fn displacement(&self, p: (f64, f64)) -> (f64, f64) {
        let cw = self.weights_at(p);
        let plane = self.nx * self.ny;
        let mut u1 = 0.0;
        let mut u2 = 0.0;
        for k in 0..4 {
            u1 += cw.w[k] * self.coeffs[cw.idx[k]];
            u2 += cw.w[k] * self.coeffs[plane + cw.idx[k]];
        }
        (u1, u2)
    }

    /// Spatial Jacobian `[[du1/dx, du1/dy], [du2/dx, du2/dy]]`; zero outside
    /// the control domain where the field is constant.
    pub fn jacobian(&self, p: (f64, f64)) -> [[f64; 2]; 2] {
        let u = (p.0 - self.origin.0) / self.spacing.0;
        let v = (p.1 - self.origin.1) / self.spacing.1;
        let inside_x = (0.0..=(self.nx - 1) as f64).contains(&u);
        let inside_y = (0.0..=(self.ny - 1) as f64).contains(&v);
        let uc = u.clamp(0.0, (self.nx - 1) as f64);
        let vc = v.clamp(0.0, (self.ny - 1) as f64);
        let p0 = (uc.floor() as usize).min(self.nx - 2);
        let q0 = (vc.floor() as usize).min(self.ny - 2);
        let fu = uc - p0 as f64;
        let fv = vc - q0 as f64;
        let plane = self.nx * self.ny;
        let base = q0 * self.nx + p0;
        let idx = [base, base + 1, base + self.nx, base + self.nx + 1];
        let mut jac = [[0.0; 2]; 2];
        for (comp, row) in jac.iter_mut().enumerate() {
            let c = &self.coeffs[comp * plane..];
            let (c00, c01, c10, c11) = (c[idx[0]], c[idx[1]], c[idx[2]], c[idx[3]]);
            let du = (1.0 - fv) * (c01 - c00) + fv * (c11 - c10);
            let dv = (1.0 - fu) * (c10 - c00) + fu * (c11 - c01);
            row[0] = if inside_x { du / self.spacing.0 } else { 0.0 };
            row[1] = if inside_y { dv / self.spacing.1 } else { 0.0 };
        }
        jac
    }

    /// Resamples the field onto an `nx * ny` control grid over the same
    /// domain. Exact when the new grid refines the old one (nested knots),
    /// since a multilinear field is reproduced by finer multilinear
    /// interpolation.
    pub fn prolong(&self, nx: usize, ny: usize) -> Result<Self> {
        let mut out = Self::zeros(nx, ny, self.origin, self.extent())?;
        let plane = nx * ny;
        for q in 0..ny {
            for p in 0..nx {
                let (u1, u2) = self.displacement(out.control_point(p, q));
                out.coeffs[q * nx + p] = u1;
                out.coeffs[plane + q * nx + p] = u2;
            }
        }
        Ok(out)
    }
}

/// Full registration result: affine part plus optional non-parametric
/// displacement, composed additively.
#[derive(Debug, Clone, PartialEq)]
pub struct Transform {
    pub affine: Affine2D,
    pub field: Option<BSplineField>,
}

impl Transform {
    pub fn identity() -> Self {
        Self {
            affine: Affine2D::identity(),
            field: None,
        }
    }

    pub fn from_affine(affine: Affine2D) -> Self {
        Self {
            affine,
            field: None,
        }
    }

    /// Maps a reference point into the template domain.
    pub fn apply(&self, p: (f64, f64)) -> (f64, f64) {
        let (mut x, mut y) = self.affine.apply(p);
        if let Some(field) = &self.field {
            let (u1, u2) = field.displacement(p);
            x += u1;
            y += u2;
        }
        (x, y)
    }

    /// Jacobian of the map at `p`.
    pub fn jacobian(&self, p: (f64, f64)) -> [[f64; 2]; 2] {
        let mut j = self.affine.jacobian();
        if let Some(field) = &self.field {
            let ju = field.jacobian(p);
            for r in 0..2 {
                for c in 0..2 {
                    j[r][c] += ju[r][c];
                }
            }
        }
        j
    }
}

/// Extremes of the transform Jacobian over a pixel grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobianStats {
    /// Smallest determinant; positive means the map is locally invertible
    /// and orientation-preserving everywhere it was sampled.
    pub min_det: f64,
    pub max_det: f64,
    /// Largest relative area change `|det - 1|`.
    pub max_area_change: f64,
}

/// Evaluates the Jacobian determinant at every pixel center of a
/// `width * height` grid with the given spacing and origin.
pub fn jacobian_stats(
    transform: &Transform,
    width: usize,
    height: usize,
    spacing: f64,
    origin: (f64, f64),
) -> JacobianStats {
    let mut stats = JacobianStats {
        min_det: f64::INFINITY,
        max_det: f64::NEG_INFINITY,
        max_area_change: 0.0,
    };
    for i in 0..height {
        let y = origin.1 + (i as f64 + 0.5) * spacing;
        for j in 0..width {
            let x = origin.0 + (j as f64 + 0.5) * spacing;
            let m = transform.jacobian((x, y));
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            stats.min_det = stats.min_det.min(det);
            stats.max_det = stats.max_det.max(det);
            stats.max_area_change = stats.max_area_change.max((det - 1.0).abs());
        }
    }
    stats
}
