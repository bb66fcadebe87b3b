//! Normalized gradient field (NGF) distance and its analytic derivatives.
//!
//! The template is first warped onto the reference grid, `W = T(y(x_i))`,
//! and the distance compares finite-difference gradients of `W` and `R`:
//!
//! ```text
//! NGF = h^2 * sum_i (1 - r_i^2)
//! r_i = (<grad W_i, grad R_i> + eps^2) / sqrt((|grad W_i|^2 + eps^2) (|grad R_i|^2 + eps^2))
//! ```
//!
//! `r_i` is the local gradient alignment (1 where edges are parallel, 0 where
//! uncorrelated); `eps` sets the contrast below which structures are treated
//! as noise. Derivatives follow the same discretization: the chain rule runs
//! through the exact adjoints of the difference operators and the analytic
//! gradient of the bilinear interpolant, so the returned gradient is the
//! exact gradient of the discrete objective.

use crate::image::{
    gradient_x, gradient_x_adjoint, gradient_y, gradient_y_adjoint, Image,
};
use crate::transform::{Affine2D, BSplineField, CellWeights, Rigid2D};
use nalgebra::{SMatrix, SVector};
use rayon::prelude::*;

/// Reference-side data of one resolution level, fixed for the whole solve.
#[derive(Debug, Clone)]
pub struct NgfLevel {
    width: usize,
    height: usize,
    spacing: f64,
    origin: (f64, f64),
    epsilon_sq: f64,
    rx: Vec<f64>,
    ry: Vec<f64>,
    /// Per-pixel `|grad R|^2 + eps^2`.
    dr: Vec<f64>,
}

impl NgfLevel {
    pub fn new(reference: &Image, epsilon: f64) -> Self {
        debug_assert!(epsilon > 0.0);
        let vals = reference.values_f64();
        let (w, h) = (reference.width(), reference.height());
        let sp = reference.spacing();
        let mut rx = vec![0.0; vals.len()];
        let mut ry = vec![0.0; vals.len()];
        gradient_x(&vals, w, h, sp, &mut rx);
        gradient_y(&vals, w, h, sp, &mut ry);
        let epsilon_sq = epsilon * epsilon;
        let dr = rx
            .iter()
            .zip(&ry)
            .map(|(&gx, &gy)| gx * gx + gy * gy + epsilon_sq)
            .collect();
        Self {
            width: w,
            height: h,
            spacing: sp,
            origin: reference.origin(),
            epsilon_sq,
            rx,
            ry,
            dr,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.dr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dr.is_empty()
    }

    fn pixel_x(&self, j: usize) -> f64 {
        self.origin.0 + (j as f64 + 0.5) * self.spacing
    }

    fn pixel_y(&self, i: usize) -> f64 {
        self.origin.1 + (i as f64 + 0.5) * self.spacing
    }

    /// Warps the template onto this grid, values only.
    fn warp_values<F>(&self, template: &Image, map: F, w: &mut [f64])
    where
        F: Fn((f64, f64)) -> (f64, f64) + Sync,
    {
        w.par_chunks_mut(self.width)
            .enumerate()
            .for_each(|(i, row)| {
                let y = self.pixel_y(i);
                for (j, out) in row.iter_mut().enumerate() {
                    let p = map((self.pixel_x(j), y));
                    *out = template.interpolate(p.0, p.1);
                }
            });
    }

    /// Warps the template and records the interpolant gradient at each
    /// warped position (needed for derivatives with respect to the map).
    fn warp_with_gradient<F>(
        &self,
        template: &Image,
        map: F,
        w: &mut [f64],
        tgx: &mut [f64],
        tgy: &mut [f64],
    ) where
        F: Fn((f64, f64)) -> (f64, f64) + Sync,
    {
        w.par_chunks_mut(self.width)
            .zip(tgx.par_chunks_mut(self.width))
            .zip(tgy.par_chunks_mut(self.width))
            .enumerate()
            .for_each(|(i, ((wrow, gxrow), gyrow))| {
                let y = self.pixel_y(i);
                for j in 0..self.width {
                    let p = map((self.pixel_x(j), y));
                    let (v, gx, gy) = template.interpolate_with_gradient(p.0, p.1);
                    wrow[j] = v;
                    gxrow[j] = gx;
                    gyrow[j] = gy;
                }
            });
    }

    /// Distance for the warped values already in `ws.w`. Evaluates
    /// `1 - n^2 / (dt * dr)` per pixel, which is exactly zero when the
    /// warped gradients equal the reference gradients bitwise.
    fn value_from_w(&self, ws: &mut NgfWorkspace) -> f64 {
        gradient_x(&ws.w, self.width, self.height, self.spacing, &mut ws.wx);
        gradient_y(&ws.w, self.width, self.height, self.spacing, &mut ws.wy);
        let e2 = self.epsilon_sq;
        let mut total = 0.0;
        for i in 0..self.len() {
            let (wx, wy) = (ws.wx[i], ws.wy[i]);
            let n = wx * self.rx[i] + wy * self.ry[i] + e2;
            let dt = wx * wx + wy * wy + e2;
            total += 1.0 - (n * n) / (dt * self.dr[i]);
        }
        total * self.spacing * self.spacing
    }

    /// Fills `ws.r` with the alignment residuals and `ws.px`, `ws.py` with
    /// their derivatives with respect to the warped gradient components;
    /// returns the distance.
    fn residual_pass(&self, ws: &mut NgfWorkspace) -> f64 {
        gradient_x(&ws.w, self.width, self.height, self.spacing, &mut ws.wx);
        gradient_y(&ws.w, self.width, self.height, self.spacing, &mut ws.wy);
        let e2 = self.epsilon_sq;
        let mut total = 0.0;
        for i in 0..self.len() {
            let (wx, wy) = (ws.wx[i], ws.wy[i]);
            let (rx, ry) = (self.rx[i], self.ry[i]);
            let n = wx * rx + wy * ry + e2;
            let dt = wx * wx + wy * wy + e2;
            let dr = self.dr[i];
            total += 1.0 - (n * n) / (dt * dr);
            let inv = 1.0 / (dt * dr).sqrt();
            let q = n / dt;
            ws.r[i] = n * inv;
            ws.px[i] = (rx - q * wx) * inv;
            ws.py[i] = (ry - q * wy) * inv;
        }
        total * self.spacing * self.spacing
    }

    /// Distance for an arbitrary map of the reference domain.
    pub fn value<F>(&self, template: &Image, map: F, ws: &mut NgfWorkspace) -> f64
    where
        F: Fn((f64, f64)) -> (f64, f64) + Sync,
    {
        ws.prepare(self.len());
        self.warp_values(template, map, &mut ws.w);
        self.value_from_w(ws)
    }
}

/// Scratch buffers reused across evaluations; sized lazily per level.
#[derive(Debug, Default)]
pub struct NgfWorkspace {
    w: Vec<f64>,
    tgx: Vec<f64>,
    tgy: Vec<f64>,
    wx: Vec<f64>,
    wy: Vec<f64>,
    r: Vec<f64>,
    px: Vec<f64>,
    py: Vec<f64>,
    gw: Vec<f64>,
    sx: Vec<f64>,
    sy: Vec<f64>,
    cols: Vec<Vec<f64>>,
}

impl NgfWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    fn prepare(&mut self, n: usize) {
        for buf in [
            &mut self.w,
            &mut self.tgx,
            &mut self.tgy,
            &mut self.wx,
            &mut self.wy,
            &mut self.r,
            &mut self.px,
            &mut self.py,
            &mut self.gw,
            &mut self.sx,
            &mut self.sy,
        ] {
            buf.resize(n, 0.0);
        }
    }

    fn prepare_cols(&mut self, k: usize, n: usize) {
        self.cols.resize_with(k, Vec::new);
        for col in &mut self.cols {
            col.resize(n, 0.0);
        }
    }
}

/// A transform with a small parameter vector: how it maps points, how the
/// mapped point moves with each parameter, and how to take an update step.
pub trait ParamModel<const K: usize>: Clone + Sync {
    fn apply(&self, p: (f64, f64)) -> (f64, f64);
    /// `d y / d a_k` at `p`, one `(dy1, dy2)` pair per parameter.
    fn param_derivatives(&self, p: (f64, f64)) -> [(f64, f64); K];
    fn step(&self, delta: &SVector<f64, K>) -> Self;
    /// Infinity norm of the parameter vector, for relative step tests.
    fn param_norm_inf(&self) -> f64;
}

/// Rigid motion with cached trigonometry, parameterized as
/// `(angle, translation_x, translation_y)` about a fixed center.
#[derive(Debug, Clone)]
pub struct RigidModel {
    pub rigid: Rigid2D,
    cos_a: f64,
    sin_a: f64,
}

impl RigidModel {
    pub fn new(rigid: Rigid2D) -> Self {
        Self {
            rigid,
            cos_a: rigid.angle.cos(),
            sin_a: rigid.angle.sin(),
        }
    }
}

impl ParamModel<3> for RigidModel {
    fn apply(&self, p: (f64, f64)) -> (f64, f64) {
        let dx = p.0 - self.rigid.center.0;
        let dy = p.1 - self.rigid.center.1;
        (
            self.rigid.center.0 + self.cos_a * dx - self.sin_a * dy + self.rigid.translation.0,
            self.rigid.center.1 + self.sin_a * dx + self.cos_a * dy + self.rigid.translation.1,
        )
    }

    fn param_derivatives(&self, p: (f64, f64)) -> [(f64, f64); 3] {
        let dx = p.0 - self.rigid.center.0;
        let dy = p.1 - self.rigid.center.1;
        [
            (
                -self.sin_a * dx - self.cos_a * dy,
                self.cos_a * dx - self.sin_a * dy,
            ),
            (1.0, 0.0),
            (0.0, 1.0),
        ]
    }

    fn step(&self, delta: &SVector<f64, 3>) -> Self {
        Self::new(Rigid2D::new(
            self.rigid.angle + delta[0],
            (
                self.rigid.translation.0 + delta[1],
                self.rigid.translation.1 + delta[2],
            ),
            self.rigid.center,
        ))
    }

    fn param_norm_inf(&self) -> f64 {
        self.rigid
            .angle
            .abs()
            .max(self.rigid.translation.0.abs())
            .max(self.rigid.translation.1.abs())
    }
}

impl ParamModel<6> for Affine2D {
    fn apply(&self, p: (f64, f64)) -> (f64, f64) {
        Affine2D::apply(self, p)
    }

    fn param_derivatives(&self, p: (f64, f64)) -> [(f64, f64); 6] {
        [
            (p.0, 0.0),
            (p.1, 0.0),
            (1.0, 0.0),
            (0.0, p.0),
            (0.0, p.1),
            (0.0, 1.0),
        ]
    }

    fn step(&self, delta: &SVector<f64, 6>) -> Self {
        let mut a = self.a;
        for (ak, dk) in a.iter_mut().zip(delta.iter()) {
            *ak += dk;
        }
        Self { a }
    }

    fn param_norm_inf(&self) -> f64 {
        self.a.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Objective value, exact gradient, and Gauss-Newton Hessian approximation
/// `2 h^2 J^T J` for a parametric model.
#[derive(Debug, Clone)]
pub struct GnSystem<const K: usize> {
    pub value: f64,
    pub gradient: SVector<f64, K>,
    pub hessian: SMatrix<f64, K, K>,
}

/// Assembles the Gauss-Newton system of the NGF distance at `model`.
pub fn gn_system<const K: usize, M: ParamModel<K>>(
    level: &NgfLevel,
    template: &Image,
    model: &M,
    ws: &mut NgfWorkspace,
) -> GnSystem<K> {
    let n = level.len();
    ws.prepare(n);
    ws.prepare_cols(K, n);
    {
        let (w, tgx, tgy) = (&mut ws.w, &mut ws.tgx, &mut ws.tgy);
        level.warp_with_gradient(template, |p| model.apply(p), w, tgx, tgy);
    }
    let value = level.residual_pass(ws);

    // Columns of dW/da: the interpolant gradient dotted with the motion of
    // the warped point under each parameter.
    for i in 0..level.height {
        let y = level.pixel_y(i);
        for j in 0..level.width {
            let idx = i * level.width + j;
            let derivs = model.param_derivatives((level.pixel_x(j), y));
            for (k, d) in derivs.iter().enumerate() {
                ws.cols[k][idx] = ws.tgx[idx] * d.0 + ws.tgy[idx] * d.1;
            }
        }
    }
    // Push each column through the difference operators and the per-pixel
    // residual derivatives, giving the Jacobian columns J_k = dr/da_k.
    for k in 0..K {
        gradient_x(&ws.cols[k], level.width, level.height, level.spacing, &mut ws.sx);
        gradient_y(&ws.cols[k], level.width, level.height, level.spacing, &mut ws.sy);
        let col = &mut ws.cols[k];
        for i in 0..n {
            col[i] = ws.px[i] * ws.sx[i] + ws.py[i] * ws.sy[i];
        }
    }

    let mut hessian = SMatrix::<f64, K, K>::zeros();
    let mut gradient = SVector::<f64, K>::zeros();
    for i in 0..n {
        let mut row = [0.0; K];
        for (k, col) in ws.cols.iter().enumerate() {
            row[k] = col[i];
        }
        for a in 0..K {
            gradient[a] += ws.r[i] * row[a];
            for b in a..K {
                hessian[(a, b)] += row[a] * row[b];
            }
        }
    }
    for a in 0..K {
        for b in 0..a {
            hessian[(a, b)] = hessian[(b, a)];
        }
    }
    let scale = 2.0 * level.spacing * level.spacing;
    hessian *= scale;
    gradient *= -scale;
    GnSystem {
        value,
        gradient,
        hessian,
    }
}

/// NGF objective over B-spline displacement coefficients with the affine
/// part frozen: `y(x) = affine(x) + u(x)`. Pixel-to-control-grid footprints
/// and affine-mapped positions are precomputed once per level.
pub struct BsplineNgf<'a> {
    level: &'a NgfLevel,
    template: &'a Image,
    plane: usize,
    y_affine: Vec<(f64, f64)>,
    stencil: Vec<CellWeights>,
    ws: NgfWorkspace,
}

impl<'a> BsplineNgf<'a> {
    pub fn new(
        level: &'a NgfLevel,
        template: &'a Image,
        affine: &Affine2D,
        geometry: &BSplineField,
    ) -> Self {
        let n = level.len();
        let mut y_affine = Vec::with_capacity(n);
        let mut stencil = Vec::with_capacity(n);
        for i in 0..level.height {
            let y = level.pixel_y(i);
            for j in 0..level.width {
                let p = (level.pixel_x(j), y);
                y_affine.push(affine.apply(p));
                stencil.push(geometry.weights_at(p));
            }
        }
        let (nx, ny) = geometry.grid_size();
        Self {
            level,
            template,
            plane: nx * ny,
            y_affine,
            stencil,
            ws: NgfWorkspace::new(),
        }
    }

    /// Number of scalar coefficients expected by [`Self::value`].
    pub fn dof(&self) -> usize {
        2 * self.plane
    }

    fn warp<const GRAD: bool>(&mut self, coeffs: &[f64]) {
        debug_assert_eq!(coeffs.len(), self.dof());
        let width = self.level.width;
        let plane = self.plane;
        let (template, y_affine, stencil) = (self.template, &self.y_affine, &self.stencil);
        let (u1c, u2c) = coeffs.split_at(plane);
        self.ws
            .w
            .par_chunks_mut(width)
            .zip(self.ws.tgx.par_chunks_mut(width))
            .zip(self.ws.tgy.par_chunks_mut(width))
            .enumerate()
            .for_each(|(i, ((wrow, gxrow), gyrow))| {
                let base = i * width;
                for j in 0..width {
                    let idx = base + j;
                    let cw = &stencil[idx];
                    let mut u1 = 0.0;
                    let mut u2 = 0.0;
                    for k in 0..4 {
                        u1 += cw.w[k] * u1c[cw.idx[k]];
                        u2 += cw.w[k] * u2c[cw.idx[k]];
                    }
                    let p = (y_affine[idx].0 + u1, y_affine[idx].1 + u2);
                    if GRAD {
                        let (v, gx, gy) = template.interpolate_with_gradient(p.0, p.1);
                        wrow[j] = v;
                        gxrow[j] = gx;
                        gyrow[j] = gy;
                    } else {
                        wrow[j] = template.interpolate(p.0, p.1);
                    }
                }
            });
    }

    pub fn value(&mut self, coeffs: &[f64]) -> f64 {
        self.ws.prepare(self.level.len());
        self.warp::<false>(coeffs);
        let mut ws = std::mem::take(&mut self.ws);
        let v = self.level.value_from_w(&mut ws);
        self.ws = ws;
        v
    }

    /// Value and exact gradient with respect to the coefficients, written
    /// into `grad` (length [`Self::dof`]).
    pub fn value_and_gradient(&mut self, coeffs: &[f64], grad: &mut [f64]) -> f64 {
        debug_assert_eq!(grad.len(), self.dof());
        let n = self.level.len();
        self.ws.prepare(n);
        self.warp::<true>(coeffs);
        let mut ws = std::mem::take(&mut self.ws);
        let value = self.level.residual_pass(&mut ws);

        // dNGF/dW via the adjoint difference operators.
        let scale = -2.0 * self.level.spacing * self.level.spacing;
        for i in 0..n {
            ws.sx[i] = scale * ws.r[i] * ws.px[i];
            ws.sy[i] = scale * ws.r[i] * ws.py[i];
        }
        ws.gw.fill(0.0);
        let (w, h, sp) = (self.level.width, self.level.height, self.level.spacing);
        gradient_x_adjoint(&ws.sx, w, h, sp, &mut ws.gw);
        gradient_y_adjoint(&ws.sy, w, h, sp, &mut ws.gw);

        // Scatter through the interpolant gradient into the control grid.
        grad.fill(0.0);
        let (g1, g2) = grad.split_at_mut(self.plane);
        for i in 0..n {
            let cw = &self.stencil[i];
            let gx = ws.gw[i] * ws.tgx[i];
            let gy = ws.gw[i] * ws.tgy[i];
            for k in 0..4 {
                g1[cw.idx[k]] += cw.w[k] * gx;
                g2[cw.idx[k]] += cw.w[k] * gy;
            }
        }
        self.ws = ws;
        value
    }
}
