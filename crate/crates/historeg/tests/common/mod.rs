//! Synthetic registration scenes with analytically known ground truth.
//!
//! A scene is a smooth sum of Gaussian blobs sampled at any resolution
//! without resampling artifacts. The template shows the scene directly, the
//! reference shows it through a ground-truth map (affine, optionally plus a
//! smooth displacement), and the two images get different monotone intensity
//! remappings to emulate different stains. Landmarks are a lattice in the
//! reference with exact mapped positions in the template.

use historeg::image::{preprocess_gray, Image, Pyramid};
use historeg::transform::Affine2D;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

struct Blob {
    cx: f64,
    cy: f64,
    amp: f64,
    inv_two_sigma_sq: f64,
}

/// A smooth, textured intensity field over roughly the unit square.
pub struct Scene {
    blobs: Vec<Blob>,
    /// Lobe phases of the content outline, one per harmonic.
    outline: [f64; 3],
    /// Center of the content window in template coordinates.
    center: (f64, f64),
}

impl Scene {
    /// Blobs spread past the unit square so rotated and translated views
    /// still land on texture. Broad blobs set large-scale structure that
    /// survives coarsening and identifies the pose; medium and small blobs
    /// add texture that sharpens the optimum.
    pub fn random(rng: &mut impl Rng) -> Self {
        let mut blobs = Vec::with_capacity(60);
        for (count, lo, hi) in [(10, 0.15, 0.30), (30, 0.06, 0.14), (20, 0.03, 0.06)] {
            for _ in 0..count {
                let sigma: f64 = rng.gen_range(lo..hi);
                blobs.push(Blob {
                    cx: rng.gen_range(-0.35..1.35),
                    cy: rng.gen_range(-0.35..1.35),
                    amp: rng.gen_range(-1.0..1.0_f64),
                    inv_two_sigma_sq: 1.0 / (2.0 * sigma * sigma),
                });
            }
        }
        let outline = [
            rng.gen_range(0.0..std::f64::consts::TAU),
            rng.gen_range(0.0..std::f64::consts::TAU),
            rng.gen_range(0.0..std::f64::consts::TAU),
        ];
        Scene {
            blobs,
            outline,
            center: (0.5, 0.4),
        }
    }

    /// Moves the content window; used to keep the section visible in both
    /// views once the ground-truth map is known.
    pub fn placed(mut self, center: (f64, f64)) -> Self {
        self.center = center;
        self
    }

    /// Content support: a lumpy disc whose radius varies with direction, so
    /// the outline is asymmetric and pins the orientation on its own, the way
    /// a tissue section's silhouette does.
    fn window(&self, dx: f64, dy: f64) -> f64 {
        let phi = dy.atan2(dx);
        let r = 0.23
            * (1.0
                + 0.16 * (phi - self.outline[0]).cos()
                + 0.10 * (2.0 * phi - self.outline[1]).cos()
                + 0.06 * (3.0 * phi - self.outline[2]).cos());
        let q = (dx * dx + dy * dy) / (r * r);
        (-q * q).exp()
    }

    /// Stain density in `[0, 1]`: zero off the section, and inside it a
    /// positive base level modulated by the blob texture. The window keeps
    /// the section fading out well before the frame borders (like tissue on
    /// a slide), so the outline itself is a pose cue instead of an artificial
    /// edge at the image boundary. A bounded squash keeps rare deep blob
    /// overlaps from compressing the contrast of the rest of the texture.
    pub fn value(&self, p: (f64, f64)) -> f64 {
        let window = self.window(p.0 - self.center.0, p.1 - self.center.1);
        if window < 1e-6 {
            return 0.0;
        }
        let mut v = 0.0;
        for b in &self.blobs {
            let dx = p.0 - b.cx;
            let dy = p.1 - b.cy;
            v += b.amp * (-(dx * dx + dy * dy) * b.inv_two_sigma_sq).exp();
        }
        window * (0.55 + 0.45 * (0.8 * v).tanh())
    }
}

struct DispBlob {
    cx: f64,
    cy: f64,
    ax: f64,
    ay: f64,
    inv_two_sigma_sq: f64,
}

/// Ground-truth map from reference physical coordinates into the template:
/// an affine part plus an optional smooth displacement field.
pub struct GroundTruth {
    pub affine: Affine2D,
    warp: Vec<DispBlob>,
}

impl GroundTruth {
    pub fn rigid(angle: f64, translation: (f64, f64), center: (f64, f64)) -> Self {
        let (s, c) = angle.sin_cos();
        GroundTruth {
            affine: affine_from(c, -s, s, c, translation, center),
            warp: Vec::new(),
        }
    }

    /// Rotation anywhere on the circle, translation up to 20% of the domain,
    /// isotropic scale in [0.9, 1.1].
    pub fn random_affine(rng: &mut impl Rng) -> Self {
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let scale = rng.gen_range(0.9..1.1);
        let t = (rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2));
        let (s, c) = angle.sin_cos();
        GroundTruth {
            affine: affine_from(scale * c, -scale * s, scale * s, scale * c, t, (0.5, 0.5)),
            warp: Vec::new(),
        }
    }

    /// Adds smooth displacement blobs whose amplitudes sum to `max_disp`, so
    /// the total displacement never exceeds it anywhere.
    pub fn with_warp(mut self, rng: &mut impl Rng, max_disp: f64, around: (f64, f64)) -> Self {
        let shares = [0.6, 0.4];
        for share in shares {
            let dir = rng.gen_range(0.0..std::f64::consts::TAU);
            let sigma: f64 = rng.gen_range(0.12..0.22);
            let a = share * max_disp;
            self.warp.push(DispBlob {
                cx: around.0 + rng.gen_range(-0.15..0.15),
                cy: around.1 + rng.gen_range(-0.15..0.15),
                ax: a * dir.cos(),
                ay: a * dir.sin(),
                inv_two_sigma_sq: 1.0 / (2.0 * sigma * sigma),
            });
        }
        self
    }

    pub fn apply(&self, x: (f64, f64)) -> (f64, f64) {
        let (mut px, mut py) = self.affine.apply(x);
        for b in &self.warp {
            let dx = x.0 - b.cx;
            let dy = x.1 - b.cy;
            let w = (-(dx * dx + dy * dy) * b.inv_two_sigma_sq).exp();
            px += w * b.ax;
            py += w * b.ay;
        }
        (px, py)
    }
}

fn affine_from(
    m00: f64,
    m01: f64,
    m10: f64,
    m11: f64,
    t: (f64, f64),
    center: (f64, f64),
) -> Affine2D {
    let b0 = t.0 + center.0 - m00 * center.0 - m01 * center.1;
    let b1 = t.1 + center.1 - m10 * center.0 - m11 * center.1;
    Affine2D {
        a: [m00, m01, b0, m10, m11, b1],
    }
}

/// Samples the scene's stain density at `map(pixel center)`, renders it as
/// dark tissue on a white slide, applies a monotone gamma remap, and runs the
/// production preprocessing (inversion and rescaling). The empty slide is the
/// brightest value in every view, so preprocessing maps the background to
/// exactly zero in both images of a pair no matter which gamma each one gets.
pub fn rasterize(
    scene: &Scene,
    map: impl Fn((f64, f64)) -> (f64, f64),
    width: usize,
    height: usize,
    gamma: f64,
) -> Image {
    let spacing = 1.0 / width.max(height) as f64;
    let mut raw = Vec::with_capacity(width * height);
    for i in 0..height {
        let y = (i as f64 + 0.5) * spacing;
        for j in 0..width {
            let x = (j as f64 + 0.5) * spacing;
            raw.push(1.0 - scene.value(map((x, y))));
        }
    }
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    for v in &mut raw {
        *v = ((*v - lo) / span).powf(gamma);
    }
    preprocess_gray(width, height, &raw).expect("valid synthetic raster")
}

/// A synthetic registration problem: two pyramids plus exact landmark
/// correspondences (reference pixel coordinates and their true template
/// pixel positions).
pub struct SynthPair {
    pub reference: Pyramid,
    pub template: Pyramid,
    #[allow(dead_code)]
    pub truth: GroundTruth,
    pub width: usize,
    pub height: usize,
    pub landmarks_ref: Vec<(f64, f64)>,
    pub landmarks_true: Vec<(f64, f64)>,
    /// Content window center in template coordinates.
    #[allow(dead_code)]
    pub window_center: (f64, f64),
}

impl SynthPair {
    pub fn diagonal_pixels(&self) -> f64 {
        ((self.width * self.width + self.height * self.height) as f64).sqrt()
    }

    /// True template pixel position of a reference pixel landmark.
    fn map_landmark(truth: &GroundTruth, spacing: f64, p: (f64, f64)) -> (f64, f64) {
        let phys = ((p.0 + 0.5) * spacing, (p.1 + 0.5) * spacing);
        let mapped = truth.apply(phys);
        (mapped.0 / spacing - 0.5, mapped.1 / spacing - 0.5)
    }

    /// Landmark positions produced by a computed map from reference physical
    /// to template physical coordinates, in template pixel units.
    pub fn registered_landmarks(
        &self,
        map: impl Fn((f64, f64)) -> (f64, f64),
    ) -> Vec<(f64, f64)> {
        let spacing = 1.0 / self.width.max(self.height) as f64;
        self.landmarks_ref
            .iter()
            .map(|&(x, y)| {
                let phys = ((x + 0.5) * spacing, (y + 0.5) * spacing);
                let mapped = map(phys);
                (mapped.0 / spacing - 0.5, mapped.1 / spacing - 0.5)
            })
            .collect()
    }
}

/// Chooses a template-side window center that keeps the content inside both
/// frames under `affine`: a coarse search minimizing how far the center (and
/// its reference-side preimage) fall outside a safe interior box.
fn place_window(affine: &Affine2D, ex: f64, ey: f64) -> ((f64, f64), (f64, f64)) {
    let a = affine.a;
    let det = a[0] * a[4] - a[1] * a[3];
    let inv = |w: (f64, f64)| {
        let rx = w.0 - a[2];
        let ry = w.1 - a[5];
        ((a[4] * rx - a[1] * ry) / det, (-a[3] * rx + a[0] * ry) / det)
    };
    let bx = (0.34f64.min(ex / 2.0), ex - 0.34f64.min(ex / 2.0));
    let by = (0.34f64.min(ey / 2.0), ey - 0.34f64.min(ey / 2.0));
    let outside = |p: (f64, f64)| {
        let dx = (bx.0 - p.0).max(p.0 - bx.1).max(0.0);
        let dy = (by.0 - p.1).max(p.1 - by.1).max(0.0);
        dx * dx + dy * dy
    };
    let mut best = (f64::INFINITY, (ex / 2.0, ey / 2.0));
    for i in 0..13 {
        for j in 0..13 {
            let w = (
                bx.0 - 0.08 + (bx.1 - bx.0 + 0.16) * j as f64 / 12.0,
                by.0 - 0.08 + (by.1 - by.0 + 0.16) * i as f64 / 12.0,
            );
            let score = outside(w) + outside(inv(w));
            if score < best.0 {
                best = (score, w);
            }
        }
    }
    (best.1, inv(best.1))
}

/// Builds a synthetic pair. `max_disp` adds a smooth non-affine warp with
/// that peak displacement (fraction of the domain); `None` keeps the ground
/// truth purely affine.
pub fn synth_pair(seed: u64, width: usize, height: usize, max_disp: Option<f64>) -> SynthPair {
    let mut rng = rng(seed);
    let scene = Scene::random(&mut rng);
    let mut truth = GroundTruth::random_affine(&mut rng);
    let spacing = 1.0 / width.max(height) as f64;
    let (center, center_ref) = place_window(
        &truth.affine,
        width as f64 * spacing,
        height as f64 * spacing,
    );
    if let Some(d) = max_disp {
        truth = truth.with_warp(&mut rng, d, center_ref);
    }
    let gamma1 = rng.gen_range(0.6..0.9);
    let gamma2 = rng.gen_range(1.2..1.8);
    build_pair(scene.placed(center), truth, width, height, gamma1, gamma2)
}

/// Like `synth_pair` but with caller-chosen gamma remaps.
#[allow(dead_code)]
pub fn synth_pair_gammas(
    seed: u64,
    width: usize,
    height: usize,
    max_disp: Option<f64>,
    gamma1: f64,
    gamma2: f64,
) -> SynthPair {
    let mut rng = rng(seed);
    let scene = Scene::random(&mut rng);
    let mut truth = GroundTruth::random_affine(&mut rng);
    let spacing = 1.0 / width.max(height) as f64;
    let (center, center_ref) = place_window(
        &truth.affine,
        width as f64 * spacing,
        height as f64 * spacing,
    );
    if let Some(d) = max_disp {
        truth = truth.with_warp(&mut rng, d, center_ref);
    }
    build_pair(scene.placed(center), truth, width, height, gamma1, gamma2)
}

/// Like `synth_pair` but with a caller-chosen ground-truth map.
pub fn synth_pair_with_truth(
    seed: u64,
    width: usize,
    height: usize,
    truth: GroundTruth,
) -> SynthPair {
    let mut rng = rng(seed);
    let scene = Scene::random(&mut rng);
    let spacing = 1.0 / width.max(height) as f64;
    let (center, _) = place_window(
        &truth.affine,
        width as f64 * spacing,
        height as f64 * spacing,
    );
    let gamma1 = rng.gen_range(0.6..0.9);
    let gamma2 = rng.gen_range(1.2..1.8);
    build_pair(scene.placed(center), truth, width, height, gamma1, gamma2)
}

fn build_pair(
    scene: Scene,
    truth: GroundTruth,
    width: usize,
    height: usize,
    gamma1: f64,
    gamma2: f64,
) -> SynthPair {
    let reference = rasterize(&scene, |p| truth.apply(p), width, height, gamma1);
    let template = rasterize(&scene, |p| p, width, height, gamma2);
    let spacing = 1.0 / width.max(height) as f64;

    let mut landmarks_ref = Vec::new();
    let mut landmarks_true = Vec::new();
    let (mx, my) = (0.12 * width as f64, 0.12 * height as f64);
    for li in 0..6 {
        for lj in 0..6 {
            let x = mx + lj as f64 * (width as f64 - 2.0 * mx) / 5.0;
            let y = my + li as f64 * (height as f64 - 2.0 * my) / 5.0;
            landmarks_ref.push((x, y));
            landmarks_true.push(SynthPair::map_landmark(&truth, spacing, (x, y)));
        }
    }

    SynthPair {
        reference: Pyramid::build(reference),
        template: Pyramid::build(template),
        truth,
        width,
        height,
        landmarks_ref,
        landmarks_true,
        window_center: scene.center,
    }
}
