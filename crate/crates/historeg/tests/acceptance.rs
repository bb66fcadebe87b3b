//! Acceptance suite: one test per shipped guarantee. Each test asserts the
//! stated tolerance and prints the measured numbers (visible with
//! `cargo test --test acceptance -- --nocapture`).

mod common;

use common::{rasterize, rng, synth_pair, synth_pair_with_truth, GroundTruth, Scene};
use historeg::curvature::CurvatureOp;
use historeg::eval;
use historeg::image::{Image, Pyramid};
use historeg::io::{cache, config, landmarks, transform_file};
use historeg::ngf::{gn_system, BsplineNgf, NgfLevel, NgfWorkspace};
use historeg::pipeline::{self, PipelineConfig};
use historeg::transform::{jacobian_stats, Affine2D, BSplineField, Rigid2D, Transform};
use rand::Rng;
use std::f64::consts::{PI, TAU};
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

/// Serializes the timed sections so wall-clock bounds are not polluted by
/// concurrently running tests.
static TIMED: Mutex<()> = Mutex::new(());

fn timed_guard() -> std::sync::MutexGuard<'static, ()> {
    TIMED.lock().unwrap_or_else(|e| e.into_inner())
}

fn small_images(seed: u64, width: usize, height: usize) -> (Image, Image) {
    let mut r = rng(seed);
    let a = rasterize(&Scene::random(&mut r), |p| p, width, height, 1.0);
    let b = rasterize(&Scene::random(&mut r), |p| p, width, height, 1.0);
    (a, b)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn relative_norm_error(analytic: &[f64], reference: &[f64]) -> f64 {
    let diff: Vec<f64> = analytic
        .iter()
        .zip(reference)
        .map(|(a, b)| a - b)
        .collect();
    norm(&diff) / norm(reference).max(1e-300)
}

// ---------------------------------------------------------------------------
// criterion 1: analytic gradients match central finite differences
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_gradient_correctness() {
    let start = Instant::now();
    const STEP: f64 = 1e-7;
    const TOL: f64 = 1e-4;

    let mut worst_affine = 0.0f64;
    for k in 0..20 {
        let (reference, template) = small_images(100 + k, 16, 16);
        let level = NgfLevel::new(&reference, 0.1);
        let mut r = rng(200 + k);
        let mut model = Affine2D::identity();
        for c in model.a.iter_mut() {
            *c += r.gen_range(-0.05..0.05);
        }
        let mut ws = NgfWorkspace::new();
        let analytic: Vec<f64> = gn_system::<6, _>(&level, &template, &model, &mut ws)
            .gradient
            .iter()
            .copied()
            .collect();
        let mut fd = vec![0.0; 6];
        for (p, slot) in fd.iter_mut().enumerate() {
            let mut plus = model;
            plus.a[p] += STEP;
            let mut minus = model;
            minus.a[p] -= STEP;
            let f_plus = level.value(&template, |q| plus.apply(q), &mut ws);
            let f_minus = level.value(&template, |q| minus.apply(q), &mut ws);
            *slot = (f_plus - f_minus) / (2.0 * STEP);
        }
        worst_affine = worst_affine.max(relative_norm_error(&analytic, &fd));
    }
    assert!(
        worst_affine < TOL,
        "affine NGF gradient vs finite differences: {worst_affine:.3e}"
    );

    let mut worst_bspline = 0.0f64;
    for k in 0..20 {
        let (reference, template) = small_images(300 + k, 16, 16);
        let level = NgfLevel::new(&reference, 0.1);
        let geometry = BSplineField::zeros(5, 4, (0.0, 0.0), (1.0, 1.0)).unwrap();
        let mut obj = BsplineNgf::new(&level, &template, &Affine2D::identity(), &geometry);
        let mut r = rng(400 + k);
        let coeffs: Vec<f64> = (0..obj.dof()).map(|_| r.gen_range(-0.02..0.02)).collect();
        let mut analytic = vec![0.0; obj.dof()];
        obj.value_and_gradient(&coeffs, &mut analytic);
        let mut fd = vec![0.0; obj.dof()];
        for p in 0..coeffs.len() {
            let mut x = coeffs.clone();
            x[p] += STEP;
            let f_plus = obj.value(&x);
            x[p] = coeffs[p] - STEP;
            let f_minus = obj.value(&x);
            fd[p] = (f_plus - f_minus) / (2.0 * STEP);
        }
        worst_bspline = worst_bspline.max(relative_norm_error(&analytic, &fd));
    }
    assert!(
        worst_bspline < TOL,
        "B-spline NGF gradient vs finite differences: {worst_bspline:.3e}"
    );

    let mut worst_curv = 0.0f64;
    for k in 0..20 {
        let geometry = BSplineField::zeros(6, 5, (0.0, 0.0), (1.0, 0.8)).unwrap();
        let mut op = CurvatureOp::new(&geometry);
        let mut r = rng(500 + k);
        let coeffs: Vec<f64> = (0..op.dof()).map(|_| r.gen_range(-0.5..0.5)).collect();
        let weight = 0.7;
        let mut analytic = vec![0.0; op.dof()];
        op.accumulate_value_and_gradient(&coeffs, weight, &mut analytic);
        let mut fd = vec![0.0; op.dof()];
        for p in 0..coeffs.len() {
            let mut x = coeffs.clone();
            x[p] += STEP;
            let f_plus = weight * op.value(&x);
            x[p] = coeffs[p] - STEP;
            let f_minus = weight * op.value(&x);
            fd[p] = (f_plus - f_minus) / (2.0 * STEP);
        }
        worst_curv = worst_curv.max(relative_norm_error(&analytic, &fd));
    }
    assert!(
        worst_curv < TOL,
        "curvature gradient vs finite differences: {worst_curv:.3e}"
    );

    let elapsed = start.elapsed().as_secs_f64();
    println!(
        "criterion 1: gradient errors affine {worst_affine:.3e}, bspline {worst_bspline:.3e}, \
         curvature {worst_curv:.3e} (tolerance 1e-4), {elapsed:.2} s"
    );
    assert!(elapsed < 10.0, "gradient checks took {elapsed:.2} s");
}

// ---------------------------------------------------------------------------
// criterion 2: exact-zero properties
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_exact_zero_properties() {
    let mut worst_self = 0.0f64;
    for (k, (w, h)) in [(16, 16), (17, 13), (33, 9), (40, 25), (7, 7)]
        .into_iter()
        .enumerate()
    {
        let (img, _) = small_images(600 + k as u64, w, h);
        let level = NgfLevel::new(&img, 0.1);
        let mut ws = NgfWorkspace::new();
        worst_self = worst_self.max(level.value(&img, |p| p, &mut ws).abs());
    }
    assert!(worst_self < 1e-12, "self-distance {worst_self:.3e}");

    let mut worst_curv = 0.0f64;
    for (k, (nx, ny)) in [(5, 4), (9, 9), (17, 5)].into_iter().enumerate() {
        let geometry = BSplineField::zeros(nx, ny, (0.1, -0.2), (1.3, 0.9)).unwrap();
        let mut op = CurvatureOp::new(&geometry);
        let mut r = rng(700 + k as u64);
        let lin: [f64; 6] = std::array::from_fn(|_| r.gen_range(-1.0..1.0));
        let plane = nx * ny;
        let mut coeffs = vec![0.0; 2 * plane];
        for q in 0..ny {
            for p in 0..nx {
                let (cx, cy) = geometry.control_point(p, q);
                coeffs[q * nx + p] = lin[0] * cx + lin[1] * cy + lin[2];
                coeffs[plane + q * nx + p] = lin[3] * cx + lin[4] * cy + lin[5];
            }
        }
        worst_curv = worst_curv.max(op.value(&coeffs).abs());
    }
    assert!(
        worst_curv < 1e-12,
        "curvature of affine displacement {worst_curv:.3e}"
    );

    let mut worst_rigid = 0.0f64;
    let mut r = rng(800);
    for _ in 0..10 {
        let rigid = Rigid2D::new(
            r.gen_range(0.0..TAU),
            (r.gen_range(-0.5..0.5), r.gen_range(-0.5..0.5)),
            (r.gen_range(0.0..1.0), r.gen_range(0.0..1.0)),
        );
        let affine = Affine2D::from_rigid(&rigid);
        for _ in 0..10 {
            let p = (r.gen_range(-2.0..3.0), r.gen_range(-2.0..3.0));
            let a = rigid.apply(p);
            let b = affine.apply(p);
            worst_rigid = worst_rigid.max((a.0 - b.0).abs().max((a.1 - b.1).abs()));
        }
    }
    assert!(
        worst_rigid < 1e-12,
        "rigid vs converted affine {worst_rigid:.3e}"
    );

    println!(
        "criterion 2: self-distance {worst_self:.3e}, affine curvature {worst_curv:.3e}, \
         rigid-to-affine {worst_rigid:.3e} (tolerance 1e-12)"
    );
}

// ---------------------------------------------------------------------------
// shared synthetic corpus for criteria 3, 5, and 6
// ---------------------------------------------------------------------------

const CORPUS_PAIRS: usize = 200;
const CORPUS_SIZE: (usize, usize) = (160, 128);
const CORPUS_WARP: f64 = 0.02;

struct PairOutcome {
    initial: f64,
    after_affine: f64,
    after_field: f64,
    min_det: f64,
    max_area_change: f64,
}

struct Corpus {
    outcomes: Vec<PairOutcome>,
    total_seconds: f64,
}

static CORPUS: OnceLock<Corpus> = OnceLock::new();

/// Pipeline configuration with every level cap clamped to `n_max` pixels
/// and the deformation grid rescaled to keep the default control spacing
/// (256 cells per 8000 pixels, rounded to the nearest power-of-two-plus-one
/// with at least 17 points per axis).
fn capped_config(n_max: usize) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.step1.n_max = cfg.step1.n_max.min(n_max);
    cfg.step2.n_max = cfg.step2.n_max.min(n_max);
    if cfg.step3.n_max > n_max {
        cfg.step3.n_max = n_max;
        let cells = (256 * n_max / 8000).next_power_of_two().max(16);
        cfg.step3.grid = (cells + 1, cells + 1);
    }
    cfg
}

fn corpus() -> &'static Corpus {
    CORPUS.get_or_init(|| {
        let _guard = timed_guard();
        let start = Instant::now();
        let cfg = capped_config(400);
        let (width, height) = CORPUS_SIZE;
        let mut outcomes = Vec::with_capacity(CORPUS_PAIRS);
        for k in 0..CORPUS_PAIRS {
            let pair = synth_pair(1000 + k as u64, width, height, Some(CORPUS_WARP));
            let result = pipeline::run(&pair.reference, &pair.template, &cfg)
                .expect("registration of a synthetic pair");
            let diagonal = pair.diagonal_pixels();
            let mrtre = |marks: &[(f64, f64)]| {
                eval::median(
                    &eval::relative_errors(marks, &pair.landmarks_true, diagonal)
                        .expect("matching landmark sets"),
                )
                .expect("non-empty landmark sets")
            };
            let affine = result.transform.affine;
            let after_affine = mrtre(&pair.registered_landmarks(|p| affine.apply(p)));
            let after_field = mrtre(&pair.registered_landmarks(|p| result.transform.apply(p)));
            let base = pair.reference.finest();
            let stats = jacobian_stats(
                &result.transform,
                base.width(),
                base.height(),
                base.spacing(),
                base.origin(),
            );
            outcomes.push(PairOutcome {
                initial: mrtre(&pair.landmarks_ref),
                after_affine,
                after_field,
                min_det: stats.min_det,
                max_area_change: stats.max_area_change,
            });
        }
        Corpus {
            outcomes,
            total_seconds: start.elapsed().as_secs_f64(),
        }
    })
}

#[test]
fn criterion_3_synthetic_robustness() {
    let corpus = corpus();
    let improved = corpus
        .outcomes
        .iter()
        .filter(|o| o.after_field < o.initial)
        .count();
    let fraction = improved as f64 / corpus.outcomes.len() as f64;
    println!(
        "criterion 3: {improved}/{} pairs improved ({:.1}%), corpus time {:.1} s \
         (bounds: >= 99%, < 600 s)",
        corpus.outcomes.len(),
        100.0 * fraction,
        corpus.total_seconds
    );
    assert!(
        fraction >= 0.99,
        "only {improved}/{} pairs improved",
        corpus.outcomes.len()
    );
    assert!(
        corpus.total_seconds < 600.0,
        "corpus took {:.1} s",
        corpus.total_seconds
    );
}

#[test]
fn criterion_5_desk_scale_accuracy() {
    let corpus = corpus();
    let medians: Vec<f64> = corpus.outcomes.iter().map(|o| o.after_field).collect();
    let overall = eval::median(&medians).expect("non-empty corpus");
    let sharper = corpus
        .outcomes
        .iter()
        .filter(|o| o.after_field < o.after_affine)
        .count();
    let fraction = sharper as f64 / corpus.outcomes.len() as f64;
    println!(
        "criterion 5: median lattice error after step 3 is {:.4}% of the diagonal \
         (bound 0.5%); step 3 beat step 2 on {sharper}/{} pairs ({:.1}%, bound 90%)",
        100.0 * overall,
        corpus.outcomes.len(),
        100.0 * fraction
    );
    assert!(
        overall <= 0.005,
        "median relative lattice error {:.5} exceeds 0.005",
        overall
    );
    assert!(
        fraction >= 0.90,
        "step 3 beat step 2 on only {sharper}/{} pairs",
        corpus.outcomes.len()
    );
}

#[test]
fn criterion_6_no_foldings() {
    let corpus = corpus();
    let min_det = corpus
        .outcomes
        .iter()
        .map(|o| o.min_det)
        .fold(f64::INFINITY, f64::min);
    let max_area = corpus
        .outcomes
        .iter()
        .map(|o| o.max_area_change)
        .fold(0.0f64, f64::max);
    let mean_area = corpus
        .outcomes
        .iter()
        .map(|o| o.max_area_change)
        .sum::<f64>()
        / corpus.outcomes.len() as f64;
    println!(
        "criterion 6: min Jacobian determinant {min_det:.4} (bound > 0); \
         max cell area change {:.2}% (mean over pairs {:.2}%, informational)",
        100.0 * max_area,
        100.0 * mean_area
    );
    assert!(min_det > 0.0, "folding detected: min determinant {min_det}");
}

// ---------------------------------------------------------------------------
// criterion 4: rotation recovery across the full circle
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_rotation_recovery() {
    let mut cfg = PipelineConfig::default();
    cfg.step2.enabled = false;
    cfg.step3.enabled = false;
    let mut worst = 0.0f64;
    for k in 0..20 {
        let mut r = rng(4000 + k);
        let truth = GroundTruth::rigid(
            PI,
            (r.gen_range(-0.03..0.03), r.gen_range(-0.03..0.03)),
            (0.5, 0.5),
        );
        let pair = synth_pair_with_truth(4100 + k, 128, 128, truth);
        let result = pipeline::run(&pair.reference, &pair.template, &cfg)
            .expect("rigid pre-alignment of a synthetic pair");
        let angle = result.rigid.expect("step 1 ran").angle;
        let error = (angle - PI).sin().atan2((angle - PI).cos()).abs();
        worst = worst.max(error);
    }
    let worst_deg = worst.to_degrees();
    println!("criterion 4: worst rotation error {worst_deg:.3} degrees (bound 2)");
    assert!(worst_deg <= 2.0, "rotation error {worst_deg:.3} degrees");
}

// ---------------------------------------------------------------------------
// criterion 7: performance at full scale
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_performance_smoke() {
    let pair = synth_pair(7000, 2000, 2000, Some(CORPUS_WARP));
    let cfg = capped_config(2000);
    let _guard = timed_guard();
    let start = Instant::now();
    let result =
        pipeline::run(&pair.reference, &pair.template, &cfg).expect("full-scale registration");
    let elapsed = start.elapsed().as_secs_f64();
    let diagonal = pair.diagonal_pixels();
    let after = eval::median(
        &eval::relative_errors(
            &pair.registered_landmarks(|p| result.transform.apply(p)),
            &pair.landmarks_true,
            diagonal,
        )
        .unwrap(),
    )
    .unwrap();
    println!(
        "criterion 7: 2000x2000 pipeline in {elapsed:.1} s (bound 60), \
         final lattice error {:.4}% of the diagonal",
        100.0 * after
    );
    assert!(elapsed < 60.0, "full-scale run took {elapsed:.1} s");
}

// ---------------------------------------------------------------------------
// criterion 8: evaluation metrics against an independent brute force
// ---------------------------------------------------------------------------

fn brute_median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn brute_mrtre(warped: &[(f64, f64)], target: &[(f64, f64)], diagonal: f64) -> f64 {
    let errors: Vec<f64> = warped
        .iter()
        .zip(target)
        .map(|(w, t)| ((w.0 - t.0).powi(2) + (w.1 - t.1).powi(2)).sqrt() / diagonal)
        .collect();
    brute_median(&errors)
}

#[test]
fn criterion_8_metric_oracle_equivalence() {
    let mut r = rng(8000);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let pairs = r.gen_range(1..12);
        let diagonal = r.gen_range(10.0..5000.0);
        let mut initial_medians = Vec::new();
        let mut final_medians = Vec::new();
        let mut brute_initial = Vec::new();
        let mut brute_final = Vec::new();
        for _ in 0..pairs {
            let n = r.gen_range(1..40);
            let mut target = Vec::new();
            let mut warped = Vec::new();
            let mut initial = Vec::new();
            for _ in 0..n {
                target.push((r.gen_range(-1e4..1e4), r.gen_range(-1e4..1e4)));
                warped.push((r.gen_range(-1e4..1e4), r.gen_range(-1e4..1e4)));
                initial.push((r.gen_range(-1e4..1e4), r.gen_range(-1e4..1e4)));
            }
            let errors = eval::relative_errors(&warped, &target, diagonal).unwrap();
            final_medians.push(eval::median(&errors).unwrap());
            brute_final.push(brute_mrtre(&warped, &target, diagonal));
            let errors = eval::relative_errors(&initial, &target, diagonal).unwrap();
            initial_medians.push(eval::median(&errors).unwrap());
            brute_initial.push(brute_mrtre(&initial, &target, diagonal));
        }
        for (a, b) in final_medians.iter().zip(&brute_final) {
            worst = worst.max((a - b).abs());
        }
        let amrtre = eval::amrtre(&final_medians).unwrap();
        let brute_amrtre = brute_final.iter().sum::<f64>() / brute_final.len() as f64;
        worst = worst.max((amrtre - brute_amrtre).abs());
        let mmrtre = eval::mmrtre(&final_medians).unwrap();
        worst = worst.max((mmrtre - brute_median(&brute_final)).abs());
        let robustness = eval::robustness(&initial_medians, &final_medians).unwrap();
        let brute_rob = brute_initial
            .iter()
            .zip(&brute_final)
            .filter(|(i, f)| f < i)
            .count() as f64
            / brute_initial.len() as f64;
        worst = worst.max((robustness - brute_rob).abs());
    }
    println!("criterion 8: worst deviation from brute force {worst:.3e} (tolerance 1e-12)");
    assert!(worst < 1e-12, "metric deviation {worst:.3e}");
}

// ---------------------------------------------------------------------------
// criterion 9: file format round-trips
// ---------------------------------------------------------------------------

#[test]
fn criterion_9_format_round_trips() {
    let dir = tempfile::tempdir().expect("temp dir");
    let mut r = rng(9000);

    for k in 0..20 {
        // Pyramid cache: every level identical down to the bits.
        let w = r.gen_range(3..40);
        let h = r.gen_range(3..40);
        let data: Vec<f32> = (0..w * h).map(|_| r.gen_range(0.0..1.0)).collect();
        let img = Image::from_raw(w, h, 1.0 / w.max(h) as f64, (0.0, 0.0), data).unwrap();
        let pyramid = Pyramid::build(img);
        let path = dir.path().join(format!("{k}.hrc"));
        cache::write_cache(&path, &pyramid).unwrap();
        let loaded = cache::read_cache(&path).unwrap();
        assert_eq!(pyramid.levels().len(), loaded.levels().len());
        for (a, b) in pyramid.levels().iter().zip(loaded.levels()) {
            assert_eq!(a.width(), b.width());
            assert_eq!(a.height(), b.height());
            assert_eq!(a.spacing(), b.spacing());
            assert_eq!(a.origin(), b.origin());
            assert_eq!(a.data(), b.data());
        }

        // Transform file: structural equality, coefficients bitwise.
        let rigid = (k % 2 == 0).then(|| {
            Rigid2D::new(
                r.gen_range(-PI..PI),
                (r.gen_range(-0.5..0.5), r.gen_range(-0.5..0.5)),
                (r.gen_range(0.0..1.0), r.gen_range(0.0..1.0)),
            )
        });
        let affine = Affine2D {
            a: std::array::from_fn(|_| r.gen_range(-2.0..2.0)),
        };
        let field = (k % 3 != 0)
            .then(|| {
                let nx = r.gen_range(2..12);
                let ny = r.gen_range(2..12);
                let coeffs: Vec<f64> = (0..2 * nx * ny).map(|_| r.gen_range(-1.0..1.0)).collect();
                BSplineField::from_parts(
                    nx,
                    ny,
                    (r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)),
                    (r.gen_range(0.1..2.0), r.gen_range(0.1..2.0)),
                    coeffs,
                )
                .unwrap()
            });
        let tf = transform_file::TransformFile {
            reference: transform_file::GridInfo {
                width: r.gen_range(1..5000),
                height: r.gen_range(1..5000),
                spacing: r.gen_range(1e-5..1.0),
                origin: (r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)),
            },
            template: transform_file::GridInfo {
                width: r.gen_range(1..5000),
                height: r.gen_range(1..5000),
                spacing: r.gen_range(1e-5..1.0),
                origin: (r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)),
            },
            rigid,
            transform: Transform { affine, field },
        };
        let path = dir.path().join(format!("{k}.reg"));
        transform_file::write_transform(&path, &tf).unwrap();
        assert_eq!(transform_file::read_transform(&path).unwrap(), tf);

        // Landmark CSV: shortest round-trip float formatting is exact.
        let marks: Vec<landmarks::Landmark> = (0..r.gen_range(1..30))
            .map(|i| landmarks::Landmark {
                id: format!("p{i}"),
                x: r.gen_range(-1e6..1e6) / 3.0,
                y: r.gen_range(-1e6..1e6) / 7.0,
            })
            .collect();
        let path = dir.path().join(format!("{k}.csv"));
        landmarks::write_landmarks(&path, &marks).unwrap();
        assert_eq!(landmarks::read_landmarks(&path).unwrap(), marks);

        // Config: text round-trip reproduces every setting.
        let mut cfg = PipelineConfig::default();
        cfg.step1.enabled = r.gen_bool(0.9);
        cfg.step1.n_rot = r.gen_range(1..64);
        cfg.step1.n_max = r.gen_range(50..1000);
        cfg.step1.n_levels = r.gen_range(1..8);
        cfg.step1.epsilon = r.gen_range(0.01..2.0);
        cfg.step2.enabled = r.gen_bool(0.9);
        cfg.step2.n_max = r.gen_range(50..2000);
        cfg.step2.n_levels = r.gen_range(1..8);
        cfg.step2.epsilon = r.gen_range(0.01..2.0);
        cfg.step3.enabled = r.gen_bool(0.9);
        cfg.step3.n_max = r.gen_range(50..9000);
        cfg.step3.n_levels = r.gen_range(1..9);
        cfg.step3.epsilon = r.gen_range(0.01..2.0);
        cfg.step3.alpha = r.gen_range(0.001..10.0);
        cfg.step3.grid = (r.gen_range(2..400), r.gen_range(2..400));
        cfg.optimizer.max_iterations_parametric = r.gen_range(1..200);
        cfg.optimizer.max_iterations_nonparametric = r.gen_range(1..500);
        cfg.optimizer.gradient_tolerance = r.gen_range(1e-9..1e-3);
        cfg.optimizer.objective_tolerance = r.gen_range(1e-9..1e-3);
        cfg.optimizer.parameter_tolerance = r.gen_range(1e-9..1e-3);
        cfg.optimizer.lbfgs_memory = r.gen_range(1..30);
        cfg.optimizer.max_line_search_halvings = r.gen_range(1..40);
        let text = config::format_config(&cfg);
        let parsed = config::parse_config(&text, std::path::Path::new("roundtrip.ini")).unwrap();
        assert_eq!(parsed, cfg);
    }
    println!("criterion 9: cache, transform, landmark, and config round-trips exact on 20 instances");
}
