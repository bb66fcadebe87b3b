//! The three-step registration pipeline, run coarse-to-fine on image
//! pyramids:
//!
//! 1. rotation-sampled rigid pre-alignment: rigid registrations started from
//!    a ring of equidistant rotations are run to completion and the one with
//!    the smallest final distance wins, making the pipeline robust to
//!    arbitrary orientation;
//! 2. affine refinement by damped Gauss-Newton;
//! 3. non-parametric refinement of a B-spline displacement field with
//!    curvature regularization, minimized by L-BFGS, with the control grid
//!    coarsened alongside the image pyramid and prolonged between levels.
//!
//! Steps 2 and 3 only ever return a result at least as good as their
//! initialization at the finest level they ran on; a worse result is
//! discarded and flagged in the step report.

use crate::curvature::CurvatureOp;
use crate::error::{Error, Result};
use crate::image::{Image, Pyramid};
use crate::ngf::{BsplineNgf, NgfLevel, NgfWorkspace, RigidModel};
use crate::optim::{gauss_newton, lbfgs, Objective, OptimizerSettings, RunReport};
use crate::transform::{Affine2D, BSplineField, Rigid2D, Transform};
use rayon::prelude::*;

/// Settings for the rotation-sampled rigid pre-alignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step1Config {
    pub enabled: bool,
    /// Number of equidistant start rotations.
    pub n_rot: usize,
    /// Longest image side used on the finest level of this step.
    pub n_max: usize,
    /// Number of pyramid levels.
    pub n_levels: usize,
    /// NGF contrast threshold.
    pub epsilon: f64,
}

impl Default for Step1Config {
    fn default() -> Self {
        Self {
            enabled: true,
            n_rot: 32,
            n_max: 200,
            n_levels: 4,
            epsilon: 0.1,
        }
    }
}

/// Settings for the affine refinement step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step2Config {
    pub enabled: bool,
    pub n_max: usize,
    pub n_levels: usize,
    pub epsilon: f64,
}

impl Default for Step2Config {
    fn default() -> Self {
        Self {
            enabled: true,
            n_max: 1000,
            n_levels: 5,
            epsilon: 0.1,
        }
    }
}

/// Settings for the non-parametric refinement step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step3Config {
    pub enabled: bool,
    pub n_max: usize,
    pub n_levels: usize,
    pub epsilon: f64,
    /// Weight of the curvature regularizer.
    pub alpha: f64,
    /// Control grid (columns, rows) on the finest level of this step.
    pub grid: (usize, usize),
}

impl Default for Step3Config {
    fn default() -> Self {
        Self {
            enabled: true,
            n_max: 8000,
            n_levels: 7,
            epsilon: 1.0,
            alpha: 0.1,
            grid: (257, 257),
        }
    }
}

/// Full pipeline configuration.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PipelineConfig {
    pub step1: Step1Config,
    pub step2: Step2Config,
    pub step3: Step3Config,
    pub optimizer: OptimizerSettings,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.step1.n_rot == 0 {
            return bad("step1.n_rot must be at least 1".into());
        }
        for (name, n_max, n_levels, eps) in [
            ("step1", self.step1.n_max, self.step1.n_levels, self.step1.epsilon),
            ("step2", self.step2.n_max, self.step2.n_levels, self.step2.epsilon),
            ("step3", self.step3.n_max, self.step3.n_levels, self.step3.epsilon),
        ] {
            if n_max < 2 {
                return bad(format!("{name}.n_max must be at least 2"));
            }
            if n_levels == 0 {
                return bad(format!("{name}.n_levels must be at least 1"));
            }
            if !(eps.is_finite() && eps > 0.0) {
                return bad(format!("{name}.epsilon must be positive"));
            }
        }
        if !(self.step3.alpha.is_finite() && self.step3.alpha >= 0.0) {
            return bad("step3.alpha must be non-negative".into());
        }
        if self.step3.grid.0 < 2 || self.step3.grid.1 < 2 {
            return bad("step3.grid needs at least 2 control points per axis".into());
        }
        let o = &self.optimizer;
        if o.max_iterations_parametric == 0 || o.max_iterations_nonparametric == 0 {
            return bad("optimizer iteration caps must be at least 1".into());
        }
        if o.lbfgs_memory == 0 {
            return bad("optimizer.lbfgs_memory must be at least 1".into());
        }
        for (name, tol) in [
            ("gradient_tolerance", o.gradient_tolerance),
            ("objective_tolerance", o.objective_tolerance),
            ("parameter_tolerance", o.parameter_tolerance),
        ] {
            if !(tol.is_finite() && tol > 0.0) {
                return bad(format!("optimizer.{name} must be positive"));
            }
        }
        Ok(())
    }
}

/// Parses a step selection such as "13": an ascending subset of "123",
/// returned as enable flags for steps 1, 2, and 3.
pub fn parse_step_selection(s: &str) -> Result<(bool, bool, bool)> {
    let bad = |msg: String| Err(Error::InvalidConfig(msg));
    let mut flags = [false; 3];
    let mut last = 0;
    if s.is_empty() {
        return bad("step selection must not be empty".into());
    }
    for c in s.chars() {
        let d = match c {
            '1' => 1,
            '2' => 2,
            '3' => 3,
            _ => {
                return bad(format!(
                    "step selection accepts an ascending subset of \"123\", found {s:?}"
                ))
            }
        };
        if d <= last {
            return bad(format!(
                "step selection digits must be ascending and unique, found {s:?}"
            ));
        }
        last = d;
        flags[d - 1] = true;
    }
    Ok((flags[0], flags[1], flags[2]))
}

/// One optimization run with the level dimensions it ran on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelReport {
    pub width: usize,
    pub height: usize,
    pub run: RunReport,
}

/// Diagnostics of one executed pipeline step. `initial_ngf` and `final_ngf`
/// are plain NGF values at the step's finest level.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub step: u8,
    pub initial_ngf: f64,
    pub final_ngf: f64,
    /// True when the optimized result was worse than the initialization at
    /// the finest level and was discarded.
    pub reverted: bool,
    /// Coarse-to-fine, in execution order.
    pub levels: Vec<LevelReport>,
}

/// Result of a pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationResult {
    /// Winner of the rigid pre-alignment, when step 1 ran.
    pub rigid: Option<Rigid2D>,
    /// The composed transform: affine part plus optional displacement field.
    pub transform: Transform,
    pub reports: Vec<StepReport>,
}

/// Control-grid sizes per pyramid level, finest first: halved (on the knot
/// intervals) per level, never below 17 points per axis and never above the
/// finest grid. Grids already at or below 17 stay unchanged.
pub fn grid_schedule(finest: (usize, usize), n_levels: usize) -> Vec<(usize, usize)> {
    (0..n_levels)
        .map(|k| {
            let per_axis = |m: usize| -> usize {
                let halved = ((m - 1) >> k) + 1;
                halved.max(17.min(m)).min(m)
            };
            (per_axis(finest.0), per_axis(finest.1))
        })
        .collect()
}

/// Template pyramid level whose spacing is closest (log scale) to `target`.
fn closest_spacing_level(pyr: &Pyramid, target: f64) -> &Image {
    pyr.levels()
        .iter()
        .min_by(|a, b| {
            let da = (a.spacing() / target).ln().abs();
            let db = (b.spacing() / target).ln().abs();
            da.partial_cmp(&db).unwrap()
        })
        .expect("pyramid has at least one level")
}

/// Reference levels of a step paired with spacing-matched template levels,
/// finest first.
/// Levels below this size carry too few samples for the distance to be
/// informative; continuation stops coarsening there.
const MIN_LEVEL_SIZE: usize = 16;

fn step_levels<'a>(
    reference: &'a Pyramid,
    template: &'a Pyramid,
    n_max: usize,
    n_levels: usize,
) -> Vec<(&'a Image, &'a Image)> {
    let start = reference.level_at_most(n_max);
    let mut end = (start + n_levels).min(reference.levels().len());
    while end > start + 1 {
        let l = &reference.levels()[end - 1];
        if l.width().min(l.height()) >= MIN_LEVEL_SIZE {
            break;
        }
        end -= 1;
    }
    (start..end)
        .map(|idx| {
            let r = &reference.levels()[idx];
            (r, closest_spacing_level(template, r.spacing()))
        })
        .collect()
}

fn ngf_levels(levels: &[(&Image, &Image)], epsilon: f64) -> Vec<NgfLevel> {
    levels
        .iter()
        .map(|(r, _)| NgfLevel::new(r, epsilon))
        .collect()
}

fn run_ara(
    reference: &Pyramid,
    template: &Pyramid,
    cfg: &Step1Config,
    opt: &OptimizerSettings,
) -> (Rigid2D, StepReport) {
    let levels = step_levels(reference, template, cfg.n_max, cfg.n_levels);
    let distances = ngf_levels(&levels, cfg.epsilon);

    let center = levels[0].0.center_of_mass();
    let template_com = levels[0].1.center_of_mass();
    let shift = (template_com.0 - center.0, template_com.1 - center.1);

    let initial_ngf = {
        let mut ws = NgfWorkspace::new();
        distances[0].value(levels[0].1, |p| p, &mut ws)
    };

    // Every start rotation is optimized to completion; candidates are
    // independent, so they parallelize freely. The winner is decided
    // afterwards in index order, which keeps the result deterministic.
    let candidates: Vec<(f64, Rigid2D, Vec<LevelReport>)> = (0..cfg.n_rot)
        .into_par_iter()
        .map(|k| {
            let angle = 2.0 * std::f64::consts::PI * k as f64 / cfg.n_rot as f64;
            let mut model = RigidModel::new(Rigid2D::new(angle, shift, center));
            let mut ws = NgfWorkspace::new();
            let mut reports = Vec::with_capacity(levels.len());
            let mut final_value = f64::INFINITY;
            for idx in (0..levels.len()).rev() {
                let (model_out, run) =
                    gauss_newton(&distances[idx], levels[idx].1, model, opt, &mut ws);
                model = model_out;
                final_value = run.final_value;
                reports.push(LevelReport {
                    width: levels[idx].0.width(),
                    height: levels[idx].0.height(),
                    run,
                });
            }
            (final_value, model.rigid, reports)
        })
        .collect();

    let mut best = 0;
    for k in 1..candidates.len() {
        if candidates[k].0 < candidates[best].0 {
            best = k;
        }
    }
    let (final_ngf, rigid, level_reports) = candidates.into_iter().nth(best).unwrap();
    (
        rigid,
        StepReport {
            step: 1,
            initial_ngf,
            final_ngf,
            reverted: false,
            levels: level_reports,
        },
    )
}

fn run_affine(
    reference: &Pyramid,
    template: &Pyramid,
    init: Affine2D,
    cfg: &Step2Config,
    opt: &OptimizerSettings,
) -> (Affine2D, StepReport) {
    let levels = step_levels(reference, template, cfg.n_max, cfg.n_levels);
    let distances = ngf_levels(&levels, cfg.epsilon);
    let mut ws = NgfWorkspace::new();

    let initial_ngf = distances[0].value(levels[0].1, |p| init.apply(p), &mut ws);

    let mut model = init;
    let mut reports = Vec::with_capacity(levels.len());
    let mut final_value = initial_ngf;
    for idx in (0..levels.len()).rev() {
        let (model_out, run) = gauss_newton(&distances[idx], levels[idx].1, model, opt, &mut ws);
        model = model_out;
        final_value = run.final_value;
        reports.push(LevelReport {
            width: levels[idx].0.width(),
            height: levels[idx].0.height(),
            run,
        });
    }

    let reverted = final_value > initial_ngf;
    let (model, final_ngf) = if reverted {
        (init, initial_ngf)
    } else {
        (model, final_value)
    };
    (
        model,
        StepReport {
            step: 2,
            initial_ngf,
            final_ngf,
            reverted,
            levels: reports,
        },
    )
}

/// NGF plus weighted curvature over B-spline coefficients.
struct Step3Objective<'a> {
    ngf: BsplineNgf<'a>,
    curvature: CurvatureOp,
    alpha: f64,
}

impl Objective for Step3Objective<'_> {
    fn value(&mut self, x: &[f64]) -> f64 {
        self.ngf.value(x) + self.alpha * self.curvature.value(x)
    }

    fn value_and_gradient(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        let ngf = self.ngf.value_and_gradient(x, grad);
        ngf + self
            .curvature
            .accumulate_value_and_gradient(x, self.alpha, grad)
    }
}

fn run_bspline(
    reference: &Pyramid,
    template: &Pyramid,
    affine: &Affine2D,
    cfg: &Step3Config,
    opt: &OptimizerSettings,
) -> Result<(Option<BSplineField>, StepReport)> {
    let levels = step_levels(reference, template, cfg.n_max, cfg.n_levels);
    let distances = ngf_levels(&levels, cfg.epsilon);
    let schedule = grid_schedule(cfg.grid, levels.len());
    // Control spacing below one pixel adds degrees of freedom the data
    // cannot constrain, so the grid is capped at each level's resolution.
    let clamp = |want: (usize, usize), level: &Image| {
        (want.0.min(level.width()).max(2), want.1.min(level.height()).max(2))
    };

    // The field spans the reference image domain on every level; coarse
    // levels that overhang it slightly fall into the clamped extension.
    let base = reference.finest();
    let origin = base.origin();
    let extent = base.extent();

    let coarsest = clamp(schedule[levels.len() - 1], levels[levels.len() - 1].0);
    let mut field = BSplineField::zeros(coarsest.0, coarsest.1, origin, extent)?;

    let mut reports = Vec::with_capacity(levels.len());
    let mut initial_ngf = 0.0;
    let mut final_ngf = 0.0;
    let mut objective_zero = 0.0;
    let mut objective_final = 0.0;
    for idx in (0..levels.len()).rev() {
        let want = clamp(schedule[idx], levels[idx].0);
        if field.grid_size() != want {
            field = field.prolong(want.0, want.1)?;
        }
        let mut objective = Step3Objective {
            ngf: BsplineNgf::new(&distances[idx], levels[idx].1, affine, &field),
            curvature: CurvatureOp::new(&field),
            alpha: cfg.alpha,
        };
        let mut coeffs = field.coeffs().to_vec();
        if idx == 0 {
            let zeros = vec![0.0; coeffs.len()];
            initial_ngf = objective.ngf.value(&zeros);
            objective_zero = initial_ngf; // curvature of the zero field is zero
        }
        let run = lbfgs(
            &mut objective,
            &mut coeffs,
            opt,
            opt.max_iterations_nonparametric,
        );
        if idx == 0 {
            final_ngf = objective.ngf.value(&coeffs);
            objective_final = run.final_value;
        }
        reports.push(LevelReport {
            width: levels[idx].0.width(),
            height: levels[idx].0.height(),
            run,
        });
        field.coeffs_mut().copy_from_slice(&coeffs);
    }

    // Keep the field only if it beats the affine-only objective at the
    // finest level.
    let reverted = objective_final > objective_zero;
    let (field, final_ngf) = if reverted {
        (None, initial_ngf)
    } else {
        (Some(field), final_ngf)
    };
    Ok((
        field,
        StepReport {
            step: 3,
            initial_ngf,
            final_ngf,
            reverted,
            levels: reports,
        },
    ))
}

/// Runs the enabled pipeline steps on preprocessed pyramids and returns the
/// composed transform with per-step diagnostics.
pub fn run(
    reference: &Pyramid,
    template: &Pyramid,
    config: &PipelineConfig,
) -> Result<RegistrationResult> {
    config.validate()?;
    let mut reports = Vec::new();
    let mut rigid = None;
    let mut affine = Affine2D::identity();

    if config.step1.enabled {
        let (winner, report) = run_ara(reference, template, &config.step1, &config.optimizer);
        affine = Affine2D::from_rigid(&winner);
        rigid = Some(winner);
        reports.push(report);
    }
    if config.step2.enabled {
        let (refined, report) =
            run_affine(reference, template, affine, &config.step2, &config.optimizer);
        affine = refined;
        reports.push(report);
    }
    let mut field = None;
    if config.step3.enabled {
        let (f, report) =
            run_bspline(reference, template, &affine, &config.step3, &config.optimizer)?;
        field = f;
        reports.push(report);
    }
    Ok(RegistrationResult {
        rigid,
        transform: Transform { affine, field },
        reports,
    })
}
