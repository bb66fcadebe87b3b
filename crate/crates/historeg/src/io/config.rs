//! INI-style pipeline configuration files.
//!
//! ```text
//! # comment
//! [step1]
//! enabled = true
//! n_rot = 32
//! n_max = 200
//! n_levels = 4
//! epsilon = 0.1
//!
//! [step2]   ; n_max, n_levels, epsilon, enabled
//! [step3]   ; plus alpha and grid = 257x257
//! [optimizer]
//! max_iterations_parametric = 50
//! ```
//!
//! Unset keys keep their defaults; unknown sections or keys are rejected
//! with the offending line number.

use crate::error::{Error, Result};
use crate::pipeline::PipelineConfig;
use std::fmt::Write as _;
use std::path::Path;

pub fn parse_config(text: &str, path: &Path) -> Result<PipelineConfig> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut cfg = PipelineConfig::default();
    let mut section: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let Some(name) = name.strip_suffix(']') else {
                return Err(err(no, format!("unterminated section header {line:?}")));
            };
            let name = name.trim();
            if !matches!(name, "step1" | "step2" | "step3" | "optimizer") {
                return Err(err(no, format!("unknown section {name:?}")));
            }
            section = Some(name.to_string());
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(err(no, format!("expected key = value, found {line:?}")));
        };
        let key = key.trim();
        let value = value.trim();
        let Some(section) = section.as_deref() else {
            return Err(err(no, format!("key {key:?} outside of any section")));
        };

        let parse_bool = || -> Result<bool> {
            match value {
                "true" => Ok(true),
                "false" => Ok(false),
                _ => Err(err(no, format!("invalid boolean {value:?}"))),
            }
        };
        let parse_usize = || -> Result<usize> {
            value
                .parse()
                .map_err(|_| err(no, format!("invalid integer {value:?}")))
        };
        let parse_f64 = || -> Result<f64> {
            value
                .parse()
                .map_err(|_| err(no, format!("invalid number {value:?}")))
        };
        let parse_grid = || -> Result<(usize, usize)> {
            let Some((a, b)) = value.split_once('x') else {
                return Err(err(no, format!("grid must look like 257x257, found {value:?}")));
            };
            let nx = a
                .trim()
                .parse()
                .map_err(|_| err(no, format!("invalid grid size {value:?}")))?;
            let ny = b
                .trim()
                .parse()
                .map_err(|_| err(no, format!("invalid grid size {value:?}")))?;
            Ok((nx, ny))
        };

        match (section, key) {
            ("step1", "enabled") => cfg.step1.enabled = parse_bool()?,
            ("step1", "n_rot") => cfg.step1.n_rot = parse_usize()?,
            ("step1", "n_max") => cfg.step1.n_max = parse_usize()?,
            ("step1", "n_levels") => cfg.step1.n_levels = parse_usize()?,
            ("step1", "epsilon") => cfg.step1.epsilon = parse_f64()?,
            ("step2", "enabled") => cfg.step2.enabled = parse_bool()?,
            ("step2", "n_max") => cfg.step2.n_max = parse_usize()?,
            ("step2", "n_levels") => cfg.step2.n_levels = parse_usize()?,
            ("step2", "epsilon") => cfg.step2.epsilon = parse_f64()?,
            ("step3", "enabled") => cfg.step3.enabled = parse_bool()?,
            ("step3", "n_max") => cfg.step3.n_max = parse_usize()?,
            ("step3", "n_levels") => cfg.step3.n_levels = parse_usize()?,
            ("step3", "epsilon") => cfg.step3.epsilon = parse_f64()?,
            ("step3", "alpha") => cfg.step3.alpha = parse_f64()?,
            ("step3", "grid") => cfg.step3.grid = parse_grid()?,
            ("optimizer", "max_iterations_parametric") => {
                cfg.optimizer.max_iterations_parametric = parse_usize()?
            }
            ("optimizer", "max_iterations_nonparametric") => {
                cfg.optimizer.max_iterations_nonparametric = parse_usize()?
            }
            ("optimizer", "gradient_tolerance") => {
                cfg.optimizer.gradient_tolerance = parse_f64()?
            }
            ("optimizer", "objective_tolerance") => {
                cfg.optimizer.objective_tolerance = parse_f64()?
            }
            ("optimizer", "parameter_tolerance") => {
                cfg.optimizer.parameter_tolerance = parse_f64()?
            }
            ("optimizer", "lbfgs_memory") => cfg.optimizer.lbfgs_memory = parse_usize()?,
            ("optimizer", "max_line_search_halvings") => {
                cfg.optimizer.max_line_search_halvings = parse_usize()?
            }
            _ => return Err(err(no, format!("unknown key {key:?} in section [{section}]"))),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn read_config_file(path: &Path) -> Result<PipelineConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, path)
}

/// Renders a configuration in the same format [`parse_config`] reads;
/// parsing the output reproduces the configuration exactly.
pub fn format_config(cfg: &PipelineConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "[step1]");
    let _ = writeln!(s, "enabled = {}", cfg.step1.enabled);
    let _ = writeln!(s, "n_rot = {}", cfg.step1.n_rot);
    let _ = writeln!(s, "n_max = {}", cfg.step1.n_max);
    let _ = writeln!(s, "n_levels = {}", cfg.step1.n_levels);
    let _ = writeln!(s, "epsilon = {}", cfg.step1.epsilon);
    let _ = writeln!(s, "\n[step2]");
    let _ = writeln!(s, "enabled = {}", cfg.step2.enabled);
    let _ = writeln!(s, "n_max = {}", cfg.step2.n_max);
    let _ = writeln!(s, "n_levels = {}", cfg.step2.n_levels);
    let _ = writeln!(s, "epsilon = {}", cfg.step2.epsilon);
    let _ = writeln!(s, "\n[step3]");
    let _ = writeln!(s, "enabled = {}", cfg.step3.enabled);
    let _ = writeln!(s, "n_max = {}", cfg.step3.n_max);
    let _ = writeln!(s, "n_levels = {}", cfg.step3.n_levels);
    let _ = writeln!(s, "epsilon = {}", cfg.step3.epsilon);
    let _ = writeln!(s, "alpha = {}", cfg.step3.alpha);
    let _ = writeln!(s, "grid = {}x{}", cfg.step3.grid.0, cfg.step3.grid.1);
    let _ = writeln!(s, "\n[optimizer]");
    let o = &cfg.optimizer;
    let _ = writeln!(s, "max_iterations_parametric = {}", o.max_iterations_parametric);
    let _ = writeln!(s, "max_iterations_nonparametric = {}", o.max_iterations_nonparametric);
    let _ = writeln!(s, "gradient_tolerance = {}", o.gradient_tolerance);
    let _ = writeln!(s, "objective_tolerance = {}", o.objective_tolerance);
    let _ = writeln!(s, "parameter_tolerance = {}", o.parameter_tolerance);
    let _ = writeln!(s, "lbfgs_memory = {}", o.lbfgs_memory);
    let _ = writeln!(s, "max_line_search_halvings = {}", o.max_line_search_halvings);
    s
}
