//! Run configuration: defaults, optional config file (JSON or TOML), and
//! command-line overrides, resolved into one validated, serializable record
//! that every report embeds.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use membrane_calc::gennum::ClassifyConfig;
use membrane_calc::grid::EpsilonGrid;
use membrane_calc::quad::QuadConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// Shape of a config file.  Every field is optional; the file only overrides
/// what it mentions.
#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    grid: GridSection,
    #[serde(default)]
    quad: QuadSection,
    #[serde(default)]
    classify: ClassifySection,
    format: Option<Format>,
    out: Option<PathBuf>,
    workers: Option<usize>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    kmin: Option<u32>,
    kmax: Option<u32>,
    per_decade: Option<u32>,
    tail: Option<usize>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuadSection {
    gauss_order: Option<usize>,
    segments: Option<usize>,
    ball_radial: Option<usize>,
    ball_angular: Option<usize>,
    indicator_scan: Option<usize>,
    abs_tol: Option<f64>,
    gap_rel_floor: Option<f64>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassifySection {
    null_threshold: Option<f64>,
    residual_max: Option<f64>,
    invertible_margin: Option<f64>,
    underflow_floor: Option<f64>,
}

/// Fully resolved settings for one run.  Serialized verbatim into reports so
/// a result can always be reproduced from its own file.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub grid_kmin: u32,
    pub grid_kmax: u32,
    pub grid_per_decade: u32,
    pub grid_tail: usize,
    pub gauss_order: usize,
    pub segments: usize,
    pub ball_radial: usize,
    pub ball_angular: usize,
    pub indicator_scan: usize,
    pub abs_tol: f64,
    pub gap_rel_floor: f64,
    pub null_threshold: f64,
    pub residual_max: f64,
    pub invertible_margin: f64,
    pub underflow_floor: f64,
    pub format: Format,
    // Excluded from reports: the worker count only changes the schedule, and
    // identical runs must stay byte-identical regardless of it; the output
    // path and truncation flag are about where the report lands, not what it
    // says.
    #[serde(skip)]
    pub workers: usize,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[serde(skip)]
    pub force: bool,
}

/// Command-line override set (a subset of RunConfig).
pub struct Overrides {
    pub grid_kmin: Option<u32>,
    pub grid_kmax: Option<u32>,
    pub tail: Option<usize>,
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub force: bool,
}

fn load_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
    let is_toml = path.extension().map(|x| x == "toml").unwrap_or(false);
    if is_toml {
        toml::from_str(&text)
            .map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))
    } else {
        serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))
    }
}

impl RunConfig {
    /// Defaults <- config file (from `--config` or `MEMBRANE_CALC_CONFIG`)
    /// <- command-line flags, then validated.
    pub fn resolve(config_path: Option<&Path>, flags: Overrides) -> Result<RunConfig, CliError> {
        let file = match config_path
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os("MEMBRANE_CALC_CONFIG").map(PathBuf::from))
        {
            Some(p) => load_file(&p)?,
            None => FileConfig::default(),
        };
        let quad = QuadConfig::default();
        let classify = ClassifyConfig::default();
        let cfg = RunConfig {
            grid_kmin: flags.grid_kmin.or(file.grid.kmin).unwrap_or(4),
            grid_kmax: flags.grid_kmax.or(file.grid.kmax).unwrap_or(48),
            grid_per_decade: file.grid.per_decade.unwrap_or(4),
            grid_tail: flags.tail.or(file.grid.tail).unwrap_or(16),
            gauss_order: file.quad.gauss_order.unwrap_or(quad.gauss_order),
            segments: file.quad.segments.unwrap_or(quad.segments),
            ball_radial: file.quad.ball_radial.unwrap_or(quad.ball_radial),
            ball_angular: file.quad.ball_angular.unwrap_or(quad.ball_angular),
            indicator_scan: file.quad.indicator_scan.unwrap_or(quad.indicator_scan),
            abs_tol: file.quad.abs_tol.unwrap_or(quad.abs_tol),
            gap_rel_floor: file.quad.gap_rel_floor.unwrap_or(quad.gap_rel_floor),
            null_threshold: file.classify.null_threshold.unwrap_or(classify.null_threshold),
            residual_max: file.classify.residual_max.unwrap_or(classify.residual_max),
            invertible_margin: file
                .classify
                .invertible_margin
                .unwrap_or(classify.invertible_margin),
            underflow_floor: file.classify.underflow_floor.unwrap_or(classify.underflow_floor),
            format: flags.format.or(file.format).unwrap_or(Format::Json),
            workers: flags.workers.or(file.workers).unwrap_or(0),
            out: flags.out.or(file.out),
            force: flags.force,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Input(msg));
        if self.grid_kmax <= self.grid_kmin {
            return bad(format!(
                "grid kmax {} must exceed kmin {}",
                self.grid_kmax, self.grid_kmin
            ));
        }
        if self.grid_per_decade == 0 {
            return bad("grid per_decade must be positive".into());
        }
        let len = (self.grid_kmax - self.grid_kmin + 1) as usize;
        if self.grid_tail < 4 || self.grid_tail > len {
            return bad(format!("tail {} out of range for {len} samples", self.grid_tail));
        }
        if !(2..=512).contains(&self.gauss_order) {
            return bad(format!("gauss_order {} outside 2..=512", self.gauss_order));
        }
        if self.segments == 0 || self.segments > 4096 {
            return bad(format!("segments {} outside 1..=4096", self.segments));
        }
        for (name, v) in [
            ("ball_radial", self.ball_radial),
            ("ball_angular", self.ball_angular),
            ("indicator_scan", self.indicator_scan),
        ] {
            if !(4..=65536).contains(&v) {
                return bad(format!("{name} {v} outside 4..=65536"));
            }
        }
        if !(self.abs_tol > 0.0 && self.abs_tol.is_finite()) {
            return bad(format!("abs_tol {} must be positive and finite", self.abs_tol));
        }
        if !(self.gap_rel_floor >= 0.0 && self.gap_rel_floor.is_finite()) {
            return bad(format!("gap_rel_floor {} must be non-negative", self.gap_rel_floor));
        }
        for (name, v) in [
            ("null_threshold", self.null_threshold),
            ("residual_max", self.residual_max),
            ("invertible_margin", self.invertible_margin),
            ("underflow_floor", self.underflow_floor),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} {v} must be positive and finite"));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Arc<EpsilonGrid>, CliError> {
        EpsilonGrid::logarithmic(
            self.grid_kmin,
            self.grid_kmax,
            self.grid_per_decade,
            self.grid_tail,
        )
        .map_err(CliError::Core)
    }

    pub fn quad(&self) -> QuadConfig {
        QuadConfig {
            gauss_order: self.gauss_order,
            segments: self.segments,
            ball_radial: self.ball_radial,
            ball_angular: self.ball_angular,
            indicator_scan: self.indicator_scan,
            abs_tol: self.abs_tol,
            gap_rel_floor: self.gap_rel_floor,
        }
    }

    pub fn classify(&self) -> ClassifyConfig {
        ClassifyConfig {
            null_threshold: self.null_threshold,
            residual_max: self.residual_max,
            invertible_margin: self.invertible_margin,
            underflow_floor: self.underflow_floor,
        }
    }
}
