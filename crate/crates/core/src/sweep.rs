//! Negative-shadow parameter space: the four-parameter pattern spec, the
//! lane-confinement purge rule, and the systematic sweep generator.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEG: f64 = std::f64::consts::PI / 180.0;
/// Slack for grid values that land exactly on the lane-width boundary.
const PURGE_EPS: f64 = 1e-9;

/// One negative-shadow pattern: a parallel-sided bright stripe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NsConfig {
    /// Stripe width W in meters.
    pub width_m: f64,
    /// Stripe length L in meters.
    pub length_m: f64,
    /// Angle beta between the stripe's long axis and the lane direction.
    pub beta_deg: f64,
    /// Lateral distance D of the stripe's near edge from the reference lane
    /// marking.
    pub distance_m: f64,
    /// Luminance contrast ratio of the stripe to the surrounding shadow.
    pub brightness: f64,
}

pub const DEFAULT_BRIGHTNESS: f64 = 1.8;

impl NsConfig {
    pub fn new(
        width_m: f64,
        length_m: f64,
        beta_deg: f64,
        distance_m: f64,
        brightness: f64,
    ) -> Result<Self> {
        let cfg = Self {
            width_m,
            length_m,
            beta_deg,
            distance_m,
            brightness,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.width_m.is_finite()
            && self.length_m.is_finite()
            && self.beta_deg.is_finite()
            && self.distance_m.is_finite()
            && self.brightness.is_finite();
        if !finite {
            return Err(Error::InvalidConfig("non-finite NS parameter".into()));
        }
        if self.width_m <= 0.0 || self.length_m <= 0.0 {
            return Err(Error::InvalidConfig(
                "width and length must be positive".into(),
            ));
        }
        if self.distance_m < 0.0 {
            return Err(Error::InvalidConfig("distance must be >= 0".into()));
        }
        if !(0.0..=90.0).contains(&self.beta_deg) {
            return Err(Error::InvalidConfig(format!(
                "beta {} out of [0, 90]",
                self.beta_deg
            )));
        }
        if self.brightness < 1.0 {
            return Err(Error::InvalidConfig(format!(
                "brightness {} must be >= 1",
                self.brightness
            )));
        }
        Ok(())
    }
}

/// Which lateral-extent formula confines an NS to the lane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PurgeVariant {
    /// X_max = D + W sin(beta) + L cos(beta), as printed in the source of the
    /// sweep bounds.
    PaperLiteral,
    /// X_max = D + W cos(beta) + L sin(beta): lateral footprint of a rectangle
    /// whose long axis makes angle beta with the lane direction.
    Geometric,
}

impl fmt::Display for PurgeVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PurgeVariant::PaperLiteral => write!(f, "literal"),
            PurgeVariant::Geometric => write!(f, "geometric"),
        }
    }
}

impl FromStr for PurgeVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(PurgeVariant::PaperLiteral),
            "geometric" => Ok(PurgeVariant::Geometric),
            other => Err(Error::InvalidConfig(format!(
                "unknown purge variant '{other}' (expected literal|geometric)"
            ))),
        }
    }
}

/// Grid bounds of the systematic sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepBounds {
    pub widths_m: Vec<f64>,
    pub distances_m: Vec<f64>,
    pub lengths_m: Vec<f64>,
    pub betas_deg: Vec<f64>,
    pub lane_width_m: f64,
    pub brightness: f64,
}

impl Default for SweepBounds {
    fn default() -> Self {
        // 0.1..=3.9 step 0.2, built from integers so the values print tersely.
        let tenths: Vec<f64> = (0..20).map(|k| (1 + 2 * k) as f64 / 10.0).collect();
        let lengths: Vec<f64> = (1..=10)
            .map(|v| v as f64)
            .chain([15.0, 25.0, 40.0])
            .collect();
        Self {
            widths_m: tenths.clone(),
            distances_m: tenths,
            lengths_m: lengths,
            betas_deg: vec![0.0, 5.0, 10.0, 15.0, 30.0, 45.0, 90.0],
            lane_width_m: 4.0,
            brightness: DEFAULT_BRIGHTNESS,
        }
    }
}

impl SweepBounds {
    pub fn raw_grid_size(&self) -> usize {
        self.widths_m.len() * self.distances_m.len() * self.lengths_m.len() * self.betas_deg.len()
    }
}

/// Lateral extent of an NS config under the selected purge variant.
pub fn lateral_extent(cfg: &NsConfig, variant: PurgeVariant) -> f64 {
    let beta = cfg.beta_deg * DEG;
    match variant {
        PurgeVariant::PaperLiteral => {
            cfg.distance_m + cfg.width_m * beta.sin() + cfg.length_m * beta.cos()
        }
        PurgeVariant::Geometric => {
            cfg.distance_m + cfg.width_m * beta.cos() + cfg.length_m * beta.sin()
        }
    }
}

pub fn survives_purge(cfg: &NsConfig, variant: PurgeVariant, lane_width_m: f64) -> bool {
    lateral_extent(cfg, variant) <= lane_width_m + PURGE_EPS
}

/// Cartesian product of the four grids, W-major then D, L, beta, filtered by
/// the purge rule. Deterministic: two calls yield the same ordered list.
pub fn generate_sweep(bounds: &SweepBounds, variant: PurgeVariant) -> Vec<NsConfig> {
    let mut out = Vec::new();
    for &w in &bounds.widths_m {
        for &d in &bounds.distances_m {
            for &l in &bounds.lengths_m {
                for &b in &bounds.betas_deg {
                    let cfg = NsConfig {
                        width_m: w,
                        length_m: l,
                        beta_deg: b,
                        distance_m: d,
                        brightness: bounds.brightness,
                    };
                    if survives_purge(&cfg, variant, bounds.lane_width_m) {
                        out.push(cfg);
                    }
                }
            }
        }
    }
    out
}

/// Serialize configs into `rows_per_file`-row CSV batches under `dir`.
/// Returns the file paths in concatenation order.
pub fn batch_csv(configs: &[NsConfig], rows_per_file: usize, dir: &Path) -> Result<Vec<PathBuf>> {
    if configs.is_empty() {
        return Err(Error::EmptyInput("no configs to batch".into()));
    }
    assert!(rows_per_file > 0);
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let mut paths = Vec::new();
    for (i, chunk) in configs.chunks(rows_per_file).enumerate() {
        let path = dir.join(format!("ns_{i:04}.csv"));
        write_config_csv(chunk, &path)?;
        paths.push(path);
    }
    Ok(paths)
}

pub fn write_config_csv(configs: &[NsConfig], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for cfg in configs {
        w.serialize(cfg).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

pub fn read_config_csv(path: &Path) -> Result<Vec<NsConfig>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut out = Vec::new();
    for (i, rec) in r.deserialize::<NsConfig>().enumerate() {
        let cfg = rec.map_err(|e| Error::Parse {
            format: format!("config csv {}", path.display()),
            line: i + 2,
            detail: e.to_string(),
        })?;
        out.push(cfg);
    }
    Ok(out)
}

/// Read every `ns_*.csv` batch in `dir`, in filename order, and concatenate.
pub fn read_batch_dir(dir: &Path) -> Result<Vec<NsConfig>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir.display().to_string(), e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.extension().is_some_and(|x| x == "csv")
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("ns_"))
        })
        .collect();
    files.sort();
    let mut out = Vec::new();
    for f in &files {
        out.extend(read_config_csv(f)?);
    }
    Ok(out)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Parse {
        format: format!("csv {}", path.display()),
        line: 0,
        detail: e.to_string(),
    }
}
