//! Attack scoring: pre/post lane-mask differencing, the one-lane pixel
//! threshold, sweep orchestration, and summary statistics.

use rayon::prelude::*;

use crate::compositor::{compose, GroundMap};
use crate::detector::{rasterize_band, Detector, LaneDetectionResult};
use crate::error::{Error, Result};
use crate::raster::{box_sum, GrayImage};
use crate::scene::RoadScene;
use crate::sweep::NsConfig;

/// Default adaptive-binarization neighborhood and offset.
pub const BINARIZE_BLOCK: usize = 11;
pub const BINARIZE_OFFSET: i32 = 2;
/// Fraction of a single lane's pixel count used as the success threshold.
pub const THRESHOLD_FACTOR: f64 = 0.5;

/// Result of one (scene, config) evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    pub config: NsConfig,
    pub scene_id: usize,
    pub added_pixels: usize,
    pub removed_pixels: usize,
    pub success: bool,
}

/// Mean-of-neighborhood binarization: a pixel is set when it exceeds the
/// local mean minus `offset`. A mid-scale floor keeps uniform dark regions
/// dark, which the pure local rule would not.
pub fn adaptive_binarize(mask: &GrayImage, block: usize, offset: i32) -> GrayImage {
    let r = block / 2;
    let integral = mask.integral();
    let mut out = GrayImage::new(mask.width, mask.height);
    for y in 0..mask.height {
        let y0 = y.saturating_sub(r);
        let y1 = (y + r).min(mask.height - 1);
        for x in 0..mask.width {
            let x0 = x.saturating_sub(r);
            let x1 = (x + r).min(mask.width - 1);
            let n = ((y1 - y0 + 1) * (x1 - x0 + 1)) as f64;
            let mean = box_sum(&integral, mask.width, x0, y0, x1, y1) as f64 / n;
            let cut = (mean - offset as f64).max(127.0);
            if mask.get(x, y) as f64 > cut {
                out.set(x, y, 255);
            }
        }
    }
    out
}

/// Algorithm-style mask differencing after adaptive binarization.
pub fn diff_lanes(
    pre: &LaneDetectionResult,
    post: &LaneDetectionResult,
    threshold: usize,
) -> Result<(usize, usize, bool)> {
    diff_masks(&pre.mask, &post.mask, threshold)
}

pub fn diff_masks(pre: &GrayImage, post: &GrayImage, threshold: usize) -> Result<(usize, usize, bool)> {
    if pre.width != post.width || pre.height != post.height {
        return Err(Error::DimensionMismatch(
            pre.width,
            pre.height,
            post.width,
            post.height,
        ));
    }
    let a = adaptive_binarize(pre, BINARIZE_BLOCK, BINARIZE_OFFSET);
    let b = adaptive_binarize(post, BINARIZE_BLOCK, BINARIZE_OFFSET);
    let mut added = 0usize;
    let mut removed = 0usize;
    for (pa, pb) in a.data.iter().zip(b.data.iter()) {
        match (*pa > 0, *pb > 0) {
            (false, true) => added += 1,
            (true, false) => removed += 1,
            _ => {}
        }
    }
    Ok((added, removed, added > threshold))
}

/// One lane's worth of pixels: threshold = 0.5 x median rasterized pixel
/// count of a single detected genuine lane over the benign scenes.
pub fn calibrate_threshold(benign: &[LaneDetectionResult]) -> Result<usize> {
    if benign.is_empty() {
        return Err(Error::EmptyInput("no benign scenes".into()));
    }
    let mut counts: Vec<usize> = Vec::new();
    for res in benign {
        for lane in &res.lanes {
            let mut scratch = GrayImage::new(res.mask.width, res.mask.height);
            rasterize_band(&mut scratch, &lane.points, 2.0);
            counts.push(scratch.data.iter().filter(|&&v| v > 0).count());
        }
    }
    if counts.is_empty() {
        return Err(Error::NoBenignLanes);
    }
    counts.sort_unstable();
    Ok((THRESHOLD_FACTOR * counts[counts.len() / 2] as f64).round() as usize)
}

/// Sweep-wide evaluation settings.
#[derive(Debug, Clone)]
pub struct SweepRun {
    pub shade_factor: f64,
    pub threshold: usize,
    pub workers: usize,
}

/// Evaluate every (scene, config) pair. The result order is scene-major and
/// identical at any worker count.
pub fn run_sweep(
    scenes: &[RoadScene],
    configs: &[NsConfig],
    detector: &Detector,
    run: &SweepRun,
) -> Result<Vec<AttackOutcome>> {
    let mut prepared = Vec::new();
    for scene in scenes {
        let ground = GroundMap::for_scene(scene);
        let pre = detector.run(&scene.image, &scene.calib())?;
        prepared.push((scene, ground, pre));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(run.workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let pairs: Vec<(usize, &NsConfig)> = prepared
        .iter()
        .enumerate()
        .flat_map(|(sid, _)| configs.iter().map(move |c| (sid, c)))
        .collect();
    pool.install(|| {
        pairs
            .par_iter()
            .map(|&(sid, cfg)| {
                let (scene, ground, pre) = &prepared[sid];
                let composed = compose(scene, ground, cfg, run.shade_factor)?;
                let post = detector.run(&composed.image, &scene.calib())?;
                let (added, removed, success) = diff_lanes(pre, &post, run.threshold)?;
                Ok(AttackOutcome {
                    config: *cfg,
                    scene_id: sid,
                    added_pixels: added,
                    removed_pixels: removed,
                    success,
                })
            })
            .collect()
    })
}

/// Success-rate series over one swept parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSeries {
    pub param: &'static str,
    /// (parameter value, success rate, sample count), ascending by value.
    pub points: Vec<(f64, f64, usize)>,
    pub mu_success: f64,
    pub sigma_success: f64,
    pub mu_failure: f64,
    pub sigma_failure: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepStats {
    pub n_outcomes: usize,
    pub success_rate: f64,
    /// Per config: success on at least one scene.
    pub success_rate_any_scene: f64,
    /// Per config: success on every scene.
    pub success_rate_all_scenes: f64,
    pub series: Vec<ParamSeries>,
}

impl SweepStats {
    pub fn from_outcomes(outcomes: &[AttackOutcome]) -> Self {
        let n = outcomes.len();
        let wins = outcomes.iter().filter(|o| o.success).count();
        let params: [(&'static str, fn(&NsConfig) -> f64); 4] = [
            ("width_m", |c| c.width_m),
            ("length_m", |c| c.length_m),
            ("beta_deg", |c| c.beta_deg),
            ("distance_m", |c| c.distance_m),
        ];
        let series = params
            .iter()
            .map(|&(name, get)| param_series(name, get, outcomes))
            .collect();
        // Aggregate per config across scenes.
        let mut per_cfg: std::collections::BTreeMap<[i64; 5], (bool, bool)> =
            std::collections::BTreeMap::new();
        for o in outcomes {
            let key = [
                key_of(o.config.width_m),
                key_of(o.config.length_m),
                key_of(o.config.beta_deg),
                key_of(o.config.distance_m),
                key_of(o.config.brightness),
            ];
            let e = per_cfg.entry(key).or_insert((false, true));
            e.0 |= o.success;
            e.1 &= o.success;
        }
        let n_cfg = per_cfg.len().max(1);
        let any = per_cfg.values().filter(|v| v.0).count();
        let all = per_cfg.values().filter(|v| v.1).count();
        Self {
            n_outcomes: n,
            success_rate: if n == 0 { 0.0 } else { wins as f64 / n as f64 },
            success_rate_any_scene: if outcomes.is_empty() {
                0.0
            } else {
                any as f64 / n_cfg as f64
            },
            success_rate_all_scenes: if outcomes.is_empty() {
                0.0
            } else {
                all as f64 / n_cfg as f64
            },
            series,
        }
    }

    pub fn series_for(&self, param: &str) -> Option<&ParamSeries> {
        self.series.iter().find(|s| s.param == param)
    }
}

#[inline]
fn key_of(v: f64) -> i64 {
    (v * 1000.0).round() as i64
}

fn param_series(
    name: &'static str,
    get: fn(&NsConfig) -> f64,
    outcomes: &[AttackOutcome],
) -> ParamSeries {
    let mut buckets: std::collections::BTreeMap<i64, (f64, usize, usize)> =
        std::collections::BTreeMap::new();
    let (mut s_sum, mut s_sq, mut s_n) = (0.0, 0.0, 0usize);
    let (mut f_sum, mut f_sq, mut f_n) = (0.0, 0.0, 0usize);
    for o in outcomes {
        let v = get(&o.config);
        let e = buckets.entry(key_of(v)).or_insert((v, 0, 0));
        e.1 += 1;
        if o.success {
            e.2 += 1;
            s_sum += v;
            s_sq += v * v;
            s_n += 1;
        } else {
            f_sum += v;
            f_sq += v * v;
            f_n += 1;
        }
    }
    let stats = |sum: f64, sq: f64, n: usize| -> (f64, f64) {
        if n == 0 {
            return (f64::NAN, f64::NAN);
        }
        let mu = sum / n as f64;
        (mu, (sq / n as f64 - mu * mu).max(0.0).sqrt())
    };
    let (mu_s, sd_s) = stats(s_sum, s_sq, s_n);
    let (mu_f, sd_f) = stats(f_sum, f_sq, f_n);
    ParamSeries {
        param: name,
        points: buckets
            .values()
            .map(|&(v, n, wins)| (v, wins as f64 / n as f64, n))
            .collect(),
        mu_success: mu_s,
        sigma_success: sd_s,
        mu_failure: mu_f,
        sigma_failure: sd_f,
    }
}

/// One point of the brightness/onset experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct OnsetPoint {
    pub brightness: f64,
    /// Farthest camera-to-NS distance with the NS reported as a lane; None
    /// when it is never detected.
    pub onset_m: Option<f64>,
}

pub const DEFAULT_BRIGHTNESS_GRID: [f64; 6] = [1.05, 1.2, 1.4, 1.8, 2.4, 3.0];
pub const DEFAULT_APPROACH_STEP_M: f64 = 0.25;

/// For each brightness, advance a virtual camera toward the NS and record
/// the farthest distance at which the detector first reports it as a lane.
pub fn brightness_sweep(
    spec: &crate::scene::SceneSpec,
    camera_offset_m: f64,
    cfg: &NsConfig,
    grid: &[f64],
    detector: &Detector,
    shade_factor: f64,
    step_m: f64,
    max_distance_m: f64,
) -> Result<Vec<OnsetPoint>> {
    let ns_start_y = 40.0;
    let ns_lateral = cfg.distance_m + cfg.width_m / 2.0;
    let mut out = Vec::new();
    for &b in grid {
        let cfg_b = NsConfig {
            brightness: b,
            ..*cfg
        };
        let layer = crate::compositor::ShadowLayer::for_config(&cfg_b, ns_start_y, shade_factor)?;
        let mut spec_b = spec.clone();
        spec_b.shadow = Some(layer);
        let mut onset = None;
        let mut d = max_distance_m;
        while d >= 2.0 {
            let pose = crate::geom::Pose::new(camera_offset_m, ns_start_y - d, 0.0);
            let scene = crate::scene::synth_scene_at(&spec_b, pose, camera_offset_m)?;
            let res = detector.run(&scene.image, &scene.calib())?;
            if ns_reported(&res, &scene, ns_lateral) {
                onset = Some(d);
                break;
            }
            d -= step_m;
        }
        out.push(OnsetPoint {
            brightness: b,
            onset_m: onset,
        });
    }
    Ok(out)
}

/// True when some detected lane sits at the NS lateral position and not on
/// a genuine marking.
fn ns_reported(res: &LaneDetectionResult, scene: &RoadScene, ns_lateral_m: f64) -> bool {
    for lane in &res.lanes {
        let Some(base) = lane.points.first() else {
            continue;
        };
        let Some((c, r)) = scene.cam_to_bev.apply(base[0], base[1]) else {
            continue;
        };
        let (x_local, y_local) = scene.bev.pixel_to_meters(c, r);
        let x_world = scene.pose.local_to_world(x_local, y_local)[0];
        let on_marking = scene
            .lane_layout
            .markings
            .iter()
            .any(|m| (m.center_offset_m - x_world).abs() < 0.3);
        if !on_marking && (x_world - ns_lateral_m).abs() < 0.4 {
            return true;
        }
    }
    false
}
