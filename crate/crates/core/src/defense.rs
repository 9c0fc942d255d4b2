//! Luminosity-filter pre-processing defense: find bright connected
//! components that sit inside darker (shadowed) surroundings and replace
//! them with the local pavement median before detection.

use rayon::prelude::*;

use crate::attack::{diff_lanes, SweepRun};
use crate::compositor::{compose, GroundMap};
use crate::detector::Detector;
use crate::error::{Error, Result};
use crate::raster::{box_sum, GrayImage, Rgb8Image};
use crate::scene::RoadScene;
use crate::sweep::NsConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefenseParams {
    /// Half-width of the local surround window, pixels.
    pub margin_px: usize,
    /// Gray levels above the local surround mean that mark a pixel anomalous.
    pub anomaly_threshold: f64,
    /// Fraction of a component's dilated boundary that must lie in darker
    /// (shadow) pixels for the component to count as NS-like.
    pub enclosure_ratio: f64,
    /// Median-fill neighborhood radius, pixels.
    pub fill_radius: usize,
}

impl Default for DefenseParams {
    fn default() -> Self {
        Self {
            margin_px: 9,
            anomaly_threshold: 18.0,
            enclosure_ratio: 0.7,
            fill_radius: 5,
        }
    }
}

impl DefenseParams {
    pub fn validate(&self) -> Result<()> {
        if self.margin_px == 0 {
            return Err(Error::InvalidConfig("margin_px must be > 0".into()));
        }
        if self.anomaly_threshold <= 0.0 {
            return Err(Error::InvalidConfig(
                "anomaly_threshold must be > 0".into(),
            ));
        }
        if !(self.enclosure_ratio > 0.0 && self.enclosure_ratio <= 1.0) {
            return Err(Error::InvalidConfig(
                "enclosure_ratio must be in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Normalized-gray analysis copy: affine map of the luminance to mean 128,
/// standard deviation 48. Analysis only; the output image keeps original
/// pixels wherever nothing is suppressed.
fn normalize_gray(gray: &GrayImage) -> Vec<f64> {
    let n = gray.data.len() as f64;
    let mean = gray.data.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = gray
        .data
        .iter()
        .map(|&v| (v as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    let std = var.sqrt().max(1.0);
    gray.data
        .iter()
        .map(|&v| (v as f64 - mean) / std * 48.0 + 128.0)
        .collect()
}

/// Components suppressed by the filter, as a 0/1 mask.
fn suppression_mask(gray: &GrayImage, params: &DefenseParams) -> Vec<u8> {
    let (w, h) = (gray.width, gray.height);
    let norm = normalize_gray(gray);
    let global_mean = norm.iter().sum::<f64>() / norm.len() as f64;
    // Shadow context: clearly below the normalized pavement level.
    let shadow_cut = global_mean - 0.35 * 48.0;

    // Local surround mean over the margin window.
    let integral = gray.integral();
    let gmean = gray.data.iter().map(|&v| v as f64).sum::<f64>() / norm.len() as f64;
    let gstd = (gray
        .data
        .iter()
        .map(|&v| (v as f64 - gmean).powi(2))
        .sum::<f64>()
        / norm.len() as f64)
        .sqrt()
        .max(1.0);
    let r = params.margin_px;
    let mut anomalous = vec![0u8; w * h];
    for y in 0..h {
        let y0 = y.saturating_sub(r);
        let y1 = (y + r).min(h - 1);
        for x in 0..w {
            let x0 = x.saturating_sub(r);
            let x1 = (x + r).min(w - 1);
            let n = ((y1 - y0 + 1) * (x1 - x0 + 1)) as f64;
            let local = box_sum(&integral, w, x0, y0, x1, y1) as f64 / n;
            let local_norm = (local - gmean) / gstd * 48.0 + 128.0;
            if norm[y * w + x] > local_norm + params.anomaly_threshold {
                anomalous[y * w + x] = 1;
            }
        }
    }

    // 4-connected components of the anomalous pixels.
    let mut label = vec![0u32; w * h];
    let mut next = 1u32;
    let mut stack = Vec::new();
    let mut out = vec![0u8; w * h];
    for start in 0..w * h {
        if anomalous[start] == 0 || label[start] != 0 {
            continue;
        }
        let id = next;
        next += 1;
        label[start] = id;
        stack.push(start);
        let mut comp = Vec::new();
        while let Some(i) = stack.pop() {
            comp.push(i);
            let (x, y) = (i % w, i / w);
            let mut push = |j: usize| {
                if anomalous[j] != 0 && label[j] == 0 {
                    label[j] = id;
                    stack.push(j);
                }
            };
            if x > 0 {
                push(i - 1);
            }
            if x + 1 < w {
                push(i + 1);
            }
            if y > 0 {
                push(i - w);
            }
            if y + 1 < h {
                push(i + w);
            }
        }
        // Dilated boundary: pixels adjacent to the component, outside it.
        let mut ring_total = 0usize;
        let mut ring_dark = 0usize;
        for &i in &comp {
            let (x, y) = (i % w, i / w);
            for (dx, dy) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if label[j] == id {
                    continue;
                }
                ring_total += 1;
                if norm[j] < shadow_cut {
                    ring_dark += 1;
                }
            }
        }
        if ring_total > 0 && ring_dark as f64 / ring_total as f64 >= params.enclosure_ratio {
            for &i in &comp {
                out[i] = 1;
            }
        }
    }
    out
}

/// Luminosity-filter pre-processing: suppress bright components whose
/// dilated boundary lies predominantly in shadow, filling them with the
/// per-channel median of nearby unsuppressed pixels. Genuine markings on
/// unshadowed pavement lack the dark ring and pass through untouched.
pub fn luminosity_filter(image: &Rgb8Image, params: &DefenseParams) -> Result<Rgb8Image> {
    params.validate()?;
    let gray = image.to_gray();
    let (w, h) = (gray.width, gray.height);
    let suppressed = suppression_mask(&gray, params);
    let mut out = image.clone();
    let r = params.fill_radius as i64;
    for y in 0..h {
        for x in 0..w {
            if suppressed[y * w + x] == 0 {
                continue;
            }
            let mut ch: [Vec<u8>; 3] = [Vec::new(), Vec::new(), Vec::new()];
            for dy in -r..=r {
                for dx in -r..=r {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if suppressed[j] != 0 {
                        continue;
                    }
                    let px = image.pixel(nx as usize, ny as usize);
                    for k in 0..3 {
                        ch[k].push(px[k]);
                    }
                }
            }
            if ch[0].is_empty() {
                continue;
            }
            let mut fill = [0u8; 3];
            for k in 0..3 {
                ch[k].sort_unstable();
                fill[k] = ch[k][ch[k].len() / 2];
            }
            out.set_pixel(x, y, fill);
        }
    }
    Ok(out)
}

/// Fraction of previously successful outcomes that the filter defeats:
/// recompose the attacked frame, filter, re-detect, re-diff.
pub fn defense_rate(
    scenes: &[RoadScene],
    successful: &[(usize, NsConfig)],
    detector: &Detector,
    params: &DefenseParams,
    run: &SweepRun,
) -> Result<f64> {
    params.validate()?;
    if successful.is_empty() {
        return Err(Error::EmptyInput("no successful outcomes".into()));
    }
    let mut prepared = Vec::new();
    for scene in scenes {
        let ground = GroundMap::for_scene(scene);
        let pre_img = luminosity_filter(&scene.image, params)?;
        let pre = detector.run(&pre_img, &scene.calib())?;
        prepared.push((scene, ground, pre));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(run.workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let defended: usize = pool.install(|| {
        successful
            .par_iter()
            .map(|&(sid, cfg)| {
                let (scene, ground, pre) = prepared
                    .get(sid)
                    .ok_or_else(|| Error::InvalidConfig(format!("scene id {sid}")))?;
                let composed = compose(scene, ground, &cfg, run.shade_factor)?;
                let filtered = luminosity_filter(&composed.image, params)?;
                let post = detector.run(&filtered, &scene.calib())?;
                let (_, _, success) = diff_lanes(pre, &post, run.threshold)?;
                Ok(usize::from(!success))
            })
            .sum::<Result<usize>>()
    })?;
    Ok(defended as f64 / successful.len() as f64)
}

/// Fraction of benign scenes whose detected lane count changes after
/// filtering — the false-suppression regression measure.
pub fn benign_regression(
    scenes: &[RoadScene],
    detector: &Detector,
    params: &DefenseParams,
) -> Result<f64> {
    if scenes.is_empty() {
        return Err(Error::EmptyInput("no benign scenes".into()));
    }
    let mut changed = 0usize;
    for scene in scenes {
        let before = detector.run(&scene.image, &scene.calib())?;
        let filtered = luminosity_filter(&scene.image, params)?;
        let after = detector.run(&filtered, &scene.calib())?;
        if after.lanes.len() != before.lanes.len() {
            changed += 1;
        }
    }
    Ok(changed as f64 / scenes.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{synth_scene, LaneLayout, SceneSpec};

    fn benign_scene() -> RoadScene {
        synth_scene(&SceneSpec::new(LaneLayout::default_us(), 7), 1.8).unwrap()
    }

    fn attacked_scene(cfg: &NsConfig) -> (RoadScene, RoadScene) {
        let scene = benign_scene();
        let ground = GroundMap::for_scene(&scene);
        let composed = compose(&scene, &ground, cfg, 0.55).unwrap();
        let mut attacked = scene.clone();
        attacked.image = composed.image;
        (scene, attacked)
    }

    fn strong_cfg() -> NsConfig {
        NsConfig {
            length_m: 8.0,
            width_m: 0.15,
            beta_deg: 5.0,
            distance_m: 0.6,
            brightness: 1.8,
        }
    }

    #[test]
    fn params_validated() {
        let mut p = DefenseParams::default();
        p.margin_px = 0;
        assert!(p.validate().is_err());
        let mut p = DefenseParams::default();
        p.enclosure_ratio = 0.0;
        assert!(p.validate().is_err());
        let mut p = DefenseParams::default();
        p.enclosure_ratio = 1.5;
        assert!(p.validate().is_err());
        assert!(DefenseParams::default().validate().is_ok());
    }

    #[test]
    fn benign_scene_preserved() {
        let scene = benign_scene();
        let det = Detector::reference();
        let before = det.run(&scene.image, &scene.calib()).unwrap();
        let filtered = luminosity_filter(&scene.image, &DefenseParams::default()).unwrap();
        let after = det.run(&filtered, &scene.calib()).unwrap();
        assert_eq!(before.lanes.len(), after.lanes.len());
    }

    #[test]
    fn ns_scene_suppressed() {
        let (scene, attacked) = attacked_scene(&strong_cfg());
        let det = Detector::reference();
        let pre = det.run(&scene.image, &scene.calib()).unwrap();
        let post_raw = det.run(&attacked.image, &scene.calib()).unwrap();
        let threshold = crate::attack::calibrate_threshold(std::slice::from_ref(&pre)).unwrap();
        let (_, _, success) = diff_lanes(&pre, &post_raw, threshold).unwrap();
        assert!(success, "attack must land before the defense is meaningful");

        let params = DefenseParams::default();
        let pre_f = det
            .run(
                &luminosity_filter(&scene.image, &params).unwrap(),
                &scene.calib(),
            )
            .unwrap();
        let post_f = det
            .run(
                &luminosity_filter(&attacked.image, &params).unwrap(),
                &scene.calib(),
            )
            .unwrap();
        let (_, _, still) = diff_lanes(&pre_f, &post_f, threshold).unwrap();
        assert!(!still, "filtered attack should no longer add a lane");
    }

    #[test]
    fn unenclosed_bright_stripe_preserved() {
        // Bright stripe on plain pavement: no dark ring, must pass through.
        let mut img = Rgb8Image::new(120, 120);
        for y in 0..120 {
            for x in 0..120 {
                img.set_pixel(x, y, [100, 100, 100]);
            }
        }
        for y in 20..100 {
            for x in 55..60 {
                img.set_pixel(x, y, [220, 220, 220]);
            }
        }
        let out = luminosity_filter(&img, &DefenseParams::default()).unwrap();
        assert_eq!(out.data, img.data);
    }

    #[test]
    fn enclosed_bright_stripe_suppressed() {
        let mut img = Rgb8Image::new(120, 120);
        for y in 0..120 {
            for x in 0..120 {
                img.set_pixel(x, y, [100, 100, 100]);
            }
        }
        // Shadow block with a bright slit inside it.
        for y in 20..100 {
            for x in 30..90 {
                img.set_pixel(x, y, [45, 45, 45]);
            }
        }
        for y in 30..90 {
            for x in 55..60 {
                img.set_pixel(x, y, [200, 200, 200]);
            }
        }
        let out = luminosity_filter(&img, &DefenseParams::default()).unwrap();
        let center = out.pixel(57, 60);
        assert!(
            center[0] < 100,
            "slit should be filled from shadow, got {center:?}"
        );
    }

    #[test]
    fn untouched_pixels_bit_exact() {
        let (_, attacked) = attacked_scene(&strong_cfg());
        let params = DefenseParams::default();
        let gray = attacked.image.to_gray();
        let suppressed = suppression_mask(&gray, &params);
        let out = luminosity_filter(&attacked.image, &params).unwrap();
        let (w, h) = (gray.width, gray.height);
        let r = params.fill_radius as i64;
        for y in 0..h {
            for x in 0..w {
                let mut near = false;
                'scan: for dy in -r..=r {
                    for dx in -r..=r {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx >= 0
                            && ny >= 0
                            && nx < w as i64
                            && ny < h as i64
                            && suppressed[ny as usize * w + nx as usize] != 0
                        {
                            near = true;
                            break 'scan;
                        }
                    }
                }
                if !near {
                    assert_eq!(out.pixel(x, y), attacked.image.pixel(x, y));
                }
            }
        }
    }

    #[test]
    fn filter_idempotent_within_one_gray_level() {
        let (_, attacked) = attacked_scene(&strong_cfg());
        let params = DefenseParams::default();
        let once = luminosity_filter(&attacked.image, &params).unwrap();
        let twice = luminosity_filter(&once, &params).unwrap();
        let mae = once
            .data
            .iter()
            .zip(twice.data.iter())
            .map(|(&a, &b)| (a as f64 - b as f64).abs())
            .sum::<f64>()
            / once.data.len() as f64;
        assert!(mae < 1.0, "idempotence MAE {mae}");
    }

    #[test]
    fn disabled_filter_defends_nothing() {
        let scene = benign_scene();
        let det = Detector::reference();
        let pre = det.run(&scene.image, &scene.calib()).unwrap();
        let threshold = crate::attack::calibrate_threshold(std::slice::from_ref(&pre)).unwrap();
        let run = SweepRun {
            shade_factor: 0.55,
            threshold,
            workers: 1,
        };
        let params = DefenseParams {
            anomaly_threshold: 1e9,
            ..DefenseParams::default()
        };
        let rate = defense_rate(
            std::slice::from_ref(&scene),
            &[(0, strong_cfg())],
            &det,
            &params,
            &run,
        )
        .unwrap();
        assert_eq!(rate, 0.0);
    }

    #[test]
    fn rate_monotone_in_enclosure_ratio() {
        let scene = benign_scene();
        let det = Detector::reference();
        let pre = det.run(&scene.image, &scene.calib()).unwrap();
        let threshold = crate::attack::calibrate_threshold(std::slice::from_ref(&pre)).unwrap();
        let run = SweepRun {
            shade_factor: 0.55,
            threshold,
            workers: 1,
        };
        let set = [(0usize, strong_cfg())];
        let mut last = -1.0;
        for ratio in [0.95, 0.7, 0.3] {
            let params = DefenseParams {
                enclosure_ratio: ratio,
                ..DefenseParams::default()
            };
            let rate = defense_rate(std::slice::from_ref(&scene), &set, &det, &params, &run)
                .unwrap();
            assert!(rate >= last, "rate {rate} at ratio {ratio} < {last}");
            last = rate;
        }
    }

    #[test]
    fn empty_successful_set_rejected() {
        let scene = benign_scene();
        let det = Detector::reference();
        let run = SweepRun {
            shade_factor: 0.55,
            threshold: 100,
            workers: 1,
        };
        let err = defense_rate(
            std::slice::from_ref(&scene),
            &[],
            &det,
            &DefenseParams::default(),
            &run,
        );
        assert!(matches!(err, Err(Error::EmptyInput(_))));
    }
}
