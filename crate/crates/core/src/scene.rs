//! Procedural road scenes: camera calibration, lane layout, and the renderer
//! that stands in for simulator captures.

use nalgebra::Matrix3;

use crate::compositor::ShadowLayer;
use crate::error::{Error, Result};
use crate::geom::{Homography, Pose};
use crate::raster::Rgb8Image;

/// Pinhole camera looking down the road.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub width: usize,
    pub height: usize,
    pub focal_px: f64,
    pub cx: f64,
    pub cy: f64,
    /// Mount height above the road plane, meters.
    pub mount_height_m: f64,
    /// Downward pitch, degrees.
    pub pitch_deg: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            width: 640,
            height: 360,
            focal_px: 320.0,
            cx: 320.0,
            cy: 180.0,
            mount_height_m: 1.5,
            pitch_deg: 8.0,
        }
    }
}

impl CameraModel {
    /// Homography from vehicle-frame ground coordinates (lateral-right,
    /// forward) in meters to pixel coordinates.
    pub fn ground_to_pixel(&self) -> Result<Homography> {
        if self.pitch_deg >= 90.0 || self.pitch_deg <= -90.0 {
            return Err(Error::DegenerateCamera(format!(
                "pitch {} deg",
                self.pitch_deg
            )));
        }
        let p = self.pitch_deg.to_radians();
        let (sp, cp) = (p.sin(), p.cos());
        let f = self.focal_px;
        let h = self.mount_height_m;
        // Ground point (X right, Y forward, z = 0), camera at height h:
        //   x_cam = X, y_cam = -Y sin p + h cos p, z_cam = Y cos p + h sin p.
        let m = Matrix3::new(
            f,
            self.cx * cp,
            self.cx * h * sp,
            0.0,
            -f * sp + self.cy * cp,
            f * h * cp + self.cy * h * sp,
            0.0,
            cp,
            h * sp,
        );
        Homography::new(m)
    }

    /// Image row of the horizon (ground at infinite distance).
    pub fn horizon_row(&self) -> f64 {
        self.cy - self.focal_px * self.pitch_deg.to_radians().tan()
    }
}

/// Bird's-eye-view sampling grid over the road plane, vehicle frame.
/// Row 0 is the far edge; the bottom row is nearest the camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BevGrid {
    pub x_min_m: f64,
    pub x_max_m: f64,
    pub y_min_m: f64,
    pub y_max_m: f64,
    pub meters_per_pixel: f64,
}

impl Default for BevGrid {
    fn default() -> Self {
        Self {
            x_min_m: -8.0,
            x_max_m: 8.0,
            y_min_m: 2.0,
            y_max_m: 34.0,
            meters_per_pixel: 0.05,
        }
    }
}

impl BevGrid {
    pub fn cols(&self) -> usize {
        ((self.x_max_m - self.x_min_m) / self.meters_per_pixel).round() as usize
    }

    pub fn rows(&self) -> usize {
        ((self.y_max_m - self.y_min_m) / self.meters_per_pixel).round() as usize
    }

    #[inline]
    pub fn pixel_to_meters(&self, col: f64, row: f64) -> (f64, f64) {
        (
            self.x_min_m + (col + 0.5) * self.meters_per_pixel,
            self.y_max_m - (row + 0.5) * self.meters_per_pixel,
        )
    }

    #[inline]
    pub fn meters_to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.x_min_m) / self.meters_per_pixel - 0.5,
            (self.y_max_m - y) / self.meters_per_pixel - 0.5,
        )
    }

    /// Affine transform vehicle meters -> BEV pixel as a homography.
    pub fn meters_to_pixel_homography(&self) -> Homography {
        let s = 1.0 / self.meters_per_pixel;
        Homography::new(Matrix3::new(
            s,
            0.0,
            -self.x_min_m * s - 0.5,
            0.0,
            -s,
            self.y_max_m * s - 0.5,
            0.0,
            0.0,
            1.0,
        ))
        .expect("affine scale is invertible")
    }
}

/// One painted stripe, offset from the reference marking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkingStripe {
    pub center_offset_m: f64,
    pub width_m: f64,
    /// `Some((on, off))` paints `on` meters then skips `off` meters.
    pub dash_m: Option<(f64, f64)>,
    pub color: [u8; 3],
}

/// Road-plane layout in meters, lateral offsets relative to the reference
/// lane marking (the center line).
#[derive(Debug, Clone, PartialEq)]
pub struct LaneLayout {
    pub markings: Vec<MarkingStripe>,
    pub lane_width_m: f64,
    /// Paved extent on each side of the reference marking.
    pub paved_left_m: f64,
    pub paved_right_m: f64,
}

impl LaneLayout {
    /// Two-lane road: yellow center line plus white edge lines, US-style
    /// 3.6 m lanes with 0.16 m markings.
    pub fn default_us() -> Self {
        Self {
            markings: vec![
                MarkingStripe {
                    center_offset_m: -3.6,
                    width_m: 0.16,
                    dash_m: None,
                    color: [225, 225, 225],
                },
                MarkingStripe {
                    center_offset_m: 0.0,
                    width_m: 0.16,
                    dash_m: None,
                    color: [212, 182, 60],
                },
                MarkingStripe {
                    center_offset_m: 3.6,
                    width_m: 0.16,
                    dash_m: None,
                    color: [225, 225, 225],
                },
            ],
            lane_width_m: 3.6,
            paved_left_m: 4.0,
            paved_right_m: 4.0,
        }
    }

    pub fn marking_width_m(&self) -> f64 {
        self.markings
            .iter()
            .map(|m| m.width_m)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Horizontal road alignment: straight along +y, optionally turning left
/// with a constant radius at `y_curve`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RoadPath {
    Straight,
    LeftTurn { y_curve_m: f64, radius_m: f64 },
}

impl RoadPath {
    /// Project a road-frame point to (lateral offset from the reference
    /// marking, station along it).
    #[inline]
    pub fn lateral_station(&self, x: f64, y: f64) -> (f64, f64) {
        match *self {
            RoadPath::Straight => (x, y),
            RoadPath::LeftTurn { y_curve_m, radius_m } => {
                if y <= y_curve_m {
                    (x, y)
                } else {
                    let cx = -radius_m;
                    let dx = x - cx;
                    let dy = y - y_curve_m;
                    let ang = dy.atan2(dx);
                    if ang <= 0.0 {
                        (x, y)
                    } else {
                        let r = dx.hypot(dy);
                        (r - radius_m, y_curve_m + radius_m * ang)
                    }
                }
            }
        }
    }

    /// Point on the reference marking at a given station, plus its tangent.
    pub fn station_point(&self, station: f64) -> ([f64; 2], [f64; 2]) {
        match *self {
            RoadPath::Straight => ([0.0, station], [0.0, 1.0]),
            RoadPath::LeftTurn { y_curve_m, radius_m } => {
                if station <= y_curve_m {
                    ([0.0, station], [0.0, 1.0])
                } else {
                    let ang = (station - y_curve_m) / radius_m;
                    (
                        [-radius_m + radius_m * ang.cos(), y_curve_m + radius_m * ang.sin()],
                        [-ang.sin(), ang.cos()],
                    )
                }
            }
        }
    }
}

/// Full procedural scene description in road-frame coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub layout: LaneLayout,
    pub path: RoadPath,
    pub camera: CameraModel,
    pub bev: BevGrid,
    /// Pavement texture noise seed; the same seed renders byte-identically.
    pub seed: u64,
    /// Noise amplitude in gray levels; zero for a noiseless scene.
    pub noise_amp: f64,
    pub shadow: Option<ShadowLayer>,
}

impl SceneSpec {
    pub fn new(layout: LaneLayout, seed: u64) -> Self {
        Self {
            layout,
            path: RoadPath::Straight,
            camera: CameraModel::default(),
            bev: BevGrid::default(),
            seed,
            noise_amp: 6.0,
            shadow: None,
        }
    }

    /// Surface color at a road-frame point, before shadowing.
    #[inline]
    fn base_color(&self, x: f64, y: f64) -> [f64; 3] {
        let (lat, station) = self.path.lateral_station(x, y);
        let n = if self.noise_amp > 0.0 {
            self.noise_amp * hash_noise(x, y, self.seed)
        } else {
            0.0
        };
        if lat < -self.layout.paved_left_m || lat > self.layout.paved_right_m {
            return [74.0 + n, 96.0 + n, 66.0 + n];
        }
        for m in &self.layout.markings {
            if (lat - m.center_offset_m).abs() <= m.width_m / 2.0 {
                let painted = match m.dash_m {
                    None => true,
                    Some((on, off)) => station.rem_euclid(on + off) < on,
                };
                if painted {
                    return [
                        m.color[0] as f64 + n * 0.5,
                        m.color[1] as f64 + n * 0.5,
                        m.color[2] as f64 + n * 0.5,
                    ];
                }
            }
        }
        let g = 115.0 + n;
        [g, g, g]
    }

    /// Color at a road-frame point with the shadow layer applied.
    #[inline]
    pub fn color_at(&self, x: f64, y: f64) -> [f64; 3] {
        let c = self.base_color(x, y);
        let f = match &self.shadow {
            Some(layer) => layer.factor_at(x, y),
            None => 1.0,
        };
        [c[0] * f, c[1] * f, c[2] * f]
    }

    /// Render the camera view from `pose` (camera position on the road plane).
    pub fn render(&self, pose: &Pose) -> Result<Rgb8Image> {
        let h = self.camera.ground_to_pixel()?;
        let inv = h.inverse();
        let mut img = Rgb8Image::new(self.camera.width, self.camera.height);
        let horizon = self.camera.horizon_row();
        let sky = [168.0, 196.0, 226.0];
        let haze = [150.0, 166.0, 168.0];
        // 2x2 supersampling keeps thin markings from aliasing away at range.
        let offsets = [(-0.25, -0.25), (0.25, -0.25), (-0.25, 0.25), (0.25, 0.25)];
        for v in 0..self.camera.height {
            for u in 0..self.camera.width {
                let mut acc = [0.0f64; 3];
                for (du, dv) in offsets {
                    let uu = u as f64 + 0.5 + du;
                    let vv = v as f64 + 0.5 + dv;
                    let c = if vv <= horizon + 0.5 {
                        sky
                    } else {
                        match inv.apply(uu, vv) {
                            Some((gx, gy)) if gy > 0.0 && gy < 150.0 => {
                                let w = pose.local_to_world(gx, gy);
                                self.color_at(w[0], w[1])
                            }
                            _ => haze,
                        }
                    };
                    acc[0] += c[0];
                    acc[1] += c[1];
                    acc[2] += c[2];
                }
                img.set_pixel(
                    u,
                    v,
                    [
                        (acc[0] / 4.0).round().clamp(0.0, 255.0) as u8,
                        (acc[1] / 4.0).round().clamp(0.0, 255.0) as u8,
                        (acc[2] / 4.0).round().clamp(0.0, 255.0) as u8,
                    ],
                );
            }
        }
        Ok(img)
    }
}

/// A rendered scene bundled with its calibration, ready for the detector
/// and the compositor.
#[derive(Debug, Clone)]
pub struct RoadScene {
    pub image: Rgb8Image,
    /// Camera pixel -> BEV pixel.
    pub cam_to_bev: Homography,
    /// Vehicle ground meters -> camera pixel.
    pub ground_to_pixel: Homography,
    pub bev: BevGrid,
    pub meters_per_bev_pixel: f64,
    pub lane_layout: LaneLayout,
    /// Lateral distance of the camera to the reference lane marking.
    pub camera_offset_m: f64,
    pub camera: CameraModel,
    pub pose: Pose,
    pub spec: SceneSpec,
}

impl RoadScene {
    pub fn validate(&self) -> Result<()> {
        if self.image.width < 64 || self.image.height < 64 {
            return Err(Error::InvalidConfig(format!(
                "image {}x{} below 64x64 minimum",
                self.image.width, self.image.height
            )));
        }
        if self.meters_per_bev_pixel <= 0.0 {
            return Err(Error::InvalidConfig("BEV scale must be positive".into()));
        }
        // Homography invertibility is enforced at construction.
        Ok(())
    }
}

/// Default camera lateral offsets of the four standard evaluation scenes.
pub const STANDARD_SCENE_OFFSETS_M: [f64; 4] = [0.0, 0.6, 1.2, 1.8];

/// Render a scene at a camera pose and package it with its calibration.
pub fn synth_scene_at(spec: &SceneSpec, pose: Pose, camera_offset_m: f64) -> Result<RoadScene> {
    let image = spec.render(&pose)?;
    let ground_to_pixel = spec.camera.ground_to_pixel()?;
    let cam_to_bev = spec
        .bev
        .meters_to_pixel_homography()
        .compose(&ground_to_pixel.inverse());
    Ok(RoadScene {
        image,
        cam_to_bev,
        ground_to_pixel,
        bev: spec.bev,
        meters_per_bev_pixel: spec.bev.meters_per_pixel,
        lane_layout: spec.layout.clone(),
        camera_offset_m,
        camera: spec.camera,
        pose,
        spec: spec.clone(),
    })
}

/// Straight-road scene with the camera `camera_offset_m` right of the
/// reference marking, at road station 0.
pub fn synth_scene(spec: &SceneSpec, camera_offset_m: f64) -> Result<RoadScene> {
    synth_scene_at(spec, Pose::new(camera_offset_m, 0.0, 0.0), camera_offset_m)
}

/// The four standard evaluation scenes.
pub fn standard_scenes(seed: u64) -> Result<Vec<RoadScene>> {
    STANDARD_SCENE_OFFSETS_M
        .iter()
        .map(|&off| synth_scene(&SceneSpec::new(LaneLayout::default_us(), seed), off))
        .collect()
}

/// Deterministic texture noise in [-1, 1], quantized to a 5 cm grid.
#[inline]
fn hash_noise(x: f64, y: f64, seed: u64) -> f64 {
    let ix = (x * 20.0).floor() as i64 as u64;
    let iy = (y * 20.0).floor() as i64 as u64;
    let mut h = seed ^ ix.wrapping_mul(0x9E3779B97F4A7C15);
    h ^= iy.wrapping_mul(0xC2B2AE3D27D4EB4F);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94D049BB133111EB);
    h ^= h >> 31;
    (h & 0xFFFF) as f64 / 32767.5 - 1.0
}
