//! Closed-loop safety simulation: a kinematic bicycle with a pure-pursuit
//! lane-centering controller driven by the detector, run through three
//! staged decoy-stripe scenarios, plus the reaction-time safety model.

use rayon::prelude::*;

use crate::compositor::{NsHole, ShadowLayer};
use crate::detector::{Detector, LaneDetectionResult, ScenceCalib};
use crate::error::{Error, Result};
use crate::geom::{normalize_angle, OrientedRect, Polygon, Pose};
use crate::scene::{synth_scene_at, LaneLayout, RoadPath, SceneSpec};

pub const WHEELBASE_M: f64 = 2.85;
pub const MAX_STEER_RAD: f64 = 0.4;
pub const CONTROL_DT_S: f64 = 0.1;
pub const PHYSICS_SUBSTEPS: usize = 10;
pub const REACTION_BUDGET_S: f64 = 2.5;
/// Lateral deviation from the benign trajectory that counts as induced.
pub const DEVIATION_THRESHOLD_M: f64 = 0.15;
pub const MPH_TO_MPS: f64 = 0.44704;
pub const TIMEOUT_S: f64 = 30.0;
/// A run this far off the road is over regardless of hazards.
pub const RUNAWAY_LATERAL_M: f64 = 15.0;

pub const DEFAULT_SPEEDS_MPH: [f64; 5] = [10.0, 15.0, 20.0, 35.0, 60.0];
pub const DEFAULT_LENGTHS_M: [f64; 7] = [10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub heading_rad: f64,
    pub speed_mps: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, heading_rad: f64, speed_mps: f64) -> Self {
        Self {
            x,
            y,
            heading_rad: normalize_angle(heading_rad),
            speed_mps: speed_mps.max(0.0),
        }
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.x, self.y, self.heading_rad)
    }
}

/// Kinematic bicycle update. Heading 0 points along +y; positive steering
/// turns toward +x (rightward).
pub fn step(state: &VehicleState, steering_cmd: f64, dt: f64) -> VehicleState {
    let steer = steering_cmd.clamp(-MAX_STEER_RAD, MAX_STEER_RAD);
    let v = state.speed_mps;
    let heading = state.heading_rad + v / WHEELBASE_M * steer.tan() * dt;
    VehicleState {
        x: state.x + v * state.heading_rad.sin() * dt,
        y: state.y + v * state.heading_rad.cos() * dt,
        heading_rad: normalize_angle(heading),
        speed_mps: v,
    }
}

pub fn mph_to_mps(mph: f64) -> f64 {
    mph * MPH_TO_MPS
}

/// Pure-pursuit lookahead, meters.
pub fn lookahead_m(speed_mps: f64) -> f64 {
    (1.2 * speed_mps).max(6.0).min(20.0)
}

/// Boundaries below this confidence are ignored by the controller; curve
/// scenes shed low-support arc fragments at the far road edge.
pub const MIN_BOUNDARY_CONFIDENCE: f64 = 0.2;

/// Forward distances at which the corridor is sampled. Detection is
/// accurate in this near band; the lookahead target is extrapolated from
/// the parabola through these samples rather than from far polyline ends,
/// which underestimate curvature badly.
const CORRIDOR_SAMPLES_M: [f64; 3] = [2.0, 6.0, 10.0];

/// Per-boundary lateral positions (vehicle frame) at the corridor sample
/// distances, from the camera-space polylines.
#[doc(hidden)]
pub fn boundary_laterals(
    detection: &LaneDetectionResult,
    calib: &ScenceCalib,
) -> Vec<[f64; 3]> {
    let mut out: Vec<(f64, [f64; 3])> = Vec::new();
    let mut lanes: Vec<_> = detection.lanes.iter().collect();
    lanes.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    for lane in lanes {
        if lane.confidence < MIN_BOUNDARY_CONFIDENCE {
            continue;
        }
        // Prefer the raw window track: the fitted polyline's near end is
        // biased by far rows wherever the road bends.
        let source = if lane.track.len() >= 3 {
            &lane.track
        } else {
            &lane.points
        };
        let mut pts: Vec<(f64, f64)> = source
            .iter()
            .filter_map(|p| calib.cam_to_bev.apply(p[0], p[1]))
            .map(|(c, r)| calib.bev.pixel_to_meters(c, r))
            .collect();
        if pts.is_empty() {
            continue;
        }
        // A boundary of the ego corridor must have near support; far-only
        // fragments (curve-edge artifacts) cannot bound the corridor.
        if pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min) > 10.0 {
            continue;
        }
        // Fit over the near band only: far rows of a bending road would
        // otherwise tilt the near-field samples.
        let near_pts: Vec<(f64, f64)> = pts.iter().copied().filter(|p| p.1 <= 16.0).collect();
        if near_pts.len() >= 4 {
            pts = near_pts;
        }
        // Quadratic x(y) through the polyline so short fragments still
        // report a position at every sample distance.
        let y_lo = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let y_hi = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let eval: Box<dyn Fn(f64) -> f64> = if y_hi - y_lo < 3.0 {
            let x_end = pts.iter().fold((f64::NEG_INFINITY, 0.0), |acc, &(x, y)| {
                if y > acc.0 {
                    (y, x)
                } else {
                    acc
                }
            });
            Box::new(move |_| x_end.1)
        } else {
            let mut s = [0.0f64; 5];
            let mut b = [0.0f64; 3];
            for &(x, y) in &pts {
                let mut yp = 1.0;
                for (k, sk) in s.iter_mut().enumerate() {
                    *sk += yp;
                    if k < 3 {
                        b[k] += x * yp;
                    }
                    yp *= y;
                }
            }
            let a = nalgebra::Matrix3::new(s[0], s[1], s[2], s[1], s[2], s[3], s[2], s[3], s[4]);
            let rhs = nalgebra::Vector3::new(b[0], b[1], b[2]);
            match a.lu().solve(&rhs) {
                Some(c) => Box::new(move |y: f64| {
                    // Extrapolate only a little past the fitted span.
                    let yc = y.clamp(y_lo - 2.0, y_hi + 4.0);
                    c[0] + c[1] * yc + c[2] * yc * yc
                }),
                None => continue,
            }
        };
        let s = [
            eval(CORRIDOR_SAMPLES_M[0]),
            eval(CORRIDOR_SAMPLES_M[1]),
            eval(CORRIDOR_SAMPLES_M[2]),
        ];
        // Duplicate fragments of one marking: keep the most confident.
        let dup = out.iter().any(|(_, o)| {
            let d = (0..3).map(|k| (o[k] - s[k]).abs()).sum::<f64>() / 3.0;
            d < 1.0
        });
        if !dup {
            out.push((lane.confidence, s));
        }
    }
    out.into_iter().map(|(_, s)| s).collect()
}

/// Parabola through the corridor samples, evaluated at `y`.
fn corridor_at(samples: &[f64; 3], y: f64) -> f64 {
    let [y0, y1, y2] = CORRIDOR_SAMPLES_M;
    let l0 = (y - y1) * (y - y2) / ((y0 - y1) * (y0 - y2));
    let l1 = (y - y0) * (y - y2) / ((y1 - y0) * (y1 - y2));
    let l2 = (y - y0) * (y - y1) / ((y2 - y0) * (y2 - y1));
    samples[0] * l0 + samples[1] * l1 + samples[2] * l2
}

/// Frame-to-frame controller memory: last steering command plus the last
/// accepted boundary laterals, used for track continuity when a marking
/// drops out for a frame.
#[derive(Debug, Clone, Copy, Default)]
pub struct CtrlState {
    pub last_cmd: f64,
    pub left: Option<[f64; 3]>,
    pub right: Option<[f64; 3]>,
    coast_left: u32,
    coast_right: u32,
}

/// Consecutive coasting frames after which a track is dropped and
/// reacquired from scratch.
const MAX_COAST_FRAMES: u32 = 5;

/// Maximum per-frame jump of a tracked boundary before the new measurement
/// is rejected as an artifact and the track coasts.
const TRACK_GATE_M: f64 = 0.8;

/// Cross-track steering gain (scaled by 1/sqrt(speed)).
const KE_CROSS_TRACK: f64 = 1.5;

/// Per-frame decay applied to the held steering command when the detector
/// reports no usable boundaries.
const NO_DETECTION_DECAY: f64 = 0.7;

/// Boundaries farther out than this cannot seed a fresh track.
const REACQUIRE_MAX_M: f64 = 6.0;

/// Cap on the cross-track steering term (rad): damps the slingshot when a
/// fresh track is acquired far off center.
const CROSS_TERM_CAP_RAD: f64 = 0.25;

fn pick_side(
    xs: &[[f64; 3]],
    prev: Option<[f64; 3]>,
    coast: &mut u32,
    is_left: bool,
) -> Option<[f64; 3]> {
    let near = |s: &[f64; 3]| (s[0] + s[1]) / 2.0;
    // Continuity first: the candidate closest to the previous track wins if
    // it is within the gate (sides may momentarily blur near a crossing).
    if let Some(p) = prev {
        let best = xs
            .iter()
            .copied()
            .min_by(|a, b| (near(a) - near(&p)).abs().total_cmp(&(near(b) - near(&p)).abs()));
        if let Some(b) = best {
            if (near(&b) - near(&p)).abs() <= TRACK_GATE_M {
                *coast = 0;
                return Some(b);
            }
        }
        // Dropout: coast briefly on the previous track, then reacquire.
        *coast += 1;
        if *coast <= MAX_COAST_FRAMES {
            return Some(p);
        }
    }
    *coast = 0;
    // No usable history: innermost boundary on the requested side, within
    // a plausible corridor distance.
    let side = |s: &&[f64; 3]| {
        if is_left {
            (-REACQUIRE_MAX_M..0.0).contains(&near(s))
        } else {
            (0.0..REACQUIRE_MAX_M).contains(&near(s))
        }
    };
    let innermost = xs.iter().filter(side).copied();
    if is_left {
        innermost.max_by(|a, b| near(a).total_cmp(&near(b)))
    } else {
        innermost.min_by(|a, b| near(a).total_cmp(&near(b)))
    }
}

/// Pure-pursuit steering toward the midpoint of the two innermost detected
/// lane boundaries. Empty detections hold the previous command.
pub fn lane_center_control(
    detection: &LaneDetectionResult,
    calib: &ScenceCalib,
    state: &VehicleState,
    ctrl: &mut CtrlState,
) -> f64 {
    let lookahead = lookahead_m(state.speed_mps);
    // With nothing to track, bleed the last command off toward straight
    // rather than holding a turn indefinitely.
    let coast = |ctrl: &mut CtrlState| {
        ctrl.last_cmd *= NO_DETECTION_DECAY;
        ctrl.last_cmd
    };
    let xs = boundary_laterals(detection, calib);
    if xs.is_empty() {
        return coast(ctrl);
    }
    let left = pick_side(&xs, ctrl.left, &mut ctrl.coast_left, true);
    let right = pick_side(&xs, ctrl.right, &mut ctrl.coast_right, false);
    ctrl.left = left;
    ctrl.right = right;
    // A collapsed corridor means the trackers converged on one boundary;
    // hold course rather than steer onto it.
    if let (Some(l), Some(r)) = (left, right) {
        if r[0] - l[0] < 1.5 {
            return coast(ctrl);
        }
    }
    let half_lane = 1.8;
    // Corridor centerline samples; a lone boundary is offset by half a
    // lane width.
    let center: [f64; 3] = match (left, right) {
        (Some(l), Some(r)) => [
            (l[0] + r[0]) / 2.0,
            (l[1] + r[1]) / 2.0,
            (l[2] + r[2]) / 2.0,
        ],
        (Some(l), None) => [l[0] + half_lane, l[1] + half_lane, l[2] + half_lane],
        (None, Some(r)) => [r[0] - half_lane, r[1] - half_lane, r[2] - half_lane],
        (None, None) => return coast(ctrl),
    };
    // Corridor centerline as x(y) = a + b y + c y^2 from the samples.
    let [x2, x6, x10] = center;
    let c = (x10 - 2.0 * x6 + x2) / 32.0;
    let b = (x6 - x2 - 32.0 * c) / 4.0;
    let a = x2 - 2.0 * b - 4.0 * c;
    // Pursuit of the lookahead point minus the parts explained by the
    // current offset and misalignment leaves a curvature feedforward; the
    // heading and cross-track terms then track tightly even where far
    // detection under-reports curvature. The cross-track gain decays with
    // sqrt(speed): a straight 1/v schedule is too soft at highway speed.
    let x_rel = corridor_at(&center, lookahead) - a - b * lookahead;
    let kappa_ff = (2.0 * x_rel / (lookahead * lookahead)).clamp(-0.08, 0.08);
    let v = state.speed_mps.max(2.0);
    let cross = (KE_CROSS_TRACK * a / v.sqrt())
        .atan()
        .clamp(-CROSS_TERM_CAP_RAD, CROSS_TERM_CAP_RAD);
    // Correction terms shrink with lookahead (classic pure-pursuit gain);
    // full heading-error gain at highway speed oscillates into the curve.
    let corr_gain = (12.0 / lookahead).min(1.0);
    let cmd = ((WHEELBASE_M * kappa_ff).atan() + corr_gain * (b.atan() + cross))
        .clamp(-MAX_STEER_RAD, MAX_STEER_RAD);
    ctrl.last_cmd = cmd;
    cmd
}

/// One decoy stripe: pivot on the road plane, long axis `beta_deg` off the
/// road direction (positive toward +x).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StripeSpec {
    pub x0: f64,
    pub beta_deg: f64,
    pub width_m: f64,
    pub brightness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NpcSpec {
    /// Oncoming lane position (road frame x) and speed along -y.
    pub x: f64,
    pub speed_mps: f64,
    /// Road station where ego and NPC are staged to meet.
    pub meet_y: f64,
    pub radius_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub id: u8,
    pub path: RoadPath,
    pub layout: LaneLayout,
    pub stripes: [StripeSpec; 2],
    pub ns_start_y: f64,
    pub shade_factor: f64,
    pub hazard: Polygon,
    pub npc: Option<NpcSpec>,
    pub start: Pose,
    /// Run ends when the road station exceeds this.
    pub end_station: f64,
}

impl ScenarioSpec {
    /// The three staged scenarios.
    ///
    /// 1. Left turn: both ego-lane boundaries continued straight past the
    ///    curve entry, leading off the outside of the bend into a ditch.
    /// 2. Straight road: fake boundaries angled left across the center
    ///    line, herding the ego vehicle into the oncoming corridor where a
    ///    scripted NPC approaches.
    /// 3. Sweeping left bend: both boundaries continued straight past the
    ///    bend entry, carrying the vehicle off the pavement into a
    ///    bus-station strip on the outside of the bend.
    pub fn standard(id: u8) -> Result<Self> {
        let layout = LaneLayout::default_us();
        let mk_stripes = |beta: f64, brightness: f64| {
            [
                StripeSpec {
                    x0: 0.0,
                    beta_deg: beta,
                    width_m: 0.2,
                    brightness,
                },
                StripeSpec {
                    x0: 3.6,
                    beta_deg: beta,
                    width_m: 0.2,
                    brightness,
                },
            ]
        };
        let start = Pose::new(1.8, 0.0, 0.0);
        match id {
            1 => {
                let path = RoadPath::LeftTurn {
                    y_curve_m: 40.0,
                    radius_m: 25.0,
                };
                Ok(Self {
                    id,
                    path,
                    layout,
                    stripes: mk_stripes(0.0, 1.8),
                    ns_start_y: 40.0,
                    shade_factor: 0.55,
                    hazard: offroad_hazard(&path, 6.5, 40.0, 80.0),
                    npc: None,
                    start,
                    end_station: 70.0,
                })
            }
            2 => Ok(Self {
                id,
                path: RoadPath::Straight,
                layout,
                stripes: mk_stripes(-5.0, 1.8),
                ns_start_y: 12.0,
                shade_factor: 0.55,
                hazard: Polygon::rect(-2.8, 16.0, -0.8, 80.0),
                npc: Some(NpcSpec {
                    x: -1.8,
                    speed_mps: 8.0,
                    meet_y: 45.0,
                    radius_m: 1.0,
                }),
                start,
                end_station: 80.0,
            }),
            3 => {
                let path = RoadPath::LeftTurn {
                    y_curve_m: 30.0,
                    radius_m: 45.0,
                };
                Ok(Self {
                    id,
                    path,
                    layout,
                    // Bus-station strip 3 m beyond the right road edge.
                    stripes: mk_stripes(0.0, 1.8),
                    ns_start_y: 30.0,
                    shade_factor: 0.55,
                    hazard: offroad_hazard(&path, 4.8, 30.0, 100.0),
                    npc: None,
                    start,
                    end_station: 90.0,
                })
            }
            other => Err(Error::InvalidConfig(format!("scenario {other} unknown"))),
        }
    }

    /// Shadow layer for a given stripe length; None disables the attack.
    pub fn layer(&self, ns_length_m: f64) -> Result<Option<ShadowLayer>> {
        if ns_length_m <= 0.0 {
            return Ok(None);
        }
        let holes: Vec<NsHole> = self
            .stripes
            .iter()
            .map(|s| {
                let b = s.beta_deg.to_radians();
                NsHole {
                    rect: OrientedRect {
                        origin: [s.x0, self.ns_start_y],
                        axis: [b.sin(), b.cos()],
                        length: ns_length_m,
                        width: s.width_m,
                    },
                    brightness: s.brightness,
                }
            })
            .collect();
        // Canopy hugging the stripe pair: an oriented band along the stripe
        // axis, not the axis-aligned hull (which would blanket the whole
        // road for long shallow stripes).
        let m = 1.5;
        let b = self.stripes[0].beta_deg.to_radians();
        let (s, c) = (b.sin(), b.cos());
        let x0 = self.stripes[0].x0.min(self.stripes[1].x0);
        let x1 = self.stripes[0].x0.max(self.stripes[1].x0);
        let w = x1 - x0 + self.stripes[0].width_m.max(self.stripes[1].width_m);
        let canopy = OrientedRect {
            origin: [x0 - m, self.ns_start_y - m * c],
            axis: [s, c],
            length: ns_length_m + 2.0 * m,
            width: w + 2.0 * m,
        };
        let footprint = Polygon {
            vertices: canopy.corners().to_vec(),
        };
        Ok(Some(ShadowLayer::new(footprint, holes, self.shade_factor)?))
    }

    /// Lateral offset from the ego lane center at a road-frame point.
    pub fn lane_center_dev(&self, x: f64, y: f64) -> f64 {
        let (lat, _) = self.path.lateral_station(x, y);
        lat - self.layout.lane_width_m / 2.0
    }

    /// Declarative key-value form. The lane layout itself is always the
    /// standard two-lane US road and is not serialized.
    pub fn to_config(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        let _ = writeln!(out, "id = {}", self.id);
        match self.path {
            RoadPath::Straight => {
                let _ = writeln!(out, "path = straight");
            }
            RoadPath::LeftTurn { y_curve_m, radius_m } => {
                let _ = writeln!(out, "path = left_turn {y_curve_m} {radius_m}");
            }
        }
        let _ = writeln!(
            out,
            "start = {} {} {}",
            self.start.x, self.start.y, self.start.heading_rad
        );
        let _ = writeln!(out, "end_station = {}", self.end_station);
        let _ = writeln!(out, "ns_start_y = {}", self.ns_start_y);
        let _ = writeln!(out, "shade_factor = {}", self.shade_factor);
        for (key, s) in [("stripe_left", &self.stripes[0]), ("stripe_right", &self.stripes[1])] {
            let _ = writeln!(
                out,
                "{key} = {} {} {} {}",
                s.x0, s.beta_deg, s.width_m, s.brightness
            );
        }
        let flat: Vec<String> = self
            .hazard
            .vertices
            .iter()
            .flat_map(|v| [v[0].to_string(), v[1].to_string()])
            .collect();
        let _ = writeln!(out, "hazard = {}", flat.join(" "));
        if let Some(npc) = &self.npc {
            let _ = writeln!(
                out,
                "npc = {} {} {} {}",
                npc.x, npc.speed_mps, npc.meet_y, npc.radius_m
            );
        }
        out
    }

    /// Parse the key-value form written by [`to_config`](Self::to_config).
    /// Blank lines and `#` comments are ignored.
    pub fn from_config(text: &str) -> Result<Self> {
        let mut map = std::collections::BTreeMap::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                format: "scenario config".into(),
                line: ln + 1,
                detail: "expected key = value".into(),
            })?;
            map.insert(k.trim().to_string(), (ln + 1, v.trim().to_string()));
        }
        let get = |key: &str| -> Result<(usize, String)> {
            map.get(key).cloned().ok_or_else(|| Error::Parse {
                format: "scenario config".into(),
                line: 0,
                detail: format!("missing key {key}"),
            })
        };
        let nums = |key: &str, n: usize| -> Result<Vec<f64>> {
            let (ln, v) = get(key)?;
            let vals: Vec<f64> = v
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    format: "scenario config".into(),
                    line: ln,
                    detail: format!("{key}: {e}"),
                })?;
            if n > 0 && vals.len() != n {
                return Err(Error::Parse {
                    format: "scenario config".into(),
                    line: ln,
                    detail: format!("{key}: expected {n} numbers, got {}", vals.len()),
                });
            }
            Ok(vals)
        };
        let id = nums("id", 1)?[0] as u8;
        let (path_ln, path_v) = get("path")?;
        let mut toks = path_v.split_whitespace();
        let path = match toks.next() {
            Some("straight") => RoadPath::Straight,
            Some("left_turn") => {
                let mut f = || -> Result<f64> {
                    toks.next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| Error::Parse {
                            format: "scenario config".into(),
                            line: path_ln,
                            detail: "left_turn needs y_curve and radius".into(),
                        })
                };
                RoadPath::LeftTurn {
                    y_curve_m: f()?,
                    radius_m: f()?,
                }
            }
            other => {
                return Err(Error::Parse {
                    format: "scenario config".into(),
                    line: path_ln,
                    detail: format!("unknown path {other:?}"),
                })
            }
        };
        let start = nums("start", 3)?;
        let stripe = |key: &str| -> Result<StripeSpec> {
            let v = nums(key, 4)?;
            Ok(StripeSpec {
                x0: v[0],
                beta_deg: v[1],
                width_m: v[2],
                brightness: v[3],
            })
        };
        let hz = nums("hazard", 0)?;
        if hz.len() < 6 || hz.len() % 2 != 0 {
            return Err(Error::Parse {
                format: "scenario config".into(),
                line: get("hazard")?.0,
                detail: "hazard needs >= 3 x,y vertex pairs".into(),
            });
        }
        let npc = if map.contains_key("npc") {
            let v = nums("npc", 4)?;
            Some(NpcSpec {
                x: v[0],
                speed_mps: v[1],
                meet_y: v[2],
                radius_m: v[3],
            })
        } else {
            None
        };
        Ok(Self {
            id,
            path,
            layout: LaneLayout::default_us(),
            stripes: [stripe("stripe_left")?, stripe("stripe_right")?],
            ns_start_y: nums("ns_start_y", 1)?[0],
            shade_factor: nums("shade_factor", 1)?[0],
            hazard: Polygon {
                vertices: hz.chunks(2).map(|c| [c[0], c[1]]).collect(),
            },
            npc,
            start: Pose::new(start[0], start[1], start[2]),
            end_station: nums("end_station", 1)?[0],
        })
    }
}

/// Per-run trajectory CSV: `t,x,y,heading,speed,lat_dev`.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    use std::fmt::Write as _;
    let mut out = String::from("t,x,y,heading,speed,lat_dev\n");
    for p in traj {
        let _ = writeln!(
            out,
            "{:.2},{:.4},{:.4},{:.5},{:.3},{:.4}",
            p.t, p.x, p.y, p.heading_rad, p.speed_mps, p.lat_dev_m
        );
    }
    out
}

/// Off-road hazard band: everything more than `min_lateral` right of the
/// reference marking, along the given station range.
fn offroad_hazard(path: &RoadPath, min_lateral: f64, s0: f64, s1: f64) -> Polygon {
    let mut inner = Vec::new();
    let n = 16;
    for i in 0..=n {
        let s = s0 + (s1 - s0) * i as f64 / n as f64;
        let (p, t) = path.station_point(s);
        inner.push([p[0] + min_lateral * t[1], p[1] - min_lateral * t[0]]);
    }
    // Close far to the right of the last/first stations.
    let (pl, tl) = path.station_point(s1);
    let (pf, tf) = path.station_point(s0);
    let mut vertices = inner;
    vertices.push([pl[0] + 40.0 * tl[1], pl[1] - 40.0 * tl[0]]);
    vertices.push([pf[0] + 40.0 * tf[1], pf[1] - 40.0 * tf[0]]);
    Polygon { vertices }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajPoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading_rad: f64,
    pub speed_mps: f64,
    /// Deviation from the ego lane center.
    pub lat_dev_m: f64,
}

pub type Trajectory = Vec<TrajPoint>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyVerdict {
    pub attack_success: bool,
    pub reaction_time_s: Option<f64>,
    pub takeover_preventable: bool,
    pub combined: bool,
    /// Detector failure aborted the run.
    pub inconclusive: bool,
}

impl SafetyVerdict {
    /// The reaction-time rule: available time is distance over speed; the
    /// takeover is preventable when it exceeds the budget.
    pub fn from_reaction(attack_success: bool, reaction_time_s: Option<f64>) -> Self {
        let takeover_preventable = match reaction_time_s {
            Some(t) => t > REACTION_BUDGET_S,
            None => true,
        };
        Self {
            attack_success,
            reaction_time_s,
            takeover_preventable,
            combined: attack_success && !takeover_preventable,
            inconclusive: false,
        }
    }

    pub fn inconclusive() -> Self {
        Self {
            attack_success: false,
            reaction_time_s: None,
            takeover_preventable: true,
            combined: false,
            inconclusive: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub verdict: SafetyVerdict,
    pub trajectory: Trajectory,
}

fn scene_spec_for(spec: &ScenarioSpec, seed: u64, layer: Option<ShadowLayer>) -> SceneSpec {
    let mut scene = SceneSpec::new(spec.layout.clone(), seed);
    scene.path = spec.path;
    scene.shadow = layer;
    scene
}

fn drive(
    spec: &ScenarioSpec,
    speed_mph: f64,
    layer: Option<ShadowLayer>,
    detector: &Detector,
    seed: u64,
) -> Result<(Trajectory, Option<usize>)> {
    let scene_spec = scene_spec_for(spec, seed, layer);
    let speed = mph_to_mps(speed_mph);
    let mut state = VehicleState::new(spec.start.x, spec.start.y, spec.start.heading_rad, speed);
    let mut ctrl = CtrlState::default();
    let mut traj = Trajectory::new();
    let mut hazard_at: Option<usize> = None;
    let mut t = 0.0;
    let n_frames = (TIMEOUT_S / CONTROL_DT_S) as usize;
    'outer: for frame in 0..n_frames {
        let scene = synth_scene_at(&scene_spec, state.pose(), state.x)?;
        let detection = detector.run(&scene.image, &scene.calib())?;
        let steer = lane_center_control(&detection, &scene.calib(), &state, &mut ctrl);
        traj.push(TrajPoint {
            t,
            x: state.x,
            y: state.y,
            heading_rad: state.heading_rad,
            speed_mps: state.speed_mps,
            lat_dev_m: spec.lane_center_dev(state.x, state.y),
        });
        let dt = CONTROL_DT_S / PHYSICS_SUBSTEPS as f64;
        for _ in 0..PHYSICS_SUBSTEPS {
            state = step(&state, steer, dt);
            t += dt;
            if hazard_at.is_none() {
                let mut hit = spec.hazard.contains(state.x, state.y);
                if let Some(npc) = &spec.npc {
                    let npc_y = npc.meet_y + npc.speed_mps * (npc.meet_y / speed) - npc.speed_mps * t;
                    let d = (state.x - npc.x).hypot(state.y - npc_y);
                    hit |= d < 2.0 * npc.radius_m;
                }
                if hit {
                    hazard_at = Some(frame);
                    break 'outer;
                }
            }
        }
        let (lat, station) = spec.path.lateral_station(state.x, state.y);
        if station > spec.end_station || lat.abs() > RUNAWAY_LATERAL_M {
            break;
        }
    }
    // Final point so the hazard-entry position is recorded.
    traj.push(TrajPoint {
        t,
        x: state.x,
        y: state.y,
        heading_rad: state.heading_rad,
        speed_mps: state.speed_mps,
        lat_dev_m: spec.lane_center_dev(state.x, state.y),
    });
    Ok((traj, hazard_at))
}

/// Reference run without the attack.
pub fn run_benign(
    spec: &ScenarioSpec,
    speed_mph: f64,
    detector: &Detector,
    seed: u64,
) -> Result<Trajectory> {
    Ok(drive(spec, speed_mph, None, detector, seed)?.0)
}

/// Full closed-loop run; detector errors yield an inconclusive verdict.
pub fn run_scenario(
    spec: &ScenarioSpec,
    speed_mph: f64,
    ns_length_m: f64,
    detector: &Detector,
    seed: u64,
    benign: Option<&Trajectory>,
) -> Result<ScenarioRun> {
    let benign_owned;
    let benign = match benign {
        Some(b) => b,
        None => {
            benign_owned = run_benign(spec, speed_mph, detector, seed)?;
            &benign_owned
        }
    };
    let layer = spec.layer(ns_length_m)?;
    let (trajectory, hazard_at) = match drive(spec, speed_mph, layer, detector, seed) {
        Ok(r) => r,
        Err(Error::DetectorSubprocess(_)) => {
            return Ok(ScenarioRun {
                verdict: SafetyVerdict::inconclusive(),
                trajectory: Trajectory::new(),
            })
        }
        Err(e) => return Err(e),
    };
    // First frame deviating from the benign trajectory.
    let deviation_at = trajectory.iter().enumerate().find_map(|(i, p)| {
        let b = benign.get(i.min(benign.len().saturating_sub(1)))?;
        let d = (p.x - b.x).hypot(p.y - b.y);
        (d > DEVIATION_THRESHOLD_M).then_some(i)
    });
    let verdict = match hazard_at {
        None => SafetyVerdict::from_reaction(false, None),
        Some(_) => {
            let entry = trajectory.last().expect("nonempty trajectory");
            let rt = deviation_at.map(|i| {
                let dev = &trajectory[i];
                let d = (entry.x - dev.x).hypot(entry.y - dev.y);
                d / mph_to_mps(speed_mph)
            });
            SafetyVerdict::from_reaction(true, rt)
        }
    };
    Ok(ScenarioRun {
        verdict,
        trajectory,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub scenario: u8,
    pub speed_mph: f64,
    pub length_m: f64,
    pub verdict: SafetyVerdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafetyGrid {
    pub cells: Vec<GridCell>,
    /// (length, average success over scenarios x speeds).
    pub per_length_avg: Vec<(f64, f64)>,
}

/// The full scenario x speed x length grid; parallel over cells with one
/// benign reference per (scenario, speed).
pub fn success_rate_table(
    detector: &Detector,
    seed: u64,
    speeds_mph: &[f64],
    lengths_m: &[f64],
) -> Result<SafetyGrid> {
    let scenarios: Vec<ScenarioSpec> = (1..=3)
        .map(ScenarioSpec::standard)
        .collect::<Result<_>>()?;
    // Benign references, computed in parallel.
    let refs: Vec<((usize, usize), Trajectory)> = scenarios
        .par_iter()
        .enumerate()
        .flat_map(|(si, spec)| {
            speeds_mph
                .par_iter()
                .enumerate()
                .map(move |(vi, &v)| Ok(((si, vi), run_benign(spec, v, detector, seed)?)))
        })
        .collect::<Result<_>>()?;
    let benign_of = |si: usize, vi: usize| -> &Trajectory {
        &refs.iter().find(|(k, _)| *k == (si, vi)).expect("computed").1
    };
    let mut jobs = Vec::new();
    for (si, spec) in scenarios.iter().enumerate() {
        for (vi, &v) in speeds_mph.iter().enumerate() {
            for &l in lengths_m {
                jobs.push((si, vi, spec, v, l));
            }
        }
    }
    let cells: Vec<GridCell> = jobs
        .par_iter()
        .map(|&(si, vi, spec, v, l)| {
            let run = run_scenario(spec, v, l, detector, seed, Some(benign_of(si, vi)))?;
            Ok(GridCell {
                scenario: spec.id,
                speed_mph: v,
                length_m: l,
                verdict: run.verdict,
            })
        })
        .collect::<Result<_>>()?;
    let per_length_avg = lengths_m
        .iter()
        .map(|&l| {
            let sel: Vec<&GridCell> = cells.iter().filter(|c| c.length_m == l).collect();
            let wins = sel.iter().filter(|c| c.verdict.attack_success).count();
            (l, wins as f64 / sel.len().max(1) as f64)
        })
        .collect();
    Ok(SafetyGrid {
        cells,
        per_length_avg,
    })
}
