//! Shadow compositing: BEV warps, the canopy shadow layer with its bright
//! negative-shadow holes, and the camera-view attack composition.

use crate::error::{Error, Result};
use crate::geom::{Homography, OrientedRect, Polygon};
use crate::raster::{GrayImage, Rgb8Image};
use crate::scene::{BevGrid, RoadScene};
use crate::sweep::NsConfig;

/// Multiplicative luminance factor of the shadowed pavement.
pub const DEFAULT_SHADE_FACTOR: f64 = 0.55;
/// Longitudinal distance from the camera to the near end of a sweep NS.
pub const NS_START_AHEAD_M: f64 = 8.0;
/// Canopy footprint margin around the NS holes.
pub const FOOTPRINT_MARGIN_M: f64 = 1.0;

/// One bright hole in the canopy shadow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NsHole {
    pub rect: OrientedRect,
    /// Contrast ratio of the hole to the surrounding shadow.
    pub brightness: f64,
}

impl NsHole {
    /// Luminance factor inside the hole relative to unshadowed pavement.
    #[inline]
    pub fn factor(&self, shade_factor: f64) -> f64 {
        (shade_factor * self.brightness).min(1.0)
    }
}

/// Canopy shadow with negative-shadow holes, in road-plane meters.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowLayer {
    pub footprint: Polygon,
    pub ns_holes: Vec<NsHole>,
    pub shade_factor: f64,
}

impl ShadowLayer {
    pub fn new(footprint: Polygon, ns_holes: Vec<NsHole>, shade_factor: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&shade_factor) && shade_factor != 1.0 {
            return Err(Error::InvalidConfig(format!(
                "shade factor {shade_factor} out of (0, 1]"
            )));
        }
        for hole in &ns_holes {
            for [cx, cy] in hole.rect.corners() {
                if !footprint.contains(cx, cy) {
                    return Err(Error::HoleOutsideFootprint);
                }
            }
        }
        Ok(Self {
            footprint,
            ns_holes,
            shade_factor,
        })
    }

    /// Luminance factor at a road-plane point.
    #[inline]
    pub fn factor_at(&self, x: f64, y: f64) -> f64 {
        if !self.footprint.contains(x, y) {
            return 1.0;
        }
        for hole in &self.ns_holes {
            if hole.rect.contains(x, y) {
                return hole.factor(self.shade_factor);
            }
        }
        self.shade_factor
    }

    /// Layer for a single NS config: the stripe pivots at lateral offset
    /// `distance_m` from the reference marking, long axis at `beta_deg` to
    /// the lane direction, with a canopy footprint grown by a fixed margin.
    pub fn for_config(cfg: &NsConfig, start_y_m: f64, shade_factor: f64) -> Result<Self> {
        let beta = cfg.beta_deg.to_radians();
        let rect = OrientedRect {
            origin: [cfg.distance_m, start_y_m],
            axis: [beta.sin(), beta.cos()],
            length: cfg.length_m,
            width: cfg.width_m,
        };
        let footprint = rect.dilated_bbox(FOOTPRINT_MARGIN_M);
        Self::new(
            footprint,
            vec![NsHole {
                rect,
                brightness: cfg.brightness,
            }],
            shade_factor,
        )
    }

    /// Layer for several stripes under one canopy footprint.
    pub fn for_holes(holes: Vec<NsHole>, shade_factor: f64) -> Result<Self> {
        if holes.is_empty() {
            return Err(Error::EmptyInput("shadow layer without holes".into()));
        }
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for h in &holes {
            let (l, u) = h.rect.to_polygon().bbox();
            for k in 0..2 {
                lo[k] = lo[k].min(l[k]);
                hi[k] = hi[k].max(u[k]);
            }
        }
        let footprint = Polygon::rect(
            lo[0] - FOOTPRINT_MARGIN_M,
            lo[1] - FOOTPRINT_MARGIN_M,
            hi[0] + FOOTPRINT_MARGIN_M,
            hi[1] + FOOTPRINT_MARGIN_M,
        );
        Self::new(footprint, holes, shade_factor)
    }
}

/// Inverse-mapped bilinear warp of an RGB raster. `src_from_dst` maps a
/// destination pixel to source pixel coordinates; out-of-source pixels are
/// black.
pub fn warp_rgb(
    src: &Rgb8Image,
    dst_from_src: &Homography,
    dst_width: usize,
    dst_height: usize,
) -> Rgb8Image {
    let inv = dst_from_src.inverse();
    let mut out = Rgb8Image::new(dst_width, dst_height);
    for dy in 0..dst_height {
        for dx in 0..dst_width {
            if let Some((sx, sy)) = inv.apply(dx as f64, dy as f64) {
                if let Some(px) = sample_bilinear_rgb(src, sx, sy) {
                    out.set_pixel(dx, dy, px);
                }
            }
        }
    }
    out
}

/// Same warp for a single-channel raster.
pub fn warp_gray(
    src: &GrayImage,
    dst_from_src: &Homography,
    dst_width: usize,
    dst_height: usize,
) -> GrayImage {
    let inv = dst_from_src.inverse();
    let mut out = GrayImage::new(dst_width, dst_height);
    for dy in 0..dst_height {
        for dx in 0..dst_width {
            if let Some((sx, sy)) = inv.apply(dx as f64, dy as f64) {
                if let Some(v) = sample_bilinear_gray(src, sx, sy) {
                    out.set(dx, dy, v);
                }
            }
        }
    }
    out
}

#[inline]
fn bilinear_setup(w: usize, h: usize, x: f64, y: f64) -> Option<(usize, usize, usize, usize, f64, f64)> {
    if !(x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64) {
        return None;
    }
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    Some((x0, y0, x1, y1, x - x0 as f64, y - y0 as f64))
}

#[inline]
pub fn sample_bilinear_rgb(img: &Rgb8Image, x: f64, y: f64) -> Option<[u8; 3]> {
    let (x0, y0, x1, y1, fx, fy) = bilinear_setup(img.width, img.height, x, y)?;
    let mut out = [0u8; 3];
    for c in 0..3 {
        let p00 = img.data[(y0 * img.width + x0) * 3 + c] as f64;
        let p10 = img.data[(y0 * img.width + x1) * 3 + c] as f64;
        let p01 = img.data[(y1 * img.width + x0) * 3 + c] as f64;
        let p11 = img.data[(y1 * img.width + x1) * 3 + c] as f64;
        let v = p00 * (1.0 - fx) * (1.0 - fy)
            + p10 * fx * (1.0 - fy)
            + p01 * (1.0 - fx) * fy
            + p11 * fx * fy;
        out[c] = v.round().clamp(0.0, 255.0) as u8;
    }
    Some(out)
}

#[inline]
pub fn sample_bilinear_gray(img: &GrayImage, x: f64, y: f64) -> Option<u8> {
    let (x0, y0, x1, y1, fx, fy) = bilinear_setup(img.width, img.height, x, y)?;
    let p00 = img.get(x0, y0) as f64;
    let p10 = img.get(x1, y0) as f64;
    let p01 = img.get(x0, y1) as f64;
    let p11 = img.get(x1, y1) as f64;
    let v = p00 * (1.0 - fx) * (1.0 - fy)
        + p10 * fx * (1.0 - fy)
        + p01 * (1.0 - fx) * fy
        + p11 * fx * fy;
    Some(v.round().clamp(0.0, 255.0) as u8)
}

/// Bird's-eye-view transform of a camera image.
pub fn bev(image: &Rgb8Image, cam_to_bev: &Homography, grid: &BevGrid) -> Rgb8Image {
    warp_rgb(image, cam_to_bev, grid.cols(), grid.rows())
}

/// Apply a shadow layer to a BEV raster in place of the road plane. The
/// layer coordinates are in the same ground frame the grid spans.
pub fn paste_shadow(bev_image: &Rgb8Image, grid: &BevGrid, layer: &ShadowLayer) -> Rgb8Image {
    let mut out = bev_image.clone();
    for row in 0..out.height {
        for col in 0..out.width {
            let (x, y) = grid.pixel_to_meters(col as f64, row as f64);
            let f = layer.factor_at(x, y);
            if f != 1.0 {
                let px = out.pixel(col, row);
                out.set_pixel(
                    col,
                    row,
                    [
                        (px[0] as f64 * f).round().clamp(0.0, 255.0) as u8,
                        (px[1] as f64 * f).round().clamp(0.0, 255.0) as u8,
                        (px[2] as f64 * f).round().clamp(0.0, 255.0) as u8,
                    ],
                );
            }
        }
    }
    out
}

/// Per-pixel road-plane coordinates of a rendered scene; NaN above the
/// horizon. Precomputed once per scene so compositing many configs onto the
/// same capture stays cheap.
#[derive(Debug, Clone)]
pub struct GroundMap {
    pub width: usize,
    pub height: usize,
    pub coords: Vec<[f32; 2]>,
}

impl GroundMap {
    pub fn for_scene(scene: &RoadScene) -> Self {
        let inv = scene.ground_to_pixel.inverse();
        let mut coords = vec![[f32::NAN; 2]; scene.image.width * scene.image.height];
        for v in 0..scene.image.height {
            for u in 0..scene.image.width {
                if let Some((gx, gy)) = inv.apply(u as f64 + 0.5, v as f64 + 0.5) {
                    if gy > 0.0 && gy < 150.0 {
                        let w = scene.pose.local_to_world(gx, gy);
                        coords[v * scene.image.width + u] = [w[0] as f32, w[1] as f32];
                    }
                }
            }
        }
        Self {
            width: scene.image.width,
            height: scene.image.height,
            coords,
        }
    }
}

/// Result of composing an attack onto a scene.
#[derive(Debug, Clone)]
pub struct Composed {
    pub image: Rgb8Image,
    pub layer: ShadowLayer,
    /// True when the shadow footprint projects entirely outside the frame.
    pub no_op: bool,
}

/// Camera-view attack composition: BEV paste of the shadow layer followed by
/// the inverse BEV transform, evaluated exactly per camera pixel so pixels
/// outside the footprint's projection are bit-identical to the input.
pub fn compose_layer(scene: &RoadScene, ground: &GroundMap, layer: ShadowLayer) -> Composed {
    let mut image = scene.image.clone();
    let mut touched = false;
    for v in 0..image.height {
        for u in 0..image.width {
            let [gx, gy] = ground.coords[v * ground.width + u];
            if gx.is_nan() {
                continue;
            }
            let f = layer.factor_at(gx as f64, gy as f64);
            if f != 1.0 {
                touched = true;
                let px = image.pixel(u, v);
                image.set_pixel(
                    u,
                    v,
                    [
                        (px[0] as f64 * f).round().clamp(0.0, 255.0) as u8,
                        (px[1] as f64 * f).round().clamp(0.0, 255.0) as u8,
                        (px[2] as f64 * f).round().clamp(0.0, 255.0) as u8,
                    ],
                );
            }
        }
    }
    Composed {
        image,
        no_op: !touched,
    layer,
    }
}

/// Compose one sweep NS config onto a standard scene.
pub fn compose(
    scene: &RoadScene,
    ground: &GroundMap,
    cfg: &NsConfig,
    shade_factor: f64,
) -> Result<Composed> {
    let layer = ShadowLayer::for_config(cfg, scene.pose.y + NS_START_AHEAD_M, shade_factor)?;
    Ok(compose_layer(scene, ground, layer))
}
