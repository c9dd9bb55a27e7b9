//! Physical environment: user mobility, box obstacles and a co-located
//! camera that plays the role of the RGB-d sensor plus object detector.
//!
//! The camera uses an angular pinhole model: a pixel offset from the
//! principal point maps to an angle offset from the boresight through
//! `atan(offset / f_px)`, independently per image axis. Projection is the
//! exact inverse of [`pixel_to_angle`], so detections round-trip to 3D
//! positions through `(pixel_to_angle, depth)`.

use crate::geometry::{Aabb, Vec3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServiceArea {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl ServiceArea {
    pub fn square(side: f64) -> Self {
        ServiceArea {
            x_min: 0.0,
            x_max: side,
            y_min: 0.0,
            y_max: side,
        }
    }

    pub fn contains_xy(&self, p: Vec3) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserState {
    pub id: usize,
    /// Antenna position; `z` equals the user height.
    pub position: Vec3,
    pub velocity: Vec3,
    pub height: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub id: usize,
    pub center: Vec3,
    /// Extent along x.
    pub width: f64,
    /// Extent along y.
    pub depth: f64,
    /// Extent along z; obstacles stand on the floor.
    pub height: f64,
}

impl Obstacle {
    pub fn on_floor(id: usize, x: f64, y: f64, width: f64, depth: f64, height: f64) -> Self {
        Obstacle {
            id,
            center: Vec3::new(x, y, height / 2.0),
            width,
            depth,
            height,
        }
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_center_extents(self.center, Vec3::new(self.width, self.depth, self.height))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub position: Vec3,
    /// Boresight azimuth.
    pub azimuth: f64,
    /// Boresight elevation.
    pub elevation: f64,
    pub focal_px: f64,
    pub cx: f64,
    pub cy: f64,
    pub width_px: f64,
    pub height_px: f64,
}

impl CameraModel {
    /// Camera with the principal point at the image centre and the given
    /// horizontal field of view.
    pub fn with_fov(
        position: Vec3,
        azimuth: f64,
        elevation: f64,
        hfov: f64,
        width_px: f64,
        height_px: f64,
    ) -> Self {
        let focal_px = (width_px / 2.0) / (hfov / 2.0).tan();
        CameraModel {
            position,
            azimuth,
            elevation,
            focal_px,
            cx: width_px / 2.0,
            cy: height_px / 2.0,
            width_px,
            height_px,
        }
    }

    pub fn in_image(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && x < self.width_px && y >= 0.0 && y < self.height_px
    }

    /// Pixel of a world point, `None` when it lies behind the image plane.
    pub fn project(&self, p: Vec3) -> Option<(f64, f64)> {
        let (az, el) = (p - self.position).azimuth_elevation();
        angle_to_pixel(self, az, el)
    }

    /// World point seen at `pixel` with range `depth`.
    pub fn back_project(&self, pixel: (f64, f64), depth: f64) -> Vec3 {
        let (az, el) = pixel_to_angle(self, pixel);
        self.position + Vec3::from_angles(az, el) * depth
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    User(usize),
    Obstacle(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Ground-truth identity. The estimation chain never reads it; it is kept
    /// for scoring identification.
    pub target: Target,
    pub pixel: (f64, f64),
    /// Bounding box size `(w, h)`; zero for users.
    pub bbox: (f64, f64),
    /// Range from the camera. For obstacles, the range of the nearest surface.
    pub depth: f64,
    pub visible: bool,
}

impl Detection {
    pub fn bbox_contains(&self, pixel: (f64, f64)) -> bool {
        let (hw, hh) = (self.bbox.0 / 2.0, self.bbox.1 / 2.0);
        (pixel.0 - self.pixel.0).abs() <= hw && (pixel.1 - self.pixel.1).abs() <= hh
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneState {
    pub slot: usize,
    pub users: Vec<UserState>,
    pub obstacles: Vec<Obstacle>,
    pub camera: CameraModel,
    pub bs_position: Vec3,
    pub area: ServiceArea,
}

/// Knobs of the synthetic detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub miss_prob: f64,
    pub pixel_noise: f64,
    pub depth_noise: f64,
}

pub fn pixel_to_angle(camera: &CameraModel, pixel: (f64, f64)) -> (f64, f64) {
    let az = camera.azimuth + ((pixel.0 - camera.cx) / camera.focal_px).atan();
    let el = camera.elevation + ((camera.cy - pixel.1) / camera.focal_px).atan();
    (az, el)
}

/// Inverse of [`pixel_to_angle`]; `None` for directions at or beyond 90°
/// from the boresight.
pub fn angle_to_pixel(camera: &CameraModel, azimuth: f64, elevation: f64) -> Option<(f64, f64)> {
    let daz = wrap_angle(azimuth - camera.azimuth);
    let del = wrap_angle(elevation - camera.elevation);
    if daz.abs() >= PI / 2.0 || del.abs() >= PI / 2.0 {
        return None;
    }
    Some((
        camera.cx + camera.focal_px * daz.tan(),
        camera.cy - camera.focal_px * del.tan(),
    ))
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a < -PI {
        a += 2.0 * PI;
    }
    a
}

/// Ground-truth LoS status: the segment BS -> user crosses no obstacle.
pub fn los_visible(bs: Vec3, user: Vec3, obstacles: &[Obstacle]) -> bool {
    !obstacles
        .iter()
        .any(|o| o.aabb().intersects_segment(bs, user))
}

/// Advance every user by one slot. Users hitting the service-area edge are
/// clamped onto it and turn to a uniformly drawn inward direction.
pub fn step_mobility<R: Rng + ?Sized>(
    state: &SceneState,
    slot_duration: f64,
    rng: &mut R,
) -> SceneState {
    assert!(slot_duration > 0.0, "slot duration must be positive");
    let area = state.area;
    let mut next = state.clone();
    next.slot += 1;
    for user in &mut next.users {
        let mut p = user.position + user.velocity * slot_duration;
        // sign of the inward normal per axis, 0 when the axis is fine
        let mut inward = (0.0, 0.0);
        if p.x <= area.x_min {
            p.x = area.x_min;
            inward.0 = 1.0;
        } else if p.x >= area.x_max {
            p.x = area.x_max;
            inward.0 = -1.0;
        }
        if p.y <= area.y_min {
            p.y = area.y_min;
            inward.1 = 1.0;
        } else if p.y >= area.y_max {
            p.y = area.y_max;
            inward.1 = -1.0;
        }
        p.z = user.height;
        user.position = p;
        if inward != (0.0, 0.0) && user.speed > 0.0 {
            let dir = loop {
                let psi: f64 = rng.gen_range(0.0..2.0 * PI);
                let (dx, dy) = (psi.cos(), psi.sin());
                if dx * inward.0 >= 0.0 && dy * inward.1 >= 0.0 {
                    break (dx, dy);
                }
            };
            user.velocity = Vec3::new(dir.0 * user.speed, dir.1 * user.speed, 0.0);
        }
    }
    next
}

/// Synthetic detector output for one frame.
///
/// Users in the field of view yield one record each: occluded users carry
/// `visible = false`; missed users are omitted. Obstacles always report their
/// projected bounding box and nearest-surface depth.
pub fn project_and_detect<R: Rng + ?Sized>(
    state: &SceneState,
    detector: &DetectorConfig,
    rng: &mut R,
) -> Vec<Detection> {
    let cam = &state.camera;
    let pixel_noise = Normal::new(0.0, detector.pixel_noise.max(0.0)).expect("finite sigma");
    let depth_noise = Normal::new(0.0, detector.depth_noise.max(0.0)).expect("finite sigma");
    let mut out = Vec::new();

    for user in &state.users {
        let Some((px, py)) = cam.project(user.position) else {
            continue;
        };
        if !cam.in_image(px, py) {
            continue;
        }
        let visible = los_visible(cam.position, user.position, &state.obstacles);
        if !visible {
            out.push(Detection {
                target: Target::User(user.id),
                pixel: (px, py),
                bbox: (0.0, 0.0),
                depth: cam.position.distance(user.position),
                visible: false,
            });
            continue;
        }
        if rng.gen::<f64>() < detector.miss_prob {
            continue;
        }
        let nx = (px + pixel_noise.sample(rng)).clamp(0.0, cam.width_px - 1e-9);
        let ny = (py + pixel_noise.sample(rng)).clamp(0.0, cam.height_px - 1e-9);
        let depth = (cam.position.distance(user.position) + depth_noise.sample(rng)).max(1e-3);
        out.push(Detection {
            target: Target::User(user.id),
            pixel: (nx, ny),
            bbox: (0.0, 0.0),
            depth,
            visible: true,
        });
    }

    for obstacle in &state.obstacles {
        if let Some(det) = project_obstacle(cam, obstacle) {
            out.push(det);
        }
    }
    out
}

fn project_obstacle(cam: &CameraModel, obstacle: &Obstacle) -> Option<Detection> {
    let aabb = obstacle.aabb();
    let pixels: Vec<(f64, f64)> = aabb
        .corners()
        .iter()
        .filter_map(|&c| cam.project(c))
        .collect();
    if pixels.is_empty() {
        return None;
    }
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for (x, y) in pixels {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    x0 = x0.max(0.0);
    y0 = y0.max(0.0);
    x1 = x1.min(cam.width_px);
    y1 = y1.min(cam.height_px);
    if x0 >= x1 || y0 >= y1 {
        return None;
    }
    Some(Detection {
        target: Target::Obstacle(obstacle.id),
        pixel: ((x0 + x1) / 2.0, (y0 + y1) / 2.0),
        bbox: (x1 - x0, y1 - y0),
        depth: cam.position.distance(aabb.closest_point(cam.position)),
        visible: true,
    })
}

/// Parameters of the procedural obstacle layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleLayout {
    /// Target fraction of the xy service area covered by obstacle footprints.
    pub density: f64,
    pub min_side: f64,
    pub max_side: f64,
    pub min_height: f64,
    pub max_height: f64,
}

/// Place non-overlapping floor boxes until their footprint covers
/// `layout.density` of the area. Boxes never cover the BS position; the last
/// box is shrunk so the coverage lands on the target.
pub fn generate_obstacles<R: Rng + ?Sized>(
    area: &ServiceArea,
    layout: &ObstacleLayout,
    bs: Vec3,
    rng: &mut R,
) -> Vec<Obstacle> {
    let target = layout.density.clamp(0.0, 0.9) * area.area();
    let mut placed: Vec<Obstacle> = Vec::new();
    let mut covered = 0.0;
    let mut attempts = 0;
    while target - covered > 1e-9 && attempts < 20_000 {
        attempts += 1;
        let mut w = rng.gen_range(layout.min_side..=layout.max_side);
        let mut d = rng.gen_range(layout.min_side..=layout.max_side);
        let remaining = target - covered;
        if w * d > remaining {
            let s = (remaining / (w * d)).sqrt();
            w *= s;
            d *= s;
        }
        let h = rng.gen_range(layout.min_height..=layout.max_height);
        if w > area.x_max - area.x_min || d > area.y_max - area.y_min {
            continue;
        }
        let x = rng.gen_range(area.x_min + w / 2.0..=area.x_max - w / 2.0);
        let y = rng.gen_range(area.y_min + d / 2.0..=area.y_max - d / 2.0);
        let candidate = Obstacle::on_floor(placed.len(), x, y, w, d, h);
        let bb = candidate.aabb();
        if bb.contains(Vec3::new(bs.x, bs.y, bb.min.z)) {
            continue;
        }
        if placed.iter().any(|o| o.aabb().overlaps_xy(&bb)) {
            continue;
        }
        covered += w * d;
        placed.push(candidate);
    }
    placed
}

/// Users placed uniformly outside obstacle footprints with uniform heights,
/// speeds and headings.
pub fn random_users<R: Rng + ?Sized>(
    count: usize,
    area: &ServiceArea,
    obstacles: &[Obstacle],
    height_range: (f64, f64),
    max_speed: f64,
    rng: &mut R,
) -> Vec<UserState> {
    (0..count)
        .map(|id| {
            let height = rng.gen_range(height_range.0..=height_range.1);
            let mut position;
            let mut tries = 0;
            loop {
                position = Vec3::new(
                    rng.gen_range(area.x_min..=area.x_max),
                    rng.gen_range(area.y_min..=area.y_max),
                    height,
                );
                tries += 1;
                if tries > 1000
                    || !obstacles
                        .iter()
                        .any(|o| o.aabb().contains(Vec3::new(position.x, position.y, 0.0)))
                {
                    break;
                }
            }
            let speed = if max_speed > 0.0 {
                rng.gen_range(0.0..=max_speed)
            } else {
                0.0
            };
            let psi: f64 = rng.gen_range(0.0..2.0 * PI);
            UserState {
                id,
                position,
                velocity: Vec3::new(psi.cos() * speed, psi.sin() * speed, 0.0),
                height,
                speed,
            }
        })
        .collect()
}
