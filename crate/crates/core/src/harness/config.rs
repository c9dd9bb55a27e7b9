//! Scenario configuration: a sectioned TOML file where every key is optional
//! and unknown keys are rejected.

use crate::channel::{ArrayGeometry, ChannelModel, NlosConfig};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scene::{CameraModel, DetectorConfig, ObstacleLayout, ServiceArea};
use crate::scheduler::{Policy, SchedulerConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    /// Ground-truth channel of the next slot.
    Oracle,
    /// All-zero channel.
    Zero,
    /// Current estimate reused for the next slot.
    LastValue,
    Linear,
    Kalman,
    External,
}

impl PredictorKind {
    pub const ALL: [PredictorKind; 6] = [
        PredictorKind::Oracle,
        PredictorKind::Zero,
        PredictorKind::LastValue,
        PredictorKind::Linear,
        PredictorKind::Kalman,
        PredictorKind::External,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PredictorKind::Oracle => "oracle",
            PredictorKind::Zero => "zero",
            PredictorKind::LastValue => "last_value",
            PredictorKind::Linear => "linear",
            PredictorKind::Kalman => "kalman",
            PredictorKind::External => "external",
        }
    }
}

impl std::str::FromStr for PredictorKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        PredictorKind::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown predictor `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub carrier_ghz: f64,
    pub antennas_x: usize,
    pub antennas_y: usize,
    pub slot_duration_s: f64,
    pub bandwidth_mhz: f64,
    pub symbols_per_slot: usize,
    pub subcarriers_per_rb: usize,
    pub rb_total: usize,
    /// Users sharing one RB at most.
    pub max_group: usize,
    /// Number of simulated slots `T`.
    pub slots: usize,
    /// History window `T_c`.
    pub window: usize,
    /// Weight of the L1 term in the predictor losses.
    pub loss_lambda: f64,
    pub tx_power_dbm: f64,
    pub noise_figure_db: f64,
    pub bs_position: [f64; 3],
    pub mcs_table: Option<PathBuf>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            carrier_ghz: 28.0,
            antennas_x: 8,
            antennas_y: 8,
            slot_duration_s: 0.1,
            bandwidth_mhz: 100.0,
            symbols_per_slot: 14,
            subcarriers_per_rb: 12,
            rb_total: 70,
            max_group: 4,
            slots: 11,
            window: 3,
            loss_lambda: 1.0,
            tx_power_dbm: 20.0,
            noise_figure_db: 9.0,
            bs_position: [-12.0, 10.0, 3.0],
            mcs_table: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UserConfig {
    pub count: usize,
    pub height_min_m: f64,
    pub height_max_m: f64,
    pub max_speed_kmh: f64,
    pub area_side_m: f64,
}

impl Default for UserConfig {
    fn default() -> Self {
        UserConfig {
            count: 10,
            height_min_m: 0.5,
            height_max_m: 2.0,
            max_speed_kmh: 25.0,
            area_side_m: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub max_nlos_paths: usize,
    pub shadow_sigma_db: f64,
    pub reflection_loss_db: f64,
    pub keep_prob: f64,
    pub birth_prob: f64,
    pub fading_corr_distance_m: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            max_nlos_paths: 3,
            shadow_sigma_db: 4.0,
            reflection_loss_db: 10.0,
            keep_prob: 0.9,
            birth_prob: 0.3,
            fading_corr_distance_m: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObstacleConfig {
    /// Fraction of the floor area covered by obstacles.
    pub density: f64,
    pub min_side_m: f64,
    pub max_side_m: f64,
    pub min_height_m: f64,
    pub max_height_m: f64,
}

impl Default for ObstacleConfig {
    fn default() -> Self {
        ObstacleConfig {
            density: 0.2,
            min_side_m: 0.5,
            max_side_m: 2.5,
            min_height_m: 2.0,
            max_height_m: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub hfov_deg: f64,
    pub width_px: f64,
    pub height_px: f64,
    /// Camera position relative to the BS.
    pub offset_m: [f64; 3],
    pub miss_prob: f64,
    pub pixel_noise_px: f64,
    pub depth_noise_m: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig {
            hfov_deg: 90.0,
            width_px: 1920.0,
            height_px: 1080.0,
            offset_m: [0.0; 3],
            miss_prob: 0.045,
            pixel_noise_px: 1.0,
            depth_noise_m: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulingConfig {
    pub policy: Policy,
    pub ser_max: f64,
    pub rate_min_bits: f64,
    pub pf_alpha: f64,
    pub pf_floor_bits: f64,
}

impl Default for SchedulingConfig {
    fn default() -> Self {
        SchedulingConfig {
            policy: Policy::Preemptive,
            ser_max: 0.1,
            rate_min_bits: 2000.0,
            pf_alpha: 0.1,
            pf_floor_bits: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorConfig {
    pub method: PredictorKind,
    pub ar_order: usize,
    pub ar_window: usize,
    /// Extrapolate the LoS coefficient with its range phase included
    /// (`true`) or the range-derotated gain (`false`).
    pub los_coefficient_ar: bool,
    /// Paths weaker than this (relative to the strongest) are dropped.
    pub path_threshold_db: f64,
    pub association_gate_deg: f64,
    /// Correlate detection beams with unit-norm channel estimates.
    pub normalize_identification: bool,
    /// Codebook grid size along the two spatial frequencies.
    pub codebook: [usize; 2],
    pub kalman_forgetting: f64,
    pub kalman_pixel_process_noise: f64,
    pub kalman_distance_process_noise: f64,
    pub endpoint: Option<String>,
    pub deadline_ms: u64,
    pub gate_margin: f64,
    pub audit_log: Option<PathBuf>,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            method: PredictorKind::Kalman,
            ar_order: 2,
            ar_window: 3,
            los_coefficient_ar: true,
            path_threshold_db: -20.0,
            association_gate_deg: 5.0,
            normalize_identification: true,
            codebook: [16, 16],
            kalman_forgetting: 0.98,
            kalman_pixel_process_noise: 0.5,
            kalman_distance_process_noise: 0.01,
            endpoint: None,
            deadline_ms: 50,
            gate_margin: 3.0,
            audit_log: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// JSON-lines log of decisions and throughput reports.
    pub event_log: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            event_log: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub system: SystemConfig,
    pub users: UserConfig,
    pub channel: ChannelConfig,
    pub obstacles: ObstacleConfig,
    pub camera: CameraConfig,
    pub scheduler: SchedulingConfig,
    pub predictor: PredictorConfig,
    pub run: RunConfig,
}

fn unknown_key(msg: &str) -> String {
    msg.split("unknown field `")
        .nth(1)
        .and_then(|rest| rest.split('`').next())
        .unwrap_or("config")
        .to_string()
}

fn check(ok: bool, key: &str, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(key, msg))
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            Error::config(unknown_key(&msg), msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serialisable")
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.system;
        check(
            s.carrier_ghz > 0.0,
            "system.carrier_ghz",
            "must be positive",
        )?;
        check(
            s.antennas_x >= 1 && s.antennas_y >= 1,
            "system.antennas_x",
            "array needs at least one element per axis",
        )?;
        check(
            s.slot_duration_s > 0.0,
            "system.slot_duration_s",
            "must be positive",
        )?;
        check(
            s.bandwidth_mhz > 0.0,
            "system.bandwidth_mhz",
            "must be positive",
        )?;
        check(
            s.symbols_per_slot >= 1,
            "system.symbols_per_slot",
            "must be at least 1",
        )?;
        check(
            s.subcarriers_per_rb >= 1,
            "system.subcarriers_per_rb",
            "must be at least 1",
        )?;
        check(s.rb_total >= 1, "system.rb_total", "must be at least 1")?;
        check(s.max_group >= 1, "system.max_group", "must be at least 1")?;
        check(s.window >= 1, "system.window", "must be at least 1")?;
        check(
            s.slots > s.window,
            "system.slots",
            "must exceed system.window so that at least one slot is scheduled",
        )?;
        check(
            s.loss_lambda >= 0.0,
            "system.loss_lambda",
            "must be non-negative",
        )?;
        check(
            s.tx_power_dbm.is_finite() && s.noise_figure_db.is_finite(),
            "system.tx_power_dbm",
            "must be finite",
        )?;
        check(
            s.bs_position.iter().all(|x| x.is_finite()),
            "system.bs_position",
            "must be finite",
        )?;

        let u = &self.users;
        check(u.count >= 1, "users.count", "at least one user is required")?;
        check(
            u.height_min_m > 0.0 && u.height_min_m <= u.height_max_m,
            "users.height_min_m",
            "need 0 < min <= max",
        )?;
        check(
            u.max_speed_kmh >= 0.0,
            "users.max_speed_kmh",
            "must be non-negative",
        )?;
        check(u.area_side_m > 0.0, "users.area_side_m", "must be positive")?;

        let c = &self.channel;
        check(
            c.max_nlos_paths >= 1,
            "channel.max_nlos_paths",
            "must be at least 1",
        )?;
        check(
            c.shadow_sigma_db >= 0.0,
            "channel.shadow_sigma_db",
            "must be non-negative",
        )?;
        check(
            (0.0..=1.0).contains(&c.keep_prob),
            "channel.keep_prob",
            "must be a probability",
        )?;
        check(
            (0.0..=1.0).contains(&c.birth_prob),
            "channel.birth_prob",
            "must be a probability",
        )?;
        check(
            c.fading_corr_distance_m >= 0.0,
            "channel.fading_corr_distance_m",
            "must be non-negative",
        )?;

        let o = &self.obstacles;
        check(
            (0.0..0.9).contains(&o.density),
            "obstacles.density",
            "must lie in [0, 0.9)",
        )?;
        check(
            o.min_side_m > 0.0 && o.min_side_m <= o.max_side_m,
            "obstacles.min_side_m",
            "need 0 < min <= max",
        )?;
        check(
            o.min_height_m > 0.0 && o.min_height_m <= o.max_height_m,
            "obstacles.min_height_m",
            "need 0 < min <= max",
        )?;

        let cam = &self.camera;
        check(
            cam.hfov_deg > 0.0 && cam.hfov_deg < 180.0,
            "camera.hfov_deg",
            "must lie in (0, 180)",
        )?;
        check(
            cam.width_px >= 1.0 && cam.height_px >= 1.0,
            "camera.width_px",
            "image must be at least 1x1",
        )?;
        check(
            (0.0..1.0).contains(&cam.miss_prob),
            "camera.miss_prob",
            "must lie in [0, 1)",
        )?;
        check(
            cam.pixel_noise_px >= 0.0,
            "camera.pixel_noise_px",
            "must be non-negative",
        )?;
        check(
            cam.depth_noise_m >= 0.0,
            "camera.depth_noise_m",
            "must be non-negative",
        )?;

        let sc = &self.scheduler;
        check(
            sc.ser_max > 0.0 && sc.ser_max < 1.0,
            "scheduler.ser_max",
            "must lie in (0, 1)",
        )?;
        check(
            sc.rate_min_bits >= 0.0,
            "scheduler.rate_min_bits",
            "must be non-negative",
        )?;
        check(
            sc.pf_alpha > 0.0 && sc.pf_alpha <= 1.0,
            "scheduler.pf_alpha",
            "must lie in (0, 1]",
        )?;
        check(
            sc.pf_floor_bits > 0.0,
            "scheduler.pf_floor_bits",
            "must be positive",
        )?;

        let p = &self.predictor;
        check(p.ar_order >= 1, "predictor.ar_order", "must be at least 1")?;
        check(
            p.ar_window > p.ar_order,
            "predictor.ar_window",
            "must exceed predictor.ar_order",
        )?;
        check(
            p.path_threshold_db <= 0.0,
            "predictor.path_threshold_db",
            "must be <= 0 dB",
        )?;
        check(
            p.association_gate_deg > 0.0,
            "predictor.association_gate_deg",
            "must be positive",
        )?;
        check(
            p.codebook[0] >= 1 && p.codebook[1] >= 1,
            "predictor.codebook",
            "grid must be non-empty",
        )?;
        check(
            p.kalman_forgetting > 0.0 && p.kalman_forgetting < 1.0,
            "predictor.kalman_forgetting",
            "must lie in (0, 1)",
        )?;
        check(
            p.kalman_pixel_process_noise >= 0.0 && p.kalman_distance_process_noise >= 0.0,
            "predictor.kalman_pixel_process_noise",
            "must be non-negative",
        )?;
        check(
            p.deadline_ms >= 1,
            "predictor.deadline_ms",
            "must be at least 1",
        )?;
        check(
            p.gate_margin > 0.0,
            "predictor.gate_margin",
            "must be positive",
        )?;
        check(
            p.method != PredictorKind::External || p.endpoint.is_some(),
            "predictor.endpoint",
            "required when predictor.method = \"external\"",
        )?;
        Ok(())
    }

    pub fn geometry(&self) -> ArrayGeometry {
        ArrayGeometry::half_wavelength(
            self.system.antennas_x,
            self.system.antennas_y,
            self.system.carrier_ghz * 1e9,
        )
    }

    pub fn bs_position(&self) -> Vec3 {
        let [x, y, z] = self.system.bs_position;
        Vec3::new(x, y, z)
    }

    pub fn area(&self) -> ServiceArea {
        ServiceArea::square(self.users.area_side_m)
    }

    pub fn max_speed(&self) -> f64 {
        self.users.max_speed_kmh / 3.6
    }

    /// Camera boresight points from the BS towards the centre of the area at
    /// the BS height.
    pub fn camera(&self) -> CameraModel {
        let [dx, dy, dz] = self.camera.offset_m;
        let pos = self.bs_position() + Vec3::new(dx, dy, dz);
        let a = self.area();
        let centre = Vec3::new((a.x_min + a.x_max) / 2.0, (a.y_min + a.y_max) / 2.0, pos.z);
        let (az, _) = (centre - pos).azimuth_elevation();
        CameraModel::with_fov(
            pos,
            az,
            0.0,
            self.camera.hfov_deg.to_radians(),
            self.camera.width_px,
            self.camera.height_px,
        )
    }

    pub fn detector(&self) -> DetectorConfig {
        DetectorConfig {
            miss_prob: self.camera.miss_prob,
            pixel_noise: self.camera.pixel_noise_px,
            depth_noise: self.camera.depth_noise_m,
        }
    }

    pub fn obstacle_layout(&self) -> ObstacleLayout {
        let o = &self.obstacles;
        ObstacleLayout {
            density: o.density,
            min_side: o.min_side_m,
            max_side: o.max_side_m,
            min_height: o.min_height_m,
            max_height: o.max_height_m,
        }
    }

    pub fn channel_model(&self) -> ChannelModel {
        let c = &self.channel;
        let a = self.area();
        ChannelModel {
            geom: self.geometry(),
            shadow_sigma_db: c.shadow_sigma_db,
            fading_corr_distance: c.fading_corr_distance_m,
            nlos: NlosConfig {
                max_paths: c.max_nlos_paths,
                keep_prob: c.keep_prob,
                birth_prob: c.birth_prob,
                reflection_loss_db: c.reflection_loss_db,
                region_min: Vec3::new(a.x_min, a.y_min, 0.0),
                region_max: Vec3::new(
                    a.x_max,
                    a.y_max,
                    self.obstacles.max_height_m.max(self.bs_position().z),
                ),
            },
        }
    }

    /// Linear transmit power in watts.
    pub fn tx_power(&self) -> f64 {
        10f64.powf((self.system.tx_power_dbm - 30.0) / 10.0)
    }

    /// Thermal noise over the full band plus the noise figure, in watts.
    pub fn noise_power(&self) -> f64 {
        let dbm =
            -174.0 + 10.0 * (self.system.bandwidth_mhz * 1e6).log10() + self.system.noise_figure_db;
        10f64.powf((dbm - 30.0) / 10.0)
    }

    pub fn scheduler_config(&self) -> SchedulerConfig {
        SchedulerConfig {
            rb_total: self.system.rb_total,
            max_group: self.system.max_group,
            antennas: self.system.antennas_x * self.system.antennas_y,
            ser_max: self.scheduler.ser_max,
            rate_min: self.scheduler.rate_min_bits,
            res_per_rb: self.system.subcarriers_per_rb * self.system.symbols_per_slot,
            symbols_per_slot: self.system.symbols_per_slot as i32,
            streams: 1,
            tx_power: self.tx_power(),
            noise_power: self.noise_power(),
        }
    }
}

/// Read, parse and validate a configuration file.
pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    ScenarioConfig::from_toml_str(&text)
}
