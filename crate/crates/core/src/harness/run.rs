//! Slot loop: ground truth, receiver-side estimation and tracking, next-slot
//! prediction, scheduling and realized throughput.

use super::config::{PredictorKind, ScenarioConfig};
use crate::channel::{
    array_response, compose_channel, large_scale_gain, ChannelParams, ChannelVector, PathParams,
};
use crate::error::Result;
use crate::estimation::{
    decompose, estimate_channel, receive_pilot, LosGeometry, McsTable, PilotObservation,
};
use crate::geometry::Vec3;
use crate::identify::{codebook_fallback, correlation_matrix, hungarian_match, BeamCodebook};
use crate::predict::{
    ar_predict, nmse_linear, predict_blockage, reconstruct_channel, ArConfig, ExternalConfig,
    ExternalPredictor, GateContext, NlosTracker, NlosTrackerConfig, Observation, PredictedPoint,
    PredictionRecord, SageHusaConfig, ScoredPath, StateMethod, StatePrediction, TrackerConfig,
    Trajectory,
};
use crate::scene::{
    generate_obstacles, los_visible, project_and_detect, random_users, step_mobility, CameraModel,
    Detection, SceneState, Target,
};
use crate::scheduler::validate::validate_decision;
use crate::scheduler::{realized_throughput, schedule, update_average, Policy};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::Write;
use std::time::Duration;

#[derive(Debug, Clone, Copy)]
enum Stream {
    Layout = 1,
    Users = 2,
    Mobility = 3,
    Channel = 4,
    Detector = 5,
    Pilot = 6,
}

fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of repetition `index` under a master seed.
pub fn scenario_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}

/// Everything the world does, independent of what the BS decides.
#[derive(Debug, Clone)]
pub struct Truth {
    pub scenes: Vec<SceneState>,
    pub params: Vec<Vec<ChannelParams>>,
    pub channels: Vec<Vec<ChannelVector>>,
    pub detections: Vec<Vec<Detection>>,
    pub pilots: Vec<Vec<PilotObservation>>,
}

impl Truth {
    pub fn generate(cfg: &ScenarioConfig, seed: u64) -> Truth {
        let area = cfg.area();
        let bs = cfg.bs_position();
        let model = cfg.channel_model();
        let geom = model.geom;
        let detector = cfg.detector();
        let mut r_layout = stream_rng(seed, Stream::Layout);
        let mut r_users = stream_rng(seed, Stream::Users);
        let mut r_mob = stream_rng(seed, Stream::Mobility);
        let mut r_chan = stream_rng(seed, Stream::Channel);
        let mut r_det = stream_rng(seed, Stream::Detector);
        let mut r_pilot = stream_rng(seed, Stream::Pilot);

        let obstacles = generate_obstacles(&area, &cfg.obstacle_layout(), bs, &mut r_layout);
        let users = random_users(
            cfg.users.count,
            &area,
            &obstacles,
            (cfg.users.height_min_m, cfg.users.height_max_m),
            cfg.max_speed(),
            &mut r_users,
        );
        let mut scene = SceneState {
            slot: 0,
            users,
            obstacles,
            camera: cfg.camera(),
            bs_position: bs,
            area,
        };
        let mut states: Vec<_> = (0..cfg.users.count)
            .map(|_| model.init_user(&mut r_chan))
            .collect();
        let pilot = Complex64::new(cfg.tx_power().sqrt(), 0.0);
        let noise = cfg.noise_power();

        let mut truth = Truth {
            scenes: vec![],
            params: vec![],
            channels: vec![],
            detections: vec![],
            pilots: vec![],
        };
        for t in 0..cfg.system.slots {
            if t > 0 {
                let next = step_mobility(&scene, cfg.system.slot_duration_s, &mut r_mob);
                for (k, st) in states.iter_mut().enumerate() {
                    let moved = next.users[k].position.distance(scene.users[k].position);
                    model.evolve(st, moved, &mut r_chan);
                }
                scene = next;
            }
            let params: Vec<ChannelParams> = scene
                .users
                .iter()
                .enumerate()
                .map(|(k, u)| {
                    let los = los_visible(bs, u.position, &scene.obstacles);
                    model.params(k, &states[k], bs, u.position, los)
                })
                .collect();
            let channels: Vec<ChannelVector> =
                params.iter().map(|p| compose_channel(p, &geom)).collect();
            let detections = project_and_detect(&scene, &detector, &mut r_det);
            let pilots = channels
                .iter()
                .map(|h| receive_pilot(h, pilot, noise, &mut r_pilot))
                .collect();
            truth.scenes.push(scene.clone());
            truth.params.push(params);
            truth.channels.push(channels);
            truth.detections.push(detections);
            truth.pilots.push(pilots);
        }
        truth
    }

    pub fn delta(&self, slot: usize, user: usize) -> bool {
        self.params[slot][user].los.is_some()
    }
}

/// LoS coefficient including its range phase, with the range it was
/// estimated at.
#[derive(Debug, Clone, Copy)]
struct LosSample {
    coefficient: Complex64,
    distance: f64,
}

struct UserTracker {
    traj: Trajectory,
    los_gains: Vec<LosSample>,
    nlos: NlosTracker,
}

/// BS-side state carried across slots: estimates, identification and the
/// per-user trackers.
struct Receiver<'a> {
    cfg: &'a ScenarioConfig,
    camera: CameraModel,
    bs: Vec3,
    grid: crate::predict::SpatialGrid,
    codebook: BeamCodebook,
    users: Vec<UserTracker>,
    estimates: Vec<ChannelVector>,
    camera_los: Vec<bool>,
    ident_correct: usize,
    ident_total: usize,
}

fn bs_frame(bs: Vec3, point: Vec3) -> (f64, f64, f64) {
    let rel = point - bs;
    let (az, el) = rel.azimuth_elevation();
    (az, el, rel.norm())
}

impl<'a> Receiver<'a> {
    fn new(cfg: &'a ScenarioConfig) -> Self {
        let geom = cfg.geometry();
        let bs = cfg.bs_position();
        let mean_height = (cfg.users.height_min_m + cfg.users.height_max_m) / 2.0;
        let max_range = {
            let a = cfg.area();
            [
                (a.x_min, a.y_min),
                (a.x_min, a.y_max),
                (a.x_max, a.y_min),
                (a.x_max, a.y_max),
            ]
            .iter()
            .map(|&(x, y)| bs.distance(Vec3::new(x, y, mean_height)))
            .fold(1.0, f64::max)
        };
        // nominal range: where the beam meets the mean user height
        let nominal = |_az: f64, el: f64| {
            if el < 0.0 {
                ((mean_height - bs.z) / el.sin()).clamp(1.0, max_range)
            } else {
                max_range
            }
        };
        let [nu, nv] = cfg.predictor.codebook;
        let codebook = BeamCodebook::dft_grid(&geom, nu, nv, 0.95, 0.5, nominal);
        let tracker = TrackerConfig {
            pixel: SageHusaConfig {
                forgetting: cfg.predictor.kalman_forgetting,
                process_noise: cfg.predictor.kalman_pixel_process_noise,
                ..TrackerConfig::default().pixel
            },
            distance: SageHusaConfig {
                forgetting: cfg.predictor.kalman_forgetting,
                process_noise: cfg.predictor.kalman_distance_process_noise,
                ..TrackerConfig::default().distance
            },
        };
        let nlos_cfg = NlosTrackerConfig {
            max_paths: cfg.channel.max_nlos_paths,
            gate: cfg.predictor.association_gate_deg.to_radians(),
            history: cfg.predictor.ar_window,
            score_threshold: 10f64.powf(cfg.predictor.path_threshold_db / 10.0),
        };
        let users = (0..cfg.users.count)
            .map(|_| UserTracker {
                traj: Trajectory::new(cfg.system.window, tracker),
                los_gains: Vec::new(),
                nlos: NlosTracker::new(nlos_cfg),
            })
            .collect();
        Receiver {
            cfg,
            camera: cfg.camera(),
            bs,
            grid: crate::predict::SpatialGrid::new(&geom, 64, 64),
            codebook,
            users,
            estimates: Vec::new(),
            camera_los: Vec::new(),
            ident_correct: 0,
            ident_total: 0,
        }
    }

    fn process(&mut self, t: usize, truth: &Truth) {
        let cfg = self.cfg;
        let geom = cfg.geometry();
        let n = geom.antennas() as f64;
        let k_total = cfg.users.count;
        let power = cfg.tx_power();
        let noise = cfg.noise_power();

        let mut estimate_noise = vec![noise / power; k_total];
        let estimates: Vec<ChannelVector> = (0..k_total)
            .map(|k| {
                let prior = match self.estimates.get(k) {
                    Some(prev) if prev.norm_squared() > 0.0 => {
                        power * prev.norm_squared() / (n * noise)
                    }
                    _ => f64::INFINITY,
                };
                if prior.is_finite() {
                    estimate_noise[k] *= (prior / (1.0 + prior)).powi(2);
                }
                estimate_channel(&truth.pilots[t][k], prior)
            })
            .collect();

        let detected: Vec<&Detection> = truth.detections[t]
            .iter()
            .filter(|d| matches!(d.target, Target::User(_)) && d.visible)
            .collect();
        let located: Vec<(f64, f64, f64)> = detected
            .iter()
            .map(|d| bs_frame(self.bs, self.camera.back_project(d.pixel, d.depth)))
            .collect();
        let mut owner: Vec<Option<usize>> = vec![None; k_total];
        if !detected.is_empty() {
            let beams: Vec<ChannelVector> = located
                .iter()
                .map(|&(az, el, _)| array_response(&geom, az, el))
                .collect();
            let r = if cfg.predictor.normalize_identification {
                let unit: Vec<ChannelVector> = estimates
                    .iter()
                    .map(|h| {
                        if h.norm() > 0.0 {
                            h.normalize()
                        } else {
                            h.clone()
                        }
                    })
                    .collect();
                correlation_matrix(&beams, &unit)
            } else {
                correlation_matrix(&beams, &estimates)
            };
            let assignment = hungarian_match(&r);
            for (i, user) in assignment.user_of.iter().enumerate() {
                if let Some(k) = *user {
                    owner[k] = Some(i);
                    self.ident_total += 1;
                    if detected[i].target == Target::User(k) {
                        self.ident_correct += 1;
                    }
                }
            }
        }

        let max_paths = cfg.channel.max_nlos_paths;
        let floor = 10f64.powf(cfg.predictor.path_threshold_db / 10.0);
        let mut camera_los = vec![false; k_total];
        for k in 0..k_total {
            let (obs, los, reference) = match owner[k] {
                Some(i) => {
                    let d = detected[i];
                    let (az, el, r) = located[i];
                    camera_los[k] = true;
                    let obs = Observation {
                        slot: t,
                        pixel: d.pixel,
                        distance: d.depth,
                        visible: true,
                    };
                    (
                        obs,
                        Some(LosGeometry {
                            distance: r,
                            azimuth: az,
                            elevation: el,
                        }),
                        r,
                    )
                }
                None => {
                    let cw = codebook_fallback(&self.codebook, &estimates[k]);
                    let point = self.bs + Vec3::from_angles(cw.azimuth, cw.elevation) * cw.distance;
                    let pixel = self
                        .camera
                        .project(point)
                        .unwrap_or((self.camera.cx, self.camera.cy));
                    let obs = Observation {
                        slot: t,
                        pixel,
                        distance: self.camera.position.distance(point),
                        visible: false,
                    };
                    (obs, None, cw.distance)
                }
            };
            let user = &mut self.users[k];
            user.traj.push(obs);
            let split = decompose(&estimates[k], los.as_ref(), &geom);
            if let (Some(g), Some(l)) = (split.los_gain, los) {
                user.los_gains.push(LosSample {
                    coefficient: g * geom.distance_phase(l.distance),
                    distance: l.distance,
                });
                let excess = user.los_gains.len().saturating_sub(cfg.predictor.ar_window);
                user.los_gains.drain(..excess);
            }
            let paths = self
                .grid
                .extract(&split.nlos, max_paths, floor, estimate_noise[k]);
            user.nlos.update(t, &paths, &geom, reference);
        }
        self.estimates = estimates;
        self.camera_los = camera_los;
    }

    fn state_predictions(
        &self,
        kind: PredictorKind,
        slot: usize,
        external: Option<&ExternalPredictor>,
    ) -> Vec<Option<StatePrediction>> {
        match kind {
            PredictorKind::External => {
                let ext = external.expect("external predictor configured");
                let items: Vec<(usize, &Trajectory)> = self
                    .users
                    .iter()
                    .enumerate()
                    .map(|(k, u)| (k, &u.traj))
                    .collect();
                let ctx = GateContext {
                    focal_px: self.camera.focal_px,
                    max_speed: self.cfg.max_speed(),
                    slot_duration: self.cfg.system.slot_duration_s,
                };
                ext.predict_batch(&items, slot, &ctx)
            }
            PredictorKind::Linear => self
                .users
                .iter()
                .map(|u| u.traj.predict(StateMethod::Linear, slot))
                .collect(),
            _ => self
                .users
                .iter()
                .map(|u| u.traj.predict(StateMethod::Kalman, slot))
                .collect(),
        }
    }

    /// Model-based prediction for `slot`: state, blockage, LoS gain and NLoS
    /// paths, reconstructed into channel vectors.
    fn model_prediction(
        &self,
        kind: PredictorKind,
        slot: usize,
        t: usize,
        truth: &Truth,
        external: Option<&ExternalPredictor>,
    ) -> Prediction {
        let cfg = self.cfg;
        let geom = cfg.geometry();
        let ar = ArConfig {
            order: cfg.predictor.ar_order,
            window: cfg.predictor.ar_window,
            ..ArConfig::default()
        };
        let states = self.state_predictions(kind, slot, external);
        let points: Vec<PredictedPoint> = states
            .iter()
            .enumerate()
            .filter(|&(k, s)| s.is_some() && self.users[k].traj.has_visible())
            .map(|(k, s)| {
                let s = s.unwrap();
                PredictedPoint {
                    user: k,
                    pixel: s.pixel,
                    distance: s.distance,
                }
            })
            .collect();
        let obstacles: Vec<Detection> = truth.detections[t]
            .iter()
            .filter(|d| matches!(d.target, Target::Obstacle(_)))
            .cloned()
            .collect();
        let (flags, _) = predict_blockage(&points, &obstacles);
        let mut delta = vec![false; cfg.users.count];
        for (p, f) in points.iter().zip(flags) {
            delta[p.user] = f;
        }
        let channels = states
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let Some(s) = s else {
                    return ChannelVector::zeros(geom.antennas());
                };
                let user = &self.users[k];
                let (azimuth, elevation, distance) = bs_frame(
                    self.bs,
                    self.camera.back_project(s.pixel, s.distance.max(0.1)),
                );
                let distance = distance.max(0.1);
                let coef = cfg.predictor.los_coefficient_ar;
                let gains: Vec<Complex64> = user
                    .los_gains
                    .iter()
                    .map(|g| {
                        if coef {
                            g.coefficient
                        } else {
                            g.coefficient / geom.distance_phase(g.distance)
                        }
                    })
                    .collect();
                let los_gain = ar_predict(&gains, &ar)
                    // back to a gain that reconstructs the predicted coefficient at the predicted range
                    .map(|g| {
                        if coef {
                            g / geom.distance_phase(distance)
                        } else {
                            g
                        }
                    })
                    .unwrap_or_else(|| {
                        let amp = large_scale_gain(
                            distance,
                            geom.carrier_hz,
                            0.0,
                            cfg.channel.shadow_sigma_db,
                        )
                        .unwrap_or(0.0);
                        Complex64::new(amp, 0.0)
                    });
                let record = PredictionRecord {
                    user: k,
                    pixel: s.pixel,
                    azimuth,
                    elevation,
                    distance,
                    delta: delta[k],
                    los_gain,
                    nlos: user.nlos.predict(slot, &ar),
                    method: s.method,
                    fallback: s.fallback,
                };
                reconstruct_channel(&record, &geom)
            })
            .collect();
        Prediction {
            channels,
            delta: Some(delta),
            reconstruction_error: None,
        }
    }

    fn oracle_prediction(&self, slot: usize, truth: &Truth) -> Prediction {
        let geom = self.cfg.geometry();
        let mut worst: f64 = 0.0;
        let channels = truth.params[slot]
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let pos = truth.scenes[slot].users[k].position;
                let los = p.los.unwrap_or_else(|| PathParams {
                    gain: Complex64::new(0.0, 0.0),
                    distance: self.bs.distance(pos),
                    azimuth: (pos - self.bs).azimuth_elevation().0,
                    elevation: (pos - self.bs).azimuth_elevation().1,
                });
                let strongest = p.nlos.iter().map(|q| q.gain.norm_sqr()).fold(0.0, f64::max);
                let record = PredictionRecord {
                    user: k,
                    pixel: self.camera.project(pos).unwrap_or((0.0, 0.0)),
                    azimuth: los.azimuth,
                    elevation: los.elevation,
                    distance: los.distance,
                    delta: p.los.is_some(),
                    los_gain: los.gain,
                    nlos: p
                        .nlos
                        .iter()
                        .map(|&path| ScoredPath {
                            path,
                            score: if strongest > 0.0 {
                                path.gain.norm_sqr() / strongest
                            } else {
                                0.0
                            },
                        })
                        .collect(),
                    method: StateMethod::HoldLast,
                    fallback: false,
                };
                let h = reconstruct_channel(&record, &geom);
                let truth_h = &truth.channels[slot][k];
                let scale = truth_h.norm();
                if scale > 0.0 {
                    worst = worst.max((&h - truth_h).norm() / scale);
                }
                h
            })
            .collect();
        let delta = (0..self.cfg.users.count)
            .map(|k| truth.delta(slot, k))
            .collect();
        Prediction {
            channels,
            delta: Some(delta),
            reconstruction_error: Some(worst),
        }
    }

    fn predict(
        &self,
        kind: PredictorKind,
        t: usize,
        truth: &Truth,
        external: Option<&ExternalPredictor>,
    ) -> Prediction {
        let slot = t + 1;
        match kind {
            PredictorKind::Oracle => self.oracle_prediction(slot, truth),
            PredictorKind::Zero => Prediction {
                channels: vec![
                    ChannelVector::zeros(self.cfg.geometry().antennas());
                    self.cfg.users.count
                ],
                delta: None,
                reconstruction_error: None,
            },
            PredictorKind::LastValue => Prediction {
                channels: self.estimates.clone(),
                delta: Some(self.camera_los.clone()),
                reconstruction_error: None,
            },
            PredictorKind::Linear | PredictorKind::Kalman | PredictorKind::External => {
                self.model_prediction(kind, slot, t, truth, external)
            }
        }
    }
}

/// Decision-time channels for one slot.
#[derive(Debug, Clone)]
struct Prediction {
    channels: Vec<ChannelVector>,
    delta: Option<Vec<bool>>,
    reconstruction_error: Option<f64>,
}

/// One user in one evaluated slot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotRow {
    pub slot: usize,
    pub user: usize,
    /// Linear NMSE of the decision channel; `None` when the true channel is 0.
    pub nmse: Option<f64>,
    pub delta_pred: Option<bool>,
    pub delta_true: bool,
    pub rbs: usize,
    pub mcs: Option<usize>,
    pub bits: f64,
    pub ser: f64,
    pub violation: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aggregates {
    /// Realized bits summed over users and evaluated slots.
    pub r_total: f64,
    /// `10 log10` of the mean linear NMSE; `-inf` for exact predictions.
    pub mean_nmse_db: Option<f64>,
    pub blockage_accuracy: Option<f64>,
    pub violation_count: usize,
}

pub fn aggregate(rows: &[SlotRow]) -> Aggregates {
    let r_total = rows.iter().map(|r| r.bits).sum();
    let nmse: Vec<f64> = rows.iter().filter_map(|r| r.nmse).collect();
    let mean_nmse_db =
        (!nmse.is_empty()).then(|| 10.0 * (nmse.iter().sum::<f64>() / nmse.len() as f64).log10());
    let judged: Vec<bool> = rows
        .iter()
        .filter_map(|r| r.delta_pred.map(|d| d == r.delta_true))
        .collect();
    let blockage_accuracy = (!judged.is_empty())
        .then(|| judged.iter().filter(|&&ok| ok).count() as f64 / judged.len() as f64);
    let violation_count = rows.iter().filter(|r| r.violation).count();
    Aggregates {
        r_total,
        mean_nmse_db,
        blockage_accuracy,
        violation_count,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub policy: Policy,
    pub predictor: PredictorKind,
    pub seed: u64,
    pub rows: Vec<SlotRow>,
    #[serde(flatten)]
    pub aggregates: Aggregates,
    /// Findings of the independent decision validator.
    pub constraint_violations: usize,
    /// Fraction of camera-to-user assignments that picked the right user.
    pub identification_accuracy: Option<f64>,
    /// Worst relative error of channels rebuilt from true parameters
    /// (oracle runs only).
    pub reconstruction_error: Option<f64>,
}

#[derive(Serialize)]
struct Event<'a> {
    seed: u64,
    slot: usize,
    policy: Policy,
    predictor: PredictorKind,
    decision: &'a crate::scheduler::ScheduleDecision,
    report: &'a crate::scheduler::ThroughputReport,
}

/// Predictor that actually feeds the decision: reactive policies always
/// decide on the current estimate.
pub fn effective_predictor(policy: Policy, predictor: PredictorKind) -> PredictorKind {
    if policy.is_predictive() {
        predictor
    } else {
        PredictorKind::LastValue
    }
}

fn mcs_table(cfg: &ScenarioConfig) -> Result<McsTable> {
    match &cfg.system.mcs_table {
        Some(path) => McsTable::load(path),
        None => Ok(McsTable::default()),
    }
}

fn external_predictor(cfg: &ScenarioConfig) -> Result<Option<ExternalPredictor>> {
    let Some(url) = &cfg.predictor.endpoint else {
        return Ok(None);
    };
    let mut ext_cfg = ExternalConfig::new(url.clone());
    ext_cfg.deadline = Duration::from_millis(cfg.predictor.deadline_ms);
    ext_cfg.gate_margin = cfg.predictor.gate_margin;
    let mut ext = ExternalPredictor::new(ext_cfg);
    if let Some(path) = &cfg.predictor.audit_log {
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)?;
        ext = ext.with_audit_log(Box::new(file));
    }
    Ok(Some(ext))
}

/// Run several (policy, predictor) pairs over one shared realisation of the
/// world. Reactive policies are reported with the `last_value` predictor.
pub fn run_combinations(
    cfg: &ScenarioConfig,
    seed: u64,
    combos: &[(Policy, PredictorKind)],
    mut log: Option<&mut dyn Write>,
) -> Result<Vec<RunResult>> {
    cfg.validate()?;
    let table = mcs_table(cfg)?;
    let combos: Vec<(Policy, PredictorKind)> = combos
        .iter()
        .map(|&(p, m)| (p, effective_predictor(p, m)))
        .collect();
    let kinds: Vec<PredictorKind> = {
        let mut v: Vec<_> = combos.iter().map(|c| c.1).collect();
        v.sort();
        v.dedup();
        v
    };
    let external = if kinds.contains(&PredictorKind::External) {
        Some(external_predictor(cfg)?.ok_or_else(|| {
            crate::error::Error::config("predictor.endpoint", "required by the external predictor")
        })?)
    } else {
        None
    };

    let truth = Truth::generate(cfg, seed);
    let mut rx = Receiver::new(cfg);
    let first = cfg.system.window - 1;
    let last = cfg.system.slots - 2;
    let mut predictions: BTreeMap<PredictorKind, Vec<Prediction>> = BTreeMap::new();
    for t in 0..=last {
        rx.process(t, &truth);
        if t >= first {
            for &kind in &kinds {
                let p = rx.predict(kind, t, &truth, external.as_ref());
                predictions.entry(kind).or_default().push(p);
            }
        }
    }
    let identification_accuracy =
        (rx.ident_total > 0).then(|| rx.ident_correct as f64 / rx.ident_total as f64);

    let sched = cfg.scheduler_config();
    let k_total = cfg.users.count;
    let mut results = Vec::with_capacity(combos.len());
    for &(policy, kind) in &combos {
        let preds = &predictions[&kind];
        let mut averages = vec![cfg.scheduler.pf_floor_bits; k_total];
        let mut rows = Vec::new();
        let mut constraint_violations = 0;
        let mut reconstruction_error: Option<f64> = None;
        for (i, pred) in preds.iter().enumerate() {
            let slot = first + i + 1;
            let truth_h = &truth.channels[slot];
            let decision = schedule(&pred.channels, &averages, policy, &sched, &table, slot);
            constraint_violations += validate_decision(&decision, &sched, &table).len();
            let report = realized_throughput(&decision, truth_h, &sched, &table);
            let counts = decision.rb_counts();
            for k in 0..k_total {
                averages[k] = update_average(
                    averages[k],
                    report.bits[k],
                    cfg.scheduler.pf_alpha,
                    cfg.scheduler.pf_floor_bits,
                );
                rows.push(SlotRow {
                    slot,
                    user: k,
                    nmse: nmse_linear(&truth_h[k], &pred.channels[k]),
                    delta_pred: pred.delta.as_ref().map(|d| d[k]),
                    delta_true: truth.delta(slot, k),
                    rbs: counts[k],
                    mcs: decision.mcs[k],
                    bits: report.bits[k],
                    ser: report.ser[k],
                    violation: report.violation[k],
                });
            }
            if let Some(e) = pred.reconstruction_error {
                reconstruction_error = Some(reconstruction_error.map_or(e, |w| w.max(e)));
            }
            if let Some(out) = log.as_deref_mut() {
                let event = Event {
                    seed,
                    slot,
                    policy,
                    predictor: kind,
                    decision: &decision,
                    report: &report,
                };
                serde_json::to_writer(&mut *out, &event)?;
                out.write_all(b"\n")?;
            }
        }
        results.push(RunResult {
            policy,
            predictor: kind,
            seed,
            aggregates: aggregate(&rows),
            rows,
            constraint_violations,
            identification_accuracy,
            reconstruction_error,
        });
    }
    Ok(results)
}

/// Single run with the policy, predictor and seed named in the config.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunResult> {
    let combo = [(cfg.scheduler.policy, cfg.predictor.method)];
    let mut file = match &cfg.run.event_log {
        Some(path) => Some(std::io::BufWriter::new(std::fs::File::create(path)?)),
        None => None,
    };
    let log = file.as_mut().map(|f| f as &mut dyn Write);
    let mut out = run_combinations(cfg, cfg.run.seed, &combo, log)?;
    if let Some(f) = file.as_mut() {
        f.flush()?;
    }
    Ok(out.remove(0))
}

/// Per-row CSV of a run.
pub fn write_rows_csv<W: Write>(out: W, result: &RunResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "policy",
        "predictor",
        "seed",
        "slot",
        "user",
        "nmse_db",
        "delta_pred",
        "delta_true",
        "rbs",
        "mcs",
        "bits",
        "ser",
        "violation",
    ])?;
    for r in &result.rows {
        let opt = |x: Option<String>| x.unwrap_or_default();
        w.write_record([
            result.policy.as_str().to_string(),
            result.predictor.as_str().to_string(),
            result.seed.to_string(),
            r.slot.to_string(),
            r.user.to_string(),
            opt(r.nmse.map(|x| (10.0 * x.log10()).to_string())),
            opt(r.delta_pred.map(|d| (d as u8).to_string())),
            (r.delta_true as u8).to_string(),
            r.rbs.to_string(),
            opt(r.mcs.map(|m| m.to_string())),
            r.bits.to_string(),
            r.ser.to_string(),
            (r.violation as u8).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
