use preempt_core::geometry::Vec3;
use preempt_core::scene::{
    los_visible, pixel_to_angle, project_and_detect, step_mobility, CameraModel, DetectorConfig,
    Obstacle, SceneState, ServiceArea, Target, UserState,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Walks the segment in 1 mm steps and reports whether any sample lands
/// strictly inside a box.
fn ray_march(a: Vec3, b: Vec3, obstacles: &[Obstacle]) -> bool {
    let len = a.distance(b);
    let steps = (len / 1e-3).ceil() as usize;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let p = a + (b - a) * t;
        for o in obstacles {
            let (hx, hy) = (o.width / 2.0, o.depth / 2.0);
            let inside = (p.x - o.center.x).abs() < hx
                && (p.y - o.center.y).abs() < hy
                && p.z > 0.0
                && p.z < o.height;
            if inside {
                return false;
            }
        }
    }
    true
}

#[test]
fn los_flag_agrees_with_ray_marching() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let bs = Vec3::new(-12.0, 10.0, 3.0);
    let mut blocked = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..6);
        let obstacles: Vec<Obstacle> = (0..n)
            .map(|id| {
                Obstacle::on_floor(
                    id,
                    rng.gen_range(0.0..20.0),
                    rng.gen_range(0.0..20.0),
                    rng.gen_range(0.5..2.5),
                    rng.gen_range(0.5..2.5),
                    rng.gen_range(2.0..4.0),
                )
            })
            .collect();
        let user = Vec3::new(rng.gen_range(0.0..20.0), rng.gen_range(0.0..20.0), rng.gen_range(0.5..2.0));
        let oracle = ray_march(bs, user, &obstacles);
        assert_eq!(los_visible(bs, user, &obstacles), oracle, "user {user:?} obstacles {obstacles:?}");
        blocked += usize::from(!oracle);
    }
    // the sample must exercise both outcomes
    assert!(blocked > 50 && blocked < 950, "blocked {blocked}");
}

fn scene(users: Vec<UserState>) -> SceneState {
    let bs = Vec3::new(-12.0, 10.0, 3.0);
    SceneState {
        slot: 0,
        users,
        obstacles: Vec::new(),
        camera: CameraModel::with_fov(bs, 0.0, 0.0, 90f64.to_radians(), 1920.0, 1080.0),
        bs_position: bs,
        area: ServiceArea::square(20.0),
    }
}

#[test]
fn edge_users_never_leave_the_area() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let user = |id, x: f64, vx: f64| UserState {
        id,
        position: Vec3::new(x, 10.0, 1.0),
        velocity: Vec3::new(vx, 0.0, 0.0),
        height: 1.0,
        speed: vx.abs(),
    };
    let mut s = scene(vec![user(0, 19.99, 7.0), user(1, 0.01, -7.0), user(2, 10.0, 3.0)]);
    for _ in 0..10_000 {
        s = step_mobility(&s, 0.1, &mut rng);
        for u in &s.users {
            assert!(s.area.contains_xy(u.position), "{u:?}");
            assert!((u.velocity.norm() - u.speed).abs() < 1e-9);
            assert_eq!(u.position.z, u.height);
        }
    }
}

#[test]
fn noiseless_detections_recover_positions() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let users: Vec<UserState> = (0..10)
        .map(|id| {
            let h = rng.gen_range(0.5..2.0);
            UserState {
                id,
                position: Vec3::new(rng.gen_range(0.0..20.0), rng.gen_range(0.0..20.0), h),
                velocity: Vec3::new(0.0, 0.0, 0.0),
                height: h,
                speed: 0.0,
            }
        })
        .collect();
    let s = scene(users);
    let det = DetectorConfig { miss_prob: 0.0, pixel_noise: 0.0, depth_noise: 0.0 };
    let out = project_and_detect(&s, &det, &mut rng);
    let mut seen = 0;
    for d in &out {
        let Target::User(k) = d.target else { continue };
        let (az, el) = pixel_to_angle(&s.camera, d.pixel);
        let p = s.camera.position + Vec3::from_angles(az, el) * d.depth;
        assert!(p.distance(s.users[k].position) < 1e-3);
        seen += 1;
    }
    assert_eq!(seen, 10);
}
