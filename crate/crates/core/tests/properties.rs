use gsl_core::evaluation::{train_demos, BenchmarkConfig, Variant};
use gsl_core::geometry::{
    apply_transform, chamfer_distance, covariance, principal_frame, PointCloud, RigidTransform,
    UnitQuat, Vec3,
};
use gsl_core::high_level_planner::{
    parse_task, unparse, Attribute, ObjectQuery, Qualifier, SkillPlan,
};
use gsl_core::sensing::{observe, SensingConfig, SensorNoise};
use gsl_core::skill_discovery::{
    build_library, canonicalize, segment_demo, un_canonicalize, AnchorMode, DiscoveryConfig,
    SkillLabel, SkillTriplet,
};
use gsl_core::world::{execute_trajectory, GripperState, Trajectory};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn quat() -> impl Strategy<Value = UnitQuat> {
    (vec3(1.0), -3.1..3.1f64)
        .prop_map(|(a, t)| UnitQuat::from_axis_angle(a + Vec3::new(0.0, 0.0, 1e-3), t))
}

fn cloud(max: usize) -> impl Strategy<Value = PointCloud> {
    prop::collection::vec(vec3(0.5), 1..max).prop_map(|p| PointCloud::new(p).unwrap())
}

fn transform() -> impl Strategy<Value = RigidTransform> {
    (quat(), vec3(1.0)).prop_map(|(q, t)| RigidTransform::new(q, t))
}

fn traj() -> impl Strategy<Value = Trajectory> {
    prop::collection::vec((vec3(0.5), quat(), 0.0..=1.0f64), 1..30).prop_map(|s| {
        Trajectory::new(
            s.into_iter()
                .map(|(p, q, a)| GripperState::new(p, q, a))
                .collect(),
        )
        .unwrap()
    })
}

fn cloud_gap(a: &PointCloud, b: &PointCloud) -> f64 {
    a.points()
        .iter()
        .zip(b.points())
        .map(|(p, q)| p.distance(*q))
        .fold(0.0, f64::max)
}

fn traj_gap(a: &Trajectory, b: &Trajectory) -> f64 {
    assert_eq!(a.len(), b.len());
    a.steps()
        .iter()
        .zip(b.steps())
        .map(|(x, y)| x.max_difference(y))
        .fold(0.0, f64::max)
}

fn demos() -> &'static [gsl_core::demonstrations::Demo] {
    static DEMOS: OnceLock<Vec<gsl_core::demonstrations::Demo>> = OnceLock::new();
    DEMOS.get_or_init(|| train_demos(&BenchmarkConfig::embedded(), 3).unwrap())
}

proptest! {
    #[test]
    fn inverse_transform_restores_cloud(t in transform(), c in cloud(40)) {
        let back = apply_transform(&t.inverse(), &apply_transform(&t, &c));
        prop_assert!(cloud_gap(&back, &c) < 1e-9);
    }

    #[test]
    fn chamfer_is_a_symmetric_rigid_invariant(a in cloud(30), b in cloud(30), t in transform()) {
        let ab = chamfer_distance(&a, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - chamfer_distance(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert_eq!(chamfer_distance(&a, &a).unwrap(), 0.0);
        let moved = chamfer_distance(&apply_transform(&t, &a), &apply_transform(&t, &b)).unwrap();
        prop_assert!((moved - ab).abs() < 1e-9);
    }

    #[test]
    fn principal_frame_diagonalizes(c in prop::collection::vec(vec3(0.5), 8..60)) {
        let c = PointCloud::new(c).unwrap();
        if let Ok(f) = principal_frame(&c) {
            let m = covariance(&apply_transform(&f, &c));
            let big = (0..3).map(|i| m[(i, i)].abs()).fold(0.0, f64::max);
            for i in 0..3 {
                for j in 0..3 {
                    if i != j {
                        prop_assert!(m[(i, j)].abs() < 1e-8 * big.max(f64::MIN_POSITIVE));
                    }
                }
            }
        }
    }

    #[test]
    fn canonicalization_round_trips(c in cloud(40), tr in traj(), seed in any::<u64>(), random in any::<bool>()) {
        let t = SkillTriplet {
            label: SkillLabel::Lift,
            target: 1,
            object_cloud: c.clone(),
            channel: None,
            trajectory: tr.clone(),
        };
        let mode = if random { AnchorMode::Random } else { AnchorMode::Centroid };
        let s = canonicalize(&t, mode, &mut ChaCha8Rng::seed_from_u64(seed), (0, 0));
        prop_assert!(traj_gap(&un_canonicalize(&s.traj_c, s.anchor), &tr) < 1e-12);
        prop_assert!(cloud_gap(&s.cloud_c.translated(s.anchor), &c) < 1e-12);
        if random {
            prop_assert!(c.points().contains(&s.anchor));
        }
    }

    #[test]
    fn centroid_canonical_form_ignores_translation(c in cloud(40), tr in traj(), shift in vec3(1.0)) {
        let make = |cloud: PointCloud, trajectory: Trajectory| SkillTriplet {
            label: SkillLabel::Press,
            target: 1,
            object_cloud: cloud,
            channel: None,
            trajectory,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = canonicalize(&make(c.clone(), tr.clone()), AnchorMode::Centroid, &mut rng, (0, 0));
        let b = canonicalize(&make(c.translated(shift), tr.translated(shift)), AnchorMode::Centroid, &mut rng, (0, 0));
        prop_assert!(cloud_gap(&a.cloud_c, &b.cloud_c) < 1e-9);
        prop_assert!(traj_gap(&a.traj_c, &b.traj_c) < 1e-9);
    }

    #[test]
    fn unparse_then_parse_is_identity(
        steps in prop::collection::vec(
            (
                0..SkillLabel::ALL.len(),
                "[a-z_][a-z0-9_]{0,8}",
                prop::option::of("[a-z_][a-z0-9_]{0,6}"),
                prop::option::of("[a-z_][a-z0-9_]{0,6}"),
                prop::option::of(0..Qualifier::ALL.len()),
            ),
            1..5,
        )
    ) {
        let plan = SkillPlan {
            steps: steps
                .into_iter()
                .map(|(k, category, color, size, q)| {
                    let mut attributes = vec![];
                    if let Some(c) = color {
                        attributes.push((Attribute::Color, c));
                    }
                    if let Some(s) = size {
                        attributes.push((Attribute::Size, s));
                    }
                    (
                        SkillLabel::ALL[k],
                        ObjectQuery { category, attributes, qualifier: q.map(|i| Qualifier::ALL[i]) },
                    )
                })
                .collect(),
        };
        prop_assert_eq!(parse_task(&unparse(&plan)).unwrap(), plan);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn observation_is_translation_equivariant(k in 0..18usize, shift in vec3(0.2), seed in any::<u64>()) {
        let scene = &demos()[k].task.scene;
        let cfg = SensingConfig::default();
        let noise = SensorNoise::default();
        let a = observe(scene, &noise, &cfg, seed).unwrap();
        let b = observe(&scene.translated(shift), &noise, &cfg, seed).unwrap();
        prop_assert_eq!(a.labels(), b.labels());
        prop_assert!(cloud_gap(&a.translated(shift).points().clone(), b.points()) < 1e-9);
    }

    #[test]
    fn dynamics_are_translation_equivariant(k in 0..18usize, dx in -0.1..0.1f64, dy in -0.1..0.1f64) {
        let d = &demos()[k];
        let t = Vec3::new(dx, dy, 0.0);
        let world = BenchmarkConfig::embedded().exec.world;
        let a = execute_trajectory(&d.task.scene, &d.trajectory, &world).unwrap();
        let b = execute_trajectory(&d.task.scene.translated(t), &d.trajectory.translated(t), &world).unwrap();
        let a = a.translated(t);
        prop_assert_eq!(a.attached.map(|x| x.id), b.attached.map(|x| x.id));
        for (x, y) in a.objects.iter().zip(&b.objects) {
            prop_assert!(x.pose.translation.distance(y.pose.translation) < 1e-9);
            prop_assert!(x.pose.rotation.angle_to(y.pose.rotation) < 1e-9);
        }
    }
}

#[test]
fn attached_objects_keep_their_grip_offset() {
    let mut checked = 0;
    for d in demos() {
        let mut held: Option<(u32, RigidTransform)> = None;
        for f in &d.frames {
            match (f.attached, held) {
                (Some(a), Some((id, offset))) if a.id == id => {
                    let o = f.object(a.id).unwrap();
                    let rel = f.gripper.pose().inverse().compose(&o.pose);
                    assert!(rel.translation.distance(offset.translation) < 1e-12);
                    assert!(rel.rotation.angle_to(offset.rotation) < 1e-9);
                    checked += 1;
                }
                (Some(a), _) => {
                    let o = f.object(a.id).unwrap();
                    held = Some((a.id, f.gripper.pose().inverse().compose(&o.pose)));
                }
                (None, _) => held = None,
            }
        }
    }
    assert!(checked > 0);
}

#[test]
fn segments_partition_each_demo() {
    let cfg = BenchmarkConfig::embedded();
    for d in demos() {
        let plan = parse_task(&d.task.description).unwrap();
        let segs = segment_demo(d, &plan, &DiscoveryConfig::default(), &cfg.exec.sensing).unwrap();
        assert_eq!(segs.first().unwrap().start, 0);
        assert_eq!(segs.last().unwrap().end, d.trajectory.len());
        for w in segs.windows(2) {
            assert_eq!(w[0].end, w[1].start);
        }
    }
}

#[test]
fn discovery_ignores_demo_translation() {
    let cfg = BenchmarkConfig::embedded();
    let shifted: Vec<_> = demos()
        .iter()
        .map(|d| d.translated(Vec3::new(0.07, -0.04, 0.0)))
        .collect();
    let build = |ds: &[gsl_core::demonstrations::Demo]| {
        build_library(
            ds,
            Variant::Complete,
            AnchorMode::Centroid,
            1,
            0,
            &cfg.exec.discovery,
            &cfg.exec.sensing,
        )
        .unwrap()
    };
    let (a, b) = (build(demos()), build(&shifted));
    assert_eq!(a.len(), b.len());
    for (x, y) in a.entries().iter().zip(b.entries()) {
        assert_eq!(x.label, y.label);
        assert!(cloud_gap(&x.cloud_c, &y.cloud_c) < 1e-9);
        assert!(traj_gap(&x.traj_c, &y.traj_c) < 1e-9);
    }
}

#[test]
fn skill_starts_near_the_object() {
    let cfg = BenchmarkConfig::embedded();
    let lib = build_library(
        demos(),
        Variant::Complete,
        AnchorMode::Centroid,
        1,
        0,
        &cfg.exec.discovery,
        &cfg.exec.sensing,
    )
    .unwrap();
    for e in lib.entries() {
        let first = e.traj_c.steps()[0].position.norm();
        assert!(
            first <= cfg.exec.discovery.d_near + e.cloud_c.radius() + 1e-9,
            "{first}"
        );
    }
}
