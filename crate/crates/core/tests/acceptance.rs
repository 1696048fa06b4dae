//! Acceptance checks, one line per criterion. Exits non-zero if any fails.

mod common;

use std::time::{Duration, Instant};

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use regtrack::eval::{auc_score, rbot_protocol, rotation_error, load_sequence, SequenceReport, Thresholds};
use regtrack::geometry::{exp_twist, log_rotation, MeshPair, RigidTransform, TriangleMesh, Twist, Vec3};
use regtrack::levelset::{signed_distance_transform, smoothed_dirac, smoothed_heaviside};
use regtrack::optimizer::{check_random_scenes, optimize, ObjectInput, OptimizationSettings};
use regtrack::raster::{render_reverse_depth, render_scene};
use regtrack::synth::{
    demo_cube, generate_sequence, mottle, procedural_background, Occluder, SequenceConfig, SequenceVariant,
    TrajectorySpec, DEFAULT_NOISE_SIGMA,
};
use regtrack::tracker::TrackerState;

use common::*;

/// Success rate of the first green run of criterion 6, in percent.
const TRACKING_BASELINE: f64 = 100.0;
const TRACKING_DISTANCE: f64 = 0.45;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn jacobian_correctness() -> Outcome {
    let start = Instant::now();
    let r = check_random_scenes(None, 20, 0, false).expect("scenes");
    let t = start.elapsed();
    outcome(
        r.scenes == 20 && r.median < 1e-4 && r.p99 < 1e-3 && t < Duration::from_secs(10),
        format!(
            "{} scenes, {} pixels, median {:.2e}, p99 {:.2e}, {:.1} s",
            r.scenes,
            r.samples,
            r.median,
            r.p99,
            t.as_secs_f64()
        ),
    )
}

fn sdt_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut fields, mut mismatches) = (0, 0);
    let mut t = Duration::ZERO;
    for _ in 0..200 {
        let mask = random_mask(&mut rng, 64, 64);
        for j in 1..=3u8 {
            let Some((phi, closest)) = brute_sdt(&mask, j) else { continue };
            let start = Instant::now();
            let field = signed_distance_transform(&mask, j, 8.0).expect("non-empty");
            t += start.elapsed();
            fields += 1;
            for y in 0..64 {
                for x in 0..64 {
                    if field.phi_at(x, y) != phi.get(x, y) || !closest[y * 64 + x].contains(&field.closest_at(x, y)) {
                        mismatches += 1;
                    }
                }
            }
        }
    }
    outcome(
        mismatches == 0 && t < Duration::from_secs(5),
        format!("200 masks, {fields} fields, {mismatches} mismatching pixels, {:.2} s", t.as_secs_f64()),
    )
}

fn max_abs(a: &RigidTransform, b: &RigidTransform) -> f64 {
    (a.rotation - b.rotation).abs().max().max((a.translation - b.translation).abs().max())
}

fn se3_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let twist = |rng: &mut ChaCha8Rng| {
        let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let omega = axis.normalize() * rng.random_range(0.0..=std::f64::consts::PI);
        let nu = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        Twist::new(omega, nu)
    };
    let id = RigidTransform::identity();
    for _ in 0..10_000 {
        let (x, y, z) = (twist(&mut rng), twist(&mut rng), twist(&mut rng));
        let (a, b, c) = (exp_twist(&x), exp_twist(&y), exp_twist(&z));
        let neg = exp_twist(&Twist::new(-x.omega, -x.nu));
        let half = exp_twist(&Twist::new(x.omega * 0.5, x.nu * 0.5));
        let errs = [
            max_abs(&a.compose(&neg), &id),
            max_abs(&neg, &a.inverse()),
            max_abs(&a.compose(&a.inverse()), &id),
            max_abs(&a.inverse().compose(&a), &id),
            max_abs(&a.compose(&b).compose(&c), &a.compose(&b.compose(&c))),
            max_abs(&a.compose(&b).inverse(), &b.inverse().compose(&a.inverse())),
            max_abs(&half.compose(&half), &a),
            a.orthonormality_defect(),
            (a.rotation.determinant() - 1.0).abs(),
            if x.omega.norm() < std::f64::consts::PI - 1e-6 {
                (log_rotation(&a.rotation) - x.omega).norm()
            } else {
                0.0
            },
        ];
        worst = errs.iter().copied().fold(worst, f64::max);
    }
    outcome(worst < 1e-9, format!("10000 twist triples, worst deviation {worst:.2e}"))
}

fn heaviside_dirac() -> Outcome {
    let s = 1.2;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..=16_000 {
        let phi = -8.0 + i as f64 * 1e-3;
        let fd = -(smoothed_heaviside(phi + h, s) - smoothed_heaviside(phi - h, s)) / (2.0 * h);
        worst = worst.max((smoothed_dirac(phi, s) - fd).abs());
    }
    outcome(worst < 1e-6, format!("16001 samples on [-8, 8], worst |δ + dH/dΦ| {worst:.2e}"))
}

fn rasterizer_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let k = cam64();
    let (mut bad_scenes, mut covered) = (0, 0);
    for _ in 0..100 {
        let objects = random_scene(&mut rng);
        let meshes: Vec<&TriangleMesh> = objects.iter().map(|(m, _)| m).collect();
        let poses: Vec<RigidTransform> = objects.iter().map(|(_, p)| *p).collect();
        let (mask, depth) = render_scene(&meshes, &poses, &k, Z_NEAR, Z_FAR).expect("frustum");
        let (bm, bd, br) = brute_render(&meshes, &poses, &k);
        let mut same = mask.data() == bm.data() && depth.data() == bd.data();
        for (j, (m, p)) in objects.iter().enumerate() {
            let rev = render_reverse_depth(m, p, &k, Z_NEAR, Z_FAR).expect("frustum");
            same &= rev.data() == br[j].data();
        }
        bad_scenes += usize::from(!same);
        covered += mask.data().iter().filter(|&&v| v != 0).count();
    }
    outcome(
        bad_scenes == 0,
        format!("100 scenes, {bad_scenes} differing, {covered} covered pixels"),
    )
}

fn track(dir: &std::path::Path, settings: OptimizationSettings) -> SequenceReport {
    let seq = load_sequence(dir).expect("sequence");
    let meshes = seq.load_meshes().expect("meshes");
    let pairs: Vec<MeshPair> = meshes.iter().cloned().map(|m| MeshPair::new(m).expect("mesh")).collect();
    let refs: Vec<&TriangleMesh> = meshes.iter().collect();
    let mut tracker = TrackerState::new(pairs, seq.k, settings).expect("tracker");
    rbot_protocol(&mut tracker, &seq, &refs, Thresholds::default()).expect("protocol")
}

fn synthetic_tracking() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().expect("tempdir");
    let k = cam320();
    let cube = MeshPair::new(demo_cube()).expect("mesh");
    let trajectory = TrajectorySpec::tumble(TRACKING_DISTANCE, 100, 10, 3.0, 0);
    let background = procedural_background(320, 256, 0);
    generate_sequence(
        &cube,
        &trajectory,
        &SequenceVariant::regular(),
        &[background],
        &k,
        &SequenceConfig::default(),
        dir.path(),
    )
    .expect("sequence");
    let report = track(dir.path(), OptimizationSettings::default());
    let t = start.elapsed();
    let resets = report.objects[0].resets;
    let floor = 90f64.max(TRACKING_BASELINE - 5.0);
    outcome(
        report.success_rate >= floor && resets <= 2 && t < Duration::from_secs(60),
        format!(
            "success {:.1}% (baseline {TRACKING_BASELINE:.1}%, floor {floor:.1}%), {resets} resets, {:.1} s",
            report.success_rate,
            t.as_secs_f64()
        ),
    )
}

fn convergence_basin() -> Outcome {
    let k = cam320();
    let cube = MeshPair::new(demo_cube()).expect("mesh");
    let r = RigidTransform::from_axis_angle(&Vec3::new(1.0, 1.0, 0.3), 1.1);
    let gt = RigidTransform::new(r.rotation, Vec3::new(0.01, -0.01, TRACKING_DISTANCE));
    let frame = render_flat(&[&cube.full], &[gt], &k, [60, 170, 80]);
    let settings = OptimizationSettings::default();
    let mut tracker = TrackerState::new(vec![cube.clone()], k, settings.clone()).expect("tracker");
    tracker.initialize(&frame, &[gt]).expect("initialize");
    let o = &tracker.objects[0];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let unit = |rng: &mut ChaCha8Rng| loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if v.norm() > 0.1 && v.norm() <= 1.0 {
            return v.normalize();
        }
    };
    let distance = gt.translation.norm();
    let mut recovered = 0;
    for _ in 0..100 {
        let tilt = RigidTransform::from_axis_angle(&unit(&mut rng), rng.random_range(0.0..5f64.to_radians()));
        let shift = unit(&mut rng) * rng.random_range(0.0..0.05 * distance);
        let start = RigidTransform::new(tilt.rotation * gt.rotation, gt.translation + shift);
        let input = ObjectInput {
            meshes: &o.meshes,
            model: &o.model,
            active: &o.active,
            pose: start,
        };
        let Ok(Ok(pose)) = optimize(&frame, &[input], &k, &settings).map(|mut v| v.remove(0)) else {
            continue;
        };
        let rot = rotation_error(&pose.rotation, &gt.rotation);
        let trans = (pose.translation - gt.translation).norm();
        recovered += usize::from(rot < 1f64.to_radians() && trans < 0.005 * distance);
    }
    outcome(
        recovered >= 80,
        format!("{recovered}/100 perturbations recovered with iterations {:?}", settings.pyramid_iterations),
    )
}

fn occlusion_handling() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let k = cam320();
    let cube = demo_cube();
    let d = cube.diameter;
    let cube = MeshPair::new(cube).expect("mesh");
    let trajectory = TrajectorySpec::tumble(TRACKING_DISTANCE, 100, 10, 3.0, 0);
    let green = Vec3::new(0.3, 0.75, 0.3);
    let mut block = TriangleMesh::cube(0.25 * d, 4, [green; 6]);
    mottle(&mut block, 0);
    let occluder = Occluder {
        meshes: MeshPair::new(block).expect("mesh"),
        trajectory: TrajectorySpec::orbit(&trajectory, 0.9 * d, 40, 100),
    };
    let summary = generate_sequence(
        &cube,
        &trajectory,
        &SequenceVariant::occlusion(occluder, DEFAULT_NOISE_SIGMA),
        &[procedural_background(320, 256, 0)],
        &k,
        &SequenceConfig::default(),
        dir.path(),
    )
    .expect("sequence");
    let occluded = summary.occluded_pixels.iter().filter(|&&n| n > 0).count();
    let strip = |r: &SequenceReport| -> Vec<_> { r.frames.iter().map(|f| f.objects.clone()).collect() };
    let run = |handling: bool| {
        let settings = OptimizationSettings {
            occlusion_handling: handling,
            ..OptimizationSettings::default()
        };
        let a = track(dir.path(), settings.clone());
        let b = track(dir.path(), settings);
        (a.objects[0].success_rate, strip(&a) == strip(&b))
    };
    let (on, on_repeat) = run(true);
    let (off, off_repeat) = run(false);
    outcome(
        on > off && on_repeat && off_repeat,
        format!(
            "occluded object success {on:.1}% with the check, {off:.1}% without; {occluded} frames occluded; deterministic {}",
            on_repeat && off_repeat
        ),
    )
}

fn rodrigues(axis: &Vec3, angle: f64) -> Matrix3<f64> {
    let a = axis.normalize();
    let k = Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0);
    Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos())
}

fn metric_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let lambda_max = 0.2;
    let samples = 10_000usize;
    let cell = lambda_max / samples as f64;
    let mut auc_worst: f64 = 0.0;
    for _ in 0..200 {
        let d = rng.random_range(0.05..0.5);
        let n = rng.random_range(1..80);
        // Errors on the λ grid so the midpoint sweep is exact.
        let errors: Vec<f64> = (0..n).map(|_| rng.random_range(0..(samples * 3 / 2)) as f64 * cell * d).collect();
        let mut area = 0.0;
        for c in 0..samples {
            let lambda = (c as f64 + 0.5) * cell;
            let ok = errors.iter().filter(|&&e| e / d <= lambda).count();
            area += 100.0 * ok as f64 / n as f64 * cell;
        }
        auc_worst = auc_worst.max((auc_score(&errors, d, lambda_max) - area).abs());
    }
    let mut rot_worst: f64 = 0.0;
    for _ in 0..10_000 {
        let v = |rng: &mut ChaCha8Rng| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let gt = rodrigues(&v(&mut rng), rng.random_range(0.0..std::f64::consts::PI));
        let angle = rng.random_range(0.0..std::f64::consts::PI);
        let r = gt * rodrigues(&v(&mut rng), angle);
        rot_worst = rot_worst.max((rotation_error(&r, &gt) - angle).abs());
    }
    outcome(
        auc_worst < 1e-6 && rot_worst < 1e-6,
        format!("auc vs 10^4-point sweep {auc_worst:.2e}, rotation error vs axis-angle {rot_worst:.2e}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("jacobian correctness", jacobian_correctness),
        ("sdt oracle equivalence", sdt_oracle),
        ("se3 invariants", se3_invariants),
        ("heaviside/dirac consistency", heaviside_dirac),
        ("rasterizer oracle equivalence", rasterizer_oracle),
        ("synthetic tracking success", synthetic_tracking),
        ("convergence basin", convergence_basin),
        ("occlusion handling", occlusion_handling),
        ("metric correctness", metric_correctness),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        failed += usize::from(!o.pass);
        println!("criterion {}: {} {name}: {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
