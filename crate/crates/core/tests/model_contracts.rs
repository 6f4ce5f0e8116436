mod support;

use prif_core::dataset::{generate_ray_dataset, RayDataset, RayRecord};
use prif_core::eval::{benchmark_render, RenderTarget};
use prif_core::geometry::{fibonacci_camera_rig, Camera, Scene, TriangleMesh};
use prif_core::model::{
    auto_decode, displacement_position_gradients, extract_points, predict_records, prif_forward,
    prif_loss, train, train_color, AutoDecodeConfig, ExtractOptions, PrifConfig, PrifModel,
    TrainConfig,
};
use prif_core::nn::Matrix;
use prif_core::rays::{encode_ray, EncodingMode, Ray};
use prif_core::rng::{normal, seeded, Rng};
use prif_core::Vec3;
use support::models::{varied_model, varied_single};

fn scene() -> Scene {
    let (mesh, _) = TriangleMesh::icosphere(2, 1.0)
        .with_uniform_color([0.7, 0.3, 0.1])
        .normalized(0.9)
        .unwrap();
    Scene::new(mesh).unwrap()
}

fn dataset(mode: EncodingMode) -> RayDataset {
    let rig = fibonacci_camera_rig(3, 2.5, 50f64.to_radians(), (16, 16));
    generate_ray_dataset(&scene(), &rig, mode, 0).unwrap()
}

fn quick() -> TrainConfig {
    TrainConfig {
        epochs: 2,
        batch_size: 128,
        lr_start: 1e-3,
        lr_end: 1e-5,
        ..TrainConfig::default()
    }
}

#[test]
fn one_query_per_ray() {
    for mode in EncodingMode::ALL {
        let m = varied_single(mode, 1);
        let ds = dataset(mode);
        m.reset_query_count();
        predict_records(&m, &ds.records).unwrap();
        assert_eq!(m.query_count(), ds.len() as u64);
        m.reset_query_count();
        let delta = (mode == EncodingMode::PerpFoot).then_some(5.0);
        extract_points(
            &m,
            &ds.records,
            &ExtractOptions {
                mask_threshold: 0.5,
                delta,
            },
        )
        .unwrap();
        assert_eq!(m.query_count(), ds.len() as u64);
        for res in [1, 7, 32] {
            let cam = Camera::look_at(Vec3::new(0.0, 0.0, 2.5), Vec3::ZERO, 0.8, res, res);
            let (rep, depth) = benchmark_render(&RenderTarget::Prif(&m), &cam).unwrap();
            assert_eq!(rep.queries, (res * res) as u64);
            assert_eq!(rep.rays, rep.queries);
            assert_eq!(depth.depth.len(), (res * res) as usize);
        }
    }
}

#[test]
fn shifted_rays_give_identical_predictions() {
    let mut rng = seeded(2);
    for mode in [EncodingMode::PerpFoot, EncodingMode::Plucker] {
        let m = varied_single(mode, 3);
        let mut a = Vec::new();
        let mut b = Vec::new();
        for _ in 0..2_000 {
            let p = Vec3::new(normal(&mut rng), normal(&mut rng), normal(&mut rng));
            let d = Vec3::new(normal(&mut rng), normal(&mut rng), normal(&mut rng)).normalized();
            let lambda = rng.random_range(-10.0..10.0);
            let ea = encode_ray(&Ray::new(p, d), mode).unwrap();
            let eb = encode_ray(&Ray::new(p + d * lambda, d), mode).unwrap();
            assert!((ea.anchor - eb.anchor).norm() < 1e-9);
            a.push(ea.to_f32());
            b.push(eb.to_f32());
        }
        let pa = prif_forward(&m, mode, &Matrix::from_rows(&a), None).unwrap();
        let pb = prif_forward(&m, mode, &Matrix::from_rows(&b), None).unwrap();
        assert_eq!(
            pa.s.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            pb.s.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(pa.a, pb.a);
    }
}

#[test]
fn loss_is_sum_of_terms_and_ignores_background_in_displacement() {
    let m = varied_single(EncodingMode::PerpFoot, 4);
    let ds = dataset(EncodingMode::PerpFoot);
    let pred = predict_records(&m, &ds.records).unwrap();
    let l = prif_loss(&pred, &ds.records);
    assert_eq!(l.total, l.a + l.s);
    let fg: Vec<RayRecord> = ds.records.iter().copied().filter(|r| r.a_gt).collect();
    let fg_pred = predict_records(&m, &fg).unwrap();
    assert!(fg.len() < ds.len());
    let lf = prif_loss(&fg_pred, &fg);
    assert!((lf.s - l.s).abs() <= 1e-12 * l.s.max(1.0));
}

#[test]
fn position_gradient_matches_finite_differences() {
    let m = varied_single(EncodingMode::PerpFoot, 5);
    let mut rng = seeded(6);
    let mut records = Vec::new();
    for _ in 0..50 {
        let p = Vec3::new(normal(&mut rng), normal(&mut rng), normal(&mut rng)).normalized() * 2.0;
        let d = (Vec3::new(normal(&mut rng), normal(&mut rng), normal(&mut rng)) * 0.3 - p)
            .normalized();
        records
            .push(RayRecord::from_ray(&Ray::new(p, d), EncodingMode::PerpFoot, None, 0).unwrap());
    }
    let analytic = displacement_position_gradients(&m, &records).unwrap();
    let s_at = |p: Vec3, d: Vec3| -> f64 {
        let e = encode_ray(&Ray::new(p, d), EncodingMode::PerpFoot)
            .unwrap()
            .to_f32();
        prif_forward(&m, EncodingMode::PerpFoot, &Matrix::from_rows(&[e]), None)
            .unwrap()
            .s[0] as f64
    };
    let fd = |p: Vec3, d: Vec3, h: f64| {
        Vec3::new(
            (s_at(p + Vec3::X * h, d) - s_at(p - Vec3::X * h, d)) / (2.0 * h),
            (s_at(p + Vec3::Y * h, d) - s_at(p - Vec3::Y * h, d)) / (2.0 * h),
            (s_at(p + Vec3::Z * h, d) - s_at(p - Vec3::Z * h, d)) / (2.0 * h),
        )
    };
    let mut checked = 0;
    for (r, g) in records.iter().zip(&analytic) {
        let (p, d) = (r.origin(), r.dir());
        let (f1, f2) = (fd(p, d, 2e-3), fd(p, d, 1e-3));
        let scale = g.norm().max(f2.norm());
        // A ReLU kink inside the stencil shows up as step-size dependence.
        if scale < 1e-3 || (f1 - f2).norm() > 1e-3 * scale {
            continue;
        }
        assert!(
            (f2 - *g).norm() <= 1e-2 * scale,
            "analytic {g:?} vs fd {f2:?}"
        );
        checked += 1;
    }
    assert!(checked > 40);
}

#[test]
fn auto_decode_and_color_training_freeze_geometry() {
    let mut cfg = PrifConfig::single(EncodingMode::PerpFoot, 3, 16);
    cfg.latent_dim = 8;
    cfg.num_shapes = 2;
    cfg.color = true;
    cfg.separate_mask = true;
    let mut m = varied_model(cfg, 7);
    let geometry = m.geometry_hash();
    let latents = m.latents().to_vec();
    let ds = dataset(EncodingMode::PerpFoot);
    let z = auto_decode(
        &m,
        &ds.records,
        &[0.0; 8],
        &AutoDecodeConfig {
            steps: 20,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(z.iter().any(|&v| v != 0.0));
    assert_eq!(m.geometry_hash(), geometry);
    let color_before = m.color_net().unwrap().params().to_vec();
    train_color(&mut m, &ds, &quick()).unwrap();
    assert_eq!(m.geometry_hash(), geometry);
    assert_eq!(m.latents(), &latents[..]);
    assert_ne!(m.color_net().unwrap().params(), &color_before[..]);
}

fn trained(seed: u64) -> PrifModel {
    let mut m = PrifModel::new(PrifConfig::single(EncodingMode::PerpFoot, 3, 32), 9).unwrap();
    train(
        &mut m,
        &dataset(EncodingMode::PerpFoot),
        &TrainConfig { seed, ..quick() },
    )
    .unwrap();
    m
}

#[test]
fn training_is_reproducible_and_thread_independent() {
    let a = trained(1);
    let b = trained(1);
    assert_eq!(a.trunk().param_hash(), b.trunk().param_hash());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let c = pool.install(|| trained(1));
    assert_eq!(a.trunk().params(), c.trunk().params());
    let d = trained(2);
    assert_ne!(a.trunk().param_hash(), d.trunk().param_hash());
}
