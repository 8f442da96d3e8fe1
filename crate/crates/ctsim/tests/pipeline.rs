use ldm_ctsim::{
    corrupt_metal, disk_phantom, fbp, fbp_linear, insert_metal, li_correct, phantom_rng, project, psnr, radon_forward,
    random_phantom, simulate, ssim, synthesize_dataset, PhantomImage, ScanGeometry, SynthConfig,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn range(a: &Array2<f64>) -> f64 {
    a.fold(f64::NEG_INFINITY, |m, &v| m.max(v)) - a.fold(f64::INFINITY, |m, &v| m.min(v))
}

#[test]
fn disk_chord_through_centre() {
    let n = 64;
    let r = 20.0;
    let geom = ScanGeometry::for_image(n);
    let s = project(disk_phantom(n, r, 1.0).pixels.view(), &geom).unwrap();
    let mid = geom.n_detectors / 2;
    for v in 0..geom.n_views {
        let got = s[[v, mid]];
        assert!((got - 2.0 * r).abs() <= 0.02 * 2.0 * r, "view {v}: {got}");
    }
}

#[test]
fn projection_is_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let img = Array2::from_shape_fn((24, 24), |_| rng.random_range(0.0..1.0));
    let geom = ScanGeometry::for_image(24);
    let a = project(img.view(), &geom).unwrap();
    let b = project(img.mapv(|v| 2.0 * v).view(), &geom).unwrap();
    assert_eq!(a.mapv(|v| 2.0 * v), b);
}

#[test]
fn quarter_turn_permutes_views() {
    let n = 32;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let img = Array2::from_shape_fn((n, n), |_| rng.random_range(0.0..1.0));
    // counter-clockwise rotation by 90 degrees
    let rot = Array2::from_shape_fn((n, n), |(i, j)| img[[j, n - 1 - i]]);
    let geom = ScanGeometry::for_image(n);
    let a = project(img.view(), &geom).unwrap();
    let b = project(rot.view(), &geom).unwrap();
    let q = geom.n_views / 2;
    let nd = geom.n_detectors;
    for v in 0..geom.n_views {
        for k in 0..nd {
            let want = if v >= q { a[[v - q, k]] } else { a[[v + q, nd - 1 - k]] };
            assert!(
                (b[[v, k]] - want).abs() <= 1e-3,
                "view {v} bin {k}: {} vs {want}",
                b[[v, k]]
            );
        }
    }
}

#[test]
fn fbp_round_trip_of_disk() {
    let n = 64;
    let phantom = disk_phantom(n, 20.0, 1.0);
    let geom = ScanGeometry::for_image(n);
    let rec = fbp(project(phantom.pixels.view(), &geom).unwrap().view(), &geom, n).unwrap();
    let p = psnr(rec.view(), phantom.pixels.view(), range(&phantom.pixels)).unwrap();
    assert!(p >= 25.0, "round-trip PSNR {p:.2} dB");
}

#[test]
fn fbp_is_linear_before_clamp() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let geom = ScanGeometry::for_image(16);
    let s = Array2::from_shape_fn((geom.n_views, geom.n_detectors), |_| rng.random_range(-1.0..1.0));
    let a = fbp_linear(s.view(), &geom, 16).unwrap();
    let b = fbp_linear(s.mapv(|v| 3.0 * v).view(), &geom, 16).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((3.0 * x - y).abs() <= 1e-12 * y.abs().max(1.0));
    }
}

fn metal_disk() -> PhantomImage {
    let mut p = disk_phantom(64, 26.0, 0.02);
    insert_metal(&mut p, 8.0, -5.0, 2.5, 0.15);
    insert_metal(&mut p, -10.0, 4.0, 2.0, 0.15);
    p
}

#[test]
fn corruption_and_li_ordering_on_disk() {
    let geom = ScanGeometry::for_image(64);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let sim = simulate(metal_disk(), &geom, 1.0, 0.02, &mut rng).unwrap();
    let peak = 1.0;
    let norm = |a: &Array2<f64>| a.mapv(|v| (v / 0.05).clamp(0.0, 1.0));
    let truth = norm(&sim.phantom.pixels);
    let clean = psnr(norm(&sim.uncorrupted).view(), truth.view(), peak).unwrap();
    let corrupt = psnr(norm(&sim.artifact).view(), truth.view(), peak).unwrap();
    assert!(corrupt < clean, "corrupted {corrupt:.2} vs clean {clean:.2}");
    let li = psnr(
        norm(&sim.li_image(&geom).unwrap()).view(),
        norm(&sim.clean).view(),
        peak,
    )
    .unwrap();
    let base = psnr(norm(&sim.artifact).view(), norm(&sim.clean).view(), peak).unwrap();
    assert!(li > base, "LI {li:.2} vs corrupted {base:.2}");
}

#[test]
fn li_leaves_untraced_bins_alone() {
    let geom = ScanGeometry::for_image(64);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s = radon_forward(&random_phantom(64, &mut rng), &geom).unwrap();
    let c = corrupt_metal(&s, 1.0, 0.02, &mut rng).unwrap();
    let li = li_correct(&c);
    for ((a, b), &t) in c.data.iter().zip(&li.data).zip(&c.metal_trace) {
        if !t {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
    assert_eq!(
        li_correct(&radon_forward(&disk_phantom(32, 8.0, 1.0), &ScanGeometry::for_image(32)).unwrap()).data,
        radon_forward(&disk_phantom(32, 8.0, 1.0), &ScanGeometry::for_image(32))
            .unwrap()
            .data
    );
}

#[test]
fn li_beats_corruption_on_most_phantoms() {
    let geom = ScanGeometry::for_image(64);
    let cfg = SynthConfig::default();
    let mut wins = 0;
    for i in 0..32 {
        let mut rng = phantom_rng(99, i);
        let phantom = random_phantom(64, &mut rng);
        let sim = simulate(phantom, &geom, cfg.severity, cfg.noise, &mut rng).unwrap();
        let clean = cfg.normalize(&sim.clean);
        let li = psnr(cfg.normalize(&sim.li_image(&geom).unwrap()).view(), clean.view(), 1.0).unwrap();
        let art = psnr(cfg.normalize(&sim.artifact).view(), clean.view(), 1.0).unwrap();
        if li > art {
            wins += 1;
        }
    }
    assert!(wins * 10 >= 32 * 9, "LI won {wins}/32");
}

#[test]
fn synthesis_is_seeded() {
    let cfg = SynthConfig {
        n_pairs: 6,
        n_test: 2,
        size: 32,
        seed: 7,
        ..SynthConfig::default()
    };
    let a = synthesize_dataset(&cfg).unwrap();
    let b = synthesize_dataset(&cfg).unwrap();
    assert_eq!(a, b);
    let c = synthesize_dataset(&SynthConfig { seed: 8, ..cfg.clone() }).unwrap();
    assert_ne!(a.train[0].artifact, c.train[0].artifact);

    assert_eq!(a.artifact_pool.len() + a.clean_pool.len(), 6);
    assert!(a.artifact_pool.iter().all(|i| !a.clean_pool.contains(i)));
    for p in a.train.iter().chain(&a.test) {
        assert!(psnr(p.artifact.view(), p.clean.view(), 1.0).unwrap() < f64::INFINITY);
    }
}

#[test]
fn zero_severity_reproduces_uncorrupted_fbp() {
    let geom = ScanGeometry::for_image(32);
    let mut rng = phantom_rng(3, 0);
    let phantom = random_phantom(32, &mut rng);
    let sim = simulate(phantom, &geom, 0.0, 0.02, &mut rng).unwrap();
    assert_eq!(sim.artifact, sim.uncorrupted);
    assert_eq!(sim.corrupted, sim.sinogram);
}

/// Textbook SSIM: explicit window copies, two-pass statistics.
fn reference_ssim(a: &Array2<f64>, b: &Array2<f64>, peak: f64) -> f64 {
    let (h, w) = a.dim();
    let c1 = (0.01 * peak).powi(2);
    let c2 = (0.03 * peak).powi(2);
    let mut vals = Vec::new();
    for i in 0..=h - 8 {
        for j in 0..=w - 8 {
            let xa: Vec<f64> = (0..64).map(|k| a[[i + k / 8, j + k % 8]]).collect();
            let xb: Vec<f64> = (0..64).map(|k| b[[i + k / 8, j + k % 8]]).collect();
            let ma = xa.iter().sum::<f64>() / 64.0;
            let mb = xb.iter().sum::<f64>() / 64.0;
            let va = xa.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / 64.0;
            let vb = xb.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / 64.0;
            let cov = xa.iter().zip(&xb).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / 64.0;
            vals.push((2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2)));
        }
    }
    vals.iter().sum::<f64>() / vals.len() as f64
}

#[test]
fn metrics_match_direct_formulas() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..20 {
        let a: Array2<f64> = Array2::from_shape_fn((20, 17), |_| rng.random_range(0.0..1.0));
        let b: Array2<f64> = Array2::from_shape_fn((20, 17), |_| rng.random_range(0.0..1.0));
        let mse: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64;
        let p = psnr(a.view(), b.view(), 1.0).unwrap();
        assert!((p - 10.0 * (1.0 / mse).log10()).abs() < 1e-9);
        assert_eq!(p, psnr(b.view(), a.view(), 1.0).unwrap());
        let s = ssim(a.view(), b.view(), 1.0).unwrap();
        assert!((s - reference_ssim(&a, &b, 1.0)).abs() < 1e-6);
        assert_eq!(s, ssim(b.view(), a.view(), 1.0).unwrap());
        assert!((-1.0..=1.0).contains(&s));
    }
}
