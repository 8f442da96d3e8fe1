//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use ldm_cli::{cmd_recover, RunConfig};
use ldm_ctsim::{
    disk_phantom, fbp, phantom_rng, project, psnr, random_phantom, simulate, synthesize_dataset, ScanGeometry,
    SynthConfig,
};
use ldm_dn::{
    composite_objective, current_patch_set, epoch_mean_sup, evaluate, to_array, train, GeometryConfig, Mode, Model,
    PenaltyReduction, StepBatch, TrainConfig, TrainOptions, WidthConfig,
};
use ldm_manifold::{
    build_patch_set, dirichlet_energy, gaussian_weights, solve_coordinates, DualVariable, GraphOperators, KernelConfig,
    PatchSource,
};
use ldm_tensor::{conv2d, frobenius_sq, gradcheck, Tensor, TensorError};
use nalgebra::DMatrix;
use ndarray::{s, Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn frob(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn uniform(rng: &mut ChaCha8Rng, m: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((m, d), |_| rng.random_range(0.0..1.0))
}

/// Patch set of `m` points in 128 dimensions: an 8 x 8m image cut into 8x8
/// patches, each with a 64-channel code.
fn random_patch_set(rng: &mut ChaCha8Rng, m: usize) -> Array2<f64> {
    let image = Array2::from_shape_fn((8, 8 * m), |_| rng.random_range(0.0..1.0));
    let code = Array3::from_shape_fn((64, 1, m), |_| rng.random_range(-1.0..1.0));
    let src = PatchSource {
        image: image.view(),
        code: code.view(),
    };
    build_patch_set(&[src], &[], 8).expect("patch set").points
}

fn laplacian_suite() -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut row, mut asym, mut quad) = (0.0f64, 0usize, f64::INFINITY);
    for _ in 0..50 {
        let m = rng.random_range(2..=200);
        let p = random_patch_set(&mut rng, m);
        assert_eq!(p.dim(), (m, 128));
        let ops = gaussian_weights(p.view(), &KernelConfig::default()).expect("weights");
        let w = ops.weights_dense();
        let l = ops.laplacian();
        for i in 0..m {
            let deg: f64 = w.row(i).sum();
            row = row.max(l.row(i).sum().abs() / deg);
            asym += (0..m).filter(|&j| w[[i, j]].to_bits() != w[[j, i]].to_bits()).count();
        }
        for _ in 0..20 {
            let v = Array1::from_shape_fn(m, |_| rng.random_range(-1.0..1.0));
            quad = quad.min(v.dot(&l.dot(&v)));
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    verdict(
        row <= 1e-10 && asym == 0 && quad >= -1e-9 && secs < 10.0,
        format!("max |row sum|/degree {row:.1e}, asymmetric entries {asym}, min v'Lv {quad:.2e}, {secs:.2} s"),
    )
}

/// Dense `(L + mu W) U = mu W V` by LU.
fn dense_solve(w: &Array2<f64>, v: &Array2<f64>, mu: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (m, d) = v.dim();
    let wm = DMatrix::from_fn(m, m, |i, j| w[[i, j]]);
    let deg = DMatrix::from_diagonal(&wm.column_sum());
    let a = &deg - &wm + &wm * mu;
    let b = &wm * DMatrix::from_fn(m, d, |i, j| v[[i, j]]) * mu;
    (a, b)
}

fn solver_correctness() -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut err, mut res) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let m = rng.random_range(2..=50);
        let d = rng.random_range(1..=16);
        let p = uniform(&mut rng, m, d);
        let ops = gaussian_weights(p.view(), &KernelConfig::default()).expect("weights");
        let v = uniform(&mut rng, m, d);
        let mu = 0.6;
        let (u, _) = solve_coordinates(&ops, &v, mu).expect("solve");
        let (a, b) = dense_solve(&ops.weights_dense(), &v, mu);
        let x = a.clone().lu().solve(&b).expect("nonsingular");
        let um = DMatrix::from_fn(m, d, |i, j| u[[i, j]]);
        for c in 0..d {
            err = err.max((um.column(c) - x.column(c)).norm() / x.column(c).norm());
            res = res.max((&a * um.column(c) - b.column(c)).norm() / b.column(c).norm());
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    verdict(
        err <= 1e-6 && res <= 1e-8 && secs < 30.0,
        format!("max relative error vs LU {err:.1e}, max column residual {res:.1e}, {secs:.2} s"),
    )
}

fn col_range(a: &Array2<f64>, c: usize) -> f64 {
    let col = a.column(c);
    col.fold(f64::NEG_INFINITY, |m, &v| m.max(v)) - col.fold(f64::INFINITY, |m, &v| m.min(v))
}

fn solver_limits() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut big, mut small, mut energy_ok) = (0.0f64, 0.0f64, true);
    let mut worst_ratio = 0.0f64;
    for _ in 0..10 {
        let m = rng.random_range(5..=50);
        let v = uniform(&mut rng, m, 6);
        let ops: GraphOperators = gaussian_weights(v.view(), &KernelConfig::default()).expect("weights");
        let (u, _) = solve_coordinates(&ops, &v, 1e6).expect("solve");
        big = big.max(frob(&(&u - &v)) / frob(&v));
        let (u, _) = solve_coordinates(&ops, &v, 1e-6).expect("solve");
        for c in 0..v.ncols() {
            small = small.max(col_range(&u, c) / col_range(&v, c));
        }
        let ev = dirichlet_energy(&v, &ops).expect("energy");
        for mu in [0.06, 0.6, 6.0] {
            let (u, _) = solve_coordinates(&ops, &v, mu).expect("solve");
            let eu = dirichlet_energy(&u, &ops).expect("energy");
            energy_ok &= eu <= ev;
            worst_ratio = worst_ratio.max(eu / ev);
        }
    }
    verdict(
        big <= 1e-3 && small <= 1e-3 && energy_ok,
        format!("mu=1e6 rel dist {big:.1e}, mu=1e-6 range ratio {small:.1e}, max E(U)/E(V) {worst_ratio:.3}"),
    )
}

fn conv_net_trials(rng: &mut ChaCha8Rng) -> (f64, usize, usize) {
    let (mut worst, mut compared, mut skipped) = (0.0f64, 0, 0);
    for _ in 0..100 {
        let x = Tensor::new(
            (0..2 * 64).map(|_| rng.random_range(-1.0..1.0)).collect(),
            &[2, 1, 8, 8],
        )
        .unwrap();
        let k1 = Tensor::parameter((0..4 * 9).map(|_| rng.random_range(-0.5..0.5)).collect(), &[4, 1, 3, 3]).unwrap();
        let k2 = Tensor::parameter(
            (0..4 * 16).map(|_| rng.random_range(-0.5..0.5)).collect(),
            &[1, 4, 4, 4],
        )
        .unwrap();
        let params = [k1.clone(), k2.clone()];
        let all = gradcheck::all_entries(&params);
        let picks: Vec<(usize, usize)> = (0..6).map(|_| all[rng.random_range(0..all.len())]).collect();
        let loss = || {
            let h = conv2d(&x, &k1, 1, 1)?.leaky_relu(0.2);
            Ok(frobenius_sq(&conv2d(&h, &k2, 2, 1)?))
        };
        let r = gradcheck::check(&params, &picks, loss, &gradcheck::GradCheckConfig { h: 1e-3 }).unwrap();
        compared += r.entries.len();
        skipped += r.skipped_kinks;
        worst = worst.max(r.max_rel_err());
    }
    (worst, compared, skipped)
}

fn composite_trials(rng: &mut ChaCha8Rng) -> (f64, usize, usize) {
    let ds = synthesize_dataset(&SynthConfig {
        n_pairs: 4,
        n_test: 1,
        size: 32,
        seed: 5,
        ..SynthConfig::default()
    })
    .unwrap();
    let cfg = TrainConfig {
        mode: Mode::LdmDnSup,
        geometry: GeometryConfig::new(16, 16, 4),
        widths: WidthConfig { base: 1, max: 2 },
        reduction: PenaltyReduction::Sum,
        ..TrainConfig::default()
    };
    let crop = |img: &Array2<f64>| {
        Tensor::new(img.slice(s![8..24, 8..24]).iter().copied().collect(), &[1, 1, 16, 16]).unwrap()
    };
    let batch = StepBatch {
        unpaired: Some((crop(&ds.train[0].artifact), crop(&ds.train[1].clean))),
        paired: Some((crop(&ds.train[2].artifact), crop(&ds.train[2].clean))),
    };
    let (mut worst, mut compared, mut skipped) = (0.0f64, 0, 0);
    for trial in 0..100u64 {
        let model = Model::for_training(&TrainConfig {
            seed: trial,
            ..cfg.clone()
        })
        .unwrap();
        let p = to_array(&current_patch_set(&model, &batch, &cfg).unwrap().unwrap()).unwrap();
        let dual = DualVariable {
            values: Array2::from_shape_fn(p.dim(), |_| rng.random_range(0.0..1.0)),
        };
        let u = p.mapv(|v| v + rng.random_range(-0.2..0.2));
        let params: Vec<Tensor> = model.net.store().iter().map(|(_, t)| t.clone()).collect();
        let all = gradcheck::all_entries(&params);
        let picks: Vec<(usize, usize)> = (0..4).map(|_| all[rng.random_range(0..all.len())]).collect();
        let j = || {
            composite_objective(&model, &batch, &cfg, &u, &dual).map_err(|e| TensorError::Invalid {
                op: "J",
                msg: e.to_string(),
            })
        };
        let r = gradcheck::check(&params, &picks, j, &gradcheck::GradCheckConfig { h: 1e-3 }).unwrap();
        compared += r.entries.len();
        skipped += r.skipped_kinks;
        worst = worst.max(r.max_rel_err());
    }
    (worst, compared, skipped)
}

fn gradient_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (a, na, sa) = conv_net_trials(&mut rng);
    let (b, nb, sb) = composite_trials(&mut rng);
    verdict(
        a < 1e-4 && b < 1e-4 && na >= 100 && nb >= 100,
        format!("2-conv net max rel err {a:.1e} ({na} entries, {sa} kinks skipped); composite J {b:.1e} ({nb} entries, {sb} kinks skipped)"),
    )
}

fn params(model: &Model) -> Vec<u64> {
    model
        .net
        .store()
        .iter()
        .flat_map(|(_, t)| t.to_vec())
        .map(f64::to_bits)
        .collect()
}

fn toy_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 1,
        mode: Mode::LdmDnSup,
        lambda: 0.6,
        mu_bar: 0.6,
        seed: 0,
        ..TrainConfig::default()
    }
}

fn mechanics_and_learning() -> (Verdict, Verdict) {
    let ds = synthesize_dataset(&SynthConfig::default()).unwrap();

    let t0 = Instant::now();
    let run = train(&ds, &toy_config(30), &TrainOptions::default()).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let first = &run.reports[..200.min(run.reports.len())];
    let in_unit = first
        .iter()
        .all(|r| matches!((r.dual_min, r.dual_max), (Some(lo), Some(hi)) if lo >= 0.0 && hi <= 1.0));
    let (lo, hi) = first.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
        (
            lo.min(r.dual_min.unwrap_or(f64::NAN)),
            hi.max(r.dual_max.unwrap_or(f64::NAN)),
        )
    });

    let opts = TrainOptions {
        max_steps: Some(200),
        ..TrainOptions::default()
    };
    let zero = TrainConfig {
        lambda: 0.0,
        ..toy_config(30)
    };
    let with = train(&ds, &zero, &opts).unwrap();
    let plain = train(&ds, &zero, &TrainOptions { plain: true, ..opts }).unwrap();
    let same_losses = with.reports.len() == 200
        && with.reports.len() == plain.reports.len()
        && with
            .reports
            .iter()
            .zip(&plain.reports)
            .all(|(a, b)| a.loss_total.to_bits() == b.loss_total.to_bits());
    let same_params = params(&with.model) == params(&plain.model);
    let mechanics = verdict(
        first.len() == 200 && in_unit && same_losses && same_params,
        format!(
            "dual range over {} steps [{lo:.3}, {hi:.3}]; lambda=0 vs manifold-free: losses identical {same_losses}, parameters identical {same_params}",
            first.len()
        ),
    );

    let sup = epoch_mean_sup(&run.reports);
    let (s1, sn) = (sup[0], *sup.last().unwrap());
    let eval = evaluate(&run.model, &ds.test).unwrap();
    let gain = eval.mean_psnr - eval.mean_baseline_psnr;
    let learning = verdict(
        sup.len() == 30 && sn <= 0.5 * s1 && gain >= 1.0 && secs < 900.0,
        format!(
            "sup L1 epoch 1 {s1:.4} -> epoch {} {sn:.4} ({:.0}%); test PSNR {:.2} dB vs baseline {:.2} dB ({gain:+.2} dB); {secs:.0} s",
            sup.len(),
            100.0 * sn / s1,
            eval.mean_psnr,
            eval.mean_baseline_psnr
        ),
    );
    (mechanics, learning)
}

fn ct_pipeline() -> Verdict {
    let n = 64;
    let geom = ScanGeometry::for_image(n);
    let disk = disk_phantom(n, 20.0, 1.0);
    let rec = fbp(project(disk.pixels.view(), &geom).unwrap().view(), &geom, n).unwrap();
    let round_trip = psnr(rec.view(), disk.pixels.view(), 1.0).unwrap();

    let cfg = SynthConfig::default();
    let mut wins = 0;
    for i in 0..32 {
        let mut rng = phantom_rng(cfg.seed, i);
        let sim = simulate(random_phantom(n, &mut rng), &geom, cfg.severity, cfg.noise, &mut rng).unwrap();
        let clean = cfg.normalize(&sim.clean);
        let li = psnr(cfg.normalize(&sim.li_image(&geom).unwrap()).view(), clean.view(), 1.0).unwrap();
        let corrupt = psnr(cfg.normalize(&sim.artifact).view(), clean.view(), 1.0).unwrap();
        wins += usize::from(li > corrupt);
    }
    verdict(
        geom.n_views == 180 && round_trip >= 25.0 && wins * 10 >= 32 * 9,
        format!(
            "disk round trip {round_trip:.2} dB at {} views; LI beats corrupted on {wins}/32",
            geom.n_views
        ),
    )
}

fn recovery(root: &Path) -> Verdict {
    let mut cfg = RunConfig::default();
    cfg.paths.output_root = root.to_string_lossy().into_owned();
    cfg.recover.size = 64;
    cfg.recover.known = 0.1;
    cfg.recover.max_iter = 50;
    let r = cmd_recover(&cfg).unwrap();
    let (before, after) = r.psnr.unwrap();
    verdict(
        after - before >= 3.0 && r.recovery.iterations <= 50,
        format!(
            "PSNR {before:.2} dB (mean fill) -> {after:.2} dB ({:+.2} dB) in {} iterations",
            after - before,
            r.recovery.iterations
        ),
    )
}

fn ldmdn(root: &Path, args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_ldmdn"))
        .args(args)
        .env("LDMDN_OUTPUT_ROOT", root)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn determinism(root: &Path) -> Verdict {
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let dir = root.join(run);
        let ok = ldmdn(
            &dir,
            &["synth", "--pairs", "6", "--test", "2", "--size", "32", "--seed", "11"],
        ) && ldmdn(&dir, &["train", "--s", "4", "--epochs", "2", "--seed", "11"])
            && ldmdn(&dir, &["eval"]);
        let read = |p: &str| fs::read(dir.join(p)).unwrap_or_default();
        outputs.push((ok, read("run/metrics.csv"), read("run/eval.csv")));
    }
    let (a, b) = (&outputs[0], &outputs[1]);
    let ran = a.0 && b.0 && !a.1.is_empty() && !a.2.is_empty();
    verdict(
        ran && a.1 == b.1 && a.2 == b.2,
        format!(
            "commands succeeded {ran}; metrics.csv identical {} ({} bytes); eval.csv identical {}",
            a.1 == b.1,
            a.1.len(),
            a.2 == b.2
        ),
    )
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().unwrap();
    let mut results: Vec<(u8, &str, Verdict)> = Vec::new();
    let mut report = |id: u8, name: &'static str, v: Verdict| {
        println!(
            "criterion {id} {:<22} {}  {}",
            name,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        results.push((id, name, v));
    };
    report(1, "laplacian-suite", laplacian_suite());
    report(2, "solver-correctness", solver_correctness());
    report(3, "solver-limits", solver_limits());
    report(4, "gradient-oracle", gradient_oracle());
    let (mechanics, learning) = mechanics_and_learning();
    report(5, "training-mechanics", mechanics);
    report(6, "learning-signal", learning);
    report(7, "ct-pipeline", ct_pipeline());
    report(8, "ldmm-recovery", recovery(&tmp.path().join("recover")));
    report(9, "determinism", determinism(&tmp.path().join("det")));
    let failed: Vec<u8> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
