//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any of them fails.
//!
//! Set `HRAN_SET5_DIR` to a directory of Set5 HR images to run the bicubic
//! baseline against the published numbers; otherwise the closed-form PSNR
//! check stands in for it.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use common::{bicubic_oracle, conv_oracle, dot, rand_tensor, randomize, rel_err, zero_param};
use hran_core::data::{
    bicubic_resize, bicubic_upscale, degrade, synthetic_image, to_float, to_u8, Dataset, ImageU8, Rng,
};
use hran_core::exec::with_threads;
use hran_core::metrics::{evaluate_with, psnr_planes, psnr_y, self_ensemble};
use hran_core::model::{
    init_params, Checkpoint, FusionMode, Hrab, Hran, ModelConfig, ParamSpec, ParamStore, ResidualGroup,
};
use hran_core::tensor::{conv2d, global_avg_pool, pixel_shuffle, ConvSpec};
use hran_core::train::{train_loop, TrainConfig, TrainOutcome, Trainer, CHECKPOINT_FILE, LOSS_LOG_FILE};
use hran_core::Tensor4;

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(start: Instant, limit: Duration, detail: String) -> Outcome {
    let t = start.elapsed();
    ensure(
        t < limit,
        format!("{detail}; {:.1}s (limit {}s)", t.as_secs_f64(), limit.as_secs()),
    )
}

// ---------------------------------------------------------------- gradients

/// Worst relative error between analytic and central-difference gradients
/// over every parameter entry of the tiny model.
fn tiny_gradient_error(mode: FusionMode, seed: u64, step: f64) -> f64 {
    let cfg = ModelConfig::tiny().with_fusion(mode);
    let model = Hran::new(&cfg).unwrap();
    let mut store = init_params::<f64>(&cfg, seed).unwrap();
    let mut rng = Rng::new(seed + 100);
    let biases: Vec<String> = store
        .names()
        .filter(|n| n.ends_with(".bias"))
        .map(str::to_string)
        .collect();
    for n in biases {
        for v in store.value_mut(&n).unwrap().data_mut() {
            *v = rng.next_f64() * 0.2 - 0.1;
        }
    }
    let x = rand_tensor::<f64>(&mut rng, [1, 3, 8, 8], 1.0).map(|v| v * 0.5 + 0.5);
    let u = rand_tensor::<f64>(&mut rng, [1, 3, 16, 16], 1.0);
    let (_, mut cache) = model.forward_train(&store, &x).unwrap();
    model.backward(&mut store, &mut cache, &u).unwrap();

    let mut worst = 0.0f64;
    for name in store.names() {
        let grad = store.get(name).unwrap().grad();
        for i in 0..grad.len() {
            let eval = |d: f64| {
                let mut s = store.clone();
                s.value_mut(name).unwrap().data_mut()[i] += d;
                dot(&model.forward(&s, &x).unwrap(), &u)
            };
            let num = (eval(step) - eval(-step)) / (2.0 * step);
            worst = worst.max(rel_err(grad.data()[i], num, 1e-6));
        }
    }
    worst
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    // Seed 11 keeps every LeakyReLU pre-activation further than one step
    // from zero, so the difference quotient never straddles a kink.
    let bff = tiny_gradient_error(FusionMode::Binarized, 11, 1e-3);
    let hff = tiny_gradient_error(FusionMode::Hierarchical, 11, 1e-3);
    let worst = bff.max(hff);
    if worst >= 1e-3 {
        return Err(format!(
            "worst relative error {worst:.2e} (bff {bff:.2e}, hff {hff:.2e})"
        ));
    }
    within(
        start,
        Duration::from_secs(120),
        format!("all params, worst rel err {worst:.2e} < 1e-3"),
    )
}

// ------------------------------------------------------------------ kernels

fn rel_max(got: &Tensor4<f64>, want: &Tensor4<f64>) -> f64 {
    if got.dims() != want.dims() {
        return f64::INFINITY;
    }
    let scale = want.data().iter().fold(1e-12f64, |m, v| m.max(v.abs()));
    got.max_abs_diff(want) / scale
}

fn kernel_oracles() -> Outcome {
    const CASES: usize = 100;
    let start = Instant::now();
    let mut rng = Rng::new(2024);
    let mut worst = [0.0f64; 4];
    for case in 0..CASES {
        let d = 1 + case % 2;
        let k = [1, 3][rng.below(2)];
        let (ci, co) = (1 + rng.below(4), 1 + rng.below(4));
        let (h, w) = (1 + rng.below(7), 1 + rng.below(7));
        let spec = ConvSpec::same(ci, co, k, d);
        let n = 1 + rng.below(2);
        let x = rand_tensor::<f64>(&mut rng, [n, ci, h, w], 1.0);
        let wt = rand_tensor::<f64>(&mut rng, spec.weight_dims(), 1.0);
        let b: Vec<f64> = (0..co).map(|_| rng.next_f64() - 0.5).collect();
        let got = conv2d(&x, &spec, &wt, &b).unwrap();
        worst[0] = worst[0].max(rel_max(&got, &conv_oracle(&x, &wt, &b, d, d * (k - 1) / 2)));

        let r = [2, 3, 4][rng.below(3)];
        let c = 1 + rng.below(3);
        let (h, w) = (1 + rng.below(4), 1 + rng.below(4));
        let x = rand_tensor::<f64>(&mut rng, [1, c * r * r, h, w], 1.0);
        let want = Tensor4::from_fn([1, c, h * r, w * r], |[n, ch, y, xx]| {
            x.at(n, ch * r * r + (y % r) * r + xx % r, y / r, xx / r)
        });
        worst[1] = worst[1].max(rel_max(&pixel_shuffle(&x, r).unwrap(), &want));

        let (c, h, w) = (1 + rng.below(5), 1 + rng.below(9), 1 + rng.below(9));
        let x = rand_tensor::<f64>(&mut rng, [2, c, h, w], 3.0);
        let want = Tensor4::from_fn([2, c, 1, 1], |[n, ch, _, _]| {
            x.plane(n, ch).iter().sum::<f64>() / (h * w) as f64
        });
        worst[2] = worst[2].max(rel_max(&global_avg_pool(&x).unwrap(), &want));

        let (h, w) = (2 + rng.below(9), 2 + rng.below(9));
        let s = [2, 3, 4][rng.below(3)];
        let (oh, ow) = if case % 2 == 0 {
            (h * s, w * s)
        } else {
            (h.div_ceil(s), w.div_ceil(s))
        };
        let x = rand_tensor::<f64>(&mut rng, [1, 2, h, w], 1.0);
        worst[3] = worst[3].max(rel_max(
            &bicubic_resize(&x, oh, ow).unwrap(),
            &bicubic_oracle(&x, oh, ow),
        ));
    }
    let detail = format!(
        "{CASES} cases each; worst rel err conv {:.1e}, shuffle {:.1e}, gap {:.1e}, bicubic {:.1e}",
        worst[0], worst[1], worst[2], worst[3]
    );
    if worst.iter().any(|&e| e.is_nan() || e >= 1e-5) {
        return Err(detail);
    }
    within(start, Duration::from_secs(60), detail)
}

// --------------------------------------------------------- bicubic baseline

fn bicubic_baseline() -> Outcome {
    let start = Instant::now();
    match std::env::var_os("HRAN_SET5_DIR") {
        Some(dir) => {
            let dir = Path::new(&dir);
            let mut lines = Vec::new();
            let mut ok = true;
            for (scale, psnr, ssim) in [(2, 33.66, 0.9299), (4, 28.42, 0.8104)] {
                let report = evaluate_with(dir, scale, "bicubic", |_, hr| {
                    bicubic_upscale(&degrade(hr, scale)?, scale).map(Some)
                })
                .map_err(|e| e.to_string())?;
                let good =
                    (report.mean_psnr - psnr).abs() <= 0.15 && (report.mean_ssim - ssim).abs() <= 0.005;
                ok &= good && report.images.len() == 5;
                lines.push(format!(
                    "x{scale}: {:.3} dB / {:.4} over {} images (target {psnr} / {ssim})",
                    report.mean_psnr,
                    report.mean_ssim,
                    report.images.len()
                ));
            }
            ensure(ok, lines.join("; ")).and_then(|d| within(start, Duration::from_secs(60), d))
        }
        None => {
            let a = Tensor4::<f64>::full([1, 1, 8, 8], 100.0);
            let b = Tensor4::<f64>::full([1, 1, 8, 8], 101.0);
            let p = psnr_planes(&a, &b);
            ensure(
                (p - 48.13).abs() < 0.005,
                format!("Set5 not available (HRAN_SET5_DIR unset); unit-offset PSNR {p:.4} dB vs 48.13, bicubic oracle covered by kernel check"),
            )
        }
    }
}

// ------------------------------------------------------------ param count

fn parameter_count() -> Outcome {
    let out = Command::new(env!("CARGO_BIN_EXE_hran"))
        .args(["params", "--preset", "default", "--scale", "4"])
        .output()
        .map_err(|e| e.to_string())?;
    let text = String::from_utf8_lossy(&out.stdout);
    let total: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("total\t"))
        .and_then(|l| l.split('\t').next())
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| format!("unparseable output: {text}"))?;
    let dev = (total - 7.94e6) / 7.94e6;
    ensure(
        out.status.success() && dev.abs() <= 0.15 && total == 8_226_307.0,
        format!(
            "{total} parameters ({:+.1}% vs 7.94M, golden 8226307)",
            dev * 100.0
        ),
    )
}

// ---------------------------------------------------------------- overfit

fn block_image(seed: u64) -> ImageU8 {
    let mut rng = Rng::new(seed);
    let cols: Vec<[u8; 3]> = (0..64)
        .map(|_| [0; 3].map(|_: u8| rng.below(256) as u8))
        .collect();
    ImageU8::from_fn(64, 64, |x, y| cols[(y / 8) * 8 + x / 8])
}

fn overfit_cfg(iters: u64) -> TrainConfig {
    TrainConfig {
        batch: 4,
        patch: 32,
        lr0: 2e-2,
        halve_every: 1_000_000,
        max_iters: iters,
        checkpoint_every: iters,
        log_every: 1,
        seed: 0,
        ..Default::default()
    }
}

fn overfit_run(model: &ModelConfig, iters: u64, hr: &ImageU8) -> Result<(Trainer, TrainOutcome), String> {
    let data = Dataset::from_hr_images(vec![("blocks".into(), hr.clone())], 2).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut t = Trainer::new(model, overfit_cfg(iters)).map_err(|e| e.to_string())?;
    let out = t.run(&data, dir.path()).map_err(|e| e.to_string())?;
    Ok((t, out))
}

fn overfit_sanity() -> Outcome {
    let start = Instant::now();
    let hr = block_image(3);
    let (t, out) = overfit_run(&ModelConfig::tiny(), 500, &hr)?;
    let first = out.first_loss.ok_or("no loss recorded")?;
    let last = out.windowed_loss.ok_or("no loss recorded")?;
    let ratio = last / first;

    let lr = degrade(&hr, 2).map_err(|e| e.to_string())?;
    let y = t
        .model()
        .forward(t.store(), &to_float::<f32>(&lr))
        .map_err(|e| e.to_string())?;
    let sr = to_u8(&y, 0).map_err(|e| e.to_string())?;
    let model_psnr = psnr_y(&sr, &hr, 2).map_err(|e| e.to_string())?;
    let bicubic_psnr =
        psnr_y(&bicubic_upscale(&lr, 2).map_err(|e| e.to_string())?, &hr, 2).map_err(|e| e.to_string())?;
    let detail = format!(
        "windowed L1 {last:.4} / first {first:.4} = {ratio:.3}; PSNR model {model_psnr:.2} dB vs bicubic {bicubic_psnr:.2} dB"
    );
    if !(ratio < 0.25 && model_psnr > bicubic_psnr) {
        return Err(detail);
    }
    within(start, Duration::from_secs(600), detail)
}

// ------------------------------------------------------------ skip survival

fn store_for(specs: impl FnOnce(&mut Vec<ParamSpec>)) -> ParamStore<f64> {
    let mut list = Vec::new();
    specs(&mut list);
    let mut store = ParamStore::new();
    for s in list {
        let dims = s.dims();
        store.insert(s.name, s.shape, Tensor4::zeros(dims)).unwrap();
    }
    store
}

fn skip_survival() -> Outcome {
    let cfg = ModelConfig {
        channels: 8,
        ca_reduction: 2,
        hrab_per_rg: 3,
        ..ModelConfig::tiny()
    };
    let mut checked = 0;
    for seed in 0..10 {
        let f = rand_tensor::<f64>(&mut Rng::new(seed + 50), [1, 8, 7, 9], 3.0);

        let hrab = Hrab::new("b", &cfg);
        let mut store = store_for(|o| hrab.param_specs(o));
        randomize(&mut store, seed, 1.0);
        zero_param(&mut store, "b.sa.fuse.weight");
        zero_param(&mut store, "b.sa.fuse.bias");
        let (out, _) = hrab.forward(&store, &f).map_err(|e| e.to_string())?;
        if out.data() != f.data() {
            return Err(format!(
                "HRAB with zeroed attention changed its input (seed {seed})"
            ));
        }

        let rg = ResidualGroup::new("g", &cfg);
        let mut store = store_for(|o| rg.param_specs(o));
        randomize(&mut store, seed, 1.0);
        zero_param(&mut store, "g.tail.weight");
        zero_param(&mut store, "g.tail.bias");
        let (out, _) = rg.forward(&store, &f).map_err(|e| e.to_string())?;
        if out.data() != f.data() {
            return Err(format!("RG with zeroed tail changed its input (seed {seed})"));
        }
        checked += 2;
    }
    Ok(format!("{checked} random blocks bitwise identity"))
}

// ------------------------------------------------------------ determinism

fn small_data() -> Dataset {
    Dataset::from_hr_images(
        vec![
            ("a".into(), synthetic_image(40, 40, 1)),
            ("b".into(), synthetic_image(36, 44, 2)),
        ],
        2,
    )
    .unwrap()
}

fn small_cfg(iters: u64) -> TrainConfig {
    TrainConfig {
        batch: 2,
        patch: 8,
        lr0: 1e-3,
        halve_every: 7,
        max_iters: iters,
        checkpoint_every: 5,
        seed: 17,
        ..Default::default()
    }
}

fn run_to(dir: &Path, iters: u64, threads: usize) -> Result<(Vec<u8>, Vec<u8>), String> {
    with_threads(threads, || {
        train_loop(&ModelConfig::tiny(), &small_cfg(iters), &small_data(), dir)
    })
    .map_err(|e| e.to_string())?;
    let read = |p: &Path| std::fs::read(p).map_err(|e| e.to_string());
    Ok((read(&dir.join(CHECKPOINT_FILE))?, read(&dir.join(LOSS_LOG_FILE))?))
}

fn determinism() -> Outcome {
    let mut runs = Vec::new();
    for threads in [1, 1, 4, 4] {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        runs.push((threads, run_to(dir.path(), 30, threads)?));
    }
    let same = runs.iter().all(|(_, r)| *r == runs[0].1);
    ensure(
        same,
        format!(
            "4 runs x 30 iterations (workers 1,1,4,4): checkpoints and logs {}",
            if same { "byte-identical" } else { "differ" }
        ),
    )
}

// ----------------------------------------------------------- self-ensemble

fn self_ensemble_bicubic() -> Outcome {
    let up = |x: &Tensor4<f64>| bicubic_resize(x, 2 * x.h(), 2 * x.w());
    let mut worst = 0.0f64;
    for (seed, dims) in [
        (0, [1, 3, 9, 9]),
        (1, [1, 3, 16, 16]),
        (2, [2, 3, 6, 11]),
        (3, [1, 3, 13, 5]),
    ] {
        let x = rand_tensor::<f64>(&mut Rng::new(seed), dims, 1.0);
        let plain = up(&x).map_err(|e| e.to_string())?;
        let ens = self_ensemble(up, &x).map_err(|e| e.to_string())?;
        worst = worst.max(ens.max_abs_diff(&plain));
    }
    ensure(worst <= 1e-5, format!("max abs diff {worst:.2e} <= 1e-5"))
}

// -------------------------------------------------------------- checkpoint

fn checkpoint_round_trip() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = ModelConfig::tiny()
        .with_scale(3)
        .with_fusion(FusionMode::Hierarchical);
    let ck = Checkpoint {
        config: cfg.clone(),
        store: init_params::<f32>(&cfg, 5).unwrap(),
        optimizer: None,
    };
    let path = dir.path().join("m.bin");
    ck.save(&path).map_err(|e| e.to_string())?;
    let back = Checkpoint::load_for(&path, &cfg).map_err(|e| e.to_string())?;
    let model = Hran::new(&cfg).unwrap();
    let x = rand_tensor::<f32>(&mut Rng::new(1), [1, 3, 10, 12], 1.0);
    let a = model.forward(&ck.store, &x).unwrap();
    let b = model.forward(&back.store, &x).unwrap();
    if a.data() != b.data() {
        return Err("reloaded model output differs".into());
    }

    let straight = tempfile::tempdir().map_err(|e| e.to_string())?;
    let full = run_to(straight.path(), 20, 1)?;
    let split = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_to(split.path(), 13, 1)?;
    let ck = Checkpoint::load(split.path().join(CHECKPOINT_FILE)).map_err(|e| e.to_string())?;
    let mut t = Trainer::from_checkpoint(ck, small_cfg(20)).map_err(|e| e.to_string())?;
    t.run(&small_data(), split.path()).map_err(|e| e.to_string())?;
    let resumed = (
        std::fs::read(split.path().join(CHECKPOINT_FILE)).unwrap(),
        std::fs::read(split.path().join(LOSS_LOG_FILE)).unwrap(),
    );
    ensure(
        resumed == full,
        "forward after reload bit-identical; 13+7 resumed run vs 20 straight: checkpoint and log byte-identical".into(),
    )
}

// ---------------------------------------------------------------- ablation

/// Quarter means of the per-iteration loss curve.
fn quarters(out: &TrainOutcome) -> Vec<f64> {
    let losses: Vec<f64> = out.lines.iter().map(|l| l.loss).collect();
    losses
        .chunks(losses.len().div_ceil(4))
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect()
}

fn fusion_ablation() -> Outcome {
    let hr = block_image(3);
    let mut lines = Vec::new();
    let mut ok = true;
    for rg in [2, 4] {
        for mode in [FusionMode::Binarized, FusionMode::Hierarchical] {
            let cfg = ModelConfig {
                rg_count: rg,
                ..ModelConfig::tiny()
            }
            .with_fusion(mode);
            let (_, out) = overfit_run(&cfg, 300, &hr)?;
            let q = quarters(&out);
            let finite = out.lines.iter().all(|l| l.loss.is_finite());
            let decreasing = q.windows(2).all(|w| w[1] < w[0]);
            ok &= finite && decreasing;
            lines.push(format!(
                "{mode} R={rg}: quarter means {}",
                q.iter()
                    .map(|v| format!("{v:.4}"))
                    .collect::<Vec<_>>()
                    .join(" > ")
            ));
        }
    }
    ensure(ok, lines.join("; "))
}

fn main() -> ExitCode {
    let criteria: [(&str, Check); 10] = [
        ("gradient correctness", gradient_correctness),
        ("kernel oracles", kernel_oracles),
        ("bicubic baseline", bicubic_baseline),
        ("parameter count", parameter_count),
        ("overfit sanity", overfit_sanity),
        ("skip-survival invariants", skip_survival),
        ("determinism", determinism),
        ("self-ensemble correctness", self_ensemble_bicubic),
        ("checkpoint round-trip", checkpoint_round_trip),
        ("BFF vs HFF ablation", fusion_ablation),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
