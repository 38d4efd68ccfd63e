use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use hran_core::data::{
    bicubic_upscale, degrade as bi_degrade, find_lr_counterpart, list_images, load_image, save_image,
    supported_extension, to_float, to_u8, Dataset, ImageU8,
};
use hran_core::metrics::{evaluate_dirs, evaluate_with, self_ensemble, EvalReport};
use hran_core::model::{param_breakdown, param_count, Checkpoint, Hran, ModelConfig, ParamStore};
use hran_core::train::{Trainer, CHECKPOINT_FILE};

use crate::config::{read_config_file, RunConfig};
use crate::error::{exit, CliError, CliResult};
use crate::{DegradeArgs, EvalArgs, InferArgs, ModelArgs, ParamsArgs, TrainArgs};

/// Writes to stdout; a closed pipe (`hran params | head`) is not an error.
fn emit(text: &str) -> CliResult<()> {
    match io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(CliError::data(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

fn push<T: ToString>(out: &mut Vec<(String, String)>, key: &str, v: &Option<T>) {
    if let Some(v) = v {
        out.push((key.to_string(), v.to_string()));
    }
}

fn model_overrides(m: &ModelArgs, out: &mut Vec<(String, String)>) {
    push(out, "preset", &m.preset);
    push(out, "scale", &m.scale);
    push(out, "channels", &m.channels);
    push(out, "rg_count", &m.rg_count);
    push(out, "hrab_per_rg", &m.hrab_per_rg);
    push(out, "ca_reduction", &m.ca_reduction);
    push(out, "fusion", &m.fusion);
}

fn path_str(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

fn train_config(a: &TrainArgs) -> CliResult<RunConfig> {
    let file = match &a.config {
        Some(p) => read_config_file(p)?,
        None => Vec::new(),
    };
    let mut o = Vec::new();
    model_overrides(&a.model, &mut o);
    push(&mut o, "batch", &a.batch);
    push(&mut o, "patch", &a.patch);
    push(&mut o, "lr0", &a.lr);
    push(&mut o, "halve_every", &a.halve_every);
    push(&mut o, "max_iters", &a.max_iters);
    push(&mut o, "seed", &a.seed);
    push(&mut o, "checkpoint_every", &a.checkpoint_every);
    push(&mut o, "log_every", &a.log_every);
    push(&mut o, "dataset", &path_str(&a.dataset));
    push(&mut o, "lr_dir", &path_str(&a.lr_dir));
    push(&mut o, "manifest", &path_str(&a.manifest));
    push(&mut o, "out_dir", &path_str(&a.out));
    RunConfig::build(&file, &o)
}

fn require_dir(path: &Path, what: &str) -> CliResult<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::data(format!(
            "{what} directory not found: {}",
            path.display()
        )))
    }
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

pub fn train(a: TrainArgs) -> CliResult<u8> {
    let cfg = train_config(&a)?;
    let dataset_dir = cfg
        .dataset
        .clone()
        .ok_or_else(|| CliError::config("no dataset given (use --dataset or `dataset = ...`)"))?;
    require_dir(&dataset_dir, "dataset")?;
    if let Some(lr) = &cfg.lr_dir {
        require_dir(lr, "LR")?;
    }

    let mut trainer = if a.resume {
        let path = cfg.out_dir.join(CHECKPOINT_FILE);
        let ck = Checkpoint::load_for(&path, &cfg.model).map_err(CliError::checkpoint)?;
        Trainer::from_checkpoint(ck, cfg.train.clone()).map_err(CliError::checkpoint)?
    } else {
        Trainer::new(&cfg.model, cfg.train.clone())?
    };

    let mut data = Dataset::load(
        &dataset_dir,
        cfg.lr_dir.as_deref(),
        cfg.manifest.as_deref(),
        cfg.model.scale,
    )?;
    data.retain_min_size(cfg.train.patch);
    if data.is_empty() {
        return Err(CliError::data(format!(
            "no training image in {} has an LR side of at least {} pixels",
            dataset_dir.display(),
            cfg.train.patch
        )));
    }
    log::info!(
        "training {} images, {} parameters, iterations {}..{}",
        data.len(),
        param_count(&cfg.model)?,
        trainer.state().iteration,
        cfg.train.max_iters
    );

    create_dir(&cfg.out_dir)?;
    let outcome = trainer.run(&data, &cfg.out_dir)?;
    println!("checkpoint\t{}", outcome.checkpoint.display());
    println!("loss_log\t{}", outcome.loss_log.display());
    if let Some(w) = outcome.windowed_loss {
        println!("windowed_loss\t{w}");
    }
    Ok(exit::OK)
}

/// Image files named by `inputs`; directories are expanded.
fn collect_images(inputs: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            out.extend(list_images(p)?);
        } else if p.is_file() {
            if !supported_extension(p) {
                return Err(CliError::data(format!(
                    "unsupported image format: {}",
                    p.display()
                )));
            }
            out.push(p.clone());
        } else {
            return Err(CliError::data(format!("input not found: {}", p.display())));
        }
    }
    if out.is_empty() {
        return Err(CliError::data("no input images"));
    }
    Ok(out)
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("image")
        .to_string()
}

fn load_model(path: &Path, scale: Option<usize>) -> CliResult<(Hran, ParamStore<f32>)> {
    let ck = Checkpoint::load(path).map_err(CliError::checkpoint)?;
    if let Some(s) = scale {
        if s != ck.config.scale {
            return Err(CliError::config(format!(
                "checkpoint {} is for scale {}, requested {s}",
                path.display(),
                ck.config.scale
            )));
        }
    }
    let model = Hran::new(&ck.config)?;
    model.check_store(&ck.store).map_err(CliError::checkpoint)?;
    Ok((model, ck.store))
}

fn super_resolve(model: &Hran, store: &ParamStore<f32>, lr: &ImageU8, ensemble: bool) -> CliResult<ImageU8> {
    let x = to_float::<f32>(lr);
    let y = if ensemble {
        self_ensemble(|t| model.forward(store, t), &x)?
    } else {
        model.forward(store, &x)?
    };
    Ok(to_u8(&y, 0)?)
}

fn image_ext(png: bool) -> CliResult<&'static str> {
    if !png {
        Ok("ppm")
    } else if supported_extension(Path::new("x.png")) {
        Ok("png")
    } else {
        Err(CliError::config("--png needs a build with the `png` feature"))
    }
}

pub fn infer(a: InferArgs) -> CliResult<u8> {
    let ext = image_ext(a.png)?;
    let (model, store) = load_model(&a.checkpoint, a.scale)?;
    let inputs = collect_images(&a.inputs)?;
    create_dir(&a.out)?;
    let s = model.config().scale;
    for p in inputs {
        let sr = super_resolve(&model, &store, &load_image(&p)?, a.ensemble)?;
        let dest = a.out.join(format!("{}_x{s}.{ext}", stem(&p)));
        save_image(&dest, &sr)?;
        println!("{}", dest.display());
    }
    Ok(exit::OK)
}

fn write_report(report: &EvalReport, a: &EvalArgs) -> CliResult<()> {
    let tsv = report.to_tsv();
    match &a.out {
        Some(p) => fs::write(p, &tsv).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?,
        None => emit(&tsv)?,
    }
    if let Some(p) = &a.json {
        fs::write(p, report.to_json()).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

/// LR input for one HR image: the pre-degraded file when `lr_dir` is given
/// (`None` if it is missing), otherwise the bicubic degradation of `hr`.
fn lr_input(
    lr_dir: Option<&Path>,
    name: &str,
    hr: &ImageU8,
    scale: usize,
) -> hran_core::Result<Option<ImageU8>> {
    match lr_dir {
        Some(d) => match find_lr_counterpart(d, name, scale) {
            Some(p) => load_image(p).map(Some),
            None => Ok(None),
        },
        None => bi_degrade(hr, scale).map(Some),
    }
}

pub fn eval(a: EvalArgs) -> CliResult<u8> {
    if ![2, 3, 4, 8].contains(&a.scale) {
        return Err(CliError::config(format!(
            "scale {} not in {{2, 3, 4, 8}}",
            a.scale
        )));
    }
    require_dir(&a.hr, "HR")?;
    if let Some(d) = a.sr.as_ref().or(a.lr.as_ref()) {
        require_dir(d, "input")?;
    }
    let scale = a.scale;
    let lr_dir = a.lr.as_deref();
    let report = if let Some(sr) = &a.sr {
        evaluate_dirs(sr, &a.hr, scale)?
    } else if let Some(ck) = &a.checkpoint {
        let (model, store) = load_model(ck, Some(scale))?;
        evaluate_with(&a.hr, scale, &ck.display().to_string(), |name, hr| {
            let Some(lr) = lr_input(lr_dir, name, hr, scale)? else {
                return Ok(None);
            };
            let x = to_float::<f32>(&lr);
            let y = if a.ensemble {
                self_ensemble(|t| model.forward(&store, t), &x)?
            } else {
                model.forward(&store, &x)?
            };
            to_u8(&y, 0).map(Some)
        })?
    } else {
        evaluate_with(&a.hr, scale, "bicubic", |name, hr| {
            match lr_input(lr_dir, name, hr, scale)? {
                Some(lr) => bicubic_upscale(&lr, scale).map(Some),
                None => Ok(None),
            }
        })?
    };
    write_report(&report, &a)?;
    if report.is_complete() {
        Ok(exit::OK)
    } else {
        eprintln!(
            "warning: {} image(s) without a counterpart: {}",
            report.missing.len(),
            report.missing.join(", ")
        );
        Ok(exit::PARTIAL)
    }
}

pub fn degrade(a: DegradeArgs) -> CliResult<u8> {
    if ![2, 3, 4, 8].contains(&a.scale) {
        return Err(CliError::config(format!(
            "scale {} not in {{2, 3, 4, 8}}",
            a.scale
        )));
    }
    let ext = image_ext(a.png)?;
    require_dir(&a.hr, "HR")?;
    let paths = list_images(&a.hr)?;
    if paths.is_empty() {
        return Err(CliError::data(format!("no images in {}", a.hr.display())));
    }
    create_dir(&a.out)?;
    for p in paths {
        let lr = bi_degrade(&load_image(&p)?, a.scale)?;
        let dest = a.out.join(format!("{}x{}.{ext}", stem(&p), a.scale));
        save_image(&dest, &lr)?;
        println!("{}", dest.display());
    }
    Ok(exit::OK)
}

pub fn params(a: ParamsArgs) -> CliResult<u8> {
    let cfg: ModelConfig = match &a.checkpoint {
        Some(p) => Checkpoint::load(p).map_err(CliError::checkpoint)?.config,
        None => {
            let file = match &a.config {
                Some(p) => read_config_file(p)?,
                None => Vec::new(),
            };
            let mut o = Vec::new();
            model_overrides(&a.model, &mut o);
            RunConfig::build(&file, &o)?.model
        }
    };
    let total = param_count(&cfg)?;
    let mut text = format!("total\t{total}\t{:.2}M\n", total as f64 / 1e6);
    for (block, n) in param_breakdown(&cfg)? {
        text.push_str(&format!("{block}\t{n}\n"));
    }
    emit(&text)?;
    Ok(exit::OK)
}
