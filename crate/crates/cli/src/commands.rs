use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use xlmimo::channel::{read_dataset, write_dataset, ChannelDataset};
use xlmimo::harness::{
    generate_dataset, run_experiment, run_verification, train, write_log_header, EstimatorKind, RunConfig, Scenario,
    SnrPolicy, TrainConfig, TrainState,
};
use xlmimo::model::{count_params_flops, Architecture, ModelKind, Network};
use xlmimo::nn::{read_checkpoint, write_checkpoint};
use xlmimo::rng::{stream_rng, Stream};

use crate::manifest::RunManifest;
use crate::{config, Cli, CliError, Command, Split};

const SNR_NOTE: &str = "training SNR is drawn per sample, uniform in dB over the configured range";
const HYOMP_NOTE: &str =
    "hyomp is a reimplementation: L0 far atoms then L-L0 polar atoms on geometric distance rings, true L0 assumed";
const MATCENET_NOTE: &str =
    "matcenet totals depend on the assumed head count and feed-forward width; batch-norm counts 4 values per channel";

fn io(context: String) -> impl FnOnce(std::io::Error) -> CliError {
    move |source| CliError::Io { context, source }
}

fn require_out(cli: &Cli, what: &str) -> Result<PathBuf, CliError> {
    cli.common
        .out
        .clone()
        .ok_or_else(|| CliError::Config(format!("{what} needs --out PATH")))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn parse_model(s: &str) -> Result<ModelKind, CliError> {
    ModelKind::parse(s).ok_or_else(|| CliError::Config(format!("unknown model \"{s}\" (expected matcenet or xlcnet)")))
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let c = &cli.common;
    let mut cfg = config::resolve(c.config.as_deref(), c.profile, c.seed)?;
    let clock = Instant::now();
    let (name, mut manifest) = match &cli.command {
        Command::Generate { split } => ("generate", generate(cli, &cfg, *split)?),
        Command::Train {
            data,
            val,
            model,
            resume,
            log,
        } => {
            if let Some(m) = model {
                cfg.model.kind = parse_model(m)?;
                cfg.validate()?;
            }
            let paths = TrainPaths {
                data: data.as_deref(),
                val: val.as_deref(),
                resume: resume.as_deref(),
                log: log.as_deref(),
            };
            ("train", train_cmd(cli, &cfg, paths)?)
        }
        Command::Eval {
            checkpoints,
            estimators,
            scenarios,
        } => {
            if let Some(list) = estimators {
                cfg.experiment.estimators = list
                    .iter()
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        EstimatorKind::parse(s).ok_or_else(|| {
                            CliError::Config(format!(
                                "unknown estimator \"{s}\" (expected ls, lmmse, omp, hyomp, xlcnet or matcenet)"
                            ))
                        })
                    })
                    .collect::<Result<_, _>>()?;
            }
            if let Some(list) = scenarios {
                cfg.experiment.scenarios = list
                    .iter()
                    .map(|s| {
                        serde_json::from_value::<Scenario>(serde_json::Value::String(s.clone())).map_err(|_| {
                            CliError::Config(format!(
                                "unknown scenario \"{s}\" (expected near_only, far_only, hybrid_l0_sweep or hybrid)"
                            ))
                        })
                    })
                    .collect::<Result<_, _>>()?;
            }
            cfg.experiment
                .checkpoints
                .extend(checkpoints.iter().map(|p| p.display().to_string()));
            cfg.validate()?;
            ("eval", eval(cli, &cfg)?)
        }
        Command::Flops { model } => ("flops", flops(cli, &cfg, model.as_deref())?),
        Command::Verify => {
            verify(cli, &cfg)?;
            return Ok(());
        }
    };
    if let Some(out) = &c.out {
        manifest.command = name.to_string();
        manifest.wall_seconds = clock.elapsed().as_secs_f64();
        let path = manifest.write(out)?;
        eprintln!("manifest: {}", path.display());
    }
    Ok(())
}

fn split_dataset(cfg: &RunConfig, split: Split) -> Result<ChannelDataset, CliError> {
    let (n, stream) = match split {
        Split::Train => (cfg.data.n_train, Stream::Dataset),
        Split::Val => (cfg.data.n_val, Stream::Validation),
    };
    let ds = generate_dataset(&cfg.training_channel()?, &cfg.data.train_snr, n, cfg.seed, stream)?;
    // Match what a round trip through the dataset file would give.
    Ok(ds.quantized())
}

fn generate(cli: &Cli, cfg: &RunConfig, split: Split) -> Result<RunManifest, CliError> {
    let out = require_out(cli, "generate")?;
    let ds = split_dataset(cfg, split)?;
    write_dataset(&ds, &out)?;
    eprintln!("wrote {} samples (M = {}) to {}", ds.len(), ds.antennas, out.display());
    let mut m = RunManifest::new("generate", cfg, cli.common.deterministic);
    m.artifacts.push(out);
    if matches!(cfg.data.train_snr, SnrPolicy::Uniform { .. }) {
        m.notes.push(SNR_NOTE.into());
    }
    Ok(m)
}

struct TrainPaths<'a> {
    data: Option<&'a Path>,
    val: Option<&'a Path>,
    resume: Option<&'a Path>,
    log: Option<&'a Path>,
}

fn load_or_generate(path: Option<&Path>, cfg: &RunConfig, split: Split) -> Result<ChannelDataset, CliError> {
    match path {
        Some(p) => Ok(read_dataset(p)?),
        None => split_dataset(cfg, split),
    }
}

fn train_cmd(cli: &Cli, cfg: &RunConfig, paths: TrainPaths<'_>) -> Result<RunManifest, CliError> {
    let out = require_out(cli, "train")?;
    let train_set = load_or_generate(paths.data, cfg, Split::Train)?;
    let val_set = load_or_generate(paths.val, cfg, Split::Val)?;
    let tc = TrainConfig::from_run(cfg);

    let (mut net, state) = match paths.resume {
        Some(p) => {
            let ck = read_checkpoint(p)?;
            let net = Network::<f32>::from_checkpoint(&ck)?;
            if net.architecture() != cfg.architecture(cfg.model.kind) {
                return Err(CliError::Config(format!(
                    "checkpoint architecture {} does not match the config ({})",
                    net.architecture().descriptor(),
                    cfg.architecture(cfg.model.kind).descriptor()
                )));
            }
            (net, Some(TrainState::from_checkpoint(&ck, tc.adam)?))
        }
        None => {
            let arch = cfg.architecture(cfg.model.kind);
            (Network::<f32>::new(&arch, &mut stream_rng(cfg.seed, Stream::Init))?, None)
        }
    };

    let log_path = paths.log.map(Path::to_path_buf).unwrap_or_else(|| with_suffix(&out, ".log.csv"));
    let file = if state.is_some() && log_path.exists() {
        OpenOptions::new().append(true).open(&log_path)
    } else {
        File::create(&log_path)
    }
    .map_err(io(format!("opening {}", log_path.display())))?;
    let mut log = BufWriter::new(file);
    if state.is_none() || log.get_ref().metadata().map(|m| m.len() == 0).unwrap_or(true) {
        write_log_header(&mut log).map_err(io(format!("writing {}", log_path.display())))?;
    }

    eprintln!(
        "training {} on {} samples, {} epochs, batch {}",
        net.architecture().descriptor(),
        train_set.len(),
        tc.epochs,
        tc.batch_size
    );
    let outcome = train(&mut net, &train_set, &val_set, &tc, state, Some(&mut log))?;
    log.flush().map_err(io(format!("writing {}", log_path.display())))?;
    write_checkpoint(&outcome.checkpoint, &out)?;
    eprintln!(
        "best epoch {} with validation NMSE {:.3} dB (initial {:.3} dB); checkpoint {}",
        outcome.best_epoch,
        outcome.best_val_nmse_db,
        outcome.initial_val_nmse_db,
        out.display()
    );
    let mut m = RunManifest::new("train", cfg, cli.common.deterministic);
    m.artifacts.push(out);
    m.artifacts.push(log_path);
    m.notes.push(SNR_NOTE.into());
    m.notes.push("log wall_seconds varies between runs; every other column is reproducible".into());
    Ok(m)
}

fn eval(cli: &Cli, cfg: &RunConfig) -> Result<RunManifest, CliError> {
    let mut models = Vec::new();
    for p in &cfg.experiment.checkpoints {
        let path = Path::new(p);
        if !path.exists() {
            return Err(CliError::Config(format!("checkpoint {p} not found")));
        }
        let net = Network::<f32>::from_checkpoint(&read_checkpoint(path)?)?;
        models.push((path.to_path_buf(), net));
    }
    // Label by model kind, adding the file stem when a kind repeats.
    let mut labelled = Vec::with_capacity(models.len());
    for (path, net) in &models {
        let kind = net.architecture().kind();
        let repeated = models.iter().filter(|(_, n)| n.architecture().kind() == kind).count() > 1;
        let label = if repeated {
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            format!("{}:{stem}", kind.name())
        } else {
            kind.name().to_string()
        };
        labelled.push(label);
    }
    let mut models: Vec<(String, Network<f32>)> = labelled.into_iter().zip(models.into_iter().map(|(_, n)| n)).collect();

    let result = run_experiment(cfg, &mut models)?;
    let csv = result.to_csv();
    let mut m = RunManifest::new("eval", cfg, cli.common.deterministic);
    match &cli.common.out {
        Some(out) => {
            std::fs::write(out, &csv).map_err(io(format!("writing {}", out.display())))?;
            eprintln!("wrote {} rows to {}", result.rows.len(), out.display());
            m.artifacts.push(out.clone());
        }
        None => print!("{csv}"),
    }
    if cfg.experiment.estimators.contains(&EstimatorKind::Hyomp) {
        m.notes.push(HYOMP_NOTE.into());
    }
    m.notes
        .push("nmse_db averages per-sample ratios; nmse_ratio_of_sums is sum of errors over sum of energies".into());
    Ok(m)
}

fn flops(cli: &Cli, cfg: &RunConfig, model: Option<&str>) -> Result<RunManifest, CliError> {
    let kinds = match model {
        Some(s) => vec![parse_model(s)?],
        None => vec![ModelKind::MatCenet, ModelKind::Xlcnet],
    };
    let mut csv = String::from("model,layer,kind,params,macs,flops\n");
    for kind in kinds {
        let arch: Architecture = cfg.architecture(kind);
        let report = count_params_flops(&arch);
        println!("{}\n", report.summary());
        if kind == ModelKind::MatCenet {
            println!("note: {MATCENET_NOTE}\n");
        }
        for line in report.to_csv().lines().skip(1) {
            csv.push_str(kind.name());
            csv.push(',');
            csv.push_str(line);
            csv.push('\n');
        }
    }
    let mut m = RunManifest::new("flops", cfg, cli.common.deterministic);
    match &cli.common.out {
        Some(out) => {
            std::fs::write(out, &csv).map_err(io(format!("writing {}", out.display())))?;
            m.artifacts.push(out.clone());
        }
        None => print!("{csv}"),
    }
    m.notes.push(MATCENET_NOTE.into());
    Ok(m)
}

fn verify(cli: &Cli, cfg: &RunConfig) -> Result<(), CliError> {
    let report = run_verification(cfg.seed)?;
    println!("{report}");
    if let Some(out) = &cli.common.out {
        std::fs::write(out, format!("{report}\n")).map_err(io(format!("writing {}", out.display())))?;
    }
    let failed = report.failures().count();
    if failed > 0 {
        return Err(CliError::Verification(failed));
    }
    Ok(())
}
