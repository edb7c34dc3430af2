use serde_json::json;

use crate::error::CliResult;
use crate::io::{read_split, split_path, Run};
use crate::{Precision, TrainArgs};
use nexdenoise::train::{
    params_container, train as run_training, EpochRecord, RunOptions, TrainConfig, BEST_CHECKPOINT, LAST_CHECKPOINT,
};
use nexdenoise::train::DatasetSplit;
use nexdenoise::Scalar;

fn go<T: Scalar>(cfg: &TrainConfig, data: &DatasetSplit, run: &mut Run, resume: bool) -> CliResult<()> {
    let dir = run.path("");
    let progress = |e: &EpochRecord| {
        let val = e.val_loss.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        eprintln!("epoch {:>4}  train {:.4}  val {val}  lr {:e}", e.epoch, e.train_loss, e.lr);
    };
    let opts = RunOptions { checkpoint_dir: Some(&dir), resume, on_epoch: Some(&progress) };
    let out = run_training::<T>(cfg, data, &opts)?;
    params_container(&out.params, cfg)?.write(run.path("params.nxd"))?;
    params_container(&out.best, cfg)?.write(run.path(BEST_CHECKPOINT))?;
    run.record("params.nxd");
    run.record(BEST_CHECKPOINT);
    if !out.history.epochs.is_empty() {
        run.record(LAST_CHECKPOINT);
    }
    run.write("history.csv", out.history.to_csv())?;
    run.write("history.json", serde_json::to_string_pretty(&out.history)?)?;
    Ok(())
}

pub fn train(a: &TrainArgs) -> CliResult<()> {
    let cfg = a.flags.resolve()?;
    let path = split_path(&a.data, "train");
    let data = read_split(&path)?;
    let mut run = Run::new("train", &a.out)?;
    run.input(&path);
    if let Some(c) = &a.flags.config {
        run.input(c);
    }
    run.write("config.json", serde_json::to_string_pretty(&cfg)?)?;
    match a.flags.precision {
        Precision::F32 => go::<f32>(&cfg, &data, &mut run, a.resume)?,
        Precision::F64 => go::<f64>(&cfg, &data, &mut run, a.resume)?,
    }
    let precision = format!("{:?}", a.flags.precision).to_lowercase();
    run.finish(
        json!({ "train": cfg, "precision": precision, "resume": a.resume }),
        json!({ "seed": cfg.seed, "dataset_seed_provenance": data.meta.phantom_seeds.first() }),
    )?;
    Ok(())
}
