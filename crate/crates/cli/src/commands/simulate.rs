use serde_json::json;

use crate::error::CliResult;
use crate::io::{load_config, Run};
use crate::SimulateArgs;
use nexdenoise::train::{build_dataset, DatasetConfig};

pub fn simulate(a: &SimulateArgs) -> CliResult<()> {
    let mut cfg: DatasetConfig = load_config(a.config.as_deref())?;
    a.apply(&mut cfg);
    cfg.validate()?;
    let mut run = Run::new("simulate", &a.out)?;
    if let Some(c) = &a.config {
        run.input(c);
    }
    let (train, test) = build_dataset(&cfg)?;
    for (name, split) in [("train.nxd", &train), ("test.nxd", &test)] {
        split.to_container()?.write(run.path(name))?;
        run.record(name);
    }
    let summary = json!({
        "train_samples": train.len(),
        "test_samples": test.len(),
        "train_volumes": cfg.train_volumes,
        "test_volumes": cfg.test_volumes,
        "image_size": cfg.image_size,
        "sigma0": train.meta.sigma0,
        "scale_factor": train.meta.scale_factor,
        "train_baseline_psnr": train.meta.baseline_psnr,
        "test_baseline_psnr": test.meta.baseline_psnr,
    });
    run.write("summary.json", serde_json::to_string_pretty(&summary)?)?;
    println!(
        "train: {} volumes / {} slices, test: {} volumes / {} slices, {}x{}",
        cfg.train_volumes,
        train.len(),
        cfg.test_volumes,
        test.len(),
        cfg.image_size,
        cfg.image_size
    );
    println!(
        "sigma0 = {:.6e}, scale = {:.6}, 2NEX-avg PSNR train {:.4} dB / test {:.4} dB",
        train.meta.sigma0, train.meta.scale_factor, train.meta.baseline_psnr, test.meta.baseline_psnr
    );
    run.finish(
        serde_json::to_value(&cfg)?,
        json!({ "seed": cfg.seed, "train_seed_start": cfg.train_seed_start, "test_seed_start": cfg.test_seed_start }),
    )?;
    Ok(())
}
