use serde_json::json;

use crate::error::CliResult;
use crate::io::{read_split, split_path, Run};
use crate::{AblateArgs, Precision};
use nexdenoise::train::run_ablation;

pub fn ablate(a: &AblateArgs) -> CliResult<()> {
    let base = a.flags.resolve()?;
    let (train_path, test_path) = (split_path(&a.data, "train"), split_path(&a.data, "test"));
    let (train, test) = (read_split(&train_path)?, read_split(&test_path)?);
    let mut run = Run::new("ablate", &a.out)?;
    run.input(&train_path);
    run.input(&test_path);
    let report = match a.flags.precision {
        Precision::F32 => run_ablation::<f32>(&train, &test, &base, &a.seeds)?,
        Precision::F64 => run_ablation::<f64>(&train, &test, &base, &a.seeds)?,
    };
    run.write("ablation.csv", report.variant_comparison()?.to_csv())?;
    run.write("inputs.csv", report.input_comparison()?.to_csv())?;
    run.write("metrics.csv", report.report.to_csv())?;
    run.write("seeds.csv", report.seeds_csv())?;
    run.write("report.json", serde_json::to_string_pretty(&report)?)?;
    print!("{}", report.report.to_csv());
    let precision = format!("{:?}", a.flags.precision).to_lowercase();
    run.finish(json!({ "train": base, "precision": precision }), json!({ "seeds": a.seeds }))?;
    Ok(())
}
