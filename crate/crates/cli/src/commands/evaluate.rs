use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::io::{read_split, split_path, AnyParams, Run};
use crate::EvaluateArgs;
use nexdenoise::container::read_header;
use nexdenoise::metrics::{LossForm, MetricsReport};
use nexdenoise::train::{evaluate as score, method_label};

/// Loss form recorded by the training run, if any.
fn loss_label(path: &std::path::Path) -> CliResult<String> {
    let h = read_header(path)?;
    let form = h.provenance.get("train_config").and_then(|c| c.get("loss_form")).cloned();
    Ok(match form.map(serde_json::from_value::<LossForm>) {
        Some(Ok(f)) => f.label(),
        _ => "unknown".to_string(),
    })
}

pub fn evaluate(a: &EvaluateArgs) -> CliResult<()> {
    if !a.method.is_empty() && a.method.len() != a.checkpoint.len() {
        return Err(CliError::Usage("give one --method label per --checkpoint".into()));
    }
    let path = split_path(&a.data, "test");
    let data = read_split(&path)?;
    let mut run = Run::new("evaluate", &a.out)?;
    run.input(&path);
    let mut slices = Vec::new();
    let mut forms = Vec::new();
    for (i, ckpt) in a.checkpoint.iter().enumerate() {
        run.input(ckpt);
        let params = AnyParams::load(ckpt)?;
        let cfg = params.config();
        let label = a.method.get(i).cloned().unwrap_or_else(|| method_label(cfg.input_mode, cfg.variant));
        let rows = match &params {
            AnyParams::F32(p) => score(Some(p), &data, &label, i == 0)?,
            AnyParams::F64(p) => score(Some(p), &data, &label, i == 0)?,
        };
        slices.extend(rows);
        forms.push(loss_label(ckpt)?);
    }
    forms.dedup();
    let report = MetricsReport::from_slices(data.meta.scale_factor, forms.join("|"), slices)?;
    run.write("metrics.csv", report.to_csv())?;
    run.write("slices.csv", report.slices_csv())?;
    run.write("metrics.json", serde_json::to_string_pretty(&report)?)?;
    print!("{}", report.to_csv());
    run.finish(json!({ "checkpoints": a.checkpoint, "methods": a.method, "data": path }), serde_json::Value::Null)?;
    Ok(())
}
