use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::io::{read_split, write_png, AnyParams, Run};
use crate::DenoiseArgs;
use nexdenoise::container::Container;
use nexdenoise::net::{denoise as run_net, NetworkParams};
use nexdenoise::train::DatasetSplit;
use nexdenoise::{Image, Scalar, Tensor};

/// Denoised magnitudes `[N, 1, H, W]` of every sample.
fn magnitudes<T: Scalar>(params: &NetworkParams<T>, data: &DatasetSplit) -> CliResult<Tensor<T>> {
    let all: Vec<usize> = (0..data.len()).collect();
    let mut parts = Vec::new();
    for chunk in all.chunks(8) {
        let input = data.input_batch::<T>(chunk, params.config.input_mode)?;
        parts.push(run_net(params, &input)?.1);
    }
    Ok(nexdenoise::tensor::stack_batches(&parts)?)
}

fn export<T: Scalar>(mags: &Tensor<T>, data: &DatasetSplit, stem: &str, png: bool, run: &mut Run) -> CliResult<()> {
    let mut c = Container::from_tensor("denoised", mags);
    c.header.scaling = json!({ "scale_factor": data.meta.scale_factor });
    c.header.provenance = json!({ "volumes": data.meta.volumes, "slices": data.meta.slices });
    let name = format!("{stem}.denoised.nxd");
    c.write(run.path(&name))?;
    run.record(&name);
    if png {
        let (h, w) = data.dims();
        for s in 0..mags.batch() {
            let img = Image::from_vec(h, w, mags.plane(s, 0).iter().map(|v| v.to_f64_lossy()).collect())?;
            let name = format!("{stem}_{s:04}.png");
            write_png(&run.path(&name), &img, 255.0)?;
            run.record(&name);
        }
    }
    Ok(())
}

pub fn denoise(a: &DenoiseArgs) -> CliResult<()> {
    let params = AnyParams::load(&a.checkpoint)?;
    let mut inputs = Vec::new();
    for p in &a.input {
        inputs.push((p, read_split(p)?));
    }
    let dims = inputs[0].1.dims();
    if let Some((p, _)) = inputs.iter().find(|(_, d)| d.dims() != dims) {
        return Err(CliError::Data(format!("{} has a different slice size than {}", p.display(), a.input[0].display())));
    }
    let mut run = Run::new("denoise", &a.out)?;
    run.input(&a.checkpoint);
    for (path, data) in &inputs {
        run.input(path);
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("input").to_string();
        match &params {
            AnyParams::F32(p) => export(&magnitudes(p, data)?, data, &stem, a.png, &mut run)?,
            AnyParams::F64(p) => export(&magnitudes(p, data)?, data, &stem, a.png, &mut run)?,
        }
    }
    run.finish(
        json!({ "checkpoint": a.checkpoint, "network": params.config(), "png": a.png }),
        serde_json::Value::Null,
    )?;
    Ok(())
}
