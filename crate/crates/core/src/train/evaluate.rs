use super::dataset::DatasetSplit;
use crate::error::Result;
use crate::image::Image;
use crate::metrics::{evaluate_pair, SliceMetrics, SsimConfig};
use crate::net::{denoise, NetworkParams};
use crate::scalar::Scalar;
use crate::tensor::{magnitude, Tensor, MAGNITUDE_EPS};

pub const BASELINE_METHOD: &str = "2NEX-avg";
const EVAL_BATCH: usize = 8;

fn to_images<T: Scalar>(mags: &Tensor<T>) -> Result<Vec<Image<f64>>> {
    let (h, w) = (mags.height(), mags.width());
    (0..mags.batch())
        .map(|s| Image::from_vec(h, w, mags.plane(s, 0).iter().map(|v| v.to_f64_lossy()).collect()))
        .collect()
}

/// Magnitude of the input average, computed the way the network computes
/// its skip path.
pub fn baseline_magnitudes<T: Scalar>(data: &DatasetSplit, indices: &[usize]) -> Result<Tensor<T>> {
    magnitude(&data.input_average::<T>(indices)?, T::lit(MAGNITUDE_EPS))
}

/// Per-slice PSNR/SSIM of the network (label `method`) and, optionally, of
/// the input average, both against the target magnitude.
pub fn evaluate<T: Scalar>(
    params: Option<&NetworkParams<T>>,
    data: &DatasetSplit,
    method: &str,
    include_baseline: bool,
) -> Result<Vec<SliceMetrics>> {
    let cfg = SsimConfig::default();
    let all: Vec<usize> = (0..data.len()).collect();
    let mut model_rows = Vec::new();
    let mut base_rows = Vec::new();
    for chunk in all.chunks(EVAL_BATCH) {
        let targets = to_images(&data.target_magnitude::<T>(chunk)?)?;
        let push = |rows: &mut Vec<SliceMetrics>, label: &str, preds: Vec<Image<f64>>| -> Result<()> {
            for ((&i, p), t) in chunk.iter().zip(preds).zip(&targets) {
                let (psnr, ssim) = evaluate_pair(&p, t, &cfg)?;
                rows.push(SliceMetrics { method: label.to_string(), plane: data.meta.plane.clone(), slice: i, psnr, ssim });
            }
            Ok(())
        };
        if include_baseline {
            push(&mut base_rows, BASELINE_METHOD, to_images(&baseline_magnitudes::<T>(data, chunk)?)?)?;
        }
        if let Some(p) = params {
            let input = data.input_batch::<T>(chunk, p.config.input_mode)?;
            let (_, mags) = denoise(p, &input)?;
            push(&mut model_rows, method, to_images(&mags)?)?;
        }
    }
    base_rows.extend(model_rows);
    Ok(base_rows)
}
