//! Per-slice metrics and mean ± std tables.

use serde::{Deserialize, Serialize};

use super::psnr::{psnr, Psnr};
use super::ssim::{ssim, SsimConfig};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;

/// PSNR and SSIM of one prediction against its target.
pub fn evaluate_pair<T: Scalar>(pred: &Image<T>, target: &Image<T>, cfg: &SsimConfig) -> Result<(Psnr, f64)> {
    Ok((psnr(pred, target)?, ssim(pred, target, cfg)?.to_f64_lossy()))
}

/// Sample mean and sample standard deviation (`n - 1` denominator).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Summary {
    pub fn format(&self, decimals: usize) -> String {
        format!("{:.*}±{:.*}", decimals, self.mean, decimals, self.std)
    }
}

pub fn aggregate(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::invalid("cannot aggregate an empty record set"));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n == 1 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    Ok(Summary { mean, std, n })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceMetrics {
    pub method: String,
    pub plane: String,
    pub slice: usize,
    pub psnr: Psnr,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub plane: String,
    /// Over slices with a finite PSNR.
    pub psnr: Summary,
    pub ssim: Summary,
    /// Slices whose prediction matched the target exactly.
    pub identical: usize,
}

/// Tables in the layout "method, plane, PSNR mean±std, SSIM mean±std".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Factor mapping magnitudes onto the 0..255 scale.
    pub scale_factor: f64,
    pub loss_form: String,
    pub rows: Vec<MetricsRow>,
    pub slices: Vec<SliceMetrics>,
}

impl MetricsReport {
    /// Groups slices by `(method, plane)` in first-seen order.
    pub fn from_slices(scale_factor: f64, loss_form: String, slices: Vec<SliceMetrics>) -> Result<Self> {
        let mut keys: Vec<(String, String)> = Vec::new();
        for s in &slices {
            let key = (s.method.clone(), s.plane.clone());
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        if keys.is_empty() {
            return Err(Error::invalid("no slices to report"));
        }
        let rows = keys
            .into_iter()
            .map(|(method, plane)| {
                let group: Vec<&SliceMetrics> =
                    slices.iter().filter(|s| s.method == method && s.plane == plane).collect();
                let finite: Vec<f64> = group.iter().filter_map(|s| s.psnr.db()).collect();
                let identical = group.len() - finite.len();
                let psnr = if finite.is_empty() {
                    Summary { mean: f64::NAN, std: f64::NAN, n: 0 }
                } else {
                    aggregate(&finite)?
                };
                let ssim = aggregate(&group.iter().map(|s| s.ssim).collect::<Vec<_>>())?;
                Ok(MetricsRow { method, plane, psnr, ssim, identical })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { scale_factor, loss_form, rows, slices })
    }

    pub fn row(&self, method: &str) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub const CSV_HEADER: &'static str =
        "method,plane,n,psnr_mean,psnr_std,ssim_mean,ssim_std,psnr,ssim,scale_factor,loss_form";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.4},{:.4},{:.5},{:.5},{},{},{},{}\n",
                r.method,
                r.plane,
                r.ssim.n,
                r.psnr.mean,
                r.psnr.std,
                r.ssim.mean,
                r.ssim.std,
                r.psnr.format(4),
                r.ssim.format(5),
                self.scale_factor,
                self.loss_form
            ));
        }
        out
    }

    pub fn slices_csv(&self) -> String {
        let mut out = String::from("method,plane,slice,psnr,ssim\n");
        for s in &self.slices {
            let p = s.psnr.db().map_or_else(|| "identical".to_string(), |v| format!("{v:.6}"));
            out.push_str(&format!("{},{},{},{},{:.8}\n", s.method, s.plane, s.slice, p, s.ssim));
        }
        out
    }
}
