use serde::{Deserialize, Serialize};

use super::dataset::DatasetSplit;
use super::evaluate::{evaluate, BASELINE_METHOD};
use super::trainer::{train, RunOptions, TrainConfig, TrainingHistory};
use crate::error::{Error, Result};
use crate::metrics::{MetricsReport, SliceMetrics};
use crate::net::{InputMode, Variant};
use crate::scalar::Scalar;

/// Row label of a trained model.
pub fn method_label(mode: InputMode, variant: Variant) -> String {
    match mode {
        InputMode::Dual => variant.model_name().to_string(),
        InputMode::Single => format!("{} (single)", variant.model_name()),
    }
}

/// The four trained configurations of the comparison.
pub const ABLATION_RUNS: [(InputMode, Variant); 4] = [
    (InputMode::Dual, Variant::Full),
    (InputMode::Dual, Variant::Tra),
    (InputMode::Dual, Variant::Res),
    (InputMode::Single, Variant::Full),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub input_mode: InputMode,
    pub variant: Variant,
    pub method: String,
    pub psnr_mean: f64,
    pub ssim_mean: f64,
    pub history: TrainingHistory,
    pub slices: Vec<SliceMetrics>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Trains one configuration and scores its best checkpoint on `test`.
pub fn train_and_evaluate<T: Scalar>(config: &TrainConfig, train_set: &DatasetSplit, test: &DatasetSplit) -> Result<RunResult> {
    let outcome = train::<T>(config, train_set, &RunOptions::default())?;
    let method = method_label(config.input_mode, config.variant);
    let slices = evaluate(Some(&outcome.best), test, &method, false)?;
    Ok(RunResult {
        seed: config.seed,
        input_mode: config.input_mode,
        variant: config.variant,
        psnr_mean: mean(slices.iter().map(|s| s.psnr.db().unwrap_or(f64::INFINITY))),
        ssim_mean: mean(slices.iter().map(|s| s.ssim)),
        method,
        history: outcome.history,
        slices,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    /// All methods, slices pooled over seeds.
    pub report: MetricsReport,
    pub runs: Vec<RunResult>,
}

impl AblationReport {
    /// Adds the baseline rows, computed in the same precision `T` as the runs.
    pub fn from_runs<T: Scalar>(test: &DatasetSplit, loss_form: String, runs: Vec<RunResult>) -> Result<Self> {
        let mut slices = evaluate::<T>(None, test, "", true)?;
        for r in &runs {
            slices.extend(r.slices.iter().cloned());
        }
        Ok(Self { report: MetricsReport::from_slices(test.meta.scale_factor, loss_form, slices)?, runs })
    }

    fn subset(&self, methods: &[String]) -> Result<MetricsReport> {
        let rows = methods.iter().filter_map(|m| self.report.row(m).cloned()).collect::<Vec<_>>();
        if rows.is_empty() {
            return Err(Error::invalid("no matching methods in the report"));
        }
        Ok(MetricsReport {
            scale_factor: self.report.scale_factor,
            loss_form: self.report.loss_form.clone(),
            slices: self.report.slices.iter().filter(|s| methods.contains(&s.method)).cloned().collect(),
            rows,
        })
    }

    /// Baseline against single- and dual-input models.
    pub fn input_comparison(&self) -> Result<MetricsReport> {
        self.subset(&[
            BASELINE_METHOD.to_string(),
            method_label(InputMode::Single, Variant::Full),
            method_label(InputMode::Dual, Variant::Full),
        ])
    }

    /// Full model against its bridge variants.
    pub fn variant_comparison(&self) -> Result<MetricsReport> {
        self.subset(&[Variant::Full, Variant::Tra, Variant::Res].map(|v| method_label(InputMode::Dual, v)))
    }

    /// Mean over seeds of the per-seed mean PSNR of `method`.
    pub fn seed_mean_psnr(&self, method: &str) -> Option<f64> {
        let v: Vec<f64> = self.runs.iter().filter(|r| r.method == method).map(|r| r.psnr_mean).collect();
        (!v.is_empty()).then(|| mean(v.into_iter()))
    }

    pub fn seeds_csv(&self) -> String {
        let mut out = String::from("method,seed,psnr_mean,ssim_mean,epochs\n");
        for r in &self.runs {
            out.push_str(&format!(
                "{},{},{:.6},{:.8},{}\n",
                r.method,
                r.seed,
                r.psnr_mean,
                r.ssim_mean,
                r.history.epochs.len()
            ));
        }
        out
    }
}

/// Trains every configuration of [`ABLATION_RUNS`] for each seed under the
/// same budget as `base`.
pub fn run_ablation<T: Scalar>(
    train_set: &DatasetSplit,
    test: &DatasetSplit,
    base: &TrainConfig,
    seeds: &[u64],
) -> Result<AblationReport> {
    if seeds.is_empty() {
        return Err(Error::invalid("at least one seed is required"));
    }
    let mut runs = Vec::new();
    for &seed in seeds {
        for (input_mode, variant) in ABLATION_RUNS {
            let cfg = TrainConfig { seed, input_mode, variant, ..base.clone() };
            runs.push(train_and_evaluate::<T>(&cfg, train_set, test)?);
        }
    }
    AblationReport::from_runs::<T>(test, base.loss_form.label(), runs)
}
