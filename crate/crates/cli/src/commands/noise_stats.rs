use serde::Serialize;
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::io::{read_split, split_path, write_png, Run};
use crate::NoiseStatsArgs;
use nexdenoise::container::Container;
use nexdenoise::noise::{
    chi2_overlay, fit_rayleigh, histogram, local_variance_map, mean_map, noise_map, pearson, rayleigh_chi2_statistic,
    rayleigh_pdf, signal_strengthened_map, Histogram, NcChi2Fit,
};
use nexdenoise::train::DatasetSplit;
use nexdenoise::{Image, Result, Tensor};

#[derive(Clone, Debug, Serialize)]
pub struct SliceStats {
    pub slice: usize,
    pub rayleigh_sigma: Option<f64>,
    pub rayleigh_chi2: Option<f64>,
    pub nc_chi2: Option<NcChi2Fit>,
    pub fit_error: Option<String>,
}

/// Statistics of the noise maps of every sample in a split.
#[derive(Clone, Debug, Serialize)]
pub struct PooledStats {
    pub samples: usize,
    pub rayleigh_sigma: f64,
    /// `sqrt(2) * sigma0` on the stored intensity scale.
    pub expected_sigma: f64,
    pub rayleigh_chi2: f64,
    pub bins: usize,
    pub nc_chi2: NcChi2Fit,
    /// Pearson r of the mean local-variance map against `gfactor^2`.
    pub variance_gfactor_r: Option<f64>,
}

/// Noise-map magnitude of sample `i` (first two acquisitions).
pub fn noise_magnitude(data: &DatasetSplit, i: usize) -> Result<Image<f64>> {
    Ok(noise_map(&data.nex(i, 0)?, &data.nex(i, 1)?)?.magnitude())
}

pub fn pooled_stats(data: &DatasetSplit, bins: usize, patch: usize) -> Result<PooledStats> {
    let mut all = Vec::new();
    let mut maps = Vec::new();
    for i in 0..data.len() {
        let m = noise_magnitude(data, i)?;
        maps.push(local_variance_map(&m, patch)?);
        all.extend_from_slice(m.data());
    }
    let sigma = fit_rayleigh(&all)?;
    let hist = histogram(&all, bins)?;
    let squared: Vec<f64> = all.iter().map(|v| v * v).collect();
    let (h, w) = data.dims();
    let gmap = data.meta.noise.map(h, w);
    let g2: Vec<f64> = gmap.data().iter().map(|g| g * g).collect();
    let varies = g2.iter().any(|&v| v != g2[0]);
    let variance_gfactor_r = match varies {
        true => Some(pearson(mean_map(&maps)?.data(), &g2)?),
        false => None,
    };
    Ok(PooledStats {
        samples: all.len(),
        rayleigh_sigma: sigma,
        expected_sigma: std::f64::consts::SQRT_2 * data.meta.sigma0 * data.meta.scale_factor,
        rayleigh_chi2: rayleigh_chi2_statistic(&hist, sigma),
        bins,
        nc_chi2: chi2_overlay(&squared)?,
        variance_gfactor_r,
    })
}

fn hist_csv(hist: &Histogram, density: impl Fn(f64) -> f64, fit_col: &str) -> String {
    let total = hist.total() as f64;
    let width = hist.bin_width();
    let mut out = format!("bin_lo,bin_hi,count,density,{fit_col}\n");
    for (k, &c) in hist.counts.iter().enumerate() {
        let (lo, hi) = (hist.edges[k], hist.edges[k + 1]);
        let d = if width > 0.0 { c as f64 / (total * width) } else { 0.0 };
        out.push_str(&format!("{lo:.8e},{hi:.8e},{c},{d:.8e},{:.8e}\n", density(0.5 * (lo + hi))));
    }
    out
}

fn save_map(run: &mut Run, name: &str, img: &Image<f64>, png: bool) -> CliResult<()> {
    let (h, w) = img.dims();
    let t = Tensor::from_vec([1, 1, h, w], img.data().to_vec())?;
    Container::from_tensor(name, &t).write(run.path(&format!("{name}.nxd")))?;
    run.record(&format!("{name}.nxd"));
    if png {
        write_png(&run.path(&format!("{name}.png")), img, img.max())?;
        run.record(&format!("{name}.png"));
    }
    Ok(())
}

fn slice_report(data: &DatasetSplit, i: usize, a: &NoiseStatsArgs, run: &mut Run) -> CliResult<SliceStats> {
    let png = !a.no_png;
    let (n1, n2) = (data.nex(i, 0)?, data.nex(i, 1)?);
    let signal = signal_strengthened_map(&n1, &n2)?.magnitude();
    let noise = noise_map(&n1, &n2)?.magnitude();
    save_map(run, &format!("signal_{i:04}"), &signal, png)?;
    save_map(run, &format!("noise_{i:04}"), &noise, png)?;
    save_map(run, &format!("local_variance_{i:04}"), &local_variance_map(&noise, a.patch)?, png)?;

    let mut stats = SliceStats { slice: i, rayleigh_sigma: None, rayleigh_chi2: None, nc_chi2: None, fit_error: None };
    let hist = histogram(noise.data(), a.bins)?;
    match fit_rayleigh(noise.data()) {
        Ok(sigma) => {
            stats.rayleigh_sigma = Some(sigma);
            stats.rayleigh_chi2 = Some(rayleigh_chi2_statistic(&hist, sigma));
            run.write(&format!("hist_rayleigh_{i:04}.csv"), hist_csv(&hist, |x| rayleigh_pdf(x, sigma), "rayleigh_pdf"))?;
        }
        Err(e) => stats.fit_error = Some(e.to_string()),
    }
    let squared: Vec<f64> = noise.data().iter().map(|v| v * v).collect();
    let hist2 = histogram(&squared, a.bins)?;
    match chi2_overlay(&squared) {
        Ok(fit) => {
            stats.nc_chi2 = Some(fit);
            run.write(&format!("hist_squared_{i:04}.csv"), hist_csv(&hist2, |x| fit.pdf(x), "nc_chi2_pdf"))?;
        }
        Err(e) => {
            stats.fit_error.get_or_insert(e.to_string());
        }
    }
    Ok(stats)
}

pub fn noise_stats(a: &NoiseStatsArgs) -> CliResult<()> {
    let path = split_path(&a.data, "test");
    let data = read_split(&path)?;
    if data.meta.input_nex < 2 {
        return Err(CliError::Data(format!(
            "noise maps need two acquisitions per slice; {} has {}",
            path.display(),
            data.meta.input_nex
        )));
    }
    let picks = if a.slices.is_empty() { vec![0] } else { a.slices.clone() };
    if let Some(&bad) = picks.iter().find(|&&i| i >= data.len()) {
        return Err(CliError::Usage(format!("slice {bad} out of range 0..{}", data.len())));
    }
    let mut run = Run::new("noise-stats", &a.out)?;
    run.input(&path);
    let per_slice = picks.iter().map(|&i| slice_report(&data, i, a, &mut run)).collect::<CliResult<Vec<_>>>()?;
    let pooled = pooled_stats(&data, a.bins, a.patch);
    let summary = json!({
        "slices": per_slice,
        "pooled": pooled.as_ref().ok(),
        "pooled_error": pooled.as_ref().err().map(|e| e.to_string()),
        "noise": data.meta.noise,
        "scale_factor": data.meta.scale_factor,
    });
    run.write("summary.json", serde_json::to_string_pretty(&summary)?)?;
    let config = json!({ "data": path, "slices": picks, "bins": a.bins, "patch": a.patch, "png": !a.no_png });
    match pooled {
        Ok(p) => {
            println!(
                "rayleigh sigma {:.6} (expected {:.6}), chi2 {:.2} over {} bins",
                p.rayleigh_sigma, p.expected_sigma, p.rayleigh_chi2, p.bins
            );
            if let Some(r) = p.variance_gfactor_r {
                println!("local variance vs gfactor^2: r = {r:.4}");
            }
            run.finish(config, serde_json::Value::Null)?;
            Ok(())
        }
        Err(e) => {
            run.finish(config, serde_json::Value::Null)?;
            Err(e.into())
        }
    }
}
