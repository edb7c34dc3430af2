use serde::{Deserialize, Serialize};

use crate::container::Container;
use crate::error::{Error, Result};
use crate::image::{ComplexImage, Image};
use crate::metrics::{psnr, PEAK};
use crate::net::InputMode;
use crate::noise::{acquire_nex, default_gfactor, generate_phantom, uniform_gfactor, PhantomVolume, MIN_PHANTOM_SIZE};
use crate::rng::{self, ids};
use crate::scalar::Scalar;
use crate::tensor::{channel_mean_pair, magnitude, Tensor, MAGNITUDE_EPS};

/// Spatial shape of the per-acquisition noise level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseProfile {
    Stationary,
    /// Smooth off-centre amplification, see [`default_gfactor`].
    Gfactor,
}

impl NoiseProfile {
    pub fn map(self, height: usize, width: usize) -> Image<f64> {
        match self {
            NoiseProfile::Stationary => uniform_gfactor(height, width),
            NoiseProfile::Gfactor => default_gfactor(height, width),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub train_volumes: usize,
    pub test_volumes: usize,
    pub slices_per_volume: usize,
    /// Square slice side length.
    pub image_size: usize,
    /// Acquisitions fed to the network.
    pub input_nex: usize,
    /// Further acquisitions averaged into the target.
    pub target_nex: usize,
    /// Per-component noise std relative to a unit-amplitude phantom; `None`
    /// calibrates it against `target_baseline_psnr`.
    pub sigma0: Option<f64>,
    pub target_baseline_psnr: f64,
    pub noise: NoiseProfile,
    pub seed: u64,
    pub plane: String,
    /// Volume ids are `train_seed_start..+train_volumes` and likewise for test.
    pub train_seed_start: u64,
    pub test_seed_start: u64,
    pub calibration_volumes: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            train_volumes: 50,
            test_volumes: 17,
            slices_per_volume: 8,
            image_size: 64,
            input_nex: 2,
            target_nex: 8,
            sigma0: None,
            target_baseline_psnr: 31.0,
            noise: NoiseProfile::Gfactor,
            seed: 0,
            plane: "sagittal".into(),
            train_seed_start: 0,
            test_seed_start: 100_000,
            calibration_volumes: 4,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_volumes == 0 || self.test_volumes == 0 || self.slices_per_volume == 0 {
            return Err(Error::invalid("volume and slice counts must be nonzero"));
        }
        if self.image_size < MIN_PHANTOM_SIZE {
            return Err(Error::invalid(format!("image_size must be at least {MIN_PHANTOM_SIZE}")));
        }
        if self.input_nex == 0 || self.target_nex == 0 {
            return Err(Error::invalid("input_nex and target_nex must be at least 1"));
        }
        if let Some(s) = self.sigma0 {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::invalid(format!("sigma0 must be finite and non-negative, got {s}")));
            }
        }
        let train = self.train_seed_start..self.train_seed_start + self.train_volumes as u64;
        let test = self.test_seed_start..self.test_seed_start + self.test_volumes as u64;
        if train.start < test.end && test.start < train.end {
            return Err(Error::invalid(format!("train volume ids {train:?} overlap test volume ids {test:?}")));
        }
        Ok(())
    }

    fn plane_id(&self) -> u64 {
        fnv1a(self.plane.as_bytes())
    }

    fn phantom_seed(&self, volume: u64) -> u64 {
        rng::derive_seed(self.seed, &[ids::PHANTOM, self.plane_id(), volume])
    }

    fn noise_seed(&self, stream: u64, volume: u64, slice: usize) -> u64 {
        rng::derive_seed(self.seed, &[stream, self.plane_id(), volume, slice as u64])
    }
}

/// 64-bit FNV-1a, used for stable ids of labels and configs.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitMeta {
    pub split: String,
    pub plane: String,
    /// Volume id of every sample, in sample order.
    pub volumes: Vec<u64>,
    /// Slice index within its volume of every sample.
    pub slices: Vec<usize>,
    pub phantom_seeds: Vec<u64>,
    pub input_nex: usize,
    pub target_nex: usize,
    pub sigma0: f64,
    pub noise: NoiseProfile,
    /// Applied to every stored value so target magnitudes span 0..255.
    pub scale_factor: f64,
    /// Mean PSNR of the input average against the target, in dB.
    pub baseline_psnr: f64,
}

/// Samples stacked as `[N, C, H, W]`: `input_nex` complex acquisitions, then
/// the complex target average, then the noiseless phantom.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub meta: SplitMeta,
    pub samples: Tensor<f64>,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.samples.batch()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.samples.height(), self.samples.width())
    }

    fn target_channel(&self) -> usize {
        2 * self.meta.input_nex
    }

    /// Network input for `indices`.
    pub fn input_batch<T: Scalar>(&self, indices: &[usize], mode: InputMode) -> Result<Tensor<T>> {
        if self.meta.input_nex != 2 {
            return Err(Error::Data(format!("the network needs 2 input NEX, dataset has {}", self.meta.input_nex)));
        }
        let dual: Tensor<T> = self.samples.gather(indices).channel_slice(0, 4)?.cast();
        match mode {
            InputMode::Dual => Ok(dual),
            InputMode::Single => channel_mean_pair(&dual),
        }
    }

    /// Complex average of the input acquisitions.
    pub fn input_average<T: Scalar>(&self, indices: &[usize]) -> Result<Tensor<T>> {
        self.input_batch(indices, InputMode::Single)
    }

    pub fn target<T: Scalar>(&self, indices: &[usize]) -> Result<Tensor<T>> {
        let c = self.target_channel();
        Ok(self.samples.gather(indices).channel_slice(c, c + 2)?.cast())
    }

    pub fn target_magnitude<T: Scalar>(&self, indices: &[usize]) -> Result<Tensor<T>> {
        magnitude(&self.target::<T>(indices)?, T::lit(MAGNITUDE_EPS))
    }

    pub fn clean(&self, index: usize) -> Result<ComplexImage> {
        let c = self.target_channel() + 2;
        self.complex(index, c)
    }

    /// Acquisition `nex` of sample `index`.
    pub fn nex(&self, index: usize, nex: usize) -> Result<ComplexImage> {
        if nex >= self.meta.input_nex {
            return Err(Error::invalid(format!("sample has {} input NEX", self.meta.input_nex)));
        }
        self.complex(index, 2 * nex)
    }

    pub fn target_image(&self, index: usize) -> Result<ComplexImage> {
        self.complex(index, self.target_channel())
    }

    fn complex(&self, index: usize, channel: usize) -> Result<ComplexImage> {
        if index >= self.len() {
            return Err(Error::invalid(format!("sample {index} out of range 0..{}", self.len())));
        }
        let (h, w) = self.dims();
        ComplexImage::new(
            Image::from_vec(h, w, self.samples.plane(index, channel).to_vec())?,
            Image::from_vec(h, w, self.samples.plane(index, channel + 1).to_vec())?,
        )
    }

    /// Sample indices grouped by volume, in first-seen order.
    pub fn volume_groups(&self) -> Vec<(u64, Vec<usize>)> {
        let mut groups: Vec<(u64, Vec<usize>)> = Vec::new();
        for (i, &v) in self.meta.volumes.iter().enumerate() {
            match groups.iter_mut().find(|(id, _)| *id == v) {
                Some((_, g)) => g.push(i),
                None => groups.push((v, vec![i])),
            }
        }
        groups
    }

    pub fn to_container(&self) -> Result<Container<f64>> {
        let mut c = Container::from_tensor("dataset", &self.samples);
        c.header.scaling = serde_json::json!({ "scale_factor": self.meta.scale_factor, "peak": PEAK });
        c.header.provenance = serde_json::json!({ "phantom_seeds": self.meta.phantom_seeds, "volumes": self.meta.volumes });
        c.header.manifest = serde_json::to_value(&self.meta)?;
        Ok(c)
    }

    pub fn from_container(c: &Container<f64>) -> Result<Self> {
        if c.header.role != "dataset" {
            return Err(Error::Data(format!("expected a dataset container, got role {:?}", c.header.role)));
        }
        let meta: SplitMeta = serde_json::from_value(c.header.manifest.clone())?;
        let samples = c.tensor()?;
        if samples.channels() != 2 * meta.input_nex + 4 || meta.volumes.len() != samples.batch() {
            return Err(Error::Data("dataset header disagrees with its payload".into()));
        }
        Ok(Self { meta, samples })
    }
}

struct RawSlice {
    volume: u64,
    slice: usize,
    phantom_seed: u64,
    nex: Vec<ComplexImage>,
    target: ComplexImage,
    clean: ComplexImage,
}

fn clean_slices(cfg: &DatasetConfig, volume: u64) -> Result<Vec<ComplexImage>> {
    let n = cfg.image_size;
    let vol = PhantomVolume::random(cfg.phantom_seed(volume), n, n);
    (0..cfg.slices_per_volume).map(|s| generate_phantom(&vol.slice_spec(s, cfg.slices_per_volume))).collect()
}

fn acquire(cfg: &DatasetConfig, clean: &ComplexImage, sigma0: f64, gmap: &Image<f64>, seed: u64) -> Result<(Vec<ComplexImage>, ComplexImage)> {
    let total = cfg.input_nex + cfg.target_nex;
    let nex = if sigma0 == 0.0 {
        vec![clean.clone(); total]
    } else {
        acquire_nex(clean, sigma0, gmap, total, seed)?.slices
    };
    let target = ComplexImage::average(&nex[cfg.input_nex..])?;
    Ok((nex[..cfg.input_nex].to_vec(), target))
}

fn raw_split(cfg: &DatasetConfig, start: u64, count: usize, sigma0: f64, stream: u64) -> Result<Vec<RawSlice>> {
    let gmap = cfg.noise.map(cfg.image_size, cfg.image_size);
    let mut out = Vec::with_capacity(count * cfg.slices_per_volume);
    for volume in start..start + count as u64 {
        for (slice, clean) in clean_slices(cfg, volume)?.into_iter().enumerate() {
            let (nex, target) = acquire(cfg, &clean, sigma0, &gmap, cfg.noise_seed(stream, volume, slice))?;
            out.push(RawSlice { volume, slice, phantom_seed: cfg.phantom_seed(volume), nex, target, clean });
        }
    }
    Ok(out)
}

fn max_target_magnitude(raw: &[RawSlice]) -> f64 {
    raw.iter().flat_map(|r| r.target.magnitude().into_data()).fold(0.0, f64::max)
}

/// Mean baseline PSNR after scaling targets so their maximum maps to 255.
fn baseline_psnr(raw: &[RawSlice], scale: f64) -> Result<f64> {
    let mut total = 0.0;
    for r in raw {
        let avg = ComplexImage::average(&r.nex)?.scale(scale).magnitude();
        let tgt = r.target.scale(scale).magnitude();
        total += psnr(&avg, &tgt)?.db().unwrap_or(f64::INFINITY);
    }
    Ok(total / raw.len() as f64)
}

/// Bisects `sigma0` (in log space, with frozen noise draws) until the mean
/// baseline PSNR on a few training volumes hits `target_baseline_psnr`.
pub fn calibrate_sigma0(cfg: &DatasetConfig) -> Result<f64> {
    cfg.validate()?;
    let volumes = cfg.calibration_volumes.clamp(1, cfg.train_volumes);
    let clean: Vec<(u64, usize, ComplexImage)> = (cfg.train_seed_start..cfg.train_seed_start + volumes as u64)
        .map(|v| clean_slices(cfg, v).map(|s| s.into_iter().enumerate().map(move |(i, c)| (v, i, c))))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let gmap = cfg.noise.map(cfg.image_size, cfg.image_size);
    let eval = |sigma: f64| -> Result<f64> {
        let mut raw = Vec::with_capacity(clean.len());
        for (v, s, c) in &clean {
            let (nex, target) = acquire(cfg, c, sigma, &gmap, cfg.noise_seed(ids::CALIBRATION, *v, *s))?;
            raw.push(RawSlice { volume: *v, slice: *s, phantom_seed: 0, nex, target, clean: c.clone() });
        }
        baseline_psnr(&raw, 255.0 / max_target_magnitude(&raw))
    };
    let (mut lo, mut hi) = (1e-5f64.ln(), 10f64.ln());
    if eval(lo.exp())? < cfg.target_baseline_psnr || eval(hi.exp())? > cfg.target_baseline_psnr {
        return Err(Error::invalid(format!(
            "target baseline PSNR {} dB is outside the reachable range",
            cfg.target_baseline_psnr
        )));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if eval(mid.exp())? > cfg.target_baseline_psnr {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

fn assemble(cfg: &DatasetConfig, split: &str, raw: Vec<RawSlice>, sigma0: f64, scale: f64) -> Result<DatasetSplit> {
    let n = cfg.image_size;
    let channels = 2 * cfg.input_nex + 4;
    let mut data = Vec::with_capacity(raw.len() * channels * n * n);
    for r in &raw {
        for img in r.nex.iter().chain([&r.target, &r.clean]) {
            data.extend(img.re.data().iter().map(|v| v * scale));
            data.extend(img.im.data().iter().map(|v| v * scale));
        }
    }
    let baseline = baseline_psnr(&raw, scale)?;
    let meta = SplitMeta {
        split: split.to_string(),
        plane: cfg.plane.clone(),
        volumes: raw.iter().map(|r| r.volume).collect(),
        slices: raw.iter().map(|r| r.slice).collect(),
        phantom_seeds: raw.iter().map(|r| r.phantom_seed).collect(),
        input_nex: cfg.input_nex,
        target_nex: cfg.target_nex,
        sigma0,
        noise: cfg.noise,
        scale_factor: scale,
        baseline_psnr: baseline,
    };
    Ok(DatasetSplit { meta, samples: Tensor::from_vec([raw.len(), channels, n, n], data)? })
}

/// Builds the train and test splits from disjoint phantom volumes. Both are
/// scaled by the factor that maps the largest training target to 255.
pub fn build_dataset(cfg: &DatasetConfig) -> Result<(DatasetSplit, DatasetSplit)> {
    cfg.validate()?;
    let sigma0 = match cfg.sigma0 {
        Some(s) => s,
        None => calibrate_sigma0(cfg)?,
    };
    let train = raw_split(cfg, cfg.train_seed_start, cfg.train_volumes, sigma0, ids::NOISE)?;
    let test = raw_split(cfg, cfg.test_seed_start, cfg.test_volumes, sigma0, ids::NOISE)?;
    let peak = max_target_magnitude(&train);
    if !(peak > 0.0) {
        return Err(Error::Data("training targets are all zero".into()));
    }
    let scale = 255.0 / peak;
    Ok((assemble(cfg, "train", train, sigma0, scale)?, assemble(cfg, "test", test, sigma0, scale)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> DatasetConfig {
        DatasetConfig {
            train_volumes: 3,
            test_volumes: 2,
            slices_per_volume: 2,
            image_size: 32,
            calibration_volumes: 2,
            ..Default::default()
        }
    }

    #[test]
    fn splits_have_disjoint_phantoms_and_shared_scale() {
        let (train, test) = build_dataset(&tiny()).unwrap();
        assert_eq!(train.len(), 6);
        assert_eq!(test.len(), 4);
        assert_eq!(train.samples.shape(), [6, 8, 32, 32]);
        assert!(train.meta.phantom_seeds.iter().all(|s| !test.meta.phantom_seeds.contains(s)));
        assert_eq!(train.meta.scale_factor, test.meta.scale_factor);
        let peak = (0..train.len())
            .map(|i| train.target_image(i).unwrap().magnitude().max())
            .fold(0.0, f64::max);
        assert!((peak - 255.0).abs() < 1e-9);
    }

    #[test]
    fn calibration_hits_target() {
        let (train, _) = build_dataset(&DatasetConfig { train_volumes: 4, ..tiny() }).unwrap();
        assert!((train.meta.baseline_psnr - 31.0).abs() < 1.0, "{}", train.meta.baseline_psnr);
    }

    #[test]
    fn overlapping_ids_are_rejected() {
        let cfg = DatasetConfig { test_seed_start: 2, ..tiny() };
        assert!(build_dataset(&cfg).is_err());
    }

    #[test]
    fn noiseless_dataset_copies_phantom() {
        let (train, _) = build_dataset(&DatasetConfig { sigma0: Some(0.0), ..tiny() }).unwrap();
        assert_eq!(train.nex(0, 0).unwrap(), train.clean(0).unwrap());
        let (a, b) = (train.nex(0, 1).unwrap(), train.target_image(0).unwrap());
        let diff = a.sub(&b).unwrap().magnitude().max();
        assert!(diff < 1e-12, "{diff}");
    }

    #[test]
    fn container_round_trip() {
        let (train, _) = build_dataset(&DatasetConfig { sigma0: Some(0.05), ..tiny() }).unwrap();
        let c = train.to_container().unwrap();
        let back = DatasetSplit::from_container(&Container::from_bytes(&c.to_bytes().unwrap()).unwrap()).unwrap();
        assert_eq!(back, train);
    }

    #[test]
    fn builds_are_deterministic() {
        let cfg = DatasetConfig { sigma0: Some(0.05), ..tiny() };
        assert_eq!(build_dataset(&cfg).unwrap(), build_dataset(&cfg).unwrap());
    }
}
