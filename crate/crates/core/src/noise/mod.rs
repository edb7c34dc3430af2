//! Synthetic phantoms, multi-NEX acquisition and noise statistics.

mod acquisition;
mod phantom;
mod stats;

pub use acquisition::{acquire_nex, default_gfactor, noise_map, signal_strengthened_map, uniform_gfactor, NexSet};
pub use phantom::{generate_phantom, Ellipse, PhantomSpec, PhantomVolume, PhaseRamp, VolumeEllipse, MIN_PHANTOM_SIZE};
pub use stats::{
    chi2_overlay, chi2_overlay_with_scale, fit_rayleigh, histogram, local_variance_map, mean_map, pearson,
    rayleigh_cdf, rayleigh_chi2_statistic, rayleigh_moments, rayleigh_pdf, Histogram, NcChi2Fit, NoiseStats,
};
