mod ablate;
mod denoise;
mod evaluate;
mod noise_stats;
mod simulate;
mod train;

pub use ablate::ablate;
pub use denoise::denoise;
pub use evaluate::evaluate;
pub use noise_stats::noise_stats;
pub use simulate::simulate;
pub use train::train;
