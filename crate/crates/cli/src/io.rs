use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};
use nexdenoise::container::{read_header, Container};
use nexdenoise::net::NetworkParams;
use nexdenoise::train::DatasetSplit;
use nexdenoise::Image;

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: Value,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub seeds: Value,
    pub wall_time: f64,
}

/// Collects outputs of one command and writes its manifest last.
pub struct Run {
    command: String,
    out: PathBuf,
    start: Instant,
    inputs: Vec<String>,
    outputs: Vec<String>,
}

impl Run {
    pub fn new(command: &str, out: &Path) -> CliResult<Self> {
        fs::create_dir_all(out).map_err(|e| CliError::Data(format!("cannot create {}: {e}", out.display())))?;
        Ok(Self { command: command.into(), out: out.to_path_buf(), start: Instant::now(), inputs: vec![], outputs: vec![] })
    }

    pub fn input(&mut self, p: &Path) {
        self.inputs.push(p.display().to_string());
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> CliResult<PathBuf> {
        let p = self.path(name);
        fs::write(&p, contents).map_err(|e| CliError::Data(format!("cannot write {}: {e}", p.display())))?;
        self.record(name);
        Ok(p)
    }

    pub fn record(&mut self, name: &str) {
        if !self.outputs.iter().any(|o| o == name) {
            self.outputs.push(name.to_string());
        }
    }

    pub fn finish(self, config: Value, seeds: Value) -> CliResult<RunManifest> {
        let m = RunManifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            inputs: self.inputs,
            outputs: self.outputs,
            seeds,
            wall_time: self.start.elapsed().as_secs_f64(),
        };
        let p = self.out.join(MANIFEST);
        fs::write(&p, serde_json::to_string_pretty(&m)?)?;
        Ok(m)
    }
}

/// Reads a JSON config, or the defaults when no file is given.
pub fn load_config<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", p.display())))
        }
    }
}

/// A dataset directory resolves to its `<split>.nxd`; a file is used as is.
pub fn split_path(path: &Path, split: &str) -> PathBuf {
    if path.is_dir() {
        path.join(format!("{split}.nxd"))
    } else {
        path.to_path_buf()
    }
}

pub fn read_split(path: &Path) -> CliResult<DatasetSplit> {
    if !path.exists() {
        return Err(CliError::Data(format!("dataset {} does not exist", path.display())));
    }
    Ok(DatasetSplit::from_container(&Container::<f64>::read(path)?)?)
}

/// Parameters in the precision they were saved with.
pub enum AnyParams {
    F32(NetworkParams<f32>),
    F64(NetworkParams<f64>),
}

impl AnyParams {
    pub fn load(path: &Path) -> CliResult<Self> {
        if !path.exists() {
            return Err(CliError::Data(format!("checkpoint {} does not exist", path.display())));
        }
        match read_header(path)?.dtype.as_str() {
            "f32" => Ok(AnyParams::F32(NetworkParams::from_container(&Container::read(path)?)?)),
            "f64" => Ok(AnyParams::F64(NetworkParams::from_container(&Container::read(path)?)?)),
            other => Err(CliError::Data(format!("unsupported checkpoint dtype {other}"))),
        }
    }

    pub fn config(&self) -> nexdenoise::net::NetworkConfig {
        match self {
            AnyParams::F32(p) => p.config,
            AnyParams::F64(p) => p.config,
        }
    }
}

/// 8-bit grayscale PNG, linearly mapped so `max` becomes white.
pub fn write_png(path: &Path, img: &Image<f64>, max: f64) -> CliResult<()> {
    let (h, w) = img.dims();
    let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
    let pixels: Vec<u8> = img.data().iter().map(|&v| (v * scale).round().clamp(0.0, 255.0) as u8).collect();
    let file = fs::File::create(path)?;
    let mut enc = png::Encoder::new(std::io::BufWriter::new(file), w as u32, h as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| CliError::Data(e.to_string()))?;
    writer.write_image_data(&pixels).map_err(|e| CliError::Data(e.to_string()))?;
    Ok(())
}
