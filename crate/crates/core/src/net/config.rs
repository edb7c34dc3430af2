use serde::{Deserialize, Serialize};

/// Whether the two NEX acquisitions enter separately or pre-averaged.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputMode {
    /// `[Re1, Im1, Re2, Im2]`.
    Dual,
    /// `[Re_avg, Im_avg]`.
    Single,
}

/// Which bridge blocks are present.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Transporting and residual blocks.
    Full,
    /// Transporting block only.
    Tra,
    /// Residual block only.
    Res,
}

impl Variant {
    pub fn has_transport(self) -> bool {
        matches!(self, Variant::Full | Variant::Tra)
    }

    pub fn has_residual(self) -> bool {
        matches!(self, Variant::Full | Variant::Res)
    }

    /// Row label in ablation tables.
    pub fn model_name(self) -> &'static str {
        match self {
            Variant::Full => "Model",
            Variant::Tra => "Model-Tra",
            Variant::Res => "Model-Res",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "full" => Ok(Variant::Full),
            "tra" => Ok(Variant::Tra),
            "res" => Ok(Variant::Res),
            other => Err(format!("unknown variant {other:?} (full|tra|res)")),
        }
    }
}

impl std::str::FromStr for InputMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "dual" => Ok(InputMode::Dual),
            "single" => Ok(InputMode::Single),
            other => Err(format!("unknown input mode {other:?} (dual|single)")),
        }
    }
}

pub const EXTRACT_WIDTH: usize = 128;
pub const BRIDGE_WIDTH: usize = 64;
/// Real and imaginary planes of one complex image.
pub const COMPLEX_CHANNELS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_mode: InputMode,
    pub variant: Variant,
    /// Channels of the six feature-extraction layers.
    pub extract_width: usize,
    /// Channels of the bridge and assembly layers.
    pub bridge_width: usize,
}

impl NetworkConfig {
    pub fn new(input_mode: InputMode, variant: Variant) -> Self {
        Self { input_mode, variant, extract_width: EXTRACT_WIDTH, bridge_width: BRIDGE_WIDTH }
    }

    /// Same topology with narrower layers, for exhaustive gradient checks.
    pub fn with_widths(self, extract_width: usize, bridge_width: usize) -> Self {
        Self { extract_width, bridge_width, ..self }
    }

    pub fn input_channels(&self) -> usize {
        match self.input_mode {
            InputMode::Dual => 2 * COMPLEX_CHANNELS,
            InputMode::Single => COMPLEX_CHANNELS,
        }
    }
}
