use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::{NetworkConfig, COMPLEX_CHANNELS};
use crate::rng::{self, ids};
use crate::scalar::Scalar;
use crate::tensor::{BatchNormParams, ConvParams, KERNEL};

/// Position of a layer in the three-module layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Feature extraction layer 1..=6.
    Extract(u8),
    /// Transporting block of the bridge.
    Transport,
    /// Linear conv producing the first-stage residual.
    Residual1,
    /// Features of the intermediate output.
    ResidualFeatures,
    /// First assembly layer, fed by the bridge outputs.
    Consolidate,
    /// Assembly layer 1..=3 after the consolidation layer.
    Assembly(u8),
    /// Linear conv producing the second-stage residual.
    Residual2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModuleTag {
    Extract,
    BridgeTra,
    BridgeRes,
    Assembly,
}

/// Intermediate tensors named after the network diagram.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    B,
    C,
    E,
    F,
    G,
}

impl Role {
    pub fn module(self) -> ModuleTag {
        match self {
            Role::Extract(_) => ModuleTag::Extract,
            Role::Transport => ModuleTag::BridgeTra,
            Role::Residual1 | Role::ResidualFeatures => ModuleTag::BridgeRes,
            Role::Consolidate | Role::Assembly(_) | Role::Residual2 => ModuleTag::Assembly,
        }
    }

    pub fn produces(self) -> Option<Label> {
        match self {
            Role::Extract(6) => Some(Label::B),
            Role::Residual1 => Some(Label::C),
            Role::ResidualFeatures => Some(Label::E),
            Role::Transport => Some(Label::F),
            Role::Residual2 => Some(Label::G),
            _ => None,
        }
    }

    pub fn is_residual_head(self) -> bool {
        matches!(self, Role::Residual1 | Role::Residual2)
    }

    pub fn name(self) -> String {
        match self {
            Role::Extract(k) => format!("extract{k}"),
            Role::Transport => "transport".into(),
            Role::Residual1 => "residual1".into(),
            Role::ResidualFeatures => "residual_features".into(),
            Role::Consolidate => "consolidate".into(),
            Role::Assembly(k) => format!("assembly{k}"),
            Role::Residual2 => "residual2".into(),
        }
    }
}

/// conv -> optional BN -> optional ReLU.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    pub role: Role,
    pub conv: ConvParams<T>,
    pub bn: Option<BatchNormParams<T>>,
    pub relu: bool,
}

impl<T: Scalar> Layer<T> {
    /// A conv bias directly followed by batch norm cancels out, so it is held
    /// at zero and not trained.
    pub fn trains_bias(&self) -> bool {
        self.bn.is_none()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams<T> {
    pub config: NetworkConfig,
    pub layers: Vec<Layer<T>>,
}

/// One row of the architecture audit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub index: usize,
    pub role: Role,
    pub module: ModuleTag,
    pub produces: Option<Label>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: [usize; 2],
    pub stride: usize,
    pub padding: usize,
    pub batch_norm: bool,
    pub relu: bool,
}

/// `(role, c_in, c_out, bn, relu)` for every layer of `config`.
pub(crate) fn layout(config: &NetworkConfig) -> Vec<(Role, usize, usize, bool, bool)> {
    let (we, wb) = (config.extract_width, config.bridge_width);
    let mut v = Vec::with_capacity(14);
    v.push((Role::Extract(1), config.input_channels(), we, true, true));
    for k in 2..=6 {
        v.push((Role::Extract(k), we, we, true, true));
    }
    if config.variant.has_transport() {
        v.push((Role::Transport, we, wb, true, false));
    }
    if config.variant.has_residual() {
        v.push((Role::Residual1, we, COMPLEX_CHANNELS, false, false));
        v.push((Role::ResidualFeatures, COMPLEX_CHANNELS, wb, true, true));
    }
    let consolidate_in = if config.variant.has_transport() && config.variant.has_residual() { 2 * wb } else { wb };
    v.push((Role::Consolidate, consolidate_in, wb, true, true));
    for k in 1..=3 {
        v.push((Role::Assembly(k), wb, wb, true, true));
    }
    v.push((Role::Residual2, wb, COMPLEX_CHANNELS, false, false));
    v
}

/// He-initialized parameters; the two residual heads start at zero so the
/// untrained network returns the input average.
pub fn build_network<T: Scalar>(config: NetworkConfig, seed: u64) -> NetworkParams<T> {
    let layers = layout(&config)
        .into_iter()
        .enumerate()
        .map(|(idx, (role, c_in, c_out, bn, relu))| {
            let mut conv = ConvParams::zeros(c_out, c_in);
            if !role.is_residual_head() {
                he_fill(&mut conv, rng::derive_seed(seed, &[ids::INIT, idx as u64]));
            }
            Layer { role, conv, bn: bn.then(|| BatchNormParams::new(c_out)), relu }
        })
        .collect();
    NetworkParams { config, layers }
}

fn he_fill<T: Scalar>(conv: &mut ConvParams<T>, seed: u64) {
    let fan_in = conv.c_in() * KERNEL * KERNEL;
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("valid std");
    let mut r = rng::stream(seed, &[]);
    for v in conv.kernels.data_mut() {
        *v = T::lit(normal.sample(&mut r));
    }
}

impl<T: Scalar> NetworkParams<T> {
    pub fn layer_index(&self, role: Role) -> Option<usize> {
        self.layers.iter().position(|l| l.role == role)
    }

    pub fn layer(&self, role: Role) -> Option<&Layer<T>> {
        self.layers.iter().find(|l| l.role == role)
    }

    pub fn conv_count(&self) -> usize {
        self.layers.len()
    }

    pub fn audit(&self) -> Vec<LayerSummary> {
        self.layers
            .iter()
            .enumerate()
            .map(|(index, l)| LayerSummary {
                index,
                role: l.role,
                module: l.role.module(),
                produces: l.role.produces(),
                in_channels: l.conv.c_in(),
                out_channels: l.conv.c_out(),
                kernel: [l.conv.kernels.shape()[2], l.conv.kernels.shape()[3]],
                stride: 1,
                padding: 1,
                batch_norm: l.bn.is_some(),
                relu: l.relu,
            })
            .collect()
    }

    /// Random weights in the residual heads too; used to exercise every
    /// gradient path away from the zero-residual starting point.
    pub fn randomize_residual_heads(&mut self, seed: u64) {
        for (idx, l) in self.layers.iter_mut().enumerate() {
            if l.role.is_residual_head() {
                he_fill(&mut l.conv, rng::derive_seed(seed, &[ids::INIT, 1000 + idx as u64]));
                let mut r = rng::stream(seed, &[ids::INIT, 2000 + idx as u64]);
                let normal = Normal::new(0.0, 0.1).unwrap();
                for b in &mut l.conv.bias {
                    *b = T::lit(normal.sample(&mut r));
                }
            }
        }
    }

    /// Trainable parameter blocks in a fixed order with stable names.
    pub fn trainable_mut(&mut self) -> Vec<(String, &mut [T])> {
        let mut out = Vec::new();
        for (idx, l) in self.layers.iter_mut().enumerate() {
            let name = format!("{idx:02}.{}", l.role.name());
            let trains_bias = l.bn.is_none();
            out.push((format!("{name}.kernels"), l.conv.kernels.data_mut()));
            if trains_bias {
                out.push((format!("{name}.bias"), l.conv.bias.as_mut_slice()));
            }
            if let Some(bn) = l.bn.as_mut() {
                out.push((format!("{name}.gamma"), bn.gamma.as_mut_slice()));
                out.push((format!("{name}.beta"), bn.beta.as_mut_slice()));
            }
        }
        out
    }

    pub fn trainable(&self) -> Vec<(String, &[T])> {
        let mut out = Vec::new();
        for (idx, l) in self.layers.iter().enumerate() {
            let name = format!("{idx:02}.{}", l.role.name());
            out.push((format!("{name}.kernels"), l.conv.kernels.data()));
            if l.trains_bias() {
                out.push((format!("{name}.bias"), l.conv.bias.as_slice()));
            }
            if let Some(bn) = l.bn.as_ref() {
                out.push((format!("{name}.gamma"), bn.gamma.as_slice()));
                out.push((format!("{name}.beta"), bn.beta.as_slice()));
            }
        }
        out
    }

    pub fn trainable_count(&self) -> usize {
        self.trainable().iter().map(|(_, s)| s.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> NetworkParams<U> {
        let cv = |v: &[T]| v.iter().map(|x| U::lit(x.to_f64_lossy())).collect::<Vec<U>>();
        NetworkParams {
            config: self.config,
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    role: l.role,
                    conv: ConvParams { kernels: l.conv.kernels.cast(), bias: cv(&l.conv.bias) },
                    bn: l.bn.as_ref().map(|b| BatchNormParams {
                        gamma: cv(&b.gamma),
                        beta: cv(&b.beta),
                        running_mean: cv(&b.running_mean),
                        running_var: cv(&b.running_var),
                        momentum: U::lit(b.momentum.to_f64_lossy()),
                        epsilon: U::lit(b.epsilon.to_f64_lossy()),
                    }),
                    relu: l.relu,
                })
                .collect(),
        }
    }
}
