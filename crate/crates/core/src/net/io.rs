use serde::{Deserialize, Serialize};

use super::config::NetworkConfig;
use super::params::{build_network, LayerSummary, NetworkParams};
use crate::container::Container;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ParamsManifest {
    network: NetworkConfig,
    layers: Vec<LayerSummary>,
    /// `[momentum, epsilon]` of each batch-norm layer, in f64.
    batch_norm: Vec<Option<[f64; 2]>>,
}

impl<T: Scalar> NetworkParams<T> {
    /// Every parameter and running statistic as named blocks, with the
    /// layer audit in the manifest.
    pub fn to_container(&self, role: &str) -> Result<Container<T>> {
        let mut blocks: Vec<(String, Vec<usize>, &[T])> = Vec::new();
        for (idx, l) in self.layers.iter().enumerate() {
            let name = format!("{idx:02}.{}", l.role.name());
            blocks.push((format!("{name}.kernels"), l.conv.kernels.shape().to_vec(), l.conv.kernels.data()));
            blocks.push((format!("{name}.bias"), vec![l.conv.bias.len()], &l.conv.bias));
            if let Some(bn) = &l.bn {
                for (field, v) in [
                    ("gamma", &bn.gamma),
                    ("beta", &bn.beta),
                    ("running_mean", &bn.running_mean),
                    ("running_var", &bn.running_var),
                ] {
                    blocks.push((format!("{name}.{field}"), vec![v.len()], v));
                }
            }
        }
        let mut c = Container::from_blocks(role, blocks)?;
        let manifest = ParamsManifest {
            network: self.config,
            layers: self.audit(),
            batch_norm: self
                .layers
                .iter()
                .map(|l| l.bn.as_ref().map(|b| [b.momentum.to_f64_lossy(), b.epsilon.to_f64_lossy()]))
                .collect(),
        };
        c.header.manifest = serde_json::to_value(manifest)?;
        Ok(c)
    }

    pub fn from_container(c: &Container<T>) -> Result<Self> {
        let manifest: ParamsManifest = serde_json::from_value(c.header.manifest.clone())
            .map_err(|e| Error::Data(format!("not a parameter container: {e}")))?;
        let mut p = build_network::<T>(manifest.network, 0);
        if p.audit() != manifest.layers || manifest.batch_norm.len() != p.layers.len() {
            return Err(Error::Data("parameter manifest does not match the network layout".into()));
        }
        let fill = |dst: &mut [T], name: &str| -> Result<()> {
            let src = c.block(name)?;
            if src.len() != dst.len() {
                return Err(Error::Data(format!("block {name}: {} values, expected {}", src.len(), dst.len())));
            }
            dst.copy_from_slice(src);
            Ok(())
        };
        for (idx, l) in p.layers.iter_mut().enumerate() {
            let name = format!("{idx:02}.{}", l.role.name());
            fill(l.conv.kernels.data_mut(), &format!("{name}.kernels"))?;
            fill(&mut l.conv.bias, &format!("{name}.bias"))?;
            if let (Some(bn), Some([momentum, eps])) = (l.bn.as_mut(), manifest.batch_norm[idx]) {
                fill(&mut bn.gamma, &format!("{name}.gamma"))?;
                fill(&mut bn.beta, &format!("{name}.beta"))?;
                fill(&mut bn.running_mean, &format!("{name}.running_mean"))?;
                fill(&mut bn.running_var, &format!("{name}.running_var"))?;
                bn.momentum = T::lit(momentum);
                bn.epsilon = T::lit(eps);
            }
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{InputMode, Variant};

    #[test]
    fn params_round_trip_bit_exact() {
        for variant in [Variant::Full, Variant::Tra, Variant::Res] {
            let mut p = build_network::<f32>(NetworkConfig::new(InputMode::Dual, variant).with_widths(5, 3), 4);
            p.randomize_residual_heads(2);
            p.layers[0].bn.as_mut().unwrap().running_var[1] = 0.123;
            let c = p.to_container("params").unwrap();
            let back = NetworkParams::from_container(&Container::from_bytes(&c.to_bytes().unwrap()).unwrap()).unwrap();
            assert_eq!(back, p);
        }
    }
}
