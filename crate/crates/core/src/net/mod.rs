//! The denoising network: six feature-extraction layers, a bridge with a
//! transporting block and a residual block, and an assembly module, with
//! residual learning in two stages.
//!
//! Layer layout of the full variant (every conv is 3x3, stride 1, padding 1):
//!
//! | # | role              | channels       | post    | output |
//! |---|-------------------|----------------|---------|--------|
//! | 1 | extract1          | in -> 128      | BN+ReLU |        |
//! | 2-6 | extract2..6     | 128 -> 128     | BN+ReLU | b      |
//! | 7 | transport         | 128 -> 64      | BN      | f      |
//! | 8 | residual1         | 128 -> 2       | linear  | c, d = c + a' |
//! | 9 | residual_features | 2 -> 64        | BN+ReLU | e      |
//! | 10 | consolidate      | [e, f] 128 -> 64 | BN+ReLU |      |
//! | 11-13 | assembly1..3  | 64 -> 64       | BN+ReLU |        |
//! | 14 | residual2        | 64 -> 2        | linear  | g, h = g + d |
//!
//! `tra` drops layers 8-9 (`d = a'`), `res` drops layer 7. The routing of
//! layers 8-10 is one consistent reading of the block diagram, not a given.

mod config;
mod forward;
mod io;
mod params;

pub use config::{InputMode, NetworkConfig, Variant, BRIDGE_WIDTH, COMPLEX_CHANNELS, EXTRACT_WIDTH};
pub use forward::{
    backward, denoise, denoise_slice, forward, slice_input, ForwardTrace, Gradients, LayerCache, LayerGrads,
};
pub use params::{build_network, Label, Layer, LayerSummary, ModuleTag, NetworkParams, Role};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::tensor::{channel_mean_pair, Mode, Tensor};
    use rand_distr::{Distribution, StandardNormal};

    fn random_input(shape: [usize; 4], seed: u64) -> Tensor<f64> {
        let mut r = rng::stream(seed, &[99]);
        Tensor::from_fn(shape, |_| StandardNormal.sample(&mut r))
    }

    fn small(mode: InputMode, variant: Variant) -> NetworkConfig {
        NetworkConfig::new(mode, variant).with_widths(6, 4)
    }

    #[test]
    fn full_dual_audit() {
        let p = build_network::<f32>(NetworkConfig::new(InputMode::Dual, Variant::Full), 1);
        let audit = p.audit();
        assert_eq!(audit.len(), 14);
        for s in &audit {
            assert_eq!((s.kernel, s.stride, s.padding), ([3, 3], 1, 1));
            match s.module {
                ModuleTag::Extract => assert_eq!(s.out_channels, 128),
                _ if s.role.is_residual_head() => {
                    assert_eq!(s.out_channels, 2);
                    assert!(!s.batch_norm && !s.relu);
                }
                _ => assert_eq!(s.out_channels, 64),
            }
        }
        assert_eq!(audit[0].in_channels, 4);
        let produced: Vec<_> = audit.iter().filter_map(|s| s.produces).collect();
        assert_eq!(produced, vec![Label::B, Label::F, Label::C, Label::E, Label::G]);
    }

    #[test]
    fn single_mode_and_variants() {
        let p = build_network::<f32>(NetworkConfig::new(InputMode::Single, Variant::Full), 1);
        assert_eq!(p.layers[0].conv.c_in(), 2);
        let tra = build_network::<f32>(NetworkConfig::new(InputMode::Dual, Variant::Tra), 1);
        assert_eq!(tra.conv_count(), 12);
        assert!(tra.layer(Role::Residual1).is_none() && tra.layer(Role::ResidualFeatures).is_none());
        assert_eq!(tra.layer(Role::Consolidate).unwrap().conv.c_in(), 64);
        let res = build_network::<f32>(NetworkConfig::new(InputMode::Dual, Variant::Res), 1);
        assert_eq!(res.conv_count(), 13);
        assert!(res.layer(Role::Transport).is_none());
        assert_eq!(res.layer(Role::Consolidate).unwrap().conv.c_in(), 64);
    }

    #[test]
    fn seeded_init_is_deterministic() {
        let cfg = small(InputMode::Dual, Variant::Full);
        assert_eq!(build_network::<f64>(cfg, 5), build_network::<f64>(cfg, 5));
        assert_ne!(build_network::<f64>(cfg, 5), build_network::<f64>(cfg, 6));
    }

    #[test]
    fn fresh_network_returns_input_average() {
        for variant in [Variant::Full, Variant::Tra, Variant::Res] {
            let p = build_network::<f64>(small(InputMode::Dual, variant), 3);
            let x = random_input([2, 4, 8, 8], 4);
            for mode in [Mode::Train, Mode::Eval] {
                let t = forward(&p, &x, mode).unwrap();
                assert_eq!(t.h, t.a_prime);
                assert_eq!(t.h, channel_mean_pair(&x).unwrap());
            }
        }
    }

    #[test]
    fn equal_pair_averages_to_itself() {
        let p = build_network::<f64>(small(InputMode::Dual, Variant::Full), 3);
        let one = random_input([1, 2, 8, 8], 8);
        let mut data = one.data().to_vec();
        data.extend_from_slice(one.data());
        let x = Tensor::from_vec([1, 4, 8, 8], data).unwrap();
        assert_eq!(forward(&p, &x, Mode::Eval).unwrap().a_prime, one);
    }

    #[test]
    fn output_shape_and_residual_identities() {
        let mut p = build_network::<f64>(small(InputMode::Dual, Variant::Full), 3);
        p.randomize_residual_heads(11);
        let x = random_input([1, 4, 16, 16], 2);
        let t = forward(&p, &x, Mode::Train).unwrap();
        assert_eq!(t.h.shape(), [1, 2, 16, 16]);
        let c = t.c.as_ref().unwrap();
        for i in 0..t.d.data().len() {
            assert!((t.d.data()[i] - (c.data()[i] + t.a_prime.data()[i])).abs() < 1e-12);
            assert!((t.h.data()[i] - (t.g.data()[i] + t.d.data()[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_channel_count_is_rejected() {
        let p = build_network::<f64>(small(InputMode::Dual, Variant::Full), 3);
        assert!(forward(&p, &random_input([1, 2, 8, 8], 1), Mode::Eval).is_err());
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let mut p = build_network::<f64>(small(InputMode::Dual, Variant::Full), 3);
        p.randomize_residual_heads(2);
        let x = random_input([1, 4, 8, 8], 2);
        let t = forward(&p, &x, Mode::Train).unwrap();
        let g = backward(&p, &t, &Tensor::zeros(t.h.shape())).unwrap();
        for (_, block) in g.blocks() {
            assert!(block.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn eval_trace_cannot_be_differentiated() {
        let p = build_network::<f64>(small(InputMode::Dual, Variant::Full), 3);
        let x = random_input([1, 4, 8, 8], 2);
        let t = forward(&p, &x, Mode::Eval).unwrap();
        assert!(backward(&p, &t, &t.h).is_err());
    }

    #[test]
    fn gradient_blocks_mirror_trainable_params() {
        for variant in [Variant::Full, Variant::Tra, Variant::Res] {
            let p = build_network::<f64>(small(InputMode::Single, variant), 3);
            let x = random_input([1, 2, 8, 8], 2);
            let t = forward(&p, &x, Mode::Train).unwrap();
            let g = backward(&p, &t, &t.h).unwrap();
            let names: Vec<_> = g.blocks().into_iter().map(|(n, s)| (n, s.len())).collect();
            let expect: Vec<_> = p.trainable().into_iter().map(|(n, s)| (n, s.len())).collect();
            assert_eq!(names, expect);
        }
    }

    #[test]
    fn eval_output_ignores_batch_companions() {
        let mut p = build_network::<f64>(small(InputMode::Dual, Variant::Full), 3);
        p.randomize_residual_heads(4);
        let batch = random_input([8, 4, 8, 8], 9);
        let t = forward(&p, &batch, Mode::Train).unwrap();
        p.update_running_stats(&t).unwrap();
        let (h8, _) = denoise(&p, &batch).unwrap();
        let (h1, _) = denoise(&p, &batch.gather(&[3])).unwrap();
        let diff = h1.data().iter().zip(h8.sample(3)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-6, "{diff}");
    }
}
