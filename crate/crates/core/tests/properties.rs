use nexdenoise::container::Container;
use nexdenoise::image::Image;
use nexdenoise::metrics::{ssim, SsimConfig};
use nexdenoise::net::{build_network, forward, InputMode, NetworkConfig, Variant};
use nexdenoise::tensor::{
    channel_concat, channel_concat_backward, conv2d_forward, magnitude, ConvParams, Mode, Tensor,
};
use nexdenoise::train::{adam_step, lr_trace, AdamState};
use proptest::prelude::*;

fn tensor(shape: [usize; 4]) -> impl Strategy<Value = Tensor<f64>> {
    let len = shape.iter().product::<usize>();
    prop::collection::vec(-3.0f64..3.0, len).prop_map(move |v| Tensor::from_vec(shape, v).unwrap())
}

fn variant() -> impl Strategy<Value = Variant> {
    prop_oneof![Just(Variant::Full), Just(Variant::Tra), Just(Variant::Res)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conv_is_linear(x in tensor([2, 3, 5, 6]), y in tensor([2, 3, 5, 6]), k in tensor([2, 3, 3, 3]), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let p = ConvParams { kernels: k, bias: vec![0.0; 2] };
        let combo = Tensor::from_vec(x.shape(), x.data().iter().zip(y.data()).map(|(u, v)| a * u + b * v).collect()).unwrap();
        let lhs = conv2d_forward(&combo, &p).unwrap();
        let (cx, cy) = (conv2d_forward(&x, &p).unwrap(), conv2d_forward(&y, &p).unwrap());
        for i in 0..lhs.data().len() {
            let rhs = a * cx.data()[i] + b * cy.data()[i];
            prop_assert!((lhs.data()[i] - rhs).abs() < 1e-9 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn fresh_network_is_the_input_average(x in tensor([2, 4, 8, 8]), v in variant(), seed in 0u64..1000, eval in any::<bool>()) {
        let p = build_network::<f64>(NetworkConfig::new(InputMode::Dual, v).with_widths(6, 4), seed);
        let mode = if eval { Mode::Eval } else { Mode::Train };
        let t = forward(&p, &x, mode).unwrap();
        prop_assert_eq!(&t.h, &t.a_prime);
        for s in 0..2 {
            for c in 0..2 {
                for (i, &h) in t.h.plane(s, c).iter().enumerate() {
                    let avg = 0.5 * (x.plane(s, c)[i] + x.plane(s, c + 2)[i]);
                    prop_assert!((h - avg).abs() <= 1e-12 * (1.0 + avg.abs()));
                }
            }
        }
    }

    #[test]
    fn eval_forward_is_pure(x in tensor([1, 2, 8, 8]), v in variant(), seed in 0u64..1000) {
        let mut p = build_network::<f64>(NetworkConfig::new(InputMode::Single, v).with_widths(5, 3), seed);
        p.randomize_residual_heads(seed);
        let a = forward(&p, &x, Mode::Eval).unwrap();
        let b = forward(&p, &x, Mode::Eval).unwrap();
        prop_assert_eq!(a.h, b.h);
    }

    #[test]
    fn concat_backward_inverts_concat(a in tensor([1, 2, 3, 3]), b in tensor([1, 3, 3, 3])) {
        let (ga, gb) = channel_concat_backward(&channel_concat(&a, &b).unwrap(), 2).unwrap();
        prop_assert_eq!(ga, a);
        prop_assert_eq!(gb, b);
    }

    #[test]
    fn magnitude_is_non_negative(x in tensor([2, 2, 4, 4])) {
        prop_assert!(magnitude(&x, 0.0).unwrap().data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn ssim_is_symmetric_and_bounded(f in prop::collection::vec(0.0f64..255.0, 256), g in prop::collection::vec(0.0f64..255.0, 256)) {
        let (f, g) = (Image::from_vec(16, 16, f).unwrap(), Image::from_vec(16, 16, g).unwrap());
        let cfg = SsimConfig::default();
        let (a, b) = (ssim(&f, &g, &cfg).unwrap(), ssim(&g, &f, &cfg).unwrap());
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!(a <= 1.0 + 1e-12);
    }

    #[test]
    fn adam_second_moments_stay_non_negative(grads in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 4), 1..6)) {
        let mut p = vec![0.0f64; 4];
        let mut st = AdamState::new(&[("w".into(), 4)]);
        for (i, g) in grads.iter().enumerate() {
            adam_step(vec![("w".into(), &mut p[..])], &[("w".into(), &g[..])], &mut st, 1e-3).unwrap();
            prop_assert_eq!(st.step, i as u64 + 1);
            prop_assert!(st.v[0].iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn lr_drops_are_exact_factors(losses in prop::collection::vec(0.0f64..10.0, 1..60)) {
        let trace = lr_trace(&losses, 1e-4, 0.2, 10).unwrap();
        let mut prev = 1e-4;
        for &lr in &trace {
            prop_assert!(lr == prev || lr == prev * 0.2);
            prev = lr;
        }
    }

    #[test]
    fn container_round_trip_preserves_bits(bits in prop::collection::vec(any::<u64>(), 1..40)) {
        let vals: Vec<f64> = bits.iter().map(|&b| f64::from_bits(b)).collect();
        let c = Container::from_blocks("p", vec![("v".into(), vec![vals.len()], &vals[..])]).unwrap();
        let back = Container::<f64>::from_bytes(&c.to_bytes().unwrap()).unwrap();
        let got: Vec<u64> = back.block("v").unwrap().iter().map(|v| v.to_bits()).collect();
        prop_assert_eq!(got, bits);
    }
}
