//! Finite-difference checks of the network backward pass, loss = sum(h^2).

use nexdenoise::net::{backward, build_network, forward, InputMode, NetworkConfig, NetworkParams, Variant};
use nexdenoise::rng;
use nexdenoise::tensor::{Mode, Tensor};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

fn loss(p: &NetworkParams<f64>, x: &Tensor<f64>) -> f64 {
    forward(p, x, Mode::Train).unwrap().h.sum_squares()
}

fn analytic(p: &NetworkParams<f64>, x: &Tensor<f64>) -> (Vec<Vec<f64>>, Tensor<f64>) {
    let t = forward(p, x, Mode::Train).unwrap();
    let g = backward(p, &t, &t.h.scale(2.0)).unwrap();
    (g.blocks().into_iter().map(|(_, s)| s.to_vec()).collect(), g.input)
}

fn input(channels: usize, seed: u64) -> Tensor<f64> {
    let mut r = rng::stream(seed, &[7]);
    Tensor::from_fn([1, channels, 8, 8], |_| StandardNormal.sample(&mut r))
}

/// Central difference, retried with a smaller step when a ReLU kink makes
/// the first one disagree.
fn fd_param(p: &mut NetworkParams<f64>, x: &Tensor<f64>, block: usize, i: usize, expect: f64, floor: f64) -> f64 {
    let mut best = f64::INFINITY;
    for h in [1e-5, 1e-6, 1e-4] {
        let orig = p.trainable_mut()[block].1[i];
        p.trainable_mut()[block].1[i] = orig + h;
        let up = loss(p, x);
        p.trainable_mut()[block].1[i] = orig - h;
        let down = loss(p, x);
        p.trainable_mut()[block].1[i] = orig;
        let err = rel_err((up - down) / (2.0 * h), expect, floor);
        best = best.min(err);
        if best < 1e-4 {
            break;
        }
    }
    best
}

fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

fn check_every_parameter(cfg: NetworkConfig, seed: u64) {
    let mut p = build_network::<f64>(cfg, seed);
    p.randomize_residual_heads(seed + 1);
    let x = input(cfg.input_channels(), seed + 2);
    let (grads, gin) = analytic(&p, &x);
    let scale = grads.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = 1e-7 * scale;
    let mut worst = (0.0, String::new());
    let names: Vec<String> = p.trainable().into_iter().map(|(n, _)| n).collect();
    for (b, g) in grads.iter().enumerate() {
        for (i, &expect) in g.iter().enumerate() {
            let err = fd_param(&mut p, &x, b, i, expect, floor);
            if err > worst.0 {
                worst = (err, format!("{}[{i}]", names[b]));
            }
        }
    }
    assert!(worst.0 < 1e-4, "{cfg:?}: worst relative error {:.3e} at {}", worst.0, worst.1);

    let h = 1e-5;
    for i in 0..x.data().len() {
        let mut xp = x.clone();
        xp.data_mut()[i] += h;
        let mut xm = x.clone();
        xm.data_mut()[i] -= h;
        let fd = (loss(&p, &xp) - loss(&p, &xm)) / (2.0 * h);
        let err = rel_err(fd, gin.data()[i], floor);
        assert!(err < 1e-4, "{cfg:?}: input grad {i} rel err {err:.3e}");
    }
}

#[test]
fn narrow_networks_match_finite_differences_everywhere() {
    for mode in [InputMode::Dual, InputMode::Single] {
        for variant in [Variant::Full, Variant::Tra, Variant::Res] {
            check_every_parameter(NetworkConfig::new(mode, variant).with_widths(4, 3), 21);
        }
    }
}

/// The full-width network has ~10^6 parameters; check a random sample of
/// coordinates in every block plus a random directional derivative.
#[test]
fn full_width_network_matches_finite_differences() {
    let cfg = NetworkConfig::new(InputMode::Dual, Variant::Full);
    let mut p = build_network::<f64>(cfg, 5);
    p.randomize_residual_heads(6);
    let x = input(4, 8);
    let (grads, _) = analytic(&p, &x);
    let scale = grads.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = 1e-7 * scale;
    let mut r = rng::stream(9, &[]);
    for (b, g) in grads.iter().enumerate() {
        for k in 0..6 {
            let i = if k == 0 { g.len() - 1 } else { r.random_range(0..g.len()) };
            let err = fd_param(&mut p, &x, b, i, g[i], floor);
            assert!(err < 1e-4, "block {b} index {i}: rel err {err:.3e}");
        }
    }

    let mut dir: Vec<Vec<f64>> = grads.iter().map(|g| g.iter().map(|_| StandardNormal.sample(&mut r)).collect()).collect();
    let norm = dir.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    dir.iter_mut().flatten().for_each(|v| *v /= norm);
    let expect: f64 = grads.iter().flatten().zip(dir.iter().flatten()).map(|(a, b)| a * b).sum();
    let shifted = |p: &NetworkParams<f64>, t: f64| {
        let mut q = p.clone();
        for ((_, block), d) in q.trainable_mut().into_iter().zip(&dir) {
            for (v, dv) in block.iter_mut().zip(d) {
                *v += t * dv;
            }
        }
        loss(&q, &x)
    };
    let err = [1e-4, 1e-5, 1e-6]
        .iter()
        .map(|&h| rel_err((shifted(&p, h) - shifted(&p, -h)) / (2.0 * h), expect, 0.0))
        .fold(f64::INFINITY, f64::min);
    assert!(err < 1e-4, "directional derivative rel err {err:.3e}");
}

#[test]
fn every_parameter_receives_gradient() {
    for variant in [Variant::Full, Variant::Tra, Variant::Res] {
        let cfg = NetworkConfig::new(InputMode::Dual, variant);
        let mut p = build_network::<f64>(cfg, 13);
        p.randomize_residual_heads(14);
        let mut seen: Option<Vec<Vec<bool>>> = None;
        for s in 0..3 {
            let (grads, _) = analytic(&p, &input(4, 100 + s));
            let hit: Vec<Vec<bool>> = grads.iter().map(|g| g.iter().map(|&v| v != 0.0).collect()).collect();
            seen = Some(match seen {
                None => hit,
                Some(prev) => prev
                    .iter()
                    .zip(&hit)
                    .map(|(a, b)| a.iter().zip(b).map(|(x, y)| *x || *y).collect())
                    .collect(),
            });
        }
        let names: Vec<String> = p.trainable().into_iter().map(|(n, _)| n).collect();
        for (name, block) in names.iter().zip(seen.unwrap()) {
            let dead = block.iter().filter(|&&v| !v).count();
            assert_eq!(dead, 0, "{variant:?}: {dead} parameters of {name} never get a gradient");
        }
    }
}
