//! Piecewise-smooth complex phantoms built from ellipses.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ComplexImage, Image};
use crate::rng::{self, ids};

pub const MIN_PHANTOM_SIZE: usize = 16;

/// An ellipse in normalized coordinates where the image spans `[-1, 1]` on
/// both axes (x to the right, y downward).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center: [f64; 2],
    pub axes: [f64; 2],
    /// Counter-clockwise rotation of the first axis, radians.
    pub rotation: f64,
    /// Complex amplitude `(re, im)`; its modulus must not exceed 1.
    pub amplitude: [f64; 2],
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.center[0], y - self.center[1]);
        let (s, c) = self.rotation.sin_cos();
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.axes[0]).powi(2) + (v / self.axes[1]).powi(2) <= 1.0
    }
}

/// Smooth phase `offset + slope_x*x + slope_y*y + curvature*(x^2 + y^2)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseRamp {
    pub offset: f64,
    pub slope_x: f64,
    pub slope_y: f64,
    pub curvature: f64,
}

impl PhaseRamp {
    fn at(&self, x: f64, y: f64) -> f64 {
        self.offset + self.slope_x * x + self.slope_y * y + self.curvature * (x * x + y * y)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    /// Painted in order; later ellipses overwrite earlier ones.
    pub ellipses: Vec<Ellipse>,
    pub phase: PhaseRamp,
}

impl PhantomSpec {
    pub fn empty(seed: u64, height: usize, width: usize) -> Self {
        Self { seed, height, width, ellipses: Vec::new(), phase: PhaseRamp::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height < MIN_PHANTOM_SIZE || self.width < MIN_PHANTOM_SIZE {
            return Err(Error::invalid(format!(
                "phantom must be at least {MIN_PHANTOM_SIZE}x{MIN_PHANTOM_SIZE}, got {}x{}",
                self.height, self.width
            )));
        }
        for (k, e) in self.ellipses.iter().enumerate() {
            let modulus = e.amplitude[0].hypot(e.amplitude[1]);
            if !(modulus <= 1.0) {
                return Err(Error::invalid(format!("ellipse {k} amplitude modulus {modulus} exceeds 1")));
            }
            if !(e.axes[0] > 0.0 && e.axes[1] > 0.0) {
                return Err(Error::invalid(format!("ellipse {k} has non-positive axes")));
            }
        }
        Ok(())
    }
}

/// Rasterizes a phantom with 2x2 supersampling of the ellipse coverage.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<ComplexImage> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);
    let mut re = Image::zeros(h, w);
    let mut im = Image::zeros(h, w);
    const SUB: [f64; 2] = [0.25, 0.75];
    for i in 0..h {
        for j in 0..w {
            let mut acc = [0.0; 2];
            for &si in &SUB {
                for &sj in &SUB {
                    let x = (j as f64 + sj) / w as f64 * 2.0 - 1.0;
                    let y = (i as f64 + si) / h as f64 * 2.0 - 1.0;
                    if let Some(e) = spec.ellipses.iter().rev().find(|e| e.contains(x, y)) {
                        acc[0] += e.amplitude[0];
                        acc[1] += e.amplitude[1];
                    }
                }
            }
            let (a_re, a_im) = (acc[0] / 4.0, acc[1] / 4.0);
            let x = (j as f64 + 0.5) / w as f64 * 2.0 - 1.0;
            let y = (i as f64 + 0.5) / h as f64 * 2.0 - 1.0;
            let (s, c) = spec.phase.at(x, y).sin_cos();
            re.set(i, j, a_re * c - a_im * s);
            im.set(i, j, a_re * s + a_im * c);
        }
    }
    ComplexImage::new(re, im)
}

/// An ellipsoid-like structure: an in-plane ellipse whose axes shrink with
/// distance from `z_center` and vanish beyond `z_radius`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeEllipse {
    pub ellipse: Ellipse,
    pub z_center: f64,
    pub z_radius: f64,
}

/// A synthetic joint-like volume sliced along one axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomVolume {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub structures: Vec<VolumeEllipse>,
    pub phase: PhaseRamp,
}

impl PhantomVolume {
    /// Random knee-like layout: a soft-tissue body, two bone blocks capped by
    /// thin bright cartilage bands, and a handful of small inclusions.
    pub fn random(seed: u64, height: usize, width: usize) -> Self {
        let mut r = rng::stream(seed, &[ids::PHANTOM]);
        let mut u = |lo: f64, hi: f64| lo + (hi - lo) * r.random::<f64>();
        let real = |a: f64| [a, 0.0];
        let mut structures = Vec::new();
        let mut push = |ellipse: Ellipse, z_center: f64, z_radius: f64| {
            structures.push(VolumeEllipse { ellipse, z_center, z_radius })
        };

        push(
            Ellipse {
                center: [u(-0.05, 0.05), u(-0.05, 0.05)],
                axes: [u(0.75, 0.88), u(0.8, 0.92)],
                rotation: u(-0.2, 0.2),
                amplitude: real(u(0.35, 0.5)),
            },
            0.0,
            4.0,
        );
        let gap = u(0.08, 0.16);
        let tilt = u(-0.15, 0.15);
        for (sign, amp_lo) in [(-1.0, 0.6), (1.0, 0.55)] {
            let cy = sign * (gap + u(0.3, 0.38));
            let cx = u(-0.08, 0.08);
            let ax = [u(0.45, 0.6), u(0.28, 0.36)];
            // cartilage band first so the bone overwrites all but its rim
            push(
                Ellipse {
                    center: [cx, cy - sign * 0.04],
                    axes: [ax[0] * 0.95, ax[1] + 0.02],
                    rotation: tilt,
                    amplitude: real(u(0.9, 1.0)),
                },
                u(-0.1, 0.1),
                u(0.9, 1.3),
            );
            push(
                Ellipse { center: [cx, cy], axes: ax, rotation: tilt, amplitude: real(u(amp_lo, amp_lo + 0.15)) },
                u(-0.1, 0.1),
                u(1.0, 1.4),
            );
        }
        let small = 3 + (u(0.0, 4.0) as usize);
        for _ in 0..small {
            let amp = u(0.1, 1.0);
            let phase = u(-0.3, 0.3);
            push(
                Ellipse {
                    center: [u(-0.55, 0.55), u(-0.6, 0.6)],
                    axes: [u(0.04, 0.14), u(0.04, 0.14)],
                    rotation: u(0.0, std::f64::consts::PI),
                    amplitude: [amp * phase.cos(), amp * phase.sin()],
                },
                u(-0.6, 0.6),
                u(0.2, 0.5),
            );
        }
        let phase = PhaseRamp {
            offset: u(-std::f64::consts::PI, std::f64::consts::PI),
            slope_x: u(-0.6, 0.6),
            slope_y: u(-0.6, 0.6),
            curvature: u(-0.3, 0.3),
        };
        Self { seed, height, width, structures, phase }
    }

    /// Slice `index` of `count`, evenly spaced over `z` in `[-0.7, 0.7]`.
    pub fn slice_spec(&self, index: usize, count: usize) -> PhantomSpec {
        let z = if count <= 1 { 0.0 } else { -0.7 + 1.4 * index as f64 / (count - 1) as f64 };
        let ellipses = self
            .structures
            .iter()
            .filter_map(|s| {
                let t = (z - s.z_center) / s.z_radius;
                let k = 1.0 - t * t;
                (k > 0.05).then(|| {
                    let k = k.sqrt();
                    Ellipse { axes: [s.ellipse.axes[0] * k, s.ellipse.axes[1] * k], ..s.ellipse.clone() }
                })
            })
            .collect();
        PhantomSpec {
            seed: rng::derive_seed(self.seed, &[index as u64]),
            height: self.height,
            width: self.width,
            ellipses,
            phase: self.phase.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_ellipses_is_zero() {
        let img = generate_phantom(&PhantomSpec::empty(1, 16, 20)).unwrap();
        assert!(img.re.data().iter().chain(img.im.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn deterministic() {
        let spec = PhantomVolume::random(9, 32, 32).slice_spec(2, 8);
        assert_eq!(generate_phantom(&spec).unwrap(), generate_phantom(&spec).unwrap());
        assert_eq!(PhantomVolume::random(9, 32, 32), PhantomVolume::random(9, 32, 32));
    }

    #[test]
    fn single_ellipse_sets_central_magnitude() {
        let mut spec = PhantomSpec::empty(0, 32, 32);
        spec.ellipses.push(Ellipse { center: [0.0, 0.0], axes: [0.5, 0.4], rotation: 0.3, amplitude: [0.8, 0.0] });
        spec.phase = PhaseRamp { offset: 0.4, slope_x: 1.0, slope_y: -0.5, curvature: 0.2 };
        let mag = generate_phantom(&spec).unwrap().magnitude();
        for (i, j) in [(15, 15), (16, 16), (15, 16), (16, 15)] {
            assert!((mag.get(i, j) - 0.8).abs() < 1e-6);
        }
        // far corner lies outside
        assert_eq!(mag.get(0, 0), 0.0);
    }

    #[test]
    fn edges_are_antialiased() {
        let mut spec = PhantomSpec::empty(0, 16, 16);
        // vertical edge through the middle of column 8
        spec.ellipses.push(Ellipse { center: [-10.0, 0.0], axes: [10.0 + 1.0 / 16.0 + 1e-9, 100.0], rotation: 0.0, amplitude: [1.0, 0.0] });
        let mag = generate_phantom(&spec).unwrap().magnitude();
        assert!((mag.get(8, 8) - 0.5).abs() < 1e-9);
        assert_eq!(mag.get(8, 7), 1.0);
        assert_eq!(mag.get(8, 9), 0.0);
    }

    #[test]
    fn rejects_small_or_overbright() {
        assert!(generate_phantom(&PhantomSpec::empty(0, 15, 32)).is_err());
        let mut spec = PhantomSpec::empty(0, 16, 16);
        spec.ellipses.push(Ellipse { center: [0.0, 0.0], axes: [0.5, 0.5], rotation: 0.0, amplitude: [0.9, 0.9] });
        assert!(generate_phantom(&spec).is_err());
    }

    #[test]
    fn random_volume_is_bounded_and_structured() {
        let vol = PhantomVolume::random(3, 48, 48);
        for k in 0..8 {
            let mag = generate_phantom(&vol.slice_spec(k, 8)).unwrap().magnitude();
            assert!(mag.max() <= 1.0 + 1e-12);
            assert!(mag.max() > 0.3);
            assert!(mag.get(0, 0) < 1e-12, "corner should be background");
        }
    }
}
