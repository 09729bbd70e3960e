//! Seeded 2D toy distributions and the standard-normal noise source.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::batch::SampleBatch;
use crate::error::{Error, Result};
use crate::rng::Stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ToySpec {
    /// Isotropic Gaussians centred at `modes` equally spaced points on a
    /// circle; mode `j` sits at angle `2πj/modes`.
    GaussianMixtureRing {
        #[serde(default = "d::modes")]
        modes: usize,
        #[serde(default = "d::ring_radius")]
        radius: f64,
        #[serde(default = "d::ring_std")]
        std: f64,
    },
    /// Two interleaved half circles (unit radius, scaled by `scale`) with
    /// Gaussian jitter.
    TwoMoons {
        #[serde(default = "d::jitter")]
        noise: f64,
        #[serde(default = "d::one")]
        scale: f64,
    },
    /// `arms` spiral arms, radius growing linearly with angle up to `radius`
    /// after `turns` revolutions, with Gaussian jitter.
    Spiral {
        #[serde(default = "d::arms")]
        arms: usize,
        #[serde(default = "d::turns")]
        turns: f64,
        #[serde(default = "d::two")]
        radius: f64,
        #[serde(default = "d::jitter")]
        noise: f64,
    },
    /// Uniform over the "even" cells of a `cells × cells` grid covering
    /// `[−extent, extent]²`; cell `(i, j)` is occupied when `i + j` is even.
    Checkerboard {
        #[serde(default = "d::two")]
        extent: f64,
        #[serde(default = "d::cells")]
        cells: usize,
    },
}

// Per-field defaults, so a config may give only `kind`.
mod d {
    pub fn modes() -> usize {
        8
    }
    pub fn ring_radius() -> f64 {
        2.0
    }
    pub fn ring_std() -> f64 {
        0.1
    }
    pub fn jitter() -> f64 {
        0.05
    }
    pub fn one() -> f64 {
        1.0
    }
    pub fn two() -> f64 {
        2.0
    }
    pub fn arms() -> usize {
        2
    }
    pub fn turns() -> f64 {
        1.5
    }
    pub fn cells() -> usize {
        4
    }
}

impl Default for ToySpec {
    fn default() -> Self {
        ToySpec::GaussianMixtureRing {
            modes: d::modes(),
            radius: d::ring_radius(),
            std: d::ring_std(),
        }
    }
}

impl ToySpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ToySpec::GaussianMixtureRing { .. } => "gaussian-mixture-ring",
            ToySpec::TwoMoons { .. } => "two-moons",
            ToySpec::Spiral { .. } => "spiral",
            ToySpec::Checkerboard { .. } => "checkerboard",
        }
    }

    /// Default parameters for a kind name.
    pub fn from_kind(kind: &str) -> Result<Self> {
        Ok(match kind {
            "gaussian-mixture-ring" | "ring" => ToySpec::default(),
            "two-moons" | "moons" => ToySpec::TwoMoons { noise: d::jitter(), scale: d::one() },
            "spiral" => ToySpec::Spiral {
                arms: d::arms(),
                turns: d::turns(),
                radius: d::two(),
                noise: d::jitter(),
            },
            "checkerboard" => ToySpec::Checkerboard { extent: d::two(), cells: d::cells() },
            other => return Err(Error::Config(format!("dataset.kind: unknown kind {other:?}"))),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("dataset.{name}: must be positive, got {v}")))
            }
        };
        let non_negative = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("dataset.{name}: must be non-negative, got {v}")))
            }
        };
        match *self {
            ToySpec::GaussianMixtureRing { modes, radius, std } => {
                if modes == 0 {
                    return Err(Error::Config("dataset.modes: must be at least 1".into()));
                }
                positive("radius", radius)?;
                non_negative("std", std)
            }
            ToySpec::TwoMoons { noise, scale } => {
                non_negative("noise", noise)?;
                positive("scale", scale)
            }
            ToySpec::Spiral { arms, turns, radius, noise } => {
                if arms == 0 {
                    return Err(Error::Config("dataset.arms: must be at least 1".into()));
                }
                positive("turns", turns)?;
                positive("radius", radius)?;
                non_negative("noise", noise)
            }
            ToySpec::Checkerboard { extent, cells } => {
                if cells == 0 {
                    return Err(Error::Config("dataset.cells: must be at least 1".into()));
                }
                positive("extent", extent)
            }
        }
    }

    /// Ring mode centres (empty for other kinds).
    pub fn ring_centres(&self) -> Vec<[f64; 2]> {
        match *self {
            ToySpec::GaussianMixtureRing { modes, radius, .. } => (0..modes)
                .map(|j| {
                    let a = TAU * j as f64 / modes as f64;
                    [radius * a.cos(), radius * a.sin()]
                })
                .collect(),
            _ => Vec::new(),
        }
    }
}

/// Draws `count` points. Each point consumes a fixed, documented sequence of
/// stream outputs, so the batch is a pure function of the stream state.
pub fn sample_data(spec: &ToySpec, count: usize, stream: &mut Stream) -> Result<SampleBatch> {
    spec.validate()?;
    if count == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let mut data = Vec::with_capacity(count * 2);
    match *spec {
        ToySpec::GaussianMixtureRing { modes, radius, std } => {
            for _ in 0..count {
                let j = stream.below(modes as u64);
                let a = TAU * j as f64 / modes as f64;
                let (n0, n1) = stream.normal_pair();
                data.push(radius * a.cos() + std * n0);
                data.push(radius * a.sin() + std * n1);
            }
        }
        ToySpec::TwoMoons { noise, scale } => {
            for _ in 0..count {
                let upper = stream.below(2) == 0;
                let t = PI * stream.uniform();
                let (x, y) = if upper {
                    (t.cos(), t.sin())
                } else {
                    (1.0 - t.cos(), 0.5 - t.sin())
                };
                let (n0, n1) = stream.normal_pair();
                data.push(scale * (x - 0.5 + noise * n0));
                data.push(scale * (y - 0.25 + noise * n1));
            }
        }
        ToySpec::Spiral { arms, turns, radius, noise } => {
            for _ in 0..count {
                let arm = stream.below(arms as u64);
                let s = stream.uniform();
                let angle = TAU * (turns * s + arm as f64 / arms as f64);
                let r = radius * s;
                let (n0, n1) = stream.normal_pair();
                data.push(r * angle.cos() + noise * n0);
                data.push(r * angle.sin() + noise * n1);
            }
        }
        ToySpec::Checkerboard { extent, cells } => {
            let width = 2.0 * extent / cells as f64;
            let occupied: Vec<(usize, usize)> = (0..cells)
                .flat_map(|i| (0..cells).map(move |j| (i, j)))
                .filter(|(i, j)| (i + j) % 2 == 0)
                .collect();
            for _ in 0..count {
                let (i, j) = occupied[stream.below(occupied.len() as u64) as usize];
                let u = stream.uniform();
                let v = stream.uniform();
                data.push(-extent + width * (i as f64 + u));
                data.push(-extent + width * (j as f64 + v));
            }
        }
    }
    SampleBatch::new(count, 2, data)
}

/// `count × dim` i.i.d. standard normals (Box–Muller, row-major fill).
pub fn sample_noise(dim: usize, count: usize, stream: &mut Stream) -> Result<SampleBatch> {
    if dim == 0 || count == 0 {
        return Err(Error::invalid("noise dimension and count must be at least 1"));
    }
    let mut data = vec![0.0; dim * count];
    stream.fill_normal(&mut data);
    SampleBatch::new(count, dim, data)
}
