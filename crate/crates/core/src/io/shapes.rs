use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};

use crate::pointset::{PointCloud, Point3};
use crate::{Error, Result};

/// Major and minor radius of the generated torus.
pub const TORUS_R: f64 = 1.0;
pub const TORUS_TUBE: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShapeKind {
    /// Unit sphere.
    Sphere,
    /// Surface of `[-1, 1]^3`.
    Cube,
    /// Torus around the z axis with radii [`TORUS_R`] and [`TORUS_TUBE`].
    Torus,
    /// The square `[-1, 1]^2` in the `z = 0` plane.
    Plane,
}

impl ShapeKind {
    pub const ALL: [Self; 4] = [Self::Sphere, Self::Cube, Self::Torus, Self::Plane];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Sphere => "sphere",
            Self::Cube => "cube",
            Self::Torus => "torus",
            Self::Plane => "plane",
        }
    }

    fn sample<R: Rng>(self, rng: &mut R) -> Point3 {
        match self {
            Self::Sphere => UnitSphere.sample(rng),
            Self::Cube => {
                let face = rng.gen_range(0..6);
                let (u, v) = (rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0));
                let side = if face % 2 == 0 { -1.0 } else { 1.0 };
                match face / 2 {
                    0 => [side, u, v],
                    1 => [u, side, v],
                    _ => [u, v, side],
                }
            }
            Self::Torus => {
                // Area element is proportional to R + r cos(theta).
                let theta = loop {
                    let t = rng.gen_range(0.0..std::f64::consts::TAU);
                    let accept = (TORUS_R + TORUS_TUBE * t.cos()) / (TORUS_R + TORUS_TUBE);
                    if rng.gen::<f64>() < accept {
                        break t;
                    }
                };
                let phi = rng.gen_range(0.0..std::f64::consts::TAU);
                let rho = TORUS_R + TORUS_TUBE * theta.cos();
                [rho * phi.cos(), rho * phi.sin(), TORUS_TUBE * theta.sin()]
            }
            Self::Plane => [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0), 0.0],
        }
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "unknown shape '{s}' (expected sphere|cube|torus|plane)"
            ))
        })
    }
}

/// `n` uniform surface samples with isotropic Gaussian jitter; every label
/// is the shape id.
pub fn generate_shape(kind: ShapeKind, n: usize, noise_sigma: f64, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::InvalidArgument("shape needs at least one point".into()));
    }
    let bad_sigma = || Error::InvalidArgument(format!("noise sigma must be >= 0, got {noise_sigma}"));
    if noise_sigma.is_nan() || noise_sigma < 0.0 {
        return Err(bad_sigma());
    }
    let noise = Normal::new(0.0, noise_sigma).map_err(|_| bad_sigma())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords = (0..n)
        .map(|_| {
            let p = kind.sample(&mut rng);
            if noise_sigma > 0.0 {
                p.map(|v| v + noise.sample(&mut rng))
            } else {
                p
            }
        })
        .collect();
    PointCloud::with_attributes(coords, None, Some(vec![kind.id(); n]))
}

/// `per_class` clouds of each kind, kind-major; each cloud gets its own seed
/// drawn from `seed`.
pub fn synthetic_corpus(
    kinds: &[ShapeKind],
    per_class: usize,
    n: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<Vec<(PointCloud, usize)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(kinds.len() * per_class);
    for (label, &kind) in kinds.iter().enumerate() {
        for _ in 0..per_class {
            out.push((generate_shape(kind, n, noise_sigma, rng.gen())?, label));
        }
    }
    Ok(out)
}
