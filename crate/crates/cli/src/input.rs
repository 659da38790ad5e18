//! Loading or generating the cloud a command works on.

use pcm_core::io::{generate_shape, read_xyz, ShapeKind};
use pcm_core::pointset::Point3;
use pcm_core::PointCloud;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::args::CloudArgs;
use crate::{CliError, CliResult};

pub const GENERATORS: &str = "sphere|cube|torus|plane|uniform|grid";

/// Cell centers of the `side^3` lattice in `[0, 1]^3`, x fastest.
pub fn grid_cloud(side: usize) -> CliResult<PointCloud> {
    if side == 0 {
        return Err(CliError::Usage("grid side must be positive".into()));
    }
    let s = side as f64;
    let coords = (0..side * side * side)
        .map(|i| {
            let (x, y, z) = (i % side, (i / side) % side, i / (side * side));
            [(x as f64 + 0.5) / s, (y as f64 + 0.5) / s, (z as f64 + 0.5) / s]
        })
        .collect();
    Ok(PointCloud::new(coords)?)
}

pub fn uniform_cloud(n: usize, seed: u64) -> CliResult<PointCloud> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords: Vec<Point3> = (0..n).map(|_| std::array::from_fn(|_| rng.gen::<f64>())).collect();
    Ok(PointCloud::new(coords)?)
}

fn cube_root(n: usize) -> Option<usize> {
    let r = (n as f64).cbrt().round() as usize;
    (r * r * r == n).then_some(r)
}

pub fn generate(name: &str, n: usize, seed: u64) -> CliResult<PointCloud> {
    if n == 0 {
        return Err(CliError::Usage("--n must be positive".into()));
    }
    match name {
        "uniform" => uniform_cloud(n, seed),
        "grid" => {
            let side = cube_root(n)
                .ok_or_else(|| CliError::Usage(format!("--gen grid needs a perfect-cube --n, got {n}")))?;
            grid_cloud(side)
        }
        other => {
            let kind: ShapeKind = other
                .parse()
                .map_err(|_| CliError::Usage(format!("unknown generator '{other}' (expected {GENERATORS})")))?;
            Ok(generate_shape(kind, n, 0.0, seed)?)
        }
    }
}

pub fn load(args: &CloudArgs) -> CliResult<PointCloud> {
    match (&args.input, &args.gen) {
        (Some(path), None) => Ok(read_xyz(path)?),
        (None, Some(name)) => generate(name, args.n, args.seed),
        _ => Err(CliError::Usage("pass exactly one of --input or --gen".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_fills_lattice() {
        let c = grid_cloud(3).unwrap();
        assert_eq!(c.len(), 27);
        assert_eq!(c.coords()[1], [0.5, 0.5 / 3.0, 0.5 / 3.0]);
        assert!(matches!(generate("grid", 10, 0), Err(CliError::Usage(_))));
        assert_eq!(generate("grid", 64, 0).unwrap().len(), 64);
    }

    #[test]
    fn generators() {
        for g in ["sphere", "cube", "torus", "plane", "uniform"] {
            assert_eq!(generate(g, 50, 1).unwrap(), generate(g, 50, 1).unwrap());
        }
        assert!(matches!(generate("blob", 5, 0), Err(CliError::Usage(_))));
    }
}
