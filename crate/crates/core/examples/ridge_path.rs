//! Fit a ridge path and compare it to the normal equations at each lambda.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use voxelenc::ridge::{fit_path, RidgeConfig};
use voxelenc::DenseMatrix;

fn main() -> voxelenc::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut draw = |r, c| DenseMatrix::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng));
    let (n, d, v) = (40, 6, 3);
    let z = draw(n, d);
    let x = draw(n, v);
    let cfg = RidgeConfig::plain(vec![0.1, 1.0, 10.0, 100.0]);
    let path = fit_path(&z, &x, &cfg)?;

    let zm = DMatrix::from_row_slice(n, d, z.data());
    let xm = DMatrix::from_row_slice(n, v, x.data());
    for (w, &lambda) in path.iter().zip(&cfg.lambdas) {
        let a = zm.transpose() * &zm + DMatrix::identity(d, d) * lambda;
        let direct = a.lu().solve(&(zm.transpose() * &xm)).expect("ridge system is nonsingular");
        let svd = DMatrix::from_row_slice(d, v, w.weights.data());
        println!("lambda {lambda:>6}: |W| = {:.4}, max diff vs normal equations {:.2e}", svd.norm(), (svd - direct).amax());
    }
    Ok(())
}
