//! Lasso by coordinate descent on a sparse ground truth.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use voxelenc::ridge::fit_lasso;
use voxelenc::DenseMatrix;

fn main() -> voxelenc::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n, d) = (80, 10);
    let z = DenseMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng));
    let truth = [2.0, 0.0, 0.0, -1.5, 0.0, 0.0, 0.0, 0.0, 0.5, 0.0];
    let x = DenseMatrix::from_fn(n, 1, |r, _| {
        let clean: f64 = (0..d).map(|j| z.get(r, j) * truth[j]).sum();
        let e: f64 = StandardNormal.sample(&mut rng);
        clean + 0.1 * e
    });
    for lambda in [0.1, 5.0, 40.0, 200.0] {
        let w = fit_lasso(&z, &x, lambda)?;
        let coef = w.weights.column(0);
        let nnz = coef.iter().filter(|c| **c != 0.0).count();
        let shown: Vec<String> = coef.iter().map(|c| format!("{c:+.2}")).collect();
        println!("lambda {lambda:>5}: {nnz} nonzero [{}]", shown.join(" "));
    }
    Ok(())
}
