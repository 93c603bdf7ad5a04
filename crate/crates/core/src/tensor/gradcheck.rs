use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

/// Central-difference check of analytic gradients.
///
/// `f` maps a full parameter list to a scalar loss; `analytic` holds the
/// gradients under test, one tensor per parameter (same shapes). At most
/// `max_coords` coordinates per tensor are probed, sampled with `seed`.
/// Returns the maximum relative error, with the denominator floored at 1
/// so near-zero gradient pairs are compared absolutely.
pub fn grad_check<F>(
    f: F,
    params: &[Tensor],
    analytic: &[Tensor],
    eps: f64,
    max_coords: usize,
    seed: u64,
) -> f64
where
    F: Fn(&[Tensor]) -> f64,
{
    assert_eq!(params.len(), analytic.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work: Vec<Tensor> = params.to_vec();
    let mut worst = 0.0f64;
    for pi in 0..params.len() {
        let n = params[pi].len();
        let mut coords: Vec<usize> = (0..n).collect();
        if n > max_coords {
            coords.shuffle(&mut rng);
            coords.truncate(max_coords);
            coords.sort_unstable();
        }
        for c in coords {
            let orig = work[pi].data()[c];
            work[pi].data_mut()[c] = orig + eps;
            let fp = f(&work);
            work[pi].data_mut()[c] = orig - eps;
            let fm = f(&work);
            work[pi].data_mut()[c] = orig;
            let fd = (fp - fm) / (2.0 * eps);
            let an = analytic[pi].data()[c];
            let denom = fd.abs().max(an.abs()).max(1.0);
            worst = worst.max((fd - an).abs() / denom);
        }
    }
    worst
}
