use nalgebra::DMatrix;
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

/// Orthogonal `rows x cols` matrix scaled by `gain`.
///
/// QR of a Gaussian matrix with the sign of `diag(R)` folded into `Q`, which
/// makes the result Haar distributed. Rows are orthonormal when
/// `rows <= cols`, columns otherwise.
pub fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Array2<f64> {
    assert!(rows >= 1 && cols >= 1, "orthogonal init needs a non-empty shape");
    let (tall, thin) = (rows.max(cols), rows.min(cols));
    let gaussian = DMatrix::<f64>::from_fn(tall, thin, |_, _| rng.sample(StandardNormal));
    let qr = gaussian.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..thin {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Array2::from_shape_fn((rows, cols), |(i, j)| {
        let v = if rows >= cols { q[(i, j)] } else { q[(j, i)] };
        gain * v
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn max_dev_from_scaled_identity(m: &Array2<f64>, scale: f64) -> f64 {
        let n = m.nrows();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { scale } else { 0.0 };
                worst = worst.max((m[(i, j)] - target).abs());
            }
        }
        worst
    }

    #[test]
    fn scalar_is_plus_or_minus_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10 {
            let w = orthogonal(1, 1, 1.0, &mut rng);
            assert!((w[(0, 0)].abs() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn square_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = orthogonal(64, 64, 1.0, &mut rng);
        assert!(max_dev_from_scaled_identity(&w.dot(&w.t()), 1.0) < 1e-5);
    }

    #[test]
    fn gain_scales_the_gram_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = orthogonal(16, 40, 2.0, &mut rng);
        assert!(max_dev_from_scaled_identity(&w.dot(&w.t()), 4.0) < 1e-5);
    }

    #[test]
    fn tall_matrices_have_orthonormal_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = orthogonal(50, 7, 1.0, &mut rng);
        assert!(max_dev_from_scaled_identity(&w.t().dot(&w), 1.0) < 1e-5);
    }
}
