//! Central finite-difference checks of analytic gradients.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use super::mlp::Mlp;
use crate::error::Result;

/// Step of the central differences.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GradCheckReport {
    pub points: usize,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn merge(self, other: GradCheckReport) -> Self {
        Self { points: self.points + other.points, max_rel_error: self.max_rel_error.max(other.max_rel_error) }
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }
}

/// `|a - n| / max(|a|, |n|)`, with a small floor so that two near-zero
/// derivatives compare as equal.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7)
}

/// Random direction of unit Euclidean norm.
pub fn unit_direction<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    let v: Vec<f64> = (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    v.into_iter().map(|x| x / norm).collect()
}

/// Central difference of `f` at `x` along `dir`.
pub fn directional_fd(x: &[f64], dir: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let plus: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a + h * d).collect();
    let minus: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a - h * d).collect();
    (f(&plus) - f(&minus)) / (2.0 * h)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Checks parameter and input gradients of `net` at `points` random points.
///
/// Each point draws a small input batch from `input_range`, a random linear
/// read-out of the output, and random unit directions in parameter and
/// input space.
pub fn check_mlp<R: Rng + ?Sized>(
    net: &Mlp,
    points: usize,
    input_range: (f64, f64),
    rng: &mut R,
) -> Result<GradCheckReport> {
    const BATCH: usize = 3;
    let mut report = GradCheckReport::default();
    let params = net.params_flat();
    let mut probe = net.clone();
    for _ in 0..points {
        let x = Array2::from_shape_fn((BATCH, net.input_dim()), |_| rng.random_range(input_range.0..input_range.1));
        let readout = Array2::from_shape_fn((BATCH, net.output_dim()), |_| rng.sample::<f64, _>(StandardNormal));
        let cache = net.forward(x.view())?;
        let (grads, dx) = net.backward(&cache, &readout)?;

        let dir = unit_direction(params.len(), rng);
        let analytic = dot(&grads.flat(), &dir);
        let numeric = directional_fd(&params, &dir, FD_STEP, |p| {
            probe.set_params_flat(p).expect("same length");
            (probe.predict(x.view()).expect("same shape") * &readout).sum()
        });
        let mut worst = relative_error(analytic, numeric);

        let x_flat: Vec<f64> = x.iter().copied().collect();
        let dir = unit_direction(x_flat.len(), rng);
        let analytic = dot(dx.as_slice().expect("standard layout"), &dir);
        let numeric = directional_fd(&x_flat, &dir, FD_STEP, |xs| {
            let xs = Array2::from_shape_vec(x.raw_dim(), xs.to_vec()).expect("same shape");
            (net.predict(xs.view()).expect("same shape") * &readout).sum()
        });
        worst = worst.max(relative_error(analytic, numeric));
        report = report.merge(GradCheckReport { points: 1, max_rel_error: worst });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{Activation, MlpSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn small_networks_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for head in [Activation::Linear, Activation::Sigmoid, Activation::Relu] {
            let net = Mlp::new(&MlpSpec::new(6, &[16, 8], 4, head), &mut rng).unwrap();
            let report = check_mlp(&net, 40, (-1.0, 3.0), &mut rng).unwrap();
            assert_eq!(report.points, 40);
            assert!(report.passes(1e-4), "{head:?}: {report:?}");
        }
    }

    #[test]
    fn catches_a_wrong_gradient() {
        // FD of x^2 at 3 is 6; a claimed 7 is off by 1/7
        let fd = directional_fd(&[3.0], &[1.0], FD_STEP, |x| x[0] * x[0]);
        assert!(relative_error(6.0, fd) < 1e-8);
        assert!(relative_error(7.0, fd) > 0.1);
    }
}
