use super::family::{Canonical, GeneratingFunction};
use super::law::DistanceLaw;
use crate::error::{invalid, Error, Result};
use crate::linalg::{cholesky, is_symmetric, ln_det_spd, to_shape, Matrix, Vector};
use crate::rng::trial_rng;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};
use std::sync::{Arc, OnceLock};

/// A `p`-variate elliptical distribution with location `mu`, scatter
/// `sigma` and generating function `gen`.
#[derive(Debug, Clone)]
pub struct EllipticalModel {
    mu: Vector,
    sigma: Matrix,
    chol: Matrix,
    gen: GeneratingFunction,
    law: Arc<OnceLock<std::result::Result<Arc<DistanceLaw>, Error>>>,
}

impl EllipticalModel {
    pub fn new(mu: Vector, sigma: Matrix, gen: GeneratingFunction) -> Result<Self> {
        let p = gen.p();
        if mu.len() != p {
            return Err(Error::Dimension {
                expected: p,
                actual: mu.len(),
            });
        }
        if sigma.nrows() != p || sigma.ncols() != p {
            return Err(Error::Dimension {
                expected: p,
                actual: sigma.nrows(),
            });
        }
        if !is_symmetric(&sigma, 1e-12) {
            return Err(invalid(
                "sigma",
                f64::NAN,
                "scatter matrix must be symmetric",
            ));
        }
        let chol = cholesky(&sigma)?.l();
        Ok(Self {
            mu,
            sigma,
            chol,
            gen,
            law: Arc::new(OnceLock::new()),
        })
    }

    /// Zero location and identity scatter.
    pub fn standard(gen: GeneratingFunction) -> Self {
        let p = gen.p();
        Self::new(Vector::zeros(p), Matrix::identity(p, p), gen).expect("identity scatter is valid")
    }

    pub fn p(&self) -> usize {
        self.gen.p()
    }

    pub fn mu(&self) -> &Vector {
        &self.mu
    }

    pub fn sigma(&self) -> &Matrix {
        &self.sigma
    }

    pub fn generating_function(&self) -> &GeneratingFunction {
        &self.gen
    }

    /// Unit-determinant shape matrix `sigma / |sigma|^{1/p}`.
    pub fn shape(&self) -> Matrix {
        to_shape(&self.sigma).expect("scatter validated at construction")
    }

    pub fn ln_det_sigma(&self) -> f64 {
        ln_det_spd(&self.sigma).expect("scatter validated at construction")
    }

    /// Law of the squared distance `d`, normalized on first use.
    pub fn law(&self) -> Result<Arc<DistanceLaw>> {
        self.law
            .get_or_init(|| DistanceLaw::new(self.gen).map(Arc::new))
            .clone()
    }

    /// Normalizing constant of the density of `d`.
    pub fn beta_p(&self) -> Result<f64> {
        Ok(self.law()?.beta())
    }

    pub fn density_d(&self, d: f64) -> Result<f64> {
        Ok(self.law()?.density(d))
    }

    pub fn cdf_d(&self, d: f64) -> Result<f64> {
        Ok(self.law()?.cdf(d))
    }

    pub fn quantile_d(&self, u: f64) -> Result<f64> {
        self.law()?.quantile(u)
    }

    /// `n` i.i.d. rows `mu + L sqrt(d) u`, with `L L' = sigma`, `u` uniform
    /// on the sphere and `d` drawn by inverting the distribution of `d`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Matrix> {
        let mut rng = trial_rng(seed, 0);
        self.sample_with(n, &mut rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Matrix> {
        if n == 0 {
            return Err(Error::InsufficientData(
                "sample size must be at least 1".into(),
            ));
        }
        let p = self.p();
        let mut out = Matrix::zeros(n, p);
        let mut z = Vector::zeros(p);
        if self.gen.is_gaussian() {
            // Same law as the radial construction, without the quantile.
            for r in 0..n {
                for v in z.iter_mut() {
                    *v = StandardNormal.sample(rng);
                }
                let x = &self.mu + &self.chol * &z;
                out.row_mut(r).copy_from(&x.transpose());
            }
            return Ok(out);
        }
        if let Some(mix) = self.mixing()? {
            // Normal variance mixture: x = mu + sqrt(W) L z.
            for r in 0..n {
                for v in z.iter_mut() {
                    *v = StandardNormal.sample(rng);
                }
                let w = mix.draw(rng);
                let x = &self.mu + &self.chol * &z * w.sqrt();
                out.row_mut(r).copy_from(&x.transpose());
            }
            return Ok(out);
        }
        let law = self.law()?;
        for r in 0..n {
            let norm = loop {
                for v in z.iter_mut() {
                    *v = StandardNormal.sample(rng);
                }
                let nn = z.norm();
                if nn > 0.0 {
                    break nn;
                }
            };
            let u: f64 = loop {
                let u: f64 = rng.random();
                if u > 0.0 {
                    break u;
                }
            };
            let radius = law.quantile(u)?.sqrt();
            z *= radius / norm;
            let x = &self.mu + &self.chol * &z;
            out.row_mut(r).copy_from(&x.transpose());
        }
        Ok(out)
    }
}

/// Mixing law of the families that are normal variance mixtures with an
/// easily sampled mixing variable.
enum Mixing {
    /// `W ~ Gamma(shape, scale)`.
    Gamma(Gamma<f64>),
    /// `W = s / G` with `G ~ chi-squared`.
    InverseChiSquared(ChiSquared<f64>, f64),
}

impl Mixing {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Mixing::Gamma(g) => g.sample(rng),
            Mixing::InverseChiSquared(c, s) => s / c.sample(rng),
        }
    }
}

impl EllipticalModel {
    fn mixing(&self) -> Result<Option<Mixing>> {
        let bad = |e: String| Error::Domain(format!("mixing law: {e}"));
        Ok(match self.gen.canonical() {
            Canonical::GenHyperbolic { lambda, chi, psi } if chi == 0.0 => Some(Mixing::Gamma(
                Gamma::new(lambda, 2.0 / psi).map_err(|e| bad(e.to_string()))?,
            )),
            Canonical::PearsonVII { n, s } => {
                let dof = 2.0 * n - self.p() as f64;
                Some(Mixing::InverseChiSquared(
                    ChiSquared::new(dof).map_err(|e| bad(e.to_string()))?,
                    s,
                ))
            }
            _ => None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptical::family::Family;
    use crate::linalg::{mahalanobis, row_distances};
    use approx::assert_relative_eq;

    #[test]
    fn shape_has_unit_determinant() {
        let s = Matrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 5.0]);
        let m = EllipticalModel::new(Vector::zeros(3), s, GeneratingFunction::gaussian(3)).unwrap();
        assert_relative_eq!(m.shape().determinant(), 1.0, max_relative = 1e-10);
    }

    #[test]
    fn rejects_asymmetric_or_indefinite_scatter() {
        let g = GeneratingFunction::gaussian(2);
        let asym = Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(EllipticalModel::new(Vector::zeros(2), asym, g).is_err());
        let indef = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(EllipticalModel::new(Vector::zeros(2), indef, g).is_err());
    }

    #[test]
    fn single_draw_has_one_row() {
        let m = EllipticalModel::standard(GeneratingFunction::gaussian(4));
        let x = m.sample(1, 99).unwrap();
        assert_eq!((x.nrows(), x.ncols()), (1, 4));
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let m =
            EllipticalModel::standard(GeneratingFunction::new(Family::T { nu: 3.0 }, 3).unwrap());
        assert_eq!(m.sample(50, 5).unwrap(), m.sample(50, 5).unwrap());
        assert_ne!(m.sample(50, 5).unwrap(), m.sample(50, 6).unwrap());
    }

    #[test]
    fn gaussian_distance_mean_is_p() {
        let p = 5;
        let s = Matrix::from_row_slice(
            5,
            5,
            &[
                2.0, 0.4, 0.0, 0.0, 0.1, 0.4, 1.0, 0.2, 0.0, 0.0, 0.0, 0.2, 1.5, 0.3, 0.0, 0.0,
                0.0, 0.3, 0.7, 0.0, 0.1, 0.0, 0.0, 0.0, 3.0,
            ],
        );
        let mu = Vector::from_vec(vec![1.0, -2.0, 0.5, 0.0, 3.0]);
        let m =
            EllipticalModel::new(mu.clone(), s.clone(), GeneratingFunction::gaussian(p)).unwrap();
        let x = m.sample(100_000, 11).unwrap();
        let d = row_distances(&x, &mu, &s).unwrap();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        assert!((mean - p as f64).abs() < 0.1, "mean d = {mean}");
        let first = mahalanobis(&x.row(0).transpose(), &mu, &s).unwrap();
        assert_relative_eq!(first, d[0], max_relative = 1e-12);
    }

    /// Empirical CDF of sampled distances against the distance law.
    fn ks_distance(gen: GeneratingFunction, n: usize) -> f64 {
        let m = EllipticalModel::standard(gen);
        let x = m.sample(n, 42).unwrap();
        let mut d = row_distances(&x, m.mu(), m.sigma()).unwrap();
        d.sort_by(f64::total_cmp);
        d.iter()
            .enumerate()
            .map(|(i, &di)| {
                let f = m.cdf_d(di).unwrap();
                (f - i as f64 / n as f64)
                    .abs()
                    .max((f - (i + 1) as f64 / n as f64).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn mixture_sampling_matches_distance_law() {
        // 1.63 / sqrt(n) is the 1% Kolmogorov-Smirnov critical value.
        let n = 20_000;
        let crit = 1.63 / (n as f64).sqrt();
        for f in [
            Family::VarianceGamma {
                lambda: 1.5,
                psi: 0.7,
            },
            Family::Laplace,
            Family::T { nu: 3.0 },
            Family::PearsonVII { n: 4.0, s: 2.5 },
            Family::Gaussian,
            Family::NormalInverseGaussian { chi: 1.0, psi: 2.0 },
        ] {
            let ks = ks_distance(GeneratingFunction::new(f, 4).unwrap(), n);
            assert!(ks < crit, "{f:?}: {ks}");
        }
    }
}
