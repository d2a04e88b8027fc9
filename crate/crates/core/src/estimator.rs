//! Estimators with their tuning constants resolved against a model.

use crate::asymptotics::{max_efficiency, tune_to_efficiency, TunableKind};
use crate::elliptical::{DistanceLaw, GeneratingFunction};
use crate::error::{Error, Result};
use crate::kernels::EstimatorKernel;
use crate::linalg::Matrix;
use crate::solver::{
    fit_mle, fit_mm_shr, fit_mm_shr_from, fit_s, fit_sample, initial_estimate, FitOptions,
    FitResult, StartingPoint,
};
use crate::spec::{EstimatorKind, EstimatorSpec, Tuning};
use serde::Serialize;

/// An estimator ready to fit data.
#[derive(Debug, Clone)]
pub struct Estimator {
    spec: EstimatorSpec,
    gen: GeneratingFunction,
    param: Option<f64>,
    kernel: Option<EstimatorKernel>,
    efficiency: Option<f64>,
}

/// Summary of a resolved estimator.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedTuning {
    pub estimator: EstimatorKind,
    pub param: Option<f64>,
    pub asymptotic_efficiency: Option<f64>,
}

fn tunable(kind: EstimatorKind) -> Option<TunableKind> {
    match kind {
        EstimatorKind::Sq => Some(TunableKind::Sq),
        EstimatorKind::Rocke => Some(TunableKind::Rocke),
        EstimatorKind::Shr => Some(TunableKind::Shr),
        _ => None,
    }
}

impl Estimator {
    /// Resolve efficiency targets at `gen` with scale target `b`.
    pub fn resolve(spec: EstimatorSpec, gen: GeneratingFunction, b: f64) -> Result<Self> {
        let (param, efficiency) = match (tunable(spec.kind), spec.tuning) {
            (Some(_), Tuning::Param(v)) => (Some(v), None),
            (Some(t), Tuning::Efficiency(e)) => {
                let law = DistanceLaw::new(gen)?;
                let r = tune_to_efficiency(t, &law, b, e)?;
                (Some(r.param), Some(r.efficiency))
            }
            (Some(t), Tuning::MaxEfficiency) => {
                let law = DistanceLaw::new(gen)?;
                let r = max_efficiency(t, &law, b)?;
                (Some(r.param), Some(r.efficiency))
            }
            (Some(_), Tuning::Untuned) => {
                return Err(Error::Tuning(format!(
                    "estimator {} needs a tuning value",
                    spec.kind
                )))
            }
            (None, Tuning::Untuned) => (None, None),
            (None, _) => {
                return Err(Error::Tuning(format!(
                    "estimator {} takes no tuning value",
                    spec.kind
                )))
            }
        };
        let p = gen.p();
        let kernel = match spec.kind {
            EstimatorKind::Sq => Some(EstimatorKernel::sq(gen, param.unwrap_or(f64::NAN))?),
            EstimatorKind::Rocke => Some(EstimatorKernel::rocke(p, param.unwrap_or(f64::NAN))?),
            EstimatorKind::Shr => Some(EstimatorKernel::shr(p, param.unwrap_or(f64::NAN))?),
            EstimatorKind::Bisquare => Some(EstimatorKernel::bisquare(p)),
            EstimatorKind::Mle => Some(EstimatorKernel::mle(gen)),
            EstimatorKind::Sample => None,
        };
        Ok(Self {
            spec,
            gen,
            param,
            kernel,
            efficiency,
        })
    }

    /// Estimator with an explicit tuning value (or none).
    pub fn with_param(
        kind: EstimatorKind,
        gen: GeneratingFunction,
        param: Option<f64>,
    ) -> Result<Self> {
        let tuning = param.map_or(Tuning::Untuned, Tuning::Param);
        Self::resolve(EstimatorSpec::new(kind, tuning), gen, 0.5)
    }

    pub fn kind(&self) -> EstimatorKind {
        self.spec.kind
    }

    pub fn spec(&self) -> EstimatorSpec {
        self.spec
    }

    pub fn param(&self) -> Option<f64> {
        self.param
    }

    pub fn kernel(&self) -> Option<&EstimatorKernel> {
        self.kernel.as_ref()
    }

    pub fn generating_function(&self) -> &GeneratingFunction {
        &self.gen
    }

    pub fn summary(&self) -> ResolvedTuning {
        ResolvedTuning {
            estimator: self.spec.kind,
            param: self.param,
            asymptotic_efficiency: self.efficiency,
        }
    }

    /// Fit from a given starting point. For MM-SHR the start takes the
    /// place of the first-stage estimate and fixes the scale.
    pub fn fit_from(
        &self,
        data: &Matrix,
        b: f64,
        start: &StartingPoint,
        opts: &FitOptions,
    ) -> Result<FitResult> {
        if data.ncols() != self.gen.p() {
            return Err(Error::Dimension {
                expected: self.gen.p(),
                actual: data.ncols(),
            });
        }
        match self.spec.kind {
            EstimatorKind::Sq | EstimatorKind::Rocke | EstimatorKind::Bisquare => {
                fit_s(data, self.kernel.as_ref().expect("kernel"), b, start, opts)
            }
            EstimatorKind::Shr => fit_mm_shr_from(data, self.param.expect("c"), start, opts),
            EstimatorKind::Mle => fit_mle(data, &self.gen, start, opts),
            EstimatorKind::Sample => fit_sample(data),
        }
    }

    /// Fit from the deterministic robust start. MM-SHR first runs an
    /// S-bisquare fit from it; the reported iterations are those of the MM
    /// stage.
    pub fn fit(&self, data: &Matrix, b: f64, opts: &FitOptions) -> Result<FitResult> {
        match self.spec.kind {
            EstimatorKind::Sample => fit_sample(data),
            EstimatorKind::Shr => {
                let start = initial_estimate(data)?;
                let s = fit_s(
                    data,
                    &EstimatorKernel::bisquare(data.ncols()),
                    b,
                    &start,
                    opts,
                )?;
                fit_mm_shr(data, self.param.expect("c"), &s, opts)
            }
            _ => self.fit_from(data, b, &initial_estimate(data)?, opts),
        }
    }
}
