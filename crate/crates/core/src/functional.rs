//! Functionals `Φ(x) = ½⟨Lx, x⟩ + Ψ(x)` with a fixed symmetric `L` and a
//! nonlinear part given by callables.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::symmetrize;
use crate::spectral::{SpectralError, SymOperator};

pub type ValueFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
pub type GradFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type HessFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type DomainFn = Arc<dyn Fn(&DVector<f64>) -> bool + Send + Sync>;

/// Relative agreement required between directional differences of `Φ` and
/// `⟨∇Φ, u⟩`.
pub const GRADIENT_CONSISTENCY_TOL: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FunctionalError {
    #[error("point lies outside the functional's domain")]
    DomainViolation,
    #[error("no analytic Hessian was supplied")]
    NoAnalyticHessian,
    #[error("finite-difference step must be positive, got {step}")]
    InvalidStep { step: f64 },
    #[error("point has dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// How [`SplitFunctional::hessian_at`] differentiates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HessianMode {
    Analytic,
    /// Central differences of the gradient, then `(H + Hᵀ)/2`. `None` picks
    /// `h = ε^{1/3}(1 + ‖x‖)`.
    CentralFd {
        step: Option<f64>,
    },
}

/// `Φ(x) = ½⟨Lx, x⟩ + Ψ(x)`.
#[derive(Clone)]
pub struct SplitFunctional {
    l: SymOperator<f64>,
    psi_value: ValueFn,
    psi_grad: GradFn,
    psi_hess: Option<HessFn>,
    domain: Option<DomainFn>,
}

impl fmt::Debug for SplitFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SplitFunctional")
            .field("dim", &self.dim())
            .field("analytic_hessian", &self.psi_hess.is_some())
            .finish_non_exhaustive()
    }
}

impl SplitFunctional {
    pub fn new(l: SymOperator<f64>, psi_value: ValueFn, psi_grad: GradFn) -> Self {
        Self { l, psi_value, psi_grad, psi_hess: None, domain: None }
    }

    /// `Ψ ≡ 0`.
    pub fn quadratic(l: SymOperator<f64>) -> Self {
        let n = l.dim();
        Self::new(l, Arc::new(|_| 0.0), Arc::new(move |_| DVector::zeros(n)))
            .with_hessian(Arc::new(move |_| DMatrix::zeros(n, n)))
    }

    pub fn with_hessian(mut self, hess: HessFn) -> Self {
        self.psi_hess = Some(hess);
        self
    }

    pub fn with_domain(mut self, domain: DomainFn) -> Self {
        self.domain = Some(domain);
        self
    }

    pub fn dim(&self) -> usize {
        self.l.dim()
    }

    pub fn operator(&self) -> &SymOperator<f64> {
        &self.l
    }

    pub fn has_analytic_hessian(&self) -> bool {
        self.psi_hess.is_some()
    }

    pub fn in_domain(&self, x: &DVector<f64>) -> bool {
        x.len() == self.dim() && self.domain.as_ref().is_none_or(|d| d(x))
    }

    pub fn psi_value(&self, x: &DVector<f64>) -> f64 {
        (self.psi_value)(x)
    }

    pub fn psi_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.psi_grad)(x)
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * self.l.quadratic_form(x) + self.psi_value(x)
    }

    /// `Lx + ∇Ψ(x)`.
    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.l.apply(x) + self.psi_gradient(x)
    }

    pub fn hessian_at(&self, x: &DVector<f64>, mode: HessianMode) -> Result<SymOperator<f64>, FunctionalError> {
        if x.len() != self.dim() {
            return Err(FunctionalError::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        if !self.in_domain(x) {
            return Err(FunctionalError::DomainViolation);
        }
        match mode {
            HessianMode::Analytic => {
                let hess = self.psi_hess.as_ref().ok_or(FunctionalError::NoAnalyticHessian)?;
                Ok(SymOperator::symmetrized(self.l.entries() + hess(x))?)
            }
            HessianMode::CentralFd { step } => {
                let h = step.unwrap_or_else(|| default_fd_step(x));
                if !(h > 0.0) || !h.is_finite() {
                    return Err(FunctionalError::InvalidStep { step: h });
                }
                let n = self.dim();
                let mut m = DMatrix::zeros(n, n);
                let mut xp = x.clone();
                for j in 0..n {
                    xp[j] = x[j] + h;
                    let gp = self.gradient(&xp);
                    xp[j] = x[j] - h;
                    let gm = self.gradient(&xp);
                    xp[j] = x[j];
                    m.set_column(j, &((gp - gm) / (2.0 * h)));
                }
                Ok(SymOperator::new(symmetrize(&m))?)
            }
        }
    }

    /// Largest relative mismatch between the central difference of `Φ` along
    /// `u` and `⟨∇Φ(x), u⟩`, over the given `(x, u)` probes with unit `u`.
    pub fn gradient_consistency(&self, probes: &[(DVector<f64>, DVector<f64>)]) -> f64 {
        probes
            .iter()
            .map(|(x, u)| {
                let h = default_fd_step(x);
                let fd = (self.value(&(x + u * h)) - self.value(&(x - u * h))) / (2.0 * h);
                let g = self.gradient(x);
                (fd - g.dot(u)).abs() / (1.0 + g.norm())
            })
            .fold(0.0, f64::max)
    }

    /// `−Φ`, with operator `−L` and nonlinearity `−Ψ`.
    pub fn negated(&self) -> Self {
        let (v, g) = (self.psi_value.clone(), self.psi_grad.clone());
        Self {
            l: self.l.scale(-1.0),
            psi_value: Arc::new(move |x| -v(x)),
            psi_grad: Arc::new(move |x| -g(x)),
            psi_hess: self.psi_hess.clone().map(|h| -> HessFn { Arc::new(move |x| -h(x)) }),
            domain: self.domain.clone(),
        }
    }

    /// Same `L`, nonlinearity `Ψ + extra`.
    pub fn plus(&self, value: ValueFn, grad: GradFn, hess: Option<HessFn>) -> Self {
        let (v, g) = (self.psi_value.clone(), self.psi_grad.clone());
        let psi_hess = match (self.psi_hess.clone(), hess) {
            (Some(h0), Some(h1)) => Some(Arc::new(move |x: &DVector<f64>| h0(x) + h1(x)) as HessFn),
            _ => None,
        };
        Self {
            l: self.l.clone(),
            psi_value: Arc::new(move |x| v(x) + value(x)),
            psi_grad: Arc::new(move |x| g(x) + grad(x)),
            psi_hess,
            domain: self.domain.clone(),
        }
    }

    /// Same `L`, nonlinearity `Ψ` composed with a replacement gradient field;
    /// used for pseudogradient-driven constructions.
    pub fn with_psi_gradient(&self, grad: GradFn) -> Self {
        Self {
            l: self.l.clone(),
            psi_value: self.psi_value.clone(),
            psi_grad: grad,
            psi_hess: None,
            domain: self.domain.clone(),
        }
    }
}

/// `ε^{1/3} · (1 + ‖x‖)`.
pub fn default_fd_step(x: &DVector<f64>) -> f64 {
    f64::EPSILON.cbrt() * (1.0 + x.norm())
}
