use nalgebra::{DMatrix, DVector};

use super::{spectral_split, SpectralError, SpectralSplitting, SymOperator};
use crate::linalg::{sym_eigen, symmetrize};
use crate::scalar::Scalar;

/// Inner product `(x|y) = ⟨Lx⁺, y⁺⟩ + ⟨x⁰, y⁰⟩ − ⟨Lx⁻, y⁻⟩` with its Gram
/// matrix `G = |L| + Π⁰` and the coordinate change `T = G^{1/2}`.
///
/// In the coordinates `y = Tx` the quadratic form `⟨Lx, x⟩` becomes
/// `⟨(Π⁺ − Π⁻)y, y⟩`: the operator acts as `y ↦ y⁺ − y⁻`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedMetric<T: Scalar> {
    gram: DMatrix<T>,
    transform: DMatrix<T>,
    inverse: DMatrix<T>,
    splitting: SpectralSplitting<T>,
}

pub fn adapted_metric<T: Scalar>(l: &SymOperator<T>, zero_tol: T) -> Result<AdaptedMetric<T>, SpectralError> {
    let splitting = spectral_split(l, zero_tol)?;
    let a = l.entries();
    let p_minus = splitting.x_minus.projector();
    let p_plus = splitting.x_plus.projector();
    let gram = symmetrize(&(a * &p_plus - a * &p_minus + splitting.x_zero.projector()));

    let eig = sym_eigen(&gram);
    let root = |power: T| {
        let mut scaled = eig.vectors.clone();
        for (c, &v) in eig.values.iter().enumerate() {
            scaled.column_mut(c).scale_mut(v.powf(power));
        }
        symmetrize(&(&scaled * eig.vectors.transpose()))
    };
    let transform = root(T::lit(0.5));
    let inverse = root(T::lit(-0.5));
    Ok(AdaptedMetric { gram, transform, inverse, splitting })
}

impl<T: Scalar> AdaptedMetric<T> {
    /// Gram matrix `G` of the adapted product in original coordinates.
    pub fn gram(&self) -> &DMatrix<T> {
        &self.gram
    }

    /// `G^{1/2}`, mapping original to adapted coordinates.
    pub fn transform(&self) -> &DMatrix<T> {
        &self.transform
    }

    /// `G^{-1/2}`.
    pub fn inverse(&self) -> &DMatrix<T> {
        &self.inverse
    }

    pub fn splitting(&self) -> &SpectralSplitting<T> {
        &self.splitting
    }

    pub fn inner(&self, x: &DVector<T>, y: &DVector<T>) -> T {
        x.dot(&(&self.gram * y))
    }

    pub fn to_adapted(&self, x: &DVector<T>) -> DVector<T> {
        &self.transform * x
    }

    pub fn from_adapted(&self, y: &DVector<T>) -> DVector<T> {
        &self.inverse * y
    }

    /// `T⁻ᵀ L T⁻¹`, which equals `Π⁺ − Π⁻` up to roundoff.
    pub fn canonical_operator(&self, l: &SymOperator<T>) -> Result<SymOperator<T>, SpectralError> {
        if l.dim() != self.gram.nrows() {
            return Err(SpectralError::DimensionMismatch { expected: self.gram.nrows(), found: l.dim() });
        }
        SymOperator::symmetrized(&self.inverse * l.entries() * &self.inverse)
    }

    /// Smallest eigenvalue of `G`; positive by construction.
    pub fn min_gram_eigenvalue(&self) -> T {
        sym_eigen(&self.gram).values.first().copied().unwrap_or_else(T::one)
    }
}
