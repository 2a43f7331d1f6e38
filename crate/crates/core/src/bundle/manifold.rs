use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use super::BundleError;
use crate::grassmann::Subspace;

/// Smallest number of samples per periodic parameter.
pub const MIN_SAMPLES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ManifoldKind {
    Circle,
    Torus2,
    TwistedCircle,
    Point,
}

impl ManifoldKind {
    /// Intrinsic dimension.
    pub fn dim(self) -> usize {
        match self {
            Self::Point => 0,
            Self::Circle | Self::TwistedCircle => 1,
            Self::Torus2 => 2,
        }
    }

    pub fn min_ambient_dim(self) -> usize {
        match self {
            Self::Point => 1,
            Self::Circle => 3,
            Self::TwistedCircle => 4,
            Self::Torus2 => 6,
        }
    }

    /// Number of frame columns the chart consumes.
    fn frame_width(self) -> usize {
        2 * self.dim()
    }
}

impl fmt::Display for ManifoldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Circle => "circle",
            Self::Torus2 => "torus2",
            Self::TwistedCircle => "twisted_circle",
            Self::Point => "point",
        })
    }
}

impl FromStr for ManifoldKind {
    type Err = BundleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "circle" => Ok(Self::Circle),
            "torus2" => Ok(Self::Torus2),
            "twisted_circle" => Ok(Self::TwistedCircle),
            "point" => Ok(Self::Point),
            other => Err(BundleError::UnsupportedKind(other.to_string())),
        }
    }
}

/// Placement of the chart: `center + radius · Σ (cos θ_j f_{2j} + sin θ_j f_{2j+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartGeometry {
    pub center: DVector<f64>,
    /// Orthonormal columns; only the first `2·dim` are used.
    pub frame: DMatrix<f64>,
    pub radius: f64,
}

impl ChartGeometry {
    /// Unit circles in consecutive coordinate planes through the origin.
    pub fn standard(ambient_dim: usize) -> Self {
        Self { center: DVector::zeros(ambient_dim), frame: DMatrix::identity(ambient_dim, ambient_dim), radius: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldSample {
    pub params: Vec<f64>,
    pub point: DVector<f64>,
    pub tangent: Subspace<f64>,
}

/// A closed manifold of critical points, sampled on a uniform periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalManifold {
    kind: ManifoldKind,
    geometry: ChartGeometry,
    count: usize,
    samples: Vec<ManifoldSample>,
}

/// Uniform samples of the chart. `count` is per periodic parameter, so a
/// torus gets `count²` samples; a point gets one.
pub fn sample_manifold(
    kind: ManifoldKind,
    ambient_dim: usize,
    count: usize,
    geometry: Option<ChartGeometry>,
) -> Result<CriticalManifold, BundleError> {
    if ambient_dim < kind.min_ambient_dim() {
        return Err(BundleError::DimensionTooSmall { kind, ambient_dim, required: kind.min_ambient_dim() });
    }
    let geometry = geometry.unwrap_or_else(|| ChartGeometry::standard(ambient_dim));
    if geometry.center.len() != ambient_dim
        || geometry.frame.nrows() != ambient_dim
        || geometry.frame.ncols() < kind.frame_width()
        || !(geometry.radius > 0.0)
    {
        return Err(BundleError::InvalidGeometry);
    }
    let used = geometry.frame.columns(0, kind.frame_width()).clone_owned();
    if Subspace::from_orthonormal(used).is_err() {
        return Err(BundleError::InvalidGeometry);
    }
    let count = if kind == ManifoldKind::Point { 1 } else { count };
    if kind != ManifoldKind::Point && count < MIN_SAMPLES {
        return Err(BundleError::TooFewSamples { count, minimum: MIN_SAMPLES });
    }
    let mut m = CriticalManifold { kind, geometry, count, samples: Vec::new() };
    let angle = |i: usize| TAU * i as f64 / count as f64;
    let grid: Vec<Vec<f64>> = match kind.dim() {
        0 => vec![vec![]],
        1 => (0..count).map(|i| vec![angle(i)]).collect(),
        _ => (0..count).flat_map(|i| (0..count).map(move |j| vec![angle(i), angle(j)])).collect(),
    };
    m.samples = grid
        .into_iter()
        .map(|params| {
            let point = m.chart(&params);
            let tangent = Subspace::span(&m.chart_derivative(&params));
            ManifoldSample { params, point, tangent }
        })
        .collect();
    Ok(m)
}

impl CriticalManifold {
    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    pub fn ambient_dim(&self) -> usize {
        self.geometry.center.len()
    }

    pub fn geometry(&self) -> &ChartGeometry {
        &self.geometry
    }

    /// Samples per periodic parameter.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn samples(&self) -> &[ManifoldSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn chart(&self, params: &[f64]) -> DVector<f64> {
        let g = &self.geometry;
        let mut x = g.center.clone();
        for (j, &t) in params.iter().enumerate() {
            x += g.frame.column(2 * j) * (g.radius * t.cos());
            x += g.frame.column(2 * j + 1) * (g.radius * t.sin());
        }
        x
    }

    /// Columns are the partial derivatives of the chart.
    pub fn chart_derivative(&self, params: &[f64]) -> DMatrix<f64> {
        let g = &self.geometry;
        let mut d = DMatrix::zeros(self.ambient_dim(), params.len());
        for (j, &t) in params.iter().enumerate() {
            let col = g.frame.column(2 * j) * (-g.radius * t.sin()) + g.frame.column(2 * j + 1) * (g.radius * t.cos());
            d.set_column(j, &col);
        }
        d
    }

    pub fn tangent_at(&self, params: &[f64]) -> Subspace<f64> {
        Subspace::span(&self.chart_derivative(params))
    }

    /// Parameters of the nearest point of the manifold, in `[0, 2π)`. Each
    /// circle factor is handled independently, which is exact for the
    /// product charts used here. Points on a circle's axis get angle 0.
    pub fn foot_params(&self, x: &DVector<f64>) -> Vec<f64> {
        let g = &self.geometry;
        let rel = x - &g.center;
        (0..self.dim())
            .map(|j| {
                let a = g.frame.column(2 * j).dot(&rel);
                let b = g.frame.column(2 * j + 1).dot(&rel);
                b.atan2(a).rem_euclid(TAU)
            })
            .collect()
    }

    pub fn foot_point(&self, x: &DVector<f64>) -> DVector<f64> {
        self.chart(&self.foot_params(x))
    }

    pub fn distance_to(&self, x: &DVector<f64>) -> f64 {
        (x - self.foot_point(x)).norm()
    }

    /// Samples adjacent to `index` in the positive parameter directions,
    /// wrapping periodically.
    pub fn forward_neighbors(&self, index: usize) -> Vec<usize> {
        let c = self.count;
        match self.dim() {
            0 => vec![],
            1 => vec![(index + 1) % c],
            _ => {
                let (i, j) = (index / c, index % c);
                vec![((i + 1) % c) * c + j, i * c + (j + 1) % c]
            }
        }
    }

    /// Every unordered adjacent pair once.
    pub fn adjacent_pairs(&self) -> Vec<(usize, usize)> {
        (0..self.len()).flat_map(|i| self.forward_neighbors(i).into_iter().map(move |j| (i, j))).collect()
    }

    /// Grid cell containing `params` as `(sample index, weight)` pairs for
    /// linear (or bilinear) interpolation.
    pub fn interpolation_weights(&self, params: &[f64]) -> Vec<(usize, f64)> {
        let c = self.count;
        let h = TAU / c as f64;
        let locate = |t: f64| {
            let s = t.rem_euclid(TAU) / h;
            let i = (s.floor() as usize) % c;
            (i, (i + 1) % c, s - s.floor())
        };
        match self.dim() {
            0 => vec![(0, 1.0)],
            1 => {
                let (i0, i1, w) = locate(params[0]);
                vec![(i0, 1.0 - w), (i1, w)]
            }
            _ => {
                let (i0, i1, u) = locate(params[0]);
                let (j0, j1, v) = locate(params[1]);
                vec![
                    (i0 * c + j0, (1.0 - u) * (1.0 - v)),
                    (i1 * c + j0, u * (1.0 - v)),
                    (i0 * c + j1, (1.0 - u) * v),
                    (i1 * c + j1, u * v),
                ]
            }
        }
    }

    /// Largest distance between two points of the manifold.
    pub fn diameter(&self) -> f64 {
        2.0 * self.geometry.radius * (self.dim() as f64).sqrt()
    }

    /// Normal injectivity radius of the chart.
    pub fn reach(&self) -> f64 {
        match self.kind {
            ManifoldKind::Point => f64::INFINITY,
            _ => self.geometry.radius,
        }
    }

    /// Lipschitz constant of the chart with respect to each parameter.
    pub fn chart_lipschitz(&self) -> f64 {
        self.geometry.radius * (self.dim().max(1) as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_circle_samples_and_tangents() {
        let m = sample_manifold(ManifoldKind::Circle, 3, 64, None).unwrap();
        assert_eq!(m.len(), 64);
        for s in m.samples() {
            let a = s.params[0];
            assert!((&s.point - DVector::from_vec(vec![a.cos(), a.sin(), 0.0])).norm() < 1e-15);
            let t = DVector::from_vec(vec![-a.sin(), a.cos(), 0.0]);
            assert!((s.tangent.basis().column(0).dot(&t).abs() - 1.0).abs() < 1e-14);
        }
        let bound = TAU * m.chart_lipschitz() / 64.0;
        for (i, j) in m.adjacent_pairs() {
            assert!((&m.samples()[i].point - &m.samples()[j].point).norm() <= bound);
        }
    }

    #[test]
    fn point_has_one_sample_and_no_tangent() {
        let m = sample_manifold(ManifoldKind::Point, 5, 1, None).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.samples()[0].tangent.dim(), 0);
        assert_eq!(m.dim(), 0);
    }

    #[test]
    fn torus_tangents_are_orthonormal() {
        let m = sample_manifold(ManifoldKind::Torus2, 6, 32, None).unwrap();
        assert_eq!(m.len(), 1024);
        for s in m.samples() {
            let b = s.tangent.basis();
            assert_eq!(b.ncols(), 2);
            let defect = (b.transpose() * b - DMatrix::identity(2, 2)).abs().max();
            assert!(defect <= 1e-12);
        }
        assert_eq!(m.adjacent_pairs().len(), 2048);
    }

    #[test]
    fn dimension_and_count_checks() {
        assert!(matches!(
            sample_manifold(ManifoldKind::Torus2, 5, 32, None),
            Err(BundleError::DimensionTooSmall { .. })
        ));
        assert!(matches!(sample_manifold(ManifoldKind::Circle, 3, 8, None), Err(BundleError::TooFewSamples { .. })));
        assert!(matches!("sphere".parse::<ManifoldKind>(), Err(BundleError::UnsupportedKind(_))));
    }

    #[test]
    fn foot_point_is_radial_projection() {
        let m = sample_manifold(ManifoldKind::Circle, 3, 16, None).unwrap();
        let x = DVector::from_vec(vec![0.0, 2.0, 0.5]);
        assert!((m.foot_point(&x) - DVector::from_vec(vec![0.0, 1.0, 0.0])).norm() < 1e-15);
        assert!((m.distance_to(&x) - (1.0f64 + 0.25).sqrt()).abs() < 1e-15);
        let w = m.interpolation_weights(&[TAU * 2.25 / 16.0]);
        assert_eq!(w[0].0, 2);
        assert!((w[1].1 - 0.25).abs() < 1e-12);
    }
}
