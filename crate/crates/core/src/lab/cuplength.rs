use std::fmt;

use crate::bundle::ManifoldKind;

/// Closed manifolds whose cuplength is tabulated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Topology {
    Point,
    Circle,
    /// `S^N`, `N ≥ 1`.
    Sphere(usize),
    /// `T^N`, `N ≥ 1`.
    Torus(usize),
    Product(Vec<Topology>),
}

impl Topology {
    pub fn dim(&self) -> usize {
        match self {
            Topology::Point => 0,
            Topology::Circle => 1,
            Topology::Sphere(n) | Topology::Torus(n) => *n,
            Topology::Product(parts) => parts.iter().map(Topology::dim).sum(),
        }
    }

    pub fn of_kind(kind: ManifoldKind) -> Self {
        match kind {
            ManifoldKind::Point => Topology::Point,
            ManifoldKind::Circle | ManifoldKind::TwistedCircle => Topology::Circle,
            ManifoldKind::Torus2 => Topology::Torus(2),
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Topology::Point => f.write_str("point"),
            Topology::Circle => f.write_str("S^1"),
            Topology::Sphere(n) => write!(f, "S^{n}"),
            Topology::Torus(n) => write!(f, "T^{n}"),
            Topology::Product(parts) => {
                let names: Vec<String> = parts.iter().map(ToString::to_string).collect();
                f.write_str(&names.join(" x "))
            }
        }
    }
}

/// Tabulated cuplength; products use the lower bound
/// `cl(M₁ × M₂) ≥ cl(M₁) + cl(M₂)`.
pub fn cuplength(t: &Topology) -> usize {
    match t {
        Topology::Point => 0,
        Topology::Circle | Topology::Sphere(_) => 1,
        Topology::Torus(n) => *n,
        Topology::Product(parts) => parts.iter().map(cuplength).sum(),
    }
}

/// Guaranteed number of critical points, `1 + cl(M)`.
pub fn multiplicity_bound(t: &Topology) -> usize {
    1 + cuplength(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tabulated_values() {
        assert_eq!(cuplength(&Topology::Point), 0);
        assert_eq!(multiplicity_bound(&Topology::Point), 1);
        assert_eq!(cuplength(&Topology::Circle), 1);
        assert_eq!(cuplength(&Topology::Sphere(7)), 1);
        assert_eq!(cuplength(&Topology::Torus(5)), 5);
        let p = Topology::Product(vec![Topology::Sphere(2), Topology::Torus(3)]);
        assert_eq!((cuplength(&p), p.dim()), (4, 5));
        assert_eq!(Topology::of_kind(ManifoldKind::Torus2), Topology::Torus(2));
    }

    #[test]
    fn cuplength_is_between_one_and_dimension() {
        let cases = [
            Topology::Circle,
            Topology::Sphere(3),
            Topology::Torus(4),
            Topology::Product(vec![Topology::Circle, Topology::Sphere(2)]),
        ];
        for t in cases {
            let cl = cuplength(&t);
            assert!(1 <= cl && cl <= t.dim(), "{t}");
        }
    }
}
