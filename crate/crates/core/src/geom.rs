//! Points in the unit-square domain.
//!
//! The geographical region is fixed to `D = [0,1]^2`; all positions are
//! dimensionless coordinates in `D`.

/// Side length of the square domain `D`.
pub const DOMAIN_SIDE: f64 = 1.0;

/// A point in the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    /// Euclidean distance to another point.
    pub fn dist(&self, other: &Point) -> f64 {
        self.dist_sq(other).sqrt()
    }

    /// Squared Euclidean distance (avoids the sqrt in hot loops).
    pub fn dist_sq(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    /// Whether the point lies inside `D = [0,1]^2` (boundary included).
    pub fn in_domain(&self) -> bool {
        (0.0..=DOMAIN_SIDE).contains(&self.x) && (0.0..=DOMAIN_SIDE).contains(&self.y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distances() {
        let a = Point::new(0.0, 0.0);
        let b = Point::new(3.0, 4.0);
        assert_eq!(a.dist(&b), 5.0);
        assert_eq!(a.dist_sq(&b), 25.0);
    }

    #[test]
    fn domain_membership() {
        assert!(Point::new(0.0, 1.0).in_domain());
        assert!(!Point::new(1.0001, 0.5).in_domain());
    }
}
