//! Scalar abstraction and planar points.
//!
//! The closed-form primitives (heat kernel, Gaussian product identities, the
//! exact reduction of the third-moment integrand) are generic over the
//! floating scalar; the quadrature and Monte Carlo engines are `f64` only.

use num_traits::{Float, FromPrimitive};

/// Floating scalar usable by the generic closed-form primitives.
pub trait Real: Float + FromPrimitive + std::fmt::Debug + Send + Sync + 'static {
    /// 2π as the scalar type.
    fn two_pi() -> Self {
        Self::from_f64(std::f64::consts::TAU).unwrap()
    }
    fn half() -> Self {
        Self::from_f64(0.5).unwrap()
    }
    fn quarter() -> Self {
        Self::from_f64(0.25).unwrap()
    }
    fn two() -> Self {
        Self::from_f64(2.0).unwrap()
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Point in the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pt<R> {
    pub x: R,
    pub y: R,
}

impl<R: Real> Pt<R> {
    pub fn new(x: R, y: R) -> Self {
        Pt { x, y }
    }

    pub fn origin() -> Self {
        Pt {
            x: R::zero(),
            y: R::zero(),
        }
    }

    pub fn norm2(self) -> R {
        self.x * self.x + self.y * self.y
    }

    pub fn norm(self) -> R {
        self.norm2().sqrt()
    }

    pub fn scale(self, c: R) -> Self {
        Pt {
            x: self.x * c,
            y: self.y * c,
        }
    }
}

impl<R: Real> std::ops::Add for Pt<R> {
    type Output = Pt<R>;
    fn add(self, o: Pt<R>) -> Pt<R> {
        Pt {
            x: self.x + o.x,
            y: self.y + o.y,
        }
    }
}

impl<R: Real> std::ops::Sub for Pt<R> {
    type Output = Pt<R>;
    fn sub(self, o: Pt<R>) -> Pt<R> {
        Pt {
            x: self.x - o.x,
            y: self.y - o.y,
        }
    }
}
