//! Mobius transformations on the upper half-plane and its boundary.
//!
//! Everything downstream (interval construction, boundary coding, orbit
//! sums) reduces to real 2x2 unit-determinant matrices acting on
//! `H = {z : Im z > 0}` and on `R = boundary(H)`. The point at infinity is
//! deliberately not representable: maps that would produce it return
//! [`HypError::PoleAtInput`] and callers treat the orbit as escaped.

use thiserror::Error;

/// Determinant tolerance after normalization.
pub const DET_TOL: f64 = 1e-12;
/// Trace tolerance for the parabolic/hyperbolic/elliptic trichotomy.
pub const CLASS_TOL: f64 = 1e-9;
/// Relative tolerance for boundary point equality.
pub const BOUNDARY_EQ_TOL: f64 = 1e-10;
/// |cx + d| below this counts as a pole.
pub const POLE_TOL: f64 = 1e-140;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HypError {
    /// cx + d vanished: the image is the point at infinity.
    #[error("pole at input x = {x}: image is the point at infinity")]
    PoleAtInput { x: f64 },
    #[error("point ({x}, {y}) is not in the open upper half-plane")]
    NotInUpperHalfPlane { x: f64, y: f64 },
    /// c = 0: the transformation fixes infinity and has no isometric circle.
    #[error("affine transformation (c = 0) fixes infinity")]
    AffineGenerator,
    #[error("transformation is not parabolic (|trace| = {trace_abs})")]
    NotParabolic { trace_abs: f64 },
    /// Determinant not positive; the matrix does not preserve H.
    #[error("matrix determinant {det} is not positive")]
    BadDeterminant { det: f64 },
}

/// Classification of a Mobius transformation by |trace|.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MobiusClass {
    Identity,
    Parabolic,
    Hyperbolic,
    Elliptic,
}

/// A point of the open upper half-plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlanePoint {
    pub x: f64,
    pub y: f64,
}

impl HalfPlanePoint {
    pub fn new(x: f64, y: f64) -> Result<Self, HypError> {
        if y > 0.0 && x.is_finite() && y.is_finite() {
            Ok(HalfPlanePoint { x, y })
        } else {
            Err(HypError::NotInUpperHalfPlane { x, y })
        }
    }

    /// The basepoint i.
    pub fn basepoint() -> Self {
        HalfPlanePoint { x: 0.0, y: 1.0 }
    }
}

/// A real Mobius transformation, kept normalized to ad - bc = 1 with the
/// positive-trace sign convention (a >= 0 breaks trace-zero ties).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mobius {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Mobius {
    /// Builds and normalizes a transformation from matrix entries.
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self, HypError> {
        let det = a * d - b * c;
        if !(det > 0.0) || !det.is_finite() {
            return Err(HypError::BadDeterminant { det });
        }
        let s = det.sqrt();
        let m = Mobius {
            a: a / s,
            b: b / s,
            c: c / s,
            d: d / s,
        };
        Ok(m.canonical_sign())
    }

    /// Identity transformation.
    pub fn identity() -> Self {
        Mobius {
            a: 1.0,
            b: 0.0,
            c: 0.0,
            d: 1.0,
        }
    }

    fn canonical_sign(self) -> Self {
        let tr = self.a + self.d;
        let flip = if tr.abs() > CLASS_TOL {
            tr < 0.0
        } else if self.a.abs() > CLASS_TOL {
            self.a < 0.0
        } else {
            self.c < 0.0
        };
        if flip {
            Mobius {
                a: -self.a,
                b: -self.b,
                c: -self.c,
                d: -self.d,
            }
        } else {
            self
        }
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    /// Composition self * other (apply `other` first).
    ///
    /// No renormalization: both factors have unit determinant, so the
    /// product does too, up to relative rounding. Recomputing the
    /// determinant of a large-entry product is pure cancellation noise
    /// and dividing by it would wreck the matrix.
    pub fn compose(&self, other: &Mobius) -> Mobius {
        Mobius {
            a: self.a * other.a + self.b * other.c,
            b: self.a * other.b + self.b * other.d,
            c: self.c * other.a + self.d * other.c,
            d: self.c * other.b + self.d * other.d,
        }
    }

    pub fn inverse(&self) -> Mobius {
        Mobius {
            a: self.d,
            b: -self.b,
            c: -self.c,
            d: self.a,
        }
        .canonical_sign()
    }

    /// Boundary action x -> (ax + b)/(cx + d).
    pub fn apply(&self, x: f64) -> Result<f64, HypError> {
        let den = self.c * x + self.d;
        if den.abs() < POLE_TOL || !den.is_finite() {
            return Err(HypError::PoleAtInput { x });
        }
        let img = (self.a * x + self.b) / den;
        if img.is_finite() {
            Ok(img)
        } else {
            Err(HypError::PoleAtInput { x })
        }
    }

    /// |g'(x)| = 1/(cx + d)^2 for a unit-determinant matrix.
    pub fn derivative(&self, x: f64) -> Result<f64, HypError> {
        let den = self.c * x + self.d;
        if den.abs() < POLE_TOL || !den.is_finite() {
            return Err(HypError::PoleAtInput { x });
        }
        Ok(1.0 / (den * den))
    }

    /// Action on the upper half-plane.
    pub fn apply_half_plane(&self, z: HalfPlanePoint) -> HalfPlanePoint {
        // (az+b)(conj(cz+d)) / |cz+d|^2 with z = x + iy
        let u = self.c * z.x + self.d;
        let v = self.c * z.y;
        let n = u * u + v * v;
        let px = self.a * z.x + self.b;
        let py = self.a * z.y;
        HalfPlanePoint {
            x: (px * u + py * v) / n,
            y: (py * u - px * v) / n,
        }
    }

    /// Image of the basepoint i.
    pub fn orbit_point(&self) -> HalfPlanePoint {
        self.apply_half_plane(HalfPlanePoint::basepoint())
    }

    /// d(i, g(i)) via cosh d = (a^2 + b^2 + c^2 + d^2)/2.
    pub fn dist_to_basepoint(&self) -> f64 {
        let q = 0.5 * (self.a * self.a + self.b * self.b + self.c * self.c + self.d * self.d);
        q.max(1.0).acosh()
    }

    /// Trace trichotomy with tolerance [`CLASS_TOL`].
    pub fn classify(&self) -> MobiusClass {
        if (self.a - 1.0).abs() < CLASS_TOL
            && (self.d - 1.0).abs() < CLASS_TOL
            && self.b.abs() < CLASS_TOL
            && self.c.abs() < CLASS_TOL
        {
            return MobiusClass::Identity;
        }
        let t = self.trace().abs();
        if (t - 2.0).abs() <= CLASS_TOL {
            MobiusClass::Parabolic
        } else if t > 2.0 {
            MobiusClass::Hyperbolic
        } else {
            MobiusClass::Elliptic
        }
    }

    /// Isometric circle |cz + d| = 1: center -d/c, radius 1/|c|.
    pub fn isometric_circle(&self) -> Result<(f64, f64), HypError> {
        if self.c.abs() < CLASS_TOL {
            return Err(HypError::AffineGenerator);
        }
        Ok((-self.d / self.c, 1.0 / self.c.abs()))
    }
}

/// A parabolic fixed point p with its cusp width w > 0.
///
/// The associated generator is t^-1 s t where t(x) = x - p and
/// s(x) = x/(1 + wx), so the matrix is [[1+pw, -p^2 w], [w, 1-pw]].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParabolicCusp {
    pub p: f64,
    pub w: f64,
}

impl ParabolicCusp {
    pub fn new(p: f64, w: f64) -> Self {
        assert!(w > 0.0, "cusp width must be positive");
        ParabolicCusp { p, w }
    }

    /// Matrix of the positively-oriented parabolic generator for this cusp.
    pub fn generator(&self) -> Mobius {
        let (p, w) = (self.p, self.w);
        Mobius {
            a: 1.0 + p * w,
            b: -p * p * w,
            c: w,
            d: 1.0 - p * w,
        }
    }

    /// n-fold application x -> p + y/(1 + n w y), y = x - p, in closed form.
    ///
    /// Valid for any integer n (negative n gives the inverse power).
    pub fn power_apply(&self, n: i64, x: f64) -> Result<f64, HypError> {
        let y = x - self.p;
        let den = 1.0 + (n as f64) * self.w * y;
        if den.abs() < 1e-140 {
            return Err(HypError::PoleAtInput { x });
        }
        let img = self.p + y / den;
        if img.is_finite() {
            Ok(img)
        } else {
            Err(HypError::PoleAtInput { x })
        }
    }

    /// |(g^n)'(x)| = 1/(1 + n w (x-p))^2 in closed form.
    pub fn power_derivative(&self, n: i64, x: f64) -> Result<f64, HypError> {
        let y = x - self.p;
        let den = 1.0 + (n as f64) * self.w * y;
        if den.abs() < 1e-140 {
            return Err(HypError::PoleAtInput { x });
        }
        Ok(1.0 / (den * den))
    }
}

/// Extracts (p, w) from a parabolic matrix, together with its orientation.
///
/// Returns `(cusp, inverted)` where `inverted` is true when `m` is the
/// inverse of the positively-oriented generator, i.e. its lower-left entry
/// is negative after trace normalization.
pub fn cusp_of(m: &Mobius) -> Result<(ParabolicCusp, bool), HypError> {
    if m.classify() != MobiusClass::Parabolic {
        return Err(HypError::NotParabolic {
            trace_abs: m.trace().abs(),
        });
    }
    if m.c.abs() < CLASS_TOL {
        return Err(HypError::AffineGenerator);
    }
    // trace is +2 after normalization; the unique fixed point of
    // cx^2 + (d-a)x - b is (a-d)/(2c).
    let p = (m.a - m.d) / (2.0 * m.c);
    let w = m.c.abs();
    Ok((ParabolicCusp::new(p, w), m.c < 0.0))
}

/// Hyperbolic distance, cosh d = 1 + |z1-z2|^2 / (2 y1 y2).
pub fn hyperbolic_distance(z1: HalfPlanePoint, z2: HalfPlanePoint) -> Result<f64, HypError> {
    if !(z1.y > 0.0) {
        return Err(HypError::NotInUpperHalfPlane { x: z1.x, y: z1.y });
    }
    if !(z2.y > 0.0) {
        return Err(HypError::NotInUpperHalfPlane { x: z2.x, y: z2.y });
    }
    let dx = z1.x - z2.x;
    let dy = z1.y - z2.y;
    let q = 1.0 + (dx * dx + dy * dy) / (2.0 * z1.y * z2.y);
    Ok(q.max(1.0).acosh())
}

/// Endpoint on R of the geodesic ray from the basepoint i through z.
///
/// The geodesic through i has endpoints u and -1/u; the ray picks the one
/// on z's side. For z on the imaginary axis below i the endpoint is 0; above
/// i it would be infinity, which is reported as a pole.
pub fn boundary_projection(z: HalfPlanePoint) -> Result<f64, HypError> {
    if z.x == 0.0 {
        return if z.y < 1.0 {
            Ok(0.0)
        } else {
            Err(HypError::PoleAtInput { x: f64::INFINITY })
        };
    }
    let center = (z.x * z.x + z.y * z.y - 1.0) / (2.0 * z.x);
    let r = center.hypot(1.0);
    Ok(if z.x > 0.0 { center + r } else { center - r })
}

/// Point at distance t from i along the ray towards the boundary point xi.
pub fn ray_point(xi: f64, t: f64) -> HalfPlanePoint {
    // image of i e^t under the isometry z -> (xi z - 1)/(z + xi)
    let e2 = (2.0 * t).exp();
    let den = xi * xi + e2;
    HalfPlanePoint {
        x: xi * (e2 - 1.0) / den,
        y: t.exp() * (xi * xi + 1.0) / den,
    }
}

/// Distance from z to the geodesic with boundary endpoints alpha, beta.
pub fn dist_to_geodesic(z: HalfPlanePoint, alpha: f64, beta: f64) -> f64 {
    // send alpha -> 0, beta -> infinity; the image of the geodesic is the
    // imaginary axis and cosh d = |m| / |Im m|
    let nx = z.x - alpha;
    let dx = z.x - beta;
    let den = dx * dx + z.y * z.y;
    let mx = (nx * dx + z.y * z.y) / den;
    let my = (z.y * dx - nx * z.y) / den;
    let q = mx.hypot(my) / my.abs();
    q.max(1.0).acosh()
}

/// Comparison of boundary points with relative tolerance.
pub fn boundary_eq(x: f64, y: f64) -> bool {
    let scale = 1.0_f64.max(x.abs()).max(y.abs());
    (x - y).abs() <= BOUNDARY_EQ_TOL * scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn apply_basics() {
        let id = Mobius::identity();
        assert_relative_eq!(id.apply(0.7).unwrap(), 0.7);
        let tr = Mobius::new(1.0, 1.0, 0.0, 1.0).unwrap();
        assert_relative_eq!(tr.apply(2.0).unwrap(), 3.0);
        let s = Mobius::new(1.0, 0.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(s.apply(1.0).unwrap(), 0.5);
    }

    #[test]
    fn derivative_basics() {
        let id = Mobius::identity();
        assert_relative_eq!(id.derivative(3.3).unwrap(), 1.0);
        let s = Mobius::new(1.0, 0.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(s.derivative(1.0).unwrap(), 0.25);
    }

    #[test]
    fn pole_is_reported() {
        let s = Mobius::new(1.0, 0.0, 1.0, 1.0).unwrap();
        assert!(matches!(
            s.apply(-1.0),
            Err(HypError::PoleAtInput { .. })
        ));
    }

    #[test]
    fn distance_examples() {
        let i = HalfPlanePoint::basepoint();
        assert_relative_eq!(hyperbolic_distance(i, i).unwrap(), 0.0);
        let z2 = HalfPlanePoint::new(0.0, 2.0).unwrap();
        assert_relative_eq!(hyperbolic_distance(i, z2).unwrap(), 2.0_f64.ln(), epsilon = 1e-12);
        let z3 = HalfPlanePoint::new(1.0, 1.0).unwrap();
        assert_relative_eq!(
            hyperbolic_distance(i, z3).unwrap(),
            1.5_f64.acosh(),
            epsilon = 1e-12
        );
        assert!(hyperbolic_distance(i, HalfPlanePoint { x: 0.0, y: -1.0 }).is_err());
    }

    #[test]
    fn classify_examples() {
        assert_eq!(
            Mobius::new(1.0, 1.0, 0.0, 1.0).unwrap().classify(),
            MobiusClass::Parabolic
        );
        assert_eq!(
            Mobius::new(2.0, 0.0, 0.0, 0.5).unwrap().classify(),
            MobiusClass::Hyperbolic
        );
        assert_eq!(
            Mobius::new(0.0, -1.0, 1.0, 0.0).unwrap().classify(),
            MobiusClass::Elliptic
        );
        assert_eq!(Mobius::identity().classify(), MobiusClass::Identity);
    }

    #[test]
    fn isometric_circle_examples() {
        let s = Mobius::new(1.0, 0.0, 1.0, 1.0).unwrap();
        let (c, r) = s.isometric_circle().unwrap();
        assert_relative_eq!(c, -1.0);
        assert_relative_eq!(r, 1.0);

        let m = Mobius::new(3.0, -2.0, 2.0, -1.0).unwrap();
        let (c, r) = m.isometric_circle().unwrap();
        assert_relative_eq!(c, 0.5);
        assert_relative_eq!(r, 0.5);

        // center of the inverse circle is a/c
        let minv = m.inverse();
        let (ci, _) = minv.isometric_circle().unwrap();
        assert_relative_eq!(ci, m.a / m.c);

        assert!(Mobius::new(1.0, 1.0, 0.0, 1.0)
            .unwrap()
            .isometric_circle()
            .is_err());
    }

    #[test]
    fn parabolic_from_cusp_examples() {
        let g = ParabolicCusp::new(0.0, 1.0).generator();
        assert_relative_eq!(g.a, 1.0);
        assert_relative_eq!(g.b, 0.0);
        assert_relative_eq!(g.c, 1.0);
        assert_relative_eq!(g.d, 1.0);

        // matrix product oracle for t^-1 s t with p=1, w=2
        let p = 1.0;
        let w = 2.0;
        let t = Mobius::new(1.0, -p, 0.0, 1.0).unwrap();
        let s = Mobius::new(1.0, 0.0, w, 1.0).unwrap();
        let expect = t.inverse().compose(&s).compose(&t);
        let g = ParabolicCusp::new(p, w).generator();
        assert_relative_eq!(g.a, expect.a, epsilon = 1e-12);
        assert_relative_eq!(g.b, expect.b, epsilon = 1e-12);
        assert_relative_eq!(g.c, expect.c, epsilon = 1e-12);
        assert_relative_eq!(g.d, expect.d, epsilon = 1e-12);
        assert_relative_eq!(g.a, 3.0);
        assert_relative_eq!(g.b, -2.0);
        assert_eq!(g.classify(), MobiusClass::Parabolic);
        assert_relative_eq!(g.apply(p).unwrap(), p, epsilon = 1e-12);
    }

    #[test]
    fn cusp_of_examples() {
        let (c, inv) = cusp_of(&Mobius::new(1.0, 0.0, 1.0, 1.0).unwrap()).unwrap();
        assert_relative_eq!(c.p, 0.0);
        assert_relative_eq!(c.w, 1.0);
        assert!(!inv);

        let (c, inv) = cusp_of(&Mobius::new(3.0, -2.0, 2.0, -1.0).unwrap()).unwrap();
        assert_relative_eq!(c.p, 1.0);
        assert_relative_eq!(c.w, 2.0);
        assert!(!inv);

        let (c, inv) = cusp_of(&Mobius::new(1.0, 0.0, -1.0, 1.0).unwrap()).unwrap();
        assert_relative_eq!(c.p, 0.0);
        assert_relative_eq!(c.w, 1.0);
        assert!(inv);

        assert!(cusp_of(&Mobius::new(2.0, 0.0, 0.0, 0.5).unwrap()).is_err());
    }

    #[test]
    fn cusp_round_trip() {
        let cusp = ParabolicCusp::new(-2.25, 0.6);
        let (back, inv) = cusp_of(&cusp.generator()).unwrap();
        assert!(!inv);
        assert_relative_eq!(back.p, cusp.p, epsilon = 1e-10);
        assert_relative_eq!(back.w, cusp.w, epsilon = 1e-12);
    }

    #[test]
    fn parabolic_power_examples() {
        let c = ParabolicCusp::new(0.0, 1.0);
        // 1 -> 1/2 -> 1/3 -> 1/4
        assert_relative_eq!(c.power_apply(3, 1.0).unwrap(), 0.25);
        assert_relative_eq!(c.power_apply(0, 0.37).unwrap(), 0.37);
    }

    #[test]
    fn projection_examples() {
        // sigma(i) = (1+i)/2 projects to the golden-ratio point
        let s = Mobius::new(1.0, 0.0, 1.0, 1.0).unwrap();
        let z = s.orbit_point();
        let xi = boundary_projection(z).unwrap();
        assert_relative_eq!(xi, (5.0_f64.sqrt() - 1.0) / 2.0, epsilon = 1e-12);

        // point below i on the axis projects to 0
        let z = HalfPlanePoint::new(0.0, 0.5).unwrap();
        assert_relative_eq!(boundary_projection(z).unwrap(), 0.0);

        // above i the ray ends at infinity
        assert!(boundary_projection(HalfPlanePoint::new(0.0, 2.0).unwrap()).is_err());
    }

    #[test]
    fn ray_point_matches_distance() {
        for &xi in &[0.3, -1.7, 4.0] {
            for &t in &[0.0, 0.5, 2.0, 6.0] {
                let z = ray_point(xi, t);
                let d = hyperbolic_distance(HalfPlanePoint::basepoint(), z).unwrap();
                assert_relative_eq!(d, t, epsilon = 1e-9);
            }
        }
        // and the ray converges to xi
        let z = ray_point(0.3, 20.0);
        assert_relative_eq!(z.x, 0.3, epsilon = 1e-6);
    }

    #[test]
    fn dist_to_geodesic_basics() {
        // i sits on the geodesic from -1 to 1
        assert!(dist_to_geodesic(HalfPlanePoint::basepoint(), -1.0, 1.0) < 1e-9);
        // distance from 1 + i to the imaginary-axis-like geodesic 0 <-> big
        let d = dist_to_geodesic(HalfPlanePoint::new(1.0, 1.0).unwrap(), 0.0, 1e12);
        assert_relative_eq!(d, 2.0_f64.sqrt().acosh(), epsilon = 1e-5);
    }

    fn arb_mobius() -> impl Strategy<Value = Mobius> {
        (
            -3.0..3.0_f64,
            -3.0..3.0_f64,
            -3.0..3.0_f64,
            -3.0..3.0_f64,
        )
            .prop_filter_map("needs positive determinant", |(a, b, c, d)| {
                let det = a * d - b * c;
                if det > 0.05 {
                    Some(Mobius::new(a, b, c, d).unwrap())
                } else {
                    None
                }
            })
    }

    proptest! {
        #[test]
        fn composition_consistency(g in arb_mobius(), h in arb_mobius(), x in -5.0..5.0_f64) {
            let hx = h.apply(x);
            prop_assume!(hx.is_ok());
            let hx = hx.unwrap();
            prop_assume!((g.c * hx + g.d).abs() > 0.05);
            prop_assume!((h.c * x + h.d).abs() > 0.05);
            let lhs = g.compose(&h).apply(x).unwrap();
            let rhs = g.apply(hx).unwrap();
            let scale = 1.0_f64.max(lhs.abs()).max(rhs.abs());
            prop_assert!((lhs - rhs).abs() <= 1e-9 * scale);
        }

        #[test]
        fn derivative_cocycle(g in arb_mobius(), h in arb_mobius(), x in -5.0..5.0_f64) {
            prop_assume!((h.c * x + h.d).abs() > 0.05);
            let hx = h.apply(x).unwrap();
            prop_assume!((g.c * hx + g.d).abs() > 0.05);
            let lhs = g.compose(&h).derivative(x).unwrap();
            let rhs = g.derivative(hx).unwrap() * h.derivative(x).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(rhs.abs()).max(1.0));
        }

        #[test]
        fn two_point_conformality(g in arb_mobius(), x1 in -5.0..5.0_f64, x2 in -5.0..5.0_f64) {
            prop_assume!((x1 - x2).abs() > 1e-3);
            prop_assume!((g.c * x1 + g.d).abs() > 0.05);
            prop_assume!((g.c * x2 + g.d).abs() > 0.05);
            let img = g.apply(x1).unwrap() - g.apply(x2).unwrap();
            let lhs = img * img;
            let rhs = g.derivative(x1).unwrap() * g.derivative(x2).unwrap()
                * (x1 - x2) * (x1 - x2);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(rhs.abs()).max(1.0));
        }

        #[test]
        fn parabolic_power_matches_iteration(
            p in -2.0..2.0_f64,
            w in 0.1..3.0_f64,
            n in 1..200_i64,
            t in 0.01..5.0_f64,
        ) {
            // x - p = t > 0 keeps every iterate pole-free
            let cusp = ParabolicCusp::new(p, w);
            let x = p + t;
            let fast = cusp.power_apply(n, x).unwrap();
            let g = cusp.generator();
            let mut slow = x;
            for _ in 0..n {
                slow = g.apply(slow).unwrap();
            }
            prop_assert!((fast - slow).abs() <= 1e-8);
        }

        #[test]
        fn dist_symmetric_under_inverse(g in arb_mobius()) {
            let d1 = g.dist_to_basepoint();
            let d2 = g.inverse().dist_to_basepoint();
            prop_assert!((d1 - d2).abs() <= 1e-9 * d1.max(1.0));
        }
    }
}
