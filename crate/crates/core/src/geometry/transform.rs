use nalgebra::{Matrix3, Matrix4, Vector3, Vector6};
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;

const SMALL_ANGLE: f64 = 1e-8;

/// Six twist coordinates `[ω₁ ω₂ ω₃ v₁ v₂ v₃]`: rotation first, then translation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist {
    pub omega: Vec3,
    pub nu: Vec3,
}

impl Twist {
    pub fn new(omega: Vec3, nu: Vec3) -> Self {
        Self { omega, nu }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            omega: Vec3::new(v[0], v[1], v[2]),
            nu: Vec3::new(v[3], v[4], v[5]),
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.omega.x,
            self.omega.y,
            self.omega.z,
            self.nu.x,
            self.nu.y,
            self.nu.z,
        )
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }

    pub fn is_finite(&self) -> bool {
        self.omega.iter().chain(self.nu.iter()).all(|v| v.is_finite())
    }
}

impl std::ops::Neg for Twist {
    type Output = Twist;
    fn neg(self) -> Twist {
        Twist::new(-self.omega, -self.nu)
    }
}

/// Skew-symmetric cross-product matrix, `hat(a) * b == a × b`.
pub fn hat(a: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// A rigid body motion in SE(3), mapping model coordinates to camera coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(Matrix3::identity(), Vec3::new(x, y, z))
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized), no translation.
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::identity();
        }
        Self::new(rodrigues(&(axis * (angle / n))), Vec3::zeros())
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// `self · other` (apply `other` first), with the rotation projected back onto SO(3).
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: orthonormalize(&(self.rotation * other.rotation)),
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.iter().chain(self.translation.iter()).all(|v| v.is_finite())
    }

    /// Frobenius norm of `RᵀR − I`.
    pub fn orthonormality_defect(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).norm()
    }
}

/// Left-multiplies the twist exponential: `T ← exp(ξ̂)·T`.
pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.compose(b)
}

pub fn invert(t: &RigidTransform) -> RigidTransform {
    t.inverse()
}

fn rodrigues(w: &Vec3) -> Matrix3<f64> {
    let theta2 = w.norm_squared();
    let theta = theta2.sqrt();
    let k = hat(w);
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        let half = (0.5 * theta).sin() / (0.5 * theta);
        (theta.sin() / theta, 0.5 * half * half)
    };
    Matrix3::identity() + k * a + k * k * b
}

/// Closed-form exponential map se(3) → SE(3).
pub fn exp_twist(xi: &Twist) -> RigidTransform {
    let w = &xi.omega;
    let theta2 = w.norm_squared();
    let theta = theta2.sqrt();
    let k = hat(w);
    let kk = k * k;
    let (a, b, c) = if theta < SMALL_ANGLE {
        (
            1.0 - theta2 / 6.0,
            0.5 - theta2 / 24.0,
            1.0 / 6.0 - theta2 / 120.0,
        )
    } else {
        let s = theta.sin();
        let half = (0.5 * theta).sin() / (0.5 * theta);
        // 2·sin²(θ/2)/θ² instead of (1 − cos θ)/θ², which cancels for small θ.
        (s / theta, 0.5 * half * half, (theta - s) / (theta2 * theta))
    };
    let rotation = Matrix3::identity() + k * a + kk * b;
    let v = Matrix3::identity() + k * b + kk * c;
    RigidTransform {
        rotation,
        translation: v * xi.nu,
    }
}

/// Logarithm of the rotation part, as an axis-angle vector with norm in `[0, π]`.
pub fn log_rotation(r: &Matrix3<f64>) -> Vec3 {
    let rot = nalgebra::Rotation3::from_matrix_unchecked(*r);
    rot.scaled_axis()
}

/// Nearest rotation matrix in the Frobenius sense (polar decomposition via SVD).
pub fn orthonormalize(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return *m;
    };
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}
