use std::ops::Mul;

use serde::{Deserialize, Serialize};

use super::Vec3;

/// Unit quaternion `(w, x, y, z)` with the sign fixed so that `w >= 0`.
///
/// `q` and `-q` describe the same rotation; fixing the sign makes equality of
/// stored orientations meaningful. When `w == 0` the first nonzero vector
/// component is made positive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct UnitQuat {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Default for UnitQuat {
    fn default() -> Self {
        UnitQuat::IDENTITY
    }
}

impl UnitQuat {
    pub const IDENTITY: UnitQuat = UnitQuat {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Normalizes and sign-canonicalizes. Returns `None` for a zero or
    /// non-finite input.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Option<Self> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return None;
        }
        let (w, x, y, z) = (w / n, x / n, y / n, z / n);
        let flip = if w != 0.0 {
            w < 0.0
        } else if x != 0.0 {
            x < 0.0
        } else if y != 0.0 {
            y < 0.0
        } else {
            z < 0.0
        };
        Some(if flip {
            UnitQuat {
                w: -w,
                x: -x,
                y: -y,
                z: -z,
            }
        } else {
            UnitQuat { w, x, y, z }
        })
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        match axis.normalized() {
            Some(a) => {
                let (s, c) = (angle * 0.5).sin_cos();
                UnitQuat::new(c, a.x * s, a.y * s, a.z * s).unwrap_or_default()
            }
            None => UnitQuat::IDENTITY,
        }
    }

    /// Rotation about the world z axis.
    pub fn from_yaw(yaw: f64) -> Self {
        UnitQuat::from_axis_angle(Vec3::Z, yaw)
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn inverse(self) -> Self {
        // conjugate; renormalize to restore the sign convention
        UnitQuat::new(self.w, -self.x, -self.y, -self.z).unwrap_or_default()
    }

    pub fn dot(self, o: UnitQuat) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn rotate(self, v: Vec3) -> Vec3 {
        // v' = v + 2w (u x v) + 2 u x (u x v)
        let u = Vec3::new(self.x, self.y, self.z);
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(self) -> f64 {
        let v = (self.x * self.x + self.y * self.y + self.z * self.z).sqrt();
        2.0 * v.atan2(self.w)
    }

    /// Angle between two orientations in `[0, pi]`.
    pub fn angle_to(self, o: UnitQuat) -> f64 {
        (self.inverse() * o).angle()
    }

    /// Signed rotation about the world z axis contained in this rotation
    /// (swing-twist decomposition), in `(-pi, pi]`.
    pub fn twist_about_z(self) -> f64 {
        if self.w == 0.0 && self.z == 0.0 {
            return 0.0;
        }
        let a = 2.0 * self.z.atan2(self.w);
        if a > std::f64::consts::PI {
            a - 2.0 * std::f64::consts::PI
        } else {
            a
        }
    }

    /// Spherical interpolation along the shorter arc.
    pub fn slerp(self, o: UnitQuat, s: f64) -> UnitQuat {
        let mut d = self.dot(o);
        let mut b = o.to_array();
        if d < 0.0 {
            d = -d;
            b = b.map(|c| -c);
        }
        let a = self.to_array();
        let (ka, kb) = if d > 1.0 - 1e-12 {
            (1.0 - s, s)
        } else {
            let theta = d.acos();
            let st = theta.sin();
            (((1.0 - s) * theta).sin() / st, (s * theta).sin() / st)
        };
        UnitQuat::new(
            ka * a[0] + kb * b[0],
            ka * a[1] + kb * b[1],
            ka * a[2] + kb * b[2],
            ka * a[3] + kb * b[3],
        )
        .unwrap_or(self)
    }

    /// Row-major rotation matrix.
    pub fn to_matrix(self) -> [[f64; 3]; 3] {
        let UnitQuat { w, x, y, z } = self;
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }

    /// From a row-major proper rotation matrix (Shepperd's method).
    pub fn from_matrix(m: [[f64; 3]; 3]) -> Option<Self> {
        let tr = m[0][0] + m[1][1] + m[2][2];
        let (w, x, y, z);
        if tr > 0.0 {
            let s = (tr + 1.0).sqrt() * 2.0;
            w = 0.25 * s;
            x = (m[2][1] - m[1][2]) / s;
            y = (m[0][2] - m[2][0]) / s;
            z = (m[1][0] - m[0][1]) / s;
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
            w = (m[2][1] - m[1][2]) / s;
            x = 0.25 * s;
            y = (m[0][1] + m[1][0]) / s;
            z = (m[0][2] + m[2][0]) / s;
        } else if m[1][1] > m[2][2] {
            let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
            w = (m[0][2] - m[2][0]) / s;
            x = (m[0][1] + m[1][0]) / s;
            y = 0.25 * s;
            z = (m[1][2] + m[2][1]) / s;
        } else {
            let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
            w = (m[1][0] - m[0][1]) / s;
            x = (m[0][2] + m[2][0]) / s;
            y = (m[1][2] + m[2][1]) / s;
            z = 0.25 * s;
        }
        UnitQuat::new(w, x, y, z)
    }
}

impl Mul for UnitQuat {
    type Output = UnitQuat;
    fn mul(self, o: UnitQuat) -> UnitQuat {
        let (a, b) = (self, o);
        UnitQuat::new(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
        .unwrap_or_default()
    }
}

impl From<UnitQuat> for [f64; 4] {
    fn from(q: UnitQuat) -> Self {
        q.to_array()
    }
}

impl TryFrom<[f64; 4]> for UnitQuat {
    type Error = String;
    fn try_from(a: [f64; 4]) -> Result<Self, String> {
        let n = (a.iter().map(|c| c * c).sum::<f64>()).sqrt();
        if (n - 1.0).abs() > 1e-6 {
            return Err(format!("quaternion norm {n} is not 1"));
        }
        UnitQuat::new(a[0], a[1], a[2], a[3]).ok_or_else(|| "invalid quaternion".to_string())
    }
}
