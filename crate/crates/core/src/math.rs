//! Geometry shared by every other module.
//!
//! Conventions: right-handed world with Y up, cameras look along their local
//! -Z axis, stored transforms are camera-to-world and the view matrix is
//! their inverse. Image pixel `(0, 0)` is the top-left corner and pixel
//! centres sit at `+0.5`.

use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MathError {
    #[error("pixel ({px}, {py}) outside {width}x{height} image")]
    PixelOutOfRange {
        px: u32,
        py: u32,
        width: u32,
        height: u32,
    },
    #[error("invalid camera: {0}")]
    InvalidCamera(&'static str),
    #[error("invalid aabb: min must be < max componentwise")]
    InvalidAabb,
    #[error("quaternion has zero length")]
    DegenerateQuaternion,
    #[error("invalid similarity: scale must be finite and positive")]
    InvalidScale,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Vec3<T> {
    #[inline(always)]
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    #[inline(always)]
    pub fn splat(v: T) -> Self {
        Self::new(v, v, v)
    }

    #[inline(always)]
    pub fn zero() -> Self {
        Self::splat(T::zero())
    }

    pub fn from_array(a: [T; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    #[inline(always)]
    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline(always)]
    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline(always)]
    pub fn length(self) -> T {
        self.dot(self).sqrt()
    }

    #[inline(always)]
    pub fn normalized(self) -> Self {
        self * (T::one() / self.length())
    }

    #[inline(always)]
    pub fn mul_elem(self, o: Self) -> Self {
        Self::new(self.x * o.x, self.y * o.y, self.z * o.z)
    }

    #[inline(always)]
    pub fn min(self, o: Self) -> Self {
        Self::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    #[inline(always)]
    pub fn max(self, o: Self) -> Self {
        Self::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn cast<U: Real>(self) -> Vec3<U> {
        Vec3::new(
            U::lit(self.x.to_f64_lossless()),
            U::lit(self.y.to_f64_lossless()),
            U::lit(self.z.to_f64_lossless()),
        )
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    #[inline(always)]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> AddAssign for Vec3<T> {
    #[inline(always)]
    fn add_assign(&mut self, o: Self) {
        self.x += o.x;
        self.y += o.y;
        self.z += o.z;
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    #[inline(always)]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    #[inline(always)]
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<T: Real> Div<T> for Vec3<T> {
    type Output = Self;
    #[inline(always)]
    fn div(self, s: T) -> Self {
        Self::new(self.x / s, self.y / s, self.z / s)
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    #[inline(always)]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl<T> Index<usize> for Vec3<T> {
    type Output = T;
    #[inline(always)]
    fn index(&self, i: usize) -> &T {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

/// Rotation quaternion stored as `(x, y, z, w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quat<T> {
    pub x: T,
    pub y: T,
    pub z: T,
    pub w: T,
}

impl<T: Real> Default for Quat<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> Quat<T> {
    pub fn new(x: T, y: T, z: T, w: T) -> Self {
        Self { x, y, z, w }
    }

    pub fn identity() -> Self {
        Self::new(T::zero(), T::zero(), T::zero(), T::one())
    }

    /// Rotation by `angle` radians about `axis` (need not be unit).
    pub fn from_axis_angle(axis: Vec3<T>, angle: T) -> Self {
        let a = axis.normalized();
        let half = angle * T::lit(0.5);
        let s = half.sin();
        Self::new(a.x * s, a.y * s, a.z * s, half.cos())
    }

    pub fn norm(self) -> T {
        (self.x * self.x + self.y * self.y + self.z * self.z + self.w * self.w).sqrt()
    }

    pub fn normalized(self) -> Result<Self, MathError> {
        let n = self.norm();
        if !(n > T::zero()) || !n.is_finite() {
            return Err(MathError::DegenerateQuaternion);
        }
        let inv = T::one() / n;
        Ok(Self::new(self.x * inv, self.y * inv, self.z * inv, self.w * inv))
    }

    pub fn conjugate(self) -> Self {
        Self::new(-self.x, -self.y, -self.z, self.w)
    }

    pub fn vector(self) -> Vec3<T> {
        Vec3::new(self.x, self.y, self.z)
    }

    #[inline(always)]
    pub fn rotate(self, v: Vec3<T>) -> Vec3<T> {
        // v + 2w(q x v) + 2 q x (q x v)
        let q = self.vector();
        let t = q.cross(v) * T::lit(2.0);
        v + t * self.w + q.cross(t)
    }

    pub fn to_mat3(self) -> [[T; 3]; 3] {
        let (x, y, z, w) = (self.x, self.y, self.z, self.w);
        let two = T::lit(2.0);
        let one = T::one();
        [
            [
                one - two * (y * y + z * z),
                two * (x * y - w * z),
                two * (x * z + w * y),
            ],
            [
                two * (x * y + w * z),
                one - two * (x * x + z * z),
                two * (y * z - w * x),
            ],
            [
                two * (x * z - w * y),
                two * (y * z + w * x),
                one - two * (x * x + y * y),
            ],
        ]
    }

    /// Quaternion of a (near-)orthonormal rotation block, normalized.
    pub fn from_mat3(m: [[T; 3]; 3]) -> Result<Self, MathError> {
        let one = T::one();
        let quarter = T::lit(0.25);
        let trace = m[0][0] + m[1][1] + m[2][2];
        let q = if trace > T::zero() {
            let s = (trace + one).sqrt() * T::lit(2.0);
            Self::new(
                (m[2][1] - m[1][2]) / s,
                (m[0][2] - m[2][0]) / s,
                (m[1][0] - m[0][1]) / s,
                quarter * s,
            )
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = (one + m[0][0] - m[1][1] - m[2][2]).sqrt() * T::lit(2.0);
            Self::new(
                quarter * s,
                (m[0][1] + m[1][0]) / s,
                (m[0][2] + m[2][0]) / s,
                (m[2][1] - m[1][2]) / s,
            )
        } else if m[1][1] > m[2][2] {
            let s = (one + m[1][1] - m[0][0] - m[2][2]).sqrt() * T::lit(2.0);
            Self::new(
                (m[0][1] + m[1][0]) / s,
                quarter * s,
                (m[1][2] + m[2][1]) / s,
                (m[0][2] - m[2][0]) / s,
            )
        } else {
            let s = (one + m[2][2] - m[0][0] - m[1][1]).sqrt() * T::lit(2.0);
            Self::new(
                (m[0][2] + m[2][0]) / s,
                (m[1][2] + m[2][1]) / s,
                quarter * s,
                (m[1][0] - m[0][1]) / s,
            )
        };
        q.normalized()
    }

    /// Rotation that turns the camera's -Z axis toward `target - eye`, with
    /// the camera's +Y axis as close to `up` as possible.
    pub fn look_at(eye: Vec3<T>, target: Vec3<T>, up: Vec3<T>) -> Result<Self, MathError> {
        let back = (eye - target).normalized();
        let right = up.cross(back).normalized();
        let true_up = back.cross(right);
        Self::from_mat3([
            [right.x, true_up.x, back.x],
            [right.y, true_up.y, back.y],
            [right.z, true_up.z, back.z],
        ])
    }

    pub fn cast<U: Real>(self) -> Quat<U> {
        Quat::new(
            U::lit(self.x.to_f64_lossless()),
            U::lit(self.y.to_f64_lossless()),
            U::lit(self.z.to_f64_lossless()),
            U::lit(self.w.to_f64_lossless()),
        )
    }
}

impl<T: Real> Mul for Quat<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::new(
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
        )
    }
}

/// Row-major 4x4 matrix; `m[row][col]`, column vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat4<T> {
    pub m: [[T; 4]; 4],
}

impl<T: Real> Mat4<T> {
    pub fn identity() -> Self {
        let mut m = [[T::zero(); 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = T::one();
        }
        Self { m }
    }

    pub fn from_rows(m: [[T; 4]; 4]) -> Self {
        Self { m }
    }

    /// Rigid transform `p -> R p + t`.
    pub fn from_rotation_translation(rotation: Quat<T>, translation: Vec3<T>) -> Self {
        let r = rotation.to_mat3();
        let mut out = Self::identity();
        for i in 0..3 {
            out.m[i][..3].copy_from_slice(&r[i]);
        }
        out.m[0][3] = translation.x;
        out.m[1][3] = translation.y;
        out.m[2][3] = translation.z;
        out
    }

    pub fn rotation_block(&self) -> [[T; 3]; 3] {
        let mut r = [[T::zero(); 3]; 3];
        for (i, row) in r.iter_mut().enumerate() {
            row.copy_from_slice(&self.m[i][..3]);
        }
        r
    }

    pub fn translation(&self) -> Vec3<T> {
        Vec3::new(self.m[0][3], self.m[1][3], self.m[2][3])
    }

    pub fn transform_point(&self, p: Vec3<T>) -> Vec3<T> {
        let m = &self.m;
        Vec3::new(
            m[0][0] * p.x + m[0][1] * p.y + m[0][2] * p.z + m[0][3],
            m[1][0] * p.x + m[1][1] * p.y + m[1][2] * p.z + m[1][3],
            m[2][0] * p.x + m[2][1] * p.y + m[2][2] * p.z + m[2][3],
        )
    }

    pub fn transform_vector(&self, v: Vec3<T>) -> Vec3<T> {
        let m = &self.m;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    /// Inverse assuming an orthonormal rotation block and `(0,0,0,1)` bottom row.
    pub fn rigid_inverse(&self) -> Self {
        let mut out = Self::identity();
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] = self.m[j][i];
            }
        }
        let t = out.transform_vector(self.translation());
        out.m[0][3] = -t.x;
        out.m[1][3] = -t.y;
        out.m[2][3] = -t.z;
        out
    }

    pub fn determinant3(&self) -> T {
        let r = self.rotation_block();
        r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
    }

    /// Largest entry of `|RᵀR - I|` for the rotation block.
    pub fn orthonormality_error(&self) -> T {
        let r = self.rotation_block();
        let mut worst = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                let mut dot = T::zero();
                for row in &r {
                    dot += row[i] * row[j];
                }
                let target = if i == j { T::one() } else { T::zero() };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    pub fn is_rigid(&self, tol: T) -> bool {
        let bottom_ok = self.m[3][0].abs() <= tol
            && self.m[3][1].abs() <= tol
            && self.m[3][2].abs() <= tol
            && (self.m[3][3] - T::one()).abs() <= tol;
        bottom_ok && self.orthonormality_error() <= tol && self.determinant3() > T::zero()
    }
}

impl<T: Real> Mul for Mat4<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut out = [[T::zero(); 4]; 4];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                let mut acc = T::zero();
                for k in 0..4 {
                    acc += self.m[i][k] * o.m[k][j];
                }
                *cell = acc;
            }
        }
        Self { m: out }
    }
}

/// Six-DoF pose: camera position and camera-to-world orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose<T> {
    pub position: Vec3<T>,
    pub orientation: Quat<T>,
}

impl<T: Real> Default for Pose<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> Pose<T> {
    pub fn new(position: Vec3<T>, orientation: Quat<T>) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Vec3::zero(), Quat::identity())
    }

    pub fn look_at(eye: Vec3<T>, target: Vec3<T>) -> Result<Self, MathError> {
        let up = Vec3::new(T::zero(), T::one(), T::zero());
        Ok(Self::new(eye, Quat::look_at(eye, target, up)?))
    }

    pub fn from_matrix(m: &Mat4<T>) -> Result<Self, MathError> {
        Ok(Self::new(m.translation(), Quat::from_mat3(m.rotation_block())?))
    }

    pub fn camera_to_world(&self) -> Mat4<T> {
        Mat4::from_rotation_translation(self.orientation, self.position)
    }

    /// World-to-camera matrix, the inverse of [`Pose::camera_to_world`].
    pub fn view_matrix(&self) -> Mat4<T> {
        let inv = self.orientation.conjugate();
        Mat4::from_rotation_translation(inv, -inv.rotate(self.position))
    }

    pub fn right(&self) -> Vec3<T> {
        self.orientation.rotate(Vec3::new(T::one(), T::zero(), T::zero()))
    }

    pub fn up(&self) -> Vec3<T> {
        self.orientation.rotate(Vec3::new(T::zero(), T::one(), T::zero()))
    }

    pub fn forward(&self) -> Vec3<T> {
        self.orientation.rotate(Vec3::new(T::zero(), T::zero(), -T::one()))
    }

    pub fn translated(&self, offset: Vec3<T>) -> Self {
        Self::new(self.position + offset, self.orientation)
    }
}

/// Free function form of [`Pose::view_matrix`].
pub fn view_matrix<T: Real>(pose: &Pose<T>) -> Mat4<T> {
    pose.view_matrix()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray<T> {
    pub origin: Vec3<T>,
    pub direction: Vec3<T>,
}

impl<T: Real> Ray<T> {
    pub fn new(origin: Vec3<T>, direction: Vec3<T>) -> Self {
        Self { origin, direction }
    }

    #[inline(always)]
    pub fn at(&self, t: T) -> Vec3<T> {
        self.origin + self.direction * t
    }
}

/// Pinhole camera. `fov_y` is the full vertical field of view in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera<T> {
    pub pose: Pose<T>,
    pub fov_y: T,
    pub width: u32,
    pub height: u32,
    pub near: T,
    pub far: T,
}

impl<T: Real> Camera<T> {
    pub fn new(pose: Pose<T>, fov_y: T, width: u32, height: u32) -> Result<Self, MathError> {
        let cam = Self {
            pose,
            fov_y,
            width,
            height,
            near: T::lit(0.01),
            far: T::lit(1.0e4),
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), MathError> {
        if !(self.fov_y > T::zero() && self.fov_y < T::lit(std::f64::consts::PI)) {
            return Err(MathError::InvalidCamera("fov_y must lie in (0, pi)"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(MathError::InvalidCamera("width and height must be >= 1"));
        }
        if !(self.near > T::zero() && self.near < self.far) {
            return Err(MathError::InvalidCamera("require 0 < near < far"));
        }
        Ok(())
    }

    pub fn aspect(&self) -> T {
        T::lit(self.width as f64) / T::lit(self.height as f64)
    }

    /// Focal length in pixels along the vertical axis.
    pub fn focal_px(&self) -> T {
        T::lit(self.height as f64 * 0.5) / (self.fov_y * T::lit(0.5)).tan()
    }

    /// Same camera rendered at a different pixel resolution.
    pub fn with_resolution(&self, width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            ..*self
        }
    }

    /// Ray through continuous image coordinates `(sx, sy)` in pixels.
    #[inline]
    pub fn ray_at(&self, sx: T, sy: T, eye_offset: Vec3<T>) -> Ray<T> {
        let two = T::lit(2.0);
        let tan_half = (self.fov_y * T::lit(0.5)).tan();
        let u = (two * sx / T::lit(self.width as f64) - T::one()) * tan_half * self.aspect();
        let v = (T::one() - two * sy / T::lit(self.height as f64)) * tan_half;
        let rot = self.pose.orientation;
        let direction = rot.rotate(Vec3::new(u, v, -T::one())).normalized();
        Ray::new(self.pose.position + rot.rotate(eye_offset), direction)
    }

    pub fn ray_for_pixel(&self, px: u32, py: u32, eye_offset: Vec3<T>) -> Result<Ray<T>, MathError> {
        if px >= self.width || py >= self.height {
            return Err(MathError::PixelOutOfRange {
                px,
                py,
                width: self.width,
                height: self.height,
            });
        }
        let half = T::lit(0.5);
        Ok(self.ray_at(
            T::lit(px as f64) + half,
            T::lit(py as f64) + half,
            eye_offset,
        ))
    }
}

/// Free function form of [`Camera::ray_for_pixel`].
pub fn ray_for_pixel<T: Real>(
    camera: &Camera<T>,
    px: u32,
    py: u32,
    eye_offset: Vec3<T>,
) -> Result<Ray<T>, MathError> {
    camera.ray_for_pixel(px, py, eye_offset)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb<T> {
    pub min: Vec3<T>,
    pub max: Vec3<T>,
}

impl<T: Real> Aabb<T> {
    pub fn new(min: Vec3<T>, max: Vec3<T>) -> Result<Self, MathError> {
        if !(min.x < max.x && min.y < max.y && min.z < max.z) || !min.is_finite() || !max.is_finite()
        {
            return Err(MathError::InvalidAabb);
        }
        Ok(Self { min, max })
    }

    /// Cube of side `size` centred at the origin.
    pub fn centered_cube(size: T) -> Self {
        let h = size * T::lit(0.5);
        Self {
            min: Vec3::splat(-h),
            max: Vec3::splat(h),
        }
    }

    pub fn size(&self) -> Vec3<T> {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3<T> {
        (self.min + self.max) * T::lit(0.5)
    }

    pub fn volume(&self) -> T {
        let s = self.size();
        s.x * s.y * s.z
    }

    /// Longest side length (the "AABB size" of a cubic scene).
    pub fn scale(&self) -> T {
        let s = self.size();
        s.x.max(s.y).max(s.z)
    }

    pub fn contains(&self, p: Vec3<T>) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }

    /// Maps the box onto `[0,1]³`.
    #[inline(always)]
    pub fn normalize(&self, p: Vec3<T>) -> Vec3<T> {
        let s = self.size();
        Vec3::new(
            (p.x - self.min.x) / s.x,
            (p.y - self.min.y) / s.y,
            (p.z - self.min.z) / s.z,
        )
    }

    pub fn intersection(&self, other: &Self) -> Option<Self> {
        Self::new(self.min.max(other.min), self.max.min(other.max)).ok()
    }

    /// Slab test. Returns `(t_near, t_far)` with `t_near` clamped to zero when
    /// the origin is inside, or `None` on a miss.
    #[inline]
    pub fn intersect(&self, ray: &Ray<T>) -> Option<(T, T)> {
        let mut t0 = T::zero();
        let mut t1 = T::infinity();
        for axis in 0..3 {
            let o = ray.origin[axis];
            let d = ray.direction[axis];
            let (lo, hi) = (self.min[axis], self.max[axis]);
            if d == T::zero() {
                if o < lo || o > hi {
                    return None;
                }
                continue;
            }
            let inv = T::one() / d;
            let mut ta = (lo - o) * inv;
            let mut tb = (hi - o) * inv;
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return None;
            }
        }
        Some((t0, t1))
    }
}

/// Free function form of [`Aabb::intersect`].
pub fn aabb_intersect<T: Real>(ray: &Ray<T>, aabb: &Aabb<T>) -> Option<(T, T)> {
    aabb.intersect(ray)
}

/// Uniform-scale similarity `p -> translation + rotation * (scale * p)`.
///
/// Used both as the renderer's scene transform and as the manipulation of
/// exported volumes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Similarity<T> {
    pub scale: T,
    pub rotation: Quat<T>,
    pub translation: Vec3<T>,
}

impl<T: Real> Default for Similarity<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> Similarity<T> {
    pub fn identity() -> Self {
        Self {
            scale: T::one(),
            rotation: Quat::identity(),
            translation: Vec3::zero(),
        }
    }

    pub fn new(scale: T, rotation: Quat<T>, translation: Vec3<T>) -> Result<Self, MathError> {
        if !(scale > T::zero()) || !scale.is_finite() {
            return Err(MathError::InvalidScale);
        }
        Ok(Self {
            scale,
            rotation: rotation.normalized()?,
            translation,
        })
    }

    pub fn translation(t: Vec3<T>) -> Self {
        Self {
            translation: t,
            ..Self::identity()
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }

    pub fn apply_point(&self, p: Vec3<T>) -> Vec3<T> {
        self.translation + self.rotation.rotate(p * self.scale)
    }

    pub fn inverse_point(&self, p: Vec3<T>) -> Vec3<T> {
        self.rotation.conjugate().rotate(p - self.translation) / self.scale
    }

    /// `self ∘ inner`: apply `inner` first.
    pub fn compose(&self, inner: &Self) -> Self {
        Self {
            scale: self.scale * inner.scale,
            rotation: self.rotation * inner.rotation,
            translation: self.apply_point(inner.translation),
        }
    }

    /// Maps a world ray into object space. A world distance `t` along the
    /// original ray corresponds to `t / scale` along the returned ray.
    #[inline]
    pub fn inverse_ray(&self, ray: &Ray<T>) -> Ray<T> {
        let inv = self.rotation.conjugate();
        Ray::new(
            inv.rotate(ray.origin - self.translation) / self.scale,
            inv.rotate(ray.direction),
        )
    }

    pub fn to_matrix(&self) -> Mat4<T> {
        let mut m = Mat4::from_rotation_translation(self.rotation, self.translation);
        for row in m.m.iter_mut().take(3) {
            for v in row.iter_mut().take(3) {
                *v *= self.scale;
            }
        }
        m
    }
}
