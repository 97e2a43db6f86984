//! Float helpers backed by `libm` so results do not depend on the host's libm.

use crate::{Mat3, Vec3};

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub(crate) fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub(crate) fn tan(x: f64) -> f64 {
    libm::tan(x)
}

#[inline]
pub(crate) fn acos(x: f64) -> f64 {
    libm::acos(x)
}

#[inline]
pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

/// Body-to-navigation rotation for roll/pitch/yaw applied in Z-Y-X order.
pub fn rotation(attitude: &Vec3) -> Mat3 {
    let (sp, cp) = (sin(attitude.x), cos(attitude.x));
    let (st, ct) = (sin(attitude.y), cos(attitude.y));
    let (ss, cs) = (sin(attitude.z), cos(attitude.z));
    Mat3::new(
        cs * ct,
        cs * st * sp - ss * cp,
        cs * st * cp + ss * sp,
        ss * ct,
        ss * st * sp + cs * cp,
        ss * st * cp - cs * sp,
        -st,
        ct * sp,
        ct * cp,
    )
}

/// Angle between the body thrust axis and the navigation vertical.
pub fn tilt(attitude: &Vec3) -> f64 {
    acos((cos(attitude.x) * cos(attitude.y)).clamp(-1.0, 1.0))
}

pub(crate) fn is_finite3(v: &Vec3) -> bool {
    v.iter().all(|x| x.is_finite())
}
