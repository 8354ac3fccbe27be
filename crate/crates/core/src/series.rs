//! Closed forms and Maclaurin series for the ratio functions that appear in
//! the quaternion and dual-quaternion exponential and logarithm.
//!
//! Every function switches to its series below a threshold. Both branches
//! are public so the switch can be checked for continuity.

/// Argument magnitude below which the series replace the closed forms.
pub const TAYLOR_THRESHOLD: f64 = 1e-4;

/// Switch point for the ratios whose closed forms cancel to O(x^2): their
/// roundoff grows like eps / x^2, so they change over well above
/// [`TAYLOR_THRESHOLD`], where the truncated series is still exact to
/// about 1e-14.
pub const CANCELLATION_THRESHOLD: f64 = 0.05;

/// `sin(x) / x`.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < TAYLOR_THRESHOLD {
        sinc_series(x)
    } else {
        sinc_closed(x)
    }
}

pub fn sinc_closed(x: f64) -> f64 {
    x.sin() / x
}

pub fn sinc_series(x: f64) -> f64 {
    let x2 = x * x;
    1.0 - x2 / 6.0 + x2 * x2 / 120.0 - x2 * x2 * x2 / 5040.0
}

/// `x / sin(x)`.
pub fn inv_sinc(x: f64) -> f64 {
    if x.abs() < TAYLOR_THRESHOLD {
        inv_sinc_series(x)
    } else {
        inv_sinc_closed(x)
    }
}

pub fn inv_sinc_closed(x: f64) -> f64 {
    x / x.sin()
}

pub fn inv_sinc_series(x: f64) -> f64 {
    let x2 = x * x;
    1.0 + x2 / 6.0 + 7.0 * x2 * x2 / 360.0 + 31.0 * x2 * x2 * x2 / 15120.0
}

/// `(cos(x) - sin(x)/x) / x^2`.
pub fn cos_minus_sinc_over_sq(x: f64) -> f64 {
    if x.abs() < CANCELLATION_THRESHOLD {
        cos_minus_sinc_over_sq_series(x)
    } else {
        cos_minus_sinc_over_sq_closed(x)
    }
}

pub fn cos_minus_sinc_over_sq_closed(x: f64) -> f64 {
    (x.cos() - x.sin() / x) / (x * x)
}

pub fn cos_minus_sinc_over_sq_series(x: f64) -> f64 {
    let x2 = x * x;
    -1.0 / 3.0 + x2 / 30.0 - x2 * x2 / 840.0 + x2 * x2 * x2 / 45360.0
}

/// `cos(x)/sin(x)^2 - x/sin(x)^3`.
pub fn log_alpha_kernel(x: f64) -> f64 {
    if x.abs() < CANCELLATION_THRESHOLD {
        log_alpha_kernel_series(x)
    } else {
        log_alpha_kernel_closed(x)
    }
}

pub fn log_alpha_kernel_closed(x: f64) -> f64 {
    let s = x.sin();
    x.cos() / (s * s) - x / (s * s * s)
}

pub fn log_alpha_kernel_series(x: f64) -> f64 {
    let x2 = x * x;
    -2.0 / 3.0 - x2 / 5.0 - 17.0 * x2 * x2 / 420.0 - 29.0 * x2 * x2 * x2 / 4200.0
}
