//! Scalar math shims and small vector helpers.
//!
//! Under `std` the shims forward to the intrinsic `f64` methods; under
//! `no_std` they fall back to `libm`. All hot-path vector helpers operate on
//! plain slices.

macro_rules! shim {
    ($name:ident, $libm:ident) => {
        #[inline]
        pub fn $name(x: f64) -> f64 {
            #[cfg(feature = "std")]
            {
                x.$name()
            }
            #[cfg(not(feature = "std"))]
            {
                libm::$libm(x)
            }
        }
    };
}

shim!(exp, exp);
shim!(ln, log);
shim!(ln_1p, log1p);
shim!(log2, log2);
shim!(sqrt, sqrt);
shim!(sin, sin);
shim!(cos, cos);
shim!(abs, fabs);
shim!(floor, floor);
shim!(ceil, ceil);

#[inline]
pub fn powf(base: f64, exponent: f64) -> f64 {
    #[cfg(feature = "std")]
    {
        base.powf(exponent)
    }
    #[cfg(not(feature = "std"))]
    {
        libm::pow(base, exponent)
    }
}

/// Numerically stable `log(sigmoid(x)) = -softplus(-x)`.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

/// `softplus(x) = ln(1 + e^x)` without overflow for large |x|.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + ln_1p(exp(-x))
    } else {
        ln_1p(exp(x))
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// ELU with alpha = 1.
#[inline]
pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        exp(x) - 1.0
    }
}

/// Derivative of ELU with alpha = 1 (1 at the kink).
#[inline]
pub fn elu_prime(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        exp(x)
    }
}

/// sign with sign(0) = 0.
#[inline]
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    sqrt(dot(a, a))
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// Norms at or below this threshold are treated as zero by [`l2_normalize`].
pub const NORM_EPS: f64 = 1e-12;

/// Normalize `v` to unit L2 norm in place and return the original norm.
/// Vectors with norm at most [`NORM_EPS`] are left untouched so that
/// zero-initialized parameters pass through as identity.
pub fn l2_normalize(v: &mut [f64]) -> f64 {
    let n = norm2(v);
    if n > NORM_EPS {
        let inv = 1.0 / n;
        for x in v {
            *x *= inv;
        }
    }
    n
}
