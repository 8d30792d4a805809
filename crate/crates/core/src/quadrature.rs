//! Adaptive Gauss–Kronrod (21-point) quadrature for real and complex
//! integrands, the semi-infinite map `ω = a + L·u/(1−u)`, and Gauss–Legendre
//! rules of arbitrary order.

// rule tables are quoted at their published precision
#![allow(clippy::excessive_precision)]

use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};
use crate::quantum::C64;

/// Kronrod abscissae on `[0, 1)`, descending; the odd-indexed ones are the
/// 10-point Gauss nodes.
const XGK: [f64; 11] = [
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077958109831074,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
];

/// Gauss weights for `XGK[1], XGK[3], …, XGK[9]`.
const WG: [f64; 5] = [
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
];

/// Values that can be integrated: `f64` and complex numbers.
pub trait QuadValue:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self>
{
    fn zero() -> Self;
    fn magnitude(&self) -> f64;
    fn is_finite_value(&self) -> bool;
}

impl QuadValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
}

impl QuadValue for C64 {
    fn zero() -> Self {
        C64::new(0.0, 0.0)
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
    fn is_finite_value(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_panels: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            abs: 1e-10,
            rel: 1e-10,
            max_panels: 4000,
        }
    }
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Tolerance {
            abs,
            rel,
            ..Default::default()
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct QuadResult<T> {
    pub value: T,
    pub abs_error: f64,
    pub panels: usize,
}

#[derive(Clone, Copy)]
struct Panel<T> {
    a: f64,
    b: f64,
    value: T,
    error: f64,
}

fn gk21<T: QuadValue, F: Fn(f64) -> T>(f: &F, a: f64, b: f64) -> (T, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[10];
    let mut gauss = T::zero();
    let mut fv = [(T::zero(), T::zero()); 10];
    for (j, &x) in XGK[..10].iter().enumerate() {
        let dx = half * x;
        let (f1, f2) = (f(center - dx), f(center + dx));
        fv[j] = (f1, f2);
        kronrod = kronrod + (f1 + f2) * WGK[j];
        if j % 2 == 1 {
            gauss = gauss + (f1 + f2) * WG[j / 2];
        }
    }
    let mean = kronrod * 0.5;
    let mut resasc = WGK[10] * (fc - mean).magnitude();
    let mut resabs = WGK[10] * fc.magnitude();
    for (j, (f1, f2)) in fv.iter().enumerate() {
        resasc += WGK[j] * ((*f1 - mean).magnitude() + (*f2 - mean).magnitude());
        resabs += WGK[j] * (f1.magnitude() + f2.magnitude());
    }
    let scale = half.abs();
    let (resasc, resabs) = (resasc * scale, resabs * scale);
    let mut err = ((kronrod - gauss) * half).magnitude();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    (kronrod * half, err)
}

/// Adaptive GK21 over the finite interval `[a, b]`, bisecting the panel with
/// the largest error estimate until `err ≤ max(abs, rel·|I|)`.
pub fn integrate<T, F>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<QuadResult<T>>
where
    T: QuadValue,
    F: Fn(f64) -> T,
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::invalid("bounds", format!("[{a}, {b}] not finite")));
    }
    if a == b {
        return Ok(QuadResult {
            value: T::zero(),
            abs_error: 0.0,
            panels: 0,
        });
    }
    let (value, error) = gk21(&f, a, b);
    let mut panels = vec![Panel { a, b, value, error }];
    loop {
        let total = panels.iter().fold(T::zero(), |acc, p| acc + p.value);
        let total_err: f64 = panels.iter().map(|p| p.error).sum();
        if !total.is_finite_value() || !total_err.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite integrand on [{a}, {b}]"
            )));
        }
        let target = tol.abs.max(tol.rel * total.magnitude());
        if total_err <= target {
            return Ok(QuadResult {
                value: total,
                abs_error: total_err,
                panels: panels.len(),
            });
        }
        // largest-error panel that can still be split
        let pick = panels
            .iter()
            .enumerate()
            .filter(|(_, p)| {
                let mid = 0.5 * (p.a + p.b);
                mid > p.a && mid < p.b && (p.b - p.a).abs() > 1e-15 * (p.a.abs() + p.b.abs())
            })
            .max_by(|(_, x), (_, y)| x.error.total_cmp(&y.error))
            .map(|(i, _)| i);
        let Some(i) = pick else {
            return Ok(QuadResult {
                value: total,
                abs_error: total_err,
                panels: panels.len(),
            });
        };
        if panels.len() >= tol.max_panels {
            return Err(Error::Numerical(format!(
                "quadrature on [{a}, {b}] did not reach {target:e} within {} panels (estimate {total_err:e})",
                tol.max_panels
            )));
        }
        let p = panels.swap_remove(i);
        let mid = 0.5 * (p.a + p.b);
        let (v1, e1) = gk21(&f, p.a, mid);
        let (v2, e2) = gk21(&f, mid, p.b);
        panels.push(Panel {
            a: p.a,
            b: mid,
            value: v1,
            error: e1,
        });
        panels.push(Panel {
            a: mid,
            b: p.b,
            value: v2,
            error: e2,
        });
    }
}

/// `∫_a^∞ f(ω) dω` through `ω = a + L·u/(1−u)`, `u ∈ (0, 1)`.
///
/// `length` should be the decay scale of `f` so the mapped integrand is
/// spread evenly over the unit interval.
pub fn integrate_semi_infinite<T, F>(
    f: F,
    a: f64,
    length: f64,
    tol: Tolerance,
) -> Result<QuadResult<T>>
where
    T: QuadValue,
    F: Fn(f64) -> T,
{
    if !(length > 0.0) {
        return Err(Error::invalid("length", "mapping scale must be positive"));
    }
    let mapped = |u: f64| {
        let one_minus = 1.0 - u;
        if one_minus <= 0.0 {
            return T::zero();
        }
        let w = a + length * u / one_minus;
        let jac = length / (one_minus * one_minus);
        let v = f(w);
        // the integrand decays exponentially, so the far tail underflows cleanly
        if jac.is_finite() && v.is_finite_value() {
            v * jac
        } else {
            T::zero()
        }
    };
    integrate(mapped, 0.0, 1.0, tol)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        nodes[n - 1 - i] = -x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_exact() {
        let r = integrate(
            |x: f64| x.powi(7) - 3.0 * x * x,
            -1.0,
            2.0,
            Tolerance::default(),
        )
        .unwrap();
        let exact = (2f64.powi(8) - 1.0) / 8.0 - (8.0 + 1.0);
        assert!((r.value - exact).abs() < 1e-13);
        assert_eq!(r.panels, 1);
    }

    #[test]
    fn endpoint_singularity() {
        let r = integrate(
            |x: f64| 1.0 / x.sqrt(),
            0.0,
            1.0,
            Tolerance::new(1e-10, 1e-10),
        )
        .unwrap();
        assert!((r.value - 2.0).abs() < 1e-9);
    }

    #[test]
    fn complex_oscillatory() {
        let t = 30.0;
        let r = integrate(
            |x: f64| C64::from_polar(1.0, -x * t),
            0.0,
            PI,
            Tolerance::default(),
        )
        .unwrap();
        let exact = (C64::from_polar(1.0, -PI * t) - 1.0) / C64::new(0.0, -t);
        assert!((r.value - exact).norm() < 1e-10);
    }

    #[test]
    fn semi_infinite_gamma_integral() {
        // ∫ ω^{1.5} e^{−ω} = Γ(2.5) = 3√π/4
        let r = integrate_semi_infinite(
            |w: f64| w.powf(1.5) * (-w).exp(),
            0.0,
            1.0,
            Tolerance::default(),
        )
        .unwrap();
        assert!((r.value - 0.75 * PI.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn gauss_legendre_moments() {
        for n in [1usize, 2, 5, 8, 16] {
            let (x, w) = gauss_legendre(n);
            let total: f64 = w.iter().sum();
            assert!((total - 2.0).abs() < 1e-14, "n={n}");
            // exact up to degree 2n−1
            let deg = 2 * n - 1;
            let q: f64 = x
                .iter()
                .zip(&w)
                .map(|(x, w)| w * x.powi(deg as i32 - 1))
                .sum();
            let exact = if (deg - 1) % 2 == 0 {
                2.0 / deg as f64
            } else {
                0.0
            };
            assert!((q - exact).abs() < 1e-13, "n={n}");
        }
    }

    #[test]
    fn nonconvergence_reported() {
        let tol = Tolerance {
            abs: 1e-14,
            rel: 0.0,
            max_panels: 5,
        };
        assert!(integrate(|x: f64| (1.0 / x).sin(), 1e-6, 1.0, tol).is_err());
    }
}
