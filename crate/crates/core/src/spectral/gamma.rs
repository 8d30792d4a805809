use std::f64::consts::PI;

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Euler's Γ(s) for `s > 0`.
pub fn gamma_fn(s: f64) -> Result<f64> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::invalid(
            "s",
            format!("gamma requires s > 0, got {s}"),
        ));
    }
    Ok(gamma_unchecked(s))
}

pub(crate) fn gamma_unchecked(s: f64) -> f64 {
    if s < 0.5 {
        // reflection: Γ(s)Γ(1−s) = π / sin(πs)
        return PI / ((PI * s).sin() * gamma_unchecked(1.0 - s));
    }
    let x = s - 1.0;
    let mut series = LANCZOS_COEFFS[0];
    for (i, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        series += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * series
}
