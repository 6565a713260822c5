//! The fixed zero-excision function and the smooth step it is built from.
//!
//! `χ(ξ) = 0` for `|ξ| ≤ 1/2`, `χ(ξ) = 1` for `|ξ| ≥ 1`, a monotone degree-7
//! polynomial (C³) in between. Scaled versions are `χ(ξ / c)`.

use crate::jet::{Jet, C64};

/// `t⁴(35 − 84t + 70t² − 20t³)` on `[0, 1]`, clamped outside.
pub fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let t4 = t * t * t * t;
        t4 * (35.0 + t * (-84.0 + t * (70.0 - 20.0 * t)))
    }
}

pub fn smoothstep_jet(t: &Jet) -> Jet {
    let t0 = t.value().re;
    if t0 <= 0.0 {
        return Jet::constant(0.0, t.len());
    }
    if t0 >= 1.0 {
        return Jet::constant(1.0, t.len());
    }
    // Horner in the jet algebra
    let coeffs = [0.0, 0.0, 0.0, 0.0, 35.0, -84.0, 70.0, -20.0];
    let mut acc = Jet::constant(coeffs[7], t.len());
    for c in coeffs[..7].iter().rev() {
        acc = (&acc * t).add_scalar(C64::new(*c, 0.0));
    }
    acc
}

/// `χ(ξ / radius)`; a nonpositive radius means no excision.
pub fn chi(xi: f64, radius: f64) -> f64 {
    if radius <= 0.0 {
        return 1.0;
    }
    smoothstep(2.0 * xi.abs() / radius - 1.0)
}

pub fn chi_jet(xi: &Jet, radius: f64) -> Jet {
    let x0 = xi.value().re;
    if radius <= 0.0 {
        return Jet::constant(1.0, xi.len());
    }
    if x0.abs() <= 0.5 * radius {
        return Jet::constant(0.0, xi.len());
    }
    if x0.abs() >= radius {
        return Jet::constant(1.0, xi.len());
    }
    let abs = xi.scale(x0.signum());
    smoothstep_jet(&abs.scale(2.0 / radius).add_scalar(-1.0))
}

/// Smooth transition used by the Hardy multiplier: 0 for `ξ ≤ −0.9`, 1 for `ξ ≥ −0.1`.
pub fn hardy_step(xi: f64) -> f64 {
    smoothstep((xi + 0.9) / 0.8)
}

pub fn hardy_step_jet(xi: &Jet) -> Jet {
    smoothstep_jet(&xi.add_scalar(0.9).scale(1.0 / 0.8))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn excision_support() {
        assert_eq!(chi(0.5, 1.0), 0.0);
        assert_eq!(chi(0.2, 1.0), 0.0);
        assert_eq!(chi(1.0, 1.0), 1.0);
        assert_eq!(chi(-3.0, 1.0), 1.0);
        let mid = chi(0.75, 1.0);
        assert!((mid - 0.5).abs() < 1e-12);
        assert_eq!(chi(1.5, 4.0), 0.0);
    }

    #[test]
    fn monotone_between_knots() {
        let mut prev = 0.0;
        for i in 0..=200 {
            let v = smoothstep(i as f64 / 200.0);
            assert!(v >= prev - 1e-15);
            prev = v;
        }
    }

    #[test]
    fn jet_matches_finite_difference() {
        let x = 0.8;
        let j = chi_jet(&Jet::variable(x, 3), 1.0);
        let h = 1e-5;
        let fd = (chi(x + h, 1.0) - chi(x - h, 1.0)) / (2.0 * h);
        assert!((j.derivative_at(1).re - fd).abs() < 1e-6);
        assert!((j.value().re - chi(x, 1.0)).abs() < 1e-15);
    }

    #[test]
    fn hardy_step_values_at_integers() {
        assert_eq!(hardy_step(0.0), 1.0);
        assert_eq!(hardy_step(-1.0), 0.0);
        assert_eq!(hardy_step(3.0), 1.0);
        assert_eq!(hardy_step(-4.0), 0.0);
    }
}
