//! Adaptive Dormand–Prince 5(4) integration of the Mathieu equation
//! y″ + (a − 2q cos 2z) y = 0 along the real axis.

use num_complex::Complex64;

use crate::error::{Result, Se2Error};

type C = Complex64;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// State: two independent solutions (y, y′) integrated together.
type State = [C; 4];

fn rhs(a: C, q: C, z: f64, s: &State) -> State {
    let w = -(a - 2.0 * q * (2.0 * z).cos());
    [s[1], w * s[0], s[3], w * s[2]]
}

fn axpy(y: &State, h: f64, terms: &[(f64, &State)]) -> State {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..4 {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// Integrate the fundamental pair from z0 to z1 with local relative
/// tolerance `tol`. Returns [y1, y1′, y2, y2′] at z1, where the initial
/// data at z0 is `init`.
pub fn integrate(a: C, q: C, z0: f64, z1: f64, init: State, tol: f64) -> Result<State> {
    let span = z1 - z0;
    if span == 0.0 {
        return Ok(init);
    }
    let dir = span.signum();
    let scale0 = (a.norm() + 2.0 * q.norm()).sqrt().max(1.0);
    let mut h = dir * (0.1 / scale0).min(span.abs());
    let mut z = z0;
    let mut y = init;
    let mut k1 = rhs(a, q, z, &y);
    let mut steps = 0usize;
    while (z1 - z) * dir > 0.0 {
        if steps > 2_000_000 {
            return Err(Se2Error::Numerical("Mathieu ODE integration exceeded step budget".into()));
        }
        steps += 1;
        if (z + h - z1) * dir > 0.0 {
            h = z1 - z;
        }
        let k2 = rhs(a, q, z + C2 * h, &axpy(&y, h, &[(A21, &k1)]));
        let k3 = rhs(a, q, z + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = rhs(a, q, z + C4 * h, &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = rhs(a, q, z + C5 * h, &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
        let k6 = rhs(a, q, z + h, &axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
        let y_new = axpy(&y, h, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
        let k7 = rhs(a, q, z + h, &y_new);
        let mut err: f64 = 0.0;
        let ymag = y.iter().chain(y_new.iter()).fold(0.0f64, |m, v| m.max(v.norm())).max(1e-300);
        for i in 0..4 {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            err = err.max(e.norm() / (tol * ymag));
        }
        if !err.is_finite() {
            return Err(Se2Error::Numerical("non-finite value in Mathieu ODE".into()));
        }
        if err <= 1.0 {
            z += h;
            y = y_new;
            k1 = k7;
        }
        let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= fac;
        if h.abs() < 1e-14 * span.abs() {
            return Err(Se2Error::Numerical("Mathieu ODE step size underflow".into()));
        }
    }
    Ok(y)
}

/// Even and odd fundamental solutions at z: (y1, y1′, y2, y2′) with
/// y1(0) = 1, y1′(0) = 0, y2(0) = 0, y2′(0) = 1.
pub fn fundamental(a: C, q: C, z: f64, tol: f64) -> Result<State> {
    let one = C::new(1.0, 0.0);
    let zero = C::new(0.0, 0.0);
    integrate(a, q, 0.0, z, [one, zero, zero, one], tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_coefficient_limit() {
        // q = 0, a = 4: y1 = cos 2z, y2 = sin(2z)/2
        let a = C::new(4.0, 0.0);
        let s = fundamental(a, C::new(0.0, 0.0), 1.3, 1e-12).unwrap();
        assert!((s[0] - (2.6f64).cos()).norm() < 1e-10);
        assert!((s[2] - (2.6f64).sin() / 2.0).norm() < 1e-10);
        // a = −1: y1 = cosh z
        let s = fundamental(C::new(-1.0, 0.0), C::new(0.0, 0.0), 3.0, 1e-12).unwrap();
        assert!((s[0].re - 3.0f64.cosh()).abs() < 1e-9 * 3.0f64.cosh());
    }

    #[test]
    fn wronskian_is_one() {
        let s = fundamental(C::new(-3.0, 0.5), C::new(2.0, 7.0), std::f64::consts::PI, 1e-12).unwrap();
        let w = s[0] * s[3] - s[1] * s[2];
        assert!((w - 1.0).norm() < 1e-8);
    }
}
