//! The SABR plane as a Riemannian manifold: its metric, the isometry onto the
//! Poincaré half-plane, cosh-distances, Legendre polynomials and the CEV
//! Riemannian distance.
//!
//! Geometry is that of unit vol-of-vol; only `β` and `ρ` are read from the
//! parameters.

use serde::Serialize;

use crate::error::{domain, Result};
use crate::process_models::{pow, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricTensor2 {
    pub g_xx: f64,
    pub g_xy: f64,
    pub g_yy: f64,
}

impl MetricTensor2 {
    pub fn det(&self) -> f64 {
        self.g_xx * self.g_yy - self.g_xy * self.g_xy
    }

    pub fn is_positive_definite(&self) -> bool {
        self.g_xx > 0.0 && self.det() > 0.0
    }

    pub fn inverse(&self) -> [[f64; 2]; 2] {
        let d = self.det();
        [[self.g_yy / d, -self.g_xy / d], [-self.g_xy / d, self.g_xx / d]]
    }
}

/// Point of the upper half-plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HyperbolicPoint {
    pub u: f64,
    pub v: f64,
}

impl HyperbolicPoint {
    pub fn new(u: f64, v: f64) -> Result<Self> {
        if !(v > 0.0) || !u.is_finite() || !v.is_finite() {
            return domain(format!("half-plane point needs v > 0, got ({u}, {v})"));
        }
        Ok(Self { u, v })
    }
}

fn check_point(beta: f64, x: f64, y: f64) -> Result<()> {
    if beta >= 1.0 {
        return domain("the half-plane isometry needs beta < 1");
    }
    if !(x > 0.0) || !(y > 0.0) {
        return domain(format!("point ({x}, {y}) is outside (0,∞)²"));
    }
    Ok(())
}

/// `(x, y) ↦ (x^{1−β}/(ρ̄(1−β)) − ρy/ρ̄, y)`.
pub fn sabr_isometry(p: &ModelParams, x: f64, y: f64) -> Result<HyperbolicPoint> {
    check_point(p.beta(), x, y)?;
    let q = 1.0 - p.beta();
    let u = pow(x, q) / (p.rho_bar() * q) - p.rho() * y / p.rho_bar();
    HyperbolicPoint::new(u, y)
}

/// Cosh of the hyperbolic distance, `1 + ((u−U)² + (v−V)²)/(2vV)`.
pub fn hyperbolic_cosh_distance(a: &HyperbolicPoint, b: &HyperbolicPoint) -> f64 {
    let du = a.u - b.u;
    let dv = a.v - b.v;
    1.0 + (du * du + dv * dv) / (2.0 * a.v * b.v)
}

pub fn hyperbolic_distance(a: &HyperbolicPoint, b: &HyperbolicPoint) -> f64 {
    hyperbolic_cosh_distance(a, b).acosh()
}

/// Cosh of the SABR distance written directly in `(x, y)` coordinates.
pub fn sabr_cosh_distance(p: &ModelParams, a: (f64, f64), b: (f64, f64)) -> Result<f64> {
    let beta = p.beta();
    check_point(beta, a.0, a.1)?;
    check_point(beta, b.0, b.1)?;
    let q = 1.0 - beta;
    let (big_x, big_y) = a;
    let (x, y) = b;
    let shift = (pow(big_x, q) - pow(x, q)) / q - p.rho() * (big_y - y);
    let dy = big_y - y;
    let yy = 2.0 * big_y * y;
    Ok(1.0 + shift * shift / ((1.0 - p.rho() * p.rho()) * yy) + dy * dy / yy)
}

/// Point mapped to `(c/ρ̄, 1)` by the isometry: `(((1−β)(c+ρ))^{1/(1−β)}, 1)`.
/// Exists only when `c + ρ > 0`.
pub fn reference_point(p: &ModelParams, c: f64) -> Option<(f64, f64)> {
    let q = 1.0 - p.beta();
    let base = q * (c + p.rho());
    if q <= 0.0 || base <= 0.0 {
        return None;
    }
    Some((pow(base, 1.0 / q), 1.0))
}

/// Legendre polynomial of degree `n` by the three-term recurrence.
pub fn legendre_eval(n: u32, r: f64) -> f64 {
    legendre_with_derivative(n, r).0
}

/// `(P_n(r), P_n'(r))`.
pub fn legendre_with_derivative(n: u32, r: f64) -> (f64, f64) {
    let (mut p_prev, mut p) = (1.0, r);
    let (mut d_prev, mut d) = (0.0, 1.0);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let kf = k as f64;
        let p_next = ((2.0 * kf + 1.0) * r * p - kf * p_prev) / (kf + 1.0);
        let d_next = d_prev + (2.0 * kf + 1.0) * p;
        p_prev = p;
        p = p_next;
        d_prev = d;
        d = d_next;
    }
    (p, d)
}

/// Distance `|b^{1−β} − a^{1−β}|/(σ(1−β))` of the CEV line. For `β = 1` it is
/// `|log(b/a)|/σ`, which is infinite as soon as an endpoint is 0.
pub fn cev_riemannian_distance(beta: f64, sigma: f64, a: f64, b: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&beta) || !(sigma > 0.0) || !(a >= 0.0) || !(b >= 0.0) {
        return domain("CEV distance needs beta in [0,1], sigma > 0 and endpoints >= 0");
    }
    if beta == 1.0 {
        if a == 0.0 || b == 0.0 {
            return Ok(if a == b { 0.0 } else { f64::INFINITY });
        }
        return Ok((b / a).ln().abs() / sigma);
    }
    let q = 1.0 - beta;
    Ok((pow(b, q) - pow(a, q)).abs() / (sigma * q))
}

/// `g = 1/(1−ρ²)·(dx²/(y²x^{2β}) − 2ρ dxdy/(y²x^β) + dy²/y²)`.
pub fn metric_tensor(p: &ModelParams, x: f64, y: f64) -> Result<MetricTensor2> {
    if !(x > 0.0) || !(y > 0.0) {
        return domain(format!("metric is defined on (0,∞)², got ({x}, {y})"));
    }
    let k = 1.0 / (1.0 - p.rho() * p.rho());
    let xb = pow(x, p.beta());
    let y2 = y * y;
    Ok(MetricTensor2 {
        g_xx: k / (y2 * xb * xb),
        g_xy: -k * p.rho() / (y2 * xb),
        g_yy: k / y2,
    })
}

/// Riemannian volume density `√det g = 1/(ρ̄ x^β y²)`.
pub fn volume_density(p: &ModelParams, x: f64, y: f64) -> f64 {
    1.0 / (p.rho_bar() * pow(x, p.beta()) * y * y)
}
