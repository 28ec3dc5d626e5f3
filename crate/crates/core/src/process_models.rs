//! Parameter records, the state space, SDE coefficients and the second-order
//! operators attached to the SABR family.
//!
//! Every operator is stored as a coefficient set
//! `L f = a_xx f_xx + a_xy f_xy + a_yy f_yy + b_x f_x + b_y f_y`
//! so that generators, quadrature pairings and drift residuals share one
//! source of truth.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{config, domain, Result};

/// SABR parameters. `nu` is the vol-of-vol, `sigma` the volatility of the
/// one-dimensional CEV process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    beta: f64,
    rho: f64,
    nu: f64,
    sigma: f64,
    rho_bar: f64,
}

impl ModelParams {
    /// Parameters with `sigma = 1`.
    pub fn new(beta: f64, rho: f64, nu: f64) -> Result<Self> {
        Self::with_sigma(beta, rho, nu, 1.0)
    }

    pub fn with_sigma(beta: f64, rho: f64, nu: f64, sigma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) {
            return config(format!("beta must lie in [0,1], got {beta}"));
        }
        if !(rho.abs() < 1.0) {
            return config(format!("rho must lie in (-1,1), got {rho}"));
        }
        if !(nu >= 0.0) || !nu.is_finite() {
            return config(format!("nu must be a finite value >= 0, got {nu}"));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return config(format!("sigma must be a finite value > 0, got {sigma}"));
        }
        Ok(Self {
            beta,
            rho,
            nu,
            sigma,
            rho_bar: (1.0 - rho * rho).sqrt(),
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn nu(&self) -> f64 {
        self.nu
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn rho_bar(&self) -> f64 {
        self.rho_bar
    }

    /// Same parameters with a different vol-of-vol.
    pub fn set_nu(&self, nu: f64) -> Result<Self> {
        Self::with_sigma(self.beta, self.rho, nu, self.sigma)
    }
}

/// A point of the state space `[0,∞) × (0,∞)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct State2 {
    pub x: f64,
    pub y: f64,
    pub absorbed: bool,
}

impl State2 {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !(x >= 0.0) || !x.is_finite() {
            return domain(format!("x must be finite and >= 0, got {x}"));
        }
        if !(y > 0.0) || !y.is_finite() {
            return domain(format!("y must be finite and > 0, got {y}"));
        }
        Ok(Self {
            x,
            y,
            absorbed: x == 0.0,
        })
    }

    pub fn absorbed_at(y: f64) -> Self {
        Self {
            x: 0.0,
            y,
            absorbed: true,
        }
    }
}

/// `x^e` with fast paths for the exponents that dominate simulation loops.
/// Follows `powf` at zero: `0^0 = 1`, `0^e = 0` for `e > 0`.
#[inline]
pub fn pow(x: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else if e == 1.0 {
        x
    } else if e == 0.5 {
        x.sqrt()
    } else if e == 2.0 {
        x * x
    } else if e == -0.5 {
        1.0 / x.sqrt()
    } else if e == -1.0 {
        1.0 / x
    } else {
        x.powf(e)
    }
}

/// Drift vector and diffusion matrix (rows: X, Y; columns: W, W⊥).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SdeCoefficients {
    pub drift: [f64; 2],
    pub diffusion: [[f64; 2]; 2],
}

/// Coefficients of the SABR system, or of the SABR Brownian motion when
/// `drifted` is set. Correlation enters as `Z = ρW + ρ̄W⊥`.
pub fn sabr_coefficients(p: &ModelParams, s: &State2, drifted: bool) -> Result<SdeCoefficients> {
    if !(s.y > 0.0) {
        return domain(format!("volatility must be positive, got {}", s.y));
    }
    if s.absorbed {
        return Ok(SdeCoefficients {
            drift: [0.0; 2],
            diffusion: [[0.0; 2]; 2],
        });
    }
    let xb = pow(s.x, p.beta);
    let drift_x = if drifted && p.beta > 0.0 {
        0.5 * s.y * s.y * p.beta * pow(s.x, 2.0 * p.beta - 1.0)
    } else {
        0.0
    };
    Ok(SdeCoefficients {
        drift: [drift_x, 0.0],
        diffusion: [
            [s.y * xb, 0.0],
            [p.nu * s.y * p.rho, p.nu * s.y * p.rho_bar],
        ],
    })
}

/// Instantaneous covariance `ξ = y²[[x^{2β}, ρνx^β], [ρνx^β, ν²]]`.
pub fn covariance(p: &ModelParams, x: f64, y: f64) -> [[f64; 2]; 2] {
    let xb = pow(x, p.beta);
    let y2 = y * y;
    let off = y2 * p.rho * p.nu * xb;
    [[y2 * xb * xb, off], [off, y2 * p.nu * p.nu]]
}

/// Solution of the Stratonovich CEV equation `dX = σX^β ∘ dW`, absorbed at 0:
/// `X = (x0^{1−β} + σ(1−β)w)^{1/(1−β)}`.
pub fn cev_exact_stratonovich(x0: f64, beta: f64, sigma: f64, w: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&beta) {
        return domain(format!("the explicit solution needs beta in [0,1), got {beta}"));
    }
    if !(x0 > 0.0) {
        return domain(format!("x0 must be positive, got {x0}"));
    }
    let q = 1.0 - beta;
    let inner = pow(x0, q) + sigma * q * w;
    if inner <= 0.0 {
        Ok(0.0)
    } else {
        Ok(pow(inner, 1.0 / q))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum GeneratorKind {
    /// `A = ½y²(x^{2β}∂xx + 2ρνx^β∂xy + ν²∂yy)`.
    SabrA,
    /// `Ã = A / y²`.
    TimeChangedAtilde,
    /// `Δ_g = A + (β/2)y²x^{2β−1}∂x`, generator of the SABR Brownian motion.
    LaplaceBeltrami,
    /// `Δ̃_g = Δ_g / y²`.
    TimeChangedLaplaceBeltrami,
    /// `A − (ρνβ/2)y²x^{β−1}∂y`, symmetric on `L²(x^{−2β}y^{−2} dx dy)`.
    WeightedLaplaceBeltrami,
    /// One-dimensional CEV generator `½σ²x^{2β}∂xx`.
    Cev,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub params: ModelParams,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, params: ModelParams) -> Self {
        Self { kind, params }
    }

    /// Coefficients of the operator at `(x, y)`; `a_xy` multiplies `f_xy` once.
    pub fn coefficients(&self, x: f64, y: f64) -> OperatorCoefficients {
        let p = &self.params;
        let beta = p.beta;
        let y2 = y * y;
        let xb = pow(x, beta);
        let mut c = OperatorCoefficients {
            a_xx: 0.5 * y2 * xb * xb,
            a_xy: p.rho * p.nu * y2 * xb,
            a_yy: 0.5 * p.nu * p.nu * y2,
            b_x: 0.0,
            b_y: 0.0,
        };
        match self.kind {
            GeneratorKind::SabrA => {}
            GeneratorKind::TimeChangedAtilde => c = c.scaled(1.0 / y2),
            GeneratorKind::LaplaceBeltrami | GeneratorKind::TimeChangedLaplaceBeltrami => {
                if beta > 0.0 {
                    c.b_x = 0.5 * beta * y2 * pow(x, 2.0 * beta - 1.0);
                }
                if self.kind == GeneratorKind::TimeChangedLaplaceBeltrami {
                    c = c.scaled(1.0 / y2);
                }
            }
            GeneratorKind::WeightedLaplaceBeltrami => {
                if beta > 0.0 {
                    c.b_y = -0.5 * p.rho * p.nu * beta * y2 * pow(x, beta - 1.0);
                }
            }
            GeneratorKind::Cev => {
                c = OperatorCoefficients {
                    a_xx: 0.5 * p.sigma * p.sigma * xb * xb,
                    ..OperatorCoefficients::default()
                };
            }
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct OperatorCoefficients {
    pub a_xx: f64,
    pub a_xy: f64,
    pub a_yy: f64,
    pub b_x: f64,
    pub b_y: f64,
}

impl OperatorCoefficients {
    fn scaled(self, k: f64) -> Self {
        Self {
            a_xx: self.a_xx * k,
            a_xy: self.a_xy * k,
            a_yy: self.a_yy * k,
            b_x: self.b_x * k,
            b_y: self.b_y * k,
        }
    }

    pub fn apply(&self, j: &Jet) -> f64 {
        self.a_xx * j.dxx + self.a_xy * j.dxy + self.a_yy * j.dyy + self.b_x * j.dx + self.b_y * j.dy
    }
}

/// Value, gradient and Hessian of a field at a point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub value: f64,
    pub dx: f64,
    pub dy: f64,
    pub dxx: f64,
    pub dxy: f64,
    pub dyy: f64,
}

type ValueFn = dyn Fn(f64, f64) -> f64 + Send + Sync;
type GradientFn = dyn Fn(f64, f64) -> [f64; 2] + Send + Sync;
/// Hessian entries in the order `(xx, xy, yy)`.
type HessianFn = dyn Fn(f64, f64) -> [f64; 3] + Send + Sync;

/// A function on the plane with optional analytic derivatives.
#[derive(Clone)]
pub struct ScalarField {
    value: Arc<ValueFn>,
    gradient: Option<Arc<GradientFn>>,
    hessian: Option<Arc<HessianFn>>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("gradient", &self.gradient.is_some())
            .field("hessian", &self.hessian.is_some())
            .finish()
    }
}

impl ScalarField {
    pub fn new(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            value: Arc::new(f),
            gradient: None,
            hessian: None,
        }
    }

    pub fn with_gradient(mut self, g: impl Fn(f64, f64) -> [f64; 2] + Send + Sync + 'static) -> Self {
        self.gradient = Some(Arc::new(g));
        self
    }

    pub fn with_hessian(mut self, h: impl Fn(f64, f64) -> [f64; 3] + Send + Sync + 'static) -> Self {
        self.hessian = Some(Arc::new(h));
        self
    }

    /// Pointwise product; analytic derivatives follow the product rule when
    /// both factors carry them.
    pub fn product(a: &ScalarField, b: &ScalarField) -> ScalarField {
        let (va, vb) = (a.clone(), b.clone());
        let mut out = ScalarField::new(move |x, y| va.value(x, y) * vb.value(x, y));
        if a.is_analytic() && b.is_analytic() {
            let (ga, gb) = (a.clone(), b.clone());
            out = out.with_gradient(move |x, y| {
                let (p, q) = (ga.analytic_jet(x, y).unwrap(), gb.analytic_jet(x, y).unwrap());
                [p.dx * q.value + p.value * q.dx, p.dy * q.value + p.value * q.dy]
            });
            let (ha, hb) = (a.clone(), b.clone());
            out = out.with_hessian(move |x, y| {
                let (p, q) = (ha.analytic_jet(x, y).unwrap(), hb.analytic_jet(x, y).unwrap());
                [
                    p.dxx * q.value + 2.0 * p.dx * q.dx + p.value * q.dxx,
                    p.dxy * q.value + p.dx * q.dy + p.dy * q.dx + p.value * q.dxy,
                    p.dyy * q.value + 2.0 * p.dy * q.dy + p.value * q.dyy,
                ]
            });
        }
        out
    }

    /// Analytic jet when available, central differences otherwise.
    pub fn jet(&self, x: f64, y: f64) -> Jet {
        self.analytic_jet(x, y)
            .unwrap_or_else(|| self.fd_jet(x, y, default_step(x, y)))
    }

    /// Same values, analytic derivatives dropped.
    pub fn values_only(&self) -> Self {
        Self {
            value: self.value.clone(),
            gradient: None,
            hessian: None,
        }
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        (self.value)(x, y)
    }

    pub fn is_analytic(&self) -> bool {
        self.gradient.is_some() && self.hessian.is_some()
    }

    /// Analytic jet, if both derivative callbacks are present.
    pub fn analytic_jet(&self, x: f64, y: f64) -> Option<Jet> {
        let g = self.gradient.as_ref()?;
        let h = self.hessian.as_ref()?;
        let [dx, dy] = g(x, y);
        let [dxx, dxy, dyy] = h(x, y);
        Some(Jet {
            value: self.value(x, y),
            dx,
            dy,
            dxx,
            dxy,
            dyy,
        })
    }

    /// Central-difference jet with step `h` in both coordinates.
    pub fn fd_jet(&self, x: f64, y: f64, h: f64) -> Jet {
        let f = |a: f64, b: f64| self.value(a, b);
        let c = f(x, y);
        let (xp, xm, yp, ym) = (f(x + h, y), f(x - h, y), f(x, y + h), f(x, y - h));
        let h2 = h * h;
        Jet {
            value: c,
            dx: (xp - xm) / (2.0 * h),
            dy: (yp - ym) / (2.0 * h),
            dxx: (xp - 2.0 * c + xm) / h2,
            dyy: (yp - 2.0 * c + ym) / h2,
            dxy: (f(x + h, y + h) - f(x + h, y - h) - f(x - h, y + h) + f(x - h, y - h)) / (4.0 * h2),
        }
    }
}

/// Default finite-difference step `1e−4·max(1, |x|, |y|)`.
pub fn default_step(x: f64, y: f64) -> f64 {
    1e-4 * 1f64.max(x.abs()).max(y.abs())
}

fn check_interior(x: f64, y: f64, margin: f64) -> Result<()> {
    if !(x > margin) || !(y > margin) || !x.is_finite() || !y.is_finite() {
        return domain(format!(
            "point ({x}, {y}) is not interior with margin {margin}"
        ));
    }
    Ok(())
}

/// Applies the operator at `s`. Analytic derivatives are used when `f` has
/// them; otherwise central differences with step `h` (default
/// [`default_step`]) and a boundary margin of `4h`.
pub fn apply_generator(g: &GeneratorSpec, f: &ScalarField, s: &State2, h: Option<f64>) -> Result<f64> {
    if let Some(j) = f.analytic_jet(s.x, s.y) {
        check_interior(s.x, s.y, 0.0)?;
        return Ok(g.coefficients(s.x, s.y).apply(&j));
    }
    apply_generator_fd(g, f, s, h.unwrap_or_else(|| default_step(s.x, s.y)))
}

/// Finite-difference evaluation regardless of analytic derivatives.
pub fn apply_generator_fd(g: &GeneratorSpec, f: &ScalarField, s: &State2, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return config(format!("finite-difference step must be positive, got {h}"));
    }
    check_interior(s.x, s.y, 4.0 * h)?;
    Ok(g.coefficients(s.x, s.y).apply(&f.fd_jet(s.x, s.y, h)))
}

/// Richardson extrapolation `(4 L(h/2) − L(h)) / 3` of the FD evaluation.
pub fn apply_generator_richardson(g: &GeneratorSpec, f: &ScalarField, s: &State2, h: f64) -> Result<f64> {
    let coarse = apply_generator_fd(g, f, s, h)?;
    let fine = apply_generator_fd(g, f, s, 0.5 * h)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// Laplace–Beltrami operator of the SABR metric itself (unit vol-of-vol):
/// `y²(x^{2β}∂xx + 2ρx^β∂xy + ∂yy) + βy²x^{2β−1}∂x`, i.e. twice the
/// generator of the SABR Brownian motion. Its eigenvalues are `n(n+1)`.
pub fn riemannian_laplacian(p: &ModelParams, f: &ScalarField, s: &State2, h: f64) -> Result<f64> {
    let g = GeneratorSpec::new(GeneratorKind::LaplaceBeltrami, p.set_nu(1.0)?);
    Ok(2.0 * apply_generator_richardson(&g, f, s, h)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn params(beta: f64, rho: f64) -> ModelParams {
        ModelParams::new(beta, rho, 1.0).unwrap()
    }

    /// Cubic polynomial with analytic derivatives.
    fn cubic(k: [f64; 6]) -> ScalarField {
        ScalarField::new(move |x, y| {
            k[0] * x * x * x + k[1] * x * x * y + k[2] * x * y * y + k[3] * y * y * y + k[4] * x + k[5] * y
        })
        .with_gradient(move |x, y| {
            [
                3.0 * k[0] * x * x + 2.0 * k[1] * x * y + k[2] * y * y + k[4],
                k[1] * x * x + 2.0 * k[2] * x * y + 3.0 * k[3] * y * y + k[5],
            ]
        })
        .with_hessian(move |x, y| {
            [
                6.0 * k[0] * x + 2.0 * k[1] * y,
                2.0 * k[1] * x + 2.0 * k[2] * y,
                2.0 * k[2] * x + 6.0 * k[3] * y,
            ]
        })
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(ModelParams::new(1.2, 0.0, 1.0).is_err());
        assert!(ModelParams::new(0.5, 1.0, 1.0).is_err());
        assert!(ModelParams::new(0.5, 0.0, -1.0).is_err());
        assert!(ModelParams::with_sigma(0.5, 0.0, 1.0, 0.0).is_err());
        let p = params(0.3, -0.6);
        assert_abs_diff_eq!(p.rho_bar() * p.rho_bar() + p.rho() * p.rho(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn coefficient_read_off() {
        let p = params(0.5, 0.0);
        let s = State2::new(1.0, 2.0).unwrap();
        let c = sabr_coefficients(&p, &s, false).unwrap();
        assert_eq!(c.diffusion, [[2.0, 0.0], [0.0, 2.0]]);
        assert_eq!(c.drift, [0.0, 0.0]);
        let d = sabr_coefficients(&p, &s, true).unwrap();
        assert_abs_diff_eq!(d.drift[0], 1.0, epsilon = 1e-15);
        let a = sabr_coefficients(&p, &State2::absorbed_at(1.0), true).unwrap();
        assert_eq!(a.drift, [0.0; 2]);
        assert_eq!(a.diffusion, [[0.0; 2]; 2]);
        let bad = State2 { x: 1.0, y: 0.0, absorbed: false };
        assert!(sabr_coefficients(&p, &bad, false).is_err());
    }

    #[test]
    fn diffusion_reproduces_covariance() {
        let p = ModelParams::new(0.4, -0.35, 1.7).unwrap();
        let s = State2::new(1.3, 0.8).unwrap();
        let c = sabr_coefficients(&p, &s, false).unwrap().diffusion;
        let xi = covariance(&p, s.x, s.y);
        for i in 0..2 {
            for j in 0..2 {
                let prod = c[i][0] * c[j][0] + c[i][1] * c[j][1];
                assert_abs_diff_eq!(prod, xi[i][j], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn power_convention_at_zero() {
        assert_eq!(pow(0.0, 0.0), 1.0);
        assert_eq!(pow(0.0, 0.5), 0.0);
        assert_eq!(pow(0.0, 0.3), 0.0);
    }

    #[test]
    fn stratonovich_cev_examples() {
        assert_eq!(cev_exact_stratonovich(1.0, 0.0, 1.0, 0.0).unwrap(), 1.0);
        assert_abs_diff_eq!(cev_exact_stratonovich(1.0, 0.5, 1.0, 2.0).unwrap(), 4.0, epsilon = 1e-14);
        assert_eq!(cev_exact_stratonovich(1.0, 0.0, 1.0, -2.0).unwrap(), 0.0);
        assert!(cev_exact_stratonovich(1.0, 1.0, 1.0, 0.0).is_err());
    }

    /// Itô form of the Stratonovich equation: the map F(w) must satisfy
    /// F' = σF^β and ½F'' = ½σ²βF^{2β−1}. Checked by finite differences.
    #[test]
    fn stratonovich_cev_satisfies_chain_rule() {
        for &(beta, sigma) in &[(0.0, 1.0), (0.3, 0.7), (0.5, 2.0), (0.8, 1.3)] {
            let f = |w: f64| cev_exact_stratonovich(1.4, beta, sigma, w).unwrap();
            let w = 0.2;
            let h = 1e-4;
            let x = f(w);
            let d1 = (f(w + h) - f(w - h)) / (2.0 * h);
            let d2 = (f(w + h) - 2.0 * x + f(w - h)) / (h * h);
            assert_abs_diff_eq!(d1, sigma * x.powf(beta), epsilon = 1e-7);
            assert_abs_diff_eq!(d2, sigma * sigma * beta * x.powf(2.0 * beta - 1.0), epsilon = 1e-5);
        }
    }

    #[test]
    fn generator_examples() {
        let fx = ScalarField::new(|x, _| x).with_gradient(|_, _| [1.0, 0.0]).with_hessian(|_, _| [0.0; 3]);
        let s = State2::new(1.0, 1.0).unwrap();
        for rho in [-0.7, 0.0, 0.4] {
            let a = GeneratorSpec::new(GeneratorKind::SabrA, params(0.5, rho));
            assert_eq!(apply_generator(&a, &fx, &s, None).unwrap(), 0.0);
            let lb = GeneratorSpec::new(GeneratorKind::LaplaceBeltrami, params(0.5, rho));
            assert_abs_diff_eq!(apply_generator(&lb, &fx, &s, None).unwrap(), 0.25, epsilon = 1e-15);
        }
    }

    /// The hyperbolic Laplacian y²(∂xx+∂yy) has r̃₀ = 1 + (x²+(y−1)²)/(2y)
    /// as an eigenfunction with eigenvalue 2.
    #[test]
    fn hyperbolic_radial_eigenfunction() {
        let p = params(0.0, 0.0);
        let r0 = ScalarField::new(|x, y| 1.0 + (x * x + (y - 1.0) * (y - 1.0)) / (2.0 * y));
        for &(x, y) in &[(0.5, 0.7), (1.0, 1.0), (2.0, 3.0), (1.5, 0.4)] {
            let s = State2::new(x, y).unwrap();
            let lap = riemannian_laplacian(&p, &r0, &s, 1e-3).unwrap();
            assert_abs_diff_eq!(lap, 2.0 * r0.value(s.x, s.y), epsilon = 1e-7);
        }
    }

    #[test]
    fn fd_stencil_respects_margin() {
        let g = GeneratorSpec::new(GeneratorKind::SabrA, params(0.5, 0.0));
        let f = ScalarField::new(|x, y| x * y);
        let s = State2::new(1e-5, 1.0).unwrap();
        assert!(apply_generator(&g, &f, &s, None).is_err());
        assert!(apply_generator(&g, &f, &State2::new(1.0, 1.0).unwrap(), None).is_ok());
    }

    #[test]
    fn richardson_reduces_fd_error() {
        let p = params(0.5, 0.3);
        let g = GeneratorSpec::new(GeneratorKind::LaplaceBeltrami, p);
        let f = ScalarField::new(|x, y| (x * y).sin() + x.exp() / y);
        let exact_field = f
            .clone()
            .with_gradient(|x, y| [y * (x * y).cos() + x.exp() / y, x * (x * y).cos() - x.exp() / (y * y)])
            .with_hessian(|x, y| {
                [
                    -y * y * (x * y).sin() + x.exp() / y,
                    (x * y).cos() - x * y * (x * y).sin() - x.exp() / (y * y),
                    -x * x * (x * y).sin() + 2.0 * x.exp() / (y * y * y),
                ]
            });
        let s = State2::new(0.9, 1.2).unwrap();
        let exact = apply_generator(&g, &exact_field, &s, None).unwrap();
        let h = 1e-2;
        let e1 = (apply_generator_fd(&g, &f, &s, h).unwrap() - exact).abs();
        let e2 = (apply_generator_fd(&g, &f, &s, h / 2.0).unwrap() - exact).abs();
        let er = (apply_generator_richardson(&g, &f, &s, h).unwrap() - exact).abs();
        // second-order stencil: halving h divides the error by about 4
        assert!(e1 / e2 > 3.5 && e1 / e2 < 4.5, "ratio {}", e1 / e2);
        assert!(er < e2 / 50.0);
    }

    proptest! {
        #[test]
        fn factorization_through_y_squared(
            beta in 0.0..1.0f64, rho in -0.99..0.99f64, nu in 0.0..3.0f64,
            x in 0.05..5.0f64, y in 0.05..5.0f64,
            k in proptest::array::uniform6(-2.0..2.0f64),
        ) {
            let p = ModelParams::new(beta, rho, nu).unwrap();
            let f = cubic(k);
            let s = State2::new(x, y).unwrap();
            let pairs = [
                (GeneratorKind::SabrA, GeneratorKind::TimeChangedAtilde),
                (GeneratorKind::LaplaceBeltrami, GeneratorKind::TimeChangedLaplaceBeltrami),
            ];
            for (full, tilde) in pairs {
                let a = apply_generator(&GeneratorSpec::new(full, p), &f, &s, None).unwrap();
                let at = apply_generator(&GeneratorSpec::new(tilde, p), &f, &s, None).unwrap();
                prop_assert!((a - y * y * at).abs() <= 1e-10 * (1.0 + a.abs()));
            }
        }

        #[test]
        fn weighted_operator_is_a_first_order_perturbation(
            beta in 0.0..1.0f64, rho in -0.99..0.99f64, nu in 0.0..3.0f64,
            x in 0.05..5.0f64, y in 0.05..5.0f64,
            k in proptest::array::uniform6(-2.0..2.0f64),
        ) {
            let p = ModelParams::new(beta, rho, nu).unwrap();
            let f = cubic(k);
            let s = State2::new(x, y).unwrap();
            let w = apply_generator(&GeneratorSpec::new(GeneratorKind::WeightedLaplaceBeltrami, p), &f, &s, None).unwrap();
            let a = apply_generator(&GeneratorSpec::new(GeneratorKind::SabrA, p), &f, &s, None).unwrap();
            let fy = f.analytic_jet(x, y).unwrap().dy;
            let expected = a - 0.5 * rho * nu * beta * y * y * x.powf(beta - 1.0) * fy;
            prop_assert!((w - expected).abs() <= 1e-10 * (1.0 + w.abs()));
            let p0 = ModelParams::new(beta, 0.0, nu).unwrap();
            let w0 = apply_generator(&GeneratorSpec::new(GeneratorKind::WeightedLaplaceBeltrami, p0), &f, &s, None).unwrap();
            let a0 = apply_generator(&GeneratorSpec::new(GeneratorKind::SabrA, p0), &f, &s, None).unwrap();
            prop_assert_eq!(w0, a0);
        }

        #[test]
        fn analytic_and_fd_agree(
            beta in 0.0..1.0f64, rho in -0.99..0.99f64,
            x in 0.3..4.0f64, y in 0.3..4.0f64,
            k in proptest::array::uniform6(-2.0..2.0f64),
        ) {
            let p = params(beta, rho);
            let f = cubic(k);
            let s = State2::new(x, y).unwrap();
            for kind in [GeneratorKind::SabrA, GeneratorKind::LaplaceBeltrami, GeneratorKind::WeightedLaplaceBeltrami] {
                let g = GeneratorSpec::new(kind, p);
                let exact = apply_generator(&g, &f, &s, None).unwrap();
                let fd = apply_generator(&g, &f.values_only(), &s, None).unwrap();
                prop_assert!((exact - fd).abs() <= 1e-5 * (1.0 + exact.abs()));
            }
        }
    }
}
