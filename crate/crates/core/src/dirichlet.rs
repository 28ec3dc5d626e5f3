//! Dirichlet forms of the SABR family: energy measures, speed measures,
//! quadrature of forms and generator pairings, symmetry defects, the
//! no-drift residual that decides symmetrizability, and Hamza-type
//! closability verdicts for the one-dimensional slices.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{config, domain, Result};
use crate::process_models::{covariance, pow, GeneratorKind, GeneratorSpec, Jet, ModelParams, ScalarField};
use crate::rng::SeedSpec;

/// A positive density with analytic logarithmic gradient.
pub trait Density: Send + Sync {
    fn value(&self, x: f64, y: f64) -> f64;
    /// `(∂x m / m, ∂y m / m)`.
    fn log_gradient(&self, x: f64, y: f64) -> [f64; 2];
}

/// `m(x,y) = k · x^{−a} · y^{−b} · exp(c·y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerDensity {
    pub scale: f64,
    pub x_power: f64,
    pub y_power: f64,
    pub y_rate: f64,
}

impl PowerDensity {
    pub fn new(scale: f64, x_power: f64, y_power: f64, y_rate: f64) -> Self {
        Self {
            scale,
            x_power,
            y_power,
            y_rate,
        }
    }
}

impl fmt::Display for PowerDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}*x^-{}*y^-{}*exp({}*y)",
            self.scale, self.x_power, self.y_power, self.y_rate
        )
    }
}

impl Density for PowerDensity {
    fn value(&self, x: f64, y: f64) -> f64 {
        let e = if self.y_rate == 0.0 { 1.0 } else { (self.y_rate * y).exp() };
        self.scale * pow(x, -self.x_power) * pow(y, -self.y_power) * e
    }

    fn log_gradient(&self, x: f64, y: f64) -> [f64; 2] {
        [-self.x_power / x, -self.y_power / y + self.y_rate]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EnergyKind {
    /// `Γ = ∇f1·ξ∇f2` with the SABR covariance ξ.
    SabrGamma,
    /// `Γ̃ = Γ / y²`.
    TimeChangedGamma,
    /// `σ²x^{2β} f1' f2'` on the line; integrated at the box's mid-height.
    CevGamma,
}

#[derive(Clone)]
pub enum SpeedMeasure {
    /// `1/(ρ̄ x^β y²)`, the Riemannian volume.
    M0,
    /// `1/(ρ̄ x^{2β} y²)`.
    M1,
    M0Tilde,
    M1Tilde,
    /// `x^{−2β}`.
    CevMBeta,
    /// The `β = 1` density selected by [`arbitrate_beta1`].
    Beta1Special,
    Custom(Arc<dyn Density>),
}

impl fmt::Debug for SpeedMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Self::M0 => "M0",
            Self::M1 => "M1",
            Self::M0Tilde => "M0Tilde",
            Self::M1Tilde => "M1Tilde",
            Self::CevMBeta => "CevMBeta",
            Self::Beta1Special => "Beta1Special",
            Self::Custom(_) => "Custom",
        };
        f.write_str(name)
    }
}

impl SpeedMeasure {
    pub fn resolve(&self, p: &ModelParams) -> Result<Arc<dyn Density>> {
        let (beta, rb) = (p.beta(), p.rho_bar());
        let d = match self {
            Self::M0 => PowerDensity::new(1.0 / rb, beta, 2.0, 0.0),
            Self::M1 => PowerDensity::new(1.0 / rb, 2.0 * beta, 2.0, 0.0),
            Self::M0Tilde => PowerDensity::new(1.0 / rb, beta, 0.0, 0.0),
            Self::M1Tilde => PowerDensity::new(1.0 / rb, 2.0 * beta, 0.0, 0.0),
            Self::CevMBeta => PowerDensity::new(1.0, 2.0 * beta, 0.0, 0.0),
            Self::Beta1Special => match arbitrate_beta1(p)?.chosen {
                Some(k) => beta1_candidates(p)?[k],
                None => return domain("no beta = 1 candidate density removes the drift"),
            },
            Self::Custom(d) => return Ok(d.clone()),
        };
        Ok(Arc::new(d))
    }
}

#[derive(Debug, Clone)]
pub struct FormSpec {
    pub energy: EnergyKind,
    pub speed: SpeedMeasure,
    pub params: ModelParams,
}

impl FormSpec {
    pub fn new(energy: EnergyKind, speed: SpeedMeasure, params: ModelParams) -> Self {
        Self { energy, speed, params }
    }
}

/// The bilinear energy density at a point.
pub fn energy_density(spec: &FormSpec, g1: [f64; 2], g2: [f64; 2], x: f64, y: f64) -> f64 {
    let p = &spec.params;
    match spec.energy {
        EnergyKind::CevGamma => {
            let xb = pow(x, p.beta());
            p.sigma() * p.sigma() * xb * xb * g1[0] * g2[0]
        }
        EnergyKind::SabrGamma | EnergyKind::TimeChangedGamma => {
            let xi = covariance(p, x, y);
            let v = xi[0][0] * g1[0] * g2[0]
                + xi[0][1] * (g1[0] * g2[1] + g1[1] * g2[0])
                + xi[1][1] * g1[1] * g2[1];
            if spec.energy == EnergyKind::TimeChangedGamma {
                v / (y * y)
            } else {
                v
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rectangle {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rectangle {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self> {
        if !(x1 > x0) || !(y1 > y0) {
            return config(format!("degenerate rectangle [{x0},{x1}]x[{y0},{y1}]"));
        }
        Ok(Self { x0, x1, y0, y1 })
    }

    pub fn intersect(&self, other: &Rectangle) -> Option<Rectangle> {
        Rectangle::new(
            self.x0.max(other.x0),
            self.x1.min(other.x1),
            self.y0.max(other.y0),
            self.y1.min(other.y1),
        )
        .ok()
    }
}

fn simpson_weight(k: usize, n: usize) -> f64 {
    if k == 0 || k == n {
        1.0
    } else if k % 2 == 1 {
        4.0
    } else {
        2.0
    }
}

/// Composite Simpson rule with `n` (even) intervals per axis. Rows are
/// evaluated in parallel and summed in a fixed order.
pub fn simpson_2d<F>(r: &Rectangle, n: usize, f: F) -> f64
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let n = n + n % 2;
    let hx = (r.x1 - r.x0) / n as f64;
    let hy = (r.y1 - r.y0) / n as f64;
    let rows: Vec<f64> = (0..=n)
        .into_par_iter()
        .map(|j| {
            let y = r.y0 + j as f64 * hy;
            (0..=n)
                .map(|i| simpson_weight(i, n) * f(r.x0 + i as f64 * hx, y))
                .sum::<f64>()
                * simpson_weight(j, n)
        })
        .collect();
    rows.iter().sum::<f64>() * hx * hy / 9.0
}

pub fn simpson_1d<F: Fn(f64) -> f64>(a: f64, b: f64, n: usize, f: F) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    (0..=n).map(|i| simpson_weight(i, n) * f(a + i as f64 * h)).sum::<f64>() * h / 3.0
}

fn integrate<F>(spec: &FormSpec, r: &Rectangle, n: usize, f: F) -> f64
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    if spec.energy == EnergyKind::CevGamma {
        let y = 0.5 * (r.y0 + r.y1);
        simpson_1d(r.x0, r.x1, n, |x| f(x, y))
    } else {
        simpson_2d(r, n, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FormValue {
    pub value: f64,
    /// Largest `|f1|`, `|f2|` seen on the box boundary.
    pub boundary_max: f64,
}

impl FormValue {
    /// The test functions are not supported inside the box.
    pub fn leaks(&self) -> bool {
        self.boundary_max > 1e-8
    }
}

fn boundary_max(f1: &ScalarField, f2: &ScalarField, r: &Rectangle, n: usize) -> f64 {
    let mut m: f64 = 0.0;
    for k in 0..=n {
        let t = k as f64 / n as f64;
        let x = r.x0 + t * (r.x1 - r.x0);
        let y = r.y0 + t * (r.y1 - r.y0);
        for (a, b) in [(x, r.y0), (x, r.y1), (r.x0, y), (r.x1, y)] {
            m = m.max(f1.value(a, b).abs()).max(f2.value(a, b).abs());
        }
    }
    m
}

/// `ℰ(f1, f2) = ½∫ Γ(f1, f2) m` over the box.
pub fn form_value(spec: &FormSpec, f1: &ScalarField, f2: &ScalarField, r: &Rectangle, n: usize) -> Result<FormValue> {
    let m = spec.speed.resolve(&spec.params)?;
    let value = integrate(spec, r, n, |x, y| {
        let (a, b) = (f1.jet(x, y), f2.jet(x, y));
        0.5 * energy_density(spec, [a.dx, a.dy], [b.dx, b.dy], x, y) * m.value(x, y)
    });
    Ok(FormValue {
        value,
        boundary_max: boundary_max(f1, f2, r, n),
    })
}

/// `(L f1, f2)_m = ∫ (L f1) f2 m` over the box.
pub fn pairing(spec: &FormSpec, gen: &GeneratorSpec, f1: &ScalarField, f2: &ScalarField, r: &Rectangle, n: usize) -> Result<f64> {
    let m = spec.speed.resolve(&spec.params)?;
    Ok(integrate(spec, r, n, |x, y| {
        let j: Jet = f1.jet(x, y);
        gen.coefficients(x, y).apply(&j) * f2.value(x, y) * m.value(x, y)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DefectEstimate {
    /// `|(L f1, f2)_m + ℰ(f1, f2)|` at the requested resolution.
    pub defect: f64,
    /// `max(1e−8, 10·|defect(n) − defect(n/2)|)`.
    pub tolerance: f64,
    pub energy: f64,
}

impl DefectEstimate {
    pub fn within_tolerance(&self) -> bool {
        self.defect <= self.tolerance
    }
}

fn raw_defect(spec: &FormSpec, gen: &GeneratorSpec, f1: &ScalarField, f2: &ScalarField, r: &Rectangle, n: usize) -> Result<(f64, f64)> {
    let e = form_value(spec, f1, f2, r, n)?.value;
    let pr = pairing(spec, gen, f1, f2, r, n)?;
    Ok(((pr + e).abs(), e))
}

/// Integration-by-parts defect of a (generator, speed measure) pair, with a
/// tolerance calibrated by halving the quadrature resolution.
pub fn symmetry_defect(spec: &FormSpec, gen: &GeneratorSpec, f1: &ScalarField, f2: &ScalarField, r: &Rectangle, n: usize) -> Result<DefectEstimate> {
    if n < 8 {
        return config("symmetry defect needs a resolution of at least 8");
    }
    let (fine, energy) = raw_defect(spec, gen, f1, f2, r, n)?;
    let (coarse, _) = raw_defect(spec, gen, f1, f2, r, n / 2)?;
    Ok(DefectEstimate {
        defect: fine,
        tolerance: (10.0 * (fine - coarse).abs()).max(1e-8),
        energy,
    })
}

/// Product of two one-dimensional bumps `(1 − ((t − c)/w)²)³₊`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bump {
    pub cx: f64,
    pub wx: f64,
    pub cy: f64,
    pub wy: f64,
}

/// `(b, b', b'')` of the one-dimensional bump.
fn bump_1d(t: f64, c: f64, w: f64) -> (f64, f64, f64) {
    let s = (t - c) / w;
    if s.abs() >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let u = 1.0 - s * s;
    (
        u * u * u,
        -6.0 * s * u * u / w,
        -6.0 * u * (1.0 - 5.0 * s * s) / (w * w),
    )
}

impl Bump {
    pub fn new(cx: f64, wx: f64, cy: f64, wy: f64) -> Self {
        Self { cx, wx, cy, wy }
    }

    pub fn support(&self) -> Rectangle {
        Rectangle {
            x0: self.cx - self.wx,
            x1: self.cx + self.wx,
            y0: self.cy - self.wy,
            y1: self.cy + self.wy,
        }
    }

    pub fn field(&self) -> ScalarField {
        let b = *self;
        ScalarField::new(move |x, y| bump_1d(x, b.cx, b.wx).0 * bump_1d(y, b.cy, b.wy).0)
            .with_gradient(move |x, y| {
                let (fx, dx, _) = bump_1d(x, b.cx, b.wx);
                let (fy, dy, _) = bump_1d(y, b.cy, b.wy);
                [dx * fy, fx * dy]
            })
            .with_hessian(move |x, y| {
                let (fx, dx, dxx) = bump_1d(x, b.cx, b.wx);
                let (fy, dy, dyy) = bump_1d(y, b.cy, b.wy);
                [dxx * fy, dx * dy, fx * dyy]
            })
    }
}

/// First-order residual `Σ_j (∂_j ξ_ij + ξ_ij ∂_j m/m)` for `i = x, y`,
/// written as
/// `x^{2β−1}y²(2β + x∂x m/m) + ρνx^β y(2 + y∂y m/m)` and
/// `ρνx^{β−1}y²(β + x∂x m/m) + ν²y(2 + y∂y m/m)`.
/// Both vanish exactly when the form with speed `m` is generated by `A`.
pub fn no_drift_residual(p: &ModelParams, m: &dyn Density, x: f64, y: f64) -> Result<[f64; 2]> {
    if !(x > 0.0) || !(y > 0.0) {
        return domain(format!("no-drift residual needs an interior point, got ({x}, {y})"));
    }
    let mv = m.value(x, y);
    if !(mv > 0.0) || !mv.is_finite() {
        return domain(format!("density must be positive and finite at ({x}, {y})"));
    }
    let [lx, ly] = m.log_gradient(x, y);
    let (beta, rn, nu) = (p.beta(), p.rho() * p.nu(), p.nu());
    let xb = pow(x, beta);
    let first = xb * xb / x * y * y * (2.0 * beta + x * lx) + rn * xb * y * (2.0 + y * ly);
    let second = rn * xb / x * y * y * (beta + x * lx) + nu * nu * y * (2.0 + y * ly);
    Ok([first, second])
}

/// The two readings of the `β = 1` speed density:
/// `exp(ρy/(νρ̄))` and `exp(ρy/(νρ̄²))`, both over `y² x^{1+1/ρ̄²}`.
pub fn beta1_candidates(p: &ModelParams) -> Result<[PowerDensity; 2]> {
    if p.beta() != 1.0 || p.nu() == 0.0 {
        return domain("beta = 1 candidates need beta = 1 and nu > 0");
    }
    let rb = p.rho_bar();
    let a = 1.0 + 1.0 / (rb * rb);
    Ok([
        PowerDensity::new(1.0, a, 2.0, p.rho() / (p.nu() * rb)),
        PowerDensity::new(1.0, a, 2.0, p.rho() / (p.nu() * rb * rb)),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Beta1Arbitration {
    pub candidates: [PowerDensity; 2],
    /// Largest absolute residual component over the sample points.
    pub max_residual: [f64; 2],
    /// Index of the unique candidate under `threshold`, if exactly one is.
    pub chosen: Option<usize>,
}

/// Evaluates both candidates at 100 fixed pseudo-random points of
/// `[0.2, 3]²` and keeps the one whose residual stays below `1e−10`.
pub fn arbitrate_beta1(p: &ModelParams) -> Result<Beta1Arbitration> {
    const THRESHOLD: f64 = 1e-10;
    let candidates = beta1_candidates(p)?;
    let mut rng = SeedSpec::new(0x5eed_b1, 0).rng();
    let pts: Vec<(f64, f64)> = (0..100)
        .map(|_| (rng.random_range(0.2..3.0), rng.random_range(0.2..3.0)))
        .collect();
    let mut max_residual = [0.0f64; 2];
    for (k, c) in candidates.iter().enumerate() {
        for &(x, y) in &pts {
            let [a, b] = no_drift_residual(p, c, x, y)?;
            max_residual[k] = max_residual[k].max(a.abs()).max(b.abs());
        }
    }
    let ok: Vec<usize> = (0..2).filter(|&k| max_residual[k] <= THRESHOLD).collect();
    Ok(Beta1Arbitration {
        candidates,
        max_residual,
        chosen: (ok.len() == 1).then(|| ok[0]),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SymmetryCase {
    Beta0,
    RhoZeroWeighted,
    NuZeroCEV,
    Beta1Special,
    NotSymmetrizable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassificationVerdict {
    pub case: SymmetryCase,
    pub speed_density: Option<PowerDensity>,
}

/// Parameter configurations for which the SABR generator is symmetric with
/// respect to some speed density, with that density.
pub fn classify_symmetrizable(p: &ModelParams) -> Result<ClassificationVerdict> {
    let (beta, rho, nu) = (p.beta(), p.rho(), p.nu());
    let v = |case, d| Ok(ClassificationVerdict { case, speed_density: d });
    if beta == 0.0 {
        return v(SymmetryCase::Beta0, Some(PowerDensity::new(1.0, 0.0, 2.0, 0.0)));
    }
    if nu == 0.0 {
        return v(SymmetryCase::NuZeroCEV, Some(PowerDensity::new(1.0, 2.0 * beta, 0.0, 0.0)));
    }
    if rho == 0.0 {
        return v(SymmetryCase::RhoZeroWeighted, Some(PowerDensity::new(1.0, 2.0 * beta, 2.0, 0.0)));
    }
    if beta == 1.0 {
        let arb = arbitrate_beta1(p)?;
        return v(SymmetryCase::Beta1Special, arb.chosen.map(|k| arb.candidates[k]));
    }
    v(SymmetryCase::NotSymmetrizable, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ClosabilityFamily {
    /// CEV form with speed `x^{−2β}`.
    CevPower(f64),
    /// `∂x (x^{2β}/(1+x²)^β) ∂x` on Lebesgue measure.
    TerElst(f64),
    /// `x`-slice of the SABR form with speed `m_0`.
    M0Slice(f64),
    /// `x`-slice of the SABR form with speed `m_1`.
    M1Slice(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosabilityVerdict {
    pub closable: bool,
    /// Local integrability of the speed density at 0.
    pub radon: bool,
    pub singular_set: String,
    pub parameter_threshold: String,
    /// Distance asymptotics through the form are valid (no singular point).
    pub varadhan_valid: bool,
}

/// Closability of the one-dimensional forms `∫ a f' g' dx` near `x = 0`.
/// The coefficient `a ~ x^{e}` makes 0 singular (`∫ 1/a = ∞` near 0) iff
/// `e ≥ 1`; the speed `x^{−k}` is Radon iff `k < 1`. A form with a Radon
/// speed is closable since its singular set is at most the null set `{0}`.
pub fn hamza_closability(family: ClosabilityFamily) -> Result<ClosabilityVerdict> {
    let (beta, coeff_exp, speed_exp, threshold) = match family {
        ClosabilityFamily::CevPower(b) => (b, 0.0, 2.0 * b, "closable iff beta < 1/2"),
        ClosabilityFamily::TerElst(b) => (b, 2.0 * b, 0.0, "closable for all beta; singular point 0 iff beta >= 1/2"),
        ClosabilityFamily::M0Slice(b) => (b, b, b, "closable iff beta < 1"),
        ClosabilityFamily::M1Slice(b) => (b, 0.0, 2.0 * b, "closable iff beta < 1/2"),
    };
    if !(0.0..=1.0).contains(&beta) {
        return domain(format!("closability table covers beta in [0,1], got {beta}"));
    }
    let singular = coeff_exp >= 1.0;
    let radon = speed_exp < 1.0;
    Ok(ClosabilityVerdict {
        closable: radon,
        radon,
        singular_set: if singular { "{0}" } else { "empty" }.to_string(),
        parameter_threshold: threshold.to_string(),
        varadhan_valid: radon && !singular,
    })
}

/// `vᵀξv` for the covariance at `(x, y)`; `|ρ| ≤ 1` is accepted so that the
/// degenerate limit can be probed.
pub fn quadratic_form(beta: f64, rho: f64, nu: f64, x: f64, y: f64, v: [f64; 2]) -> f64 {
    let xb = pow(x, beta);
    let y2 = y * y;
    y2 * (xb * xb * v[0] * v[0] + 2.0 * rho * nu * xb * v[0] * v[1] + nu * nu * v[1] * v[1])
}

pub fn psd_check(p: &ModelParams, x: f64, y: f64, v: [f64; 2]) -> f64 {
    quadratic_form(p.beta(), p.rho(), p.nu(), x, y, v)
}

/// Smallest eigenvalue of ξ over an `n × n` grid of the box.
pub fn ellipticity_constant(p: &ModelParams, r: &Rectangle, n: usize) -> f64 {
    let mut lo = f64::INFINITY;
    for i in 0..=n {
        for j in 0..=n {
            let x = r.x0 + (r.x1 - r.x0) * i as f64 / n as f64;
            let y = r.y0 + (r.y1 - r.y0) * j as f64 / n as f64;
            let xi = covariance(p, x, y);
            let tr = xi[0][0] + xi[1][1];
            let det = xi[0][0] * xi[1][1] - xi[0][1] * xi[0][1];
            lo = lo.min(0.5 * (tr - (tr * tr - 4.0 * det).max(0.0).sqrt()));
        }
    }
    lo
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuditConfig {
    pub n_pairs: usize,
    pub resolution: usize,
    pub seed: u64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            n_pairs: 50,
            resolution: 256,
            seed: 2024,
        }
    }
}

/// Outcome for one candidate speed density.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateOutcome {
    pub density: String,
    /// Largest defect over the bump pairs.
    pub defect: f64,
    /// Tolerance of the pair that realised `defect`.
    pub tolerance: f64,
    /// Every pair within tolerance.
    pub all_within: bool,
    /// Some pair has a defect of at least ten tolerances.
    pub witness: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymmetryAudit {
    pub beta: f64,
    pub rho: f64,
    pub nu: f64,
    pub verdict: SymmetryCase,
    pub candidates: Vec<CandidateOutcome>,
    /// The numerics agree with the verdict: symmetrizable cells pass with
    /// their density, the others have a witness against every candidate.
    pub consistent: bool,
}

impl SymmetryAudit {
    /// The candidate reported in a one-line summary: the attached density
    /// for symmetrizable cells, the weakest witness otherwise.
    pub fn headline(&self) -> Option<&CandidateOutcome> {
        if self.verdict == SymmetryCase::NotSymmetrizable {
            self.candidates
                .iter()
                .min_by(|a, b| (a.defect / a.tolerance).total_cmp(&(b.defect / b.tolerance)))
        } else {
            self.candidates.first()
        }
    }
}

/// Random overlapping bump pairs inside `[0.1, 3.3]²`.
pub fn bump_pairs(n: usize, seed: u64) -> Vec<(Bump, Bump)> {
    let mut rng = SeedSpec::new(seed, 0).rng();
    (0..n)
        .map(|_| {
            let a = Bump::new(
                rng.random_range(0.9..2.5),
                rng.random_range(0.3..0.8),
                rng.random_range(0.9..2.5),
                rng.random_range(0.3..0.8),
            );
            let b = Bump::new(
                a.cx + rng.random_range(-0.3..0.3),
                rng.random_range(0.3..0.8),
                a.cy + rng.random_range(-0.3..0.3),
                rng.random_range(0.3..0.8),
            );
            (a, b)
        })
        .collect()
}

fn audit_candidate(p: &ModelParams, density: PowerDensity, pairs: &[(Bump, Bump)], resolution: usize) -> Result<CandidateOutcome> {
    let spec = FormSpec::new(EnergyKind::SabrGamma, SpeedMeasure::Custom(Arc::new(density)), *p);
    let gen = GeneratorSpec::new(GeneratorKind::SabrA, *p);
    let mut worst: Option<DefectEstimate> = None;
    let mut all_within = true;
    let mut witness = false;
    for (a, b) in pairs {
        let Some(r) = a.support().intersect(&b.support()) else {
            continue;
        };
        let d = symmetry_defect(&spec, &gen, &a.field(), &b.field(), &r, resolution)?;
        all_within &= d.within_tolerance();
        witness |= d.defect >= 10.0 * d.tolerance;
        if worst.is_none_or(|w| d.defect / d.tolerance > w.defect / w.tolerance) {
            worst = Some(d);
        }
    }
    let w = worst.ok_or_else(|| crate::error::Error::Config("no overlapping bump pair".into()))?;
    Ok(CandidateOutcome {
        density: density.to_string(),
        defect: w.defect,
        tolerance: w.tolerance,
        all_within,
        witness,
    })
}

/// Checks the classification numerically. Symmetrizable cells are tested
/// with their attached density on `min(n_pairs, 8)` pairs; the others must
/// show a witness against both `m_0` and `m_1` among `n_pairs` pairs.
pub fn symmetry_audit(p: &ModelParams, cfg: &AuditConfig) -> Result<SymmetryAudit> {
    let verdict = classify_symmetrizable(p)?;
    let pairs = bump_pairs(cfg.n_pairs, cfg.seed);
    let (candidates, consistent) = match verdict.speed_density {
        Some(d) => {
            let c = audit_candidate(p, d, &pairs[..pairs.len().min(8)], cfg.resolution)?;
            let ok = c.all_within;
            (vec![c], ok)
        }
        None if verdict.case == SymmetryCase::NotSymmetrizable => {
            let rb = p.rho_bar();
            let dens = [
                PowerDensity::new(1.0 / rb, p.beta(), 2.0, 0.0),
                PowerDensity::new(1.0 / rb, 2.0 * p.beta(), 2.0, 0.0),
            ];
            let cs = dens
                .iter()
                .map(|&d| audit_candidate(p, d, &pairs, cfg.resolution))
                .collect::<Result<Vec<_>>>()?;
            let ok = cs.iter().all(|c| c.witness);
            (cs, ok)
        }
        None => (Vec::new(), false),
    };
    Ok(SymmetryAudit {
        beta: p.beta(),
        rho: p.rho(),
        nu: p.nu(),
        verdict: verdict.case,
        candidates,
        consistent,
    })
}
