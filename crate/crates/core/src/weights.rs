//! Admissible weight functions for the SABR semigroups: the ad-hoc weight
//! `y + 2x^{1−β} + x^{2−2β}/y`, the radial Legendre weights `P_n ∘ r_c`, and
//! the numerical certificates attached to them.

use serde::Serialize;

use crate::error::{config, domain, Error, Result};
use crate::geometry::{legendre_eval, legendre_with_derivative};
use crate::process_models::{pow, riemannian_laplacian, ModelParams, ScalarField, State2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum WeightKind {
    AdHoc,
    LegendreRadial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightSpec {
    pub kind: WeightKind,
    pub params: ModelParams,
    pub c: f64,
    pub n: u32,
}

impl WeightSpec {
    pub fn ad_hoc(params: ModelParams) -> Result<Self> {
        if params.beta() >= 1.0 {
            return config("the ad-hoc weight needs beta < 1");
        }
        Ok(Self {
            kind: WeightKind::AdHoc,
            params,
            c: 0.0,
            n: 0,
        })
    }

    pub fn legendre_radial(params: ModelParams, c: f64, n: u32) -> Result<Self> {
        if params.beta() >= 1.0 {
            return config("radial weights need beta < 1");
        }
        if !(c >= 0.0) || !c.is_finite() {
            return config(format!("reference offset c must be finite and >= 0, got {c}"));
        }
        Ok(Self {
            kind: WeightKind::LegendreRadial,
            params,
            c,
            n,
        })
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        match self.kind {
            WeightKind::AdHoc => adhoc_weight(self.params.beta(), x, y),
            WeightKind::LegendreRadial => radial_weight(self, x, y),
        }
    }

    /// The weight as a field, for finite-difference operators.
    pub fn field(&self) -> ScalarField {
        let spec = *self;
        ScalarField::new(move |x, y| spec.eval(x, y).unwrap_or(f64::NAN))
    }
}

fn check_xy(x: f64, y: f64) -> Result<()> {
    if !(x >= 0.0) || !(y > 0.0) || !x.is_finite() || !y.is_finite() {
        return domain(format!("point ({x}, {y}) is outside [0,∞)×(0,∞)"));
    }
    Ok(())
}

/// `ψ = y + 2x^{1−β} + x^{2−2β}/y`.
pub fn adhoc_weight(beta: f64, x: f64, y: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&beta) {
        return domain("the ad-hoc weight needs beta in [0,1)");
    }
    check_xy(x, y)?;
    let xq = pow(x, 1.0 - beta);
    Ok(y + 2.0 * xq + xq * xq / y)
}

/// Closed form of `y²(x^{2β}∂xx + 2ρνx^β∂xy + ν²∂yy)ψ` for the ad-hoc weight,
/// i.e. twice the SABR generator applied to ψ:
/// `2q(1−2β)y − 2qβx^{β−1}y² − 4ρνq x^q + 2ν²x^{2q}/y` with `q = 1−β`.
pub fn adhoc_generator(p: &ModelParams, x: f64, y: f64) -> Result<f64> {
    let t = adhoc_terms(p, x, y)?;
    Ok(t.lin * y + t.sing_coeff * t.sing - t.cross_coeff * t.xq + t.quad_coeff * t.xq * t.xq / y)
}

struct AdhocTerms {
    lin: f64,
    sing_coeff: f64,
    sing: f64,
    cross_coeff: f64,
    quad_coeff: f64,
    xq: f64,
}

fn adhoc_terms(p: &ModelParams, x: f64, y: f64) -> Result<AdhocTerms> {
    let beta = p.beta();
    check_xy(x, y)?;
    if x == 0.0 && beta > 0.0 && beta < 1.0 {
        return domain("x^{β−1} is singular at x = 0");
    }
    let q = 1.0 - beta;
    // x^{β−1} y² carries the factor β(1−β), which vanishes at both ends of [0,1]
    let sing = if beta > 0.0 && beta < 1.0 { pow(x, beta - 1.0) * y * y } else { 0.0 };
    Ok(AdhocTerms {
        lin: 2.0 * q * (1.0 - 2.0 * beta),
        sing_coeff: -2.0 * q * beta,
        sing,
        cross_coeff: 4.0 * p.rho() * p.nu() * q,
        quad_coeff: 2.0 * p.nu() * p.nu(),
        xq: pow(x, q),
    })
}

/// Eigenvalue bound `λ = 2·max(1, ν²)` of the sub-eigen inequality.
pub fn adhoc_eigen_bound(p: &ModelParams) -> f64 {
    2.0 * p.nu().powi(2).max(1.0)
}

/// `λψ − Aψ` for the doubled generator, collected by monomial so that large
/// values do not cancel: every coefficient below is nonnegative exactly
/// when the inequality holds.
pub fn adhoc_subeigen_gap(p: &ModelParams, x: f64, y: f64) -> Result<f64> {
    let t = adhoc_terms(p, x, y)?;
    let lambda = adhoc_eigen_bound(p);
    Ok((lambda - t.lin) * y
        + (-t.sing_coeff) * t.sing
        + (2.0 * lambda + t.cross_coeff) * t.xq
        + (lambda - t.quad_coeff) * t.xq * t.xq / y)
}

/// `r_c(x,y) = (1+y²)/(2y) + (x^{1−β}/(1−β) − ρy − c)²/((1−ρ²)2y)`.
pub fn cosh_radius(p: &ModelParams, c: f64, x: f64, y: f64) -> Result<f64> {
    check_xy(x, y)?;
    let s = radial_shift(p, c, x, y);
    Ok((1.0 + y * y) / (2.0 * y) + s * s / ((1.0 - p.rho() * p.rho()) * 2.0 * y))
}

fn radial_shift(p: &ModelParams, c: f64, x: f64, y: f64) -> f64 {
    let q = 1.0 - p.beta();
    pow(x, q) / q - p.rho() * y - c
}

/// `ψ_{c,n} = P_n(r_c)`.
pub fn radial_weight(spec: &WeightSpec, x: f64, y: f64) -> Result<f64> {
    if spec.kind != WeightKind::LegendreRadial {
        return config("radial_weight needs a LegendreRadial spec");
    }
    Ok(legendre_eval(spec.n, cosh_radius(&spec.params, spec.c, x, y)?))
}

/// Relative residual `|Δψ − n(n+1)ψ| / max(1, ψ)` of the eigenfunction
/// identity, with the Laplace–Beltrami operator of the SABR metric evaluated
/// by Richardson-extrapolated central differences of step `h`.
pub fn eigen_residual(spec: &WeightSpec, x: f64, y: f64, h: f64) -> Result<f64> {
    if spec.kind != WeightKind::LegendreRadial {
        return config("eigen_residual needs a LegendreRadial spec");
    }
    let s = State2::new(x, y)?;
    let psi = radial_weight(spec, x, y)?;
    let lap = riemannian_laplacian(&spec.params, &spec.field(), &s, h)?;
    let lambda = (spec.n * (spec.n + 1)) as f64;
    Ok((lap - lambda * psi).abs() / psi.abs().max(1.0))
}

/// `βy²x^{2β−1}∂xψ_{c,n}` in the factored form
/// `P_n'(r_c)·β/(1−ρ²)·(y/(1−β) − x^{β−1}y(ρy + c))`.
pub fn drift_term(spec: &WeightSpec, x: f64, y: f64) -> Result<f64> {
    let p = &spec.params;
    let beta = p.beta();
    if beta == 0.0 || spec.n == 0 {
        return Ok(0.0);
    }
    if !(x > 0.0) || !(y > 0.0) {
        return domain(format!("drift term needs an interior point, got ({x}, {y})"));
    }
    let r = cosh_radius(p, spec.c, x, y)?;
    let (_, dl) = legendre_with_derivative(spec.n, r);
    let bracket = y / (1.0 - beta) - pow(x, beta - 1.0) * y * (p.rho() * y + spec.c);
    Ok(dl * beta / (1.0 - p.rho() * p.rho()) * bracket)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftCheck {
    pub holds: bool,
    pub min_value: f64,
    /// First grid point with a negative drift term, and that value.
    pub witness: Option<(f64, f64, f64)>,
}

/// Checks `βy²x^{2β−1}∂xψ ≥ 0` on every grid point (the drift condition with
/// zero slack).
pub fn drift_condition_check(spec: &WeightSpec, points: &[(f64, f64)]) -> Result<DriftCheck> {
    if spec.kind != WeightKind::LegendreRadial {
        return config("the drift condition applies to LegendreRadial weights");
    }
    let mut min_value = f64::INFINITY;
    let mut witness = None;
    for &(x, y) in points {
        let v = drift_term(spec, x, y)?;
        min_value = min_value.min(v);
        if v < 0.0 && witness.is_none() {
            witness = Some((x, y, v));
        }
    }
    Ok(DriftCheck {
        holds: witness.is_none(),
        min_value,
        witness,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[allow(non_camel_case_types)]
pub enum RegimeClause {
    C_ge_1,
    RhoPositive,
    C_gt_AbsRho,
    DyadicBetaException,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeVerdict {
    pub admissible: bool,
    pub clause: RegimeClause,
    pub note: String,
}

/// `Some(m)` when `β = (2m−1)/(2m)`, i.e. `1/(1−β) = 2m`.
pub fn dyadic_index(beta: f64) -> Option<u32> {
    if beta >= 1.0 {
        return None;
    }
    let k = 1.0 / (1.0 - beta);
    let m = (k / 2.0).round();
    (m >= 1.0 && (k - 2.0 * m).abs() <= 1e-9 * k).then_some(m as u32)
}

/// Whether the SABR heat semigroup is generalized Feller on the space
/// weighted by `ψ_{c,n}`, with the clause that grants it.
pub fn regime_verdict(c: f64, n: u32, p: &ModelParams) -> RegimeVerdict {
    let verdict = |admissible, clause, note: &str| RegimeVerdict {
        admissible,
        clause,
        note: note.to_string(),
    };
    let (beta, rho) = (p.beta(), p.rho());
    if beta >= 1.0 || !(c >= 0.0) {
        return verdict(false, RegimeClause::Rejected, "needs beta < 1 and c >= 0");
    }
    if n == 0 {
        return verdict(false, RegimeClause::Rejected, "n = 0 gives a constant, which has no compact sublevel sets");
    }
    if c >= 1.0 {
        return verdict(true, RegimeClause::C_ge_1, "c >= 1 admits every (rho, beta)");
    }
    if rho > 0.0 {
        return verdict(true, RegimeClause::RhoPositive, "c in [0,1) with rho > 0");
    }
    if c > rho.abs() {
        return verdict(true, RegimeClause::C_gt_AbsRho, "c in (|rho|, 1) with rho <= 0");
    }
    if rho < 0.0 {
        if let Some(m) = dyadic_index(beta) {
            return verdict(
                true,
                RegimeClause::DyadicBetaException,
                &format!("c <= |rho| with rho < 0 and beta = (2m-1)/(2m), m = {m}"),
            );
        }
        if c == 0.0 && beta == 0.0 {
            return verdict(
                true,
                RegimeClause::DyadicBetaException,
                "c = 0 with rho < 0 and beta = 0: drift condition holds for the SABR semigroup",
            );
        }
        return verdict(false, RegimeClause::Rejected, "c <= |rho| with rho < 0 and beta not of the form (2m-1)/(2m)");
    }
    verdict(false, RegimeClause::Rejected, "rho = 0 with c = 0 has no realisable reference point")
}

/// Smallest `n ≥ 1` with `β ≤ (2n−1)/(2n)`, the Legendre degree whose weight
/// dominates call payoffs.
pub fn call_payoff_degree(beta: f64) -> Result<u32> {
    if !(0.0..1.0).contains(&beta) {
        return domain("call payoff degree needs beta in [0,1)");
    }
    let mut n = 1u32;
    while beta > (2 * n - 1) as f64 / (2 * n) as f64 + 1e-12 {
        n += 1;
    }
    Ok(n)
}

/// Bounding box of a sublevel set `{ψ ≤ R}`. `x_min` is always 0 since the
/// line `x = 0` belongs to the state space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SublevelBox {
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub min_value: f64,
}

const PROBE_DECADES: i32 = 8;

/// Numerical evidence for compact sublevel sets. Rays `(x, y) = (s^a, s^b)`
/// and the axis `x = 0` are followed towards the boundary of the state space;
/// `ψ` must exceed `R` at the far end of each. Returns `Ok(None)` when the
/// scan finds no point with `ψ ≤ R`, the bounding box of those points
/// otherwise, and [`Error::NotCoercive`] with the offending point when a ray
/// stays in the sublevel set.
pub fn sublevel_probe(spec: &WeightSpec, level: f64) -> Result<Option<SublevelBox>> {
    if !(level > 0.0) {
        return config("sublevel probe needs R > 0");
    }
    let far = 10f64.powi(PROBE_DECADES);
    let exps = [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0];
    let mut ends = Vec::new();
    for &a in &exps {
        for &b in &exps {
            if a == 0.0 && b == 0.0 {
                continue;
            }
            for s in [far, 1.0 / far] {
                ends.push((s.powf(a), s.powf(b)));
            }
        }
    }
    ends.push((0.0, 1.0 / far));
    ends.push((0.0, far));
    for (x, y) in ends {
        // x → 0 alone stays inside the state space; only y → 0, y → ∞ or x → ∞ escape
        if x.max(y).max(1.0 / y) < far.sqrt() {
            continue;
        }
        let v = spec.eval(x, y)?;
        if !(v > level) {
            return Err(Error::NotCoercive(format!(
                "weight {v:.3e} <= {level} at ({x:.3e}, {y:.3e})"
            )));
        }
    }
    let n = 24 * PROBE_DECADES as usize;
    let grid: Vec<f64> = (0..=n)
        .map(|k| 10f64.powf(-(PROBE_DECADES as f64) + 2.0 * PROBE_DECADES as f64 * k as f64 / n as f64))
        .collect();
    let step = grid[1] / grid[0];
    let mut bbox: Option<SublevelBox> = None;
    let xs = std::iter::once(0.0).chain(grid.iter().copied());
    for x in xs {
        for &y in &grid {
            let v = spec.eval(x, y)?;
            if v <= level {
                let b = bbox.get_or_insert(SublevelBox {
                    x_max: 0.0,
                    y_min: f64::INFINITY,
                    y_max: 0.0,
                    min_value: f64::INFINITY,
                });
                b.x_max = b.x_max.max(x * step);
                b.y_min = b.y_min.min(y / step);
                b.y_max = b.y_max.max(y * step);
                b.min_value = b.min_value.min(v);
            }
        }
    }
    Ok(bbox)
}

/// Logarithmically spaced values from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { lo: 1e-3, hi: 1e3, n: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapViolation {
    pub x: f64,
    pub y: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightAudit {
    pub weight: String,
    pub params: ModelParams,
    pub grid: GridSpec,
    pub min_gap: f64,
    pub violations: Vec<GapViolation>,
}

/// Evaluates the sub-eigen gap on a square log grid and lists every point
/// where it falls below `−tolerance`.
pub fn adhoc_audit(p: &ModelParams, grid: GridSpec, tolerance: f64) -> Result<WeightAudit> {
    let pts = log_grid(grid.lo, grid.hi, grid.n);
    let mut min_gap = f64::INFINITY;
    let mut violations = Vec::new();
    for &x in &pts {
        for &y in &pts {
            let gap = adhoc_subeigen_gap(p, x, y)?;
            min_gap = min_gap.min(gap);
            if gap < -tolerance {
                violations.push(GapViolation { x, y, gap });
            }
        }
    }
    Ok(WeightAudit {
        weight: "adhoc".to_string(),
        params: *p,
        grid,
        min_gap,
        violations,
    })
}
