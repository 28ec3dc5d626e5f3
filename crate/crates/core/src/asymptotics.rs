//! Large-time behaviour of SABR: the total clock `Λ = ∫_0^∞ Y² ds`, the race
//! between `Λ` and the hitting time of zero by the CEV forward, the three-way
//! case split of that race, mass at the origin, and the boundary class of
//! infinity for CEV.

use rand::Rng;
use rand_distr::{Gamma, StandardNormal};
use serde::Serialize;

use crate::error::{config, domain, Result};
use crate::process_models::{ModelParams, State2};
use crate::rng::SeedSpec;
use crate::simulation::{first_hitting_time, map_paths, Component, DecoupledStepper, Path, SabrStepper, TimeGrid};
use crate::stats::{wilson_interval, Z95};

/// Share of the total that the last tenth of the horizon may contribute
/// for the clock to count as converged.
pub const TAIL_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TotalClock {
    pub lambda_hat: f64,
    pub converged: bool,
    pub horizon: f64,
}

struct ClockState {
    y: f64,
    y2: f64,
    acc: f64,
    t: f64,
}

impl ClockState {
    fn new(y0: f64) -> Self {
        Self { y: y0, y2: y0 * y0, acc: 0.0, t: 0.0 }
    }

    /// Exact GBM step and trapezoid update of `∫Y²`.
    #[inline]
    fn step<R: Rng>(&mut self, nu: f64, dt: f64, sdt: f64, rng: &mut R) {
        let z: f64 = rng.sample(StandardNormal);
        self.y *= (nu * sdt * z - 0.5 * nu * nu * dt).exp();
        let y2 = self.y * self.y;
        self.acc += 0.5 * dt * (self.y2 + y2);
        self.y2 = y2;
        self.t += dt;
    }
}

fn check_clock(p: &ModelParams, y0: f64) -> Result<()> {
    if !(p.nu() > 0.0) {
        return domain("the total clock only converges for nu > 0");
    }
    if !(y0 > 0.0) || !y0.is_finite() {
        return domain(format!("the total clock needs y0 > 0, got {y0}"));
    }
    Ok(())
}

/// `∫_0^T Y² ds` for the driftless volatility on `grid`. Converged when the
/// last tenth of the horizon contributes less than [`TAIL_TOLERANCE`] of
/// the total.
pub fn total_clock(p: &ModelParams, y0: f64, grid: &TimeGrid, seed: SeedSpec) -> Result<TotalClock> {
    check_clock(p, y0)?;
    let (nu, dt) = (p.nu(), grid.dt());
    let sdt = dt.sqrt();
    let mut rng = seed.rng();
    let mut st = ClockState::new(y0);
    let cut = grid.n_steps() - grid.n_steps() / 10;
    let mut at_cut = 0.0;
    for k in 0..grid.n_steps() {
        if k == cut {
            at_cut = st.acc;
        }
        st.step(nu, dt, sdt, &mut rng);
    }
    Ok(TotalClock {
        lambda_hat: st.acc,
        converged: st.acc - at_cut < TAIL_TOLERANCE * st.acc,
        horizon: grid.horizon(),
    })
}

/// Total clock with an adaptive horizon: checkpoints at `10·2^k`, stopping
/// at the first one where the last tenth contributed less than
/// [`TAIL_TOLERANCE`], or at `max_horizon` unconverged.
pub fn total_clock_adaptive(p: &ModelParams, y0: f64, dt: f64, max_horizon: f64, seed: SeedSpec) -> Result<TotalClock> {
    check_clock(p, y0)?;
    if !(dt > 0.0) || !(max_horizon >= 10.0 * dt) {
        return config("adaptive clock needs dt > 0 and max_horizon >= 10 dt");
    }
    let nu = p.nu();
    let sdt = dt.sqrt();
    let mut rng = seed.rng();
    let mut st = ClockState::new(y0);
    let mut checkpoint = 10.0_f64.min(max_horizon);
    loop {
        let tail_start = 0.9 * checkpoint;
        let mut at_tail = None;
        while st.t < checkpoint - 0.5 * dt {
            if at_tail.is_none() && st.t >= tail_start - 0.5 * dt {
                at_tail = Some(st.acc);
            }
            st.step(nu, dt, sdt, &mut rng);
        }
        let tail = st.acc - at_tail.unwrap_or(0.0);
        let converged = tail < TAIL_TOLERANCE * st.acc;
        if converged || checkpoint >= max_horizon {
            return Ok(TotalClock {
                lambda_hat: st.acc,
                converged,
                horizon: st.t,
            });
        }
        checkpoint = (2.0 * checkpoint).min(max_horizon);
    }
}

/// Hitting time of zero by `dX = σX^β dW` from `x0`, drawn exactly:
/// `X^{1−β}/(σ(1−β))` is a Bessel process of index `−1/(2(1−β))`, so
/// `T_0 = r0² / (2G)` with `G ~ Gamma(1/(2(1−β)), 1)`.
pub fn cev_hitting_time<R: Rng>(x0: f64, beta: f64, sigma: f64, rng: &mut R) -> Result<f64> {
    if !(0.0..1.0).contains(&beta) {
        return domain(format!("CEV reaches zero in finite time only for beta < 1, got {beta}"));
    }
    if x0 <= 0.0 {
        return Ok(0.0);
    }
    let q = 1.0 - beta;
    let r0 = x0.powf(q) / (sigma * q);
    let g: f64 = rng.sample(Gamma::new(0.5 / q, 1.0).expect("positive shape"));
    Ok(r0 * r0 / (2.0 * g))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum CaseTag {
    /// The forward reaches zero before the clock ends.
    HitBeforeClockEnds,
    /// The clock ends with the forward still positive.
    ClockEndsFirst,
    /// Both within one step of each other.
    Simultaneous,
    /// Neither happened before truncation.
    Undecided,
}

/// Tags a pair of hitting times, `None` meaning "not before truncation".
pub fn classify_race(x_hit: Option<f64>, clock_end: Option<f64>, step: f64) -> CaseTag {
    match (x_hit, clock_end) {
        (None, None) => CaseTag::Undecided,
        (Some(_), None) => CaseTag::HitBeforeClockEnds,
        (None, Some(_)) => CaseTag::ClockEndsFirst,
        (Some(a), Some(b)) if (a - b).abs() < step => CaseTag::Simultaneous,
        (Some(a), Some(b)) if a < b => CaseTag::HitBeforeClockEnds,
        _ => CaseTag::ClockEndsFirst,
    }
}

/// Compares the first zeros of `X` on `x_path` and `Y` on `y_path`.
pub fn case_decomposition(x_path: &Path, y_path: &Path) -> Result<CaseTag> {
    if x_path.grid != y_path.grid {
        return config("case decomposition needs matched grids");
    }
    let x_hit = x_path.absorption_time.or_else(|| first_hitting_time(x_path, Component::X, 0.0));
    let y_hit = y_path.truncation_time.or_else(|| first_hitting_time(y_path, Component::Y, 0.0));
    Ok(classify_race(x_hit, y_hit, x_path.grid.dt()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CaseCounts {
    pub hit_before_clock_ends: u64,
    pub clock_ends_first: u64,
    pub simultaneous: u64,
    pub undecided: u64,
}

impl CaseCounts {
    pub fn add(&mut self, tag: CaseTag) {
        match tag {
            CaseTag::HitBeforeClockEnds => self.hit_before_clock_ends += 1,
            CaseTag::ClockEndsFirst => self.clock_ends_first += 1,
            CaseTag::Simultaneous => self.simultaneous += 1,
            CaseTag::Undecided => self.undecided += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.hit_before_clock_ends + self.clock_ends_first + self.simultaneous + self.undecided
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McConfig {
    pub n_paths: usize,
    pub master_seed: u64,
    pub dt: f64,
    /// Largest horizon simulated before a replicate is declared undecided.
    pub max_horizon: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            master_seed: 1,
            dt: 0.01,
            max_horizon: 10_240.0,
        }
    }
}

impl McConfig {
    fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return config("Monte Carlo needs at least one path");
        }
        if !(self.dt > 0.0) || !(self.max_horizon > 0.0) {
            return config("Monte Carlo needs positive dt and max_horizon");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbsorptionEstimate {
    /// Estimated probability of the event, over decided replicates.
    pub p_hat: f64,
    pub n: u64,
    pub wilson_ci: (f64, f64),
    pub truncation_horizon: f64,
    /// Replicates still undecided at truncation, as a share of `n`.
    pub tail_fraction: f64,
    pub case_counts: Option<CaseCounts>,
}

impl AbsorptionEstimate {
    fn from_counts(successes: u64, decided: u64, n: u64, horizon: f64, counts: Option<CaseCounts>) -> Self {
        let p_hat = if decided == 0 { f64::NAN } else { successes as f64 / decided as f64 };
        Self {
            p_hat,
            n,
            wilson_ci: wilson_interval(successes, decided, Z95),
            truncation_horizon: horizon,
            tail_fraction: (n - decided) as f64 / n as f64,
            case_counts: counts,
        }
    }
}

/// JSON payload `{params, n, p_hat, ci, tail_fraction, case_counts}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbsorptionReport {
    pub params: ModelParams,
    pub n: u64,
    pub p_hat: f64,
    pub ci: (f64, f64),
    pub tail_fraction: f64,
    pub case_counts: Option<CaseCounts>,
}

impl AbsorptionReport {
    pub fn new(params: ModelParams, est: &AbsorptionEstimate) -> Self {
        Self {
            params,
            n: est.n,
            p_hat: est.p_hat,
            ci: est.wilson_ci,
            tail_fraction: est.tail_fraction,
            case_counts: est.case_counts,
        }
    }
}

/// One replicate of the undrifted race: `Λ` from the adaptive clock on the
/// replicate's stream, `T_0` of the unit CEV from the companion stream. A
/// clock cut short still bounds `Λ` from below, so `T_0` below it decides.
fn race_undrifted(p: &ModelParams, x0: f64, y0: f64, mc: &McConfig, seed: SeedSpec) -> Result<CaseTag> {
    let t0 = cev_hitting_time(x0, p.beta(), 1.0, &mut seed.companion().rng())?;
    let clock = total_clock_adaptive(p, y0, mc.dt, mc.max_horizon, seed)?;
    let lambda = clock.lambda_hat;
    if !clock.converged && t0 > lambda {
        return Ok(CaseTag::Undecided);
    }
    Ok(classify_race(Some(t0), Some(lambda), mc.dt))
}

/// One replicate of the joint race for the drifted decoupled system, which
/// is valid for any correlation.
fn race_drifted(p: &ModelParams, x0: f64, y0: f64, mc: &McConfig, seed: SeedSpec) -> CaseTag {
    let init = State2 { x: x0, y: y0, absorbed: x0 == 0.0 };
    let mut st = DecoupledStepper::new(p, init, 0.0, mc.dt, true);
    let mut rng = seed.rng();
    while st.absorption_time.is_none() && !st.truncated() && st.u < mc.max_horizon {
        st.step(&mut rng);
    }
    classify_race(st.absorption_time, st.truncation_time, mc.dt)
}

/// Probability that the forward has a positive limit, estimated through the
/// race between the end of the clock and the hitting time of zero.
/// `drifted = false` requires `ρ = 0`, where the two are independent.
pub fn absorption_probability(p: &ModelParams, x0: f64, y0: f64, drifted: bool, mc: &McConfig) -> Result<AbsorptionEstimate> {
    mc.validate()?;
    if !(p.beta() < 1.0) {
        return domain("the race needs beta < 1");
    }
    if !drifted && p.rho() != 0.0 {
        return config("the undrifted race is only valid for rho = 0");
    }
    if !(x0 >= 0.0) || !x0.is_finite() {
        return domain(format!("x0 must be a finite nonnegative number, got {x0}"));
    }
    check_clock(p, y0)?;
    let tags: Vec<Result<CaseTag>> = map_paths(mc.n_paths, mc.master_seed, |s| {
        if drifted {
            Ok(race_drifted(p, x0, y0, mc, s))
        } else {
            race_undrifted(p, x0, y0, mc, s)
        }
    });
    let mut counts = CaseCounts::default();
    for t in tags {
        counts.add(t?);
    }
    let n = counts.total();
    Ok(AbsorptionEstimate::from_counts(
        counts.clock_ends_first,
        n - counts.undecided,
        n,
        mc.max_horizon,
        Some(counts),
    ))
}

/// Fraction of direct SABR Euler paths absorbed by time `horizon`.
pub fn mass_at_zero(p: &ModelParams, x0: f64, y0: f64, horizon: f64, mc: &McConfig) -> Result<AbsorptionEstimate> {
    mc.validate()?;
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return domain(format!("horizon must be finite and nonnegative, got {horizon}"));
    }
    let init = State2::new(x0, y0)?;
    let n_steps = (horizon / mc.dt).round() as usize;
    let absorbed: Vec<bool> = map_paths(mc.n_paths, mc.master_seed, |s| {
        let mut st = SabrStepper::sabr(p, init, 0.0, mc.dt, false);
        let mut rng = s.rng();
        for _ in 0..n_steps {
            if st.state.absorbed {
                break;
            }
            st.step(&mut rng);
        }
        st.state.absorbed
    });
    let n = absorbed.len() as u64;
    let k = absorbed.iter().filter(|&&a| a).count() as u64;
    Ok(AbsorptionEstimate::from_counts(k, n, n, horizon, None))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundaryClass {
    NotEntrance,
    Entrance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryVerdict {
    pub class: BoundaryClass,
    /// `∫_1^∞ x^{1−2β} dx`, infinite when it diverges.
    pub integral: f64,
}

/// Class of `∞` for CEV from the divergence of `∫_1^∞ x·x^{−2β} dx`.
pub fn feller_boundary_class(beta: f64) -> Result<BoundaryVerdict> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return domain(format!("boundary classification needs beta >= 0, got {beta}"));
    }
    Ok(if beta <= 1.0 {
        BoundaryVerdict {
            class: BoundaryClass::NotEntrance,
            integral: f64::INFINITY,
        }
    } else {
        BoundaryVerdict {
            class: BoundaryClass::Entrance,
            integral: 1.0 / (2.0 * beta - 2.0),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::ks_two_sample;
    use approx::assert_abs_diff_eq;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn normal_cdf(z: f64) -> f64 {
        Normal::standard().cdf(z)
    }

    fn params(beta: f64, rho: f64, nu: f64) -> ModelParams {
        ModelParams::new(beta, rho, nu).unwrap()
    }

    #[test]
    fn clock_mean_matches_second_moment() {
        // E ∫_0^T Y² = y0²(e^{ν²T} − 1)/ν²
        let (nu, y0, t) = (0.5, 1.2, 0.5);
        let p = params(0.5, 0.0, nu);
        let grid = TimeGrid::with_step(t, 1e-3).unwrap();
        let v: Vec<f64> = map_paths(4000, 7, |s| total_clock(&p, y0, &grid, s).unwrap().lambda_hat);
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
        let exact = y0 * y0 * ((nu * nu * t).exp() - 1.0) / (nu * nu);
        assert!((m - exact).abs() < 3.0 * sd / (v.len() as f64).sqrt(), "{m} vs {exact}");
    }

    #[test]
    fn clock_converges_for_large_nu() {
        let p = params(0.5, 0.0, 4.0);
        let grid = TimeGrid::with_step(50.0, 1e-3).unwrap();
        for i in 0..5 {
            assert!(total_clock(&p, 1.0, &grid, SeedSpec::new(3, i)).unwrap().converged);
        }
        let small = total_clock(&p, 1e-8, &grid, SeedSpec::new(3, 0)).unwrap();
        assert!(small.lambda_hat < 1e-14);
        assert!(total_clock(&params(0.5, 0.0, 0.0), 1.0, &grid, SeedSpec::new(3, 0)).is_err());
    }

    /// `Λ` has the law of the hitting time of zero by `y0 + νB`:
    /// `P(Λ ≤ t) = 2Φ(−y0/(ν√t))`.
    #[test]
    fn adaptive_clock_matches_hitting_law() {
        let (nu, y0) = (1.0, 1.0);
        let p = params(0.5, 0.0, nu);
        let v: Vec<TotalClock> = map_paths(4000, 11, |s| total_clock_adaptive(&p, y0, 0.01, 10_240.0, s).unwrap());
        assert!(v.iter().all(|c| c.converged));
        for t in [0.25, 1.0, 4.0] {
            let emp = v.iter().filter(|c| c.lambda_hat <= t).count() as f64 / v.len() as f64;
            let exact = 2.0 * normal_cdf(-y0 / (nu * f64::sqrt(t)));
            assert!((emp - exact).abs() < 0.025, "t={t}: {emp} vs {exact}");
        }
    }

    #[test]
    fn exact_hitting_time_matches_euler_paths() {
        let (x0, beta) = (1.0, 0.5);
        let exact: Vec<f64> = map_paths(3000, 5, |s| cev_hitting_time(x0, beta, 1.0, &mut s.rng()).unwrap());
        // compare the laws truncated at t = 4 through the hit indicator and the hit times below it
        let grid = TimeGrid::with_step(4.0, 1e-3).unwrap();
        let euler: Vec<Option<f64>> = map_paths(3000, 6, |s| {
            crate::simulation::simulate_cev(x0, beta, 1.0, &grid, s).unwrap().absorption_time
        });
        let pe = exact.iter().filter(|&&t| t <= 4.0).count() as f64 / 3000.0;
        let pd = euler.iter().filter(|t| t.is_some()).count() as f64 / 3000.0;
        assert!((pe - pd).abs() < 0.04, "{pe} vs {pd}");
        let a: Vec<f64> = exact.iter().copied().filter(|&t| t <= 4.0).collect();
        let b: Vec<f64> = euler.iter().flatten().copied().collect();
        assert!(ks_two_sample(&a, &b).unwrap().p_value > 1e-3);
        // β = 0: T_0 = x0²/N², so P(T_0 ≤ t) = 2Φ(−x0/√t)
        let bm: Vec<f64> = map_paths(4000, 8, |s| cev_hitting_time(2.0, 0.0, 1.0, &mut s.rng()).unwrap());
        let emp = bm.iter().filter(|&&t| t <= 4.0).count() as f64 / 4000.0;
        assert!((emp - 2.0 * normal_cdf(-1.0)).abs() < 0.025);
    }

    #[test]
    fn race_tags() {
        assert_eq!(classify_race(Some(1.0), None, 0.01), CaseTag::HitBeforeClockEnds);
        assert_eq!(classify_race(None, Some(1.0), 0.01), CaseTag::ClockEndsFirst);
        assert_eq!(classify_race(Some(1.0), Some(1.005), 0.01), CaseTag::Simultaneous);
        assert_eq!(classify_race(Some(2.0), Some(1.0), 0.01), CaseTag::ClockEndsFirst);
        assert_eq!(classify_race(None, None, 0.01), CaseTag::Undecided);
    }

    fn synthetic(xs: &[f64], ys: &[f64]) -> Path {
        let grid = TimeGrid::new(0.0, (xs.len() - 1) as f64 * 0.5, xs.len() - 1).unwrap();
        Path {
            grid,
            states: xs.iter().zip(ys).map(|(&x, &y)| State2 { x, y, absorbed: x == 0.0 }).collect(),
            absorption_time: None,
            truncation_time: None,
        }
    }

    #[test]
    fn case_decomposition_examples() {
        let pos = [1.0, 1.0, 1.0, 1.0];
        let hit = [1.0, 0.5, 0.0, 0.0];
        assert_eq!(case_decomposition(&synthetic(&hit, &pos), &synthetic(&pos, &pos)).unwrap(), CaseTag::HitBeforeClockEnds);
        assert_eq!(case_decomposition(&synthetic(&pos, &pos), &synthetic(&pos, &hit)).unwrap(), CaseTag::ClockEndsFirst);
        assert_eq!(case_decomposition(&synthetic(&hit, &pos), &synthetic(&pos, &hit)).unwrap(), CaseTag::Simultaneous);
        assert_eq!(case_decomposition(&synthetic(&pos, &pos), &synthetic(&pos, &pos)).unwrap(), CaseTag::Undecided);
    }

    #[test]
    fn absorbing_start_never_survives() {
        let mc = McConfig { n_paths: 200, ..McConfig::default() };
        let e = absorption_probability(&params(0.5, 0.0, 1.0), 0.0, 1.0, false, &mc).unwrap();
        assert_eq!(e.p_hat, 0.0);
        let e = absorption_probability(&params(0.5, 0.4, 1.0), 0.0, 1.0, true, &mc).unwrap();
        assert_eq!(e.p_hat, 0.0);
        assert!(absorption_probability(&params(0.5, 0.3, 1.0), 1.0, 1.0, false, &mc).is_err());
    }

    #[test]
    fn positive_limit_strictly_between() {
        let mc = McConfig { n_paths: 2000, ..McConfig::default() };
        let p = params(0.5, 0.0, 1.0);
        let e = absorption_probability(&p, 1.0, 1.0, false, &mc).unwrap();
        let c = e.case_counts.unwrap();
        assert_eq!(c.total(), 2000);
        assert!(e.tail_fraction < 0.05);
        assert!(e.wilson_ci.0 > 0.02 && e.wilson_ci.1 < 0.98, "{e:?}");
        assert!(e.wilson_ci.0 <= e.p_hat && e.p_hat <= e.wilson_ci.1);
        let far = absorption_probability(&p, 4.0, 1.0, false, &mc).unwrap();
        assert!(far.p_hat >= e.p_hat);
    }

    #[test]
    fn mass_at_zero_examples() {
        let p = params(0.5, 0.9, 1.0);
        let mc = McConfig { n_paths: 100, ..McConfig::default() };
        assert_eq!(mass_at_zero(&p, 1.0, 1.0, 0.0, &mc).unwrap().p_hat, 0.0);
        let short = mass_at_zero(&p, 1.0, 1.0, 1.0, &mc).unwrap();
        let long = mass_at_zero(&p, 1.0, 1.0, 20.0, &mc).unwrap();
        // same streams, so absorption by 1 implies absorption by 20
        assert!(long.p_hat >= short.p_hat);
        assert!(long.p_hat > 0.0 && long.p_hat < 1.0);
    }

    #[test]
    fn boundary_table() {
        for beta in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let v = feller_boundary_class(beta).unwrap();
            assert_eq!(v.class, BoundaryClass::NotEntrance);
            assert!(v.integral.is_infinite());
        }
        for beta in [1.5, 2.0] {
            let v = feller_boundary_class(beta).unwrap();
            assert_eq!(v.class, BoundaryClass::Entrance);
            assert_abs_diff_eq!(v.integral, 1.0 / (2.0 * beta - 2.0), epsilon = 1e-15);
        }
        assert_eq!(feller_boundary_class(2.0).unwrap().integral, 0.5);
        assert!(feller_boundary_class(-0.1).is_err());
    }
}
