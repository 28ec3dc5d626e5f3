//! Additive-functional clocks, their inverses, path resampling through a
//! clock, and the Monte Carlo equivalence experiments between direct and
//! time-changed simulation.

use serde::Serialize;

use crate::error::{config, domain, Error, Result};
use crate::process_models::{ModelParams, State2};
use crate::rng::SeedSpec;
use crate::simulation::{map_paths, sabr_terminal, DecoupledStepper, Path, TimeGrid};
use crate::stats::{ks_two_sample, KsReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ClockIntegrand {
    /// `∫ Y²`: calendar time of the decoupled system as a function of SABR time.
    YSquared,
    /// `∫ Ỹ^{−2}`: SABR time as a function of the decoupled clock.
    YInverseSquared,
}

impl ClockIntegrand {
    #[inline]
    fn eval(self, y: f64) -> f64 {
        match self {
            Self::YSquared => y * y,
            Self::YInverseSquared => 1.0 / (y * y),
        }
    }
}

/// Sampled nondecreasing clock `t ↦ ∫_{t0}^t φ(Y_s) ds`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdditiveFunctional {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub integrand: ClockIntegrand,
}

impl AdditiveFunctional {
    /// Trapezoidal integral of `φ(ys)` over `times`.
    pub fn from_samples(times: &[f64], ys: &[f64], integrand: ClockIntegrand) -> Result<Self> {
        if times.len() != ys.len() || times.is_empty() {
            return config("clock samples need matching, non-empty time and value arrays");
        }
        if ys.iter().any(|&y| !(y > 0.0)) && integrand == ClockIntegrand::YInverseSquared {
            return domain("inverse-square clock hits a non-positive volatility");
        }
        let mut values = Vec::with_capacity(ys.len());
        values.push(0.0);
        let mut acc = 0.0;
        for k in 1..ys.len() {
            let dt = times[k] - times[k - 1];
            acc += 0.5 * dt * (integrand.eval(ys[k - 1]) + integrand.eval(ys[k]));
            values.push(acc);
        }
        Ok(Self {
            times: times.to_vec(),
            values,
            integrand,
        })
    }

    /// Largest clock value reached.
    pub fn reach(&self) -> f64 {
        *self.values.last().expect("clock is never empty")
    }

    /// Piecewise-linear value of the clock at time `t` inside the sample range.
    pub fn value_at(&self, t: f64) -> f64 {
        interpolate(&self.times, &self.values, t)
    }
}

fn interpolate(xs: &[f64], ys: &[f64], t: f64) -> f64 {
    if t <= xs[0] {
        return ys[0];
    }
    let k = xs.partition_point(|&v| v < t);
    if k >= xs.len() {
        return *ys.last().unwrap();
    }
    if xs[k] == t {
        return ys[k];
    }
    let w = (t - xs[k - 1]) / (xs[k] - xs[k - 1]);
    ys[k - 1] + w * (ys[k] - ys[k - 1])
}

/// Clock of a path's volatility component. The inverse-square integrand is
/// only integrated up to the path's truncation time.
pub fn clock(path: &Path, integrand: ClockIntegrand) -> Result<AdditiveFunctional> {
    let times = path.grid.times();
    let ys = path.ys();
    let end = match path.truncation_time {
        Some(t) if integrand == ClockIntegrand::YInverseSquared => times.partition_point(|&u| u < t),
        _ => times.len(),
    };
    AdditiveFunctional::from_samples(&times[..end.max(1)], &ys[..end.max(1)], integrand)
}

/// Time `u` with `af(u) = s`; ties resolve to the left end of flat segments.
pub fn inverse_clock(af: &AdditiveFunctional, s: f64) -> Result<f64> {
    let reach = af.reach();
    if !(s >= 0.0) || s > reach {
        return Err(Error::Range { value: s, reach });
    }
    let k = af.values.partition_point(|&v| v < s);
    if af.values[k] == s {
        return Ok(af.times[k]);
    }
    let (v0, v1) = (af.values[k - 1], af.values[k]);
    let (t0, t1) = (af.times[k - 1], af.times[k]);
    Ok(t0 + (s - v0) / (v1 - v0) * (t1 - t0))
}

/// Base path state at clock time `u`, linear in between samples.
fn state_at(base: &Path, times: &[f64], u: f64) -> State2 {
    if let Some(t) = base.absorption_time {
        if t <= u {
            let y = interpolate(times, &base.ys(), u);
            return State2::absorbed_at(y);
        }
    }
    let k = times.partition_point(|&v| v < u).min(times.len() - 1);
    if k == 0 || times[k] == u {
        return base.states[k];
    }
    let w = (u - times[k - 1]) / (times[k] - times[k - 1]);
    let (a, b) = (base.states[k - 1], base.states[k]);
    State2 {
        x: a.x + w * (b.x - a.x),
        y: a.y + w * (b.y - a.y),
        absorbed: false,
    }
}

/// Resamples `base` on `target_grid` through the inverse of `af`: the state
/// at target time `t` is the base state at `af⁻¹(t)`. Targets beyond the
/// clock's reach keep the state reached at the end of the clock.
pub fn time_change_path(base: &Path, af: &AdditiveFunctional, target_grid: &TimeGrid) -> Result<Path> {
    let times = base.grid.times();
    let reach = af.reach();
    let end_time = *af.times.last().unwrap();
    let mut absorption_time = None;
    let states = target_grid
        .times()
        .into_iter()
        .map(|t| {
            let u = if t <= reach { inverse_clock(af, t)? } else { end_time };
            let s = state_at(base, &times, u);
            if s.absorbed && absorption_time.is_none() {
                absorption_time = Some(t);
            }
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Path {
        grid: *target_grid,
        states,
        absorption_time,
        truncation_time: None,
    })
}

/// State of the time-changed decoupled system at SABR time `horizon`: the
/// decoupled pair is stepped with `du` until `∫Ỹ^{−2}` passes `horizon`,
/// then interpolated inside the crossing step. Agrees with
/// [`simulate_decoupled`](crate::simulation::simulate_decoupled) followed by
/// [`clock`] and [`time_change_path`], without storing the path.
pub fn time_changed_terminal(
    p: &ModelParams,
    init: State2,
    horizon: f64,
    du: f64,
    drifted: bool,
    seed: SeedSpec,
) -> Result<State2> {
    if !(horizon > 0.0) || !(du > 0.0) {
        return config("time-changed simulation needs positive horizon and step");
    }
    let mut st = DecoupledStepper::new(p, init, 0.0, du, drifted);
    let mut rng = seed.rng();
    let mut tau = 0.0;
    loop {
        let prev = st.state;
        let prev_u = st.u;
        st.step(&mut rng);
        if st.truncated() {
            // the clock diverges as Ỹ reaches zero, so the crossing happened here
            return Ok(prev);
        }
        let next_tau = tau + 0.5 * du * (1.0 / (prev.y * prev.y) + 1.0 / (st.state.y * st.state.y));
        if next_tau >= horizon {
            let w = (horizon - tau) / (next_tau - tau);
            let u = prev_u + w * du;
            if let Some(t) = st.absorption_time {
                if t <= u {
                    return Ok(State2::absorbed_at(prev.y + w * (st.state.y - prev.y)));
                }
            }
            return Ok(State2 {
                x: prev.x + w * (st.state.x - prev.x),
                y: prev.y + w * (st.state.y - prev.y),
                absorbed: false,
            });
        }
        tau = next_tau;
    }
}

/// Configuration of a direct-vs-time-changed equivalence experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceConfig {
    pub params: ModelParams,
    pub x0: f64,
    pub y0: f64,
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seeds: Vec<u64>,
    pub drifted: bool,
    pub alpha: f64,
    pub min_passing_seeds: usize,
}

impl EquivalenceConfig {
    /// N = 20000, Δt = 1e−4, T = 1, five seeds, α = 0.01, four of five must pass.
    pub fn standard(params: ModelParams, drifted: bool) -> Self {
        Self {
            params,
            x0: 1.0,
            y0: 1.0,
            horizon: 1.0,
            dt: 1e-4,
            n_paths: 20_000,
            seeds: vec![1, 2, 3, 4, 5],
            drifted,
            alpha: 0.01,
            min_passing_seeds: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub x: KsReport,
    pub y: KsReport,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub experiment: String,
    pub params: ModelParams,
    pub n: usize,
    pub seeds: Vec<u64>,
    pub ks: Vec<SeedOutcome>,
    pub pass: bool,
}

/// Two-sample KS comparison of the marginals of `(X_T, Y_T)` from direct
/// Euler simulation and from the time-changed decoupled system. The direct
/// sample uses `master_seed = seed`, the time-changed one its companion
/// stream, so the two samples are independent.
pub fn equivalence_experiment(cfg: &EquivalenceConfig) -> Result<EquivalenceReport> {
    let init = State2::new(cfg.x0, cfg.y0)?;
    let grid = TimeGrid::with_step(cfg.horizon, cfg.dt)?;
    if cfg.n_paths < 10 || cfg.seeds.is_empty() {
        return config("equivalence experiment needs at least 10 paths and one seed");
    }
    let p = cfg.params;
    let mut outcomes = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let direct = map_paths(cfg.n_paths, seed, |s| sabr_terminal(&p, init, &grid, cfg.drifted, s));
        let other = SeedSpec::new(seed, 0).companion().master_seed;
        let changed = map_paths(cfg.n_paths, other, |s| {
            time_changed_terminal(&p, init, cfg.horizon, grid.dt(), cfg.drifted, s)
        });
        let direct = direct.into_iter().collect::<Result<Vec<_>>>()?;
        let changed = changed.into_iter().collect::<Result<Vec<_>>>()?;
        let xs = |v: &[State2]| v.iter().map(|s| s.x).collect::<Vec<_>>();
        let ys = |v: &[State2]| v.iter().map(|s| s.y).collect::<Vec<_>>();
        let kx = ks_two_sample(&xs(&direct), &xs(&changed))?;
        let ky = ks_two_sample(&ys(&direct), &ys(&changed))?;
        outcomes.push(SeedOutcome {
            seed,
            x: kx,
            y: ky,
            pass: kx.p_value > cfg.alpha && ky.p_value > cfg.alpha,
        });
    }
    let passing = outcomes.iter().filter(|o| o.pass).count();
    Ok(EquivalenceReport {
        experiment: if cfg.drifted { "equivalence_drifted" } else { "equivalence" }.to_string(),
        params: p,
        n: cfg.n_paths,
        seeds: cfg.seeds.clone(),
        ks: outcomes,
        pass: passing >= cfg.min_passing_seeds,
    })
}
