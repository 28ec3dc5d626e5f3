//! Monte Carlo paths for SABR, the SABR Brownian motion, CEV, the decoupled
//! time-changed systems and the stochastic representation of the weighted
//! Dirichlet form.
//!
//! Every scheme draws two standard normals per step, in the order
//! `(W, W⊥)`, and builds `Z = ρW + ρ̄W⊥`. Volatility is stepped exactly as
//! a geometric Brownian motion; the forward is stepped by Euler and pinned
//! at zero at the first crossing.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{config, domain, Result};
use crate::process_models::{pow, ModelParams, State2};
use crate::rng::{PathRng, SeedSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    t0: f64,
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, horizon: f64, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return config("time grid needs at least one step");
        }
        if !(t0 >= 0.0) || !(horizon > t0) || !horizon.is_finite() {
            return config(format!("time grid needs 0 <= t0 < horizon, got [{t0}, {horizon}]"));
        }
        Ok(Self { t0, horizon, n_steps })
    }

    /// Grid on `[0, horizon]` with step close to `dt`.
    pub fn with_step(horizon: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return config(format!("step must be positive, got {dt}"));
        }
        Self::new(0.0, horizon, ((horizon / dt).round() as usize).max(1))
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }
    pub fn dt(&self) -> f64 {
        (self.horizon - self.t0) / self.n_steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.horizon
        } else {
            self.t0 + (self.horizon - self.t0) * (k as f64 / self.n_steps as f64)
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| self.time(k)).collect()
    }
}

/// A sampled path. `truncation_time` is set by the decoupled schemes when the
/// Brownian volatility reaches zero; the state is frozen from then on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Path {
    pub grid: TimeGrid,
    pub states: Vec<State2>,
    pub absorption_time: Option<f64>,
    pub truncation_time: Option<f64>,
}

impl Path {
    pub fn xs(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.x).collect()
    }
    pub fn ys(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.y).collect()
    }
    pub fn terminal(&self) -> State2 {
        *self.states.last().expect("paths are never empty")
    }
}

/// A one-dimensional sampled path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalarPath {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Component {
    X,
    Y,
}

#[inline]
fn normal_pair(rng: &mut PathRng) -> (f64, f64) {
    (rng.sample(StandardNormal), rng.sample(StandardNormal))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SabrScheme {
    Plain,
    Drifted,
    DirichletRepresentation,
}

/// Euler stepper in calendar time for the SABR family.
#[derive(Debug, Clone)]
pub struct SabrStepper {
    p: ModelParams,
    scheme: SabrScheme,
    dt: f64,
    sqrt_dt: f64,
    pub state: State2,
    pub t: f64,
    pub absorption_time: Option<f64>,
}

impl SabrStepper {
    fn new(p: &ModelParams, init: State2, t0: f64, dt: f64, scheme: SabrScheme) -> Self {
        let absorbed = init.absorbed || init.x == 0.0;
        Self {
            p: *p,
            scheme,
            dt,
            sqrt_dt: dt.sqrt(),
            state: State2 {
                x: if absorbed { 0.0 } else { init.x },
                y: init.y,
                absorbed,
            },
            t: t0,
            absorption_time: if absorbed { Some(t0) } else { None },
        }
    }

    pub fn sabr(p: &ModelParams, init: State2, t0: f64, dt: f64, drifted: bool) -> Self {
        let scheme = if drifted { SabrScheme::Drifted } else { SabrScheme::Plain };
        Self::new(p, init, t0, dt, scheme)
    }

    #[inline]
    pub fn step(&mut self, rng: &mut PathRng) {
        let (z1, z2) = normal_pair(rng);
        let p = &self.p;
        let dt = self.dt;
        let dw = self.sqrt_dt * z1;
        let dz = p.rho() * dw + p.rho_bar() * self.sqrt_dt * z2;
        let nu = p.nu();
        let beta = p.beta();
        let State2 { x, y, absorbed } = self.state;
        let mut log_step = nu * dz - 0.5 * nu * nu * dt;
        let mut x_new = 0.0;
        if !absorbed {
            let xb = pow(x, beta);
            x_new = x + y * xb * dw;
            match self.scheme {
                SabrScheme::Plain => {}
                SabrScheme::Drifted => {
                    if beta > 0.0 {
                        x_new += 0.5 * y * y * beta * pow(x, 2.0 * beta - 1.0) * dt;
                    }
                }
                SabrScheme::DirichletRepresentation => {
                    if beta > 0.0 {
                        // drift −(ρνβ/2) y² x^{β−1} of Y, written for log Y
                        log_step -= 0.5 * p.rho() * nu * beta * y * xb / x * dt;
                    }
                }
            }
            if x_new <= 0.0 {
                self.absorption_time = Some(self.t + dt * x / (x - x_new));
                x_new = 0.0;
                self.state.absorbed = true;
            }
        }
        self.state.x = x_new;
        self.state.y = y * log_step.exp();
        self.t += dt;
    }
}

/// Euler stepper in the decoupled clock for `dX̃ = X̃^β dW (+ ½βX̃^{2β−1}du)`,
/// `dỸ = ν dZ`. The drifted forward uses the exact Stratonovich map for
/// β < 1. `truncation_time` marks the first time Ỹ reaches zero.
#[derive(Debug, Clone)]
pub struct DecoupledStepper {
    p: ModelParams,
    drifted: bool,
    du: f64,
    sqrt_du: f64,
    x0: f64,
    w: f64,
    pub state: State2,
    pub u: f64,
    pub absorption_time: Option<f64>,
    pub truncation_time: Option<f64>,
}

impl DecoupledStepper {
    pub fn new(p: &ModelParams, init: State2, t0: f64, du: f64, drifted: bool) -> Self {
        let absorbed = init.absorbed || init.x == 0.0;
        Self {
            p: *p,
            drifted,
            du,
            sqrt_du: du.sqrt(),
            x0: init.x,
            w: 0.0,
            state: State2 {
                x: if absorbed { 0.0 } else { init.x },
                y: init.y,
                absorbed,
            },
            u: t0,
            absorption_time: if absorbed { Some(t0) } else { None },
            truncation_time: None,
        }
    }

    pub fn truncated(&self) -> bool {
        self.truncation_time.is_some()
    }

    /// Advances one step. Once truncated, the state stays frozen while the
    /// clock and the random stream keep advancing.
    #[inline]
    pub fn step(&mut self, rng: &mut PathRng) {
        let (z1, z2) = normal_pair(rng);
        let du = self.du;
        let u_old = self.u;
        self.u += du;
        if self.truncated() {
            return;
        }
        let p = &self.p;
        let beta = p.beta();
        let dw = self.sqrt_du * z1;
        let dz = p.rho() * dw + p.rho_bar() * self.sqrt_du * z2;
        let y = self.state.y;
        let y_new = y + p.nu() * dz;
        if y_new <= 0.0 {
            self.truncation_time = Some(u_old + du * y / (y - y_new));
            return;
        }
        let x = self.state.x;
        let mut x_new = 0.0;
        if !self.state.absorbed {
            if self.drifted && beta < 1.0 {
                let q = 1.0 - beta;
                let inner_old = pow(self.x0, q) + q * self.w;
                self.w += dw;
                let inner = pow(self.x0, q) + q * self.w;
                if inner <= 0.0 {
                    self.absorption_time = Some(u_old + du * inner_old / (inner_old - inner));
                    self.state.absorbed = true;
                } else {
                    x_new = pow(inner, 1.0 / q);
                }
            } else {
                x_new = x + pow(x, beta) * dw;
                if self.drifted && beta > 0.0 {
                    x_new += 0.5 * beta * pow(x, 2.0 * beta - 1.0) * du;
                }
                if x_new <= 0.0 {
                    self.absorption_time = Some(u_old + du * x / (x - x_new));
                    x_new = 0.0;
                    self.state.absorbed = true;
                }
            }
        }
        self.state.x = x_new;
        self.state.y = y_new;
    }
}

fn check_init(init: &State2) -> Result<()> {
    if !(init.x >= 0.0) || !(init.y > 0.0) || !init.x.is_finite() || !init.y.is_finite() {
        return domain(format!("initial state needs x >= 0 and y > 0, got ({}, {})", init.x, init.y));
    }
    Ok(())
}

fn record_sabr(mut st: SabrStepper, grid: &TimeGrid, seed: SeedSpec) -> Path {
    let mut rng = seed.rng();
    let mut states = Vec::with_capacity(grid.n_steps() + 1);
    states.push(st.state);
    for _ in 0..grid.n_steps() {
        st.step(&mut rng);
        states.push(st.state);
    }
    Path {
        grid: *grid,
        states,
        absorption_time: st.absorption_time,
        truncation_time: None,
    }
}

/// SABR (or, with `drifted`, the SABR Brownian motion) by Euler in `X` and
/// exact log-normal steps in `Y`, absorbed at zero.
pub fn simulate_sabr_euler(p: &ModelParams, init: State2, grid: &TimeGrid, drifted: bool, seed: SeedSpec) -> Result<Path> {
    check_init(&init)?;
    Ok(record_sabr(
        SabrStepper::sabr(p, init, grid.t0(), grid.dt(), drifted),
        grid,
        seed,
    ))
}

/// Terminal state of [`simulate_sabr_euler`] without storing the path.
pub fn sabr_terminal(p: &ModelParams, init: State2, grid: &TimeGrid, drifted: bool, seed: SeedSpec) -> Result<State2> {
    check_init(&init)?;
    let mut st = SabrStepper::sabr(p, init, grid.t0(), grid.dt(), drifted);
    let mut rng = seed.rng();
    for _ in 0..grid.n_steps() {
        st.step(&mut rng);
    }
    Ok(st.state)
}

/// CEV process `dX = σX^β dW` absorbed at zero. It is the SABR system with
/// `ν = 0` and `Y ≡ σ`, so the `y` component of the returned path is `σ`.
pub fn simulate_cev(x0: f64, beta: f64, sigma: f64, grid: &TimeGrid, seed: SeedSpec) -> Result<Path> {
    let p = ModelParams::new(beta, 0.0, 0.0)?;
    let init = State2::new(x0, sigma)?;
    simulate_sabr_euler(&p, init, grid, false, seed)
}

/// Stochastic representation of the weighted Dirichlet form generator:
/// `dX = Y X^β dW`, `dY = νY dZ − (ρνβ/2) Y² X^{β−1} dt`. The drift is
/// applied in log coordinates so that `Y` stays positive; it is frozen once
/// `X` is absorbed.
pub fn simulate_dirichlet_representation(p: &ModelParams, init: State2, grid: &TimeGrid, seed: SeedSpec) -> Result<Path> {
    check_init(&init)?;
    if init.x <= 0.0 {
        return domain("the representation drift is singular at x = 0");
    }
    Ok(record_sabr(
        SabrStepper::new(p, init, grid.t0(), grid.dt(), SabrScheme::DirichletRepresentation),
        grid,
        seed,
    ))
}

/// Drift of `Y` in the stochastic representation, `−(ρνβ/2) y² x^{β−1}`.
pub fn dirichlet_representation_drift(p: &ModelParams, x: f64, y: f64) -> f64 {
    if p.beta() == 0.0 {
        return 0.0;
    }
    -0.5 * p.rho() * p.nu() * p.beta() * y * y * pow(x, p.beta() - 1.0)
}

/// Decoupled system on the clock grid, truncated where Ỹ reaches zero.
pub fn simulate_decoupled(p: &ModelParams, init: State2, grid: &TimeGrid, drifted: bool, seed: SeedSpec) -> Result<Path> {
    check_init(&init)?;
    let mut st = DecoupledStepper::new(p, init, grid.t0(), grid.dt(), drifted);
    let mut rng = seed.rng();
    let mut states = Vec::with_capacity(grid.n_steps() + 1);
    states.push(st.state);
    for _ in 0..grid.n_steps() {
        st.step(&mut rng);
        states.push(st.state);
    }
    Ok(Path {
        grid: *grid,
        states,
        absorption_time: st.absorption_time,
        truncation_time: st.truncation_time,
    })
}

/// Geometric Brownian motion `dY = νY dZ`, stepped exactly.
pub fn simulate_gbm(y0: f64, nu: f64, grid: &TimeGrid, seed: SeedSpec) -> Result<ScalarPath> {
    if !(y0 > 0.0) {
        return domain(format!("GBM needs y0 > 0, got {y0}"));
    }
    let dt = grid.dt();
    let s = dt.sqrt();
    let mut rng = seed.rng();
    let mut y = y0;
    let mut values = Vec::with_capacity(grid.n_steps() + 1);
    values.push(y);
    for _ in 0..grid.n_steps() {
        let z: f64 = rng.sample(StandardNormal);
        y *= (nu * s * z - 0.5 * nu * nu * dt).exp();
        values.push(y);
    }
    Ok(ScalarPath { grid: *grid, values })
}

/// First time the sampled values reach `level` or below, linearly
/// interpolated inside the bracketing step.
pub fn hitting_time(times: &[f64], values: &[f64], level: f64) -> Option<f64> {
    let first = *values.first()?;
    if first <= level {
        return Some(times[0]);
    }
    values.windows(2).enumerate().find_map(|(k, w)| {
        if w[1] <= level {
            let frac = (w[0] - level) / (w[0] - w[1]);
            Some(times[k] + frac * (times[k + 1] - times[k]))
        } else {
            None
        }
    })
}

pub fn first_hitting_time(path: &Path, component: Component, level: f64) -> Option<f64> {
    let values = match component {
        Component::X => path.xs(),
        Component::Y => path.ys(),
    };
    hitting_time(&path.grid.times(), &values, level)
}

/// Runs `f` for path indices `0..n` under `master_seed`, in parallel, and
/// returns the results in index order.
pub fn map_paths<T, F>(n: usize, master_seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(SeedSpec) -> T + Sync + Send,
{
    (0..n as u64)
        .into_par_iter()
        .map(|i| f(SeedSpec::new(master_seed, i)))
        .collect()
}
