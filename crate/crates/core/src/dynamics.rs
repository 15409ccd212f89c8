//! Time evolution, synthetic measurements, and Heisenberg-picture operator
//! reconstruction.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array3, Axis};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{unitarity_error, unitary_exp, PivotedQr};
use crate::models::{CompiledHamiltonian, HamiltonianSpec};
use crate::pauli::{
    check_spin_count, pauli_matrix, reconstruct, CMatrix, HermitianOperator, PauliCoefficients,
    PauliString,
};

pub type StateVector = DVector<Complex64>;

/// Drift above which the integrator refuses to continue.
pub const DRIFT_LIMIT: f64 = 1e-6;

/// Norm drift the automatic step selection aims for.
const DRIFT_TARGET: f64 = 1e-9;

/// Equally spaced measurement times on `[t_start, t_end]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_start: f64,
    pub t_end: f64,
    pub n_samples: usize,
    /// Integrator steps per sample interval.
    pub substeps: usize,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, n_samples: usize, substeps: usize) -> Result<Self> {
        let grid = Self {
            t_start,
            t_end,
            n_samples,
            substeps,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_start.is_finite() && self.t_end.is_finite()) || self.t_end <= self.t_start {
            return Err(Error::Input(format!(
                "time grid needs t_end > t_start, got [{}, {}]",
                self.t_start, self.t_end
            )));
        }
        if self.n_samples < 2 {
            return Err(Error::Input("time grid needs at least two samples".into()));
        }
        if self.substeps < 1 {
            return Err(Error::Input("time grid needs at least one substep".into()));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        (self.t_end - self.t_start) / (self.n_samples - 1) as f64
    }

    pub fn time(&self, j: usize) -> f64 {
        if j + 1 == self.n_samples {
            self.t_end
        } else {
            self.t_start + j as f64 * self.spacing()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_samples).map(|j| self.time(j)).collect()
    }

    /// Raises `substeps` so RK4 keeps the norm drift of the whole horizon
    /// under about 1e-9 for a Hamiltonian with spectral norm `norm_bound`.
    /// The RK4 amplification factor for a mode of frequency `w` at step `h`
    /// loses `(w h)^6 / 144` per step.
    pub fn with_adequate_substeps(mut self, norm_bound: f64) -> Self {
        if norm_bound <= 0.0 {
            return self;
        }
        let horizon = self.t_end - self.t_start;
        let h_max = (144.0 * DRIFT_TARGET / (norm_bound.powi(6) * horizon)).powf(0.2);
        let needed = (self.spacing() / h_max).ceil() as usize;
        self.substeps = self.substeps.max(needed);
        self
    }
}

/// Unit-norm random initial states.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialStateEnsemble {
    pub n: usize,
    pub states: Vec<StateVector>,
    pub seed: Option<u64>,
}

impl InitialStateEnsemble {
    pub fn new(n: usize, states: Vec<StateVector>) -> Result<Self> {
        check_spin_count(n)?;
        let dim = 1 << n;
        for (s, psi) in states.iter().enumerate() {
            if psi.len() != dim {
                return Err(Error::Size(format!("state {s} has dimension {}", psi.len())));
            }
            if (psi.norm() - 1.0).abs() > 1e-12 {
                return Err(Error::Contract(format!("state {s} is not normalized")));
            }
        }
        Ok(Self {
            n,
            states,
            seed: None,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    /// States as the columns of one `2^n x count` matrix.
    pub fn as_matrix(&self) -> CMatrix {
        CMatrix::from_columns(&self.states)
    }
}

/// Each amplitude is `sqrt(r) exp(2 pi i theta)` with `r`, `theta` uniform
/// on `[0, 1)`; the vector is then normalized.
pub fn gen_initial_states(n: usize, count: usize, rng: &mut impl Rng) -> Result<InitialStateEnsemble> {
    check_spin_count(n)?;
    if count < 1 {
        return Err(Error::Input("need at least one initial state".into()));
    }
    let dim = 1usize << n;
    let states = (0..count)
        .map(|_| {
            let mut psi = StateVector::from_fn(dim, |_, _| {
                let r = rng.random::<f64>();
                let theta = rng.random::<f64>();
                Complex64::from_polar(r.sqrt(), 2.0 * PI * theta)
            });
            let norm = psi.norm();
            psi.unscale_mut(norm);
            psi
        })
        .collect();
    Ok(InitialStateEnsemble {
        n,
        states,
        seed: None,
    })
}

fn column_norm_drift(m: &CMatrix) -> f64 {
    m.column_iter()
        .map(|c| (c.norm() - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Classic RK4 on `dY/dt = -i H(t) Y` for a block of column states. Returns
/// `Y` at every grid point, starting with `initial` at `t_start`.
fn rk4_columns(
    ham: &CompiledHamiltonian,
    initial: CMatrix,
    grid: &TimeGrid,
    drift: impl Fn(&CMatrix) -> f64,
) -> Result<Vec<CMatrix>> {
    grid.validate()?;
    let minus_i = Complex64::new(0.0, -1.0);
    let h = grid.spacing() / grid.substeps as f64;
    let half = Complex64::new(h / 2.0, 0.0);
    let full = Complex64::new(h, 0.0);
    let sixth = Complex64::new(h / 6.0, 0.0);
    let two = Complex64::new(2.0, 0.0);

    let mut out = Vec::with_capacity(grid.n_samples);
    let mut y = initial;
    out.push(y.clone());
    let mut worst = 0.0f64;
    for j in 0..grid.n_samples - 1 {
        let t0 = grid.time(j);
        for k in 0..grid.substeps {
            let t = t0 + k as f64 * h;
            let h0 = ham.at(t) * minus_i;
            let hm = ham.at(t + h / 2.0) * minus_i;
            let h1 = ham.at(t + h) * minus_i;
            let k1 = &h0 * &y;
            let k2 = &hm * (&y + &k1 * half);
            let k3 = &hm * (&y + &k2 * half);
            let k4 = &h1 * (&y + &k3 * full);
            y += (k1 + k2 * two + k3 * two + k4) * sixth;
        }
        worst = worst.max(drift(&y));
        if worst > DRIFT_LIMIT {
            return Err(Error::Integrator(format!(
                "norm drift {worst:.3e} exceeds {DRIFT_LIMIT:.0e} by t = {:.3}; increase substeps \
                 (currently {})",
                grid.time(j + 1),
                grid.substeps
            )));
        }
        out.push(y.clone());
    }
    Ok(out)
}

/// State trajectory at the grid points, `psi0` at `t_start`.
pub fn evolve_state(spec: &HamiltonianSpec, psi0: &StateVector, grid: &TimeGrid) -> Result<Vec<StateVector>> {
    let ham = spec.compile();
    if psi0.len() != ham.dim() {
        return Err(Error::Size(format!(
            "state dimension {} does not match Hamiltonian dimension {}",
            psi0.len(),
            ham.dim()
        )));
    }
    let init = CMatrix::from_columns(std::slice::from_ref(psi0));
    let traj = rk4_columns(&ham, init, grid, column_norm_drift)?;
    Ok(traj.into_iter().map(|m| m.column(0).into_owned()).collect())
}

/// Propagators `U(t_j, t_start)` at every grid point.
pub fn propagators(ham: &CompiledHamiltonian, grid: &TimeGrid) -> Result<Vec<CMatrix>> {
    let dim = ham.dim();
    rk4_columns(ham, CMatrix::identity(dim, dim), grid, unitarity_error)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeMode {
    /// `i <psi|[H, A]|psi>` from the true Hamiltonian.
    Exact,
    /// Central differences of the sampled values.
    FiniteDiff,
}

/// Expectation time series, indexed `[state, observable, time]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSet {
    pub grid: TimeGrid,
    /// Observed spins, numbered from 1.
    pub observed: Vec<usize>,
    pub observables: Vec<PauliString>,
    pub values: Array3<f64>,
    pub derivatives: Array3<f64>,
    pub noise_sigma: f64,
    pub derivative_mode: DerivativeMode,
}

impl ObservationSet {
    pub fn n_states(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn n_observables(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn n_times(&self) -> usize {
        self.values.shape()[2]
    }
}

/// Every non-identity string supported on the observed spins: three for one
/// observed spin, fifteen for two.
pub fn default_observables(n: usize, observed: &[usize]) -> Result<Vec<PauliString>> {
    check_spin_count(n)?;
    check_observed(n, observed)?;
    Ok((1..1usize << (2 * n))
        .map(|i| PauliString::from_index(n, i))
        .filter(|p| p.support().all(|k| observed.contains(&(k + 1))))
        .collect())
}

fn check_observed(n: usize, observed: &[usize]) -> Result<()> {
    if observed.is_empty() {
        return Err(Error::Input("observed spin set is empty".into()));
    }
    if let Some(bad) = observed.iter().find(|&&s| s < 1 || s > n) {
        return Err(Error::Input(format!("observed spin {bad} outside 1..={n}")));
    }
    Ok(())
}

/// Samples `<A_k>` for every state and time, with time derivatives per `mode`.
pub fn measure_expectations(
    spec: &HamiltonianSpec,
    ensemble: &InitialStateEnsemble,
    observed: &[usize],
    observables: &[PauliString],
    grid: &TimeGrid,
    mode: DerivativeMode,
) -> Result<ObservationSet> {
    check_observed(spec.n, observed)?;
    if ensemble.n != spec.n {
        return Err(Error::Size("ensemble and Hamiltonian disagree on n".into()));
    }
    for a in observables {
        if a.n() != spec.n {
            return Err(Error::Size(format!("observable {a} does not have {} spins", spec.n)));
        }
        if let Some(k) = a.support().find(|k| !observed.contains(&(k + 1))) {
            return Err(Error::Contract(format!(
                "observable {a} acts on hidden spin {}",
                k + 1
            )));
        }
    }

    let ham = spec.compile();
    let props = propagators(&ham, grid)?;
    let psi0 = ensemble.as_matrix();
    let actions: Vec<_> = observables.iter().map(PauliString::row_action).collect();
    let (ns, nk, nt) = (ensemble.len(), observables.len(), grid.n_samples);
    let mut values = Array3::zeros((ns, nk, nt));
    let mut exact = Array3::zeros((ns, nk, nt));

    for (j, u) in props.iter().enumerate() {
        let psi = u * &psi0;
        let h_psi = if mode == DerivativeMode::Exact {
            Some(ham.at(grid.time(j)) * &psi)
        } else {
            None
        };
        for (k, action) in actions.iter().enumerate() {
            for s in 0..ns {
                let col = psi.column(s);
                let mut expectation = Complex64::new(0.0, 0.0);
                let mut hz = Complex64::new(0.0, 0.0);
                for (row, &(c, phase)) in action.iter().enumerate() {
                    let a_psi = phase * col[c];
                    expectation += col[row].conj() * a_psi;
                    if let Some(hp) = &h_psi {
                        hz += hp[(row, s)].conj() * a_psi;
                    }
                }
                values[[s, k, j]] = expectation.re;
                // d<A>/dt = i <psi|[H, A]|psi> = -2 Im <psi|H A|psi>
                exact[[s, k, j]] = -2.0 * hz.im;
            }
        }
    }

    let derivatives = match mode {
        DerivativeMode::Exact => exact,
        DerivativeMode::FiniteDiff => finite_difference(&values, grid.spacing()),
    };
    Ok(ObservationSet {
        grid: *grid,
        observed: observed.to_vec(),
        observables: observables.to_vec(),
        values,
        derivatives,
        noise_sigma: 0.0,
        derivative_mode: mode,
    })
}

/// Second-order differences along the time axis: central in the interior,
/// one-sided three-point at the ends.
pub fn finite_difference(values: &Array3<f64>, dt: f64) -> Array3<f64> {
    let nt = values.shape()[2];
    let mut out = Array3::zeros(values.raw_dim());
    for (series, mut deriv) in values
        .lanes(Axis(2))
        .into_iter()
        .zip(out.lanes_mut(Axis(2)))
    {
        if nt == 2 {
            let d = (series[1] - series[0]) / dt;
            deriv[0] = d;
            deriv[1] = d;
            continue;
        }
        deriv[0] = (-3.0 * series[0] + 4.0 * series[1] - series[2]) / (2.0 * dt);
        for j in 1..nt - 1 {
            deriv[j] = (series[j + 1] - series[j - 1]) / (2.0 * dt);
        }
        deriv[nt - 1] = (3.0 * series[nt - 1] - 4.0 * series[nt - 2] + series[nt - 3]) / (2.0 * dt);
    }
    out
}

/// Adds white Gaussian noise to every value and recomputes derivatives by
/// finite differences.
pub fn add_noise(obs: &ObservationSet, sigma: f64, rng: &mut impl Rng) -> Result<ObservationSet> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Input(format!("noise sigma must be >= 0, got {sigma}")));
    }
    let mut values = obs.values.clone();
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::Input(e.to_string()))?;
        values.iter_mut().for_each(|v| *v += normal.sample(rng));
    }
    let derivatives = finite_difference(&values, obs.grid.spacing());
    Ok(ObservationSet {
        values,
        derivatives,
        noise_sigma: sigma,
        derivative_mode: DerivativeMode::FiniteDiff,
        ..obs.clone()
    })
}

/// Hermitian operators sampled on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorSeries {
    pub grid: TimeGrid,
    pub label: String,
    pub matrices: Vec<HermitianOperator>,
}

impl OperatorSeries {
    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn n(&self) -> usize {
        self.matrices.first().map_or(0, HermitianOperator::n)
    }

    pub fn times(&self) -> Vec<f64> {
        self.grid.times()
    }

    /// Linear interpolation between grid points, clamped at the ends.
    pub fn interpolate(&self, t: f64) -> CMatrix {
        let dt = self.grid.spacing();
        let x = ((t - self.grid.t_start) / dt).clamp(0.0, (self.len() - 1) as f64);
        let j = (x.floor() as usize).min(self.len() - 2);
        let w = x - j as f64;
        self.matrices[j].matrix() * Complex64::new(1.0 - w, 0.0)
            + self.matrices[j + 1].matrix() * Complex64::new(w, 0.0)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.matrices
            .iter()
            .zip(&other.matrices)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }
}

/// Least-squares solution of `<psi_s|A^H(t)|psi_s> = <A>_t` for every
/// observable and time.
#[derive(Clone, Debug)]
pub struct HeisenbergReconstruction {
    pub observables: Vec<PauliString>,
    /// `A_k^H(t_j)` per observable.
    pub operators: Vec<OperatorSeries>,
    /// `d A_k^H / dt (t_j)` per observable.
    pub derivatives: Vec<OperatorSeries>,
    /// `||M x - b|| / ||b||` over all value right-hand sides.
    pub relative_residual: f64,
    pub condition_estimate: f64,
}

/// `M[s, i] = <psi_s|S_i|psi_s>`.
pub fn design_matrix(ensemble: &InitialStateEnsemble) -> DMatrix<f64> {
    let n = ensemble.n;
    let basis = 1usize << (2 * n);
    let mut m = DMatrix::zeros(ensemble.len(), basis);
    for i in 0..basis {
        let action = PauliString::from_index(n, i).row_action();
        for (s, psi) in ensemble.states.iter().enumerate() {
            let z: Complex64 = action
                .iter()
                .enumerate()
                .map(|(row, &(c, phase))| psi[row].conj() * phase * psi[c])
                .sum();
            m[(s, i)] = z.re;
        }
    }
    m
}

/// Relative tolerance on `|R_kk| / |R_00|` below which the design matrix is
/// treated as rank deficient.
pub const RANK_TOL: f64 = 1e-10;

pub fn reconstruct_heisenberg(
    obs: &ObservationSet,
    ensemble: &InitialStateEnsemble,
) -> Result<HeisenbergReconstruction> {
    let n = ensemble.n;
    let basis = 1usize << (2 * n);
    if ensemble.len() < basis {
        return Err(Error::RankDeficient {
            rank: ensemble.len().min(basis),
            required: basis,
            condition: f64::INFINITY,
        });
    }
    if obs.n_states() != ensemble.len() {
        return Err(Error::Size(format!(
            "observations cover {} states, ensemble has {}",
            obs.n_states(),
            ensemble.len()
        )));
    }

    let m = design_matrix(ensemble);
    let qr = PivotedQr::factor(&m);
    let rank = qr.rank(RANK_TOL);
    let condition = qr.condition_estimate();
    if rank < basis {
        return Err(Error::RankDeficient {
            rank,
            required: basis,
            condition,
        });
    }

    let (ns, nk, nt) = (obs.n_states(), obs.n_observables(), obs.n_times());
    let rhs = |data: &Array3<f64>| DMatrix::from_fn(ns, nk * nt, |s, col| data[[s, col / nt, col % nt]]);
    let b_values = rhs(&obs.values);
    let x_values = qr.solve_least_squares(&b_values);
    let x_derivs = qr.solve_least_squares(&rhs(&obs.derivatives));

    let residual = (&m * &x_values - &b_values).norm();
    let relative_residual = residual / b_values.norm().max(f64::MIN_POSITIVE);

    let series = |x: &DMatrix<f64>, k: usize, label: String| OperatorSeries {
        grid: obs.grid,
        label,
        matrices: (0..nt)
            .map(|j| {
                let coeffs = x.column(k * nt + j).iter().copied().collect();
                reconstruct(&PauliCoefficients::new(n, coeffs).expect("length 4^n"))
            })
            .collect(),
    };
    let operators = (0..nk)
        .map(|k| series(&x_values, k, obs.observables[k].label()))
        .collect();
    let derivatives = (0..nk)
        .map(|k| series(&x_derivs, k, format!("d{}/dt", obs.observables[k].label())))
        .collect();
    Ok(HeisenbergReconstruction {
        observables: obs.observables.clone(),
        operators,
        derivatives,
        relative_residual,
        condition_estimate: condition,
    })
}

/// Converts a Heisenberg-picture Hamiltonian series to the Schrodinger
/// picture, interpolating `H^H` linearly between grid points.
pub fn heisenberg_to_schrodinger(hh: &OperatorSeries, substeps: usize) -> Result<OperatorSeries> {
    if hh.len() != hh.grid.n_samples || hh.len() < 2 {
        return Err(Error::Size("Heisenberg series does not match its grid".into()));
    }
    let mut out = heisenberg_to_schrodinger_with(&hh.grid, substeps, |t| hh.interpolate(t))?;
    out.label = format!("schrodinger({})", hh.label);
    Ok(out)
}

/// Co-integrates the propagator with `dU/dt = -i U H^H(t)` using exponential
/// midpoint steps, `U <- U exp(-i H^H(t_mid) h)`, and returns
/// `H(t_j) = U_j H^H(t_j) U_j^dagger` on the grid. `source` is sampled at grid
/// points and step midpoints.
pub fn heisenberg_to_schrodinger_with(
    grid: &TimeGrid,
    substeps: usize,
    source: impl Fn(f64) -> CMatrix,
) -> Result<OperatorSeries> {
    grid.validate()?;
    let substeps = substeps.max(1);
    let first = source(grid.t_start);
    let dim = first.nrows();
    let mut u = CMatrix::identity(dim, dim);
    let mut matrices = Vec::with_capacity(grid.n_samples);
    matrices.push(HermitianOperator::symmetrized(first));
    let h = grid.spacing() / substeps as f64;
    for j in 0..grid.n_samples - 1 {
        let t0 = grid.time(j);
        for k in 0..substeps {
            let mid = t0 + (k as f64 + 0.5) * h;
            let hh_mid = HermitianOperator::symmetrized(source(mid)).into_matrix();
            u *= unitary_exp(&hh_mid, h);
        }
        let drift = unitarity_error(&u);
        if drift > DRIFT_LIMIT {
            return Err(Error::Integrator(format!(
                "propagator unitarity drift {drift:.3e} at t = {:.3}",
                grid.time(j + 1)
            )));
        }
        let hh = HermitianOperator::symmetrized(source(grid.time(j + 1)));
        matrices.push(hh.conjugate_by(&u));
    }
    Ok(OperatorSeries {
        grid: *grid,
        label: "schrodinger".into(),
        matrices,
    })
}

/// True Schrodinger-picture Hamiltonian sampled on the grid.
pub fn hamiltonian_series(spec: &HamiltonianSpec, grid: &TimeGrid) -> OperatorSeries {
    let ham = spec.compile();
    OperatorSeries {
        grid: *grid,
        label: "H".into(),
        matrices: grid
            .times()
            .into_iter()
            .map(|t| HermitianOperator::symmetrized(ham.at(t)))
            .collect(),
    }
}

/// True `H^H(t_j) = U_j^dagger H(t_j) U_j` from RK4 propagators.
pub fn true_heisenberg_hamiltonian(spec: &HamiltonianSpec, grid: &TimeGrid) -> Result<OperatorSeries> {
    let ham = spec.compile();
    let props = propagators(&ham, grid)?;
    Ok(OperatorSeries {
        grid: *grid,
        label: "H^H".into(),
        matrices: props
            .iter()
            .enumerate()
            .map(|(j, u)| HermitianOperator::symmetrized(u.adjoint() * ham.at(grid.time(j)) * u))
            .collect(),
    })
}

/// True `A^H(t_j) = U_j^dagger A U_j` for each observable.
pub fn true_heisenberg_observables(
    spec: &HamiltonianSpec,
    observables: &[PauliString],
    grid: &TimeGrid,
) -> Result<Vec<OperatorSeries>> {
    let props = propagators(&spec.compile(), grid)?;
    Ok(observables
        .iter()
        .map(|a| {
            let am = pauli_matrix(a).into_matrix();
            OperatorSeries {
                grid: *grid,
                label: a.label(),
                matrices: props
                    .iter()
                    .map(|u| HermitianOperator::symmetrized(u.adjoint() * &am * u))
                    .collect(),
            }
        })
        .collect())
}
