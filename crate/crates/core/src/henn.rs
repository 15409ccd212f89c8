//! Heisenberg neural network: an MLP from time to the Heisenberg-picture
//! Hamiltonian, trained on the commutator form of the equation of motion.

use ndarray::{Array1, Array2, Array3, Axis};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    heisenberg_to_schrodinger_with, HeisenbergReconstruction, InitialStateEnsemble, ObservationSet,
    OperatorSeries, StateVector, TimeGrid,
};
use crate::error::{Error, Result};
use crate::pauli::{
    check_spin_count, decode_slice, decompose_matrix, encoding_diagonal_offset, reconstruct, CMatrix,
    HermitianOperator, PauliCoefficients,
};
use crate::seed::split_seed;

/// Affine map `t -> scale * t + offset` applied before the first layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeScale {
    pub scale: f64,
    pub offset: f64,
}

impl TimeScale {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            offset: 0.0,
        }
    }

    /// Sends `[t_start, t_end]` onto `[-1, 1]`.
    pub fn for_grid(grid: &TimeGrid) -> Self {
        let scale = 2.0 / (grid.t_end - grid.t_start);
        Self {
            scale,
            offset: -1.0 - scale * grid.t_start,
        }
    }

    pub fn apply(&self, t: f64) -> f64 {
        self.scale * t + self.offset
    }
}

/// Fully connected network `[1, hidden.., 4^n]`, tanh on hidden layers and a
/// linear output read as a [`crate::pauli::RealEncoding`].
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParameters {
    pub n: usize,
    pub layer_sizes: Vec<usize>,
    /// `weights[l]` has shape `(layer_sizes[l + 1], layer_sizes[l])`.
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub time_scale: TimeScale,
    pub seed: u64,
}

/// Same layout as the parameters of an [`MlpParameters`].
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGradient {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl MlpGradient {
    pub fn flatten(&self) -> Vec<f64> {
        flatten_layers(&self.weights, &self.biases)
    }
}

fn flatten_layers(weights: &[Array2<f64>], biases: &[Array1<f64>]) -> Vec<f64> {
    let mut out = Vec::new();
    for (w, b) in weights.iter().zip(biases) {
        out.extend(w.iter());
        out.extend(b.iter());
    }
    out
}

fn layer_sizes(n: usize, hidden: &[usize]) -> Result<Vec<usize>> {
    check_spin_count(n)?;
    if hidden.contains(&0) {
        return Err(Error::Input("hidden layers must be non-empty".into()));
    }
    let mut sizes = vec![1];
    sizes.extend_from_slice(hidden);
    sizes.push(1 << (2 * n));
    Ok(sizes)
}

impl MlpParameters {
    /// Uniform fan-in initialization: every weight and bias of a layer with
    /// `m` inputs is drawn from `U(-1/sqrt(m), 1/sqrt(m))`.
    pub fn init(n: usize, hidden: &[usize], time_scale: TimeScale, seed: u64) -> Result<Self> {
        Self::init_scaled(n, hidden, time_scale, seed, 1.0)
    }

    /// As [`MlpParameters::init`], with the output layer bound multiplied by
    /// `output_scale`.
    pub fn init_scaled(n: usize, hidden: &[usize], time_scale: TimeScale, seed: u64, output_scale: f64) -> Result<Self> {
        let sizes = layer_sizes(n, hidden)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let last = sizes.len() - 2;
        for (l, pair) in sizes.windows(2).enumerate() {
            let mut bound = 1.0 / (pair[0] as f64).sqrt();
            if l == last {
                bound *= output_scale;
            }
            let mut draw = || if bound > 0.0 { rng.random_range(-bound..bound) } else { 0.0 };
            weights.push(Array2::from_shape_fn((pair[1], pair[0]), |_| draw()));
            biases.push(Array1::from_shape_fn(pair[1], |_| draw()));
        }
        Ok(Self {
            n,
            layer_sizes: sizes,
            weights,
            biases,
            time_scale,
            seed,
        })
    }

    pub fn zeros(n: usize, hidden: &[usize], time_scale: TimeScale) -> Result<Self> {
        let sizes = layer_sizes(n, hidden)?;
        Ok(Self {
            n,
            weights: sizes.windows(2).map(|p| Array2::zeros((p[1], p[0]))).collect(),
            biases: sizes.windows(2).map(|p| Array1::zeros(p[1])).collect(),
            layer_sizes: sizes,
            time_scale,
            seed: 0,
        })
    }

    pub fn output_len(&self) -> usize {
        *self.layer_sizes.last().expect("at least two layers")
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|p| p[1] * (p[0] + 1)).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Layer by layer: weights row-major, then biases.
    pub fn flatten(&self) -> Vec<f64> {
        flatten_layers(&self.weights, &self.biases)
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::Size(format!(
                "{} parameters given, {} expected",
                values.len(),
                self.param_count()
            )));
        }
        let mut it = values.iter().copied();
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            w.iter_mut().for_each(|x| *x = it.next().expect("length checked"));
            b.iter_mut().for_each(|x| *x = it.next().expect("length checked"));
        }
        Ok(())
    }

    /// Network outputs for a batch of times, one row per time.
    pub fn forward(&self, times: &[f64]) -> Array2<f64> {
        self.forward_cached(times).pop().expect("output layer")
    }

    /// Activations of every layer, input first and output last.
    fn forward_cached(&self, times: &[f64]) -> Vec<Array2<f64>> {
        let input = Array2::from_shape_fn((times.len(), 1), |(i, _)| self.time_scale.apply(times[i]));
        let mut acts = vec![input];
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = acts[l].dot(&w.t());
            z += b;
            if l < last {
                z.mapv_inplace(f64::tanh);
            }
            if !z.is_standard_layout() {
                z = z.as_standard_layout().into_owned();
            }
            acts.push(z);
        }
        acts
    }

    /// Reverse-mode pass given the loss gradient with respect to the outputs.
    fn backward(&self, acts: &[Array2<f64>], d_out: Array2<f64>) -> MlpGradient {
        let layers = self.weights.len();
        let mut weights = vec![Array2::zeros((0, 0)); layers];
        let mut biases = vec![Array1::zeros(0); layers];
        let mut delta = d_out;
        for l in (0..layers).rev() {
            weights[l] = delta.t().dot(&acts[l]);
            biases[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut d_prev = delta.dot(&self.weights[l]);
                d_prev.zip_mut_with(&acts[l], |d, &a| *d *= 1.0 - a * a);
                delta = d_prev;
            }
        }
        MlpGradient { weights, biases }
    }
}

/// Network output at `t` decoded into a Hermitian matrix.
pub fn mlp_forward(params: &MlpParameters, t: f64) -> Result<HermitianOperator> {
    if !t.is_finite() {
        return Err(Error::Numeric(format!("non-finite time {t}")));
    }
    if !params.is_finite() {
        return Err(Error::Numeric("network parameters are not finite".into()));
    }
    let out = params.forward(&[t]);
    Ok(decode_slice(params.n, out.row(0).as_slice().expect("standard layout")))
}

/// Removes the identity component, which no commutator can see.
pub fn remove_trace(h: HermitianOperator) -> HermitianOperator {
    let dim = h.dim();
    let mut m = h.into_matrix();
    let mean = m.trace().re / dim as f64;
    for i in 0..dim {
        m[(i, i)] -= Complex64::new(mean, 0.0);
    }
    HermitianOperator::symmetrized(m)
}

/// `d pred / d v` for `pred = -2 Im(psi^dagger H a)` where `v` is the real
/// encoding of `H`.
fn response_row(psi: &[Complex64], a: &[Complex64], out: &mut [f64]) {
    let dim = psi.len();
    for m in 0..dim {
        let off = encoding_diagonal_offset(dim, m);
        let pm = psi[m].conj();
        out[off] = -2.0 * (pm * a[m]).im;
        for c in m + 1..dim {
            let pc = psi[c].conj();
            let idx = off + 1 + 2 * (c - m - 1);
            out[idx] = -2.0 * (pm * a[c] + pc * a[m]).im;
            out[idx + 1] = -2.0 * (pm * a[c] - pc * a[m]).re;
        }
    }
}

/// Per-time pieces of the loss written as a quadratic form in the encoding
/// `v`: `sum (g.v - y)^2 = v^T q v - 2 b.v + c`.
#[derive(Clone, Debug)]
struct TimeQuadratic {
    /// Upper triangle of `q`, row by row.
    q_packed: Vec<f64>,
    b: Array1<f64>,
    c: f64,
    count: usize,
}

impl TimeQuadratic {
    fn new(g: &Array2<f64>, y: &Array1<f64>) -> Self {
        let q = g.t().dot(g);
        let len = q.nrows();
        let mut q_packed = Vec::with_capacity(len * (len + 1) / 2);
        for i in 0..len {
            q_packed.extend(q.row(i).iter().skip(i));
        }
        Self {
            q_packed,
            b: g.t().dot(y),
            c: y.dot(y),
            count: g.nrows(),
        }
    }

    /// `q v` into `out`.
    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let len = v.len();
        out.fill(0.0);
        let mut start = 0;
        for i in 0..len {
            let row = &self.q_packed[start..start + len - i];
            start += len - i;
            let vi = v[i];
            let mut acc = row[0] * vi;
            for ((q, vj), oj) in row[1..].iter().zip(&v[i + 1..]).zip(&mut out[i + 1..]) {
                acc += q * vj;
                *oj += q * vi;
            }
            out[i] += acc;
        }
    }
}

/// Everything the loss needs: initial states, reconstructed `A^H(t_j)` and
/// measured derivative targets indexed `[state, observable, time]`.
#[derive(Clone, Debug)]
pub struct LossContext {
    n: usize,
    grid: TimeGrid,
    states: Vec<StateVector>,
    a_series: Vec<OperatorSeries>,
    targets: Array3<f64>,
    quad: Vec<TimeQuadratic>,
}

impl LossContext {
    pub fn new(
        states: Vec<StateVector>,
        a_series: Vec<OperatorSeries>,
        targets: Array3<f64>,
        grid: TimeGrid,
    ) -> Result<Self> {
        let (ns, nk, nt) = targets.dim();
        if states.len() != ns || a_series.len() != nk || grid.n_samples != nt {
            return Err(Error::Contract(format!(
                "targets {:?} do not match {} states, {} observables, {} times",
                targets.dim(),
                states.len(),
                a_series.len(),
                grid.n_samples
            )));
        }
        let n = a_series
            .first()
            .map(OperatorSeries::n)
            .ok_or_else(|| Error::Contract("no observables".into()))?;
        let dim = 1usize << n;
        if states.iter().any(|s| s.len() != dim) {
            return Err(Error::Contract("state dimension does not match observables".into()));
        }
        if a_series.iter().any(|a| a.len() != nt || a.n() != n) {
            return Err(Error::Contract("observable series do not match the grid".into()));
        }
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite derivative targets".into()));
        }

        let psi = CMatrix::from_columns(&states);
        let len = dim * dim;
        let quad = (0..nt)
            .into_par_iter()
            .map(|j| {
                let mut g = Array2::zeros((ns * nk, len));
                let mut y = Array1::zeros(ns * nk);
                for (k, series) in a_series.iter().enumerate() {
                    let a_psi = series.matrices[j].matrix() * &psi;
                    for s in 0..ns {
                        let row = k * ns + s;
                        response_row(
                            psi.column(s).as_slice(),
                            a_psi.column(s).as_slice(),
                            g.row_mut(row).as_slice_mut().expect("standard layout"),
                        );
                        y[row] = targets[[s, k, j]];
                    }
                }
                TimeQuadratic::new(&g, &y)
            })
            .collect();
        Ok(Self {
            n,
            grid,
            states,
            a_series,
            targets,
            quad,
        })
    }

    /// Context from a reconstruction and the observations it came from.
    pub fn from_reconstruction(
        ensemble: &InitialStateEnsemble,
        rec: &HeisenbergReconstruction,
        obs: &ObservationSet,
    ) -> Result<Self> {
        Self::new(
            ensemble.states.clone(),
            rec.operators.clone(),
            obs.derivatives.clone(),
            obs.grid,
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn targets(&self) -> &Array3<f64> {
        &self.targets
    }

    /// Mean squared error over the selected times for encodings `v`, one
    /// row per selected time, plus `dL/dv`.
    fn quadratic_loss(&self, times: &[usize], v: &Array2<f64>) -> (f64, Array2<f64>) {
        let count: usize = times.iter().map(|&j| self.quad[j].count).sum();
        let norm = 1.0 / count as f64;
        let mut total = 0.0;
        let mut grad = Array2::zeros(v.raw_dim());
        for (row, &j) in times.iter().enumerate() {
            let tq = &self.quad[j];
            let vj = v.row(row);
            let mut g = grad.row_mut(row);
            tq.apply(
                vj.as_slice().expect("standard layout"),
                g.as_slice_mut().expect("standard layout"),
            );
            total += vj.dot(&g) - 2.0 * tq.b.dot(&vj) + tq.c;
            g -= &tq.b;
            g *= 2.0 * norm;
        }
        let total = if total < 0.0 { 0.0 } else { total };
        (total * norm, grad)
    }

    /// Loss of an arbitrary Hamiltonian series on the grid, computed from
    /// explicit commutators.
    pub fn loss_for_series(&self, hh: &OperatorSeries) -> Result<f64> {
        if hh.len() != self.grid.n_samples || hh.n() != self.n {
            return Err(Error::Contract("series does not match the loss context".into()));
        }
        Ok(self.direct_loss(|j| hh.matrices[j].matrix().clone()))
    }

    fn direct_loss(&self, h_at: impl Fn(usize) -> CMatrix) -> f64 {
        let (ns, nk, nt) = self.targets.dim();
        let i = Complex64::new(0.0, 1.0);
        let mut total = 0.0;
        for j in 0..nt {
            let h = h_at(j);
            for k in 0..nk {
                let a = self.a_series[k].matrices[j].matrix();
                let comm = &h * a - a * &h;
                for s in 0..ns {
                    let psi = &self.states[s];
                    let pred = (i * (psi.adjoint() * &comm * psi)[(0, 0)]).re;
                    total += (self.targets[[s, k, j]] - pred).powi(2);
                }
            }
        }
        total / (ns * nk * nt) as f64
    }
}

fn check_params(params: &MlpParameters, ctx: &LossContext) -> Result<()> {
    if params.n != ctx.n || params.output_len() != 1 << (2 * ctx.n) {
        return Err(Error::Contract(format!(
            "network output {} does not match n = {}",
            params.output_len(),
            ctx.n
        )));
    }
    Ok(())
}

/// Mean squared gap between measured and predicted `d<A>/dt`.
pub fn henn_loss(params: &MlpParameters, ctx: &LossContext) -> Result<f64> {
    check_params(params, ctx)?;
    let times = ctx.grid.times();
    let out = params.forward(&times);
    let all: Vec<usize> = (0..times.len()).collect();
    Ok(ctx.quadratic_loss(&all, &out).0)
}

/// Same value as [`henn_loss`], evaluated term by term from decoded matrices.
pub fn henn_loss_direct(params: &MlpParameters, ctx: &LossContext) -> Result<f64> {
    check_params(params, ctx)?;
    let out = params.forward(&ctx.grid.times());
    Ok(ctx.direct_loss(|j| {
        decode_slice(ctx.n, out.row(j).as_slice().expect("standard layout")).into_matrix()
    }))
}

fn loss_and_grad(params: &MlpParameters, ctx: &LossContext, times: &[usize]) -> (f64, MlpGradient) {
    let t: Vec<f64> = times.iter().map(|&j| ctx.grid.time(j)).collect();
    let acts = params.forward_cached(&t);
    let (loss, d_out) = ctx.quadratic_loss(times, acts.last().expect("output layer"));
    (loss, params.backward(&acts, d_out))
}

/// Exact gradient of [`henn_loss`].
pub fn henn_grad(params: &MlpParameters, ctx: &LossContext) -> Result<MlpGradient> {
    check_params(params, ctx)?;
    let all: Vec<usize> = (0..ctx.grid.n_samples).collect();
    Ok(loss_and_grad(params, ctx, &all).1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub full_batch: bool,
    /// Time points per mini-batch when `full_batch` is off.
    pub batch_times: usize,
    pub hidden: Vec<usize>,
    /// Input map; defaults to sending the grid onto `[-1, 1]`.
    pub time_scale: Option<TimeScale>,
    /// Multiplier on the output layer's initialization bound. The default
    /// starts the output layer at zero, so training begins from `H = 0`.
    pub output_init_scale: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 5000,
            optimizer: OptimizerKind::Adam,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            full_batch: true,
            batch_times: 10,
            hidden: vec![200, 200],
            time_scale: None,
            output_init_scale: 0.0,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    /// Defaults with the epoch budget for `n` spins.
    pub fn for_spins(n: usize) -> Self {
        Self {
            epochs: if n <= 3 { 5000 } else { 10000 },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Input(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        if self.epochs < 1 {
            return Err(Error::Input("epochs must be >= 1".into()));
        }
        if !self.full_batch && self.batch_times < 1 {
            return Err(Error::Input("mini-batch size must be >= 1".into()));
        }
        if !(self.output_init_scale >= 0.0) || !self.output_init_scale.is_finite() {
            return Err(Error::Input("output init scale must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return Err(Error::Input("invalid Adam moment parameters".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainingOutcome {
    /// Parameters with the lowest full loss seen.
    pub params: MlpParameters,
    /// Full loss at the start of every epoch, then once after the last update.
    pub history: Vec<f64>,
    pub best_epoch: usize,
    pub best_loss: f64,
}

/// Trains a freshly initialized network on `ctx`.
pub fn train(ctx: &LossContext, config: &TrainingConfig) -> Result<TrainingOutcome> {
    config.validate()?;
    let scale = config.time_scale.unwrap_or_else(|| TimeScale::for_grid(&ctx.grid));
    let init = MlpParameters::init_scaled(ctx.n, &config.hidden, scale, config.seed, config.output_init_scale)?;
    train_from(ctx, config, init)
}

/// Trains starting from `params`.
pub fn train_from(ctx: &LossContext, config: &TrainingConfig, mut params: MlpParameters) -> Result<TrainingOutcome> {
    config.validate()?;
    check_params(&params, ctx)?;
    let nt = ctx.grid.n_samples;
    let all: Vec<usize> = (0..nt).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(split_seed(config.seed, 0x5eed));

    let mut flat = params.flatten();
    let mut m = vec![0.0; flat.len()];
    let mut v = vec![0.0; flat.len()];
    let mut step = 0i32;
    let mut history = Vec::with_capacity(config.epochs + 1);
    let mut best = (f64::INFINITY, 0usize, params.clone());

    let mut apply = |flat: &mut Vec<f64>, grad: &[f64], step: i32| match config.optimizer {
        OptimizerKind::Sgd => {
            for (p, g) in flat.iter_mut().zip(grad) {
                *p -= config.learning_rate * g;
            }
        }
        OptimizerKind::Adam => {
            let c1 = 1.0 - config.beta1.powi(step);
            let c2 = 1.0 - config.beta2.powi(step);
            for i in 0..flat.len() {
                m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * grad[i];
                v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * grad[i] * grad[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                flat[i] -= config.learning_rate * mh / (vh.sqrt() + config.epsilon);
            }
        }
    };

    for epoch in 0..config.epochs {
        let loss = if config.full_batch {
            let (loss, grad) = loss_and_grad(&params, ctx, &all);
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            if loss < best.0 {
                best = (loss, epoch, params.clone());
            }
            step += 1;
            apply(&mut flat, &grad.flatten(), step);
            params.set_flat(&flat)?;
            loss
        } else {
            let loss = henn_loss(&params, ctx)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            if loss < best.0 {
                best = (loss, epoch, params.clone());
            }
            let mut order = all.clone();
            order.shuffle(&mut shuffle_rng);
            for batch in order.chunks(config.batch_times) {
                let (_, grad) = loss_and_grad(&params, ctx, batch);
                step += 1;
                apply(&mut flat, &grad.flatten(), step);
                params.set_flat(&flat)?;
            }
            loss
        };
        history.push(loss);
    }
    let last = henn_loss(&params, ctx)?;
    if !last.is_finite() {
        return Err(Error::Divergence { epoch: config.epochs });
    }
    history.push(last);
    if last < best.0 {
        best = (last, config.epochs, params);
    }
    Ok(TrainingOutcome {
        params: best.2,
        history,
        best_epoch: best.1,
        best_loss: best.0,
    })
}

/// Trace-free network prediction of `H^H` on the grid.
pub fn predict_heisenberg(params: &MlpParameters, grid: &TimeGrid) -> Result<OperatorSeries> {
    if !params.is_finite() {
        return Err(Error::Numeric("network parameters are not finite".into()));
    }
    let out = params.forward(&grid.times());
    Ok(OperatorSeries {
        grid: *grid,
        label: "H^H".into(),
        matrices: out
            .rows()
            .into_iter()
            .map(|row| remove_trace(decode_slice(params.n, row.as_slice().expect("standard layout"))))
            .collect(),
    })
}

/// Schrodinger-picture prediction, converting with the network itself as the
/// source so midpoints are exact network outputs.
pub fn predict_schrodinger(params: &MlpParameters, grid: &TimeGrid, substeps: usize) -> Result<OperatorSeries> {
    if !params.is_finite() {
        return Err(Error::Numeric("network parameters are not finite".into()));
    }
    let mut series = heisenberg_to_schrodinger_with(grid, substeps, |t| {
        let out = params.forward(&[t]);
        remove_trace(decode_slice(params.n, out.row(0).as_slice().expect("standard layout"))).into_matrix()
    })?;
    series.label = "H".into();
    Ok(series)
}

/// Pauli coefficients of every matrix, one row per time.
pub fn coefficient_series(series: &OperatorSeries) -> Array2<f64> {
    let len = 1usize << (2 * series.n());
    let mut out = Array2::zeros((series.len(), len));
    for (j, h) in series.matrices.iter().enumerate() {
        let c = decompose_matrix(h.matrix());
        out.row_mut(j).assign(&Array1::from(c.into_values()));
    }
    out
}

/// Hamiltonian series from coefficient rows.
pub fn series_from_coefficients(n: usize, grid: &TimeGrid, coeffs: &Array2<f64>, label: &str) -> OperatorSeries {
    OperatorSeries {
        grid: *grid,
        label: label.into(),
        matrices: coeffs
            .rows()
            .into_iter()
            .map(|row| reconstruct(&PauliCoefficients::new(n, row.to_vec()).expect("row length 4^n")))
            .collect(),
    }
}

#[derive(Clone, Debug)]
pub struct EnsemblePrediction {
    pub grid: TimeGrid,
    /// Mean Schrodinger-picture Pauli coefficients, `[time, basis]`.
    pub mean: Array2<f64>,
    /// Population variance across rounds, `[time, basis]`.
    pub variance: Array2<f64>,
    pub rounds: Vec<TrainingOutcome>,
}

impl EnsemblePrediction {
    pub fn mean_series(&self, n: usize) -> OperatorSeries {
        series_from_coefficients(n, &self.grid, &self.mean, "H")
    }
}

/// Seed for training round `round`; round 0 keeps the configured seed.
pub fn round_seed(seed: u64, round: usize) -> u64 {
    if round == 0 {
        seed
    } else {
        split_seed(seed, round as u64)
    }
}

/// Trains `rounds` independently seeded networks and averages their
/// Schrodinger-picture Pauli coefficients.
pub fn ensemble_train(
    ctx: &LossContext,
    config: &TrainingConfig,
    rounds: usize,
    conversion_substeps: usize,
) -> Result<EnsemblePrediction> {
    if rounds < 1 {
        return Err(Error::Input("rounds must be >= 1".into()));
    }
    let results: Vec<(TrainingOutcome, Array2<f64>)> = (0..rounds)
        .into_par_iter()
        .map(|r| {
            let cfg = TrainingConfig {
                seed: round_seed(config.seed, r),
                ..config.clone()
            };
            let outcome = train(ctx, &cfg)?;
            let h = predict_schrodinger(&outcome.params, &ctx.grid, conversion_substeps)?;
            Ok((outcome, coefficient_series(&h)))
        })
        .collect::<Result<_>>()?;

    let count = results.len() as f64;
    let shape = results[0].1.raw_dim();
    let mut mean = Array2::zeros(shape);
    for (_, c) in &results {
        mean += c;
    }
    mean /= count;
    let mut variance = Array2::zeros(shape);
    for (_, c) in &results {
        let d = c - &mean;
        variance += &(&d * &d);
    }
    variance /= count;
    Ok(EnsemblePrediction {
        grid: ctx.grid,
        mean,
        variance,
        rounds: results.into_iter().map(|(o, _)| o).collect(),
    })
}
