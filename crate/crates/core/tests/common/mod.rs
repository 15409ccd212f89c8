#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spin_tomography::dynamics::{
    default_observables, gen_initial_states, hamiltonian_series, heisenberg_to_schrodinger_with,
    measure_expectations, true_heisenberg_hamiltonian, true_heisenberg_observables, DerivativeMode, TimeGrid,
};
use spin_tomography::henn::{henn_loss_direct, LossContext, MlpParameters};
use spin_tomography::models::{gen_long_range, gen_two_body, HamiltonianSpec, NetworkTopology};

pub const STEP: f64 = 1e-5;

pub fn cyclic(n: usize, seed: u64) -> HamiltonianSpec {
    let topo = NetworkTopology::cyclic(n).unwrap();
    gen_two_body(&topo, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

/// Small loss context on exact Heisenberg observables.
pub fn small_context(n: usize, seed: u64) -> LossContext {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = if n == 1 {
        gen_long_range(1, &mut rng).unwrap()
    } else {
        gen_two_body(&NetworkTopology::cyclic(n).unwrap(), &mut rng).unwrap()
    };
    let ens = gen_initial_states(n, 6, &mut rng).unwrap();
    let grid = TimeGrid::new(0.0, 5.0, 5, 10).unwrap().with_adequate_substeps(spec.compile().norm_bound());
    let observables = default_observables(n, &[1]).unwrap();
    let obs = measure_expectations(&spec, &ens, &[1], &observables, &grid, DerivativeMode::Exact).unwrap();
    let a = true_heisenberg_observables(&spec, &observables, &grid).unwrap();
    LossContext::new(ens.states, a, obs.derivatives, grid).unwrap()
}

/// Central differences of the commutator-form loss, an implementation
/// independent of the one being differentiated.
pub fn numeric_gradient(params: &MlpParameters, ctx: &LossContext) -> Vec<f64> {
    let base = params.flatten();
    let mut probe = params.clone();
    (0..base.len())
        .map(|i| {
            let mut x = base.clone();
            x[i] = base[i] + STEP;
            probe.set_flat(&x).unwrap();
            let up = henn_loss_direct(&probe, ctx).unwrap();
            x[i] = base[i] - STEP;
            probe.set_flat(&x).unwrap();
            let down = henn_loss_direct(&probe, ctx).unwrap();
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / scale.max(1e-300)
}

/// Converts the exact Heisenberg Hamiltonian back with `substeps` midpoint
/// steps per interval; the source is read off a propagator grid that contains
/// every point the conversion samples.
pub fn picture_round_trip_error(spec: &HamiltonianSpec, grid: &TimeGrid, substeps: usize) -> f64 {
    let half = grid.spacing() / (2 * substeps) as f64;
    let fine = TimeGrid::new(grid.t_start, grid.t_end, (grid.n_samples - 1) * 2 * substeps + 1, 1)
        .unwrap()
        .with_adequate_substeps(spec.compile().norm_bound());
    let dense = true_heisenberg_hamiltonian(spec, &fine).unwrap();
    let back = heisenberg_to_schrodinger_with(grid, substeps, |t| {
        let k = ((t - grid.t_start) / half).round() as usize;
        dense.matrices[k].matrix().clone()
    })
    .unwrap();
    back.max_abs_diff(&hamiltonian_series(spec, grid))
}
