//! Coupling profiles, link classification and tomography fidelities.

use std::collections::BTreeSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dynamics::OperatorSeries;
use crate::error::{Error, Result};
use crate::henn::coefficient_series;
use crate::models::{LinkClass, SubspacePartition};
use crate::pauli::PauliString;

pub const DEFAULT_THRESHOLD: f64 = 0.10;

/// Time-integrated absolute Pauli coefficients, identity excluded.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingProfile {
    pub n: usize,
    /// `cbar[i - 1]` belongs to basis index `i`.
    pub cbar: Vec<f64>,
    pub normalized: Vec<f64>,
}

impl CouplingProfile {
    /// Profile from raw integrals.
    pub fn from_cbar(n: usize, cbar: Vec<f64>) -> Result<Self> {
        if cbar.len() + 1 != 1 << (2 * n) {
            return Err(Error::Size(format!("{} profile entries for n = {n}", cbar.len())));
        }
        let max = cbar.iter().copied().fold(0.0, f64::max);
        if !(max > 0.0) || !max.is_finite() {
            return Err(Error::DegeneratePrediction(
                "every coupling integrates to zero".into(),
            ));
        }
        let normalized = cbar.iter().map(|&c| if c == max { 1.0 } else { c / max }).collect();
        Ok(Self { n, cbar, normalized })
    }

    /// Normalized value at basis index `index >= 1`.
    pub fn value(&self, index: usize) -> f64 {
        self.normalized[index - 1]
    }
}

/// Trapezoid integral of `|c_i(t)|` for every non-identity index.
pub fn profile_from_coefficients(n: usize, times: &[f64], coeffs: &Array2<f64>) -> Result<CouplingProfile> {
    let (nt, len) = coeffs.dim();
    if nt == 0 || nt != times.len() || len != 1 << (2 * n) {
        return Err(Error::Size("coefficient series does not match its grid".into()));
    }
    let cbar = (1..len)
        .map(|i| {
            times
                .windows(2)
                .enumerate()
                .map(|(j, w)| 0.5 * (w[1] - w[0]) * (coeffs[[j, i]].abs() + coeffs[[j + 1, i]].abs()))
                .sum()
        })
        .collect();
    CouplingProfile::from_cbar(n, cbar)
}

pub fn coupling_profile(h: &OperatorSeries) -> Result<CouplingProfile> {
    if h.is_empty() {
        return Err(Error::Input("empty Hamiltonian series".into()));
    }
    profile_from_coefficients(h.n(), &h.times(), &coefficient_series(h))
}

/// Indices whose normalized value is strictly above `threshold`.
pub fn classify_links(profile: &CouplingProfile, threshold: f64) -> BTreeSet<usize> {
    profile
        .normalized
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > threshold)
        .map(|(i, _)| i + 1)
        .collect()
}

/// Fraction of the `4^n - 1` links classified correctly.
pub fn fidelity_t(predicted: &BTreeSet<usize>, truth: &BTreeSet<usize>, n: usize) -> f64 {
    let total = (1usize << (2 * n)) - 1;
    let missing = predicted.symmetric_difference(truth).count();
    (total - missing) as f64 / total as f64
}

/// Fraction of hidden-only links classified correctly.
pub fn fidelity_tprime(
    predicted: &BTreeSet<usize>,
    truth: &BTreeSet<usize>,
    partition: &SubspacePartition,
) -> Result<f64> {
    let hidden = partition.hidden_count();
    if hidden == 0 {
        return Err(Error::UndefinedMetric("no hidden spins".into()));
    }
    let total = (1usize << (2 * hidden)) - 1;
    let missing = partition
        .indices_of(LinkClass::Hidden)
        .filter(|i| predicted.contains(i) != truth.contains(i))
        .count();
    Ok((total - missing) as f64 / total as f64)
}

/// Agreement of the local Hamiltonian (classes o and i):
/// `1 - mean ||dH(t)||_F / mean ||H(t)||_F`, clamped at zero.
pub fn fidelity_local(pred: &OperatorSeries, truth: &OperatorSeries, partition: &SubspacePartition) -> Result<f64> {
    if pred.len() != truth.len() || pred.grid != truth.grid {
        return Err(Error::Size("prediction and truth are on different grids".into()));
    }
    let local: Vec<usize> = (1..partition.classes().len())
        .filter(|&i| matches!(partition.class_of(i), LinkClass::Observed | LinkClass::Interaction))
        .collect();
    let cp = coefficient_series(pred);
    let ct = coefficient_series(truth);
    let dim = (1usize << pred.n()) as f64;
    // Pauli strings are orthogonal with squared Frobenius norm 2^n.
    let frob = |row: &dyn Fn(usize) -> f64| (local.iter().map(|&i| row(i).powi(2)).sum::<f64>() * dim).sqrt();
    let nt = pred.len() as f64;
    let mut diff = 0.0;
    let mut reference = 0.0;
    for j in 0..pred.len() {
        diff += frob(&|i| cp[[j, i]] - ct[[j, i]]);
        reference += frob(&|i| ct[[j, i]]);
    }
    if reference == 0.0 {
        return Err(Error::UndefinedMetric("true local Hamiltonian vanishes".into()));
    }
    Ok((1.0 - (diff / nt) / (reference / nt)).max(0.0))
}

/// Serialized form of one tomography run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TomographyReport {
    pub n: usize,
    pub observed: Vec<usize>,
    pub threshold: f64,
    pub labels: Vec<String>,
    /// Canonical order, identity at position 0 fixed to 0.
    pub normalized_profile: Vec<f64>,
    pub predicted_links: Vec<usize>,
    pub truth_links: Vec<usize>,
    pub f_t: f64,
    pub f_tprime: Option<f64>,
    pub f_local: Option<f64>,
    pub seed: Option<u64>,
    pub config_hash: Option<String>,
}

impl TomographyReport {
    /// Scores a profile against the truth. `local` carries the predicted and
    /// true Schrodinger series when `F_local` should be computed.
    pub fn build(
        profile: &CouplingProfile,
        threshold: f64,
        truth: &BTreeSet<usize>,
        partition: &SubspacePartition,
        local: Option<(&OperatorSeries, &OperatorSeries)>,
    ) -> Result<Self> {
        let n = profile.n;
        let predicted = classify_links(profile, threshold);
        let f_tprime = match fidelity_tprime(&predicted, truth, partition) {
            Ok(v) => Some(v),
            Err(Error::UndefinedMetric(_)) => None,
            Err(e) => return Err(e),
        };
        let f_local = match local {
            Some((p, t)) => match fidelity_local(p, t, partition) {
                Ok(v) => Some(v),
                Err(Error::UndefinedMetric(_)) => None,
                Err(e) => return Err(e),
            },
            None => None,
        };
        let mut normalized_profile = vec![0.0];
        normalized_profile.extend(&profile.normalized);
        Ok(Self {
            n,
            observed: partition.observed().iter().copied().collect(),
            threshold,
            labels: (0..1usize << (2 * n)).map(|i| PauliString::from_index(n, i).label()).collect(),
            normalized_profile,
            predicted_links: predicted.iter().copied().collect(),
            truth_links: truth.iter().copied().collect(),
            f_t: fidelity_t(&predicted, truth, n),
            f_tprime,
            f_local,
            seed: None,
            config_hash: None,
        })
    }

    pub fn predicted_set(&self) -> BTreeSet<usize> {
        self.predicted_links.iter().copied().collect()
    }

    pub fn truth_set(&self) -> BTreeSet<usize> {
        self.truth_links.iter().copied().collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
