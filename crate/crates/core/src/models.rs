//! Generative models of time-dependent spin-network Hamiltonians
//! `H(t) = h1 + f(t) h2` and the ground truth derived from them.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pauli::{
    check_spin_count, decompose_matrix, pauli_matrix, reconstruct, CMatrix, HermitianOperator,
    PauliCoefficients, PauliString,
};

/// `f(t) = sin(omega t + 2 pi phi)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrivingFunction {
    pub omega: f64,
    pub phi: f64,
}

impl DrivingFunction {
    pub fn new(omega: f64, phi: f64) -> Self {
        Self { omega, phi }
    }

    /// Identically zero drive.
    pub fn off() -> Self {
        Self { omega: 0.0, phi: 0.0 }
    }

    pub fn random(rng: &mut impl Rng) -> Self {
        let omega = rng.random::<f64>();
        let phi = rng.random::<f64>();
        Self { omega, phi }
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.omega * t + 2.0 * PI * self.phi).sin()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyTag {
    Chain,
    Cyclic,
    Tree,
    Custom,
}

impl FromStr for TopologyTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chain" => Ok(Self::Chain),
            "cyclic" => Ok(Self::Cyclic),
            "tree" => Ok(Self::Tree),
            "custom" => Ok(Self::Custom),
            other => Err(Error::Input(format!("unknown topology `{other}`"))),
        }
    }
}

impl fmt::Display for TopologyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Chain => "chain",
            Self::Cyclic => "cyclic",
            Self::Tree => "tree",
            Self::Custom => "custom",
        })
    }
}

/// Undirected spin-spin adjacency. Spins are numbered from 1 in the public
/// API; the matrix itself is 0-based.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkTopology {
    n: usize,
    adjacency: Vec<Vec<u8>>,
    tag: TopologyTag,
}

impl NetworkTopology {
    pub fn custom(adjacency: Vec<Vec<u8>>) -> Result<Self> {
        Self::with_tag(adjacency, TopologyTag::Custom)
    }

    fn with_tag(adjacency: Vec<Vec<u8>>, tag: TopologyTag) -> Result<Self> {
        let n = adjacency.len();
        if n < 1 {
            return Err(Error::Size("topology needs at least one spin".into()));
        }
        check_spin_count(n)?;
        for (i, row) in adjacency.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Size(format!("adjacency row {i} has length {}", row.len())));
            }
            if row[i] != 0 {
                return Err(Error::Input(format!("adjacency has a self-loop at spin {}", i + 1)));
            }
            for (j, &w) in row.iter().enumerate() {
                if w > 1 {
                    return Err(Error::Input(format!("adjacency entry ({i},{j}) = {w} is not binary")));
                }
                if adjacency[j][i] != w {
                    return Err(Error::Input(format!("adjacency is not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(Self { n, adjacency, tag })
    }

    fn from_edges(n: usize, edges: &[(usize, usize)], tag: TopologyTag) -> Result<Self> {
        check_spin_count(n)?;
        let mut adjacency = vec![vec![0u8; n]; n];
        for &(a, b) in edges {
            adjacency[a][b] = 1;
            adjacency[b][a] = 1;
        }
        Self::with_tag(adjacency, tag)
    }

    pub fn empty(n: usize) -> Result<Self> {
        Self::from_edges(n, &[], TopologyTag::Custom)
    }

    pub fn chain(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::from_edges(n, &edges, TopologyTag::Chain)
    }

    /// Ring through all spins; for `n = 2` this is a single edge.
    pub fn cyclic(n: usize) -> Result<Self> {
        let mut edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        if n > 2 {
            edges.push((n - 1, 0));
        }
        Self::from_edges(n, &edges, TopologyTag::Cyclic)
    }

    /// Star centred on spin 1.
    pub fn tree(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (0, i)).collect();
        Self::from_edges(n, &edges, TopologyTag::Tree)
    }

    pub fn from_tag(tag: TopologyTag, n: usize) -> Result<Self> {
        match tag {
            TopologyTag::Chain => Self::chain(n),
            TopologyTag::Cyclic => Self::cyclic(n),
            TopologyTag::Tree => Self::tree(n),
            TopologyTag::Custom => Err(Error::Input(
                "custom topology needs an explicit adjacency matrix".into(),
            )),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn tag(&self) -> TopologyTag {
        self.tag
    }

    pub fn adjacency(&self) -> &[Vec<u8>] {
        &self.adjacency
    }

    /// 0-based spins `a`, `b`.
    pub fn connected(&self, a: usize, b: usize) -> bool {
        self.adjacency[a][b] == 1
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().flatten().filter(|&&w| w == 1).count() / 2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    TwoBody,
    LongRange,
    GateStatic,
    GateTimedep,
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_body" => Ok(Self::TwoBody),
            "long_range" => Ok(Self::LongRange),
            "gate_static" => Ok(Self::GateStatic),
            "gate_timedep" => Ok(Self::GateTimedep),
            other => Err(Error::Input(format!("unknown Hamiltonian family `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    Toffoli,
    Fredkin,
}

impl FromStr for Gate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "toffoli" => Ok(Self::Toffoli),
            "fredkin" => Ok(Self::Fredkin),
            other => Err(Error::Input(format!("unknown gate `{other}`"))),
        }
    }
}

/// Generative description of `H(t) = reconstruct(c1) + f(t) reconstruct(c2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianSpec {
    pub n: usize,
    pub family: Family,
    pub topology: Option<NetworkTopology>,
    pub gate: Option<Gate>,
    pub c1: PauliCoefficients,
    pub c2: PauliCoefficients,
    pub driving: DrivingFunction,
    pub seed: Option<u64>,
}

/// Dense `h1` and `h2` ready for repeated evaluation.
#[derive(Clone, Debug)]
pub struct CompiledHamiltonian {
    h1: CMatrix,
    h2: CMatrix,
    driving: DrivingFunction,
}

impl CompiledHamiltonian {
    pub fn dim(&self) -> usize {
        self.h1.nrows()
    }

    pub fn at(&self, t: f64) -> CMatrix {
        let f = self.driving.eval(t);
        if f == 0.0 {
            self.h1.clone()
        } else {
            &self.h1 + &self.h2 * Complex64::new(f, 0.0)
        }
    }

    /// Largest spectral norm of `H(t)` over all `t`. The norm is convex in
    /// the drive value, so the maximum over `f in [-1, 1]` sits at an endpoint.
    pub fn norm_bound(&self) -> f64 {
        let plus = spectral_radius(&(&self.h1 + &self.h2));
        let minus = spectral_radius(&(&self.h1 - &self.h2));
        plus.max(minus)
    }
}

fn spectral_radius(m: &CMatrix) -> f64 {
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
}

impl HamiltonianSpec {
    pub fn compile(&self) -> CompiledHamiltonian {
        CompiledHamiltonian {
            h1: reconstruct(&self.c1).into_matrix(),
            h2: reconstruct(&self.c2).into_matrix(),
            driving: self.driving,
        }
    }

    /// No couplings at all.
    pub fn empty(n: usize) -> Result<Self> {
        check_spin_count(n)?;
        Ok(Self {
            n,
            family: Family::TwoBody,
            topology: Some(NetworkTopology::empty(n)?),
            gate: None,
            c1: PauliCoefficients::zeros(n),
            c2: PauliCoefficients::zeros(n),
            driving: DrivingFunction::off(),
            seed: None,
        })
    }

    /// Purely driven Hamiltonian `sin(t) * sum(labels)`.
    pub fn driven(labels: &[&str], topology: NetworkTopology) -> Result<Self> {
        let n = topology.n();
        let mut c2 = PauliCoefficients::zeros(n);
        for label in labels {
            let ps = PauliString::from_label(label)?;
            if ps.n() != n {
                return Err(Error::Size(format!("label {label} does not have {n} spins")));
            }
            c2.set(ps.index(), 1.0);
        }
        Ok(Self {
            n,
            family: Family::TwoBody,
            topology: Some(topology),
            gate: None,
            c1: PauliCoefficients::zeros(n),
            c2,
            driving: DrivingFunction::new(1.0, 0.0),
            seed: None,
        })
    }

    /// `H(t) = sigma_x sin t` on a single spin.
    pub fn driven_single_spin() -> Self {
        Self::driven(&["X"], NetworkTopology::empty(1).expect("n = 1 is valid"))
            .expect("static labels are valid")
    }

    /// Three-spin chain driven by `sin t`: x and y fields on every spin, plus
    /// `sigma_l sigma_m` couplings with `l in {x,y,z}`, `m in {x,y}` on the
    /// bonds 1-2 and 2-3.
    pub fn driven_three_spin_chain() -> Self {
        let mut labels = Vec::new();
        for spin in 0..3 {
            for comp in ['X', 'Y'] {
                let mut s = ['I'; 3];
                s[spin] = comp;
                labels.push(s.iter().collect::<String>());
            }
        }
        for left in 0..2 {
            for l in ['X', 'Y', 'Z'] {
                for m in ['X', 'Y'] {
                    let mut s = ['I'; 3];
                    s[left] = l;
                    s[left + 1] = m;
                    labels.push(s.iter().collect::<String>());
                }
            }
        }
        let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
        Self::driven(&refs, NetworkTopology::chain(3).expect("n = 3 is valid"))
            .expect("static labels are valid")
    }
}

/// Random two-body network: every single-spin term and every pair term on an
/// edge gets independent uniform `[0, 1)` coefficients in both `h1` and `h2`.
/// Sampling order: all `c1` values in canonical basis order, then all `c2`
/// values, then the drive.
pub fn gen_two_body(topology: &NetworkTopology, rng: &mut impl Rng) -> Result<HamiltonianSpec> {
    let n = topology.n();
    check_spin_count(n)?;
    let allowed = two_body_links(topology);
    let mut c1 = PauliCoefficients::zeros(n);
    let mut c2 = PauliCoefficients::zeros(n);
    for &i in &allowed {
        c1.set(i, rng.random::<f64>());
    }
    for &i in &allowed {
        c2.set(i, rng.random::<f64>());
    }
    let driving = DrivingFunction::random(rng);
    Ok(HamiltonianSpec {
        n,
        family: Family::TwoBody,
        topology: Some(topology.clone()),
        gate: None,
        c1,
        c2,
        driving,
        seed: None,
    })
}

/// Basis indices a two-body network on `topology` may populate.
pub fn two_body_links(topology: &NetworkTopology) -> Vec<usize> {
    let n = topology.n();
    (1..1usize << (2 * n))
        .filter(|&i| {
            let ps = PauliString::from_index(n, i);
            let support: Vec<usize> = ps.support().collect();
            match support.as_slice() {
                [_] => true,
                [a, b] => topology.connected(*a, *b),
                _ => false,
            }
        })
        .collect()
}

/// Random long-range network. For every non-identity index in canonical
/// order one presence draw `u < 1/2` is made, and a present link then draws
/// its `c1` and `c2` values. The drive is drawn last.
pub fn gen_long_range(n: usize, rng: &mut impl Rng) -> Result<HamiltonianSpec> {
    check_spin_count(n)?;
    let mut c1 = PauliCoefficients::zeros(n);
    let mut c2 = PauliCoefficients::zeros(n);
    for i in 1..1usize << (2 * n) {
        if rng.random::<f64>() < 0.5 {
            c1.set(i, rng.random::<f64>());
            c2.set(i, rng.random::<f64>());
        }
    }
    let driving = DrivingFunction::random(rng);
    Ok(HamiltonianSpec {
        n,
        family: Family::LongRange,
        topology: None,
        gate: None,
        c1,
        c2,
        driving,
        seed: None,
    })
}

pub fn eval_hamiltonian(spec: &HamiltonianSpec, t: f64) -> HermitianOperator {
    HermitianOperator::symmetrized(spec.compile().at(t))
}

fn pauli(label: &str) -> CMatrix {
    pauli_matrix(&PauliString::from_label(label).expect("static label")).into_matrix()
}

/// Static gate Hamiltonian as a dense matrix.
pub fn gate_matrix(gate: Gate) -> CMatrix {
    let id = CMatrix::identity(8, 8);
    let scale = Complex64::new(PI / 8.0, 0.0);
    match gate {
        Gate::Toffoli => {
            (&id - pauli("ZII")) * (&id - pauli("IZI")) * (&id - pauli("IIX")) * scale
        }
        Gate::Fredkin => {
            let exchange = pauli("IXX") + pauli("IYY") + pauli("IZZ");
            (&id - pauli("ZII")) * (&id - exchange) * scale
        }
    }
}

/// `timedep = false`: `H = H_gate`. `timedep = true`:
/// `H(t) = (pi/2) sin(pi t) H_gate`, whose pulse area on `[0, 1]` is one, so
/// both variants implement the gate at `t = 1`.
pub fn gate_hamiltonian(gate: Gate, timedep: bool) -> HamiltonianSpec {
    let mut coeffs = decompose_matrix(&gate_matrix(gate));
    for v in coeffs.values_mut() {
        if v.abs() < 1e-14 {
            *v = 0.0;
        }
    }
    let zeros = PauliCoefficients::zeros(3);
    let (family, c1, c2, driving) = if timedep {
        let mut scaled = coeffs;
        for v in scaled.values_mut() {
            *v *= PI / 2.0;
        }
        (Family::GateTimedep, zeros, scaled, DrivingFunction::new(PI, 0.0))
    } else {
        (Family::GateStatic, coeffs, zeros, DrivingFunction::off())
    };
    HamiltonianSpec {
        n: 3,
        family,
        topology: None,
        gate: Some(gate),
        c1,
        c2,
        driving,
        seed: None,
    }
}

/// `X0(t) = 1/2 [[1 + e^{i pi t}, 1 - e^{i pi t}], [1 - e^{i pi t}, 1 + e^{i pi t}]]`.
pub fn flip_block(t: f64) -> CMatrix {
    let e = Complex64::from_polar(1.0, PI * t);
    let one = Complex64::new(1.0, 0.0);
    let half = Complex64::new(0.5, 0.0);
    CMatrix::from_row_slice(2, 2, &[(one + e) * half, (one - e) * half, (one - e) * half, (one + e) * half])
}

/// Block form of the gate evolution: `I6 (+) X0(t)` for Toffoli and
/// `I5 (+) X0(t) (+) 1` for Fredkin. The Schrodinger propagator
/// `exp(-i H_gate t)` equals the complex conjugate of this matrix; the two
/// coincide at `t = 0` and `t = 1`.
pub fn gate_unitary(gate: Gate, t: f64) -> CMatrix {
    let mut u = DMatrix::identity(8, 8);
    let start = match gate {
        Gate::Toffoli => 6,
        Gate::Fredkin => 5,
    };
    u.view_mut((start, start), (2, 2)).copy_from(&flip_block(t));
    u
}

/// Non-identity indices with a non-zero coefficient in `c1` or `c2`.
pub fn true_link_set(spec: &HamiltonianSpec) -> BTreeSet<usize> {
    spec.c1
        .values()
        .iter()
        .zip(spec.c2.values())
        .enumerate()
        .skip(1)
        .filter(|(_, (a, b))| a.abs() + b.abs() > 0.0)
        .map(|(i, _)| i)
        .collect()
}

/// Which part of `H = H_o + H_i + H_h` a basis string belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkClass {
    Identity,
    /// Acts only on observed spins.
    Observed,
    /// Couples observed and hidden spins.
    Interaction,
    /// Acts only on hidden spins.
    Hidden,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubspacePartition {
    n: usize,
    /// 1-based spin numbers.
    observed: BTreeSet<usize>,
    classes: Vec<LinkClass>,
}

impl SubspacePartition {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn observed(&self) -> &BTreeSet<usize> {
        &self.observed
    }

    pub fn hidden_count(&self) -> usize {
        self.n - self.observed.len()
    }

    pub fn class_of(&self, index: usize) -> LinkClass {
        self.classes[index]
    }

    pub fn classes(&self) -> &[LinkClass] {
        &self.classes
    }

    pub fn indices_of(&self, class: LinkClass) -> impl Iterator<Item = usize> + '_ {
        self.classes
            .iter()
            .enumerate()
            .filter(move |(_, &c)| c == class)
            .map(|(i, _)| i)
    }

    pub fn counts(&self) -> BTreeMap<&'static str, usize> {
        let mut out = BTreeMap::new();
        for c in &self.classes {
            let key = match c {
                LinkClass::Identity => "identity",
                LinkClass::Observed => "o",
                LinkClass::Interaction => "i",
                LinkClass::Hidden => "h",
            };
            *out.entry(key).or_insert(0) += 1;
        }
        out
    }
}

/// Classifies every basis index for `n` spins given the observed spins
/// (numbered from 1).
pub fn partition_subspaces(n: usize, observed: &[usize]) -> Result<SubspacePartition> {
    check_spin_count(n)?;
    if observed.is_empty() {
        return Err(Error::Input("observed spin set is empty".into()));
    }
    if let Some(bad) = observed.iter().find(|&&s| s < 1 || s > n) {
        return Err(Error::Input(format!("observed spin {bad} outside 1..={n}")));
    }
    let observed: BTreeSet<usize> = observed.iter().copied().collect();
    let classes = (0..1usize << (2 * n))
        .map(|i| {
            let ps = PauliString::from_index(n, i);
            let (mut on_obs, mut on_hidden) = (false, false);
            for k in ps.support() {
                if observed.contains(&(k + 1)) {
                    on_obs = true;
                } else {
                    on_hidden = true;
                }
            }
            match (on_obs, on_hidden) {
                (false, false) => LinkClass::Identity,
                (true, false) => LinkClass::Observed,
                (true, true) => LinkClass::Interaction,
                (false, true) => LinkClass::Hidden,
            }
        })
        .collect();
    Ok(SubspacePartition {
        n,
        observed,
        classes,
    })
}

/// Portable JSON form of a [`HamiltonianSpec`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpecDocument {
    pub n: usize,
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate: Option<Gate>,
    pub topology_tag: Option<TopologyTag>,
    pub adjacency: Option<Vec<Vec<u8>>>,
    pub omega: f64,
    pub phi: f64,
    pub c1: BTreeMap<String, f64>,
    pub c2: BTreeMap<String, f64>,
    pub seed: Option<u64>,
}

fn sparse(c: &PauliCoefficients) -> BTreeMap<String, f64> {
    c.support().map(|i| (i.to_string(), c.get(i))).collect()
}

fn dense(n: usize, map: &BTreeMap<String, f64>) -> Result<PauliCoefficients> {
    let mut c = PauliCoefficients::zeros(n);
    for (key, &v) in map {
        let i: usize = key
            .parse()
            .map_err(|_| Error::Input(format!("coefficient key `{key}` is not an index")))?;
        if i >= c.values().len() {
            return Err(Error::Size(format!("coefficient index {i} out of range for n = {n}")));
        }
        c.set(i, v);
    }
    Ok(c)
}

impl From<&HamiltonianSpec> for SpecDocument {
    fn from(spec: &HamiltonianSpec) -> Self {
        Self {
            n: spec.n,
            family: spec.family,
            gate: spec.gate,
            topology_tag: spec.topology.as_ref().map(NetworkTopology::tag),
            adjacency: spec.topology.as_ref().map(|t| t.adjacency().to_vec()),
            omega: spec.driving.omega,
            phi: spec.driving.phi,
            c1: sparse(&spec.c1),
            c2: sparse(&spec.c2),
            seed: spec.seed,
        }
    }
}

impl TryFrom<SpecDocument> for HamiltonianSpec {
    type Error = Error;

    fn try_from(doc: SpecDocument) -> Result<Self> {
        check_spin_count(doc.n)?;
        let topology = match doc.adjacency {
            Some(adj) => {
                let tag = doc.topology_tag.unwrap_or(TopologyTag::Custom);
                let topo = NetworkTopology::with_tag(adj, tag)?;
                if topo.n() != doc.n {
                    return Err(Error::Size("adjacency size does not match n".into()));
                }
                Some(topo)
            }
            None => None,
        };
        Ok(Self {
            n: doc.n,
            family: doc.family,
            topology,
            gate: doc.gate,
            c1: dense(doc.n, &doc.c1)?,
            c2: dense(doc.n, &doc.c2)?,
            driving: DrivingFunction::new(doc.omega, doc.phi),
            seed: doc.seed,
        })
    }
}

impl HamiltonianSpec {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SpecDocument::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SpecDocument = serde_json::from_str(text)?;
        doc.try_into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::{hermiticity_error, max_abs_diff};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn links_on_spin(spec_links: &BTreeSet<usize>, n: usize, spin: usize) -> usize {
        spec_links
            .iter()
            .filter(|&&i| {
                let ps = PauliString::from_index(n, i);
                ps.weight() == 2 && ps.indices()[spin] != 0
            })
            .count()
    }

    #[test]
    fn cyclic_three_spin_degree() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = gen_two_body(&NetworkTopology::cyclic(3).unwrap(), &mut rng).unwrap();
        let links = true_link_set(&spec);
        for spin in 0..3 {
            assert_eq!(links_on_spin(&links, 3, spin), 18);
        }
        assert_eq!(links.len(), 9 + 27);
    }

    #[test]
    fn no_edges_only_self_couplings() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = gen_two_body(&NetworkTopology::empty(2).unwrap(), &mut rng).unwrap();
        assert_eq!(spec.c1.support().count(), 6);
        assert_eq!(spec.c2.support().count(), 6);
        assert!(spec.c1.support().all(|i| PauliString::from_index(2, i).weight() == 1));
    }

    #[test]
    fn chain_four_link_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = gen_two_body(&NetworkTopology::chain(4).unwrap(), &mut rng).unwrap();
        assert_eq!(spec.c1.support().count(), 4 * 3 + 3 * 9);
        assert_eq!(spec.c2.support().count(), 39);
        assert_eq!(spec.c1.get(0), 0.0);
        assert!(spec.c1.values().iter().all(|&v| (0.0..1.0).contains(&v)));
        assert!((0.0..1.0).contains(&spec.driving.omega));
    }

    #[test]
    fn tree_is_a_star_on_spin_one() {
        let t = NetworkTopology::tree(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let links = true_link_set(&gen_two_body(&t, &mut rng).unwrap());
        assert_eq!(links_on_spin(&links, 4, 0), 27);
        assert_eq!(links_on_spin(&links, 4, 1), 9);
        assert_eq!(NetworkTopology::chain(4).unwrap().edge_count(), 3);
        assert_eq!(NetworkTopology::cyclic(4).unwrap().edge_count(), 4);
        assert_eq!(NetworkTopology::cyclic(2).unwrap().edge_count(), 1);
    }

    #[test]
    fn topology_validation() {
        assert!(NetworkTopology::custom(vec![]).is_err());
        assert!(NetworkTopology::custom(vec![vec![0, 1], vec![0, 0]]).is_err());
        assert!(NetworkTopology::custom(vec![vec![1]]).is_err());
        assert!(NetworkTopology::from_tag(TopologyTag::Custom, 3).is_err());
    }

    #[test]
    fn long_range_is_deterministic_and_shares_presence() {
        let a = gen_long_range(3, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = gen_long_range(3, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a, b);
        for i in 0..64 {
            assert_eq!(a.c1.get(i) == 0.0, a.c2.get(i) == 0.0);
        }
        assert_eq!(a.c1.get(0), 0.0);
    }

    #[test]
    fn drive_zero_returns_static_part() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut spec = gen_two_body(&NetworkTopology::cyclic(3).unwrap(), &mut rng).unwrap();
        spec.driving = DrivingFunction::new(1.0, 0.0);
        let h = eval_hamiltonian(&spec, 0.0);
        assert_eq!(h, reconstruct(&spec.c1));
    }

    #[test]
    fn single_spin_drive() {
        let spec = HamiltonianSpec::driven_single_spin();
        for &t in &[0.3, 1.7, 4.2] {
            let expected = pauli("X") * Complex64::new(f64::sin(t), 0.0);
            assert!(max_abs_diff(eval_hamiltonian(&spec, t).matrix(), &expected) < 1e-15);
        }
    }

    #[test]
    fn hamiltonian_is_hermitian_at_random_times() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let spec = gen_long_range(3, &mut rng).unwrap();
        let compiled = spec.compile();
        for _ in 0..100 {
            let t = rng.random_range(-10.0..10.0);
            assert!(hermiticity_error(&compiled.at(t)) < 1e-12);
        }
    }

    #[test]
    fn gate_link_counts() {
        for gate in [Gate::Toffoli, Gate::Fredkin] {
            let spec = gate_hamiltonian(gate, false);
            assert_eq!(true_link_set(&spec).len(), 7, "{gate:?}");
            assert_eq!(spec.family, Family::GateStatic);
        }
        let fredkin: BTreeSet<String> = true_link_set(&gate_hamiltonian(Gate::Fredkin, false))
            .into_iter()
            .map(|i| PauliString::from_index(3, i).label())
            .collect();
        let expected: BTreeSet<String> = ["IXX", "IYY", "IZZ", "ZII", "ZXX", "ZYY", "ZZZ"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(fredkin, expected);
        let timedep = gate_hamiltonian(Gate::Toffoli, true);
        assert_eq!(true_link_set(&timedep).len(), 7);
        assert_eq!(eval_hamiltonian(&timedep, 0.0), HermitianOperator::zeros(3));
    }

    #[test]
    fn gate_unitary_blocks() {
        let x = pauli("X");
        assert!(max_abs_diff(&flip_block(1.0), &x) < 1e-15);
        assert!(max_abs_diff(&flip_block(0.0), &CMatrix::identity(2, 2)) < 1e-15);
        let b = flip_block(0.37);
        assert!(max_abs_diff(&(b.adjoint() * &b), &CMatrix::identity(2, 2)) < 1e-12);

        let t1 = gate_unitary(Gate::Toffoli, 1.0);
        assert!((t1[(6, 7)] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((t1[(7, 6)] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert_eq!(t1[(5, 5)], Complex64::new(1.0, 0.0));
        let f1 = gate_unitary(Gate::Fredkin, 1.0);
        assert!((f1[(5, 6)] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert_eq!(f1[(7, 7)], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn gate_unitary_matches_exponential_of_static_hamiltonian() {
        for gate in [Gate::Toffoli, Gate::Fredkin] {
            let h = gate_matrix(gate);
            let eig = h.clone().symmetric_eigen();
            for &t in &[0.0, 0.25, 0.5, 1.0] {
                let phases = eig
                    .eigenvalues
                    .map(|l| Complex64::from_polar(1.0, -l * t));
                let u = &eig.eigenvectors
                    * CMatrix::from_diagonal(&phases)
                    * eig.eigenvectors.adjoint();
                let block_form = gate_unitary(gate, t).map(|z| z.conj());
                assert!(max_abs_diff(&u, &block_form) < 1e-12, "{gate:?} t={t}");
            }
        }
    }

    #[test]
    fn link_sets() {
        assert_eq!(
            true_link_set(&HamiltonianSpec::driven_single_spin()),
            BTreeSet::from([1])
        );
        assert!(true_link_set(&HamiltonianSpec::empty(2).unwrap()).is_empty());

        let chain = true_link_set(&HamiltonianSpec::driven_three_spin_chain());
        let weights: Vec<usize> = chain
            .iter()
            .map(|&i| PauliString::from_index(3, i).weight())
            .collect();
        assert_eq!(weights.iter().filter(|&&w| w == 1).count(), 6);
        assert_eq!(weights.iter().filter(|&&w| w == 2).count(), 12);
        assert!(chain.iter().all(|&i| {
            let p = PauliString::from_index(3, i);
            !(p.indices()[0] != 0 && p.indices()[2] != 0)
        }));
    }

    #[test]
    fn partition_counts() {
        let p = partition_subspaces(3, &[1]).unwrap();
        let counts = p.counts();
        assert_eq!(counts["o"], 3);
        assert_eq!(counts["i"], 45);
        assert_eq!(counts["h"], 15);
        assert_eq!(counts["identity"], 1);

        let p4 = partition_subspaces(4, &[1]).unwrap();
        let local = p4
            .classes()
            .iter()
            .filter(|c| matches!(c, LinkClass::Observed | LinkClass::Interaction))
            .count();
        assert_eq!(local, 3 + 27 + 81 + 81);

        let all = partition_subspaces(3, &[1, 2, 3]).unwrap();
        assert_eq!(all.indices_of(LinkClass::Hidden).count(), 0);

        assert!(partition_subspaces(3, &[]).is_err());
        assert!(partition_subspaces(3, &[4]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut spec = gen_two_body(&NetworkTopology::cyclic(3).unwrap(), &mut rng).unwrap();
        spec.seed = Some(8);
        let back = HamiltonianSpec::from_json(&spec.to_json().unwrap()).unwrap();
        assert_eq!(back, spec);
        let gate = gate_hamiltonian(Gate::Fredkin, true);
        assert_eq!(HamiltonianSpec::from_json(&gate.to_json().unwrap()).unwrap(), gate);
    }
}
