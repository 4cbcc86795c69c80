//! Mach-Zehnder OAM sorter stages and cascaded sorter trees.
//!
//! A stage puts a beam rotator of angle `alpha` and a delay plate of phase
//! `delta_phi_c` in one arm. A photon of azimuthal index `ell` picks up the
//! relative arm phase `phi = ell * alpha + delta_phi_c`; it leaves through
//! port 0 with probability `cos^2(phi / 2)` and through port 1 otherwise.
//!
//! Stage angles are rational multiples of π, so whether an address leaves a
//! stage deterministically is decided in exact arithmetic.

use std::collections::BTreeSet;
use std::fmt;

use num_rational::Ratio;
use num_traits::Zero;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::angle::{reduce_turns, PiAngle};
use crate::error::{Error, Result};
use crate::mode_algebra::reduce_angle;
use crate::polarization::{qwp_apply, JonesVector};

/// Default number of times the synthesis halves the rotation angle.
pub const DEFAULT_MAX_HALVINGS: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SorterStage {
    pub alpha: PiAngle,
    pub delta_phi_c: PiAngle,
    pub applies_qwp: bool,
}

impl SorterStage {
    pub fn new(alpha: PiAngle, delta_phi_c: PiAngle, applies_qwp: bool) -> Result<Self> {
        let in_range = |a: PiAngle| {
            let t = a.turns_of_pi();
            t > Ratio::from_integer(-2) && t <= Ratio::from_integer(2)
        };
        if !in_range(alpha) {
            return Err(Error::invalid("alpha", format!("{alpha} is outside (-2pi, 2pi]")));
        }
        if !in_range(delta_phi_c) {
            return Err(Error::invalid(
                "delta_phi_c",
                format!("{delta_phi_c} is outside (-2pi, 2pi]"),
            ));
        }
        Ok(SorterStage { alpha, delta_phi_c, applies_qwp })
    }

    /// Arm phase in units of π, reduced to (−1, 1].
    pub fn phase_turns(&self, ell: i64) -> Ratio<i64> {
        reduce_turns(self.alpha.turns_of_pi() * ell + self.delta_phi_c.turns_of_pi())
    }

    /// Exit port when the routing is certain.
    pub fn deterministic_port(&self, ell: i64) -> Option<Port> {
        let t = self.phase_turns(ell);
        if t.is_zero() {
            Some(Port::Zero)
        } else if t == Ratio::from_integer(1) {
            Some(Port::One)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Port {
    Zero,
    One,
}

impl Port {
    pub fn index(self) -> usize {
        match self {
            Port::Zero => 0,
            Port::One => 1,
        }
    }
}

/// `ell * alpha + delta_phi_c` reduced to (−π, π].
pub fn stage_phase(ell: i64, stage: &SorterStage) -> f64 {
    let t = stage.phase_turns(ell);
    *t.numer() as f64 / *t.denom() as f64 * std::f64::consts::PI
}

/// Arm phase for arbitrary real angles, reduced to (−π, π].
pub fn interferometer_phase(ell: i64, alpha: f64, delta_phi_c: f64) -> f64 {
    reduce_angle(ell as f64 * alpha + delta_phi_c)
}

/// `(cos^2(phi/2), sin^2(phi/2))`.
pub fn port_probabilities_for_phase(phi: f64) -> (f64, f64) {
    let half = 0.5 * reduce_angle(phi);
    let (s, c) = half.sin_cos();
    (c * c, s * s)
}

pub fn stage_port_probabilities(ell: i64, stage: &SorterStage) -> (f64, f64) {
    match stage.deterministic_port(ell) {
        Some(Port::Zero) => (1.0, 0.0),
        Some(Port::One) => (0.0, 1.0),
        None => port_probabilities_for_phase(stage_phase(ell, stage)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub id: usize,
    pub ells: Vec<i64>,
    pub depth: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SorterNode {
    Stage {
        stage: SorterStage,
        ports: Box<[SorterNode; 2]>,
    },
    Leaf(Leaf),
}

/// Cascade of sorter stages with `ell`-labelled leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct SorterTree {
    root: SorterNode,
    leaves: Vec<Leaf>,
    use_qwp: bool,
}

/// A stage and its position, written as the port sequence from the root
/// (`"root"`, `"0"`, `"01"`, ...).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSpec {
    pub path: String,
    pub alpha: PiAngle,
    pub delta_phi_c: PiAngle,
}

pub const ROOT_PATH: &str = "root";

fn path_string(path: &[usize]) -> String {
    if path.is_empty() {
        ROOT_PATH.to_string()
    } else {
        path.iter().map(|p| char::from(b'0' + *p as u8)).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SynthesisOptions {
    pub max_halvings: u32,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions { max_halvings: DEFAULT_MAX_HALVINGS }
    }
}

fn normalize_addresses(addresses: &[i64]) -> Result<Vec<i64>> {
    if addresses.is_empty() {
        return Err(Error::EmptyAddressSet);
    }
    let set: BTreeSet<i64> = addresses.iter().copied().collect();
    if set.len() != addresses.len() {
        return Err(Error::invalid("addresses", "addresses must be distinct"));
    }
    Ok(set.into_iter().collect())
}

/// Splits `set` by `stage` when every member exits deterministically and
/// both ports receive at least one member.
fn split(set: &[i64], stage: &SorterStage) -> Option<[Vec<i64>; 2]> {
    let mut out = [Vec::new(), Vec::new()];
    for &ell in set {
        out[stage.deterministic_port(ell)?.index()].push(ell);
    }
    (!out[0].is_empty() && !out[1].is_empty()).then_some(out)
}

/// Candidate stages in search order: `alpha = pi / 2^j` for increasing `j`,
/// and for each, delays `-k pi / 2^j` for `k = 0 .. 2^(j+1) - 1`.
fn candidate_stages(max_halvings: u32, applies_qwp: bool) -> impl Iterator<Item = SorterStage> {
    (0..=max_halvings).flat_map(move |j| {
        let denom = 1i64 << j;
        (0..2 * denom).map(move |k| SorterStage {
            alpha: PiAngle::new(1, denom),
            delta_phi_c: PiAngle::new(-k, denom),
            applies_qwp,
        })
    })
}

pub fn build_sorter_tree(addresses: &[i64], use_qwp: bool) -> Result<SorterTree> {
    build_sorter_tree_with(addresses, use_qwp, SynthesisOptions::default())
}

pub fn build_sorter_tree_with(
    addresses: &[i64],
    use_qwp: bool,
    options: SynthesisOptions,
) -> Result<SorterTree> {
    let set = normalize_addresses(addresses)?;
    let root = synthesize(&set, use_qwp, options, 0)?;
    Ok(SorterTree::from_root(root, use_qwp))
}

fn synthesize(set: &[i64], use_qwp: bool, options: SynthesisOptions, depth: u32) -> Result<SorterNode> {
    if set.len() == 1 {
        return Ok(SorterNode::Leaf(Leaf { id: 0, ells: set.to_vec(), depth }));
    }
    let (stage, [left, right]) = candidate_stages(options.max_halvings, use_qwp)
        .find_map(|stage| split(set, &stage).map(|parts| (stage, parts)))
        .ok_or_else(|| Error::Unsortable { subset: set.to_vec() })?;
    Ok(SorterNode::Stage {
        stage,
        ports: Box::new([
            synthesize(&left, use_qwp, options, depth + 1)?,
            synthesize(&right, use_qwp, options, depth + 1)?,
        ]),
    })
}

impl SorterTree {
    fn from_root(mut root: SorterNode, use_qwp: bool) -> Self {
        let mut leaves = Vec::new();
        fn number(node: &mut SorterNode, leaves: &mut Vec<Leaf>) {
            match node {
                SorterNode::Leaf(leaf) => {
                    leaf.id = leaves.len();
                    leaves.push(leaf.clone());
                }
                SorterNode::Stage { ports, .. } => {
                    for child in ports.iter_mut() {
                        number(child, leaves);
                    }
                }
            }
        }
        number(&mut root, &mut leaves);
        SorterTree { root, leaves, use_qwp }
    }

    /// Rebuilds a tree from an explicit stage list, checking that every
    /// address is routed deterministically and every stage is reachable.
    pub fn from_stages(addresses: &[i64], use_qwp: bool, stages: &[StageSpec]) -> Result<Self> {
        let set = normalize_addresses(addresses)?;
        let mut used = vec![false; stages.len()];
        let root = Self::assemble(&set, use_qwp, stages, &mut Vec::new(), &mut used)?;
        if let Some(i) = used.iter().position(|u| !u) {
            return Err(Error::invalid(
                "sorter.stage",
                format!("stage at path `{}` is never reached", stages[i].path),
            ));
        }
        Ok(SorterTree::from_root(root, use_qwp))
    }

    fn assemble(
        set: &[i64],
        use_qwp: bool,
        stages: &[StageSpec],
        path: &mut Vec<usize>,
        used: &mut [bool],
    ) -> Result<SorterNode> {
        let key = path_string(path);
        let Some(i) = stages.iter().position(|s| s.path == key) else {
            return Ok(SorterNode::Leaf(Leaf { id: 0, ells: set.to_vec(), depth: path.len() as u32 }));
        };
        if used[i] {
            return Err(Error::invalid("sorter.stage", format!("duplicate stage path `{key}`")));
        }
        used[i] = true;
        let spec = &stages[i];
        let stage = SorterStage::new(spec.alpha, spec.delta_phi_c, use_qwp)?;
        let [left, right] = split(set, &stage).ok_or_else(|| {
            Error::invalid(
                "sorter.stage",
                format!("stage at `{key}` does not split {set:?} deterministically"),
            )
        })?;
        let mut children = Vec::with_capacity(2);
        for (port, part) in [(0usize, left), (1usize, right)] {
            path.push(port);
            children.push(Self::assemble(&part, use_qwp, stages, path, used)?);
            path.pop();
        }
        let [a, b]: [SorterNode; 2] = children.try_into().expect("two ports");
        Ok(SorterNode::Stage { stage, ports: Box::new([a, b]) })
    }

    pub fn root(&self) -> &SorterNode {
        &self.root
    }

    pub fn leaves(&self) -> &[Leaf] {
        &self.leaves
    }

    pub fn use_qwp(&self) -> bool {
        self.use_qwp
    }

    pub fn addresses(&self) -> Vec<i64> {
        let mut all: Vec<i64> = self.leaves.iter().flat_map(|l| l.ells.iter().copied()).collect();
        all.sort_unstable();
        all
    }

    pub fn leaf_for(&self, ell: i64) -> Option<&Leaf> {
        self.leaves.iter().find(|l| l.ells.contains(&ell))
    }

    /// Stage list in depth-first order, port 0 first.
    pub fn stages(&self) -> Vec<StageSpec> {
        let mut out = Vec::new();
        fn walk(node: &SorterNode, path: &mut Vec<usize>, out: &mut Vec<StageSpec>) {
            if let SorterNode::Stage { stage, ports } = node {
                out.push(StageSpec {
                    path: path_string(path),
                    alpha: stage.alpha,
                    delta_phi_c: stage.delta_phi_c,
                });
                for (port, child) in ports.iter().enumerate() {
                    path.push(port);
                    walk(child, path, out);
                    path.pop();
                }
            }
        }
        walk(&self.root, &mut Vec::new(), &mut out);
        out
    }

    /// Probability of reaching each leaf, multiplied out along every path.
    pub fn leaf_distribution(&self, ell: i64) -> Vec<f64> {
        let mut dist = vec![0.0; self.leaves.len()];
        fn walk(node: &SorterNode, ell: i64, weight: f64, dist: &mut [f64]) {
            match node {
                SorterNode::Leaf(leaf) => dist[leaf.id] += weight,
                SorterNode::Stage { stage, ports } => {
                    let (p0, p1) = stage_port_probabilities(ell, stage);
                    walk(&ports[0], ell, weight * p0, dist);
                    walk(&ports[1], ell, weight * p1, dist);
                }
            }
        }
        walk(&self.root, ell, 1.0, &mut dist);
        dist
    }
}

impl fmt::Display for SorterTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn walk(node: &SorterNode, indent: usize, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            let pad = "  ".repeat(indent);
            match node {
                SorterNode::Leaf(leaf) => {
                    writeln!(f, "{pad}leaf {} ell={:?} depth={}", leaf.id, leaf.ells, leaf.depth)
                }
                SorterNode::Stage { stage, ports } => {
                    writeln!(
                        f,
                        "{pad}stage alpha={} delta_phi_c={}{}",
                        stage.alpha,
                        stage.delta_phi_c,
                        if stage.applies_qwp { " qwp" } else { "" }
                    )?;
                    walk(&ports[0], indent + 1, f)?;
                    walk(&ports[1], indent + 1, f)
                }
            }
        }
        walk(&self.root, 0, f)
    }
}

/// One photon in transit.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonRecord {
    pub ell: i64,
    pub p: u32,
    pub polarization: JonesVector,
    /// Quarter-wave-plate passes since emission.
    pub qwp_depth: u32,
    pub origin: String,
    pub sequence: u64,
    pub preamble: bool,
}

impl PhotonRecord {
    pub fn new(ell: i64, polarization: JonesVector, origin: impl Into<String>, sequence: u64) -> Self {
        PhotonRecord {
            ell,
            p: 0,
            polarization,
            qwp_depth: 0,
            origin: origin.into(),
            sequence,
            preamble: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteOutcome {
    pub leaf: usize,
    /// The photon's `ell` is not one of the tree's configured addresses.
    pub stray: bool,
    pub record: PhotonRecord,
}

/// Walks `photon` down `tree`, sampling ports where routing is not certain
/// and applying a quarter-wave plate at every stage that carries one.
pub fn route_photon<R: Rng + ?Sized>(mut photon: PhotonRecord, tree: &SorterTree, rng: &mut R) -> RouteOutcome {
    let stray = tree.leaf_for(photon.ell).is_none();
    let mut node = &tree.root;
    loop {
        match node {
            SorterNode::Leaf(leaf) => {
                return RouteOutcome { leaf: leaf.id, stray, record: photon };
            }
            SorterNode::Stage { stage, ports } => {
                let port = match stage.deterministic_port(photon.ell) {
                    Some(p) => p,
                    None => {
                        let (p0, _) = stage_port_probabilities(photon.ell, stage);
                        if rng.random::<f64>() < p0 {
                            Port::Zero
                        } else {
                            Port::One
                        }
                    }
                };
                if stage.applies_qwp {
                    photon.polarization = qwp_apply(&photon.polarization);
                    photon.qwp_depth += 1;
                }
                node = &ports[port.index()];
            }
        }
    }
}
