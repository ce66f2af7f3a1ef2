//! Radial three-phase distribution feeder and its power-flow solvers.
//!
//! Everything here is per-unit. Flows and voltages are indexed by line and node
//! position in the [`Feeder`]; absent phases hold zero.
//!
//! Two solvers share the same inputs:
//!
//! - [`solve_linear`]: lossless linearized model. Branch flows are the sum of
//!   downstream net loads, and squared voltage magnitudes drop along each line by
//!   `sum_q 2 Re[S^{pq} conj(z^{pq})]`, where `S^{pq}` is the flow on phase `q`
//!   rotated by the nominal angle difference between phases `p` and `q`.
//! - [`solve_nonlinear_sweep`]: backward/forward sweep with complex phasors and
//!   constant-power loads. It is the reference the linear model is checked against.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use num_complex::Complex64;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::math;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("topology error: {0}")]
    Topology(String),
    #[error("node {node} has no phase {phase}")]
    MissingPhase { node: String, phase: Phase },
    #[error("node index {0} out of range")]
    UnknownNode(usize),
    #[error("invalid feeder parameter: {0}")]
    InvalidParameter(String),
    #[error("power flow did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Phase> {
        Phase::ALL.get(i).copied()
    }

    /// Nominal phasor angle in radians (positive sequence).
    pub fn angle(self) -> f64 {
        match self {
            Phase::A => 0.0,
            Phase::B => -2.0 * PI / 3.0,
            Phase::C => 2.0 * PI / 3.0,
        }
    }

    pub fn parse(s: &str) -> Option<Phase> {
        match s.trim() {
            "a" | "A" => Some(Phase::A),
            "b" | "B" => Some(Phase::B),
            "c" | "C" => Some(Phase::C),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::A => "a",
            Phase::B => "b",
            Phase::C => "c",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Subset of `{a, b, c}`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct PhaseSet(u8);

impl PhaseSet {
    pub const EMPTY: PhaseSet = PhaseSet(0);
    pub const ABC: PhaseSet = PhaseSet(0b111);

    pub fn single(p: Phase) -> Self {
        PhaseSet(1 << p.index())
    }

    pub fn from_phases(phases: &[Phase]) -> Self {
        phases.iter().fold(PhaseSet::EMPTY, |s, &p| s.with(p))
    }

    pub fn with(self, p: Phase) -> Self {
        PhaseSet(self.0 | (1 << p.index()))
    }

    pub fn contains(self, p: Phase) -> bool {
        self.0 & (1 << p.index()) != 0
    }

    pub fn is_subset_of(self, other: PhaseSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = Phase> {
        Phase::ALL.into_iter().filter(move |&p| self.contains(p))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub name: String,
    pub phases: PhaseSet,
}

/// A line from a parent node to a child node.
#[derive(Clone, Debug, PartialEq)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub phases: PhaseSet,
    /// Series impedance, pu. Rows/columns for absent phases are ignored.
    pub impedance: [[Complex64; 3]; 3],
}

impl Line {
    /// Line with the same self impedance on every phase it carries and no mutual coupling.
    pub fn diagonal(from: usize, to: usize, phases: PhaseSet, z: Complex64) -> Self {
        let mut impedance = [[Complex64::new(0.0, 0.0); 3]; 3];
        for p in phases.iter() {
            impedance[p.index()][p.index()] = z;
        }
        Line {
            from,
            to,
            phases,
            impedance,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct VoltageLimits {
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for VoltageLimits {
    fn default() -> Self {
        VoltageLimits {
            v_min: 0.95,
            v_max: 1.05,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Bases {
    pub kva: f64,
    pub kv: f64,
}

/// Immutable radial feeder. Construct with [`Feeder::new`], which validates topology.
#[derive(Clone, Debug)]
pub struct Feeder {
    nodes: Vec<Node>,
    lines: Vec<Line>,
    loads: Vec<[Complex64; 3]>,
    source: usize,
    source_voltage: f64,
    limits: VoltageLimits,
    bases: Bases,
    parent_line: Vec<Option<usize>>,
    child_lines: Vec<Vec<usize>>,
    order: Vec<usize>,
}

impl Feeder {
    /// `loads[n][phase]` is the constant-power load at node `n` in pu.
    pub fn new(
        nodes: Vec<Node>,
        lines: Vec<Line>,
        loads: Vec<[Complex64; 3]>,
        source: usize,
        source_voltage: f64,
        limits: VoltageLimits,
        bases: Bases,
    ) -> Result<Self, GridError> {
        let n = nodes.len();
        if n == 0 {
            return Err(GridError::Topology("feeder has no nodes".into()));
        }
        if source >= n {
            return Err(GridError::UnknownNode(source));
        }
        if lines.len() != n - 1 {
            return Err(GridError::Topology(format!(
                "{} lines for {} nodes; a radial feeder needs exactly {}",
                lines.len(),
                n,
                n - 1
            )));
        }
        if loads.len() != n {
            return Err(GridError::InvalidParameter(format!(
                "{} load entries for {} nodes",
                loads.len(),
                n
            )));
        }
        if !(limits.v_min > 0.0 && limits.v_min < limits.v_max) {
            return Err(GridError::InvalidParameter(format!(
                "voltage limits must satisfy 0 < v_min < v_max, got ({}, {})",
                limits.v_min, limits.v_max
            )));
        }
        if !(source_voltage > 0.0 && source_voltage.is_finite()) {
            return Err(GridError::InvalidParameter(
                "source voltage must be positive".into(),
            ));
        }
        if !(bases.kva > 0.0 && bases.kv > 0.0) {
            return Err(GridError::InvalidParameter("bases must be positive".into()));
        }

        let mut parent_line = vec![None; n];
        let mut child_lines = vec![Vec::new(); n];
        for (idx, line) in lines.iter().enumerate() {
            if line.from >= n {
                return Err(GridError::UnknownNode(line.from));
            }
            if line.to >= n {
                return Err(GridError::UnknownNode(line.to));
            }
            if line.from == line.to {
                return Err(GridError::Topology(format!(
                    "line {idx} is a self-loop at {}",
                    nodes[line.from].name
                )));
            }
            if line.to == source {
                return Err(GridError::Topology(format!(
                    "line {idx} feeds the source node"
                )));
            }
            if line.phases.is_empty() {
                return Err(GridError::Topology(format!("line {idx} carries no phase")));
            }
            for end in [line.from, line.to] {
                if !line.phases.is_subset_of(nodes[end].phases) {
                    let missing = line
                        .phases
                        .iter()
                        .find(|&p| !nodes[end].phases.contains(p))
                        .unwrap_or(Phase::A);
                    return Err(GridError::MissingPhase {
                        node: nodes[end].name.clone(),
                        phase: missing,
                    });
                }
            }
            if parent_line[line.to].is_some() {
                return Err(GridError::Topology(format!(
                    "node {} has more than one parent",
                    nodes[line.to].name
                )));
            }
            parent_line[line.to] = Some(idx);
            child_lines[line.from].push(idx);
        }

        // Breadth-first order from the source; unreachable nodes mean a cycle
        // or a disconnected island.
        let mut order = Vec::with_capacity(n);
        order.push(source);
        let mut head = 0;
        while head < order.len() {
            let node = order[head];
            head += 1;
            for &l in &child_lines[node] {
                order.push(lines[l].to);
            }
        }
        if order.len() != n {
            return Err(GridError::Topology(
                "feeder is not connected to the source (or contains a cycle)".into(),
            ));
        }

        for (j, node) in nodes.iter().enumerate() {
            if j == source {
                continue;
            }
            let line = &lines[parent_line[j].expect("connected non-source node has a parent")];
            if !node.phases.is_subset_of(line.phases) {
                return Err(GridError::Topology(format!(
                    "node {} has phases not supplied by its parent line",
                    node.name
                )));
            }
        }
        for (j, load) in loads.iter().enumerate() {
            for p in Phase::ALL {
                let s = load[p.index()];
                if !(s.re.is_finite() && s.im.is_finite()) {
                    return Err(GridError::InvalidParameter(format!(
                        "non-finite load at {}",
                        nodes[j].name
                    )));
                }
                if s != Complex64::new(0.0, 0.0) && !nodes[j].phases.contains(p) {
                    return Err(GridError::MissingPhase {
                        node: nodes[j].name.clone(),
                        phase: p,
                    });
                }
            }
        }

        Ok(Feeder {
            nodes,
            lines,
            loads,
            source,
            source_voltage,
            limits,
            bases,
            parent_line,
            child_lines,
            order,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn loads(&self) -> &[[Complex64; 3]] {
        &self.loads
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn source_voltage(&self) -> f64 {
        self.source_voltage
    }

    pub fn limits(&self) -> VoltageLimits {
        self.limits
    }

    pub fn bases(&self) -> Bases {
        self.bases
    }

    /// Breadth-first node order starting at the source.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn parent_line(&self, node: usize) -> Option<usize> {
        self.parent_line.get(node).copied().flatten()
    }

    pub fn child_lines(&self, node: usize) -> &[usize] {
        &self.child_lines[node]
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    /// Number of (non-source node, phase) pairs, i.e. voltage variables.
    pub fn voltage_count(&self) -> usize {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != self.source)
            .map(|(_, n)| n.phases.len())
            .sum()
    }

    /// Number of (line, phase) pairs, i.e. flow variables per direction.
    pub fn flow_count(&self) -> usize {
        self.lines.iter().map(|l| l.phases.len()).sum()
    }

    /// Same network with every load multiplied by `factor`.
    pub fn with_scaled_loads(&self, factor: f64) -> Feeder {
        let mut f = self.clone();
        for load in &mut f.loads {
            for s in load.iter_mut() {
                *s *= factor;
            }
        }
        f
    }

    pub fn with_limits(&self, limits: VoltageLimits) -> Result<Feeder, GridError> {
        if !(limits.v_min > 0.0 && limits.v_min < limits.v_max) {
            return Err(GridError::InvalidParameter(format!(
                "voltage limits must satisfy 0 < v_min < v_max, got ({}, {})",
                limits.v_min, limits.v_max
            )));
        }
        let mut f = self.clone();
        f.limits = limits;
        Ok(f)
    }

    /// Total active load over all nodes and phases, pu.
    pub fn total_active_load(&self) -> f64 {
        self.loads.iter().flat_map(|l| l.iter()).map(|s| s.re).sum()
    }

    /// Coefficient of `P^q` and `Q^q` in the squared-voltage drop of phase `p`
    /// across `line`: `drop_p = sum_q (a_pq P^q + b_pq Q^q)`.
    pub fn drop_coefficients(&self, line: usize, p: Phase, q: Phase) -> (f64, f64) {
        drop_coefficients(&self.lines[line], p, q)
    }
}

pub(crate) fn drop_coefficients(line: &Line, p: Phase, q: Phase) -> (f64, f64) {
    // 2 Re[(P + jQ) w] with w = rotation(p, q) * conj(z_pq)
    let theta = p.angle() - q.angle();
    let rot = Complex64::new(math::cos(theta), math::sin(theta));
    let w = rot * line.impedance[p.index()][q.index()].conj();
    (2.0 * w.re, -2.0 * w.im)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Injection {
    pub node: usize,
    pub phase: Phase,
    pub p: f64,
    pub q: f64,
}

/// Net controllable injections, pu. Positive = into the grid (battery discharge).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InjectionSet {
    entries: Vec<Injection>,
}

impl InjectionSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, node: usize, phase: Phase, p: f64, q: f64) {
        self.entries.push(Injection { node, phase, p, q });
    }

    pub fn entries(&self) -> &[Injection] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `alpha * self + beta * other` as a concatenated entry list.
    pub fn combine(&self, alpha: f64, other: &InjectionSet, beta: f64) -> InjectionSet {
        let scale = |e: &Injection, k: f64| Injection {
            p: e.p * k,
            q: e.q * k,
            ..*e
        };
        InjectionSet {
            entries: self
                .entries
                .iter()
                .map(|e| scale(e, alpha))
                .chain(other.entries.iter().map(|e| scale(e, beta)))
                .collect(),
        }
    }

    fn validate(&self, feeder: &Feeder) -> Result<(), GridError> {
        for e in &self.entries {
            let node = feeder.nodes.get(e.node).ok_or(GridError::UnknownNode(e.node))?;
            if !node.phases.contains(e.phase) {
                return Err(GridError::MissingPhase {
                    node: node.name.clone(),
                    phase: e.phase,
                });
            }
            if !(e.p.is_finite() && e.q.is_finite()) {
                return Err(GridError::InvalidParameter(format!(
                    "non-finite injection at {}",
                    node.name
                )));
            }
        }
        Ok(())
    }
}

/// Per-line sending-end flows and per-node squared voltage magnitudes, pu.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerFlowSolution {
    pub p_flow: Vec<[f64; 3]>,
    pub q_flow: Vec<[f64; 3]>,
    pub v_sq: Vec<[f64; 3]>,
    node_phases: Vec<PhaseSet>,
    source: usize,
}

impl PowerFlowSolution {
    pub fn voltage(&self, node: usize, phase: Phase) -> Option<f64> {
        self.v_sq_at(node, phase).map(math::sqrt)
    }

    pub fn v_sq_at(&self, node: usize, phase: Phase) -> Option<f64> {
        let phases = self.node_phases.get(node)?;
        phases
            .contains(phase)
            .then(|| self.v_sq[node][phase.index()])
    }

    pub fn source(&self) -> usize {
        self.source
    }

    /// `(node, phase, |V|)` for every existing node phase, source included.
    pub fn voltages(&self) -> impl Iterator<Item = (usize, Phase, f64)> + '_ {
        self.node_phases.iter().enumerate().flat_map(move |(n, ph)| {
            ph.iter()
                .map(move |p| (n, p, math::sqrt(self.v_sq[n][p.index()])))
        })
    }

    fn load_voltages(&self) -> impl Iterator<Item = f64> + '_ {
        self.voltages()
            .filter(move |(n, _, _)| *n != self.source)
            .map(|(_, _, v)| v)
    }

    /// Lowest non-source voltage magnitude (source voltage if the feeder has one node).
    pub fn min_voltage(&self) -> f64 {
        self.load_voltages()
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))))
            .unwrap_or_else(|| math::sqrt(self.v_sq[self.source][0]))
    }

    pub fn max_voltage(&self) -> f64 {
        self.load_voltages()
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
            .unwrap_or_else(|| math::sqrt(self.v_sq[self.source][0]))
    }
}

fn net_loads(feeder: &Feeder, injections: &InjectionSet) -> Result<Vec<[Complex64; 3]>, GridError> {
    injections.validate(feeder)?;
    let mut net = feeder.loads.clone();
    for e in injections.entries() {
        net[e.node][e.phase.index()] -= Complex64::new(e.p, e.q);
    }
    Ok(net)
}

/// Linearized power flow: one upstream accumulation pass for flows, one
/// downstream pass for squared voltages.
pub fn solve_linear(
    feeder: &Feeder,
    injections: &InjectionSet,
) -> Result<PowerFlowSolution, GridError> {
    let net = net_loads(feeder, injections)?;
    let n = feeder.nodes.len();
    let mut flow = vec![[Complex64::new(0.0, 0.0); 3]; feeder.lines.len()];

    for &j in feeder.order.iter().rev() {
        let Some(l) = feeder.parent_line[j] else { continue };
        let mut s = [Complex64::new(0.0, 0.0); 3];
        for p in feeder.lines[l].phases.iter() {
            let k = p.index();
            s[k] = net[j][k]
                + feeder.child_lines[j]
                    .iter()
                    .map(|&c| flow[c][k])
                    .sum::<Complex64>();
        }
        flow[l] = s;
    }

    let v0 = feeder.source_voltage * feeder.source_voltage;
    let mut v_sq = vec![[0.0; 3]; n];
    for p in feeder.nodes[feeder.source].phases.iter() {
        v_sq[feeder.source][p.index()] = v0;
    }
    for &j in feeder.order.iter().skip(1) {
        let l = feeder.parent_line[j].expect("non-source node has a parent");
        let line = &feeder.lines[l];
        for p in line.phases.iter() {
            let drop: f64 = line
                .phases
                .iter()
                .map(|q| {
                    let (a, b) = drop_coefficients(line, p, q);
                    a * flow[l][q.index()].re + b * flow[l][q.index()].im
                })
                .sum();
            v_sq[j][p.index()] = v_sq[line.from][p.index()] - drop;
        }
    }

    if let Some((j, p)) = v_sq
        .iter()
        .enumerate()
        .flat_map(|(j, v)| feeder.nodes[j].phases.iter().map(move |p| (j, p, v[p.index()])))
        .find(|&(_, _, v)| !(v > 0.0))
        .map(|(j, p, _)| (j, p))
    {
        return Err(GridError::InvalidParameter(format!(
            "linear model gives non-positive squared voltage at {} phase {}",
            feeder.nodes[j].name, p
        )));
    }

    Ok(PowerFlowSolution {
        p_flow: flow.iter().map(|s| [s[0].re, s[1].re, s[2].re]).collect(),
        q_flow: flow.iter().map(|s| [s[0].im, s[1].im, s[2].im]).collect(),
        v_sq,
        node_phases: feeder.nodes.iter().map(|n| n.phases).collect(),
        source: feeder.source,
    })
}

/// Backward/forward sweep with constant-power loads.
///
/// Converged when the largest phasor change between iterations drops below `tol`.
pub fn solve_nonlinear_sweep(
    feeder: &Feeder,
    injections: &InjectionSet,
    tol: f64,
    max_iter: usize,
) -> Result<PowerFlowSolution, GridError> {
    if !(tol > 0.0) {
        return Err(GridError::InvalidParameter("tolerance must be positive".into()));
    }
    let net = net_loads(feeder, injections)?;
    let n = feeder.nodes.len();
    let v0 = feeder.source_voltage;
    let nominal: [Complex64; 3] =
        core::array::from_fn(|k| Complex64::from_polar(v0, Phase::ALL[k].angle()));

    let mut v: Vec<[Complex64; 3]> = vec![nominal; n];
    let mut current = vec![[Complex64::new(0.0, 0.0); 3]; feeder.lines.len()];

    for _ in 0..max_iter {
        for &j in feeder.order.iter().rev() {
            let Some(l) = feeder.parent_line[j] else { continue };
            let mut i_l = [Complex64::new(0.0, 0.0); 3];
            for p in feeder.lines[l].phases.iter() {
                let k = p.index();
                let load_current = (net[j][k] / v[j][k]).conj();
                i_l[k] = load_current
                    + feeder.child_lines[j]
                        .iter()
                        .map(|&c| current[c][k])
                        .sum::<Complex64>();
            }
            current[l] = i_l;
        }

        let mut delta: f64 = 0.0;
        let mut diverged = false;
        for &j in feeder.order.iter().skip(1) {
            let l = feeder.parent_line[j].expect("non-source node has a parent");
            let line = &feeder.lines[l];
            for p in line.phases.iter() {
                let drop: Complex64 = line
                    .phases
                    .iter()
                    .map(|q| line.impedance[p.index()][q.index()] * current[l][q.index()])
                    .sum();
                let new = v[line.from][p.index()] - drop;
                let mag = new.norm();
                if !mag.is_finite() || !(0.05..=20.0).contains(&mag) {
                    diverged = true;
                }
                delta = delta.max((new - v[j][p.index()]).norm());
                v[j][p.index()] = new;
            }
        }
        if diverged {
            break;
        }
        if delta < tol {
            let v_sq = v
                .iter()
                .enumerate()
                .map(|(j, vj)| {
                    let mut out = [0.0; 3];
                    for p in feeder.nodes[j].phases.iter() {
                        out[p.index()] = vj[p.index()].norm_sqr();
                    }
                    out
                })
                .collect();
            let mut p_flow = vec![[0.0; 3]; feeder.lines.len()];
            let mut q_flow = vec![[0.0; 3]; feeder.lines.len()];
            for (l, line) in feeder.lines.iter().enumerate() {
                for p in line.phases.iter() {
                    let k = p.index();
                    let s = v[line.from][k] * current[l][k].conj();
                    p_flow[l][k] = s.re;
                    q_flow[l][k] = s.im;
                }
            }
            return Ok(PowerFlowSolution {
                p_flow,
                q_flow,
                v_sq,
                node_phases: feeder.nodes.iter().map(|n| n.phases).collect(),
                source: feeder.source,
            });
        }
    }
    Err(GridError::NonConvergence {
        iterations: max_iter,
    })
}

/// Number of non-source node phases with `|V| > v_max` or `|V| < v_min`.
pub fn count_violations(solution: &PowerFlowSolution, v_min: f64, v_max: f64) -> usize {
    solution
        .voltages()
        .filter(|&(n, _, v)| n != solution.source && (v > v_max || v < v_min))
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node() -> Feeder {
        let nodes = vec![
            Node {
                name: "1".into(),
                phases: PhaseSet::single(Phase::A),
            },
            Node {
                name: "2".into(),
                phases: PhaseSet::single(Phase::A),
            },
        ];
        let lines = vec![Line::diagonal(
            0,
            1,
            PhaseSet::single(Phase::A),
            Complex64::new(0.01, 0.01),
        )];
        let zero = Complex64::new(0.0, 0.0);
        let loads = vec![[zero; 3], [Complex64::new(0.1, 0.05), zero, zero]];
        Feeder::new(
            nodes,
            lines,
            loads,
            0,
            1.0,
            VoltageLimits::default(),
            Bases { kva: 100.0, kv: 4.16 },
        )
        .unwrap()
    }

    #[test]
    fn two_node_hand_values() {
        let f = two_node();
        let s = solve_linear(&f, &InjectionSet::new()).unwrap();
        assert!((s.p_flow[0][0] - 0.1).abs() < 1e-12);
        assert!((s.q_flow[0][0] - 0.05).abs() < 1e-12);
        assert!((s.v_sq[1][0] - 0.9970).abs() < 1e-12);
        assert!((s.voltage(1, Phase::A).unwrap() - 0.99850).abs() < 1e-5);

        let mut inj = InjectionSet::new();
        inj.push(1, Phase::A, 0.1, 0.0);
        let s = solve_linear(&f, &inj).unwrap();
        assert!(s.p_flow[0][0].abs() < 1e-12);
        assert!((s.v_sq[1][0] - 0.9990).abs() < 1e-12);
    }

    #[test]
    fn sweep_matches_linear_on_two_node() {
        let f = two_node();
        let lin = solve_linear(&f, &InjectionSet::new()).unwrap();
        let nl = solve_nonlinear_sweep(&f, &InjectionSet::new(), 1e-10, 100).unwrap();
        let d = lin.voltage(1, Phase::A).unwrap() - nl.voltage(1, Phase::A).unwrap();
        assert!(d.abs() < 5e-3, "difference {d}");
    }

    #[test]
    fn sweep_reports_voltage_collapse() {
        // The 2-node line can carry roughly 14x its nominal load before the
        // sweep stops having a fixed point.
        let f = two_node().with_scaled_loads(500.0);
        let err = solve_nonlinear_sweep(&f, &InjectionSet::new(), 1e-10, 500).unwrap_err();
        assert!(matches!(err, GridError::NonConvergence { .. }));
        // x50 is heavy but still solvable.
        let heavy = two_node().with_scaled_loads(50.0);
        let sol = solve_nonlinear_sweep(&heavy, &InjectionSet::new(), 1e-10, 500).unwrap();
        assert!((sol.voltage(1, Phase::A).unwrap() - 0.91792).abs() < 1e-4);
    }

    #[test]
    fn zero_load_gives_flat_profile() {
        let f = two_node().with_scaled_loads(0.0);
        let lin = solve_linear(&f, &InjectionSet::new()).unwrap();
        let nl = solve_nonlinear_sweep(&f, &InjectionSet::new(), 1e-12, 10).unwrap();
        assert_eq!(lin.v_sq[1][0], 1.0);
        assert!((nl.v_sq[1][0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_missing_phase_injection() {
        let f = two_node();
        let mut inj = InjectionSet::new();
        inj.push(1, Phase::B, 0.1, 0.0);
        assert!(matches!(
            solve_linear(&f, &inj),
            Err(GridError::MissingPhase { .. })
        ));
    }

    #[test]
    fn rejects_non_radial() {
        let a = PhaseSet::single(Phase::A);
        let z = Complex64::new(0.01, 0.01);
        let nodes: Vec<Node> = (0..3)
            .map(|i| Node {
                name: format!("{i}"),
                phases: a,
            })
            .collect();
        let zero = [Complex64::new(0.0, 0.0); 3];
        let lines = vec![Line::diagonal(0, 1, a, z), Line::diagonal(1, 2, a, z), Line::diagonal(2, 1, a, z)];
        let err = Feeder::new(
            nodes.clone(),
            lines,
            vec![zero; 3],
            0,
            1.0,
            VoltageLimits::default(),
            Bases { kva: 1.0, kv: 1.0 },
        )
        .unwrap_err();
        assert!(matches!(err, GridError::Topology(_)));

        // right edge count, but a 2-cycle leaves node 0's child missing
        let lines = vec![Line::diagonal(1, 2, a, z), Line::diagonal(2, 1, a, z)];
        let err = Feeder::new(
            nodes,
            lines,
            vec![zero; 3],
            0,
            1.0,
            VoltageLimits::default(),
            Bases { kva: 1.0, kv: 1.0 },
        )
        .unwrap_err();
        assert!(matches!(err, GridError::Topology(_)));
    }

    #[test]
    fn violation_counting() {
        let f = two_node();
        let sol = solve_linear(&f, &InjectionSet::new()).unwrap();
        assert_eq!(count_violations(&sol, 0.95, 1.05), 0);
        assert_eq!(count_violations(&sol, 0.999, 1.05), 1);
    }

    #[test]
    fn drop_coefficients_reduce_to_r_and_x_on_diagonal() {
        let line = Line::diagonal(0, 1, PhaseSet::ABC, Complex64::new(0.3, 0.7));
        let (a, b) = drop_coefficients(&line, Phase::B, Phase::B);
        assert!((a - 0.6).abs() < 1e-15);
        assert!((b - 1.4).abs() < 1e-15);
    }
}
