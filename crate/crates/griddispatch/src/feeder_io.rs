//! Feeder JSON documents.
//!
//! ```json
//! {
//!   "name": "example",
//!   "bases": {"kva": 100.0, "kv": 4.16},
//!   "source": "650",
//!   "source_voltage": 1.0,
//!   "limits": {"v_min": 0.95, "v_max": 1.05},
//!   "nodes": [{"name": "650", "phases": "abc"}, {"name": "632", "phases": "abc"}],
//!   "edges": [{"from": "650", "to": "632", "phases": "abc",
//!              "z_self": [0.01, 0.02], "z_mutual": [0.003, 0.006]}],
//!   "loads": [{"node": "632", "phase": "a", "p": 0.03, "q": 0.012}]
//! }
//! ```
//!
//! Impedances and powers are per-unit on `bases`. An edge may instead give a
//! full `z_matrix`: three rows of three `[r, x]` pairs in phase order a, b, c.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use griddispatch_core::grid::{Bases, Feeder, Line, Node, Phase, PhaseSet, VoltageLimits};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeederDoc {
    #[serde(default)]
    pub name: String,
    pub bases: Bases,
    pub source: String,
    #[serde(default = "unit")]
    pub source_voltage: f64,
    #[serde(default)]
    pub limits: VoltageLimits,
    pub nodes: Vec<NodeDoc>,
    pub edges: Vec<EdgeDoc>,
    #[serde(default)]
    pub loads: Vec<LoadDoc>,
}

fn unit() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDoc {
    pub name: String,
    pub phases: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeDoc {
    pub from: String,
    pub to: String,
    pub phases: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_self: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_mutual: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_matrix: Option<[[[f64; 2]; 3]; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadDoc {
    pub node: String,
    pub phase: String,
    pub p: f64,
    #[serde(default)]
    pub q: f64,
}

pub fn parse_phases(s: &str) -> Result<PhaseSet> {
    let mut set = PhaseSet::EMPTY;
    for c in s.chars() {
        let p = Phase::parse(&c.to_string()).ok_or_else(|| anyhow!("unknown phase '{c}' in \"{s}\""))?;
        if set.contains(p) {
            bail!("phase '{c}' repeated in \"{s}\"");
        }
        set = set.with(p);
    }
    if set.is_empty() {
        bail!("empty phase set");
    }
    Ok(set)
}

pub fn phases_to_string(set: PhaseSet) -> String {
    set.iter().map(|p| p.as_str()).collect()
}

impl FeederDoc {
    pub fn to_feeder(&self) -> Result<Feeder> {
        let index = |name: &str| {
            self.nodes
                .iter()
                .position(|n| n.name == name)
                .ok_or_else(|| anyhow!("unknown node \"{name}\""))
        };
        let nodes = self
            .nodes
            .iter()
            .map(|n| {
                Ok(Node {
                    name: n.name.clone(),
                    phases: parse_phases(&n.phases).with_context(|| format!("node \"{}\"", n.name))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut lines = Vec::with_capacity(self.edges.len());
        for e in &self.edges {
            let ctx = || format!("edge {} -> {}", e.from, e.to);
            let phases = parse_phases(&e.phases).with_context(ctx)?;
            let (from, to) = (index(&e.from).with_context(ctx)?, index(&e.to).with_context(ctx)?);
            let mut z = [[Complex64::new(0.0, 0.0); 3]; 3];
            match (e.z_self, e.z_mutual, e.z_matrix) {
                (Some(s), m, None) => {
                    let m = m.unwrap_or([0.0, 0.0]);
                    for p in phases.iter() {
                        for q in phases.iter() {
                            let v = if p == q { s } else { m };
                            z[p.index()][q.index()] = Complex64::new(v[0], v[1]);
                        }
                    }
                }
                (None, None, Some(mat)) => {
                    for p in phases.iter() {
                        for q in phases.iter() {
                            let v = mat[p.index()][q.index()];
                            z[p.index()][q.index()] = Complex64::new(v[0], v[1]);
                        }
                    }
                }
                _ => bail!("{}: give either z_self (with optional z_mutual) or z_matrix", ctx()),
            }
            lines.push(Line {
                from,
                to,
                phases,
                impedance: z,
            });
        }
        let mut loads = vec![[Complex64::new(0.0, 0.0); 3]; nodes.len()];
        for l in &self.loads {
            let n = index(&l.node)?;
            let p = Phase::parse(&l.phase).ok_or_else(|| anyhow!("load at \"{}\": unknown phase \"{}\"", l.node, l.phase))?;
            loads[n][p.index()] += Complex64::new(l.p, l.q);
        }
        let source = index(&self.source).context("source")?;
        Ok(Feeder::new(
            nodes,
            lines,
            loads,
            source,
            self.source_voltage,
            self.limits,
            self.bases,
        )?)
    }

    pub fn from_feeder(name: &str, feeder: &Feeder) -> FeederDoc {
        let nodes = feeder.nodes();
        let mut loads = Vec::new();
        for (n, row) in feeder.loads().iter().enumerate() {
            for p in nodes[n].phases.iter() {
                let s = row[p.index()];
                if s.re != 0.0 || s.im != 0.0 {
                    loads.push(LoadDoc {
                        node: nodes[n].name.clone(),
                        phase: p.as_str().to_string(),
                        p: s.re,
                        q: s.im,
                    });
                }
            }
        }
        FeederDoc {
            name: name.to_string(),
            bases: feeder.bases(),
            source: nodes[feeder.source()].name.clone(),
            source_voltage: feeder.source_voltage(),
            limits: feeder.limits(),
            nodes: nodes
                .iter()
                .map(|n| NodeDoc {
                    name: n.name.clone(),
                    phases: phases_to_string(n.phases),
                })
                .collect(),
            edges: feeder
                .lines()
                .iter()
                .map(|l| {
                    let m = l.impedance.map(|row| row.map(|z| [z.re, z.im]));
                    EdgeDoc {
                        from: nodes[l.from].name.clone(),
                        to: nodes[l.to].name.clone(),
                        phases: phases_to_string(l.phases),
                        z_self: None,
                        z_mutual: None,
                        z_matrix: Some(m),
                    }
                })
                .collect(),
            loads,
        }
    }
}

pub fn parse_feeder(text: &str) -> Result<Feeder> {
    let doc: FeederDoc = serde_json::from_str(text).context("feeder JSON")?;
    doc.to_feeder()
}

pub fn load_feeder(path: &Path) -> Result<Feeder> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_feeder(&text).with_context(|| format!("loading feeder {}", path.display()))
}

/// The bundled four-node single-phase feeder.
pub const FEEDER4_JSON: &str = include_str!("../data/feeder4.json");
/// The bundled thirteen-node three-phase feeder.
pub const FEEDER13_JSON: &str = include_str!("../data/feeder13.json");

pub fn feeder4() -> Feeder {
    parse_feeder(FEEDER4_JSON).expect("bundled four-node feeder is valid")
}

pub fn feeder13() -> Feeder {
    parse_feeder(FEEDER13_JSON).expect("bundled thirteen-node feeder is valid")
}
