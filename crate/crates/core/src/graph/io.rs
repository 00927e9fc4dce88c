use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Binning, Cpd, Edge, GraphError, GraphMode, Provenance, RelationshipGraph};

/// On-disk graph document. Nodes are referenced by name; an edge whose
/// weight is `null` is a veto that forbids the pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphJson {
    #[serde(default)]
    pub mode: GraphMode,
    pub nodes: Vec<String>,
    #[serde(default)]
    pub edges: Vec<EdgeJson>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cpds: Vec<CpdJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intercepts: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeJson {
    pub src: String,
    pub dst: String,
    pub weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CpdJson {
    pub node: String,
    /// Interior cut points, strictly increasing.
    pub bin_edges: Vec<f64>,
    /// Outer bounds `[lo, hi]` of the binned range.
    pub range: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codes: Option<Vec<f64>>,
    pub parents: Vec<String>,
    pub table: Vec<Vec<f64>>,
}

impl From<&RelationshipGraph> for GraphJson {
    fn from(g: &RelationshipGraph) -> Self {
        let name = |i: usize| g.nodes[i].clone();
        let mut edges: Vec<EdgeJson> = g
            .edges
            .iter()
            .map(|e| EdgeJson {
                src: name(e.src),
                dst: name(e.dst),
                weight: Some(e.weight),
                provenance: Some(e.provenance),
            })
            .collect();
        edges.extend(g.forbidden.iter().map(|&(s, d)| EdgeJson {
            src: name(s),
            dst: name(d),
            weight: None,
            provenance: Some(Provenance::Expert),
        }));
        let cpds = g
            .cpds
            .iter()
            .map(|c| {
                let b = &g.binnings[c.node];
                CpdJson {
                    node: name(c.node),
                    bin_edges: b.cuts.clone(),
                    range: [b.lo, b.hi],
                    codes: b.codes.clone(),
                    parents: c.parents.iter().map(|&p| name(p)).collect(),
                    table: c.table.clone(),
                }
            })
            .collect();
        let intercepts = g.intercepts.iter().any(|&b| b != 0.0).then(|| g.intercepts.clone());
        GraphJson {
            mode: g.mode,
            nodes: g.nodes.clone(),
            edges,
            cpds,
            intercepts,
        }
    }
}

impl GraphJson {
    /// Resolves names and validates the result. Edges without a provenance
    /// take `default_provenance`.
    pub fn into_graph(self, default_provenance: Provenance) -> Result<RelationshipGraph, GraphError> {
        let mut g = RelationshipGraph::new(self.nodes);
        g.mode = self.mode;
        for e in self.edges {
            let (src, dst) = (g.node_index(&e.src)?, g.node_index(&e.dst)?);
            match e.weight {
                Some(weight) => g.edges.push(Edge {
                    src,
                    dst,
                    weight,
                    provenance: e.provenance.unwrap_or(default_provenance),
                }),
                None => g.forbidden.push((src, dst)),
            }
        }
        if let Some(b) = self.intercepts {
            if b.len() != g.m() {
                return Err(GraphError::DimensionMismatch { expected: g.m(), actual: b.len() });
            }
            g.intercepts = b;
        }
        if !self.cpds.is_empty() {
            let mut binnings: Vec<Option<Binning>> = vec![None; g.m()];
            let mut cpds: Vec<Option<Cpd>> = vec![None; g.m()];
            for c in self.cpds {
                let node = g.node_index(&c.node)?;
                let parents = c.parents.iter().map(|p| g.node_index(p)).collect::<Result<Vec<_>, _>>()?;
                binnings[node] = Some(Binning {
                    cuts: c.bin_edges,
                    lo: c.range[0],
                    hi: c.range[1],
                    codes: c.codes,
                });
                cpds[node] = Some(Cpd { node, parents, table: c.table });
            }
            g.binnings = binnings
                .into_iter()
                .enumerate()
                .map(|(i, b)| b.ok_or_else(|| GraphError::Invalid(format!("no table for node `{}`", g.nodes[i]))))
                .collect::<Result<_, _>>()?;
            g.cpds = cpds.into_iter().map(|c| c.expect("set with binning")).collect();
        }
        g.canonicalize();
        g.validate()?;
        Ok(g)
    }
}

impl RelationshipGraph {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&GraphJson::from(self)).expect("graph serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, GraphError> {
        Self::parse(s, Provenance::Learned)
    }

    /// Parses an expert-authored document: every listed edge counts as expert.
    pub fn from_expert_json(s: &str) -> Result<Self, GraphError> {
        Self::parse(s, Provenance::Expert)
    }

    fn parse(s: &str, default_provenance: Provenance) -> Result<Self, GraphError> {
        let doc: GraphJson = serde_json::from_str(s).map_err(|e| GraphError::Json(e.to_string()))?;
        doc.into_graph(default_provenance)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GraphError> {
        std::fs::write(path, self.to_json()).map_err(|e| GraphError::Json(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GraphError> {
        let s = std::fs::read_to_string(path).map_err(|e| GraphError::Json(e.to_string()))?;
        Self::from_json(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_weight_becomes_a_veto() {
        let s = r#"{"mode":"linear","nodes":["a","b","c","d"],
                    "edges":[{"src":"a","dst":"b","weight":5},{"src":"c","dst":"d","weight":null}]}"#;
        let g = RelationshipGraph::from_expert_json(s).unwrap();
        assert_eq!(g.edges, vec![Edge::expert(0, 1, 5.0)]);
        assert_eq!(g.forbidden, vec![(2, 3)]);
    }

    #[test]
    fn unknown_node_is_rejected() {
        let s = r#"{"nodes":["a"],"edges":[{"src":"a","dst":"z","weight":1}]}"#;
        assert_eq!(RelationshipGraph::from_json(s), Err(GraphError::UnknownNode("z".into())));
    }

    #[test]
    fn cyclic_document_is_rejected() {
        let s = r#"{"nodes":["a","b"],"edges":[{"src":"a","dst":"b","weight":1},{"src":"b","dst":"a","weight":1}]}"#;
        assert!(matches!(RelationshipGraph::from_json(s), Err(GraphError::Cycle { .. })));
    }

    #[test]
    fn linear_round_trip_is_lossless() {
        let mut g = RelationshipGraph::with_edges(
            vec!["a".into(), "b".into(), "c".into()],
            vec![Edge::learned(0, 1, 0.1 + 0.2), Edge::expert(0, 2, -1.0 / 3.0)],
        );
        g.forbidden = vec![(1, 2)];
        g.intercepts = vec![0.0, 1e-17, 0.5];
        let back = RelationshipGraph::from_json(&g.to_json()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn cpd_round_trip_is_lossless() {
        let mut g = RelationshipGraph::with_edges(vec!["a".into(), "b".into()], vec![Edge::learned(0, 1, 1.0)]);
        g.mode = GraphMode::Cpd;
        g.binnings = vec![
            Binning { cuts: vec![0.5], lo: 0.0, hi: 1.0, codes: None },
            Binning { cuts: vec![0.5], lo: 0.0, hi: 1.0, codes: Some(vec![0.0, 1.0]) },
        ];
        g.cpds = vec![
            Cpd { node: 0, parents: vec![], table: vec![vec![0.3, 0.7]] },
            Cpd { node: 1, parents: vec![0], table: vec![vec![0.9, 0.1], vec![0.2, 0.8]] },
        ];
        let back = RelationshipGraph::from_json(&g.to_json()).unwrap();
        assert_eq!(back, g);
    }
}
