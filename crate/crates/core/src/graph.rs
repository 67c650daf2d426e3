//! Graphs as the network sees them, and disjoint-union batching.

use alloc::format;
use alloc::rc::Rc;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Supervision attached to a graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Targets {
    None,
    PerNode(Vec<usize>),
    /// One label per graph of a batch.
    PerGraph(Vec<usize>),
}

/// Node features, directed edges and optional edge attributes.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    /// `nodes x features`.
    pub node_features: Tensor,
    pub edges: Vec<(usize, usize)>,
    /// `edges x attrs`, one row per edge.
    pub edge_attrs: Option<Tensor>,
    pub targets: Targets,
    pub allow_self_loops: bool,
}

impl Graph {
    pub fn new(node_features: Tensor, edges: Vec<(usize, usize)>) -> Result<Self> {
        let g = Graph {
            node_features,
            edges,
            edge_attrs: None,
            targets: Targets::None,
            allow_self_loops: false,
        };
        g.topology()?;
        Ok(g)
    }

    pub fn with_edge_attrs(mut self, attrs: Tensor) -> Result<Self> {
        if attrs.rows() != self.edges.len() {
            return Err(Error::dim("edge attribute rows", self.edges.len(), attrs.rows()));
        }
        self.edge_attrs = Some(attrs);
        Ok(self)
    }

    pub fn with_targets(mut self, targets: Targets) -> Result<Self> {
        match &targets {
            Targets::PerNode(t) if t.len() != self.num_nodes() => {
                return Err(Error::dim("per-node targets", self.num_nodes(), t.len()));
            }
            Targets::PerGraph(t) if t.len() != 1 => {
                return Err(Error::dim("per-graph targets", 1, t.len()));
            }
            _ => {}
        }
        self.targets = targets;
        Ok(self)
    }

    pub fn num_nodes(&self) -> usize {
        if self.node_features.numel() == 0 {
            0
        } else {
            self.node_features.rows()
        }
    }

    pub fn topology(&self) -> Result<Topology> {
        Topology::new(self.num_nodes(), &self.edges, self.allow_self_loops)
    }
}

/// Edge structure of one graph or of a disjoint union of graphs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    num_nodes: usize,
    src: Rc<[usize]>,
    dst: Rc<[usize]>,
    node_graph: Rc<[usize]>,
    num_graphs: usize,
}

impl Topology {
    pub fn new(num_nodes: usize, edges: &[(usize, usize)], allow_self_loops: bool) -> Result<Self> {
        for &(s, d) in edges {
            if s >= num_nodes {
                return Err(Error::bounds("edge source", s, num_nodes));
            }
            if d >= num_nodes {
                return Err(Error::bounds("edge destination", d, num_nodes));
            }
            if s == d && !allow_self_loops {
                return Err(Error::contract(format!("self-loop on node {s}")));
            }
        }
        Ok(Topology {
            num_nodes,
            src: edges.iter().map(|e| e.0).collect(),
            dst: edges.iter().map(|e| e.1).collect(),
            node_graph: core::iter::repeat(0).take(num_nodes).collect(),
            num_graphs: 1,
        })
    }

    /// Every ordered pair of distinct nodes, sources outer.
    pub fn fully_connected(num_nodes: usize) -> Self {
        let edges: Vec<(usize, usize)> = (0..num_nodes)
            .flat_map(|i| (0..num_nodes).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect();
        Topology::new(num_nodes, &edges, false).expect("valid by construction")
    }

    /// Disjoint union: node and edge ids of later parts are offset, and
    /// no edges cross parts.
    pub fn union(parts: &[&Topology]) -> Self {
        let mut src = Vec::new();
        let mut dst = Vec::new();
        let mut node_graph = Vec::new();
        let mut offset = 0;
        let mut graphs = 0;
        for t in parts {
            src.extend(t.src.iter().map(|&s| s + offset));
            dst.extend(t.dst.iter().map(|&d| d + offset));
            node_graph.extend(t.node_graph.iter().map(|&g| g + graphs));
            offset += t.num_nodes;
            graphs += t.num_graphs;
        }
        Topology {
            num_nodes: offset,
            src: src.into(),
            dst: dst.into(),
            node_graph: node_graph.into(),
            num_graphs: graphs,
        }
    }

    /// `copies` disjoint copies of `self`.
    pub fn repeat(&self, copies: usize) -> Self {
        let parts: Vec<&Topology> = core::iter::repeat(self).take(copies).collect();
        Topology::union(&parts)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.src.len()
    }

    pub fn num_graphs(&self) -> usize {
        self.num_graphs
    }

    pub fn src(&self) -> &Rc<[usize]> {
        &self.src
    }

    pub fn dst(&self) -> &Rc<[usize]> {
        &self.dst
    }

    /// Graph index of every node.
    pub fn node_graph(&self) -> &Rc<[usize]> {
        &self.node_graph
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.src.iter().copied().zip(self.dst.iter().copied())
    }

    pub fn in_degree(&self, node: usize) -> usize {
        self.dst.iter().filter(|&&d| d == node).count()
    }
}

/// Stacks the graphs' node features and edge attributes and unions their
/// topologies. Per-node targets are concatenated, per-graph targets listed
/// in order.
pub fn batch(graphs: &[Graph]) -> Result<(Topology, Tensor, Option<Tensor>, Targets)> {
    let topologies: Vec<Topology> = graphs.iter().map(Graph::topology).collect::<Result<_>>()?;
    let refs: Vec<&Topology> = topologies.iter().collect();
    let topology = Topology::union(&refs);
    let width = graphs.first().map_or(0, |g| g.node_features.cols());
    let mut features = Vec::new();
    for g in graphs {
        if g.num_nodes() > 0 && g.node_features.cols() != width {
            return Err(Error::dim("node feature width", width, g.node_features.cols()));
        }
        features.extend_from_slice(g.node_features.data());
    }
    let features = Tensor::new([topology.num_nodes(), width], features)?;

    let with_attrs = graphs.iter().filter(|g| g.edge_attrs.is_some()).count();
    let attrs = if with_attrs == 0 {
        None
    } else if with_attrs != graphs.len() {
        return Err(Error::contract("either every graph or none carries edge attributes"));
    } else {
        let aw = graphs[0].edge_attrs.as_ref().map_or(0, Tensor::cols);
        let mut data = Vec::new();
        for g in graphs {
            let a = g.edge_attrs.as_ref().expect("checked");
            if !g.edges.is_empty() && a.cols() != aw {
                return Err(Error::dim("edge attribute width", aw, a.cols()));
            }
            data.extend_from_slice(a.data());
        }
        Some(Tensor::new([topology.num_edges(), aw], data)?)
    };

    let targets = match graphs.first().map(|g| &g.targets) {
        None | Some(Targets::None) => Targets::None,
        Some(Targets::PerNode(_)) => {
            let mut all = Vec::new();
            for g in graphs {
                match &g.targets {
                    Targets::PerNode(t) => all.extend_from_slice(t),
                    _ => return Err(Error::contract("mixed target kinds in batch")),
                }
            }
            Targets::PerNode(all)
        }
        Some(Targets::PerGraph(_)) => {
            let mut all = Vec::new();
            for g in graphs {
                match &g.targets {
                    Targets::PerGraph(t) => all.extend_from_slice(t),
                    _ => return Err(Error::contract("mixed target kinds in batch")),
                }
            }
            Targets::PerGraph(all)
        }
    };
    Ok((topology, features, attrs, targets))
}
