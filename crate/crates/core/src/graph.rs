//! Feedforward networks with shared weights.
//!
//! Nodes are stored in topological order (every edge points from a lower to
//! a higher node id). Each edge reads its weight from `p[param_of_edge[e]]`,
//! so a many-to-one `param_of_edge` is weight sharing. Parameter indices are
//! zero-based.
//!
//! Unrolled RNNs keep their `(layer, unit, time)` coordinates on every node
//! and a [`RnnLayout`] describing where each matrix lives in the parameter
//! vector.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Input,
    Internal,
    Output,
    /// Constant-one source feeding internal and output nodes.
    Bias,
}

/// Position of a node in a layered network. `layer` 0 is the input layer
/// and `layer == depth` the output layer; `time` starts at 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Coord {
    pub layer: usize,
    pub unit: usize,
    pub time: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub kind: NodeKind,
    pub coord: Option<Coord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
}

/// The first broken `SharedWeightNet` invariant found by [`SharedWeightNet::validate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    EdgeEndpoint { edge: usize },
    ParamIndexRange { edge: usize },
    Acyclicity,
    TopologicalOrder { edge: usize },
    SourceHasIncoming { node: usize },
    OutputHasOutgoing { node: usize },
    UnusedParam { param: usize },
}

impl Violation {
    /// Short invariant name, stable for reports.
    pub fn name(&self) -> &'static str {
        match self {
            Violation::EdgeEndpoint { .. } => "edge endpoint",
            Violation::ParamIndexRange { .. } => "param index range",
            Violation::Acyclicity => "acyclicity",
            Violation::TopologicalOrder { .. } => "topological order",
            Violation::SourceHasIncoming { .. } => "source incoming edge",
            Violation::OutputHasOutgoing { .. } => "output outgoing edge",
            Violation::UnusedParam { .. } => "unused parameter",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EdgeEndpoint { edge } => write!(f, "{} (edge {edge})", self.name()),
            Violation::ParamIndexRange { edge } => write!(f, "{} (edge {edge})", self.name()),
            Violation::Acyclicity => f.write_str(self.name()),
            Violation::TopologicalOrder { edge } => write!(f, "{} (edge {edge})", self.name()),
            Violation::SourceHasIncoming { node } => write!(f, "{} (node {node})", self.name()),
            Violation::OutputHasOutgoing { node } => write!(f, "{} (node {node})", self.name()),
            Violation::UnusedParam { param } => write!(f, "{} (param {param})", self.name()),
        }
    }
}

/// Which time steps carry output nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Readout {
    #[default]
    EveryStep,
    /// Only `t = T` has output nodes (sequence-to-one tasks).
    FinalStep,
}

/// Shape of a (possibly multi-layer) plain RNN.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RnnSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub length: usize,
    pub bias: bool,
    pub readout: Readout,
}

impl RnnSpec {
    pub fn new(input_dim: usize, hidden_dims: &[usize], output_dim: usize, length: usize) -> Self {
        Self {
            input_dim,
            hidden_dims: hidden_dims.to_vec(),
            output_dim,
            length,
            bias: false,
            readout: Readout::EveryStep,
        }
    }

    pub fn single_layer(input_dim: usize, hidden: usize, output_dim: usize, length: usize) -> Self {
        Self::new(input_dim, &[hidden], output_dim, length)
    }

    pub fn with_bias(mut self, bias: bool) -> Self {
        self.bias = bias;
        self
    }

    pub fn with_readout(mut self, readout: Readout) -> Self {
        self.readout = readout;
        self
    }

    /// Number of weight layers (hidden layers + 1).
    pub fn depth(&self) -> usize {
        self.hidden_dims.len() + 1
    }

    /// Width of layer `i`, with layer 0 the input and layer `depth` the output.
    pub fn width(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else if layer < self.depth() {
            self.hidden_dims[layer - 1]
        } else {
            self.output_dim
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth() < 2 {
            return Err(Error::InvalidSpec("depth must be at least 2 (one hidden layer)".into()));
        }
        if self.length < 1 {
            return Err(Error::InvalidSpec("length must be at least 1".into()));
        }
        if self.input_dim < 1 {
            return Err(Error::InvalidSpec("input_dim must be at least 1".into()));
        }
        if self.output_dim < 1 {
            return Err(Error::InvalidSpec("output_dim must be at least 1".into()));
        }
        if let Some(i) = self.hidden_dims.iter().position(|&h| h < 1) {
            return Err(Error::InvalidSpec(format!("hidden layer {} has width 0", i + 1)));
        }
        Ok(())
    }

    /// Time steps that carry output nodes.
    pub fn output_times(&self) -> core::ops::RangeInclusive<usize> {
        match self.readout {
            Readout::EveryStep => 1..=self.length,
            Readout::FinalStep => self.length..=self.length,
        }
    }
}

/// A dense `rows x cols` matrix stored row-major inside the parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatrixSlot {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl MatrixSlot {
    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.rows && col < self.cols);
        self.offset + row * self.cols + col
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSlots {
    pub w_in: MatrixSlot,
    /// Absent when `length == 1`: no recurrent edge exists to carry it.
    pub w_rec: Option<MatrixSlot>,
    pub bias: Option<usize>,
}

/// What a single parameter index means in an unrolled RNN.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    Input { layer: usize, row: usize, col: usize },
    Recurrent { layer: usize, row: usize, col: usize },
    HiddenBias { layer: usize, unit: usize },
    Output { row: usize, col: usize },
    OutputBias { unit: usize },
}

/// Parameter-vector layout of an unrolled RNN. Per hidden layer `i`
/// (1-based): `W_in^i`, then `W_rec^i`, then the bias; finally `W_out` and
/// the output bias.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RnnLayout {
    layers: Vec<LayerSlots>,
    pub w_out: MatrixSlot,
    pub b_out: Option<usize>,
    num_params: usize,
}

impl RnnLayout {
    pub fn new(spec: &RnnSpec) -> Self {
        let mut offset = 0;
        let mut layers = Vec::with_capacity(spec.hidden_dims.len());
        for i in 1..spec.depth() {
            let (rows, cols) = (spec.width(i), spec.width(i - 1));
            let w_in = MatrixSlot { offset, rows, cols };
            offset += w_in.len();
            let w_rec = (spec.length >= 2).then(|| {
                let slot = MatrixSlot { offset, rows, cols: rows };
                offset += slot.len();
                slot
            });
            let bias = spec.bias.then(|| {
                let b = offset;
                offset += rows;
                b
            });
            layers.push(LayerSlots { w_in, w_rec, bias });
        }
        let d = spec.depth();
        let w_out = MatrixSlot { offset, rows: spec.width(d), cols: spec.width(d - 1) };
        offset += w_out.len();
        let b_out = spec.bias.then(|| {
            let b = offset;
            offset += spec.output_dim;
            b
        });
        Self { layers, w_out, b_out, num_params: offset }
    }

    /// Slots of hidden layer `layer` (1-based).
    pub fn layer(&self, layer: usize) -> &LayerSlots {
        &self.layers[layer - 1]
    }

    pub fn num_hidden_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn role(&self, param: usize) -> Option<ParamRole> {
        for (li, slots) in self.layers.iter().enumerate() {
            let layer = li + 1;
            if slots.w_in.range().contains(&param) {
                let k = param - slots.w_in.offset;
                return Some(ParamRole::Input { layer, row: k / slots.w_in.cols, col: k % slots.w_in.cols });
            }
            if let Some(rec) = slots.w_rec {
                if rec.range().contains(&param) {
                    let k = param - rec.offset;
                    return Some(ParamRole::Recurrent { layer, row: k / rec.cols, col: k % rec.cols });
                }
            }
            if let Some(b) = slots.bias {
                if (b..b + slots.w_in.rows).contains(&param) {
                    return Some(ParamRole::HiddenBias { layer, unit: param - b });
                }
            }
        }
        if self.w_out.range().contains(&param) {
            let k = param - self.w_out.offset;
            return Some(ParamRole::Output { row: k / self.w_out.cols, col: k % self.w_out.cols });
        }
        if let Some(b) = self.b_out {
            if (b..b + self.w_out.rows).contains(&param) {
                return Some(ParamRole::OutputBias { unit: param - b });
            }
        }
        None
    }
}

/// Node-id lookup tables for an unrolled RNN.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RnnNodes {
    pub bias: Option<usize>,
    /// `inputs[t - 1][k]`
    inputs: Vec<Vec<usize>>,
    /// `hidden[i - 1][t - 1][j]`
    hidden: Vec<Vec<Vec<usize>>>,
    /// `outputs[t - 1][j]`, empty for steps without outputs.
    outputs: Vec<Vec<usize>>,
}

impl RnnNodes {
    pub fn input(&self, time: usize, unit: usize) -> usize {
        self.inputs[time - 1][unit]
    }

    pub fn hidden(&self, layer: usize, time: usize, unit: usize) -> usize {
        self.hidden[layer - 1][time - 1][unit]
    }

    pub fn hidden_at(&self, layer: usize, time: usize) -> &[usize] {
        &self.hidden[layer - 1][time - 1]
    }

    pub fn outputs_at(&self, time: usize) -> &[usize] {
        &self.outputs[time - 1]
    }
}

/// Everything an unrolled RNN keeps beyond the raw graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RnnInfo {
    pub spec: RnnSpec,
    pub layout: RnnLayout,
    pub nodes: RnnNodes,
}

/// A DAG with a parameter map. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedWeightNet {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    param_of_edge: Vec<usize>,
    num_params: usize,
    in_offsets: Vec<usize>,
    in_edges: Vec<usize>,
    param_edges: Vec<Vec<usize>>,
    input_nodes: Vec<usize>,
    output_nodes: Vec<usize>,
    rnn: Option<RnnInfo>,
}

impl SharedWeightNet {
    /// Builds and validates an arbitrary shared-weight net.
    pub fn from_parts(
        nodes: Vec<Node>,
        edges: Vec<Edge>,
        param_of_edge: Vec<usize>,
        num_params: usize,
    ) -> Result<Self> {
        let net = Self::from_parts_unchecked(nodes, edges, param_of_edge, num_params);
        net.validate().map_err(Error::InvalidNet)?;
        Ok(net)
    }

    /// Same as [`from_parts`](Self::from_parts) without validation; the
    /// result may violate the invariants and should only be handed to
    /// [`validate`](Self::validate).
    pub fn from_parts_unchecked(
        nodes: Vec<Node>,
        edges: Vec<Edge>,
        param_of_edge: Vec<usize>,
        num_params: usize,
    ) -> Self {
        assert_eq!(edges.len(), param_of_edge.len(), "one parameter index per edge");
        let n = nodes.len();
        let mut counts = vec![0usize; n + 1];
        for e in &edges {
            if e.dst < n {
                counts[e.dst + 1] += 1;
            }
        }
        for v in 0..n {
            counts[v + 1] += counts[v];
        }
        let in_offsets = counts.clone();
        let mut fill = counts;
        let mut in_edges = vec![0usize; in_offsets[n]];
        for (id, e) in edges.iter().enumerate() {
            if e.dst < n {
                in_edges[fill[e.dst]] = id;
                fill[e.dst] += 1;
            }
        }
        let mut param_edges = vec![Vec::new(); num_params];
        for (id, &p) in param_of_edge.iter().enumerate() {
            if p < num_params {
                param_edges[p].push(id);
            }
        }
        let input_nodes = (0..n).filter(|&v| nodes[v].kind == NodeKind::Input).collect();
        let output_nodes = (0..n).filter(|&v| nodes[v].kind == NodeKind::Output).collect();
        Self {
            nodes,
            edges,
            param_of_edge,
            num_params,
            in_offsets,
            in_edges,
            param_edges,
            input_nodes,
            output_nodes,
            rnn: None,
        }
    }

    /// Unrolls an RNN through `spec.length` time steps.
    ///
    /// Node order: the bias node (if any), all input nodes `(t, k)`, then for
    /// each `t` the hidden layers bottom-up followed by that step's outputs.
    /// `h_0 = 0` is realized by giving `t = 1` no recurrent in-edges.
    pub fn build_rnn(spec: &RnnSpec) -> Result<Self> {
        spec.validate()?;
        let layout = RnnLayout::new(spec);
        let d = spec.depth();
        let big_t = spec.length;

        let mut nodes = Vec::new();
        let mut push = |kind, coord| {
            nodes.push(Node { kind, coord });
            nodes.len() - 1
        };
        let bias = spec.bias.then(|| push(NodeKind::Bias, None));
        let inputs: Vec<Vec<usize>> = (1..=big_t)
            .map(|time| {
                (0..spec.input_dim)
                    .map(|unit| push(NodeKind::Input, Some(Coord { layer: 0, unit, time })))
                    .collect()
            })
            .collect();
        let mut hidden = vec![Vec::with_capacity(big_t); d - 1];
        let mut outputs = vec![Vec::new(); big_t];
        for time in 1..=big_t {
            for layer in 1..d {
                let ids = (0..spec.width(layer))
                    .map(|unit| push(NodeKind::Internal, Some(Coord { layer, unit, time })))
                    .collect();
                hidden[layer - 1].push(ids);
            }
            if spec.output_times().contains(&time) {
                outputs[time - 1] = (0..spec.output_dim)
                    .map(|unit| push(NodeKind::Output, Some(Coord { layer: d, unit, time })))
                    .collect();
            }
        }
        let rnn_nodes = RnnNodes { bias, inputs, hidden, outputs };

        let mut edges = Vec::new();
        let mut params = Vec::new();
        let mut connect = |src: usize, dst: usize, p: usize| {
            edges.push(Edge { src, dst });
            params.push(p);
        };
        for time in 1..=big_t {
            for layer in 1..d {
                let slots = layout.layer(layer);
                for j in 0..spec.width(layer) {
                    let dst = rnn_nodes.hidden(layer, time, j);
                    for k in 0..spec.width(layer - 1) {
                        let src = if layer == 1 {
                            rnn_nodes.input(time, k)
                        } else {
                            rnn_nodes.hidden(layer - 1, time, k)
                        };
                        connect(src, dst, slots.w_in.index(j, k));
                    }
                    if let (Some(rec), true) = (slots.w_rec, time >= 2) {
                        for k in 0..spec.width(layer) {
                            connect(rnn_nodes.hidden(layer, time - 1, k), dst, rec.index(j, k));
                        }
                    }
                    if let (Some(b), Some(bn)) = (slots.bias, bias) {
                        connect(bn, dst, b + j);
                    }
                }
            }
            for (j, &dst) in rnn_nodes.outputs_at(time).iter().enumerate() {
                for k in 0..spec.width(d - 1) {
                    connect(rnn_nodes.hidden(d - 1, time, k), dst, layout.w_out.index(j, k));
                }
                if let (Some(b), Some(bn)) = (layout.b_out, bias) {
                    connect(bn, dst, b + j);
                }
            }
        }

        let mut net = Self::from_parts_unchecked(nodes, edges, params, layout.num_params());
        net.rnn = Some(RnnInfo { spec: spec.clone(), layout, nodes: rnn_nodes });
        net.validate().map_err(Error::InvalidNet)?;
        Ok(net)
    }

    /// Fully connected ReLU net without sharing: one parameter per edge.
    pub fn build_feedforward(layer_dims: &[usize]) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::InvalidSpec("a feedforward net needs at least 2 layers".into()));
        }
        if layer_dims.contains(&0) {
            return Err(Error::InvalidSpec("layer widths must be positive".into()));
        }
        let last = layer_dims.len() - 1;
        let mut nodes = Vec::new();
        let mut layer_ids = Vec::with_capacity(layer_dims.len());
        for (layer, &width) in layer_dims.iter().enumerate() {
            let kind = match layer {
                0 => NodeKind::Input,
                l if l == last => NodeKind::Output,
                _ => NodeKind::Internal,
            };
            let ids: Vec<usize> = (0..width)
                .map(|unit| {
                    nodes.push(Node { kind, coord: Some(Coord { layer, unit, time: 1 }) });
                    nodes.len() - 1
                })
                .collect();
            layer_ids.push(ids);
        }
        let mut edges = Vec::new();
        for layer in 1..layer_dims.len() {
            for &dst in &layer_ids[layer] {
                for &src in &layer_ids[layer - 1] {
                    edges.push(Edge { src, dst });
                }
            }
        }
        let m = edges.len();
        Self::from_parts(nodes, edges, (0..m).collect(), m)
    }

    /// Checks every structural invariant and reports the first violation.
    pub fn validate(&self) -> core::result::Result<(), Violation> {
        let n = self.nodes.len();
        for (id, e) in self.edges.iter().enumerate() {
            if e.src >= n || e.dst >= n {
                return Err(Violation::EdgeEndpoint { edge: id });
            }
        }
        for (id, &p) in self.param_of_edge.iter().enumerate() {
            if p >= self.num_params {
                return Err(Violation::ParamIndexRange { edge: id });
            }
        }
        if !self.is_acyclic() {
            return Err(Violation::Acyclicity);
        }
        if let Some(id) = self.edges.iter().position(|e| e.src >= e.dst) {
            return Err(Violation::TopologicalOrder { edge: id });
        }
        for e in &self.edges {
            match self.nodes[e.dst].kind {
                NodeKind::Input | NodeKind::Bias => {
                    return Err(Violation::SourceHasIncoming { node: e.dst })
                }
                _ => {}
            }
            if self.nodes[e.src].kind == NodeKind::Output {
                return Err(Violation::OutputHasOutgoing { node: e.src });
            }
        }
        if let Some(param) = self.param_edges.iter().position(Vec::is_empty) {
            return Err(Violation::UnusedParam { param });
        }
        Ok(())
    }

    // Kahn's algorithm; independent of the stored order.
    fn is_acyclic(&self) -> bool {
        let n = self.nodes.len();
        let mut indegree = vec![0usize; n];
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
        for e in &self.edges {
            indegree[e.dst] += 1;
            out[e.src].push(e.dst);
        }
        let mut stack: Vec<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
        let mut seen = 0;
        while let Some(v) = stack.pop() {
            seen += 1;
            for &w in &out[v] {
                indegree[w] -= 1;
                if indegree[w] == 0 {
                    stack.push(w);
                }
            }
        }
        seen == n
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn param_of_edge(&self) -> &[usize] {
        &self.param_of_edge
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edge ids ending at `node`.
    #[inline]
    pub fn incoming(&self, node: usize) -> &[usize] {
        &self.in_edges[self.in_offsets[node]..self.in_offsets[node + 1]]
    }

    /// `E_i`: ids of the edges sharing parameter `param`.
    pub fn edges_for_param(&self, param: usize) -> Result<&[usize]> {
        self.param_edges
            .get(param)
            .map(Vec::as_slice)
            .ok_or(Error::ParamIndex { index: param, num_params: self.num_params })
    }

    /// Input nodes in the order input vectors are read.
    pub fn input_nodes(&self) -> &[usize] {
        &self.input_nodes
    }

    /// Output nodes in the order output vectors are written.
    pub fn output_nodes(&self) -> &[usize] {
        &self.output_nodes
    }

    pub fn rnn(&self) -> Option<&RnnInfo> {
        self.rnn.as_ref()
    }

    /// True when no two edges share a parameter.
    pub fn is_one_to_one(&self) -> bool {
        self.param_edges.iter().all(|e| e.len() == 1)
    }
}
