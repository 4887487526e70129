use super::{propagate_shapes, ArchError, ChannelGroup, GroupReason, InputShape, LayerKind, LayerSpec, NetworkGraph};

/// Incremental construction of a [`NetworkGraph`]. Each layer method wires
/// an edge from the given producer(s) and returns the new layer's id.
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    graph: NetworkGraph,
}

impl GraphBuilder {
    pub fn new(input_shape: InputShape) -> Self {
        Self { graph: NetworkGraph { layers: Vec::new(), edges: Vec::new(), channel_groups: Vec::new(), input_shape } }
    }

    pub fn push(&mut self, layer: LayerSpec, from: &[&str]) -> String {
        let id = layer.id.clone();
        for p in from {
            self.graph.edges.push((p.to_string(), id.clone()));
        }
        self.graph.layers.push(layer);
        id
    }

    fn simple(&mut self, kind: LayerKind, from: &str, id: &str) -> String {
        self.push(LayerSpec::new(id, kind), &[from])
    }

    pub fn input(&mut self, id: &str) -> String {
        self.push(LayerSpec::new(id, LayerKind::Input), &[])
    }

    pub fn conv(
        &mut self,
        from: &str,
        id: &str,
        filters: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> String {
        let mut l = LayerSpec::new(id, LayerKind::Conv);
        l.out_channels = Some(filters);
        l.kernel_size = Some(kernel);
        l.stride = stride;
        l.padding = padding;
        self.push(l, &[from])
    }

    pub fn depthwise(&mut self, from: &str, id: &str, kernel: usize, stride: usize, padding: usize) -> String {
        let mut l = LayerSpec::new(id, LayerKind::DepthwiseConv);
        l.kernel_size = Some(kernel);
        l.stride = stride;
        l.padding = padding;
        self.push(l, &[from])
    }

    pub fn dense(&mut self, from: &str, id: &str, units: usize) -> String {
        let mut l = LayerSpec::new(id, LayerKind::Dense);
        l.out_channels = Some(units);
        self.push(l, &[from])
    }

    pub fn pool_max(&mut self, from: &str, id: &str, kernel: usize, stride: usize) -> String {
        let mut l = LayerSpec::new(id, LayerKind::PoolMax);
        l.kernel_size = Some(kernel);
        l.stride = stride;
        self.push(l, &[from])
    }

    pub fn pool_avg(&mut self, from: &str, id: &str, kernel: usize, stride: usize) -> String {
        let mut l = LayerSpec::new(id, LayerKind::PoolAvg);
        l.kernel_size = Some(kernel);
        l.stride = stride;
        self.push(l, &[from])
    }

    pub fn global_avg_pool(&mut self, from: &str, id: &str) -> String {
        self.simple(LayerKind::GlobalAvgPool, from, id)
    }

    pub fn flatten(&mut self, from: &str, id: &str) -> String {
        self.simple(LayerKind::Flatten, from, id)
    }

    pub fn activation(&mut self, from: &str, id: &str) -> String {
        self.simple(LayerKind::Activation, from, id)
    }

    pub fn batchnorm(&mut self, from: &str, id: &str) -> String {
        self.simple(LayerKind::Batchnorm, from, id)
    }

    pub fn output(&mut self, from: &str, id: &str) -> String {
        self.simple(LayerKind::Output, from, id)
    }

    pub fn add(&mut self, from: &[&str], id: &str) -> String {
        self.push(LayerSpec::new(id, LayerKind::Add), from)
    }

    pub fn group(&mut self, reason: GroupReason, members: &[String]) {
        self.graph.channel_groups.push(ChannelGroup::new(reason, members.iter().cloned()));
    }

    /// Marks a layer protected, which also clears its prunable flag.
    pub fn protect(&mut self, id: &str) {
        if let Some(l) = self.graph.layer_mut(id) {
            l.protected = true;
            l.prunable = false;
        }
    }

    pub fn layer_mut(&mut self, id: &str) -> Option<&mut LayerSpec> {
        self.graph.layer_mut(id)
    }

    /// The graph as built so far, shapes unresolved.
    pub fn graph(&self) -> NetworkGraph {
        self.graph.clone()
    }

    pub fn build(self) -> Result<NetworkGraph, ArchError> {
        propagate_shapes(&self.graph, self.graph.input_shape)
    }
}
