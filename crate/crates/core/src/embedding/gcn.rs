//! GCN encoder: `E^(l) = φ(Â E^(l-1) M^(l-1))` with `Â = D^{-1/2} (A + I) D^{-1/2}`.

use ndarray::{Array2, Zip};

use super::EmbeddingSpace;
use crate::error::{Error, Result};
use crate::kg::GraphStructure;

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct GcnCache {
    /// `Â E^(l-1)` per layer.
    propagated: Vec<Array2<f64>>,
    /// Pre-activations per layer.
    pre: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

fn check_dims(space: &EmbeddingSpace, graph: &GraphStructure) -> Result<()> {
    if graph.n_nodes() != space.n_entities() {
        return Err(Error::Input(format!(
            "graph has {} nodes but the entity table has {} rows",
            graph.n_nodes(),
            space.n_entities()
        )));
    }
    for (l, w) in space.gcn_weights.iter().enumerate() {
        if w.nrows() != space.dim || w.ncols() != space.dim {
            return Err(Error::Input(format!(
                "GCN weight {l} is {}x{}, expected {k}x{k}",
                w.nrows(),
                w.ncols(),
                k = space.dim
            )));
        }
    }
    Ok(())
}

pub fn gcn_forward_cached(space: &EmbeddingSpace, graph: &GraphStructure) -> Result<GcnCache> {
    check_dims(space, graph)?;
    let act = space.activation;
    let mut propagated = Vec::with_capacity(space.gcn_weights.len());
    let mut pre = Vec::with_capacity(space.gcn_weights.len());
    let mut h = space.entity_base.clone();
    for w in &space.gcn_weights {
        let p = graph.norm_adjacency.matmul(h.view());
        let z = p.dot(w);
        h = z.mapv(|v| act.apply(v));
        propagated.push(p);
        pre.push(z);
    }
    Ok(GcnCache {
        propagated,
        pre,
        output: h,
    })
}

pub fn gcn_forward(space: &EmbeddingSpace, graph: &GraphStructure) -> Result<Array2<f64>> {
    Ok(gcn_forward_cached(space, graph)?.output)
}

/// Backpropagates `d_output` through the layers; returns gradients for `E^(0)`
/// and each `M^(l)`.
pub fn gcn_backward(
    space: &EmbeddingSpace,
    graph: &GraphStructure,
    cache: &GcnCache,
    d_output: Array2<f64>,
) -> (Array2<f64>, Vec<Array2<f64>>) {
    let act = space.activation;
    let n_layers = space.gcn_weights.len();
    let mut d_weights = vec![Array2::zeros((0, 0)); n_layers];
    let mut d_h = d_output;
    for l in (0..n_layers).rev() {
        let mut d_z = d_h;
        Zip::from(&mut d_z)
            .and(&cache.pre[l])
            .for_each(|d, &z| *d *= act.derivative(z));
        d_weights[l] = cache.propagated[l].t().dot(&d_z);
        let d_p = d_z.dot(&space.gcn_weights[l].t());
        // Â is symmetric, so Âᵀ d_p = Â d_p
        d_h = graph.norm_adjacency.matmul(d_p.view());
    }
    (d_h, d_weights)
}
