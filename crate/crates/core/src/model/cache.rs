use crate::error::{Error, Result};

/// Key/value rows of one layer, tagged with their original positions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LayerCache {
    positions: Vec<usize>,
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
}

impl LayerCache {
    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub(crate) fn keys(&self) -> &[Vec<f64>] {
        &self.keys
    }

    pub(crate) fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub(crate) fn push(&mut self, position: usize, key: Vec<f64>, value: Vec<f64>) {
        debug_assert!(self.positions.last().is_none_or(|&p| p < position));
        self.positions.push(position);
        self.keys.push(key);
        self.values.push(value);
    }
}

/// Per-layer KV cache. Rows keep their original position ids through
/// compaction; nothing is ever renumbered.
#[derive(Debug, Clone, PartialEq)]
pub struct KvCache {
    layers: Vec<LayerCache>,
}

impl KvCache {
    pub fn new(layers: usize) -> Self {
        Self {
            layers: vec![LayerCache::default(); layers],
        }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, l: usize) -> &LayerCache {
        &self.layers[l]
    }

    pub(crate) fn layer_mut(&mut self, l: usize) -> &mut LayerCache {
        &mut self.layers[l]
    }

    /// Cached row counts per layer.
    pub fn lens(&self) -> Vec<usize> {
        self.layers.iter().map(LayerCache::len).collect()
    }

    /// Drops every row of layer `l` whose position is not in `keep`
    /// (sorted). `keep` must be a subset of the cached positions.
    pub fn retain(&mut self, l: usize, keep: &[usize]) -> Result<()> {
        let layer = &mut self.layers[l];
        let mut k = 0;
        let mut mask = vec![false; layer.positions.len()];
        for (i, &p) in layer.positions.iter().enumerate() {
            if k < keep.len() && keep[k] == p {
                mask[i] = true;
                k += 1;
            }
        }
        if k != keep.len() {
            return Err(Error::internal(format!(
                "layer {} retain set is not a subset of cached positions",
                l + 1
            )));
        }
        let mut it = mask.iter();
        layer.keys.retain(|_| *it.next().unwrap());
        let mut it = mask.iter();
        layer.values.retain(|_| *it.next().unwrap());
        let mut it = mask.iter();
        layer.positions.retain(|_| *it.next().unwrap());
        Ok(())
    }

    /// Verifies each layer holds exactly the given positions.
    pub fn check_consistent<A: AsRef<[usize]>>(&self, active: &[A]) -> Result<()> {
        if active.len() != self.layers.len() {
            return Err(Error::internal(format!(
                "{} active sets for {} cached layers",
                active.len(),
                self.layers.len()
            )));
        }
        for (l, (layer, act)) in self.layers.iter().zip(active).enumerate() {
            if layer.positions != act.as_ref() {
                return Err(Error::internal(format!(
                    "layer {} cache holds {} rows but active set has {}",
                    l + 1,
                    layer.len(),
                    act.as_ref().len()
                )));
            }
        }
        Ok(())
    }
}
