use super::ParamSet;
use crate::error::{Error, Result};

/// Gradient accumulators for a parameter set plus the activations cached by
/// the most recent forward pass.
#[derive(Debug, Clone)]
pub struct GradientTape<C> {
    grads: ParamSet,
    cache: Option<C>,
}

impl<C> GradientTape<C> {
    pub fn new(params: &ParamSet) -> Self {
        Self {
            grads: params.zeros_like(),
            cache: None,
        }
    }

    pub fn record(&mut self, cache: C) {
        self.cache = Some(cache);
    }

    pub fn has_forward(&self) -> bool {
        self.cache.is_some()
    }

    /// Removes the cached forward activations; a second backward without a
    /// new forward fails.
    pub fn take_cache(&mut self) -> Result<C> {
        self.cache
            .take()
            .ok_or(Error::State("backward called without a preceding forward pass"))
    }

    pub fn grads(&self) -> &ParamSet {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut ParamSet {
        &mut self.grads
    }

    pub fn into_grads(self) -> ParamSet {
        self.grads
    }

    /// Zeroes every gradient and drops any cached forward pass.
    pub fn clear(&mut self) {
        self.grads.fill_zero();
        self.cache = None;
    }
}
