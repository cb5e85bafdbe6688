use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use super::dual::DualBasis;
use super::ntt::NttPlan;
use super::{RingError, RingParams};

/// Per-ring precomputation shared by every key, ciphertext and session on
/// the same `(t, α)`: the dual basis and the transform plan.
#[derive(Debug)]
pub struct RingContext {
    params: RingParams,
    dual: DualBasis,
    ntt: NttPlan,
}

type Cache = Mutex<HashMap<RingParams, Arc<RingContext>>>;

fn cache() -> &'static Cache {
    static CACHE: OnceLock<Cache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl RingContext {
    /// Builds the context without consulting the cache.
    pub fn build(params: RingParams) -> Result<Self, RingError> {
        Ok(Self { params, dual: DualBasis::compute(&params)?, ntt: NttPlan::for_linear(params.n()) })
    }

    /// Returns the memoised context for `params`, building it on first use.
    /// Construction happens outside the lock so distinct rings build in
    /// parallel; a racing duplicate is discarded.
    pub fn get(params: RingParams) -> Result<Arc<Self>, RingError> {
        if let Some(ctx) = cache().lock().expect("ring cache poisoned").get(&params) {
            return Ok(ctx.clone());
        }
        let built = Arc::new(Self::build(params)?);
        let mut guard = cache().lock().expect("ring cache poisoned");
        Ok(guard.entry(params).or_insert(built).clone())
    }

    pub fn for_ring(t: usize, alpha: u32) -> Result<Arc<Self>, RingError> {
        Self::get(RingParams::new(t, alpha)?)
    }

    pub fn params(&self) -> &RingParams {
        &self.params
    }

    pub fn dual(&self) -> &DualBasis {
        &self.dual
    }

    pub fn ntt(&self) -> &NttPlan {
        &self.ntt
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cache_returns_shared_instance() {
        let a = RingContext::for_ring(3, 3).unwrap();
        let b = RingContext::for_ring(3, 3).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        let handles: Vec<_> = (0..4).map(|_| std::thread::spawn(|| RingContext::for_ring(5, 2).unwrap())).collect();
        let all: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        assert!(all.windows(2).all(|w| Arc::ptr_eq(&w[0], &w[1])));
    }
}
