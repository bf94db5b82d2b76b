use fpmatch_core::harness::{Executor, Serial};
use rayon::prelude::*;

/// Serial below two jobs, otherwise a dedicated rayon pool. Results come
/// back in input order either way.
pub enum Jobs {
    Serial,
    Pool(rayon::ThreadPool),
}

impl Jobs {
    pub fn new(n: usize) -> Result<Self, crate::CliError> {
        if n == 0 {
            return Err(crate::CliError::usage("--jobs must be at least 1".into()));
        }
        if n == 1 {
            return Ok(Jobs::Serial);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(Jobs::Pool)
            .map_err(|e| crate::CliError::Runtime(format!("thread pool: {e}")))
    }
}

impl Executor for Jobs {
    fn map<I: Sync, O: Send>(&self, items: &[I], f: &(dyn Fn(&I) -> O + Sync)) -> Vec<O> {
        match self {
            Jobs::Serial => Serial.map(items, f),
            Jobs::Pool(p) => p.install(|| items.par_iter().map(f).collect()),
        }
    }
}
