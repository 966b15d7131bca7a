//! Deterministic discrete-event core: exact virtual time, a `(time, seq)`
//! ordered event queue and the dispatch loop.

mod engine;
mod event;
mod time;

pub use engine::{Engine, EventQueue, Handler, RunSummary};
pub use event::{EventKind, JobIdx, ServerId, SimEvent, TaskIdx};
pub use time::SimTime;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The single random stream of a run. ChaCha output is platform independent.
pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}
