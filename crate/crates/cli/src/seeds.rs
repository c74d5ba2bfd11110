//! Sub-seeds from the master seed and a stable item id, so adding objects
//! or scenes never changes the seeds of existing ones.

use densegrasp::dataset::fnv1a64;
use densegrasp::geom::mix_seed;

pub fn sub_seed(master: u64, id: &str) -> u64 {
    mix_seed(master, fnv1a64(id.as_bytes()))
}

/// Streams derived from a scene seed.
pub const RENDER: u64 = 0x5245_4E44;
pub const DOWNSAMPLE: u64 = 0x444F_574E;
