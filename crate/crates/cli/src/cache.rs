//! Ground-space memoization under `SNLAB_CACHE_DIR`.
//!
//! A cache entry is the concatenation of the binary state files of one
//! ground space, keyed by a hash of the category data, the lattice and the
//! seed. State files carry the basis fingerprint, so a stale or foreign
//! entry fails to decode and is recomputed.

use std::hash::{DefaultHasher, Hash, Hasher};
use std::path::PathBuf;

use snlab::fusion_category::{to_json, FusionCategory};
use snlab::hamiltonian::{decode_state, encode_state};
use snlab::lattice::StringNetBasis;
use snlab::C64;

pub const ENV: &str = "SNLAB_CACHE_DIR";

pub struct GroundCache {
    path: PathBuf,
}

impl GroundCache {
    /// `None` when the environment variable is unset or empty.
    pub fn open(cat: &FusionCategory, basis: &StringNetBasis, lattice_tag: &str, seed: u64) -> Option<Self> {
        let dir = std::env::var_os(ENV).filter(|d| !d.is_empty())?;
        let mut h = DefaultHasher::new();
        to_json(cat).ok()?.hash(&mut h);
        lattice_tag.hash(&mut h);
        seed.hash(&mut h);
        basis.fingerprint().hash(&mut h);
        Some(GroundCache { path: PathBuf::from(dir).join(format!("gs-{:016x}.bin", h.finish())) })
    }

    pub fn load(&self, basis: &StringNetBasis) -> Option<Vec<Vec<C64>>> {
        let bytes = std::fs::read(&self.path).ok()?;
        let chunk = 24 + 16 * basis.len();
        if bytes.len() % chunk != 0 {
            return None;
        }
        bytes.chunks(chunk).map(|c| decode_state(basis, c).ok()).collect()
    }

    /// Best effort: a cache that cannot be written is skipped.
    pub fn store(&self, basis: &StringNetBasis, vecs: &[Vec<C64>]) {
        let bytes: Vec<u8> = vecs.iter().flat_map(|v| encode_state(basis, v)).collect();
        if let Some(parent) = self.path.parent() {
            let _ = std::fs::create_dir_all(parent);
        }
        let _ = std::fs::write(&self.path, bytes);
    }
}
