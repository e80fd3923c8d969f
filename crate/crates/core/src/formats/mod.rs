//! On-disk formats: HBV1 volumes, HSCKPT1 checkpoints, the JSON dataset
//! manifest, and PGM slice renders. Byte layouts are documented in
//! docs/FORMATS.md.

mod checkpoint;
mod hbv;
mod manifest;
mod pgm;

pub use checkpoint::{AdamSnapshot, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use hbv::{read_hbv, write_hbv, HBV_MAGIC};
pub use manifest::{read_manifest, write_manifest, ManifestEntry};
pub use pgm::write_pgm;
