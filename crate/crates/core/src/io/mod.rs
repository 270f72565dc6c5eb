//! On-disk session and checkpoint formats.

mod checkpoint;
mod session;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, Manifest, TensorEntry, CHECKPOINT_MAGIC};
pub use session::{read_session, write_session, KeyEvent, SessionHeader, SessionRecord, Split, SESSION_MAGIC};
