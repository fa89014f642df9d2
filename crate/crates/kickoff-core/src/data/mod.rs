//! Replay datasets: self-play collection, on-disk episode storage, and
//! 25-step chunk minibatching with prefix-replayed recurrent states.

pub mod chunks;
pub mod collect;
pub mod episode;
pub mod store;

pub use chunks::{
    chunk_count, global_dim, global_inputs, make_chunks, returns_to_go, ChunkBatch, ChunkSpec,
    ChunkStream, CHUNK_LEN,
};
pub use collect::{collect_episode, collect_selfplay, label_counts};
pub use episode::{config_hash, episode_return, trajectory_weight, EpisodeRecord};
pub use store::{
    read_dataset, read_episode, write_dataset, write_episode, IndexEntry, ReplayDataset,
};
