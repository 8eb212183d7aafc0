//! Message model for simulated ranks: which cell data each rank must send,
//! the byte-level wire format, and the latency/bandwidth channel model.

pub mod channel;
pub mod plan;
pub mod wire;

pub use channel::{Channels, LinkModel};
pub use plan::{plan_messages, MsgSpec, Phase};
pub use wire::{DensityRecord, Header, PositionRecord, HEADER_BYTES};
