//! Independent link padding for device traffic.
//!
//! Messages handed to a [`Sender`](transport::Sender) are queued, then sent as
//! fixed-header records whose sizes and send times are drawn from
//! configured distributions: real data is padded or fragmented to fit, and
//! cover records fill every slot with nothing queued. The peer's
//! [`Receiver`](transport::Receiver) discards cover and reassembles messages.
//!
//! The [`replay`] module drives the same shaper against recorded or synthetic
//! traffic traces under a virtual clock to measure overhead bandwidth and
//! check that the shaped schedule carries no information about the workload.

pub mod config;
pub mod dist;
pub mod replay;
pub mod shaper;
pub mod stats;
pub mod transport;
pub mod wire;

pub use config::{ConfigError, ConfigFile, ShaperConfig};
pub use dist::{DelayDist, DistError, DistributionSpec, Role, SizeDist};
pub use shaper::{
    reassemble, Reassembled, Reassembler, ReassemblyError, Shaper, ShaperError, TickOutput,
};
pub use wire::{read_record, RecordType, RecoveryHeader, ShapedRecord, WireError, HEADER_LEN};
