//! The shaping state machine.
//!
//! Each tick samples a delay `d` and a size `x` from the configured
//! distributions, then emits exactly one record of `x` payload bytes: the
//! head of the queue (padded, or fragmented if longer than `x`), or cover
//! bytes when the queue is empty. Only the head message is considered per
//! tick; short messages are padded, never packed together.
//!
//! The `(d, x)` sequence comes from a dedicated generator seeded from
//! `rng_seed` and is consumed identically whatever the queue holds. Padding
//! and cover bytes come from a separate fill source, so the schedule is a
//! function of the seed and configuration alone.

use std::collections::VecDeque;
use std::fmt;
use std::time::Duration;

use rand::rngs::OsRng;
use rand::{RngCore, SeedableRng, TryRngCore};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::config::ShaperConfig;
use crate::wire::{RecoveryHeader, ShapedRecord};

/// Default bound on a single message being reassembled (16 MiB).
pub const DEFAULT_REASSEMBLY_CAP: usize = 16 * 1024 * 1024;

const SCHEDULE_STREAM: u64 = 0;
const FILL_STREAM: u64 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ShaperError {
    #[error("sender is closed")]
    Closed,
    #[error(
        "queue full: {queued} bytes queued, limit {limit}, message of {msg_len} bytes rejected"
    )]
    QueueFull {
        queued: usize,
        limit: usize,
        msg_len: usize,
    },
}

/// Where padding and cover bytes come from.
pub enum FillSource {
    /// Seeded stream derived from the config seed; reproducible.
    Seeded,
    /// Operating-system randomness, for live connections.
    Os,
}

/// One queued message; `offset` marks how much was already sent as fragments.
struct Pending {
    data: Vec<u8>,
    offset: usize,
}

impl Pending {
    fn remaining(&self) -> &[u8] {
        &self.data[self.offset..]
    }
}

/// Proof that a delay was sampled; completing it samples the size.
#[derive(Debug)]
#[must_use]
pub struct PendingTick {
    delay: Duration,
}

impl PendingTick {
    pub fn delay(&self) -> Duration {
        self.delay
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TickOutput {
    pub delay_before: Duration,
    pub record: ShapedRecord,
    pub end_of_stream: bool,
}

pub struct Shaper {
    config: ShaperConfig,
    queue: VecDeque<Pending>,
    queued_bytes: usize,
    seq: u16,
    schedule_rng: ChaCha20Rng,
    fill_rng: Box<dyn RngCore + Send>,
    closing: bool,
    finished: bool,
    ticks: u64,
}

impl fmt::Debug for Shaper {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Shaper")
            .field("config", &self.config)
            .field("queue_len", &self.queue.len())
            .field("queued_bytes", &self.queued_bytes)
            .field("seq", &self.seq)
            .field("closing", &self.closing)
            .field("finished", &self.finished)
            .field("ticks", &self.ticks)
            .finish()
    }
}

impl Shaper {
    /// A fully seeded shaper, as used by simulation and replay.
    pub fn new(config: ShaperConfig) -> Self {
        Self::with_fill(config, FillSource::Seeded)
    }

    pub fn with_fill(config: ShaperConfig, fill: FillSource) -> Self {
        let mut schedule_rng = ChaCha20Rng::seed_from_u64(config.rng_seed);
        schedule_rng.set_stream(SCHEDULE_STREAM);
        let fill_rng: Box<dyn RngCore + Send> = match fill {
            FillSource::Seeded => {
                let mut rng = ChaCha20Rng::seed_from_u64(config.rng_seed);
                rng.set_stream(FILL_STREAM);
                Box::new(rng)
            }
            FillSource::Os => Box::new(OsRng.unwrap_err()),
        };
        Self {
            config,
            queue: VecDeque::new(),
            queued_bytes: 0,
            seq: 0,
            schedule_rng,
            fill_rng,
            closing: false,
            finished: false,
            ticks: 0,
        }
    }

    pub fn config(&self) -> &ShaperConfig {
        &self.config
    }

    pub fn queued_bytes(&self) -> usize {
        self.queued_bytes
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_closing(&self) -> bool {
        self.closing
    }

    /// True once the stream_end record has been emitted.
    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    /// Appends a message to the tail of the queue. Empty messages are allowed.
    pub fn enqueue(&mut self, msg: Vec<u8>) -> Result<(), ShaperError> {
        if self.closing {
            return Err(ShaperError::Closed);
        }
        if let Some(limit) = self.config.max_queue_bytes {
            if self.queued_bytes + msg.len() > limit {
                return Err(ShaperError::QueueFull {
                    queued: self.queued_bytes,
                    limit,
                    msg_len: msg.len(),
                });
            }
        }
        self.queued_bytes += msg.len();
        self.queue.push_back(Pending {
            data: msg,
            offset: 0,
        });
        self.check_accounting();
        Ok(())
    }

    /// Marks the shaper as closing: the queue drains normally, then exactly one
    /// stream_end record is emitted. Idempotent.
    pub fn begin_close(&mut self) {
        self.closing = true;
    }

    /// Runs one full iteration: sample `d`, sample `x`, build the record.
    pub fn tick(&mut self) -> TickOutput {
        let pending = self.begin_tick();
        self.complete_tick(pending)
    }

    /// First half of a tick: samples the delay to wait before sending.
    ///
    /// A live sender waits out the delay between the two halves so the queue
    /// is inspected after the pause, as late data can still make this record.
    pub fn begin_tick(&mut self) -> PendingTick {
        PendingTick {
            delay: self.config.delay.sample(&mut self.schedule_rng),
        }
    }

    /// Second half of a tick: samples the size and emits the record.
    pub fn complete_tick(&mut self, pending: PendingTick) -> TickOutput {
        let x = self.config.size.sample(&mut self.schedule_rng);
        let x_len = usize::from(x);
        let seq = self.seq;
        self.seq = self.seq.wrapping_add(1);
        self.ticks += 1;

        let (header, mut payload, real) = match self.queue.front_mut() {
            Some(head) => {
                let remaining = head.remaining().len();
                if remaining <= x_len {
                    let mut payload = Vec::with_capacity(x_len);
                    payload.extend_from_slice(head.remaining());
                    self.queue.pop_front();
                    self.queued_bytes -= remaining;
                    (
                        RecoveryHeader::data(x, remaining as u16, false, seq),
                        payload,
                        remaining,
                    )
                } else {
                    let mut payload = Vec::with_capacity(x_len);
                    payload.extend_from_slice(&head.remaining()[..x_len]);
                    head.offset += x_len;
                    self.queued_bytes -= x_len;
                    (RecoveryHeader::data(x, x, true, seq), payload, x_len)
                }
            }
            None if self.closing && !self.finished => {
                self.finished = true;
                (
                    RecoveryHeader::stream_end(x, seq),
                    Vec::with_capacity(x_len),
                    0,
                )
            }
            // Ticks after stream_end keep the schedule and emit cover.
            None => (RecoveryHeader::cover(x, seq), Vec::with_capacity(x_len), 0),
        };
        payload.resize(x_len, 0);
        self.fill_rng.fill_bytes(&mut payload[real..]);
        self.check_accounting();

        let end_of_stream = header.stream_end;
        let record = ShapedRecord::new(header, payload).expect("shaper builds valid records");
        TickOutput {
            delay_before: pending.delay,
            record,
            end_of_stream,
        }
    }

    fn check_accounting(&self) {
        debug_assert_eq!(
            self.queued_bytes,
            self.queue
                .iter()
                .map(|p| p.remaining().len())
                .sum::<usize>(),
            "queued_bytes out of sync with queue contents"
        );
        if let Some(limit) = self.config.max_queue_bytes {
            debug_assert!(self.queued_bytes <= limit);
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReassemblyError {
    #[error("stream ended without a clean stream_end marker ({buffered} bytes of a partial message buffered)")]
    Truncated { buffered: usize },
    #[error("message exceeds the reassembly cap of {cap} bytes")]
    MessageTooLarge { cap: usize },
    #[error("record received after stream_end")]
    AfterEnd,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reassembled {
    Message(Vec<u8>),
    End,
}

/// Receiver-side state: discards cover, joins fragments, strips padding.
#[derive(Debug)]
pub struct Reassembler {
    buf: Vec<u8>,
    in_message: bool,
    cap: usize,
    ended: bool,
}

impl Default for Reassembler {
    fn default() -> Self {
        Self::new()
    }
}

impl Reassembler {
    pub fn new() -> Self {
        Self::with_cap(DEFAULT_REASSEMBLY_CAP)
    }

    pub fn with_cap(cap: usize) -> Self {
        Self {
            buf: Vec::new(),
            in_message: false,
            cap,
            ended: false,
        }
    }

    pub fn is_ended(&self) -> bool {
        self.ended
    }

    pub fn push(&mut self, record: &ShapedRecord) -> Result<Option<Reassembled>, ReassemblyError> {
        if self.ended {
            return Err(ReassemblyError::AfterEnd);
        }
        let header = record.header();
        if header.stream_end {
            if self.in_message {
                return Err(ReassemblyError::Truncated {
                    buffered: self.buf.len(),
                });
            }
            self.ended = true;
            return Ok(Some(Reassembled::End));
        }
        if record.is_cover() {
            return Ok(None);
        }
        let real = record.real_bytes();
        if self.buf.len() + real.len() > self.cap {
            return Err(ReassemblyError::MessageTooLarge { cap: self.cap });
        }
        self.buf.extend_from_slice(real);
        if header.more_fragments {
            self.in_message = true;
            Ok(None)
        } else {
            self.in_message = false;
            Ok(Some(Reassembled::Message(std::mem::take(&mut self.buf))))
        }
    }

    /// Checks that the stream terminated cleanly.
    pub fn finish(&self) -> Result<(), ReassemblyError> {
        if self.ended {
            Ok(())
        } else {
            Err(ReassemblyError::Truncated {
                buffered: self.buf.len(),
            })
        }
    }
}

/// Reassembles a complete record stream into the original messages.
pub fn reassemble<'a, I>(records: I) -> Result<Vec<Vec<u8>>, ReassemblyError>
where
    I: IntoIterator<Item = &'a ShapedRecord>,
{
    let mut r = Reassembler::new();
    let mut out = Vec::new();
    for record in records {
        match r.push(record)? {
            Some(Reassembled::Message(m)) => out.push(m),
            Some(Reassembled::End) => break,
            None => {}
        }
    }
    r.finish()?;
    Ok(out)
}
