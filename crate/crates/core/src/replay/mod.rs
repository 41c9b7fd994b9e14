//! Trace replay under a virtual clock.
//!
//! A replay feeds every trace event into a seeded [`Shaper`] at the event's
//! timestamp while the shaper ticks on its own sampled schedule. Time is kept
//! in integer nanoseconds, so runs are bit-identical across platforms and a
//! constant 50 ms delay is exactly 50 ms. Every emitted record is pushed
//! through a [`Reassembler`] and each message is checked byte-for-byte
//! against the trace placeholder it came from.
//!
//! Rates are application-layer: record header plus payload, no TCP/IP/link
//! headers. Reports also carry an on-wire estimate that adds a fixed
//! per-record overhead (40 bytes by default, roughly TCP/IPv4 headers).
//!
//! After the horizon the shaper is closed and drained so that every message
//! can be checked and its latency measured; records sent after the horizon
//! do not count towards the rates.

pub mod synth;
pub mod trace;

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use thiserror::Error;

use crate::config::{ConfigError, ShaperConfig, RNG_NAME};
use crate::dist::{DistributionSpec, Role};
use crate::shaper::{Reassembled, Reassembler, ReassemblyError, Shaper, ShaperError};
use crate::stats;
use crate::wire::{RecordType, HEADER_LEN};

pub use synth::{nest_like, sense_like, SyntheticTrace};
pub use trace::{load_trace, Trace, TraceError, TraceEvent};

/// Default per-record transport overhead for on-wire estimates, bytes.
pub const DEFAULT_WIRE_OVERHEAD: u32 = 40;

/// Peak detector threshold: a 1-s bin is a peak above this multiple of the
/// median bin.
pub const PEAK_FACTOR: f64 = 3.0;

/// Two-sample KS coefficient at alpha = 0.01.
pub const KS_C_ALPHA_001: f64 = 1.628;

const NANOS_PER_SEC: u64 = 1_000_000_000;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("horizon {horizon} s precedes the last trace event at {last} s")]
    Horizon { horizon: f64, last: f64 },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("sweep parameter {param} does not apply: {reason}")]
    SweepMismatch { param: SweepParam, reason: String },
    #[error("shaper rejected trace event {index}: {source}")]
    Enqueue {
        index: usize,
        #[source]
        source: ShaperError,
    },
    #[error("internal consistency failure: {0}")]
    Consistency(String),
    #[error("reassembly failed during replay: {0}")]
    Reassembly(#[from] ReassemblyError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayOptions {
    /// Replay horizon, seconds.
    pub horizon: f64,
    /// Added per record for the on-wire estimate.
    pub wire_overhead_per_record: u32,
}

impl ReplayOptions {
    pub fn new(horizon: f64) -> Self {
        Self {
            horizon,
            wire_overhead_per_record: DEFAULT_WIRE_OVERHEAD,
        }
    }

    pub fn with_wire_overhead(mut self, bytes: u32) -> Self {
        self.wire_overhead_per_record = bytes;
        self
    }
}

/// One emitted record as an observer on the link would see it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordObs {
    /// Virtual send time, nanoseconds.
    pub time_ns: u64,
    pub delay: Duration,
    pub shaped_len: u16,
    pub record_type: RecordType,
    pub real_len: u16,
    pub stream_end: bool,
}

impl RecordObs {
    pub fn time_secs(&self) -> f64 {
        self.time_ns as f64 / 1e9
    }

    pub fn wire_len(&self) -> u64 {
        u64::from(self.shaped_len) + HEADER_LEN as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub delay_dist: DistributionSpec,
    pub size_dist: DistributionSpec,
    pub seed: u64,
    pub trace_name: String,
    /// Replay horizon, seconds.
    pub duration: f64,
    pub baseline_rate: f64,
    pub shaped_rate: f64,
    pub overhead_rate: f64,
    pub wire_overhead_per_record: u32,
    pub est_wire_shaped_rate: f64,
    pub est_wire_overhead_rate: f64,
    pub max_message_latency: f64,
    pub mean_message_latency: f64,
    pub max_queue_bytes_observed: usize,
    pub record_count: u64,
    pub cover_count: u64,
    pub data_count: u64,
    /// Sum of `shaped_len` over counted records.
    pub shaped_payload_bytes: u64,
    pub message_count: u64,
    /// Virtual time the stream_end record went out, seconds.
    pub drain_complete: f64,
    pub size_ks_statistic: f64,
    pub delay_ks_statistic: f64,
}

/// Column order of [`ReplayReport::csv_row`].
pub const REPORT_COLUMNS: &[&str] = &[
    "trace",
    "delay_dist",
    "size_dist",
    "seed",
    "rng",
    "duration_s",
    "baseline_rate",
    "shaped_rate",
    "overhead_rate",
    "wire_overhead_per_record",
    "est_wire_shaped_rate",
    "est_wire_overhead_rate",
    "max_message_latency_s",
    "mean_message_latency_s",
    "max_queue_bytes_observed",
    "record_count",
    "cover_count",
    "data_count",
    "message_count",
    "drain_complete_s",
    "size_ks_statistic",
    "delay_ks_statistic",
];

impl ReplayReport {
    pub fn csv_header() -> String {
        REPORT_COLUMNS.join(",")
    }

    pub fn csv_row(&self) -> String {
        self.fields().join(",")
    }

    /// Field values in [`REPORT_COLUMNS`] order.
    pub fn fields(&self) -> Vec<String> {
        vec![
            self.trace_name.clone(),
            self.delay_dist.to_string(),
            self.size_dist.to_string(),
            self.seed.to_string(),
            RNG_NAME.to_string(),
            self.duration.to_string(),
            self.baseline_rate.to_string(),
            self.shaped_rate.to_string(),
            self.overhead_rate.to_string(),
            self.wire_overhead_per_record.to_string(),
            self.est_wire_shaped_rate.to_string(),
            self.est_wire_overhead_rate.to_string(),
            self.max_message_latency.to_string(),
            self.mean_message_latency.to_string(),
            self.max_queue_bytes_observed.to_string(),
            self.record_count.to_string(),
            self.cover_count.to_string(),
            self.data_count.to_string(),
            self.message_count.to_string(),
            self.drain_complete.to_string(),
            self.size_ks_statistic.to_string(),
            self.delay_ks_statistic.to_string(),
        ]
    }
}

/// A replay's report together with the full record log.
#[derive(Debug, Clone)]
pub struct ReplayRun {
    pub report: ReplayReport,
    /// Every record, including those drained after the horizon.
    pub records: Vec<RecordObs>,
    horizon_ns: u64,
}

impl ReplayRun {
    /// Records sent at or before the horizon.
    pub fn within_horizon(&self) -> impl Iterator<Item = &RecordObs> {
        let h = self.horizon_ns;
        self.records.iter().filter(move |r| r.time_ns <= h)
    }

    /// The observable `(delay, size)` schedule up to the horizon.
    pub fn schedule(&self) -> Vec<(Duration, u16)> {
        self.within_horizon()
            .map(|r| (r.delay, r.shaped_len))
            .collect()
    }
}

fn secs_to_ns(secs: f64) -> u64 {
    (secs * NANOS_PER_SEC as f64).round() as u64
}

/// Replays `trace` through a shaper built from `config` and reports metrics.
pub fn replay(
    trace: &Trace,
    config: &ShaperConfig,
    opts: &ReplayOptions,
) -> Result<ReplayReport, ReplayError> {
    run_replay(trace, config, opts).map(|run| run.report)
}

/// Like [`replay`], also returning every observed record.
pub fn run_replay(
    trace: &Trace,
    config: &ShaperConfig,
    opts: &ReplayOptions,
) -> Result<ReplayRun, ReplayError> {
    if !(opts.horizon > 0.0 && opts.horizon >= trace.last_timestamp()) {
        return Err(ReplayError::Horizon {
            horizon: opts.horizon,
            last: trace.last_timestamp(),
        });
    }
    let horizon_ns = secs_to_ns(opts.horizon);
    let event_ns: Vec<u64> = trace
        .events
        .iter()
        .map(|e| secs_to_ns(e.timestamp))
        .collect();

    let mut shaper = Shaper::new(*config);
    let mut reassembler = Reassembler::new();
    let mut records = Vec::new();
    let mut now = 0u64;
    let mut next_event = 0usize;
    let mut next_message = 0usize;
    let mut max_queue = 0usize;
    let mut max_latency = 0u64;
    let mut latency_sum = 0u128;

    loop {
        let pending = shaper.begin_tick();
        let send_at = now + pending.delay().as_nanos() as u64;
        // Everything that arrived during the pause is queued before the send.
        while next_event < event_ns.len() && event_ns[next_event] <= send_at {
            shaper
                .enqueue(trace.payload(next_event))
                .map_err(|source| ReplayError::Enqueue {
                    index: next_event,
                    source,
                })?;
            max_queue = max_queue.max(shaper.queued_bytes());
            next_event += 1;
        }
        if send_at > horizon_ns && !shaper.is_closing() {
            shaper.begin_close();
        }
        let out = shaper.complete_tick(pending);
        now = send_at;
        let h = out.record.header();
        records.push(RecordObs {
            time_ns: now,
            delay: out.delay_before,
            shaped_len: h.shaped_len,
            record_type: h.record_type,
            real_len: h.real_len,
            stream_end: h.stream_end,
        });
        match reassembler.push(&out.record)? {
            Some(Reassembled::Message(msg)) => {
                if next_message >= trace.events.len() {
                    return Err(ReplayError::Consistency(format!(
                        "reassembled message {next_message} but the trace has only {}",
                        trace.events.len()
                    )));
                }
                if msg != trace.payload(next_message) {
                    return Err(ReplayError::Consistency(format!(
                        "message {next_message} differs from trace payload"
                    )));
                }
                let latency = now - event_ns[next_message];
                max_latency = max_latency.max(latency);
                latency_sum += u128::from(latency);
                next_message += 1;
            }
            Some(Reassembled::End) => break,
            None => {}
        }
    }
    if next_message != trace.events.len() {
        return Err(ReplayError::Consistency(format!(
            "reassembled {next_message} of {} messages",
            trace.events.len()
        )));
    }

    let duration = opts.horizon;
    let counted: Vec<&RecordObs> = records.iter().filter(|r| r.time_ns <= horizon_ns).collect();
    let record_count = counted.len() as u64;
    let cover_count = counted
        .iter()
        .filter(|r| r.record_type == RecordType::Cover)
        .count() as u64;
    let shaped_payload_bytes: u64 = counted.iter().map(|r| u64::from(r.shaped_len)).sum();
    let shaped_bytes = shaped_payload_bytes + record_count * HEADER_LEN as u64;
    let wire_bytes = shaped_bytes + record_count * u64::from(opts.wire_overhead_per_record);

    let baseline_rate = trace.baseline_rate(duration);
    let shaped_rate = shaped_bytes as f64 / duration;
    let est_wire_shaped_rate = wire_bytes as f64 / duration;

    let sizes: Vec<f64> = counted.iter().map(|r| f64::from(r.shaped_len)).collect();
    let delays: Vec<f64> = counted.iter().map(|r| r.delay.as_secs_f64()).collect();
    let size_spec = config.size_spec();
    let delay_spec = config.delay_spec();

    let message_count = next_message as u64;
    let report = ReplayReport {
        delay_dist: delay_spec,
        size_dist: size_spec,
        seed: config.rng_seed,
        trace_name: trace.name.clone(),
        duration,
        baseline_rate,
        shaped_rate,
        overhead_rate: shaped_rate - baseline_rate,
        wire_overhead_per_record: opts.wire_overhead_per_record,
        est_wire_shaped_rate,
        est_wire_overhead_rate: est_wire_shaped_rate - baseline_rate,
        max_message_latency: max_latency as f64 / 1e9,
        mean_message_latency: if message_count == 0 {
            0.0
        } else {
            (latency_sum / u128::from(message_count)) as f64 / 1e9
        },
        max_queue_bytes_observed: max_queue,
        record_count,
        cover_count,
        data_count: record_count - cover_count,
        shaped_payload_bytes,
        message_count,
        drain_complete: now as f64 / 1e9,
        size_ks_statistic: stats::ks_against(&sizes, &size_spec, Role::Size),
        delay_ks_statistic: stats::ks_against(&delays, &delay_spec, Role::Delay),
    };
    Ok(ReplayRun {
        report,
        records,
        horizon_ns,
    })
}

/// The parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepParam {
    DLow,
    DHigh,
    SLow,
    SHigh,
    ConstD,
    ConstX,
}

impl SweepParam {
    pub const ALL: [SweepParam; 6] = [
        SweepParam::DLow,
        SweepParam::DHigh,
        SweepParam::SLow,
        SweepParam::SHigh,
        SweepParam::ConstD,
        SweepParam::ConstX,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::DLow => "d_low",
            SweepParam::DHigh => "d_high",
            SweepParam::SLow => "s_low",
            SweepParam::SHigh => "s_high",
            SweepParam::ConstD => "const_d",
            SweepParam::ConstX => "const_x",
        }
    }

    /// Returns `base` with this parameter set to `value`.
    pub fn apply(&self, base: &ShaperConfig, value: f64) -> Result<ShaperConfig, ReplayError> {
        let mismatch = |reason: String| ReplayError::SweepMismatch {
            param: *self,
            reason,
        };
        let mut delay = base.delay_spec();
        let mut size = base.size_spec();
        match (self, &mut delay, &mut size) {
            (SweepParam::DLow, DistributionSpec::Uniform { low, .. }, _) => *low = value,
            (SweepParam::DHigh, DistributionSpec::Uniform { high, .. }, _) => *high = value,
            (SweepParam::ConstD, DistributionSpec::Constant(v), _) => *v = value,
            (SweepParam::SLow, _, DistributionSpec::Uniform { low, .. })
            | (SweepParam::SLow, _, DistributionSpec::TruncatedNormal { low, .. }) => *low = value,
            (SweepParam::SHigh, _, DistributionSpec::Uniform { high, .. })
            | (SweepParam::SHigh, _, DistributionSpec::TruncatedNormal { high, .. }) => {
                *high = value
            }
            (SweepParam::ConstX, _, DistributionSpec::Constant(v)) => *v = value,
            (SweepParam::DLow | SweepParam::DHigh | SweepParam::ConstD, d, _) => {
                return Err(mismatch(format!("delay distribution is `{d}`")))
            }
            (_, _, s) => return Err(mismatch(format!("size distribution is `{s}`"))),
        }
        let cfg = ShaperConfig::new(delay, size, base.rng_seed)?;
        Ok(cfg.with_max_queue_bytes(base.max_queue_bytes))
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SweepParam::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = SweepParam::ALL.iter().map(|p| p.name()).collect();
                format!(
                    "unknown sweep parameter `{s}` (expected one of {})",
                    names.join(", ")
                )
            })
    }
}

/// One replay per value, all with `base`'s seed so points are paired.
/// Points run in parallel; results keep the order of `values`.
pub fn sweep(
    trace: &Trace,
    base: &ShaperConfig,
    param: SweepParam,
    values: &[f64],
    opts: &ReplayOptions,
) -> Result<Vec<(f64, ReplayReport)>, ReplayError> {
    let configs = values
        .iter()
        .map(|&v| param.apply(base, v))
        .collect::<Result<Vec<_>, _>>()?;
    let results: Vec<Result<ReplayReport, ReplayError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .map(|cfg| scope.spawn(move || replay(trace, cfg, opts)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("replay thread panicked"))
            .collect()
    });
    values
        .iter()
        .zip(results)
        .map(|(&v, r)| r.map(|report| (v, report)))
        .collect()
}

/// Bytes observed in each 1-s bin over `[0, horizon)`; a point at exactly
/// the horizon falls into the last bin.
pub fn bin_bytes(points: impl IntoIterator<Item = (f64, u64)>, horizon: f64) -> Vec<f64> {
    let n = (horizon.ceil() as usize).max(1);
    let mut bins = vec![0.0; n];
    for (t, bytes) in points {
        if t < 0.0 || t > horizon {
            continue;
        }
        let idx = (t.floor() as usize).min(n - 1);
        bins[idx] += bytes as f64;
    }
    bins
}

/// Indices of bins whose rate exceeds `factor` times the median bin.
pub fn detect_peaks(bins: &[f64], factor: f64) -> Vec<usize> {
    let threshold = factor * stats::median(bins);
    bins.iter()
        .enumerate()
        .filter(|(_, &b)| b > threshold)
        .map(|(i, _)| i)
        .collect()
}

/// Peak bins of an unshaped trace.
pub fn trace_peaks(trace: &Trace, horizon: f64) -> Vec<usize> {
    let bins = bin_bytes(
        trace
            .events
            .iter()
            .map(|e| (e.timestamp, u64::from(e.payload_len))),
        horizon,
    );
    detect_peaks(&bins, PEAK_FACTOR)
}

/// Peak bins of a shaped record log, counting on-wire record sizes.
pub fn shaped_peaks(run: &ReplayRun, horizon: f64) -> Vec<usize> {
    let bins = bin_bytes(
        run.within_horizon().map(|r| (r.time_secs(), r.wire_len())),
        horizon,
    );
    detect_peaks(&bins, PEAK_FACTOR)
}

/// Which `[start, end)` windows contain at least one peak bin.
pub fn windows_flagged(windows: &[(f64, f64)], peaks: &[usize]) -> Vec<bool> {
    windows
        .iter()
        .map(|&(start, end)| {
            peaks.iter().any(|&p| {
                let (lo, hi) = (p as f64, p as f64 + 1.0);
                lo < end && hi > start
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndependenceReport {
    pub seed: u64,
    pub alt_seed: u64,
    /// Same-seed schedules of the two traces match element for element.
    pub schedules_identical: bool,
    pub schedule_len_a: usize,
    pub schedule_len_b: usize,
    pub size_ks: f64,
    pub delay_ks: f64,
    pub ks_critical: f64,
    pub size_ks_pass: bool,
    pub delay_ks_pass: bool,
    pub unshaped_peaks_a: Vec<usize>,
    pub unshaped_peaks_b: Vec<usize>,
    pub shaped_peaks_a: Vec<usize>,
    pub shaped_peaks_b: Vec<usize>,
}

impl IndependenceReport {
    /// Random schedules can trip the peak detector by chance; what matters is
    /// that the flagged bins do not depend on the workload.
    pub fn passed(&self) -> bool {
        self.schedules_identical
            && self.size_ks_pass
            && self.delay_ks_pass
            && self.shaped_peaks_a == self.shaped_peaks_b
    }
}

/// Checks that the shaped schedule carries no trace information.
///
/// Both traces are replayed with `config`'s seed and must produce identical
/// `(delay, size)` schedules. Trace `b` is then replayed with `alt_seed` and
/// two-sample KS tests compare its sizes and delays against trace `a`'s at
/// alpha = 0.01. Peak detection runs on both unshaped traces and both
/// same-seed shaped schedules.
pub fn independence_test(
    trace_a: &Trace,
    trace_b: &Trace,
    config: &ShaperConfig,
    alt_seed: u64,
    opts: &ReplayOptions,
) -> Result<IndependenceReport, ReplayError> {
    let run_a = run_replay(trace_a, config, opts)?;
    let run_b = run_replay(trace_b, config, opts)?;
    let alt = run_replay(trace_b, &config.with_seed(alt_seed), opts)?;

    let sched_a = run_a.schedule();
    let sched_b = run_b.schedule();

    let sizes = |run: &ReplayRun| -> Vec<f64> {
        run.within_horizon()
            .map(|r| f64::from(r.shaped_len))
            .collect()
    };
    let delays = |run: &ReplayRun| -> Vec<f64> {
        run.within_horizon()
            .map(|r| r.delay.as_secs_f64())
            .collect()
    };
    let (sa, sb) = (sizes(&run_a), sizes(&alt));
    let size_ks = stats::ks_two_sample(&sa, &sb);
    let delay_ks = stats::ks_two_sample(&delays(&run_a), &delays(&alt));
    let ks_critical = stats::ks_critical_two_sample(KS_C_ALPHA_001, sa.len(), sb.len());

    Ok(IndependenceReport {
        seed: config.rng_seed,
        alt_seed,
        schedules_identical: sched_a == sched_b,
        schedule_len_a: sched_a.len(),
        schedule_len_b: sched_b.len(),
        size_ks,
        delay_ks,
        ks_critical,
        // Degenerate (constant) distributions give a statistic of exactly 0.
        size_ks_pass: size_ks <= ks_critical,
        delay_ks_pass: delay_ks <= ks_critical,
        unshaped_peaks_a: trace_peaks(trace_a, opts.horizon),
        unshaped_peaks_b: trace_peaks(trace_b, opts.horizon),
        shaped_peaks_a: shaped_peaks(&run_a, opts.horizon),
        shaped_peaks_b: shaped_peaks(&run_b, opts.horizon),
    })
}
