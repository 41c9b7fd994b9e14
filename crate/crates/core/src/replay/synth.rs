//! Synthetic device traces standing in for captures that are not public.
//!
//! Both traces span 200 s: a once-per-second heartbeat plus bursts during
//! injected user-event windows. Burst sizes are scaled so each trace's total
//! byte count (and therefore its 200-s average rate) hits a fixed target.
//! Only that aggregate rate is meaningful; the packet-level shape is made up.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::trace::{Trace, TraceEvent};

/// Length of both synthetic traces, seconds.
pub const SYNTH_DURATION: f64 = 200.0;

/// 143.78 B/s over 200 s: a sleep monitor.
pub const SENSE_LIKE_TOTAL: u64 = 28_756;

/// 346.04 B/s over 200 s: a camera in motion-detection mode.
pub const NEST_LIKE_TOTAL: u64 = 69_208;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTrace {
    pub trace: Trace,
    /// `[start, end)` seconds of each injected user event.
    pub event_windows: Vec<(f64, f64)>,
}

struct Recipe {
    name: &'static str,
    seed: u64,
    total: u64,
    heartbeat_bytes: (u32, u32),
    /// `(start_s, length_s)` per event.
    windows: &'static [(u32, u32)],
    burst_bytes: (u32, u32),
    burst_gap_ms: (u64, u64),
}

pub fn sense_like() -> SyntheticTrace {
    build(&Recipe {
        name: "sense_like",
        seed: 0x5e45e,
        total: SENSE_LIKE_TOTAL,
        heartbeat_bytes: (40, 90),
        windows: &[(31, 4), (88, 3), (142, 5), (177, 3)],
        burst_bytes: (150, 900),
        burst_gap_ms: (80, 250),
    })
}

pub fn nest_like() -> SyntheticTrace {
    build(&Recipe {
        name: "nest_like",
        seed: 0x7e57,
        total: NEST_LIKE_TOTAL,
        heartbeat_bytes: (60, 100),
        windows: &[(18, 3), (57, 4), (96, 3), (131, 4), (170, 3)],
        burst_bytes: (300, 1400),
        burst_gap_ms: (50, 200),
    })
}

/// Looks a synthetic trace up by name.
pub fn by_name(name: &str) -> Option<SyntheticTrace> {
    match name {
        "sense_like" => Some(sense_like()),
        "nest_like" => Some(nest_like()),
        _ => None,
    }
}

fn build(recipe: &Recipe) -> SyntheticTrace {
    let mut rng = ChaCha20Rng::seed_from_u64(recipe.seed);
    // (time_ms, bytes, is_burst)
    let mut packets: Vec<(u64, u64, bool)> = Vec::new();

    let seconds = SYNTH_DURATION as u64;
    for s in 0..seconds {
        let t = s * 1000 + rng.random_range(100..900);
        let (lo, hi) = recipe.heartbeat_bytes;
        packets.push((t, u64::from(rng.random_range(lo..=hi)), false));
    }

    let mut raw_burst = 0u64;
    for &(start, len) in recipe.windows {
        let end_ms = u64::from(start + len) * 1000;
        let mut t = u64::from(start) * 1000 + rng.random_range(0..50);
        while t < end_ms {
            let (lo, hi) = recipe.burst_bytes;
            let size = u64::from(rng.random_range(lo..=hi));
            raw_burst += size;
            packets.push((t, size, true));
            let (glo, ghi) = recipe.burst_gap_ms;
            t += rng.random_range(glo..=ghi);
        }
    }

    // Scale burst sizes so the trace total is exact.
    let heartbeat: u64 = packets.iter().filter(|p| !p.2).map(|p| p.1).sum();
    let needed = recipe.total - heartbeat;
    let mut assigned = 0u64;
    for p in packets.iter_mut().filter(|p| p.2) {
        p.1 = (p.1 * needed / raw_burst).max(1);
        assigned += p.1;
    }
    let mut leftover = needed - assigned;
    for p in packets.iter_mut().filter(|p| p.2) {
        if leftover == 0 {
            break;
        }
        p.1 += 1;
        leftover -= 1;
    }

    packets.sort_by_key(|p| p.0);
    let events = packets
        .into_iter()
        .map(|(t, bytes, _)| TraceEvent {
            timestamp: t as f64 / 1000.0,
            payload_len: bytes as u32,
        })
        .collect();
    let event_windows = recipe
        .windows
        .iter()
        .map(|&(s, l)| (f64::from(s), f64::from(s + l)))
        .collect();
    SyntheticTrace {
        trace: Trace::new(recipe.name, events).expect("generated trace is ordered"),
        event_windows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn totals_hit_reference_rates() {
        let s = sense_like();
        assert_eq!(s.trace.total_bytes(), SENSE_LIKE_TOTAL);
        assert!((s.trace.baseline_rate(SYNTH_DURATION) - 143.78).abs() < 1e-9);
        let n = nest_like();
        assert_eq!(n.trace.total_bytes(), NEST_LIKE_TOTAL);
        assert!((n.trace.baseline_rate(SYNTH_DURATION) - 346.04).abs() < 1e-9);
    }

    #[test]
    fn traces_fit_their_horizon() {
        for t in [sense_like(), nest_like()] {
            assert!(t.trace.last_timestamp() < SYNTH_DURATION);
            assert!(t.trace.events.iter().all(|e| e.payload_len > 0));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(nest_like(), nest_like());
        assert_eq!(by_name("sense_like"), Some(sense_like()));
        assert_eq!(by_name("other"), None);
    }
}
