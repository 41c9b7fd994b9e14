//! Trace replay, sweeps and the independence check.

use std::path::Path;

use linkpad::dist::DistributionSpec;
use linkpad::replay::synth::{self, NEST_LIKE_TOTAL, SENSE_LIKE_TOTAL, SYNTH_DURATION};
use linkpad::replay::trace::{load_trace, Trace, TraceError, TraceEvent};
use linkpad::replay::{
    independence_test, replay, run_replay, sweep, trace_peaks, windows_flagged, ReplayOptions,
    SweepParam,
};
use linkpad::ShaperConfig;

const BUNDLED_SENSE: &str = include_str!("../../../traces/sense_like.csv");
const BUNDLED_NEST: &str = include_str!("../../../traces/nest_like.csv");

fn traces_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../traces"))
}

fn opts() -> ReplayOptions {
    ReplayOptions::new(SYNTH_DURATION)
}

#[test]
fn bundled_traces_match_the_generator() {
    assert_eq!(BUNDLED_SENSE, synth::sense_like().trace.to_csv());
    assert_eq!(BUNDLED_NEST, synth::nest_like().trace.to_csv());
}

#[test]
fn synthetic_traces_hit_their_aggregate_rates() {
    let sense = synth::sense_like().trace;
    let nest = synth::nest_like().trace;
    assert_eq!(sense.total_bytes(), SENSE_LIKE_TOTAL);
    assert_eq!(nest.total_bytes(), NEST_LIKE_TOTAL);
    assert!((sense.baseline_rate(SYNTH_DURATION) - 143.78).abs() < 0.01);
    assert!((nest.baseline_rate(SYNTH_DURATION) - 346.04).abs() < 0.01);
    assert!(sense.last_timestamp() < SYNTH_DURATION);
}

#[test]
fn load_trace_names_by_file_stem() {
    let t = load_trace(traces_dir().join("nest_like.csv")).unwrap();
    assert_eq!(t.name, "nest_like");
    assert_eq!(t.total_bytes(), NEST_LIKE_TOTAL);
    // Placeholders depend on the name, so a loaded trace replays identically.
    assert_eq!(t.payload(3), synth::nest_like().trace.payload(3));
}

#[test]
fn load_trace_reports_missing_file_and_bad_rows() {
    let missing = load_trace(traces_dir().join("no_such.csv")).unwrap_err();
    assert!(matches!(missing, TraceError::Io { .. }));
    assert!(missing.to_string().contains("no_such.csv"));

    let bad = Trace::parse_csv("t", "timestamp_s,payload_len\n0.5,10\nabc,3\n").unwrap_err();
    assert!(matches!(bad, TraceError::Parse { line: 3, .. }), "{bad}");
    let back = Trace::parse_csv("t", "timestamp_s,payload_len\n2.0,10\n1.0,3\n").unwrap_err();
    assert!(
        matches!(back, TraceError::Decreasing { line: 3, .. }),
        "{back}"
    );
}

#[test]
fn nest_like_under_low_latency_constants() {
    let r = replay(
        &synth::nest_like().trace,
        &ShaperConfig::low_latency(1),
        &opts(),
    )
    .unwrap();
    assert_eq!(r.record_count, 4000);
    assert!((r.baseline_rate - 346.04).abs() < 1e-9);
    assert!((r.shaped_rate - 2540.0).abs() < 1e-9);
    assert!((r.overhead_rate - 2193.96).abs() < 1e-9);
    assert!((r.est_wire_overhead_rate - 2993.96).abs() < 1e-9);
    assert!(r.drain_complete >= SYNTH_DURATION);
    assert_eq!(r.delay_ks_statistic, 0.0);
}

#[test]
fn empty_trace_sends_only_cover_within_horizon() {
    let run = run_replay(
        &Trace::empty("idle"),
        &ShaperConfig::high_latency(4),
        &opts(),
    )
    .unwrap();
    assert!(run.within_horizon().all(|r| r.real_len == 0));
    assert_eq!(run.report.message_count, 0);
    assert_eq!(run.report.baseline_rate, 0.0);
}

#[test]
fn every_message_arrives_intact_and_in_order() {
    // run_replay checks content itself; here check counts and latency sanity.
    let trace = synth::sense_like().trace;
    let r = replay(&trace, &ShaperConfig::high_latency(9), &opts()).unwrap();
    assert_eq!(r.message_count as usize, trace.events.len());
    assert!(r.max_message_latency >= r.mean_message_latency);
    assert!(r.mean_message_latency > 0.0);
}

#[test]
fn gross_rate_matches_the_analytic_ratio() {
    // With cover in every slot, shaped rate ~ (E[X] + header) / E[D].
    let cfg = ShaperConfig::high_latency(21);
    let r = replay(&Trace::empty("idle"), &cfg, &ReplayOptions::new(2000.0)).unwrap();
    let expected = (125.0 + 7.0) / 0.3;
    assert!(
        (r.shaped_rate - expected).abs() / expected < 0.03,
        "{} vs {expected}",
        r.shaped_rate
    );
}

#[test]
fn replays_are_deterministic() {
    let trace = synth::nest_like().trace;
    let cfg = ShaperConfig::high_latency(77);
    let a = run_replay(&trace, &cfg, &opts()).unwrap();
    let b = run_replay(&trace, &cfg, &opts()).unwrap();
    assert_eq!(a.report, b.report);
    assert_eq!(a.schedule(), b.schedule());
}

fn overheads(param: SweepParam, base: &ShaperConfig, values: &[f64], wire: bool) -> Vec<f64> {
    sweep(&synth::sense_like().trace, base, param, values, &opts())
        .unwrap()
        .into_iter()
        .map(|(_, r)| {
            if wire {
                r.est_wire_overhead_rate
            } else {
                r.overhead_rate
            }
        })
        .collect()
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

#[test]
fn delay_sweeps_lower_overhead() {
    let hl = ShaperConfig::high_latency(1);
    let ll = ShaperConfig::low_latency(1);
    assert!(strictly_decreasing(&overheads(
        SweepParam::DLow,
        &hl,
        &[0.0, 0.1, 0.2],
        false
    )));
    assert!(strictly_decreasing(&overheads(
        SweepParam::DHigh,
        &hl,
        &[0.3, 0.6, 1.2],
        false
    )));
    assert!(strictly_decreasing(&overheads(
        SweepParam::ConstD,
        &ll,
        &[0.025, 0.05, 0.1],
        true
    )));
}

#[test]
fn size_sweeps_raise_overhead() {
    let hl = ShaperConfig::high_latency(1);
    let ll = ShaperConfig::low_latency(1);
    assert!(strictly_increasing(&overheads(
        SweepParam::SLow,
        &hl,
        &[25.0, 50.0, 100.0],
        false
    )));
    assert!(strictly_increasing(&overheads(
        SweepParam::SHigh,
        &hl,
        &[200.0, 400.0, 800.0],
        false
    )));
    assert!(strictly_increasing(&overheads(
        SweepParam::ConstX,
        &ll,
        &[60.0, 120.0, 240.0],
        true
    )));
}

#[test]
fn sweep_rejects_parameter_of_the_wrong_family() {
    let err = sweep(
        &synth::sense_like().trace,
        &ShaperConfig::low_latency(1),
        SweepParam::DLow,
        &[0.1],
        &opts(),
    )
    .unwrap_err();
    assert!(err.to_string().contains("d_low"), "{err}");
    // A value that would invert the bounds is rejected too.
    assert!(SweepParam::DLow
        .apply(&ShaperConfig::high_latency(1), 0.7)
        .is_err());
}

#[test]
fn sweep_points_share_the_base_seed() {
    let base = ShaperConfig::high_latency(5);
    let pts = sweep(
        &synth::sense_like().trace,
        &base,
        SweepParam::SHigh,
        &[200.0, 300.0],
        &opts(),
    )
    .unwrap();
    assert!(pts.iter().all(|(_, r)| r.seed == 5));
    assert_eq!(
        pts[0].1.size_dist,
        DistributionSpec::Uniform {
            low: 50.0,
            high: 200.0
        }
    );
}

#[test]
fn unshaped_traces_show_their_events() {
    for s in [synth::sense_like(), synth::nest_like()] {
        let peaks = trace_peaks(&s.trace, SYNTH_DURATION);
        let flagged = windows_flagged(&s.event_windows, &peaks);
        assert!(flagged.iter().all(|&f| f), "{}: {flagged:?}", s.trace.name);
    }
}

#[test]
fn independence_holds_for_both_presets() {
    let a = synth::sense_like();
    let b = synth::nest_like();
    for cfg in [ShaperConfig::low_latency(1), ShaperConfig::high_latency(1)] {
        let rep = independence_test(&a.trace, &b.trace, &cfg, 2, &opts()).unwrap();
        assert!(rep.schedules_identical);
        assert!(rep.passed(), "{rep:?}");
        let flagged = windows_flagged(&b.event_windows, &rep.shaped_peaks_b);
        assert!(flagged.iter().all(|&f| !f) || rep.shaped_peaks_a == rep.shaped_peaks_b);
    }
    let ll = independence_test(
        &a.trace,
        &b.trace,
        &ShaperConfig::low_latency(1),
        2,
        &opts(),
    )
    .unwrap();
    assert!(ll.shaped_peaks_a.is_empty());
}

#[test]
fn schedule_ignores_the_workload() {
    let cfg = ShaperConfig::high_latency(13);
    let busy = run_replay(&synth::nest_like().trace, &cfg, &opts()).unwrap();
    let idle = run_replay(&Trace::empty("idle"), &cfg, &opts()).unwrap();
    assert_eq!(busy.schedule(), idle.schedule());
}

#[test]
fn events_past_the_horizon_are_refused() {
    let t = Trace::new(
        "late",
        vec![TraceEvent {
            timestamp: 5.0,
            payload_len: 10,
        }],
    )
    .unwrap();
    assert!(replay(&t, &ShaperConfig::low_latency(1), &ReplayOptions::new(1.0)).is_err());
}
