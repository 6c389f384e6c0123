use solida_simnet::presets::adversarial;
use solida_simnet::run_scenario;
use solida_simnet::scenario::TraceLevel;

fn fingerprint(seed: u64) -> (String, Vec<u8>) {
    let mut sc = adversarial(seed);
    sc.trace = TraceLevel::Full;
    let out = run_scenario(sc).unwrap();
    let report = serde_json::to_string(&out.report).unwrap();
    let trace = out.trace.to_jsonl(&out.report.summary());
    (report, trace)
}

#[test]
fn same_seed_same_bytes() {
    for seed in [0, 1, 2] {
        assert_eq!(fingerprint(seed), fingerprint(seed), "seed {seed}");
    }
}

#[test]
fn seeds_change_the_run() {
    // Same committee size, different seed.
    assert_ne!(fingerprint(0).1, fingerprint(3).1);
}

#[test]
fn trace_is_jsonl_with_summary_last() {
    let (_, trace) = fingerprint(4);
    let text = String::from_utf8(trace).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines[0]["event"], "node");
    let last = lines.last().unwrap();
    assert_eq!(last["event"], "summary");
    assert_eq!(last["safety_ok"], true);
    for l in &lines[..lines.len() - 1] {
        assert!(l["time"].is_u64() && l["member"].is_u64());
    }
}
