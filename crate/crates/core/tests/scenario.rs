use proptest::prelude::*;
use surge_core::components::LightningSpec;
use surge_core::scenario::*;

fn short(mut s: Scenario) -> Scenario {
    s.sim.t_end = 20e-6;
    s
}

fn set3(distance: f64, arrester: bool) -> Scenario {
    let mut s = preset("set3").unwrap().into_iter().find(|s| s.distance == distance).unwrap();
    s.arrester = arrester;
    short(s)
}

#[test]
fn study_netlist_has_towers_lines_and_plant() {
    let layout = StudyLayout::default();
    let strike = Strike {
        lightning: LightningSpec::from_ka_us(31.0, 3.0, 75.0),
        target: StrikeTarget::PhaseA,
        distance: 700.0,
        channel_resistance: None,
    };
    let st = build_study(&layout, &strike, true, 0.0, 10e-9, 20e-6).unwrap();
    assert!(st.circuit.branch_count() > 30, "{} branches", st.circuit.branch_count());
    assert!(st.arresters.is_some());
    for n in &st.bus_nodes {
        assert!(st.circuit.node(n).is_some(), "missing {n}");
    }
    let without = build_study(&layout, &strike, false, 0.0, 10e-9, 20e-6).unwrap();
    assert!(without.arresters.is_none());
}

#[test]
fn strike_outside_the_line_is_rejected() {
    let mut s = set3(100.0, false);
    s.distance = 1e6;
    assert!(run_scenario(0, &s).is_err());
}

#[test]
fn sweep_is_independent_of_thread_count() {
    let scenarios: Vec<Scenario> = [(300.0, false), (300.0, true), (900.0, false)].iter().map(|&(d, a)| set3(d, a)).collect();
    let one = run_sweep(&scenarios, 1, None).unwrap();
    let two = run_sweep(&scenarios, 2, None).unwrap();
    assert!(one.is_success());
    assert_eq!(one, two);
}

#[test]
fn duplicate_scenarios_give_identical_rows() {
    let s = set3(500.0, true);
    let mut t = s.clone();
    t.name.push_str("-copy");
    let r = run_sweep(&[s, t], 2, None).unwrap();
    let (a, b) = (&r.results[0], &r.results[1]);
    assert_eq!(a.peak_kv, b.peak_kv);
    assert_eq!(a.arrester_current_ka, b.arrester_current_ka);
}

#[test]
fn failing_scenario_is_reported_and_others_continue() {
    let good = set3(300.0, false);
    let mut bad = set3(300.0, false);
    bad.name = "bad".into();
    bad.distance = 1e6;
    let r = run_sweep(&[good, bad], 1, None).unwrap();
    assert_eq!(r.results.len(), 1);
    assert_eq!(r.failures.len(), 1);
    assert_eq!(r.failures[0].name, "bad");
    assert!(!r.is_success());
}

#[test]
fn waveforms_are_written_with_header() {
    let dir = tempfile::tempdir().unwrap();
    let sink = WaveformSink { dir: dir.path().to_path_buf(), header: Header::new("h", 3), select: WaveformSet::Bus };
    let r = run_sweep(&[set3(300.0, true)], 1, Some(&sink)).unwrap();
    let files = &r.results[0].waveform_files;
    assert_eq!(files.len(), 3);
    let text = std::fs::read_to_string(dir.path().join(&files[0])).unwrap();
    assert!(text.starts_with("# config_hash: h\n# seed: 3\n"));
    let (w, meta) = output::read_waveform_csv(&text).unwrap();
    assert_eq!(meta["probe"], "v(bus_a)");
    assert!((w.t_end() - 20e-6).abs() < 1e-9);
}

#[test]
fn summary_json_round_trips() {
    let r = run_sweep(&[set3(700.0, true)], 1, None).unwrap();
    let s = r.summary(Header::new("abc", 1));
    assert_eq!(Summary::from_json(&s.to_json().unwrap()).unwrap(), s);
}

#[test]
fn extra_probes_are_recorded() {
    let mut s = set3(700.0, false);
    s.probes = vec!["v(x700.a)".into(), "i(lightning)".into()];
    let run = run_scenario(0, &s).unwrap();
    assert!(run.waveform("v(x700.a)").is_some());
    s.probes = vec!["q(x)".into()];
    assert!(run_scenario(0, &s).is_err());
}

#[test]
fn preset_file_round_trips_through_parser() {
    let cfg = parse_config_str(&preset_config(&["set2"]).unwrap()).unwrap();
    assert_eq!(cfg.scenarios.len(), 16);
    assert!(cfg.scenarios.iter().all(|s| s.peak_ka == 10.0));
    assert_eq!(cfg.hash(), parse_config_str(&preset_config(&["set2"]).unwrap()).unwrap().hash());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn arrester_never_raises_bus_overvoltage(peak in 5.0f64..60.0, k in 0usize..8) {
        let d = 100.0 + 200.0 * k as f64;
        let mut off = set3(d, false);
        off.peak_ka = peak;
        let mut on = off.clone();
        on.arrester = true;
        let a = run_scenario(0, &off).unwrap().result.overvoltage_kv;
        let b = run_scenario(0, &on).unwrap().result.overvoltage_kv;
        prop_assert!(b <= a, "{peak} kA at {d} m: {b} > {a}");
    }
}
