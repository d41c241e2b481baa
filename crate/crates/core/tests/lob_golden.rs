use std::path::PathBuf;

use sdhawkes::io::{read_sequence_csv, Sidecar};
use sdhawkes::lobdata::{
    ingest, parse_clock, parse_messages, Direction, LobMessage, StateVariableSpec, ASK, BID,
};
use sdhawkes::MarkedSequence;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/lob_golden").join(name)
}

fn read(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

fn run(spec: StateVariableSpec) -> (MarkedSequence, sdhawkes::Dimensions, sdhawkes::lobdata::IngestReport) {
    ingest(
        read("messages.csv").as_bytes(),
        read("book.csv").as_bytes(),
        &spec,
        parse_clock("12:00").unwrap(),
        parse_clock("14:30").unwrap(),
        false,
    )
    .unwrap()
}

fn expected(csv: &str, spec: &StateVariableSpec, key: &str) -> MarkedSequence {
    let side: serde_json::Value = serde_json::from_str(&read("expected_sidecar.json")).unwrap();
    let dims = spec.dimensions();
    let initial = side[key]["initial_state"].as_str().unwrap();
    let sidecar = Sidecar {
        initial_state: dims.state_index(initial).unwrap(),
        t0: side[key]["t0"].as_f64().unwrap(),
        t_end: side[key]["T"].as_f64().unwrap(),
        event_labels: None,
        state_labels: None,
    };
    read_sequence_csv(read(csv).as_bytes()).unwrap().resolve(&dims, &sidecar).unwrap()
}

#[test]
fn golden_spread_sequence() {
    let spec = StateVariableSpec::spread_with_tick(0.01).unwrap();
    let (seq, _, _) = run(spec);
    assert_eq!(seq, expected("expected_spread.csv", &spec, "spread"));
}

#[test]
fn golden_qi_sequence() {
    let spec = StateVariableSpec::QueueImbalance;
    let (seq, dims, _) = run(spec);
    let want = expected("expected_qi.csv", &spec, "qi");
    assert_eq!(seq, want);
    // the window opens at QI = 0.2 exactly and one in-window event lands on it
    assert_eq!(dims.state_labels()[seq.initial_state], "buy+");
    assert_eq!(seq.times[10], 43209.0);
    assert_eq!(dims.state_labels()[seq.states[10]], "buy+");
}

#[test]
fn golden_report_counts() {
    let (_, _, report) = run(StateVariableSpec::QueueImbalance);
    assert_eq!(report.messages, 20);
    assert!(report.warnings.is_empty());
    assert_eq!(report.aggregated, 1);
    assert_eq!(report.classification.deeper_than_level1, 3);
    assert_eq!(report.classification.hidden_executions, 1);
    assert_eq!(report.classification.auction_or_halt, 1);
    assert_eq!(report.classification.kept, 14);
    assert_eq!(report.build.in_window, 12);
    assert_eq!(report.build.ties_shifted, 1);
    assert_eq!(report.build.after_window, 1);
}

#[test]
fn message_rows_round_trip() {
    let text = read("messages.csv");
    let (msgs, _) = parse_messages(text.as_bytes()).unwrap();
    let rows: Vec<String> = msgs.iter().map(LobMessage::to_row).collect();
    assert_eq!(rows.join("\n") + "\n", text);
}

/// Mirror image: directions flipped, prices negated, book sides swapped.
fn mirror(messages: &str, book: &str) -> (String, String) {
    let (msgs, _) = parse_messages(messages.as_bytes()).unwrap();
    let m: Vec<String> = msgs
        .into_iter()
        .map(|mut m| {
            m.direction = match m.direction {
                Direction::Buy => Direction::Sell,
                Direction::Sell => Direction::Buy,
            };
            m.price = -m.price;
            m.to_row()
        })
        .collect();
    let b: Vec<String> = book
        .lines()
        .map(|l| {
            let f: Vec<i64> = l.split(',').map(|v| v.parse().unwrap()).collect();
            format!("{},{},{},{}", -f[2], f[3], -f[0], f[1])
        })
        .collect();
    (m.join("\n") + "\n", b.join("\n") + "\n")
}

#[test]
fn mirror_symmetry_away_from_bin_edges() {
    // drop the rows whose QI sits exactly on a bin edge, where right-open bins break the symmetry
    let msgs: Vec<&str> = read_lines("messages.csv");
    let book: Vec<&str> = read_lines("book.csv");
    let keep: Vec<usize> = (0..20)
        .filter(|&i| {
            let f: Vec<i64> = book[i].split(',').map(|v| v.parse().unwrap()).collect();
            let (qa, qb) = (f[1], f[3]);
            ![-3i64, -1, 1, 3].iter().any(|k| 5 * (qb - qa) == k * (qb + qa))
        })
        .collect();
    let m: String = keep.iter().map(|&i| format!("{}\n", msgs[i])).collect();
    let b: String = keep.iter().map(|&i| format!("{}\n", book[i])).collect();
    let (mm, mb) = mirror(&m, &b);
    let go = |m: &str, b: &str| {
        ingest(m.as_bytes(), b.as_bytes(), &StateVariableSpec::QueueImbalance, 43_200_000_000_000, 52_200_000_000_000, false)
            .unwrap()
            .0
    };
    let (a, z) = (go(&m, &b), go(&mm, &mb));
    assert!(a.len() >= 8);
    assert_eq!(a.times, z.times);
    assert_eq!(a.initial_state, 4 - z.initial_state);
    for i in 0..a.len() {
        assert_eq!(a.events[i], 1 - z.events[i]);
        assert_eq!(a.states[i], 4 - z.states[i]);
    }
    assert!(a.events.contains(&ASK) && a.events.contains(&BID));
}

fn read_lines(name: &str) -> Vec<&'static str> {
    Box::leak(read(name).into_boxed_str()).lines().collect()
}
