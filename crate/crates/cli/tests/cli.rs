use std::process::{Command, Output};

use mss::charsum::CharSumReport;
use mss::regimes::{Answer, DecisionOutcome, Regime};
use mss::FieldElement;
use serde_json::Value;

fn mss(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mss"))
        .args(args)
        .env_remove("MSS_BUDGET")
        .output()
        .expect("spawn mss")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn decide_example_yes_with_witness() {
    let o = mss(&["decide", "--field", "7", "--set", "monomial:n=2", "--m", "1", "--b", "3", "--k", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.starts_with("# mss decide field=7^1:modulus=0,1 set=monomial:n=2 m=1 b=3 k=2"));
    assert!(s.contains("answer: YES"));
    assert!(s.contains("witness: 1,2"));
}

#[test]
fn missing_k_is_a_usage_error() {
    let o = mss(&["decide", "--field", "7", "--set", "monomial:n=2", "--m", "2", "--b", "3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(o.stdout.is_empty());
}

#[test]
fn malformed_inputs_report_positions() {
    let o = mss(&["valueset", "--field", "7", "--set", "dickson:n=2,a=x"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("at byte 14"), "{err}");
    let o = mss(&["valueset", "--field", "6", "--set", "monomial:n=2"]);
    assert_eq!(o.status.code(), Some(1));
    let o = mss(&["decide", "--field", "7", "--set", "monomial:n=2", "--m", "2", "--b", "3", "--k", "1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn valueset_example() {
    let o = mss(&["valueset", "--field", "5", "--set", "dickson:n=2,a=1", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["size"], 3);
    assert_eq!(v["elements"], serde_json::json!([2, 3, 4]));
    assert_eq!(v["config"]["field"], "5^1:modulus=0,1");
}

#[test]
fn decide_json_round_trips() {
    for args in [
        vec!["--field", "7", "--set", "monomial:n=2", "--m", "1", "--b", "3", "--k", "2"],
        vec!["--field", "4096", "--set", "monomial:n=1", "--m", "1", "--b", "77", "--k", "40"],
        vec!["--field", "9", "--set", "dickson:n=2,a=1", "--m", "2", "--b", "1,3", "--k", "4"],
        vec!["--field", "4", "--set", "monomial:n=1", "--m", "2", "--b", "1,0", "--k", "2"],
    ] {
        let mut full = vec!["decide", "--json"];
        full.extend(args);
        let o = mss(&full);
        assert_eq!(o.status.code(), Some(0));
        let text = stdout(&o);
        let cert: DecisionOutcome = serde_json::from_str(&text).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        for key in ["answer", "regime", "duality_applied", "hypotheses"] {
            assert!(v.get(key).is_some(), "{key} missing in {text}");
        }
        let again: Value = serde_json::to_value(&cert).unwrap();
        for (k, x) in again.as_object().unwrap() {
            assert_eq!(&v[k], x);
        }
    }
}

#[test]
fn decide_regimes_through_cli() {
    let o = mss(&["decide", "--json", "--field", "4096", "--set", "monomial:n=1", "--m", "1", "--b", "77", "--k", "40"]);
    let cert: DecisionOutcome = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(cert.answer, Answer::Yes);
    assert_eq!(cert.regime, Regime::LargeKTheoremEven);
    assert!(cert.hypotheses.iter().all(|h| h.holds));

    let o = mss(&["decide", "--json", "--field", "4", "--set", "monomial:n=1", "--m", "2", "--b", "1,0", "--k", "2"]);
    let cert: DecisionOutcome = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!((cert.answer, cert.regime), (Answer::No, Regime::InconsistentTargets));

    // k > |D|/2 goes through the complement
    let o = mss(&["decide", "--json", "--field", "7", "--set", "monomial:n=1", "--m", "1", "--b", "0", "--k", "6"]);
    let cert: DecisionOutcome = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(cert.duality_applied);
    assert_eq!(cert.answer, Answer::Yes);
    let w = cert.witness.unwrap();
    assert_eq!(w.len(), 6);
    let sum: u32 = w.iter().map(|x| x.encoding()).sum();
    assert_eq!(sum % 7, 0);
    assert!(!w.contains(&FieldElement::ZERO));
}

#[test]
fn budget_exit_code_and_env_override() {
    let args = ["decide", "--field", "4096", "--set", "monomial:n=1", "--m", "1", "--b", "5", "--k", "20"];
    let mut with_flag = args.to_vec();
    with_flag.extend(["--budget", "1000"]);
    let o = mss(&with_flag);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("budget exceeded"));

    let o = Command::new(env!("CARGO_BIN_EXE_mss"))
        .args(args)
        .env("MSS_BUDGET", "1000")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8(o.stderr).unwrap().contains("budget 1000"));

    let o = Command::new(env!("CARGO_BIN_EXE_mss"))
        .args(args)
        .env("MSS_BUDGET", "lots")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn count_engines_agree() {
    let base = ["count", "--field", "9", "--set", "dickson:n=2,a=1", "--m", "2", "--b", "1,3", "--k", "3", "--json"];
    let mut counts = Vec::new();
    for engine in ["dp", "brute"] {
        let mut a = base.to_vec();
        a.extend(["--engine", engine]);
        let o = mss(&a);
        assert_eq!(o.status.code(), Some(0));
        let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
        counts.push(v["count"].as_str().unwrap().to_string());
    }
    assert_eq!(counts[0], counts[1]);
    let mut a = base.to_vec();
    a.extend(["--engine", "bool"]);
    let v: Value = serde_json::from_str(&stdout(&mss(&a))).unwrap();
    assert_eq!(v["positive"].as_bool().unwrap(), counts[0] != "0");

    let mut a = base.to_vec();
    a.push("--ordered");
    let v: Value = serde_json::from_str(&stdout(&mss(&a))).unwrap();
    let n: u64 = counts[0].parse().unwrap();
    assert_eq!(v["count"].as_str().unwrap(), (6 * n).to_string());
    assert_eq!(v["kind"], "M_k");
}

#[test]
fn preimage_matches_enumeration() {
    for x0 in 0..9 {
        let x = x0.to_string();
        let o = mss(&["preimage", "--json", "--field", "9", "--set", "dickson:n=4,a=2", "--x0", &x]);
        assert_eq!(o.status.code(), Some(0));
        let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
        assert_eq!(v["agree"], true, "{v}");
    }
}

#[test]
fn audit_streams_one_record_per_test() {
    let o = mss(&["audit", "--field", "8", "--set", "dickson:n=3,a=1", "--m", "2", "--kind", "dickson-image"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    let header: Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    assert_eq!(header["config"]["coverage"], "exhaustive");
    let mut n = 0;
    for line in lines {
        let r: CharSumReport = serde_json::from_str(line).unwrap();
        let v: Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["m"], 2);
        assert!(r.pass);
        n += 1;
    }
    // y^2 terms are redundant in characteristic 2, leaving the nonzero c_1
    assert_eq!(n, 7);
}

#[test]
fn output_is_byte_identical_across_runs_and_threads() {
    let cases: Vec<Vec<&str>> = vec![
        vec!["decide", "--field", "27", "--set", "monomial:n=2", "--m", "2", "--b", "5,7", "--k", "6", "--json"],
        vec!["count", "--field", "25", "--set", "dickson:n=3,a=2", "--m", "2", "--b", "3,4", "--k", "5"],
        vec!["audit", "--field", "49", "--set", "monomial:n=2", "--m", "2", "--samples", "50", "--seed", "7"],
    ];
    for case in cases {
        let one = mss(&case);
        let again = mss(&case);
        let mut threaded = case.clone();
        threaded.extend(["--threads", "4"]);
        let four = mss(&threaded);
        assert_eq!(one.status.code(), Some(0));
        assert_eq!(one.stdout, again.stdout);
        assert_eq!(one.stdout, four.stdout);
    }
}

#[test]
fn selftest_passes() {
    let o = mss(&["selftest"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert_eq!(s.lines().filter(|l| l.starts_with("PASS ")).count(), 5);
}
