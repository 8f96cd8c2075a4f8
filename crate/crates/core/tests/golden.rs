//! Frozen verdicts for every built-in fixture. Each expected pass/fail bit
//! is also confirmed by the brute-force oracle.

use mtc_core::check::{check, Level};
use mtc_core::fixtures::fixture_text;
use mtc_core::history::History;
use mtc_core::lwt::{split_by_object, verify_all, LwtOp};
use mtc_core::oracle::{oracle, oracle_lin, OracleBudget, OracleOutcome};
use serde_json::Value;

const GOLDEN: &str = include_str!("golden/verdicts.jsonl");

#[test]
fn fixture_verdicts_match_golden() {
    let budget = OracleBudget::default();
    let mut rows = 0;
    for line in GOLDEN.lines() {
        let row: Value = serde_json::from_str(line).unwrap();
        let name = row["fixture"].as_str().unwrap();
        let level: Level = row["level"].as_str().unwrap().parse().unwrap();
        let text = fixture_text(name).unwrap_or_else(|| panic!("unknown fixture {name}"));

        let (verdict, slow) = if level == Level::Lin {
            let ops = LwtOp::from_jsonl(&text).unwrap();
            let slow = split_by_object(ops.clone()).values().map(|hx| oracle_lin(hx, &budget)).collect::<Vec<_>>();
            let slow = if slow.contains(&OracleOutcome::Fail) { OracleOutcome::Fail } else { OracleOutcome::Pass };
            (verify_all(ops), slow)
        } else {
            let h = History::from_jsonl(&text).unwrap();
            (check(&h, level).unwrap(), oracle(&h, level, &budget))
        };

        let actual: Value = serde_json::from_str(&verdict.to_json()).unwrap();
        assert_eq!(actual, row["verdict"], "{name} at {level}");
        assert_eq!(slow.as_bool(), Some(verdict.ok), "oracle disagrees on {name} at {level}");
        rows += 1;
    }
    assert_eq!(rows, 2 * 16 + 2);
}
