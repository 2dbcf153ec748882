use std::fs;

use mmspc::core::sim::{run_scenario, ScenarioConfig, Trace};
use mmspc::output::{fmt_f, trace_header, write_trace};
use proptest::prelude::*;
use tempfile::TempDir;

#[test]
fn empty_trace_is_header_only() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("trace.csv");
    let trace = Trace {
        f_rate: 20_000.0,
        n_modules: 4,
        initial_soc: vec![0.5; 4],
        records: Vec::new(),
    };
    write_trace(&path, &trace).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text, format!("{}\n", trace_header(4).join(",")));
}

#[test]
fn trace_columns() {
    assert_eq!(trace_header(5).len(), 4 + 3 * 5);
    let mut cfg = ScenarioConfig::new(2).unwrap();
    cfg.duration = 0.02;
    let trace = run_scenario(&cfg).unwrap();
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("trace.csv");
    write_trace(&path, &trace).unwrap();
    let mut reader = csv::Reader::from_path(&path).unwrap();
    assert_eq!(reader.headers().unwrap().len(), 10);
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), trace.records.len());
    for (row, rec) in rows.iter().zip(&trace.records) {
        assert_eq!(row[1].parse::<i32>().unwrap(), rec.level);
        assert_eq!(row[3], rec.state.to_string());
        let i_b: f64 = row[4].parse().unwrap();
        assert!((i_b - rec.i_b[0]).abs() <= 5e-9 * rec.i_b[0].abs());
    }
}

#[test]
fn fixed_format() {
    assert_eq!(fmt_f(0.0), "0.00000000e0");
    assert_eq!(fmt_f(-1234.5), "-1.23450000e3");
    assert_eq!(fmt_f(1.0 / 3.0), "3.33333333e-1");
}

proptest! {
    #[test]
    fn nine_significant_digits_round_trip(x in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        let back: f64 = fmt_f(x).parse().unwrap();
        prop_assert!((back - x).abs() <= 5e-9 * x.abs());
    }
}
