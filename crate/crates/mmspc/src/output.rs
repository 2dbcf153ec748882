//! CSV files. Floats are written in scientific notation with nine
//! significant digits, so output is byte-stable and locale-free.

use std::fs::File;
use std::path::Path;

use mmspc_core::analysis::AgeingReport;
use mmspc_core::sim::Trace;
use mmspc_core::topology::decompose_groups;
use rustfft::num_complex::Complex64;

use crate::experiment::{Comparison, Sweep};
use crate::spectrum::Spectrum;
use crate::{Error, Result};

/// Formats a float with nine significant digits.
pub fn fmt_f(x: f64) -> String {
    format!("{x:.8e}")
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes a header and rows to `path`.
pub fn write_rows<I>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Column names of a trace file for `n` modules.
pub fn trace_header(n: usize) -> Vec<String> {
    let mut h = header(&["t", "level", "i_l", "state"]);
    h.extend((0..n).map(|k| format!("i_b_{k}")));
    h.extend((0..n).map(|k| format!("soc_{k}")));
    h.extend((0..n).map(|k| format!("group_{k}")));
    h
}

/// One row per tick.
pub fn write_trace(path: &Path, trace: &Trace) -> Result<()> {
    let rows = trace.records.iter().map(|r| {
        let mut row = vec![
            fmt_f(r.t),
            r.level.to_string(),
            fmt_f(r.i_l),
            r.state.to_string(),
        ];
        row.extend(r.i_b.iter().map(|&v| fmt_f(v)));
        row.extend(r.soc.iter().map(|&v| fmt_f(v)));
        row.extend(
            decompose_groups(r.state)
                .group_of()
                .into_iter()
                .map(|g| g.to_string()),
        );
        row
    });
    write_rows(path, &trace_header(trace.n_modules), rows)
}

/// `freq_hz, amplitude`.
pub fn write_spectrum(path: &Path, spectrum: &Spectrum) -> Result<()> {
    write_rows(
        path,
        &header(&["freq_hz", "amplitude"]),
        spectrum.bins().map(|(f, a)| vec![fmt_f(f), fmt_f(a)]),
    )
}

/// `fc_hz, ripple_ratio`.
pub fn write_ageing(path: &Path, report: &AgeingReport) -> Result<()> {
    write_rows(
        path,
        &header(&["fc_hz", "ripple_ratio"]),
        report
            .entries
            .iter()
            .map(|&(f, r)| vec![fmt_f(f), fmt_f(r)]),
    )
}

/// One row per method with every figure of merit.
pub fn write_comparison(path: &Path, c: &Comparison) -> Result<()> {
    let cutoffs: Vec<f64> = c
        .proposed
        .summary
        .ageing
        .entries
        .iter()
        .map(|e| e.0)
        .collect();
    let mut h = header(&[
        "method",
        "module",
        "rms_avg_ratio",
        "ripple_ratio",
        "pattern_peak",
        "switch_rate_hz",
        "mean_switch_rate_hz",
    ]);
    h.extend(cutoffs.iter().map(|f| format!("ripple_fc_{f}")));
    let rows = c.runs().into_iter().map(|run| {
        let s = &run.summary;
        let mut row = vec![
            s.method.name().to_string(),
            s.module.to_string(),
            fmt_f(s.rms_avg),
            fmt_f(s.ripple),
            fmt_f(s.pattern),
            fmt_f(s.switch_rate),
            fmt_f(s.mean_switch_rate),
        ];
        row.extend(s.ageing.entries.iter().map(|e| fmt_f(e.1)));
        row
    });
    write_rows(path, &h, rows)
}

/// `m, method, fc_hz, ripple_ratio`.
pub fn write_sweep(path: &Path, sweep: &Sweep) -> Result<()> {
    let rows = sweep.points.iter().flat_map(|p| {
        p.ageing.entries.iter().map(move |&(f, r)| {
            vec![
                format!("{:.2}", p.m),
                p.method.name().to_string(),
                fmt_f(f),
                fmt_f(r),
            ]
        })
    });
    write_rows(
        path,
        &header(&["m", "method", "fc_hz", "ripple_ratio"]),
        rows,
    )
}

/// `m, method, module_rate_hz, mean_module_rate_hz, predicted_hz`.
pub fn write_switching(path: &Path, sweep: &Sweep) -> Result<()> {
    let rows = sweep.points.iter().map(|p| {
        vec![
            format!("{:.2}", p.m),
            p.method.name().to_string(),
            fmt_f(p.switch_rate),
            fmt_f(p.mean_switch_rate),
            fmt_f(p.predicted_rate),
        ]
    });
    write_rows(
        path,
        &header(&[
            "m",
            "method",
            "module_rate_hz",
            "mean_module_rate_hz",
            "predicted_hz",
        ]),
        rows,
    )
}

/// `freq_hz, re_ohm, im_ohm, abs_ohm`.
pub fn write_impedance(path: &Path, rows: &[(f64, Complex64)]) -> Result<()> {
    write_rows(
        path,
        &header(&["freq_hz", "re_ohm", "im_ohm", "abs_ohm"]),
        rows.iter()
            .map(|(f, z)| vec![fmt_f(*f), fmt_f(z.re), fmt_f(z.im), fmt_f(z.norm())]),
    )
}
