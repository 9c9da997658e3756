//! Text renderings of estimate reports. Numbers use six significant digits so
//! output diffs stay stable.

use crc_core::binary::{Diagnostic, EstimateReport};
use crc_core::sim::format_sig6;

pub const REPORT_COLUMNS: [&str; 9] = [
    "method",
    "arm",
    "point",
    "se",
    "interval_kind",
    "level",
    "lower",
    "upper",
    "diagnostics",
];

fn diagnostic_name(d: Diagnostic) -> String {
    serde_json::to_value(d)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn report_cells(r: &EstimateReport) -> Vec<String> {
    let num = |x: Option<f64>| x.map(format_sig6).unwrap_or_default();
    vec![
        r.method.to_string(),
        r.target.to_string(),
        format_sig6(r.point),
        num(r.se),
        r.interval.map(|i| i.kind.as_str().to_string()).unwrap_or_default(),
        num(r.interval.map(|i| i.level)),
        num(r.interval.map(|i| i.lower)),
        num(r.interval.map(|i| i.upper)),
        r.diagnostics
            .iter()
            .map(|d| diagnostic_name(*d))
            .collect::<Vec<_>>()
            .join(";"),
    ]
}

/// Plain CSV; no field here can contain a comma or quote.
pub fn csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

/// Left-aligned columns separated by two spaces.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ");
        s.truncate(s.trim_end().len());
        s.push('\n');
        s
    };
    let mut out = line(header.to_vec());
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out
}

pub fn reports_csv(reports: &[EstimateReport]) -> String {
    csv(&REPORT_COLUMNS, &reports.iter().map(report_cells).collect::<Vec<_>>())
}

pub fn reports_table(reports: &[EstimateReport]) -> String {
    table(&REPORT_COLUMNS, &reports.iter().map(report_cells).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crc_core::binary::{Method, Target};
    use crc_core::Arm;

    #[test]
    fn csv_row_layout() {
        let mut r = EstimateReport::new(Method::Rs, Target::Arm(Arm::A), 0.5).with_wald(0.1, 0.95);
        r.flag(Diagnostic::EstimateAboveOne);
        let text = reports_csv(&[r]);
        let row = text.lines().nth(1).unwrap();
        assert!(row.starts_with("RS,A,0.500000,0.100000,wald,0.950000,0.304004,0.695996,"));
        assert!(row.ends_with("estimate-above-one"));
    }

    #[test]
    fn table_pads_columns() {
        let t = table(&["a", "bb"], &[vec!["xxx".into(), "y".into()]]);
        assert_eq!(t, "a    bb\nxxx  y\n");
    }
}
