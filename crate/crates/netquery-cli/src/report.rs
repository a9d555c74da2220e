//! Deterministic text reports: sorted tuples, per-node placement, metrics.

use netquery::local_engine::Trace;
use netquery::logic::NodeId;
use netquery::simnet::{metrics_report, Metrics, ReportFormat};
use std::collections::BTreeSet;
use std::fmt::Write;

pub struct Report {
    format: ReportFormat,
    out: String,
}

fn tuple(t: &[NodeId]) -> String {
    t.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(" ")
}

fn trace(t: &Trace) -> String {
    format!("[{}]", t.iter().map(|p| p.to_string()).collect::<Vec<_>>().join("."))
}

impl Report {
    pub fn new(format: ReportFormat) -> Report {
        let out = match format {
            ReportFormat::Csv => "kind,node,value\n".to_string(),
            ReportFormat::Table => String::new(),
        };
        Report { format, out }
    }

    pub fn line(&mut self, kind: &str, text: &str) {
        match self.format {
            ReportFormat::Csv => writeln!(self.out, "{kind},,{text}"),
            ReportFormat::Table => writeln!(self.out, "{kind}: {text}"),
        }
        .unwrap();
    }

    pub fn relation(&mut self, name: &str, vars: &[String], tuples: &BTreeSet<Vec<NodeId>>) {
        if self.format == ReportFormat::Table {
            writeln!(self.out, "{name}({}): {} tuples", vars.join(","), tuples.len()).unwrap();
        }
        for t in tuples {
            match self.format {
                ReportFormat::Csv => writeln!(self.out, "{name},,{}", tuple(t)),
                ReportFormat::Table => writeln!(self.out, "  {}", tuple(t)),
            }
            .unwrap();
        }
    }

    fn held_rows(&mut self, rows: Vec<(usize, Vec<String>)>) {
        if self.format == ReportFormat::Table {
            self.out.push_str("placement\n");
        }
        for (node, items) in rows {
            match self.format {
                ReportFormat::Csv => {
                    for it in items {
                        writeln!(self.out, "held,{node},{it}").unwrap();
                    }
                }
                ReportFormat::Table => {
                    let items: Vec<String> = items.iter().map(|i| format!("({i})")).collect();
                    writeln!(self.out, "  node {node}: {}", items.join(" ")).unwrap();
                }
            }
        }
    }

    pub fn placement(&mut self, per_node: &[BTreeSet<Vec<NodeId>>]) {
        let rows = per_node.iter().enumerate().map(|(i, ts)| (i + 1, ts.iter().map(|t| tuple(t)).collect())).collect();
        self.held_rows(rows);
    }

    /// Tuples as the holders name them: port traces from the holder.
    pub fn local_placement(&mut self, per_node: &[BTreeSet<Vec<Trace>>]) {
        let rows = per_node
            .iter()
            .enumerate()
            .map(|(i, ts)| (i + 1, ts.iter().map(|t| t.iter().map(trace).collect::<Vec<_>>().join(" ")).collect()))
            .collect();
        self.held_rows(rows);
    }

    pub fn metrics(&mut self, m: &Metrics) {
        let text = metrics_report(m, self.format);
        match self.format {
            ReportFormat::Csv => self.out.extend(text.lines().skip(1).map(|l| format!("{l}\n"))),
            ReportFormat::Table => {
                self.out.push_str("metrics\n");
                self.out.push_str(&text);
            }
        }
    }

    pub fn finish(self) -> String {
        self.out
    }
}
