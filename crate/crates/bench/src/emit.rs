//! Report serialization.
//!
//! `report.csv` is long format, one measurement per row:
//!
//! ```text
//! mode,metric,timestamp_ms,value
//! tunnel,throughput_mbps,1000,812.5
//! tunnel,cpu_percent,250,97.1
//! ```
//!
//! Summary metrics carry the timestamp at which their run ended; series
//! metrics carry the time of each sample. All timestamps are milliseconds
//! from the start of the series. Rows follow report order, then a fixed
//! metric order, so equal reports always render to identical bytes.
//!
//! `plotdata.txt` holds the same values grouped into one whitespace-separated
//! block per (mode, metric), blocks separated by two blank lines, which
//! gnuplot addresses with `index`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::{BenchError, BenchReport};

pub const CSV_HEADER: &str = "mode,metric,timestamp_ms,value";
pub const REPORT_FILE: &str = "report.csv";
pub const PLOTDATA_FILE: &str = "plotdata.txt";

type Row = (&'static str, &'static str, u64, String);

fn num(v: f64) -> String {
    if v.is_finite() { format!("{v}") } else { "nan".into() }
}

fn rows(reports: &[BenchReport]) -> Vec<Row> {
    let mut out = Vec::new();
    for r in reports {
        let mode = r.mode.as_str();
        let end = r.start_ms + r.elapsed.as_millis() as u64;
        let mut put = |metric: &'static str, t: u64, v: String| out.push((mode, metric, t, v));
        let kind = r.kind.as_str();
        put(if kind == "rtt" { "rtt_run" } else { "throughput_run" }, end, r.payload_bytes.to_string());
        put("payload_bytes", end, r.payload_bytes.to_string());
        put("duration_ms", end, num(r.elapsed.as_secs_f64() * 1e3));
        put("packets_sent", end, r.packets_sent.to_string());
        put("packets_received", end, r.packets_received.to_string());
        put("packets_rejected", end, r.packets_rejected.to_string());
        put("wire_bytes_per_packet", end, num(r.wire_bytes_per_packet()));
        put("overhead_bytes_per_packet", end, num(r.overhead_per_packet()));
        if kind == "throughput" {
            put("throughput_mbps", end, num(r.throughput_mbps));
        }
        if let Some(s) = r.rtt {
            put("rtt_min_ms", end, num(s.min_ms));
            put("rtt_mean_ms", end, num(s.mean_ms));
            put("rtt_p95_ms", end, num(s.p95_ms));
            put("rtt_max_ms", end, num(s.max_ms));
            put("rtt_timeouts", end, s.timeouts.to_string());
        }
        for (t, ms) in &r.rtt_samples {
            put("rtt_ms", r.start_ms + t, num(*ms));
        }
        for s in &r.resources {
            put("cpu_percent", r.start_ms + s.t_ms, num(s.cpu_percent));
        }
        for s in &r.resources {
            put("rss_bytes", r.start_ms + s.t_ms, s.rss_bytes.to_string());
        }
    }
    out
}

pub fn render_csv(reports: &[BenchReport]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for (mode, metric, t, v) in rows(reports) {
        let _ = writeln!(s, "{mode},{metric},{t},{v}");
    }
    s
}

pub fn render_plotdata(reports: &[BenchReport]) -> String {
    let mut blocks: BTreeMap<(&str, &str), Vec<(u64, String)>> = BTreeMap::new();
    for (mode, metric, t, v) in rows(reports) {
        blocks.entry((mode, metric)).or_default().push((t, v));
    }
    let mut s = String::new();
    for (i, ((mode, metric), pts)) in blocks.iter().enumerate() {
        if i > 0 {
            s.push_str("\n\n");
        }
        let _ = writeln!(s, "# index {i}: mode={mode} metric={metric}");
        let _ = writeln!(s, "# timestamp_ms value");
        for (t, v) in pts {
            let _ = writeln!(s, "{t} {v}");
        }
    }
    s
}

/// Writes `report.csv` and `plotdata.txt` into `dir`, creating it if needed.
pub fn emit(reports: &[BenchReport], dir: &Path) -> Result<(PathBuf, PathBuf), BenchError> {
    std::fs::create_dir_all(dir)?;
    let csv = dir.join(REPORT_FILE);
    let plot = dir.join(PLOTDATA_FILE);
    std::fs::write(&csv, render_csv(reports))?;
    std::fs::write(&plot, render_plotdata(reports))?;
    Ok((csv, plot))
}

#[cfg(test)]
mod tests {
    use std::time::Duration;

    use super::*;
    use crate::{Kind, Mode, ResourceSample, RttStats};

    fn report() -> BenchReport {
        let mut r = BenchReport::empty(Mode::Tunnel, Kind::Rtt, 64);
        r.elapsed = Duration::from_millis(12);
        r.packets_sent = 3;
        r.packets_received = 3;
        r.wire_bytes_sent = 3 * 96;
        r.rtt_samples = vec![(0, 0.5), (4, 0.25), (8, 0.75)];
        r.rtt = RttStats::from_samples(&[0.5, 0.25, 0.75], 0);
        r.resources = vec![ResourceSample { t_ms: 10, cpu_percent: 3.5, rss_bytes: 4096 }];
        r
    }

    #[test]
    fn header_and_rows() {
        let csv = render_csv(&[report()]);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        for l in lines {
            let cols: Vec<_> = l.split(',').collect();
            assert_eq!(cols.len(), 4, "{l}");
            assert!(cols[2].parse::<u64>().is_ok());
            assert!(cols[3].parse::<f64>().is_ok(), "{l}");
        }
        assert!(csv.contains("tunnel,overhead_bytes_per_packet,12,32\n"));
        assert!(csv.contains("tunnel,rtt_ms,4,0.25\n"));
    }

    #[test]
    fn deterministic() {
        let dir = tempfile::tempdir().unwrap();
        emit(&[report()], dir.path()).unwrap();
        let a = std::fs::read(dir.path().join(REPORT_FILE)).unwrap();
        let pa = std::fs::read(dir.path().join(PLOTDATA_FILE)).unwrap();
        emit(&[report()], dir.path()).unwrap();
        assert_eq!(a, std::fs::read(dir.path().join(REPORT_FILE)).unwrap());
        assert_eq!(pa, std::fs::read(dir.path().join(PLOTDATA_FILE)).unwrap());
    }

    #[test]
    fn unwritable_path() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("file");
        std::fs::write(&file, b"x").unwrap();
        assert!(matches!(emit(&[report()], &file.join("sub")), Err(BenchError::Io(_))));
    }

    #[test]
    fn plot_blocks() {
        let p = render_plotdata(&[report()]);
        assert!(p.contains("metric=rtt_ms\n# timestamp_ms value\n0 0.5\n4 0.25\n8 0.75\n"));
    }
}
