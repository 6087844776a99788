//! Per-process CPU and resident-memory sampling from `/proc`.
//!
//! CPU percent is the process's user+system time over the wall time between
//! consecutive samples, so a process saturating one core reads 100. The first
//! sample covers the span since the sampler started.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crate::BenchError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResourceSample {
    /// Milliseconds since sampling began.
    pub t_ms: u64,
    pub cpu_percent: f64,
    pub rss_bytes: u64,
}

#[cfg(target_os = "linux")]
mod proc {
    use super::BenchError;

    pub fn clock_ticks() -> f64 {
        // SAFETY: sysconf has no preconditions.
        let t = unsafe { libc::sysconf(libc::_SC_CLK_TCK) };
        if t > 0 { t as f64 } else { 100.0 }
    }

    pub fn page_size() -> u64 {
        // SAFETY: sysconf has no preconditions.
        let p = unsafe { libc::sysconf(libc::_SC_PAGESIZE) };
        if p > 0 { p as u64 } else { 4096 }
    }

    /// Total user+system clock ticks consumed so far.
    pub fn cpu_ticks(pid: u32) -> Result<u64, BenchError> {
        let stat = std::fs::read_to_string(format!("/proc/{pid}/stat")).map_err(|_| BenchError::NoSuchProcess(pid))?;
        // The command name may contain spaces; fields resume after the last ')'.
        let rest = stat.rsplit_once(')').map(|(_, r)| r).ok_or(BenchError::NoSuchProcess(pid))?;
        let fields: Vec<&str> = rest.split_whitespace().collect();
        // utime and stime are fields 14 and 15 of the full line; `rest` starts at field 3.
        let get = |i: usize| fields.get(i).and_then(|f| f.parse::<u64>().ok()).ok_or(BenchError::NoSuchProcess(pid));
        if fields.first() == Some(&"Z") {
            return Err(BenchError::NoSuchProcess(pid));
        }
        Ok(get(11)? + get(12)?)
    }

    pub fn rss_bytes(pid: u32) -> Result<u64, BenchError> {
        let statm = std::fs::read_to_string(format!("/proc/{pid}/statm")).map_err(|_| BenchError::NoSuchProcess(pid))?;
        let pages: u64 = statm
            .split_whitespace()
            .nth(1)
            .and_then(|f| f.parse().ok())
            .ok_or(BenchError::NoSuchProcess(pid))?;
        Ok(pages * page_size())
    }
}

#[cfg(not(target_os = "linux"))]
mod proc {
    use super::BenchError;

    pub fn clock_ticks() -> f64 {
        100.0
    }

    pub fn cpu_ticks(_pid: u32) -> Result<u64, BenchError> {
        Err(BenchError::Unsupported)
    }

    pub fn rss_bytes(_pid: u32) -> Result<u64, BenchError> {
        Err(BenchError::Unsupported)
    }
}

struct Probe {
    pid: u32,
    hz: f64,
    start: Instant,
    last_at: Instant,
    last_ticks: u64,
}

impl Probe {
    fn new(pid: u32) -> Result<Self, BenchError> {
        let now = Instant::now();
        Ok(Self { pid, hz: proc::clock_ticks(), start: now, last_at: now, last_ticks: proc::cpu_ticks(pid)? })
    }

    fn sample(&mut self) -> Result<ResourceSample, BenchError> {
        let ticks = proc::cpu_ticks(self.pid)?;
        let rss = proc::rss_bytes(self.pid)?;
        let now = Instant::now();
        let wall = now.duration_since(self.last_at).as_secs_f64();
        let cpu = if wall > 0.0 { (ticks - self.last_ticks) as f64 / self.hz / wall * 100.0 } else { 0.0 };
        self.last_at = now;
        self.last_ticks = ticks;
        Ok(ResourceSample { t_ms: now.duration_since(self.start).as_millis() as u64, cpu_percent: cpu, rss_bytes: rss })
    }
}

/// Samples `pid` every `interval` for `duration`, blocking the caller.
pub fn sample_resources(pid: u32, interval: Duration, duration: Duration) -> Result<Vec<ResourceSample>, BenchError> {
    let mut probe = Probe::new(pid)?;
    let mut out = Vec::new();
    let end = probe.start + duration;
    let mut next = probe.start + interval;
    while next <= end {
        std::thread::sleep(next.saturating_duration_since(Instant::now()));
        out.push(probe.sample()?);
        next += interval;
    }
    Ok(out)
}

/// Background sampler for the duration of a measurement.
pub struct Sampler {
    stop: Arc<AtomicBool>,
    thread: JoinHandle<Vec<ResourceSample>>,
}

impl Sampler {
    pub fn start(pid: u32, interval: Duration) -> Result<Self, BenchError> {
        let mut probe = Probe::new(pid)?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let thread = std::thread::spawn(move || {
            let mut out = Vec::new();
            let mut next = probe.start + interval;
            loop {
                while Instant::now() < next {
                    if flag.load(Ordering::Relaxed) {
                        return out;
                    }
                    std::thread::sleep(next.saturating_duration_since(Instant::now()).min(Duration::from_millis(10)));
                }
                match probe.sample() {
                    Ok(s) => out.push(s),
                    Err(_) => return out,
                }
                next += interval;
            }
        });
        Ok(Self { stop, thread })
    }

    pub fn stop(self) -> Vec<ResourceSample> {
        self.stop.store(true, Ordering::Relaxed);
        self.thread.join().unwrap_or_default()
    }
}

#[cfg(all(test, target_os = "linux"))]
mod tests {
    use super::*;
    use std::process::Command;

    #[test]
    fn busy_child_uses_cpu() {
        let mut child = Command::new("sh").args(["-c", "while :; do :; done"]).spawn().unwrap();
        let s = sample_resources(child.id(), Duration::from_millis(100), Duration::from_millis(500));
        child.kill().unwrap();
        child.wait().unwrap();
        let s = s.unwrap();
        assert_eq!(s.len(), 5);
        assert!(s.iter().any(|x| x.cpu_percent > 10.0), "{s:?}");
        assert!(s.windows(2).all(|w| w[0].t_ms < w[1].t_ms));
        assert!(s.iter().all(|x| x.rss_bytes > 0));
    }

    #[test]
    fn sleeping_child_is_idle() {
        let mut child = Command::new("sleep").arg("5").spawn().unwrap();
        let s = sample_resources(child.id(), Duration::from_millis(100), Duration::from_millis(400));
        child.kill().unwrap();
        child.wait().unwrap();
        assert!(s.unwrap().iter().all(|x| x.cpu_percent < 5.0));
    }

    #[test]
    fn dead_pid() {
        let mut child = Command::new("true").spawn().unwrap();
        let pid = child.id();
        child.wait().unwrap();
        assert!(matches!(sample_resources(pid, Duration::from_millis(10), Duration::from_millis(20)), Err(BenchError::NoSuchProcess(p)) if p == pid));
    }
}
