//! Injectable time source.
//!
//! Every timestamp in audit records, traces, and log entries comes from a
//! [`Clock`] handle. Production code uses [`SystemClock`]; replay tests use
//! [`FixedClock`], which advances by a fixed tick per call so repeated runs
//! produce identical bytes.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

pub trait Clock: Send + Sync {
    /// Current time as milliseconds since the Unix epoch.
    fn now_unix_ms(&self) -> u64;
}

/// Shared clock handle.
pub type SharedClock = Arc<dyn Clock>;

/// Wall clock.
#[derive(Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_unix_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// Deterministic clock: starts at `start_ms` and advances by `tick_ms` on
/// every call. Two processes issuing the same call sequence observe the same
/// timestamps.
#[derive(Debug)]
pub struct FixedClock {
    start_ms: u64,
    tick_ms: u64,
    calls: AtomicU64,
}

impl FixedClock {
    pub fn new(start_ms: u64, tick_ms: u64) -> Self {
        Self {
            start_ms,
            tick_ms,
            calls: AtomicU64::new(0),
        }
    }
}

impl Clock for FixedClock {
    fn now_unix_ms(&self) -> u64 {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        self.start_ms + n * self.tick_ms
    }
}

pub fn system_clock() -> SharedClock {
    Arc::new(SystemClock)
}

pub fn fixed_clock(start_ms: u64, tick_ms: u64) -> SharedClock {
    Arc::new(FixedClock::new(start_ms, tick_ms))
}

/// Render a unix-ms timestamp as RFC 3339 UTC with second precision.
///
/// Hand-rolled civil-date conversion keeps log formatting free of a
/// dependency on a date-time crate for one format.
pub fn format_rfc3339(unix_ms: u64) -> String {
    let secs = unix_ms / 1000;
    let days = secs / 86_400;
    let rem = secs % 86_400;
    let (h, m, s) = (rem / 3600, (rem % 3600) / 60, rem % 60);
    let (year, month, day) = civil_from_days(days as i64);
    format!("{year:04}-{month:02}-{day:02}T{h:02}:{m:02}:{s:02}Z")
}

// Howard Hinnant's days-to-civil algorithm.
fn civil_from_days(z: i64) -> (i64, u32, u32) {
    let z = z + 719_468;
    let era = if z >= 0 { z } else { z - 146_096 } / 146_097;
    let doe = (z - era * 146_097) as u64;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe as i64 + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    (if m <= 2 { y + 1 } else { y }, m, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_clock_ticks() {
        let c = FixedClock::new(1_000, 5);
        assert_eq!(c.now_unix_ms(), 1_000);
        assert_eq!(c.now_unix_ms(), 1_005);
        assert_eq!(c.now_unix_ms(), 1_010);
    }

    #[test]
    fn rfc3339_known_instants() {
        assert_eq!(format_rfc3339(0), "1970-01-01T00:00:00Z");
        // 2026-01-01T00:00:00Z
        assert_eq!(format_rfc3339(1_767_225_600_000), "2026-01-01T00:00:00Z");
        // leap-year day: 2024-02-29T12:00:00Z
        assert_eq!(format_rfc3339(1_709_208_000_000), "2024-02-29T12:00:00Z");
    }
}
