//! Per-thread compute timers for the site, central and populate phases.
//!
//! Each phase runs on its own thread and stands in for a separate machine.
//! On Unix the timer reads the thread's CPU clock, so sites that share a
//! core with other sites are not charged for each other's work. Elsewhere
//! it falls back to wall time.

use std::time::Instant;

pub struct PhaseTimer {
    wall: Instant,
    #[cfg(unix)]
    cpu: Option<f64>,
}

#[cfg(unix)]
fn thread_cpu_seconds() -> Option<f64> {
    let mut ts = libc::timespec {
        tv_sec: 0,
        tv_nsec: 0,
    };
    // SAFETY: `ts` is a valid, writable timespec for the duration of the call.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    (rc == 0).then(|| ts.tv_sec as f64 + ts.tv_nsec as f64 * 1e-9)
}

impl PhaseTimer {
    /// Must be read on the thread that started it.
    pub fn start() -> Self {
        Self {
            wall: Instant::now(),
            #[cfg(unix)]
            cpu: thread_cpu_seconds(),
        }
    }

    pub fn seconds(&self) -> f64 {
        #[cfg(unix)]
        if let (Some(start), Some(now)) = (self.cpu, thread_cpu_seconds()) {
            return (now - start).max(0.0);
        }
        self.wall.elapsed().as_secs_f64()
    }
}
