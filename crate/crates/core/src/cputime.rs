//! Per-thread CPU clock. Replicates run concurrently, so timing uses the
//! calling thread's CPU time rather than process or wall time.

#[derive(Debug, Clone, Copy)]
pub struct CpuTimer {
    start: f64,
}

pub fn thread_cpu_seconds() -> f64 {
    let mut ts = libc::timespec {
        tv_sec: 0,
        tv_nsec: 0,
    };
    // SAFETY: `ts` is a valid, writable timespec and the clock id is a constant.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    if rc != 0 {
        return 0.0;
    }
    ts.tv_sec as f64 + ts.tv_nsec as f64 * 1e-9
}

impl CpuTimer {
    pub fn start() -> Self {
        Self {
            start: thread_cpu_seconds(),
        }
    }

    pub fn elapsed(&self) -> f64 {
        (thread_cpu_seconds() - self.start).max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clock_advances_under_load() {
        let t = CpuTimer::start();
        let mut x = 0.0f64;
        for i in 0..2_000_000 {
            x += (i as f64).sqrt();
        }
        assert!(x > 0.0);
        assert!(t.elapsed() > 0.0);
    }
}
