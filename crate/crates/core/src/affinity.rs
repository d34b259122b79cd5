//! Optional pinning of worker threads to logical CPUs.

use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Affinity {
    /// Leave placement to the OS scheduler.
    #[default]
    None,
    /// Spread consecutive workers over distinct physical cores first.
    Scatter,
    /// Fill all hardware threads of one core before moving to the next.
    Compact,
}

impl FromStr for Affinity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(Affinity::None),
            "scatter" => Ok(Affinity::Scatter),
            "compact" => Ok(Affinity::Compact),
            other => Err(format!("unknown affinity `{other}` (none|scatter|compact)")),
        }
    }
}

/// Logical CPUs grouped by physical core, from sysfs when available.
fn cores() -> Vec<Vec<usize>> {
    let n = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut groups: Vec<((u32, u32), Vec<usize>)> = Vec::new();
    for cpu in 0..n {
        let read = |f: &str| {
            std::fs::read_to_string(format!("/sys/devices/system/cpu/cpu{cpu}/topology/{f}"))
                .ok()
                .and_then(|s| s.trim().parse::<u32>().ok())
        };
        let key = match (read("physical_package_id"), read("core_id")) {
            (Some(p), Some(c)) => (p, c),
            _ => (u32::MAX, cpu as u32),
        };
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, cpus)) => cpus.push(cpu),
            None => groups.push((key, vec![cpu])),
        }
    }
    groups.into_iter().map(|(_, cpus)| cpus).collect()
}

/// Physical cores visible to this process.
pub fn physical_cores() -> usize {
    cores().len().max(1)
}

/// CPU for worker `worker` under `policy`, or `None` to leave it unpinned.
pub fn placement(policy: Affinity, worker: usize) -> Option<usize> {
    let groups = cores();
    let order: Vec<usize> = match policy {
        Affinity::None => return None,
        Affinity::Compact => groups.iter().flatten().copied().collect(),
        Affinity::Scatter => {
            let depth = groups.iter().map(Vec::len).max().unwrap_or(1);
            (0..depth)
                .flat_map(|t| groups.iter().filter_map(move |g| g.get(t).copied()))
                .collect()
        }
    };
    order.get(worker % order.len().max(1)).copied()
}

/// Pins the calling thread. Failures are ignored; placement is a
/// performance hint only.
pub fn pin_current(policy: Affinity, worker: usize) {
    if let Some(cpu) = placement(policy, worker) {
        pin_to(cpu);
    }
}

#[cfg(target_os = "linux")]
fn pin_to(cpu: usize) {
    // SAFETY: `set` is a plain bitmask owned by this frame; a zero pid
    // targets the calling thread.
    unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        libc::CPU_SET(cpu, &mut set);
        libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set);
    }
}

#[cfg(not(target_os = "linux"))]
fn pin_to(_cpu: usize) {}
