//! Host topology queries: logical CPUs available to this process and their
//! grouping into physical cores.

use std::collections::BTreeMap;
use std::sync::OnceLock;

/// Logical CPUs this process may run on.
pub fn logical_cores() -> usize {
    static CACHED: OnceLock<usize> = OnceLock::new();
    *CACHED.get_or_init(|| {
        let allowed = allowed_cpus();
        if allowed.is_empty() {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        } else {
            allowed.len()
        }
    })
}

/// Physical cores among the allowed logical CPUs.
pub fn physical_cores() -> usize {
    core_groups().len().max(1)
}

/// Allowed logical CPUs grouped by physical core, ordered by
/// (package, core id). Each inner list holds the hyperthread siblings.
pub fn core_groups() -> Vec<Vec<usize>> {
    static CACHED: OnceLock<Vec<Vec<usize>>> = OnceLock::new();
    CACHED
        .get_or_init(|| {
            let cpus = allowed_cpus();
            let cpus = if cpus.is_empty() {
                (0..logical_cores()).collect()
            } else {
                cpus
            };
            let mut groups: BTreeMap<(i64, i64), Vec<usize>> = BTreeMap::new();
            for cpu in cpus {
                let key = topology_key(cpu).unwrap_or((0, cpu as i64));
                groups.entry(key).or_default().push(cpu);
            }
            groups.into_values().collect()
        })
        .clone()
}

/// Short human-readable description of the machine, used to tag datasets and
/// bundles.
pub fn descriptor() -> String {
    let model = cpu_model().unwrap_or_else(|| std::env::consts::ARCH.to_string());
    format!(
        "{} | {} physical / {} logical | {}",
        model,
        physical_cores(),
        logical_cores(),
        std::env::consts::OS
    )
}

fn cpu_model() -> Option<String> {
    let text = std::fs::read_to_string("/proc/cpuinfo").ok()?;
    text.lines()
        .find(|l| l.starts_with("model name"))
        .and_then(|l| l.split_once(':'))
        .map(|(_, v)| v.trim().to_string())
}

#[cfg(target_os = "linux")]
pub(crate) fn allowed_cpus() -> Vec<usize> {
    // SAFETY: cpu_set_t is plain data; sched_getaffinity fills it.
    unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        if libc::sched_getaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &mut set) != 0 {
            return Vec::new();
        }
        (0..libc::CPU_SETSIZE as usize)
            .filter(|&c| libc::CPU_ISSET(c, &set))
            .collect()
    }
}

#[cfg(not(target_os = "linux"))]
pub(crate) fn allowed_cpus() -> Vec<usize> {
    Vec::new()
}

fn topology_key(cpu: usize) -> Option<(i64, i64)> {
    let base = format!("/sys/devices/system/cpu/cpu{cpu}/topology");
    let read = |name: &str| -> Option<i64> {
        std::fs::read_to_string(format!("{base}/{name}"))
            .ok()?
            .trim()
            .parse()
            .ok()
    };
    Some((read("physical_package_id")?, read("core_id")?))
}
