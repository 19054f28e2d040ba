//! Worker-thread pinning policies.

use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;

use crate::error::Error;
use crate::host;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AffinityPolicy {
    /// Worker i is pinned to all hardware threads of physical core i.
    #[default]
    Cores,
    /// Worker i is pinned to logical CPU i.
    Threads,
    None,
}

impl AffinityPolicy {
    pub const ENV: &'static str = "ADSALA_AFFINITY";

    /// Reads `ADSALA_AFFINITY`; unset or unparseable values give the default.
    pub fn from_env() -> Self {
        match std::env::var(Self::ENV) {
            Ok(v) => v.parse().unwrap_or_else(|e| {
                log::warn!("{e}; using default affinity policy");
                Self::default()
            }),
            Err(_) => Self::default(),
        }
    }
}

impl FromStr for AffinityPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cores" => Ok(Self::Cores),
            "threads" => Ok(Self::Threads),
            "none" => Ok(Self::None),
            other => Err(Error::Parameter(format!(
                "unknown affinity policy {other:?} (expected cores, threads or none)"
            ))),
        }
    }
}

impl fmt::Display for AffinityPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Cores => "cores",
            Self::Threads => "threads",
            Self::None => "none",
        })
    }
}

/// What a policy resolves to on this host.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AffinityDescriptor {
    pub requested: AffinityPolicy,
    pub applied: AffinityPolicy,
    /// One CPU set per worker slot; empty when unpinned.
    pub masks: Vec<Vec<usize>>,
    /// Set when the requested policy could not be honoured.
    pub warning: bool,
}

impl AffinityDescriptor {
    /// CPU set for worker `index`; workers beyond the mask count wrap around.
    pub fn mask_for(&self, index: usize) -> Option<&[usize]> {
        if self.masks.is_empty() {
            None
        } else {
            Some(&self.masks[index % self.masks.len()])
        }
    }
}

static PROCESS_POLICY: Mutex<Option<AffinityPolicy>> = Mutex::new(None);

/// Sets the policy used by worker pools created after this call and returns
/// the masks it resolves to.
pub fn set_affinity_policy(policy: AffinityPolicy) -> AffinityDescriptor {
    *PROCESS_POLICY.lock().unwrap() = Some(policy);
    resolve(policy)
}

/// Policy for new pools: the last `set_affinity_policy` value, else the
/// environment, else `cores`.
pub fn current_policy() -> AffinityPolicy {
    PROCESS_POLICY
        .lock()
        .unwrap()
        .unwrap_or_else(AffinityPolicy::from_env)
}

pub fn resolve(policy: AffinityPolicy) -> AffinityDescriptor {
    if !pinning_supported() {
        return AffinityDescriptor {
            requested: policy,
            applied: AffinityPolicy::None,
            masks: Vec::new(),
            warning: policy != AffinityPolicy::None,
        };
    }
    let masks = match policy {
        AffinityPolicy::Cores => host::core_groups(),
        AffinityPolicy::Threads => host::core_groups()
            .into_iter()
            .flatten()
            .map(|cpu| vec![cpu])
            .collect::<Vec<_>>(),
        AffinityPolicy::None => Vec::new(),
    };
    if policy != AffinityPolicy::None && masks.is_empty() {
        return AffinityDescriptor {
            requested: policy,
            applied: AffinityPolicy::None,
            masks,
            warning: true,
        };
    }
    AffinityDescriptor {
        requested: policy,
        applied: policy,
        masks,
        warning: false,
    }
}

pub fn pinning_supported() -> bool {
    cfg!(target_os = "linux")
}

/// Restricts the calling thread to `cpus`. Returns false on failure.
#[cfg(target_os = "linux")]
pub fn pin_current_thread(cpus: &[usize]) -> bool {
    if cpus.is_empty() {
        return false;
    }
    // SAFETY: cpu_set_t is plain data manipulated through libc macros.
    unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        for &c in cpus {
            libc::CPU_SET(c, &mut set);
        }
        libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set) == 0
    }
}

#[cfg(not(target_os = "linux"))]
pub fn pin_current_thread(_cpus: &[usize]) -> bool {
    false
}

/// CPUs the calling thread may currently run on.
pub fn current_thread_affinity() -> Vec<usize> {
    host::allowed_cpus()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_policies() {
        assert_eq!("cores".parse::<AffinityPolicy>().unwrap(), AffinityPolicy::Cores);
        assert_eq!(" THREADS ".parse::<AffinityPolicy>().unwrap(), AffinityPolicy::Threads);
        assert_eq!("none".parse::<AffinityPolicy>().unwrap(), AffinityPolicy::None);
        assert!("sockets".parse::<AffinityPolicy>().is_err());
    }

    #[test]
    fn none_sets_no_masks() {
        let d = resolve(AffinityPolicy::None);
        assert!(d.masks.is_empty());
        assert!(!d.warning);
        assert_eq!(d.applied, AffinityPolicy::None);
    }

    #[test]
    fn cores_gives_one_distinct_mask_per_physical_core() {
        let d = resolve(AffinityPolicy::Cores);
        if !pinning_supported() {
            assert_eq!(d.applied, AffinityPolicy::None);
            assert!(d.warning);
            return;
        }
        assert_eq!(d.masks.len(), host::physical_cores());
        let mut seen: Vec<&Vec<usize>> = d.masks.iter().collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), d.masks.len());
        // disjoint
        let all: Vec<usize> = d.masks.iter().flatten().copied().collect();
        let mut uniq = all.clone();
        uniq.sort();
        uniq.dedup();
        assert_eq!(uniq.len(), all.len());
    }

    #[test]
    fn threads_gives_single_cpu_masks() {
        let d = resolve(AffinityPolicy::Threads);
        if pinning_supported() {
            assert_eq!(d.masks.len(), host::logical_cores());
            assert!(d.masks.iter().all(|m| m.len() == 1));
        }
    }
}
