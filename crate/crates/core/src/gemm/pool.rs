//! Persistent worker pool that runs one job on an exact number of workers.

use std::panic::{self, AssertUnwindSafe};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;

use super::affinity::{pin_current_thread, AffinityDescriptor};

type Job<'a> = dyn Fn(usize) + Sync + 'a;

#[derive(Clone, Copy)]
struct JobPtr(*const Job<'static>);

// SAFETY: the pointee is Sync and outlives every use (see `WorkerPool::run`).
unsafe impl Send for JobPtr {}

struct State {
    generation: u64,
    active: usize,
    pending: usize,
    job: Option<JobPtr>,
    panicked: bool,
    shutdown: bool,
}

struct Shared {
    state: Mutex<State>,
    work: Condvar,
    done: Condvar,
}

pub struct WorkerPool {
    shared: Arc<Shared>,
    handles: Vec<JoinHandle<()>>,
    dispatch: Mutex<()>,
    pinned: Vec<bool>,
}

impl WorkerPool {
    pub fn new(capacity: usize, affinity: &AffinityDescriptor) -> Self {
        assert!(capacity >= 1);
        let shared = Arc::new(Shared {
            state: Mutex::new(State {
                generation: 0,
                active: 0,
                pending: 0,
                job: None,
                panicked: false,
                shutdown: false,
            }),
            work: Condvar::new(),
            done: Condvar::new(),
        });
        let (tx, rx) = std::sync::mpsc::channel();
        let handles = (0..capacity)
            .map(|index| {
                let shared = Arc::clone(&shared);
                let mask = affinity.mask_for(index).map(|m| m.to_vec());
                let tx = tx.clone();
                std::thread::Builder::new()
                    .name(format!("adsala-gemm-{index}"))
                    .spawn(move || {
                        let pinned = mask.map(|m| pin_current_thread(&m)).unwrap_or(false);
                        let _ = tx.send((index, pinned));
                        worker_loop(index, &shared);
                    })
                    .expect("spawn gemm worker")
            })
            .collect();
        drop(tx);
        let mut pinned = vec![false; capacity];
        for (i, p) in rx.iter().take(capacity) {
            pinned[i] = p;
        }
        WorkerPool {
            shared,
            handles,
            dispatch: Mutex::new(()),
            pinned,
        }
    }

    pub fn capacity(&self) -> usize {
        self.handles.len()
    }

    pub fn pinned(&self) -> &[bool] {
        &self.pinned
    }

    /// Runs `job(i)` for every `i < workers` on workers `0..workers` and
    /// blocks until all have returned. Panics from workers are re-raised.
    pub fn run<F>(&self, workers: usize, job: F)
    where
        F: Fn(usize) + Sync,
    {
        assert!(workers >= 1 && workers <= self.capacity());
        let _guard = self.dispatch.lock().unwrap_or_else(|e| e.into_inner());
        let job_ref: &Job<'_> = &job;
        // SAFETY: we block below until `pending == 0`, so no worker touches
        // the job after this frame returns.
        let ptr = JobPtr(unsafe { std::mem::transmute::<*const Job<'_>, *const Job<'static>>(job_ref) });
        let mut st = self.shared.state.lock().unwrap();
        st.job = Some(ptr);
        st.active = workers;
        st.pending = workers;
        st.panicked = false;
        st.generation = st.generation.wrapping_add(1);
        self.shared.work.notify_all();
        while st.pending > 0 {
            st = self.shared.done.wait(st).unwrap();
        }
        st.job = None;
        let panicked = st.panicked;
        drop(st);
        if panicked {
            panic!("gemm worker panicked");
        }
    }
}

fn worker_loop(index: usize, shared: &Shared) {
    let mut seen = 0u64;
    loop {
        let job = {
            let mut st = shared.state.lock().unwrap();
            loop {
                if st.shutdown {
                    return;
                }
                if st.generation != seen {
                    seen = st.generation;
                    if index < st.active {
                        break st.job.expect("job set for active generation");
                    }
                }
                st = shared.work.wait(st).unwrap();
            }
        };
        // SAFETY: `run` keeps the job alive until pending reaches zero.
        let f = unsafe { &*job.0 };
        let ok = panic::catch_unwind(AssertUnwindSafe(|| f(index))).is_ok();
        let mut st = shared.state.lock().unwrap();
        if !ok {
            st.panicked = true;
        }
        st.pending -= 1;
        if st.pending == 0 {
            shared.done.notify_all();
        }
    }
}

impl Drop for WorkerPool {
    fn drop(&mut self) {
        {
            let mut st = self.shared.state.lock().unwrap();
            st.shutdown = true;
        }
        self.shared.work.notify_all();
        for h in self.handles.drain(..) {
            let _ = h.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gemm::affinity::{resolve, AffinityPolicy};
    use std::collections::HashSet;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn unpinned() -> AffinityDescriptor {
        resolve(AffinityPolicy::None)
    }

    #[test]
    fn runs_exactly_requested_workers() {
        let pool = WorkerPool::new(6, &unpinned());
        for workers in 1..=6 {
            let hits = Mutex::new(Vec::new());
            pool.run(workers, |i| hits.lock().unwrap().push(i));
            let mut v = hits.into_inner().unwrap();
            v.sort();
            assert_eq!(v, (0..workers).collect::<Vec<_>>());
        }
    }

    #[test]
    fn jobs_run_on_distinct_threads() {
        let pool = WorkerPool::new(4, &unpinned());
        let ids = Mutex::new(HashSet::new());
        pool.run(4, |_| {
            ids.lock().unwrap().insert(std::thread::current().id());
        });
        assert_eq!(ids.into_inner().unwrap().len(), 4);
    }

    #[test]
    fn borrows_stack_data() {
        let pool = WorkerPool::new(3, &unpinned());
        let data = vec![1usize, 2, 3];
        let sum = AtomicUsize::new(0);
        for _ in 0..100 {
            pool.run(3, |i| {
                sum.fetch_add(data[i], Ordering::Relaxed);
            });
        }
        assert_eq!(sum.load(Ordering::Relaxed), 600);
    }

    #[test]
    fn worker_panic_propagates() {
        let pool = WorkerPool::new(2, &unpinned());
        let r = panic::catch_unwind(AssertUnwindSafe(|| {
            pool.run(2, |i| {
                if i == 1 {
                    panic!("boom");
                }
            })
        }));
        assert!(r.is_err());
        // pool still usable afterwards
        let n = AtomicUsize::new(0);
        pool.run(2, |_| {
            n.fetch_add(1, Ordering::Relaxed);
        });
        assert_eq!(n.load(Ordering::Relaxed), 2);
    }

    #[test]
    fn cores_policy_pins_workers_to_their_masks() {
        let desc = resolve(AffinityPolicy::Cores);
        if desc.masks.is_empty() {
            return;
        }
        let n = desc.masks.len();
        let pool = WorkerPool::new(n, &desc);
        let seen = Mutex::new(vec![Vec::new(); n]);
        pool.run(n, |i| {
            seen.lock().unwrap()[i] = crate::gemm::affinity::current_thread_affinity();
        });
        let seen = seen.into_inner().unwrap();
        for (i, mask) in seen.iter().enumerate() {
            if pool.pinned()[i] {
                assert_eq!(mask, &desc.masks[i]);
            }
        }
    }
}
