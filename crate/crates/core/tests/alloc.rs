//! The scoring inner loop must not touch the heap once buffers exist.

use std::alloc::{GlobalAlloc, Layout, System};
use std::cell::Cell;

use sensorsel::bench::KroneckerSource;
use sensorsel::selector::{fetch_candidate, score_fetched, CandidateBuffer, ScoreWorkspace, SelectionState};
use sensorsel::{write_k, BlockSource, KStore};

struct Counting;

thread_local! {
    static COUNT: Cell<usize> = const { Cell::new(0) };
}

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let _ = COUNT.try_with(|c| c.set(c.get() + 1));
        unsafe { System.alloc(layout) }
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) }
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let _ = COUNT.try_with(|c| c.set(c.get() + 1));
        unsafe { System.realloc(ptr, layout, new_size) }
    }
}

#[global_allocator]
static GLOBAL: Counting = Counting;

fn allocations_in<R>(f: impl FnOnce() -> R) -> (usize, R) {
    let before = COUNT.with(Cell::get);
    let r = f();
    (COUNT.with(Cell::get) - before, r)
}

/// Run a full greedy selection by hand and count heap allocations in every
/// round after setup.
fn greedy_rounds<T: sensorsel::linalg::Real, S: BlockSource>(source: &S, budget: usize) -> Vec<usize> {
    let (nd, nt) = (source.n_sensors(), source.n_steps());
    let mut state = SelectionState::<T>::new(nd, budget, nt);
    let mut buf = CandidateBuffer::new(budget, nt);
    let mut ws = ScoreWorkspace::<T>::new(budget, nt);
    let mut best_ws = ScoreWorkspace::<T>::new(budget, nt);
    let mut counts = Vec::new();
    for _ in 0..budget {
        let (n, ()) = allocations_in(|| {
            let mut best: Option<(f64, usize)> = None;
            for c in 0..nd {
                if state.contains(c) {
                    continue;
                }
                fetch_candidate(source, state.chosen(), c, &mut buf).unwrap();
                let d = score_fetched(&state, &buf, &mut ws).unwrap();
                if sensorsel::selector::beats(d, c, best) {
                    best = Some((d, c));
                    std::mem::swap(&mut ws, &mut best_ws);
                }
            }
            let (d, s) = best.unwrap();
            state.commit(s, &best_ws, d, 0.0).unwrap();
        });
        counts.push(n);
    }
    counts
}

#[test]
fn counter_sees_allocations() {
    let (n, v) = allocations_in(|| vec![1u8; 16]);
    assert_eq!(v.len(), 16);
    assert!(n >= 1);
}

#[test]
fn in_memory_rounds_do_not_allocate() {
    let src = KroneckerSource::new(10, 4, 1);
    assert!(greedy_rounds::<f64, _>(&src, 5).iter().all(|&n| n == 0));
    assert!(greedy_rounds::<f32, _>(&src, 5).iter().all(|&n| n == 0));
    let k = src.to_hessian().unwrap();
    assert!(greedy_rounds::<f64, _>(&k, 5).iter().all(|&n| n == 0));
}

#[test]
fn store_reads_do_not_allocate() {
    let k = KroneckerSource::new(8, 3, 2).to_hessian().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("k.kbf");
    write_k(&k, &path).unwrap();
    let store = KStore::open(&path).unwrap();
    let counts = greedy_rounds::<f64, _>(&store, 4);
    assert!(counts.iter().all(|&n| n == 0), "{counts:?}");
    let mut out = vec![0.0; 9];
    let (n, r) = allocations_in(|| store.read_block(3, 5, &mut out));
    r.unwrap();
    assert_eq!(n, 0);
}
