//! Index-ordered parallel map. Every index owns its random stream, so results
//! do not depend on the number of threads.

use std::sync::atomic::{AtomicUsize, Ordering};

static THREADS: AtomicUsize = AtomicUsize::new(1);

pub fn set_threads(n: usize) {
    THREADS.store(n.max(1), Ordering::Relaxed);
}

pub fn threads() -> usize {
    THREADS.load(Ordering::Relaxed)
}

/// f(0), ..., f(n-1) computed on up to `threads()` scoped threads, in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let k = threads().min(n);
    if k <= 1 {
        return (0..n).map(&f).collect();
    }
    let chunk = n.div_ceil(k);
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..k)
            .map(|c| s.spawn(move || (c * chunk..((c + 1) * chunk).min(n)).map(f).collect::<Vec<T>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_kept() {
        set_threads(3);
        let v = map_indexed(10, |i| i * i);
        set_threads(1);
        assert_eq!(v, (0..10).map(|i| i * i).collect::<Vec<_>>());
        assert!(map_indexed(0, |i| i).is_empty());
    }
}
