//! Optional intra-op parallelism.
//!
//! Off by default so that runs are bit-reproducible without any flags. When
//! enabled, kernels split work per output element (each element is a private
//! reduction with a fixed summation order), so results stay bit-identical to
//! the serial path regardless of thread count.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::OnceLock;

static ENABLED: AtomicBool = AtomicBool::new(false);
static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();

/// Configure the number of threads used inside tensor kernels.
///
/// `n <= 1` disables parallelism. The pool size is fixed by the first call
/// that requests more than one thread.
pub fn set_intra_op_threads(n: usize) {
    if n <= 1 {
        ENABLED.store(false, Ordering::SeqCst);
        return;
    }
    POOL.get_or_init(|| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("failed to build thread pool")
    });
    ENABLED.store(true, Ordering::SeqCst);
}

pub(crate) fn enabled() -> bool {
    ENABLED.load(Ordering::SeqCst) && POOL.get().is_some()
}

pub(crate) fn install<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    match POOL.get() {
        Some(pool) if ENABLED.load(Ordering::SeqCst) => pool.install(f),
        _ => f(),
    }
}
