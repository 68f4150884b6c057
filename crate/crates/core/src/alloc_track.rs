//! Allocation-tracking hooks for the benchmark harness and memory tests.
//!
//! Binaries that want tracking register [`TrackingAllocator`] as their global
//! allocator; the counters here then report live bytes, peak bytes, and the
//! largest single allocation observed since the last reset. When no tracking
//! allocator is registered the counters stay at zero and
//! [`tracking_supported`] reports false.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicUsize, Ordering};

static LIVE: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);
static MAX_SINGLE: AtomicUsize = AtomicUsize::new(0);
static TOTAL_ALLOCS: AtomicUsize = AtomicUsize::new(0);

/// System allocator wrapper that maintains the counters in this module.
pub struct TrackingAllocator;

unsafe impl GlobalAlloc for TrackingAllocator {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc(layout);
        if !p.is_null() {
            record_alloc(layout.size());
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout);
        LIVE.fetch_sub(layout.size(), Ordering::Relaxed);
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let p = System.realloc(ptr, layout, new_size);
        if !p.is_null() {
            LIVE.fetch_sub(layout.size(), Ordering::Relaxed);
            record_alloc(new_size);
        }
        p
    }
}

fn record_alloc(size: usize) {
    TOTAL_ALLOCS.fetch_add(1, Ordering::Relaxed);
    let live = LIVE.fetch_add(size, Ordering::Relaxed) + size;
    PEAK.fetch_max(live, Ordering::Relaxed);
    MAX_SINGLE.fetch_max(size, Ordering::Relaxed);
}

/// Reset peak and max-single to the current live level.
pub fn reset() {
    PEAK.store(LIVE.load(Ordering::Relaxed), Ordering::Relaxed);
    MAX_SINGLE.store(0, Ordering::Relaxed);
}

pub fn live_bytes() -> usize {
    LIVE.load(Ordering::Relaxed)
}

pub fn peak_bytes() -> usize {
    PEAK.load(Ordering::Relaxed)
}

/// Largest single allocation since the last [`reset`].
pub fn max_single_allocation() -> usize {
    MAX_SINGLE.load(Ordering::Relaxed)
}

/// True when a tracking allocator is actually registered in this process.
pub fn tracking_supported() -> bool {
    let before = TOTAL_ALLOCS.load(Ordering::Relaxed);
    let probe = vec![0u8; 1024];
    std::hint::black_box(&probe);
    drop(probe);
    TOTAL_ALLOCS.load(Ordering::Relaxed) != before
}
