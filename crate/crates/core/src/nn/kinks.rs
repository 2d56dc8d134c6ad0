//! Branch-pattern fingerprinting for finite-difference checks.
//!
//! Piecewise functions (rectifiers, hinges, log clamps) report which branch
//! they took while a monitor is active on the current thread. Two
//! evaluations with different fingerprints straddle a kink, so a central
//! difference across them is meaningless.

use std::cell::Cell;

thread_local! {
    static MONITOR: Cell<Option<u64>> = const { Cell::new(None) };
}

const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;

#[inline]
pub fn active() -> bool {
    MONITOR.with(|m| m.get().is_some())
}

/// Mixes one branch decision into the active fingerprint. No-op when no
/// monitor is running.
#[inline]
pub fn record(branch: bool) {
    MONITOR.with(|m| {
        if let Some(h) = m.get() {
            m.set(Some((h ^ u64::from(branch)).wrapping_mul(FNV_PRIME)));
        }
    });
}

/// Runs `f` with a fresh monitor and returns its result with the fingerprint.
pub fn fingerprint<R>(f: impl FnOnce() -> R) -> (R, u64) {
    let prev = MONITOR.with(|m| m.replace(Some(FNV_OFFSET)));
    let out = f();
    let h = MONITOR.with(|m| m.replace(prev)).unwrap_or(FNV_OFFSET);
    (out, h)
}
