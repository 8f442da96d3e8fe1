//! Fingerprint of the branch taken at every non-smooth point during a forward pass.
//!
//! Finite-difference checks are only meaningful when both perturbed evaluations
//! stay on the same side of every kink (leaky-relu, absolute value). The probe
//! hashes the sign pattern seen by those ops so a checker can detect crossings.

use std::cell::Cell;

thread_local! {
    static STATE: Cell<Option<u64>> = const { Cell::new(None) };
}

const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;

pub(crate) fn record(signs: impl Iterator<Item = bool>) {
    STATE.with(|s| {
        if let Some(mut h) = s.get() {
            for b in signs {
                h = (h ^ u64::from(b)).wrapping_mul(FNV_PRIME);
            }
            s.set(Some(h));
        }
    });
}

/// Runs `f` and returns its result with the branch fingerprint of every
/// kinked op evaluated inside.
pub fn with_kink_probe<T>(f: impl FnOnce() -> T) -> (T, u64) {
    let prev = STATE.with(|s| s.replace(Some(FNV_OFFSET)));
    let out = f();
    let h = STATE.with(|s| s.replace(prev)).unwrap_or(FNV_OFFSET);
    (out, h)
}
