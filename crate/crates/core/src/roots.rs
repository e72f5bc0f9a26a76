//! Bisection on `[0, 1]` with the endpoint trichotomy shared by every split
//! fraction in this crate: the sign function `s` is expected to decrease,
//! `s(0) <= 0` selects the lower endpoint, `s(1) >= 0` the upper one, and
//! otherwise a root lies strictly inside.

use crate::{MfgError, Result};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SplitCase {
    Lower,
    Upper,
    Interior,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SplitOutcome {
    pub value: f64,
    pub case: SplitCase,
    /// Evaluations of the sign function.
    pub evaluations: usize,
    /// Sign changes seen on the optional 11-point pre-scan.
    pub prescan_sign_changes: Option<usize>,
}

/// Find the split fraction for a decreasing sign function `s`.
///
/// `tol` is the final bracket width. With `prescan`, `s` is also sampled at
/// `0, 0.1, ..., 1` and the number of sign changes reported.
pub fn split_bisection<F>(mut s: F, tol: f64, prescan: bool) -> Result<SplitOutcome>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(tol > 0.0) {
        return Err(MfgError::InvalidParameter(format!("bisection tolerance must be positive, got {tol}")));
    }
    let s0 = s(0.0)?;
    let s1 = s(1.0)?;
    let mut evaluations = 2;
    let prescan_sign_changes = if prescan {
        let mut prev = s0;
        let mut changes = 0;
        for k in 1..=10 {
            let v = if k == 10 { s1 } else { s(k as f64 / 10.0)? };
            if k < 10 {
                evaluations += 1;
            }
            if (prev > 0.0 && v < 0.0) || (prev < 0.0 && v > 0.0) {
                changes += 1;
            }
            if v != 0.0 {
                prev = v;
            }
        }
        Some(changes)
    } else {
        None
    };
    let done = |value, case, evaluations| Ok(SplitOutcome { value, case, evaluations, prescan_sign_changes });
    if s0 < 0.0 && s1 > 0.0 {
        return Err(MfgError::Inconsistent(format!(
            "both endpoints are equilibria with strict signs: s(0) = {s0:e}, s(1) = {s1:e}"
        )));
    }
    if s0 <= 0.0 {
        return done(0.0, SplitCase::Lower, evaluations);
    }
    if s1 >= 0.0 {
        return done(1.0, SplitCase::Upper, evaluations);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let v = s(mid)?;
        evaluations += 1;
        if v == 0.0 {
            return done(mid, SplitCase::Interior, evaluations);
        }
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    done(0.5 * (lo + hi), SplitCase::Interior, evaluations)
}
