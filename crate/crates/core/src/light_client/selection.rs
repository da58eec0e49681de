//! Choosing which providers back a check.

use thiserror::Error;

use crate::contract::Wei;
use crate::crypto::PublicKey;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SelectionError {
    #[error("eligible providers back only {available} of the required {required} wei")]
    NoEligibleProviders { required: Wei, available: Wei },
    #[error("required backing must be positive")]
    ZeroBacking,
}

/// Greedy by descending backing (ties broken by public key) until the sum
/// reaches `required`; the last allocation is trimmed to the remainder.
pub fn select_providers(
    candidates: &[(PublicKey, Wei)],
    required: Wei,
) -> Result<Vec<(PublicKey, Wei)>, SelectionError> {
    if required == 0 {
        return Err(SelectionError::ZeroBacking);
    }
    let mut sorted: Vec<(PublicKey, Wei)> = candidates.iter().copied().filter(|(_, w)| *w > 0).collect();
    sorted.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut out = Vec::new();
    let mut sum: Wei = 0;
    for (pk, w) in sorted {
        let take = w.min(required - sum);
        out.push((pk, take));
        sum += take;
        if sum == required {
            return Ok(out);
        }
    }
    Err(SelectionError::NoEligibleProviders { required, available: sum })
}

/// Peak total value of checks that are open at the same time. Each window is
/// `(first_block, last_block, value)` with inclusive bounds.
pub fn required_coverage(windows: &[(u64, u64, Wei)]) -> Wei {
    let mut edges: Vec<(u64, bool, Wei)> = Vec::with_capacity(windows.len() * 2);
    for &(start, end, v) in windows {
        edges.push((start, true, v));
        edges.push((end + 1, false, v));
    }
    // closings sort before openings at the same block
    edges.sort_by_key(|&(at, open, _)| (at, open));
    let (mut cur, mut peak) = (0, 0);
    for (_, open, v) in edges {
        if open {
            cur += v;
            peak = peak.max(cur);
        } else {
            cur -= v;
        }
    }
    peak
}
