//! Block placement in the first phase and the receivers' antenna switching patterns.

use serde::Serialize;

use super::SchemeParams;
use crate::combinatorics::{desired_indices, wrap1, GroupTable};
use crate::error::{BiaError, Result};
use crate::linalg::{c64, ComplexMatrix};

/// Dense matrices built for inspection are refused above this many entries.
pub(crate) const MAX_DENSE_ENTRIES: usize = 4_000_000;

pub(crate) fn dense_guard(rows: usize, cols: usize) -> Result<()> {
    let entries = rows as u128 * cols as u128;
    if entries > MAX_DENSE_ENTRIES as u128 {
        return Err(BiaError::Size { slots: entries, limit: MAX_DENSE_ENTRIES as u128 });
    }
    Ok(())
}

/// Powers `(modes - 1)^i` for `i in 0..=groups`.
#[derive(Debug, Clone)]
pub(crate) struct BlockMap {
    pows: Vec<usize>,
}

impl BlockMap {
    pub(crate) fn new(params: &SchemeParams) -> Self {
        let base = params.modes.saturating_sub(1).max(1);
        let mut pows = Vec::with_capacity(params.groups + 1);
        let mut acc = 1usize;
        for _ in 0..=params.groups {
            pows.push(acc);
            acc = acc.saturating_mul(base);
        }
        BlockMap { pows }
    }

    /// Block (1-based) of message `msg` sent at first-phase slot `slot` (1-based).
    #[inline]
    pub(crate) fn block(&self, msg: usize, slot: usize) -> usize {
        let span = self.pows[msg];
        let inner = self.pows[msg - 1];
        (slot - 1) / span * inner + (slot - 1) % inner + 1
    }

    /// Earliest first-phase slot carrying block `block` of message `msg`.
    #[inline]
    pub(crate) fn first_slot(&self, msg: usize, block: usize) -> usize {
        let inner = self.pows[msg - 1];
        (block - 1) / inner * self.pows[msg] + (block - 1) % inner + 1
    }

    #[inline]
    pub(crate) fn pow(&self, i: usize) -> usize {
        self.pows[i]
    }
}

fn check_multi_mode(params: &SchemeParams) -> Result<()> {
    if params.modes < 2 {
        return Err(BiaError::param("first-phase structure needs at least 2 modes"));
    }
    Ok(())
}

/// Block of message `msg` transmitted in first-phase slot `slot`.
pub fn block_index(msg: usize, slot: usize, params: &SchemeParams) -> Result<usize> {
    check_multi_mode(params)?;
    if msg == 0 || msg > params.groups {
        return Err(BiaError::param(format!("message {msg} outside 1..={}", params.groups)));
    }
    if slot == 0 || slot > params.phase_len() {
        return Err(BiaError::param(format!(
            "slot {slot} outside first phase 1..={}",
            params.phase_len()
        )));
    }
    Ok(BlockMap::new(params).block(msg, slot))
}

/// Row selector whose row `t` is the standard basis row of the block sent at slot `t`.
pub fn selection_matrix(msg: usize, params: &SchemeParams) -> Result<ComplexMatrix> {
    check_multi_mode(params)?;
    dense_guard(params.phase_len(), params.blocks)?;
    let mut out = ComplexMatrix::zeros(params.phase_len(), params.blocks);
    for slot in 1..=params.phase_len() {
        out[(slot - 1, block_index(msg, slot, params)? - 1)] = c64(1.0);
    }
    Ok(out)
}

/// First-phase pattern of a receiver wanting the messages in `desired`.
///
/// Starts from `1..M-1` (or all ones when message 1 is unwanted) and grows by
/// one message at a time: the current prefix is shifted cyclically for a
/// wanted message and repeated unchanged otherwise.
pub fn switching_pattern_first_phase(desired: &[usize], params: &SchemeParams) -> Result<Vec<u32>> {
    check_multi_mode(params)?;
    let base = params.modes - 1;
    let mut p = vec![1u32; params.phase_len()];
    if desired.contains(&1) {
        for (i, v) in p.iter_mut().take(base).enumerate() {
            *v = i as u32 + 1;
        }
    }
    let mut prefix = base;
    for msg in 2..=params.groups {
        let wanted = desired.contains(&msg);
        for shift in 1..base {
            for j in 0..prefix {
                p[shift * prefix + j] = if wanted {
                    wrap1(i64::from(p[j]) + shift as i64, base as i64) as u32
                } else {
                    p[j]
                };
            }
        }
        prefix *= base;
    }
    Ok(p)
}

/// One failed check of the alignment condition.
///
/// For message `msg` the slots `window * (M-1)^msg + step * (M-1)^(msg-1) + lane`
/// with `step in 0..M-1` all carry the same block of `msg`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlignmentFault {
    Length { expected: usize, found: usize },
    OutOfRange { slot: usize, mode: u32 },
    /// Unwanted message `msg`: the mode at `step` differs from the mode at step 0.
    Interference { msg: usize, window: usize, lane: usize, step: usize },
    /// Wanted message `msg`: the mode at `step` is not the step-0 mode shifted by `step`.
    Shift { msg: usize, window: usize, lane: usize, step: usize },
}

impl AlignmentFault {
    /// `(msg, window, lane)` of a structural fault.
    pub fn location(&self) -> Option<(usize, usize, usize)> {
        match *self {
            AlignmentFault::Interference { msg, window, lane, .. }
            | AlignmentFault::Shift { msg, window, lane, .. } => Some((msg, window, lane)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AlignmentReport {
    pub violations: Vec<AlignmentFault>,
}

impl AlignmentReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn first(&self) -> Option<&AlignmentFault> {
        self.violations.first()
    }
}

/// Walks every `(msg, window, lane, step)`; stops early when `sink` returns false.
fn scan_alignment(
    pattern: &[u32],
    desired: &[usize],
    params: &SchemeParams,
    mut sink: impl FnMut(AlignmentFault) -> bool,
) {
    let len = params.phase_len();
    if pattern.len() != len {
        sink(AlignmentFault::Length { expected: len, found: pattern.len() });
        return;
    }
    let base = params.modes - 1;
    for (idx, &m) in pattern.iter().enumerate() {
        if (m == 0 || m as usize > base) && !sink(AlignmentFault::OutOfRange { slot: idx + 1, mode: m }) {
            return;
        }
    }
    let map = BlockMap::new(params);
    for msg in 1..=params.groups {
        let wanted = desired.contains(&msg);
        let span = map.pow(msg);
        let inner = map.pow(msg - 1);
        for window in 0..len / span {
            for lane in 1..=inner {
                let start = window * span + lane;
                let anchor = i64::from(pattern[start - 1]);
                for step in 1..base {
                    let got = i64::from(pattern[start + step * inner - 1]);
                    let fault = if wanted {
                        (got != wrap1(anchor + step as i64, base as i64))
                            .then_some(AlignmentFault::Shift { msg, window, lane, step })
                    } else {
                        (got != anchor)
                            .then_some(AlignmentFault::Interference { msg, window, lane, step })
                    };
                    if let Some(f) = fault {
                        if !sink(f) {
                            return;
                        }
                    }
                }
            }
        }
    }
}

/// Checks every alignment constraint of a first-phase pattern and reports all failures,
/// ordered by message, then window, then lane.
pub fn verify_alignment(pattern: &[u32], desired: &[usize], params: &SchemeParams) -> AlignmentReport {
    let mut violations = Vec::new();
    if params.modes >= 2 {
        scan_alignment(pattern, desired, params, |f| {
            violations.push(f);
            true
        });
    }
    AlignmentReport { violations }
}

/// Same verdict as [`verify_alignment`], stopping at the first failure.
pub fn alignment_holds(pattern: &[u32], desired: &[usize], params: &SchemeParams) -> bool {
    let mut ok = true;
    if params.modes >= 2 {
        scan_alignment(pattern, desired, params, |_| {
            ok = false;
            false
        });
    }
    ok
}

/// A receiver's full mode sequence over one scheme run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SwitchingPattern {
    pub receiver: usize,
    pub desired: Vec<usize>,
    /// Mode (1-based) for every slot of the run.
    pub modes: Vec<u32>,
    pub first_phase: Vec<u32>,
    /// For each unwanted message (index `msg - 1`), the single mode in which
    /// each of its blocks is observed; `None` for wanted messages.
    pub interference_modes: Vec<Option<Vec<u32>>>,
}

/// Full pattern of receiver `rx`: the first phase repeated once per round, then
/// mode `M` while its own messages are resolved and the aligned mode of each
/// unwanted block otherwise.
pub fn switching_pattern_full(rx: usize, table: &GroupTable, params: &SchemeParams) -> Result<SwitchingPattern> {
    check_multi_mode(params)?;
    let desired = desired_indices(rx, table)?;
    let first_phase = switching_pattern_first_phase(&desired, params)?;
    let map = BlockMap::new(params);

    let mut interference_modes = vec![None; params.groups];
    for msg in (1..=params.groups).filter(|n| !desired.contains(n)) {
        let inner = map.pow(msg - 1);
        let modes = (1..=params.blocks)
            .map(|block| {
                let start = map.first_slot(msg, block);
                let mode = first_phase[start - 1];
                let agree = (1..params.modes - 1).all(|i| first_phase[start + i * inner - 1] == mode);
                if agree {
                    Ok(mode)
                } else {
                    Err(BiaError::AlignmentViolation {
                        detail: format!(
                            "receiver {rx}: block {block} of unwanted message {msg} seen in several modes"
                        ),
                        ranks: Vec::new(),
                        union_rank: 0,
                    })
                }
            })
            .collect::<Result<Vec<u32>>>()?;
        interference_modes[msg - 1] = Some(modes);
    }

    let mut modes = Vec::with_capacity(params.slots);
    for _ in 0..params.rounds {
        modes.extend_from_slice(&first_phase);
    }
    for msg in 1..=params.groups {
        match &interference_modes[msg - 1] {
            Some(seen) => modes.extend_from_slice(seen),
            None => modes.extend(std::iter::repeat_n(params.modes as u32, params.blocks)),
        }
    }
    debug_assert_eq!(modes.len(), params.slots);
    Ok(SwitchingPattern { receiver: rx, desired, modes, first_phase, interference_modes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combinatorics::ordered_subsets;

    fn params(k: usize, g: usize, m: usize) -> SchemeParams {
        SchemeParams::new(k, g, m).unwrap()
    }

    #[test]
    fn block_index_sequences() {
        let p = params(3, 2, 3);
        let seq = |msg| (1..=8).map(|t| block_index(msg, t, &p).unwrap()).collect::<Vec<_>>();
        assert_eq!(seq(1), vec![1, 1, 2, 2, 3, 3, 4, 4]);
        assert_eq!(seq(2), vec![1, 2, 1, 2, 3, 4, 3, 4]);
        assert_eq!(seq(3), vec![1, 2, 3, 4, 1, 2, 3, 4]);
        assert!(block_index(1, 9, &p).is_err());
        assert!(block_index(4, 1, &p).is_err());
        assert!(block_index(1, 1, &params(3, 2, 1)).is_err());
    }

    #[test]
    fn first_slot_inverts_block_index() {
        let p = params(4, 2, 3);
        let map = BlockMap::new(&p);
        for msg in 1..=p.groups {
            for block in 1..=p.blocks {
                let t = map.first_slot(msg, block);
                assert_eq!(map.block(msg, t), block);
                assert!((1..t).all(|s| map.block(msg, s) != block));
            }
        }
    }

    #[test]
    fn selection_matrix_shape() {
        let p = params(3, 2, 3);
        let pi = selection_matrix(2, &p).unwrap();
        assert_eq!(pi.shape(), (8, 4));
        for r in 0..8 {
            assert_eq!(pi.row(r).iter().filter(|z| z.re == 1.0).count(), 1);
        }
        for c in 0..4 {
            assert_eq!(pi.column(c).iter().map(|z| z.re).sum::<f64>(), 2.0);
        }
        let p2 = params(4, 2, 2);
        assert_eq!(selection_matrix(1, &p2).unwrap(), ComplexMatrix::identity(1, 1));
    }

    #[test]
    fn first_phase_reference_patterns() {
        let p = params(3, 2, 3);
        let t = ordered_subsets(3, 2).unwrap();
        let want = [[1, 2, 2, 1, 1, 2, 2, 1], [1, 2, 1, 2, 2, 1, 2, 1], [1, 1, 2, 2, 2, 2, 1, 1]];
        for rx in 1..=3 {
            let d = t.desired_indices(rx).unwrap();
            assert_eq!(switching_pattern_first_phase(&d, &p).unwrap(), want[rx - 1].to_vec());
        }
        let p2 = params(4, 3, 2);
        assert_eq!(switching_pattern_first_phase(&[1, 2, 3], &p2).unwrap(), vec![1]);
        assert_eq!(switching_pattern_first_phase(&[2, 3, 4], &p2).unwrap(), vec![1]);
    }

    #[test]
    fn single_group_baseline_pattern_passes() {
        let p = params(3, 1, 3);
        let baseline = [1, 2, 1, 2, 1, 2, 1, 2];
        assert!(verify_alignment(&baseline, &[1], &p).passed());
        assert_eq!(switching_pattern_first_phase(&[1], &p).unwrap(), baseline.to_vec());
    }

    #[test]
    fn flipped_entry_is_reported() {
        let p = params(3, 2, 3);
        let mut pat = vec![1, 2, 2, 1, 1, 2, 2, 1];
        pat[4] = 2;
        let report = verify_alignment(&pat, &[1, 2], &p);
        assert!(!report.passed());
        assert!(report.violations.iter().any(|f| f.location() == Some((3, 0, 1))));
        assert!(!alignment_holds(&pat, &[1, 2], &p));
    }

    #[test]
    fn length_and_range_faults() {
        let p = params(3, 2, 3);
        let r = verify_alignment(&[1, 2], &[1, 2], &p);
        assert_eq!(r.first(), Some(&AlignmentFault::Length { expected: 8, found: 2 }));
        let r = verify_alignment(&[1, 3, 2, 1, 1, 2, 2, 1], &[1, 2], &p);
        assert!(r.violations.contains(&AlignmentFault::OutOfRange { slot: 2, mode: 3 }));
    }

    #[test]
    fn full_patterns_of_reference_cases() {
        let p = params(4, 3, 2);
        let t = ordered_subsets(4, 3).unwrap();
        assert_eq!(switching_pattern_full(1, &t, &p).unwrap().modes, vec![1, 1, 1, 2, 2, 2, 1]);
        assert_eq!(switching_pattern_full(4, &t, &p).unwrap().modes, vec![1, 1, 1, 1, 2, 2, 2]);

        let p = params(3, 2, 3);
        let t = ordered_subsets(3, 2).unwrap();
        let rx1 = switching_pattern_full(1, &t, &p).unwrap();
        assert_eq!(rx1.modes.len(), 28);
        assert_eq!(&rx1.modes[16..], &[3, 3, 3, 3, 3, 3, 3, 3, 1, 2, 2, 1]);
        assert_eq!(&rx1.modes[..8], &rx1.modes[8..16]);
        assert_eq!(rx1.interference_modes[2], Some(vec![1, 2, 2, 1]));
    }
}
