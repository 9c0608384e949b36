//! Per-receiver effective mode matrices and zero-forcing decoders.
//!
//! `E_{k,n}` maps the symbols of message `n`, already rotated by the receiver's
//! own mode channels, to its received samples: row `t` holds the precoder
//! coefficient of the block sent at `t` in the column of the mode the receiver
//! uses at `t`. A decoder `D` satisfies `D^T E_n = I` for the target message
//! and `D^T E_other = 0` for every other message.
//!
//! Two independent constructions are provided. [`decoder_matrices`] solves
//! the least-squares system on the dense family. [`staged_decoder`] builds a
//! sparse `D` directly from the slot structure: cancel every unwanted block
//! with its resolution slot, then invert the round coefficients restricted to
//! the wanted messages. Its columns have at most `groups` nonzeros, so it
//! scales to schemes whose dense matrices would not fit in memory.

use num_complex::Complex64;
use serde::Serialize;

use super::pattern::SwitchingPattern;
use super::precoder::PrecoderSet;
use crate::error::{BiaError, Result};
use crate::linalg::{c64, solve_decoders_with_tol, ComplexMatrix, SparseMatrix, DEFAULT_TOL};

/// Dense decoders are refused when the stacked family has more entries than this.
pub const MAX_DENSE_FAMILY: usize = 400_000;

fn check_pattern(pattern: &SwitchingPattern, precoders: &PrecoderSet) -> Result<()> {
    let p = &precoders.params;
    if pattern.modes.len() != p.slots {
        return Err(BiaError::param(format!(
            "pattern has {} slots, scheme has {}",
            pattern.modes.len(),
            p.slots
        )));
    }
    if let Some(m) = pattern.modes.iter().find(|&&m| m == 0 || m as usize > p.modes) {
        return Err(BiaError::param(format!("pattern mode {m} outside 1..={}", p.modes)));
    }
    Ok(())
}

/// Sparse `E_{k,msg}` (`slots x streams`) for the receiver following `pattern`.
pub fn effective_mode_matrix_sparse(
    pattern: &SwitchingPattern,
    msg: usize,
    precoders: &PrecoderSet,
) -> Result<SparseMatrix> {
    check_pattern(pattern, precoders)?;
    let p = &precoders.params;
    let mut e = SparseMatrix::with_capacity(p.streams, p.slots, p.slots);
    for slot in 1..=p.slots {
        let mode = pattern.modes[slot - 1] as usize;
        e.push_row(
            precoders
                .coefficient(msg, slot)
                .map(|(block, a)| ((block - 1) * p.modes + mode - 1, a)),
        );
    }
    Ok(e)
}

/// Dense `E_{k,msg}`; refused for large schemes.
pub fn effective_mode_matrix(
    pattern: &SwitchingPattern,
    msg: usize,
    precoders: &PrecoderSet,
) -> Result<ComplexMatrix> {
    let p = &precoders.params;
    super::pattern::dense_guard(p.slots, p.streams)?;
    Ok(effective_mode_matrix_sparse(pattern, msg, precoders)?.to_dense())
}

/// All messages side by side: `slots x (groups * streams)`.
fn effective_union_sparse(pattern: &SwitchingPattern, precoders: &PrecoderSet) -> Result<SparseMatrix> {
    check_pattern(pattern, precoders)?;
    let p = &precoders.params;
    let mut e = SparseMatrix::with_capacity(p.groups * p.streams, p.slots, p.slots * p.groups);
    for slot in 1..=p.slots {
        let mode = pattern.modes[slot - 1] as usize;
        e.push_row((1..=p.groups).filter_map(|msg| {
            precoders
                .coefficient(msg, slot)
                .map(|(block, a)| ((msg - 1) * p.streams + (block - 1) * p.modes + mode - 1, a))
        }));
    }
    Ok(e)
}

/// Ranks of every `E_{k,n}` and of their union at one receiver.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RankProfile {
    pub receiver: usize,
    /// `per_message[n - 1]` is the rank of `E_{k,n}`.
    pub per_message: Vec<usize>,
    pub union: usize,
}

impl RankProfile {
    /// Wanted messages at full rank, unwanted at one dimension per block, union filling every slot.
    pub fn separable(&self, desired: &[usize], precoders: &PrecoderSet) -> bool {
        let p = &precoders.params;
        let sum: usize = self.per_message.iter().sum();
        self.per_message.iter().enumerate().all(|(i, &r)| {
            r == if desired.contains(&(i + 1)) { p.streams } else { p.blocks }
        }) && self.union == p.slots
            && sum == p.slots
    }
}

pub fn rank_profile(pattern: &SwitchingPattern, precoders: &PrecoderSet, tol: f64) -> Result<RankProfile> {
    let per_message = (1..=precoders.params.groups)
        .map(|msg| effective_mode_matrix_sparse(pattern, msg, precoders)?.rank(tol))
        .collect::<Result<Vec<_>>>()?;
    let union = effective_union_sparse(pattern, precoders)?.rank(tol)?;
    Ok(RankProfile { receiver: pattern.receiver, per_message, union })
}

/// Dense decoders for every wanted message of the receiver, by least squares.
pub fn decoder_matrices(
    pattern: &SwitchingPattern,
    precoders: &PrecoderSet,
) -> Result<Vec<(usize, ComplexMatrix)>> {
    let p = &precoders.params;
    let entries = p.slots as u128 * (p.groups * p.streams) as u128;
    if entries > MAX_DENSE_FAMILY as u128 {
        return Err(BiaError::Size { slots: entries, limit: MAX_DENSE_FAMILY as u128 });
    }
    let family = (1..=p.groups)
        .map(|msg| effective_mode_matrix(pattern, msg, precoders))
        .collect::<Result<Vec<_>>>()?;
    let idx: Vec<usize> = pattern.desired.iter().map(|&msg| msg - 1).collect();
    let ds = solve_decoders_with_tol(&family, &idx, DEFAULT_TOL)?;
    Ok(pattern.desired.iter().copied().zip(ds).collect())
}

/// Sparse decoder for one wanted message, stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderColumns {
    pub msg: usize,
    pub slots: usize,
    col_ptr: Vec<usize>,
    rows: Vec<usize>,
    coeffs: Vec<Complex64>,
}

impl DecoderColumns {
    pub fn ncols(&self) -> usize {
        self.col_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.rows.len()
    }

    /// Rows (0-based slots) and coefficients of column `c` (0-based).
    pub fn column(&self, c: usize) -> (&[usize], &[Complex64]) {
        let (a, b) = (self.col_ptr[c], self.col_ptr[c + 1]);
        (&self.rows[a..b], &self.coeffs[a..b])
    }

    /// `D^T y`.
    pub fn apply(&self, y: &[Complex64]) -> Vec<Complex64> {
        (0..self.ncols())
            .map(|c| {
                let (r, v) = self.column(c);
                r.iter().zip(v).map(|(&t, &d)| d * y[t]).sum()
            })
            .collect()
    }

    pub fn to_dense(&self) -> Result<ComplexMatrix> {
        super::pattern::dense_guard(self.slots, self.ncols())?;
        let mut d = ComplexMatrix::zeros(self.slots, self.ncols());
        for c in 0..self.ncols() {
            let (r, v) = self.column(c);
            for (&t, &x) in r.iter().zip(v) {
                d[(t, c)] += x;
            }
        }
        Ok(d)
    }

    /// Covariance `D^T conj(D)` of the projected unit-variance noise.
    pub fn noise_covariance(&self) -> Result<ComplexMatrix> {
        let n = self.ncols();
        super::pattern::dense_guard(n, n)?;
        let mut by_row: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); self.slots];
        for c in 0..n {
            let (r, v) = self.column(c);
            for (&t, &x) in r.iter().zip(v) {
                by_row[t].push((c, x));
            }
        }
        let mut q = ComplexMatrix::zeros(n, n);
        for entries in &by_row {
            for &(a, x) in entries {
                for &(b, y) in entries {
                    q[(a, b)] += x * y.conj();
                }
            }
        }
        Ok(q)
    }

    /// Max-abs deviation of `D^T E_n` from the identity (own message) or zero (others).
    pub fn residual(&self, pattern: &SwitchingPattern, precoders: &PrecoderSet) -> f64 {
        let p = &precoders.params;
        let mut acc: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); p.groups];
        let mut worst = 0.0f64;
        for c in 0..self.ncols() {
            for list in acc.iter_mut() {
                list.clear();
            }
            let (r, v) = self.column(c);
            for (&t, &d) in r.iter().zip(v) {
                let mode = pattern.modes[t] as usize;
                for msg in 1..=p.groups {
                    if let Some((block, a)) = precoders.coefficient(msg, t + 1) {
                        let col = (block - 1) * p.modes + mode - 1;
                        let list = &mut acc[msg - 1];
                        match list.iter_mut().find(|(j, _)| *j == col) {
                            Some((_, s)) => *s += d * a,
                            None => list.push((col, d * a)),
                        }
                    }
                }
            }
            let mut hit_identity = false;
            for (i, list) in acc.iter().enumerate() {
                for &(col, s) in list {
                    let target = if i + 1 == self.msg && col == c {
                        hit_identity = true;
                        c64(1.0)
                    } else {
                        c64(0.0)
                    };
                    worst = worst.max((s - target).norm());
                }
            }
            if !hit_identity {
                worst = worst.max(1.0);
            }
        }
        worst
    }
}

fn violation(detail: String) -> BiaError {
    BiaError::AlignmentViolation { detail, ranks: Vec::new(), union_rank: 0 }
}

/// Sparse decoder for wanted message `msg` at the receiver following `pattern`.
///
/// Each first-phase column `(block, mode)` picks the unique first-phase slot
/// where that block is seen in that mode, combines its copies across rounds
/// with the inverse round coefficients (which removes the other wanted
/// messages), and subtracts each unwanted message's block using the
/// resolution slot observed in the same mode. Mode-`M` columns read the
/// message's own resolution slots.
pub fn staged_decoder(
    pattern: &SwitchingPattern,
    precoders: &PrecoderSet,
    msg: usize,
) -> Result<DecoderColumns> {
    check_pattern(pattern, precoders)?;
    let p = &precoders.params;
    let desired = &pattern.desired;
    let Some(pos) = desired.iter().position(|&n| n == msg) else {
        return Err(BiaError::Membership { n: msg, k: pattern.receiver });
    };
    if desired.len() != p.rounds {
        return Err(BiaError::param(format!(
            "receiver wants {} messages, scheme has {} rounds",
            desired.len(),
            p.rounds
        )));
    }
    let phase = p.phase_len();
    let res_start = p.resolution_start();
    let res_slot = |n: usize, block: usize| res_start + (n - 1) * p.blocks + block - 1;
    let map = precoders.block_map();

    for tau in 1..=phase {
        let m = pattern.modes[tau - 1];
        if (2..=p.rounds).any(|v| pattern.modes[(v - 1) * phase + tau - 1] != m) {
            return Err(violation(format!("slot {tau} changes mode between rounds")));
        }
    }

    // unique first-phase slot for every (block, mode < M) of msg
    let mut slot_of = vec![0usize; p.blocks * (p.modes - 1)];
    for tau in 1..=phase {
        let mode = pattern.modes[tau - 1] as usize;
        if mode == p.modes {
            return Err(violation(format!("first-phase slot {tau} uses the resolution mode")));
        }
        let key = (map.block(msg, tau) - 1) * (p.modes - 1) + mode - 1;
        if slot_of[key] != 0 {
            return Err(violation(format!(
                "message {msg} block {} seen twice in mode {mode}",
                map.block(msg, tau)
            )));
        }
        slot_of[key] = tau;
    }

    let lambda_sub = precoders.lambda.columns(desired);
    let inv = lambda_sub
        .try_inverse()
        .ok_or_else(|| violation("round coefficients of the wanted messages are singular".into()))?;
    let weights: Vec<Complex64> = (0..p.rounds).map(|v| inv[(pos, v)]).collect();
    let unwanted: Vec<(usize, Complex64)> = (1..=p.groups)
        .filter(|n| !desired.contains(n))
        .map(|n| {
            let leak: Complex64 = (1..=p.rounds).map(|v| weights[v - 1] * precoders.lambda.coeff(v, n)).sum();
            (n, leak)
        })
        .collect();

    let mut col_ptr = Vec::with_capacity(p.streams + 1);
    let mut rows = Vec::with_capacity(p.streams * p.groups);
    let mut coeffs = Vec::with_capacity(p.streams * p.groups);
    col_ptr.push(0);
    for block in 1..=p.blocks {
        for mode in 1..=p.modes {
            if mode == p.modes {
                let t = res_slot(msg, block);
                if pattern.modes[t - 1] as usize != p.modes {
                    return Err(violation(format!(
                        "block {block} of message {msg} not resolved in mode {}",
                        p.modes
                    )));
                }
                rows.push(t - 1);
                coeffs.push(c64(1.0));
            } else {
                let tau = slot_of[(block - 1) * (p.modes - 1) + mode - 1];
                if tau == 0 {
                    return Err(violation(format!(
                        "message {msg} block {block} never seen in mode {mode}"
                    )));
                }
                for (v, &w) in weights.iter().enumerate() {
                    rows.push(v * phase + tau - 1);
                    coeffs.push(w);
                }
                for &(n, leak) in &unwanted {
                    let t = res_slot(n, map.block(n, tau));
                    if pattern.modes[t - 1] as usize != mode {
                        return Err(violation(format!(
                            "interference of message {n} at slot {tau} is not resolved in mode {mode}"
                        )));
                    }
                    rows.push(t - 1);
                    coeffs.push(-leak);
                }
            }
            col_ptr.push(rows.len());
        }
    }
    Ok(DecoderColumns { msg, slots: p.slots, col_ptr, rows, coeffs })
}

/// Solves `(I (x) h) w = z` block by block for a square per-block channel `h`.
pub fn undo_block_channel(z: &[Complex64], h: &ComplexMatrix) -> Result<Vec<Complex64>> {
    let m = h.nrows();
    if h.ncols() != m || m == 0 || !z.len().is_multiple_of(m) {
        return Err(BiaError::Decoding(format!(
            "cannot split {} samples over a {}x{} block channel",
            z.len(),
            h.nrows(),
            h.ncols()
        )));
    }
    let lu = h.clone().lu();
    let mut out = Vec::with_capacity(z.len());
    for chunk in z.chunks(m) {
        let rhs = ComplexMatrix::from_column_slice(m, 1, chunk);
        let w = lu
            .solve(&rhs)
            .ok_or_else(|| BiaError::Decoding("block channel is singular".into()))?;
        out.extend(w.iter().copied());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bcgm::{BcgmScheme, SchemeParams};
    use crate::linalg::{decoder_residual, max_abs, numeric_rank};

    fn scheme(k: usize, g: usize, m: usize) -> BcgmScheme {
        BcgmScheme::new(SchemeParams::new(k, g, m).unwrap()).unwrap()
    }

    #[test]
    fn four_three_two_ranks() {
        let s = scheme(4, 3, 2);
        let pat = s.pattern(1);
        let desired = effective_mode_matrix(pat, 1, &s.precoders).unwrap();
        assert_eq!(numeric_rank(&desired, DEFAULT_TOL), 2);
        let other = effective_mode_matrix(pat, 4, &s.precoders).unwrap();
        assert_eq!(numeric_rank(&other, DEFAULT_TOL), 1);
        let family: Vec<_> = (1..=4).map(|n| effective_mode_matrix(pat, n, &s.precoders).unwrap()).collect();
        assert_eq!(numeric_rank(&crate::linalg::hconcat(&family), DEFAULT_TOL), 7);
        let prof = rank_profile(pat, &s.precoders, DEFAULT_TOL).unwrap();
        assert_eq!(prof.per_message, vec![2, 2, 2, 1]);
        assert_eq!(prof.union, 7);
        assert!(prof.separable(pat.desired.as_slice(), &s.precoders));
    }

    #[test]
    fn zero_coefficient_rows_stay_empty() {
        let s = scheme(4, 3, 2);
        // message 1 is silent in the resolution slots of messages 2..4
        let e = effective_mode_matrix(s.pattern(1), 1, &s.precoders).unwrap();
        for r in 4..7 {
            assert!(e.row(r).iter().all(|z| *z == c64(0.0)));
        }
    }

    #[test]
    fn dense_and_staged_decoders_agree() {
        for (k, g, m) in [(4, 3, 2), (3, 1, 3), (3, 2, 3), (3, 2, 4), (4, 3, 3), (5, 3, 2)] {
            let s = scheme(k, g, m);
            for rx in 1..=k {
                let pat = s.pattern(rx);
                let family: Vec<_> = (1..=s.params.groups)
                    .map(|n| effective_mode_matrix(pat, n, &s.precoders).unwrap())
                    .collect();
                for (msg, d) in decoder_matrices(pat, &s.precoders).unwrap() {
                    assert!(decoder_residual(&d, &family, msg - 1) < 1e-8, "({k},{g},{m}) rx {rx}");
                    let staged = staged_decoder(pat, &s.precoders, msg).unwrap();
                    assert!(staged.residual(pat, &s.precoders) < 1e-8);
                    let gap = max_abs(&(staged.to_dense().unwrap() - &d));
                    assert!(gap < 1e-7, "({k},{g},{m}) rx {rx} msg {msg}: {gap}");
                }
            }
        }
    }

    #[test]
    fn borrowed_pattern_breaks_decoding() {
        let s = scheme(3, 2, 3);
        let mut borrowed = s.pattern(3).clone();
        borrowed.receiver = 1;
        borrowed.desired = s.desired(1).to_vec();
        let err = decoder_matrices(&borrowed, &s.precoders).unwrap_err();
        assert!(matches!(err, BiaError::AlignmentViolation { .. }));
        assert!(staged_decoder(&borrowed, &s.precoders, 1).is_err());
    }

    #[test]
    fn covariance_matches_dense_product() {
        let s = scheme(3, 2, 3);
        let pat = s.pattern(2);
        let staged = staged_decoder(pat, &s.precoders, 3).unwrap();
        let d = staged.to_dense().unwrap();
        let q = d.transpose() * d.map(|z| z.conj());
        assert!(max_abs(&(staged.noise_covariance().unwrap() - q)) < 1e-12);
        assert_eq!(staged.nnz(), staged.ncols() / 3 * (2 * s.params.groups) + staged.ncols() / 3);
    }
}
