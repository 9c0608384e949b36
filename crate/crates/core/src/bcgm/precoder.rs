//! Transmit precoders. Dense matrices are available for inspection on small
//! schemes; encoding itself works slot by slot from the coefficient grid.

use num_complex::Complex64;

use super::pattern::{dense_guard, selection_matrix, BlockMap};
use super::SchemeParams;
use crate::error::{BiaError, Result};
use crate::linalg::{c64, kron, vconcat, ComplexMatrix, MdsMatrix};

fn check_lambda(lambda: &MdsMatrix, params: &SchemeParams) -> Result<()> {
    if lambda.rows() != params.rounds || lambda.cols() != params.groups {
        return Err(BiaError::param(format!(
            "coefficient matrix is {}x{}, scheme needs {}x{}",
            lambda.rows(),
            lambda.cols(),
            params.rounds,
            params.groups
        )));
    }
    if !lambda.first_row_is_ones() {
        return Err(BiaError::param("coefficient matrix must have an all-ones first row"));
    }
    Ok(())
}

/// First-phase precoder of one message: the block selector expanded over the antennas.
pub fn alignment_precoder(msg: usize, params: &SchemeParams) -> Result<ComplexMatrix> {
    dense_guard(params.phase_len() * params.modes, params.streams)?;
    let pi = selection_matrix(msg, params)?;
    Ok(kron(&pi, &ComplexMatrix::identity(params.modes, params.modes)))
}

/// Resolution-phase precoder: message `msg` occupies its own run of `blocks` slots.
pub fn resolution_precoder(msg: usize, params: &SchemeParams) -> Result<ComplexMatrix> {
    if msg == 0 || msg > params.groups {
        return Err(BiaError::param(format!("message {msg} outside 1..={}", params.groups)));
    }
    let rows = params.groups * params.streams;
    dense_guard(rows, params.streams)?;
    let mut out = ComplexMatrix::zeros(rows, params.streams);
    let offset = (msg - 1) * params.streams;
    for i in 0..params.streams {
        out[(offset + i, i)] = c64(1.0);
    }
    Ok(out)
}

/// Stacked precoder over the whole run: the first-phase precoder once per
/// round, scaled by the round's coefficient, then the resolution precoder.
pub fn full_precoder(msg: usize, lambda: &MdsMatrix, params: &SchemeParams) -> Result<ComplexMatrix> {
    check_lambda(lambda, params)?;
    dense_guard(params.slots * params.modes, params.streams)?;
    let top = alignment_precoder(msg, params)?;
    let mut parts: Vec<ComplexMatrix> = (1..=params.rounds).map(|v| &top * lambda.coeff(v, msg)).collect();
    parts.push(resolution_precoder(msg, params)?);
    Ok(vconcat(&parts))
}

/// Coefficient grid of every message over the run.
#[derive(Debug, Clone)]
pub struct PrecoderSet {
    pub params: SchemeParams,
    pub lambda: MdsMatrix,
    map: BlockMap,
}

impl PrecoderSet {
    pub fn new(params: SchemeParams, lambda: MdsMatrix) -> Result<Self> {
        if params.modes < 2 {
            return Err(BiaError::param("precoders need at least 2 modes"));
        }
        check_lambda(&lambda, &params)?;
        Ok(PrecoderSet { map: BlockMap::new(&params), params, lambda })
    }

    /// The block of `msg` sent at `slot` (both 1-based) and its scale, if any.
    #[inline]
    pub fn coefficient(&self, msg: usize, slot: usize) -> Option<(usize, Complex64)> {
        let p = &self.params;
        let phase = p.phase_len();
        if slot <= p.rounds * phase {
            let round = (slot - 1) / phase + 1;
            let local = (slot - 1) % phase + 1;
            Some((self.map.block(msg, local), self.lambda.coeff(round, msg)))
        } else {
            let r = slot - p.rounds * phase - 1;
            (r / p.blocks + 1 == msg).then(|| (r % p.blocks + 1, c64(1.0)))
        }
    }

    /// Scalar multiplying block `block` of `msg` at `slot`.
    pub fn alpha(&self, msg: usize, slot: usize, block: usize) -> Complex64 {
        match self.coefficient(msg, slot) {
            Some((b, a)) if b == block => a,
            _ => c64(0.0),
        }
    }

    /// First-phase slot within a repetition and round of an absolute slot, if in the first phase.
    pub fn first_phase_position(&self, slot: usize) -> Option<(usize, usize)> {
        let phase = self.params.phase_len();
        (slot <= self.params.rounds * phase).then(|| ((slot - 1) / phase + 1, (slot - 1) % phase + 1))
    }

    pub(crate) fn block_map(&self) -> &BlockMap {
        &self.map
    }

    pub fn dense(&self, msg: usize) -> Result<ComplexMatrix> {
        full_precoder(msg, &self.lambda, &self.params)
    }

    /// Antenna streams of one message alone: `slots x modes`, row-major.
    pub fn encode_one(&self, msg: usize, symbols: &[Complex64]) -> Result<Vec<Complex64>> {
        let p = &self.params;
        if symbols.len() != p.streams {
            return Err(BiaError::Encoding(format!(
                "message {msg} has {} symbols, expected {}",
                symbols.len(),
                p.streams
            )));
        }
        let mut out = vec![c64(0.0); p.slots * p.modes];
        for slot in 1..=p.slots {
            if let Some((block, a)) = self.coefficient(msg, slot) {
                let src = &symbols[(block - 1) * p.modes..block * p.modes];
                for (o, s) in out[(slot - 1) * p.modes..slot * p.modes].iter_mut().zip(src) {
                    *o += a * s;
                }
            }
        }
        Ok(out)
    }

    /// Superposition of all messages (`messages[msg - 1]`), `slots x modes`, row-major.
    pub fn encode(&self, messages: &[Vec<Complex64>]) -> Result<Vec<Complex64>> {
        let p = &self.params;
        if messages.len() != p.groups {
            return Err(BiaError::Encoding(format!(
                "{} messages supplied, scheme carries {}",
                messages.len(),
                p.groups
            )));
        }
        if let Some((i, m)) = messages.iter().enumerate().find(|(_, m)| m.len() != p.streams) {
            return Err(BiaError::Encoding(format!(
                "message {} has {} symbols, expected {}",
                i + 1,
                m.len(),
                p.streams
            )));
        }
        let mut out = vec![c64(0.0); p.slots * p.modes];
        for slot in 1..=p.slots {
            let row = &mut out[(slot - 1) * p.modes..slot * p.modes];
            for (msg, symbols) in messages.iter().enumerate() {
                if let Some((block, a)) = self.coefficient(msg + 1, slot) {
                    for (o, s) in row.iter_mut().zip(&symbols[(block - 1) * p.modes..block * p.modes]) {
                        *o += a * s;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Largest per-antenna energy of any slot for unit-power symbols.
    pub fn peak_slot_energy(&self) -> f64 {
        let p = &self.params;
        let first: f64 = (1..=p.rounds)
            .map(|v| (1..=p.groups).map(|n| self.lambda.coeff(v, n).norm_sqr()).sum::<f64>())
            .fold(0.0, f64::max);
        first.max(1.0)
    }

    /// Per-antenna energy averaged over the run for unit-power symbols.
    pub fn mean_antenna_energy(&self) -> f64 {
        let p = &self.params;
        let first: f64 = (1..=p.rounds)
            .flat_map(|v| (1..=p.groups).map(move |n| (v, n)))
            .map(|(v, n)| self.lambda.coeff(v, n).norm_sqr())
            .sum();
        (first * p.phase_len() as f64 + (p.groups * p.blocks) as f64) / p.slots as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs, vandermonde_mds};

    fn set(k: usize, g: usize, m: usize) -> PrecoderSet {
        let p = SchemeParams::new(k, g, m).unwrap();
        PrecoderSet::new(p, vandermonde_mds(p.rounds, p.groups).unwrap()).unwrap()
    }

    #[test]
    fn four_three_two_layout() {
        let s = set(4, 3, 2);
        let v = s.dense(1).unwrap();
        assert_eq!(v.shape(), (14, 2));
        // slots 1..3 carry lambda_v times (A1, A2); slot 4 carries them alone
        for slot in 1..=3 {
            let scale = s.lambda.coeff(slot, 1);
            assert_eq!(v[(2 * (slot - 1), 0)], scale);
            assert_eq!(v[(2 * (slot - 1) + 1, 1)], scale);
            assert_eq!(v[(2 * (slot - 1), 1)], c64(0.0));
        }
        assert_eq!(v[(6, 0)], c64(1.0));
        assert_eq!(v[(7, 1)], c64(1.0));
        assert!(v.rows(8, 6).iter().all(|z| *z == c64(0.0)));
        // message D (n=4) is resolved in the last slot
        let d = s.dense(4).unwrap();
        assert_eq!(d[(12, 0)], c64(1.0));
        assert_eq!(d[(2, 0)], c64(4.0));
        assert_eq!(d[(4, 0)], c64(16.0));
    }

    #[test]
    fn second_round_scale_is_one_for_first_message() {
        let s = set(3, 2, 3);
        let v = s.dense(1).unwrap();
        let t = alignment_precoder(1, &s.params).unwrap();
        assert_eq!(v.rows(0, 24).into_owned(), t);
        assert_eq!(v.rows(24, 24).into_owned(), t);
        let u = resolution_precoder(1, &s.params).unwrap();
        assert_eq!(v.rows(48, 36).into_owned(), u);
        assert_eq!(u.adjoint() * &u, ComplexMatrix::identity(12, 12));
        let vb = s.dense(2).unwrap();
        assert_eq!(vb.rows(24, 24).into_owned(), alignment_precoder(2, &s.params).unwrap() * c64(2.0));
    }

    #[test]
    fn rejects_bad_lambda() {
        let p = SchemeParams::new(3, 2, 3).unwrap();
        assert!(full_precoder(1, &vandermonde_mds(2, 4).unwrap(), &p).is_err());
        let mut bad = vandermonde_mds(2, 3).unwrap();
        bad.base[(0, 1)] = c64(2.0);
        assert!(full_precoder(1, &bad, &p).is_err());
        assert!(PrecoderSet::new(p, bad).is_err());
    }

    #[test]
    fn slot_encoding_matches_dense_precoders() {
        for (k, g, m) in [(4, 3, 2), (3, 2, 3), (3, 1, 3), (4, 2, 3)] {
            let s = set(k, g, m);
            let p = s.params;
            let msgs: Vec<Vec<Complex64>> = (0..p.groups)
                .map(|n| (0..p.streams).map(|i| Complex64::new(i as f64 + 1.0, n as f64 - 0.5)).collect())
                .collect();
            let x = s.encode(&msgs).unwrap();
            let mut dense = ComplexMatrix::zeros(p.slots * p.modes, 1);
            for (n, w) in msgs.iter().enumerate() {
                dense += s.dense(n + 1).unwrap() * ComplexMatrix::from_column_slice(p.streams, 1, w);
            }
            let flat = ComplexMatrix::from_column_slice(p.slots * p.modes, 1, &x);
            assert!(max_abs(&(flat - dense)) < 1e-12, "({k},{g},{m})");
            for n in 1..=p.groups {
                for slot in 1..=p.slots {
                    let nonzero = (1..=p.blocks).filter(|&b| s.alpha(n, slot, b) != c64(0.0)).count();
                    assert!(nonzero <= 1);
                }
            }
        }
    }
}
