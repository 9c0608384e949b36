//! Broadcast with groupcast messages: one `modes`-antenna transmitter, every
//! message wanted by a group of `group_size` receivers, receivers with
//! reconfigurable antennas and no side information.
//!
//! Slot layout of one scheme run (`slots` channel uses):
//! `rounds` repetitions of a first phase of `(modes - 1) * blocks` slots, in
//! which every message sends one block per slot scaled by its coefficient
//! for that round, followed by `groups * blocks` resolution slots sending
//! each block of each message alone.

mod decoder;
mod pattern;
mod precoder;

pub use decoder::{
    decoder_matrices, effective_mode_matrix, effective_mode_matrix_sparse, rank_profile,
    staged_decoder, undo_block_channel, DecoderColumns, RankProfile,
};
pub use pattern::{
    block_index, selection_matrix, switching_pattern_first_phase, switching_pattern_full,
    alignment_holds, verify_alignment, AlignmentFault, AlignmentReport, SwitchingPattern,
};
pub(crate) use pattern::dense_guard;
pub use precoder::{alignment_precoder, full_precoder, resolution_precoder, PrecoderSet};

use serde::Serialize;

use crate::combinatorics::{binomial, ordered_subsets, GroupTable};
use crate::error::{BiaError, Result};
use crate::linalg::{vandermonde_mds, MdsMatrix};
use crate::Rational;

/// Largest scheme length the constructors accept.
pub const MAX_SLOTS: u128 = 1_000_000;

/// Derived sizes of a `(users, group_size, modes)` scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SchemeParams {
    pub users: usize,
    pub group_size: usize,
    pub modes: usize,
    /// Number of groups (= messages), `C(users, group_size)`.
    pub groups: usize,
    /// Messages each receiver wants, `C(users - 1, group_size - 1)`; also the
    /// number of first-phase repetitions.
    pub rounds: usize,
    /// Blocks of `modes` symbols per message, `(modes - 1)^(groups - 1)`.
    pub blocks: usize,
    /// Symbols per message, `modes * blocks`.
    pub streams: usize,
    /// Channel uses per run.
    pub slots: usize,
}

impl SchemeParams {
    pub fn new(users: usize, group_size: usize, modes: usize) -> Result<Self> {
        if users == 0 || group_size == 0 || group_size > users {
            return Err(BiaError::param(format!(
                "need 1 <= G <= K, got K={users}, G={group_size}"
            )));
        }
        if modes == 0 {
            return Err(BiaError::param("mode count must be at least 1"));
        }
        let too_big = |slots: u128| BiaError::Size { slots, limit: MAX_SLOTS };
        let groups = binomial(users as u64, group_size as u64)
            .ok_or_else(|| too_big(u128::MAX))? as u128;
        let rounds = binomial(users as u64 - 1, group_size as u64 - 1)
            .ok_or_else(|| too_big(u128::MAX))? as u128;
        if modes == 1 {
            // orthogonal multicast: one slot per message
            if groups > MAX_SLOTS {
                return Err(too_big(groups));
            }
            return Ok(SchemeParams {
                users,
                group_size,
                modes,
                groups: groups as usize,
                rounds: rounds as usize,
                blocks: 1,
                streams: 1,
                slots: groups as usize,
            });
        }
        let base = modes as u128 - 1;
        let exp = u32::try_from(groups - 1).map_err(|_| too_big(u128::MAX))?;
        let blocks = base.checked_pow(exp).ok_or_else(|| too_big(u128::MAX))?;
        let slots = rounds
            .checked_mul(base)
            .and_then(|x| x.checked_mul(blocks))
            .and_then(|x| x.checked_add(groups.checked_mul(blocks)?))
            .ok_or_else(|| too_big(u128::MAX))?;
        if slots > MAX_SLOTS {
            return Err(too_big(slots));
        }
        Ok(SchemeParams {
            users,
            group_size,
            modes,
            groups: groups as usize,
            rounds: rounds as usize,
            blocks: blocks as usize,
            streams: modes * blocks as usize,
            slots: slots as usize,
        })
    }

    /// Transmit and receive antenna counts differ: run the scheme on the smaller.
    pub fn asymmetric(users: usize, group_size: usize, tx_antennas: usize, rx_modes: usize) -> Result<Self> {
        SchemeParams::new(users, group_size, tx_antennas.min(rx_modes))
    }

    /// Length of one first-phase repetition, `(modes - 1) * blocks`.
    pub fn phase_len(&self) -> usize {
        (self.modes - 1) * self.blocks
    }

    /// First slot (1-based) of the resolution phase.
    pub fn resolution_start(&self) -> usize {
        self.rounds * self.phase_len() + 1
    }
}

/// Dimension accounting of one scheme run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeDimensions {
    pub blocks: usize,
    pub streams: usize,
    pub slots: usize,
    #[serde(serialize_with = "crate::serialize_rational")]
    pub dof_per_message: Rational,
    #[serde(serialize_with = "crate::serialize_rational")]
    pub dof_sum: Rational,
}

pub fn scheme_dimensions(params: &SchemeParams) -> SchemeDimensions {
    let per = Rational::new(params.streams as i128, params.slots as i128);
    SchemeDimensions {
        blocks: params.blocks,
        streams: params.streams,
        slots: params.slots,
        dof_per_message: per,
        dof_sum: per * Rational::from_integer(params.groups as i128),
    }
}

/// Everything the transmitter and receivers agree on before transmission.
#[derive(Debug, Clone)]
pub struct BcgmScheme {
    pub params: SchemeParams,
    pub table: GroupTable,
    pub precoders: PrecoderSet,
    /// Switching pattern of receiver `rx` at index `rx - 1`.
    pub patterns: Vec<SwitchingPattern>,
}

impl BcgmScheme {
    /// Builds the scheme for `modes >= 2`.
    pub fn new(params: SchemeParams) -> Result<Self> {
        if params.modes < 2 {
            return Err(BiaError::param(
                "the alignment construction needs at least 2 modes; use orthogonal access for 1",
            ));
        }
        let table = ordered_subsets(params.users, params.group_size)?;
        let lambda: MdsMatrix = vandermonde_mds(params.rounds, params.groups)?;
        let precoders = PrecoderSet::new(params, lambda)?;
        let patterns = (1..=params.users)
            .map(|rx| switching_pattern_full(rx, &table, &params))
            .collect::<Result<Vec<_>>>()?;
        Ok(BcgmScheme { params, table, precoders, patterns })
    }

    pub fn pattern(&self, rx: usize) -> &SwitchingPattern {
        &self.patterns[rx - 1]
    }

    pub fn desired(&self, rx: usize) -> &[usize] {
        &self.patterns[rx - 1].desired
    }

    /// Staged decoders of every wanted message of `rx`, in wanted order.
    pub fn decoders(&self, rx: usize) -> Result<Vec<DecoderColumns>> {
        let pattern = self.pattern(rx);
        pattern
            .desired
            .iter()
            .map(|&msg| staged_decoder(pattern, &self.precoders, msg))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensions_of_reference_cases() {
        let p = SchemeParams::new(4, 3, 2).unwrap();
        let d = scheme_dimensions(&p);
        assert_eq!((d.blocks, d.streams, d.slots), (1, 2, 7));
        assert_eq!(d.dof_per_message, Rational::new(2, 7));
        assert_eq!(d.dof_sum, Rational::new(8, 7));

        let p = SchemeParams::new(3, 1, 3).unwrap();
        assert_eq!((p.streams, p.slots), (12, 20));
        assert_eq!(scheme_dimensions(&p).dof_per_message, Rational::new(3, 5));
        assert_eq!(SchemeParams::new(3, 2, 3).unwrap().slots, 28);
    }

    #[test]
    fn single_mode_is_orthogonal_access() {
        let p = SchemeParams::new(4, 2, 1).unwrap();
        assert_eq!((p.blocks, p.streams, p.slots), (1, 1, 6));
        let d = scheme_dimensions(&p);
        assert_eq!(d.dof_per_message, Rational::new(1, 6));
        assert_eq!(d.dof_sum, Rational::from_integer(1));
    }

    #[test]
    fn guardrail_and_validation() {
        assert!(matches!(SchemeParams::new(6, 3, 3), Err(BiaError::Size { .. })));
        assert!(SchemeParams::new(5, 3, 4).is_ok());
        assert!(SchemeParams::new(3, 4, 2).is_err());
        assert!(SchemeParams::new(3, 0, 2).is_err());
        assert!(SchemeParams::new(3, 1, 0).is_err());
        assert_eq!(SchemeParams::asymmetric(4, 3, 5, 2).unwrap().modes, 2);
    }

    #[test]
    fn grid_identities() {
        for users in 1..=5 {
            for group_size in 1..=users {
                for modes in 2..=4 {
                    let p = SchemeParams::new(users, group_size, modes).unwrap();
                    assert_eq!(p.rounds * users, group_size * p.groups);
                    assert_eq!(
                        p.slots,
                        p.rounds * (modes - 1) * p.blocks + p.groups * p.blocks
                    );
                    let closed = Rational::new(
                        (p.groups * modes) as i128,
                        ((modes - 1) * p.rounds + p.groups) as i128,
                    );
                    assert_eq!(scheme_dimensions(&p).dof_sum, closed);
                }
            }
        }
    }
}
