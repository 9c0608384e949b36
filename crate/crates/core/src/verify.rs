//! Invariant suite over a grid of `(users, group_size, modes)` settings.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bcgm::{alignment_holds, rank_profile, scheme_dimensions, verify_alignment, BcgmScheme, SchemeParams};
use crate::channel::substream;
use crate::error::Result;
use crate::linalg::DEFAULT_TOL;
use crate::metrics::{dof_bcgm, dof_mapreduce, dof_usi};
use crate::sim::{bcgm_recovery, simulate_bcgm, RunConfig};
use crate::Rational;

/// Error bound for residuals and noiseless recovery.
pub const EXACT_TOL: f64 = 1e-8;

/// Patterns longer than this get sampled mutation positions instead of all of them.
const EXHAUSTIVE_MUTATION_LEN: usize = 4096;
const SAMPLED_MUTATIONS: usize = 256;
const DOMAIN_MUTATION: u64 = 6;

/// Every `(K, G, M)` with `K` in `users`, `1 <= G <= K` and `M` in `modes`
/// whose scheme fits under the slot limit.
pub fn grid(users: impl IntoIterator<Item = usize>, modes: &[usize]) -> Vec<SchemeParams> {
    let mut out = Vec::new();
    for k in users {
        for g in 1..=k {
            for &m in modes {
                if let Ok(p) = SchemeParams::new(k, g, m) {
                    out.push(p);
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AlignmentVerdict {
    pub users: usize,
    pub group_size: usize,
    pub modes: usize,
    pub receivers_passed: usize,
    pub mutations: usize,
    pub mutations_detected: usize,
    pub passed: bool,
}

/// Built patterns pass the alignment check; single-entry changes do not.
pub fn check_alignment(params: &SchemeParams, seed: u64) -> Result<AlignmentVerdict> {
    let mut v = AlignmentVerdict {
        users: params.users,
        group_size: params.group_size,
        modes: params.modes,
        receivers_passed: 0,
        mutations: 0,
        mutations_detected: 0,
        passed: true,
    };
    if params.modes < 2 {
        v.receivers_passed = params.users;
        return Ok(v);
    }
    let scheme = BcgmScheme::new(*params)?;
    let base = params.modes as u32 - 1;
    for rx in 1..=params.users {
        let pattern = scheme.pattern(rx);
        let first = &pattern.first_phase;
        if verify_alignment(first, &pattern.desired, params).passed() {
            v.receivers_passed += 1;
        }
        let positions: Vec<usize> = if first.len() <= EXHAUSTIVE_MUTATION_LEN {
            (0..first.len()).collect()
        } else {
            let mut rng = substream(seed, DOMAIN_MUTATION, rx as u64, 0);
            (0..SAMPLED_MUTATIONS).map(|_| rng.random_range(0..first.len())).collect()
        };
        let results: Vec<(usize, usize)> = positions
            .par_iter()
            .map(|&pos| {
                let mut mutated = first.clone();
                let values: Vec<u32> = if base == 1 { vec![2] } else { (1..=base).filter(|&x| x != first[pos]).collect() };
                let mut detected = 0;
                for &value in &values {
                    mutated[pos] = value;
                    if !alignment_holds(&mutated, &pattern.desired, params) {
                        detected += 1;
                    }
                }
                (values.len(), detected)
            })
            .collect();
        for (tried, detected) in results {
            v.mutations += tried;
            v.mutations_detected += detected;
        }
    }
    v.passed = v.receivers_passed == params.users && v.mutations == v.mutations_detected;
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecodingVerdict {
    pub users: usize,
    pub group_size: usize,
    pub modes: usize,
    pub slots: usize,
    pub ranks_ok: bool,
    pub max_residual: f64,
    pub seeds: usize,
    pub max_recovery_error: f64,
    pub dof_ok: bool,
    pub passed: bool,
}

/// Rank profile and decoder residual at every receiver, then noiseless
/// recovery through a fresh channel draw for each seed.
pub fn check_decoding(params: &SchemeParams, seeds: &[u64]) -> Result<DecodingVerdict> {
    let mut v = DecodingVerdict {
        users: params.users,
        group_size: params.group_size,
        modes: params.modes,
        slots: params.slots,
        ranks_ok: true,
        max_residual: 0.0,
        seeds: seeds.len(),
        max_recovery_error: 0.0,
        dof_ok: scheme_dimensions(params).dof_sum == dof_bcgm(params.users, params.group_size, params.modes)?,
        passed: false,
    };
    let errors: Vec<f64> = if params.modes < 2 {
        seeds
            .par_iter()
            .map(|&s| simulate_bcgm(params.users, params.group_size, 1, RunConfig::noiseless(s)).map(|r| r.max_relative_error))
            .collect::<Result<_>>()?
    } else {
        let scheme = BcgmScheme::new(*params)?;
        let mut decoders = Vec::with_capacity(params.users);
        for rx in 1..=params.users {
            let pattern = scheme.pattern(rx);
            let profile = rank_profile(pattern, &scheme.precoders, DEFAULT_TOL)?;
            v.ranks_ok &= profile.separable(&pattern.desired, &scheme.precoders);
            let ds = scheme.decoders(rx)?;
            for d in &ds {
                v.max_residual = v.max_residual.max(d.residual(pattern, &scheme.precoders));
            }
            decoders.push(ds);
        }
        seeds
            .par_iter()
            .map(|&s| {
                let r = bcgm_recovery(&scheme, &decoders, RunConfig::noiseless(s))?;
                Ok(r.iter().map(|x| x.max_relative_error).fold(0.0, f64::max))
            })
            .collect::<Result<_>>()?
    };
    v.max_recovery_error = errors.into_iter().fold(0.0, f64::max);
    v.passed = v.ranks_ok && v.dof_ok && v.max_residual < EXACT_TOL && v.max_recovery_error < EXACT_TOL;
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityVerdict {
    pub checked: usize,
    pub failures: Vec<String>,
    pub passed: bool,
}

/// Cross-checks the closed-form values against each other over the grid:
/// MapReduce equals unicast with groups of `r + 1`, unicast with
/// `M <= G - 1` is `G` times groupcast, and a single mode gives `r + 1`.
pub fn check_identities(max_users: usize, modes: &[usize]) -> Result<IdentityVerdict> {
    let mut checked = 0;
    let mut failures = Vec::new();
    for k in 2..=max_users {
        for &m in modes {
            for r in 1..k {
                checked += 1;
                if dof_mapreduce(k, r, m)? != dof_usi(k, r + 1, m)? {
                    failures.push(format!("mapreduce ({k},{r},{m}) differs from unicast ({k},{},{m})", r + 1));
                }
                if m == 1 && dof_mapreduce(k, r, 1)?.achievable != Rational::from_integer(r as i128 + 1) {
                    failures.push(format!("single-mode mapreduce ({k},{r}) is not {}", r + 1));
                }
            }
            for g in 2..=k {
                if m + 1 > g {
                    continue;
                }
                checked += 1;
                let usi = dof_usi(k, g, m)?.achievable;
                let bc = dof_bcgm(k, g, m)?;
                if usi != bc * Rational::from_integer(g as i128) {
                    failures.push(format!("unicast ({k},{g},{m}) = {usi} but groupcast x G = {}", bc * g as i128));
                }
            }
        }
    }
    Ok(IdentityVerdict { checked, passed: failures.is_empty(), failures })
}

/// Seeds `base, base + 1, ...`.
pub fn seed_range(base: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| base.wrapping_add(i)).collect()
}
