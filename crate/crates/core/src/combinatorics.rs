//! Ordered subset tables and the 1-based modulus used by every scheme.
//!
//! All indices handed out here are 1-based: groups are numbered `1..=N_g`,
//! receivers `1..=K`, and positions inside a group `1..=G`.

use serde::Serialize;

use crate::error::{BiaError, Result};

/// Binomial coefficient with overflow checking.
pub fn binomial(n: u64, k: u64) -> Option<u64> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * u128::from(n - i) / u128::from(i + 1);
        if acc > u128::from(u64::MAX) {
            return None;
        }
    }
    Some(acc as u64)
}

/// `a` reduced into `1..=m`. Multiples of `m` map to `m`.
pub fn mod1(a: i64, m: i64) -> Result<i64> {
    if m <= 0 {
        return Err(BiaError::param(format!("mod1 modulus must be positive, got {m}")));
    }
    Ok(wrap1(a, m))
}

#[inline]
pub(crate) fn wrap1(a: i64, m: i64) -> i64 {
    (a - 1).rem_euclid(m) + 1
}

/// All size-`g` subsets of `1..=k`, sorted so that `A < B` iff the first
/// element where they differ is smaller in `A`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupTable {
    pub k: usize,
    pub g: usize,
    pub groups: Vec<Vec<usize>>,
}

impl GroupTable {
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Group `S_n` for 1-based `n`.
    pub fn subset_at(&self, n: usize) -> Result<&[usize]> {
        if n == 0 || n > self.groups.len() {
            return Err(BiaError::param(format!(
                "group index {n} outside 1..={}",
                self.groups.len()
            )));
        }
        Ok(&self.groups[n - 1])
    }

    /// 1-based index of a subset, if it is in the table. The subset must be sorted.
    pub fn group_index(&self, subset: &[usize]) -> Option<usize> {
        self.groups
            .binary_search_by(|g| g.as_slice().cmp(subset))
            .ok()
            .map(|i| i + 1)
    }

    pub fn contains(&self, n: usize, k: usize) -> bool {
        self.groups
            .get(n.wrapping_sub(1))
            .is_some_and(|s| s.binary_search(&k).is_ok())
    }

    pub fn desired_indices(&self, k: usize) -> Result<Vec<usize>> {
        desired_indices(k, self)
    }

    pub fn member_position(&self, n: usize, k: usize) -> Result<usize> {
        member_position(n, k, self)
    }
}

pub fn ordered_subsets(k: usize, g: usize) -> Result<GroupTable> {
    if g == 0 || g > k {
        return Err(BiaError::param(format!(
            "group size must satisfy 1 <= G <= K, got K={k}, G={g}"
        )));
    }
    let count = binomial(k as u64, g as u64)
        .filter(|&c| c <= 1 << 24)
        .ok_or_else(|| BiaError::param(format!("C({k},{g}) is too large to enumerate")))?;
    let mut groups = Vec::with_capacity(count as usize);
    let mut cur: Vec<usize> = (1..=g).collect();
    loop {
        groups.push(cur.clone());
        // rightmost slot that can still advance
        let Some(i) = (0..g).rev().find(|&i| cur[i] < k - (g - 1 - i)) else {
            break;
        };
        cur[i] += 1;
        for j in i + 1..g {
            cur[j] = cur[j - 1] + 1;
        }
    }
    Ok(GroupTable { k, g, groups })
}

/// Indices of the groups that contain receiver `k`, ascending.
pub fn desired_indices(k: usize, table: &GroupTable) -> Result<Vec<usize>> {
    if k == 0 || k > table.k {
        return Err(BiaError::param(format!("receiver {k} outside 1..={}", table.k)));
    }
    Ok(table
        .groups
        .iter()
        .enumerate()
        .filter(|(_, s)| s.binary_search(&k).is_ok())
        .map(|(i, _)| i + 1)
        .collect())
}

/// Position `g` with `S_n(g) = k`.
pub fn member_position(n: usize, k: usize, table: &GroupTable) -> Result<usize> {
    let s = table.subset_at(n)?;
    s.binary_search(&k)
        .map(|p| p + 1)
        .map_err(|_| BiaError::Membership { n, k })
}
