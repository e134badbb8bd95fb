//! Pilot-sharing groups.
//!
//! Users are sorted by signature centre with a bitonic merging network and fed
//! serially to a greedy first-fit grouper: a user joins the lowest-index group
//! it is compatible with, where compatible means disjoint windows separated by
//! at least `omega` bins (cyclic distance).

use std::fmt::Write as _;

use crate::signature::SpatialSignature;
use crate::spectral::Window;
use crate::{Error, Result};

/// Result of running the bitonic merging network.
#[derive(Debug, Clone, PartialEq)]
pub struct SortTrace<T> {
    pub sorted: Vec<T>,
    /// Compare-exchange elements in the network.
    pub comparators: usize,
    /// Network depth.
    pub stages: usize,
}

/// Sorts `keys` ascending with Batcher's bitonic merging network.
///
/// Each merger of width `n` starts with a symmetric compare stage (`i` against
/// `n - 1 - i`) followed by half-cleaners, so every comparator points the same
/// way. Inputs are padded to a power of two with `+inf` sentinels.
pub fn bitonic_sort<T: Ord + Clone>(keys: &[T]) -> SortTrace<T> {
    let n = keys.len().next_power_of_two().max(1);
    let mut wires: Vec<Option<T>> = keys.iter().cloned().map(Some).collect();
    wires.resize(n, None);
    // `None` is the +inf sentinel
    let greater = |a: &Option<T>, b: &Option<T>| match (a, b) {
        (None, None) => false,
        (None, Some(_)) => true,
        (Some(_), None) => false,
        (Some(x), Some(y)) => x > y,
    };
    let mut comparators = 0;
    let mut stages = 0;
    let mut width = 2;
    while width <= n {
        // symmetric stage
        for block in (0..n).step_by(width) {
            for i in 0..width / 2 {
                let (a, b) = (block + i, block + width - 1 - i);
                if greater(&wires[a], &wires[b]) {
                    wires.swap(a, b);
                }
                comparators += 1;
            }
        }
        stages += 1;
        let mut half = width / 4;
        while half >= 1 {
            for block in (0..n).step_by(2 * half) {
                for i in block..block + half {
                    if greater(&wires[i], &wires[i + half]) {
                        wires.swap(i, i + half);
                    }
                    comparators += 1;
                }
            }
            stages += 1;
            half /= 2;
        }
        width *= 2;
    }
    let sorted = wires.into_iter().flatten().collect();
    SortTrace { sorted, comparators, stages }
}

/// A partition of users (or clusters) into pilot-sharing groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupAssignment {
    pub groups: Vec<Vec<usize>>,
    pub group_of: Vec<usize>,
}

impl GroupAssignment {
    /// Builds an assignment over users `0..n`, rejecting missing or repeated users.
    pub fn from_groups(groups: Vec<Vec<usize>>, n: usize) -> Result<Self> {
        let mut group_of = vec![usize::MAX; n];
        for (g, members) in groups.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::Assignment(format!("group {g} is empty")));
            }
            for &u in members {
                if u >= n {
                    return Err(Error::Assignment(format!("user {u} out of range 0..{n}")));
                }
                if group_of[u] != usize::MAX {
                    return Err(Error::Assignment(format!("user {u} is in groups {} and {g}", group_of[u])));
                }
                group_of[u] = g;
            }
        }
        if let Some(u) = group_of.iter().position(|&g| g == usize::MAX) {
            return Err(Error::Assignment(format!("user {u} is in no group")));
        }
        Ok(Self { groups, group_of })
    }

    pub fn g_count(&self) -> usize {
        self.groups.len()
    }

    pub fn user_count(&self) -> usize {
        self.group_of.len()
    }

    pub fn check_covers(&self, n: usize) -> Result<()> {
        if self.group_of.len() != n {
            return Err(Error::Assignment(format!(
                "assignment covers {} users, expected {n}",
                self.group_of.len()
            )));
        }
        Ok(())
    }

    /// One group per user.
    pub fn singletons(n: usize) -> Self {
        Self { groups: (0..n).map(|u| vec![u]).collect(), group_of: (0..n).collect() }
    }

    /// CSV with header `user_id,group_id,b_center,window_start,phi`.
    pub fn to_csv(&self, signatures: &[SpatialSignature]) -> String {
        let mut out = String::from("user_id,group_id,b_center,window_start,phi\n");
        for (u, &g) in self.group_of.iter().enumerate() {
            let s = &signatures[u];
            let _ = writeln!(out, "{u},{g},{},{},{}", s.b_center, s.window.start, s.phi);
        }
        out
    }
}

/// Whether two windows may share a pilot: disjoint, and every pair of bins at
/// least `omega` apart in cyclic distance.
pub fn windows_compatible(a: &Window, b: &Window, omega: usize) -> bool {
    let m = a.m;
    let overlap = (b.start + m - a.start) % m < a.len || (a.start + m - b.start) % m < b.len;
    if overlap {
        return false;
    }
    // facing edges of two disjoint arcs
    let a_end = (a.start + a.len - 1) % m;
    let b_end = (b.start + b.len - 1) % m;
    let gap_ab = (b.start + m - a_end) % m;
    let gap_ba = (a.start + m - b_end) % m;
    gap_ab.min(gap_ba) >= omega
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GroupingMode {
    /// Check the candidate against every current member.
    #[default]
    Full,
    /// Check only against the latest member of each group, as the systolic
    /// compare element does. Can admit overlapping pairs on wrapped windows.
    LatestMember,
}

/// Item fed to the grouper: an id in `0..n` and its window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupItem {
    pub id: usize,
    pub window: Window,
}

/// Greedy first-fit over `items` in the given order, at most `cap` members per group.
pub fn group_users(items: &[GroupItem], omega: usize, cap: usize, mode: GroupingMode) -> Result<GroupAssignment> {
    let cap = cap.max(1);
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut windows: Vec<Vec<Window>> = Vec::new();
    for item in items {
        let fits = |ws: &Vec<Window>| {
            ws.len() < cap
                && match mode {
                    GroupingMode::Full => ws.iter().all(|w| windows_compatible(w, &item.window, omega)),
                    GroupingMode::LatestMember => {
                        ws.last().is_none_or(|w| windows_compatible(w, &item.window, omega))
                    }
                }
        };
        match windows.iter().position(fits) {
            Some(g) => {
                groups[g].push(item.id);
                windows[g].push(item.window);
            }
            None => {
                groups.push(vec![item.id]);
                windows.push(vec![item.window]);
            }
        }
    }
    GroupAssignment::from_groups(groups, items.len())
}

/// Sorts signatures by `(b_center, user)` through the bitonic network and
/// groups them. Returns the assignment and the sorting trace.
pub fn sort_and_group(
    signatures: &[SpatialSignature],
    omega: usize,
    cap: usize,
    mode: GroupingMode,
) -> Result<(GroupAssignment, SortTrace<(usize, usize)>)> {
    let keys: Vec<(usize, usize)> = signatures.iter().enumerate().map(|(u, s)| (s.b_center, u)).collect();
    let trace = bitonic_sort(&keys);
    let items: Vec<GroupItem> = trace
        .sorted
        .iter()
        .map(|&(_, u)| GroupItem { id: u, window: signatures[u].window })
        .collect();
    Ok((group_users(&items, omega, cap, mode)?, trace))
}

/// Partitions users into clusters of identical `(window, phi)`, ordered by
/// their lowest member.
pub fn cluster_identical(signatures: &[SpatialSignature]) -> Vec<Vec<usize>> {
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (u, s) in signatures.iter().enumerate() {
        let found = clusters.iter_mut().find(|c| {
            let r = &signatures[c[0]];
            r.window == s.window && r.phi == s.phi
        });
        match found {
            Some(c) => c.push(u),
            None => clusters.push(vec![u]),
        }
    }
    clusters
}

/// A pair of same-group users violating the sharing rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub group: usize,
    pub first: usize,
    pub second: usize,
}

/// Checks every intra-group pair bin by bin: no shared bin and cyclic
/// distance at least `omega`. Returns the first violating pair.
pub fn validate_grouping(assignment: &GroupAssignment, windows: &[Window], omega: usize) -> Result<(), Violation> {
    let dist = |a: usize, b: usize, m: usize| {
        let d = a.abs_diff(b);
        d.min(m - d)
    };
    for (g, members) in assignment.groups.iter().enumerate() {
        for (i, &u) in members.iter().enumerate() {
            for &v in &members[i + 1..] {
                let (a, b) = (&windows[u], &windows[v]);
                let bad = a.indices().any(|x| b.indices().any(|y| x == y || dist(x, y, a.m) < omega));
                if bad {
                    return Err(Violation { group: g, first: u, second: v });
                }
            }
        }
    }
    Ok(())
}
