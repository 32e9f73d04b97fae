//! Undirected edge lists. Every listed link becomes two directed edges.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Abilene: NY, Chicago, DC, Seattle, Sunnyvale, LA, Denver, Kansas City,
/// Houston, Atlanta, Indianapolis.
pub const ABILENE: (usize, &[(usize, usize)]) = (
    11,
    &[
        (0, 1),
        (0, 2),
        (1, 10),
        (2, 9),
        (3, 4),
        (3, 6),
        (4, 5),
        (4, 6),
        (5, 8),
        (6, 7),
        (7, 8),
        (7, 10),
        (8, 9),
        (9, 10),
    ],
);

/// GEANT core: UK, FR, DE, NL, BE, LU, CH, IT, AT, CZ, PL, SK, HU, SI, HR,
/// ES, PT, IE, SE, GR, IL, RO.
pub const GEANT: (usize, &[(usize, usize)]) = (
    22,
    &[
        (0, 1),
        (0, 3),
        (0, 17),
        (0, 18),
        (1, 2),
        (1, 6),
        (1, 15),
        (1, 5),
        (1, 4),
        (2, 3),
        (2, 6),
        (2, 8),
        (2, 9),
        (2, 18),
        (2, 7),
        (2, 10),
        (2, 20),
        (2, 19),
        (3, 4),
        (4, 5),
        (6, 7),
        (7, 8),
        (7, 19),
        (7, 20),
        (8, 12),
        (8, 13),
        (8, 11),
        (9, 11),
        (9, 10),
        (12, 21),
        (12, 14),
        (13, 14),
        (15, 16),
    ],
);

/// LHC grid: CERN (0), twelve tier-1 sites (1-12) and three exchange hubs
/// (13 North America, 14 Europe, 15 Asia-Pacific).
pub const LHC: (usize, &[(usize, usize)]) = (
    16,
    &[
        (0, 13),
        (0, 14),
        (0, 15),
        (0, 1),
        (0, 2),
        (0, 3),
        (0, 4),
        (0, 5),
        (0, 6),
        (0, 7),
        (0, 8),
        (0, 9),
        (0, 10),
        (0, 11),
        (0, 12),
        (13, 1),
        (13, 2),
        (13, 3),
        (14, 4),
        (14, 5),
        (14, 6),
        (14, 7),
        (14, 8),
        (14, 9),
        (14, 10),
        (15, 11),
        (15, 12),
        (13, 14),
        (14, 15),
        (13, 15),
        (1, 2),
    ],
);

/// Fog: a cloud (0), a ring of six fog nodes (1-6), and two edge devices per
/// fog node (7-18), paired with each other.
pub const FOG: (usize, &[(usize, usize)]) = (
    19,
    &[
        (0, 1),
        (0, 2),
        (0, 3),
        (0, 4),
        (0, 5),
        (0, 6),
        (1, 2),
        (2, 3),
        (3, 4),
        (4, 5),
        (5, 6),
        (6, 1),
        (1, 7),
        (1, 8),
        (2, 9),
        (2, 10),
        (3, 11),
        (3, 12),
        (4, 13),
        (4, 14),
        (5, 15),
        (5, 16),
        (6, 17),
        (6, 18),
        (7, 8),
        (9, 10),
        (11, 12),
        (13, 14),
        (15, 16),
        (17, 18),
    ],
);

const MAX_RESAMPLES: usize = 10_000;

pub(crate) fn is_connected(n: usize, links: &[(usize, usize)]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in links {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    seen[0] = true;
    let mut stack = vec![0];
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    count == n
}

/// Uniform `G(n, m)` graph, resampled until connected.
pub fn connected_er<R: Rng>(n: usize, m: usize, rng: &mut R) -> Result<Vec<(usize, usize)>> {
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .collect();
    if m + 1 < n || m > pairs.len() {
        return Err(Error::OutOfRange(format!(
            "no connected graph with {n} nodes and {m} links"
        )));
    }
    for _ in 0..MAX_RESAMPLES {
        let mut links: Vec<(usize, usize)> = pairs.choose_multiple(rng, m).copied().collect();
        if is_connected(n, &links) {
            links.sort_unstable();
            return Ok(links);
        }
    }
    Err(Error::OutOfRange(format!(
        "no connected G({n}, {m}) sample in {MAX_RESAMPLES} attempts"
    )))
}

/// Complete binary tree in heap order; `n - 1` links.
pub fn balanced_tree(n: usize) -> Vec<(usize, usize)> {
    (1..n).map(|v| ((v - 1) / 2, v)).collect()
}

/// Ring plus second-neighbour chords plus random long-range links, `m` links
/// in total.
pub fn small_world<R: Rng>(n: usize, m: usize, rng: &mut R) -> Result<Vec<(usize, usize)>> {
    if n < 5 {
        return Err(Error::OutOfRange("small-world needs at least 5 nodes".into()));
    }
    let norm = |a: usize, b: usize| (a.min(b), a.max(b));
    let mut links: Vec<(usize, usize)> = (0..n).map(|i| norm(i, (i + 1) % n)).collect();
    links.extend((0..n).map(|i| norm(i, (i + 2) % n)));
    if m < links.len() || m > n * (n - 1) / 2 {
        return Err(Error::OutOfRange(format!(
            "small-world with {n} nodes needs between {} and {} links, got {m}",
            links.len(),
            n * (n - 1) / 2
        )));
    }
    let mut taken: std::collections::BTreeSet<(usize, usize)> = links.iter().copied().collect();
    let mut extra: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .filter(|p| !taken.contains(p))
        .collect();
    extra.shuffle(rng);
    for p in extra.into_iter().take(m - links.len()) {
        taken.insert(p);
    }
    Ok(taken.into_iter().collect())
}
