//! Particle-to-target assignment.

use crate::geom::Vec2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssignMode {
    Nearest,
    Balanced,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AssignError {
    #[error(
        "balanced assignment needs at least as many targets ({targets}) as particles ({particles})"
    )]
    TooFewTargets { particles: usize, targets: usize },
}

/// Largest problem solved exactly; above it greedy with 2-swap refinement.
pub const EXACT_LIMIT: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Target index for each particle.
    pub map: Vec<usize>,
    pub cost: f64,
    /// False when the heuristic was used.
    pub exact: bool,
}

fn d2(a: Vec2, b: Vec2) -> f64 {
    (a - b).norm_sq()
}

pub fn assign(
    particles: &[Vec2],
    targets: &[Vec2],
    mode: AssignMode,
) -> Result<Assignment, AssignError> {
    match mode {
        AssignMode::Nearest => Ok(nearest(particles, targets)),
        AssignMode::Balanced => balanced(particles, targets),
    }
}

/// Closest target for each particle; ties go to the lowest target index.
pub fn nearest(particles: &[Vec2], targets: &[Vec2]) -> Assignment {
    let map: Vec<usize> = particles
        .iter()
        .map(|&p| {
            let mut best = (f64::INFINITY, 0);
            for (j, &t) in targets.iter().enumerate() {
                let d = d2(p, t);
                if d < best.0 {
                    best = (d, j);
                }
            }
            best.1
        })
        .collect();
    let cost = total(particles, targets, &map);
    Assignment {
        map,
        cost,
        exact: true,
    }
}

fn total(particles: &[Vec2], targets: &[Vec2], map: &[usize]) -> f64 {
    let mut v: Vec<f64> = particles
        .iter()
        .zip(map)
        .map(|(&p, &j)| d2(p, targets[j]))
        .collect();
    crate::geom::invariant_sum(&mut v)
}

/// Injective assignment minimising the total squared distance.
///
/// Particles are processed in lexicographic position order, so the result
/// does not depend on how the caller labelled them.
pub fn balanced(particles: &[Vec2], targets: &[Vec2]) -> Result<Assignment, AssignError> {
    let n = particles.len();
    let m = targets.len();
    if n > m {
        return Err(AssignError::TooFewTargets {
            particles: n,
            targets: m,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        particles[a]
            .x
            .total_cmp(&particles[b].x)
            .then(particles[a].y.total_cmp(&particles[b].y))
    });
    let sorted: Vec<Vec2> = order.iter().map(|&i| particles[i]).collect();
    let (sorted_map, exact) = if n <= EXACT_LIMIT {
        (hungarian(&sorted, targets), true)
    } else {
        (greedy_two_swap(&sorted, targets), false)
    };
    let mut map = vec![0; n];
    for (k, &i) in order.iter().enumerate() {
        map[i] = sorted_map[k];
    }
    let cost = total(particles, targets, &map);
    Ok(Assignment { map, cost, exact })
}

/// Shortest augmenting path with potentials, O(n²m) for n rows ≤ m columns.
pub fn hungarian_matrix(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    // 1-based arrays, column 0 is the virtual start.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut map = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            map[p[j] - 1] = j - 1;
        }
    }
    map
}

fn hungarian(particles: &[Vec2], targets: &[Vec2]) -> Vec<usize> {
    let cost: Vec<Vec<f64>> = particles
        .iter()
        .map(|&p| targets.iter().map(|&t| d2(p, t)).collect())
        .collect();
    hungarian_matrix(&cost)
}

/// Cheapest-pair-first greedy matching, then pairwise swaps and moves to
/// free targets until no single change helps (at most 20 sweeps).
fn greedy_two_swap(particles: &[Vec2], targets: &[Vec2]) -> Vec<usize> {
    let n = particles.len();
    let m = targets.len();
    let mut pairs: Vec<(f64, u32, u32)> = Vec::with_capacity(n * m);
    for (i, &p) in particles.iter().enumerate() {
        for (j, &t) in targets.iter().enumerate() {
            pairs.push((d2(p, t), i as u32, j as u32));
        }
    }
    pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut map = vec![usize::MAX; n];
    let mut owner = vec![usize::MAX; m];
    let mut left = n;
    for &(_, i, j) in &pairs {
        let (i, j) = (i as usize, j as usize);
        if map[i] == usize::MAX && owner[j] == usize::MAX {
            map[i] = j;
            owner[j] = i;
            left -= 1;
            if left == 0 {
                break;
            }
        }
    }
    for _ in 0..20 {
        let mut improved = false;
        for a in 0..n {
            for b in (a + 1)..n {
                let (ta, tb) = (map[a], map[b]);
                let now = d2(particles[a], targets[ta]) + d2(particles[b], targets[tb]);
                let swapped = d2(particles[a], targets[tb]) + d2(particles[b], targets[ta]);
                if swapped < now - 1e-12 * now.max(1.0) {
                    map.swap(a, b);
                    owner[ta] = b;
                    owner[tb] = a;
                    improved = true;
                }
            }
            if m > n {
                for j in 0..m {
                    if owner[j] == usize::MAX
                        && d2(particles[a], targets[j]) < d2(particles[a], targets[map[a]]) - 1e-12
                    {
                        owner[map[a]] = usize::MAX;
                        owner[j] = a;
                        map[a] = j;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            break;
        }
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_particle_example() {
        let p = [Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0)];
        let t = [Vec2::new(9.0, 0.0), Vec2::new(1.0, 0.0)];
        let b = balanced(&p, &t).unwrap();
        assert_eq!(b.map, vec![1, 0]);
        assert_eq!(b.cost, 2.0);
        assert_eq!(nearest(&p, &t).map, vec![1, 0]);
    }

    #[test]
    fn nearest_ties_lowest_index() {
        let p = [Vec2::new(0.0, 0.0)];
        let t = [Vec2::new(1.0, 0.0), Vec2::new(-1.0, 0.0)];
        assert_eq!(nearest(&p, &t).map, vec![0]);
    }

    #[test]
    fn identity_when_on_targets() {
        let t: Vec<Vec2> = (0..5)
            .map(|i| Vec2::new(i as f64, (i * i) as f64))
            .collect();
        let p = vec![t[3], t[0], t[4], t[1], t[2]];
        for mode in [AssignMode::Nearest, AssignMode::Balanced] {
            let a = assign(&p, &t, mode).unwrap();
            assert_eq!(a.cost, 0.0);
            assert_eq!(a.map, vec![3, 0, 4, 1, 2]);
        }
    }

    #[test]
    fn too_few_targets() {
        let p = [Vec2::ZERO, Vec2::ZERO];
        assert!(balanced(&p, &[Vec2::ZERO]).is_err());
    }

    #[test]
    fn rectangular_hungarian() {
        let cost = vec![vec![4.0, 1.0, 3.5], vec![2.0, 0.0, 5.0]];
        assert_eq!(hungarian_matrix(&cost), vec![1, 0]);
    }
}
