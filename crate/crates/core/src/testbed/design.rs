use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sequential::Domain;

/// Point sets `D_1 ⊇ D_2 ⊇ … ⊇ D_s`, level 1 first.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedDesign {
    pub levels: Vec<Vec<Vec<f64>>>,
}

impl NestedDesign {
    pub fn level(&self, t: usize) -> &[Vec<f64>] {
        &self.levels[t - 1]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.levels.iter().map(Vec::len).collect()
    }
}

/// First point of `D_t` (1-based level, 0-based index) missing from `D_{t-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NestingViolation {
    pub level: usize,
    pub index: usize,
}

pub fn validate_nesting(design: &NestedDesign) -> std::result::Result<(), NestingViolation> {
    for t in 1..design.levels.len() {
        let lower = &design.levels[t - 1];
        if let Some(index) = design.levels[t].iter().position(|p| !lower.contains(p)) {
            return Err(NestingViolation {
                level: t + 1,
                index,
            });
        }
    }
    Ok(())
}

/// Latin hypercube of size `sizes[0]`, then each higher level is a greedy
/// maximin subset of the level below it.
pub fn nested_lhs(sizes: &[usize], domain: &Domain, seed: u64) -> Result<NestedDesign> {
    if sizes.is_empty() || sizes[0] < 2 {
        return Err(Error::contract(
            "the level-1 design needs at least 2 points",
        ));
    }
    if sizes.windows(2).any(|w| w[1] > w[0]) || sizes.contains(&0) {
        return Err(Error::contract(format!(
            "design sizes must be non-increasing and positive, got {sizes:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = sizes[0];
    let d = domain.dim();
    let mut base = vec![vec![0.0; d]; n];
    for k in 0..d {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        let (lo, hi) = (domain.lower[k], domain.upper[k]);
        for (point, s) in base.iter_mut().zip(strata) {
            let u: f64 = rng.random();
            point[k] = lo + (hi - lo) * (s as f64 + u) / n as f64;
        }
    }
    let sides = domain.sides();
    let mut levels = vec![base];
    for &m in &sizes[1..] {
        let prev = levels.last().expect("level 1 exists");
        let picked = maximin_subset(prev, m, &sides);
        levels.push(picked.into_iter().map(|i| prev[i].clone()).collect());
    }
    Ok(NestedDesign { levels })
}

fn scaled_dist(a: &[f64], b: &[f64], sides: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(sides)
        .map(|((x, y), s)| ((x - y) / s).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Indices (ascending) of a greedy maximin subset of size `m`.
fn maximin_subset(points: &[Vec<f64>], m: usize, sides: &[f64]) -> Vec<usize> {
    let n = points.len();
    if m >= n {
        return (0..n).collect();
    }
    // seed with the point whose nearest neighbour is farthest
    let nearest = |i: usize| -> f64 {
        (0..n)
            .filter(|&j| j != i)
            .map(|j| scaled_dist(&points[i], &points[j], sides))
            .fold(f64::INFINITY, f64::min)
    };
    let first = argmax_first((0..n).map(|i| (i, nearest(i))));
    let mut chosen = vec![first];
    let mut gap: Vec<f64> = (0..n)
        .map(|i| scaled_dist(&points[i], &points[first], sides))
        .collect();
    while chosen.len() < m {
        let next = argmax_first((0..n).filter(|i| !chosen.contains(i)).map(|i| (i, gap[i])));
        chosen.push(next);
        for i in 0..n {
            gap[i] = gap[i].min(scaled_dist(&points[i], &points[next], sides));
        }
    }
    chosen.sort_unstable();
    chosen
}

fn argmax_first(items: impl Iterator<Item = (usize, f64)>) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in items {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.expect("non-empty candidate set").0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_sizes_share_the_design() {
        let d = nested_lhs(&[6, 6, 6], &Domain::unit(2), 4).unwrap();
        assert_eq!(d.levels[0], d.levels[1]);
        assert_eq!(d.levels[1], d.levels[2]);
    }

    #[test]
    fn single_point_subset_is_most_isolated() {
        let dom = Domain::unit(2);
        let d = nested_lhs(&[10, 1], &dom, 17).unwrap();
        let pts = &d.levels[0];
        let iso = |p: &Vec<f64>| {
            pts.iter()
                .filter(|q| *q != p)
                .map(|q| scaled_dist(p, q, &[1.0, 1.0]))
                .fold(f64::INFINITY, f64::min)
        };
        let best = pts.iter().map(iso).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(iso(&d.levels[1][0]), best);
    }

    #[test]
    fn lhs_strata_are_filled_once() {
        let dom = Domain::new(vec![-2.0, 10.0, 0.0], vec![3.0, 11.0, 0.5]).unwrap();
        let n = 13;
        let d = nested_lhs(&[n, 5], &dom, 99).unwrap();
        for k in 0..3 {
            let mut seen = vec![false; n];
            for p in &d.levels[0] {
                let u = (p[k] - dom.lower[k]) / (dom.upper[k] - dom.lower[k]);
                let s = ((u * n as f64).floor() as usize).min(n - 1);
                assert!(!seen[s], "stratum {s} of dim {k} used twice");
                seen[s] = true;
            }
        }
        assert!(d.levels.iter().flatten().all(|p| dom.contains(p)));
    }

    #[test]
    fn violations_are_reported() {
        let mut d = nested_lhs(&[8, 4, 2], &Domain::unit(1), 1).unwrap();
        assert_eq!(validate_nesting(&d), Ok(()));
        d.levels[1][2][0] += 1e-12;
        assert_eq!(
            validate_nesting(&d),
            Err(NestingViolation { level: 2, index: 2 })
        );
        let single = NestedDesign {
            levels: vec![vec![vec![0.1]]],
        };
        assert_eq!(validate_nesting(&single), Ok(()));
    }

    #[test]
    fn bad_sizes_rejected() {
        assert!(nested_lhs(&[4, 6], &Domain::unit(1), 0).is_err());
        assert!(nested_lhs(&[1], &Domain::unit(1), 0).is_err());
        assert!(nested_lhs(&[5, 0], &Domain::unit(1), 0).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let a = nested_lhs(&[12, 6, 3], &Domain::unit(2), 5).unwrap();
        let b = nested_lhs(&[12, 6, 3], &Domain::unit(2), 5).unwrap();
        assert_eq!(a, b);
    }
}
