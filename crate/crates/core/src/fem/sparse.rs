//! Symmetric positive-definite solves with a variable-band (skyline)
//! Cholesky factorization on a reverse Cuthill–McKee ordering.

use nalgebra::Matrix2;
use std::collections::VecDeque;

/// Reverse Cuthill–McKee ordering of `n` nodes; returns `pos[node]`.
pub fn rcm_order(n: usize, adjacency: &[Vec<usize>]) -> Vec<usize> {
    let degree: Vec<usize> = adjacency.iter().map(|a| a.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let start = (0..n)
            .filter(|&v| !visited[v])
            .min_by_key(|&v| degree[v])
            .unwrap();
        // One pseudo-peripheral sweep: restart from the last node reached.
        let start = {
            let mut seen = vec![false; n];
            let mut q = VecDeque::from([start]);
            seen[start] = true;
            let mut last = start;
            while let Some(v) = q.pop_front() {
                last = v;
                for &w in &adjacency[v] {
                    if !seen[w] && !visited[w] {
                        seen[w] = true;
                        q.push_back(w);
                    }
                }
            }
            last
        };
        let mut q = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = q.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adjacency[v]
                .iter()
                .copied()
                .filter(|&w| !visited[w])
                .collect();
            next.sort_by_key(|&w| (degree[w], w));
            next.dedup();
            for w in next {
                if !visited[w] {
                    visited[w] = true;
                    q.push_back(w);
                }
            }
        }
    }
    order.reverse();
    let mut pos = vec![0; n];
    for (p, &v) in order.iter().enumerate() {
        pos[v] = p;
    }
    pos
}

/// Sparse symmetric matrix assembled from 2×2 blocks.
#[derive(Clone, Debug, Default)]
pub struct BlockTriplets {
    pub entries: Vec<(usize, usize, Matrix2<f64>)>,
}

impl BlockTriplets {
    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Adds block `(i, j)`; only one of `(i, j)` and `(j, i)` needs adding
    /// for off-diagonal pairs, but adding both is also accepted.
    pub fn add(&mut self, i: usize, j: usize, m: Matrix2<f64>) {
        self.entries.push((i, j, m));
    }

    /// `y = A x`, treating the stored blocks as a full (both triangles)
    /// listing.
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        for &(i, j, m) in &self.entries {
            for a in 0..2 {
                for b in 0..2 {
                    y[2 * i + a] += m[(a, b)] * x[2 * j + b];
                }
            }
        }
        y
    }
}

/// Lower-triangular skyline storage in a permuted ordering.
pub struct Skyline {
    n: usize,
    /// Scalar position of scalar unknown `i` in the factor ordering.
    perm: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    values: Vec<f64>,
}

impl Skyline {
    /// Builds the profile for blocks listed in `triplets` (both triangles
    /// listed) under block ordering `block_pos`.
    pub fn assemble(
        block_pos: &[usize],
        triplets: &BlockTriplets,
        shift: f64,
        pinned: &[bool],
    ) -> Self {
        let nb = block_pos.len();
        let n = 2 * nb;
        let perm: Vec<usize> = (0..n).map(|i| 2 * block_pos[i / 2] + i % 2).collect();
        let mut first: Vec<usize> = (0..n).collect();
        for &(bi, bj, _) in &triplets.entries {
            let (pi, pj) = (2 * block_pos[bi], 2 * block_pos[bj]);
            let (hi, lo) = if pi >= pj { (pi, pj) } else { (pj, pi) };
            for r in hi..hi + 2 {
                first[r] = first[r].min(lo);
            }
        }
        let mut start = Vec::with_capacity(n + 1);
        let mut acc = 0;
        for i in 0..n {
            start.push(acc);
            acc += i - first[i] + 1;
        }
        start.push(acc);
        let mut s = Skyline {
            n,
            perm,
            first,
            start,
            values: vec![0.0; acc],
        };
        for &(bi, bj, m) in &triplets.entries {
            for a in 0..2 {
                for b in 0..2 {
                    let (gi, gj) = (2 * bi + a, 2 * bj + b);
                    if pinned[gi] || pinned[gj] {
                        continue;
                    }
                    let (pi, pj) = (s.perm[gi], s.perm[gj]);
                    // Each off-diagonal scalar entry arrives twice (once per
                    // triangle); keep the lower one only.
                    if pi >= pj {
                        let k = s.start[pi] + pj - s.first[pi];
                        s.values[k] += m[(a, b)];
                    }
                }
            }
        }
        for g in 0..n {
            let p = s.perm[g];
            let d = s.start[p] + p - s.first[p];
            if pinned[g] {
                s.values[d] = 1.0;
            } else {
                s.values[d] += shift;
            }
        }
        s
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.start[i] + j - self.first[i]]
    }

    /// In-place `L Lᵀ` factorization; `false` if the matrix is not
    /// numerically positive definite.
    pub fn factor(&mut self) -> bool {
        for i in 0..self.n {
            let fi = self.first[i];
            for j in fi..i {
                let fj = self.first[j];
                let k0 = fi.max(fj);
                let mut s = self.at(i, j);
                let (ri, rj) = (self.start[i] + k0 - fi, self.start[j] + k0 - fj);
                let len = j - k0;
                for t in 0..len {
                    s -= self.values[ri + t] * self.values[rj + t];
                }
                let v = s / self.at(j, j);
                let k = self.start[i] + j - fi;
                self.values[k] = v;
            }
            let row = &self.values[self.start[i]..self.start[i] + i - fi];
            let d = self.at(i, i) - row.iter().map(|x| x * x).sum::<f64>();
            if !(d > 0.0) || !d.is_finite() {
                return false;
            }
            let k = self.start[i] + i - fi;
            self.values[k] = d.sqrt();
        }
        true
    }

    /// Solves with the factor; `b` is in the original ordering.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for g in 0..self.n {
            y[self.perm[g]] = b[g];
        }
        for i in 0..self.n {
            let fi = self.first[i];
            let mut s = y[i];
            for j in fi..i {
                s -= self.at(i, j) * y[j];
            }
            y[i] = s / self.at(i, i);
        }
        for i in (0..self.n).rev() {
            y[i] /= self.at(i, i);
            let yi = y[i];
            let fi = self.first[i];
            for j in fi..i {
                y[j] -= self.at(i, j) * yi;
            }
        }
        (0..self.n).map(|g| y[self.perm[g]]).collect()
    }

    pub fn profile_len(&self) -> usize {
        self.values.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn solves_random_spd_block_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let nb = 12;
        let mut t = BlockTriplets::default();
        let mut dense = DMatrix::<f64>::zeros(2 * nb, 2 * nb);
        // Sparse random blocks made SPD by diagonal dominance.
        for _ in 0..30 {
            let (i, j) = (rng.gen_range(0..nb), rng.gen_range(0..nb));
            if i == j {
                continue;
            }
            let m = Matrix2::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            t.add(i, j, m);
            t.add(j, i, m.transpose());
            for a in 0..2 {
                for b in 0..2 {
                    dense[(2 * i + a, 2 * j + b)] += m[(a, b)];
                    dense[(2 * j + b, 2 * i + a)] += m[(a, b)];
                }
            }
        }
        for i in 0..nb {
            let m = Matrix2::identity() * 10.0;
            t.add(i, i, m);
            for a in 0..2 {
                dense[(2 * i + a, 2 * i + a)] += 10.0;
            }
        }
        let adj: Vec<Vec<usize>> = {
            let mut a = vec![Vec::new(); nb];
            for &(i, j, _) in &t.entries {
                if i != j {
                    a[i].push(j);
                }
            }
            a
        };
        let pos = rcm_order(nb, &adj);
        let mut s = Skyline::assemble(&pos, &t, 0.0, &vec![false; 2 * nb]);
        assert!(s.factor());
        let b: Vec<f64> = (0..2 * nb).map(|i| (i as f64).sin()).collect();
        let x = s.solve(&b);
        let r = &dense * nalgebra::DVector::from_vec(x) - nalgebra::DVector::from_vec(b);
        assert!(r.norm() < 1e-12, "{}", r.norm());
    }

    #[test]
    fn indefinite_matrix_is_reported() {
        let mut t = BlockTriplets::default();
        t.add(0, 0, Matrix2::new(1.0, 2.0, 2.0, 1.0));
        let mut s = Skyline::assemble(&[0], &t, 0.0, &[false, false]);
        assert!(!s.factor());
    }

    #[test]
    fn rcm_is_a_permutation() {
        let adj = vec![vec![3], vec![2], vec![1, 3], vec![0, 2], vec![]];
        let mut pos = rcm_order(5, &adj);
        pos.sort();
        assert_eq!(pos, vec![0, 1, 2, 3, 4]);
    }
}
