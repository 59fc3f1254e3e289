//! Linear-chain CRF inference.
//!
//! A tag sequence `y` over emissions `E` (L×K) scores
//! `start[y0] + Σ E[t][yt] + Σ T[y(t-1)][yt] + stop[y(L-1)]`.

use crate::tensor::{log_sum_exp, Matrix};

#[derive(Debug, Clone, Copy)]
pub struct CrfScores<'a> {
    /// `transitions[from][to]`, K×K.
    pub transitions: &'a Matrix,
    pub start: &'a [f64],
    pub stop: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Crf {
    pub transitions: Matrix,
    pub start: Vec<f64>,
    pub stop: Vec<f64>,
}

impl Crf {
    pub fn zeros(k: usize) -> Self {
        Crf { transitions: Matrix::zeros(k, k), start: vec![0.0; k], stop: vec![0.0; k] }
    }

    pub fn num_tags(&self) -> usize {
        self.start.len()
    }

    pub fn scores(&self) -> CrfScores<'_> {
        CrfScores { transitions: &self.transitions, start: &self.start, stop: &self.stop }
    }

    pub fn log_partition(&self, emissions: &Matrix) -> f64 {
        self.scores().log_partition(emissions)
    }

    pub fn viterbi(&self, emissions: &Matrix) -> (Vec<usize>, f64) {
        self.scores().viterbi(emissions)
    }

    pub fn score(&self, emissions: &Matrix, tags: &[usize]) -> f64 {
        self.scores().score(emissions, tags)
    }
}

/// Posterior marginals of a chain.
#[derive(Debug, Clone)]
pub struct Marginals {
    pub log_partition: f64,
    /// L×K tag marginals.
    pub unary: Matrix,
    /// K×K expected transition counts summed over positions.
    pub pairwise: Matrix,
}

#[derive(Default)]
struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        self.comp += if self.sum.abs() >= x.abs() { (self.sum - t) + x } else { (x - t) + self.sum };
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl CrfScores<'_> {
    fn k(&self) -> usize {
        self.start.len()
    }

    fn check(&self, emissions: &Matrix) {
        assert!(emissions.rows() >= 1, "empty sequence");
        assert_eq!(emissions.cols(), self.k(), "emission width differs from tag count");
    }

    pub fn score(&self, emissions: &Matrix, tags: &[usize]) -> f64 {
        assert_eq!(tags.len(), emissions.rows());
        let mut s = self.start[tags[0]] + self.stop[tags[tags.len() - 1]];
        for (t, &y) in tags.iter().enumerate() {
            s += emissions.get(t, y);
            if t > 0 {
                s += self.transitions.get(tags[t - 1], y);
            }
        }
        s
    }

    fn alphas(&self, emissions: &Matrix) -> Matrix {
        let (l, k) = emissions.shape();
        let mut alpha = Matrix::zeros(l, k);
        for y in 0..k {
            alpha.set(0, y, self.start[y] + emissions.get(0, y));
        }
        let mut buf = vec![0.0; k];
        for t in 1..l {
            for y in 0..k {
                for (j, b) in buf.iter_mut().enumerate() {
                    *b = alpha.get(t - 1, j) + self.transitions.get(j, y);
                }
                alpha.set(t, y, emissions.get(t, y) + log_sum_exp(&buf));
            }
        }
        alpha
    }

    /// Forward pass renormalized at every position; the per-position log
    /// normalizers are summed with Neumaier compensation, so `L` equal
    /// normalizers add up to the correctly rounded `L * c`.
    pub fn log_partition(&self, emissions: &Matrix) -> f64 {
        self.check(emissions);
        let (l, k) = emissions.shape();
        let mut total = NeumaierSum::default();
        let mut alpha: Vec<f64> = (0..k).map(|y| self.start[y] + emissions.get(0, y)).collect();
        let mut normalize = |alpha: &mut Vec<f64>| {
            let c = log_sum_exp(alpha);
            alpha.iter_mut().for_each(|a| *a -= c);
            total.add(c);
        };
        normalize(&mut alpha);
        let mut buf = vec![0.0; k];
        for t in 1..l {
            let next: Vec<f64> = (0..k)
                .map(|y| {
                    for (j, b) in buf.iter_mut().enumerate() {
                        *b = alpha[j] + self.transitions.get(j, y);
                    }
                    emissions.get(t, y) + log_sum_exp(&buf)
                })
                .collect();
            alpha = next;
            normalize(&mut alpha);
        }
        let finals: Vec<f64> = (0..k).map(|y| alpha[y] + self.stop[y]).collect();
        total.add(log_sum_exp(&finals));
        total.value()
    }

    pub fn marginals(&self, emissions: &Matrix) -> Marginals {
        self.check(emissions);
        let (l, k) = emissions.shape();
        let alpha = self.alphas(emissions);
        let mut beta = Matrix::zeros(l, k);
        for y in 0..k {
            beta.set(l - 1, y, self.stop[y]);
        }
        let mut buf = vec![0.0; k];
        for t in (0..l - 1).rev() {
            for j in 0..k {
                for (y, b) in buf.iter_mut().enumerate() {
                    *b = self.transitions.get(j, y) + emissions.get(t + 1, y) + beta.get(t + 1, y);
                }
                beta.set(t, j, log_sum_exp(&buf));
            }
        }
        let finals: Vec<f64> = (0..k).map(|y| alpha.get(l - 1, y) + self.stop[y]).collect();
        let log_z = log_sum_exp(&finals);
        let mut unary = Matrix::zeros(l, k);
        for t in 0..l {
            for y in 0..k {
                unary.set(t, y, (alpha.get(t, y) + beta.get(t, y) - log_z).exp());
            }
        }
        let mut pairwise = Matrix::zeros(k, k);
        for t in 0..l - 1 {
            for j in 0..k {
                for y in 0..k {
                    let lp = alpha.get(t, j) + self.transitions.get(j, y) + emissions.get(t + 1, y) + beta.get(t + 1, y) - log_z;
                    pairwise.set(j, y, pairwise.get(j, y) + lp.exp());
                }
            }
        }
        Marginals { log_partition: log_z, unary, pairwise }
    }

    /// Best sequence and its score. Among equal scores the sequence with the
    /// smallest tag at the earliest differing position wins.
    pub fn viterbi(&self, emissions: &Matrix) -> (Vec<usize>, f64) {
        self.check(emissions);
        let (l, k) = emissions.shape();
        // best[t][y]: best score of positions t.. given tag y at t, stop included.
        let mut best = Matrix::zeros(l, k);
        for y in 0..k {
            best.set(l - 1, y, emissions.get(l - 1, y) + self.stop[y]);
        }
        for t in (0..l - 1).rev() {
            for y in 0..k {
                let m = (0..k).map(|j| self.transitions.get(y, j) + best.get(t + 1, j)).fold(f64::NEG_INFINITY, f64::max);
                best.set(t, y, emissions.get(t, y) + m);
            }
        }
        let argmax = |f: &dyn Fn(usize) -> f64| {
            let mut arg = 0;
            let mut val = f(0);
            for y in 1..k {
                let v = f(y);
                if v > val {
                    arg = y;
                    val = v;
                }
            }
            (arg, val)
        };
        let (first, total) = argmax(&|y| self.start[y] + best.get(0, y));
        let mut tags = vec![first];
        for t in 1..l {
            let prev = tags[t - 1];
            tags.push(argmax(&|y| self.transitions.get(prev, y) + best.get(t, y)).0);
        }
        (tags, total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn all_sequences(l: usize, k: usize) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for _ in 0..l {
            out = out.into_iter().flat_map(|s| (0..k).map(move |y| [s.clone(), vec![y]].concat())).collect();
        }
        out
    }

    fn instance(l: usize, k: usize, vals: &[f64]) -> (Crf, Matrix) {
        let mut it = vals.iter().cycle().copied();
        let mut take = |n: usize| -> Vec<f64> { (0..n).map(|_| it.next().unwrap()).collect() };
        let crf = Crf { transitions: Matrix::from_vec(k, k, take(k * k)), start: take(k), stop: take(k) };
        let em = Matrix::from_vec(l, k, take(l * k));
        (crf, em)
    }

    #[test]
    fn uniform_partition() {
        for (l, k) in [(1, 2), (3, 4), (6, 3), (40, 7), (200, 9)] {
            let crf = Crf::zeros(k);
            let z = crf.log_partition(&Matrix::zeros(l, k));
            assert_eq!(z, l as f64 * (k as f64).ln());
        }
    }

    #[test]
    fn single_position() {
        let (crf, em) = instance(1, 3, &[0.3, -1.2, 0.7, 2.0, 0.1, -0.4, 0.9, 1.1, -2.0, 0.5, 0.25, -0.6, 1.5, 0.2, -0.3]);
        let want = log_sum_exp(&(0..3).map(|y| crf.start[y] + em.get(0, y) + crf.stop[y]).collect::<Vec<_>>());
        assert!((crf.log_partition(&em) - want).abs() < 1e-12);
    }

    #[test]
    fn decoupled_chain_decodes_per_position() {
        let mut crf = Crf::zeros(3);
        crf.start = vec![0.0; 3];
        let em = Matrix::from_vec(4, 3, vec![0., 1., 0., 2., 0., 0., 0., 0., 3., 0., 1., 0.5]);
        assert_eq!(crf.viterbi(&em).0, vec![1, 0, 2, 1]);
    }

    #[test]
    fn ties_prefer_smallest_earliest() {
        let crf = Crf::zeros(3);
        assert_eq!(crf.viterbi(&Matrix::zeros(4, 3)).0, vec![0, 0, 0, 0]);
        let mut crf = Crf::zeros(2);
        crf.transitions = Matrix::from_vec(2, 2, vec![0.0, 1.0, 1.0, 0.0]);
        assert_eq!(crf.viterbi(&Matrix::zeros(3, 2)).0, vec![0, 1, 0]);
    }

    proptest! {
        #[test]
        fn matches_enumeration(l in 1usize..=5, k in 1usize..=4, vals in prop::collection::vec(-3.0f64..3.0, 64)) {
            let (crf, em) = instance(l, k, &vals);
            let seqs = all_sequences(l, k);
            let scores: Vec<f64> = seqs.iter().map(|s| crf.score(&em, s)).collect();
            let z = log_sum_exp(&scores);
            prop_assert!((crf.log_partition(&em) - z).abs() < 1e-9);

            let m = crf.scores().marginals(&em);
            prop_assert!((m.log_partition - z).abs() < 1e-9);
            for t in 0..l {
                for y in 0..k {
                    let p: f64 = seqs.iter().zip(&scores).filter(|(s, _)| s[t] == y).map(|(_, sc)| (sc - z).exp()).sum();
                    prop_assert!((m.unary.get(t, y) - p).abs() < 1e-9);
                }
            }

            let (tags, score) = crf.viterbi(&em);
            let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!((score - best).abs() < 1e-9);
            prop_assert!((crf.score(&em, &tags) - score).abs() < 1e-9);
            let first_best = seqs.iter().zip(&scores).find(|(_, &sc)| sc == best).map(|(s, _)| s.clone()).unwrap();
            prop_assert!((crf.score(&em, &first_best) - crf.score(&em, &tags)).abs() < 1e-9);
        }

        #[test]
        fn emission_shift(l in 1usize..=5, pos in 0usize..5, c in -5.0f64..5.0, vals in prop::collection::vec(-3.0f64..3.0, 64)) {
            let (crf, em) = instance(l, 3, &vals);
            let pos = pos % l;
            let mut shifted = em.clone();
            for y in 0..3 {
                shifted.set(pos, y, em.get(pos, y) + c);
            }
            prop_assert!((crf.log_partition(&shifted) - crf.log_partition(&em) - c).abs() < 1e-9);
            let (a, sa) = crf.viterbi(&em);
            let (b, sb) = crf.viterbi(&shifted);
            prop_assert_eq!(a, b);
            prop_assert!((sb - sa - c).abs() < 1e-9);
        }
    }
}
