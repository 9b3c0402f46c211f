//! Dynamic programs over a linear-chain lattice, all in log space.
//!
//! A path `y` over `n` positions scores
//! `start[y0] + Σ emit[i][yi] + Σ trans[y(i-1)][yi] + stop[y(n-1)]`.

/// Log-space potentials for one sentence.
#[derive(Debug, Clone)]
pub struct Potentials<'a> {
    /// Row-major `n × t` emission scores.
    pub emission: Vec<f64>,
    /// Row-major `t × t`, indexed `[prev * t + next]`.
    pub transition: &'a [f64],
    pub start: &'a [f64],
    pub stop: &'a [f64],
    pub num_tags: usize,
}

/// Node and edge posteriors.
#[derive(Debug, Clone)]
pub struct Marginals {
    /// `n × t`.
    pub node: Vec<f64>,
    /// `(n-1) × t × t`, indexed `[(i-1) * t * t + prev * t + next]`.
    pub edge: Vec<f64>,
    pub log_partition: f64,
}

pub fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

impl Potentials<'_> {
    pub fn len(&self) -> usize {
        self.emission.len() / self.num_tags
    }

    pub fn is_empty(&self) -> bool {
        self.emission.is_empty()
    }

    #[inline]
    pub fn emit(&self, i: usize, tag: usize) -> f64 {
        self.emission[i * self.num_tags + tag]
    }

    #[inline]
    pub fn trans(&self, prev: usize, next: usize) -> f64 {
        self.transition[prev * self.num_tags + next]
    }

    pub fn path_score(&self, path: &[usize]) -> f64 {
        debug_assert_eq!(path.len(), self.len());
        let Some((&first, _)) = path.split_first() else {
            return 0.0;
        };
        let mut score = self.start[first] + self.stop[path[path.len() - 1]];
        for (i, &y) in path.iter().enumerate() {
            score += self.emit(i, y);
            if i > 0 {
                score += self.trans(path[i - 1], y);
            }
        }
        score
    }

    /// Forward log-messages (`n × t`, excluding stop) and the log partition.
    pub fn forward(&self) -> (Vec<f64>, f64) {
        let (n, t) = (self.len(), self.num_tags);
        let mut alpha = vec![0.0; n * t];
        if n == 0 {
            return (alpha, 0.0);
        }
        for y in 0..t {
            alpha[y] = self.start[y] + self.emit(0, y);
        }
        let mut scratch = vec![0.0; t];
        for i in 1..n {
            for y in 0..t {
                for (p, s) in scratch.iter_mut().enumerate() {
                    *s = alpha[(i - 1) * t + p] + self.trans(p, y);
                }
                alpha[i * t + y] = log_sum_exp(scratch.iter().copied()) + self.emit(i, y);
            }
        }
        let log_z = log_sum_exp((0..t).map(|y| alpha[(n - 1) * t + y] + self.stop[y]));
        (alpha, log_z)
    }

    /// Backward log-messages (`n × t`, including stop).
    pub fn backward(&self) -> Vec<f64> {
        let (n, t) = (self.len(), self.num_tags);
        let mut beta = vec![0.0; n * t];
        if n == 0 {
            return beta;
        }
        beta[(n - 1) * t..].copy_from_slice(self.stop);
        let mut scratch = vec![0.0; t];
        for i in (0..n - 1).rev() {
            for y in 0..t {
                for (nx, s) in scratch.iter_mut().enumerate() {
                    *s = self.trans(y, nx) + self.emit(i + 1, nx) + beta[(i + 1) * t + nx];
                }
                beta[i * t + y] = log_sum_exp(scratch.iter().copied());
            }
        }
        beta
    }

    pub fn log_partition(&self) -> f64 {
        self.forward().1
    }

    pub fn marginals(&self) -> Marginals {
        let (n, t) = (self.len(), self.num_tags);
        let (alpha, log_z) = self.forward();
        let beta = self.backward();
        let node = alpha
            .iter()
            .zip(&beta)
            .map(|(a, b)| (a + b - log_z).exp())
            .collect();
        let mut edge = vec![0.0; n.saturating_sub(1) * t * t];
        for i in 1..n {
            for p in 0..t {
                for y in 0..t {
                    let lp = alpha[(i - 1) * t + p] + self.trans(p, y) + self.emit(i, y)
                        + beta[i * t + y]
                        - log_z;
                    edge[(i - 1) * t * t + p * t + y] = lp.exp();
                }
            }
        }
        Marginals {
            node,
            edge,
            log_partition: log_z,
        }
    }

    /// Max-scoring path and its score. On ties the lowest tag index wins, both
    /// for backpointers and for the final tag.
    pub fn viterbi(&self) -> (Vec<usize>, f64) {
        let (n, t) = (self.len(), self.num_tags);
        if n == 0 {
            return (Vec::new(), 0.0);
        }
        let mut delta = vec![0.0; n * t];
        let mut back = vec![0usize; n * t];
        for y in 0..t {
            delta[y] = self.start[y] + self.emit(0, y);
        }
        for i in 1..n {
            for y in 0..t {
                let mut best = 0;
                let mut best_score = f64::NEG_INFINITY;
                for p in 0..t {
                    let s = delta[(i - 1) * t + p] + self.trans(p, y);
                    if s > best_score {
                        best_score = s;
                        best = p;
                    }
                }
                delta[i * t + y] = best_score + self.emit(i, y);
                back[i * t + y] = best;
            }
        }
        let mut last = 0;
        let mut best_score = f64::NEG_INFINITY;
        for y in 0..t {
            let s = delta[(n - 1) * t + y] + self.stop[y];
            if s > best_score {
                best_score = s;
                last = y;
            }
        }
        let mut path = vec![0; n];
        path[n - 1] = last;
        for i in (1..n).rev() {
            path[i - 1] = back[i * t + path[i]];
        }
        (path, best_score)
    }
}
