//! Lawson-Hanson nonnegative least squares, `min ||C w - b||` over `w >= 0`.
//!
//! Used to find sign-correct multipliers for a degenerate active set, where
//! the regularised KKT solve returns a minimum-norm dual that may carry the
//! wrong signs even though valid ones exist. Columns are sparse constraint
//! rows, and the passive-set normal equations are kept as an incrementally
//! extended Cholesky factor.

/// Columns whose remaining norm after projection falls below this fraction
/// of their own norm are treated as dependent on the passive set.
const DEPENDENT: f64 = 1e-10;

/// Sparse column with strictly increasing indices.
pub(super) struct Column {
    pub idx: Vec<usize>,
    pub val: Vec<f64>,
}

impl Column {
    fn dot_dense(&self, x: &[f64]) -> f64 {
        self.idx.iter().zip(&self.val).map(|(&i, v)| v * x[i]).sum()
    }

    fn dot(&self, other: &Column) -> f64 {
        let (mut a, mut b, mut sum) = (0, 0, 0.0);
        while a < self.idx.len() && b < other.idx.len() {
            match self.idx[a].cmp(&other.idx[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    sum += self.val[a] * other.val[b];
                    a += 1;
                    b += 1;
                }
            }
        }
        sum
    }
}

struct Factor {
    /// Passive columns in factor order.
    cols: Vec<usize>,
    /// Row-major lower triangle, row `i` has `i + 1` entries.
    rows: Vec<Vec<f64>>,
}

impl Factor {
    fn new() -> Self {
        Self {
            cols: Vec::new(),
            rows: Vec::new(),
        }
    }

    /// Appends column `j`; false when it is numerically dependent.
    fn push(&mut self, j: usize, gram: &dyn Fn(usize, usize) -> f64) -> bool {
        let k = self.cols.len();
        let mut l = vec![0.0; k + 1];
        for i in 0..k {
            let mut v = gram(self.cols[i], j);
            for t in 0..i {
                v -= self.rows[i][t] * l[t];
            }
            l[i] = v / self.rows[i][i];
        }
        let cjj = gram(j, j);
        let d = cjj - l[..k].iter().map(|v| v * v).sum::<f64>();
        if d <= DEPENDENT * cjj {
            return false;
        }
        l[k] = d.sqrt();
        self.cols.push(j);
        self.rows.push(l);
        true
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let k = self.cols.len();
        let mut z = rhs.to_vec();
        for i in 0..k {
            for t in 0..i {
                z[i] -= self.rows[i][t] * z[t];
            }
            z[i] /= self.rows[i][i];
        }
        for i in (0..k).rev() {
            for t in i + 1..k {
                z[i] -= self.rows[t][i] * z[t];
            }
            z[i] /= self.rows[i][i];
        }
        z
    }
}

/// Returns `w >= 0` minimising `||C w - b||` where `cols[j]` is column `j`.
pub(super) fn nnls(cols: &[Column], b: &[f64], max_iter: usize) -> Vec<f64> {
    let k = cols.len();
    let gram = |i: usize, j: usize| cols[i].dot(&cols[j]);
    let ctb: Vec<f64> = cols.iter().map(|c| c.dot_dense(b)).collect();
    let b_norm = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * (1.0 + b_norm) * cols.iter().map(|c| c.dot(c).sqrt()).fold(1.0, f64::max);

    let mut w = vec![0.0; k];
    let mut passive = vec![false; k];
    let mut factor = Factor::new();
    let mut blocked = vec![false; k];
    let mut r = b.to_vec();
    for _ in 0..max_iter {
        let mut best = None;
        let mut best_grad = tol;
        for j in 0..k {
            if blocked[j] || passive[j] {
                continue;
            }
            let g = cols[j].dot_dense(&r);
            if g > best_grad {
                best_grad = g;
                best = Some(j);
            }
        }
        let Some(j) = best else { break };
        if !factor.push(j, &gram) {
            blocked[j] = true;
            continue;
        }
        passive[j] = true;

        loop {
            let rhs: Vec<f64> = factor.cols.iter().map(|&c| ctb[c]).collect();
            let z = factor.solve(&rhs);
            if z.iter().all(|&v| v > 0.0) {
                for (&c, &v) in factor.cols.iter().zip(&z) {
                    w[c] = v;
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            let mut blocking = j;
            for (&c, &v) in factor.cols.iter().zip(&z) {
                if v <= 0.0 && w[c] / (w[c] - v) < alpha {
                    alpha = w[c] / (w[c] - v);
                    blocking = c;
                }
            }
            for (&c, &v) in factor.cols.iter().zip(&z) {
                w[c] += alpha * (v - w[c]);
            }
            w[blocking] = 0.0;
            let w_max = factor.cols.iter().map(|&c| w[c]).fold(0.0, f64::max);
            let old = std::mem::replace(&mut factor, Factor::new());
            for c in old.cols {
                passive[c] = false;
                if w[c] > 1e-14 * w_max && factor.push(c, &gram) {
                    passive[c] = true;
                } else {
                    w[c] = 0.0;
                    if c == j {
                        blocked[j] = true;
                    }
                }
            }
            if factor.cols.is_empty() {
                break;
            }
        }

        if passive[j] {
            blocked.fill(false);
        }
        r.copy_from_slice(b);
        for (c, &wc) in cols.iter().zip(&w) {
            if wc != 0.0 {
                for (&i, v) in c.idx.iter().zip(&c.val) {
                    r[i] -= wc * v;
                }
            }
        }
    }
    w
}
