//! Small dense linear-algebra helpers shared by the physics modules.

use nalgebra::DMatrix;

use crate::C64;

pub type CMat = DMatrix<C64>;
pub type RMat = DMatrix<f64>;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Largest element-wise deviation `max |A − A†|`.
pub fn hermiticity_deviation(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

/// Block-diagonal matrix from square blocks.
pub fn block_diag(blocks: &[&CMat]) -> CMat {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMat::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        let k = b.nrows();
        out.view_mut((off, off), (k, k)).copy_from(b);
        off += k;
    }
    out
}

/// Maximum-weight perfect matching on a square weight matrix by DP over
/// subsets. `forbidden[(r, c)]` excludes an edge. Returns the column assigned
/// to each row and the total weight, or `None` if no matching exists.
pub fn best_assignment(w: &RMat, forbidden: Option<(usize, usize)>) -> Option<(Vec<usize>, f64)> {
    let n = w.nrows();
    assert_eq!(n, w.ncols());
    assert!(n <= 16, "assignment DP is exponential in n");
    let full = 1usize << n;
    let mut best = vec![f64::NEG_INFINITY; full];
    let mut choice = vec![usize::MAX; full];
    best[0] = 0.0;
    for mask in 0..full {
        if best[mask] == f64::NEG_INFINITY {
            continue;
        }
        let row = mask.count_ones() as usize;
        if row == n {
            continue;
        }
        for col in 0..n {
            if mask & (1 << col) != 0 || forbidden == Some((row, col)) {
                continue;
            }
            let next = mask | (1 << col);
            let val = best[mask] + w[(row, col)];
            // strict comparison keeps the lowest column on ties, which makes the
            // result deterministic
            if val > best[next] {
                best[next] = val;
                choice[next] = col;
            }
        }
    }
    if best[full - 1] == f64::NEG_INFINITY {
        return None;
    }
    let mut cols = vec![0; n];
    let mut mask = full - 1;
    for row in (0..n).rev() {
        let col = choice[mask];
        cols[row] = col;
        mask &= !(1 << col);
    }
    Some((cols, best[full - 1]))
}

/// Best assignment together with the runner-up total weight (the best
/// matching that differs from the optimum in at least one edge).
pub fn assignment_with_margin(w: &RMat) -> (Vec<usize>, f64, f64) {
    let (cols, total) = best_assignment(w, None).expect("complete bipartite graph");
    let mut second = f64::NEG_INFINITY;
    for (row, &col) in cols.iter().enumerate() {
        if let Some((_, t)) = best_assignment(w, Some((row, col))) {
            second = second.max(t);
        }
    }
    (cols, total, second)
}
