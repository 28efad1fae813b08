//! Indexing helpers for pairs of series.

/// Hypothesis pairs `(i, l)` with `i > l`, ordered `(1,0), (2,0), (2,1), (3,0), ...`.
pub fn hypothesis_pairs(p: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(p * p.saturating_sub(1) / 2);
    for i in 1..p {
        for l in 0..i {
            out.push((i, l));
        }
    }
    out
}

pub fn hypothesis_count(p: usize) -> usize {
    p * p.saturating_sub(1) / 2
}

/// Position of `(i, l)`, in either order, within [`hypothesis_pairs`].
pub fn hypothesis_index(i: usize, l: usize) -> usize {
    let (i, l) = if i > l { (i, l) } else { (l, i) };
    debug_assert!(i > l);
    i * (i - 1) / 2 + l
}

/// Inverse of [`hypothesis_index`].
pub fn hypothesis_pair_at(k: usize) -> (usize, usize) {
    let mut i = (((8 * k + 1) as f64).sqrt() as usize + 1) / 2;
    while i * (i - 1) / 2 > k {
        i -= 1;
    }
    while (i + 1) * i / 2 <= k {
        i += 1;
    }
    (i, k - i * (i - 1) / 2)
}

/// Position of `(i, l)` in the lower triangle including the diagonal.
pub fn tri_index(i: usize, l: usize) -> usize {
    let (i, l) = if i >= l { (i, l) } else { (l, i) };
    i * (i + 1) / 2 + l
}

pub fn tri_count(p: usize) -> usize {
    p * (p + 1) / 2
}

/// Lower-triangle pairs `(i, l)` with `i >= l`, in [`tri_index`] order.
pub fn tri_pairs(p: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(tri_count(p));
    for i in 0..p {
        for l in 0..=i {
            out.push((i, l));
        }
    }
    out
}
