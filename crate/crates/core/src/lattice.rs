//! Two-axis "top-m" union sums.
//!
//! Each point carries a position on axis 1 and on axis 2 (1-based; `OUT`
//! when it never enters) and an integer weight. For every pair `(m1, m2)`
//! the sweep reports
//!
//! ```text
//! W(m1, m2) = sum of w_i over { i : a_i <= m1 or b_i <= m2 }
//! ```
//!
//! row by row in `O(m1_max * m2_max + points)` time and `O(m2_max)` memory.
//! With unit weights and positions equal to descending ranks this is
//! `k * l_n` on the whole `1/k` lattice; with Rademacher signs it is the
//! signed sum over every set of the rectangle-complement class.

pub(crate) const OUT: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
pub(crate) struct AxisPoint {
    pub a: u32,
    pub b: u32,
    pub w: i64,
}

/// Calls `visit(m1, row)` for `m1 = 0..=m1_max`, where `row[m2] = W(m1, m2)`.
pub(crate) fn union_sweep(
    points: &[AxisPoint],
    m1_max: usize,
    m2_max: usize,
    mut visit: impl FnMut(usize, &[i64]),
) {
    // weight added to P2 / the column counters when b <= m2_max
    let mut p2 = vec![0i64; m2_max + 1];
    let mut by_a: Vec<Vec<(u32, i64)>> = vec![Vec::new(); m1_max + 1];
    for p in points {
        if p.b != OUT && (p.b as usize) <= m2_max {
            p2[p.b as usize] += p.w;
        }
        if p.a != OUT && (p.a as usize) <= m1_max && p.a > 0 {
            by_a[p.a as usize].push((p.b, p.w));
        }
    }
    for m2 in 1..=m2_max {
        p2[m2] += p2[m2 - 1];
    }

    let mut col = vec![0i64; m2_max + 1];
    let mut row = vec![0i64; m2_max + 1];
    let mut p1 = 0i64;
    for (m1, entering) in by_a.iter().enumerate() {
        for &(b, w) in entering {
            p1 += w;
            if b != OUT && (b as usize) <= m2_max {
                col[b as usize] += w;
            }
        }
        let mut joint = 0i64;
        for m2 in 0..=m2_max {
            joint += col[m2];
            row[m2] = p1 + p2[m2] - joint;
        }
        visit(m1, &row);
    }
}
