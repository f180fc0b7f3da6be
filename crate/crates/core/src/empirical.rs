//! Ranks, order statistics and the two empirical tail functionals.
//!
//! * [`empirical_stdf`] is the rank estimator
//!   `l_n(x) = (1/k) #{ i : X_i^1 >= X^1_(n-[k x_1]+1) or ... or X_i^d >= X^d_(n-[k x_d]+1) }`,
//!   with the convention that a coordinate with `[k x_j] = 0` adds no condition.
//! * [`empirical_tilde_f`] is `F~_n(x) = (1/n) #{ i : U_i^1 <= x_1 or ... }` on
//!   standardized data.
//! * [`lemma1_rhs`] evaluates `(n/k) F~_n(U^1_([k x_1]), ..., U^d_([k x_d]))`,
//!   which coincides with `l_n(x)` whenever the standardized variables are a
//!   strictly decreasing transform of the observations.
//!
//! Order statistics are ascending: `Y_(1) <= ... <= Y_(n)`.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::lattice::{union_sweep, AxisPoint, OUT};
use crate::margins::{MarginRef, MarginRegistry, MarginSpec};
use crate::rng::derive_stream;
use crate::sample::{Provenance, Sample};

/// Immutable rank view of a tie-free sample.
#[derive(Debug, Clone)]
pub struct RankState {
    n: usize,
    d: usize,
    columns: Vec<Vec<f64>>,
    order: Vec<Vec<f64>>,
    /// `ranks[j][i]`: 1-based ascending rank of `X_i^j`.
    ranks: Vec<Vec<u32>>,
    /// `desc[j][m]`: row holding the `(m+1)`-th largest value of column `j`.
    desc: Vec<Vec<u32>>,
}

/// Sorts every column, assigns ranks, and rejects ties.
///
/// Tie errors report 1-based column and row numbers.
pub fn build_ranks(sample: &Sample) -> Result<RankState> {
    let (n, d) = (sample.n(), sample.d());
    if n > u32::MAX as usize - 1 {
        return Err(Error::data("sample too large for 32-bit ranks"));
    }
    let mut columns = Vec::with_capacity(d);
    let mut order = Vec::with_capacity(d);
    let mut ranks = Vec::with_capacity(d);
    let mut desc = Vec::with_capacity(d);
    for j in 0..d {
        let col = sample.column(j);
        let mut idx: Vec<u32> = (0..n as u32).collect();
        idx.sort_unstable_by(|a, b| col[*a as usize].total_cmp(&col[*b as usize]));
        for w in idx.windows(2) {
            let (lo, hi) = (w[0] as usize, w[1] as usize);
            if col[lo] == col[hi] {
                let (first, second) = (lo.min(hi) + 1, lo.max(hi) + 1);
                return Err(Error::Tie {
                    column: j + 1,
                    first,
                    second,
                    value: col[lo],
                });
            }
        }
        let mut r = vec![0u32; n];
        for (pos, &row) in idx.iter().enumerate() {
            r[row as usize] = pos as u32 + 1;
        }
        order.push(idx.iter().map(|&i| col[i as usize]).collect());
        desc.push(idx.iter().rev().copied().collect());
        ranks.push(r);
        columns.push(col);
    }
    Ok(RankState {
        n,
        d,
        columns,
        order,
        ranks,
        desc,
    })
}

impl RankState {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// 1-based ascending rank of observation `i` in column `j`.
    pub fn rank(&self, i: usize, j: usize) -> usize {
        self.ranks[j][i] as usize
    }

    /// Ascending order statistics of column `j`.
    pub fn order_statistics(&self, j: usize) -> &[f64] {
        &self.order[j]
    }

    /// Rows of the `m` largest values of column `j`, largest first.
    pub fn top_rows(&self, j: usize, m: usize) -> &[u32] {
        &self.desc[j][..m]
    }

    /// Visits `k * l_n` on the lattice `m_1 = 0..=m_max[0]`, `m_2 = 0..=m_max[1]`.
    ///
    /// `visit(m1, row)` receives `row[m2] = #{ i : X_i^1 in top m1 or X_i^2 in top m2 }`.
    /// One-dimensional samples get a single column (`m2 = 0`).
    pub fn for_each_lattice_count(&self, m_max: [usize; 2], mut visit: impl FnMut(usize, &[i64])) -> Result<()> {
        if self.d > 2 {
            return Err(Error::config("lattice sweep is exact only for d <= 2; use a grid"));
        }
        let m2_cap = if self.d == 2 { m_max[1] } else { 0 };
        if m_max[0] > self.n || m2_cap > self.n {
            return Err(Error::domain(format!(
                "lattice index {} exceeds n = {}",
                m_max[0].max(m2_cap),
                self.n
            )));
        }
        let mut pos_b = vec![OUT; self.n];
        if self.d == 2 {
            for (m, &row) in self.desc[1][..m2_cap].iter().enumerate() {
                pos_b[row as usize] = m as u32 + 1;
            }
        }
        let mut points = Vec::with_capacity(m_max[0] + m2_cap);
        let mut seen = vec![false; self.n];
        for (m, &row) in self.desc[0][..m_max[0]].iter().enumerate() {
            points.push(AxisPoint {
                a: m as u32 + 1,
                b: pos_b[row as usize],
                w: 1,
            });
            seen[row as usize] = true;
        }
        if self.d == 2 {
            for (m, &row) in self.desc[1][..m2_cap].iter().enumerate() {
                if !seen[row as usize] {
                    points.push(AxisPoint {
                        a: OUT,
                        b: m as u32 + 1,
                        w: 1,
                    });
                }
            }
        }
        union_sweep(&points, m_max[0], m2_cap, |m1, row| visit(m1, row));
        Ok(())
    }

    /// Number of rows with at least one coordinate among the top `m_j` of its column.
    pub fn union_count(&self, m: &[usize]) -> usize {
        let cut: Vec<u32> = m.iter().map(|&mj| (self.n - mj) as u32).collect();
        (0..self.n)
            .filter(|&i| (0..self.d).any(|j| m[j] > 0 && self.ranks[j][i] > cut[j]))
            .count()
    }
}

/// A point of `[0, inf)^d`; coordinates count order statistics in units of `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TailPoint(Vec<f64>);

impl TailPoint {
    pub fn new(x: Vec<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::domain("tail point needs at least one coordinate"));
        }
        if let Some(v) = x.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::domain(format!("tail point coordinates must be finite and >= 0 (got {v})")));
        }
        Ok(TailPoint(x))
    }

    /// The lattice point `(m_1 / k, ..., m_d / k)`.
    pub fn lattice(m: &[usize], k: usize) -> Self {
        TailPoint(m.iter().map(|&mj| mj as f64 / k as f64).collect())
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `[k x_j]` for each coordinate.
    pub fn lattice_indices(&self, k: usize) -> Vec<usize> {
        self.0.iter().map(|&x| lattice_index(k, x)).collect()
    }
}

/// `floor(k * x)`, robust to `x = m / k` landing one ulp below the lattice point.
pub fn lattice_index(k: usize, x: f64) -> usize {
    let kf = k as f64;
    let m = (kf * x).floor();
    if ((m + 1.0) / kf) <= x {
        (m + 1.0) as usize
    } else {
        m as usize
    }
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::domain(format!("k must satisfy 1 <= k <= n = {n} (got {k})")));
    }
    Ok(())
}

fn lattice_for(x: &TailPoint, k: usize, n: usize, d: usize) -> Result<Vec<usize>> {
    check_k(k, n)?;
    if x.dim() != d {
        return Err(Error::domain(format!("tail point has {} coordinates, sample has {d}", x.dim())));
    }
    let m = x.lattice_indices(k);
    if let Some((j, mj)) = m.iter().enumerate().find(|(_, mj)| **mj > n) {
        return Err(Error::domain(format!(
            "[k x_{}] = {mj} exceeds n = {n}; the threshold order statistic does not exist",
            j + 1
        )));
    }
    Ok(m)
}

/// `k * l_n(x)`: the exceedance count behind [`empirical_stdf`].
pub fn empirical_stdf_count(ranks: &RankState, k: usize, x: &TailPoint) -> Result<usize> {
    let n = ranks.n;
    let m = lattice_for(x, k, n, ranks.d)?;
    let thresholds: Vec<Option<f64>> = m
        .iter()
        .enumerate()
        .map(|(j, &mj)| (mj > 0).then(|| ranks.order[j][n - mj]))
        .collect();
    let count = (0..n)
        .filter(|&i| {
            thresholds
                .iter()
                .enumerate()
                .any(|(j, thr)| thr.is_some_and(|t| ranks.columns[j][i] >= t))
        })
        .count();
    Ok(count)
}

/// Rank estimator of the stable tail dependence function at `x`.
pub fn empirical_stdf(ranks: &RankState, k: usize, x: &TailPoint) -> Result<f64> {
    Ok(empirical_stdf_count(ranks, k, x)? as f64 / k as f64)
}

/// Standardized sample `U = 1 - F(X)`, entries in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct PseudoUniformSample {
    n: usize,
    d: usize,
    values: Vec<f64>,
    sorted: Vec<Vec<f64>>,
}

impl PseudoUniformSample {
    pub fn from_flat(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 || values.len() != n * d {
            return Err(Error::data(format!(
                "{} values cannot form a non-empty {n} x {d} matrix",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::data(format!("pseudo-uniform value {v} outside [0, 1]")));
        }
        let sorted = (0..d)
            .map(|j| {
                let mut col: Vec<f64> = values.iter().skip(j).step_by(d).copied().collect();
                col.sort_unstable_by(f64::total_cmp);
                col
            })
            .collect();
        Ok(PseudoUniformSample { n, d, values, sorted })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::data("ragged pseudo-uniform rows"));
        }
        Self::from_flat(rows.len(), d, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.d)
    }

    /// Ascending order statistics of column `j`.
    pub fn order_statistics(&self, j: usize) -> &[f64] {
        &self.sorted[j]
    }

    /// `U^j_(m)`, with `U^j_(0) := 0`.
    pub fn order_statistic(&self, j: usize, m: usize) -> f64 {
        if m == 0 {
            0.0
        } else {
            self.sorted[j][m - 1]
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Applies the true margins: `U_i^j = 1 - F_j(X_i^j)`.
pub fn standardize(sample: &Sample, true_margins: &[MarginRef]) -> Result<PseudoUniformSample> {
    if true_margins.len() != sample.d() {
        return Err(Error::config(format!(
            "{} margins for a sample with {} columns",
            true_margins.len(),
            sample.d()
        )));
    }
    let d = sample.d();
    let values = sample
        .values()
        .iter()
        .enumerate()
        .map(|(idx, x)| true_margins[idx % d].survival(*x).clamp(0.0, 1.0))
        .collect();
    PseudoUniformSample::from_flat(sample.n(), d, values)
}

/// [`standardize`] from margin tags; unknown tags are configuration errors.
pub fn standardize_tags(sample: &Sample, tags: &[MarginSpec], registry: &MarginRegistry) -> Result<PseudoUniformSample> {
    let margins = registry.build_all(tags, sample.d())?;
    standardize(sample, &margins)
}

/// `n * F~_n(x)`.
pub fn empirical_tilde_f_count(u: &PseudoUniformSample, x: &[f64]) -> Result<usize> {
    if x.len() != u.d {
        return Err(Error::domain(format!("point has {} coordinates, sample has {}", x.len(), u.d)));
    }
    if let Some(v) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::domain(format!("F~_n is evaluated on [0, 1]^d (got coordinate {v})")));
    }
    Ok(u.rows()
        .filter(|row| row.iter().zip(x).any(|(ui, xi)| ui <= xi))
        .count())
}

/// Fraction of rows with some coordinate at or below its threshold.
pub fn empirical_tilde_f(u: &PseudoUniformSample, x: &[f64]) -> Result<f64> {
    Ok(empirical_tilde_f_count(u, x)? as f64 / u.n as f64)
}

/// `k * (n/k) F~_n(U^1_([k x_1]), ..., U^d_([k x_d]))`, an integer count.
pub fn lemma1_rhs_count(ranks: &RankState, u: &PseudoUniformSample, k: usize, x: &TailPoint) -> Result<usize> {
    if u.n != ranks.n || u.d != ranks.d {
        return Err(Error::data(format!(
            "pseudo-uniform sample is {} x {}, ranks are {} x {}",
            u.n, u.d, ranks.n, ranks.d
        )));
    }
    let m = lattice_for(x, k, ranks.n, ranks.d)?;
    let thresholds: Vec<f64> = m
        .iter()
        .enumerate()
        .map(|(j, &mj)| u.order_statistic(j, mj))
        .collect();
    empirical_tilde_f_count(u, &thresholds)
}

/// `(n/k) F~_n` at the empirical order statistics of `U`.
pub fn lemma1_rhs(ranks: &RankState, u: &PseudoUniformSample, k: usize, x: &TailPoint) -> Result<f64> {
    Ok(lemma1_rhs_count(ranks, u, k, x)? as f64 / k as f64)
}

/// Breaks exact ties by spreading each tied group over a sliver of the gap
/// to the next distinct value, in a seeded random order. For real data only;
/// synthetic continuous samples never need it.
pub fn jitter_ties(sample: &Sample, seed: u64) -> Result<Sample> {
    let (n, d) = (sample.n(), sample.d());
    let mut values = sample.values().to_vec();
    let mut rng = derive_stream(seed, 0, "jitter");
    for j in 0..d {
        let col = sample.column(j);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|a, b| col[*a].total_cmp(&col[*b]));
        let mut start = 0;
        while start < n {
            let v = col[idx[start]];
            let mut end = start + 1;
            while end < n && col[idx[end]] == v {
                end += 1;
            }
            if end - start > 1 {
                let gap = if end < n {
                    col[idx[end]] - v
                } else {
                    v.abs().max(1.0) * 1e-9
                };
                let group = &mut idx[start..end];
                group.shuffle(&mut rng);
                let len = group.len() as f64;
                for (pos, &row) in group.iter().enumerate() {
                    values[row * d + j] = v + gap * 1e-3 * pos as f64 / len;
                }
            }
            start = end;
        }
    }
    Sample::from_flat(n, d, values, Provenance::Derived("jittered".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::margins::{Exponential, Uniform};
    use crate::model::ModelSpec;
    use crate::sample::{generate, GeneratorSpec};
    use std::sync::Arc;

    fn sample(rows: &[[f64; 2]]) -> Sample {
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        Sample::from_rows(&rows, Provenance::Derived("test".into())).unwrap()
    }

    #[test]
    fn ranks_of_small_columns() {
        let s = Sample::from_rows(&[vec![3.0], vec![1.0], vec![2.0]], Provenance::Derived("t".into())).unwrap();
        let r = build_ranks(&s).unwrap();
        assert_eq!((0..3).map(|i| r.rank(i, 0)).collect::<Vec<_>>(), vec![3, 1, 2]);
        assert_eq!(r.order_statistics(0), &[1.0, 2.0, 3.0]);

        let sorted = Sample::from_rows(&[vec![1.0], vec![2.0], vec![5.0]], Provenance::Derived("t".into())).unwrap();
        let r = build_ranks(&sorted).unwrap();
        assert_eq!((0..3).map(|i| r.rank(i, 0)).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn ties_are_rejected_with_location() {
        let s = sample(&[[1.0, 5.0], [2.0, 4.0], [3.0, 4.0]]);
        match build_ranks(&s) {
            Err(Error::Tie { column, first, second, .. }) => {
                assert_eq!((column, first, second), (2, 2, 3));
            }
            other => panic!("expected tie error, got {other:?}"),
        }
        let fixed = jitter_ties(&s, 1).unwrap();
        assert!(build_ranks(&fixed).is_ok());
    }

    #[test]
    fn antimonotone_example() {
        let s = sample(&[[1.0, 5.0], [2.0, 4.0], [3.0, 3.0], [4.0, 2.0], [5.0, 1.0]]);
        let r = build_ranks(&s).unwrap();
        let x = TailPoint::new(vec![1.0, 1.0]).unwrap();
        assert_eq!(empirical_stdf(&r, 2, &x).unwrap(), 2.0);
        let zero = TailPoint::new(vec![0.0, 0.0]).unwrap();
        assert_eq!(empirical_stdf(&r, 2, &zero).unwrap(), 0.0);

        // 1 - X is a strictly decreasing standardization
        let u = PseudoUniformSample::from_rows(
            &s.rows().map(|r| r.iter().map(|v| 1.0 - v / 10.0).collect()).collect::<Vec<_>>(),
        )
        .unwrap();
        assert_eq!(lemma1_rhs(&r, &u, 2, &x).unwrap(), 2.0);
        assert_eq!(lemma1_rhs(&r, &u, 2, &zero).unwrap(), 0.0);
    }

    #[test]
    fn comonotone_lower_bound_is_attained() {
        let spec = GeneratorSpec::new(ModelSpec::comonotone(), 100, 2, 5);
        let r = build_ranks(&generate(&spec).unwrap()).unwrap();
        for k in [1, 7, 10, 50] {
            let x = TailPoint::new(vec![1.0, 1.0]).unwrap();
            assert_eq!(empirical_stdf_count(&r, k, &x).unwrap(), k);
        }
    }

    #[test]
    fn domain_errors() {
        let s = sample(&[[1.0, 5.0], [2.0, 4.0], [3.0, 3.0]]);
        let r = build_ranks(&s).unwrap();
        assert!(empirical_stdf(&r, 2, &TailPoint::new(vec![2.0, 0.0]).unwrap()).unwrap_err().is_precondition());
        assert!(empirical_stdf(&r, 0, &TailPoint::new(vec![0.0, 0.0]).unwrap()).is_err());
        assert!(empirical_stdf(&r, 4, &TailPoint::new(vec![0.0, 0.0]).unwrap()).is_err());
        assert!(empirical_stdf(&r, 2, &TailPoint::new(vec![0.5]).unwrap()).is_err());
        assert!(TailPoint::new(vec![-0.1]).is_err());
    }

    #[test]
    fn tilde_f_counts() {
        let u = PseudoUniformSample::from_rows(&[vec![0.1, 0.9], vec![0.5, 0.2], vec![0.8, 0.8]]).unwrap();
        assert_eq!(empirical_tilde_f(&u, &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(empirical_tilde_f(&u, &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(empirical_tilde_f_count(&u, &[0.4, 0.3]).unwrap(), 2);
        assert!(empirical_tilde_f(&u, &[1.2, 0.0]).unwrap_err().is_precondition());
    }

    #[test]
    fn standardization() {
        let s = sample(&[[0.25, 0.5], [0.75, 0.125]]);
        let u = standardize(&s, &[Arc::new(Uniform), Arc::new(Uniform)]).unwrap();
        assert_eq!(u.values(), &[0.75, 0.5, 0.25, 0.875]);
        let v = 0.3_f64;
        let x = -(-v).ln_1p();
        let e = Sample::from_rows(&[vec![x]], Provenance::Derived("t".into())).unwrap();
        let u = standardize(&e, &[Arc::new(Exponential)]).unwrap();
        assert!((u.values()[0] - (1.0 - v)).abs() < 1e-15);
        assert!(matches!(
            standardize_tags(&e, &["gamma".parse().unwrap()], &MarginRegistry::builtin()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn lattice_counts_match_direct_counts() {
        let spec = GeneratorSpec::new(ModelSpec::logistic(1.7), 60, 2, 11);
        let r = build_ranks(&generate(&spec).unwrap()).unwrap();
        let k = 9;
        r.for_each_lattice_count([25, 30], |m1, row| {
            for (m2, c) in row.iter().enumerate() {
                let x = TailPoint::lattice(&[m1, m2], k);
                assert_eq!(*c as usize, empirical_stdf_count(&r, k, &x).unwrap());
                assert_eq!(*c as usize, r.union_count(&[m1, m2]));
            }
        })
        .unwrap();
    }

    #[test]
    fn lattice_index_is_exact_on_lattice_points() {
        for k in 1..200 {
            for m in 0..400 {
                assert_eq!(lattice_index(k, m as f64 / k as f64), m);
            }
        }
        assert_eq!(lattice_index(10, 0.15), 1);
    }
}
