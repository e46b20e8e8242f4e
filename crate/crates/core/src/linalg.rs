//! Small dense linear algebra helpers: complex eigenvalues, null vectors,
//! exterior powers (compound matrices) and wedge pairings.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub fn to_complex(m: &DMatrix<f64>) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Eigenvalues of a complex matrix via the complex Schur form.
pub fn eigenvalues(m: &CMat) -> Result<Vec<Complex64>> {
    let n = m.nrows();
    if n == 1 {
        return Ok(vec![m[(0, 0)]]);
    }
    if n == 2 {
        let tr = m[(0, 0)] + m[(1, 1)];
        let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        let disc = (tr * tr - 4.0 * det).sqrt();
        let (a, b) = ((tr + disc) * 0.5, (tr - disc) * 0.5);
        // recompute the smaller root from the product to avoid cancellation
        let (a, b) = if a.norm() >= b.norm() {
            (a, if a.norm() > 0.0 { det / a } else { b })
        } else {
            (if b.norm() > 0.0 { det / b } else { a }, b)
        };
        return Ok(vec![a, b]);
    }
    let schur = Schur::try_new(m.clone(), 1e-15, 10_000)
        .ok_or_else(|| Error::Resolution("Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok((0..n).map(|i| t[(i, i)]).collect())
}

/// Eigenvalues of a real matrix, returned as complex numbers.
pub fn eigenvalues_real(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    eigenvalues(&to_complex(m))
}

/// Unit vector spanning (approximately) the kernel of `m - mu I`.
pub fn null_vector(m: &CMat, mu: Complex64) -> CVec {
    let n = m.nrows();
    let shifted = m - CMat::identity(n, n) * mu;
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let (imin, _) =
        svd.singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    v_t.row(imin).adjoint().normalize()
}

/// 2-norm condition number.
pub fn condition_number(m: &CMat) -> f64 {
    let sv = m.singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Condition number of the eigenvector matrix; large values signal a
/// defective (non-semisimple) matrix.
pub fn eigenvector_condition(m: &CMat) -> Result<f64> {
    let ev = eigenvalues(m)?;
    let n = m.nrows();
    let mut v = CMat::zeros(n, n);
    for (j, mu) in ev.iter().enumerate() {
        v.set_column(j, &null_vector(m, *mu));
    }
    Ok(condition_number(&v))
}

/// Lexicographically ordered k-subsets of {0..m-1}.
pub fn subsets(m: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            cur.push(i);
            rec(i + 1, m, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, m, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Index of a sorted subset in `subsets(m, k)` order.
fn subset_index(basis: &[Vec<usize>], s: &[usize]) -> usize {
    basis.binary_search_by(|b| b.as_slice().cmp(s)).expect("subset present")
}

/// Sorts `idx` in place, returning the permutation sign, or `None` when an
/// index repeats.
fn sort_sign(idx: &mut [usize]) -> Option<f64> {
    let mut sign = 1.0;
    for i in 1..idx.len() {
        let mut j = i;
        while j > 0 && idx[j - 1] > idx[j] {
            idx.swap(j - 1, j);
            sign = -sign;
            j -= 1;
        }
    }
    if idx.windows(2).any(|w| w[0] == w[1]) {
        None
    } else {
        Some(sign)
    }
}

/// Precomputed sparsity pattern of the k-th additive compound of an m×m
/// matrix: entry `(row, col, i, j, sign)` means
/// `M^(k)[row, col] += sign * M[i, j]`.
#[derive(Debug, Clone)]
pub struct CompoundPattern {
    pub m: usize,
    pub k: usize,
    pub basis: Vec<Vec<usize>>,
    terms: Vec<(usize, usize, usize, usize, f64)>,
}

impl CompoundPattern {
    pub fn new(m: usize, k: usize) -> Self {
        let basis = subsets(m, k);
        let mut terms = Vec::new();
        for (col, s) in basis.iter().enumerate() {
            for pos in 0..k {
                let j = s[pos];
                for i in 0..m {
                    let mut t = s.clone();
                    t[pos] = i;
                    if let Some(sign) = sort_sign(&mut t) {
                        let row = subset_index(&basis, &t);
                        terms.push((row, col, i, j, sign));
                    }
                }
            }
        }
        Self { m, k, basis, terms }
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn apply(&self, a: &CMat) -> CMat {
        let d = self.dim();
        let mut out = CMat::zeros(d, d);
        for &(row, col, i, j, sign) in &self.terms {
            out[(row, col)] += a[(i, j)] * sign;
        }
        out
    }

    /// Wedge product v₁ ∧ … ∧ v_k in the subset basis (k×k minors).
    pub fn wedge(&self, vs: &[CVec]) -> CVec {
        assert_eq!(vs.len(), self.k);
        let k = self.k;
        CVec::from_iterator(
            self.dim(),
            self.basis.iter().map(|rows| {
                let minor = CMat::from_fn(k, k, |r, c| vs[c][rows[r]]);
                minor.determinant()
            }),
        )
    }
}

/// Scalar top-degree pairing ω_a ∧ ω_b for ω_a ∈ Λ^ka, ω_b ∈ Λ^(m−ka).
pub fn wedge_pair(pa: &CompoundPattern, a: &CVec, pb: &CompoundPattern, b: &CVec) -> Complex64 {
    assert_eq!(pa.m, pb.m);
    assert_eq!(pa.k + pb.k, pa.m);
    let mut acc = Complex64::new(0.0, 0.0);
    for (ia, sa) in pa.basis.iter().enumerate() {
        let comp: Vec<usize> = (0..pa.m).filter(|i| !sa.contains(i)).collect();
        let ib = subset_index(&pb.basis, &comp);
        let mut idx: Vec<usize> = sa.iter().chain(comp.iter()).cloned().collect();
        let sign = sort_sign(&mut idx).expect("disjoint");
        acc += a[ia] * b[ib] * sign;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn eigenvalues_of_companion() {
        // roots 1, 2, 3
        let m = DMatrix::from_row_slice(3, 3, &[6.0, -11.0, 6.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let mut ev: Vec<f64> = eigenvalues_real(&m).unwrap().iter().map(|z| z.re).collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (e, t) in ev.iter().zip([1.0, 2.0, 3.0]) {
            assert!((e - t).abs() < 1e-10);
        }
    }

    #[test]
    fn complex_eigenvalues_4x4() {
        let d = [c(1.0, 2.0), c(-1.0, 0.5), c(0.0, -3.0), c(2.0, 0.0)];
        let p = CMat::from_fn(4, 4, |i, j| {
            c((i * 3 + j) as f64 * 0.1, (i as f64 - j as f64) * 0.05) + if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) }
        });
        let pinv = p.clone().try_inverse().unwrap();
        let m = &p * CMat::from_diagonal(&CVec::from_vec(d.to_vec())) * pinv;
        let ev = eigenvalues(&m).unwrap();
        for t in d {
            assert!(ev.iter().any(|e| (e - t).norm() < 1e-9), "{t} missing from {ev:?}");
        }
    }

    #[test]
    fn compound_trace_and_determinant() {
        let m = CMat::from_fn(4, 4, |i, j| c((i + 2 * j) as f64 * 0.3 - 1.0, (i * j) as f64 * 0.1));
        let ev = eigenvalues(&m).unwrap();
        let p2 = CompoundPattern::new(4, 2);
        let m2 = p2.apply(&m);
        let ev2 = eigenvalues(&m2).unwrap();
        // eigenvalues of the 2nd additive compound are pairwise sums
        for a in 0..4 {
            for b in a + 1..4 {
                let s = ev[a] + ev[b];
                assert!(ev2.iter().any(|e| (e - s).norm() < 1e-8));
            }
        }
        // full compound is the trace
        let p4 = CompoundPattern::new(4, 4);
        assert!((p4.apply(&m)[(0, 0)] - m.trace()).norm() < 1e-12);
    }

    #[test]
    fn wedge_pair_is_determinant() {
        let m = CMat::from_fn(3, 3, |i, j| c(((i * 5 + j * 7) % 11) as f64 - 4.0, (i + j) as f64 * 0.2));
        let cols: Vec<CVec> = (0..3).map(|j| m.column(j).into_owned()).collect();
        let p1 = CompoundPattern::new(3, 1);
        let p2 = CompoundPattern::new(3, 2);
        let a = p1.wedge(&cols[..1]);
        let b = p2.wedge(&cols[1..]);
        assert!((wedge_pair(&p1, &a, &p2, &b) - m.determinant()).norm() < 1e-10);
        let b2 = p2.wedge(&cols[..2]);
        let a2 = p1.wedge(&cols[2..]);
        assert!((wedge_pair(&p2, &b2, &p1, &a2) - m.determinant()).norm() < 1e-10);
    }

    #[test]
    fn compound_evolves_wedges() {
        // d/dt (x ∧ y) = M^(2)(x ∧ y) when x' = Mx, y' = My
        let m = CMat::from_fn(3, 3, |i, j| c((i as f64 - j as f64) * 0.7 + 0.1, 0.3 * i as f64));
        let p2 = CompoundPattern::new(3, 2);
        let x = CVec::from_vec(vec![c(1.0, 0.0), c(0.5, 0.1), c(-0.2, 0.0)]);
        let y = CVec::from_vec(vec![c(0.0, 1.0), c(1.0, 0.0), c(0.3, -0.4)]);
        let h = 1e-6;
        let w0 = p2.wedge(&[x.clone(), y.clone()]);
        let w1 = p2.wedge(&[&x + &m * &x * c(h, 0.0), &y + &m * &y * c(h, 0.0)]);
        let fd = (w1 - &w0) / c(h, 0.0);
        let pred = p2.apply(&m) * w0;
        assert!((fd - pred).norm() < 1e-4);
    }
}
