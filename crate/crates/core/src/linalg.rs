//! Dense and banded eigensolvers.
//!
//! Dense problems go through faer. Large Hermitian band matrices (the
//! truncated Sambe operator) are reduced to real tridiagonal form with Givens
//! rotations and bulge chasing, then diagonalized with implicit QL; this keeps
//! the cost at `O(n² b)` instead of the `O(n³)` of a dense reduction.

use faer::{Mat, Side};
use num_complex::Complex64 as c64;

use crate::error::{Error, Result};
use crate::model::Tridiagonal;

/// Eigenpairs of a real symmetric matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct RealEigen {
    pub values: Vec<f64>,
    pub vectors: Mat<f64>,
}

pub fn tridiagonal_eigen(t: &Tridiagonal) -> Result<RealEigen> {
    let dense = t.to_dense();
    let evd = dense
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let values = (0..t.dim()).map(|i| s[i]).collect();
    Ok(RealEigen {
        values,
        vectors: evd.U().to_owned(),
    })
}

/// Eigenvalues of a symmetric tridiagonal matrix by implicit QL with Wilkinson
/// shifts. `off[i]` couples `i` and `i + 1`. Returned ascending.
pub fn tridiagonal_eigenvalues(diag: &[f64], off: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n.saturating_sub(1)].copy_from_slice(&off[..n.saturating_sub(1)]);

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Eigen("tridiagonal QL did not converge".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// Hermitian band matrix stored by lower diagonals.
///
/// `lower[j * stride + d]` holds `A[j + d, j]` for `d = 0..=width`. The
/// storage keeps one extra diagonal beyond the bandwidth for the bulge that
/// appears during reduction.
#[derive(Clone, Debug)]
pub struct HermitianBand {
    n: usize,
    bandwidth: usize,
    stride: usize,
    lower: Vec<c64>,
}

impl HermitianBand {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        let stride = bandwidth + 2;
        Self {
            n,
            bandwidth,
            stride,
            lower: vec![c64::default(); n * stride],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn get(&self, i: usize, j: usize) -> c64 {
        if i >= j {
            let d = i - j;
            if d < self.stride {
                self.lower[j * self.stride + d]
            } else {
                c64::default()
            }
        } else {
            self.get(j, i).conj()
        }
    }

    /// Sets `A[i, j]` and, implicitly, `A[j, i] = conj(value)`.
    pub fn set(&mut self, i: usize, j: usize, value: c64) {
        if i >= j {
            let d = i - j;
            assert!(d < self.stride, "entry ({i}, {j}) outside band storage");
            self.lower[j * self.stride + d] = value;
        } else {
            self.set(j, i, value.conj());
        }
    }

    pub fn add(&mut self, i: usize, j: usize, value: c64) {
        let v = self.get(i, j);
        self.set(i, j, v + value);
    }

    pub fn to_dense(&self) -> Mat<c64> {
        Mat::from_fn(self.n, self.n, |i, j| {
            if i.abs_diff(j) <= self.bandwidth + 1 {
                self.get(i, j)
            } else {
                c64::default()
            }
        })
    }

    /// Applies `A ← G A G†` where `G` acts on rows `p, p+1` as
    /// `[[c, s], [-s̄, c]]`.
    fn rotate(&mut self, p: usize, c: f64, s: c64) {
        let q = p + 1;
        let reach = self.stride - 1;
        let lo = p.saturating_sub(reach);
        let hi = (q + reach).min(self.n - 1);
        for m in lo..=hi {
            if m == p || m == q {
                continue;
            }
            let amp = self.get(m, p);
            let amq = self.get(m, q);
            if amp == c64::default() && amq == c64::default() {
                continue;
            }
            let new_p = amp * c + amq * s.conj();
            let new_q = -amp * s + amq * c;
            if m.abs_diff(p) < self.stride {
                self.set(m, p, new_p);
            }
            if m.abs_diff(q) < self.stride {
                self.set(m, q, new_q);
            }
        }
        let app = self.get(p, p).re;
        let aqq = self.get(q, q).re;
        let aqp = self.get(q, p);
        let apq = aqp.conj();
        // G B G† for the 2×2 block.
        let s2 = s.norm_sqr();
        let cs_apq = s * aqp; // s * A[q,p]
        let new_pp = c * c * app + s2 * aqq + 2.0 * c * cs_apq.re;
        let new_qq = s2 * app + c * c * aqq - 2.0 * c * cs_apq.re;
        let new_qp = -s.conj() * c * app + c * c * aqp - s.conj() * s.conj() * apq + s.conj() * c * aqq;
        self.set(p, p, c64::new(new_pp, 0.0));
        self.set(q, q, c64::new(new_qq, 0.0));
        self.set(q, p, new_qp);
    }

    /// Reduces to real symmetric tridiagonal form with the same spectrum.
    pub fn tridiagonalize(mut self) -> Tridiagonal {
        let n = self.n;
        let b = self.bandwidth;
        if b > 1 {
            for k in 0..n.saturating_sub(2) {
                let top = b.min(n - 1 - k);
                for d in (2..=top).rev() {
                    let mut col = k;
                    let mut row = k + d;
                    loop {
                        let x = self.get(row - 1, col);
                        let y = self.get(row, col);
                        if y != c64::default() {
                            let r = (x.norm_sqr() + y.norm_sqr()).sqrt();
                            let (c, s) = if x == c64::default() {
                                (0.0, y.conj() / y.norm())
                            } else {
                                let ax = x.norm();
                                (ax / r, (x / ax) * y.conj() / r)
                            };
                            self.rotate(row - 1, c, s);
                            self.set(row, col, c64::default());
                        }
                        // The rotation in plane (row-1, row) leaves a bulge at
                        // (row-1+b+1, row-1).
                        let next_col = row - 1;
                        let next_row = next_col + b + 1;
                        if next_row >= n {
                            break;
                        }
                        col = next_col;
                        row = next_row;
                    }
                }
            }
        }
        let diag = (0..n).map(|i| self.get(i, i).re).collect();
        let off = (0..n.saturating_sub(1))
            .map(|i| self.get(i + 1, i).norm())
            .collect();
        Tridiagonal { diag, off }
    }

    pub fn eigenvalues(self) -> Result<Vec<f64>> {
        let t = self.tridiagonalize();
        tridiagonal_eigenvalues(&t.diag, &t.off)
    }
}

impl HermitianBand {
    /// `y = A x`
    pub fn apply(&self, x: &[c64]) -> Vec<c64> {
        let n = self.n;
        let mut y = vec![c64::default(); n];
        for j in 0..n {
            y[j] += self.lower[j * self.stride] * x[j];
            for d in 1..self.stride.min(n - j) {
                let a = self.lower[j * self.stride + d];
                if a != c64::default() {
                    y[j + d] += a * x[j];
                    y[j] += a.conj() * x[j + d];
                }
            }
        }
        y
    }

    /// Eigenpair closest to `shift` by shift-invert iteration with Rayleigh
    /// quotient refinement of the eigenvalue.
    pub fn eigenpair_near(&self, shift: f64, max_iter: usize) -> Result<(f64, Vec<c64>)> {
        let lu = BandLu::new(self, shift)?;
        let n = self.n;
        let mut x: Vec<c64> = (0..n)
            .map(|i| c64::new(1.0 + 0.1 * ((i * 7919) % 13) as f64, 0.05 * ((i * 104_729) % 11) as f64))
            .collect();
        normalize(&mut x);
        let mut rho = f64::NAN;
        let mut last_residual = f64::INFINITY;
        for _ in 0..max_iter {
            x = lu.solve(&x);
            normalize(&mut x);
            let ax = self.apply(&x);
            let next: f64 = x.iter().zip(&ax).map(|(a, b)| (a.conj() * b).re).sum();
            let residual = ax
                .iter()
                .zip(&x)
                .map(|(a, v)| (a - v * next).norm_sqr())
                .sum::<f64>()
                .sqrt();
            let scale = next.abs().max(1.0);
            // Stop at a small residual, or once rounding stalls its decrease.
            let done = residual < 1e-12 * scale || (residual < 1e-9 * scale && residual > 0.5 * last_residual);
            last_residual = residual;
            rho = next;
            if done {
                break;
            }
        }
        Ok((rho, x))
    }
}

fn normalize(x: &mut [c64]) {
    let norm = x.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    for v in x.iter_mut() {
        *v /= norm;
    }
}

/// LU factorization with partial pivoting of `A - σI` for a Hermitian band
/// matrix `A`. Row `i` of `U` occupies columns `i..=i+2b`.
struct BandLu {
    n: usize,
    b: usize,
    width: usize,
    /// Row `i`, column `j` at `i * width + (j + b - i)` for `j ∈ [i-b, i+2b]`.
    rows: Vec<c64>,
    /// Multipliers of step `c` for rows `c+1..=c+b`.
    lower: Vec<c64>,
    pivots: Vec<usize>,
}

impl BandLu {
    fn new(a: &HermitianBand, shift: f64) -> Result<Self> {
        let n = a.n;
        let b = a.bandwidth.max(1);
        let width = 3 * b + 1;
        let mut rows = vec![c64::default(); n * width];
        for i in 0..n {
            let lo = i.saturating_sub(b);
            let hi = (i + b).min(n - 1);
            for j in lo..=hi {
                let mut v = a.get(i, j);
                if i == j {
                    v -= shift;
                }
                rows[i * width + (j + b - i)] = v;
            }
        }
        let scale = rows.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1.0);
        let mut lu = Self {
            n,
            b,
            width,
            rows,
            lower: vec![c64::default(); n * b],
            pivots: vec![0; n],
        };
        for c in 0..n {
            let last = (c + b).min(n - 1);
            let mut p = c;
            let mut best = lu.at(c, c).norm();
            for r in c + 1..=last {
                let v = lu.at(r, c).norm();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            lu.pivots[c] = p;
            if p != c {
                for j in c..=(c + 2 * b).min(n - 1) {
                    let x = lu.at(c, j);
                    let y = lu.at(p, j);
                    lu.put(c, j, y);
                    lu.put(p, j, x);
                }
            }
            if lu.at(c, c).norm() == 0.0 {
                lu.put(c, c, c64::new(f64::EPSILON * scale, 0.0));
            }
            let piv = lu.at(c, c);
            for r in c + 1..=last {
                let m = lu.at(r, c) / piv;
                lu.lower[c * b + (r - c - 1)] = m;
                if m == c64::default() {
                    continue;
                }
                lu.put(r, c, c64::default());
                for j in c + 1..=(c + 2 * b).min(n - 1) {
                    let v = lu.at(r, j) - m * lu.at(c, j);
                    lu.put(r, j, v);
                }
            }
        }
        Ok(lu)
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> c64 {
        self.rows[i * self.width + (j + self.b - i)]
    }

    #[inline]
    fn put(&mut self, i: usize, j: usize, v: c64) {
        self.rows[i * self.width + (j + self.b - i)] = v;
    }

    fn solve(&self, rhs: &[c64]) -> Vec<c64> {
        let (n, b) = (self.n, self.b);
        let mut y = rhs.to_vec();
        for c in 0..n {
            y.swap(c, self.pivots[c]);
            let yc = y[c];
            for r in c + 1..=(c + b).min(n - 1) {
                y[r] -= self.lower[c * b + (r - c - 1)] * yc;
            }
        }
        for i in (0..n).rev() {
            let mut acc = y[i];
            for j in i + 1..=(i + 2 * b).min(n - 1) {
                acc -= self.at(i, j) * y[j];
            }
            y[i] = acc / self.at(i, i);
        }
        y
    }
}

/// Eigen-decomposition of a unitary matrix with orthonormal eigenvectors.
///
/// faer's general solver returns unit eigenvectors that are only
/// approximately orthogonal inside clusters of close eigenvalues; those
/// clusters are re-orthonormalized with modified Gram-Schmidt.
pub fn unitary_eigen(u: &Mat<c64>) -> Result<(Vec<c64>, Mat<c64>)> {
    let n = u.nrows();
    let evd = u.eigen().map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let values: Vec<c64> = (0..n).map(|i| s[i]).collect();
    let mut vecs = evd.U().to_owned();

    // Group indices by eigenphase proximity.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].arg().total_cmp(&values[b].arg()));
    let cluster_tol = 1e-6;
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for &i in &order {
        match clusters.last_mut() {
            Some(cl) if (values[*cl.last().unwrap()] - values[i]).norm() < cluster_tol => cl.push(i),
            _ => clusters.push(vec![i]),
        }
    }
    if clusters.len() > 1 {
        let first = clusters[0][0];
        let last_cluster = clusters.len() - 1;
        if (values[*clusters[last_cluster].last().unwrap()] - values[first]).norm() < cluster_tol {
            let tail = clusters.pop().unwrap();
            clusters[0].splice(0..0, tail);
        }
    }
    for cl in clusters.iter().filter(|c| c.len() > 1) {
        for (a, &i) in cl.iter().enumerate() {
            for &j in &cl[..a] {
                let mut dot = c64::default();
                for r in 0..n {
                    dot += vecs[(r, j)].conj() * vecs[(r, i)];
                }
                for r in 0..n {
                    let v = vecs[(r, j)];
                    vecs[(r, i)] -= dot * v;
                }
            }
            let norm = (0..n).map(|r| vecs[(r, i)].norm_sqr()).sum::<f64>().sqrt();
            for r in 0..n {
                vecs[(r, i)] /= norm;
            }
        }
    }
    for j in 0..n {
        let norm = (0..n).map(|r| vecs[(r, j)].norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-14 {
            for r in 0..n {
                vecs[(r, j)] /= norm;
            }
        }
    }
    Ok((values, vecs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_band(n: usize, b: usize, seed: u64) -> HermitianBand {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = HermitianBand::zeros(n, b);
        for j in 0..n {
            m.set(j, j, c64::new(rng.random_range(-3.0..3.0), 0.0));
            for d in 1..=b.min(n - 1 - j) {
                let v = c64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                m.set(j + d, j, v);
            }
        }
        m
    }

    fn dense_eigenvalues(m: &Mat<c64>) -> Vec<f64> {
        let mut v = m.self_adjoint_eigenvalues(Side::Lower).unwrap();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn band_reduction_matches_dense_solver() {
        for &(n, b, seed) in &[(40, 3, 1u64), (97, 9, 2), (60, 1, 3), (25, 24, 4), (7, 2, 5)] {
            let m = random_band(n, b, seed);
            let want = dense_eigenvalues(&m.to_dense());
            let got = m.eigenvalues().unwrap();
            let dev = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(dev < 1e-11, "n={n} b={b}: {dev}");
        }
    }

    #[test]
    fn shift_invert_finds_nearest_eigenpair() {
        let m = random_band(80, 5, 11);
        let want = dense_eigenvalues(&m.to_dense());
        let target = want[37] + 0.3 * (want[38] - want[37]);
        let (val, vec) = m.eigenpair_near(target, 50).unwrap();
        assert!((val - want[37]).abs() < 1e-10, "{val} vs {}", want[37]);
        let av = m.apply(&vec);
        let res: f64 = av.iter().zip(&vec).map(|(a, v)| (a - v * val).norm_sqr()).sum::<f64>().sqrt();
        assert!(res < 1e-9);
    }

    #[test]
    fn tridiagonalize_preserves_trace_and_frobenius_norm() {
        let m = random_band(50, 6, 9);
        let dense = m.to_dense();
        let trace: f64 = (0..50).map(|i| dense[(i, i)].re).sum();
        let frob: f64 = (0..50)
            .flat_map(|i| (0..50).map(move |j| (i, j)))
            .map(|(i, j)| dense[(i, j)].norm_sqr())
            .sum();
        let t = m.tridiagonalize();
        let t_trace: f64 = t.diag.iter().sum();
        let t_frob: f64 = t.diag.iter().map(|d| d * d).sum::<f64>()
            + 2.0 * t.off.iter().map(|e| e * e).sum::<f64>();
        assert!((trace - t_trace).abs() < 1e-11);
        assert!((frob - t_frob).abs() < 1e-10 * frob);
    }

    #[test]
    fn ql_matches_faer_on_chain() {
        let t = Tridiagonal {
            diag: (0..30).map(|i| (i as f64 * 0.37).sin()).collect(),
            off: vec![1.0; 29],
        };
        let want = tridiagonal_eigen(&t).unwrap().values;
        let got = tridiagonal_eigenvalues(&t.diag, &t.off).unwrap();
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn unitary_eigen_is_orthonormal_with_degeneracy() {
        // exp(-i H) for H with an exactly degenerate pair.
        let t = Tridiagonal {
            diag: vec![0.0; 12],
            off: vec![1.0; 11],
        };
        let e = tridiagonal_eigen(&t).unwrap();
        let n = 12;
        let mut phases: Vec<f64> = e.values.clone();
        phases[3] = phases[4];
        let u = Mat::<c64>::from_fn(n, n, |i, j| {
            (0..n)
                .map(|k| c64::from_polar(1.0, -phases[k]) * e.vectors[(i, k)] * e.vectors[(j, k)])
                .sum()
        });
        let (vals, vecs) = unitary_eigen(&u).unwrap();
        for v in &vals {
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
        for a in 0..n {
            for b in 0..n {
                let dot: c64 = (0..n).map(|r| vecs[(r, a)].conj() * vecs[(r, b)]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).norm() < 1e-10, "({a},{b}) {dot}");
            }
        }
    }
}
