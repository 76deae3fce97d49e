//! Eigenanalysis of a [`HamiltonianSet`]: bi-orthogonal eigenbases, state
//! classification, Witten index, partition function, expectation values,
//! correlations, and breaking diagnostics.

mod arnoldi;
mod classify;
mod observables;
mod quantities;

pub use arnoldi::ArnoldiOptions;
pub use classify::classify;
pub use observables::Observable;
pub use quantities::{
    breaking_diagnosis, correlate, expectation_value, ground_states, partition_function, witten_index, Breaking,
    Correlation, PartitionValue, Temperature, WittenIndex, WITTEN_AGREEMENT,
};

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Support};
use crate::hamiltonian::HamiltonianSet;
use crate::linsolve::SparseLu;
use crate::numeric::{cdot, cnorm2, norm2};
use crate::par::{map_range, Execution};
use crate::sparse::RealCsr;

/// Sectors larger than this are rejected in dense mode.
pub const DENSE_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SolveMode {
    Dense,
    /// `k` eigenvalues nearest the real `shift` (below the spectrum this
    /// selects the smallest real parts).
    Iterative { k: usize, shift: f64 },
}

impl SolveMode {
    /// Dense when every sector fits, otherwise iterative.
    pub fn auto(h: &HamiltonianSet, k: usize) -> Self {
        if (0..=h.dim()).all(|n| h.sector_len(n) <= DENSE_LIMIT) {
            SolveMode::Dense
        } else {
            SolveMode::Iterative { k, shift: -1.0 }
        }
    }
}

/// Eigen-decomposition of one sector.
#[derive(Debug, Clone)]
pub struct SectorSpectrum {
    pub degree: usize,
    pub dim: usize,
    pub values: Vec<Complex64>,
    /// unit 2-norm right eigenvectors
    pub right: Vec<Vec<Complex64>>,
    /// left eigenvectors scaled so that `leftᵀ right = 1` within each cluster
    pub left: Vec<Vec<Complex64>>,
    /// cluster id per eigenvalue
    pub cluster: Vec<usize>,
    /// per eigenvalue: its cluster could not be bi-orthonormalized
    pub defective: Vec<bool>,
    /// `true` when all `dim` eigenvalues were computed
    pub complete: bool,
    /// largest `‖H r − E r‖ / (‖H‖∞ ‖r‖)`
    pub max_residual: f64,
}

/// Raw eigen-decomposition of every sector.
#[derive(Debug, Clone)]
pub struct RawSpectrum {
    pub sectors: Vec<SectorSpectrum>,
    pub mode: SolveMode,
}

/// Numerical thresholds for classification and diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// zero-mode threshold relative to the largest `|E|` in a sector
    #[serde(default = "default_zero")]
    pub tol_zero: f64,
    #[serde(default = "default_eps")]
    pub eps_gamma: f64,
    #[serde(default = "default_eps")]
    pub eps_e: f64,
    /// largest relative distance of a `d`-image from the partner eigenspace
    #[serde(default = "default_pair")]
    pub pair: f64,
}

fn default_zero() -> f64 {
    1e-8
}
fn default_eps() -> f64 {
    1e-6
}
fn default_pair() -> f64 {
    1e-6
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tol_zero: default_zero(),
            eps_gamma: default_eps(),
            eps_e: default_eps(),
            pair: default_pair(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Class {
    Theta,
    PairedLower,
    PairedUpper,
    Unclassified,
}

impl Class {
    pub fn as_str(self) -> &'static str {
        match self {
            Class::Theta => "theta",
            Class::PairedLower => "paired-lower",
            Class::PairedUpper => "paired-upper",
            Class::Unclassified => "unclassified",
        }
    }
}

#[derive(Debug, Clone)]
pub struct EigenRecord {
    pub sector: usize,
    pub index: usize,
    pub value: Complex64,
    pub class: Class,
    /// index of the partner in sector `sector ± 1`
    pub partner: Option<usize>,
    pub defective: bool,
    /// `‖d r‖ / (‖d‖∞ ‖r‖)`; zero in the top sector
    pub d_image: f64,
}

impl EigenRecord {
    pub fn gamma(&self) -> f64 {
        self.value.re
    }
}

/// Classified spectrum of all sectors.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    pub grid: Grid,
    pub support: Support,
    pub raw: RawSpectrum,
    pub records: Vec<Vec<EigenRecord>>,
    pub tolerances: Tolerances,
    /// absolute zero threshold per sector
    pub tol_zero_abs: Vec<f64>,
    /// theta states per sector
    pub theta_counts: Vec<usize>,
    /// records with `|E| ≤ tol` per sector
    pub zero_counts: Vec<usize>,
    /// largest eigenvalue mismatch over all recorded pairs
    pub max_pair_mismatch: f64,
}

impl SpectrumReport {
    pub fn dim(&self) -> usize {
        self.records.len() - 1
    }

    pub fn complete(&self) -> bool {
        self.raw.sectors.iter().all(|s| s.complete)
    }

    pub fn sector(&self, n: usize) -> &SectorSpectrum {
        &self.raw.sectors[n]
    }

    pub fn all_records(&self) -> impl Iterator<Item = &EigenRecord> {
        self.records.iter().flatten()
    }

    /// Largest `|E|` over every sector.
    pub fn scale(&self) -> f64 {
        self.all_records().map(|r| r.value.norm()).fold(0.0, f64::max)
    }

    /// Global zero threshold (largest of the per-sector thresholds).
    pub fn tol_zero_global(&self) -> f64 {
        self.tol_zero_abs.iter().copied().fold(0.0, f64::max)
    }

    /// Largest deviation `|lᵢᵀ rⱼ − δᵢⱼ|` within each sector, skipping
    /// defective clusters.
    pub fn biorthogonality_residual(&self) -> f64 {
        self.raw
            .sectors
            .iter()
            .map(|s| {
                let mut worst = 0.0f64;
                for i in 0..s.values.len() {
                    if s.defective[i] {
                        continue;
                    }
                    for j in 0..s.values.len() {
                        if s.defective[j] {
                            continue;
                        }
                        let want = if i == j { 1.0 } else { 0.0 };
                        worst = worst.max((cdot(&s.left[i], &s.right[j]) - want).norm());
                    }
                }
                worst
            })
            .fold(0.0, f64::max)
    }

    /// Largest distance from any eigenvalue to the conjugate of its sector's
    /// spectrum.
    pub fn conjugation_residual(&self) -> f64 {
        conjugation_residual(&self.raw)
    }
}

pub fn conjugation_residual(raw: &RawSpectrum) -> f64 {
    raw.sectors
        .iter()
        .filter(|s| s.complete)
        .map(|s| {
            s.values
                .iter()
                .map(|z| s.values.iter().map(|w| (w - z.conj()).norm()).fold(f64::INFINITY, f64::min))
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Eigensolve and classify in one call.
pub fn analyze(h: &HamiltonianSet, mode: SolveMode, tol: Tolerances, exec: Execution) -> Result<SpectrumReport> {
    classify(eigensolve(h, mode, exec)?, h, tol)
}

/// Solve every sector, concurrently when `exec` allows.
pub fn eigensolve(h: &HamiltonianSet, mode: SolveMode, exec: Execution) -> Result<RawSpectrum> {
    let sectors = map_range(exec, h.dim() + 1, |n| solve_sector(h.sector(n), n, mode));
    Ok(RawSpectrum {
        sectors: sectors.into_iter().collect::<Result<_>>()?,
        mode,
    })
}

fn solve_sector(m: &RealCsr, degree: usize, mode: SolveMode) -> Result<SectorSpectrum> {
    let n = m.nrows();
    if n == 0 {
        return Ok(SectorSpectrum {
            degree,
            dim: 0,
            values: vec![],
            right: vec![],
            left: vec![],
            cluster: vec![],
            defective: vec![],
            complete: true,
            max_residual: 0.0,
        });
    }
    let (values, right, left_values, left, complete) = match mode {
        SolveMode::Dense => {
            if n > DENSE_LIMIT {
                return Err(Error::InvalidArgument(format!(
                    "sector {degree} has dimension {n} > {DENSE_LIMIT}; use iterative mode"
                )));
            }
            if let Some(d) = symmetrizer(m) {
                let (v, r, l) = symmetric_eigen(m, &d)?;
                (v.clone(), r, v, l, true)
            } else {
            // solve with B = D⁻¹AD; right vectors map back as D w, left as D⁻¹u
            let (dense, d) = balance(m.to_dense());
            let (v, mut r) = dense_eigen(&dense)?;
            refine_clusters(&dense, &v, &mut r)?;
            let dense_t = dense.transpose().to_owned();
            let (lv, mut l) = dense_eigen(&dense_t)?;
            refine_clusters(&dense_t, &lv, &mut l)?;
            for x in &mut r {
                x.iter_mut().zip(&d).for_each(|(z, s)| *z *= *s);
            }
            for y in &mut l {
                y.iter_mut().zip(&d).for_each(|(z, s)| *z /= *s);
            }
            (v, r, lv, l, true)
            }
        }
        SolveMode::Iterative { k, shift } => {
            let opts = ArnoldiOptions::for_request(k, n);
            let (v, r) = arnoldi::shift_invert(m, shift, opts, false)?;
            let (lv, l) = arnoldi::shift_invert(m, shift, opts, true)?;
            (v, r, lv, l, v_len_complete(k, n))
        }
    };
    assemble_sector(m, degree, values, right, left_values, left, complete)
}

fn v_len_complete(k: usize, n: usize) -> bool {
    k >= n
}

/// `ln d` for a diagonal `D` with `D⁻¹AD` symmetric, when one exists.
///
/// Needs `a_ij a_ji > 0` on every coupling and consistent ratios around
/// every cycle (a discrete detailed balance). Built along a spanning forest
/// and then verified on all couplings. Line flows below unit cell Péclet
/// number always qualify; their spectra are badly conditioned in the
/// original basis, so this route is what makes them accurate.
fn symmetrizer(m: &RealCsr) -> Option<Vec<f64>> {
    let n = m.nrows();
    let t = m.transpose();
    let mut ld = vec![f64::NAN; n];
    let mut stack = Vec::new();
    for root in 0..n {
        if !ld[root].is_nan() {
            continue;
        }
        ld[root] = 0.0;
        stack.push(root);
        while let Some(i) = stack.pop() {
            for (j, aij) in m.row(i) {
                if j == i || aij == 0.0 {
                    continue;
                }
                let aji = t.get(i, j);
                if !(aij * aji > 0.0) {
                    return None;
                }
                if ld[j].is_nan() {
                    ld[j] = ld[i] + 0.5 * (aji / aij).ln();
                    stack.push(j);
                }
            }
            // couplings present only in the column
            for (j, aji) in t.row(i) {
                if j != i && aji != 0.0 && m.get(i, j) == 0.0 {
                    return None;
                }
            }
        }
    }
    let (lo, hi) = ld.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    // keep D and D⁻¹ comfortably inside the exponent range
    if !(hi - lo < 600.0) {
        return None;
    }
    let mid = 0.5 * (lo + hi);
    ld.iter_mut().for_each(|x| *x -= mid);
    for i in 0..n {
        for (j, aij) in m.row(i) {
            if j == i {
                continue;
            }
            let bij = aij * (ld[j] - ld[i]).exp();
            let bji = t.get(i, j) * (ld[i] - ld[j]).exp();
            if (bij - bji).abs() > 1e-12 * bij.abs().max(bji.abs()) {
                return None;
            }
        }
    }
    Some(ld)
}

/// Eigenpairs of `A` through the symmetric `B = D⁻¹AD` (averaged with its
/// transpose): right vectors `D w`, left vectors `D⁻¹ w`.
fn symmetric_eigen(m: &RealCsr, ld: &[f64]) -> Result<(Vec<Complex64>, Vec<Vec<Complex64>>, Vec<Vec<Complex64>>)> {
    let n = m.nrows();
    let mut b = Mat::<f64>::zeros(n, n);
    for (i, j, a) in m.triplets() {
        let v = 0.5 * a * (ld[j] - ld[i]).exp();
        b[(i, j)] += v;
        b[(j, i)] += v;
    }
    let e = b.self_adjoint_eigen(faer::Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let (s, u) = (e.S(), e.U());
    let lambda: Vec<f64> = (0..n).map(|k| s[k]).collect();
    let mut right: Vec<Vec<f64>> = (0..n).map(|k| (0..n).map(|i| u[(i, k)] * ld[i].exp()).collect()).collect();
    let mut left: Vec<Vec<f64>> = (0..n).map(|k| (0..n).map(|i| u[(i, k)] * (-ld[i]).exp()).collect()).collect();
    // Mapping back multiplies the absolute error of w by D or D⁻¹, which
    // ruins the small entries when D is strongly graded. Inverse iteration
    // on the original matrix restores them for isolated eigenvalues.
    let (lo, hi) = ld.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if hi - lo > 4.0 * std::f64::consts::LN_10 {
        let scale = lambda.iter().fold(f64::MIN_POSITIVE, |a, x| a.max(x.abs()));
        for k in 0..n {
            let gap = [k.checked_sub(1), Some(k + 1).filter(|&j| j < n)]
                .into_iter()
                .flatten()
                .map(|j| (lambda[j] - lambda[k]).abs())
                .fold(f64::INFINITY, f64::min);
            if gap <= 1e-6 * scale {
                continue;
            }
            let Ok(lu) = SparseLu::shifted(m, -(lambda[k] + 1e-9 * scale), 1.0) else { continue };
            for _ in 0..2 {
                if let (Ok(r), Ok(l)) = (lu.solve(&right[k]), lu.solve_transpose(&left[k])) {
                    let (nr, nl) = (norm2(&r), norm2(&l));
                    right[k] = r.iter().map(|x| x / nr).collect();
                    left[k] = l.iter().map(|x| x / nl).collect();
                }
            }
        }
    }
    let complex = |v: Vec<Vec<f64>>| -> Vec<Vec<Complex64>> {
        v.into_iter().map(|x| x.into_iter().map(|y| Complex64::new(y, 0.0)).collect()).collect()
    };
    Ok((lambda.iter().map(|&x| Complex64::new(x, 0.0)).collect(), complex(right), complex(left)))
}

/// Diagonal balancing by powers of two: returns `D⁻¹AD` and `diag(D)`, with
/// off-diagonal row and column 1-norms brought within a factor of two.
/// Drift-dominated operators are strongly graded, and the unbalanced
/// eigensolve loses most of its accuracy on them.
fn balance(mut a: Mat<f64>) -> (Mat<f64>, Vec<f64>) {
    let n = a.nrows();
    let mut d = vec![1.0; n];
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            while c < r / 2.0 {
                f *= 2.0;
                c *= 4.0;
            }
            while c > r * 2.0 {
                f /= 2.0;
                c /= 4.0;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                d[i] *= f;
                for j in 0..n {
                    a[(i, j)] /= f;
                    a[(j, i)] *= f;
                }
            }
        }
    }
    (a, d)
}

fn dense_eigen(a: &Mat<f64>) -> Result<(Vec<Complex64>, Vec<Vec<Complex64>>)> {
    let e = a.eigen().map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s = e.S();
    let u = e.U();
    let n = a.nrows();
    let values: Vec<Complex64> = (0..n).map(|i| s[i]).collect();
    let vectors = (0..n).map(|j| (0..n).map(|i| u[(i, j)]).collect()).collect();
    Ok((values, vectors))
}

fn cluster_tol(values: &[Complex64]) -> f64 {
    1e-10 * values.iter().map(|z| z.norm()).fold(1.0f64, f64::max)
}

/// Single-linkage clusters of eigenvalues closer than `ctol`. Returns the
/// cluster id per value and the number of clusters.
fn clusters(values: &[Complex64], ctol: f64) -> (Vec<usize>, usize) {
    let count = values.len();
    let mut cluster = vec![usize::MAX; count];
    let mut next = 0;
    for i in 0..count {
        if cluster[i] != usize::MAX {
            continue;
        }
        cluster[i] = next;
        let mut stack = vec![i];
        while let Some(a) = stack.pop() {
            for b in 0..count {
                if cluster[b] == usize::MAX && (values[a] - values[b]).norm() <= ctol {
                    cluster[b] = next;
                    stack.push(b);
                }
            }
        }
        next += 1;
    }
    (cluster, next)
}

/// Nearly coincident eigenvalues can come back from the dense solver with
/// inaccurate vectors. For each multi-member cluster with a poor residual,
/// replace its vectors by an orthonormal basis from block inverse iteration.
fn refine_clusters(a: &Mat<f64>, values: &[Complex64], vectors: &mut [Vec<Complex64>]) -> Result<()> {
    let n = a.nrows();
    let anorm = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)].abs()).sum::<f64>())
        .fold(f64::MIN_POSITIVE, f64::max);
    let ctol = cluster_tol(values);
    let (cluster, count) = clusters(values, ctol);
    let residual = |e: Complex64, v: &[Complex64]| -> f64 {
        let mut r = 0.0;
        for i in 0..n {
            let mut acc = -e * v[i];
            for j in 0..n {
                acc += a[(i, j)] * v[j];
            }
            r += acc.norm_sqr();
        }
        r.sqrt() / (anorm * cnorm2(v).max(f64::MIN_POSITIVE))
    };
    for c in 0..count {
        let members: Vec<usize> = (0..values.len()).filter(|&i| cluster[i] == c).collect();
        if members.len() < 2 || members.iter().all(|&i| residual(values[i], &vectors[i]) <= 1e-12) {
            continue;
        }
        let k = members.len();
        let mean = members.iter().map(|&i| values[i]).sum::<Complex64>() / k as f64;
        let mu = mean + Complex64::new(1e-9 * anorm, 1e-9 * anorm);
        let shifted = Mat::<Complex64>::from_fn(n, n, |i, j| {
            let x = Complex64::new(a[(i, j)], 0.0);
            if i == j {
                x - mu
            } else {
                x
            }
        });
        let lu = shifted.partial_piv_lu();
        let mut x = Mat::<Complex64>::from_fn(n, k, |i, b| vectors[members[b]][i]);
        use faer::linalg::solvers::Solve;
        for _ in 0..3 {
            lu.solve_in_place(x.as_mut());
            x = x.qr().compute_thin_Q();
        }
        for (b, &i) in members.iter().enumerate() {
            vectors[i] = (0..n).map(|p| x[(p, b)]).collect();
        }
    }
    Ok(())
}

/// Scale to unit norm with the largest-modulus entry real and positive.
fn normalize(v: &mut [Complex64]) {
    let norm = cnorm2(v);
    if norm == 0.0 {
        return;
    }
    let pivot = v
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |(bi, bm), (i, z)| if z.norm() > bm * (1.0 + 1e-12) { (i, z.norm()) } else { (bi, bm) })
        .0;
    let phase = v[pivot].conj() / v[pivot].norm();
    for z in v.iter_mut() {
        *z = *z * phase / norm;
    }
}

/// Order eigenvalues by (Re, Im) with a tolerance on Re so conjugate pairs
/// stay adjacent.
fn order(values: &[Complex64], tol: f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        let (x, y) = (values[a], values[b]);
        if (x.re - y.re).abs() > tol {
            x.re.total_cmp(&y.re)
        } else {
            x.im.total_cmp(&y.im)
        }
    });
    idx
}

fn assemble_sector(
    m: &RealCsr,
    degree: usize,
    values: Vec<Complex64>,
    mut right: Vec<Vec<Complex64>>,
    left_values: Vec<Complex64>,
    mut left: Vec<Vec<Complex64>>,
    complete: bool,
) -> Result<SectorSpectrum> {
    let dim = m.nrows();
    let ctol = cluster_tol(&values);

    let ord = order(&values, ctol);
    let values: Vec<Complex64> = ord.iter().map(|&i| values[i]).collect();
    right = ord.iter().map(|&i| std::mem::take(&mut right[i])).collect();
    right.iter_mut().for_each(|r| normalize(r));

    let count = values.len();
    let (cluster, next) = clusters(&values, ctol);

    // assign each left eigenvalue to the cluster of the nearest right one
    let mut members_l: Vec<Vec<usize>> = vec![Vec::new(); next];
    for (j, lv) in left_values.iter().enumerate() {
        let nearest = (0..count)
            .min_by(|&a, &b| (values[a] - lv).norm().total_cmp(&(values[b] - lv).norm()))
            .unwrap();
        members_l[cluster[nearest]].push(j);
    }
    let mut members_r: Vec<Vec<usize>> = vec![Vec::new(); next];
    for (i, &c) in cluster.iter().enumerate() {
        members_r[c].push(i);
    }

    let mut new_left = vec![vec![Complex64::new(0.0, 0.0); dim]; count];
    let mut defective = vec![false; count];
    for c in 0..next {
        let rs = &members_r[c];
        let ls = &members_l[c];
        let ok = ls.len() == rs.len() && biorthonormalize(rs, ls, &right, &mut left, &mut new_left);
        if !ok {
            for &i in rs {
                defective[i] = true;
                // keep an unnormalized left vector when one is available
                if let Some(&j) = ls.get(rs.iter().position(|&x| x == i).unwrap()) {
                    new_left[i] = left[j].clone();
                }
            }
        }
    }

    let hnorm = m.inf_norm().max(f64::MIN_POSITIVE);
    let mc = m.to_complex();
    let max_residual = values
        .iter()
        .zip(&right)
        .map(|(&e, r)| {
            let hr = mc.mul_vec(r);
            let res: f64 = hr.iter().zip(r).map(|(a, b)| (a - e * b).norm_sqr()).sum::<f64>().sqrt();
            res / hnorm
        })
        .fold(0.0, f64::max);

    Ok(SectorSpectrum {
        degree,
        dim,
        values,
        right,
        left: new_left,
        cluster,
        defective,
        complete,
        max_residual,
    })
}

/// Block bi-orthonormalization `L ← L G⁻ᵀ` with `G = Lᵀ R`. Returns `false`
/// when `G` is numerically singular.
fn biorthonormalize(
    rs: &[usize],
    ls: &[usize],
    right: &[Vec<Complex64>],
    left: &mut [Vec<Complex64>],
    out: &mut [Vec<Complex64>],
) -> bool {
    let k = rs.len();
    for &j in ls {
        normalize(&mut left[j]);
    }
    let g = Mat::<Complex64>::from_fn(k, k, |a, b| cdot(&left[ls[a]], &right[rs[b]]));
    // numerically singular pairing means a defective (or mismatched) block
    let sv = match g.singular_values() {
        Ok(sv) => sv,
        Err(_) => return false,
    };
    let smax = sv.first().copied().unwrap_or(0.0);
    let smin = sv.last().copied().unwrap_or(0.0);
    if !(smin > 1e-13 * smax.max(1.0) * k as f64) || !(smin > 1e-300) {
        return false;
    }
    // X = G⁻¹ Lᵀ; row a of X pairs with right vector a
    let dim = left[ls[0]].len();
    let lu = g.partial_piv_lu();
    let mut rhs = Mat::<Complex64>::from_fn(k, dim, |a, i| left[ls[a]][i]);
    use faer::linalg::solvers::Solve;
    lu.solve_in_place(rhs.as_mut());
    for (a, &i) in rs.iter().enumerate() {
        out[i] = (0..dim).map(|p| rhs[(a, p)]).collect();
        if out[i].iter().any(|z| !z.is_finite()) {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests;
