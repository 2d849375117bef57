//! Digital nets over `Z_p` built from rectangular `r x m` generating matrices.
//!
//! Point `n` has coordinate digits `y_{j,n} = C_j n` (over `Z_p`), read as
//! `x_{j,n} = sum_{i=1}^r y_{j,n,i} p^{-i}`.

use std::ops::Range;

use crate::base_p::{digits_of, gf_matvec, DigitVector, GfMatrix, PrimeBase};
use crate::error::{Result, WalshError};

/// Default output precision for Sobol matrices.
pub const DEFAULT_SOBOL_ROWS: usize = 32;

/// Largest point count materialized by [`GeneratingMatrices::net_points`] unless
/// the caller asks for more.
pub const DEFAULT_POINT_CAP: u64 = 1 << 24;

/// Joe and Kuo direction numbers (`new-joe-kuo-6`) for dimensions 2 through 1024.
pub const JOE_KUO_DIRECTIONS: &str = include_str!("../data/new-joe-kuo-6.1024.txt");

/// The generating matrices `(C_1, ..., C_s)` of a digital net with `p^m` points.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratingMatrices {
    p: PrimeBase,
    m: usize,
    r: usize,
    matrices: Vec<GfMatrix>,
}

/// One point of a net: coordinate digits (post-radix, `x_1` first) and floats.
#[derive(Clone, Debug, PartialEq)]
pub struct NetPoint {
    pub digits: Vec<DigitVector>,
    pub coords: Vec<f64>,
}

/// Result of a t-value search.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TValue {
    Value(usize),
    ExceedsCap,
}

impl GeneratingMatrices {
    pub fn new(p: PrimeBase, m: usize, r: usize, matrices: Vec<GfMatrix>) -> Result<Self> {
        if matrices.is_empty() {
            return Err(WalshError::InvalidMatrices("at least one dimension is required".into()));
        }
        if r < m {
            return Err(WalshError::InvalidMatrices(format!("precision r = {r} is below m = {m}")));
        }
        if r > p.digit_cap() {
            return Err(WalshError::InvalidMatrices(format!(
                "precision r = {r} exceeds the {}-digit cap for base {}",
                p.digit_cap(),
                p.get()
            )));
        }
        for (j, c) in matrices.iter().enumerate() {
            if c.rows() != r || c.cols() != m {
                return Err(WalshError::InvalidMatrices(format!(
                    "matrix {} is {}x{}, expected {r}x{m}",
                    j + 1,
                    c.rows(),
                    c.cols()
                )));
            }
            if let Some(d) = (0..r).flat_map(|i| c.row(i).iter()).find(|&&d| d as u32 >= p.get()) {
                return Err(WalshError::DigitOutOfRange { digit: *d as u32, p: p.get() });
            }
        }
        p.len_pow(m)?;
        Ok(GeneratingMatrices { p, m, r, matrices })
    }

    /// Every coordinate is the `r x m` identity: a product of van der Corput sequences.
    pub fn identity(p: PrimeBase, m: usize, r: usize, s: usize) -> Result<Self> {
        GeneratingMatrices::new(p, m, r, vec![GfMatrix::identity(r, m); s])
    }

    #[inline]
    pub fn base(&self) -> PrimeBase {
        self.p
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn r(&self) -> usize {
        self.r
    }

    #[inline]
    pub fn s(&self) -> usize {
        self.matrices.len()
    }

    pub fn matrices(&self) -> &[GfMatrix] {
        &self.matrices
    }

    /// Number of points, `p^m`.
    pub fn len(&self) -> usize {
        self.p.len_pow(self.m).expect("validated at construction")
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn check_index(&self, n: u64) -> Result<()> {
        let len = self.len() as u64;
        if n >= len {
            return Err(WalshError::IndexOutOfRange { index: n, limit: len });
        }
        Ok(())
    }

    /// Point `n` via explicit matrix-vector products.
    pub fn net_point(&self, n: u64) -> Result<NetPoint> {
        self.check_index(n)?;
        let nd = digits_of(n, self.p, self.m)?;
        let p = self.p.get() as u64;
        let scale = self.p.checked_pow(self.r).expect("r within digit cap") as f64;
        let mut digits = Vec::with_capacity(self.s());
        let mut coords = Vec::with_capacity(self.s());
        for c in &self.matrices {
            let y = gf_matvec(c, &nd)?;
            let x = y.digits().iter().fold(0u64, |acc, &d| acc * p + d as u64) as f64 / scale;
            digits.push(y);
            coords.push(x);
        }
        Ok(NetPoint { digits, coords })
    }

    /// All points in index order, refusing nets larger than `cap`.
    pub fn net_points(&self, cap: u64) -> Result<Vec<NetPoint>> {
        let len = self.len() as u64;
        if len > cap {
            return Err(WalshError::SizeCapExceeded { size: len, cap });
        }
        (0..len).map(|n| self.net_point(n)).collect()
    }

    /// Packed coordinate digits `sum_{i=1}^r y_{j,n,i} p^{r-i}` for every
    /// point, laid out as `words[n * s + j]`.
    pub fn coordinate_words(&self) -> Vec<u64> {
        let (n_pts, s, m, r) = (self.len(), self.s(), self.m, self.r);
        let p = self.p.get() as u64;
        let mut words = vec![0u64; n_pts * s];
        if p == 2 {
            // Column k of C_j as an r-bit word, top row in the most significant bit.
            let cols: Vec<Vec<u64>> = self
                .matrices
                .iter()
                .map(|c| (0..m).map(|k| (0..r).fold(0u64, |acc, i| (acc << 1) | c.get(i, k) as u64)).collect())
                .collect();
            for n in 0..n_pts {
                for (j, cj) in cols.iter().enumerate() {
                    let mut w = 0u64;
                    let mut bits = n;
                    let mut k = 0;
                    while bits != 0 {
                        if bits & 1 == 1 {
                            w ^= cj[k];
                        }
                        bits >>= 1;
                        k += 1;
                    }
                    words[n * s + j] = w;
                }
            }
            return words;
        }
        let mut nd = vec![0u64; m];
        for n in 0..n_pts {
            let mut rest = n as u64;
            for d in nd.iter_mut() {
                *d = rest % p;
                rest /= p;
            }
            for (j, c) in self.matrices.iter().enumerate() {
                let mut w = 0u64;
                for i in 0..r {
                    let y = c.row(i).iter().zip(&nd).map(|(&a, &b)| a as u64 * b).sum::<u64>() % p;
                    w = w * p + y;
                }
                words[n * s + j] = w;
            }
        }
        words
    }

    /// First half of a nested net (`C_j` without its last column) and the
    /// indices of the evaluation block `p^{m-1} .. p^m`.
    pub fn split_nested(&self) -> Result<(GeneratingMatrices, Range<usize>)> {
        if self.m == 0 {
            return Err(WalshError::InvalidMatrices("cannot split a one-point net".into()));
        }
        let train = GeneratingMatrices {
            p: self.p,
            m: self.m - 1,
            r: self.r,
            matrices: self.matrices.iter().map(|c| c.truncate_cols(self.m - 1)).collect(),
        };
        let half = train.len();
        Ok((train, half..self.len()))
    }

    /// Smallest `t` such that every choice of the first `d_j` rows of each
    /// `C_j` with `d_1 + ... + d_s = m - t` is linearly independent.
    ///
    /// `cap` bounds the number of rank computations.
    pub fn t_value(&self, cap: u64) -> TValue {
        let mut work = 0u64;
        for t in 0..=self.m {
            match self.all_compositions_independent(self.m - t, cap, &mut work) {
                Some(true) => return TValue::Value(t),
                Some(false) => continue,
                None => return TValue::ExceedsCap,
            }
        }
        TValue::Value(self.m)
    }

    fn all_compositions_independent(&self, total: usize, cap: u64, work: &mut u64) -> Option<bool> {
        let s = self.s();
        let mut parts = vec![0usize; s];
        fn rec(
            nets: &GeneratingMatrices,
            j: usize,
            left: usize,
            parts: &mut Vec<usize>,
            cap: u64,
            work: &mut u64,
        ) -> Option<bool> {
            let s = parts.len();
            if j == s - 1 {
                parts[j] = left;
                *work += 1;
                if *work > cap {
                    return None;
                }
                let rows: Vec<&[u8]> = parts
                    .iter()
                    .zip(&nets.matrices)
                    .flat_map(|(&d, c)| (0..d).map(move |i| c.row(i)))
                    .collect();
                return Some(rank_mod_p(&rows, nets.p) == rows.len());
            }
            for d in 0..=left {
                parts[j] = d;
                if !rec(nets, j + 1, left - d, parts, cap, work)? {
                    return Some(false);
                }
            }
            Some(true)
        }
        rec(self, 0, total, &mut parts, cap, work)
    }
}

fn inv_mod(a: u32, p: u32) -> u32 {
    let (mut base, mut e, mut acc) = (a as u64 % p as u64, p as u64 - 2, 1u64);
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * base % p as u64;
        }
        base = base * base % p as u64;
        e >>= 1;
    }
    acc as u32
}

/// Rank over `Z_p` of a set of equal-length rows.
pub fn rank_mod_p(rows: &[&[u8]], p: PrimeBase) -> usize {
    let p = p.get();
    let mut a: Vec<Vec<u32>> = rows.iter().map(|r| r.iter().map(|&v| v as u32).collect()).collect();
    let cols = a.first().map_or(0, Vec::len);
    let mut rank = 0;
    for col in 0..cols {
        let Some(pivot) = (rank..a.len()).find(|&i| a[i][col] != 0) else { continue };
        a.swap(rank, pivot);
        let inv = inv_mod(a[rank][col], p);
        for v in a[rank].iter_mut() {
            *v = *v * inv % p;
        }
        for i in 0..a.len() {
            if i != rank && a[i][col] != 0 {
                let f = a[i][col];
                for c in 0..cols {
                    a[i][c] = (a[i][c] + p * p - f * a[rank][c] % p) % p;
                }
            }
        }
        rank += 1;
    }
    rank
}

struct DirectionLine {
    degree: usize,
    a: u64,
    m: Vec<u64>,
}

fn parse_direction_line(line: &str, lineno: usize) -> Result<(usize, DirectionLine)> {
    let bad = |what: &str| WalshError::DirectionFile(format!("line {lineno}: {what}"));
    let nums = line
        .split_whitespace()
        .map(|t| t.parse::<u64>().map_err(|_| bad(&format!("cannot parse {t:?}"))))
        .collect::<Result<Vec<_>>>()?;
    if nums.len() < 3 {
        return Err(bad("expected at least `d s a`"));
    }
    let (d, degree, a) = (nums[0] as usize, nums[1] as usize, nums[2]);
    if degree == 0 || nums.len() != 3 + degree {
        return Err(bad(&format!("degree {degree} needs {degree} initial direction numbers")));
    }
    let m = nums[3..].to_vec();
    for (k, &mk) in m.iter().enumerate() {
        if mk % 2 == 0 || mk >= 1 << (k + 1) {
            return Err(bad(&format!("m_{} = {mk} must be odd and below 2^{}", k + 1, k + 1)));
        }
    }
    Ok((d, DirectionLine { degree, a, m }))
}

/// Sobol generating matrices from a Joe-Kuo style direction-number file.
///
/// The first line of `text` is a header and is skipped. Dimension 1 is the
/// identity; dimension `d >= 2` is read from the line whose first field is `d`.
pub fn sobol_matrices(text: &str, s: usize, m: usize, r: usize) -> Result<GeneratingMatrices> {
    let p = PrimeBase::TWO;
    if s == 0 {
        return Err(WalshError::InvalidMatrices("dimension must be positive".into()));
    }
    if m > r || r > 63 {
        return Err(WalshError::InvalidMatrices(format!("need m <= r <= 63, got m = {m}, r = {r}")));
    }
    let mut matrices = vec![GfMatrix::identity(r, m)];
    let mut lines = text.lines().enumerate().skip(1).filter(|(_, l)| !l.trim().is_empty());
    for dim in 2..=s {
        let (lineno, line) = lines
            .next()
            .ok_or_else(|| WalshError::DirectionFile(format!("file ends before dimension {dim}")))?;
        let (d, dl) = parse_direction_line(line, lineno + 1)?;
        if d != dim {
            return Err(WalshError::DirectionFile(format!("line {}: expected dimension {dim}, found {d}", lineno + 1)));
        }
        let v = direction_numbers(&dl, m, r);
        let mut c = GfMatrix::zeros(r, m);
        for (k, vk) in v.iter().enumerate() {
            for i in 0..r {
                c.set(i, k, ((vk >> (r - 1 - i)) & 1) as u8);
            }
        }
        matrices.push(c);
    }
    GeneratingMatrices::new(p, m, r, matrices)
}

/// Sobol matrices from the bundled Joe-Kuo table.
pub fn sobol_default(s: usize, m: usize, r: usize) -> Result<GeneratingMatrices> {
    sobol_matrices(JOE_KUO_DIRECTIONS, s, m, r)
}

fn direction_numbers(dl: &DirectionLine, count: usize, r: usize) -> Vec<u64> {
    let deg = dl.degree;
    let mut v: Vec<u64> = Vec::with_capacity(count);
    for k in 1..=count {
        if k <= deg {
            // m_k < 2^k, so drop bits that fall below the r-bit window.
            let vk = if r >= k { dl.m[k - 1] << (r - k) } else { dl.m[k - 1] >> (k - r) };
            v.push(vk);
        } else {
            let base = v[k - 1 - deg];
            let mut vk = base ^ (base >> deg);
            for i in 1..deg {
                if (dl.a >> (deg - 1 - i)) & 1 == 1 {
                    vk ^= v[k - 1 - i];
                }
            }
            v.push(vk);
        }
    }
    v
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::base_p::{walsh_exponent, WavenumberVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random `r x m` matrices; the first has an identity top block so the
    /// points are distinct.
    pub(crate) fn random_matrices(p: PrimeBase, m: usize, r: usize, s: usize, seed: u64) -> Vec<GfMatrix> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..s)
            .map(|j| {
                let mut c = GfMatrix::zeros(r, m);
                for i in 0..r {
                    for k in 0..m {
                        let v = if j == 0 && i < m { u8::from(i == k) } else { rng.gen_range(0..p.get()) as u8 };
                        c.set(i, k, v);
                    }
                }
                c
            })
            .collect()
    }

    fn two() -> PrimeBase {
        PrimeBase::TWO
    }

    #[test]
    fn identity_net_points() {
        let c = GeneratingMatrices::identity(two(), 2, 2, 1).unwrap();
        let xs: Vec<f64> = c.net_points(16).unwrap().iter().map(|pt| pt.coords[0]).collect();
        assert_eq!(xs, vec![0.0, 0.5, 0.25, 0.75]);
        let c3 = GeneratingMatrices::identity(PrimeBase::new(3).unwrap(), 1, 1, 1).unwrap();
        assert!((c3.net_point(2).unwrap().coords[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!(c.net_point(4).is_err());
    }

    #[test]
    fn trivial_nets() {
        let c = GeneratingMatrices::identity(two(), 0, 4, 3).unwrap();
        let pts = c.net_points(16).unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].coords, vec![0.0; 3]);
        let c = GeneratingMatrices::identity(two(), 1, 1, 2).unwrap();
        let pts: Vec<Vec<f64>> = c.net_points(16).unwrap().into_iter().map(|pt| pt.coords).collect();
        assert_eq!(pts, vec![vec![0.0, 0.0], vec![0.5, 0.5]]);
        assert!(matches!(c.net_points(1), Err(WalshError::SizeCapExceeded { .. })));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(GeneratingMatrices::identity(two(), 3, 2, 1).is_err());
        assert!(GeneratingMatrices::new(two(), 2, 2, vec![GfMatrix::identity(3, 2)]).is_err());
        assert!(GeneratingMatrices::new(two(), 2, 2, vec![]).is_err());
        assert!(GeneratingMatrices::identity(PrimeBase::new(5).unwrap(), 2, 23, 1).is_err());
    }

    #[test]
    fn coordinate_words_match_points() {
        for p in [2u32, 3, 5] {
            let p = PrimeBase::new(p).unwrap();
            let c = GeneratingMatrices::new(
                p,
                3,
                4,
                vec![
                    GfMatrix::from_rows(p, &[vec![1, 1, 0], vec![0, 1, 1], vec![1, 0, 1], vec![1, 1, 1]]).unwrap(),
                    GfMatrix::identity(4, 3),
                ],
            )
            .unwrap();
            let words = c.coordinate_words();
            let scale = p.checked_pow(4).unwrap() as f64;
            for n in 0..c.len() {
                let pt = c.net_point(n as u64).unwrap();
                for j in 0..2 {
                    assert_eq!(words[n * 2 + j] as f64 / scale, pt.coords[j]);
                }
            }
        }
    }

    #[test]
    fn point_difference_is_linear() {
        let p = PrimeBase::new(3).unwrap();
        let c = GeneratingMatrices::new(
            p,
            3,
            3,
            vec![GfMatrix::from_rows(p, &[vec![1, 2, 0], vec![0, 1, 1], vec![2, 0, 1]]).unwrap()],
        )
        .unwrap();
        for n in 0..27u64 {
            for v in 0..27u64 {
                let a = c.net_point(n).unwrap();
                let b = c.net_point(v).unwrap();
                let diff = crate::base_p::carryless_sub(&a.digits[0], &b.digits[0]).unwrap();
                let w = crate::base_p::carryless_sub_int(n, v, p);
                assert_eq!(diff, c.net_point(w).unwrap().digits[0]);
            }
        }
    }

    #[test]
    fn sobol_recursion() {
        // "2 1 0 1": v_1 = 1/2, v_2 = v_1 xor (v_1 >> 1) = 3/4
        let text = "d s a m\n2 1 0 1\n";
        let c = sobol_matrices(text, 2, 2, 4).unwrap();
        let col = |k: usize| (0..4).map(|i| c.matrices()[1].get(i, k)).collect::<Vec<_>>();
        assert_eq!(col(0), vec![1, 0, 0, 0]);
        assert_eq!(col(1), vec![1, 1, 0, 0]);
        assert_eq!(c.matrices()[0], GfMatrix::identity(4, 2));
        assert!(sobol_matrices(text, 3, 2, 4).is_err());
        assert!(sobol_matrices("h\n2 1 0 2\n", 2, 2, 4).is_err());
        assert!(sobol_matrices("h\n2 x 0 1\n", 2, 2, 4).is_err());
    }

    #[test]
    fn bundled_sobol_matches_reference_points() {
        // Second coordinate of the Sobol sequence in natural (non-Gray) order.
        let c = sobol_default(3, 3, 32).unwrap();
        let ys: Vec<f64> = (0..8).map(|n| c.net_point(n).unwrap().coords[1]).collect();
        assert_eq!(ys, vec![0.0, 0.5, 0.75, 0.25, 0.625, 0.125, 0.375, 0.875]);
        let zs: Vec<f64> = (0..4).map(|n| c.net_point(n).unwrap().coords[2]).collect();
        assert_eq!(zs, vec![0.0, 0.5, 0.75, 0.25]);
        assert!(sobol_default(1025, 4, 32).is_err());
    }

    #[test]
    fn t_values() {
        let c = GeneratingMatrices::identity(two(), 4, 4, 1).unwrap();
        assert_eq!(c.t_value(1000), TValue::Value(0));
        let c = GeneratingMatrices::identity(two(), 1, 1, 2).unwrap();
        assert_eq!(c.t_value(1000), TValue::Value(0));
        let anti = GfMatrix::from_rows(two(), &[vec![0, 1], vec![1, 0]]).unwrap();
        let c = GeneratingMatrices::new(two(), 2, 2, vec![GfMatrix::identity(2, 2), anti]).unwrap();
        assert_eq!(c.t_value(1000), TValue::Value(0));
        let c = GeneratingMatrices::identity(two(), 2, 2, 2).unwrap();
        assert_eq!(c.t_value(1000), TValue::Value(1));
        let big = sobol_default(6, 10, 32).unwrap();
        assert_eq!(big.t_value(3), TValue::ExceedsCap);
    }

    #[test]
    fn split_nested_halves() {
        let c = GeneratingMatrices::identity(two(), 2, 2, 1).unwrap();
        let (train, eval) = c.split_nested().unwrap();
        let xs: Vec<f64> = train.net_points(16).unwrap().iter().map(|pt| pt.coords[0]).collect();
        assert_eq!(xs, vec![0.0, 0.5]);
        let ev: Vec<f64> = eval.clone().map(|n| c.net_point(n as u64).unwrap().coords[0]).collect();
        assert_eq!(ev, vec![0.25, 0.75]);
        let sob = sobol_default(5, 12, 32).unwrap();
        let (train, eval) = sob.split_nested().unwrap();
        assert_eq!(train.len(), 2048);
        assert_eq!(eval, 2048..4096);
        for n in [0u64, 1, 77, 2047] {
            assert_eq!(sob.net_point(n).unwrap(), train.net_point(n).unwrap());
        }
        assert!(GeneratingMatrices::identity(two(), 0, 2, 1).unwrap().split_nested().is_err());
    }

    #[test]
    fn character_sum_on_small_net() {
        let c = sobol_default(2, 3, 3).unwrap();
        let pts = c.net_points(64).unwrap();
        for k1 in 0..16u64 {
            for k2 in 0..16u64 {
                let k = WavenumberVector::from_ints(&[k1, k2], two(), 4).unwrap();
                let sum: f64 = pts
                    .iter()
                    .map(|pt| {
                        let e: u32 = k.components().iter().zip(&pt.digits).map(|(kj, xj)| walsh_exponent(kj, xj).unwrap()).sum();
                        if e % 2 == 0 { 1.0 } else { -1.0 }
                    })
                    .sum::<f64>()
                    / 8.0;
                let h = crate::dual::coset_index(&c, &k).unwrap();
                assert_eq!(sum, if h == 0 { 1.0 } else { 0.0 });
            }
        }
    }
}
