//! Dual-net coset arithmetic.
//!
//! The transform, spline and ANOVA routines only ever need the coset label
//! `h = C . k`; explicit minimal-`nu` representatives are a diagnostic with
//! hard budgets because their enumeration grows combinatorially.

use std::fmt::Write as _;

use crate::base_p::{nu_int, PrimeBase, WavenumberVector};
use crate::error::{Result, WalshError};
use crate::net::GeneratingMatrices;

/// Coset label `h = C_1^T k_1 + ... + C_s^T k_s` in `Z_p^m`, stored as the
/// scalar `sum h_i p^i`.
pub type CosetLabel = usize;

/// Digits `h_0, ..., h_{m-1}` of a scalar label.
pub fn label_digits(h: CosetLabel, p: PrimeBase, m: usize) -> Vec<u8> {
    let pp = p.get() as usize;
    let mut rest = h;
    (0..m)
        .map(|_| {
            let d = (rest % pp) as u8;
            rest /= pp;
            d
        })
        .collect()
}

/// Coset label of an integer wavenumber vector; digits past `r` are ignored.
pub fn coset_index_ints(c: &GeneratingMatrices, k: &[u64]) -> Result<CosetLabel> {
    if k.len() != c.s() {
        return Err(WalshError::DimensionMismatch { expected: c.s(), found: k.len() });
    }
    let p = c.base().get() as u64;
    let (m, r) = (c.m(), c.r());
    let mut h = vec![0u64; m];
    for (cj, &kj) in c.matrices().iter().zip(k) {
        let mut rest = kj;
        for row in 0..r {
            if rest == 0 {
                break;
            }
            let digit = rest % p;
            rest /= p;
            if digit != 0 {
                for (col, hc) in h.iter_mut().enumerate() {
                    *hc = (*hc + digit * cj.get(row, col) as u64) % p;
                }
            }
        }
    }
    Ok(h.iter().rev().fold(0usize, |acc, &d| acc * p as usize + d as usize))
}

/// Coset label `C . k` of a wavenumber vector.
pub fn coset_index(c: &GeneratingMatrices, k: &WavenumberVector) -> Result<CosetLabel> {
    if k.base() != c.base() && k.dim() > 0 {
        return Err(WalshError::BaseMismatch { left: c.base().get(), right: k.base().get() });
    }
    if k.dim() != c.s() {
        return Err(WalshError::DimensionMismatch { expected: c.s(), found: k.dim() });
    }
    let p = c.base().get() as u64;
    let (m, r) = (c.m(), c.r());
    let mut h = vec![0u64; m];
    for (cj, kj) in c.matrices().iter().zip(k.components()) {
        for (row, &digit) in kj.digits().iter().enumerate().take(r) {
            if digit != 0 {
                for (col, hc) in h.iter_mut().enumerate() {
                    *hc = (*hc + digit as u64 * cj.get(row, col) as u64) % p;
                }
            }
        }
    }
    Ok(h.iter().rev().fold(0usize, |acc, &d| acc * p as usize + d as usize))
}

/// True iff `k` lies in the dual net `D(C)`.
pub fn is_dual(c: &GeneratingMatrices, k: &WavenumberVector) -> Result<bool> {
    Ok(coset_index(c, k)? == 0)
}

/// One minimal-`nu` representative per coset label (the set `K(C)`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RepresentativeMap {
    reps: Vec<Vec<u64>>,
}

impl RepresentativeMap {
    pub fn get(&self, h: CosetLabel) -> Option<&[u64]> {
        self.reps.get(h).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.reps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reps.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (CosetLabel, &[u64])> {
        self.reps.iter().enumerate().map(|(h, k)| (h, k.as_slice()))
    }

    /// CSV rows `h_scalar, k_1, ..., k_s`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (h, k) in self.iter() {
            let _ = write!(out, "{h}");
            for kj in k {
                let _ = write!(out, ",{kj}");
            }
            out.push('\n');
        }
        out
    }
}

/// Visits every integer wavenumber vector with `nu` exactly `level`, in
/// lexicographic order of `(k_1, ..., k_s)`. The visitor returns `false` to stop.
fn for_each_at_level(p: PrimeBase, s: usize, level: usize, visit: &mut dyn FnMut(&[u64]) -> bool) -> Result<bool> {
    fn rec(p: u64, j: usize, rest: usize, k: &mut Vec<u64>, visit: &mut dyn FnMut(&[u64]) -> bool) -> Result<bool> {
        let s = k.len();
        let nus: Vec<usize> = if j == s - 1 { vec![rest] } else { (0..=rest).collect() };
        for nu in nus {
            let (lo, hi) = if nu == 0 {
                (0, 1)
            } else {
                let hi = p.checked_pow(nu as u32).ok_or(WalshError::SizeCapExceeded { size: u64::MAX, cap: u64::MAX })?;
                (hi / p, hi)
            };
            for v in lo..hi {
                k[j] = v;
                let keep = if j == s - 1 { visit(k) } else { rec(p, j + 1, rest - nu, k, visit)? };
                if !keep {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
    let mut k = vec![0u64; s];
    rec(p.get() as u64, 0, level, &mut k, visit)
}

/// Minimal-`nu` representatives of every coset, ties broken lexicographically.
///
/// Searches levels `nu = 0, 1, ...` and fails once `nu_budget` is passed or
/// more than `count_cap` vectors have been examined.
pub fn coset_representatives(c: &GeneratingMatrices, nu_budget: usize, count_cap: u64) -> Result<RepresentativeMap> {
    let n_cosets = c.len();
    let mut reps: Vec<Option<Vec<u64>>> = vec![None; n_cosets];
    let mut filled = 0usize;
    let mut examined = 0u64;
    let mut aborted = false;
    for level in 0..=nu_budget {
        let mut err = None;
        for_each_at_level(c.base(), c.s(), level, &mut |k| {
            examined += 1;
            if examined > count_cap {
                aborted = true;
                return false;
            }
            match coset_index_ints(c, k) {
                Ok(h) => {
                    if reps[h].is_none() {
                        reps[h] = Some(k.to_vec());
                        filled += 1;
                    }
                }
                Err(e) => {
                    err = Some(e);
                    return false;
                }
            }
            filled < n_cosets
        })?;
        if let Some(e) = err {
            return Err(e);
        }
        if filled == n_cosets || aborted {
            break;
        }
    }
    if filled < n_cosets {
        let unfilled = reps.iter().enumerate().filter(|(_, r)| r.is_none()).map(|(h, _)| h).collect();
        return Err(WalshError::BudgetExceeded { unfilled });
    }
    Ok(RepresentativeMap { reps: reps.into_iter().map(Option::unwrap).collect() })
}

/// Wavenumbers `k (+) d` with `d` a nonzero dual element and `nu <= nu_budget`,
/// i.e. everything the net cannot distinguish from `k`.
pub fn aliasing_set(c: &GeneratingMatrices, k: &[u64], nu_budget: usize, count_cap: u64) -> Result<Vec<Vec<u64>>> {
    let target = coset_index_ints(c, k)?;
    let mut out = Vec::new();
    let mut examined = 0u64;
    for level in 0..=nu_budget {
        let mut err = None;
        let finished = for_each_at_level(c.base(), c.s(), level, &mut |l| {
            examined += 1;
            if examined > count_cap {
                return false;
            }
            match coset_index_ints(c, l) {
                Ok(h) if h == target && l != k => out.push(l.to_vec()),
                Ok(_) => {}
                Err(e) => {
                    err = Some(e);
                    return false;
                }
            }
            true
        })?;
        if let Some(e) = err {
            return Err(e);
        }
        if !finished {
            return Err(WalshError::SizeCapExceeded { size: examined, cap: count_cap });
        }
    }
    Ok(out)
}

/// `nu` of an integer wavenumber vector.
pub fn nu_of_ints(k: &[u64], p: PrimeBase) -> usize {
    k.iter().map(|&v| nu_int(v, p)).sum()
}
