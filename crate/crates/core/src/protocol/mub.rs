//! Complete sets of mutually unbiased bases.
//!
//! Odd primes use the Weyl–Heisenberg (quadratic-phase) bases. Powers of two
//! use the stabilizer construction `v_{S,b}(x) = i^{xᵀSx}·(−1)^{b·x}/√s` where
//! `S` runs over `2^n` symmetric binary matrices whose pairwise differences are
//! invertible over GF(2); `xᵀSx` is evaluated over the integers modulo 4.
//! In both cases the computational basis comes first.

use num_complex::Complex64;

pub(super) const SUPPORTED: [usize; 6] = [2, 3, 4, 5, 7, 8];

/// All `s(s+1)` kets, basis-major, or `None` for unsupported `s`.
pub(super) fn kets(s: usize) -> Option<Vec<Vec<Complex64>>> {
    if !SUPPORTED.contains(&s) {
        return None;
    }
    let mut out: Vec<Vec<Complex64>> = (0..s)
        .map(|i| {
            (0..s)
                .map(|x| {
                    if x == i {
                        Complex64::new(1.0, 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
                .collect()
        })
        .collect();
    if s.is_power_of_two() {
        out.extend(binary_bases(s.trailing_zeros() as usize));
    } else {
        out.extend(prime_bases(s));
    }
    Some(out)
}

fn prime_bases(p: usize) -> Vec<Vec<Complex64>> {
    let norm = 1.0 / (p as f64).sqrt();
    let omega =
        |e: usize| Complex64::from_polar(norm, 2.0 * std::f64::consts::PI * e as f64 / p as f64);
    let mut out = Vec::with_capacity(p * p);
    for k in 0..p {
        for l in 0..p {
            out.push((0..p).map(|x| omega((k * x * x + l * x) % p)).collect());
        }
    }
    out
}

/// Symmetric `n×n` binary matrix stored as row bitmasks.
type BinMatrix = Vec<u8>;

fn symmetric_matrices(n: usize) -> Vec<BinMatrix> {
    let slots: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    (0u32..1 << slots.len())
        .map(|bits| {
            let mut m = vec![0u8; n];
            for (k, &(i, j)) in slots.iter().enumerate() {
                if bits >> k & 1 == 1 {
                    m[i] |= 1 << j;
                    m[j] |= 1 << i;
                }
            }
            m
        })
        .collect()
}

fn invertible_gf2(m: &[u8]) -> bool {
    let mut a = m.to_vec();
    let n = a.len();
    for col in 0..n {
        let Some(p) = (col..n).find(|&r| a[r] >> col & 1 == 1) else {
            return false;
        };
        a.swap(col, p);
        for r in 0..n {
            if r != col && a[r] >> col & 1 == 1 {
                a[r] ^= a[col];
            }
        }
    }
    true
}

/// First (in enumeration order) family of `2^n` symmetric matrices with
/// pairwise invertible differences.
fn difference_family(n: usize) -> Vec<BinMatrix> {
    fn search(cands: &[BinMatrix], want: usize, start: usize, chosen: &mut Vec<usize>) -> bool {
        if chosen.len() == want {
            return true;
        }
        for k in start..cands.len() {
            let ok = chosen.iter().all(|&c| {
                let d: Vec<u8> = cands[k].iter().zip(&cands[c]).map(|(a, b)| a ^ b).collect();
                invertible_gf2(&d)
            });
            if ok {
                chosen.push(k);
                if search(cands, want, k + 1, chosen) {
                    return true;
                }
                chosen.pop();
            }
        }
        false
    }
    let cands = symmetric_matrices(n);
    let mut chosen = Vec::new();
    let found = search(&cands, 1 << n, 0, &mut chosen);
    debug_assert!(found, "no difference family for n = {n}");
    chosen.into_iter().map(|k| cands[k].clone()).collect()
}

fn binary_bases(n: usize) -> Vec<Vec<Complex64>> {
    let s = 1usize << n;
    let norm = 1.0 / (s as f64).sqrt();
    // bit `b` of the vector x is bit (n−1−b) of its index
    let bit = |x: usize, b: usize| (x >> (n - 1 - b)) & 1;
    let quad = |m: &BinMatrix, x: usize| -> usize {
        let mut q = 0;
        for (i, &row) in m.iter().enumerate().take(n) {
            for j in 0..n {
                q += bit(x, i) * ((row as usize >> j) & 1) * bit(x, j);
            }
        }
        q % 4
    };
    let powers_of_i = [
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 1.0),
        Complex64::new(-1.0, 0.0),
        Complex64::new(0.0, -1.0),
    ];
    let mut out = Vec::with_capacity(s * s);
    for m in difference_family(n) {
        for b in 0..s {
            out.push(
                (0..s)
                    .map(|x| {
                        let sign = if (b & x).count_ones() % 2 == 1 {
                            -1.0
                        } else {
                            1.0
                        };
                        powers_of_i[quad(&m, x)] * (sign * norm)
                    })
                    .collect(),
            );
        }
    }
    out
}
