//! Enumeration of pairings, set partitions, and cyclic orders, plus the
//! cycle / chain / permanent functionals of a kernel evaluated over them.
//!
//! Everything downstream works at *index level*: a moment of order `k` is
//! specified by a list of `k` points (state indices into a kernel matrix),
//! and repeated states are distinct indices. Enumeration is always over the
//! index positions; the kernel is only consulted when a product is evaluated.
//! This convention is what makes the partition-based formulas agree with the
//! pairing expansion when points repeat, and it is pinned down by the frozen
//! oracle tests in `tests/oracles.rs`.
//!
//! Conventions fixed here once, relied on everywhere:
//!
//! - A *cyclic order* of a block is a sequence starting at the block's least
//!   position; rotations are the same order, so a block of size `k` has
//!   `(k-1)!` of them and a block of size 2 exactly one.
//! - A *cycle value* multiplies kernel entries around the loop, so a
//!   singleton block contributes `K(x,x)` and a 2-block `K(x,y) K(y,x)`.
//! - A *free chain* sums over all `k!` orderings of the block with `k-1`
//!   kernel factors and no endpoint factors; a singleton free chain is 1.
//!   Both traversal directions are summed, which is what the moment
//!   formulas require of non-symmetric kernels.
//! - An *anchored chain* from `a` to `b` through an interior block adds the
//!   endpoint factors; with empty interior it is `K(a,b)`.
//! - The alpha-permanent sums `alpha^{cycles(pi)}` times the permutation
//!   product over all permutations. At `alpha = -1` it equals
//!   `(-1)^n det`, a sign convention confirmed by brute force in the tests
//!   below rather than assumed.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Hard cap on pairing enumeration (point count).
pub const PAIRING_CAP: usize = 12;
/// Hard cap on set-partition enumeration (point count).
pub const PARTITION_CAP: usize = 10;
/// Hard cap on permanent evaluation (matrix dimension).
pub const PERMANENT_CAP: usize = 9;

fn cap_check(what: &'static str, n: usize, cap: usize) -> Result<()> {
    if n > cap {
        Err(Error::CapExceeded { what, n, cap })
    } else {
        Ok(())
    }
}

/// All perfect pairings of `{0, .., n-1}` as lists of index pairs `(i, j)`
/// with `i < j`. Odd `n` has no pairings and yields an empty list.
pub fn pairings(n: usize) -> Result<Vec<Vec<(usize, usize)>>> {
    cap_check("pairing enumeration", n, PAIRING_CAP)?;
    let mut out = Vec::new();
    if n % 2 != 0 {
        return Ok(out);
    }
    let mut current = Vec::with_capacity(n / 2);
    let mut free: Vec<usize> = (0..n).collect();
    fn rec(free: &mut Vec<usize>, current: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        if free.is_empty() {
            out.push(current.clone());
            return;
        }
        let first = free[0];
        for k in 1..free.len() {
            let partner = free[k];
            let mut rest: Vec<usize> = free
                .iter()
                .copied()
                .filter(|&x| x != first && x != partner)
                .collect();
            current.push((first, partner));
            rec(&mut rest, current, out);
            current.pop();
        }
    }
    rec(&mut free, &mut current, &mut out);
    Ok(out)
}

/// All set partitions of `{0, .., n-1}`. Blocks are sorted internally and
/// listed by least element, so each partition appears exactly once.
pub fn set_partitions(n: usize) -> Result<Vec<Vec<Vec<usize>>>> {
    cap_check("set-partition enumeration", n, PARTITION_CAP)?;
    let mut out = Vec::new();
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    fn rec(next: usize, n: usize, blocks: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        if next == n {
            out.push(blocks.clone());
            return;
        }
        for i in 0..blocks.len() {
            blocks[i].push(next);
            rec(next + 1, n, blocks, out);
            blocks[i].pop();
        }
        blocks.push(vec![next]);
        rec(next + 1, n, blocks, out);
        blocks.pop();
    }
    rec(0, n, &mut blocks, &mut out);
    Ok(out)
}

/// Set partitions whose blocks all have at least `min_block` elements.
pub fn set_partitions_min_block(n: usize, min_block: usize) -> Result<Vec<Vec<Vec<usize>>>> {
    Ok(set_partitions(n)?
        .into_iter()
        .filter(|p| p.iter().all(|b| b.len() >= min_block))
        .collect())
}

/// The `(k-1)!` cyclic orders of a block, each written as a sequence starting
/// at the block's least element. `(1,2,3)`, `(3,1,2)`, `(2,3,1)` are the same
/// order and appear once, as `[1,2,3]`.
pub fn cyclic_orders(block: &[usize]) -> Vec<Vec<usize>> {
    assert!(!block.is_empty(), "cyclic order of an empty block");
    let mut sorted = block.to_vec();
    sorted.sort_unstable();
    let first = sorted[0];
    let rest = &sorted[1..];
    permutations(rest)
        .into_iter()
        .map(|tail| {
            let mut seq = Vec::with_capacity(block.len());
            seq.push(first);
            seq.extend(tail);
            seq
        })
        .collect()
}

/// All permutations of a slice (simple recursive enumeration; inputs are
/// small and capped by callers).
fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.is_empty() {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for (i, &x) in items.iter().enumerate() {
        let mut rest = items.to_vec();
        rest.remove(i);
        for mut tail in permutations(&rest) {
            let mut seq = Vec::with_capacity(items.len());
            seq.push(x);
            seq.append(&mut tail);
            out.push(seq);
        }
    }
    out
}

/// Visit every permutation of `items` in place (Heap's algorithm). The hot
/// evaluators below use this to avoid materializing factorially many vectors.
fn for_each_permutation(items: &mut [usize], f: &mut impl FnMut(&[usize])) {
    let n = items.len();
    f(items);
    if n < 2 {
        return;
    }
    let mut c = vec![0usize; n];
    let mut i = 1;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                items.swap(0, i);
            } else {
                items.swap(c[i], i);
            }
            f(items);
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// Sum over cyclic orders of the block of the product of kernel entries
/// around the loop:
///
/// ```text
/// cy(K; x_1..x_k) = sum_{cyclic orders} K(x_{c_1}, x_{c_2}) ... K(x_{c_k}, x_{c_1})
/// ```
///
/// `points` are state indices into `k`; a singleton gives `K(x,x)`.
pub fn cycle_value(k: &DMatrix<f64>, points: &[usize]) -> f64 {
    assert!(!points.is_empty());
    if points.len() == 1 {
        return k[(points[0], points[0])];
    }
    // Fix position 0 first; permuting the tail enumerates each cyclic class
    // exactly once.
    let mut tail: Vec<usize> = (1..points.len()).collect();
    let mut total = 0.0;
    for_each_permutation(&mut tail, &mut |order| {
        let mut prod = k[(points[0], points[order[0]])];
        for w in 0..order.len() - 1 {
            prod *= k[(points[order[w]], points[order[w + 1]])];
        }
        prod *= k[(points[order[order.len() - 1]], points[0])];
        total += prod;
    });
    total
}

/// Anchored chain from state `a` to state `b` through the interior points:
///
/// ```text
/// ch(K; a, b; x_1..x_m) = sum_{pi} K(a, x_{pi(1)}) K(x_{pi(1)}, x_{pi(2)})
///                         ... K(x_{pi(m)}, b)
/// ```
///
/// With an empty interior this is `K(a,b)`.
pub fn chain_value(k: &DMatrix<f64>, a: usize, b: usize, interior: &[usize]) -> f64 {
    let mut positions: Vec<usize> = (0..interior.len()).collect();
    let mut total = 0.0;
    for_each_permutation(&mut positions, &mut |order| {
        let mut prod = 1.0;
        let mut prev = a;
        for &w in order {
            prod *= k[(prev, interior[w])];
            prev = interior[w];
        }
        total += prod * k[(prev, b)];
    });
    total
}

/// Free (unanchored) chain over a block: all orderings, `k-1` kernel factors,
/// no endpoint factors. A singleton block has value 1; a 2-block gives
/// `K(x,y) + K(y,x)`.
pub fn free_chain_value(k: &DMatrix<f64>, points: &[usize]) -> f64 {
    assert!(!points.is_empty());
    if points.len() == 1 {
        return 1.0;
    }
    let mut positions: Vec<usize> = (0..points.len()).collect();
    let mut total = 0.0;
    for_each_permutation(&mut positions, &mut |order| {
        let mut prod = 1.0;
        for w in 0..order.len() - 1 {
            prod *= k[(points[order[w]], points[order[w + 1]])];
        }
        total += prod;
    });
    total
}

/// The alpha-permanent of the kernel restricted to the given points:
///
/// ```text
/// perm_alpha(K; x_1..x_n) = sum_{pi in S_n} alpha^{cycles(pi)}
///                           K(x_1, x_{pi(1)}) ... K(x_n, x_{pi(n)})
/// ```
///
/// At `alpha = -1` this equals `(-1)^n det K[points]`; at `alpha = 1` it is
/// the ordinary permanent.
pub fn alpha_permanent(k: &DMatrix<f64>, points: &[usize], alpha: f64) -> Result<f64> {
    let n = points.len();
    cap_check("alpha-permanent", n, PERMANENT_CAP)?;
    if n == 0 {
        return Ok(1.0);
    }
    let mut positions: Vec<usize> = (0..n).collect();
    let mut total = 0.0;
    for_each_permutation(&mut positions, &mut |perm| {
        let mut prod = 1.0;
        for i in 0..n {
            prod *= k[(points[i], points[perm[i]])];
        }
        total += alpha.powi(cycle_count(perm) as i32) * prod;
    });
    Ok(total)
}

/// Measure-weighted cycle value. Each position in the block carries a weight
/// vector over states; the cycle product is integrated against all of them:
///
/// ```text
/// cy(K; nu_1..nu_r) = sum_{cyclic orders c} trace(D_{c_1} K D_{c_2} K ... D_{c_r} K)
/// ```
///
/// with `D_i = diag(nu_i)`. Point masses recover [`cycle_value`]; a singleton
/// gives `int K(y,y) dnu(y)`.
pub fn measure_cycle_value(k: &DMatrix<f64>, measures: &[&DVector<f64>]) -> f64 {
    assert!(!measures.is_empty());
    let n = k.nrows();
    let positions: Vec<usize> = (0..measures.len()).collect();
    cyclic_orders(&positions)
        .into_iter()
        .map(|order| {
            let mut m = DMatrix::<f64>::identity(n, n);
            for &w in &order {
                let mut scaled = k.clone();
                for i in 0..n {
                    let d = measures[w][i];
                    for j in 0..n {
                        scaled[(i, j)] *= d;
                    }
                }
                m *= scaled;
            }
            m.trace()
        })
        .sum()
}

/// Measure-weighted free chain. A singleton block is the total mass `|nu|`;
/// larger blocks sum the `r-1`-factor chain integral over all orderings:
///
/// ```text
/// ch(K; nu_1..nu_r) = sum_{pi} int K(y_1,y_2) ... K(y_{r-1},y_r)
///                     dnu_{pi(1)}(y_1) ... dnu_{pi(r)}(y_r)
/// ```
pub fn measure_free_chain_value(k: &DMatrix<f64>, measures: &[&DVector<f64>]) -> f64 {
    assert!(!measures.is_empty());
    if measures.len() == 1 {
        return measures[0].sum();
    }
    let positions: Vec<usize> = (0..measures.len()).collect();
    permutations(&positions)
        .into_iter()
        .map(|order| {
            let mut v: DVector<f64> = measures[*order.last().unwrap()].clone();
            for &w in order[..order.len() - 1].iter().rev() {
                let kv = k * &v;
                v = DVector::from_fn(kv.len(), |i, _| measures[w][i] * kv[i]);
            }
            v.sum()
        })
        .sum()
}

/// Number of cycles of a permutation given as the image list `i -> perm[i]`.
fn cycle_count(perm: &[usize]) -> usize {
    let mut seen = vec![false; perm.len()];
    let mut cycles = 0;
    for start in 0..perm.len() {
        if seen[start] {
            continue;
        }
        cycles += 1;
        let mut i = start;
        while !seen[i] {
            seen[i] = true;
            i = perm[i];
        }
    }
    cycles
}
