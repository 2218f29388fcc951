//! Closed-form moment engines, all by direct enumeration at index level.
//!
//! Each engine computes one side of one of the distributional identities the
//! crate verifies. The point lists allow repeated states; every occurrence
//! is a distinct enumeration index (see [`crate::combinat`]), which is the
//! convention under which partition formulas agree with the raw pairing
//! expansion when points coincide. The `oracle` submodule carries the
//! brute-force expansions (pairings over doubled points, term-by-term
//! binomial expansion, centered-square expansion) that pin these engines
//! down; oracles share no code with the partition engines above the raw
//! pairing enumerator.
//!
//! Throughout, `C` / `u` is a kernel matrix: the Gaussian covariance, the
//! potential, or a hitting kernel, depending on the identity. Mixed
//! cycle/chain partition sums factorize over blocks, so engines of the form
//! "sum over partitions into cycle blocks and chain blocks" are products of
//! per-block weights over each partition.

use nalgebra::DVector;

use crate::combinat::{
    self, PAIRING_CAP, PARTITION_CAP, PERMANENT_CAP,
};
use crate::error::{Error, Result};
use crate::kernels::{Kernel, KernelKind};

fn cap(what: &'static str, n: usize, cap: usize) -> Result<()> {
    if n > cap {
        Err(Error::CapExceeded { what, n, cap })
    } else {
        Ok(())
    }
}

/// `E[G_{x_1} ... G_{x_n}]` for a mean-zero Gaussian field with covariance
/// `C`: the sum over pairings of covariance products. Zero for odd `n`.
pub fn gauss_moment(c: &Kernel, points: &[usize]) -> Result<f64> {
    cap("gauss_moment points", points.len(), PAIRING_CAP)?;
    let k = c.matrix();
    let mut total = 0.0;
    for pairing in combinat::pairings(points.len())? {
        let mut prod = 1.0;
        for &(i, j) in &pairing {
            prod *= k[(points[i], points[j])];
        }
        total += prod;
    }
    Ok(total)
}

/// `E[prod_i G_{x_i}^2 / 2]`: sum over set partitions of the index set of
/// the product of `(1/2) cy(block)` weights.
pub fn gauss_square_moment(c: &Kernel, points: &[usize]) -> Result<f64> {
    cap("gauss_square_moment points", points.len(), PARTITION_CAP)?;
    let k = c.matrix();
    let mut total = 0.0;
    for partition in combinat::set_partitions(points.len())? {
        let mut prod = 1.0;
        for block in &partition {
            let block_pts: Vec<usize> = block.iter().map(|&i| points[i]).collect();
            prod *= 0.5 * combinat::cycle_value(k, &block_pts);
        }
        total += prod;
    }
    Ok(total)
}

/// `E[G_a G_b prod_i G_{x_i}^2 / 2]`: over each subset `A` of the square
/// points, an anchored chain from `a` to `b` through `A` times the square
/// moment of the complement.
pub fn gauss_pair_square_moment(c: &Kernel, a: usize, b: usize, points: &[usize]) -> Result<f64> {
    cap("gauss_pair_square_moment points", points.len(), PARTITION_CAP)?;
    let k = c.matrix();
    let mut total = 0.0;
    for mask in 0u32..(1 << points.len()) {
        let (inside, outside) = split_by_mask(points, mask);
        total += combinat::chain_value(k, a, b, &inside) * gauss_square_moment(c, &outside)?;
    }
    Ok(total)
}

/// `E[prod_i (G_{x_i} + s)^2 / 2]`: sum over partitions where each block is
/// either a cycle (weight `1/2 cy`) or a free chain (weight `s^2/2 ch`);
/// factorizes as a product of per-block sums.
pub fn shifted_square_moment(c: &Kernel, s: f64, points: &[usize]) -> Result<f64> {
    cap("shifted_square_moment points", points.len(), PARTITION_CAP)?;
    let k = c.matrix();
    let w = s * s / 2.0;
    let mut total = 0.0;
    for partition in combinat::set_partitions(points.len())? {
        let mut prod = 1.0;
        for block in &partition {
            let block_pts: Vec<usize> = block.iter().map(|&i| points[i]).collect();
            prod *= 0.5 * combinat::cycle_value(k, &block_pts)
                + w * combinat::free_chain_value(k, &block_pts);
        }
        total += prod;
    }
    Ok(total)
}

/// Moments of total local times started at `x` (transient chain):
/// `E^x[prod_i L^{x_i}]` as the sum over orderings of left-anchored chain
/// products `u(x, .) u(., .) ... u(., .)`.
pub fn lt_moment_start(u: &Kernel, x: usize, points: &[usize]) -> Result<f64> {
    cap("lt_moment_start points", points.len(), PERMANENT_CAP)?;
    let k = u.matrix();
    if points.is_empty() {
        return Ok(1.0);
    }
    let positions: Vec<usize> = (0..points.len()).collect();
    let mut total = 0.0;
    for order in permutations_of(&positions) {
        let mut prod = 1.0;
        let mut prev = x;
        for &w in &order {
            prod *= k[(prev, points[w])];
            prev = points[w];
        }
        total += prod;
    }
    Ok(total)
}

/// Local-time moments of the unnormalized bridge measure from `x` to `y`:
/// the anchored chain through all points. Empty points give the total mass
/// `u(x,y)`.
pub fn lt_moment_bridge(u: &Kernel, x: usize, y: usize, points: &[usize]) -> Result<f64> {
    cap("lt_moment_bridge points", points.len(), PERMANENT_CAP)?;
    Ok(combinat::chain_value(u.matrix(), x, y, points))
}

/// Local-time moments under the loop measure: the cycle value of the whole
/// point set.
pub fn loop_measure_moment(u: &Kernel, points: &[usize]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::Domain(
            "loop measure moment needs at least one point".into(),
        ));
    }
    cap("loop_measure_moment points", points.len(), PERMANENT_CAP)?;
    Ok(combinat::cycle_value(u.matrix(), points))
}

/// Moments of the loop-soup occupation field with intensity weight `alpha`:
/// sum over partitions of products of `alpha * cy(block)`. Equals the
/// alpha-permanent route exactly; both are exposed so the harness can
/// compare them.
pub fn soup_field_moment(u: &Kernel, alpha: f64, points: &[usize]) -> Result<f64> {
    cap("soup_field_moment points", points.len(), PERMANENT_CAP)?;
    let k = u.matrix();
    let mut total = 0.0;
    for partition in combinat::set_partitions(points.len())? {
        let mut prod = 1.0;
        for block in &partition {
            let block_pts: Vec<usize> = block.iter().map(|&i| points[i]).collect();
            prod *= alpha * combinat::cycle_value(k, &block_pts);
        }
        total += prod;
    }
    Ok(total)
}

/// Moments of the local-time field at an inverse-local-time horizon:
/// `E^{z0}[prod_i L^{x_i}_{tau(t)}]` is the sum over partitions of the index
/// set with weight `t * ch(block)` per block, over the hitting kernel.
/// Empty points give 1; any nonempty set vanishes at `t = 0`.
pub fn rayknight_lhs_moment(u_t0: &Kernel, t: f64, points: &[usize]) -> Result<f64> {
    cap("rayknight_lhs_moment points", points.len(), PERMANENT_CAP)?;
    let k = u_t0.matrix();
    let mut total = 0.0;
    for partition in combinat::set_partitions(points.len())? {
        let mut prod = 1.0;
        for block in &partition {
            let block_pts: Vec<usize> = block.iter().map(|&i| points[i]).collect();
            prod *= t * combinat::free_chain_value(k, &block_pts);
        }
        total += prod;
    }
    Ok(total)
}

/// Local-time moments under the excursion (entrance) measure at the
/// distinguished state: 1 for a single point, otherwise the free chain over
/// the hitting kernel. Points must avoid the distinguished state itself.
pub fn excursion_moment(u_t0: &Kernel, points: &[usize]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::Domain(
            "excursion moment needs at least one point".into(),
        ));
    }
    cap("excursion_moment points", points.len(), PERMANENT_CAP)?;
    let z0 = match *u_t0.kind() {
        KernelKind::Killed { z0 } | KernelKind::Tau { z0, .. } => Some(z0),
        _ => None,
    };
    if let Some(z0) = z0 {
        if points.contains(&z0) {
            return Err(Error::Domain(format!(
                "excursion moment point {:?} is the distinguished state itself",
                u_t0.states()[z0]
            )));
        }
    }
    Ok(combinat::free_chain_value(u_t0.matrix(), points))
}

/// Interlacement occupation moments for one block of measures:
/// `ch(nu_1..nu_k)`, the measure-integrated chain with the total-mass
/// convention for singletons. Multilinear in each measure.
pub fn interlacement_moment(u: &Kernel, measures: &[&DVector<f64>]) -> Result<f64> {
    cap("interlacement_moment measures", measures.len(), 8)?;
    if measures.is_empty() {
        return Ok(1.0);
    }
    for m in measures {
        if m.len() != u.len() {
            return Err(Error::Domain(
                "measure dimension does not match kernel".into(),
            ));
        }
    }
    Ok(combinat::measure_free_chain_value(u.matrix(), measures))
}

/// Level-`t` interlacement field moments: sum over partitions of the measure
/// indices of products of `t * ch(block)`.
pub fn interlacement_field_moment(u: &Kernel, measures: &[&DVector<f64>], t: f64) -> Result<f64> {
    cap("interlacement_field_moment measures", measures.len(), 8)?;
    let mut total = 0.0;
    for partition in combinat::set_partitions(measures.len())? {
        let mut prod = 1.0;
        for block in &partition {
            let block_ms: Vec<&DVector<f64>> = block.iter().map(|&i| measures[i]).collect();
            prod *= t * interlacement_moment(u, &block_ms)?;
        }
        total += prod;
    }
    Ok(total)
}

/// Moments of Wick-centered squares `prod_i :G^2:(nu_i)/2`: partitions with
/// every block of size at least 2, weight `(1/2) cy(block)` per block. A
/// single measure gives 0 (the centering).
pub fn wick_square_moment(u: &Kernel, measures: &[&DVector<f64>]) -> Result<f64> {
    cap("wick_square_moment measures", measures.len(), 8)?;
    let k = u.matrix();
    let mut total = 0.0;
    for partition in combinat::set_partitions_min_block(measures.len(), 2)? {
        let mut prod = 1.0;
        for block in &partition {
            let block_ms: Vec<&DVector<f64>> = block.iter().map(|&i| measures[i]).collect();
            prod *= 0.5 * combinat::measure_cycle_value(k, &block_ms);
        }
        total += prod;
    }
    Ok(total)
}

/// Gaussian side of the interlacement identity:
/// `E[prod_i (:G^2:(nu_i)/2 + sqrt(2t) G_{nu_i} + t |nu_i|)]` as a mixed
/// partition sum: cycle blocks need size at least 2 and weigh `(1/2) cy`;
/// chain blocks weigh `t * ch` with the `|nu|` singleton convention.
pub fn wick_shifted_square_moment(
    u: &Kernel,
    measures: &[&DVector<f64>],
    t: f64,
) -> Result<f64> {
    cap("wick_shifted_square_moment measures", measures.len(), 8)?;
    let k = u.matrix();
    let mut total = 0.0;
    for partition in combinat::set_partitions(measures.len())? {
        let mut prod = 1.0;
        for block in &partition {
            let block_ms: Vec<&DVector<f64>> = block.iter().map(|&i| measures[i]).collect();
            let cycle_part = if block.len() >= 2 {
                0.5 * combinat::measure_cycle_value(k, &block_ms)
            } else {
                0.0
            };
            prod *= cycle_part + t * combinat::measure_free_chain_value(k, &block_ms);
        }
        total += prod;
    }
    Ok(total)
}

/// Split `points` into (selected, complement) by bitmask over positions.
pub fn split_by_mask(points: &[usize], mask: u32) -> (Vec<usize>, Vec<usize>) {
    let mut inside = Vec::new();
    let mut outside = Vec::new();
    for (i, &p) in points.iter().enumerate() {
        if mask & (1 << i) != 0 {
            inside.push(p);
        } else {
            outside.push(p);
        }
    }
    (inside, outside)
}

fn permutations_of(items: &[usize]) -> Vec<Vec<usize>> {
    use itertools::Itertools;
    items
        .iter()
        .copied()
        .permutations(items.len())
        .collect()
}

/// Brute-force expansions used to pin the partition engines down. These go
/// through raw pairings only.
pub mod oracle {
    use super::*;

    /// `E[prod G^2/2]` by doubling every point and enumerating pairings.
    pub fn square_moment(c: &Kernel, points: &[usize]) -> Result<f64> {
        let doubled: Vec<usize> = points.iter().flat_map(|&p| [p, p]).collect();
        Ok(gauss_moment(c, &doubled)? / 2f64.powi(points.len() as i32))
    }

    /// `E[G_a G_b prod G^2/2]` by pairing enumeration.
    pub fn pair_square_moment(c: &Kernel, a: usize, b: usize, points: &[usize]) -> Result<f64> {
        let mut all = vec![a, b];
        all.extend(points.iter().flat_map(|&p| [p, p]));
        Ok(gauss_moment(c, &all)? / 2f64.powi(points.len() as i32))
    }

    /// `E[prod (G+s)^2/2]` by expanding each square into
    /// `G^2 + 2sG + s^2` and evaluating every term with the pairing engine.
    pub fn shifted_square_moment(c: &Kernel, s: f64, points: &[usize]) -> Result<f64> {
        expanded_shifted(c, s, points, None)
    }

    /// `E[G_x prod (G+s)^2/2]`, the extra-factor moment on the right side of
    /// the shifted-field identity.
    pub fn gx_shifted_square_moment(
        c: &Kernel,
        x: usize,
        s: f64,
        points: &[usize],
    ) -> Result<f64> {
        expanded_shifted(c, s, points, Some(x))
    }

    fn expanded_shifted(c: &Kernel, s: f64, points: &[usize], extra: Option<usize>) -> Result<f64> {
        // Choice per factor: the squared term, the linear term, the constant.
        let k = points.len();
        let mut total = 0.0;
        let mut choice = vec![0u8; k];
        loop {
            let mut coef = 1.0;
            let mut gauss_pts: Vec<usize> = extra.into_iter().collect();
            for (i, &ch) in choice.iter().enumerate() {
                match ch {
                    0 => gauss_pts.extend([points[i], points[i]]),
                    1 => {
                        coef *= 2.0 * s;
                        gauss_pts.push(points[i]);
                    }
                    _ => coef *= s * s,
                }
            }
            total += coef * gauss_moment(c, &gauss_pts)?;
            // Odometer over base-3 choices.
            let mut pos = 0;
            loop {
                if pos == k {
                    return Ok(total / 2f64.powi(k as i32));
                }
                choice[pos] += 1;
                if choice[pos] < 3 {
                    break;
                }
                choice[pos] = 0;
                pos += 1;
            }
        }
    }

    /// `E[prod :G^2:(nu_i)/2]` by expanding every centered square into its
    /// Gaussian part minus its mean and evaluating all cross terms through
    /// the pairing engine.
    pub fn wick_square_moment(c: &Kernel, measures: &[&DVector<f64>]) -> Result<f64> {
        let n = c.len();
        let k = measures.len();
        let means: Vec<f64> = measures
            .iter()
            .map(|m| (0..n).map(|y| m[y] * c.value(y, y)).sum())
            .collect();
        let mut total = 0.0;
        // Subset T picks which factors contribute their Gaussian square; the
        // rest contribute minus their mean.
        for mask in 0u32..(1 << k) {
            let picked: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
            let mut const_part = 1.0;
            for i in 0..k {
                if mask & (1 << i) == 0 {
                    const_part *= -means[i];
                }
            }
            // Sum over state assignments for each picked factor.
            let mut assignment = vec![0usize; picked.len()];
            loop {
                let mut weight = const_part;
                let mut pts = Vec::with_capacity(2 * picked.len());
                for (slot, &i) in picked.iter().enumerate() {
                    let y = assignment[slot];
                    weight *= measures[i][y];
                    pts.extend([y, y]);
                }
                if weight != 0.0 {
                    total += weight * gauss_moment(c, &pts)?;
                }
                let mut pos = 0;
                loop {
                    if pos == picked.len() {
                        break;
                    }
                    assignment[pos] += 1;
                    if assignment[pos] < n {
                        break;
                    }
                    assignment[pos] = 0;
                    pos += 1;
                }
                if pos == picked.len() {
                    break;
                }
            }
        }
        Ok(total / 2f64.powi(k as i32))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{potential, killed_potential};
    use crate::model::ChainModel;
    use approx::assert_abs_diff_eq;

    fn k2_u() -> Kernel {
        let model = ChainModel::load(format!(
            "{}/../../fixtures/k2.json",
            env!("CARGO_MANIFEST_DIR")
        ))
        .unwrap();
        potential(&model).unwrap()
    }

    fn c3_u0() -> Kernel {
        let model = ChainModel::load(format!(
            "{}/../../fixtures/c3.json",
            env!("CARGO_MANIFEST_DIR")
        ))
        .unwrap();
        killed_potential(&model, 0).unwrap()
    }

    fn nonsym_u() -> Kernel {
        let model = ChainModel::load(format!(
            "{}/../../fixtures/nonsym3.json",
            env!("CARGO_MANIFEST_DIR")
        ))
        .unwrap();
        potential(&model).unwrap()
    }

    #[test]
    fn gauss_moment_hand_values() {
        let u = k2_u();
        assert_abs_diff_eq!(gauss_moment(&u, &[0, 0]).unwrap(), 2.0 / 3.0);
        // Three pairings of four equal points.
        assert_abs_diff_eq!(
            gauss_moment(&u, &[0, 0, 0, 0]).unwrap(),
            3.0 * (2.0f64 / 3.0).powi(2),
            epsilon = 1e-14
        );
        assert_eq!(gauss_moment(&u, &[0, 1, 0]).unwrap(), 0.0);
        assert_eq!(gauss_moment(&u, &[]).unwrap(), 1.0);
    }

    #[test]
    fn square_moment_calibrated_against_pairing_oracle() {
        let u = k2_u();
        assert_abs_diff_eq!(gauss_square_moment(&u, &[0]).unwrap(), 1.0 / 3.0);
        // Repeated point: the partition engine must reproduce E[G^4]/4.
        let direct = gauss_square_moment(&u, &[0, 0]).unwrap();
        assert_abs_diff_eq!(direct, 1.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(
            direct,
            oracle::square_moment(&u, &[0, 0]).unwrap(),
            epsilon = 1e-14
        );
        assert_eq!(gauss_square_moment(&u, &[]).unwrap(), 1.0);
    }

    #[test]
    fn pair_square_moment_matches_oracle() {
        let u = k2_u();
        // No squares: bare covariance.
        assert_abs_diff_eq!(
            gauss_pair_square_moment(&u, 0, 1, &[]).unwrap(),
            1.0 / 3.0
        );
        // One square point: hand 3-pairing value.
        let hand = 0.5
            * (u.value(0, 1) * u.value(0, 0) + 2.0 * u.value(0, 0) * u.value(1, 0));
        assert_abs_diff_eq!(
            gauss_pair_square_moment(&u, 0, 1, &[0]).unwrap(),
            hand,
            epsilon = 1e-14
        );
        for pts in [vec![0], vec![0, 1], vec![1, 1, 0]] {
            let engine = gauss_pair_square_moment(&u, 0, 1, &pts).unwrap();
            let oracle = oracle::pair_square_moment(&u, 0, 1, &pts).unwrap();
            assert_abs_diff_eq!(engine, oracle, epsilon = 1e-13);
            let swapped = gauss_pair_square_moment(&u, 1, 0, &pts).unwrap();
            assert_abs_diff_eq!(engine, swapped, epsilon = 1e-13);
        }
    }

    #[test]
    fn shifted_square_moment_matches_oracle_and_limits() {
        let u = k2_u();
        // Single point closed form.
        for s in [0.0, 0.5, 1.0, 2.0] {
            assert_abs_diff_eq!(
                shifted_square_moment(&u, s, &[0]).unwrap(),
                (u.value(0, 0) + s * s) / 2.0,
                epsilon = 1e-14
            );
        }
        for pts in [vec![0, 1], vec![0, 0, 1]] {
            for s in [0.5, 1.0, 2.0] {
                assert_abs_diff_eq!(
                    shifted_square_moment(&u, s, &pts).unwrap(),
                    oracle::shifted_square_moment(&u, s, &pts).unwrap(),
                    epsilon = 1e-13
                );
            }
            assert_abs_diff_eq!(
                shifted_square_moment(&u, 0.0, &pts).unwrap(),
                gauss_square_moment(&u, &pts).unwrap(),
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn lt_start_hand_values() {
        let u = k2_u();
        assert_abs_diff_eq!(lt_moment_start(&u, 0, &[0, 0]).unwrap(), 8.0 / 9.0);
        assert_abs_diff_eq!(lt_moment_start(&u, 0, &[1]).unwrap(), 1.0 / 3.0);
        assert_abs_diff_eq!(lt_moment_start(&u, 0, &[0, 1]).unwrap(), 1.0 / 3.0);
        assert_eq!(lt_moment_start(&u, 0, &[]).unwrap(), 1.0);
        // n! u^n at every order.
        for n in 1..=4usize {
            let pts = vec![0usize; n];
            let fact: f64 = (1..=n).map(|i| i as f64).product();
            assert_abs_diff_eq!(
                lt_moment_start(&u, 0, &pts).unwrap(),
                fact * (2.0f64 / 3.0).powi(n as i32),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn lt_bridge_hand_values() {
        let u = k2_u();
        assert_abs_diff_eq!(lt_moment_bridge(&u, 0, 1, &[]).unwrap(), 1.0 / 3.0);
        assert_abs_diff_eq!(
            lt_moment_bridge(&u, 0, 1, &[0]).unwrap(),
            u.value(0, 0) * u.value(0, 1),
            epsilon = 1e-14
        );
        // k identical interior points: k! u(x,z) u(z,z)^{k-1} u(z,y).
        for k in 1..=3usize {
            let pts = vec![0usize; k];
            let fact: f64 = (1..=k).map(|i| i as f64).product();
            let expected = fact
                * u.value(1, 0)
                * u.value(0, 0).powi(k as i32 - 1)
                * u.value(0, 1);
            assert_abs_diff_eq!(
                lt_moment_bridge(&u, 1, 1, &pts).unwrap(),
                expected,
                epsilon = 1e-13
            );
        }
    }

    #[test]
    fn loop_moment_values_and_full_perm_route() {
        let u = k2_u();
        assert_abs_diff_eq!(loop_measure_moment(&u, &[0, 1]).unwrap(), 1.0 / 9.0);
        assert_abs_diff_eq!(loop_measure_moment(&u, &[0]).unwrap(), 2.0 / 3.0);
        // Rotating the point list changes nothing.
        let v = nonsym_u();
        let a = loop_measure_moment(&v, &[0, 2, 1]).unwrap();
        let b = loop_measure_moment(&v, &[1, 0, 2]).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        // Full-permutation form: summing the closed product over all k!
        // orderings counts every cyclic class k times.
        use itertools::Itertools;
        let pts = [0usize, 2, 1, 1];
        let k = pts.len();
        let full: f64 = (0..k)
            .permutations(k)
            .map(|ord| {
                let mut prod = 1.0;
                for w in 0..k {
                    prod *= v.value(pts[ord[w]], pts[ord[(w + 1) % k]]);
                }
                prod
            })
            .sum();
        assert_abs_diff_eq!(
            loop_measure_moment(&v, &pts).unwrap(),
            full / k as f64,
            epsilon = 1e-13
        );
    }

    #[test]
    fn soup_moments_and_covariance() {
        let u = k2_u();
        assert_abs_diff_eq!(soup_field_moment(&u, 0.5, &[0]).unwrap(), 1.0 / 3.0);
        assert_abs_diff_eq!(soup_field_moment(&u, 0.5, &[0, 1]).unwrap(), 1.0 / 6.0);
        // First two moments against the mean/covariance closed forms, on a
        // non-symmetric kernel too.
        let v = nonsym_u();
        for alpha in [0.5, 1.0, 2.5] {
            for (x, y) in [(0usize, 1usize), (2, 0)] {
                let mean_x = soup_field_moment(&v, alpha, &[x]).unwrap();
                assert_abs_diff_eq!(mean_x, alpha * v.value(x, x), epsilon = 1e-13);
                let second = soup_field_moment(&v, alpha, &[x, y]).unwrap();
                let mean_y = soup_field_moment(&v, alpha, &[y]).unwrap();
                assert_abs_diff_eq!(
                    second - mean_x * mean_y,
                    alpha * v.value(x, y) * v.value(y, x),
                    epsilon = 1e-13
                );
            }
        }
    }

    #[test]
    fn soup_partition_route_equals_permanent_route() {
        let v = nonsym_u();
        let pts = [0usize, 1, 1, 2];
        for alpha in [0.5, 1.0, 2.5] {
            assert_abs_diff_eq!(
                soup_field_moment(&v, alpha, &pts).unwrap(),
                combinat::alpha_permanent(v.matrix(), &pts, alpha).unwrap(),
                epsilon = 1e-13
            );
        }
    }

    #[test]
    fn soup_half_matches_gauss_squares_on_symmetric_kernel() {
        let u = k2_u();
        for pts in [vec![0], vec![0, 1], vec![0, 0, 1], vec![1, 1, 0, 0]] {
            assert_abs_diff_eq!(
                soup_field_moment(&u, 0.5, &pts).unwrap(),
                gauss_square_moment(&u, &pts).unwrap(),
                epsilon = 1e-13
            );
        }
    }

    #[test]
    fn rayknight_lhs_hand_values() {
        let u0 = c3_u0();
        let t = 1.0;
        assert_abs_diff_eq!(rayknight_lhs_moment(&u0, t, &[1]).unwrap(), t);
        let two = rayknight_lhs_moment(&u0, t, &[1, 2]).unwrap();
        assert_abs_diff_eq!(two, t * t + t * (2.0 / 3.0), epsilon = 1e-14);
        assert_eq!(rayknight_lhs_moment(&u0, 0.0, &[1, 2]).unwrap(), 0.0);
        assert_eq!(rayknight_lhs_moment(&u0, 0.0, &[]).unwrap(), 1.0);
    }

    #[test]
    fn excursion_moment_values_and_guard() {
        let u0 = c3_u0();
        assert_abs_diff_eq!(excursion_moment(&u0, &[1]).unwrap(), 1.0);
        assert_abs_diff_eq!(excursion_moment(&u0, &[1, 2]).unwrap(), 2.0 / 3.0);
        assert!(excursion_moment(&u0, &[0, 1]).is_err());
    }

    #[test]
    fn rayknight_assembles_from_excursion_blocks() {
        let u0 = c3_u0();
        let t = 1.7;
        let pts = [1usize, 2, 1];
        let mut assembled = 0.0;
        for partition in combinat::set_partitions(pts.len()).unwrap() {
            let mut prod = 1.0;
            for block in &partition {
                let block_pts: Vec<usize> = block.iter().map(|&i| pts[i]).collect();
                prod *= t * excursion_moment(&u0, &block_pts).unwrap();
            }
            assembled += prod;
        }
        assert_abs_diff_eq!(
            rayknight_lhs_moment(&u0, t, &pts).unwrap(),
            assembled,
            epsilon = 1e-13
        );
    }

    #[test]
    fn interlacement_moment_values() {
        let u = k2_u();
        let da = DVector::from_vec(vec![1.0, 0.0]);
        let db = DVector::from_vec(vec![0.0, 1.0]);
        assert_abs_diff_eq!(interlacement_moment(&u, &[&da]).unwrap(), 1.0);
        assert_abs_diff_eq!(
            interlacement_moment(&u, &[&da, &db]).unwrap(),
            2.0 / 3.0,
            epsilon = 1e-14
        );
        // Multilinearity.
        let da2 = &da * 2.0;
        assert_abs_diff_eq!(
            interlacement_moment(&u, &[&da2, &db]).unwrap(),
            2.0 * interlacement_moment(&u, &[&da, &db]).unwrap(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn wick_square_values_and_oracle() {
        let u = k2_u();
        let da = DVector::from_vec(vec![1.0, 0.0]);
        let db = DVector::from_vec(vec![0.0, 1.0]);
        assert_eq!(wick_square_moment(&u, &[&da]).unwrap(), 0.0);
        // Centered pair: (1/2) u(a,b) u(b,a) with one cyclic class.
        let pair = wick_square_moment(&u, &[&da, &db]).unwrap();
        assert_abs_diff_eq!(pair, 1.0 / 18.0, epsilon = 1e-14);
        assert_abs_diff_eq!(
            pair,
            oracle::wick_square_moment(&u, &[&da, &db]).unwrap(),
            epsilon = 1e-14
        );
        // Mixed general measures, third order, against the oracle.
        let nu1 = DVector::from_vec(vec![0.4, 0.6]);
        let nu2 = DVector::from_vec(vec![1.0, 0.5]);
        let nu3 = DVector::from_vec(vec![0.2, 0.0]);
        assert_abs_diff_eq!(
            wick_square_moment(&u, &[&nu1, &nu2, &nu3]).unwrap(),
            oracle::wick_square_moment(&u, &[&nu1, &nu2, &nu3]).unwrap(),
            epsilon = 1e-13
        );
        let zero = DVector::from_vec(vec![0.0, 0.0]);
        assert_eq!(wick_square_moment(&u, &[&zero, &zero]).unwrap(), 0.0);
    }

    #[test]
    fn interlacement_convolution_matches_mixed_engine() {
        // Sum over subsets of field moments times Wick moments equals the
        // mixed cycle/chain engine, at several t on general measures.
        let u = k2_u();
        let nu1 = DVector::from_vec(vec![0.4, 0.6]);
        let nu2 = DVector::from_vec(vec![1.0, 0.5]);
        let nu3 = DVector::from_vec(vec![0.2, 0.3]);
        let all = [&nu1, &nu2, &nu3];
        for t in [0.3, 1.0, 2.0] {
            let mut lhs = 0.0;
            for mask in 0u32..(1 << all.len()) {
                let mut inside = Vec::new();
                let mut outside = Vec::new();
                for (i, &m) in all.iter().enumerate() {
                    if mask & (1 << i) != 0 {
                        inside.push(m);
                    } else {
                        outside.push(m);
                    }
                }
                lhs += interlacement_field_moment(&u, &inside, t).unwrap()
                    * wick_square_moment(&u, &outside).unwrap();
            }
            let rhs = wick_shifted_square_moment(&u, &all, t).unwrap();
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
        }
    }

    #[test]
    fn caps_are_enforced() {
        let u = k2_u();
        let pts13 = vec![0usize; 13];
        assert!(matches!(
            gauss_moment(&u, &pts13),
            Err(Error::CapExceeded { .. })
        ));
        let pts11 = vec![0usize; 11];
        assert!(matches!(
            gauss_square_moment(&u, &pts11),
            Err(Error::CapExceeded { .. })
        ));
        let pts10 = vec![0usize; 10];
        assert!(matches!(
            lt_moment_start(&u, 0, &pts10),
            Err(Error::CapExceeded { .. })
        ));
    }
}
