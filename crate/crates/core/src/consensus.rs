//! Common-variable ring update and the closed-form slack updates.

use crate::error::{Error, Result};
use crate::family::Family;
use crate::scalar::{clamp, Real};

/// What block `i` contributes to the ring.
#[derive(Debug, Clone, Copy)]
pub struct RingInput<'a, T> {
    pub x: &'a [T],
    pub pxy: &'a [T],
    pub nxy: &'a [T],
    pub pxmu: &'a [T],
    pub nxmu: &'a [T],
    pub rho: T,
}

/// Message passed between consecutive blocks of the ring.
#[derive(Debug, Clone, PartialEq)]
pub struct RingMessage<T> {
    pub sum: Vec<T>,
    pub weight: T,
}

impl<T> RingMessage<T> {
    /// Payload size on the wire: the running vector, the weight, and a
    /// two-word header (sender, iteration).
    pub fn bytes(&self) -> usize {
        (self.sum.len() + 1) * std::mem::size_of::<T>() + 2 * std::mem::size_of::<u64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RingOutcome<T> {
    pub z: Vec<T>,
    /// Payload bytes of each hop, in ring order (`N - 1` hops).
    pub hop_bytes: Vec<usize>,
}

fn add_contribution<T: Real>(msg: &mut RingMessage<T>, b: &RingInput<'_, T>, tau: T, z_k: &[T]) {
    let two_rho = T::two() * b.rho;
    for j in 0..msg.sum.len() {
        msg.sum[j] += two_rho * b.x[j]
            + b.rho * (b.pxy[j] - b.nxy[j])
            + b.pxmu[j]
            - b.nxmu[j]
            + tau * z_k[j];
    }
    msg.weight += tau + two_rho;
}

/// Ring accumulation of the common variable, visiting blocks in `order`.
pub fn update_z_ring<T: Real>(
    blocks: &[RingInput<'_, T>],
    order: &[usize],
    tau: T,
    z_k: &[T],
    bound: &[T],
) -> Result<RingOutcome<T>> {
    if blocks.is_empty() || order.is_empty() {
        return Err(Error::Partition("ring needs at least one block".into()));
    }
    let mut msg = RingMessage {
        sum: vec![T::zero(); z_k.len()],
        weight: T::zero(),
    };
    let mut hop_bytes = Vec::with_capacity(order.len() - 1);
    for (pos, &i) in order.iter().enumerate() {
        add_contribution(&mut msg, &blocks[i], tau, z_k);
        if pos + 1 < order.len() {
            hop_bytes.push(msg.bytes());
        }
    }
    let z = msg
        .sum
        .iter()
        .zip(bound)
        .map(|(&s, &u)| clamp(s / msg.weight, -u, u))
        .collect();
    Ok(RingOutcome { z, hop_bytes })
}

/// Same weights as the ring, summed in one pass per coordinate.
pub fn update_z_direct<T: Real>(blocks: &[RingInput<'_, T>], tau: T, z_k: &[T], bound: &[T]) -> Vec<T> {
    let weight: T = blocks.iter().map(|b| tau + T::two() * b.rho).sum();
    (0..z_k.len())
        .map(|j| {
            let num: T = blocks
                .iter()
                .map(|b| {
                    T::two() * b.rho * b.x[j]
                        + b.rho * (b.pxy[j] - b.nxy[j])
                        + b.pxmu[j]
                        - b.nxmu[j]
                })
                .sum::<T>()
                + T::from_usize_lossy(blocks.len()) * tau * z_k[j];
            clamp(num / weight, -bound[j], bound[j])
        })
        .collect()
}

/// Closed-form box-projected slack update, coordinatewise.
///
/// `base` is the residual without its slack (`X - Z` for `PX`, `F(X)` for `F`,
/// `-H(X)` for `NH`, ...).
pub fn update_slack<T: Real>(
    _kind: Family,
    prev: &[T],
    base: &[T],
    dual: &[T],
    gamma: T,
    rho: T,
    upper: &[T],
) -> Vec<T> {
    (0..prev.len())
        .map(|j| {
            let v = (gamma * prev[j] - rho * base[j] - dual[j]) / (gamma + rho);
            clamp(v, T::zero(), upper[j])
        })
        .collect()
}

/// The per-coordinate minimand of the slack update.
pub fn slack_objective<T: Real>(y: T, prev: T, base: T, dual: T, gamma: T, rho: T) -> T {
    let r = base + y;
    dual * r + rho * T::half() * r * r + gamma * T::half() * (y - prev) * (y - prev)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_block_average() {
        let x = [0.5, -2.0];
        let zero = [0.0, 0.0];
        let b = [RingInput { x: &x, pxy: &zero, nxy: &zero, pxmu: &zero, nxmu: &zero, rho: 1.0 }];
        let out = update_z_ring(&b, &[0], 0.0, &[0.3, 0.3], &[1.0, 1.0]).unwrap();
        assert_eq!(out.z, vec![0.5, -1.0]);
        assert!(out.hop_bytes.is_empty());
    }

    #[test]
    fn equal_copies_weighted_average() {
        let x = [0.4];
        let zero = [0.0];
        let mk = |rho| RingInput { x: &x, pxy: &zero, nxy: &zero, pxmu: &zero, nxmu: &zero, rho };
        let b = [mk(1.0), mk(2.0), mk(0.5)];
        let tau = 3.0;
        let zk = [-0.2];
        let out = update_z_ring(&b, &[0, 1, 2], tau, &zk, &[1.0]).unwrap();
        let expect: f64 = (2.0 * 3.5 * 0.4 + 3.0 * tau * -0.2) / (3.0 * tau + 7.0);
        assert!((out.z[0] - expect).abs() < 1e-15);
        assert_eq!(out.hop_bytes, vec![2 * 8 + 16, 2 * 8 + 16]);
    }

    #[test]
    fn empty_ring_rejected() {
        assert!(update_z_ring::<f64>(&[], &[], 1.0, &[], &[]).is_err());
    }

    #[test]
    fn slack_examples() {
        let y = update_slack(Family::F, &[1.0], &[-0.5], &[0.25], 1.0, 1.0, &[10.0]);
        assert_eq!(y, vec![0.625]);
        let y: Vec<f64> = update_slack(Family::G, &[0.3], &[-0.3], &[0.0], 2.0, 1.0, &[1.0]);
        assert!((y[0] - 0.3).abs() < 1e-15);
        let y: Vec<f64> = update_slack(Family::G, &[0.3], &[5.0], &[1.0], 1e12, 1.0, &[1.0]);
        assert!((y[0] - 0.3).abs() < 1e-10);
        let y = update_slack(Family::PH, &[0.3], &[5.0], &[1.0], 1.0, 1.0, &[1.0]);
        assert_eq!(y, vec![0.0]);
    }
}
