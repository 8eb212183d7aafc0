use alloc::format;
use alloc::vec;

use crate::decomp::Partition;
use crate::{Error, Result};

/// Slabs of whole cell layers along the longest grid axis (the first such
/// axis on ties). With `L` layers, the first `L mod R` ranks take one extra
/// layer.
pub fn partition_grid(dims: [usize; 3], n_ranks: usize) -> Result<Partition> {
    let n = dims[0] * dims[1] * dims[2];
    if n_ranks == 0 || n_ranks > n {
        return Err(Error::Partition(format!("{n_ranks} ranks for {n} cells")));
    }
    let axis = (0..3).fold(0, |a, k| if dims[k] > dims[a] { k } else { a });
    let layers = dims[axis];
    if n_ranks > layers {
        return Err(Error::Partition(format!("{n_ranks} ranks for {layers} slab layers")));
    }
    let (base, rem) = (layers / n_ranks, layers % n_ranks);
    let mut layer_rank = vec![0u16; layers];
    let mut l = 0;
    for r in 0..n_ranks {
        for _ in 0..base + usize::from(r < rem) {
            layer_rank[l] = r as u16;
            l += 1;
        }
    }
    let mut assignment = vec![0u16; n];
    for (t, a) in assignment.iter_mut().enumerate() {
        let c = [t % dims[0], (t / dims[0]) % dims[1], t / (dims[0] * dims[1])];
        *a = layer_rank[c[axis]];
    }
    Ok(Partition { assignment, n_ranks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_slabs() {
        let p = partition_grid([4, 4, 4], 4).unwrap();
        assert_eq!(p.counts(), [16, 16, 16, 16]);
        // slab r is the layer x = r
        for (t, &r) in p.assignment.iter().enumerate() {
            assert_eq!(r as usize, t % 4);
        }
    }

    #[test]
    fn single_rank_is_identity() {
        assert_eq!(partition_grid([3, 2, 5], 1).unwrap(), Partition::single(30));
    }

    #[test]
    fn remainder_goes_to_first_ranks() {
        assert_eq!(partition_grid([4, 4, 4], 3).unwrap().counts(), [32, 16, 16]);
    }

    #[test]
    fn longest_axis_is_used() {
        let p = partition_grid([2, 2, 6], 3).unwrap();
        for (t, &r) in p.assignment.iter().enumerate() {
            assert_eq!(r as usize, (t / 4) / 2);
        }
    }

    #[test]
    fn too_many_ranks() {
        assert!(partition_grid([2, 2, 2], 9).is_err());
        assert!(partition_grid([4, 4, 4], 5).is_err());
    }
}
