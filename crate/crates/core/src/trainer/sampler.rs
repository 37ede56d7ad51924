use std::ops::Range;

use crate::{Error, Result};

/// Indices of the `step`-th sequential mini-batch over `range`.
///
/// Batch starts advance by `stride` and wrap to the start of the range once the next batch
/// would run past its end. Index `t` means a decision at the close of `t`.
pub fn sample_sequential_batch(range: Range<usize>, batch_size: usize, step: usize, stride: usize) -> Result<Vec<usize>> {
    if batch_size == 0 || stride == 0 {
        return Err(Error::arg("batch size and stride must be positive"));
    }
    let len = range.end.saturating_sub(range.start);
    if len < batch_size {
        return Err(Error::arg(format!("training range {range:?} holds {len} indices, fewer than batch size {batch_size}")));
    }
    let positions = (len - batch_size) / stride + 1;
    let start = range.start + (step % positions) * stride;
    Ok((start..start + batch_size).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_batch_and_wrap() {
        assert_eq!(sample_sequential_batch(50..200, 10, 0, 10).unwrap(), (50..60).collect::<Vec<_>>());
        assert_eq!(sample_sequential_batch(50..200, 10, 14, 10).unwrap(), (190..200).collect::<Vec<_>>());
        assert_eq!(sample_sequential_batch(50..200, 10, 15, 10).unwrap(), (50..60).collect::<Vec<_>>());
        assert!(sample_sequential_batch(50..55, 10, 0, 10).is_err());
    }

    proptest! {
        #[test]
        fn batches_are_contiguous_and_inside(lo in 0usize..100, len in 1usize..300, batch in 1usize..50, stride in 1usize..60, step in 0usize..10_000) {
            prop_assume!(len >= batch);
            let b = sample_sequential_batch(lo..lo + len, batch, step, stride).unwrap();
            prop_assert_eq!(b.len(), batch);
            prop_assert!(b[0] >= lo && *b.last().unwrap() < lo + len);
            prop_assert!(b.windows(2).all(|p| p[1] == p[0] + 1));
        }
    }
}
