use alloc::vec::Vec;
use core::ops::Range;

/// Contiguous block partition of `0..n` over `parts` ranks. The first
/// `n % parts` ranks receive one extra task.
pub fn block_partition(n: usize, parts: usize) -> Vec<Range<usize>> {
    if parts == 0 {
        return Vec::new();
    }
    let base = n / parts;
    let extra = n % parts;
    let mut start = 0;
    (0..parts)
        .map(|r| {
            let len = base + usize::from(r < extra);
            let range = start..start + len;
            start += len;
            range
        })
        .collect()
}
