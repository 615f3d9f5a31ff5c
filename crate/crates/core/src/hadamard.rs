/// In-place unnormalized fast Walsh–Hadamard transform.
///
/// With configurations encoded as bitmasks (bit `i` set means spin `i` is
/// `-1`), entry `K` of the output is `sum_x v[x] * (-1)^{|x & K|}`, i.e. the
/// expectation of the monomial `prod_{i in K} sigma_i` when `v` is a
/// probability table.
pub fn fwht(values: &mut [f64]) {
    let n = values.len();
    assert!(n.is_power_of_two(), "length must be a power of two");
    let mut h = 1;
    while h < n {
        for block in values.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
}

/// `(-1)^{popcount(x & mask)}` as a float.
#[inline]
pub fn parity_sign(x: u64, mask: u64) -> f64 {
    if (x & mask).count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_direct_sum() {
        let v: Vec<f64> = (0..16).map(|i| (i as f64).sin()).collect();
        let mut fast = v.clone();
        fwht(&mut fast);
        for k in 0..16u64 {
            let direct: f64 = (0..16u64).map(|x| v[x as usize] * parity_sign(x, k)).sum();
            assert!((direct - fast[k as usize]).abs() < 1e-12);
        }
    }
}
