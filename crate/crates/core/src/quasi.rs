//! Halton low-discrepancy points with an optional Cranley–Patterson shift.

const PRIMES: [u64; 32] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109,
    113, 127, 131,
];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while i > 0 {
        out += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    out
}

/// The `index`-th Halton point in `[0, 1)^dim` (index 0 is the origin).
pub fn halton(index: u64, dim: usize) -> Vec<f64> {
    assert!(dim <= PRIMES.len(), "Halton sequence supports up to {} dimensions", PRIMES.len());
    PRIMES[..dim].iter().map(|&p| radical_inverse(index, p)).collect()
}

/// `n` Halton points starting after the origin, each coordinate shifted by
/// `shift` modulo 1.
pub fn halton_points(n: usize, dim: usize, shift: Option<&[f64]>) -> Vec<Vec<f64>> {
    (1..=n as u64)
        .map(|i| {
            let mut p = halton(i, dim);
            if let Some(s) = shift {
                for (v, s) in p.iter_mut().zip(s) {
                    *v = (*v + s).fract();
                }
            }
            p
        })
        .collect()
}

/// Derives an independent stream seed from a base seed and two labels.
pub fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_points() {
        assert_eq!(halton(1, 2), vec![0.5, 1.0 / 3.0]);
        assert_eq!(halton(2, 2), vec![0.25, 2.0 / 3.0]);
        assert_eq!(halton(3, 1), vec![0.75]);
    }

    #[test]
    fn shifted_points_stay_in_unit_cube() {
        for p in halton_points(200, 3, Some(&[0.9, 0.5, 0.99])) {
            assert!(p.iter().all(|v| (0.0..1.0).contains(v)));
        }
    }

    #[test]
    fn one_dimensional_stratification() {
        let pts = halton_points(63, 1, None);
        for k in 0..8 {
            let lo = k as f64 / 8.0;
            let c = pts.iter().filter(|p| p[0] >= lo && p[0] < lo + 0.125).count();
            assert!((7..=9).contains(&c));
        }
    }
}
