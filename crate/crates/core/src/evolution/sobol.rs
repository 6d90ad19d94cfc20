//! Two-dimensional Sobol points for sweeping (mutation, crossover) rates.
//!
//! Dimension 1 is the van der Corput sequence in base 2. Dimension 2 uses
//! the primitive polynomial x + 1 with m_1 = 1, which gives the direction
//! numbers m_k = 2 m_(k-1) xor m_(k-1) = 1, 3, 5, 15, 17, ...
//! Points are generated in Gray-code order and the all-zero point is
//! skipped, so the sequence opens with (0.5, 0.5).

const BITS: usize = 32;

fn directions() -> [[u32; BITS]; 2] {
    let mut v = [[0u32; BITS]; 2];
    let mut m: u32 = 1;
    #[allow(clippy::needless_range_loop)]
    for k in 0..BITS {
        v[0][k] = 1 << (BITS - 1 - k);
        if k > 0 {
            m = (m << 1) ^ m;
        }
        v[1][k] = m << (BITS - 1 - k);
    }
    v
}

/// First `n` points of the sequence, each in `[0, 1)^2`.
pub fn sobol_rate_grid(n: usize) -> Vec<(f64, f64)> {
    let v = directions();
    let scale = 2f64.powi(BITS as i32);
    let mut x = [0u32; 2];
    let mut out = Vec::with_capacity(n);
    for i in 0..n as u64 {
        // the bit that flips between gray(i) and gray(i + 1)
        let c = (!i).trailing_zeros() as usize;
        assert!(c < BITS, "Sobol index out of range");
        x[0] ^= v[0][c];
        x[1] ^= v[1][c];
        out.push((x[0] as f64 / scale, x[1] as f64 / scale));
    }
    out
}
