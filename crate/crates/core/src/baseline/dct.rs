//! Orthonormal 8×8 DCT-II and its inverse.

pub const N: usize = 8;

fn basis() -> [[f64; N]; N] {
    let mut b = [[0.0; N]; N];
    for (u, row) in b.iter_mut().enumerate() {
        let scale = if u == 0 { (1.0 / N as f64).sqrt() } else { (2.0 / N as f64).sqrt() };
        for (i, v) in row.iter_mut().enumerate() {
            *v = scale * ((2 * i + 1) as f64 * u as f64 * std::f64::consts::PI / (2 * N) as f64).cos();
        }
    }
    b
}

/// Forward transform of a row-major 8×8 block.
pub fn forward(block: &[f64; N * N]) -> [f64; N * N] {
    let b = basis();
    let mut tmp = [0.0; N * N];
    for y in 0..N {
        for u in 0..N {
            tmp[y * N + u] = (0..N).map(|x| b[u][x] * block[y * N + x]).sum();
        }
    }
    let mut out = [0.0; N * N];
    for v in 0..N {
        for u in 0..N {
            out[v * N + u] = (0..N).map(|y| b[v][y] * tmp[y * N + u]).sum();
        }
    }
    out
}

pub fn inverse(coeffs: &[f64; N * N]) -> [f64; N * N] {
    let b = basis();
    let mut tmp = [0.0; N * N];
    for y in 0..N {
        for u in 0..N {
            tmp[y * N + u] = (0..N).map(|v| b[v][y] * coeffs[v * N + u]).sum();
        }
    }
    let mut out = [0.0; N * N];
    for y in 0..N {
        for x in 0..N {
            out[y * N + x] = (0..N).map(|u| b[u][x] * tmp[y * N + u]).sum();
        }
    }
    out
}
