//! Systematic Hamming(7,4) code.
//!
//! Codeword `[d1 d2 d3 d4 p1 p2 p3]` with
//! `p1 = d1⊕d2⊕d4`, `p2 = d1⊕d3⊕d4`, `p3 = d2⊕d3⊕d4`, i.e. generator
//!
//! ```text
//! G = | 1 0 0 0 1 1 0 |
//!     | 0 1 0 0 1 0 1 |
//!     | 0 0 1 0 0 1 1 |
//!     | 0 0 0 1 1 1 1 |
//! ```
//!
//! Bits are `u8` values 0 or 1.

pub const GENERATOR: [[u8; 7]; 4] = [
    [1, 0, 0, 0, 1, 1, 0],
    [0, 1, 0, 0, 1, 0, 1],
    [0, 0, 1, 0, 0, 1, 1],
    [0, 0, 0, 1, 1, 1, 1],
];

fn encode_block(d: &[u8]) -> [u8; 7] {
    [d[0], d[1], d[2], d[3], d[0] ^ d[1] ^ d[3], d[0] ^ d[2] ^ d[3], d[1] ^ d[2] ^ d[3]]
}

/// Column of the parity-check matrix for each codeword position, read as
/// the 3-bit syndrome `(s1, s2, s3)`.
const SYNDROMES: [u8; 7] = [0b110, 0b101, 0b011, 0b111, 0b100, 0b010, 0b001];

/// Encodes `bits`, zero-padding to a multiple of 4.
pub fn encode(bits: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(bits.len().div_ceil(4) * 7);
    for chunk in bits.chunks(4) {
        let mut d = [0u8; 4];
        d[..chunk.len()].copy_from_slice(chunk);
        out.extend(encode_block(&d));
    }
    out
}

/// Syndrome decoding. Returns the data bits and the number of blocks in
/// which a bit was flipped. A trailing partial block is ignored.
pub fn decode(coded: &[u8]) -> (Vec<u8>, usize) {
    let mut out = Vec::with_capacity(coded.len() / 7 * 4);
    let mut corrected = 0;
    for block in coded.chunks_exact(7) {
        let mut c: [u8; 7] = block.try_into().unwrap();
        let s1 = c[0] ^ c[1] ^ c[3] ^ c[4];
        let s2 = c[0] ^ c[2] ^ c[3] ^ c[5];
        let s3 = c[1] ^ c[2] ^ c[3] ^ c[6];
        let syndrome = s1 << 2 | s2 << 1 | s3;
        if syndrome != 0 {
            let pos = SYNDROMES.iter().position(|&s| s == syndrome).unwrap();
            c[pos] ^= 1;
            corrected += 1;
        }
        out.extend_from_slice(&c[..4]);
    }
    (out, corrected)
}
