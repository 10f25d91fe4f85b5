//! Signed feature hashing with a platform-independent hash.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over the token's UTF-8 bytes.
pub fn stable_hash(token: &str) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in token.as_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Slot and sign a token lands on in a `dim`-wide vector.
pub fn slot(token: &str, dim: usize) -> (usize, f64) {
    let h = stable_hash(token);
    let index = (h % dim as u64) as usize;
    let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
    (index, sign)
}

/// Accumulates `sign * weight` for every token into a zero vector.
pub fn hash_tokens<S: AsRef<str>>(tokens: &[(S, f64)], dim: usize) -> Vec<f64> {
    assert!(dim > 0, "hash dimension must be positive");
    let mut v = vec![0.0; dim];
    hash_into(tokens.iter().map(|(t, w)| (t.as_ref(), *w)), &mut v);
    v
}

/// Unit-weight variant used for token sequences.
pub fn hash_unit_tokens<S: AsRef<str>>(tokens: &[S], dim: usize) -> Vec<f64> {
    assert!(dim > 0, "hash dimension must be positive");
    let mut v = vec![0.0; dim];
    hash_into(tokens.iter().map(|t| (t.as_ref(), 1.0)), &mut v);
    v
}

fn hash_into<'a>(tokens: impl Iterator<Item = (&'a str, f64)>, out: &mut [f64]) {
    let dim = out.len();
    for (token, weight) in tokens {
        let (i, sign) = slot(token, dim);
        out[i] += sign * weight;
    }
}
