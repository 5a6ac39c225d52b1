//! Flat binary checkpoint for a single [`Mlp`].
//!
//! Layout (all integers and floats little-endian):
//!
//! | bytes      | content                                             |
//! |------------|-----------------------------------------------------|
//! | 8          | magic `SAVGOMLP`                                    |
//! | 4 (u32)    | format version, currently `1`                       |
//! | 1 (u8)     | hidden activation (0 identity, 1 relu, 2 tanh)      |
//! | 1 (u8)     | output activation (same codes)                      |
//! | 4 (u32)    | number of layer sizes `L` (≥ 2)                     |
//! | 4·L (u32)  | layer sizes `n₀ … n_{L−1}`                          |
//! | 8·P (f64)  | for each layer: `W` row-major `[nᵢ, nᵢ₊₁]`, then `b` |
//!
//! Decoding rejects trailing bytes, truncated input and non-finite values.

use super::{Activation, Mlp, NumericsError, Tensor};

pub const MAGIC: &[u8; 8] = b"SAVGOMLP";
pub const VERSION: u32 = 1;
/// Refuse to allocate for absurd headers.
const MAX_PARAMS: usize = 1 << 26;

pub fn encode(net: &Mlp) -> Vec<u8> {
    let mut out = Vec::with_capacity(22 + 4 * net.sizes().len() + 8 * net.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(net.hidden_activation().code());
    out.push(net.output_activation().code());
    out.extend_from_slice(&(net.sizes().len() as u32).to_le_bytes());
    for &s in net.sizes() {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
    for p in net.params() {
        for v in p.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NumericsError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            NumericsError::Checkpoint(format!("truncated at byte {} (needed {n} more)", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, NumericsError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, NumericsError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64, NumericsError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Mlp, NumericsError> {
    let bad = |m: String| NumericsError::Checkpoint(m);
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(bad("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let hidden = r.u8()?;
    let output = r.u8()?;
    let hidden = Activation::from_code(hidden).ok_or_else(|| bad(format!("activation code {hidden}")))?;
    let output = Activation::from_code(output).ok_or_else(|| bad(format!("activation code {output}")))?;
    let n_sizes = r.u32()? as usize;
    if n_sizes < 2 {
        return Err(bad(format!("need at least 2 layer sizes, got {n_sizes}")));
    }
    if n_sizes > (bytes.len() - r.pos) / 4 {
        return Err(bad(format!("{n_sizes} layer sizes exceed input length")));
    }
    let sizes = (0..n_sizes).map(|_| r.u32().map(|s| s as usize)).collect::<Result<Vec<_>, _>>()?;
    if sizes.contains(&0) {
        return Err(bad("zero-width layer".into()));
    }
    let mut total = 0usize;
    for w in sizes.windows(2) {
        total = w[0]
            .checked_mul(w[1])
            .and_then(|x| x.checked_add(w[1]))
            .and_then(|x| x.checked_add(total))
            .filter(|&t| t <= MAX_PARAMS)
            .ok_or_else(|| bad("parameter count too large".into()))?;
    }
    if bytes.len() - r.pos != total * 8 {
        return Err(bad(format!(
            "expected {} parameter bytes, found {}",
            total * 8,
            bytes.len() - r.pos
        )));
    }
    let mut params = Vec::with_capacity(2 * (sizes.len() - 1));
    for w in sizes.windows(2) {
        for shape in [vec![w[0], w[1]], vec![w[1]]] {
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
            if data.iter().any(|v| !v.is_finite()) {
                return Err(bad("non-finite parameter".into()));
            }
            params.push(Tensor::new(shape, data)?);
        }
    }
    Mlp::from_params(&sizes, params, hidden, output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    proptest! {
        #[test]
        fn round_trip(seed in any::<u64>(), sizes in proptest::collection::vec(1usize..6, 2..5)) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = Mlp::new(&sizes, Activation::Relu, Activation::Tanh, &mut rng).unwrap();
            prop_assert_eq!(decode(&encode(&net)).unwrap(), net);
        }

        #[test]
        fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let _ = decode(&bytes);
        }
    }

    #[test]
    fn truncation_and_trailing_bytes_rejected() {
        let net = Mlp::zeros(&[2, 3, 1], Activation::Relu, Activation::Identity).unwrap();
        let bytes = encode(&net);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(decode(&longer).is_err());
        let mut wrong = bytes;
        wrong[0] = b'X';
        assert!(decode(&wrong).is_err());
    }
}
