//! Binary weights file for [`MlpParams`].
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "GEOMAE1"                      7 bytes of magic
//! layer_count                    u32
//! per layer: in u32, out u32, activation u8 (0 identity, 1 tanh, 2 softplus)
//! per layer: weights out*in f64 (row-major), then biases out f64
//! ```
//!
//! Trailing bytes after the last bias are rejected.

use std::io::{Read, Write};
use std::path::Path;

use crate::array::RealArray;
use crate::error::{Error, Result};

use super::mlp::{Activation, Layer, MlpParams};

pub const MAGIC: &[u8; 7] = b"GEOMAE1";

pub fn write_weights<W: Write>(net: &MlpParams, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&(net.layers().len() as u32).to_le_bytes())?;
    for l in net.layers() {
        out.write_all(&(l.weight.cols() as u32).to_le_bytes())?;
        out.write_all(&(l.weight.rows() as u32).to_le_bytes())?;
        out.write_all(&[l.activation.tag()])?;
    }
    for l in net.layers() {
        for v in l.weight.data().iter().chain(l.bias.data()) {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| Error::Format("truncated weights header".into()))?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Format("truncated weights payload".into()))?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

pub fn read_weights<R: Read>(mut input: R) -> Result<MlpParams> {
    let mut magic = [0u8; 7];
    input
        .read_exact(&mut magic)
        .map_err(|_| Error::Format("file too short for weights magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format(
            "bad magic: not a GEOMAE1 weights file".into(),
        ));
    }
    let count = read_u32(&mut input)? as usize;
    if count == 0 || count > 4096 {
        return Err(Error::Format(format!("implausible layer count {count}")));
    }
    let mut dims = Vec::with_capacity(count);
    for _ in 0..count {
        let fan_in = read_u32(&mut input)? as usize;
        let fan_out = read_u32(&mut input)? as usize;
        let mut tag = [0u8; 1];
        input
            .read_exact(&mut tag)
            .map_err(|_| Error::Format("truncated weights header".into()))?;
        let act = Activation::from_tag(tag[0])
            .ok_or_else(|| Error::Format(format!("unknown activation tag {}", tag[0])))?;
        dims.push((fan_in, fan_out, act));
    }
    let mut layers = Vec::with_capacity(count);
    for (fan_in, fan_out, activation) in dims {
        let w = read_f64s(&mut input, fan_in * fan_out)?;
        let b = read_f64s(&mut input, fan_out)?;
        layers.push(Layer {
            weight: RealArray::from_matrix(fan_out, fan_in, w),
            bias: RealArray::from_matrix(fan_out, 1, b),
            activation,
        });
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after weights".into()));
    }
    MlpParams::new(layers)
        .map_err(|e| Error::Format(format!("invalid network in weights file: {e}")))
}

pub fn save_weights(net: &MlpParams, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_weights(net, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<MlpParams> {
    let bytes = std::fs::read(path)?;
    read_weights(bytes.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(seed in 0u64..1000, hidden in 1usize..6, act in 0u8..3) {
            let hidden_act = Activation::from_tag(act).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut net = MlpParams::init(&[2, hidden, 3], hidden_act, &mut rng).unwrap();
            // non-trivial biases, including signed zero
            let mut flat = net.flat();
            let n = flat.len();
            flat[n - 1] = -0.0;
            flat[n - 2] = 1e-300;
            net = net.with_flat(&flat).unwrap();
            let mut buf = Vec::new();
            write_weights(&net, &mut buf).unwrap();
            let back = read_weights(buf.as_slice()).unwrap();
            let a: Vec<u64> = net.flat().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = back.flat().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
            prop_assert_eq!(back.layers()[0].activation, hidden_act);
        }
    }

    #[test]
    fn header_layout() {
        let net =
            MlpParams::linear(RealArray::identity(2), RealArray::column(&[3.0, 4.0])).unwrap();
        let mut buf = Vec::new();
        write_weights(&net, &mut buf).unwrap();
        assert_eq!(&buf[..7], b"GEOMAE1");
        assert_eq!(&buf[7..11], &1u32.to_le_bytes());
        assert_eq!(&buf[11..15], &2u32.to_le_bytes());
        assert_eq!(&buf[15..19], &2u32.to_le_bytes());
        assert_eq!(buf[19], 0);
        assert_eq!(buf.len(), 20 + 6 * 8);
        assert_eq!(&buf[20 + 4 * 8..20 + 5 * 8], &3.0f64.to_le_bytes());
    }

    #[test]
    fn rejects_corruption() {
        let net = MlpParams::linear(RealArray::identity(2), RealArray::zeros(2, 1)).unwrap();
        let mut buf = Vec::new();
        write_weights(&net, &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            read_weights(bad.as_slice()),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            read_weights(&buf[..buf.len() - 1]),
            Err(Error::Format(_))
        ));
        let mut long = buf.clone();
        long.push(0);
        assert!(matches!(
            read_weights(long.as_slice()),
            Err(Error::Format(_))
        ));
    }
}
