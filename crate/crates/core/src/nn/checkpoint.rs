//! Binary network checkpoints.
//!
//! Layout: an ASCII header line
//! `RRLCKPT v1 in:<d>;layers:<out1>:<act1>,<out2>:<act2>,...` terminated by
//! `\n`, then for each layer in order its weight matrix (row-major) followed
//! by its bias vector, every value a little-endian f64.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::dense::{Activation, DenseLayer, DenseNet};

const MAGIC: &str = "RRLCKPT";
const VERSION: &str = "v1";

pub fn arch_descriptor(net: &DenseNet) -> String {
    let layers: Vec<String> = net
        .architecture()
        .iter()
        .map(|(out, act)| format!("{out}:{act}"))
        .collect();
    format!("in:{};layers:{}", net.input_dim(), layers.join(","))
}

pub fn parse_arch_descriptor(desc: &str) -> Result<(usize, Vec<(usize, Activation)>)> {
    let bad = || Error::format("in:<d>;layers:<out>:<act>,...", desc);
    let (input, layers) = desc.split_once(';').ok_or_else(bad)?;
    let input_dim: usize = input
        .strip_prefix("in:")
        .and_then(|d| d.parse().ok())
        .ok_or_else(bad)?;
    let layers = layers.strip_prefix("layers:").ok_or_else(bad)?;
    let mut arch = Vec::new();
    for item in layers.split(',') {
        let (out, act) = item.split_once(':').ok_or_else(bad)?;
        let out: usize = out.parse().map_err(|_| bad())?;
        arch.push((out, act.parse()?));
    }
    if input_dim == 0 || arch.is_empty() || arch.iter().any(|(o, _)| *o == 0) {
        return Err(bad());
    }
    Ok((input_dim, arch))
}

pub fn write_net<W: Write>(net: &DenseNet, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{MAGIC} {VERSION} {}", arch_descriptor(net))?;
    let mut buf = Vec::with_capacity(net.param_count() * 8);
    for layer in net.layers() {
        for v in layer.weight.iter().chain(&layer.bias) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)
}

/// Splits `bytes` into the header line and the binary payload.
pub(crate) fn split_header<'a>(bytes: &'a [u8], magic: &str) -> Result<(&'a str, &'a [u8])> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format(format!("{magic} header line"), "no header terminator"))?;
    let header = std::str::from_utf8(&bytes[..newline])
        .map_err(|_| Error::format(format!("{magic} header line"), "non-UTF-8 header"))?;
    let mut parts = header.splitn(3, ' ');
    let found_magic = parts.next().unwrap_or("");
    if found_magic != magic {
        return Err(Error::format(magic, found_magic));
    }
    let version = parts.next().unwrap_or("");
    if version != VERSION {
        return Err(Error::format(format!("{magic} {VERSION}"), format!("{magic} {version}")));
    }
    Ok((parts.next().unwrap_or(""), &bytes[newline + 1..]))
}

pub(crate) fn read_f64s(payload: &[u8], count: usize) -> Result<Vec<f64>> {
    if payload.len() != count * 8 {
        return Err(Error::format(
            format!("{} payload bytes", count * 8),
            format!("{} bytes", payload.len()),
        ));
    }
    Ok(payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn read_net<R: Read>(mut r: R) -> Result<DenseNet> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::format("readable checkpoint", e.to_string()))?;
    decode_net(&bytes)
}

pub fn decode_net(bytes: &[u8]) -> Result<DenseNet> {
    let (desc, payload) = split_header(bytes, MAGIC)?;
    let (input_dim, arch) = parse_arch_descriptor(desc)?;
    let mut count = 0;
    let mut fan_in = input_dim;
    for (out, _) in &arch {
        count += fan_in * out + out;
        fan_in = *out;
    }
    let values = read_f64s(payload, count)?;
    let mut layers = Vec::with_capacity(arch.len());
    let mut fan_in = input_dim;
    let mut cursor = 0;
    for (out, act) in arch {
        let w = values[cursor..cursor + fan_in * out].to_vec();
        cursor += fan_in * out;
        let b = values[cursor..cursor + out].to_vec();
        cursor += out;
        layers.push(DenseLayer::new(fan_in, out, w, b, act)?);
        fan_in = out;
    }
    DenseNet::from_layers(layers)
}

pub fn save_net(net: &DenseNet, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_net(net, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_net(path: &Path) -> Result<DenseNet> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_net(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngHandle;

    fn sample_net() -> DenseNet {
        let mut rng = RngHandle::new(4);
        DenseNet::new(
            3,
            &[(5, Activation::Relu), (4, Activation::Relu), (2, Activation::Tanh)],
            &mut rng,
        )
        .unwrap()
    }

    #[test]
    fn header_and_layout_are_exact() {
        let mut rng = RngHandle::new(0);
        let net = DenseNet::new(2, &[(1, Activation::Identity)], &mut rng).unwrap();
        let mut bytes = Vec::new();
        write_net(&net, &mut bytes).unwrap();
        let header = b"RRLCKPT v1 in:2;layers:1:identity\n";
        assert_eq!(&bytes[..header.len()], header);
        let l = &net.layers()[0];
        let mut expect = header.to_vec();
        for v in [l.weight[0], l.weight[1], l.bias[0]] {
            expect.extend_from_slice(&v.to_le_bytes());
        }
        assert_eq!(bytes, expect);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let net = sample_net();
        let mut bytes = Vec::new();
        write_net(&net, &mut bytes).unwrap();
        let back = decode_net(&bytes).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn truncated_and_wrong_magic_fail() {
        let net = sample_net();
        let mut bytes = Vec::new();
        write_net(&net, &mut bytes).unwrap();
        assert!(matches!(decode_net(&bytes[..bytes.len() - 3]), Err(Error::Format { .. })));
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        match decode_net(&wrong) {
            Err(Error::Format { expected, found }) => {
                assert_eq!(expected, "RRLCKPT");
                assert_eq!(found, "XRLCKPT");
            }
            other => panic!("unexpected {other:?}"),
        }
        let v2 = String::from_utf8_lossy(&bytes).replacen("v1", "v2", 1);
        assert!(decode_net(v2.as_bytes()).is_err());
    }

    #[test]
    fn descriptor_parse_errors() {
        assert!(parse_arch_descriptor("in:3;layers:4:relu,2:identity").is_ok());
        assert!(parse_arch_descriptor("in:3;layers:4:sigmoid").is_err());
        assert!(parse_arch_descriptor("in:0;layers:4:relu").is_err());
        assert!(parse_arch_descriptor("layers:4:relu").is_err());
    }
}
