use std::path::{Path, PathBuf};

use super::spec::{LayerSpec, LossKind, NetworkSpec};
use super::{Network, Parameters};
use crate::error::{Error, Result};
use crate::manifest::{read_f64_blob, write_f64_blob, Manifest};

pub const WEIGHT_FORMAT_VERSION: u32 = 1;

/// The blob sits next to the manifest with a `.bin` extension.
pub fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

fn dims_text(d: [usize; 3]) -> String {
    format!("{}x{}x{}", d[0], d[1], d[2])
}

fn parse_dims(s: &str, origin: &Path) -> Result<[usize; 3]> {
    let parts: Vec<usize> = s
        .split('x')
        .map(|p| p.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::malformed(origin, format!("bad dims `{s}`")))?;
    match parts[..] {
        [a, b, c] => Ok([a, b, c]),
        _ => Err(Error::malformed(origin, format!("bad dims `{s}`"))),
    }
}

pub fn weight_manifest(net: &Network, seed: u64) -> Manifest {
    let mut m = Manifest::new();
    m.set("format_version", WEIGHT_FORMAT_VERSION)
        .set("input", dims_text(net.spec.input_dims))
        .set("layers", net.spec.layers.len());
    for (k, layer) in net.spec.layers.iter().enumerate() {
        m.set(format!("layer.{k}"), layer);
    }
    m.set("loss", net.spec.loss)
        .set("seed", seed)
        .set("values", net.params.len());
    m
}

/// Writes `path` (text manifest) and its `.bin` blob.
pub fn save_weights(path: &Path, net: &Network, seed: u64) -> Result<()> {
    let mut m = weight_manifest(net, seed);
    let blob = blob_path(path);
    let name = blob
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    m.set("blob", name);
    let values: Vec<f64> = net.params.values().copied().collect();
    write_f64_blob(&blob, &values)?;
    m.write(path)
}

/// Returns the network and the seed it was trained with.
pub fn load_weights(path: &Path) -> Result<(Network, u64)> {
    if !path.exists() {
        return Err(Error::Missing(path.to_path_buf()));
    }
    let m = Manifest::read(path)?;
    let version: u32 = m.parse_value("format_version", path)?;
    if version != WEIGHT_FORMAT_VERSION {
        return Err(Error::malformed(path, format!("unsupported format_version {version}")));
    }
    let input = parse_dims(m.require("input", path)?, path)?;
    let count: usize = m.parse_value("layers", path)?;
    let layers = (0..count)
        .map(|k| {
            m.require(&format!("layer.{k}"), path)?
                .parse::<LayerSpec>()
                .map_err(|e| Error::malformed(path, e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let loss: LossKind = m
        .require("loss", path)?
        .parse()
        .map_err(|e: Error| Error::malformed(path, e.to_string()))?;
    let seed: u64 = m.parse_value("seed", path)?;
    let spec = NetworkSpec::new(input, layers, loss).map_err(|e| Error::malformed(path, e.to_string()))?;
    let blob = match m.get("blob") {
        Some(name) => path.with_file_name(name),
        None => blob_path(path),
    };
    if !blob.exists() {
        return Err(Error::Missing(blob));
    }
    let values = read_f64_blob(&blob)?;
    let mut params = Parameters::zeros(&spec);
    if values.len() != params.len() {
        return Err(Error::malformed(
            &blob,
            format!("{} values, network needs {}", values.len(), params.len()),
        ));
    }
    for (p, v) in params.values_mut().zip(values) {
        *p = v;
    }
    Ok((Network::new(spec, params)?, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::spec::Op;

    #[test]
    fn round_trip_is_bit_exact() {
        let spec = NetworkSpec::new(
            [5, 3, 1],
            vec![
                LayerSpec::new([2, 3, 1, 4], vec![Op::Relu, Op::MaxPool(2, 1), Op::Dropout(0.5)]),
                LayerSpec::new([2, 1, 4, 2], vec![Op::Softmax]),
            ],
            LossKind::Log,
        )
        .unwrap();
        let net = Network::init(spec, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.weights");
        save_weights(&path, &net, 9).unwrap();
        let (back, seed) = load_weights(&path).unwrap();
        assert_eq!(seed, 9);
        assert_eq!(back, net);
    }

    #[test]
    fn truncated_blob_rejected() {
        let spec = NetworkSpec::new([2, 2, 1], vec![LayerSpec::new([2, 2, 1, 2], vec![Op::Softmax])], LossKind::Log).unwrap();
        let net = Network::init(spec, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("n.weights");
        save_weights(&path, &net, 1).unwrap();
        std::fs::write(blob_path(&path), [0u8; 16]).unwrap();
        assert!(matches!(load_weights(&path), Err(Error::Malformed { .. })));
        assert!(matches!(load_weights(&dir.path().join("none")), Err(Error::Missing(_))));
    }
}
