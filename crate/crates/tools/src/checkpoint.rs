//! Versioned little-endian model container.
//!
//! Layout: the magic bytes `ARTIST-CKPT`, a `u32` version, the six model
//! dimensions as `u32`, an array count, then per array the name length,
//! the UTF-8 name, the rank, each dimension and the `f32` values. All
//! integers are little-endian `u32`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use artist_core::nn::Weights;
use artist_core::{Codebook, ModelConfig, MotionModel};

use crate::error::{Result, ToolError};

pub const MAGIC: &[u8; 11] = b"ARTIST-CKPT";
pub const VERSION: u32 = 1;

const CODEBOOK_ARRAYS: [&str; 4] = ["codebook.x", "codebook.y", "codebook.w", "codebook.h"];
/// Ranks or names beyond these are treated as corruption.
const MAX_RANK: u32 = 8;
const MAX_NAME: u32 = 4096;

/// Model configuration, codebook and (unless this is a codebook-only stub)
/// the weights.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub codebook: Codebook,
    pub weights: Option<Weights>,
}

impl Checkpoint {
    pub fn from_model(model: &MotionModel) -> Self {
        Self {
            config: model.config,
            codebook: model.codebook.clone(),
            weights: Some(model.weights.clone()),
        }
    }

    /// A stub holding only the codebook, as written after clustering.
    pub fn stub(config: ModelConfig, codebook: Codebook) -> Self {
        Self {
            config,
            codebook,
            weights: None,
        }
    }

    /// The model, checking that it has the expected number of classes.
    pub fn into_model(self, expected_k: Option<usize>) -> Result<MotionModel> {
        if let Some(k) = expected_k.filter(|&k| k != self.config.k) {
            return Err(ToolError::Config(format!(
                "checkpoint has K = {} but K = {k} was requested",
                self.config.k
            )));
        }
        let weights = self.weights.ok_or_else(|| {
            ToolError::Config("checkpoint holds a codebook only; train it first".into())
        })?;
        Ok(MotionModel::from_parts(
            self.config,
            self.codebook,
            weights,
        )?)
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v)
        .map_err(|_| ToolError::Format(format!("value {v} does not fit in 32 bits")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_array(out: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f64]) -> Result<()> {
    if data.iter().any(|v| !v.is_finite()) {
        return Err(ToolError::Format(format!(
            "array {name} has non-finite values"
        )));
    }
    put_u32(out, name.len())?;
    out.extend_from_slice(name.as_bytes());
    put_u32(out, shape.len())?;
    for &d in shape {
        put_u32(out, d)?;
    }
    for &v in data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(())
}

/// Serialize. Values are stored as `f32`; models trained or initialised
/// here already lie on that grid, so the round trip is exact.
pub fn to_bytes(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let c = ckpt.config;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for d in [
        c.k,
        c.interaction_dim,
        c.manet_embed_dim,
        c.manet_hidden_dim,
        c.artist_embed_dim,
        c.artist_hidden_dim,
    ] {
        put_u32(&mut out, d)?;
    }
    let arrays = ckpt
        .weights
        .as_ref()
        .map(|w| w.named_arrays())
        .unwrap_or_default();
    put_u32(&mut out, CODEBOOK_ARRAYS.len() + arrays.len())?;
    for (name, list) in CODEBOOK_ARRAYS.iter().zip(ckpt.codebook.centroids()) {
        put_array(&mut out, name, &[list.len()], list)?;
    }
    for (name, shape, data) in arrays {
        put_array(&mut out, &name, &shape, data)?;
    }
    Ok(out)
}

struct Reader<R> {
    inner: R,
    path: String,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0; n];
        self.inner.read_exact(&mut buf).map_err(|e| ToolError::Io {
            path: self.path.clone(),
            source: e,
        })?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.bytes(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

type RawArray = (Vec<usize>, Vec<f64>);

/// Deserialize from a stream. `path` only labels I/O errors.
pub fn read_from(stream: impl Read, path: &str) -> Result<Checkpoint> {
    let mut r = Reader {
        inner: stream,
        path: path.to_string(),
    };
    if r.bytes(MAGIC.len())? != MAGIC {
        return Err(ToolError::Format("missing ARTIST-CKPT magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(ToolError::Format(format!("unsupported version {version}")));
    }
    let mut dims = [0usize; 6];
    for d in dims.iter_mut() {
        *d = r.u32()? as usize;
    }
    let config = ModelConfig {
        k: dims[0],
        interaction_dim: dims[1],
        manet_embed_dim: dims[2],
        manet_hidden_dim: dims[3],
        artist_embed_dim: dims[4],
        artist_hidden_dim: dims[5],
    };
    config.validate()?;
    let count = r.u32()?;
    let mut arrays: BTreeMap<String, RawArray> = BTreeMap::new();
    for _ in 0..count {
        let name_len = r.u32()?;
        if name_len > MAX_NAME {
            return Err(ToolError::Format(format!(
                "array name length {name_len} is implausible"
            )));
        }
        let name = String::from_utf8(r.bytes(name_len as usize)?)
            .map_err(|_| ToolError::Format("array name is not UTF-8".into()))?;
        let rank = r.u32()?;
        if rank > MAX_RANK {
            return Err(ToolError::Format(format!(
                "array {name} has implausible rank {rank}"
            )));
        }
        let shape = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let len = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|&n| n <= 1 << 28);
        let len =
            len.ok_or_else(|| ToolError::Format(format!("array {name} is implausibly large")))?;
        let raw = r.bytes(len * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        if arrays.insert(name.clone(), (shape, data)).is_some() {
            return Err(ToolError::Format(format!("array {name} appears twice")));
        }
    }
    let mut take = |name: &str| arrays.remove(name);
    let mut lists: [Vec<f64>; 4] = Default::default();
    for (slot, name) in lists.iter_mut().zip(CODEBOOK_ARRAYS) {
        let (shape, data) =
            take(name).ok_or_else(|| ToolError::Format(format!("missing array {name}")))?;
        if shape != [config.k] {
            return Err(ToolError::Config(format!(
                "{name} has shape {shape:?} but K = {}",
                config.k
            )));
        }
        *slot = data;
    }
    let codebook = Codebook::from_centroids(lists)?;
    if arrays.is_empty() {
        return Ok(Checkpoint::stub(config, codebook));
    }
    let mut weights = Weights::zeros(&config);
    for (name, shape, data) in weights.named_arrays_mut() {
        let (got_shape, got) = arrays
            .remove(&name)
            .ok_or_else(|| ToolError::Format(format!("missing array {name}")))?;
        if got_shape != shape {
            return Err(ToolError::Config(format!(
                "array {name} has shape {got_shape:?}, expected {shape:?}"
            )));
        }
        *data = got;
    }
    if let Some(extra) = arrays.keys().next() {
        return Err(ToolError::Format(format!("unknown array {extra}")));
    }
    Ok(Checkpoint {
        config,
        codebook,
        weights: Some(weights),
    })
}

pub fn save(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let bytes = to_bytes(ckpt)?;
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| ToolError::io(dir, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| ToolError::io(path, e))?;
    f.write_all(&bytes).map_err(|e| ToolError::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| ToolError::io(path, e))?;
    read_from(std::io::BufReader::new(f), &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use artist_core::codebook::fit_codebooks;
    use artist_core::Velocity;

    fn model(k: usize, seed: u64) -> MotionModel {
        let corpus: Vec<Velocity> = (0..200)
            .map(|i| {
                let t = i as f64 * 0.37 + seed as f64;
                Velocity::new(
                    t.sin() * 0.01,
                    t.cos() * 0.004,
                    (t * 1.3).sin() * 0.001,
                    (t * 0.7).cos() * 0.002,
                )
            })
            .collect();
        let cb = fit_codebooks(&corpus, k, seed, 50).unwrap();
        MotionModel::new(ModelConfig::desk(k, 8), cb, seed).unwrap()
    }

    fn round_trip(m: &MotionModel) -> MotionModel {
        let bytes = to_bytes(&Checkpoint::from_model(m)).unwrap();
        read_from(&bytes[..], "mem")
            .unwrap()
            .into_model(None)
            .unwrap()
    }

    #[test]
    fn random_models_round_trip_bitwise() {
        for seed in 0..4 {
            let m = model(8, seed);
            let back = round_trip(&m);
            assert_eq!(back.config, m.config);
            assert_eq!(back.codebook, m.codebook);
            for ((na, sa, a), (nb, sb, b)) in m
                .weights
                .named_arrays()
                .iter()
                .zip(back.weights.named_arrays())
            {
                assert_eq!((na, sa), (&nb, &sb));
                assert!(
                    a.iter()
                        .zip(b.iter())
                        .all(|(x, y)| x.to_bits() == y.to_bits()),
                    "{na}"
                );
            }
        }
    }

    #[test]
    fn layout_header() {
        let bytes = to_bytes(&Checkpoint::from_model(&model(4, 1))).unwrap();
        assert_eq!(&bytes[..11], b"ARTIST-CKPT");
        assert_eq!(u32::from_le_bytes(bytes[11..15].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[15..19].try_into().unwrap()), 4);
        // first array: "codebook.x", rank 1, dimension K
        let first = 15 + 6 * 4 + 4;
        assert_eq!(
            u32::from_le_bytes(bytes[first..first + 4].try_into().unwrap()),
            10
        );
        assert_eq!(&bytes[first + 4..first + 14], b"codebook.x");
    }

    #[test]
    fn corrupted_magic_is_a_format_error() {
        let mut bytes = to_bytes(&Checkpoint::from_model(&model(4, 2))).unwrap();
        bytes[0] = b'X';
        assert!(matches!(
            read_from(&bytes[..], "mem"),
            Err(ToolError::Format(_))
        ));
    }

    #[test]
    fn unknown_version_is_a_format_error() {
        let mut bytes = to_bytes(&Checkpoint::from_model(&model(4, 2))).unwrap();
        bytes[11] = 9;
        assert!(matches!(
            read_from(&bytes[..], "mem"),
            Err(ToolError::Format(_))
        ));
    }

    #[test]
    fn truncation_is_an_io_error() {
        let bytes = to_bytes(&Checkpoint::from_model(&model(4, 3))).unwrap();
        for cut in [5, 20, bytes.len() / 2, bytes.len() - 1] {
            let e = read_from(&bytes[..cut], "mem").unwrap_err();
            assert!(matches!(e, ToolError::Io { .. }), "cut {cut}: {e}");
            assert_eq!(e.exit_code(), 2);
        }
    }

    #[test]
    fn class_count_mismatch_is_a_config_error() {
        let bytes = to_bytes(&Checkpoint::from_model(&model(32, 4))).unwrap();
        let ck = read_from(&bytes[..], "mem").unwrap();
        assert!(ck.clone().into_model(Some(32)).is_ok());
        let e = ck.into_model(Some(16)).unwrap_err();
        assert!(matches!(e, ToolError::Config(_)));
        assert_eq!(e.exit_code(), 3);
    }

    #[test]
    fn stubs_hold_only_the_codebook() {
        let m = model(4, 5);
        let bytes = to_bytes(&Checkpoint::stub(m.config, m.codebook.clone())).unwrap();
        let ck = read_from(&bytes[..], "mem").unwrap();
        assert_eq!(ck.codebook, m.codebook);
        assert!(ck.weights.is_none());
        assert!(matches!(ck.into_model(None), Err(ToolError::Config(_))));
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        let m = model(4, 6);
        save(&p, &Checkpoint::from_model(&m)).unwrap();
        let back = load(&p).unwrap().into_model(Some(4)).unwrap();
        assert_eq!(back.weights, m.weights);
        assert!(matches!(
            load(dir.path().join("missing")),
            Err(ToolError::Io { .. })
        ));
    }
}
