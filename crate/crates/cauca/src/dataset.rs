//! On-disk datasets: one binary matrix pair per regime plus a JSON sidecar.
//!
//! Matrices are stored as raw little-endian 64-bit floats in row-major
//! order, with shapes, targets, and seeds in a human-readable sidecar. The
//! representation round-trips bit-exactly, which is what makes reruns
//! byte-identical. A CSV export exists for interoperability; it is
//! write-only.
//!
//! Node indices in sidecars are 1-based, matching the graph file format.

use crate::error::{Error, Result};
use ndarray::Array2;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Samples from one regime: observations, optional ground-truth latents,
/// and the seed that generated them.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeDataset {
    pub k: usize,
    pub targets: Vec<usize>,
    pub x: Array2<f64>,
    pub z: Option<Array2<f64>>,
    pub seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    regime: usize,
    /// 1-based intervention targets.
    targets: Vec<usize>,
    n_rows: usize,
    n_cols: usize,
    seed: u64,
    byte_order: String,
    layout: String,
    dtype: String,
    has_latents: bool,
}

const BYTE_ORDER: &str = "little-endian";
const LAYOUT: &str = "row-major";
const DTYPE: &str = "f64";

/// Write any serializable value as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&s)?)
}

/// Raw little-endian f64 dump, row-major.
pub fn write_matrix(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut buf = Vec::with_capacity(m.len() * 8);
    for &v in m.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_matrix(path: &Path, n_rows: usize, n_cols: usize) -> Result<Array2<f64>> {
    let bytes = fs::read(path)?;
    let want = n_rows * n_cols * 8;
    if bytes.len() != want {
        return Err(Error::ShapeMismatch {
            expected: format!("{want} bytes in {}", path.display()),
            got: format!("{}", bytes.len()),
        });
    }
    let mut m = Array2::zeros((n_rows, n_cols));
    for (slot, chunk) in m.iter_mut().zip(bytes.chunks_exact(8)) {
        *slot = f64::from_le_bytes(chunk.try_into().expect("chunk of 8"));
    }
    Ok(m)
}

fn sidecar_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("regime_{k:03}.json"))
}

fn x_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("regime_{k:03}.x.bin"))
}

fn z_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("regime_{k:03}.z.bin"))
}

/// Write one regime's sidecar and matrices into `dir`.
pub fn write_regime(dir: &Path, ds: &RegimeDataset) -> Result<()> {
    if let Some(z) = &ds.z {
        if z.raw_dim() != ds.x.raw_dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("latents shaped {}x{}", ds.x.nrows(), ds.x.ncols()),
                got: format!("{}x{}", z.nrows(), z.ncols()),
            });
        }
    }
    let sidecar = Sidecar {
        regime: ds.k,
        targets: ds.targets.iter().map(|t| t + 1).collect(),
        n_rows: ds.x.nrows(),
        n_cols: ds.x.ncols(),
        seed: ds.seed,
        byte_order: BYTE_ORDER.into(),
        layout: LAYOUT.into(),
        dtype: DTYPE.into(),
        has_latents: ds.z.is_some(),
    };
    write_json(&sidecar_path(dir, ds.k), &sidecar)?;
    write_matrix(&x_path(dir, ds.k), &ds.x)?;
    if let Some(z) = &ds.z {
        write_matrix(&z_path(dir, ds.k), z)?;
    }
    Ok(())
}

/// Read one regime back; validates the sidecar's format fields.
pub fn read_regime(dir: &Path, k: usize) -> Result<RegimeDataset> {
    let sc: Sidecar = read_json(&sidecar_path(dir, k))?;
    if sc.regime != k {
        return Err(Error::Config(format!(
            "sidecar {} claims regime {}, expected {k}",
            sidecar_path(dir, k).display(),
            sc.regime
        )));
    }
    if sc.byte_order != BYTE_ORDER || sc.layout != LAYOUT || sc.dtype != DTYPE {
        return Err(Error::Config(format!(
            "unsupported matrix encoding {}/{}/{}",
            sc.byte_order, sc.layout, sc.dtype
        )));
    }
    let mut targets = Vec::with_capacity(sc.targets.len());
    for t in sc.targets {
        if t == 0 || t > sc.n_cols {
            return Err(Error::NodeOutOfRange { node: t, d: sc.n_cols });
        }
        targets.push(t - 1);
    }
    let x = read_matrix(&x_path(dir, k), sc.n_rows, sc.n_cols)?;
    let z = if sc.has_latents {
        Some(read_matrix(&z_path(dir, k), sc.n_rows, sc.n_cols)?)
    } else {
        None
    };
    Ok(RegimeDataset { k, targets, x, z, seed: sc.seed })
}

/// Write all regimes (index = position) into `dir`, creating it if needed.
pub fn write_regimes(dir: &Path, data: &[RegimeDataset]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for ds in data {
        write_regime(dir, ds)?;
    }
    Ok(())
}

/// Read regimes 0..n from `dir` by scanning contiguous sidecar files.
pub fn read_regimes(dir: &Path) -> Result<Vec<RegimeDataset>> {
    let mut out = Vec::new();
    loop {
        let k = out.len();
        if !sidecar_path(dir, k).exists() {
            break;
        }
        out.push(read_regime(dir, k)?);
    }
    if out.is_empty() {
        return Err(Error::Config(format!("no regime files found in {}", dir.display())));
    }
    Ok(out)
}

/// Export one regime as CSV with 1-based column headers (x1..xd, z1..zd).
pub fn export_csv(dir: &Path, ds: &RegimeDataset) -> Result<PathBuf> {
    let path = dir.join(format!("regime_{:03}.csv", ds.k));
    let mut w = csv::Writer::from_path(&path)?;
    let d = ds.x.ncols();
    let mut header: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    if ds.z.is_some() {
        header.extend((1..=d).map(|j| format!("z{j}")));
    }
    w.write_record(&header)?;
    for r in 0..ds.x.nrows() {
        let mut rec: Vec<String> = (0..d).map(|j| format!("{}", ds.x[[r, j]])).collect();
        if let Some(z) = &ds.z {
            rec.extend((0..d).map(|j| format!("{}", z[[r, j]])));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn tricky_matrix() -> Array2<f64> {
        Array2::from_shape_vec(
            (3, 2),
            vec![0.1, -0.0, 1e-308, std::f64::consts::PI, -1.5e300, 2.0f64.powi(-52)],
        )
        .unwrap()
    }

    #[test]
    fn matrices_round_trip_bit_exactly() {
        let dir = tempdir().unwrap();
        let m = tricky_matrix();
        let p = dir.path().join("m.bin");
        write_matrix(&p, &m).unwrap();
        let back = read_matrix(&p, 3, 2).unwrap();
        for (a, b) in m.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits(), "bit-exact round trip");
        }
    }

    #[test]
    fn regimes_round_trip_with_and_without_latents() {
        let dir = tempdir().unwrap();
        let with = RegimeDataset {
            k: 0,
            targets: vec![],
            x: tricky_matrix(),
            z: Some(tricky_matrix() * 2.0),
            seed: 99,
        };
        let without = RegimeDataset {
            k: 1,
            targets: vec![0],
            x: tricky_matrix() + 1.0,
            z: None,
            seed: 100,
        };
        write_regimes(dir.path(), &[with.clone(), without.clone()]).unwrap();
        let back = read_regimes(dir.path()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0], with);
        assert_eq!(back[1], without);
    }

    #[test]
    fn sidecar_targets_are_one_based() {
        let dir = tempdir().unwrap();
        let ds = RegimeDataset {
            k: 0,
            targets: vec![0, 3],
            x: Array2::zeros((2, 4)),
            z: None,
            seed: 1,
        };
        write_regime(dir.path(), &ds).unwrap();
        let raw: serde_json::Value = read_json(&dir.path().join("regime_000.json")).unwrap();
        assert_eq!(raw["targets"], serde_json::json!([1, 4]));
        let back = read_regime(dir.path(), 0).unwrap();
        assert_eq!(back.targets, vec![0, 3]);
    }

    #[test]
    fn rewriting_produces_identical_bytes() {
        let dir = tempdir().unwrap();
        let ds = RegimeDataset {
            k: 0,
            targets: vec![1],
            x: tricky_matrix(),
            z: Some(tricky_matrix()),
            seed: 7,
        };
        write_regime(dir.path(), &ds).unwrap();
        let first: Vec<Vec<u8>> = ["regime_000.json", "regime_000.x.bin", "regime_000.z.bin"]
            .iter()
            .map(|f| fs::read(dir.path().join(f)).unwrap())
            .collect();
        write_regime(dir.path(), &ds).unwrap();
        for (i, f) in ["regime_000.json", "regime_000.x.bin", "regime_000.z.bin"]
            .iter()
            .enumerate()
        {
            assert_eq!(first[i], fs::read(dir.path().join(f)).unwrap(), "{f} changed");
        }
    }

    #[test]
    fn csv_export_has_headers_and_rows() {
        let dir = tempdir().unwrap();
        let ds = RegimeDataset {
            k: 2,
            targets: vec![1],
            x: tricky_matrix(),
            z: Some(tricky_matrix()),
            seed: 7,
        };
        let path = export_csv(dir.path(), &ds).unwrap();
        let mut rdr = csv::Reader::from_path(&path).unwrap();
        let headers = rdr.headers().unwrap().clone();
        assert_eq!(
            headers.iter().collect::<Vec<_>>(),
            vec!["x1", "x2", "z1", "z2"]
        );
        assert_eq!(rdr.records().count(), 3);
    }

    #[test]
    fn truncated_binary_is_rejected() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("short.bin");
        fs::write(&p, [0u8; 15]).unwrap();
        assert!(read_matrix(&p, 2, 1).is_err());
    }

    #[test]
    fn size_mismatch_with_sidecar_is_rejected() {
        let dir = tempdir().unwrap();
        let ds = RegimeDataset {
            k: 0,
            targets: vec![],
            x: Array2::zeros((4, 2)),
            z: None,
            seed: 0,
        };
        write_regime(dir.path(), &ds).unwrap();
        // corrupt the matrix file
        fs::write(dir.path().join("regime_000.x.bin"), [0u8; 8]).unwrap();
        assert!(read_regime(dir.path(), 0).is_err());
    }
}
