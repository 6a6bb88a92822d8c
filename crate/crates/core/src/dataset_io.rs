//! On-disk datasets and JSON helpers.
//!
//! A dataset is a directory holding `manifest.json` and `samples.bin`. The
//! blob starts with a 16-byte header (magic `CSIT`, format version, sample
//! count, reserved; all u32 little-endian) followed by little-endian f32
//! values laid out `[sample][subcarrier][symbol][re, im]`. Values are stored
//! as f32, so a save/load/save cycle is byte-identical.

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ChannelGrid, DatasetManifest, EvalStore, GridDims, NoisySample, Provenance, SnrMixture};

pub const MAGIC: &[u8; 4] = b"CSIT";
pub const BLOB_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const BLOB_FILE: &str = "samples.bin";
const MANIFEST_FORMAT: &str = "csi-ddpm/dataset";

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

#[derive(Serialize, Deserialize)]
struct ManifestFile {
    format: String,
    version: u32,
    profile: String,
    slot_dims: GridDims,
    sample_dims: GridDims,
    pilot_symbols: Vec<usize>,
    mixture: Option<SnrMixture>,
    seed: u64,
    count: usize,
    samples: Vec<SampleEntry>,
}

#[derive(Serialize, Deserialize)]
struct SampleEntry {
    /// `null` for noiseless samples.
    snr_db: Option<f64>,
    provenance: Provenance,
    pilots_only: bool,
    /// Byte offset of the sample in the blob.
    offset: u64,
}

/// Writes `manifest.json` and `samples.bin` into `dir`.
pub fn save_dataset(dir: &Path, ds: &DatasetManifest) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let per = ds.sample_dims.len() * 8;
    let mut blob = Vec::with_capacity(HEADER_LEN + ds.samples.len() * per);
    blob.extend_from_slice(MAGIC);
    blob.extend_from_slice(&BLOB_VERSION.to_le_bytes());
    let count = u32::try_from(ds.samples.len()).map_err(|_| Error::invalid("too many samples for one blob"))?;
    blob.extend_from_slice(&count.to_le_bytes());
    blob.extend_from_slice(&0u32.to_le_bytes());
    let mut entries = Vec::with_capacity(ds.samples.len());
    for s in &ds.samples {
        if s.grid.dims() != ds.sample_dims {
            return Err(Error::shape(ds.sample_dims, s.grid.dims()));
        }
        entries.push(SampleEntry {
            snr_db: s.snr_db.is_finite().then_some(s.snr_db),
            provenance: s.provenance(),
            pilots_only: s.pilots_only,
            offset: blob.len() as u64,
        });
        for v in s.grid.values() {
            blob.extend_from_slice(&(v.re as f32).to_le_bytes());
            blob.extend_from_slice(&(v.im as f32).to_le_bytes());
        }
    }
    let blob_path = dir.join(BLOB_FILE);
    let mut f = fs::File::create(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
    f.write_all(&blob).map_err(|e| Error::io(&blob_path, e))?;
    write_json(
        &dir.join(MANIFEST_FILE),
        &ManifestFile {
            format: MANIFEST_FORMAT.into(),
            version: BLOB_VERSION,
            profile: ds.profile.clone(),
            slot_dims: ds.slot_dims,
            sample_dims: ds.sample_dims,
            pilot_symbols: ds.pilot_symbols.clone(),
            mixture: ds.mixture.clone(),
            seed: ds.seed,
            count: ds.samples.len(),
            samples: entries,
        },
    )
}

/// Reads a dataset directory, validating header, counts and offsets.
pub fn load_dataset(dir: &Path) -> Result<DatasetManifest> {
    let mpath = dir.join(MANIFEST_FILE);
    let m: ManifestFile = read_json(&mpath)?;
    if m.format != MANIFEST_FORMAT || m.version != BLOB_VERSION {
        return Err(Error::format(
            &mpath,
            format!("expected {MANIFEST_FORMAT} v{BLOB_VERSION}, found {} v{}", m.format, m.version),
        ));
    }
    let bpath = dir.join(BLOB_FILE);
    let blob = fs::read(&bpath).map_err(|e| Error::io(&bpath, e))?;
    let count = read_header(&bpath, &blob)?;
    if count != m.count || m.samples.len() != m.count {
        return Err(Error::format(
            &bpath,
            format!("blob holds {count} samples but the manifest lists {}", m.samples.len()),
        ));
    }
    let per = m.sample_dims.len() * 8;
    if blob.len() != HEADER_LEN + count * per {
        return Err(Error::format(
            &bpath,
            format!("expected {} bytes, found {}", HEADER_LEN + count * per, blob.len()),
        ));
    }
    let mut samples = Vec::with_capacity(count);
    for (i, e) in m.samples.iter().enumerate() {
        let off = HEADER_LEN + i * per;
        if e.offset != off as u64 {
            return Err(Error::format(&mpath, format!("sample {i} offset {} != {off}", e.offset)));
        }
        let values: Vec<Complex64> = blob[off..off + per]
            .chunks_exact(8)
            .map(|b| {
                let re = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
                let im = f32::from_le_bytes([b[4], b[5], b[6], b[7]]);
                Complex64::new(re as f64, im as f64)
            })
            .collect();
        let grid = ChannelGrid::from_values(m.sample_dims, values).map_err(|e| Error::format(&bpath, e.to_string()))?;
        let snr = e.snr_db.unwrap_or(f64::INFINITY);
        samples.push(NoisySample::new(grid, snr, e.provenance, e.pilots_only).map_err(|err| Error::format(&mpath, err.to_string()))?);
    }
    Ok(DatasetManifest {
        profile: m.profile,
        slot_dims: m.slot_dims,
        sample_dims: m.sample_dims,
        pilot_symbols: m.pilot_symbols,
        mixture: m.mixture,
        seed: m.seed,
        samples,
    })
}

fn read_header(path: &Path, blob: &[u8]) -> Result<usize> {
    if blob.len() < HEADER_LEN {
        return Err(Error::format(path, "file shorter than the 16-byte header"));
    }
    if &blob[0..4] != MAGIC {
        return Err(Error::format(
            path,
            format!("bad magic {:?}, expected \"CSIT\"", String::from_utf8_lossy(&blob[0..4])),
        ));
    }
    let u = |i: usize| u32::from_le_bytes([blob[i], blob[i + 1], blob[i + 2], blob[i + 3]]);
    if u(4) != BLOB_VERSION {
        return Err(Error::format(path, format!("unsupported blob version {}", u(4))));
    }
    Ok(u(8) as usize)
}

/// Stores noiseless evaluation grids in the dataset format, provenance `pure`.
pub fn save_eval_store(dir: &Path, store: &EvalStore, parent: &DatasetManifest) -> Result<()> {
    let mut ds = DatasetManifest::derived(parent, store.as_samples(), parent.seed);
    ds.sample_dims = parent.slot_dims;
    save_dataset(dir, &ds)
}

pub fn load_eval_store(dir: &Path) -> Result<EvalStore> {
    let ds = load_dataset(dir)?;
    if let Some(s) = ds.samples.iter().find(|s| s.provenance() != Provenance::Pure) {
        return Err(Error::format(dir, format!("evaluation store holds a `{}` sample", s.provenance())));
    }
    Ok(EvalStore {
        grids: ds.samples.into_iter().map(|s| s.grid).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_dataset, make_pilot_pattern, TdlProfile};

    fn small() -> DatasetManifest {
        let dims = GridDims::default();
        let p = make_pilot_pattern(dims, &[2, 11], 1).unwrap();
        build_dataset(&TdlProfile::profile_a(), dims, &p, &SnrMixture::cellular_default(), 12, 9)
            .unwrap()
            .0
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let ds = small();
        save_dataset(&dir.path().join("a"), &ds).unwrap();
        let back = load_dataset(&dir.path().join("a")).unwrap();
        save_dataset(&dir.path().join("b"), &back).unwrap();
        for f in [BLOB_FILE, MANIFEST_FILE] {
            assert_eq!(
                fs::read(dir.path().join("a").join(f)).unwrap(),
                fs::read(dir.path().join("b").join(f)).unwrap()
            );
        }
        assert_eq!(load_dataset(&dir.path().join("b")).unwrap(), back);
        assert_eq!(back.samples.len(), 12);
        assert_eq!(back.mixture, ds.mixture);
    }

    #[test]
    fn corrupted_magic_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(dir.path(), &small()).unwrap();
        let p = dir.path().join(BLOB_FILE);
        let mut b = fs::read(&p).unwrap();
        b[0] = b'X';
        fs::write(&p, b).unwrap();
        let err = load_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("samples.bin") && err.contains("magic"), "{err}");
    }

    #[test]
    fn truncated_blob_fails() {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(dir.path(), &small()).unwrap();
        let p = dir.path().join(BLOB_FILE);
        let b = fs::read(&p).unwrap();
        fs::write(&p, &b[..b.len() - 3]).unwrap();
        assert!(load_dataset(dir.path()).is_err());
        fs::write(&p, &b[..7]).unwrap();
        assert!(load_dataset(dir.path()).is_err());
    }

    #[test]
    fn empty_dataset_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let ds = DatasetManifest::derived(&small(), Vec::new(), 0);
        save_dataset(dir.path(), &ds).unwrap();
        assert_eq!(load_dataset(dir.path()).unwrap().samples.len(), 0);
    }
}
