//! Binary persistence: spectrum samples, MPC lists, field checkpoints, and
//! the dataset manifest.
//!
//! Formats (all little endian):
//!
//! * Spectrum sample, magic `THZSPEC1`: u32 rows, u32 cols, u32 channel
//!   count (4), Rx pose as binary64 (position xyz, quaternion wxyz), then
//!   row-major binary32 channel planes in order gain (linear), tof (s),
//!   aod_az (rad), aod_el (rad).
//! * MPC list, magic `THZMPCS1`: u32 count, then per component binary64
//!   gain, phase, delay, aoa xyz, aod xyz, u8 bounce flag, bounce xyz
//!   (zeros for LoS).
//! * Checkpoint, magic `THZRRF01`: u32 primitive count, u32 SH degree,
//!   binary64 carrier frequency and Tx position, then binary32 arrays:
//!   centers (3N), scales (3N), quaternions (4N, wxyz), densities (N), SH
//!   coefficients (N * (L+1)^2). Binary32 storage rounds field values;
//!   loading renormalizes each quaternion.
//!
//! Every write goes through a temp file and rename, so readers never see a
//! partial file.

use crate::error::{Error, Result};
use crate::field::{GaussianField, GaussianPrimitive};
use crate::geom::{RotationQ, UnitDir};
use crate::grid::SphericalGrid;
use crate::sh::{self, ShCoeffs};
use crate::spectrum::{Mpc, RxPose, SpatialSpectrum, SpectrumPixel};
use crate::trace::{Dataset, RxSample};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{Point3, Quaternion, Vector3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::io::{Cursor, Read};
use std::path::{Path, PathBuf};

pub const SPECTRUM_MAGIC: &[u8; 8] = b"THZSPEC1";
pub const MPC_MAGIC: &[u8; 8] = b"THZMPCS1";
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"THZRRF01";
pub const MANIFEST_VERSION: u32 = 1;
pub const CHANNELS: [&str; 4] = ["gain", "tof", "aod_az", "aod_el"];

/// Writes bytes atomically: temp file in the same directory, then rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "out".into())
    ));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn check_magic(r: &mut impl Read, expected: &[u8; 8], what: &str) -> Result<()> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != expected {
        return Err(Error::Format(format!(
            "{what}: bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&magic),
            String::from_utf8_lossy(expected)
        )));
    }
    Ok(())
}

// --- spectrum samples ----------------------------------------------------

pub fn spectrum_to_bytes(s: &SpatialSpectrum) -> Vec<u8> {
    let n = s.grid.n_pixels();
    let mut buf = Vec::with_capacity(8 + 12 + 7 * 8 + 4 * 4 * n);
    buf.extend_from_slice(SPECTRUM_MAGIC);
    buf.write_u32::<LittleEndian>(s.grid.n_el as u32).unwrap();
    buf.write_u32::<LittleEndian>(s.grid.n_az as u32).unwrap();
    buf.write_u32::<LittleEndian>(CHANNELS.len() as u32).unwrap();
    let p = s.rx_pose.position;
    for v in [p.x, p.y, p.z] {
        buf.write_f64::<LittleEndian>(v).unwrap();
    }
    let (w, x, y, z) = s.rx_pose.orientation.wxyz();
    for v in [w, x, y, z] {
        buf.write_f64::<LittleEndian>(v).unwrap();
    }
    for get in [
        (|px: &SpectrumPixel| px.gain) as fn(&SpectrumPixel) -> f64,
        |px| px.tof_s,
        |px| px.aod_az,
        |px| px.aod_el,
    ] {
        for px in s.pixels() {
            buf.write_f32::<LittleEndian>(get(px) as f32).unwrap();
        }
    }
    buf
}

pub fn spectrum_from_bytes(bytes: &[u8]) -> Result<SpatialSpectrum> {
    let mut r = Cursor::new(bytes);
    check_magic(&mut r, SPECTRUM_MAGIC, "spectrum")?;
    let n_el = r.read_u32::<LittleEndian>()? as usize;
    let n_az = r.read_u32::<LittleEndian>()? as usize;
    let n_ch = r.read_u32::<LittleEndian>()? as usize;
    if n_ch != CHANNELS.len() {
        return Err(Error::Format(format!(
            "spectrum: expected {} channels, found {n_ch}",
            CHANNELS.len()
        )));
    }
    let grid = SphericalGrid::new(n_el, n_az)?;
    let px = r.read_f64::<LittleEndian>()?;
    let py = r.read_f64::<LittleEndian>()?;
    let pz = r.read_f64::<LittleEndian>()?;
    let qw = r.read_f64::<LittleEndian>()?;
    let qx = r.read_f64::<LittleEndian>()?;
    let qy = r.read_f64::<LittleEndian>()?;
    let qz = r.read_f64::<LittleEndian>()?;
    let pose = RxPose::new(Point3::new(px, py, pz), RotationQ::new(qw, qx, qy, qz)?);
    let n = grid.n_pixels();
    let mut planes = vec![vec![0.0f64; n]; CHANNELS.len()];
    for plane in planes.iter_mut() {
        for v in plane.iter_mut() {
            *v = r.read_f32::<LittleEndian>()? as f64;
        }
    }
    let pixels = (0..n)
        .map(|i| SpectrumPixel {
            gain: planes[0][i],
            tof_s: planes[1][i],
            aod_az: planes[2][i],
            aod_el: planes[3][i],
        })
        .collect();
    Ok(SpatialSpectrum::from_pixels(grid, pose, pixels))
}

pub fn save_spectrum(s: &SpatialSpectrum, path: &Path) -> Result<()> {
    atomic_write(path, &spectrum_to_bytes(s))
}

pub fn load_spectrum(path: &Path) -> Result<SpatialSpectrum> {
    spectrum_from_bytes(&fs::read(path)?)
}

// --- MPC lists ------------------------------------------------------------

pub fn mpcs_to_bytes(mpcs: &[Mpc]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(8 + 4 + mpcs.len() * (9 * 8 + 1 + 24));
    buf.extend_from_slice(MPC_MAGIC);
    buf.write_u32::<LittleEndian>(mpcs.len() as u32).unwrap();
    for m in mpcs {
        for v in [
            m.gain,
            m.phase_rad,
            m.delay_s,
            m.aoa.x(),
            m.aoa.y(),
            m.aoa.z(),
            m.aod.x(),
            m.aod.y(),
            m.aod.z(),
        ] {
            buf.write_f64::<LittleEndian>(v).unwrap();
        }
        match m.bounce_point {
            Some(p) => {
                buf.write_u8(1).unwrap();
                for v in [p.x, p.y, p.z] {
                    buf.write_f64::<LittleEndian>(v).unwrap();
                }
            }
            None => {
                buf.write_u8(0).unwrap();
                for _ in 0..3 {
                    buf.write_f64::<LittleEndian>(0.0).unwrap();
                }
            }
        }
    }
    buf
}

pub fn mpcs_from_bytes(bytes: &[u8]) -> Result<Vec<Mpc>> {
    let mut r = Cursor::new(bytes);
    check_magic(&mut r, MPC_MAGIC, "mpc list")?;
    let count = r.read_u32::<LittleEndian>()? as usize;
    let mut mpcs = Vec::with_capacity(count);
    for _ in 0..count {
        let gain = r.read_f64::<LittleEndian>()?;
        let phase_rad = r.read_f64::<LittleEndian>()?;
        let delay_s = r.read_f64::<LittleEndian>()?;
        let mut dirs = [0.0f64; 6];
        for v in dirs.iter_mut() {
            *v = r.read_f64::<LittleEndian>()?;
        }
        let has_bounce = r.read_u8()? != 0;
        let bx = r.read_f64::<LittleEndian>()?;
        let by = r.read_f64::<LittleEndian>()?;
        let bz = r.read_f64::<LittleEndian>()?;
        mpcs.push(Mpc {
            gain,
            phase_rad,
            delay_s,
            aoa: UnitDir::from_unit_components(dirs[0], dirs[1], dirs[2])?,
            aod: UnitDir::from_unit_components(dirs[3], dirs[4], dirs[5])?,
            bounce_point: has_bounce.then(|| Point3::new(bx, by, bz)),
        });
    }
    Ok(mpcs)
}

// --- checkpoints ----------------------------------------------------------

pub fn checkpoint_to_bytes(field: &GaussianField) -> Vec<u8> {
    let n = field.len();
    let n_coeffs = sh::coeff_count(field.sh_degree);
    let mut buf = Vec::with_capacity(8 + 8 + 4 * 8 + 4 * n * (3 + 3 + 4 + 1 + n_coeffs));
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.write_u32::<LittleEndian>(n as u32).unwrap();
    buf.write_u32::<LittleEndian>(field.sh_degree as u32).unwrap();
    buf.write_f64::<LittleEndian>(field.carrier_frequency_hz).unwrap();
    for v in [
        field.tx_position.x,
        field.tx_position.y,
        field.tx_position.z,
    ] {
        buf.write_f64::<LittleEndian>(v).unwrap();
    }
    for g in &field.primitives {
        for v in [g.center.x, g.center.y, g.center.z] {
            buf.write_f32::<LittleEndian>(v as f32).unwrap();
        }
    }
    for g in &field.primitives {
        for v in [g.scale.x, g.scale.y, g.scale.z] {
            buf.write_f32::<LittleEndian>(v as f32).unwrap();
        }
    }
    for g in &field.primitives {
        let (w, x, y, z) = g.rotation.wxyz();
        for v in [w, x, y, z] {
            buf.write_f32::<LittleEndian>(v as f32).unwrap();
        }
    }
    for g in &field.primitives {
        buf.write_f32::<LittleEndian>(g.base_density as f32).unwrap();
    }
    for g in &field.primitives {
        for &c in g.gain_sh.coeffs() {
            buf.write_f32::<LittleEndian>(c as f32).unwrap();
        }
    }
    buf
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<GaussianField> {
    let mut r = Cursor::new(bytes);
    check_magic(&mut r, CHECKPOINT_MAGIC, "checkpoint")?;
    let n = r.read_u32::<LittleEndian>()? as usize;
    let sh_degree = r.read_u32::<LittleEndian>()? as usize;
    if sh_degree > sh::MAX_DEGREE {
        return Err(Error::Format(format!(
            "checkpoint: SH degree {sh_degree} out of range"
        )));
    }
    let n_coeffs = sh::coeff_count(sh_degree);
    let carrier_frequency_hz = r.read_f64::<LittleEndian>()?;
    let tx = Point3::new(
        r.read_f64::<LittleEndian>()?,
        r.read_f64::<LittleEndian>()?,
        r.read_f64::<LittleEndian>()?,
    );
    let f32s = |r: &mut Cursor<&[u8]>, count: usize| -> Result<Vec<f64>> {
        let mut v = Vec::with_capacity(count);
        for _ in 0..count {
            v.push(r.read_f32::<LittleEndian>()? as f64);
        }
        Ok(v)
    };
    let centers = f32s(&mut r, 3 * n)?;
    let scales = f32s(&mut r, 3 * n)?;
    let quats = f32s(&mut r, 4 * n)?;
    let densities = f32s(&mut r, n)?;
    let coeffs = f32s(&mut r, n * n_coeffs)?;
    if !centers.iter().chain(&scales).chain(&quats).chain(&densities).chain(&coeffs).all(|v| v.is_finite()) {
        return Err(Error::Format("checkpoint: non-finite value".into()));
    }

    let mut primitives = Vec::with_capacity(n);
    for i in 0..n {
        let q = Quaternion::new(
            quats[4 * i],
            quats[4 * i + 1],
            quats[4 * i + 2],
            quats[4 * i + 3],
        );
        if q.norm() < 1e-6 {
            return Err(Error::Format("checkpoint: zero quaternion".into()));
        }
        // Binary32 rounding perturbs the norm; renormalize on load.
        let qn = q.normalize();
        primitives.push(GaussianPrimitive {
            center: Point3::new(centers[3 * i], centers[3 * i + 1], centers[3 * i + 2]),
            scale: Vector3::new(scales[3 * i], scales[3 * i + 1], scales[3 * i + 2]),
            rotation: RotationQ::new(qn.w, qn.i, qn.j, qn.k)?,
            base_density: densities[i],
            gain_sh: ShCoeffs::from_coeffs(
                sh_degree,
                coeffs[i * n_coeffs..(i + 1) * n_coeffs].to_vec(),
            )?,
        });
    }
    Ok(GaussianField {
        primitives,
        tx_position: tx,
        carrier_frequency_hz,
        sh_degree,
    })
}

pub fn save_checkpoint(field: &GaussianField, path: &Path) -> Result<()> {
    atomic_write(path, &checkpoint_to_bytes(field))
}

pub fn load_checkpoint(path: &Path) -> Result<GaussianField> {
    checkpoint_from_bytes(&fs::read(path)?)
}

// --- dataset directories ---------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ManifestSample {
    pub spectrum: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mpcs: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub grid: SphericalGrid,
    pub channels: Vec<String>,
    pub sample_count: usize,
    pub carrier_frequency_hz: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scene_sha256: Option<String>,
    pub samples: Vec<ManifestSample>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.format_version != MANIFEST_VERSION {
            return Err(Error::Format(format!(
                "manifest version {} unsupported (expected {MANIFEST_VERSION})",
                self.format_version
            )));
        }
        if self.sample_count != self.samples.len() {
            return Err(Error::Format(format!(
                "manifest sample_count {} but {} entries",
                self.sample_count,
                self.samples.len()
            )));
        }
        Ok(())
    }
}

fn manifest_bytes(manifest: &DatasetManifest) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(manifest)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes a full dataset directory: `manifest.json` plus per-sample
/// spectrum/MPC binaries.
pub fn write_dataset(dataset: &Dataset, dir: &Path, scene_sha256: Option<String>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut samples = Vec::with_capacity(dataset.samples.len());
    for (i, sample) in dataset.samples.iter().enumerate() {
        let spec_name = format!("sample_{i:05}.spec");
        let mpc_name = format!("sample_{i:05}.mpc");
        atomic_write(&dir.join(&spec_name), &spectrum_to_bytes(&sample.spectrum))?;
        atomic_write(&dir.join(&mpc_name), &mpcs_to_bytes(&sample.mpcs))?;
        samples.push(ManifestSample {
            spectrum: spec_name,
            mpcs: Some(mpc_name),
        });
    }
    let manifest = DatasetManifest {
        format_version: MANIFEST_VERSION,
        grid: dataset.grid,
        channels: CHANNELS.iter().map(|s| s.to_string()).collect(),
        sample_count: dataset.samples.len(),
        carrier_frequency_hz: dataset.carrier_frequency_hz,
        scene_sha256,
        samples,
    };
    atomic_write(&dir.join("manifest.json"), &manifest_bytes(&manifest)?)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let manifest: DatasetManifest =
        serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
    manifest.validate()?;
    Ok(manifest)
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = read_manifest(dir)?;
    let mut samples = Vec::with_capacity(manifest.samples.len());
    for entry in &manifest.samples {
        let spectrum = load_spectrum(&dir.join(&entry.spectrum))?;
        if spectrum.grid != manifest.grid {
            return Err(Error::Format(format!(
                "sample {} grid {} does not match manifest grid {}",
                entry.spectrum, spectrum.grid, manifest.grid
            )));
        }
        let mpcs = match &entry.mpcs {
            Some(name) => mpcs_from_bytes(&fs::read(dir.join(name))?)?,
            None => Vec::new(),
        };
        samples.push(RxSample {
            rx_pose: spectrum.rx_pose,
            mpcs,
            spectrum,
        });
    }
    Ok(Dataset {
        grid: manifest.grid,
        carrier_frequency_hz: manifest.carrier_frequency_hz,
        samples,
    })
}

/// Writes rendered spectra as a prediction directory readable by the eval
/// tooling (manifest without MPC files).
pub fn write_spectra_dir(
    spectra: &[SpatialSpectrum],
    grid: SphericalGrid,
    carrier_frequency_hz: f64,
    dir: &Path,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut samples = Vec::with_capacity(spectra.len());
    for (i, s) in spectra.iter().enumerate() {
        let name = format!("sample_{i:05}.spec");
        atomic_write(&dir.join(&name), &spectrum_to_bytes(s))?;
        samples.push(ManifestSample {
            spectrum: name,
            mpcs: None,
        });
    }
    let manifest = DatasetManifest {
        format_version: MANIFEST_VERSION,
        grid,
        channels: CHANNELS.iter().map(|s| s.to_string()).collect(),
        sample_count: spectra.len(),
        carrier_frequency_hz,
        scene_sha256: None,
        samples,
    };
    atomic_write(&dir.join("manifest.json"), &manifest_bytes(&manifest)?)
}

/// Reads every spectrum referenced by a directory manifest, in order.
pub fn read_spectra_dir(dir: &Path) -> Result<Vec<SpatialSpectrum>> {
    let manifest = read_manifest(dir)?;
    manifest
        .samples
        .iter()
        .map(|e| load_spectrum(&dir.join(&e.spectrum)))
        .collect()
}

/// Serializes an entire dataset directory back to bytes per file, for
/// byte-identity checks: (relative name, content) pairs sorted by name.
pub fn dataset_dir_fingerprint(dir: &Path) -> Result<Vec<(String, Vec<u8>)>> {
    let mut entries: Vec<(String, Vec<u8>)> = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if entry.file_type()?.is_file() {
            entries.push((
                entry.file_name().to_string_lossy().into_owned(),
                fs::read(entry.path())?,
            ));
        }
    }
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(entries)
}

/// Directory for epoch checkpoints under a training output root.
pub fn checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("epoch_{epoch:05}.rrf"))
}
