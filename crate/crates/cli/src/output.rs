use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use slnp_core::TrainTrace;

use crate::CliError;

/// A rendered output file, written only once every computation succeeded.
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn new(name: impl Into<String>, bytes: Vec<u8>) -> Self {
        Self {
            name: name.into(),
            bytes,
        }
    }
}

/// Writes through a temporary file in the same directory and renames it
/// into place, so a failure never leaves a partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let out_err = |source| CliError::Output {
        path: path.to_path_buf(),
        source,
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(out_err)?;
    tmp.write_all(bytes).map_err(out_err)?;
    tmp.persist(path).map_err(|e| out_err(e.error))?;
    Ok(())
}

pub fn write_all(dir: &Path, artifacts: &[Artifact]) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Output {
        path: dir.to_path_buf(),
        source,
    })?;
    artifacts
        .iter()
        .map(|a| {
            let path = dir.join(&a.name);
            write_atomic(&path, &a.bytes)?;
            Ok(path)
        })
        .collect()
}

pub const EVOLUTION_HEADER: [&str; 3] = ["iter", "neighbor_index", "similarity"];
pub const HEAT_KERNEL_HEADER: [&str; 3] = ["neighbor_index", "heat_kernel", "final_similarity"];

/// Renders the watched sample's similarity row per iteration (long format)
/// and the fixed heat-kernel row next to the final learned one.
pub fn similarity_evolution_csv(trace: &TrainTrace) -> Result<(Vec<u8>, Vec<u8>), CliError> {
    let w = trace
        .watched
        .as_ref()
        .ok_or(slnp_core::Error::NoWatchedSample)?;
    let mut evo = csv::Writer::from_writer(Vec::new());
    evo.write_record(EVOLUTION_HEADER)?;
    for (iter, row) in w.snapshots.iter().enumerate() {
        for (j, s) in row.iter().enumerate() {
            evo.write_record([iter.to_string(), j.to_string(), s.to_string()])?;
        }
    }
    let last = w.snapshots.last().ok_or(slnp_core::Error::NoWatchedSample)?;
    let mut heat = csv::Writer::from_writer(Vec::new());
    heat.write_record(HEAT_KERNEL_HEADER)?;
    for (j, h) in w.heat_kernel.iter().enumerate() {
        heat.write_record([j.to_string(), h.to_string(), last[j].to_string()])?;
    }
    Ok((into_bytes(evo)?, into_bytes(heat)?))
}

/// Companion file name: `evolution.csv` → `evolution_heat_kernel.csv`.
pub fn heat_kernel_path(out_path: &Path) -> PathBuf {
    let stem = out_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out_path.with_file_name(format!("{stem}_heat_kernel.csv"))
}

/// Writes the similarity evolution of the watched sample to `out_path` and
/// the heat-kernel companion beside it; returns the companion's path.
pub fn emit_similarity_evolution(trace: &TrainTrace, out_path: &Path) -> Result<PathBuf, CliError> {
    let (evo, heat) = similarity_evolution_csv(trace)?;
    let companion = heat_kernel_path(out_path);
    write_atomic(out_path, &evo)?;
    write_atomic(&companion, &heat)?;
    Ok(companion)
}

pub fn into_bytes(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>, CliError> {
    w.into_inner()
        .map_err(|e| CliError::Internal(format!("flushing csv: {}", e.error())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use slnp_core::WatchedSample;

    fn trace() -> TrainTrace {
        TrainTrace {
            records: Vec::new(),
            watched: Some(WatchedSample {
                class: 0,
                sample: 1,
                snapshots: vec![vec![0.5, 0.5], vec![0.0, 1.0]],
                heat_kernel: vec![0.25, 1.0],
            }),
            converged: true,
        }
    }

    #[test]
    fn renders_long_format() {
        let (evo, heat) = similarity_evolution_csv(&trace()).unwrap();
        assert_eq!(
            String::from_utf8(evo).unwrap(),
            "iter,neighbor_index,similarity\n0,0,0.5\n0,1,0.5\n1,0,0\n1,1,1\n"
        );
        assert_eq!(
            String::from_utf8(heat).unwrap(),
            "neighbor_index,heat_kernel,final_similarity\n0,0.25,0\n1,1,1\n"
        );
    }

    #[test]
    fn requires_watched_sample() {
        let t = TrainTrace {
            watched: None,
            ..trace()
        };
        let dir = tempfile::tempdir().unwrap();
        let err = emit_similarity_evolution(&t, &dir.path().join("e.csv")).unwrap_err();
        assert!(matches!(err, CliError::Core(slnp_core::Error::NoWatchedSample)));
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn writes_both_files() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("evolution.csv");
        let companion = emit_similarity_evolution(&trace(), &out).unwrap();
        assert_eq!(companion, dir.path().join("evolution_heat_kernel.csv"));
        assert!(fs::read_to_string(&out).unwrap().starts_with("iter,"));
        assert!(fs::read_to_string(&companion).unwrap().starts_with("neighbor_index,"));
    }
}
