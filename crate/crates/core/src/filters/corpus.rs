use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    metadata_filter, perceptual_score, single_surface_filter, small_object_filter, texture_quality_filter,
    wrong_normal_filter, FilterConfig, FilterError, FilterKind, FilterVerdict,
};
use crate::mesh::{load_mesh, normalize_to_unit_cube};
use crate::raster;
use crate::render::render_canonical_views;

/// One manifest line. Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub asset_id: String,
    pub mesh: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub texture: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationReport {
    pub asset_id: String,
    pub kept: bool,
    pub perceptual_score: f64,
    pub verdicts: Vec<FilterVerdict>,
}

impl CurationReport {
    pub fn passed_filters(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, FilterError> {
    let text = fs::read_to_string(path)
        .map_err(|e| FilterError::Io { path: path.to_path_buf(), message: e.to_string() })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut e: ManifestEntry = serde_json::from_str(line).map_err(|err| FilterError::Manifest {
            path: path.to_path_buf(),
            line: i + 1,
            message: err.to_string(),
        })?;
        e.mesh = base.join(&e.mesh);
        e.texture = e.texture.map(|t| base.join(t));
        out.push(e);
    }
    Ok(out)
}

fn load_failure(message: String) -> (Vec<FilterVerdict>, f64) {
    let v = FilterVerdict::failed(FilterKind::Load, "load_error").with("message", message);
    (vec![v], 0.0)
}

/// Loads, normalizes and renders one asset, then runs every filter.
/// Returns the verdicts and the perceptual score.
pub fn curate_asset(entry: &ManifestEntry, cfg: &FilterConfig) -> (Vec<FilterVerdict>, f64) {
    let loaded = match load_mesh(&entry.mesh) {
        Ok(l) => l,
        Err(e) => return load_failure(e.to_string()),
    };
    let texture = match entry.texture.as_ref().or(loaded.texture_path.as_ref()) {
        Some(p) => match raster::load_png_rgba(p) {
            Ok(t) => Some(t),
            Err(e) => return load_failure(e.to_string()),
        },
        None => None,
    };
    let mut material = loaded.mesh.material.clone();
    if material.asset_name.is_empty() {
        material.asset_name = entry.asset_id.clone();
    }
    let mesh = match normalize_to_unit_cube(&loaded.mesh) {
        Ok(n) => n.mesh,
        Err(e) => return load_failure(e.to_string()),
    };
    let views = match render_canonical_views(&mesh, cfg.render_resolution, texture.as_ref()) {
        Ok(v) => v,
        Err(e) => return load_failure(e.to_string()),
    };
    let verdicts = vec![
        texture_quality_filter(&views, cfg),
        single_surface_filter(&views, cfg),
        small_object_filter(&views, cfg),
        wrong_normal_filter(&views, cfg),
        metadata_filter(&material),
    ];
    (verdicts, perceptual_score(&views))
}

/// Marks the lowest-scoring `percent`% (rounded down) of the assets that
/// passed every filter as not kept. Ties go to the smaller asset id first.
pub fn apply_perceptual_cut(reports: &mut [CurationReport], percent: usize) {
    let mut survivors: Vec<usize> = (0..reports.len()).filter(|&i| reports[i].passed_filters()).collect();
    for &i in &survivors {
        reports[i].kept = true;
    }
    survivors.sort_by(|&a, &b| {
        reports[a]
            .perceptual_score
            .total_cmp(&reports[b].perceptual_score)
            .then_with(|| reports[a].asset_id.cmp(&reports[b].asset_id))
    });
    let removed = survivors.len() * percent / 100;
    for &i in &survivors[..removed] {
        reports[i].kept = false;
    }
}

/// Curates every manifest asset in parallel. A failing asset only affects
/// its own report. Reports come back sorted by asset id.
pub fn curate_corpus(manifest: &Path, cfg: &FilterConfig) -> Result<Vec<CurationReport>, FilterError> {
    let entries = read_manifest(manifest)?;
    let mut reports: Vec<CurationReport> = entries
        .par_iter()
        .map(|e| {
            let (verdicts, score) = curate_asset(e, cfg);
            log::info!("curated {}: score {score:.4}", e.asset_id);
            CurationReport { asset_id: e.asset_id.clone(), kept: false, perceptual_score: score, verdicts }
        })
        .collect();
    reports.sort_by(|a, b| a.asset_id.cmp(&b.asset_id));
    apply_perceptual_cut(&mut reports, cfg.bottom_percent);
    Ok(reports)
}

/// One JSON object per line.
pub fn write_report(reports: &[CurationReport], path: &Path) -> Result<(), FilterError> {
    let io = |e: std::io::Error| FilterError::Io { path: path.to_path_buf(), message: e.to_string() };
    let mut w = BufWriter::new(fs::File::create(path).map_err(io)?);
    for r in reports {
        let line = serde_json::to_string(r).expect("reports serialize");
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(id: &str, score: f64, passed: bool) -> CurationReport {
        CurationReport {
            asset_id: id.into(),
            kept: false,
            perceptual_score: score,
            verdicts: vec![FilterVerdict::new(FilterKind::Metadata, passed, 1.0)],
        }
    }

    #[test]
    fn ten_distinct_keep_eight() {
        let mut r: Vec<_> = (0..10).map(|i| report(&format!("a{i}"), i as f64 * 0.1, true)).collect();
        apply_perceptual_cut(&mut r, 20);
        assert_eq!(r.iter().filter(|r| r.kept).count(), 8);
        assert!(!r[0].kept && !r[1].kept && r[2].kept);
    }

    #[test]
    fn ties_break_by_id() {
        let mut r: Vec<_> = ["e", "b", "d", "a", "c"].iter().map(|id| report(id, 0.5, true)).collect();
        apply_perceptual_cut(&mut r, 20);
        let removed: Vec<_> = r.iter().filter(|r| !r.kept).map(|r| r.asset_id.as_str()).collect();
        assert_eq!(removed, vec!["a"]);
    }

    #[test]
    fn failed_assets_are_not_ranked() {
        let mut r = vec![report("bad", 0.9, false)];
        r.extend((0..5).map(|i| report(&format!("ok{i}"), i as f64, true)));
        apply_perceptual_cut(&mut r, 20);
        assert!(!r[0].kept);
        assert_eq!(r.iter().filter(|r| r.kept).count(), 4);
    }

    #[test]
    fn manifest_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        fs::write(&p, "{\"asset_id\":\"a\",\"mesh\":\"a.obj\"}\n\nnot json\n").unwrap();
        match read_manifest(&p) {
            Err(FilterError::Manifest { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        fs::write(&p, "{\"asset_id\":\"a\",\"mesh\":\"a.obj\",\"texture\":\"t.png\"}\n").unwrap();
        let m = read_manifest(&p).unwrap();
        assert_eq!(m[0].mesh, dir.path().join("a.obj"));
        assert_eq!(m[0].texture.as_deref(), Some(dir.path().join("t.png").as_path()));
    }
}
