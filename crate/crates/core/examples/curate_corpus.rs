//! Generates a small textured corpus, runs every filter on it and prints one
//! line per asset.
//!
//!     cargo run --release --example curate_corpus -- [count] [out_dir]

use s13d::filters::{curate_corpus, write_report, FilterConfig};
use s13d::synth::write_synthetic_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let count = args.first().and_then(|a| a.parse().ok()).unwrap_or(10);
    let tmp = tempfile::tempdir()?;
    let dir = args.get(1).map(Into::into).unwrap_or_else(|| tmp.path().to_path_buf());

    let (manifest, assets) = write_synthetic_corpus(&dir, count, 0)?;
    let reports = curate_corpus(&manifest, &FilterConfig::default())?;
    for (asset, r) in assets.iter().zip(&reports) {
        let failed: Vec<&str> = r.verdicts.iter().filter(|v| !v.passed).map(|v| v.filter.as_str()).collect();
        println!(
            "{:<16} {:<16} score {:.4} kept {:<5} failed {:?}",
            r.asset_id,
            format!("{:?}", asset.kind),
            r.perceptual_score,
            r.kept,
            failed
        );
    }
    let report = dir.join("curation.jsonl");
    write_report(&reports, &report)?;
    println!("report: {}", report.display());
    Ok(())
}
