use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context};

use lcflow_core::diagnostics::RECORD_COLUMNS;
use lcflow_core::manifest::{manifest_path, parse_key_values, sha256_file, write_atomic};

type Outcome = Result<u8, (u8, anyhow::Error)>;

fn io(e: anyhow::Error) -> (u8, anyhow::Error) {
    (super::EXIT_IO, e)
}

/// Rows of a headed CSV file as column-name maps.
fn read_csv(path: &Path) -> anyhow::Result<Vec<BTreeMap<String, String>>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| anyhow!("{} is empty", path.display()))?.split(',').collect();
    Ok(lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            header
                .iter()
                .zip(l.split(','))
                .map(|(h, v)| (h.to_string(), v.to_string()))
                .collect()
        })
        .collect())
}

fn num(row: &BTreeMap<String, String>, key: &str) -> f64 {
    row.get(key).and_then(|v| v.parse().ok()).unwrap_or(f64::NAN)
}

/// Verifies every `file.*` checksum in the manifest; returns the mismatches.
fn verify(dir: &Path, manifest: &[(String, String)]) -> Vec<String> {
    let mut bad = Vec::new();
    for (k, v) in manifest {
        let Some(rel) = k.strip_prefix("file.") else { continue };
        let want = v.strip_prefix("sha256:").unwrap_or(v);
        match sha256_file(&dir.join(rel)) {
            Ok(got) if got == want => {}
            Ok(_) => bad.push(format!("{rel}: checksum mismatch")),
            Err(e) => bad.push(format!("{rel}: {e}")),
        }
    }
    bad
}

fn regime_summary(dir: &Path, text: &mut String) -> anyhow::Result<()> {
    let rows = read_csv(&dir.join("regime_map.csv"))?;
    // (alpha, gamma, rho_bar, target) -> (cells, persisted, blew_up, other, max E_d)
    let mut groups: BTreeMap<(String, String, String, String), (usize, usize, usize, usize, f64)> = BTreeMap::new();
    for r in &rows {
        let key = (
            r["alpha"].clone(),
            r["gamma"].clone(),
            r["rho_bar"].clone(),
            r["grad_d_target"].clone(),
        );
        let g = groups.entry(key).or_insert((0, 0, 0, 0, 0.0));
        g.0 += 1;
        match r["outcome"].as_str() {
            "persisted" => g.1 += 1,
            "blew_up" => g.2 += 1,
            _ => g.3 += 1,
        }
        let ed = num(r, "E_d");
        if ed.is_finite() {
            g.4 = g.4.max(ed);
        }
    }
    let mut csv = String::from("alpha,gamma,rho_bar,grad_d_target,cells,persisted,blew_up,other,persisted_fraction,max_E_d\n");
    writeln!(text, "regime map: {} cells", rows.len())?;
    writeln!(
        text,
        "persistence = reached t_end with density in band and no blow-up trigger (finite horizon)"
    )?;
    writeln!(
        text,
        "{:>6} {:>6} {:>8} {:>8} {:>6} {:>10} {:>8} {:>6}",
        "alpha", "gamma", "rho_bar", "target", "cells", "persisted", "blew_up", "other"
    )?;
    for ((a, g, rb, t), (n, ok, bu, other, ed)) in &groups {
        let frac = *ok as f64 / *n as f64;
        csv.push_str(&format!("{a},{g},{rb},{t},{n},{ok},{bu},{other},{frac},{ed:.16e}\n"));
        writeln!(text, "{a:>6} {g:>6} {rb:>8} {t:>8} {n:>6} {ok:>10} {bu:>8} {other:>6}")?;
    }
    write_atomic(&dir.join("regime_summary.csv"), csv.as_bytes())?;
    Ok(())
}

fn run_summary(dir: &Path, manifest: &[(String, String)], text: &mut String) -> anyhow::Result<()> {
    let rows = read_csv(&dir.join("records.csv"))?;
    let mut csv = String::from("functional,value\n");
    writeln!(text, "bootstrap functionals:")?;
    for (k, v) in manifest {
        if let Some(name) = k.strip_prefix("bootstrap.") {
            csv.push_str(&format!("{name},{v}\n"));
            writeln!(text, "  {name:<8} {v}")?;
        }
    }
    write_atomic(&dir.join("bootstrap.csv"), csv.as_bytes())?;
    if let (Some(first), Some(last)) = (rows.first(), rows.last()) {
        let mut worst_rise = 0.0f64;
        for w in rows.windows(2) {
            worst_rise = worst_rise.max(num(&w[1], "total_energy") - num(&w[0], "total_energy"));
        }
        writeln!(text, "records: {} rows ({} columns)", rows.len(), RECORD_COLUMNS.len())?;
        writeln!(text, "  t:            {:.6e} -> {:.6e}", num(first, "t"), num(last, "t"))?;
        writeln!(
            text,
            "  total_energy: {:.6e} -> {:.6e} (largest rise between records {:.3e})",
            num(first, "total_energy"),
            num(last, "total_energy"),
            worst_rise
        )?;
        writeln!(text, "  mass:         {:.16e} -> {:.16e}", num(first, "mass"), num(last, "mass"))?;
        writeln!(
            text,
            "  grad_d_l3:    {:.6e} -> {:.6e}",
            num(first, "grad_d_l3"),
            num(last, "grad_d_l3")
        )?;
    }
    Ok(())
}

/// Summarises `dir` into `summary.txt` (plus CSV tables) after checking its manifest.
pub fn cmd_report(dir: &Path) -> Outcome {
    let mpath = manifest_path(dir);
    let manifest_text = fs::read_to_string(&mpath)
        .with_context(|| format!("reading {}", mpath.display()))
        .map_err(io)?;
    let manifest = parse_key_values(&manifest_text);
    let mut text = String::new();
    for key in ["outcome", "blowup_reason", "steps", "final_time", "cells", "finished"] {
        if let Some((_, v)) = manifest.iter().find(|(k, _)| k == key) {
            writeln!(text, "{key}: {v}").map_err(|e| io(e.into()))?;
        }
    }
    if dir.join("regime_map.csv").is_file() {
        regime_summary(dir, &mut text).map_err(io)?;
    }
    if dir.join("records.csv").is_file() {
        run_summary(dir, &manifest, &mut text).map_err(io)?;
    }
    let bad = verify(dir, &manifest);
    if bad.is_empty() {
        writeln!(text, "manifest checksums: all verified").map_err(|e| io(e.into()))?;
    } else {
        for b in &bad {
            writeln!(text, "manifest checksum failure: {b}").map_err(|e| io(e.into()))?;
        }
    }
    write_atomic(&dir.join("summary.txt"), text.as_bytes())
        .context("writing summary.txt")
        .map_err(io)?;
    print!("{text}");
    Ok(if bad.is_empty() { 0 } else { super::EXIT_CHECK })
}
