//! Gnuplot scripts for result CSVs.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::presets::Preset;

const SE_COLUMNS: [&str; 4] = ["estimator", "sweep_var", "snr_db", "mean_se"];
const ECDF_COLUMNS: [&str; 3] = ["omega_hz", "rho", "cdf"];

fn column(header: &csv::StringRecord, name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Schema(name.to_string()))
}

fn first_seen(keys: impl Iterator<Item = String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for k in keys {
        if !out.contains(&k) {
            out.push(k);
        }
    }
    out
}

/// Writes `<stem>.gp` next to `result_csv`; running it renders
/// `<stem>.png`. The script only depends on the CSV contents, so
/// regenerating it yields the same bytes.
pub fn emit_plot_script(result_csv: &Path, preset: Preset) -> Result<PathBuf> {
    let mut reader = csv::Reader::from_path(result_csv).map_err(|e| Error::invalid(e.to_string()))?;
    let header = reader.headers().map_err(|e| Error::invalid(e.to_string()))?.clone();
    let records = reader
        .records()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::invalid(e.to_string()))?;

    let stem = result_csv
        .file_stem()
        .ok_or_else(|| Error::invalid("result path has no file name"))?
        .to_string_lossy()
        .into_owned();
    let data = result_csv.file_name().unwrap_or_default().to_string_lossy().into_owned();
    let mut s = String::new();
    s.push_str("set terminal pngcairo size 900,600\n");
    s.push_str(&format!("set output '{stem}.png'\n"));
    s.push_str("set datafile separator ','\nset key bottom right\nset grid\n");

    let clauses: Vec<String> = if preset == Preset::Fig2 {
        let [omega, rho, cdf] = ECDF_COLUMNS.map(|c| column(&header, c));
        let (omega, rho, cdf) = (omega?, rho?, cdf?);
        s.push_str("set xlabel 'rho'\nset ylabel 'ECDF'\nset yrange [0:1]\n");
        first_seen(records.iter().map(|r| r[omega].to_string()))
            .into_iter()
            .map(|o| {
                let mhz = o.parse::<f64>().map(|v| v / 1e6).unwrap_or(f64::NAN);
                format!(
                    "'{data}' skip 1 using (strcol({}) eq '{o}' ? ${} : 1/0):{} with steps title 'gap {mhz} MHz'",
                    omega + 1,
                    rho + 1,
                    cdf + 1
                )
            })
            .collect()
    } else {
        let [est, var, snr, se] = SE_COLUMNS.map(|c| column(&header, c));
        let (est, var, snr, se) = (est?, var?, snr?, se?);
        s.push_str("set xlabel 'SNR (dB)'\nset ylabel 'mean sum SE (bits/s/Hz)'\n");
        first_seen(records.iter().map(|r| format!("{},{}", &r[est], &r[var])))
            .into_iter()
            .map(|key| {
                let (e, v) = key.split_once(',').expect("joined above");
                let title = if v == "none" { e.to_string() } else { format!("{e} ({v})") };
                format!(
                    "'{data}' skip 1 using {}:((strcol({}) eq '{e}' && strcol({}) eq '{v}') ? ${} : 1/0) with linespoints title '{title}'",
                    snr + 1,
                    est + 1,
                    var + 1,
                    se + 1
                )
            })
            .collect()
    };
    if clauses.is_empty() {
        return Err(Error::invalid(format!("{} has no data rows", result_csv.display())));
    }
    s.push_str("plot ");
    s.push_str(&clauses.join(", \\\n     "));
    s.push('\n');

    let out = result_csv.with_file_name(format!("{stem}.gp"));
    fs::write(&out, s)?;
    Ok(out)
}
