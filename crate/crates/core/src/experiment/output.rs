use super::plot::{pmf_series, LinePlot, Series};
use super::sweep::{SweepRow, SweepTable};
use super::{log_spaced, ExperimentConfig, SenderMode};
use crate::error::{Error, Result};
use std::path::{Path, PathBuf};

pub const CSV_HEADER: [&str; 10] = [
    "sigma_s2", "rho", "lambda", "mode", "M", "D_D_star", "D_E_0", "D_E_1", "D_E_2", "status",
];

const SIGNIFICANT_DIGITS: usize = 12;

/// `%.{digits}g`-style formatting: fixed notation for moderate exponents,
/// scientific otherwise, trailing zeros dropped.
pub fn format_sig(v: f64, digits: usize) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        format!(
            "{}e{}{:02}",
            trim_zeros(mantissa),
            if exp < 0 { '-' } else { '+' },
            exp.abs()
        )
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn num(v: f64) -> String {
    format_sig(v, SIGNIFICANT_DIGITS)
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn artifact_path(output_dir: &Path, row: &SweepRow) -> PathBuf {
    output_dir.join("points").join(format!(
        "s2_{}_rho_{}_lambda_{}_{}.json",
        num(row.sigma_s2),
        num(row.rho),
        num(row.lambda),
        row.mode
    ))
}

pub fn write_results_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| Error::Io(format!("cannot write {}: {e}", path.display())))?;
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in rows {
        w.write_record([
            num(r.sigma_s2),
            num(r.rho),
            num(r.lambda),
            r.mode.to_string(),
            r.num_cells.to_string(),
            opt(r.receiver_distortion),
            opt(r.sender_distortion[0]),
            opt(r.sender_distortion[1]),
            opt(r.sender_distortion[2]),
            r.status.clone(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| Error::Io(format!("cannot read {}: {e}", path.display())))?;
    let header = rdr.headers().map_err(|e| Error::Io(e.to_string()))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Config(format!(
            "unexpected CSV header in {}",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Io(e.to_string()))?;
        let bad = |what: &str| Error::Config(format!("row {}: bad {what}", line + 1));
        let f = |i: usize| -> Result<f64> { rec[i].parse().map_err(|_| bad(CSV_HEADER[i])) };
        let o = |i: usize| -> Result<Option<f64>> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                f(i).map(Some)
            }
        };
        rows.push(SweepRow {
            sigma_s2: f(0)?,
            rho: f(1)?,
            lambda: f(2)?,
            mode: rec[3].parse()?,
            num_cells: rec[4].parse().map_err(|_| bad("M"))?,
            receiver_distortion: o(5)?,
            sender_distortion: [o(6)?, o(7)?, o(8)?],
            status: rec[9].to_string(),
        });
    }
    Ok(rows)
}

fn distinct(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for v in values {
        if !out.iter().any(|u| u.to_bits() == v.to_bits()) {
            out.push(v);
        }
    }
    out
}

fn curve(rows: &[&SweepRow], mode: SenderMode) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.mode == mode)
        .filter_map(|r| r.receiver_distortion.map(|d| (r.lambda, d)))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts
}

/// Writes the pmf figure, one receiver-distortion figure per `(σ_S², ρ)` cell,
/// one per ρ comparing the σ_S² values, and one per cell comparing all modes.
pub fn render_plots(
    rows: &[SweepRow],
    config: Option<&ExperimentConfig>,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Io(format!("cannot create {}: {e}", dir.display())))?;
    let metadata = config.map(ExperimentConfig::to_toml_string);
    let mut written = Vec::new();
    let mut emit = |name: String, plot: LinePlot| -> Result<()> {
        let path = dir.join(name);
        let plot = LinePlot {
            metadata: metadata.clone(),
            ..plot
        };
        std::fs::write(&path, plot.to_svg())
            .map_err(|e| Error::Io(format!("cannot write {}: {e}", path.display())))?;
        written.push(path);
        Ok(())
    };

    let lambdas = match config {
        Some(c) => c.lambda_list.clone(),
        None => log_spaced(0.001, 700.0, 25),
    };
    let mut lambdas = distinct(lambdas.into_iter());
    lambdas.sort_by(f64::total_cmp);
    emit(
        "pmf.svg".into(),
        LinePlot::new(
            "Poisson type distribution",
            "lambda",
            "p_k",
            true,
            pmf_series(&lambdas)?,
        ),
    )?;

    let sigmas = distinct(rows.iter().map(|r| r.sigma_s2));
    let rhos = distinct(rows.iter().map(|r| r.rho));
    for &rho in &rhos {
        let mut by_sigma = Vec::new();
        for &s2 in &sigmas {
            let cell: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| {
                    r.sigma_s2.to_bits() == s2.to_bits() && r.rho.to_bits() == rho.to_bits()
                })
                .collect();
            if cell.is_empty() {
                continue;
            }
            let tag = format!("s2_{}_rho_{}", num(s2), num(rho));
            let bounded = curve(&cell, SenderMode::BoundedRational);
            if !bounded.is_empty() {
                by_sigma.push(Series::new(
                    format!("sigma_s2={}", num(s2)),
                    bounded.clone(),
                ));
                emit(
                    format!("receiver_{tag}.svg"),
                    LinePlot::new(
                        &format!(
                            "Receiver distortion, sigma_s2={}, rho={}",
                            num(s2),
                            num(rho)
                        ),
                        "lambda",
                        "D_D*",
                        true,
                        vec![Series::new("S_b", bounded)],
                    ),
                )?;
            }
            let series: Vec<Series> = SenderMode::ALL
                .iter()
                .map(|&m| Series::new(m.tag(), curve(&cell, m)))
                .filter(|s| !s.points.is_empty())
                .collect();
            if !series.is_empty() {
                emit(
                    format!("comparison_{tag}.svg"),
                    LinePlot::new(
                        &format!("Sender populations, sigma_s2={}, rho={}", num(s2), num(rho)),
                        "lambda",
                        "D_D*",
                        true,
                        series,
                    ),
                )?;
            }
        }
        if !by_sigma.is_empty() {
            emit(
                format!("receiver_rho_{}.svg", num(rho)),
                LinePlot::new(
                    &format!("Receiver distortion, rho={}", num(rho)),
                    "lambda",
                    "D_D*",
                    true,
                    by_sigma,
                ),
            )?;
        }
    }
    Ok(written)
}

/// Writes `results.csv`, the resolved configuration and the plots. Plot
/// failures are reported but do not fail the call.
pub fn emit_outputs(table: &SweepTable) -> Result<Vec<String>> {
    let dir = &table.config.output_dir;
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Io(format!("cannot create {}: {e}", dir.display())))?;
    write_results_csv(&dir.join("results.csv"), &table.rows)?;
    let cfg_path = dir.join("config.resolved.toml");
    std::fs::write(&cfg_path, table.config.to_toml_string())
        .map_err(|e| Error::Io(format!("cannot write {}: {e}", cfg_path.display())))?;
    let mut warnings = Vec::new();
    if let Err(e) = render_plots(&table.rows, Some(&table.config), &dir.join("plots")) {
        warnings.push(format!("plots not written: {e}"));
    }
    Ok(warnings)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_sig(0.1174731461649123, 12), "0.117473146165");
        assert_eq!(format_sig(700.0, 12), "700");
        assert_eq!(format_sig(0.001, 12), "0.001");
        assert_eq!(format_sig(1.0, 12), "1");
        assert_eq!(format_sig(-2.5, 12), "-2.5");
        assert_eq!(format_sig(1.5e-7, 12), "1.5e-07");
        assert_eq!(format_sig(123456789012345.0, 12), "1.23456789012e+14");
        assert_eq!(format_sig(9.999999999999995, 12), "10");
        assert_eq!(format_sig(0.0, 12), "0");
    }

    #[test]
    fn formatting_keeps_twelve_digits() {
        for v in [0.3141592653589793, 12.345678901234567, 4.2e-3, 6.02e23] {
            let back: f64 = format_sig(v, 12).parse().unwrap();
            assert!(((back - v) / v).abs() < 1e-11, "{v}");
        }
    }

    fn sample_rows() -> Vec<SweepRow> {
        vec![
            SweepRow {
                sigma_s2: 1.0,
                rho: 0.5,
                lambda: 0.001,
                mode: SenderMode::BoundedRational,
                num_cells: 4,
                receiver_distortion: Some(0.11787),
                sender_distortion: [Some(0.1), Some(0.9), Some(0.8)],
                status: "ok".into(),
            },
            SweepRow {
                sigma_s2: 1.0,
                rho: 0.5,
                lambda: 0.001,
                mode: SenderMode::FullInfo,
                num_cells: 4,
                receiver_distortion: None,
                sender_distortion: [None; 3],
                status: "error:design: a, b".into(),
            },
        ]
    }

    #[test]
    fn csv_roundtrip_and_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.csv");
        let rows = sample_rows();
        write_results_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("sigma_s2,rho,lambda,mode,M,D_D_star,D_E_0,D_E_1,D_E_2,status\n"));
        assert!(!text.contains('\r'));
        assert_eq!(
            text.lines().nth(1).unwrap(),
            "1,0.5,0.001,S_b,4,0.11787,0.1,0.9,0.8,ok"
        );
        assert_eq!(read_results_csv(&path).unwrap(), rows);
    }

    #[test]
    fn plots_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let files = render_plots(&sample_rows(), None, dir.path()).unwrap();
        let names: Vec<String> = files
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert!(names.contains(&"pmf.svg".to_string()));
        assert!(names.contains(&"receiver_s2_1_rho_0.5.svg".to_string()));
        assert!(names.contains(&"receiver_rho_0.5.svg".to_string()));
        let svg = std::fs::read_to_string(dir.path().join("pmf.svg")).unwrap();
        assert!(svg.starts_with("<svg"));
    }
}
