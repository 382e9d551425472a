use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::config::{noise_for, ExperimentConfig};
use super::study::{PowerRow, PowerTable};
use crate::design::{sample_with_rng, DesignDistribution, Sample};
use crate::envelopes::{quantile_envelope, separation_rate_bound, v_envelope, EnvelopeConstants};
use crate::rng::{substream, Domain};
use crate::test_engine::{LevelExcess, TestOutcome};
use crate::{Error, Result};

/// Grid size for truth curves.
pub const TRUTH_GRID: usize = 1024;

/// Provenance line written above every CSV header.
pub fn provenance_line(seed: u64, config_hash: &str) -> String {
    format!("# seed={seed}, config_hash={config_hash}")
}

/// Write `rows` under `header`, preceded by the provenance line. Overwrites.
pub fn emit_csv<T: Serialize>(
    rows: &[T],
    header: &[&str],
    path: &Path,
    seed: u64,
    config_hash: &str,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{}", provenance_line(seed, config_hash)).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(header).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parsed provenance and rows of a file written by [`emit_csv`].
#[derive(Debug, Clone, PartialEq)]
pub struct CsvDocument<T> {
    pub seed: u64,
    pub config_hash: String,
    pub rows: Vec<T>,
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<CsvDocument<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(|e| Error::io(path, e))?;
    let (seed, config_hash) = parse_provenance(first.trim_end())
        .ok_or_else(|| Error::Config(format!("{}: missing provenance line", path.display())))?;
    let mut r = csv::Reader::from_reader(reader);
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| Error::csv(path, e))?;
    Ok(CsvDocument {
        seed,
        config_hash,
        rows,
    })
}

fn parse_provenance(line: &str) -> Option<(u64, String)> {
    let rest = line.strip_prefix("# seed=")?;
    let (seed, hash) = rest.split_once(", config_hash=")?;
    Some((seed.parse().ok()?, hash.to_string()))
}

pub const POWER_HEADER: [&str; 6] = ["design_tag", "null_tag", "estimate", "mc_stderr", "B_eval", "seed"];

pub fn emit_power_table(table: &PowerTable, path: &Path, seed: u64, config_hash: &str) -> Result<()> {
    emit_csv(&table.rows, &POWER_HEADER, path, seed, config_hash)
}

pub fn read_power_table(path: &Path) -> Result<CsvDocument<PowerRow>> {
    read_csv(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRow {
    pub alpha: f64,
    pub u_alpha: f64,
    pub r_alpha: f64,
    pub reject: bool,
    pub argmax_level: u32,
}

impl From<&TestOutcome> for OutcomeRow {
    fn from(o: &TestOutcome) -> Self {
        OutcomeRow {
            alpha: o.alpha,
            u_alpha: o.u_alpha,
            r_alpha: o.r_alpha,
            reject: o.reject,
            argmax_level: o.argmax_level,
        }
    }
}

pub const OUTCOME_HEADER: [&str; 5] = ["alpha", "u_alpha", "r_alpha", "reject", "argmax_level"];
pub const LEVEL_HEADER: [&str; 4] = ["J", "r_hat", "threshold", "excess"];

/// One summary row per outcome, plus optionally the long per-level table of
/// the first outcome.
pub fn emit_outcomes(
    outcomes: &[TestOutcome],
    summary: &Path,
    per_level: Option<&Path>,
    seed: u64,
    config_hash: &str,
) -> Result<()> {
    let rows: Vec<OutcomeRow> = outcomes.iter().map(OutcomeRow::from).collect();
    emit_csv(&rows, &OUTCOME_HEADER, summary, seed, config_hash)?;
    if let Some(path) = per_level {
        let levels: &[LevelExcess] = outcomes.first().map(|o| o.per_level.as_slice()).unwrap_or(&[]);
        emit_csv(levels, &LEVEL_HEADER, path, seed, config_hash)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XY {
    pub x: f64,
    pub y: f64,
}

/// Read an `x,y` CSV (header required, `#` lines ignored) into a sample.
pub fn read_sample_csv(path: &Path) -> Result<Sample> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let rows = r
        .deserialize::<XY>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::csv(path, e))?;
    Sample::new(rows.iter().map(|p| p.x).collect(), rows.iter().map(|p| p.y).collect())
}

pub const PLOT_DESIGNS: [&str; 3] = ["type1", "type2", "type3"];

/// One noisy realization of the truth per built-in design
/// (`design_{tag}.csv`) and the truth on `x = i/1024` (`truth.csv`).
pub fn emit_plot_data(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let truth = cfg.truth()?;
    let hash = cfg.config_hash();
    let mut written = Vec::new();
    for (i, tag) in PLOT_DESIGNS.iter().enumerate() {
        let design = DesignDistribution::from_tag(tag)?;
        let noise = noise_for(&truth, &design, cfg.snr, cfg.bound_m)?;
        let mut rng = substream(cfg.seed, Domain::Plot, i as u64);
        let (sample, _) = sample_with_rng(&design, &truth, &noise, cfg.n, &mut rng)?;
        let rows: Vec<XY> = sample.x().iter().zip(sample.y()).map(|(&x, &y)| XY { x, y }).collect();
        let path = dir.join(format!("design_{tag}.csv"));
        emit_csv(&rows, &["x", "y"], &path, cfg.seed, &hash)?;
        written.push(path);
    }
    let rows: Vec<XY> = (0..TRUTH_GRID)
        .map(|i| {
            let x = i as f64 / TRUTH_GRID as f64;
            XY { x, y: truth.eval(x) }
        })
        .collect();
    let path = dir.join("truth.csv");
    emit_csv(&rows, &["x", "y"], &path, cfg.seed, &hash)?;
    written.push(path);
    Ok(written)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeRow {
    pub n: u64,
    #[serde(rename = "J")]
    pub level: u32,
    pub v_envelope: f64,
    pub quantile_envelope: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: u64,
    pub rho_bound: f64,
}

/// Smoothness and radius used for the rate curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSettings {
    pub s: f64,
    pub r: f64,
}

impl Default for RateSettings {
    fn default() -> Self {
        RateSettings { s: 0.5, r: 1.0 }
    }
}

/// Envelope rows over the config's level set and rate rows for
/// `n = 16, 32, ...` up to the config's `n` (always included).
pub fn envelope_rows(
    cfg: &ExperimentConfig,
    consts: &EnvelopeConstants,
    rate: RateSettings,
) -> Result<(Vec<EnvelopeRow>, Vec<RateRow>)> {
    consts.validate()?;
    let n = cfg.n as u64;
    let env = cfg
        .levels()?
        .into_iter()
        .map(|level| {
            Ok(EnvelopeRow {
                n,
                level,
                v_envelope: v_envelope(n, level, consts)?,
                quantile_envelope: quantile_envelope(n, level, consts)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ns: Vec<u64> = std::iter::successors(Some(16u64), |m| m.checked_mul(2))
        .take_while(|&m| m < n)
        .collect();
    ns.push(n);
    let rates = ns
        .into_iter()
        .map(|m| {
            Ok(RateRow {
                n: m,
                rho_bound: separation_rate_bound(m, rate.r, rate.s, consts.c_rate)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((env, rates))
}

/// Writes `envelopes.csv` and `rates.csv` under `dir`.
pub fn envelope_report(
    cfg: &ExperimentConfig,
    consts: &EnvelopeConstants,
    rate: RateSettings,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (env, rates) = envelope_rows(cfg, consts, rate)?;
    let hash = cfg.config_hash();
    let env_path = dir.join("envelopes.csv");
    emit_csv(&env, &["n", "J", "v_envelope", "quantile_envelope"], &env_path, cfg.seed, &hash)?;
    let rate_path = dir.join("rates.csv");
    emit_csv(&rates, &["n", "rho_bound"], &rate_path, cfg.seed, &hash)?;
    Ok(vec![env_path, rate_path])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::heavy_sine;
    use crate::harness::config::LevelMode;

    fn cfg() -> ExperimentConfig {
        ExperimentConfig {
            n: 128,
            level_mode: LevelMode::PaperSim(10),
            ..ExperimentConfig::table_one("type1", 11)
        }
    }

    #[test]
    fn power_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let table = PowerTable {
            rows: vec![
                PowerRow {
                    design_tag: "type1".into(),
                    null_tag: "level".into(),
                    estimate: 0.0485,
                    mc_stderr: (0.0485f64 * 0.9515 / 2000.0).sqrt(),
                    b_eval: 2000,
                    seed: u64::MAX,
                },
                PowerRow {
                    design_tag: "type1".into(),
                    null_tag: "sine:kappa=2".into(),
                    estimate: 1.0 / 3.0,
                    mc_stderr: 0.1,
                    b_eval: 2000,
                    seed: u64::MAX,
                },
            ],
        };
        emit_power_table(&table, &path, 7, "abc").unwrap();
        let doc = read_power_table(&path).unwrap();
        assert_eq!(doc.rows, table.rows);
        assert_eq!((doc.seed, doc.config_hash.as_str()), (7, "abc"));
        let first = std::fs::read(&path).unwrap();
        emit_power_table(&table, &path, 7, "abc").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);

        emit_power_table(&PowerTable::default(), &path, 7, "abc").unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "# seed=7, config_hash=abc\ndesign_tag,null_tag,estimate,mc_stderr,B_eval,seed\n");
        assert!(read_power_table(&path).unwrap().rows.is_empty());
    }

    #[test]
    fn io_errors_carry_the_path() {
        let err = emit_power_table(&PowerTable::default(), Path::new("/nonexistent/dir/p.csv"), 1, "h").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(err.to_string().contains("/nonexistent/dir/p.csv"));
    }

    #[test]
    fn plot_data() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_plot_data(&cfg(), dir.path()).unwrap();
        assert_eq!(files.len(), 4);
        let truth: CsvDocument<XY> = read_csv(&dir.path().join("truth.csv")).unwrap();
        assert_eq!(truth.rows.len(), 1024);
        assert_eq!(truth.rows[512].x, 0.5);
        assert!((truth.rows[512].y + 2.0).abs() < 1e-12);
        assert_eq!(truth.rows[512].y, heavy_sine(0.5).unwrap());
        let d1: CsvDocument<XY> = read_csv(&dir.path().join("design_type1.csv")).unwrap();
        assert_eq!(d1.rows.len(), 128);
        let s = read_sample_csv(&dir.path().join("design_type1.csv")).unwrap();
        assert_eq!(s.x()[0], d1.rows[0].x);
        assert_eq!(s.n(), 128);
        let again = tempfile::tempdir().unwrap();
        emit_plot_data(&cfg(), again.path()).unwrap();
        for f in ["design_type1.csv", "design_type2.csv", "design_type3.csv", "truth.csv"] {
            assert_eq!(
                std::fs::read(dir.path().join(f)).unwrap(),
                std::fs::read(again.path().join(f)).unwrap()
            );
        }
    }

    #[test]
    fn envelope_report_matches_direct_calls() {
        let dir = tempfile::tempdir().unwrap();
        let c = EnvelopeConstants::default();
        envelope_report(&cfg(), &c, RateSettings::default(), dir.path()).unwrap();
        let env: CsvDocument<EnvelopeRow> = read_csv(&dir.path().join("envelopes.csv")).unwrap();
        let levels: Vec<u32> = env.rows.iter().map(|r| r.level).collect();
        assert_eq!(levels, cfg().levels().unwrap());
        for r in &env.rows {
            assert_eq!(r.v_envelope, v_envelope(128, r.level, &c).unwrap());
            assert_eq!(r.quantile_envelope, quantile_envelope(128, r.level, &c).unwrap());
        }
        assert!(env.rows.windows(2).all(|w| w[1].quantile_envelope > w[0].quantile_envelope));
        let rates: CsvDocument<RateRow> = read_csv(&dir.path().join("rates.csv")).unwrap();
        let ns: Vec<u64> = rates.rows.iter().map(|r| r.n).collect();
        assert_eq!(ns, vec![16, 32, 64, 128]);
    }
}
