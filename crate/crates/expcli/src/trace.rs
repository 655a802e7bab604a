//! CSV trace files: `#` header lines, one column line, one row per step.

use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rls_core::signalgen::PRNG_NAME;

use crate::error::{ExpError, Result};
use crate::runner::{RunOutput, RunStatus};

pub const TOOL: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

const GUARD_PREFIX: &str = "divergence-guard";

#[derive(Debug, Clone, PartialEq)]
pub struct TraceHeader {
    pub scenario: String,
    pub config_json: String,
    pub prng: String,
    pub seed: u64,
    pub tool: String,
    pub theta_true: Option<Vec<f64>>,
    pub generated_unix: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub header: TraceHeader,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Set when the run was cut short; written as a trailing `#` line.
    pub guard: Option<String>,
}

pub fn columns(p: usize, n: usize, lyapunov: bool, psi: bool) -> Vec<String> {
    let mut c = vec!["k".to_string()];
    c.extend((1..=p).map(|i| format!("z_{i}")));
    c.extend((1..=n).map(|i| format!("theta_{i}")));
    c.extend((1..=n).map(|i| format!("sigmaP_{i}")));
    c.push("kappaP".into());
    if lyapunov {
        c.push("V".into());
    }
    if psi {
        c.extend((1..=n).map(|i| format!("psi_{i}")));
    }
    c
}

fn fmt(x: f64) -> String {
    // 17 significant digits round-trips every f64.
    format!("{x:.16e}")
}

impl TraceFile {
    pub fn from_run(run: &RunOutput) -> Self {
        let columns = columns(run.p, run.n, run.lyapunov, run.psi);
        let rows = run
            .records
            .iter()
            .map(|r| {
                let mut row = vec![r.k as f64];
                row.extend(r.z.iter());
                row.extend(r.theta.iter());
                row.extend(r.sigma_p.iter());
                row.push(r.kappa_p);
                if run.lyapunov {
                    row.push(r.v.unwrap_or(f64::NAN));
                }
                if run.psi {
                    match &r.psi_col_norms {
                        Some(p) => row.extend(p.iter()),
                        None => row.extend(std::iter::repeat_n(f64::NAN, run.n)),
                    }
                }
                row
            })
            .collect();
        let guard = match &run.status {
            RunStatus::Completed => None,
            RunStatus::Diverged { k, reason } => Some(format!("tripped at k={k}: {reason}")),
        };
        let generated_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            header: TraceHeader {
                scenario: run.scenario.name.clone(),
                config_json: serde_json::to_string(&run.scenario).expect("scenario serializes"),
                prng: PRNG_NAME.to_string(),
                seed: run.scenario.seed,
                tool: TOOL.to_string(),
                theta_true: run.theta_true.as_ref().map(|t| t.iter().copied().collect()),
                generated_unix,
            },
            columns,
            rows,
            guard,
        }
    }

    /// Column line, rows and the guard line; everything except the header.
    pub fn body_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(&mut buf);
            w.write_record(&self.columns)?;
            for row in &self.rows {
                let k = row.first().map(|&k| format!("{}", k as u64));
                w.write_record(k.into_iter().chain(row.iter().skip(1).map(|&x| fmt(x))))?;
            }
            w.flush().map_err(csv::Error::from)?;
        }
        if let Some(g) = &self.guard {
            writeln!(buf, "# {GUARD_PREFIX}: {g}").expect("write to Vec");
        }
        Ok(buf)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let h = &self.header;
        let mut out = Vec::new();
        let theta = h
            .theta_true
            .as_ref()
            .map(|t| serde_json::to_string(t).expect("vec serializes"));
        let lines = [
            format!("# tool: {}", h.tool),
            format!("# scenario: {}", h.scenario),
            format!("# prng: {}", h.prng),
            format!("# seed: {}", h.seed),
            format!("# theta_true: {}", theta.as_deref().unwrap_or("unknown")),
            format!("# config: {}", h.config_json),
            format!("# generated-unix: {}", h.generated_unix),
        ];
        for l in lines {
            out.extend_from_slice(l.as_bytes());
            out.push(b'\n');
        }
        out.extend(self.body_bytes()?);
        Ok(out)
    }

    /// Writes through a temporary file in the same directory, then renames.
    pub fn write_atomic(&self, path: &Path) -> Result<()> {
        let dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        std::fs::create_dir_all(dir).map_err(|e| ExpError::io(dir, e))?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| ExpError::io(dir, e))?;
        tmp.write_all(&self.to_bytes()?)
            .map_err(|e| ExpError::io(tmp.path(), e))?;
        tmp.persist(path).map_err(|e| ExpError::io(path, e.error))?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ExpError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let bad = |m: String| ExpError::Parse {
            path: origin.to_string(),
            message: m,
        };
        let mut header = TraceHeader {
            scenario: String::new(),
            config_json: String::new(),
            prng: String::new(),
            seed: 0,
            tool: String::new(),
            theta_true: None,
            generated_unix: 0,
        };
        let mut guard = None;
        for line in text.lines().filter_map(|l| l.strip_prefix("# ")) {
            let Some((key, value)) = line.split_once(": ") else {
                continue;
            };
            match key {
                "tool" => header.tool = value.into(),
                "scenario" => header.scenario = value.into(),
                "prng" => header.prng = value.into(),
                "seed" => header.seed = value.parse().map_err(|_| bad(format!("bad seed '{value}'")))?,
                "theta_true" if value != "unknown" => {
                    header.theta_true =
                        Some(serde_json::from_str(value).map_err(|e| bad(format!("bad theta_true: {e}")))?)
                }
                "config" => header.config_json = value.into(),
                "generated-unix" => header.generated_unix = value.parse().unwrap_or(0),
                GUARD_PREFIX => guard = Some(value.to_string()),
                _ => {}
            }
        }
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let columns: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|_| bad(format!("bad number '{s}'"))))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Ok(Self {
            header,
            columns,
            rows,
            guard,
        })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }

    pub fn columns_with_prefix(&self, prefix: &str) -> Vec<Vec<f64>> {
        let idx: Vec<usize> = self
            .columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.strip_prefix(prefix).is_some_and(|rest| rest.parse::<usize>().is_ok()))
            .map(|(i, _)| i)
            .collect();
        idx.iter().map(|&i| self.rows.iter().map(|r| r[i]).collect()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::runner::run;

    #[test]
    fn column_schema() {
        assert_eq!(
            columns(1, 2, false, false),
            ["k", "z_1", "theta_1", "theta_2", "sigmaP_1", "sigmaP_2", "kappaP"]
        );
        let c = columns(2, 1, true, true);
        assert_eq!(c, ["k", "z_1", "z_2", "theta_1", "sigmaP_1", "kappaP", "V", "psi_1"]);
    }

    #[test]
    fn round_trip_and_determinism() {
        let sc = catalog::builtin("fir3-rate")
            .unwrap()
            .with_overrides(Some(50), Some(9))
            .unwrap();
        let a = TraceFile::from_run(&run(&sc).unwrap());
        let b = TraceFile::from_run(&run(&sc).unwrap());
        assert_eq!(a.body_bytes().unwrap(), b.body_bytes().unwrap());
        let bytes = a.to_bytes().unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert!(!text.contains('\r'));
        let back = TraceFile::parse(&text, "mem").unwrap();
        assert_eq!(back.rows, a.rows);
        assert_eq!(back.columns, a.columns);
        assert_eq!(back.header.seed, 9);
        assert_eq!(back.header.theta_true, Some(vec![1.0, 0.8, 0.5]));
        assert_eq!(a.rows.len(), 50);
    }

    #[test]
    fn numbers_carry_seventeen_digits() {
        assert_eq!(fmt(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt(0.1).parse::<f64>().unwrap(), 0.1);
    }
}
