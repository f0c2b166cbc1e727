//! On-disk formats: density-matrix JSON, trajectory JSON lines, and CSV
//! files that carry the generating config on their first line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use qdtn_core::{validate_density, ComplexMatrix, DensityMatrix, StateTrajectory, C64};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityJson {
    pub n_qubits: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl From<&DensityMatrix> for DensityJson {
    fn from(rho: &DensityMatrix) -> Self {
        let m = rho.matrix();
        let d = m.dim();
        Self {
            n_qubits: rho.n_qubits(),
            re: (0..d)
                .map(|i| m.row(i).iter().map(|z| z.re).collect())
                .collect(),
            im: (0..d)
                .map(|i| m.row(i).iter().map(|z| z.im).collect())
                .collect(),
        }
    }
}

impl DensityJson {
    pub fn to_density(&self) -> anyhow::Result<DensityMatrix> {
        let d = 1usize << self.n_qubits;
        anyhow::ensure!(
            self.re.len() == d && self.im.len() == d,
            "expected {d} rows for {} qubits",
            self.n_qubits
        );
        let rows: Vec<Vec<C64>> = self
            .re
            .iter()
            .zip(&self.im)
            .map(|(r, i)| r.iter().zip(i).map(|(&a, &b)| C64::new(a, b)).collect())
            .collect();
        let m = ComplexMatrix::from_rows(&rows).context("ragged density matrix rows")?;
        Ok(validate_density(m)?)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut w =
        BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(w.flush()?)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(f))
        .with_context(|| format!("parsing {}", path.display()))
}

pub fn write_density(path: &Path, rho: &DensityMatrix) -> anyhow::Result<()> {
    write_json(path, &DensityJson::from(rho))
}

pub fn read_density(path: &Path) -> anyhow::Result<DensityMatrix> {
    read_json::<DensityJson>(path)?.to_density()
}

/// One JSON document per line.
pub fn write_jsonl<T: Serialize>(
    path: &Path,
    items: impl IntoIterator<Item = T>,
) -> anyhow::Result<()> {
    let mut w =
        BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n")?;
    }
    Ok(w.flush()?)
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<Vec<T>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    BufReader::new(f)
        .lines()
        .filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()))
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub rho: DensityJson,
}

pub fn write_trajectory(path: &Path, traj: &StateTrajectory) -> anyhow::Result<()> {
    write_jsonl(
        path,
        traj.times
            .iter()
            .zip(&traj.states)
            .map(|(&t, rho)| TrajectoryPoint { t, rho: rho.into() }),
    )
}

/// CSV writer whose first line is `# config <compact JSON>`.
pub struct ConfigCsv {
    inner: csv::Writer<BufWriter<File>>,
}

impl ConfigCsv {
    pub fn create(path: &Path, config_json: &str, header: &[&str]) -> anyhow::Result<Self> {
        let mut f = BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        );
        writeln!(f, "# config {config_json}")?;
        let mut inner = csv::Writer::from_writer(f);
        inner.write_record(header)?;
        Ok(Self { inner })
    }

    pub fn row<I, S>(&mut self, fields: I) -> anyhow::Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        Ok(self.inner.write_record(fields)?)
    }

    pub fn finish(mut self) -> anyhow::Result<()> {
        Ok(self.inner.flush()?)
    }
}

/// Shortest round-trip representation, so identical values give identical bytes.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}
